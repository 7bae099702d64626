"""Trusted-dealer generation of correlated randomness (the offline phase).

The dealer produces Beaver triples, truncation pairs and bit-decomposed
randoms, splits them under the requested sharing scheme, and either hands
back in-memory per-party pools or writes per-party material files.  The
online phase only ever draws from pools, strictly in order; exhaustion
raises PreprocessingUnderflow naming the material kind.

Material file format (per party): magic ``MPM1``, u8 scheme id, u8 material
kind, u16 parameter (truncation shift, else 0), u32 config hash, u64 record
count, 12 reserved zero bytes (32-byte header total), then fixed-size
little-endian u64 records.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PreprocessingUnderflow, SchemaError
from .ring import RING_DTYPE, FixedPointConfig, random_ring, shift_truncate
from .sharing import AdditiveShare, ReplicatedShare, SecretRng
from .transport import SCHEME_IDS, SCHEME_PARTIES

MAGIC = b"MPM1"
HEADER = struct.Struct("<4sBBHIQ12x")  # 32 bytes

KIND_TRIPLE = 1
KIND_TRUNC_DET = 2
KIND_TRUNC_PROB = 3
KIND_BITS = 4
KIND_SEEDS = 5
KIND_NAMES = {KIND_TRIPLE: "triple", KIND_TRUNC_DET: "trunc_det",
              KIND_TRUNC_PROB: "trunc_prob", KIND_BITS: "bits", KIND_SEEDS: "seeds"}

MODE_DET = "deterministic"
MODE_PROB = "probabilistic"

# Purposes for pairwise SecretRng streams.
PURPOSE_ZERO_SHARE = 0
PURPOSE_INPUT = 1


# ---------------------------------------------------------------------------
# value-level generation (vectorized component arrays)
# ---------------------------------------------------------------------------

def _share_components(values: np.ndarray, scheme: str, rng: np.random.Generator):
    """Additive components of ``values`` under the scheme (2 or 3 of them)."""
    n_comp = SCHEME_PARTIES[scheme]
    comps = [random_ring(rng, values.shape) for _ in range(n_comp - 1)]
    last = np.asarray(values, dtype=RING_DTYPE)
    for c in comps:
        last = last - c
    comps.append(last)
    return comps


def _triple_components(n: int, scheme: str, rng: np.random.Generator):
    a = random_ring(rng, (n,))
    b = random_ring(rng, (n,))
    c = a * b
    return {"a": _share_components(a, scheme, rng),
            "b": _share_components(b, scheme, rng),
            "c": _share_components(c, scheme, rng)}


def _trunc_components(n: int, shift: int, mode: str, scheme: str, rng: np.random.Generator):
    if mode == MODE_DET:
        # 2^shift-aligned mask: opening then public shift is carry-free.
        hi = rng.integers(0, 1 << (63 - shift), size=(n,), dtype=RING_DTYPE)
        r = hi << np.uint64(shift)
        r_shifted = hi
    elif mode == MODE_PROB:
        r = rng.integers(0, 1 << 63, size=(n,), dtype=RING_DTYPE)
        r_shifted = r >> np.uint64(shift)
    else:
        raise ConfigError(f"unknown truncation mode {mode!r}")
    return {"r": _share_components(r, scheme, rng),
            "r_shifted": _share_components(r_shifted, scheme, rng)}


def _bits_components(n: int, scheme: str, rng: np.random.Generator):
    r = random_ring(rng, (n,))
    bits = ((r[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1))
    return {"r": _share_components(r, scheme, rng),
            "bits": _share_components(bits, scheme, rng)}


# ---------------------------------------------------------------------------
# share-object API (small-count inspection and unit tests)
# ---------------------------------------------------------------------------

@dataclass
class Triple:
    a: list
    b: list
    c: list


@dataclass
class TruncPair:
    r: list
    r_shifted: list
    shift: int
    mode: str


@dataclass
class BitDecomposedRandom:
    r: list
    bits: list  # one share list per bit position, LSB first


def _wrap_shares(comps, scheme: str):
    if scheme == "additive2":
        return [AdditiveShare(i, comps[i]) for i in range(2)]
    return [ReplicatedShare(i, (comps[i], comps[(i + 1) % 3])) for i in range(3)]


def gen_triples(n: int, scheme: str, rng: np.random.Generator) -> list:
    """n multiplication triples with c = a*b in the ring."""
    if n < 0:
        raise ConfigError("triple count must be >= 0")
    if n == 0:
        return []
    comps = _triple_components(n, scheme, rng)
    return [
        Triple(
            a=_wrap_shares([c[i] for c in comps["a"]], scheme),
            b=_wrap_shares([c[i] for c in comps["b"]], scheme),
            c=_wrap_shares([c[i] for c in comps["c"]], scheme),
        )
        for i in range(n)
    ]


def gen_trunc_pairs(n: int, shift: int, scheme: str, rng: np.random.Generator,
                    mode: str = MODE_PROB) -> list:
    comps = _trunc_components(n, shift, mode, scheme, rng)
    return [
        TruncPair(
            r=_wrap_shares([c[i] for c in comps["r"]], scheme),
            r_shifted=_wrap_shares([c[i] for c in comps["r_shifted"]], scheme),
            shift=shift, mode=mode,
        )
        for i in range(n)
    ]


def gen_bit_randoms(n: int, scheme: str, rng: np.random.Generator) -> list:
    comps = _bits_components(n, scheme, rng)
    out = []
    for i in range(n):
        bit_shares = [
            _wrap_shares([c[i, j] for c in comps["bits"]], scheme) for j in range(64)
        ]
        out.append(BitDecomposedRandom(
            r=_wrap_shares([c[i] for c in comps["r"]], scheme), bits=bit_shares))
    return out


# ---------------------------------------------------------------------------
# budgets
# ---------------------------------------------------------------------------

@dataclass
class RandomnessBudget:
    """Counts of each material kind a computation will consume."""

    triples: int = 0
    trunc_pairs: dict = field(default_factory=dict)  # (mode, shift) -> count
    bit_randoms: int = 0

    def add_trunc(self, mode: str, shift: int, count: int = 1):
        key = (mode, shift)
        self.trunc_pairs[key] = self.trunc_pairs.get(key, 0) + count

    def as_dict(self) -> dict:
        return {
            "triples": self.triples,
            "bit_randoms": self.bit_randoms,
            "trunc_pairs": {f"{mode}:{shift}": c
                            for (mode, shift), c in sorted(self.trunc_pairs.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomnessBudget":
        b = cls(triples=int(d.get("triples", 0)), bit_randoms=int(d.get("bit_randoms", 0)))
        for key, c in d.get("trunc_pairs", {}).items():
            mode, _, shift = key.partition(":")
            b.trunc_pairs[(mode, int(shift))] = int(c)
        return b


# ---------------------------------------------------------------------------
# party-side pools
# ---------------------------------------------------------------------------

class Pool:
    """Consume-once cursor over a party's slice of one material stream.

    ``columns`` maps a field name to one array (additive) or a tuple of two
    arrays (replicated components) of leading dimension ``count``.
    """

    def __init__(self, kind: str, columns: dict, count: int):
        self.kind = kind
        self.columns = columns
        self.count = count
        self.cursor = 0
        self.consumed = 0

    @property
    def remaining(self) -> int:
        return self.count - self.cursor

    def draw(self, n: int) -> dict:
        if n > self.remaining:
            raise PreprocessingUnderflow(self.kind, n, self.remaining)
        lo, hi = self.cursor, self.cursor + n
        self.cursor = hi
        self.consumed += n
        out = {}
        for name, arr in self.columns.items():
            if isinstance(arr, tuple):
                out[name] = tuple(a[lo:hi] for a in arr)
            else:
                out[name] = arr[lo:hi]
        return out


class PartyPools:
    """All correlated randomness one party holds for a run."""

    def __init__(self, scheme: str, party_id: int, cfg: FixedPointConfig):
        self.scheme = scheme
        self.party_id = party_id
        self.cfg = cfg
        self.triples: Pool | None = None
        self.trunc: dict = {}  # (mode, shift) -> Pool
        self.bits: Pool | None = None
        self.seeds: list = []  # raw u64 seed values (next, prev) for rss; (pair,) for 2pc
        self.source_files: list = []

    def _pool(self, pool, kind, n):
        if pool is None:
            raise PreprocessingUnderflow(kind, n, 0)
        return pool

    def draw_triples(self, n: int) -> dict:
        return self._pool(self.triples, "triple", n).draw(n)

    def draw_trunc(self, mode: str, shift: int, n: int) -> dict:
        key = (mode, shift)
        kind = f"trunc_{'det' if mode == MODE_DET else 'prob'}(shift={shift})"
        if key not in self.trunc:
            raise PreprocessingUnderflow(kind, n, 0)
        pool = self.trunc[key]
        pool.kind = kind
        return pool.draw(n)

    def draw_bits(self, n: int) -> dict:
        return self._pool(self.bits, "bits", n).draw(n)

    def consumption(self) -> RandomnessBudget:
        b = RandomnessBudget()
        if self.triples:
            b.triples = self.triples.consumed
        if self.bits:
            b.bit_randoms = self.bits.consumed
        for (mode, shift), pool in self.trunc.items():
            if pool.consumed:
                b.add_trunc(mode, shift, pool.consumed)
        return b

    def preflight(self, budget: RandomnessBudget):
        """Fail fast (before any protocol round) if any pool is short."""
        if budget.triples and (self.triples is None or self.triples.remaining < budget.triples):
            have = self.triples.remaining if self.triples else 0
            raise PreprocessingUnderflow("triple", budget.triples, have)
        if budget.bit_randoms and (self.bits is None or self.bits.remaining < budget.bit_randoms):
            have = self.bits.remaining if self.bits else 0
            raise PreprocessingUnderflow("bits", budget.bit_randoms, have)
        for (mode, shift), need in budget.trunc_pairs.items():
            pool = self.trunc.get((mode, shift))
            if pool is None or pool.remaining < need:
                have = pool.remaining if pool else 0
                raise PreprocessingUnderflow(f"trunc_{mode}(shift={shift})", need, have)

    def zero_share_rngs(self):
        """(next, prev) SecretRng pair for replicated re-sharing."""
        return (SecretRng(int(self.seeds[0]), PURPOSE_ZERO_SHARE),
                SecretRng(int(self.seeds[1]), PURPOSE_ZERO_SHARE))

    def input_rng(self, peer: int):
        """Pairwise input-sharing stream shared with ``peer``."""
        if self.scheme == "additive2":
            return SecretRng(int(self.seeds[0]), PURPOSE_INPUT)
        # rss3: seeds[0] is shared with the successor, seeds[1] with the predecessor
        nxt = (self.party_id + 1) % 3
        prv = (self.party_id - 1) % 3
        if peer == nxt:
            return SecretRng(int(self.seeds[0]), PURPOSE_INPUT)
        if peer == prv:
            return SecretRng(int(self.seeds[1]), PURPOSE_INPUT)
        raise ConfigError(f"party {self.party_id} shares no seed with {peer}")


def _party_view(comps, scheme: str, party_id: int):
    """Party's view of shared component arrays: array (additive) or 2-tuple (rss)."""
    if scheme == "additive2":
        return comps[party_id]
    return (comps[party_id], comps[(party_id + 1) % 3])


def _pairwise_seeds(scheme: str, rng: np.random.Generator):
    n_seeds = 1 if scheme == "additive2" else 3
    return random_ring(rng, (n_seeds,))


def _seed_view(seeds, scheme: str, party_id: int):
    if scheme == "additive2":
        return [int(seeds[0])]
    return [int(seeds[party_id]), int(seeds[(party_id - 1) % 3])]


def deal_in_memory(budget: RandomnessBudget, scheme: str, cfg: FixedPointConfig,
                   seed: int) -> list:
    """Generate all budgeted material and return per-party pools.

    Replicated pools reference shared component arrays as views, so memory
    is one copy of the dealt material regardless of party count.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_parties = SCHEME_PARTIES[scheme]
    pools = [PartyPools(scheme, i, cfg) for i in range(n_parties)]

    seeds = _pairwise_seeds(scheme, rng)
    for i, p in enumerate(pools):
        p.seeds = _seed_view(seeds, scheme, i)

    if budget.triples:
        comps = _triple_components(budget.triples, scheme, rng)
        for i, p in enumerate(pools):
            p.triples = Pool("triple", {k: _party_view(v, scheme, i) for k, v in comps.items()},
                             budget.triples)
    for (mode, shift), count in sorted(budget.trunc_pairs.items()):
        comps = _trunc_components(count, shift, mode, scheme, rng)
        for i, p in enumerate(pools):
            p.trunc[(mode, shift)] = Pool(
                f"trunc_{mode}", {k: _party_view(v, scheme, i) for k, v in comps.items()}, count)
    if budget.bit_randoms:
        comps = _bits_components(budget.bit_randoms, scheme, rng)
        for i, p in enumerate(pools):
            p.bits = Pool("bits", {k: _party_view(v, scheme, i) for k, v in comps.items()},
                          budget.bit_randoms)
    return pools


# ---------------------------------------------------------------------------
# material files
# ---------------------------------------------------------------------------

def _file_name(party_id: int, kind: int, shift: int = 0) -> str:
    base = f"party{party_id}_{KIND_NAMES[kind]}"
    if kind in (KIND_TRUNC_DET, KIND_TRUNC_PROB):
        base += f"_t{shift}"
    return base + ".mpm"


def _record_columns(kind: int, scheme: str):
    """Ordered (name, component_count) column layout of one record."""
    reps = 1 if scheme == "additive2" else 2
    if kind == KIND_TRIPLE:
        return [("a", reps), ("b", reps), ("c", reps)]
    if kind in (KIND_TRUNC_DET, KIND_TRUNC_PROB):
        return [("r", reps), ("r_shifted", reps)]
    if kind == KIND_BITS:
        return [("r", reps), ("bits", 64 * reps)]
    raise ConfigError(f"no record layout for kind {kind}")


def _write_stream(path: str, scheme: str, kind: int, shift: int, cfg_hash: int,
                  count: int, chunks):
    """Write header + record chunks; ``chunks`` yields 2-D uint64 arrays."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, SCHEME_IDS[scheme], kind, shift, cfg_hash, count))
        for chunk in chunks:
            fh.write(np.ascontiguousarray(chunk, dtype="<u8").tobytes())


def _party_record_matrix(comps: dict, columns, scheme: str, party_id: int) -> np.ndarray:
    """Interleave a party's component views into the flat record layout."""
    parts = []
    for name, _width in columns:
        view = _party_view(comps[name], scheme, party_id)
        arrs = view if isinstance(view, tuple) else (view,)
        for a in arrs:
            parts.append(a.reshape(a.shape[0], -1))
    return np.concatenate(parts, axis=1)


def write_material(out_dir: str, budget: RandomnessBudget, scheme: str,
                   cfg: FixedPointConfig, seed: int, chunk_size: int = 1 << 16) -> dict:
    """Dealer entry point: write per-party material files plus a manifest.

    Deterministic for a given seed.  Returns the manifest dict.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_parties = SCHEME_PARTIES[scheme]
    cfg_hash = cfg.config_hash()
    files = {i: [] for i in range(n_parties)}

    seeds = _pairwise_seeds(scheme, rng)
    for i in range(n_parties):
        name = _file_name(i, KIND_SEEDS)
        view = np.array(_seed_view(seeds, scheme, i), dtype=RING_DTYPE)
        _write_stream(os.path.join(out_dir, name), scheme, KIND_SEEDS, 0, cfg_hash,
                      view.size, [view.reshape(1, -1)])
        files[i].append(name)

    def write_kind(kind, shift, count, gen):
        handles = []
        for i in range(n_parties):
            name = _file_name(i, kind, shift)
            path = os.path.join(out_dir, name)
            fh = open(path, "wb")
            fh.write(HEADER.pack(MAGIC, SCHEME_IDS[scheme], kind, shift, cfg_hash, count))
            handles.append(fh)
            files[i].append(name)
        columns = _record_columns(kind, scheme)
        done = 0
        while done < count:
            n = min(chunk_size, count - done)
            comps = gen(n)
            for i, fh in enumerate(handles):
                mat = _party_record_matrix(comps, columns, scheme, i)
                fh.write(np.ascontiguousarray(mat, dtype="<u8").tobytes())
            done += n
        for fh in handles:
            fh.close()

    if budget.triples:
        write_kind(KIND_TRIPLE, 0, budget.triples,
                   lambda n: _triple_components(n, scheme, rng))
    for (mode, shift), count in sorted(budget.trunc_pairs.items()):
        kind = KIND_TRUNC_DET if mode == MODE_DET else KIND_TRUNC_PROB
        write_kind(kind, shift, count,
                   lambda n, _m=mode, _s=shift: _trunc_components(n, _s, _m, scheme, rng))
    if budget.bit_randoms:
        write_kind(KIND_BITS, 0, budget.bit_randoms,
                   lambda n: _bits_components(n, scheme, rng))

    manifest = {
        "format": "MPM1",
        "scheme": scheme,
        "config": {"k": cfg.k, "f": cfg.f, "m": cfg.m, "s": cfg.s},
        "config_hash": cfg_hash,
        "seed": seed,
        "budget": budget.as_dict(),
        "files": {str(i): fs for i, fs in files.items()},
    }
    manifest["file_sha256"] = {
        name: hashlib.sha256(open(os.path.join(out_dir, name), "rb").read()).hexdigest()
        for fs in files.values() for name in fs
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


class InstrumentedReads:
    """Counts material-file reads so the offline/online split can be asserted."""

    count = 0

    @classmethod
    def note(cls):
        cls.count += 1


def _read_file(path: str, scheme: str, cfg: FixedPointConfig):
    InstrumentedReads.note()
    with open(path, "rb") as fh:
        header = fh.read(HEADER.size)
        if len(header) != HEADER.size:
            raise SchemaError(f"{path}: truncated header")
        magic, scheme_id, kind, shift, cfg_hash, count = HEADER.unpack(header)
        if magic != MAGIC:
            raise SchemaError(f"{path}: bad magic {magic!r}")
        if scheme_id != SCHEME_IDS[scheme]:
            raise SchemaError(f"{path}: scheme mismatch")
        if cfg_hash != cfg.config_hash():
            raise SchemaError(f"{path}: config hash mismatch")
        body = np.frombuffer(fh.read(), dtype="<u8").astype(RING_DTYPE)
    return kind, shift, count, body


def load_material(material_dir: str, party_id: int, scheme: str,
                  cfg: FixedPointConfig) -> PartyPools:
    """Load this party's pools from dealer files (everything read up front)."""
    pools = PartyPools(scheme, party_id, cfg)
    reps = 1 if scheme == "additive2" else 2
    prefix = f"party{party_id}_"
    names = sorted(n for n in os.listdir(material_dir)
                   if n.startswith(prefix) and n.endswith(".mpm"))
    if not names:
        raise SchemaError(f"no material files for party {party_id} in {material_dir}")
    for name in names:
        path = os.path.join(material_dir, name)
        kind, shift, count, body = _read_file(path, scheme, cfg)
        pools.source_files.append(name)
        if kind == KIND_SEEDS:
            pools.seeds = [int(v) for v in body]
            continue
        columns = _record_columns(kind, scheme)
        width = sum(reps_or for _, reps_or in columns)
        if body.size != count * width:
            raise SchemaError(f"{path}: body size {body.size} != {count}x{width}")
        mat = body.reshape(count, width)
        col_views = {}
        off = 0
        for cname, cwidth in columns:
            block = mat[:, off:off + cwidth]
            off += cwidth
            if cname == "bits":
                per = cwidth // reps
                if reps == 1:
                    col_views[cname] = np.ascontiguousarray(block)
                else:
                    col_views[cname] = (np.ascontiguousarray(block[:, :per]),
                                        np.ascontiguousarray(block[:, per:]))
            else:
                if reps == 1:
                    col_views[cname] = np.ascontiguousarray(block[:, 0])
                else:
                    col_views[cname] = (np.ascontiguousarray(block[:, 0]),
                                        np.ascontiguousarray(block[:, 1]))
        pool = Pool(KIND_NAMES[kind], col_views, count)
        if kind == KIND_TRIPLE:
            pools.triples = pool
        elif kind == KIND_BITS:
            pools.bits = pool
        elif kind == KIND_TRUNC_DET:
            pools.trunc[(MODE_DET, shift)] = pool
        elif kind == KIND_TRUNC_PROB:
            pools.trunc[(MODE_PROB, shift)] = pool
        else:
            raise SchemaError(f"{path}: unknown material kind {kind}")
    return pools

"""Secure fixed-point operations over shared values.

Two protocol backends implement the same primitive set:

* ``AdditiveEngine`` -- 2-party additive sharing, Beaver-triple
  multiplication (each party combines opened e = x-a, f = y-b with its
  triple shares; party 0 additionally adds e*f).
* ``RssEngine`` -- 3-party replicated sharing, local share multiplication
  followed by a one-element re-share per party.

Everything above the primitives (truncation, comparison, ReLU, square
root, dot products) is composed once in ``EngineBase`` so that both
backends, and the dry-run ``CountingEngine`` used for budget prediction,
execute byte-for-byte identical protocol schedules.

All values are numpy uint64 arrays; a SecretArray carries this party's
share components plus a fixed-point scale annotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .preprocessing import MODE_DET, MODE_PROB, PartyPools, RandomnessBudget
from .ring import RING_DTYPE, FixedPointConfig, encode_fixed
from .sharing import zero_shares
from .transport import PHASE_ONLINE, Session


@dataclass
class SecretArray:
    """This party's share of a secret tensor plus its scale annotation."""

    shares: tuple           # 1 component (additive) or 2 (replicated)
    frac_bits: int          # value = integer / 2^frac_bits

    @property
    def shape(self):
        return self.shares[0].shape

    @property
    def size(self):
        return int(self.shares[0].size)

    def reshape(self, *shape):
        return SecretArray(tuple(s.reshape(*shape) for s in self.shares), self.frac_bits)

    def __getitem__(self, idx):
        return SecretArray(tuple(s[idx] for s in self.shares), self.frac_bits)


def _map2(x: SecretArray, y: SecretArray, op) -> tuple:
    return tuple(op(a, b) for a, b in zip(x.shares, y.shares))


class EngineBase:
    """Protocol-independent composition layer; subclasses provide primitives."""

    scheme = "abstract"

    def __init__(self, cfg: FixedPointConfig, party_id: int):
        self.cfg = cfg
        self.party_id = party_id

    # ---- primitives supplied by backends --------------------------------
    def _open_raw(self, x: SecretArray, to=None) -> np.ndarray | None:
        raise NotImplementedError

    def _mul_raw(self, x: SecretArray, y: SecretArray) -> tuple:
        raise NotImplementedError

    def _matmul_raw(self, x: SecretArray, y: SecretArray) -> tuple:
        raise NotImplementedError

    def _draw_trunc(self, mode: str, shift: int, n: int) -> dict:
        raise NotImplementedError

    def _draw_bits(self, n: int) -> dict:
        raise NotImplementedError

    def share_input(self, owner: int, values, shape, frac_bits: int) -> SecretArray:
        raise NotImplementedError

    def _add_const_share(self, shares: tuple, const: np.ndarray) -> tuple:
        """Fold a public constant into the sharing (exactly one component copy)."""
        raise NotImplementedError

    # ---- linear layer (local, zero communication) -----------------------
    def add(self, x: SecretArray, y: SecretArray) -> SecretArray:
        if x.frac_bits != y.frac_bits:
            raise UsageError(f"scale mismatch in add: {x.frac_bits} vs {y.frac_bits}")
        return SecretArray(_map2(x, y, lambda a, b: a + b), x.frac_bits)

    def sub(self, x: SecretArray, y: SecretArray) -> SecretArray:
        if x.frac_bits != y.frac_bits:
            raise UsageError(f"scale mismatch in sub: {x.frac_bits} vs {y.frac_bits}")
        return SecretArray(_map2(x, y, lambda a, b: a - b), x.frac_bits)

    def neg(self, x: SecretArray) -> SecretArray:
        return SecretArray(tuple(np.zeros_like(s) - s for s in x.shares), x.frac_bits)

    def add_public(self, x: SecretArray, const, frac_bits=None) -> SecretArray:
        """Add a public constant (scalar or broadcastable ring array)."""
        if frac_bits is not None and frac_bits != x.frac_bits:
            raise UsageError("scale mismatch in add_public")
        const = np.broadcast_to(np.asarray(const, dtype=RING_DTYPE), x.shape)
        return SecretArray(self._add_const_share(x.shares, const), x.frac_bits)

    def public_sub(self, const, x: SecretArray) -> SecretArray:
        return self.add_public(self.neg(x), const)

    def mul_public(self, x: SecretArray, const, const_frac: int = 0) -> SecretArray:
        """Multiply by a public ring constant; scales add, caller truncates."""
        const = np.asarray(const, dtype=RING_DTYPE)
        return SecretArray(tuple(s * const for s in x.shares), x.frac_bits + const_frac)

    def sum(self, x: SecretArray, axis=None) -> SecretArray:
        return SecretArray(tuple(s.sum(axis=axis, dtype=RING_DTYPE) for s in x.shares),
                           x.frac_bits)

    def select_public(self, mask, x: SecretArray) -> SecretArray:
        """Elementwise multiply by a public 0/1 mask (free)."""
        mask = np.asarray(mask, dtype=RING_DTYPE)
        return SecretArray(tuple(s * mask for s in x.shares), x.frac_bits)

    def zeros(self, shape, frac_bits: int) -> SecretArray:
        n_comp = 2 if self.scheme == "rss3" else 1
        return SecretArray(tuple(np.zeros(shape, dtype=RING_DTYPE) for _ in range(n_comp)),
                           frac_bits)

    def stack(self, parts: list) -> SecretArray:
        frac = parts[0].frac_bits
        if any(p.frac_bits != frac for p in parts):
            raise UsageError("scale mismatch in stack")
        n_comp = len(parts[0].shares)
        return SecretArray(
            tuple(np.stack([p.shares[c] for p in parts]) for c in range(n_comp)), frac)

    def concat(self, parts: list, axis=0) -> SecretArray:
        frac = parts[0].frac_bits
        if any(p.frac_bits != frac for p in parts):
            raise UsageError("scale mismatch in concat")
        n_comp = len(parts[0].shares)
        return SecretArray(
            tuple(np.concatenate([p.shares[c] for p in parts], axis=axis)
                  for c in range(n_comp)), frac)

    # ---- interactive operations ----------------------------------------
    def open(self, x: SecretArray, to=None) -> np.ndarray | None:
        return self._open_raw(x, to=to)

    def mul(self, x: SecretArray, y: SecretArray) -> SecretArray:
        """Elementwise product; integer ring semantics, scales add."""
        if x.shape != y.shape:
            raise UsageError(f"shape mismatch in mul: {x.shape} vs {y.shape}")
        return SecretArray(self._mul_raw(x, y), x.frac_bits + y.frac_bits)

    def matmul(self, x: SecretArray, y: SecretArray) -> SecretArray:
        if x.shape[-1] != y.shape[0]:
            raise UsageError(f"shape mismatch in matmul: {x.shape} @ {y.shape}")
        return SecretArray(self._matmul_raw(x, y), x.frac_bits + y.frac_bits)

    def dot(self, x: SecretArray, y: SecretArray) -> SecretArray:
        """Inner product of two equal-length vectors (single re-share / batch)."""
        if x.shape != y.shape or len(x.shape) != 1:
            raise UsageError("dot needs two equal-length vectors")
        z = self.matmul(x.reshape(1, -1), y.reshape(-1, 1))
        return z.reshape(())

    def truncate(self, x: SecretArray, shift: int, mode: str = MODE_DET,
                 new_frac: int | None = None) -> SecretArray:
        """Arithmetic right shift by ``shift`` of the shared value.

        Deterministic mode is exact (2^shift-aligned mask, carry-free
        opening); probabilistic mode may add one extra LSB with probability
        ~ the value's fractional part.  One masked opening, one round.

        The positivity bias scales with the value's precision: a value at
        ``frac_bits`` fractional bits occupies up to m + frac_bits ring
        bits, so the bias is 2^(m + frac_bits).  Wider values trade some
        statistical hiding of the opening for exactness (double-precision
        products before re-scaling are the common case).
        """
        if shift == 0:
            return SecretArray(x.shares, x.frac_bits if new_frac is None else new_frac)
        if self.cfg.m + x.frac_bits >= 63:
            raise UsageError(
                f"cannot truncate a value at {x.frac_bits} fractional bits: "
                f"m + frac_bits must stay below 63")
        n = x.size
        mat = self._draw_trunc(mode, shift, n)
        r = SecretArray(tuple(a.reshape(x.shape) for a in _as_tuple(mat["r"])), x.frac_bits)
        r_shifted = tuple(a.reshape(x.shape) for a in _as_tuple(mat["r_shifted"]))
        bias = 1 << (self.cfg.m + x.frac_bits)
        masked = self.add_public(self.add(x, r), np.uint64(bias))
        c = self.open(masked)
        c_shifted = c >> np.uint64(shift)   # c < 2^63 + 2^62: plain unsigned shift
        out = SecretArray(tuple(np.zeros_like(s) - s for s in r_shifted), 0)
        out = self.add_public(out, c_shifted - np.uint64(bias >> shift))
        frac = x.frac_bits - shift if new_frac is None else new_frac
        return SecretArray(out.shares, frac)

    def truncate_round(self, x: SecretArray, shift: int, mode: str = MODE_DET,
                       new_frac: int | None = None) -> SecretArray:
        """Truncation with round-to-nearest output.

        Deterministic truncation floors, so adding half an output LSB first
        turns it into round-to-nearest.  Probabilistic truncation is already
        stochastic rounding (unbiased in expectation), so it is passed
        through unchanged.
        """
        if shift == 0 or mode != MODE_DET:
            return self.truncate(x, shift, mode, new_frac)
        nudged = self.add_public(x, np.uint64(1) << np.uint64(shift - 1))
        return self.truncate(nudged, shift, mode, new_frac)

    def ltz(self, x: SecretArray) -> SecretArray:
        """Secret bit: 1 iff the signed value is negative (LTZ(0) = 0).

        Requires |value| < 2^(cfg.ltz_bits); for such values ring bit
        ``ltz_bits`` equals the sign, so the borrow circuit spans only the
        low ``ltz_bits`` bits.  Opens one perfectly-masked element per
        entry, then runs the borrow scan on arithmetic shares of the mask's
        bits (one multiplication per AND of secret bits).
        """
        B = self.cfg.ltz_bits
        n = x.size
        mat = self._draw_bits(n)
        bits = _as_tuple(mat["bits"])  # each component (n, 64)
        x_flat = x.reshape(-1)
        r_flat = SecretArray(_as_tuple(mat["r"]), x.frac_bits)
        c = self.open(self.add(x_flat, r_flat)).reshape(-1)

        c_bits = [((c >> np.uint64(j)) & np.uint64(1)) for j in range(B + 1)]
        r_bit = lambda j: SecretArray(tuple(comp[:, j] for comp in bits), 0)

        # d_j = r_j XOR c_j, with public c_j folded in locally
        def xor_pub(secret_bit: SecretArray, pub_bits: np.ndarray) -> SecretArray:
            flip = np.uint64(1) - np.uint64(2) * pub_bits  # +1 or -1
            return self.add_public(self.mul_public(secret_bit, flip), pub_bits)

        one = np.uint64(1)
        # Q_j = prod_{l=j}^{B-1} (1 - d_l), computed as a sequential scan
        one_secret = self.public_sub(one, self.zeros((n,), 0))
        q_next = one_secret      # Q_{j+1}; starts as the public 1 at j = B
        u = self.zeros((n,), 0)  # borrow out of the low B bits: [c mod 2^B < r mod 2^B]
        for j in range(B - 1, -1, -1):
            not_d = self.public_sub(one, xor_pub(r_bit(j), c_bits[j]))
            q_j = not_d if j == B - 1 else self.mul(q_next, not_d)
            # term_j = (1 - c_j) * d_j * Q_{j+1} = (1 - c_j) * (Q_{j+1} - Q_j)
            u = self.add(u, self.select_public(one - c_bits[j], self.sub(q_next, q_j)))
            q_next = q_j

        # sign bit: c_B XOR r_B XOR borrow
        w = self._xor_secret(r_bit(B), u)
        out = xor_pub(w, c_bits[B])
        return SecretArray(tuple(s.reshape(x.shape) for s in out.shares), 0)

    def _xor_secret(self, a: SecretArray, b: SecretArray) -> SecretArray:
        ab = self.mul(a, b)
        return self.sub(self.add(a, b), self.mul_public(ab, np.uint64(2)))

    def relu(self, x: SecretArray) -> SecretArray:
        """max(0, x) as x - x * LTZ(x); the bit product preserves the scale."""
        neg = self.ltz(x)
        return self.sub(x, SecretArray(self._mul_raw(x, neg), x.frac_bits))

    # ---- square root ----------------------------------------------------
    SQRT_BIN_LOW = -8
    SQRT_BIN_HIGH = 7           # bins [4^b, 4^(b+1)) for b in [low, high]
    SQRT_NEWTON_ITERS = 6
    SQRT_Y0_C0 = 1.104166
    SQRT_Y0_C1 = 1.0 / 6.0

    def sqrt(self, x: SecretArray, mode: str = MODE_DET) -> SecretArray:
        """Square root of a non-negative shared value on [2^-f, 2^m).

        Range-reduces into [1, 4) by obliviously selecting one of 16
        power-of-four scalings (comparison ladder), runs a fixed number of
        inverse-square-root Newton iterations from an affine initial guess,
        and undoes the scaling.  Iteration count and communication are
        data-independent.
        """
        cfg = self.cfg
        f = cfg.f
        enc = lambda v: encode_fixed(v, cfg)
        lo, hi = self.SQRT_BIN_LOW, self.SQRT_BIN_HIGH

        # comparison ladder: lt[b] = [x < 4^b] for interior thresholds
        lt = {}
        for b in range(lo + 1, hi + 1):
            lt[b] = self.ltz(self.add_public(x, np.uint64(0) - np.asarray(enc(4.0 ** b)),
                                             frac_bits=x.frac_bits))
        one = np.uint64(1)
        deltas = {}
        for b in range(lo, hi + 1):
            if b == lo:
                deltas[b] = lt[b + 1]
            elif b == hi:
                deltas[b] = self.public_sub(one, lt[b])
            else:
                deltas[b] = self.sub(lt[b + 1], lt[b])

        # per-branch scaling into [1, 4): xh_b = x * 4^-b
        xhat = self.zeros(x.shape, f)
        for b in range(lo, hi + 1):
            if b > 0:
                cand = self.truncate_round(x, 2 * b, mode)
                cand = SecretArray(cand.shares, f)
            elif b == 0:
                cand = x
            else:
                cand = self.mul_public(x, np.uint64(1) << np.uint64(-2 * b))
                cand = SecretArray(cand.shares, f)
            xhat = self.add(xhat, SecretArray(self._mul_raw(deltas[b], cand), f))

        # Newton for 1/sqrt(xhat): y <- y * (3 - xhat * y^2) / 2
        y = self.public_sub(enc(self.SQRT_Y0_C0),
                            self.truncate_round(self.mul_public(xhat, enc(self.SQRT_Y0_C1), f),
                                                f, mode))
        for _ in range(self.SQRT_NEWTON_ITERS):
            y2 = self.truncate_round(self.mul(y, y), f, mode)
            t = self.truncate_round(self.mul(xhat, y2), f, mode)
            s = self.public_sub(enc(3.0), t)
            y = self.truncate_round(self.mul(y, s), f + 1, mode, new_frac=f)

        p = self.mul(xhat, y)  # sqrt(xhat) at 2f fractional bits
        z = self.truncate_round(p, f, mode)

        # undo the range reduction: sqrt(x) = sqrt(xhat) * 2^b.  Negative
        # bins truncate the full-precision product once (shift f - b) so the
        # small outputs see a single rounding, not two stacked ones.
        out = self.zeros(x.shape, f)
        for b in range(lo, hi + 1):
            if b >= 0:
                cand = self.mul_public(z, np.uint64(1) << np.uint64(b))
                cand = SecretArray(cand.shares, f)
            else:
                cand = self.truncate_round(p, f - b, mode, new_frac=f)
            out = self.add(out, SecretArray(self._mul_raw(deltas[b], cand), f))
        return out


def _as_tuple(v):
    return v if isinstance(v, tuple) else (v,)


class AdditiveEngine(EngineBase):
    """2-party semi-honest additive backend (Beaver multiplication)."""

    scheme = "additive2"

    def __init__(self, session: Session, pools: PartyPools, cfg: FixedPointConfig):
        super().__init__(cfg, session.party_id)
        self.session = session
        self.pools = pools
        self.peer = 1 - session.party_id

    def _add_const_share(self, shares, const):
        if self.party_id == 0:
            return (shares[0] + const,)
        return shares

    def _open_raw(self, x: SecretArray, to=None):
        s = self.session
        mine = x.shares[0].reshape(-1)
        if to is None:
            s.send_elements(self.peer, mine, PHASE_ONLINE)
            theirs = s.recv_elements(self.peer, mine.size, PHASE_ONLINE)
            s.round_barrier()
            return (mine + theirs).reshape(x.shape)
        if to == self.party_id:
            theirs = s.recv_elements(self.peer, mine.size, PHASE_ONLINE)
            s.round_barrier()
            return (mine + theirs).reshape(x.shape)
        s.send_elements(self.peer, mine, PHASE_ONLINE)
        s.round_barrier()
        return None

    def _beaver(self, e_mine, f_mine, shape):
        """One batched (e, f) exchange; returns public e, f."""
        s = self.session
        payload = np.concatenate([e_mine.reshape(-1), f_mine.reshape(-1)])
        s.send_elements(self.peer, payload, PHASE_ONLINE)
        theirs = s.recv_elements(self.peer, payload.size, PHASE_ONLINE)
        s.round_barrier()
        half = payload.size // 2
        e = (e_mine.reshape(-1) + theirs[:half]).reshape(shape)
        f = (f_mine.reshape(-1) + theirs[half:]).reshape(shape)
        return e, f

    def _mul_raw(self, x: SecretArray, y: SecretArray):
        n = x.size
        t = self.pools.draw_triples(n)
        a = t["a"].reshape(x.shape)
        b = t["b"].reshape(x.shape)
        c = t["c"].reshape(x.shape)
        e, f = self._beaver(x.shares[0] - a, y.shares[0] - b, x.shape)
        z = f * a + e * b + c
        if self.party_id == 0:
            z = z + e * f
        return (z,)

    def _matmul_raw(self, x: SecretArray, y: SecretArray):
        # scalar-triple matrix product: one triple per (i, k, j) term
        n, k = x.shape
        k2, mcols = y.shape
        t = self.pools.draw_triples(n * k * mcols)
        a = t["a"].reshape(n, k, mcols)
        b = t["b"].reshape(n, k, mcols)
        c = t["c"].reshape(n, k, mcols)
        e_mine = x.shares[0][:, :, None] - a
        f_mine = y.shares[0][None, :, :] - b
        e, f = self._beaver(e_mine, f_mine, (n, k, mcols))
        z = (f * a + e * b + c).sum(axis=1, dtype=RING_DTYPE)
        if self.party_id == 0:
            z = z + (e * f).sum(axis=1, dtype=RING_DTYPE)
        return (z,)

    def _draw_trunc(self, mode, shift, n):
        return self.pools.draw_trunc(mode, shift, n)

    def _draw_bits(self, n):
        return self.pools.draw_bits(n)

    def share_input(self, owner: int, values, shape, frac_bits: int) -> SecretArray:
        """Seed-derived sharing: the non-owner's share is a PRG draw, so
        dealing an input costs no communication."""
        rng = self.pools.input_rng(self.peer)
        other = rng.draw(shape)
        if self.party_id == owner:
            if values is None:
                raise UsageError("input owner must supply values")
            mine = np.asarray(values, dtype=RING_DTYPE).reshape(shape) - other
            return SecretArray((mine,), frac_bits)
        return SecretArray((other,), frac_bits)


class RssEngine(EngineBase):
    """3-party replicated backend; party i holds components (s_i, s_{i+1})."""

    scheme = "rss3"

    def __init__(self, session: Session, pools: PartyPools, cfg: FixedPointConfig):
        super().__init__(cfg, session.party_id)
        self.session = session
        self.pools = pools
        self.p_next = (self.party_id + 1) % 3
        self.p_prev = (self.party_id - 1) % 3
        self._zs_next, self._zs_prev = pools.zero_share_rngs()

    def _add_const_share(self, shares, const):
        # the constant rides on component s_0, held by parties 0 and 2
        if self.party_id == 0:
            return (shares[0] + const, shares[1])
        if self.party_id == 2:
            return (shares[0], shares[1] + const)
        return shares

    def _open_raw(self, x: SecretArray, to=None):
        s = self.session
        second = x.shares[1].reshape(-1)
        if to is None:
            s.send_elements(self.p_prev, second, PHASE_ONLINE)
            missing = s.recv_elements(self.p_next, second.size, PHASE_ONLINE)
            s.round_barrier()
            return (x.shares[0].reshape(-1) + second + missing).reshape(x.shape)
        if to == self.p_prev:
            s.send_elements(self.p_prev, second, PHASE_ONLINE)
            s.round_barrier()
            return None
        if to == self.party_id:
            missing = s.recv_elements(self.p_next, second.size, PHASE_ONLINE)
            s.round_barrier()
            return (x.shares[0].reshape(-1) + second + missing).reshape(x.shape)
        s.round_barrier()
        return None

    def _reshare(self, partial: np.ndarray) -> tuple:
        """Re-randomize a post-multiplication partial and redistribute.

        Each party sends one element (vector) to its predecessor."""
        s = self.session
        alpha = self._zs_next.draw(partial.shape) - self._zs_prev.draw(partial.shape)
        mine = partial + alpha
        s.send_elements(self.p_prev, mine.reshape(-1), PHASE_ONLINE)
        nxt = s.recv_elements(self.p_next, mine.size, PHASE_ONLINE).reshape(partial.shape)
        s.round_barrier()
        return (mine, nxt)

    def _mul_raw(self, x: SecretArray, y: SecretArray):
        x0, x1 = x.shares
        y0, y1 = y.shares
        partial = x0 * y0 + x0 * y1 + x1 * y0
        return self._reshare(partial)

    def _matmul_raw(self, x: SecretArray, y: SecretArray):
        x0, x1 = x.shares
        y0, y1 = y.shares
        partial = x0 @ (y0 + y1) + x1 @ y0
        return self._reshare(partial)

    def _draw_trunc(self, mode, shift, n):
        return self.pools.draw_trunc(mode, shift, n)

    def _draw_bits(self, n):
        return self.pools.draw_bits(n)

    def share_input(self, owner: int, values, shape, frac_bits: int) -> SecretArray:
        """Seed-assisted replicated sharing; the owner sends one component
        to each other party (2 elements of traffic per secret)."""
        s = self.session
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if self.party_id == owner:
            s_next = self.pools.input_rng(self.p_next).draw(shape)   # component s_{o+1}
            s_prev2 = self.pools.input_rng(self.p_prev).draw(shape)  # component s_{o+2}
            x = np.asarray(values, dtype=RING_DTYPE).reshape(shape)
            s_own = x - s_next - s_prev2
            s.send_elements(self.p_prev, s_own.reshape(-1), PHASE_ONLINE)
            s.send_elements(self.p_next, s_prev2.reshape(-1), PHASE_ONLINE)
            s.round_barrier()
            return SecretArray((s_own, s_next), frac_bits)
        if self.party_id == (owner + 1) % 3:
            first = self.pools.input_rng(owner).draw(shape)          # s_{o+1}
            second = s.recv_elements(owner, size, PHASE_ONLINE).reshape(shape)
            s.round_barrier()
            return SecretArray((first, second), frac_bits)
        first = self.pools.input_rng(owner).draw(shape)              # s_{o+2}
        second = s.recv_elements(owner, size, PHASE_ONLINE).reshape(shape)
        s.round_barrier()
        return SecretArray((first, second), frac_bits)


class CountingEngine(EngineBase):
    """Dry-run backend: same schedule, no data, tallies the randomness budget."""

    def __init__(self, scheme: str, cfg: FixedPointConfig):
        super().__init__(cfg, party_id=0)
        self.scheme_name = scheme
        self.budget = RandomnessBudget()
        self.online_elements_sent = 0

    scheme = "counting"

    def _dummy(self, shape):
        return SecretArray((np.zeros(shape, dtype=RING_DTYPE),), 0)

    def _add_const_share(self, shares, const):
        return (shares[0] + const,) + shares[1:]

    def _open_raw(self, x, to=None):
        return np.zeros(x.shape, dtype=RING_DTYPE)

    def _mul_raw(self, x, y):
        if self.scheme_name == "additive2":
            self.budget.triples += x.size
        return (np.zeros(x.shape, dtype=RING_DTYPE),)

    def _matmul_raw(self, x, y):
        n, k = x.shape
        mcols = y.shape[1]
        if self.scheme_name == "additive2":
            self.budget.triples += n * k * mcols
        return (np.zeros((n, mcols), dtype=RING_DTYPE),)

    def _draw_trunc(self, mode, shift, n):
        self.budget.add_trunc(mode, shift, n)
        z = np.zeros(n, dtype=RING_DTYPE)
        return {"r": z, "r_shifted": z}

    def _draw_bits(self, n):
        self.budget.bit_randoms += n
        return {"r": np.zeros(n, dtype=RING_DTYPE), "bits": np.zeros((n, 64), dtype=RING_DTYPE)}

    def share_input(self, owner, values, shape, frac_bits):
        return SecretArray((np.zeros(shape, dtype=RING_DTYPE),), frac_bits)


def make_engine(session: Session, pools: PartyPools, cfg: FixedPointConfig) -> EngineBase:
    if session.cfg.scheme == "additive2":
        return AdditiveEngine(session, pools, cfg)
    return RssEngine(session, pools, cfg)

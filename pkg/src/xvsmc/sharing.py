"""Additive and 3-party replicated secret sharing of ring elements.

Shares are numpy uint64 arrays, so a single Share object can carry a whole
tensor of secrets.  Replicated sharing uses the component layout in which
party i holds components (s_i, s_{i+1 mod 3}); the component held by two
parties is bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrityError, ProtocolError
from .ring import RING_DTYPE, as_ring, random_ring

ELEMENT_BYTES = 8  # little-endian u64 on the wire and in material files


@dataclass
class AdditiveShare:
    party_id: int
    value: np.ndarray  # this party's additive component

    def __post_init__(self):
        self.value = as_ring(self.value)


@dataclass
class ReplicatedShare:
    party_id: int
    pair: tuple  # (s_i, s_{i+1 mod 3}) as uint64 arrays

    def __post_init__(self):
        self.pair = (as_ring(self.pair[0]), as_ring(self.pair[1]))


class SecretRng:
    """Deterministic element stream derived from a pairwise seed.

    The two parties of a channel hold the same seed and therefore draw
    identical streams as long as they make identical draws in protocol
    order.  Distinct purposes get distinct Philox keys so re-sharing
    zero-shares and seeded input sharing cannot collide.
    """

    def __init__(self, seed: int, purpose: int = 0):
        self.seed = int(seed)
        self.purpose = int(purpose)
        self._gen = np.random.Generator(np.random.Philox(key=[self.seed, self.purpose]))

    def draw(self, shape=()) -> np.ndarray:
        return random_ring(self._gen, shape)


def share_additive(x, n: int, rng: np.random.Generator) -> list:
    """Split x into n uniform additive shares summing to x mod 2^64."""
    if n < 2:
        raise ConfigError(f"additive sharing needs n >= 2 parties, got {n}")
    x = as_ring(x)
    parts = [random_ring(rng, x.shape) for _ in range(n - 1)]
    last = x.copy()
    for p in parts:
        last = last - p
    parts.append(last)
    return [AdditiveShare(i, v) for i, v in enumerate(parts)]


def reconstruct_additive(shares) -> np.ndarray:
    ids = sorted(s.party_id for s in shares)
    if ids != list(range(len(shares))):
        raise ProtocolError(f"need exactly one share per party id, got ids {ids}")
    total = np.zeros(shares[0].value.shape, dtype=RING_DTYPE)
    for s in shares:
        total = total + s.value
    return total


def share_replicated(x, rng: np.random.Generator) -> list:
    """Split x into three components and hand each party its pair."""
    x = as_ring(x)
    s = [random_ring(rng, x.shape), random_ring(rng, x.shape)]
    s.append(x - s[0] - s[1])
    return [ReplicatedShare(i, (s[i], s[(i + 1) % 3])) for i in range(3)]


def reconstruct_replicated(shares) -> np.ndarray:
    ids = sorted(s.party_id for s in shares)
    if ids != [0, 1, 2]:
        raise ProtocolError(f"replicated reconstruction needs parties 0,1,2, got {ids}")
    by_id = {s.party_id: s for s in shares}
    comps = [by_id[i].pair[0] for i in range(3)]
    # overlap consistency: party i's second component is party i+1's first
    for i in range(3):
        if not np.array_equal(by_id[i].pair[1], by_id[(i + 1) % 3].pair[0]):
            raise IntegrityError(f"replicated overlap mismatch between parties {i} and {(i + 1) % 3}")
    return comps[0] + comps[1] + comps[2]


def zero_shares(seeds_next: SecretRng, seeds_prev: SecretRng, shape=()) -> np.ndarray:
    """This party's component of a pairwise-PRG three-way zero sharing.

    Party i computes F(seed_{i,i+1}) - F(seed_{i-1,i}); the three
    components telescope to 0 mod 2^64.
    """
    return seeds_next.draw(shape) - seeds_prev.draw(shape)


def reshare_rss(partials, seed_rngs) -> list:
    """Rebuild a replicated sharing from one post-multiplication partial per party.

    ``partials`` is a list of three arrays summing to the secret;
    ``seed_rngs`` maps party i to its (next, prev) SecretRng pair.  This is
    the one-shot simulation of the protocol in which each party
    re-randomizes its partial with a zero-share and sends the result to its
    predecessor (one ring element of traffic per party).
    """
    if len(partials) != 3:
        raise ProtocolError("replicated re-sharing needs exactly 3 partials")
    rerandomized = []
    for i in range(3):
        nxt, prv = seed_rngs[i]
        rerandomized.append(as_ring(partials[i]) + zero_shares(nxt, prv, np.asarray(partials[i]).shape))
    return [ReplicatedShare(i, (rerandomized[i], rerandomized[(i + 1) % 3])) for i in range(3)]


def make_pairwise_rngs(seeds, purpose: int = 0):
    """Per-party (next, prev) SecretRng pairs from three pairwise seeds.

    ``seeds`` holds seed_{01}, seed_{12}, seed_{20}; party i shares
    seeds[i] with its successor and seeds[i-1] with its predecessor.
    """
    return [
        (SecretRng(seeds[i], purpose), SecretRng(seeds[(i - 1) % 3], purpose))
        for i in range(3)
    ]


def elements_to_bytes(values: np.ndarray) -> bytes:
    """Little-endian 8-byte serialization used by transport and dealer files."""
    return np.ascontiguousarray(values, dtype="<u8").tobytes()


def elements_from_bytes(data: bytes, shape=None) -> np.ndarray:
    arr = np.frombuffer(data, dtype="<u8").astype(RING_DTYPE)
    return arr if shape is None else arr.reshape(shape)

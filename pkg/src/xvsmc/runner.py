"""Single-machine protocol runs: all parties as threads over the in-process mesh.

Used by the CLI's ``local`` and ``bench`` commands and by the test suite.
Each party executes the identical engine schedule it would run over TCP;
the ledgers therefore agree byte for byte with networked runs.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import make_engine
from .preprocessing import MODE_DET, deal_in_memory
from .ring import FixedPointConfig, decode_fixed, encode_fixed
from .transport import SCHEME_PARTIES, local_mesh
from .xvector import NetworkGraph, QuantizedGraph, extract_secure, predict_budget, \
    public_graph, quantize_weights


@dataclass
class LocalRunResult:
    embedding: np.ndarray | None      # decoded floats (None in shares-out mode)
    embedding_ring: np.ndarray | None
    ledgers: list                     # per-party ledger report dicts
    budget: object
    consumption: list                 # per-party RandomnessBudget actually drawn
    offline_seconds: float
    online_seconds: float
    shares: dict = field(default_factory=dict)  # party -> SecretArray (shares mode)

    def online_bytes_per_party(self) -> list:
        return [l["phases"]["online"]["bytes_sent"] for l in self.ledgers]


def run_local(graph: NetworkGraph, features, scheme: str,
              cfg: FixedPointConfig | None = None, mode: str = MODE_DET,
              seed: int = 1, pools=None, owner_features: int = 0,
              owner_weights: int = 1, open_to=0, timeout: float = 300.0
              ) -> LocalRunResult:
    """Quantize, deal (unless pools are supplied), and run all parties.

    ``open_to`` follows extract_secure: a party id, "all", or "shares".
    """
    cfg = cfg or FixedPointConfig()
    qgraph = quantize_weights(graph, cfg)
    feats = np.asarray(features, dtype=np.float64)
    frames = feats.shape[0]
    feats_ring = encode_fixed(feats, cfg)

    budget = predict_budget(qgraph, frames, scheme, cfg, mode)
    t0 = time.monotonic()
    if pools is None:
        pools = deal_in_memory(budget, scheme, cfg, seed)
    offline_seconds = time.monotonic() - t0

    sessions = local_mesh(scheme, cfg, timeout=timeout)
    n = SCHEME_PARTIES[scheme]
    results: dict = {}
    errors: dict = {}

    def party(i):
        try:
            eng = make_engine(sessions[i], pools[i], cfg)
            pools[i].preflight(budget)
            qg = qgraph if i == owner_weights else public_graph(qgraph)
            fr = feats_ring if i == owner_features else None
            results[i] = extract_secure(eng, qg, fr, frames,
                                        owner_features=owner_features,
                                        owner_weights=owner_weights,
                                        mode=mode, open_to=open_to)
        except BaseException as exc:  # re-raised in the caller
            errors[i] = exc

    t1 = time.monotonic()
    threads = [threading.Thread(target=party, args=(i,), name=f"party{i}")
               for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    online_seconds = time.monotonic() - t1
    if errors:
        raise errors[min(errors)]

    ledgers = [sessions[i].report_ledger() for i in range(n)]
    consumption = [pools[i].consumption() for i in range(n)]

    if open_to == "shares":
        return LocalRunResult(None, None, ledgers, budget, consumption,
                              offline_seconds, online_seconds, shares=results)
    recipient = 0 if open_to == "all" else open_to
    ring = results[recipient]
    return LocalRunResult(decode_fixed(ring, cfg), ring, ledgers, budget,
                          consumption, offline_seconds, online_seconds)

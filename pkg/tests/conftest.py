"""Shared fixtures: small graphs and an in-thread multiparty executor."""

from __future__ import annotations

import threading

import numpy as np
import pytest

from xvsmc.engine import make_engine
from xvsmc.preprocessing import deal_in_memory
from xvsmc.ring import FixedPointConfig
from xvsmc.transport import SCHEME_PARTIES, local_mesh
from xvsmc.xvector import LayerSpec

SCHEMES = ("additive2", "rss3")


@pytest.fixture
def cfg():
    return FixedPointConfig()


def small_layers():
    """A miniature graph exercising every layer kind and a dilated kernel."""
    return [
        LayerSpec("tdnn", 5, 7, kernel=3, dilation=1),
        LayerSpec("tdnn", 7, 9, kernel=3, dilation=2),
        LayerSpec("tdnn", 9, 6, kernel=1, dilation=1),
        LayerSpec("stats_pool", 6, 12),
        LayerSpec("linear", 12, 4),
    ]


def run_parties(scheme, budget, cfg, fn, seed=1234, pools=None, timeout=120.0):
    """Run ``fn(engine, party_id)`` on every party over an in-process mesh.

    Returns (per-party results dict, sessions, pools).  Exceptions raised by
    any party thread are re-raised here.
    """
    if pools is None:
        pools = deal_in_memory(budget, scheme, cfg, seed)
    sessions = local_mesh(scheme, cfg, timeout=timeout)
    results, errors = {}, {}

    def runner(i):
        try:
            results[i] = fn(make_engine(sessions[i], pools[i], cfg), i)
        except BaseException as exc:
            errors[i] = exc

    threads = [threading.Thread(target=runner, args=(i,))
               for i in range(SCHEME_PARTIES[scheme])]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[min(errors)]
    return results, sessions, pools


def rng_for(test_name: str) -> np.random.Generator:
    """Deterministic per-test generator so failures reproduce exactly."""
    import zlib
    return np.random.default_rng(zlib.crc32(test_name.encode()))

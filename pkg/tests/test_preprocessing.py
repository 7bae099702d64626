"""Dealer material: generation, budgets, pools, and the file format."""

import json
import os

import numpy as np
import pytest

from xvsmc.errors import PreprocessingUnderflow, SchemaError
from xvsmc.preprocessing import HEADER, KIND_SEEDS, MODE_DET, MODE_PROB, \
    RandomnessBudget, deal_in_memory, gen_bit_randoms, gen_triples, \
    gen_trunc_pairs, load_material, write_material
from xvsmc.ring import MODULUS, FixedPointConfig
from xvsmc.sharing import reconstruct_additive, reconstruct_replicated

from conftest import SCHEMES, rng_for

CFG = FixedPointConfig()


def _reconstruct(shares, scheme):
    if scheme == "additive2":
        return reconstruct_additive(shares)
    return reconstruct_replicated(shares)


class TestGenerators:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_triples_satisfy_c_equals_ab(self, scheme):
        rng = rng_for(f"triples_{scheme}")
        for t in gen_triples(200, scheme, rng):
            a = int(_reconstruct(t.a, scheme))
            b = int(_reconstruct(t.b, scheme))
            c = int(_reconstruct(t.c, scheme))
            assert c == (a * b) % MODULUS

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_deterministic_trunc_masks_are_aligned(self, scheme):
        rng = rng_for(f"trunc_det_{scheme}")
        shift = CFG.f
        for p in gen_trunc_pairs(200, shift, scheme, rng, mode=MODE_DET):
            r = int(_reconstruct(p.r, scheme))
            rs = int(_reconstruct(p.r_shifted, scheme))
            assert r % (1 << shift) == 0
            assert rs == r >> shift
            assert r < 1 << 63

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_probabilistic_trunc_pairs_consistent(self, scheme):
        rng = rng_for(f"trunc_prob_{scheme}")
        shift = CFG.f
        for p in gen_trunc_pairs(200, shift, scheme, rng, mode=MODE_PROB):
            r = int(_reconstruct(p.r, scheme))
            assert r < 1 << 63
            assert int(_reconstruct(p.r_shifted, scheme)) == r >> shift

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_bit_randoms_decompose_r(self, scheme):
        rng = rng_for(f"bits_{scheme}")
        for br in gen_bit_randoms(20, scheme, rng):
            r = int(_reconstruct(br.r, scheme))
            for j, bit_shares in enumerate(br.bits):
                assert int(_reconstruct(bit_shares, scheme)) == (r >> j) & 1


class TestBudget:
    def test_dict_roundtrip(self):
        b = RandomnessBudget(triples=10, bit_randoms=5)
        b.add_trunc(MODE_DET, 15, 7)
        b.add_trunc(MODE_PROB, 30, 3)
        b.add_trunc(MODE_DET, 15, 2)
        again = RandomnessBudget.from_dict(b.as_dict())
        assert again == b
        assert again.trunc_pairs[(MODE_DET, 15)] == 9


class TestPools:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_draws_are_consumed_in_order_and_underflow(self, scheme):
        budget = RandomnessBudget(triples=10)
        pools = deal_in_memory(budget, scheme, CFG, seed=5)
        first = pools[0].draw_triples(4)["a"]
        second = pools[0].draw_triples(6)["a"]
        arr0 = first if scheme == "additive2" else first[0]
        arr1 = second if scheme == "additive2" else second[0]
        assert arr0.shape[0] == 4 and arr1.shape[0] == 6
        with pytest.raises(PreprocessingUnderflow) as err:
            pools[0].draw_triples(1)
        assert err.value.kind == "triple"
        assert err.value.remaining == 0

    def test_missing_kind_underflows_immediately(self):
        pools = deal_in_memory(RandomnessBudget(), "rss3", CFG, seed=5)
        with pytest.raises(PreprocessingUnderflow):
            pools[0].draw_bits(1)
        with pytest.raises(PreprocessingUnderflow):
            pools[0].draw_trunc(MODE_DET, 15, 1)

    def test_preflight_matches_draw_outcomes(self):
        budget = RandomnessBudget(triples=5, bit_randoms=3)
        budget.add_trunc(MODE_DET, 15, 2)
        pools = deal_in_memory(budget, "rss3", CFG, seed=6)
        pools[0].preflight(budget)  # exact fit passes
        over = RandomnessBudget(triples=6)
        with pytest.raises(PreprocessingUnderflow):
            pools[0].preflight(over)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_consumption_tracks_draws_exactly(self, scheme):
        budget = RandomnessBudget(triples=10, bit_randoms=4)
        budget.add_trunc(MODE_PROB, 15, 6)
        pools = deal_in_memory(budget, scheme, CFG, seed=7)
        pools[0].draw_triples(3)
        pools[0].draw_trunc(MODE_PROB, 15, 6)
        used = pools[0].consumption()
        assert used.triples == 3
        assert used.bit_randoms == 0
        assert used.trunc_pairs == {(MODE_PROB, 15): 6}

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_dealt_material_reconstructs_correctly(self, scheme):
        budget = RandomnessBudget(triples=50)
        pools = deal_in_memory(budget, scheme, CFG, seed=8)
        draws = [p.draw_triples(50) for p in pools]
        if scheme == "additive2":
            a = draws[0]["a"] + draws[1]["a"]
            b = draws[0]["b"] + draws[1]["b"]
            c = draws[0]["c"] + draws[1]["c"]
        else:
            a = sum(d["a"][0] for d in draws)
            b = sum(d["b"][0] for d in draws)
            c = sum(d["c"][0] for d in draws)
        np.testing.assert_array_equal(c, a * b)

    def test_pairwise_seeds_line_up(self):
        pools = deal_in_memory(RandomnessBudget(), "rss3", CFG, seed=9)
        for i in range(3):
            # party i's "next" seed is party i+1's "prev" seed
            assert pools[i].seeds[0] == pools[(i + 1) % 3].seeds[1]


class TestMaterialFiles:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_files_roundtrip_and_match_in_memory_dealing(self, scheme, tmp_path):
        budget = RandomnessBudget(triples=40, bit_randoms=8)
        budget.add_trunc(MODE_DET, 15, 12)
        budget.add_trunc(MODE_PROB, 30, 5)
        write_material(str(tmp_path), budget, scheme, CFG, seed=77)
        mem = deal_in_memory(budget, scheme, CFG, seed=77)
        for i in range(2 if scheme == "additive2" else 3):
            loaded = load_material(str(tmp_path), i, scheme, CFG)
            assert loaded.seeds == mem[i].seeds
            got = loaded.draw_triples(40)
            want = mem[i].draw_triples(40)
            for k in ("a", "b", "c"):
                np.testing.assert_array_equal(np.asarray(got[k]), np.asarray(want[k]))
            got_b = loaded.draw_bits(8)
            want_b = mem[i].draw_bits(8)
            np.testing.assert_array_equal(np.asarray(got_b["bits"]),
                                          np.asarray(want_b["bits"]))
            for key in ((MODE_DET, 15), (MODE_PROB, 30)):
                g = loaded.draw_trunc(*key, budget.trunc_pairs[key])
                w = mem[i].draw_trunc(*key, budget.trunc_pairs[key])
                np.testing.assert_array_equal(np.asarray(g["r"]), np.asarray(w["r"]))

    def test_same_seed_writes_identical_bytes(self, tmp_path):
        budget = RandomnessBudget(triples=30)
        budget.add_trunc(MODE_DET, 15, 10)
        m1 = write_material(str(tmp_path / "a"), budget, "rss3", CFG, seed=3)
        m2 = write_material(str(tmp_path / "b"), budget, "rss3", CFG, seed=3)
        assert m1["file_sha256"] == m2["file_sha256"]
        m3 = write_material(str(tmp_path / "c"), budget, "rss3", CFG, seed=4)
        assert m3["file_sha256"] != m1["file_sha256"]

    def test_manifest_hashes_match_files(self, tmp_path):
        import hashlib
        budget = RandomnessBudget(triples=5)
        manifest = write_material(str(tmp_path), budget, "additive2", CFG, seed=1)
        for name, digest in manifest["file_sha256"].items():
            data = (tmp_path / name).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest

    def test_header_is_32_bytes(self, tmp_path):
        write_material(str(tmp_path), RandomnessBudget(triples=1), "additive2",
                       CFG, seed=1)
        assert HEADER.size == 32
        path = tmp_path / "party0_triple.mpm"
        # additive triple record: 3 columns of 1 component, 8 bytes each
        assert path.stat().st_size == 32 + 1 * 3 * 8

    def test_wrong_config_rejected(self, tmp_path):
        write_material(str(tmp_path), RandomnessBudget(triples=2), "rss3", CFG, seed=1)
        with pytest.raises(SchemaError):
            load_material(str(tmp_path), 0, "rss3", FixedPointConfig(f=14))

    def test_wrong_scheme_rejected(self, tmp_path):
        write_material(str(tmp_path), RandomnessBudget(triples=2), "rss3", CFG, seed=1)
        with pytest.raises(SchemaError):
            load_material(str(tmp_path), 0, "additive2", CFG)

    def test_corrupt_magic_rejected(self, tmp_path):
        write_material(str(tmp_path), RandomnessBudget(triples=2), "additive2",
                       CFG, seed=1)
        path = tmp_path / "party0_triple.mpm"
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(SchemaError):
            load_material(str(tmp_path), 0, "additive2", CFG)

    def test_truncated_body_rejected(self, tmp_path):
        write_material(str(tmp_path), RandomnessBudget(triples=4), "additive2",
                       CFG, seed=1)
        path = tmp_path / "party0_triple.mpm"
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SchemaError):
            load_material(str(tmp_path), 0, "additive2", CFG)

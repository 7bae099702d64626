"""Engine operations under both backends: multiplication, truncation,
comparison, ReLU, square root, and the dry-run budget counter."""

import numpy as np
import pytest

from xvsmc.engine import CountingEngine, SecretArray
from xvsmc.errors import UsageError
from xvsmc.preprocessing import MODE_DET, MODE_PROB, RandomnessBudget, \
    deal_in_memory, gen_triples
from xvsmc.ring import MODULUS, FixedPointConfig, decode_fixed, encode_fixed, \
    from_signed, to_signed
from xvsmc.sharing import reconstruct_additive, reconstruct_replicated

from conftest import SCHEMES, rng_for, run_parties

CFG = FixedPointConfig()


def big_budget(n_triples=200_000, n_trunc=20_000, n_bits=20_000,
               shifts=tuple(range(1, 24)) + (2 * CFG.f,),
               modes=(MODE_DET, MODE_PROB)):
    budget = RandomnessBudget(triples=n_triples, bit_randoms=n_bits)
    for mode in modes:
        for shift in shifts:
            budget.add_trunc(mode, shift, n_trunc)
    return budget


def run_op(scheme, fn, budget=None, seed=1234):
    """Run ``fn(engine, party_id)`` on all parties; returns per-party results."""
    results, sessions, pools = run_parties(
        scheme, budget or big_budget(), CFG, fn, seed=seed)
    return results, sessions, pools


def shared_values(eng, values, frac=0):
    """Deal python-side values into the protocol via seeded input sharing."""
    arr = np.asarray(values, dtype=np.uint64)
    mine = arr if eng.party_id == 0 else None
    return eng.share_input(0, mine, arr.shape, frac)


class TestBeaverAlgebra:
    def test_identity_against_wide_integer_oracle(self):
        """z = ef + f*a + e*b + c reconstructs to x*y, checked with python ints."""
        rng = rng_for("beaver_oracle")
        n = 500
        triples = gen_triples(n, "additive2", rng)
        xs = rng.integers(0, MODULUS, n, dtype=np.uint64)
        ys = rng.integers(0, MODULUS, n, dtype=np.uint64)
        x_sh = [rng.integers(0, MODULUS, n, dtype=np.uint64)]
        x_sh.append(xs - x_sh[0])
        y_sh = [rng.integers(0, MODULUS, n, dtype=np.uint64)]
        y_sh.append(ys - y_sh[0])
        for i in range(n):
            a = int(reconstruct_additive(triples[i].a))
            b = int(reconstruct_additive(triples[i].b))
            e = (int(xs[i]) - a) % MODULUS
            f = (int(ys[i]) - b) % MODULUS
            z = 0
            for p in range(2):
                term = f * int(triples[i].a[p].value) + e * int(triples[i].b[p].value) \
                    + int(triples[i].c[p].value)
                if p == 0:
                    term += e * f
                z += term
            assert z % MODULUS == (int(xs[i]) * int(ys[i])) % MODULUS


class TestMultiplication:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_elementwise_mul_matches_ring_product(self, scheme):
        rng = rng_for(f"mul_{scheme}")
        xs = rng.integers(0, MODULUS, 2000, dtype=np.uint64)
        ys = rng.integers(0, MODULUS, 2000, dtype=np.uint64)

        def fn(eng, i):
            x = shared_values(eng, xs)
            y = shared_values(eng, ys)
            return eng.open(eng.mul(x, y))

        results, _, _ = run_op(scheme, fn)
        np.testing.assert_array_equal(results[0], xs * ys)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_matmul_matches_ring_matrix_product(self, scheme):
        rng = rng_for(f"matmul_{scheme}")
        xs = rng.integers(0, MODULUS, (7, 5), dtype=np.uint64)
        ys = rng.integers(0, MODULUS, (5, 6), dtype=np.uint64)

        def fn(eng, i):
            return eng.open(eng.matmul(shared_values(eng, xs), shared_values(eng, ys)))

        results, _, _ = run_op(scheme, fn)
        np.testing.assert_array_equal(results[0], xs @ ys)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_dot_matches_inner_product(self, scheme):
        rng = rng_for(f"dot_{scheme}")
        xs = rng.integers(0, MODULUS, 64, dtype=np.uint64)
        ys = rng.integers(0, MODULUS, 64, dtype=np.uint64)

        def fn(eng, i):
            return eng.open(eng.dot(shared_values(eng, xs), shared_values(eng, ys)))

        results, _, _ = run_op(scheme, fn)
        assert int(results[0]) == int((xs * ys).sum(dtype=np.uint64))

    def test_rss_local_partials_reconstruct_product(self):
        """The three local multiply partials sum to x*y before any re-share."""
        from xvsmc.sharing import share_replicated
        rng = rng_for("rss_partials")
        n = 10_000
        xs = rng.integers(0, MODULUS, n, dtype=np.uint64)
        ys = rng.integers(0, MODULUS, n, dtype=np.uint64)
        xsh = share_replicated(xs, rng)
        ysh = share_replicated(ys, rng)
        total = np.zeros(n, dtype=np.uint64)
        for i in range(3):
            x0, x1 = xsh[i].pair
            y0, y1 = ysh[i].pair
            total = total + (x0 * y0 + x0 * y1 + x1 * y0)
        np.testing.assert_array_equal(total, xs * ys)


class TestLinearOps:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_add_sub_neg_public_ops(self, scheme):
        rng = rng_for(f"linear_{scheme}")
        xs = rng.integers(0, MODULUS, 50, dtype=np.uint64)
        ys = rng.integers(0, MODULUS, 50, dtype=np.uint64)
        c = np.uint64(12345)

        def fn(eng, i):
            x = shared_values(eng, xs)
            y = shared_values(eng, ys)
            return {
                "add": eng.open(eng.add(x, y)),
                "sub": eng.open(eng.sub(x, y)),
                "neg": eng.open(eng.neg(x)),
                "addc": eng.open(eng.add_public(x, c)),
                "mulc": eng.open(eng.mul_public(x, c)),
                "sum": eng.open(eng.sum(x)),
            }

        results, _, _ = run_op(scheme, fn)
        r = results[0]
        np.testing.assert_array_equal(r["add"], xs + ys)
        np.testing.assert_array_equal(r["sub"], xs - ys)
        np.testing.assert_array_equal(r["neg"], np.zeros_like(xs) - xs)
        np.testing.assert_array_equal(r["addc"], xs + c)
        np.testing.assert_array_equal(r["mulc"], xs * c)
        assert int(r["sum"]) == int(xs.sum(dtype=np.uint64))

    def test_scale_mismatch_raises(self):
        def fn(eng, i):
            x = shared_values(eng, [1, 2], frac=15)
            y = shared_values(eng, [3, 4], frac=14)
            with pytest.raises(UsageError):
                eng.add(x, y)
            return True

        run_op("additive2", fn, budget=RandomnessBudget())

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_open_to_single_recipient(self, scheme):
        xs = np.array([42, 7], dtype=np.uint64)

        def fn(eng, i):
            return eng.open(shared_values(eng, xs), to=1)

        results, _, _ = run_op(scheme, fn, budget=RandomnessBudget())
        np.testing.assert_array_equal(results[1], xs)
        assert all(results[i] is None for i in results if i != 1)


class TestTruncation:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_deterministic_matches_arithmetic_shift_exactly(self, scheme):
        rng = rng_for(f"trunc_det_{scheme}")
        vals = rng.integers(-(1 << 30), 1 << 30, 5000, dtype=np.int64)
        ring = from_signed(vals)

        def fn(eng, i):
            x = shared_values(eng, ring, frac=2 * CFG.f)
            return eng.open(eng.truncate(x, CFG.f, MODE_DET))

        results, _, _ = run_op(scheme, fn)
        np.testing.assert_array_equal(to_signed(results[0]), vals >> CFG.f)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_wide_products_truncate_exactly(self, scheme):
        """Double-precision accumulators (frac 2f) keep deterministic exactness."""
        rng = rng_for(f"trunc_wide_{scheme}")
        vals = rng.integers(-(1 << 45), 1 << 45, 5000, dtype=np.int64)
        ring = from_signed(vals)

        def fn(eng, i):
            x = shared_values(eng, ring, frac=2 * CFG.f)
            return eng.open(eng.truncate(x, CFG.f, MODE_DET))

        results, _, _ = run_op(scheme, fn)
        np.testing.assert_array_equal(to_signed(results[0]), vals >> CFG.f)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_probabilistic_error_at_most_one_lsb(self, scheme):
        rng = rng_for(f"trunc_prob_{scheme}")
        vals = rng.integers(-(1 << 30), 1 << 30, 5000, dtype=np.int64)
        ring = from_signed(vals)

        def fn(eng, i):
            x = shared_values(eng, ring, frac=2 * CFG.f)
            return eng.open(eng.truncate(x, CFG.f, MODE_PROB))

        results, _, _ = run_op(scheme, fn)
        err = to_signed(results[0]) - (vals >> CFG.f)
        assert set(np.unique(err)) <= {0, 1}

    def test_round_to_nearest_variant(self):
        vals = np.array([3 << 14, (3 << 14) - 1, -(3 << 14)], dtype=np.int64)
        ring = from_signed(vals)

        def fn(eng, i):
            x = shared_values(eng, ring, frac=CFG.f)
            return eng.open(eng.truncate_round(x, CFG.f, MODE_DET))

        results, _, _ = run_op("rss3", fn)
        # 1.5 rounds to 2 (ties up), just below 1.5 rounds to 1, -1.5 to -1
        np.testing.assert_array_equal(to_signed(results[0]), [2, 1, -1])


class TestComparison:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_ltz_matches_sign_oracle(self, scheme):
        rng = rng_for(f"ltz_{scheme}")
        vals = rng.integers(-(1 << 31) + 1, 1 << 31, 3000, dtype=np.int64)
        edge = np.array([0, 1, -1, (1 << 31) - 1, -(1 << 31) + 1], dtype=np.int64)
        vals = np.concatenate([edge, vals])
        ring = from_signed(vals)

        def fn(eng, i):
            return eng.open(eng.ltz(shared_values(eng, ring, frac=CFG.f)))

        results, _, _ = run_op(scheme, fn)
        np.testing.assert_array_equal(results[0], (vals < 0).astype(np.uint64))

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_relu_matches_oracle(self, scheme):
        rng = rng_for(f"relu_{scheme}")
        vals = rng.uniform(-100, 100, 500)
        ring = encode_fixed(vals, CFG)

        def fn(eng, i):
            return eng.open(eng.relu(shared_values(eng, ring, frac=CFG.f)))

        results, _, _ = run_op(scheme, fn)
        got = decode_fixed(results[0], CFG)
        want = np.maximum(decode_fixed(ring, CFG), 0.0)
        np.testing.assert_allclose(got, want, atol=0)


class TestSqrt:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_known_values(self, scheme):
        vals = np.array([4.0, 2.0, 1.0, 0.25, 100.0, 2.0 ** -15])
        ring = encode_fixed(vals, CFG)

        def fn(eng, i):
            return eng.open(eng.sqrt(shared_values(eng, ring, frac=CFG.f)))

        results, _, _ = run_op(scheme, fn)
        got = decode_fixed(results[0], CFG)
        want = np.sqrt(decode_fixed(ring, CFG))
        assert abs(got[0] - 2.0) <= 1e-3
        assert abs(got[1] - 1.41421) <= 1e-3
        np.testing.assert_allclose(got, want, atol=2 ** -CFG.f, rtol=1e-3)

    def test_sqrt_of_zero_is_zero(self):
        def fn(eng, i):
            return eng.open(eng.sqrt(shared_values(eng, np.zeros(3, dtype=np.uint64),
                                                   frac=CFG.f)))

        results, _, _ = run_op("rss3", fn)
        np.testing.assert_array_equal(to_signed(results[0]), 0)


class TestCrossScheme:
    def test_deterministic_ops_agree_bit_for_bit(self):
        rng = rng_for("cross_scheme")
        vals = rng.uniform(-50, 50, 200)
        ring = encode_fixed(vals, CFG)
        pos = encode_fixed(np.abs(vals) + 0.5, CFG)

        def fn(eng, i):
            x = shared_values(eng, ring, frac=CFG.f)
            p = shared_values(eng, pos, frac=CFG.f)
            y = eng.truncate(eng.mul(x, x), CFG.f, MODE_DET)
            return {
                "square": eng.open(y),
                "relu": eng.open(eng.relu(x)),
                "sqrt": eng.open(eng.sqrt(p, MODE_DET)),
            }

        res_a, _, _ = run_op("additive2", fn, seed=42)
        res_r, _, _ = run_op("rss3", fn, seed=43)
        for key in res_a[0]:
            np.testing.assert_array_equal(res_a[0][key], res_r[0][key])


class TestObliviousness:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_ledger_is_input_independent(self, scheme):
        rng = rng_for(f"oblivious_{scheme}")

        def run_with(vals, seed):
            ring = encode_fixed(vals, CFG)

            def fn(eng, i):
                x = shared_values(eng, ring, frac=CFG.f)
                y = eng.relu(eng.truncate(eng.mul(x, x), CFG.f, MODE_DET))
                return eng.open(eng.sum(y))

            _, sessions, _ = run_op(scheme, fn, seed=seed)
            return [s.report_ledger()["phases"]["online"] for s in sessions]

        first = run_with(rng.uniform(-10, 10, 100), seed=1)
        second = run_with(rng.uniform(-10, 10, 100), seed=2)
        assert first == second


class TestBudgetCounting:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_prediction_equals_consumption_exactly(self, scheme):
        rng = rng_for(f"budget_{scheme}")
        vals = rng.uniform(-10, 10, 64)
        ring = encode_fixed(vals, CFG)
        pos = encode_fixed(np.abs(vals) + 1.0, CFG)

        def schedule(eng):
            x = eng.share_input(0, ring if eng.party_id == 0 else None,
                                ring.shape, CFG.f)
            p = eng.share_input(0, pos if eng.party_id == 0 else None,
                                pos.shape, CFG.f)
            y = eng.truncate(eng.mul(x, x), CFG.f, MODE_DET)
            z = eng.relu(y)
            w = eng.sqrt(p, MODE_PROB)
            return eng.open(eng.add(z, w))

        counter = CountingEngine(scheme, CFG)
        schedule(counter)
        predicted = counter.budget

        def fn(eng, i):
            return schedule(eng)

        _, _, pools = run_parties(scheme, predicted, CFG, fn, seed=77)
        for pool in pools:
            assert pool.consumption() == predicted

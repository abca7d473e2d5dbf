import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fairspk import metrics
from fairspk.metrics import (
    DEFAULT_FAR_GRID,
    DEFAULT_OMEGAS,
    FadrCurve,
    FadrParams,
    GroupErrorRates,
    au_fadr,
    au_fadr_from_arrays,
    eer,
    fadr,
    fadr_curve,
    far_at,
    frr_at,
    group_error_curves,
    threshold_for_pooled_far,
    trapezoid,
)
from fairspk.scoring import ScorePartition


def part_from(gen1, gen2, imp1, imp2):
    return ScorePartition(np.asarray(gen1, float), np.asarray(gen2, float),
                          np.asarray(imp1, float), np.asarray(imp2, float))


def test_default_grid_and_omegas():
    assert DEFAULT_FAR_GRID.size == 37
    assert DEFAULT_FAR_GRID[0] == 1.0 and DEFAULT_FAR_GRID[-1] == 10.0
    np.testing.assert_allclose(np.diff(DEFAULT_FAR_GRID), 0.25)
    assert DEFAULT_OMEGAS == (1.0, 0.75, 0.5, 0.25, 0.0)


class TestRates:
    def test_hand_counts(self):
        s = [0.1, 0.5, 0.9]
        assert far_at(s, 0.5) == pytest.approx(2 / 3)
        assert frr_at(s, 0.5) == pytest.approx(1 / 3)
        assert far_at(s, -5) == 1.0 and far_at(s, 5) == 0.0
        assert frr_at(s, -5) == 0.0 and frr_at(s, 5) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            far_at([], 0.0)

    def test_monotone(self, rng):
        s = np.round(rng.normal(size=200), 1)
        taus = np.concatenate([[-np.inf], np.unique(s), [np.inf]])
        fa = [far_at(s, t) for t in taus]
        fr = [frr_at(s, t) for t in taus]
        assert all(a >= b for a, b in zip(fa, fa[1:]))
        assert all(a <= b for a, b in zip(fr, fr[1:]))


class TestThreshold:
    def _part(self, pooled):
        half = len(pooled) // 2
        return part_from([1.0], [1.0], pooled[:half], pooled[half:])

    def test_ten_scores(self):
        pooled = [i / 10 for i in range(10)]
        op = threshold_for_pooled_far(self._part(pooled), 0.10)
        assert op.tau == 0.9 and op.pooled_far == pytest.approx(0.10)

    def test_target_one(self):
        op = threshold_for_pooled_far(self._part([0.3, 0.1, 0.7, 0.2]), 1.0)
        assert op.tau == 0.1 and op.pooled_far == 1.0

    def test_below_resolution(self):
        op = threshold_for_pooled_far(self._part([0.3, 0.1, 0.7, 0.2]), 0.1)
        assert op.tau == np.inf and op.pooled_far == 0.0

    def test_ties_never_exceed_target(self):
        pooled = [0.5] * 6 + [0.1] * 4
        op = threshold_for_pooled_far(self._part(pooled), 0.3)
        assert op.pooled_far <= 0.3
        assert op.tau == np.inf

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=2, max_size=40), st.floats(0.001, 1.0))
    def test_matches_oracle(self, ints, target):
        pooled = [v / 5 for v in ints]
        op = threshold_for_pooled_far(self._part(pooled), target)
        assert op.tau == oracles.threshold_for_far(pooled, target)


class TestFadr:
    def test_equal_rates(self):
        r = GroupErrorRates(0.2, 0.2, 0.1, 0.1)
        for w in (0.0, 0.3, 1.0):
            assert fadr(r, FadrParams(w)) == 1.0

    def test_hand_values(self):
        r = GroupErrorRates(0.10, 0.04, 0.02, 0.05)
        assert fadr(r, FadrParams(0.5)) == pytest.approx(0.955, abs=1e-15)
        assert fadr(r, FadrParams(1.0)) == pytest.approx(0.94, abs=1e-15)
        assert fadr(r, FadrParams(0.0)) == pytest.approx(0.97, abs=1e-15)

    def test_omega_range(self):
        with pytest.raises(ValueError):
            FadrParams(1.5)

    @settings(max_examples=300, deadline=None)
    @given(st.tuples(*[st.floats(0, 1)] * 4), st.floats(0, 1))
    def test_properties(self, rates, w):
        r = GroupErrorRates(*rates)
        v = fadr(r, FadrParams(w))
        assert 0.0 <= v <= 1.0
        assert fadr(r.swapped(), FadrParams(w)) == v
        affine = w * fadr(r, FadrParams(1.0)) + (1 - w) * fadr(r, FadrParams(0.0))
        assert v == pytest.approx(affine, abs=1e-12)


class TestCurve:
    def test_identical_groups_constant_100(self, rng):
        g, i = rng.normal(0.6, 0.2, 50), rng.normal(0, 0.2, 300)
        part = part_from(g, g, i, i)
        for w in DEFAULT_OMEGAS:
            curve = fadr_curve(part, FadrParams(w))
            np.testing.assert_array_equal(curve.fadr_percent, 100.0)
            assert au_fadr(curve) == pytest.approx(900.0, abs=1e-6)

    def test_single_point(self, rng):
        cells = oracles.random_score_set(rng, 200)
        part = part_from(*cells)
        curve = fadr_curve(part, FadrParams(0.5), [10.0])
        tau = threshold_for_pooled_far(part, 0.10).tau
        expect = 100 * fadr(metrics.group_rates(part, tau), FadrParams(0.5))
        assert curve.fadr_percent[0] == pytest.approx(expect, abs=1e-12)
        assert curve.taus[0] == tau

    def test_toy_four_per_cell_vs_oracle(self):
        gen1, gen2 = [0.9, 0.8, 0.4, 0.7], [0.95, 0.6, 0.5, 0.85]
        imp1, imp2 = [0.3, 0.5, 0.2, 0.6], [0.1, 0.0, 0.4, -0.2]
        grid = np.array([10.0, 12.5, 25.0, 50.0, 100.0])
        for w in (0.0, 0.5, 1.0):
            got = fadr_curve(part_from(gen1, gen2, imp1, imp2), FadrParams(w), grid).fadr_percent
            ref = oracles.fadr_curve(gen1, gen2, imp1, imp2, w, grid)
            np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

    def test_random_vs_oracle(self, rng):
        for _ in range(15):
            cells = oracles.random_score_set(rng, 300)
            part = part_from(*cells)
            w = float(rng.choice(DEFAULT_OMEGAS))
            got = fadr_curve(part, FadrParams(w))
            ref = oracles.fadr_curve(*cells, w, DEFAULT_FAR_GRID)
            np.testing.assert_allclose(got.fadr_percent, ref, rtol=0, atol=1e-12)
            assert au_fadr(got) == pytest.approx(oracles.trapezoid(list(DEFAULT_FAR_GRID), ref), abs=1e-12)
            assert np.all(got.achieved_far <= DEFAULT_FAR_GRID / 100)

    def test_grid_validation(self, rng):
        part = part_from(*oracles.random_score_set(rng, 40))
        for bad in ([], [0.0, 1.0], [2.0, 1.0], [50.0, 101.0]):
            with pytest.raises(ValueError):
                fadr_curve(part, FadrParams(1.0), bad)

    def test_empty_cell(self):
        with pytest.raises(ValueError):
            fadr_curve(part_from([1.0], [], [0.0], [0.1]), FadrParams(1.0))


class TestArea:
    def _curve(self, x, y):
        x = np.asarray(x, float)
        return FadrCurve(x, np.asarray(y, float), np.zeros_like(x), np.zeros_like(x))

    def test_constants(self):
        assert au_fadr(self._curve(DEFAULT_FAR_GRID, np.full(37, 100.0))) == pytest.approx(900.0, abs=1e-9)
        assert au_fadr(self._curve(DEFAULT_FAR_GRID, np.full(37, 50.0))) == pytest.approx(450.0, abs=1e-9)
        assert au_fadr(self._curve([1, 10], [100, 0])) == 450.0

    def test_trapezoid_matches_numpy(self, rng):
        x = np.sort(rng.random(20))
        y = rng.random(20)
        assert trapezoid(x, y) == pytest.approx(np.trapezoid(y, x), abs=1e-14)

    def test_bound(self, rng):
        for _ in range(50):
            cells = oracles.random_score_set(rng, 200)
            assert au_fadr(fadr_curve(part_from(*cells), FadrParams(rng.random()))) <= 900 + 1e-9

    def test_from_arrays_matches(self, rng):
        for _ in range(20):
            cells = oracles.random_score_set(rng, 400)
            scores = np.concatenate(cells)
            genuine = np.repeat([True, True, False, False], [c.size for c in cells])
            groups = np.repeat([0, 1, 0, 1], [c.size for c in cells])
            perm = rng.permutation(scores.size)
            w = rng.random()
            a = au_fadr_from_arrays(scores[perm], genuine[perm], groups[perm], w)
            b = au_fadr(fadr_curve(part_from(*cells), FadrParams(w)))
            assert a == pytest.approx(b, abs=1e-12)


class TestEer:
    def test_hand_example(self):
        e, tau = eer([0.9, 0.8, 0.7, 0.2], [0.6, 0.3, 0.1, 0.05])
        assert e == 0.25 and tau == 0.6

    def test_separated(self):
        assert eer([0.8, 0.9], [0.1, 0.2])[0] == 0.0

    def test_identical(self, rng):
        s = rng.normal(size=101)
        assert eer(s, s)[0] == pytest.approx(0.5, abs=1 / 101)

    def test_vs_oracle_and_gap_bound(self, rng):
        for _ in range(40):
            gen1, gen2, imp1, imp2 = oracles.random_score_set(rng, 300)
            gen, imp = np.concatenate([gen1, gen2]), np.concatenate([imp1, imp2])
            e, tau = eer(gen, imp)
            assert (e, tau) == oracles.eer(list(gen), list(imp))

    def test_gap_bound_without_ties(self, rng):
        # a tied block can move FAR by more than 1/N, so use continuous scores here
        for _ in range(40):
            gen, imp = rng.normal(0.5, 0.3, rng.integers(1, 200)), rng.normal(0, 0.3, rng.integers(1, 200))
            e, tau = eer(gen, imp)
            assert abs(far_at(imp, tau) - frr_at(gen, tau)) <= max(1 / gen.size, 1 / imp.size) + 1e-15


class TestGroupCurves:
    def test_identical_groups(self, rng):
        g, i = rng.normal(0.6, 0.2, 40), rng.normal(0, 0.2, 200)
        gc = group_error_curves(part_from(g, g, i, i))
        np.testing.assert_array_equal(gc.far_g1, gc.far_g2)
        np.testing.assert_array_equal(gc.frr_g1, gc.frr_g2)

    def test_dominance(self, rng):
        imp2 = rng.normal(0, 0.2, 300)
        gc = group_error_curves(part_from([0.9], [0.9], imp2 + 0.3, imp2))
        assert np.all(gc.far_g1 >= gc.far_g2)

    def test_vs_oracle(self, rng):
        for _ in range(10):
            cells = oracles.random_score_set(rng, 300)
            gc = group_error_curves(part_from(*cells))
            ref = np.array(oracles.group_curves(*cells, DEFAULT_FAR_GRID))
            got = np.column_stack([gc.far_g1, gc.far_g2, gc.frr_g1, gc.frr_g2])
            np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermo1d import BudgetError, make_builtin, make_intermittent
from thermo1d.backward import build_tree, tree_pressure
from thermo1d.errors import ConstructionError, DivergenceError, InfeasibleError, PreconditionError
from thermo1d.potentials import constant, cosine, expression, holder_modulus
from thermo1d.pullbacks import (build_imfs, distortion_constant, empirical_distortion, fre_constants,
                                imfs_freeness_check, imfs_from_intervals, imfs_pressure_lower_bound,
                                interval_pullbacks, shrinking_fit, zeta_tail_sum)

LOG2 = math.log(2.0)
GOLDEN = math.log((1 + math.sqrt(5)) / 2)


class TestPullbacks:
    def test_doubling_one_step(self, doubling):
        pbs = interval_pullbacks(doubling, (0.4, 0.6), 1)
        assert [p.interval for p in pbs] == [pytest.approx((0.2, 0.3)), pytest.approx((0.7, 0.8))]

    def test_doubling_five_steps(self, doubling):
        pbs = interval_pullbacks(doubling, (0.4, 0.6), 5)
        assert len(pbs) == 32
        assert np.allclose([p.diameter for p in pbs], 0.2 / 32, atol=1e-15)

    def test_tent_merges_at_turning_point(self, tent):
        pbs = interval_pullbacks(tent, (0.9, 1.0), 1)
        assert len(pbs) == 1
        assert pbs[0].interval == pytest.approx((0.45, 0.55))
        assert len(interval_pullbacks(tent, (0.9, 1.0), 1, merge=False)) == 2

    def test_doubling_does_not_merge_at_cut(self, doubling):
        pbs = interval_pullbacks(doubling, (0.0, 1.0), 1)
        assert len(pbs) == 2

    def test_surjective_flag(self, doubling):
        pbs = interval_pullbacks(doubling, (0.0, 1.0), 2)
        assert all(p.surjective for p in pbs)

    def test_budget(self, doubling):
        with pytest.raises(BudgetError):
            interval_pullbacks(doubling, (0.4, 0.6), 12, budget=1000)

    def test_bad_target(self, doubling):
        with pytest.raises(Exception):
            interval_pullbacks(doubling, (0.6, 0.4), 2)


class TestShrinking:
    def test_doubling_exact_halving(self, doubling):
        fit = shrinking_fit(doubling, 0.5, 0.1, 14)
        assert np.allclose(fit.max_diams, 0.2 * 0.5 ** np.arange(1, 15), rtol=1e-9)
        assert fit.super_polynomial

    def test_tent_super_polynomial(self, tent):
        assert shrinking_fit(tent, 0.5, 0.05, 14).super_polynomial

    def test_intermittent_exponent(self, intermittent):
        fit = shrinking_fit(intermittent, 0.25, 0.2, 14)
        assert abs(fit.beta_hat - 2.0) <= 0.5
        assert not fit.super_polynomial

    def test_intermittent_slowest_piece_near_neutral_point(self, intermittent):
        # oracle: iterate the left inverse branch from the target's lower end
        lo = 0.05
        left = intermittent.branches[0]
        y = lo
        for _ in range(14):
            y = float(left.invert(np.array([y]))[0])
        pbs = interval_pullbacks(intermittent, (0.05, 0.45), 14)
        first = min(pbs, key=lambda p: p.lo)
        assert first.lo == pytest.approx(y, abs=1e-12)

    def test_precondition(self, doubling):
        with pytest.raises(PreconditionError):
            shrinking_fit(doubling, 0.5, 0.1, 5)


class TestDistortion:
    def test_zeta_two(self):
        assert zeta_tail_sum(2.0) == pytest.approx(math.pi ** 2 / 6, abs=1e-10)

    def test_constant_series(self):
        assert distortion_constant(2, 1.5, 1, 2) == pytest.approx(2 * 1.5 * math.pi ** 2 / 6, abs=1e-8)

    def test_zero(self):
        assert distortion_constant(0, 1.5, 1, 2) == 0.0

    def test_divergent(self):
        with pytest.raises(DivergenceError):
            distortion_constant(1, 1, 0.5, 2)

    def test_empirical_constant_potential(self, doubling):
        assert empirical_distortion(doubling, constant(0.7), 0.5, 0.1, 8) == 0.0

    def test_empirical_identity(self, doubling):
        val = empirical_distortion(doubling, expression("x", 1.0), 0.5, 0.1, 12)
        assert val < 0.2
        assert val == pytest.approx(0.2 * (1 - 2.0 ** -12), abs=1e-9)

    def test_intermittent_cross_module(self, intermittent):
        phi = cosine(1, 1)
        val = empirical_distortion(intermittent, phi, 0.25, 0.2, 12)
        fit = shrinking_fit(intermittent, 0.25, 0.2, 14)
        bound = distortion_constant(holder_modulus(phi), fit.C_hat, 1.0, fit.beta_hat)
        assert math.isfinite(val)
        assert val <= bound


class TestImfs:
    def test_doubling_full_branch(self, doubling):
        (e,) = build_imfs(doubling, constant(0.0), (0, 1), [1])
        assert e.time == 1
        assert e.pullback.interval in [pytest.approx((0, 0.5)), pytest.approx((0.5, 1))]

    def test_doubling_dyadic(self, doubling):
        (e,) = build_imfs(doubling, constant(0.0), (0, 0.5), [2])
        assert e.pullback.interval == pytest.approx((0, 0.125))
        assert doubling.iterate(0.125, 2)[-1] == pytest.approx(0.5)

    def test_tent_first_by_word(self, tent):
        (e,) = build_imfs(tent, constant(0.0), (0, 1), [1])
        assert e.pullback.interval == pytest.approx((0, 0.5))
        assert e.pullback.word == (0,)

    def test_skipped_time_warns(self, doubling):
        with pytest.warns(UserWarning):
            els = build_imfs(doubling, constant(0.0), (0.3, 0.4), [1, 4])
        assert [e.time for e in els] == [4]

    def test_nothing_buildable(self, doubling):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ConstructionError):
                build_imfs(doubling, constant(0.0), (0.3, 0.4), [1])

    def test_freeness_single(self, doubling):
        els = build_imfs(doubling, constant(0.0), (0, 1), [1])
        assert imfs_freeness_check(doubling, els, 0.3, 8, 8) == (True, None)

    def test_not_free_witness(self, doubling):
        els = imfs_from_intervals(doubling, constant(0.0), (0, 1), [((0, 0.5), 1), ((0, 0.25), 2)])
        free, witness = imfs_freeness_check(doubling, els, 0.0, 4, 4)
        assert not free
        assert witness == ((1, 1), (2,))

    def test_free_pair(self, doubling):
        els = imfs_from_intervals(doubling, constant(0.0), (0, 1), [((0, 0.5), 1), ((0.5, 0.75), 2)])
        free, witness = imfs_freeness_check(doubling, els, 0.3, 8, 8)
        assert free and witness is None
        bound = imfs_pressure_lower_bound(els, *fre_constants(els))
        assert bound <= LOG2 + 1e-9

    def test_bad_piece(self, doubling):
        with pytest.raises(ConstructionError):
            imfs_from_intervals(doubling, constant(0.0), (0, 1), [((0, 0.4), 1)])

    def test_bound_single(self):
        assert imfs_pressure_lower_bound([1], 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_bound_golden(self):
        assert imfs_pressure_lower_bound([1, 2], 0.0, 0.0) == pytest.approx(GOLDEN, abs=1e-9)

    def test_bound_preconditions(self):
        with pytest.raises(PreconditionError):
            imfs_pressure_lower_bound([], 0.0)
        with pytest.raises(PreconditionError):
            imfs_pressure_lower_bound([1], 0.0, -1.0)

    def test_bound_infeasible(self):
        # Phi(e^{-I}) = e^{-D} < 1 for one element
        with pytest.raises(InfeasibleError):
            imfs_pressure_lower_bound([1], 0.0, 1.0)


def _soundness_cases():
    for name, phi, B0, times in itertools.product(
            ["doubling", "tent"], ["zero", "cos", "x"], [(0.0, 1.0), (0.0, 0.5), (0.25, 0.75)],
            [[1, 2], [2, 3], [1, 3], [2, 4], [3, 4, 5]]):
        yield name, phi, B0, times


POTENTIALS = {"zero": constant(0.0), "cos": cosine(1, 1), "x": expression("x", 1.0)}


@pytest.mark.property
class TestInvariants:
    @pytest.mark.parametrize("name", ["doubling", "tent", "intermittent"])
    @given(c=st.floats(0.05, 0.95), r=st.floats(0.01, 0.2), n=st.integers(1, 7))
    def test_nesting(self, name, c, r, n):
        fmap = make_intermittent(0.5) if name == "intermittent" else make_builtin(name)
        target = (max(0.0, c - r), min(1.0, c + r))
        outer = interval_pullbacks(fmap, target, n)
        inner = interval_pullbacks(fmap, target, n + 1)
        tol = 1e-9
        for w in inner:
            # interior samples only: an endpoint on a cut is evaluated by the other branch
            img = fmap.evaluate(w.lo + (w.hi - w.lo) * np.linspace(1e-9, 1 - 1e-9, 9))
            lo, hi = img.min(), img.max()
            hits = [p for p in outer if p.lo - tol <= lo and hi <= p.hi + tol]
            assert len(hits) == 1

    @pytest.mark.parametrize("name", ["doubling", "tent", "intermittent", "chebyshev-like"])
    @given(c=st.floats(0.05, 0.95), r=st.floats(0.01, 0.2), n=st.integers(1, 6))
    def test_word_consistency(self, name, c, r, n):
        fmap = make_intermittent(0.5) if name == "intermittent" else make_builtin(name)
        target = (max(0.0, c - r), min(1.0, c + r))
        for p in interval_pullbacks(fmap, target, n):
            y = fmap.iterate(0.5 * (p.lo + p.hi), n)[-1]
            assert target[0] - 1e-9 <= y <= target[1] + 1e-9

    def test_lower_bound_soundness(self):
        free_seen = 0
        for name, pk, B0, times in _soundness_cases():
            fmap = make_builtin(name)
            phi = POTENTIALS[pk]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    els = build_imfs(fmap, phi, B0, times)
                except ConstructionError:
                    continue
            x0 = 0.5 * (B0[0] + B0[1]) + 1e-3
            free, _ = imfs_freeness_check(fmap, els, x0, 8, 8)
            if not free:
                continue
            free_seen += 1
            I, D = fre_constants(els)
            try:
                bound = imfs_pressure_lower_bound(els, I, D)
            except InfeasibleError:
                continue
            slope = tree_pressure(build_tree(fmap, phi, 0.3, 14)).value
            assert bound <= slope + 0.02, (name, pk, B0, times)
        assert free_seen >= 5

    @given(c=st.floats(0.1, 5), c0=st.floats(0.1, 5), a=st.floats(0.5, 1.0), b=st.floats(2.1, 6),
           d=st.floats(0.01, 1.0))
    def test_distortion_monotone(self, c, c0, a, b, d):
        base = distortion_constant(c, c0, a, b)
        assert distortion_constant(c + d, c0, a, b) > base
        assert distortion_constant(c, c0 * (1 + d), a, b) > base
        assert distortion_constant(c, c0, a, b + d) < base

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from thermo1d import BudgetError, PreconditionError, SingularityError, make_builtin
from thermo1d.backward import (build_tree, max_backward_birkhoff, nudge_base, periodic_gap_check, tree_pressure,
                               verify_tree)
from thermo1d.potentials import constant, cosine, geometric
from thermo1d.transfer import pressure_operator

LOG2 = math.log(2.0)


class TestBuildTree:
    def test_full_binary_tree(self, doubling):
        tree = build_tree(doubling, constant(0.0), 0.3, 10)
        assert tree.leaf_counts[-1] == 1024
        assert tree.log_z[-1] == pytest.approx(10 * LOG2, abs=1e-12)

    def test_geometric_weights(self, doubling):
        tree = build_tree(doubling, geometric(doubling, 1.0), 0.3, 10)
        assert tree.log_z[-1] == pytest.approx(0.0, abs=1e-12)

    def test_intermittent_forward_verification(self, intermittent):
        tree = build_tree(intermittent, constant(0.0), 0.3, 3)
        assert tree.points.size == 8
        assert verify_tree(intermittent, tree) <= 1e-8

    def test_levels_verify_stepwise(self, intermittent):
        # each level maps onto the previous one to 1e-8; full-depth composition amplifies rounding
        tree = build_tree(intermittent, constant(0.0), 0.3, 16, keep_levels=True)
        for (prev, _), (cur, _) in zip(tree.levels, tree.levels[1:]):
            img = intermittent.evaluate(cur)
            j = np.clip(np.searchsorted(prev, img), 1, prev.size - 1) if prev.size > 1 else np.zeros(img.size, int)
            near = np.minimum(np.abs(img - prev[j]), np.abs(img - prev[np.maximum(j - 1, 0)]))
            assert near.max() <= 1e-8

    def test_budget(self, doubling):
        with pytest.raises(BudgetError) as info:
            build_tree(doubling, constant(0.0), 0.3, 12, node_budget=1000)
        assert info.value.deepest_level == 9

    def test_singular_potential_refused(self, logistic):
        with pytest.raises(SingularityError):
            build_tree(logistic, geometric(logistic, 1.0), 0.3, 5)

    def test_depth_precondition(self, doubling):
        with pytest.raises(PreconditionError):
            build_tree(doubling, constant(0.0), 0.3, 0)

    def test_nudge_off_discontinuity_orbit(self, doubling):
        assert nudge_base(doubling, 0.0, 5) != 0.0
        assert nudge_base(doubling, 0.3, 5) == 0.3

    def test_tent_top_has_one_preimage(self, tent):
        tree = build_tree(tent, constant(0.0), 1.0, 1)
        assert tree.points.tolist() == pytest.approx([0.5])


class TestTreePressure:
    def test_doubling_zero(self, doubling):
        est = tree_pressure(build_tree(doubling, constant(0.0), 0.3, 16))
        assert est.value == pytest.approx(LOG2, abs=1e-12)

    @pytest.mark.parametrize("c", [-1.0, 0.4])
    def test_doubling_constant(self, doubling, c):
        est = tree_pressure(build_tree(doubling, constant(c), 0.3, 12))
        assert est.value == pytest.approx(LOG2 + c, abs=1e-12)

    def test_needs_depth_four(self, doubling):
        with pytest.raises(PreconditionError):
            tree_pressure(build_tree(doubling, constant(0.0), 0.3, 3))

    @pytest.mark.slow
    def test_intermittent_geometric(self, intermittent):
        est = tree_pressure(build_tree(intermittent, geometric(intermittent, 1.0), 0.3, 22))
        assert abs(est.value) <= 0.05


class TestMaxBackward:
    def test_one_level(self, doubling):
        tree = build_tree(doubling, cosine(1, 1), 0.0, 1)
        assert sorted(tree.points.tolist()) == pytest.approx([0.0, 0.5], abs=1e-9)
        val, wit = max_backward_birkhoff(tree)
        assert val == pytest.approx(1.0, abs=1e-12)
        assert wit == pytest.approx(0.0, abs=1e-8)

    def test_constant(self, tent):
        val, _ = max_backward_birkhoff(build_tree(tent, constant(-0.4), 0.3, 8))
        assert val == pytest.approx(-0.4, abs=1e-12)

    def test_periodic_oracle(self, doubling):
        val, _ = max_backward_birkhoff(build_tree(doubling, cosine(1, 1), 0.3, 12))
        assert abs(val - 1.0) <= 0.05


class TestPeriodicGap:
    def test_zero(self, doubling):
        lhs, rhs, gap = periodic_gap_check(doubling, constant(0.0), 0.0, 1, 12)
        assert (lhs, rhs, gap) == pytest.approx((LOG2, 0.0, LOG2), abs=1e-9)

    def test_shifted(self, doubling):
        lhs, rhs, gap = periodic_gap_check(doubling, constant(-LOG2), 0.0, 1, 12)
        assert (lhs, rhs, gap) == pytest.approx((0.0, -LOG2, LOG2), abs=1e-9)

    def test_cosine(self, doubling):
        lhs, rhs, gap = periodic_gap_check(doubling, cosine(1, 1), 0.0, 1, 16)
        assert rhs == pytest.approx(1.0)
        assert lhs > 1.0
        assert lhs == pytest.approx(pressure_operator(doubling, cosine(1, 1), 1024, half=False).value, abs=0.02)

    def test_not_periodic(self, doubling):
        with pytest.raises(PreconditionError):
            periodic_gap_check(doubling, constant(0.0), 0.3, 1, 8)


@pytest.mark.property
class TestInvariants:
    @settings(max_examples=5)
    @given(st.lists(st.floats(0.01, 0.99), min_size=5, max_size=5))
    def test_base_point_robust(self, bases):
        fmap = make_builtin("doubling")
        slopes = [tree_pressure(build_tree(fmap, cosine(1, 1), x0, 16)).value for x0 in bases]
        assert max(slopes) - min(slopes) <= 0.02

    @pytest.mark.parametrize("name", ["doubling", "tent", "chebyshev-like"])
    @pytest.mark.parametrize("phi", [constant(0.0), cosine(1, 1)], ids=["zero", "cos"])
    def test_increments_stabilise(self, name, phi):
        fmap = make_builtin(name)
        depth = 16 if fmap.n_branches == 2 else 12
        tree = build_tree(fmap, phi, 0.3, depth)
        inc = np.diff(tree.log_z)[-5:]
        assert inc.max() - inc.min() <= 0.05

    @pytest.mark.parametrize("name", ["doubling", "tent"])
    @given(x0=st.floats(0.01, 0.99), n=st.integers(1, 12))
    def test_max_leaf_bounds(self, name, x0, n):
        fmap = make_builtin(name)
        phi = cosine(1, 1)
        tree = build_tree(fmap, phi, x0, n)
        val, _ = max_backward_birkhoff(tree)
        log_zn = tree.log_z[-1]
        sup_phi = 1.0
        assert val <= log_zn / n + sup_phi + 1e-12
        assert val >= (log_zn - math.log(tree.leaf_counts[-1])) / n - 1e-12

    @pytest.mark.parametrize("name", ["doubling", "tent", "chebyshev-like"])
    @given(x0=st.floats(0.01, 0.99), n=st.integers(2, 12))
    def test_subtree_consistency(self, name, x0, n):
        fmap = make_builtin(name)
        n = min(n, 9) if fmap.n_branches > 2 else n
        phi = cosine(1, 1)
        full = build_tree(fmap, phi, x0, n)
        level1 = build_tree(fmap, phi, x0, 1)
        parts = [float(w) + build_tree(fmap, phi, float(y), n - 1).log_z[-1]
                 for y, w in zip(level1.points, level1.log_weights)]
        assert float(logsumexp(parts)) == pytest.approx(full.log_z[-1], abs=1e-9)

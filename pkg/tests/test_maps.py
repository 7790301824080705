import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermo1d import DomainError, SingularityError, make_builtin, make_intermittent, map_from_spec
from thermo1d.maps import intermittent_cut

LOG2 = math.log(2.0)
BUILTINS = ("doubling", "tent", "logistic", "chebyshev-like")


def bisect(g, a, b, tol=1e-14):
    ga = g(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if (g(m) > 0) == (ga > 0):
            a, ga = m, g(m)
        else:
            b = m
    return 0.5 * (a + b)


def all_maps():
    return [make_builtin(n) for n in BUILTINS] + [make_intermittent(a) for a in (0.2, 0.5, 0.9)]


class TestExamples:
    def test_intermittent_values(self, intermittent):
        assert intermittent.evaluate(0.0) == 0.0
        assert intermittent.evaluate(0.25) == pytest.approx(0.375, abs=1e-15)
        assert intermittent.evaluate(0.8) == pytest.approx(0.8 * (1 + math.sqrt(0.8)) - 1, abs=1e-14)

    def test_intermittent_cut_matches_bisection(self):
        oracle = bisect(lambda x: x * (1 + math.sqrt(x)) - 1, 0.0, 1.0)
        assert intermittent_cut(0.5) == pytest.approx(oracle, abs=1e-12)
        assert intermittent_cut(0.5) == pytest.approx(0.569840, abs=1e-6)

    def test_builtin_values(self, doubling, tent, logistic):
        assert doubling.evaluate(0.3) == pytest.approx(0.6)
        assert doubling.evaluate(0.75) == pytest.approx(0.5)
        assert tent.evaluate(0.5) == pytest.approx(1.0)
        assert tent.evaluate(0.25) == pytest.approx(0.5)
        assert logistic.critical_points == (0.5,)

    def test_preimages(self, doubling, tent, intermittent):
        assert doubling.preimages(0.5) == pytest.approx([0.25, 0.75])
        assert tent.preimages(1.0) == pytest.approx([0.5])
        pre = intermittent.preimages(0.0)
        assert len(pre) == 2
        assert pre[0] == 0.0
        assert pre[1] == pytest.approx(bisect(lambda x: x * (1 + math.sqrt(x)) - 1, 0.0, 1.0), abs=1e-10)

    def test_iterate(self, doubling, tent):
        assert doubling.iterate(1 / 3, 2) == pytest.approx([1 / 3, 2 / 3, 1 / 3])
        assert tent.iterate(0.4, 2) == pytest.approx([0.4, 0.8, 0.4])
        for a in (0.1, 0.5, 0.9):
            assert make_intermittent(a).iterate(0.0, 5) == [0.0] * 6

    def test_log_derivative(self, doubling, intermittent, logistic):
        xs = np.linspace(0, 1, 11)
        assert np.allclose(doubling.log_derivative(xs), LOG2)
        assert intermittent.log_derivative(0.0) == 0.0
        with pytest.raises(SingularityError):
            logistic.log_derivative(0.5)

    def test_left_convention_at_cut(self, doubling):
        # x = 1/2 belongs to the left branch
        assert doubling.evaluate(0.5) == pytest.approx(1.0)

    def test_bad_alpha(self):
        with pytest.raises(DomainError, match="alpha outside"):
            make_intermittent(1.5)

    def test_unknown_builtin(self):
        with pytest.raises(DomainError):
            make_builtin("henon")

    def test_outside_ambient(self, doubling):
        with pytest.raises(DomainError):
            doubling.evaluate(1.5)

    def test_piecewise_spec(self):
        fmap = map_from_spec({"kind": "piecewise", "ambient": [0, 1],
                              "branches": [{"domain": [0, 0.5], "expr": "2*x"},
                                           {"domain": [0.5, 1], "expr": "2 - 2*x"}]})
        tent = make_builtin("tent")
        xs = np.linspace(0, 1, 101)
        assert np.allclose(fmap.evaluate(xs), tent.evaluate(xs))
        assert fmap.preimages(0.3) == pytest.approx(tent.preimages(0.3))

    def test_piecewise_rejects_gap(self):
        with pytest.raises(DomainError):
            map_from_spec({"kind": "piecewise", "ambient": [0, 1],
                           "branches": [{"domain": [0, 0.4], "expr": "2*x"},
                                        {"domain": [0.5, 1], "expr": "2*x - 1"}]})

    def test_piecewise_rejects_nonmonotone(self):
        with pytest.raises(DomainError):
            map_from_spec({"kind": "piecewise", "ambient": [0, 1],
                           "branches": [{"domain": [0, 1], "expr": "4*x*(1-x)"}]})


@pytest.mark.property
class TestInvariants:
    @given(st.sampled_from(range(7)), st.floats(0, 1), st.data())
    def test_round_trip(self, mi, u, data):
        fmap = all_maps()[mi]
        b = data.draw(st.sampled_from(range(fmap.n_branches)))
        br = fmap.branches[b]
        y = br.image_lo + u * (br.image_hi - br.image_lo)
        x = float(br.invert(np.array([y]), fmap.tol)[0])
        assert abs(float(br.forward(np.array([x]))[0]) - y) <= 1e-10
        assert br.domain_lo <= x <= br.domain_hi

    @given(st.floats(1e-9, 1 - 1e-9))
    def test_preimage_count_doubling(self, y):
        assert len(make_builtin("doubling").preimages(y)) == 2

    @given(st.floats(1e-9, 1 - 1e-7))
    def test_preimage_count_tent(self, y):
        assert len(make_builtin("tent").preimages(y)) == 2

    @given(st.floats(0.1, 0.9), st.floats(1e-9, 1 - 1e-9))
    def test_preimage_count_intermittent(self, a, y):
        assert len(make_intermittent(a).preimages(y)) == 2

    def test_preimage_count_tent_top(self, tent):
        assert len(tent.preimages(1.0)) == 1

    @given(st.sampled_from(range(7)), st.floats(0, 1), st.floats(0, 1), st.data())
    def test_inverse_order(self, mi, u1, u2, data):
        fmap = all_maps()[mi]
        b = data.draw(st.sampled_from(range(fmap.n_branches)))
        br = fmap.branches[b]
        lo, hi = sorted((u1, u2))
        if hi - lo < 1e-9:
            return
        y = br.image_lo + np.array([lo, hi]) * (br.image_hi - br.image_lo)
        x1, x2 = br.invert(y, fmap.tol)
        if br.orientation == "increasing":
            assert x1 <= x2
        else:
            assert x1 >= x2

    @given(st.floats(0.05, 0.95))
    def test_neutral_point_fixed(self, a):
        assert make_intermittent(a).iterate(0.0, 10) == [0.0] * 11

    def test_periodic_orbits(self, doubling):
        orb = doubling.iterate(1 / 3, 6)
        assert np.allclose(orb[::2], 1 / 3, atol=1e-12)
        assert np.allclose(orb[1::2], 2 / 3, atol=1e-12)
        for fmap in all_maps():
            if fmap.spec and fmap.spec.get("kind") == "intermittent":
                assert fmap.iterate(0.0, 4) == [0.0] * 5

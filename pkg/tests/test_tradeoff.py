import io
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from discrete_fdp.tradeoff import (
    DiscreteDist,
    PrivacyProfile,
    TradeoffCurve,
    curve_min,
    curve_to_delta,
    curve_to_epsilon,
    curve_to_gdp,
    eval_curve,
    gdp_curve,
    gdp_value,
    identity_curve,
    np_tradeoff,
    privacy_profile,
    pure_dp_to_gdp,
    read_curve_csv,
    write_curve_csv,
    write_samples_csv,
    zero_curve,
)

GRID = np.linspace(0.0, 1.0, 101)


def lp_tradeoff(P: DiscreteDist, Q: DiscreteDist, alpha: float) -> float:
    """min over tests phi in [0,1]^n of E_Q[1 - phi] subject to E_P[phi] <= alpha."""
    labels = sorted(set(P.support) | set(Q.support))
    p = np.array([dict(zip(P.support, P.probs)).get(k, 0.0) for k in labels])
    q = np.array([dict(zip(Q.support, Q.probs)).get(k, 0.0) for k in labels])
    res = linprog(-q, A_ub=p[None, :], b_ub=[alpha], bounds=[(0.0, 1.0)] * len(labels), method="highs")
    assert res.status == 0
    return 1.0 + res.fun


@st.composite
def dist_pairs(draw, max_size=6):
    n = draw(st.integers(1, max_size))
    wp = draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))
    wq = draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))
    assume(sum(wp) > 0 and sum(wq) > 0)
    P = DiscreteDist.from_arrays(range(n), np.array(wp) / sum(wp))
    Q = DiscreteDist.from_arrays(range(n), np.array(wq) / sum(wq))
    return P, Q


def ternary_example():
    return TradeoffCurve.from_vertices([0.0, 0.15, 0.65, 1.0], [1.0, 0.65, 0.15, 0.0])


class TestCurveType:
    def test_rejects_bad_endpoints(self):
        with pytest.raises(ValueError):
            TradeoffCurve.from_vertices([0.1, 1.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            TradeoffCurve.from_vertices([0.0, 1.0], [1.0, 0.2])

    def test_rejects_increasing_beta(self):
        with pytest.raises(ValueError):
            TradeoffCurve.from_vertices([0.0, 0.5, 1.0], [0.5, 0.6, 0.0])

    def test_merges_duplicate_alpha(self):
        f = TradeoffCurve.from_vertices([0.0, 0.0, 1.0], [1.0, 0.4, 0.0])
        assert f.vertices == [(0.0, 0.4), (1.0, 0.0)]

    def test_arrays_read_only(self):
        f = identity_curve()
        with pytest.raises(ValueError):
            f.beta[0] = 0.3

    def test_convexity_flag(self):
        assert ternary_example().is_convex()
        bent = TradeoffCurve.from_vertices([0.0, 0.5, 1.0], [1.0, 0.8, 0.0])
        assert not bent.is_convex()
        with pytest.raises(ValueError):
            bent.validate(require_convex=True)


class TestDiscreteDist:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteDist((0, 1), (0.5, 0.6))
        with pytest.raises(ValueError):
            DiscreteDist((0, 0), (0.5, 0.5))
        with pytest.raises(ValueError):
            DiscreteDist((0, 1), (1.2, -0.2))
        with pytest.raises(ValueError):
            DiscreteDist((), ())

    def test_json_round_trip(self):
        P = DiscreteDist.from_arrays([3, -1, 7], [0.2, 0.5, 0.3])
        assert DiscreteDist.from_json(json.loads(json.dumps(P.to_json()))) == P


class TestNeymanPearson:
    def test_identical(self):
        P = DiscreteDist.from_arrays([0, 1, 2], [0.2, 0.3, 0.5])
        f = np_tradeoff(P, P)
        assert f.vertices == [(0.0, 1.0), (1.0, 0.0)]

    def test_bernoulli_pair(self):
        f = np_tradeoff(DiscreteDist.bernoulli(0.75), DiscreteDist.bernoulli(0.25))
        assert f.vertices == pytest.approx([(0.0, 1.0), (0.25, 0.25), (1.0, 0.0)])
        assert f(0.5) == pytest.approx(1 / 6, abs=1e-15)

    def test_disjoint_supports(self):
        f = np_tradeoff(DiscreteDist.point_mass(0), DiscreteDist.point_mass(1))
        assert np.all(f(GRID) == 0.0)

    def test_zero_padding_of_supports(self):
        P = DiscreteDist.from_arrays([0, 1], [0.5, 0.5])
        Q = DiscreteDist.from_arrays([1, 2], [0.5, 0.5])
        f = np_tradeoff(P, Q)
        assert f(0.0) == pytest.approx(0.5)
        assert f(0.5) == pytest.approx(0.0)

    @settings(max_examples=60, deadline=None)
    @given(dist_pairs())
    def test_matches_linear_program(self, pair):
        P, Q = pair
        f = np_tradeoff(P, Q)
        for a in (0.0, 0.07, 0.3, 0.5, 0.81, 1.0):
            assert f(a) == pytest.approx(lp_tradeoff(P, Q, a), abs=1e-9)

    @settings(max_examples=80, deadline=None)
    @given(dist_pairs(max_size=8))
    def test_curve_invariants(self, pair):
        f = np_tradeoff(*pair)
        f.validate(require_convex=True)
        assert np.all(f.beta <= 1.0 - f.alpha + 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(dist_pairs(max_size=7), st.data())
    def test_coarsening_never_lowers_curve(self, pair, data):
        P, Q = pair
        n = len(P.support)
        assume(n >= 2)
        i = data.draw(st.integers(0, n - 2))

        def merge(D):
            probs = list(D.probs)
            probs[i] += probs.pop(i + 1)
            return DiscreteDist.from_arrays(range(n - 1), probs)

        fine = np_tradeoff(P, Q)(GRID)
        coarse = np_tradeoff(merge(P), merge(Q))(GRID)
        assert np.all(coarse >= fine - 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(dist_pairs())
    def test_swapping_arguments_inverts_the_curve(self, pair):
        P, Q = pair
        f, g = np_tradeoff(P, Q), np_tradeoff(Q, P)
        # T(Q, P) is the generalized inverse of T(P, Q): every vertex of f maps to a point on g
        for a, b in f.vertices:
            assert g(b) <= a + 1e-9


class TestEvalAndMin:
    def test_eval(self):
        assert eval_curve(identity_curve(), 0.3) == pytest.approx(0.7)
        f = ternary_example()
        assert f(0.15) == pytest.approx(0.65)
        assert f(0.5) == pytest.approx(0.30)
        with pytest.raises(ValueError):
            f(1.2)
        with pytest.raises(ValueError):
            f(-0.1)

    def test_min_identities(self):
        f = ternary_example()
        assert np.allclose(curve_min(f, f)(GRID), f(GRID))
        assert np.all(curve_min(identity_curve(), zero_curve())(GRID) == 0.0)

    def test_min_exact_at_crossings(self):
        a = TradeoffCurve.from_vertices([0.0, 0.2, 1.0], [1.0, 0.2, 0.0])
        b = TradeoffCurve.from_vertices([0.0, 0.6, 1.0], [0.7, 0.1, 0.0])
        m = curve_min(a, b)
        fine = np.linspace(0, 1, 5001)
        assert np.max(np.abs(m(fine) - np.minimum(a(fine), b(fine)))) < 1e-12
        assert np.all(np.diff(m.beta) <= 1e-15)


class TestConversions:
    def test_identity_curve(self):
        f = identity_curve()
        assert curve_to_delta(f, 0.0) == 0.0
        assert curve_to_delta(f, 3.0) == 0.0
        assert curve_to_epsilon(f, 0.0) == 0.0

    def test_pure_dp_line(self):
        # the two-segment curve of (eps, 0)-DP
        eps = 0.7
        knot = 1.0 / (1.0 + math.exp(eps))
        f = TradeoffCurve.from_vertices([0, knot, 1], [1, knot, 0])
        assert curve_to_delta(f, eps) == pytest.approx(0.0, abs=1e-15)
        assert curve_to_epsilon(f, 0.0) == pytest.approx(eps, abs=1e-12)

    def test_ternary_example(self):
        f = ternary_example()
        assert curve_to_epsilon(f, 0.0) == pytest.approx(math.log(7 / 3), abs=1e-12)
        assert curve_to_epsilon(f, 0.05) <= math.log(2) + 1e-12
        assert curve_to_delta(f, math.log(2)) <= 0.05 + 1e-12

    def test_infinite_epsilon(self):
        f = TradeoffCurve.from_vertices([0.0, 0.5, 1.0], [0.9, 0.2, 0.0])
        assert curve_to_delta(f, math.inf) == pytest.approx(0.1)
        assert curve_to_epsilon(f, 0.05) == math.inf
        assert curve_to_epsilon(f, 0.1) < math.inf

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            curve_to_delta(identity_curve(), -1.0)
        with pytest.raises(ValueError):
            curve_to_epsilon(identity_curve(), 1.5)

    @settings(max_examples=60, deadline=None)
    @given(dist_pairs(), st.floats(0.0, 4.0))
    def test_delta_is_tight_on_a_dense_grid(self, pair, eps):
        f = np_tradeoff(*pair)
        delta = curve_to_delta(f, eps)
        grid = np.union1d(np.linspace(0, 1, 2001), f.alpha)
        lower = np.maximum.reduce([np.zeros_like(grid), 1 - delta - math.exp(eps) * grid, math.exp(-eps) * (1 - delta - grid)])
        assert np.all(f(grid) >= lower - 1e-12)
        if delta > 1e-9:
            tighter = 1 - (delta - 1e-7) - math.exp(eps) * grid, math.exp(-eps) * (1 - (delta - 1e-7) - grid)
            assert np.any(f(grid) < np.maximum(*tighter))

    @settings(max_examples=60, deadline=None)
    @given(dist_pairs())
    def test_delta_nonincreasing_and_round_trip(self, pair):
        f = np_tradeoff(*pair)
        eps_grid = np.linspace(0, 5, 26)
        deltas = [curve_to_delta(f, e) for e in eps_grid]
        assert all(b <= a + 1e-15 for a, b in zip(deltas, deltas[1:]))
        for e, dl in zip(eps_grid, deltas):
            back = curve_to_epsilon(f, dl)
            assert back <= e + 1e-6
            assert curve_to_delta(f, back) <= dl + 1e-9


class TestGaussian:
    def test_values(self):
        assert gdp_value(1.0, 0.5) == pytest.approx(0.15865525393145707, rel=1e-14)
        assert gdp_value(2.0, 0.5) == pytest.approx(0.022750131948179195, rel=1e-14)
        assert np.allclose(gdp_value(0.0, GRID), 1 - GRID, atol=1e-15)

    def test_curve_vertices_on_exact_curve(self):
        f = gdp_curve(1.3, 101)
        for a, b in f.vertices[1:-1]:
            ref = mpmath.ncdf(mpmath.sqrt(2) * mpmath.erfinv(1 - 2 * mpmath.mpf(a)) - mpmath.mpf(1.3))
            assert b == pytest.approx(float(ref), rel=1e-12)
        assert f.is_convex()
        assert np.allclose(gdp_curve(0.0, 11)(GRID), 1 - GRID, atol=1e-15)

    def test_monotone_in_mu(self):
        vals = [gdp_curve(mu, 201)(GRID) for mu in (0.1, 0.5, 1.0, 3.0)]
        for lo, hi in zip(vals[1:], vals):
            assert np.all(lo <= hi + 1e-15)

    @pytest.mark.parametrize(
        "eps,ref",
        [(0.0, 0.0), (math.log(7 / 3), 1.048801025), (1.0, 1.2320354), (40.0, None)],
    )
    def test_pure_dp_to_gdp(self, eps, ref):
        mpmath.mp.dps = 50
        exact = float(-2 * mpmath.sqrt(2) * mpmath.erfinv(2 / (1 + mpmath.exp(eps)) - 1)) if eps else 0.0
        got = pure_dp_to_gdp(eps)
        assert got == pytest.approx(exact, rel=1e-12, abs=1e-15)
        if ref is not None:
            assert got == pytest.approx(ref, abs=1e-6)

    def test_pure_dp_to_gdp_huge_eps(self):
        # 1/(1+e^eps) underflows double precision here
        assert math.isfinite(pure_dp_to_gdp(2000.0))
        assert pure_dp_to_gdp(2000.0) > pure_dp_to_gdp(1000.0)

    def test_curve_to_gdp_of_pure_dp_curve(self):
        eps = math.log(7 / 3)
        knot = 1.0 / (1.0 + math.exp(eps))
        f = TradeoffCurve.from_vertices([0, knot, 1], [1, knot, 0])
        assert curve_to_gdp(f) == pytest.approx(pure_dp_to_gdp(eps), rel=1e-12)

    def test_curve_to_gdp_edge_cases(self):
        assert curve_to_gdp(identity_curve()) == 0.0
        assert curve_to_gdp(zero_curve()) == math.inf
        assert curve_to_gdp(gdp_curve(0.8, 2001)) == pytest.approx(0.8, abs=1e-9)


class TestSerialization:
    def test_csv_round_trip(self):
        f = np_tradeoff(DiscreteDist.bernoulli(0.61), DiscreteDist.bernoulli(0.2))
        buf = io.StringIO()
        write_curve_csv(f, buf, ["a comment"])
        text = buf.getvalue()
        assert text.startswith("# a comment\nalpha,beta\n")
        g = read_curve_csv(io.StringIO(text))
        assert np.array_equal(g.alpha, f.alpha) and np.array_equal(g.beta, f.beta)

    def test_samples_csv(self):
        buf = io.StringIO()
        write_samples_csv(ternary_example(), buf, n=1001)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "alpha,beta" and len(lines) == 1002

    def test_bad_header(self):
        with pytest.raises(ValueError):
            read_curve_csv(io.StringIO("x,y\n0,1\n1,0\n"))

    def test_profile(self):
        prof = privacy_profile(ternary_example(), [math.log(2), 0.0, math.inf])
        assert [e for e, _ in prof.points] == [0.0, math.log(2), math.inf]
        obj = prof.to_json()
        assert obj["points"][-1]["epsilon"] == "inf"
        assert json.loads(json.dumps(obj)) == obj
        with pytest.raises(ValueError):
            PrivacyProfile(((0.0, 0.1), (1.0, 0.2)))

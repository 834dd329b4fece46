import io
import json
import math

import numpy as np
import pytest

from discrete_fdp import bench
from discrete_fdp import mechanisms as mech
from discrete_fdp.randomizers import RandomSeed


class TestUsers:
    def test_norm_bounds(self):
        x = bench.generate_users(500, 250, 1.0, RandomSeed(1))
        c = 1 / math.sqrt(250)
        assert x.shape == (500, 250)
        assert np.all(np.linalg.norm(x, axis=1) <= 1.0 + 1e-12)
        assert np.all(np.abs(x) <= c)

    def test_rescaling_kicks_in(self):
        # with d = 1 the box is [-C, C] and never needs rescaling; with d large it often does
        x = bench.generate_users(200, 4, 1.0, RandomSeed(2))
        assert np.all(np.linalg.norm(x, axis=1) <= 1.0 + 1e-12)

    def test_c_value(self):
        assert bench.BenchConfig(d=250).c == pytest.approx(0.0632456, rel=1e-6)

    def test_deterministic(self):
        a = bench.generate_users(10, 20, 1.0, RandomSeed(3, 4))
        b = bench.generate_users(10, 20, 1.0, RandomSeed(3, 4))
        assert np.array_equal(a, b)


class TestMatching:
    def test_sqkr_matching(self):
        A, B = bench.match_ternary_to_sqkr(10, 2.0, 250, 1.0)
        F = (math.exp(2) + 1023) / (math.exp(2) - 1)
        assert A / B == pytest.approx(0.04)
        assert A * B == pytest.approx(F * F / 10, rel=1e-12)
        c = 1 / math.sqrt(250)
        t, s = mech.Ternary(A, B, c), mech.SqkrParams(2.0, 10, 250, 1.0)
        assert mech.comm_bits(t, 250) == pytest.approx(mech.comm_bits(s, 250))
        assert mech.analytic_mse_ternary(A, B, c, 250, 0.3) == pytest.approx(mech.analytic_mse_sqkr(2.0, 10, 250, 1.0, 0.3, replace=False))

    def test_sqkr_matching_degenerate(self):
        # matching forces A = F c, so it only degenerates once F rounds to 1
        A, _ = bench.match_ternary_to_sqkr(10, 2.0, 250, 1.0)
        F = mech.SqkrParams(2.0, 10, 250, 1.0).rr_factor
        assert A == pytest.approx(F / math.sqrt(250), rel=1e-12)
        with pytest.raises(ValueError):
            bench.match_ternary_to_sqkr(1, 60.0, 250, 1.0)
        with pytest.raises(ValueError):
            bench.match_ternary_to_sqkr(300, 2.0, 250, 1.0)

    def test_gaussian_matching(self):
        d = 250
        c = 1 / math.sqrt(d)
        A, B = bench.match_ternary_to_gaussian(1.0, 1.0, d, 1.0)
        assert A == pytest.approx(math.sqrt(c * c + 1)) and B == pytest.approx(A)
        for sigma in bench.SIGMA_GRID:
            for r in bench.RATIO_GRID:
                A, B = bench.match_ternary_to_gaussian(sigma, r, d, 1.0)
                mu_t = mech.ternary_clt_bound(A, B, c, d).mu
                mu_g = mech.GaussianSparse(sigma, A, B, c, d).mu
                assert mu_t == pytest.approx(mu_g, rel=1e-12)

    def test_gaussian_matching_infeasible(self):
        d = 250
        c = 1 / math.sqrt(d)
        sigma = 0.01
        r = 0.5 * c * c / (c * c + sigma * sigma)
        with pytest.raises(ValueError):
            bench.match_ternary_to_gaussian(sigma, r, d, 1.0)
        with pytest.raises(ValueError):
            bench.match_ternary_to_gaussian(0.0, 0.5, d, 1.0)

    def test_sigma_for_ternary(self):
        d = 250
        c = 1 / math.sqrt(d)
        sigma = bench.sigma_for_ternary(10 * c, 0.4, d, 1.0)
        assert 10 * c * 25 * c == pytest.approx(c * c + sigma * sigma)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = bench.BenchConfig(N=10, d=8, trials=3, seed=5, matching="match-gaussian-ab", mechanisms=[{"sigma": 1.0, "r": 0.5}])
        path = tmp_path / "cfg.json"
        cfg.save(str(path))
        assert bench.BenchConfig.load(str(path)) == cfg

    @pytest.mark.parametrize(
        "kw", [{"N": 0}, {"C": 0.0}, {"matching": "nope"}, {"user_distribution": "gauss"}, {"trials": 0}]
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            bench.BenchConfig(**kw)

    def test_unknown_keys(self):
        with pytest.raises(ValueError):
            bench.BenchConfig.from_json({"N": 3, "bogus": 1})


class TestRuns:
    def small(self, **kw):
        base = dict(N=200, d=16, C=1.0, trials=30, seed=11)
        base.update(kw)
        return bench.BenchConfig(**base)

    def test_noiseless_baseline(self):
        res = bench.run_mean_estimation(self.small(mechanisms=[{"mechanism": "identity"}]))
        assert res.rows[0].empirical_mse == pytest.approx(0.0, abs=1e-28)
        assert res.rows[0].analytic_mse == 0.0

    def test_deterministic(self):
        cfg = self.small(mechanisms=[{"mechanism": "ternary", "A": 0.5, "B": 1.0}])
        a = bench.run_mean_estimation(cfg).rows[0]
        b = bench.run_mean_estimation(cfg).rows[0]
        assert a.empirical_mse == b.empirical_mse

    def test_row_order_does_not_change_a_row(self):
        t = {"mechanism": "ternary", "A": 0.5, "B": 1.0}
        g = {"mechanism": "gaussian", "sigma": 0.5}
        one = bench.run_mean_estimation(self.small(mechanisms=[t, g])).rows[0]
        two = bench.run_mean_estimation(self.small(mechanisms=[t])).rows[0]
        assert one.empirical_mse == two.empirical_mse

    def test_error_rows_do_not_stop_the_run(self):
        cfg = self.small(
            mechanisms=[
                {"mechanism": "ternary", "A": 0.01, "B": 1.0},
                {"mechanism": "what"},
                {"A": 1.0},
                {"mechanism": "gaussian", "sigma": 0.5},
            ]
        )
        res = bench.run_mean_estimation(cfg)
        assert [r.ok for r in res.rows] == [False, False, False, True]
        assert "A must exceed c" in res.rows[0].error
        assert len(res.failed) == 3
        assert math.isfinite(res.rows[3].empirical_mse)

    def test_matching_error_row(self):
        cfg = self.small(d=250, N=20, trials=2, matching="match-sqkr-comm-and-mse", mechanisms=[{"k": 1, "eps": 60.0}])
        res = bench.run_mean_estimation(cfg)
        assert res.rows[0].ok and not res.rows[1].ok

    @pytest.mark.parametrize(
        "point",
        [
            {"mechanism": "ternary", "A": 0.5, "B": 2.0},
            {"mechanism": "sto-sign", "A": 0.4},
            {"mechanism": "sqkr", "eps": 2.0, "k": 3},
            {"mechanism": "sqkr", "eps": math.inf, "k": 16, "replace": False},
            {"mechanism": "sqkr", "eps": math.inf, "k": 16},
            {"mechanism": "gaussian", "sigma": 0.3, "A": 0.5, "B": 1.0},
        ],
    )
    def test_empirical_matches_analytic(self, point):
        res = bench.run_mean_estimation(self.small(trials=200, mechanisms=[point]))
        row = res.rows[0]
        assert abs(row.empirical_mse - row.analytic_mse) <= 3.5 * row.mse_stderr

    def test_privacy_columns(self):
        d = 250
        cfg = bench.BenchConfig(N=10, d=d, trials=2, matching="match-gaussian-ab", mechanisms=[{"sigma": 1.0, "r": 0.4}])
        t, g = bench.run_mean_estimation(cfg).rows
        assert t.mu_gdp == pytest.approx(2.0, rel=1e-12)
        assert g.mu_gdp == pytest.approx(2.0, rel=1e-12)
        assert g.eps_at_delta0 == math.inf and g.gamma == 0.0
        assert 0 < t.gamma < 0.5
        assert t.bits_per_user == pytest.approx((math.log2(d) + 1) * 0.4 * d)
        assert g.bits_per_user == pytest.approx((math.log2(d) + 32) * 0.4 * d)

    def test_csv(self):
        res = bench.run_mean_estimation(self.small(trials=2, mechanisms=[{"mechanism": "ternary", "A": 0.5, "B": 1.0}, {"mechanism": "x"}]))
        buf = io.StringIO()
        res.write_csv(buf, ["hello"])
        text = buf.getvalue()
        assert text.startswith("# hello\n# config: ")
        rows = bench.read_results_csv(io.StringIO(text))
        assert list(rows[0]) == list(bench.RESULT_COLUMNS)
        assert json.loads(rows[0]["params-json"]) == {"A": 0.5, "B": 1.0}
        assert "error" in json.loads(rows[1]["params-json"])
        assert rows[1]["empirical_mse"] == ""


class TestPresets:
    def test_fig4_left_rows(self):
        cfg = bench.preset_config("fig4-left", trials=1, N=10)
        names = [n for n, _ in bench._expand(cfg)]
        assert names == ["sqkr", "ternary"] * 3

    def test_fig4_middle_and_right_sizes(self):
        assert len(bench._expand(bench.preset_config("fig4-middle"))) == 2 * 9 * 5
        assert len(bench._expand(bench.preset_config("fig4-right"))) == 2 * 4 * 5

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            bench.preset_config("fig5")

    def test_left_curves(self):
        alpha, cols = bench.fig4_left_curves(n=1001)
        mid = 500
        assert alpha[mid] == 0.5
        assert cols["sqkr_eps2"][mid] == pytest.approx(math.exp(-2) / 2, abs=1e-12)
        assert cols["ternary_eps2"][mid] == pytest.approx(0.484, abs=0.001)

    def test_epsilon_extraction(self):
        eps = [bench.gdp_epsilon_at_delta0(mech.ternary_clt_bound(*bench.match_ternary_to_sqkr(10, e, 250, 1.0), 1 / math.sqrt(250), 250).mu) for e in (1.0, 2.0, 5.0)]
        assert eps == sorted(eps)
        assert all(math.isfinite(e) for e in eps)

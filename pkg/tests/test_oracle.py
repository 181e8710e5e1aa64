import numpy as np
import pytest

from panelgwas import (
    P_FLOOR,
    PanelGwasError,
    concordance_report,
    ols_single,
    p_from_t,
)


class TestOlsSingle:
    def test_matches_simple_regression_closed_form(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(8, 40))
            g = rng.standard_normal(n)
            y = rng.standard_normal(n)
            res = ols_single(y, g)
            gc = g - g.mean()
            yc = y - y.mean()
            beta = (gc @ yc) / (gc @ gc)
            resid = yc - beta * gc
            s2 = (resid @ resid) / (n - 2)
            se = np.sqrt(s2 / (gc @ gc))
            assert res.beta == pytest.approx(beta, rel=1e-12, abs=1e-14)
            assert res.se == pytest.approx(se, rel=1e-12)
            assert res.t == pytest.approx(beta / se, rel=1e-10)
            assert res.df == n - 2

    def test_perfect_fit_sentinel(self):
        g = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
        res = ols_single(g.copy(), g)
        assert res.t == np.inf
        assert res.p == P_FLOOR
        assert res.se == 0.0

    def test_orthogonal_gives_null(self):
        g = np.array([0.0, 1.0, 2.0, 1.0])
        y = np.array([1.0, 0.0, 1.0, 0.0])
        res = ols_single(y, g)
        assert res.beta == pytest.approx(0.0, abs=1e-14)
        assert res.t == pytest.approx(0.0, abs=1e-12)
        assert res.p == pytest.approx(1.0, abs=1e-10)

    def test_handworked_pair(self):
        g = np.array([0.0, 1.0, 2.0, 1.0])
        y = np.array([0.0, 1.0, 1.0, 2.0])
        res = ols_single(y, g)
        assert res.t == pytest.approx(np.sqrt(2.0 / 3.0), rel=1e-12)
        assert res.p == pytest.approx(0.5, rel=1e-12)

    def test_covariates_change_df(self):
        rng = np.random.default_rng(2)
        n = 20
        c = rng.standard_normal((n, 3))
        res = ols_single(rng.standard_normal(n), rng.standard_normal(n), c)
        assert res.df == n - 5

    def test_rank_deficient_design(self):
        rng = np.random.default_rng(3)
        n = 15
        g = rng.standard_normal(n)
        with pytest.raises(PanelGwasError, match="rank-deficient"):
            ols_single(rng.standard_normal(n), g, covariates=g[:, None])

    def test_too_few_samples(self):
        with pytest.raises(PanelGwasError, match="samples"):
            ols_single(np.zeros(2), np.zeros(2))

    def test_p_consistent_with_shared_routine(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal(25)
        g = rng.standard_normal(25)
        res = ols_single(y, g)
        assert res.p == p_from_t(res.t, float(res.df))


class TestConcordance:
    def stats(self, n, seed):
        rng = np.random.default_rng(seed)
        return {
            (f"snp{i}", "ph1"): (float(rng.standard_normal()),
                                 float(rng.uniform(1e-6, 1)))
            for i in range(n)
        }

    def test_identity(self):
        a = self.stats(50, 1)
        report = concordance_report(a, dict(a))
        assert report.pearson_r_neglog10p == 1.0
        assert report.max_abs_dt == 0.0
        assert report.sign_agreement == 1.0
        assert report.n_pairs == 50

    def test_mismatched_keys_fatal(self):
        a = self.stats(5, 1)
        b = self.stats(6, 1)
        with pytest.raises(PanelGwasError, match="mismatched keys"):
            concordance_report(a, b)

    def test_empty_fatal(self):
        with pytest.raises(PanelGwasError, match="no pairs"):
            concordance_report({}, {})

    def test_worst_pairs_listed(self):
        a = self.stats(30, 2)
        b = {k: (t + 0.01, p * 1.1) for k, (t, p) in a.items()}
        worst_key = ("snp7", "ph1")
        b[worst_key] = (5.0, 1e-30)
        report = concordance_report(a, b)
        assert len(report.worst_pairs) == 10
        assert report.worst_pairs[0][0] == worst_key
        assert "snp7" in report.to_text()

    def test_matched_infinities(self):
        a = {("m", "p"): (np.inf, P_FLOOR), ("m2", "p"): (1.0, 0.3)}
        report = concordance_report(a, dict(a))
        assert report.max_abs_dt == 0.0

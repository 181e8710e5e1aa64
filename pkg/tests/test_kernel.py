import numpy as np
import pytest

from panelgwas import (
    MarkerRecord,
    PanelGwasError,
    RawBatch,
    SkipReason,
    build_covariate_basis,
    compute_stats,
    correlate,
    ols_single,
    p_from_t,
    prepare_genotype_batch,
    residualize,
    standardize_columns,
    t_from_r,
)


def make_batch(dosages):
    d = np.asarray(dosages, dtype=np.float64)
    markers = tuple(
        MarkerRecord("1", f"snp{i + 1}", i + 1, "A", "B", i)
        for i in range(d.shape[0])
    )
    return RawBatch(markers, d, np.isnan(d).sum(axis=1))


def lstsq_residuals(y, design):
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ beta


class TestCovariateBasis:
    def test_intercept_only(self):
        basis = build_covariate_basis(np.zeros((4, 0)))
        assert basis.rank == 1
        assert basis.source_columns == ("intercept",)
        np.testing.assert_allclose(basis.q[:, 0], [0.5, 0.5, 0.5, 0.5])

    def test_duplicate_of_intercept_dropped(self):
        basis = build_covariate_basis(np.ones((5, 1)), column_names=["ones"])
        assert basis.rank == 1
        assert basis.dropped_columns == ("ones",)

    def test_orthonormality(self):
        rng = np.random.default_rng(3)
        c = rng.standard_normal((40, 6))
        basis = build_covariate_basis(c)
        gram = basis.q.T @ basis.q
        assert np.max(np.abs(gram - np.eye(basis.rank))) <= 1e-10

    def test_projection_matches_hat_matrix(self):
        # Q Q^T must reproduce the hat matrix of regression on (1, x)
        x = np.array([1.0, 2.0, 3.0, 4.0])
        basis = build_covariate_basis(x[:, None], column_names=["x"])
        assert basis.rank == 2
        np.testing.assert_allclose(basis.q @ (basis.q.T @ x), x, atol=1e-12)
        ones = np.ones(4)
        np.testing.assert_allclose(
            basis.q @ (basis.q.T @ ones), ones, atol=1e-12
        )

    def test_rank_deficient_column_dropped(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(30)
        c = np.column_stack([a, 2.0 * a])
        basis = build_covariate_basis(c, column_names=["a", "a2"])
        assert basis.rank == 2  # intercept + a
        assert "a2" in basis.dropped_columns

    def test_insufficient_samples(self):
        with pytest.raises(PanelGwasError, match="degrees of freedom"):
            build_covariate_basis(np.random.default_rng(1).random((3, 2)))

    def test_nan_rejected(self):
        c = np.array([[1.0], [np.nan], [0.0], [2.0]])
        with pytest.raises(ValueError):
            build_covariate_basis(c)


class TestResidualize:
    def test_intercept_only_equals_centering(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal((12, 3))
        basis = build_covariate_basis(np.zeros((12, 0)))
        out = residualize(y, basis)
        np.testing.assert_allclose(out, y - y.mean(axis=0), atol=1e-12)

    def test_projector_fixed_point(self):
        rng = np.random.default_rng(8)
        basis = build_covariate_basis(rng.standard_normal((20, 2)))
        y = rng.standard_normal((20, 4))
        y0 = residualize(y, basis)
        np.testing.assert_allclose(residualize(y0, basis), y0, atol=1e-10)

    def test_simple_regression_example(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        y = np.array([1.0, 3.0, 2.0, 4.0])
        basis = build_covariate_basis(x[:, None])
        out = residualize(y[:, None], basis)[:, 0]
        # slope 0.8, intercept 0.5 -> fitted (1.3, 2.1, 2.9, 3.7)
        np.testing.assert_allclose(out, [-0.3, 0.9, -0.9, 0.3], atol=1e-12)

    def test_matches_lstsq_oracle(self):
        rng = np.random.default_rng(9)
        c = rng.standard_normal((25, 3))
        y = rng.standard_normal((25, 5))
        basis = build_covariate_basis(c)
        design = np.column_stack([np.ones(25), c])
        np.testing.assert_allclose(
            residualize(y, basis), lstsq_residuals(y, design), atol=1e-10
        )

    def test_orthogonal_to_basis(self):
        rng = np.random.default_rng(10)
        c = rng.standard_normal((50, 4))
        y = rng.standard_normal((50, 6)) * 100
        basis = build_covariate_basis(c)
        out = residualize(y, basis)
        assert np.max(np.abs(basis.q.T @ out)) <= 1e-8 * 50

    def test_dimension_mismatch(self):
        basis = build_covariate_basis(np.zeros((10, 0)))
        with pytest.raises(ValueError):
            residualize(np.zeros((9, 2)), basis)


class TestStandardize:
    def test_example_column(self):
        out, sd, zero = standardize_columns(np.array([[-1.0], [0.0], [1.0]]))
        assert sd[0] == pytest.approx(np.sqrt(2.0 / 3.0), rel=1e-15)
        assert not zero[0]
        assert abs(out[:, 0].mean()) <= 1e-15
        assert np.mean(out[:, 0] ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_constant_column_flagged(self):
        out, _sd, zero = standardize_columns(np.full((6, 1), 3.25))
        assert zero[0]
        assert np.all(out == 0.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal((30, 2))
        a, _, _ = standardize_columns(y)
        b, _, _ = standardize_columns(5.0 * y)
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            standardize_columns(np.array([[1.0], [np.inf]]))


class TestPrepareBatch:
    def test_plain_row(self):
        std = prepare_genotype_batch(make_batch([[0.0, 1.0, 2.0, 1.0]]))
        assert std.allele_frequency[0] == pytest.approx(0.5)
        assert std.variance_before_scaling[0] == pytest.approx(0.5)
        assert std.skip_reason[0] == SkipReason.NONE
        expected = np.array([-1.0, 0.0, 1.0, 0.0]) / np.sqrt(0.5)
        np.testing.assert_allclose(std.matrix[0], expected, atol=1e-12)

    def test_monomorphic_skipped(self):
        std = prepare_genotype_batch(make_batch([[2.0, 2.0, 2.0, 2.0]]))
        assert std.skip_reason[0] == SkipReason.MONOMORPHIC
        assert np.all(std.matrix[0] == 0.0)

    def test_missing_imputed_to_mean(self):
        with_missing = prepare_genotype_batch(
            make_batch([[0.0, np.nan, 2.0, 1.0]])
        )
        dense = prepare_genotype_batch(make_batch([[0.0, 1.0, 2.0, 1.0]]))
        np.testing.assert_allclose(
            with_missing.matrix[0], dense.matrix[0], atol=1e-12
        )
        assert with_missing.missing_count[0] == 1
        assert with_missing.allele_frequency[0] == pytest.approx(0.5)

    def test_all_missing_row(self):
        std = prepare_genotype_batch(
            make_batch([[np.nan, np.nan, np.nan], [0.0, 1.0, 2.0]])
        )
        assert std.skip_reason[0] == SkipReason.ALL_MISSING
        assert std.skip_reason[1] == SkipReason.NONE
        assert np.isnan(std.allele_frequency[0])

    def test_float64_rows_meet_moment_invariants(self):
        rng = np.random.default_rng(12)
        d = rng.integers(0, 3, size=(40, 500)).astype(np.float64)
        std = prepare_genotype_batch(make_batch(d))
        ok = std.skip_reason == SkipReason.NONE
        means = std.matrix[ok].mean(axis=1)
        variances = (std.matrix[ok] ** 2).mean(axis=1)
        assert np.max(np.abs(means)) <= 1e-8
        assert np.max(np.abs(variances - 1.0)) <= 1e-6

    def test_float32_storage_rows_meet_moment_invariants(self):
        # math runs in f64; the one f32 rounding at store time costs an ulp
        rng = np.random.default_rng(12)
        d = rng.integers(0, 3, size=(40, 500)).astype(np.float64)
        std = prepare_genotype_batch(make_batch(d), dtype=np.float32)
        assert std.matrix.dtype == np.float32
        ok = std.skip_reason == SkipReason.NONE
        means = std.matrix[ok].astype(np.float64).mean(axis=1)
        variances = (std.matrix[ok].astype(np.float64) ** 2).mean(axis=1)
        assert np.max(np.abs(means)) <= 1.5e-7
        assert np.max(np.abs(variances - 1.0)) <= 1e-6

    def test_genotype_residualization(self):
        rng = np.random.default_rng(13)
        c = rng.standard_normal((30, 2))
        basis = build_covariate_basis(c)
        d = rng.integers(0, 3, size=(5, 30)).astype(np.float64)
        std = prepare_genotype_batch(
            make_batch(d), basis=basis, residualize_genotypes=True
        )
        ok = std.skip_reason == SkipReason.NONE
        # rows orthogonal to the covariate basis
        assert np.max(np.abs(std.matrix[ok] @ basis.q)) <= 1e-8


class TestCorrelate:
    def test_handworked_pair(self):
        g, _, _ = standardize_columns(np.array([0.0, 1.0, 2.0, 1.0])[:, None])
        y, _, _ = standardize_columns(np.array([0.0, 1.0, 1.0, 2.0])[:, None])
        r, clamped = correlate(g.T, y)
        assert r[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert clamped == 0

    def test_self_correlation_is_one(self):
        v, _, _ = standardize_columns(
            np.random.default_rng(1).standard_normal(50)[:, None]
        )
        r, _ = correlate(v.T, v)
        assert r[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        g = np.array([[-1.0, 1.0, -1.0, 1.0]])
        y = np.array([-1.0, -1.0, 1.0, 1.0])[:, None]
        r, _ = correlate(g, y)
        assert r[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_tiling_is_row_stable(self):
        # a row's correlations must not depend on which rows surround it
        rng = np.random.default_rng(21)
        gt, _, _ = standardize_columns(rng.standard_normal((100, 777)))
        yt, _, _ = standardize_columns(rng.standard_normal((100, 9)))
        gt = np.ascontiguousarray(gt.T)
        full, _ = correlate(gt, yt)
        for split in (1, 7, 64, 300, 777):
            parts = [
                correlate(gt[s : s + split], yt)[0]
                for s in range(0, 777, split)
            ]
            stitched = np.vstack(parts)
            assert np.array_equal(stitched, full)

    def test_clamp_counted(self):
        # duplicated unit vectors can drift a hair over 1 in exact arithmetic
        # they do not, so force the count path with a synthetic value
        g = np.array([[2.0, -2.0]])
        y = np.array([[1.0], [-1.0]])
        r, clamped = correlate(g, y)
        assert r[0, 0] == 1.0
        assert clamped == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            correlate(np.zeros((2, 3)), np.zeros((4, 1)))


class TestTFromR:
    def test_zero(self):
        assert t_from_r(0.0, 7.0) == 0.0

    def test_handworked_value(self):
        assert t_from_r(0.5, 2.0) == pytest.approx(
            np.sqrt(2.0 / 3.0), rel=1e-15
        )

    def test_exact_one_maps_to_infinity(self):
        assert t_from_r(1.0, 10.0) == np.inf
        assert t_from_r(-1.0, 10.0) == -np.inf

    def test_sign_matches_r(self):
        rs = np.array([-0.9, -0.1, 0.0, 0.1, 0.9])
        t = t_from_r(rs, 11.0)
        assert np.all(np.sign(t) == np.sign(rs))


class TestStatBlockInvariants:
    def test_ranges_and_signs(self):
        rng = np.random.default_rng(30)
        gt, _, _ = standardize_columns(rng.standard_normal((60, 40)))
        yt, _, _ = standardize_columns(rng.standard_normal((60, 7)))
        stats = compute_stats(np.ascontiguousarray(gt.T), yt, df=58.0)
        assert np.all(np.abs(stats.r) <= 1.0)
        assert np.all(np.sign(stats.t) == np.sign(stats.r))
        assert np.all((stats.p > 0.0) & (stats.p <= 1.0))
        assert np.all((stats.t == 0.0) == (stats.r == 0.0))


class TestOracleEquivalence:
    def test_simple_regression_t(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            n = int(rng.integers(10, 51))
            y = rng.standard_normal(n)
            g = rng.integers(0, 3, size=n).astype(np.float64)
            if g.var() == 0:
                continue
            std = prepare_genotype_batch(make_batch(g[None, :]))
            yt, _, _ = standardize_columns(
                residualize(y[:, None], build_covariate_basis(np.zeros((n, 0))))
            )
            stats = compute_stats(std.matrix, yt, df=float(n - 2))
            ref = ols_single(y, g)
            assert stats.t[0, 0] == pytest.approx(ref.t, abs=1e-8)
            assert stats.p[0, 0] == pytest.approx(ref.p, rel=1e-8)

    def test_fwl_partial_t(self):
        rng = np.random.default_rng(43)
        for _ in range(15):
            n = int(rng.integers(15, 40))
            c = rng.standard_normal((n, 2))
            y = rng.standard_normal(n) + c @ [0.5, -0.2]
            g = rng.integers(0, 3, size=n).astype(np.float64)
            if g.var() == 0:
                continue
            basis = build_covariate_basis(c)
            std = prepare_genotype_batch(
                make_batch(g[None, :]), basis=basis, residualize_genotypes=True
            )
            if std.skip_reason[0] != SkipReason.NONE:
                continue
            yt, _, _ = standardize_columns(residualize(y[:, None], basis))
            df = float(n - basis.rank - 1)
            stats = compute_stats(std.matrix, yt, df=df)
            ref = ols_single(y, g, c)
            assert ref.df == int(df)
            assert stats.t[0, 0] == pytest.approx(ref.t, abs=1e-6)


class TestSymmetryProperties:
    def _stats(self, g, y, n):
        std = prepare_genotype_batch(make_batch(g))
        basis = build_covariate_basis(np.zeros((n, 0)))
        yt, _, _ = standardize_columns(residualize(y, basis))
        return compute_stats(std.matrix, yt, df=float(n - 2))

    def test_allele_flip_antisymmetry(self):
        rng = np.random.default_rng(50)
        n = 30
        g = rng.integers(0, 3, size=(8, n)).astype(np.float64)
        y = rng.standard_normal((n, 4))
        a = self._stats(g, y, n)
        b = self._stats(2.0 - g, y, n)
        np.testing.assert_allclose(a.r, -b.r, atol=1e-12)
        np.testing.assert_allclose(a.t, -b.t, atol=1e-12)
        np.testing.assert_allclose(a.p, b.p, atol=1e-12)

    def test_sample_permutation_invariance(self):
        rng = np.random.default_rng(51)
        n = 25
        g = rng.integers(0, 3, size=(6, n)).astype(np.float64)
        y = rng.standard_normal((n, 3))
        perm = rng.permutation(n)
        a = self._stats(g, y, n)
        b = self._stats(g[:, perm], y[perm], n)
        np.testing.assert_allclose(a.t, b.t, atol=1e-12)
        np.testing.assert_allclose(a.p, b.p, atol=1e-12)

    def test_phenotype_affine_invariance(self):
        rng = np.random.default_rng(52)
        n = 40
        g = rng.integers(0, 3, size=(5, n)).astype(np.float64)
        y = rng.standard_normal((n, 2))
        a = self._stats(g, y, n)
        b = self._stats(g, 3.7 * y + 11.0, n)
        np.testing.assert_allclose(a.r, b.r, atol=1e-10)
        np.testing.assert_allclose(a.t, b.t, atol=1e-10)
        np.testing.assert_allclose(a.p, b.p, atol=1e-10)

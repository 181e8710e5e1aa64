"""Numerical core of the association engine.

The panel side is prepared once: an orthonormal covariate basis Q is built,
phenotypes are centered and projected off Q, then scaled to unit variance
under the 1/N convention. Each genotype batch is imputed, centered and
scaled the same way, so the matrix product of the two standardized blocks
divided by N is exactly the Pearson correlation of every (marker, phenotype)
pair. Correlations convert to t-statistics as t = r * sqrt(df / (1 - r^2))
and to two-sided p-values through the regularized incomplete beta function.

Everything here is a pure function of immutable inputs; batches may be
processed concurrently. Marker rows are pushed through the correlation
product in fixed-shape zero-padded tiles so that a row's statistics are
bit-identical no matter how the scan was batched or scheduled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import PanelGwasError
from .genotypes.types import MarkerRecord, RawBatch

# Smallest positive normal double; p-values are floored here.
P_FLOOR = float(np.finfo(np.float64).tiny)

# Rows per correlation GEMM call; every call uses this exact shape.
_TILE_ROWS = 256

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 500

MONOMORPHIC_VARIANCE = 1e-12
_R_CAP = 1.0 - 1e-15


# ---------------------------------------------------------------------------
# regularized incomplete beta and p-values


def _betacf_scalar(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise PanelGwasError(
        f"incomplete beta continued fraction did not converge "
        f"(a={a}, b={b}, x={x}); this is a bug"
    )


def _betacf_array(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        d = 1.0 / d
        step = d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * step * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise PanelGwasError(
        "incomplete beta continued fraction did not converge on "
        f"{int(active.sum())} elements; this is a bug"
    )


_lgamma_arr = np.frompyfunc(math.lgamma, 1, 1)


def _ln_beta_norm(a, b):
    # log of Gamma(a+b) / (Gamma(a) Gamma(b)); scalar fast path
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        a = float(a)
        b = float(b)
        return math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    return (
        _lgamma_arr(a + b) - _lgamma_arr(a) - _lgamma_arr(b)
    ).astype(np.float64)


def _reg_inc_beta_scalar(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = _ln_beta_norm(a, b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf_scalar(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf_scalar(b, a, 1.0 - x) / b


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].

    Continued-fraction evaluation (modified Lentz) with the usual symmetry
    I_x(a,b) = 1 - I_{1-x}(b,a) chosen by the convergence region
    x < (a+1)/(a+b+2); the normalization prefactor is assembled in log
    space. Scalars in, float out; arrays broadcast elementwise.
    """
    if np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(x) == 0:
        a_f, b_f, x_f = float(a), float(b), float(x)
        if a_f <= 0.0 or b_f <= 0.0:
            raise ValueError("reg_inc_beta requires a > 0 and b > 0")
        if not 0.0 <= x_f <= 1.0:
            raise ValueError("reg_inc_beta requires x in [0, 1]")
        return _reg_inc_beta_scalar(a_f, b_f, x_f)
    if np.any(np.asarray(a) <= 0.0) or np.any(np.asarray(b) <= 0.0):
        raise ValueError("reg_inc_beta requires a > 0 and b > 0")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
        raise ValueError("reg_inc_beta requires x in [0, 1]")

    a_b, b_b, x_b = np.broadcast_arrays(
        np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), x_arr
    )
    out = np.empty(x_b.shape, dtype=np.float64)
    out[x_b <= 0.0] = 0.0
    out[x_b >= 1.0] = 1.0
    mid = (x_b > 0.0) & (x_b < 1.0)
    direct = mid & (x_b < (a_b + 1.0) / (a_b + b_b + 2.0))
    swapped = mid & ~direct
    for mask, flip in ((direct, False), (swapped, True)):
        if not mask.any():
            continue
        if flip:
            aa, bb, xx = b_b[mask], a_b[mask], 1.0 - x_b[mask]
        else:
            aa, bb, xx = a_b[mask], b_b[mask], x_b[mask]
        ln_front = (
            _ln_beta_norm(aa, bb) + aa * np.log(xx) + bb * np.log1p(-xx)
        )
        val = np.exp(ln_front) * _betacf_array(aa, bb, xx) / aa
        out[mask] = 1.0 - val if flip else val
    return out


def p_from_t(t, df: float):
    """Two-sided p-value for a t-statistic: I_{df/(df+t^2)}(df/2, 1/2).

    p(0, df) is exactly 1; infinite t maps to the floor. Results are floored
    at the smallest positive normal double (P_FLOOR); the caller can count
    underflows as `p <= P_FLOOR`.
    """
    if df < 1.0:
        raise ValueError("p_from_t requires df >= 1")
    if np.ndim(t) == 0:
        t_f = float(t)
        x = df / (df + t_f * t_f)
        return max(_reg_inc_beta_scalar(df / 2.0, 0.5, x), P_FLOOR)
    t_arr = np.asarray(t, dtype=np.float64)
    with np.errstate(over="ignore"):
        x = df / (df + t_arr * t_arr)
    p = reg_inc_beta(df / 2.0, 0.5, x)
    return np.maximum(p, P_FLOOR)


def t_threshold_for_p(p_threshold: float, df: float) -> float:
    """Smallest |t| whose two-sided p is <= p_threshold (bisection).

    Inverts the strictly monotone p_from_t; returns 0 for thresholds >= 1
    and +inf for thresholds below the representable p floor.
    """
    if not 0.0 < p_threshold <= 1.0:
        raise ValueError("p_threshold must be in (0, 1]")
    if p_threshold >= 1.0:
        return 0.0
    if p_threshold < P_FLOOR:
        return math.inf
    lo, hi = 0.0, 1.0
    while p_from_t(hi, df) > p_threshold:
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if p_from_t(mid, df) > p_threshold:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# covariate basis and panel preprocessing


@dataclass(frozen=True)
class CovariateBasis:
    """Orthonormal basis of the covariate span (intercept included by default)."""

    q: np.ndarray
    source_columns: tuple[str, ...]
    dropped_columns: tuple[str, ...]

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]


def build_covariate_basis(
    covariates: np.ndarray,
    include_intercept: bool = True,
    rank_tolerance: float = 1e-8,
    column_names: list[str] | None = None,
) -> CovariateBasis:
    """Orthonormalize [intercept | covariates] with rank detection.

    Columns whose residual norm after projection onto the accepted columns
    is <= rank_tolerance times their own norm are dropped. Gram-Schmidt with
    re-orthogonalization keeps max |Q^T Q - I| at the 1e-15 level.
    """
    c = np.asarray(covariates, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("covariates must be a 2-D (samples x columns) array")
    if np.isnan(c).any():
        raise ValueError("covariate matrix contains NaN")
    n = c.shape[0]
    names = list(column_names or [f"covar{j + 1}" for j in range(c.shape[1])])
    if len(names) != c.shape[1]:
        raise ValueError("column_names length does not match covariates")

    candidates: list[tuple[str, np.ndarray]] = []
    if include_intercept:
        candidates.append(("intercept", np.ones(n)))
    candidates.extend((names[j], c[:, j]) for j in range(c.shape[1]))

    accepted: list[np.ndarray] = []
    kept: list[str] = []
    dropped: list[str] = []
    for name, col in candidates:
        norm0 = float(np.linalg.norm(col))
        resid = col.astype(np.float64, copy=True)
        for _ in range(2):
            for qc in accepted:
                resid -= (qc @ resid) * qc
        norm_r = float(np.linalg.norm(resid))
        if norm_r <= rank_tolerance * norm0 or norm0 == 0.0:
            dropped.append(name)
            continue
        accepted.append(resid / norm_r)
        kept.append(name)
    q = np.column_stack(accepted) if accepted else np.zeros((n, 0))
    if n < q.shape[1] + 2:
        raise PanelGwasError(
            f"insufficient residual degrees of freedom: {n} samples for a "
            f"rank-{q.shape[1]} covariate basis"
        )
    return CovariateBasis(q, tuple(kept), tuple(dropped))


def residualize(y: np.ndarray, basis: CovariateBasis) -> np.ndarray:
    """Center columns and project off the covariate basis.

    Computes centered(Y) - Q (Q^T centered(Y)); the N x N projector is never
    materialized.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("expected a 2-D (samples x phenotypes) matrix")
    if y.shape[0] != basis.n_samples:
        raise ValueError(
            f"row count {y.shape[0]} does not match basis "
            f"({basis.n_samples} samples)"
        )
    yc = y - y.mean(axis=0, keepdims=True)
    if basis.rank:
        yc -= basis.q @ (basis.q.T @ yc)
    return yc


def standardize_columns(
    y_res: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale columns to unit 1/N variance.

    Returns (standardized matrix, per-column sd, zero-variance flags).
    Zero-variance columns are zero-filled and flagged instead of divided.
    """
    y = np.asarray(y_res, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("standardize_columns requires finite input")
    mean_before = y.mean(axis=0)
    yc = y - mean_before
    sd = np.sqrt(np.mean(yc * yc, axis=0))
    zero = sd <= 1e-12 * np.maximum(1.0, np.abs(mean_before))
    out = yc / np.where(zero, 1.0, sd)
    out[:, zero] = 0.0
    return out, sd, zero


# ---------------------------------------------------------------------------
# genotype batch preparation


class SkipReason(enum.IntEnum):
    NONE = 0
    MONOMORPHIC = 1
    ALL_MISSING = 2


@dataclass(frozen=True)
class StandardizedBatch:
    """Mean-imputed, centered, unit-variance marker rows plus per-marker QC."""

    markers: tuple[MarkerRecord, ...]
    matrix: np.ndarray
    allele_frequency: np.ndarray
    missing_count: np.ndarray
    variance_before_scaling: np.ndarray
    skip_reason: np.ndarray

    @property
    def skip_mask(self) -> np.ndarray:
        return self.skip_reason != SkipReason.NONE


def prepare_genotype_batch(
    raw: RawBatch,
    basis: CovariateBasis | None = None,
    residualize_genotypes: bool = False,
    dtype=np.float64,
) -> StandardizedBatch:
    """Standardize a raw dosage batch row-wise.

    Per marker: missing dosages are replaced by the marker's non-missing
    mean, the allele frequency (mean dosage / 2) is recorded, the row is
    centered, optionally projected off the covariate basis, and scaled to
    unit 1/N variance. Rows with variance <= 1e-12 are flagged MONOMORPHIC,
    fully missing rows ALL_MISSING; flagged rows are zero-filled and must be
    excluded from emitted statistics. All arithmetic runs in float64; the
    requested dtype only controls how the result is stored.
    """
    d = np.array(raw.dosages, dtype=np.float64, copy=True)
    n = d.shape[1]
    missing = np.isnan(d)
    missing_count = missing.sum(axis=1)
    n_obs = n - missing_count
    all_missing = n_obs == 0
    with np.errstate(invalid="ignore"):
        sums = np.nansum(d, axis=1)
    mean = np.divide(
        sums, n_obs, out=np.zeros(d.shape[0]), where=~all_missing
    )
    af = mean / 2.0
    af[all_missing] = np.nan
    if missing.any():
        fill = np.broadcast_to(mean[:, None], d.shape)
        d[missing] = fill[missing]
    d -= d.mean(axis=1)[:, None]
    if residualize_genotypes and basis is not None and basis.rank:
        d -= (d @ basis.q) @ basis.q.T
    variance = np.mean(d * d, axis=1)
    skip = np.zeros(d.shape[0], dtype=np.int8)
    skip[variance <= MONOMORPHIC_VARIANCE] = SkipReason.MONOMORPHIC
    skip[all_missing] = SkipReason.ALL_MISSING
    scale = np.where(skip == SkipReason.NONE, np.sqrt(variance), 1.0)
    d /= scale[:, None]
    d[skip != SkipReason.NONE] = 0
    return StandardizedBatch(
        raw.markers, d.astype(dtype, copy=False), af,
        missing_count.astype(np.int64), variance, skip,
    )


# ---------------------------------------------------------------------------
# correlation and statistics


def correlate(gt: np.ndarray, yt: np.ndarray) -> tuple[np.ndarray, int]:
    """Correlations of standardized rows vs standardized columns: G Y / N.

    Both inputs must be standardized under the 1/N convention with a shared
    sample dimension. Entries are clamped to [-1, 1] after the product;
    returns (R, clamp count). Rows go through GEMM in zero-padded tiles of
    fixed shape so each row's result is independent of the batch it arrived
    in; accumulation is float64 regardless of storage precision.
    """
    if gt.ndim != 2 or yt.ndim != 2 or gt.shape[1] != yt.shape[0]:
        raise ValueError(
            f"shape mismatch: genotypes {gt.shape} vs phenotypes {yt.shape}"
        )
    m, n = gt.shape
    p = yt.shape[1]
    y64 = np.ascontiguousarray(yt, dtype=np.float64)
    r = np.empty((m, p), dtype=np.float64)
    tile = np.zeros((_TILE_ROWS, n), dtype=np.float64)
    prod = np.empty((_TILE_ROWS, p), dtype=np.float64)
    for s in range(0, m, _TILE_ROWS):
        k = min(_TILE_ROWS, m - s)
        tile[:k] = gt[s : s + k]
        if k < _TILE_ROWS:
            tile[k:] = 0.0
        np.matmul(tile, y64, out=prod)
        r[s : s + k] = prod[:k]
    r /= float(n)
    clamped = int(np.count_nonzero(np.abs(r) > 1.0))
    np.clip(r, -1.0, 1.0, out=r)
    return r, clamped


def t_from_r(r, df: float):
    """t = r * sqrt(df / (1 - r^2)) with |r| capped at 1 - 1e-15.

    Exact |r| = 1 (degenerate duplicated vectors) maps to the signed
    infinity sentinel; its p-value is the floor.
    """
    if df < 1.0:
        raise ValueError("t_from_r requires df >= 1")
    scalar_in = np.ndim(r) == 0
    r_arr = np.asarray(r, dtype=np.float64)
    a = np.abs(r_arr)
    exact_one = a >= 1.0
    a = np.minimum(a, _R_CAP)
    t = np.sign(r_arr) * a * np.sqrt(df / (1.0 - a * a))
    with np.errstate(invalid="ignore"):  # sign 0 * inf only where discarded
        t = np.where(exact_one, np.sign(r_arr) * np.inf, t)
    if scalar_in:
        return float(t)
    return t


@dataclass(frozen=True)
class StatBlock:
    """Per-batch association statistics (skipped rows/columns are zeros)."""

    r: np.ndarray
    t: np.ndarray
    df: float
    p: np.ndarray | None
    clamp_count: int
    p_underflow_count: int


def compute_stats(
    gt_std: np.ndarray, yt_std: np.ndarray, df: float, with_p: bool = True
) -> StatBlock:
    """Full correlation -> t -> p block for one standardized batch."""
    r, clamped = correlate(gt_std, yt_std)
    t = t_from_r(r, df)
    p = None
    underflow = 0
    if with_p:
        p = p_from_t(t, df)
        underflow = int(np.count_nonzero(p <= P_FLOOR))
    return StatBlock(r, t, df, p, clamped, underflow)

"""Independent correctness machinery: per-trait OLS and concordance metrics.

The OLS reference deliberately shares no linear-algebra path with the
engine (normal equations with a rank-revealing solve, versus the engine's
projection/correlation route), so agreement between the two is evidence
rather than tautology. The p-value conversion is shared and is validated
separately against closed forms. Single-threaded by design; clarity over
speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PanelGwasError
from .kernel import P_FLOOR, p_from_t

_RANK_RTOL = 1e-10
_PERFECT_FIT_RTOL = 1e-26


@dataclass(frozen=True)
class OlsResult:
    """Genotype-term estimate from y ~ intercept (+ covariates) + g."""

    beta: float
    se: float
    t: float
    p: float
    df: int


def ols_single(
    y: np.ndarray, g: np.ndarray, covariates: np.ndarray | None = None
) -> OlsResult:
    """Exact least squares for one (phenotype, marker) pair.

    Normal equations solved through an SVD (rank-revealing); a singular
    design is fatal. A numerically perfect fit yields the infinite-t
    sentinel with the floored p-value.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    n = y.size
    if g.size != n:
        raise ValueError("y and g lengths differ")
    if covariates is not None:
        c = np.asarray(covariates, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != n:
            raise ValueError("covariate rows do not match y")
        n_params = c.shape[1] + 2
    else:
        c = None
        n_params = 2
    x = np.empty((n, n_params))
    x[:, 0] = 1.0
    if c is not None:
        x[:, 1:-1] = c
    x[:, -1] = g
    if n <= n_params:
        raise PanelGwasError(
            f"ols_single needs more than {n_params} samples, got {n}"
        )
    xtx = x.T @ x
    xty = x.T @ y
    u, s, vt = np.linalg.svd(xtx)
    if s[0] <= 0 or s[-1] <= _RANK_RTOL * s[0]:
        raise PanelGwasError("rank-deficient design in ols_single")
    xtx_inv = (vt.T * (1.0 / s)) @ u.T
    beta = xtx_inv @ xty
    resid = y - x @ beta
    rss = float(resid @ resid)
    df = n - n_params
    beta_g = float(beta[-1])
    yty = float(y @ y)
    if rss <= _PERFECT_FIT_RTOL * max(yty, 1.0):
        t = np.inf if beta_g > 0 else (-np.inf if beta_g < 0 else 0.0)
        return OlsResult(beta_g, 0.0, float(t), P_FLOOR if t else 1.0, df)
    sigma2 = rss / df
    var_g = sigma2 * float(xtx_inv[-1, -1])
    se = np.sqrt(max(var_g, 0.0))
    if se == 0.0:
        t = np.inf if beta_g > 0 else (-np.inf if beta_g < 0 else 0.0)
    else:
        t = beta_g / se
    return OlsResult(beta_g, float(se), float(t), p_from_t(t, df), df)


@dataclass(frozen=True)
class ConcordanceReport:
    """Agreement metrics between two keyed stat maps."""

    n_pairs: int
    pearson_r_neglog10p: float
    max_abs_dt: float
    sign_agreement: float
    worst_pairs: list[tuple]

    def metrics(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "pearson_r_neglog10p": self.pearson_r_neglog10p,
            "max_abs_dt": self.max_abs_dt,
            "sign_agreement": self.sign_agreement,
        }

    def to_text(self) -> str:
        lines = [
            f"pairs compared:            {self.n_pairs}",
            f"pearson r of -log10(p):    {self.pearson_r_neglog10p:.6f}",
            f"max |t_a - t_b|:           {self.max_abs_dt:.3e}",
            f"sign agreement:            {self.sign_agreement:.6f}",
            "worst pairs by |delta -log10(p)|:",
        ]
        for key, t_a, t_b, dlp in self.worst_pairs:
            lines.append(
                f"  {key[0]} x {key[1]}: t {t_a:.6g} vs {t_b:.6g} "
                f"(dlog10p {dlp:.3e})"
            )
        return "\n".join(lines)


def concordance_report(
    stats_a: dict[tuple[str, str], tuple[float, float]],
    stats_b: dict[tuple[str, str], tuple[float, float]],
    n_worst: int = 10,
) -> ConcordanceReport:
    """Compare two {(marker, phenotype): (t, p)} maps over matched keys."""
    keys_a = set(stats_a)
    keys_b = set(stats_b)
    if keys_a != keys_b:
        only_a = sorted(keys_a - keys_b)[:3]
        only_b = sorted(keys_b - keys_a)[:3]
        raise PanelGwasError(
            f"mismatched keys: {len(keys_a - keys_b)} only in first "
            f"(e.g. {only_a}), {len(keys_b - keys_a)} only in second "
            f"(e.g. {only_b})"
        )
    if not keys_a:
        raise PanelGwasError("no pairs to compare")
    keys = sorted(keys_a)
    t_a = np.array([stats_a[k][0] for k in keys])
    t_b = np.array([stats_b[k][0] for k in keys])
    p_a = np.array([stats_a[k][1] for k in keys])
    p_b = np.array([stats_b[k][1] for k in keys])
    lp_a = -np.log10(p_a)
    lp_b = -np.log10(p_b)

    with np.errstate(invalid="ignore"):  # matched infinities subtract to nan
        dt = np.abs(t_a - t_b)
    both_inf = np.isinf(t_a) & np.isinf(t_b) & (np.sign(t_a) == np.sign(t_b))
    dt[both_inf] = 0.0
    max_dt = float(np.max(dt)) if dt.size else 0.0

    dlp = np.abs(lp_a - lp_b)
    if np.allclose(lp_a, lp_b, rtol=0.0, atol=0.0):
        pearson = 1.0
    elif np.std(lp_a) == 0.0 or np.std(lp_b) == 0.0:
        pearson = float("nan")
    else:
        pearson = float(np.corrcoef(lp_a, lp_b)[0, 1])
    sign_agree = float(np.mean(np.sign(t_a) == np.sign(t_b)))

    order = np.argsort(-dlp, kind="stable")[:n_worst]
    worst = [
        (keys[int(i)], float(t_a[int(i)]), float(t_b[int(i)]), float(dlp[int(i)]))
        for i in order
    ]
    return ConcordanceReport(len(keys), pearson, max_dt, sign_agree, worst)

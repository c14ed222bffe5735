"""Variance estimation and testing for the saturated jackknife estimator.

The variance estimator combines per-observation error-moment estimates with
quadratic forms in A:

    V = [ r' A D_{s_u} A r  +  T' A D_{s_v} A T  +  2 r' A D_{s_uv} A T ]
        / (T' A T)^2,       with r = Y - T beta.

The error moments come from Hartley-style unbiased estimators that invert the
Hadamard square of the cell-demeaning operator; cells of size 2 make that
inverse singular and are routed to a rescaled fallback that biases the
variance upward (conservative).  Evaluating everything at a hypothesized
beta_0 instead of the estimate yields the identification-robust score test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .blockops import (
    apply_A,
    apply_M_WZ,
    apply_MM_inv,
    apply_MM_inv_W,
    cell_sizes,
)
from .design import DesignError, Sample, SaturatedDesign
from .estimators import (
    EstimationError,
    WeakDenominatorError,
    estimate_sive,
    first_stage_strength,
)

__all__ = [
    "SigmaEstimates",
    "InferenceReport",
    "NonpositiveVarianceError",
    "hartley_sigma",
    "sive_variance",
    "t_test",
    "confidence_interval",
    "robust_test",
    "robust_ci",
    "chao_variance",
    "sive_report",
]

DENOMINATOR_RTOL = 1e-12


class NonpositiveVarianceError(EstimationError):
    """The variance estimate is not positive; directs users to the robust test."""


@dataclass(frozen=True)
class SigmaEstimates:
    """Per-observation error-moment estimates.

    sigma_u2 estimates E[u^2 | .] (treatment-equation error), sigma_v2 the
    residual-equation counterpart and sigma_uv the cross moment.
    used_fallback marks observations whose cell has size 2.
    """

    sigma_u2: np.ndarray
    sigma_v2: np.ndarray
    sigma_uv: np.ndarray
    used_fallback: np.ndarray


def hartley_sigma(design: SaturatedDesign, treatment, residual) -> SigmaEstimates:
    """Unbiased per-observation variance/covariance estimates.

    For observations in cells of size >= 3, applies the inverse Hadamard
    square of the cell demeaner to the products of demeaned treatment and
    residual.  Observations sharing their cell with exactly one other get the
    rescaled products ``4 (M a)_i (M b)_i`` instead, which biases the
    assembled variance upward.

    Parameters
    ----------
    treatment : array_like, length n
    residual : array_like, length n
        ``Y - T beta`` at whichever beta the caller is testing.
    """
    treatment = np.asarray(treatment, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    k = cell_sizes(design)
    if (k < 2).any():
        i = int(np.argmax(k < 2))
        raise DesignError(
            f"observation {i} is alone in its cell; every cell needs size >= 2"
        )
    ut = apply_M_WZ(design, treatment)
    rt = apply_M_WZ(design, residual)
    uu = ut * ut
    vv = rt * rt
    uv = rt * ut
    big = k >= 3
    sigma_u2 = np.where(big, apply_MM_inv(design, np.where(big, uu, 0.0)), 4.0 * uu)
    sigma_v2 = np.where(big, apply_MM_inv(design, np.where(big, vv, 0.0)), 4.0 * vv)
    sigma_uv = np.where(big, apply_MM_inv(design, np.where(big, uv, 0.0)), 4.0 * uv)
    return SigmaEstimates(
        sigma_u2=sigma_u2,
        sigma_v2=sigma_v2,
        sigma_uv=sigma_uv,
        used_fallback=~big,
    )


def _score_and_variance(
    design: SaturatedDesign, Y: np.ndarray, T: np.ndarray, beta: float
) -> tuple[float, float, float]:
    """Score ``T'A(Y - T beta)``, its variance estimate, and ``T'AT``."""
    resid = Y - beta * T
    sig = hartley_sigma(design, T, resid)
    a_t = apply_A(design, T)
    a_r = apply_A(design, resid)
    score = float(a_t @ resid)
    var = float(
        sig.sigma_u2 @ (a_r * a_r)
        + sig.sigma_v2 @ (a_t * a_t)
        + 2.0 * (sig.sigma_uv @ (a_r * a_t))
    )
    return score, var, float(a_t @ T)


def _check_lengths(design: SaturatedDesign, Y, T) -> tuple[np.ndarray, np.ndarray]:
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if Y.shape != (design.n,) or T.shape != (design.n,):
        raise DesignError(f"Y and T must both have length n={design.n}")
    return Y, T


def sive_variance(design: SaturatedDesign, Y, T, beta: float) -> float:
    """Variance estimate for the saturated jackknife estimator at ``beta``.

    ``beta`` is the point estimate in the standard mode or a hypothesized
    value in the identification-robust mode.  The result is not a sum of
    squares and can be negative in finite samples; negativity is surfaced by
    the consumers rather than truncated here.
    """
    Y, T = _check_lengths(design, Y, T)
    _, var, t_a_t = _score_and_variance(design, Y, T, beta)
    if abs(t_a_t) <= DENOMINATOR_RTOL * float(T @ T):
        raise WeakDenominatorError(
            "T'AT is numerically zero; use the identification-robust test"
        )
    return var / t_a_t**2


def t_test(beta_hat: float, variance: float, beta0: float, alpha: float = 0.05) -> dict:
    """Two-sided normal test of ``beta = beta0``.

    Returns ``{"t", "reject", "p"}``.
    """
    if not variance > 0.0:
        raise NonpositiveVarianceError(
            f"variance estimate {variance} is not positive; "
            "use the identification-robust test (robust_test / robust_ci)"
        )
    t = (beta_hat - beta0) / np.sqrt(variance)
    p = 2.0 * float(norm.sf(abs(t)))
    return {"t": float(t), "reject": bool(p < alpha), "p": p}


def confidence_interval(
    beta_hat: float, variance: float, alpha: float = 0.05
) -> tuple[float, float]:
    """Symmetric two-sided interval ``beta_hat +/- z_{1-alpha/2} sqrt(variance)``."""
    if not variance > 0.0:
        raise NonpositiveVarianceError(
            f"variance estimate {variance} is not positive; "
            "use the identification-robust test (robust_test / robust_ci)"
        )
    half = float(norm.ppf(1.0 - alpha / 2.0)) * float(np.sqrt(variance))
    return beta_hat - half, beta_hat + half


def robust_test(
    design: SaturatedDesign,
    Y,
    T,
    beta0: float,
    alpha: float = 0.05,
    two_sided: bool = True,
) -> dict:
    """Identification-robust score test of ``beta = beta0``.

    Uses the score ``T'A(Y - T beta0)`` with its variance evaluated at
    ``beta0``, so validity needs no identification strength.  A nonpositive
    variance estimate yields a non-rejection (conservative).  Returns
    ``{"score", "variance_at_beta0", "reject"}``.
    """
    Y, T = _check_lengths(design, Y, T)
    score, var, _ = _score_and_variance(design, Y, T, beta0)
    if var > 0.0:
        stat = score / np.sqrt(var)
        if two_sided:
            reject = abs(stat) > float(norm.ppf(1.0 - alpha / 2.0))
        else:
            reject = stat > float(norm.ppf(1.0 - alpha))
    else:
        reject = False
    return {"score": score, "variance_at_beta0": var, "reject": bool(reject)}


def robust_ci(
    design: SaturatedDesign,
    Y,
    T,
    grid: dict | None = None,
    alpha: float = 0.05,
    two_sided: bool = True,
) -> dict:
    """Confidence set by inverting the identification-robust test on a grid.

    ``grid`` is ``{"low", "high", "step"}``; ``step`` defaults to the range
    divided by 400.  Without a grid, the range defaults to the point estimate
    plus/minus 10 standard errors, which requires the standard variance to
    exist.  The result lists maximal contiguous non-rejected intervals, which
    may be empty or disjoint; ``unbounded_within_grid`` flags acceptance at
    either grid edge.
    """
    Y, T = _check_lengths(design, Y, T)
    if grid is None:
        beta_hat = estimate_sive(design, Sample(Y, T))
        variance = sive_variance(design, Y, T, beta_hat)
        if not variance > 0.0:
            raise NonpositiveVarianceError(
                "cannot derive a default grid: the variance estimate is not "
                "positive; supply grid={'low': ..., 'high': ..., 'step': ...}"
            )
        se = float(np.sqrt(variance))
        grid = {"low": beta_hat - 10.0 * se, "high": beta_hat + 10.0 * se}
    low = float(grid["low"])
    high = float(grid["high"])
    if not high > low:
        raise ValueError(f"grid high {high} must exceed grid low {low}")
    step = float(grid.get("step") or (high - low) / 400.0)
    if step <= 0.0:
        raise ValueError("grid step must be positive")
    points = low + step * np.arange(int(np.floor((high - low) / step)) + 1)

    accepted = np.empty(points.size, dtype=bool)
    for j, beta0 in enumerate(points):
        accepted[j] = not robust_test(
            design, Y, T, float(beta0), alpha=alpha, two_sided=two_sided
        )["reject"]

    intervals = []
    start = None
    for j, ok in enumerate(accepted):
        if ok and start is None:
            start = j
        elif not ok and start is not None:
            intervals.append((float(points[start]), float(points[j - 1])))
            start = None
    if start is not None:
        intervals.append((float(points[start]), float(points[-1])))

    return {
        "intervals": intervals,
        "unbounded_within_grid": bool(accepted[0] or accepted[-1]),
        "grid": {"low": low, "high": high, "step": step},
        "alpha": alpha,
    }


def _hadamard_A_apply(design: SaturatedDesign, w: np.ndarray) -> np.ndarray:
    """Apply the elementwise square of A, blockwise per group."""
    g = design.group_of
    z = design.instrument.astype(bool)
    n_g = design.group_sizes.astype(np.float64)
    m_g = design.treated_counts.astype(np.float64)
    a_act = ((n_g - m_g) / (n_g * (m_g - 1.0))) ** 2
    a_ina = (m_g / (n_g * (n_g - m_g - 1.0))) ** 2
    a_mix = 1.0 / n_g**2
    s_act = np.bincount(g[z], weights=w[z], minlength=design.G)
    s_ina = np.bincount(g[~z], weights=w[~z], minlength=design.G)
    out_act = a_act[g] * (s_act[g] - w) + a_mix[g] * s_ina[g]
    out_ina = a_mix[g] * s_act[g] + a_ina[g] * (s_ina[g] - w)
    return np.where(z, out_act, out_ina)


def chao_variance(design: SaturatedDesign, Y, T, beta_hat: float) -> float:
    """Comparison variance estimator built from group-level moment estimates.

    ``V_c = (T'A D_1 A T + (e*u)' J (A*A) J (e*u)) / (T'AT)^2`` where J is the
    inverse Hadamard square of the group demeaner, ``D_1 = diag(J (e*e))``,
    and e, u are the cell-demeaned residual and treatment.  Requires every
    group to have at least 3 observations; unlike the main estimator it is not
    robust to within-group effect heterogeneity.
    """
    Y, T = _check_lengths(design, Y, T)
    eps = apply_M_WZ(design, Y - beta_hat * T)
    u = apply_M_WZ(design, T)
    d1 = apply_MM_inv_W(design, eps * eps)
    a_t = apply_A(design, T)
    t_a_t = float(a_t @ T)
    if abs(t_a_t) <= DENOMINATOR_RTOL * float(T @ T):
        raise WeakDenominatorError(
            "T'AT is numerically zero; use the identification-robust test"
        )
    term1 = float(d1 @ (a_t * a_t))
    w = apply_MM_inv_W(design, eps * u)
    term2 = float(w @ _hadamard_A_apply(design, w))
    return (term1 + term2) / t_a_t**2


@dataclass(frozen=True)
class InferenceReport:
    """Point estimate with variance, interval, test and first-stage diagnostics.

    Fields that require a positive variance are None when no variance is
    available for the estimator.
    """

    beta_hat: float
    variance: float | None
    std_error: float | None
    ci_low: float | None
    ci_high: float | None
    beta0: float
    t_stat: float | None
    fs_diag: dict | None

    def to_json_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat,
            "variance": self.variance,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "beta0": self.beta0,
            "t_stat": self.t_stat,
            "fs_diag": self.fs_diag,
        }


def sive_report(
    design: SaturatedDesign,
    sample: Sample,
    alpha: float = 0.05,
    beta0: float = 0.0,
) -> InferenceReport:
    """Full inference report for the saturated jackknife estimator.

    An exactly zero variance (noiseless data) degenerates gracefully: zero
    standard error, a point interval, and no t statistic.  A negative
    variance estimate is surfaced as an error.
    """
    beta_hat = estimate_sive(design, sample)
    variance = sive_variance(design, sample.outcome, sample.treatment, beta_hat)
    if variance < 0.0:
        raise NonpositiveVarianceError(
            f"variance estimate {variance} is negative; "
            "use the identification-robust test (robust_test / robust_ci)"
        )
    if variance > 0.0:
        ci_low, ci_high = confidence_interval(beta_hat, variance, alpha)
        t_stat = t_test(beta_hat, variance, beta0, alpha)["t"]
    else:
        ci_low, ci_high = beta_hat, beta_hat
        t_stat = None
    return InferenceReport(
        beta_hat=beta_hat,
        variance=variance,
        std_error=float(np.sqrt(variance)),
        ci_low=ci_low,
        ci_high=ci_high,
        beta0=beta0,
        t_stat=t_stat,
        fs_diag=first_stage_strength(design, treatment=sample.treatment),
    )

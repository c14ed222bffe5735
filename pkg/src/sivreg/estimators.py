"""Point estimators and population estimand oracles.

The four saturated estimators are ratios of quadratic forms ``T' Op Y / T' Op
T`` that differ only in the operator:

* TSLS uses ``P``,
* JIVE1 removes the diagonal, ``P - D_P``,
* JIVE2 sandwiches the diagonal removal between group demeanings,
  ``M_W (P - D_P) M_W``,
* SIVE replaces the diagonal with its cell-demeaned counterpart,
  ``A = P - M_WZ D M_WZ``.

The population_* functions evaluate the corresponding estimands at the
realized group counts, which is what the Monte Carlo harness uses as truth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .blockops import (
    apply_A,
    apply_M_W,
    apply_P,
    projection_diag_P,
    _require_nondegenerate,
)
from .design import DesignError, Sample, SaturatedDesign

__all__ = [
    "EstimatorKind",
    "PopulationInputs",
    "EstimationError",
    "WeakDenominatorError",
    "RankDeficiencyError",
    "estimate_sive",
    "estimate_tsls",
    "estimate_jive1",
    "estimate_jive2",
    "estimate_tsls_generic",
    "population_estimand",
    "population_moments",
    "first_stage_strength",
]

# Relative pivot tolerance for dropping collinear columns in the generic path.
PIVOT_RTOL = 1e-10
# |T' Op T| below this times ||T||^2 counts as a zero denominator.
DENOMINATOR_RTOL = 1e-12


class EstimationError(RuntimeError):
    """An estimator could not be computed from the data."""


class WeakDenominatorError(EstimationError):
    """The quadratic-form denominator is numerically zero."""


class RankDeficiencyError(EstimationError):
    """The generic design matrices are rank deficient."""


class EstimatorKind(enum.Enum):
    TSLS_SATURATED = "tsls-saturated"
    JIVE1 = "jive1"
    JIVE2 = "jive2"
    SIVE = "sive"
    TSLS_GENERIC = "tsls-generic"


@dataclass(frozen=True)
class PopulationInputs:
    """Population quantities entering the estimand formulas.

    pi and tau are per-group (complier share and local effect).  sigma_ue and
    sigma_uu are per-observation conditional moments E[u e | .] and E[u^2 | .]
    (scalars broadcast to a homoskedastic model).  psi and phi are the
    per-group inactive-cell means of treatment and outcome; only the JIVE1
    estimand needs them.
    """

    pi: object
    tau: object
    sigma_ue: object = None
    sigma_uu: object = None
    psi: object = None
    phi: object = None


def _check_sample(design: SaturatedDesign, sample: Sample) -> None:
    if sample.n != design.n:
        raise DesignError(
            f"sample has {sample.n} rows but design has {design.n} observations"
        )


def _ratio(design: SaturatedDesign, sample: Sample, op_T: np.ndarray) -> float:
    T = sample.treatment
    den = float(op_T @ T)
    if abs(den) <= DENOMINATOR_RTOL * float(T @ T):
        raise WeakDenominatorError(
            "quadratic-form denominator is numerically zero relative to ||T||^2; "
            "identification is too weak for a point estimate, use the "
            "identification-robust test instead"
        )
    return float(op_T @ sample.outcome) / den


def estimate_sive(design: SaturatedDesign, sample: Sample) -> float:
    """``T'AY / T'AT`` via the closed-form block operators."""
    _check_sample(design, sample)
    return _ratio(design, sample, apply_A(design, sample.treatment))


def estimate_tsls(design: SaturatedDesign, sample: Sample) -> float:
    """``T'PY / T'PT`` on the saturated design."""
    _check_sample(design, sample)
    return _ratio(design, sample, apply_P(design, sample.treatment))


def estimate_jive1(design: SaturatedDesign, sample: Sample) -> float:
    """Ratio with the diagonal of P removed."""
    _check_sample(design, sample)
    T = sample.treatment
    p_diag = projection_diag_P(design)
    return _ratio(design, sample, apply_P(design, T) - p_diag * T)


def estimate_jive2(design: SaturatedDesign, sample: Sample) -> float:
    """Ratio with ``M_W (P - D_P) M_W``; demeans before removing the diagonal."""
    _check_sample(design, sample)
    Td = apply_M_W(design, sample.treatment)
    p_diag = projection_diag_P(design)
    op_T = apply_M_W(design, apply_P(design, Td) - p_diag * Td)
    return _ratio(design, sample, op_T)


def _drop_collinear(columns: np.ndarray, names: list) -> tuple[np.ndarray, list, list]:
    """Keep a maximal independent column subset via pivoted QR."""
    if columns.shape[1] == 0:
        return columns, list(names), []
    r = scipy.linalg.qr(columns, mode="r", pivoting=True)
    diag = np.abs(np.diag(r[0]))[: min(columns.shape)]
    rank = int(np.sum(diag > PIVOT_RTOL * diag[0])) if diag.size and diag[0] > 0 else 0
    kept_idx = sorted(r[1][:rank])
    dropped = [names[j] for j in range(columns.shape[1]) if j not in set(kept_idx)]
    return columns[:, kept_idx], [names[j] for j in kept_idx], dropped


def estimate_tsls_generic(
    Y,
    T,
    instrument_matrix,
    control_matrix=None,
    instrument_names=None,
    control_names=None,
) -> tuple[float, float]:
    """Textbook two-stage least squares on explicit design matrices.

    Collinear columns are dropped by pivoted QR elimination (controls first,
    then instruments against the surviving controls).  Returns the treatment
    coefficient and its HC0 sandwich variance.

    Raises
    ------
    RankDeficiencyError
        If no instrument survives elimination or the projected regressors are
        singular; the message lists the columns that elimination removed.
    """
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    Zin = np.atleast_2d(np.asarray(instrument_matrix, dtype=np.float64))
    if Zin.shape[0] == 1 and Y.size > 1:
        Zin = Zin.T
    if control_matrix is None:
        C = np.empty((Y.size, 0))
    else:
        C = np.asarray(control_matrix, dtype=np.float64)
        if C.ndim == 1:
            C = C[:, None]
    if instrument_names is None:
        instrument_names = [f"instrument[{j}]" for j in range(Zin.shape[1])]
    if control_names is None:
        control_names = [f"control[{j}]" for j in range(C.shape[1])]

    C, kept_control_names, dropped = _drop_collinear(C, list(control_names))
    # Instruments collinear with the controls carry no identifying variation.
    combined, kept_names, dropped_z = _drop_collinear(
        np.hstack([C, Zin]), kept_control_names + list(instrument_names)
    )
    dropped += dropped_z
    n_controls = len(kept_control_names)
    Zfull = combined
    if Zfull.shape[1] <= n_controls:
        raise RankDeficiencyError(
            "no instrument column survives collinearity elimination; dropped: "
            + ", ".join(dropped)
        )

    X = np.column_stack([T, C])
    coef, *_ = np.linalg.lstsq(Zfull, X, rcond=None)
    Xhat = Zfull @ coef
    XtX = Xhat.T @ X
    cond = np.linalg.cond(XtX)
    if not np.isfinite(cond) or cond > 1.0 / PIVOT_RTOL:
        raise RankDeficiencyError(
            "projected regressors are rank deficient (treatment may be collinear "
            "with the controls); dropped columns: " + (", ".join(dropped) or "none")
        )
    beta = np.linalg.solve(XtX, Xhat.T @ Y)
    resid = Y - X @ beta
    bread = np.linalg.inv(XtX)
    meat = (Xhat * resid[:, None] ** 2).T @ Xhat
    cov = bread @ meat @ bread.T
    return float(beta[0]), float(cov[0, 0])


def _broadcast_group(values, G: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(G, float(arr))
    if arr.shape != (G,):
        raise ValueError(f"{name} must be a scalar or have length G={G}")
    return arr


def _broadcast_obs(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or have length n={n}")
    return arr


def population_moments(
    kind: EstimatorKind, design: SaturatedDesign, inputs: PopulationInputs
) -> tuple[float, float]:
    """Numerator and denominator of the population estimand.

    Both are scaled as ``E[T' Op Y] / n`` and ``E[T' Op T] / n`` for the
    operator matching ``kind``, evaluated at the realized group counts.
    """
    G, n = design.G, design.n
    pi = _broadcast_group(inputs.pi, G, "pi")
    tau = _broadcast_group(inputs.tau, G, "tau")
    p_tilde = design.group_sizes / n
    share = design.treated_counts / design.group_sizes.astype(np.float64)
    v_tilde = share * (1.0 - share)
    base = p_tilde * pi**2 * v_tilde

    if kind is EstimatorKind.SIVE:
        return float(base @ tau), float(base.sum())

    if kind is EstimatorKind.TSLS_SATURATED:
        if inputs.sigma_ue is None or inputs.sigma_uu is None:
            raise ValueError("the TSLS estimand needs sigma_ue and sigma_uu")
        sigma_ue = _broadcast_obs(inputs.sigma_ue, n, "sigma_ue")
        sigma_uu = _broadcast_obs(inputs.sigma_uu, n, "sigma_uu")
        p_diag = projection_diag_P(design)
        num = float(base @ tau) + float(sigma_ue @ p_diag) / n
        den = float(base.sum()) + float(sigma_uu @ p_diag) / n
        return num, den

    if kind is EstimatorKind.JIVE1:
        if inputs.psi is None or inputs.phi is None:
            raise ValueError("the JIVE1 estimand needs psi and phi")
        _require_nondegenerate(design)
        psi = _broadcast_group(inputs.psi, G, "psi")
        phi = _broadcast_group(inputs.phi, G, "phi")
        m = design.treated_counts.astype(np.float64)
        inv_m = 1.0 / m
        b_y = float((p_tilde * pi * (phi + tau * psi) * v_tilde * inv_m).sum())
        b_y += float((psi * phi).sum()) / n
        b_t = 2.0 * float((p_tilde * pi * psi * v_tilde * inv_m).sum())
        b_t += float((psi**2).sum()) / n
        num = float((base * (1.0 - inv_m)) @ tau) - b_y
        den = float((base * (1.0 - inv_m)).sum()) - b_t
        return num, den

    if kind is EstimatorKind.JIVE2:
        if inputs.sigma_ue is None or inputs.sigma_uu is None:
            raise ValueError("the JIVE2 estimand needs sigma_ue and sigma_uu")
        sigma_ue = _broadcast_obs(inputs.sigma_ue, n, "sigma_ue")
        sigma_uu = _broadcast_obs(inputs.sigma_uu, n, "sigma_uu")
        p_diag = projection_diag_P(design)
        n_of = design.group_sizes[design.group_of].astype(np.float64)
        weight = 2.0 * p_diag / n_of - 1.0 / n_of**2
        shrink = pi**2 * (1.0 - 3.0 * v_tilde)
        b_y1 = -float((shrink * tau).sum()) / n
        b_t1 = -float(shrink.sum()) / n
        b_y2 = float(sigma_ue @ weight) / n
        b_t2 = float(sigma_uu @ weight) / n
        return float(base @ tau) + b_y1 + b_y2, float(base.sum()) + b_t1 + b_t2

    raise ValueError(f"no population estimand for {kind}")


def population_estimand(
    kind: EstimatorKind, design: SaturatedDesign, inputs: PopulationInputs
) -> float:
    """Evaluate the closed-form estimand of ``kind`` at the realized counts.

    For SIVE the result is a convex combination of the per-group effects with
    weights proportional to ``(n_g/n) pi_g^2 V[Q|group]``; when every complier
    share is zero those weights are undefined, and the estimand is returned
    only if the per-group effects are all equal (then every weighting agrees).
    """
    num, den = population_moments(kind, design, inputs)
    if den == 0.0:
        if kind is EstimatorKind.SIVE:
            tau = _broadcast_group(inputs.tau, design.G, "tau")
            if float(np.ptp(tau)) == 0.0:
                return float(tau[0])
        raise EstimationError(
            f"the {kind.value} estimand is undefined: its denominator is zero"
        )
    return num / den


def first_stage_strength(
    design: SaturatedDesign, pi=None, treatment=None
) -> dict:
    """First-stage signal FS and the concentration parameter ``mu_n = n FS / G``.

    Pass per-group complier shares ``pi`` when they are known; otherwise pass
    the realized treatment and the shares are estimated as the within-group
    difference of cell means of T.
    """
    if (pi is None) == (treatment is None):
        raise ValueError("provide exactly one of pi or treatment")
    if pi is None:
        _require_nondegenerate(design)
        treatment = np.asarray(treatment, dtype=np.float64)
        if treatment.shape != (design.n,):
            raise ValueError(f"treatment must have length n={design.n}")
        g = design.group_of
        z = design.instrument.astype(bool)
        m = design.treated_counts
        k = design.group_sizes - m
        mean_act = np.bincount(g[z], weights=treatment[z], minlength=design.G) / m
        mean_ina = np.bincount(g[~z], weights=treatment[~z], minlength=design.G) / k
        pi = mean_act - mean_ina
    pi = _broadcast_group(pi, design.G, "pi")
    share = design.treated_counts / design.group_sizes.astype(np.float64)
    fs = float((design.group_sizes / design.n * pi**2 * share * (1.0 - share)).sum())
    return {"FS": fs, "mu_n": design.n / design.G * fs}

"""Monte Carlo harness: data generation, bias and size grids, summaries.

The synthetic design draws a covariate X from a low-discrepancy sequence, a
binary instrument Q whose propensity is cubic in X, and a binary treatment
driven by a latent normal shifted by Q, so the complier share in every group
is ``p1 - p0``.  Outcomes combine a smooth X-effect, a (possibly
heterogeneous) treatment effect, and an error correlated with the latent
treatment shock.  Experiments sweep the number of covariate values L and the
treated threshold p1, recording median bias and test size per grid cell.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import csv as _csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .design import (
    DesignError,
    GroupAudit,
    Sample,
    SaturatedDesign,
    build_design,
    filter_design,
    validate_group_sizes,
)
from .estimators import (
    EstimationError,
    EstimatorKind,
    PopulationInputs,
    estimate_jive1,
    estimate_jive2,
    estimate_sive,
    estimate_tsls,
    estimate_tsls_generic,
    population_estimand,
)
from .inference import chao_variance, sive_variance, t_test

__all__ = [
    "SimConfig",
    "SimDraw",
    "halton",
    "propensity",
    "outcome_level",
    "generate_sample",
    "replication_seed",
    "run_bias_experiment",
    "run_size_experiment",
    "summarize",
    "SUMMARY_COLUMNS",
]

# Propensity clamp: the cubic is only guaranteed inside (0,1) for part of the
# unit interval, so Bernoulli draws use probabilities in [CLAMP, 1-CLAMP].
CLAMP = 0.01
# Large-sample standard error of a sample median is sqrt(pi/2) times that of
# the mean under normality; used for the mc_se column of bias tables.
MEDIAN_SE_FACTOR = math.sqrt(math.pi / 2.0)

SUMMARY_COLUMNS = (
    "experiment",
    "L",
    "p1",
    "h",
    "estimator",
    "metric",
    "value",
    "mc_se",
    "replications",
)

DEFAULT_ESTIMATORS = (
    EstimatorKind.SIVE,
    EstimatorKind.TSLS_SATURATED,
    EstimatorKind.JIVE1,
    EstimatorKind.JIVE2,
)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one Monte Carlo cell.

    ``n_hetero`` left as None resolves to min(900, n), the reference count
    capped so small test configs remain valid.
    """

    n: int = 3000
    L: int = 1
    p0: float = 0.22
    p1: float = 0.49
    rho: float = 0.527
    beta: float = 0.2
    h: float = 0.0
    n_hetero: int | None = None
    replications: int = 100
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.L < 1:
            raise ValueError("L must be at least 1")
        for name in ("p0", "p1"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1)")
        if not abs(self.rho) < 1.0:
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if self.n_hetero is None:
            object.__setattr__(self, "n_hetero", min(900, self.n))
        if not 0 <= self.n_hetero <= self.n:
            raise ValueError("n_hetero must lie in [0, n]")
        if self.replications < 1:
            raise ValueError("replications must be positive")


@dataclass(frozen=True)
class SimDraw:
    """One simulated dataset after size filtering, with its population truth.

    ``truth`` holds per-group complier shares ``pi`` (all equal to p1 - p0),
    per-group effects ``tau``, and the implied estimand ``beta_sive``.  The
    ``audit`` records which raw covariate groups the size filter dropped.
    """

    design: SaturatedDesign
    sample: Sample
    truth: dict
    audit: GroupAudit


def halton(index: int, base: int = 2) -> float:
    """Radical-inverse value of ``index`` in the given base.

    The sequence starts at index 1; index 0 would map every base to 0 and is
    rejected.
    """
    if index < 1:
        raise ValueError("halton index starts at 1")
    if base < 2:
        raise ValueError("halton base must be at least 2")
    value = 0.0
    scale = 1.0
    i = int(index)
    while i > 0:
        scale /= base
        value += scale * (i % base)
        i //= base
    return value


def propensity(x) -> np.ndarray:
    """Instrument propensity: a cubic in x, clamped away from 0 and 1."""
    x = np.asarray(x, dtype=np.float64)
    raw = 0.119 + 1.785 * x - 1.534 * x**2 + 0.597 * x**3
    return np.clip(raw, CLAMP, 1.0 - CLAMP)


def outcome_level(x) -> np.ndarray:
    """Baseline outcome component: log of a positive cubic in x."""
    x = np.asarray(x, dtype=np.float64)
    return np.log(129.7 + 1247.7 * x - 2149.0 * x**2 + 1515.7 * x**3)


def replication_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent, order-insensitive seed for one replication."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def generate_sample(config: SimConfig, seed=None) -> SimDraw:
    """Draw one dataset and compute its population truth.

    X cycles through the first L points of the base-2 radical-inverse
    sequence (observation i gets point i mod L), so group sizes are as equal
    as possible.  Groups with fewer than two treated-eligible or two
    ineligible observations are dropped before anything else is computed.
    """
    rng = np.random.default_rng(config.master_seed if seed is None else seed)
    n = config.n

    points = np.array([halton(i, 2) for i in range(1, config.L + 1)])
    x = points[np.arange(n) % config.L]
    q = (rng.random(n) < propensity(x)).astype(np.int64)

    z = rng.standard_normal((2, n))
    u = z[0]
    eps = config.rho * z[0] + math.sqrt(1.0 - config.rho**2) * z[1]

    threshold = np.where(q == 1, config.p1, config.p0)
    t = (ndtr(u) <= threshold).astype(np.float64)

    gamma = np.ones(n)
    order = np.argsort(x, kind="stable")
    gamma[order[: config.n_hetero]] = 1.0 + config.h

    y = outcome_level(x) + config.beta * gamma * t + eps

    raw = build_design([(float(v),) for v in x], q)
    audit = validate_group_sizes(raw, min_active=2, min_inactive=2)
    design, sample = filter_design(raw, audit, Sample(outcome=y, treatment=t))

    keep_group = np.zeros(raw.G, dtype=bool)
    keep_group[list(audit.kept_groups)] = True
    gamma_kept = gamma[keep_group[raw.group_of]]

    tau = config.beta * (
        np.bincount(design.group_of, weights=gamma_kept, minlength=design.G)
        / design.group_sizes
    )
    pi = np.full(design.G, config.p1 - config.p0)
    truth = {
        "pi": pi,
        "tau": tau,
        "beta_sive": population_estimand(
            EstimatorKind.SIVE, design, PopulationInputs(pi=pi, tau=tau)
        ),
    }
    return SimDraw(design=design, sample=sample, truth=truth, audit=audit)


def _group_covariate(design: SaturatedDesign) -> np.ndarray:
    if design.group_keys is None:
        raise EstimationError("design carries no covariate values")
    per_group = np.array([key[0] for key in design.group_keys], dtype=np.float64)
    return per_group[design.group_of]


def _estimate(kind: EstimatorKind, draw: SimDraw) -> float:
    if kind is EstimatorKind.SIVE:
        return estimate_sive(draw.design, draw.sample)
    if kind is EstimatorKind.TSLS_SATURATED:
        return estimate_tsls(draw.design, draw.sample)
    if kind is EstimatorKind.JIVE1:
        return estimate_jive1(draw.design, draw.sample)
    if kind is EstimatorKind.JIVE2:
        return estimate_jive2(draw.design, draw.sample)
    if kind is EstimatorKind.TSLS_GENERIC:
        # Rough non-saturated benchmark: instrument Q, linear control in X.
        x = _group_covariate(draw.design)
        controls = np.column_stack([np.ones(draw.design.n), x])
        beta, _ = estimate_tsls_generic(
            draw.sample.outcome,
            draw.sample.treatment,
            draw.design.instrument.astype(np.float64)[:, None],
            controls,
        )
        return beta
    raise ValueError(f"unknown estimator kind: {kind!r}")


def _cell_configs(config: SimConfig, L_values, p1_values):
    Ls = tuple(L_values) if L_values is not None else (config.L,)
    p1s = tuple(p1_values) if p1_values is not None else (config.p1,)
    for L in Ls:
        for p1 in p1s:
            yield dataclasses.replace(config, L=int(L), p1=float(p1))


def _median_rows(cell: SimConfig, label: str, errors: list, requested: int) -> list:
    base = {
        "experiment": "bias",
        "L": cell.L,
        "p1": cell.p1,
        "h": cell.h,
        "estimator": label,
    }
    rows = []
    used = len(errors)
    if used:
        med = float(np.median(errors))
        se = (
            MEDIAN_SE_FACTOR * float(np.std(errors, ddof=1)) / math.sqrt(used)
            if used > 1
            else None
        )
    else:
        med, se = None, None
    rows.append(
        dict(base, metric="median_bias", value=med, mc_se=se, replications=used)
    )
    rows.append(
        dict(
            base,
            metric="abs_median_bias",
            value=None if med is None else abs(med),
            mc_se=se,
            replications=used,
        )
    )
    rows.append(
        dict(
            base,
            metric="attrition",
            value=(requested - used) / requested,
            mc_se=None,
            replications=requested,
        )
    )
    return rows


def run_bias_experiment(
    config: SimConfig,
    L_values=None,
    p1_values=None,
    estimators=DEFAULT_ESTIMATORS,
) -> list:
    """Median bias of each estimator over an L-by-p1 grid.

    Each grid cell runs ``config.replications`` draws; per-replication errors
    are estimates minus that draw's own ``beta_sive``.  A failed replication
    (degenerate design, weak denominator, ...) is excluded from the median
    and counted in the cell's attrition rows.
    """
    rows = []
    for cell in _cell_configs(config, L_values, p1_values):
        errors = {kind: [] for kind in estimators}
        for rep in range(cell.replications):
            seed = replication_seed(cell.master_seed, rep)
            try:
                draw = generate_sample(cell, seed)
            except (DesignError, EstimationError):
                continue
            for kind in estimators:
                try:
                    errors[kind].append(
                        _estimate(kind, draw) - draw.truth["beta_sive"]
                    )
                except (DesignError, EstimationError):
                    pass
        for kind in estimators:
            rows.extend(
                _median_rows(cell, kind.value, errors[kind], cell.replications)
            )
    return rows


def run_size_experiment(
    config: SimConfig,
    L_values=None,
    p1_values=None,
    variance_variants=("vhat", "chao"),
    alpha: float = 0.05,
) -> list:
    """Rejection rate of the SIVE t-test at the true estimand.

    Each replication tests H0: beta = beta_sive (that draw's own truth) with
    the heterogeneity-robust variance ("vhat") and/or the comparison
    estimator ("chao").  Nonpositive variances and estimation failures count
    as attrition, not as rejections.
    """
    for variant in variance_variants:
        if variant not in ("vhat", "chao"):
            raise ValueError(f"unknown variance variant: {variant!r}")
    rows = []
    for cell in _cell_configs(config, L_values, p1_values):
        outcomes = {variant: [] for variant in variance_variants}
        for rep in range(cell.replications):
            seed = replication_seed(cell.master_seed, rep)
            try:
                draw = generate_sample(cell, seed)
                beta_hat = estimate_sive(draw.design, draw.sample)
            except (DesignError, EstimationError):
                continue
            Y, T = draw.sample.outcome, draw.sample.treatment
            for variant in variance_variants:
                try:
                    if variant == "vhat":
                        var = sive_variance(draw.design, Y, T, beta_hat)
                    else:
                        var = chao_variance(draw.design, Y, T, beta_hat)
                    res = t_test(beta_hat, var, draw.truth["beta_sive"], alpha)
                except (DesignError, EstimationError):
                    continue
                outcomes[variant].append(1.0 if res["reject"] else 0.0)
        for variant in variance_variants:
            hits = outcomes[variant]
            used = len(hits)
            base = {
                "experiment": "size",
                "L": cell.L,
                "p1": cell.p1,
                "h": cell.h,
                "estimator": f"sive_{variant}",
            }
            if used:
                rate = float(np.mean(hits))
                se = math.sqrt(rate * (1.0 - rate) / used)
            else:
                rate, se = None, None
            rows.append(
                dict(
                    base,
                    metric="reject_rate",
                    value=rate,
                    mc_se=se,
                    replications=used,
                )
            )
            rows.append(
                dict(
                    base,
                    metric="attrition",
                    value=(cell.replications - used) / cell.replications,
                    mc_se=None,
                    replications=cell.replications,
                )
            )
    return rows


def _clean(value):
    if value is None:
        return None
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    value = float(value)
    return value if math.isfinite(value) else None


def summarize(rows, csv_path=None, json_path=None) -> tuple[str, str]:
    """Render experiment rows as CSV and JSON text, optionally writing files.

    Columns appear in the fixed order of ``SUMMARY_COLUMNS``; missing values
    are empty CSV fields and JSON nulls.  Numbers are written with full
    round-trip precision so the two artifacts carry identical values.
    """
    normalized = []
    for row in rows:
        normalized.append(
            {
                "experiment": str(row["experiment"]),
                "L": int(row["L"]),
                "p1": _clean(row["p1"]),
                "h": _clean(row["h"]),
                "estimator": str(row["estimator"]),
                "metric": str(row["metric"]),
                "value": _clean(row["value"]),
                "mc_se": _clean(row["mc_se"]),
                "replications": int(row["replications"]),
            }
        )

    buffer = io.StringIO()
    writer = _csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in normalized:
        writer.writerow(
            ["" if row[col] is None else str(row[col]) for col in SUMMARY_COLUMNS]
        )
    csv_text = buffer.getvalue()

    json_text = (
        json.dumps(
            {
                "schema_version": 1,
                "columns": list(SUMMARY_COLUMNS),
                "rows": normalized,
            },
            indent=2,
            allow_nan=False,
        )
        + "\n"
    )

    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json_text)
    return csv_text, json_text

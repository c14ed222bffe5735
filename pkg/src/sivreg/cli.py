"""Command-line front end: CSV in, JSON reports out.

Subcommands
-----------
estimate   point estimate plus inference report for one estimator and spec
robust-ci  identification-robust confidence set by test inversion
simulate   run the bias and size experiment grids from a JSON config
audit      group-size audit and design summary for a dataset

Reports carry a ``schema_version`` field and no timestamps, so identical
inputs and flags produce byte-identical output.  Exit codes: 0 success,
2 validation error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import enum
import hashlib
import json
import math
import sys
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .blockops import SmallCellError
from .design import (
    DesignError,
    GroupAudit,
    Sample,
    SaturatedDesign,
    build_design,
    design_summary,
    filter_design,
    validate_group_sizes,
)
from .estimators import (
    EstimationError,
    EstimatorKind,
    WeakDenominatorError,
    estimate_jive1,
    estimate_jive2,
    estimate_tsls,
    estimate_tsls_generic,
    first_stage_strength,
)
from .inference import (
    InferenceReport,
    NonpositiveVarianceError,
    robust_ci,
    sive_report,
)
from .oracle import assemble, oracle_estimate, oracle_variance
from .simulation import SimConfig, run_bias_experiment, run_size_experiment, summarize

__all__ = [
    "SpecChoice",
    "DatasetSchema",
    "CliValidationError",
    "cmd_estimate",
    "cmd_robust_ci",
    "cmd_simulate",
    "cmd_audit",
    "main",
]

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class CliValidationError(ValueError):
    """Bad flags, malformed data, or an unsupported spec/estimator pairing."""


class SpecChoice(enum.Enum):
    """How instruments and controls enter the design."""

    NOT_SATURATED = "not-saturated"
    FULLY_SATURATED = "fully-saturated"
    SATURATED_INSTRUMENTS = "saturated-instruments"
    SATURATED_CONTROLS = "saturated-controls"


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles for a CSV dataset."""

    outcome_col: str | None
    treatment_col: str | None
    instrument_col: str
    covariate_cols: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariate_cols", tuple(self.covariate_cols))
        if not self.instrument_col:
            raise CliValidationError("an instrument column is required")
        named = [
            c
            for c in (self.outcome_col, self.treatment_col, self.instrument_col)
            if c
        ]
        named.extend(self.covariate_cols)
        dupes = sorted({c for c in named if named.count(c) > 1})
        if dupes:
            raise CliValidationError(
                f"columns assigned to more than one role: {', '.join(dupes)}"
            )


# The blockwise group-structure estimators; everything else goes through the
# explicit-matrix two-stage path.
_BLOCKWISE = {
    EstimatorKind.SIVE,
    EstimatorKind.TSLS_SATURATED,
    EstimatorKind.JIVE1,
    EstimatorKind.JIVE2,
}


def _read_rows(csv_path) -> tuple[list[str], list[dict]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise CliValidationError(f"{csv_path}: empty file; a header row is required")
        if len(set(header)) != len(header):
            raise CliValidationError(f"{csv_path}: duplicate column names in header")
        rows = []
        for i, row in enumerate(reader, start=1):
            if row.get(None):
                raise CliValidationError(
                    f"data row {i}: more fields than header columns"
                )
            row.pop(None, None)
            if any(v is None for v in row.values()):
                raise CliValidationError(
                    f"data row {i}: fewer fields than header columns"
                )
            rows.append(row)
    if not rows:
        raise CliValidationError(f"{csv_path}: no data rows")
    return list(header), rows


def _cell_float(row: dict, col: str, i: int) -> float:
    cell = row[col].strip()
    if not cell:
        raise CliValidationError(f"column {col!r}, data row {i}: missing value")
    try:
        return float(cell)
    except ValueError:
        raise CliValidationError(
            f"column {col!r}, data row {i}: cannot parse {cell!r} as a number"
        ) from None


def _float_column(rows: list[dict], col: str) -> np.ndarray:
    return np.array([_cell_float(row, col, i) for i, row in enumerate(rows, 1)])


def _binary_column(rows: list[dict], col: str) -> np.ndarray:
    values = _float_column(rows, col)
    bad = np.flatnonzero((values != 0.0) & (values != 1.0))
    if bad.size:
        i = int(bad[0])
        raise CliValidationError(
            f"column {col!r} must be 0/1 but data row {i + 1} has "
            f"{values[i]}; a threshold can be applied with --binarize {col}:THRESH"
        )
    return values.astype(np.int64)


def _parse_binarize(specs) -> list[tuple[str, float]]:
    parsed = []
    for spec in specs or ():
        col, sep, raw = str(spec).rpartition(":")
        if not sep or not col:
            raise CliValidationError(f"--binarize expects COL:THRESH, got {spec!r}")
        try:
            parsed.append((col, float(raw)))
        except ValueError:
            raise CliValidationError(
                f"--binarize threshold {raw!r} is not a number"
            ) from None
    return parsed


def _apply_binarize(rows: list[dict], header: list[str], specs) -> None:
    for col, threshold in _parse_binarize(specs):
        if col not in header:
            raise CliValidationError(f"--binarize column {col!r} not in header")
        for i, row in enumerate(rows, start=1):
            row[col] = "1" if _cell_float(row, col, i) > threshold else "0"


def _covariate_tuples(
    rows: list[dict], cols: tuple[str, ...]
) -> tuple[list[tuple], dict]:
    """Per-row covariate keys; a column is numeric only if every cell parses."""
    columns = {}
    numeric = {}
    for col in cols:
        raw = []
        for i, row in enumerate(rows, start=1):
            cell = row[col].strip()
            if not cell:
                raise CliValidationError(
                    f"column {col!r}, data row {i}: missing value"
                )
            raw.append(cell)
        try:
            columns[col] = [float(c) for c in raw]
            numeric[col] = True
        except ValueError:
            columns[col] = raw
            numeric[col] = False
    tuples = [tuple(columns[col][i] for col in cols) for i in range(len(rows))]
    return tuples, numeric


@dataclass(frozen=True)
class _Prepared:
    raw_design: SaturatedDesign
    design: SaturatedDesign
    sample: Sample
    audit: GroupAudit
    row_mask: np.ndarray
    numeric: dict


def _prepare(
    csv_path,
    schema: DatasetSchema,
    min_active: int,
    min_inactive: int,
    binarize,
) -> _Prepared:
    if not schema.outcome_col or not schema.treatment_col:
        raise CliValidationError(
            "outcome and treatment columns are required for this command"
        )
    header, rows = _read_rows(csv_path)
    needed = [
        schema.outcome_col,
        schema.treatment_col,
        schema.instrument_col,
        *schema.covariate_cols,
    ]
    missing = [c for c in needed if c not in header]
    if missing:
        raise CliValidationError(f"missing columns: {', '.join(missing)}")
    _apply_binarize(rows, header, binarize)

    instrument = _binary_column(rows, schema.instrument_col)
    tuples, numeric = _covariate_tuples(rows, schema.covariate_cols)
    raw_design = build_design(tuples, instrument)
    sample = Sample(
        outcome=_float_column(rows, schema.outcome_col),
        treatment=_float_column(rows, schema.treatment_col),
    )
    audit = validate_group_sizes(raw_design, min_active, min_inactive)
    design, sample = filter_design(raw_design, audit, sample)

    keep_group = np.zeros(raw_design.G, dtype=bool)
    keep_group[list(audit.kept_groups)] = True
    return _Prepared(
        raw_design=raw_design,
        design=design,
        sample=sample,
        audit=audit,
        row_mask=keep_group[raw_design.group_of],
        numeric=numeric,
    )


def _audit_dict(raw_design: SaturatedDesign, audit: GroupAudit) -> dict:
    violations = []
    for g, n_g, m_g, reason in audit.violations:
        item = {
            "group": int(g),
            "group_size": int(n_g),
            "active_count": int(m_g),
            "reason": reason,
        }
        if raw_design.group_keys is not None:
            item["key"] = list(raw_design.group_keys[g])
        violations.append(item)
    return {
        "violations": violations,
        "kept_groups": [int(g) for g in audit.kept_groups],
    }


def _group_dummies(design: SaturatedDesign) -> np.ndarray:
    W = np.zeros((design.n, design.G))
    W[np.arange(design.n), design.group_of] = 1.0
    return W


def _generic_fit(
    spec: SpecChoice, schema: DatasetSchema, prep: _Prepared
) -> tuple[float, float]:
    design, sample = prep.design, prep.sample
    q = design.instrument.astype(np.float64)[:, None]
    ones = np.ones((design.n, 1))

    def covariate_matrix() -> np.ndarray:
        bad = [c for c in schema.covariate_cols if not prep.numeric[c]]
        if bad:
            raise CliValidationError(
                f"covariate columns {', '.join(bad)} are not numeric; "
                f"spec {spec.value!r} enters covariates linearly"
            )
        if not schema.covariate_cols:
            return np.empty((design.n, 0))
        keys = np.asarray(
            [design.group_keys[g] for g in design.group_of], dtype=np.float64
        )
        return keys

    if spec is SpecChoice.NOT_SATURATED:
        Zm, znames = q, ["instrument"]
        Cm = np.hstack([ones, covariate_matrix()])
        cnames = ["intercept", *schema.covariate_cols]
    elif spec is SpecChoice.SATURATED_INSTRUMENTS:
        W = _group_dummies(design)
        Zm, znames = W * q, [f"instrument:group{g}" for g in range(design.G)]
        Cm = np.hstack([ones, covariate_matrix()])
        cnames = ["intercept", *schema.covariate_cols]
    elif spec is SpecChoice.SATURATED_CONTROLS:
        Zm, znames = q, ["instrument"]
        Cm = _group_dummies(design)
        cnames = [f"group{g}" for g in range(design.G)]
    else:
        W = _group_dummies(design)
        Zm, znames = W * q, [f"instrument:group{g}" for g in range(design.G)]
        Cm = W
        cnames = [f"group{g}" for g in range(design.G)]
    return estimate_tsls_generic(
        sample.outcome, sample.treatment, Zm, Cm, znames, cnames
    )


def cmd_estimate(
    csv_path,
    schema: DatasetSchema,
    spec: SpecChoice = SpecChoice.FULLY_SATURATED,
    estimator: EstimatorKind = EstimatorKind.SIVE,
    alpha: float = 0.05,
    min_active: int = 2,
    min_inactive: int = 2,
    binarize=(),
    reference: bool = False,
) -> dict:
    """Estimate one spec/estimator combination and report inference as JSON.

    The blockwise estimators require the fully saturated spec; the other
    specs run the explicit-matrix two-stage path.  The saturated TSLS and
    jackknife baselines carry no variance theory here, so their variance
    fields are null.  ``reference`` re-computes blockwise results with the
    dense reference implementation and attaches them.
    """
    _check_alpha(alpha)
    if spec is SpecChoice.FULLY_SATURATED:
        allowed = _BLOCKWISE | {EstimatorKind.TSLS_GENERIC}
    else:
        allowed = {EstimatorKind.TSLS_GENERIC}
    if estimator not in allowed:
        raise CliValidationError(
            f"unsupported combination: estimator {estimator.value!r} under "
            f"spec {spec.value!r} (blockwise estimators need "
            f"'{SpecChoice.FULLY_SATURATED.value}')"
        )
    prep = _prepare(csv_path, schema, min_active, min_inactive, binarize)
    design, sample = prep.design, prep.sample

    if estimator is EstimatorKind.SIVE:
        report = sive_report(design, sample, alpha=alpha)
    elif estimator in _BLOCKWISE:
        point = {
            EstimatorKind.TSLS_SATURATED: estimate_tsls,
            EstimatorKind.JIVE1: estimate_jive1,
            EstimatorKind.JIVE2: estimate_jive2,
        }[estimator](design, sample)
        report = InferenceReport(
            beta_hat=point,
            variance=None,
            std_error=None,
            ci_low=None,
            ci_high=None,
            beta0=None,
            t_stat=None,
            fs_diag=first_stage_strength(design, treatment=sample.treatment),
        )
    else:
        beta, var = _generic_fit(spec, schema, prep)
        se = math.sqrt(var)
        z = float(norm.ppf(1.0 - alpha / 2.0))
        report = InferenceReport(
            beta_hat=beta,
            variance=var,
            std_error=se,
            ci_low=beta - z * se,
            ci_high=beta + z * se,
            beta0=0.0,
            t_stat=beta / se if se > 0.0 else None,
            fs_diag=first_stage_strength(design, treatment=sample.treatment),
        )

    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "spec": spec.value,
        "estimator": estimator.value,
        "alpha": alpha,
        "thresholds": {"min_active": min_active, "min_inactive": min_inactive},
        "design_summary": design_summary(design),
        "audit": _audit_dict(prep.raw_design, prep.audit),
        "estimate": report.to_json_dict(),
    }
    if reference:
        if estimator not in _BLOCKWISE:
            raise CliValidationError(
                "--reference is available only for the blockwise estimators"
            )
        dense = assemble(design)
        ref_beta = oracle_estimate(
            estimator, dense, sample.outcome, sample.treatment
        )
        ref = {"beta_hat": ref_beta}
        if estimator is EstimatorKind.SIVE:
            ref["variance"] = oracle_variance(
                dense, sample.outcome, sample.treatment, ref_beta
            )
        payload["reference"] = ref
    return payload


def cmd_robust_ci(
    csv_path,
    schema: DatasetSchema,
    grid: dict | None = None,
    alpha: float = 0.05,
    min_active: int = 2,
    min_inactive: int = 2,
    binarize=(),
) -> dict:
    """Invert the identification-robust test over a grid of effect values."""
    _check_alpha(alpha)
    prep = _prepare(csv_path, schema, min_active, min_inactive, binarize)
    result = robust_ci(
        prep.design,
        prep.sample.outcome,
        prep.sample.treatment,
        grid=grid,
        alpha=alpha,
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "robust-ci",
        "alpha": alpha,
        "thresholds": {"min_active": min_active, "min_inactive": min_inactive},
        "design_summary": design_summary(prep.design),
        "audit": _audit_dict(prep.raw_design, prep.audit),
        "robust_ci": result,
    }


def cmd_audit(
    csv_path,
    schema: DatasetSchema,
    min_active: int = 2,
    min_inactive: int = 2,
    binarize=(),
    dump_design=None,
) -> dict:
    """Summarize group structure and threshold violations without estimating.

    Unlike the estimation commands this never fails on an all-violating
    dataset; the violation list is the point of the report.
    """
    header, rows = _read_rows(csv_path)
    needed = [schema.instrument_col, *schema.covariate_cols]
    missing = [c for c in needed if c not in header]
    if missing:
        raise CliValidationError(f"missing columns: {', '.join(missing)}")
    _apply_binarize(rows, header, binarize)
    instrument = _binary_column(rows, schema.instrument_col)
    tuples, _ = _covariate_tuples(rows, schema.covariate_cols)
    raw_design = build_design(tuples, instrument)
    audit = validate_group_sizes(raw_design, min_active, min_inactive)

    filtered = None
    if audit.kept_groups:
        placeholder = Sample(
            outcome=np.zeros(raw_design.n), treatment=np.zeros(raw_design.n)
        )
        filtered, _ = filter_design(raw_design, audit, placeholder)

    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "audit",
        "thresholds": {"min_active": min_active, "min_inactive": min_inactive},
        "raw_summary": design_summary(raw_design),
        "audit": _audit_dict(raw_design, audit),
        "filtered_summary": None if filtered is None else design_summary(filtered),
    }
    if dump_design is not None:
        if filtered is None:
            raise CliValidationError(
                "nothing to dump: every group violates the thresholds"
            )
        text = json.dumps(_json_ready(filtered.to_json_dict()), indent=2) + "\n"
        Path(dump_design).write_text(text, encoding="utf-8")
        payload["design_file"] = str(dump_design)
    return payload


_CONFIG_FIELDS = tuple(f.name for f in dataclass_fields(SimConfig))


def cmd_simulate(config_path, out_dir, seed=None) -> dict:
    """Run the bias and size grids from a JSON config and write artifacts.

    The config holds SimConfig fields, where ``L`` and ``p1`` may be lists,
    plus an optional ``alpha``.  ``seed`` overrides ``master_seed``.  Writes
    bias.csv/json, size.csv/json and a manifest keyed by the config hash;
    nothing in the outputs depends on wall-clock time.
    """
    raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise CliValidationError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_CONFIG_FIELDS) - {"alpha"})
    if unknown:
        raise CliValidationError(f"unknown config keys: {', '.join(unknown)}")

    def as_list(value):
        return list(value) if isinstance(value, (list, tuple)) else [value]

    L_values = [int(v) for v in as_list(raw.get("L", SimConfig.L))]
    p1_values = [float(v) for v in as_list(raw.get("p1", SimConfig.p1))]
    if not L_values or not p1_values:
        raise CliValidationError("L and p1 must each have at least one value")
    alpha = float(raw.get("alpha", 0.05))
    _check_alpha(alpha)
    scalars = {
        k: raw[k] for k in _CONFIG_FIELDS if k in raw and k not in ("L", "p1")
    }
    if seed is not None:
        scalars["master_seed"] = int(seed)
    base = SimConfig(L=L_values[0], p1=p1_values[0], **scalars)

    config_dict = {f: getattr(base, f) for f in _CONFIG_FIELDS}
    config_dict["L"] = L_values
    config_dict["p1"] = p1_values
    config_dict["alpha"] = alpha
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bias_rows = run_bias_experiment(base, L_values, p1_values)
    summarize(bias_rows, out / "bias.csv", out / "bias.json")
    size_rows = run_size_experiment(base, L_values, p1_values, alpha=alpha)
    summarize(size_rows, out / "size.csv", out / "size.json")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": config_dict,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "master_seed": base.master_seed,
        "outputs": ["bias.csv", "bias.json", "size.csv", "size.json"],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise CliValidationError(f"alpha must lie strictly inside (0, 1), got {alpha}")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _emit(payload: dict, out_file) -> None:
    text = json.dumps(_json_ready(payload), indent=2, allow_nan=False) + "\n"
    if out_file:
        Path(out_file).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _schema_from_args(args) -> DatasetSchema:
    covariates = []
    if getattr(args, "covariates", None):
        covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    return DatasetSchema(
        outcome_col=getattr(args, "outcome", None),
        treatment_col=getattr(args, "treatment", None),
        instrument_col=args.instrument,
        covariate_cols=tuple(covariates),
    )


def _grid_from_args(args) -> dict | None:
    has_low = args.grid_low is not None
    has_high = args.grid_high is not None
    if has_low != has_high:
        raise CliValidationError("--grid-low and --grid-high must be given together")
    if not has_low:
        if args.grid_step is not None:
            raise CliValidationError("--grid-step requires --grid-low and --grid-high")
        return None
    grid = {"low": args.grid_low, "high": args.grid_high}
    if args.grid_step is not None:
        grid["step"] = args.grid_step
    return grid


def _add_data_flags(p: argparse.ArgumentParser, with_outcome: bool) -> None:
    p.add_argument("--data", required=True, help="CSV dataset path")
    if with_outcome:
        p.add_argument("--outcome", required=True, help="outcome column")
        p.add_argument("--treatment", required=True, help="treatment column")
    p.add_argument("--instrument", required=True, help="binary instrument column")
    p.add_argument(
        "--covariates",
        default="",
        help="comma-separated covariate columns (groups = unique value tuples)",
    )
    p.add_argument(
        "--binarize",
        action="append",
        metavar="COL:THRESH",
        help="recode a column to 1[value > THRESH]; repeatable",
    )
    p.add_argument("--min-active", type=int, default=2, dest="min_active")
    p.add_argument("--min-inactive", type=int, default=2, dest="min_inactive")
    p.add_argument("--out", default=None, help="write the JSON report here")


def _handle_estimate(args) -> dict:
    return cmd_estimate(
        args.data,
        _schema_from_args(args),
        spec=SpecChoice(args.spec),
        estimator=EstimatorKind(args.estimator),
        alpha=args.alpha,
        min_active=args.min_active,
        min_inactive=args.min_inactive,
        binarize=args.binarize or (),
        reference=args.reference,
    )


def _handle_robust_ci(args) -> dict:
    return cmd_robust_ci(
        args.data,
        _schema_from_args(args),
        grid=_grid_from_args(args),
        alpha=args.alpha,
        min_active=args.min_active,
        min_inactive=args.min_inactive,
        binarize=args.binarize or (),
    )


def _handle_simulate(args) -> dict:
    return cmd_simulate(args.config, args.out, seed=args.seed)


def _handle_audit(args) -> dict:
    return cmd_audit(
        args.data,
        _schema_from_args(args),
        min_active=args.min_active,
        min_inactive=args.min_inactive,
        binarize=args.binarize or (),
        dump_design=args.dump_design,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sivreg",
        description="Saturated instrumental-variables estimation and inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="point estimate and inference report")
    _add_data_flags(est, with_outcome=True)
    est.add_argument(
        "--spec",
        choices=[s.value for s in SpecChoice],
        default=SpecChoice.FULLY_SATURATED.value,
    )
    est.add_argument(
        "--estimator",
        choices=[k.value for k in EstimatorKind],
        default=EstimatorKind.SIVE.value,
    )
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument(
        "--reference",
        action="store_true",
        help="attach dense reference recomputation (blockwise estimators only)",
    )
    est.set_defaults(handler=_handle_estimate)

    rci = sub.add_parser("robust-ci", help="test-inversion confidence set")
    _add_data_flags(rci, with_outcome=True)
    rci.add_argument("--alpha", type=float, default=0.05)
    rci.add_argument("--grid-low", type=float, default=None, dest="grid_low")
    rci.add_argument("--grid-high", type=float, default=None, dest="grid_high")
    rci.add_argument("--grid-step", type=float, default=None, dest="grid_step")
    rci.set_defaults(handler=_handle_robust_ci)

    sim = sub.add_parser("simulate", help="run bias and size experiment grids")
    sim.add_argument("--config", required=True, help="JSON config path")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override master_seed")
    sim.set_defaults(handler=_handle_simulate, out_is_dir=True)

    aud = sub.add_parser("audit", help="group-size audit and design summary")
    _add_data_flags(aud, with_outcome=False)
    aud.add_argument(
        "--dump-design",
        default=None,
        dest="dump_design",
        help="also write the filtered design as JSON to this path",
    )
    aud.set_defaults(handler=_handle_audit)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        payload = args.handler(args)
        out_file = None if getattr(args, "out_is_dir", False) else args.out
        _emit(payload, out_file)
    except (WeakDenominatorError, NonpositiveVarianceError, SmallCellError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DesignError, CliValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Saturated design construction, validation and filtering.

A saturated design assigns each observation to a covariate group (one dummy per
unique covariate value) and records a binary instrument whose interaction with
the group dummies forms the instrument set.  Downstream operators only need
the per-observation group index, the instrument flags and the per-group counts
(n_g group size, m_g active-instrument count).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DesignError",
    "EmptyDesignError",
    "SaturatedDesign",
    "Sample",
    "GroupAudit",
    "build_design",
    "validate_group_sizes",
    "filter_design",
    "design_summary",
]


class DesignError(ValueError):
    """A design or sample fails a structural requirement."""


class EmptyDesignError(DesignError):
    """Filtering removed every group."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SaturatedDesign:
    """Immutable saturated design.

    Attributes
    ----------
    group_of : ndarray of int, shape (n,)
        Group index of each observation, in ``[0, G)``.
    instrument : ndarray of int, shape (n,)
        Binary instrument flag per observation.
    group_sizes : ndarray of int, shape (G,)
        Number of observations n_g in each group.
    treated_counts : ndarray of int, shape (G,)
        Number of instrument-active observations m_g in each group.
    group_keys : tuple or None
        Optional canonical covariate value per group, in group order.
    """

    group_of: np.ndarray
    instrument: np.ndarray
    group_sizes: np.ndarray
    treated_counts: np.ndarray
    group_keys: tuple | None = None

    def __post_init__(self) -> None:
        group_of = np.asarray(self.group_of, dtype=np.int64)
        instrument = np.asarray(self.instrument, dtype=np.int64)
        group_sizes = np.asarray(self.group_sizes, dtype=np.int64)
        treated_counts = np.asarray(self.treated_counts, dtype=np.int64)
        if group_of.ndim != 1 or instrument.ndim != 1:
            raise DesignError("group_of and instrument must be 1-dimensional")
        if group_of.shape != instrument.shape:
            raise DesignError(
                f"length mismatch: group_of has {group_of.size} entries, "
                f"instrument has {instrument.size}"
            )
        if group_of.size == 0:
            raise EmptyDesignError("design has no observations")
        if not np.isin(instrument, (0, 1)).all():
            raise DesignError("instrument entries must be 0 or 1")
        G = group_sizes.size
        if treated_counts.size != G:
            raise DesignError("group_sizes and treated_counts must have equal length")
        if group_of.min() < 0 or group_of.max() >= G:
            raise DesignError(f"group indices must lie in [0, {G})")
        # Counts must be exactly recomputable from the per-observation arrays.
        sizes = np.bincount(group_of, minlength=G)
        treated = np.bincount(group_of[instrument == 1], minlength=G)
        if not np.array_equal(sizes, group_sizes):
            raise DesignError("group_sizes disagree with group_of")
        if not np.array_equal(treated, treated_counts):
            raise DesignError("treated_counts disagree with group_of and instrument")
        if (group_sizes < 1).any():
            raise DesignError("every group must contain at least one observation")
        if self.group_keys is not None and len(self.group_keys) != G:
            raise DesignError(f"group_keys must have one entry per group ({G})")
        object.__setattr__(self, "group_of", _readonly(group_of))
        object.__setattr__(self, "instrument", _readonly(instrument))
        object.__setattr__(self, "group_sizes", _readonly(group_sizes))
        object.__setattr__(self, "treated_counts", _readonly(treated_counts))

    @property
    def n(self) -> int:
        return self.group_of.size

    @property
    def G(self) -> int:
        return self.group_sizes.size

    def to_json_dict(self) -> dict:
        """Serialize the design for audit trails."""
        return {
            "n": self.n,
            "G": self.G,
            "group_of": self.group_of.tolist(),
            "instrument": self.instrument.tolist(),
        }


@dataclass(frozen=True)
class Sample:
    """Outcome and treatment vectors aligned to a design.

    The treatment is binary in the intended applications but any real values
    are accepted.
    """

    outcome: np.ndarray
    treatment: np.ndarray

    def __post_init__(self) -> None:
        outcome = np.asarray(self.outcome, dtype=np.float64)
        treatment = np.asarray(self.treatment, dtype=np.float64)
        if outcome.ndim != 1 or treatment.ndim != 1:
            raise DesignError("outcome and treatment must be 1-dimensional")
        if outcome.shape != treatment.shape:
            raise DesignError(
                f"length mismatch: outcome has {outcome.size} entries, "
                f"treatment has {treatment.size}"
            )
        if not np.isfinite(outcome).all():
            raise DesignError("outcome contains non-finite entries")
        if not np.isfinite(treatment).all():
            raise DesignError("treatment contains non-finite entries")
        object.__setattr__(self, "outcome", _readonly(outcome))
        object.__setattr__(self, "treatment", _readonly(treatment))

    @property
    def n(self) -> int:
        return self.outcome.size


@dataclass(frozen=True)
class GroupAudit:
    """Result of a group-size validation.

    ``violations`` holds ``(group index, n_g, m_g, reason)`` tuples and
    ``kept_groups`` the indices of all other groups; every group appears in
    exactly one of the two.
    """

    violations: tuple
    kept_groups: tuple


def build_design(covariate_rows, instrument) -> SaturatedDesign:
    """Group observations by their exact covariate value.

    Parameters
    ----------
    covariate_rows : sequence
        One covariate tuple per observation.  Rows are compared by exact
        equality of the full tuple, so continuous covariates must already be
        discretized.  Scalars are treated as 1-tuples.
    instrument : array_like
        Binary flags, one per observation.

    Returns
    -------
    SaturatedDesign
        Groups indexed in order of first appearance.

    Raises
    ------
    DesignError
        On length mismatch or a non-binary instrument entry.
    """
    instrument = np.asarray(instrument)
    if instrument.ndim != 1:
        raise DesignError("instrument must be 1-dimensional")
    n = len(covariate_rows)
    if instrument.size != n:
        raise DesignError(
            f"length mismatch: {n} covariate rows but {instrument.size} instrument entries"
        )
    bad = ~np.isin(instrument, (0, 1))
    if bad.any():
        i = int(np.argmax(bad))
        raise DesignError(
            f"instrument entries must be 0 or 1 (found {instrument[i]!r} at row {i})"
        )

    index_of: dict = {}
    keys: list = []
    group_of = np.empty(n, dtype=np.int64)
    for i, row in enumerate(covariate_rows):
        key = tuple(row) if isinstance(row, (tuple, list, np.ndarray)) else (row,)
        g = index_of.get(key)
        if g is None:
            g = len(keys)
            index_of[key] = g
            keys.append(key)
        group_of[i] = g

    G = len(keys)
    instrument = instrument.astype(np.int64)
    return SaturatedDesign(
        group_of=group_of,
        instrument=instrument,
        group_sizes=np.bincount(group_of, minlength=G),
        treated_counts=np.bincount(group_of[instrument == 1], minlength=G),
        group_keys=tuple(keys),
    )


def validate_group_sizes(
    design: SaturatedDesign, min_active: int = 2, min_inactive: int = 2
) -> GroupAudit:
    """Flag groups with too few active or inactive observations.

    The default thresholds (2, 2) keep exactly the groups on which the
    jackknife operators are defined; (3, 3) is the strengthened requirement
    under which the variance estimators need no small-cell fallback.
    The audit itself never fails.
    """
    if min_active < 1 or min_inactive < 1:
        raise ValueError("thresholds must be at least 1")
    violations = []
    kept = []
    for g in range(design.G):
        n_g = int(design.group_sizes[g])
        m_g = int(design.treated_counts[g])
        reasons = []
        if m_g < min_active:
            reasons.append(f"active count {m_g} < {min_active}")
        if n_g - m_g < min_inactive:
            reasons.append(f"inactive count {n_g - m_g} < {min_inactive}")
        if reasons:
            violations.append((g, n_g, m_g, "; ".join(reasons)))
        else:
            kept.append(g)
    return GroupAudit(violations=tuple(violations), kept_groups=tuple(kept))


def filter_design(
    design: SaturatedDesign, audit: GroupAudit, sample: Sample
) -> tuple[SaturatedDesign, Sample]:
    """Drop all observations in violating groups.

    Surviving rows keep their relative order and group indices are
    re-compacted in ascending old-index order, which preserves the
    first-appearance ordering.  The sample rows are dropped in lockstep.

    Raises
    ------
    EmptyDesignError
        If the audit leaves no groups.
    DesignError
        If the sample length does not match the design.
    """
    if sample.n != design.n:
        raise DesignError(
            f"sample has {sample.n} rows but design has {design.n} observations"
        )
    if not audit.kept_groups:
        raise EmptyDesignError("every group violates the size thresholds")
    if not audit.violations:
        return design, sample

    keep_group = np.zeros(design.G, dtype=bool)
    keep_group[list(audit.kept_groups)] = True
    row_mask = keep_group[design.group_of]

    old_to_new = np.full(design.G, -1, dtype=np.int64)
    old_to_new[list(audit.kept_groups)] = np.arange(len(audit.kept_groups))
    new_group_of = old_to_new[design.group_of[row_mask]]
    new_instrument = design.instrument[row_mask]
    G_new = len(audit.kept_groups)
    new_keys = None
    if design.group_keys is not None:
        new_keys = tuple(design.group_keys[g] for g in audit.kept_groups)

    filtered = SaturatedDesign(
        group_of=new_group_of,
        instrument=new_instrument,
        group_sizes=np.bincount(new_group_of, minlength=G_new),
        treated_counts=np.bincount(new_group_of[new_instrument == 1], minlength=G_new),
        group_keys=new_keys,
    )
    return filtered, Sample(sample.outcome[row_mask], sample.treatment[row_mask])


def design_summary(design: SaturatedDesign) -> dict:
    """Headline counts: n, G, their ratio and the group-size extremes."""
    return {
        "n": design.n,
        "G": design.G,
        "ratio": design.G / design.n,
        "min_group_size": int(design.group_sizes.min()),
        "max_group_size": int(design.group_sizes.max()),
        "min_treated_count": int(design.treated_counts.min()),
        "max_treated_count": int(design.treated_counts.max()),
    }

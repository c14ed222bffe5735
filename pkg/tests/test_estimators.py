"""Point estimators and population estimands."""

import numpy as np
import pytest

from sivreg import (
    EstimationError,
    EstimatorKind,
    PopulationInputs,
    RankDeficiencyError,
    Sample,
    WeakDenominatorError,
    build_design,
    estimate_jive1,
    estimate_jive2,
    estimate_sive,
    estimate_tsls,
    estimate_tsls_generic,
    first_stage_strength,
    population_estimand,
    population_moments,
)

from conftest import random_design, strong_sample

ALL_BLOCKWISE = (estimate_sive, estimate_tsls, estimate_jive1, estimate_jive2)


def two_groups():
    return build_design([[0]] * 5 + [[1]] * 4, [1, 1, 0, 0, 0, 1, 1, 0, 0])


def test_noiseless_identity_all_estimators():
    d = two_groups()
    z = d.instrument.astype(float)
    s = Sample(outcome=z, treatment=z)
    for estimator in ALL_BLOCKWISE:
        assert abs(estimator(d, s) - 1.0) < 1e-12


def test_noiseless_doubling_all_estimators():
    d = two_groups()
    z = d.instrument.astype(float)
    s = Sample(outcome=2.0 * z, treatment=z)
    for estimator in ALL_BLOCKWISE:
        assert abs(estimator(d, s) - 2.0) < 1e-12


def test_zero_outcome_gives_zero():
    d = two_groups()
    z = d.instrument.astype(float)
    s = Sample(outcome=np.zeros(d.n), treatment=z)
    for estimator in ALL_BLOCKWISE:
        assert estimator(d, s) == 0.0


def test_group_constant_treatment_is_weak():
    d = two_groups()
    gamma = np.array([1.0, 3.0])
    s = Sample(outcome=np.arange(d.n, dtype=float), treatment=gamma[d.group_of])
    for estimator in (estimate_sive, estimate_tsls, estimate_jive2):
        with pytest.raises(WeakDenominatorError, match="robust"):
            estimator(d, s)
    # the un-demeaned jackknife keeps a diagonal term, so its denominator
    # survives even a flat first stage
    assert np.isfinite(estimate_jive1(d, s))


def test_jackknife_without_demeaning_is_biased_by_group_effects():
    # T and Y share group-level shifts; removing diag(P) without demeaning
    # leaks them into the ratio, while the other three estimators do not.
    d = two_groups()
    z = d.instrument.astype(float)
    psi = np.array([1.0, 2.0])
    phi = np.array([3.0, -1.0])
    s = Sample(outcome=z + phi[d.group_of], treatment=z + psi[d.group_of])
    assert abs(estimate_sive(d, s) - 1.0) < 1e-10
    assert abs(estimate_tsls(d, s) - 1.0) < 1e-10
    assert abs(estimate_jive2(d, s) - 1.0) < 1e-10
    assert abs(estimate_jive1(d, s) - 1.0) > 0.1


def test_scale_equivariance_and_shift_behaviour():
    rng = np.random.default_rng(11)
    d = random_design(rng, G=4)
    s = strong_sample(rng, d)
    gamma = rng.standard_normal(d.G)
    shifted = Sample(s.outcome + gamma[d.group_of], s.treatment)
    for estimator in (estimate_sive, estimate_tsls, estimate_jive2):
        base = estimator(d, s)
        scaled = estimator(d, Sample(3.0 * s.outcome, s.treatment))
        assert abs(scaled - 3.0 * base) < 1e-10
        # group-level outcome shifts are absorbed by the controls
        assert abs(estimator(d, shifted) - base) < 1e-10


def test_generic_exact_identification_is_a_moment_ratio():
    rng = np.random.default_rng(12)
    n = 40
    z = rng.integers(0, 2, n).astype(float)
    T = 0.5 + 1.5 * z + rng.standard_normal(n)
    Y = 1.0 + 2.0 * T + rng.standard_normal(n)
    beta, var = estimate_tsls_generic(Y, T, z[:, None])
    assert abs(beta - (z @ Y) / (z @ T)) < 1e-10
    assert var > 0.0


def test_generic_controls_absorbing_outcome():
    rng = np.random.default_rng(13)
    n = 50
    C = np.column_stack([np.ones(n), rng.standard_normal(n)])
    z = rng.integers(0, 2, n).astype(float)
    T = z + rng.standard_normal(n)
    Y = C @ np.array([2.0, -1.0])
    beta, _ = estimate_tsls_generic(Y, T, z[:, None], C)
    assert abs(beta) < 1e-8


def test_generic_duplicate_instruments_are_dropped():
    rng = np.random.default_rng(14)
    n = 40
    z = rng.integers(0, 2, n).astype(float)
    T = z + 0.3 * rng.standard_normal(n)
    Y = 2.0 * T + rng.standard_normal(n)
    b1, v1 = estimate_tsls_generic(Y, T, z[:, None])
    b2, v2 = estimate_tsls_generic(Y, T, np.column_stack([z, z, 2.0 * z]))
    assert abs(b1 - b2) < 1e-10
    assert abs(v1 - v2) < 1e-8


def test_generic_collinear_instruments_name_dropped_columns():
    rng = np.random.default_rng(15)
    n = 30
    z = rng.standard_normal(n)
    C = np.column_stack([np.ones(n), z])
    T = z + rng.standard_normal(n)
    Y = T + rng.standard_normal(n)
    with pytest.raises(RankDeficiencyError, match="z0"):
        estimate_tsls_generic(Y, T, z[:, None], C, instrument_names=["z0"])


def test_generic_matches_normal_equations():
    rng = np.random.default_rng(16)
    for _ in range(5):
        n = 60
        C = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
        Z = rng.standard_normal((n, 3))
        T = Z @ np.array([0.8, -0.5, 0.3]) + C @ np.array([1.0, 0.2, -0.1])
        T = T + rng.standard_normal(n)
        Y = 1.7 * T + C @ np.array([0.5, -0.4, 0.9]) + rng.standard_normal(n)
        beta, _ = estimate_tsls_generic(Y, T, Z, C)
        X = np.column_stack([T, C])
        F = np.column_stack([Z, C])
        PF = F @ np.linalg.solve(F.T @ F, F.T)
        ref = np.linalg.solve(X.T @ PF @ X, X.T @ PF @ Y)[0]
        assert abs(beta - ref) < 1e-8


def test_generic_variance_scales_quadratically():
    rng = np.random.default_rng(17)
    n = 50
    z = rng.integers(0, 2, n).astype(float)
    T = z + rng.standard_normal(n)
    Y = T + rng.standard_normal(n)
    _, v1 = estimate_tsls_generic(Y, T, z[:, None])
    _, v2 = estimate_tsls_generic(5.0 * Y, T, z[:, None])
    assert abs(v2 - 25.0 * v1) < 1e-8 * max(1.0, v2)


def test_generic_on_saturated_dummies_matches_blockwise_tsls():
    rng = np.random.default_rng(18)
    d = random_design(rng, G=4)
    s = strong_sample(rng, d)
    W = np.equal.outer(d.group_of, np.arange(d.G)).astype(float)
    interactions = W * d.instrument.astype(float)[:, None]
    beta, _ = estimate_tsls_generic(s.outcome, s.treatment, interactions, W)
    assert abs(beta - estimate_tsls(d, s)) < 1e-8


def test_sive_estimand_frozen_value():
    d = build_design([[0]] * 8 + [[1]] * 8, [1] * 4 + [0] * 4 + [1] * 2 + [0] * 6)
    inputs = PopulationInputs(pi=[1.0, 1.0], tau=[1.0, 3.0])
    assert abs(population_estimand(EstimatorKind.SIVE, d, inputs) - 13 / 7) < 1e-12


def test_sive_estimand_single_group_is_its_effect():
    d = build_design([[0]] * 6, [1, 1, 1, 0, 0, 0])
    inputs = PopulationInputs(pi=0.4, tau=[2.5])
    assert abs(population_estimand(EstimatorKind.SIVE, d, inputs) - 2.5) < 1e-12


def test_sive_estimand_is_convex_combination():
    rng = np.random.default_rng(19)
    for _ in range(20):
        d = random_design(rng)
        pi = rng.uniform(0.1, 1.0, d.G)
        tau = rng.normal(size=d.G)
        value = population_estimand(EstimatorKind.SIVE, d, PopulationInputs(pi=pi, tau=tau))
        assert tau.min() - 1e-12 <= value <= tau.max() + 1e-12


def test_tsls_estimand_reduces_to_sive_without_endogeneity():
    d = two_groups()
    inputs = PopulationInputs(pi=[0.7, 0.4], tau=[1.0, 2.0], sigma_ue=0.0, sigma_uu=0.0)
    tsls = population_estimand(EstimatorKind.TSLS_SATURATED, d, inputs)
    sive = population_estimand(EstimatorKind.SIVE, d, PopulationInputs(pi=[0.7, 0.4], tau=[1.0, 2.0]))
    assert abs(tsls - sive) < 1e-12


def test_tsls_estimand_homoskedastic_shift():
    d = build_design([[0]] * 8 + [[1]] * 8, [1] * 4 + [0] * 4 + [1] * 2 + [0] * 6)
    base_num, base_den = population_moments(
        EstimatorKind.SIVE, d, PopulationInputs(pi=[1.0, 1.0], tau=[1.0, 3.0])
    )
    num, den = population_moments(
        EstimatorKind.TSLS_SATURATED,
        d,
        PopulationInputs(pi=[1.0, 1.0], tau=[1.0, 3.0], sigma_ue=0.7, sigma_uu=1.3),
    )
    # the projection diagonal sums to G, so a constant moment adds sigma * G / n
    assert abs((num - base_num) - 0.7 * d.G / d.n) < 1e-12
    assert abs((den - base_den) - 1.3 * d.G / d.n) < 1e-12


def test_zero_compliance_estimand():
    d = two_groups()
    equal = PopulationInputs(pi=0.0, tau=[1.5, 1.5])
    assert population_estimand(EstimatorKind.SIVE, d, equal) == 1.5
    unequal = PopulationInputs(pi=0.0, tau=[1.0, 2.0])
    with pytest.raises(EstimationError, match="denominator is zero"):
        population_estimand(EstimatorKind.SIVE, d, unequal)


def test_estimand_missing_inputs_are_rejected():
    d = two_groups()
    bare = PopulationInputs(pi=[0.5, 0.5], tau=[1.0, 1.0])
    with pytest.raises(ValueError, match="sigma_ue and sigma_uu"):
        population_estimand(EstimatorKind.TSLS_SATURATED, d, bare)
    with pytest.raises(ValueError, match="psi and phi"):
        population_estimand(EstimatorKind.JIVE1, d, bare)
    with pytest.raises(ValueError, match="sigma_ue and sigma_uu"):
        population_estimand(EstimatorKind.JIVE2, d, bare)
    with pytest.raises(ValueError, match="no population estimand"):
        population_moments(EstimatorKind.TSLS_GENERIC, d, bare)


def test_first_stage_strength_frozen_values():
    d = build_design([[0]] * 4, [1, 1, 0, 0])
    diag = first_stage_strength(d, pi=0.5)
    assert abs(diag["FS"] - 0.0625) < 1e-12
    assert abs(diag["mu_n"] - 0.25) < 1e-12
    full = first_stage_strength(d, pi=1.0)
    assert abs(full["FS"] - 0.25) < 1e-12


def test_first_stage_strength_from_treatment():
    d = two_groups()
    z = d.instrument.astype(float)
    diag = first_stage_strength(d, treatment=z)
    # perfect compliance: estimated shares differ by exactly one
    expected = first_stage_strength(d, pi=[1.0, 1.0])
    assert abs(diag["FS"] - expected["FS"]) < 1e-12
    assert abs(diag["mu_n"] - expected["mu_n"]) < 1e-12


def test_first_stage_strength_requires_exactly_one_source():
    d = two_groups()
    with pytest.raises(ValueError, match="exactly one"):
        first_stage_strength(d)
    with pytest.raises(ValueError, match="exactly one"):
        first_stage_strength(d, pi=0.5, treatment=d.instrument.astype(float))


def test_sample_length_checked():
    d = two_groups()
    with pytest.raises(Exception, match="rows"):
        estimate_sive(d, Sample(np.zeros(3), np.zeros(3)))

"""Dense reference implementations against the fast blockwise paths."""

import numpy as np
import pytest

from sivreg import (
    EstimatorKind,
    Sample,
    assemble,
    build_design,
    chao_variance,
    estimate_jive1,
    estimate_jive2,
    estimate_sive,
    estimate_tsls,
    hartley_sigma,
    oracle_chao_variance,
    oracle_estimate,
    oracle_sigma,
    oracle_variance,
    projection_diag_P,
    sive_variance,
    trace_A_squared,
)

from conftest import random_design, strong_sample

FAST = {
    EstimatorKind.SIVE: estimate_sive,
    EstimatorKind.TSLS_SATURATED: estimate_tsls,
    EstimatorKind.JIVE1: estimate_jive1,
    EstimatorKind.JIVE2: estimate_jive2,
}


def test_assemble_matrix_shapes_and_invariants():
    d = build_design([[0]] * 5 + [[1]] * 4, [1, 1, 0, 0, 0, 1, 1, 0, 0])
    dense = assemble(d)
    n = d.n
    for mat in (dense.P, dense.M_W, dense.M_WZ, dense.D, dense.A):
        assert mat.shape == (n, n)
    np.testing.assert_allclose(dense.P @ dense.P, dense.P, atol=1e-10)
    np.testing.assert_allclose(dense.A, dense.A.T, atol=1e-12)
    np.testing.assert_allclose(np.diag(dense.A), 0.0, atol=1e-10)
    np.testing.assert_allclose(np.trace(dense.P), d.G, atol=1e-10)


def test_assemble_projection_matrix_frozen():
    d = build_design([[0]] * 4, [1, 1, 0, 0])
    dense = assemble(d)
    block = np.array(
        [
            [0.25, 0.25, -0.25, -0.25],
            [0.25, 0.25, -0.25, -0.25],
            [-0.25, -0.25, 0.25, 0.25],
            [-0.25, -0.25, 0.25, 0.25],
        ]
    )
    np.testing.assert_allclose(dense.P, block, atol=1e-12)


def test_assemble_enforces_size_cap():
    d = build_design([[0]] * 6, [1, 1, 1, 0, 0, 0])
    with pytest.raises(ValueError, match="cap"):
        assemble(d, cap=5)


def test_assemble_rejects_degenerate_groups():
    with pytest.raises(Exception):
        assemble(build_design([[0]] * 4, [1, 1, 1, 1]))
    with pytest.raises(Exception):
        assemble(build_design([[0]] * 4, [1, 0, 0, 0]))


def test_fast_paths_match_oracle_everywhere():
    rng = np.random.default_rng(40)
    for _ in range(20):
        d = random_design(rng)
        dense = assemble(d)
        s = strong_sample(rng, d)
        Y, T = s.outcome, s.treatment
        for kind, fast in FAST.items():
            a = fast(d, s)
            b = oracle_estimate(kind, dense, Y, T)
            assert abs(a - b) < 1e-8 * max(1.0, abs(b))
        beta = estimate_sive(d, s)
        v_fast = sive_variance(d, Y, T, beta)
        v_dense = oracle_variance(dense, Y, T, beta)
        assert abs(v_fast - v_dense) < 1e-8 * max(1e-12, abs(v_dense))
        c_fast = chao_variance(d, Y, T, beta)
        c_dense = oracle_chao_variance(dense, Y, T, beta)
        assert abs(c_fast - c_dense) < 1e-8 * max(1e-12, abs(c_dense))
        sig_fast = hartley_sigma(d, T, Y - beta * T)
        sig_dense = oracle_sigma(dense, T, Y - beta * T)
        np.testing.assert_allclose(sig_fast.sigma_u2, sig_dense.sigma_u2, atol=1e-8)
        np.testing.assert_allclose(sig_fast.sigma_v2, sig_dense.sigma_v2, atol=1e-8)
        np.testing.assert_allclose(sig_fast.sigma_uv, sig_dense.sigma_uv, atol=1e-8)
        np.testing.assert_array_equal(sig_fast.used_fallback, sig_dense.used_fallback)


def test_oracle_sigma_fallback_matches_fast():
    rng = np.random.default_rng(41)
    d = build_design([[g] for g in range(4) for _ in range(4)], [1, 1, 0, 0] * 4)
    dense = assemble(d)
    T = rng.standard_normal(d.n)
    r = rng.standard_normal(d.n)
    sig_fast = hartley_sigma(d, T, r)
    sig_dense = oracle_sigma(dense, T, r)
    assert sig_dense.used_fallback.all()
    np.testing.assert_allclose(sig_fast.sigma_u2, sig_dense.sigma_u2, atol=1e-10)
    np.testing.assert_allclose(sig_fast.sigma_uv, sig_dense.sigma_uv, atol=1e-10)


def test_trace_identities_against_dense():
    rng = np.random.default_rng(42)
    for _ in range(5):
        d = random_design(rng)
        dense = assemble(d)
        assert abs(np.trace(dense.P) - d.G) < 1e-10
        assert abs(projection_diag_P(d).sum() - d.G) < 1e-10
        assert abs(trace_A_squared(d) - np.trace(dense.A @ dense.A)) < 1e-8


def test_diagonal_identity_dense():
    rng = np.random.default_rng(43)
    for _ in range(5):
        d = random_design(rng)
        dense = assemble(d)
        lhs = np.diag(dense.M_WZ @ dense.D @ dense.M_WZ)
        np.testing.assert_allclose(lhs, np.diag(dense.P), atol=1e-10)


def test_dense_spectrum_in_unit_interval():
    rng = np.random.default_rng(44)
    d = random_design(rng, G=5)
    eig = np.linalg.eigvalsh(assemble(d).A)
    assert -1.0 - 1e-10 <= eig.min() and eig.max() <= 1.0 + 1e-10


def test_oracle_is_unguarded_where_fast_path_raises():
    # the reference path computes the raw ratio with no weak-denominator
    # guard: on a flat first stage it returns a roundoff-driven number while
    # the production estimator refuses
    d = build_design([[0]] * 6, [1, 1, 1, 0, 0, 0])
    dense = assemble(d)
    T = np.ones(6)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = oracle_estimate(EstimatorKind.SIVE, dense, np.arange(6.0), T)
    assert isinstance(value, float)
    with pytest.raises(Exception, match="robust"):
        estimate_sive(d, Sample(np.arange(6.0), T))

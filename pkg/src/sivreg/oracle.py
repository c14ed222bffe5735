"""Dense-matrix reference implementations.

Everything here materializes the n-by-n operators and evaluates the formulas
by brute force.  It exists to cross-check the closed-form kernels on small
instances (property tests and the debugging flag of the command line); nothing
performance-sensitive should ever import it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import SaturatedDesign
from .estimators import EstimatorKind
from .inference import SigmaEstimates

__all__ = [
    "DenseDesign",
    "assemble",
    "oracle_estimate",
    "oracle_variance",
    "oracle_sigma",
    "oracle_chao_variance",
]

ATOL = 1e-10
DEFAULT_CAP = 2000


@dataclass(frozen=True)
class DenseDesign:
    """Materialized design matrices.

    W and Z are the n-by-G dummy and interaction matrices; P, M_W, M_WZ, D and
    A are the dense n-by-n operators built from them.
    """

    W: np.ndarray
    Z: np.ndarray
    P: np.ndarray
    M_W: np.ndarray
    M_WZ: np.ndarray
    D: np.ndarray
    A: np.ndarray


def _annihilator(V: np.ndarray) -> np.ndarray:
    n = V.shape[0]
    return np.eye(n) - V @ np.linalg.solve(V.T @ V, V.T)


def assemble(design: SaturatedDesign, cap: int = DEFAULT_CAP) -> DenseDesign:
    """Build all dense operators and verify their defining identities.

    Checks, to within 1e-10 elementwise: P and M_WZ are idempotent, A is
    symmetric with a zero diagonal, and the diagonal of ``M_WZ D M_WZ``
    reproduces the diagonal of P.
    """
    n, G = design.n, design.G
    if n > cap:
        raise ValueError(f"dense assembly capped at n={cap}, got n={n}")
    m = design.treated_counts
    sizes = design.group_sizes
    if ((m == 0) | (m == sizes)).any():
        raise ValueError("P needs 0 < m_g < n_g in every group")
    if ((m < 2) | (sizes - m < 2)).any():
        raise ValueError("D needs m_g >= 2 and n_g - m_g >= 2 in every group")

    W = np.zeros((n, G))
    W[np.arange(n), design.group_of] = 1.0
    Z = W * design.instrument[:, None]

    M_W = _annihilator(W)
    # Cell indicators ordered by (group, active first); a group with an empty
    # cell contributes only its nonempty column.
    cols = []
    for g in range(G):
        if m[g] > 0:
            cols.append(Z[:, g])
        if sizes[g] - m[g] > 0:
            cols.append(W[:, g] - Z[:, g])
    M_WZ = _annihilator(np.column_stack(cols))

    MZ = M_W @ Z
    P = MZ @ np.linalg.solve(Z.T @ MZ, MZ.T)

    g_of = design.group_of
    n_of = sizes[g_of].astype(np.float64)
    m_of = m[g_of].astype(np.float64)
    active = design.instrument == 1
    d_diag = np.where(
        active, (n_of - m_of) / (m_of - 1.0), m_of / (n_of - m_of - 1.0)
    ) / n_of
    D = np.diag(d_diag)
    A = P - M_WZ @ D @ M_WZ

    for name, err in (
        ("P idempotence", np.abs(P @ P - P).max()),
        ("M_WZ idempotence", np.abs(M_WZ @ M_WZ - M_WZ).max()),
        ("A symmetry", np.abs(A - A.T).max()),
        ("zero diagonal of A", np.abs(np.diag(A)).max()),
        ("diagonal identity", np.abs(np.diag(M_WZ @ D @ M_WZ) - np.diag(P)).max()),
    ):
        if err > ATOL:
            raise ValueError(f"dense assembly failed {name}: max error {err}")

    return DenseDesign(W=W, Z=Z, P=P, M_W=M_W, M_WZ=M_WZ, D=D, A=A)


def _operator_for(kind: EstimatorKind, dense: DenseDesign) -> np.ndarray:
    if kind is EstimatorKind.TSLS_SATURATED:
        return dense.P
    bare = dense.P - np.diag(np.diag(dense.P))
    if kind is EstimatorKind.JIVE1:
        return bare
    if kind is EstimatorKind.JIVE2:
        return dense.M_W @ bare @ dense.M_W
    if kind is EstimatorKind.SIVE:
        return dense.A
    raise ValueError(f"no dense operator for {kind}")


def oracle_estimate(kind: EstimatorKind, dense: DenseDesign, Y, T) -> float:
    """Literal ``T' Op Y / T' Op T`` with materialized matrices."""
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    op = _operator_for(kind, dense)
    return float(T @ op @ Y) / float(T @ op @ T)


def _cells_of(dense: DenseDesign) -> list[np.ndarray]:
    """Observation indices per cell, ordered by (group, active first)."""
    g = dense.W.argmax(axis=1)
    active = dense.Z[np.arange(dense.W.shape[0]), g] > 0.5
    cells = []
    for gi in range(dense.W.shape[1]):
        for status in (True, False):
            idx = np.flatnonzero((g == gi) & (active == status))
            if idx.size:
                cells.append(idx)
    return cells


def oracle_sigma(dense: DenseDesign, T, residual) -> SigmaEstimates:
    """Error moments via numeric per-cell block solves.

    Cells of size 2 make the Hadamard-square block singular and fall back to
    the same rescaled products as the fast path.
    """
    T = np.asarray(T, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    n = T.size
    MM = dense.M_WZ * dense.M_WZ
    ut = dense.M_WZ @ T
    rt = dense.M_WZ @ residual
    products = {"uu": ut * ut, "vv": rt * rt, "uv": rt * ut}
    out = {key: np.empty(n) for key in products}
    fallback = np.zeros(n, dtype=bool)
    for idx in _cells_of(dense):
        if idx.size < 2:
            raise ValueError(f"cell containing observation {idx[0]} has size < 2")
        if idx.size == 2:
            fallback[idx] = True
            for key, prod in products.items():
                out[key][idx] = 4.0 * prod[idx]
        else:
            block = MM[np.ix_(idx, idx)]
            for key, prod in products.items():
                out[key][idx] = np.linalg.solve(block, prod[idx])
    return SigmaEstimates(
        sigma_u2=out["uu"],
        sigma_v2=out["vv"],
        sigma_uv=out["uv"],
        used_fallback=fallback,
    )


def oracle_variance(dense: DenseDesign, Y, T, beta: float) -> float:
    """Literal evaluation of the variance estimator at ``beta``."""
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    r = Y - beta * T
    sig = oracle_sigma(dense, T, r)
    a_r = dense.A @ r
    a_t = dense.A @ T
    num = (
        float(sig.sigma_u2 @ (a_r * a_r))
        + float(sig.sigma_v2 @ (a_t * a_t))
        + 2.0 * float(sig.sigma_uv @ (a_r * a_t))
    )
    return num / float(T @ dense.A @ T) ** 2


def oracle_chao_variance(dense: DenseDesign, Y, T, beta: float) -> float:
    """Literal evaluation of the comparison variance estimator."""
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    eps = dense.M_WZ @ (Y - beta * T)
    u = dense.M_WZ @ T
    J = np.linalg.inv(dense.M_W * dense.M_W)
    D1 = np.diag(J @ (eps * eps))
    AA = dense.A * dense.A
    num = float(T @ dense.A @ D1 @ dense.A @ T) + float(
        (eps * u) @ J @ AA @ J @ (eps * u)
    )
    return num / float(T @ dense.A @ T) ** 2

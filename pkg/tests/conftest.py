"""Shared generators for randomized design/sample tests."""

import numpy as np

from sivreg import Sample, build_design


def random_design(rng, G=None, size_range=(4, 12), min_active=2, min_inactive=2):
    """A valid saturated design with shuffled row order.

    Group labels double as the single covariate, so group_keys are the
    labels; shuffling exercises the first-appearance indexing.
    """
    if G is None:
        G = int(rng.integers(1, 8))
    lo = max(size_range[0], min_active + min_inactive)
    labels, flags = [], []
    for g in range(G):
        n_g = int(rng.integers(lo, size_range[1] + 1))
        m_g = int(rng.integers(min_active, n_g - min_inactive + 1))
        labels += [g] * n_g
        flags += [1] * m_g + [0] * (n_g - m_g)
    perm = rng.permutation(len(flags))
    return build_design([(int(labels[i]),) for i in perm], [flags[i] for i in perm])


def strong_sample(rng, design, tau=1.0, pi=0.8):
    """Sample with a strong first stage and heteroskedastic correlated errors."""
    n = design.n
    z = design.instrument.astype(np.float64)
    g = design.group_of.astype(np.float64)
    scale_u = rng.uniform(0.5, 1.5, size=n)
    scale_e = rng.uniform(0.5, 1.5, size=n)
    shock = rng.standard_normal((2, n))
    u = scale_u * shock[0]
    e = scale_e * (0.5 * shock[0] + np.sqrt(0.75) * shock[1])
    T = 0.3 * g + pi * z + u
    Y = -0.2 * g + tau * T + e
    return Sample(outcome=Y, treatment=T)


def pytest_terminal_summary(terminalreporter):
    """One visible pass/fail line per acceptance criterion."""
    rows = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if outcome != "skipped" and getattr(rep, "when", "call") != "call":
                continue
            rows.append((nodeid.split("::", 1)[1], outcome))
    if rows:
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(set(rows)):
            terminalreporter.write_line(f"{label[verdict]}  {name}")

"""Simulation harness: sequences, DGP, experiment runners and summaries."""

import json

import numpy as np
import pytest

from sivreg.simulation import (
    SUMMARY_COLUMNS,
    SimConfig,
    generate_sample,
    halton,
    outcome_level,
    propensity,
    replication_seed,
    run_bias_experiment,
    run_size_experiment,
    summarize,
)


def test_halton_base_two_frozen():
    assert halton(1, 2) == 0.5
    assert halton(2, 2) == 0.25
    assert halton(3, 2) == 0.75
    assert halton(4, 2) == 0.125


def test_halton_base_three_frozen():
    assert abs(halton(1, 3) - 1 / 3) < 1e-15
    assert abs(halton(2, 3) - 2 / 3) < 1e-15
    assert abs(halton(3, 3) - 1 / 9) < 1e-15


def test_halton_points_distinct_in_unit_interval():
    points = [halton(i, 2) for i in range(1, 301)]
    assert len(set(points)) == 300
    assert all(0.0 < p < 1.0 for p in points)


def test_halton_rejects_bad_arguments():
    with pytest.raises(ValueError):
        halton(0, 2)
    with pytest.raises(ValueError):
        halton(1, 1)


def test_propensity_cubic_and_clamping():
    assert abs(propensity(0.0) - 0.119) < 1e-12
    assert propensity(-1.0) == 0.01
    assert propensity(2.0) == 0.99
    inside = propensity(np.linspace(0.0, 1.0, 50))
    assert np.all((inside >= 0.01) & (inside <= 0.99))


def test_outcome_level_positive_argument():
    assert np.isfinite(outcome_level(0.0))
    assert np.isfinite(outcome_level(1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=0)
    with pytest.raises(ValueError):
        SimConfig(rho=1.5)
    with pytest.raises(ValueError):
        SimConfig(p1=1.5)
    with pytest.raises(ValueError):
        SimConfig(replications=0)
    with pytest.raises(ValueError):
        SimConfig(n=100, n_hetero=101)
    with pytest.raises(ValueError):
        SimConfig(L=0)


def test_config_hetero_count_defaults():
    assert SimConfig(n=3000).n_hetero == 900
    assert SimConfig(n=200).n_hetero == 200
    assert SimConfig(n=3000, n_hetero=10).n_hetero == 10


def test_replication_seeds_are_order_free():
    a = replication_seed(7, 3).generate_state(4)
    b = replication_seed(7, 3).generate_state(4)
    c = replication_seed(7, 4).generate_state(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_homogeneous_draw_truth():
    cfg = SimConfig(n=3000, L=25, h=0.0, master_seed=1)
    draw = generate_sample(cfg)
    np.testing.assert_allclose(draw.truth["tau"], 0.2)
    np.testing.assert_allclose(draw.truth["pi"], cfg.p1 - cfg.p0)
    assert abs(draw.truth["beta_sive"] - 0.2) < 1e-12
    assert draw.design.n == draw.sample.n


def test_draw_is_deterministic_in_seed():
    cfg = SimConfig(n=400, L=4, master_seed=0)
    seed = replication_seed(11, 2)
    a = generate_sample(cfg, replication_seed(11, 2))
    b = generate_sample(cfg, seed)
    np.testing.assert_array_equal(a.design.group_of, b.design.group_of)
    np.testing.assert_array_equal(a.design.instrument, b.design.instrument)
    np.testing.assert_array_equal(a.sample.outcome, b.sample.outcome)
    np.testing.assert_array_equal(a.sample.treatment, b.sample.treatment)


def test_ineligible_take_up_matches_baseline_rate():
    cfg = SimConfig(n=3000, L=1, master_seed=5)
    draw = generate_sample(cfg)
    t = draw.sample.treatment
    q = draw.design.instrument
    rate = t[q == 0].mean()
    n0 = int((q == 0).sum())
    assert abs(rate - cfg.p0) < 3.0 * np.sqrt(cfg.p0 * (1 - cfg.p0) / n0)


def test_group_filter_keeps_usable_designs_at_scale():
    # moderate grids survive intact; with 200 groups of 15 the extreme
    # propensity values lose their cells, but most of the sample remains
    draw = generate_sample(SimConfig(n=3000, L=25, master_seed=2))
    assert draw.design.n == 3000
    assert draw.design.G == 25
    draw = generate_sample(SimConfig(n=3000, L=200, master_seed=2))
    assert draw.design.n / 3000 > 0.5
    assert draw.design.G > 100
    assert len(draw.audit.violations) + len(draw.audit.kept_groups) == 200


def test_heterogeneity_goes_to_smallest_covariate_values():
    # two groups of 8 at x = 0.5 and x = 0.25; the 8 boosted observations
    # are exactly the x = 0.25 group
    cfg = SimConfig(n=16, L=2, h=3.0, n_hetero=8, master_seed=3)
    draw = generate_sample(cfg)
    assert draw.design.G == 2
    by_key = dict(zip(draw.design.group_keys, draw.truth["tau"]))
    assert abs(by_key[(0.25,)] - 0.8) < 1e-12
    assert abs(by_key[(0.5,)] - 0.2) < 1e-12
    lo, hi = min(draw.truth["tau"]), max(draw.truth["tau"])
    assert lo <= draw.truth["beta_sive"] <= hi


def test_bias_rows_have_fixed_shape():
    cfg = SimConfig(n=200, L=1, replications=3, master_seed=4)
    rows = run_bias_experiment(cfg, L_values=[1, 2], p1_values=[0.49])
    assert all(set(r) == set(SUMMARY_COLUMNS) for r in rows)
    # 2 cells x 4 estimators x 3 metrics
    assert len(rows) == 24
    metrics = {r["metric"] for r in rows}
    assert metrics == {"median_bias", "abs_median_bias", "attrition"}
    for r in rows:
        if r["metric"] == "attrition":
            assert 0.0 <= r["value"] <= 1.0
            assert r["replications"] == 3


def test_bias_every_draw_failing_counts_as_attrition():
    # no first stage but heterogeneous group effects: the estimand itself is
    # undefined, so every replication is dropped
    cfg = SimConfig(
        n=120, L=2, p1=0.22, p0=0.22, h=2.0, n_hetero=30, replications=3, master_seed=0
    )
    rows = run_bias_experiment(cfg)
    for r in rows:
        if r["metric"] == "attrition":
            assert r["value"] == 1.0
        else:
            assert r["value"] is None
            assert r["replications"] == 0


def test_size_rows_have_fixed_shape():
    cfg = SimConfig(n=300, L=1, replications=4, master_seed=6)
    rows = run_size_experiment(cfg, L_values=[1], p1_values=[0.49, 0.69])
    assert all(set(r) == set(SUMMARY_COLUMNS) for r in rows)
    # 2 cells x 2 variants x 2 metrics
    assert len(rows) == 8
    labels = {r["estimator"] for r in rows}
    assert labels == {"sive_vhat", "sive_chao"}
    for r in rows:
        if r["metric"] == "reject_rate" and r["value"] is not None:
            assert 0.0 <= r["value"] <= 1.0


def test_size_rejects_unknown_variant():
    cfg = SimConfig(n=300, replications=2)
    with pytest.raises(ValueError, match="variant"):
        run_size_experiment(cfg, variance_variants=("vhat", "bootstrap"))


def test_summarize_empty_rows_is_header_only():
    csv_text, json_text = summarize([])
    assert csv_text == ",".join(SUMMARY_COLUMNS) + "\n"
    payload = json.loads(json_text)
    assert payload["schema_version"] == 1
    assert payload["columns"] == list(SUMMARY_COLUMNS)
    assert payload["rows"] == []


def test_summarize_none_becomes_empty_field_and_null():
    row = {
        "experiment": "bias",
        "L": 1,
        "p1": 0.49,
        "h": 0.0,
        "estimator": "sive",
        "metric": "median_bias",
        "value": None,
        "mc_se": None,
        "replications": 0,
    }
    csv_text, json_text = summarize([row])
    line = csv_text.splitlines()[1]
    assert line == "bias,1,0.49,0.0,sive,median_bias,,,0"
    assert json.loads(json_text)["rows"][0]["value"] is None


def test_summarize_csv_and_json_carry_identical_numbers():
    cfg = SimConfig(n=200, L=1, replications=3, master_seed=8)
    rows = run_bias_experiment(cfg, L_values=[1], p1_values=[0.49])
    csv_text, json_text = summarize(rows)
    lines = csv_text.splitlines()
    header = lines[0].split(",")
    parsed = [dict(zip(header, line.split(","))) for line in lines[1:]]
    for csv_row, json_row in zip(parsed, json.loads(json_text)["rows"]):
        for col in ("value", "mc_se"):
            if csv_row[col] == "":
                assert json_row[col] is None
            else:
                assert float(csv_row[col]) == json_row[col]


def test_summarize_writes_files(tmp_path):
    cfg = SimConfig(n=200, L=1, replications=2, master_seed=9)
    rows = run_size_experiment(cfg, variance_variants=("vhat",))
    csv_path = tmp_path / "size.csv"
    json_path = tmp_path / "size.json"
    csv_text, json_text = summarize(rows, csv_path=csv_path, json_path=json_path)
    assert csv_path.read_text() == csv_text
    assert json_path.read_text() == json_text


def test_experiment_rows_are_reproducible():
    cfg = SimConfig(n=200, L=2, replications=3, master_seed=10)
    a = run_bias_experiment(cfg, L_values=[1], p1_values=[0.39])
    b = run_bias_experiment(cfg, L_values=[1], p1_values=[0.39])
    assert summarize(a)[0] == summarize(b)[0]

"""Smoke tests for the ipswlab python module."""

import math

import pytest

ipswlab = pytest.importorskip("ipswlab")


def test_dataset_roundtrip(tmp_path):
    ds = ipswlab.build_dataset(
        {"X1": [1.0, 2.0, float("nan")], "S": [1.0, 0.0, 0.0]},
        {"S": "trial_indicator"},
        ["X1", "S"],
    )
    assert ds.n_rows == 3
    assert ds.count_masked("X1") == 1

    path = tmp_path / "ds.csv"
    ipswlab.write_csv(ds, str(path))
    back = ipswlab.read_csv(str(path), {"S": "trial_indicator"})
    assert back.values("X1")[:2] == [1.0, 2.0]
    assert back.observed("X1") == [True, True, False]


def test_invalid_role_raises():
    with pytest.raises(ValueError):
        ipswlab.build_dataset({"S": [0.0, 2.0]}, {"S": "trial_indicator"}, ["S"])


def test_glm_fit_matches_known_slope():
    x = [[v] for v in (0.0, 1.0, 2.0, 3.0)]
    fit = ipswlab.fit_wls(x, [1.0, 3.0, 5.0, 7.0], [1.0] * 4, ["x"])
    assert fit.coef[0] == pytest.approx(1.0)
    assert fit.coef[1] == pytest.approx(2.0)


def test_simulation_to_estimate_pipeline():
    cfg = ipswlab.ScenarioConfig()
    cfg.n_target = 3000
    cfg.alpha = [-2.0, 1.0, 1.0, 1.0]
    cfg.seed = 11
    pop = ipswlab.make_superpopulation(cfg)
    assert pop.data.n_rows == 3000
    assert 0 < pop.n_trial < 3000

    params = ipswlab.PipelineParams()
    params.covariates = ["X1", "X2", "X3"]
    res = ipswlab.ipsw_pipeline(pop.data, params)
    assert math.isfinite(res.estimate)
    assert res.robust_se > 0

    ps = ipswlab.estimate_ps(pop.data, ["X1", "X2", "X3"])
    assert len(ps) == 3000
    assert all(0.0 < p < 1.0 for p in ps)


def test_mar_impute_pool_roundtrip():
    cfg = ipswlab.ScenarioConfig()
    cfg.n_target = 2000
    cfg.alpha = [-2.0, 1.0, 1.0, 1.0]
    cfg.seed = 21
    pop = ipswlab.make_superpopulation(cfg)

    mar = ipswlab.MarSpec()
    mar.frac_trial = 0.1
    masked = ipswlab.induce_mar(pop.data, mar)
    assert masked.count_masked("X1") > 0

    spec = ipswlab.build_spec(ipswlab.ModelKind.M2, masked, ipswlab.MRule.explicit_count(3))
    spec.seed = 5
    imputed = ipswlab.impute(masked, spec)
    assert len(imputed.datasets) == 3
    for d in imputed.datasets:
        assert d.count_masked("X1") == 0

    params = ipswlab.PipelineParams()
    params.covariates = ["X1", "X2", "X3"]
    pooled = ipswlab.psi_within(imputed, params)
    assert pooled.m == 3
    assert pooled.total_var >= pooled.within_var


def test_diagnostics():
    assert ipswlab.tipton_index([0.1, 0.5], [0.5, 0.9], 3) == pytest.approx(0.5)
    assert ipswlab.ess([1.0, 1.0, 2.0]) == pytest.approx(16.0 / 6.0)


def test_metrics_dict():
    m = ipswlab.performance_metrics([0.0, 2.0], 0.0, [0.5, 0.5])
    assert m["bias"] == pytest.approx(1.0)
    assert m["mse"] == pytest.approx(2.0)


def test_run_study_json():
    import json

    config = {
        "scenario": {"n_target": 500, "alpha": [-1.2, 1, 1, 1]},
        "trial_fracs": [0.1],
        "methods": ["FullData", "CC"],
        "n_sim": 3,
        "m_rule": 2,
        "master_seed": 7,
    }
    out = json.loads(ipswlab.run_study_json(json.dumps(config)))
    assert out["n_sim"] == 3
    assert len(out["cells"]) == 2

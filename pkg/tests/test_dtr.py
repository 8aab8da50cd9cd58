import numpy as np
import pytest

from regime_kit.data import CohortDataset, DataError
from regime_kit.dtr import FitConfig, fit_multistage, fit_single_stage
from regime_kit.simgen import ScenarioSpec, evaluate_regime, generate_scenario

SIM2_CFG = dict(rule_features={1: ["X1_2"], 2: ["A1", "X2_2"]}, u_columns={1: ["X1_2"]}, z_columns={1: ["X1_1", "A1"]})


def test_sim1_augmented_fit_is_accurate():
    spec = ScenarioSpec("SIM1", 1000, 31)
    c, _ = generate_scenario(spec)
    reg = fit_single_stage(c, "ACFBL", FitConfig(rule_features={1: ["X1_2"]}))
    ev = evaluate_regime(reg, spec, 50_000, 3)
    assert ev["opt_pct"] >= 0.85
    assert reg.diagnostics[1]["n"] == int(c.R[:, 0].sum())
    assert set(reg.diagnostics[1]["spline_lam"]) == {1, -1}


def test_plain_weighting_skips_arm_models():
    c, _ = generate_scenario(ScenarioSpec("SIM1", 300, 2))
    reg = fit_single_stage(c, "CFBL", FitConfig(rule_features={1: ["X1_2"]}))
    assert "spline_lam" not in reg.diagnostics[1]


def test_dominant_effect_gives_treat_all(rng):
    n = 200
    X = rng.uniform(size=(n, 2))
    A = np.where(rng.uniform(size=n) < 0.5, 1, -1)
    Y = 10.0 * (A == 1) + 0.1 * rng.normal(size=n)
    reg = fit_single_stage(CohortDataset([X], A, Y), "ACFBL", FitConfig(rule_features={1: ["X1_1", "X1_2"]}))
    assert np.all(reg.decide(1, X, ["X1_1", "X1_2"]) == 1)


def test_arm_independent_second_stage_reduces_to_single_stage(rng):
    n = 150
    X1 = rng.uniform(size=(n, 2))
    X2 = rng.uniform(size=(n, 1))
    A = np.where(rng.uniform(size=(n, 2)) < 0.5, 1, -1)
    Y1 = A[:, 0] * (0.5 - X1[:, 1]) + X1[:, 0] + 0.2 * rng.normal(size=n)
    Y = np.column_stack([Y1, np.zeros(n)])
    c = CohortDataset([X1, X2], A, Y)
    cfg = FitConfig(rule_features={1: ["X1_2"], 2: ["X2_1"]}, spline_lam=1e-9, rule_lam=1e-3,
                    balance_lam={1: (1e-5, 0.1), 2: (1e-5, 0.1)})
    multi = fit_multistage(c, cfg, "ACFBL")
    rows, pse = multi.pseudo_outcomes[1]
    assert np.array_equal(rows, np.arange(n))
    assert np.allclose(pse, Y1, atol=0.05)
    single = fit_single_stage(c, "ACFBL", cfg, stage=1, outcome=pse)
    assert multi.rules[1].intercept == pytest.approx(single.rules[1].intercept, abs=1e-12)
    assert np.allclose(multi.rules[1].coef, single.rules[1].coef, atol=1e-12)


def test_multistage_diagnostics_and_determinism():
    c, _ = generate_scenario(ScenarioSpec("SIM2", 300, 12))
    a = fit_multistage(c, FitConfig(**SIM2_CFG))
    b = fit_multistage(c, FitConfig(**SIM2_CFG))
    assert a.T == 2
    for t in (1, 2):
        assert a.rules[t].intercept == b.rules[t].intercept
        assert np.array_equal(a.rules[t].coef, b.rules[t].coef)
    d1 = a.diagnostics[1]
    assert "gamma" in d1 and d1["gmm"]["floored"] >= 0
    assert 0 < d1["coverage"] < 1
    assert a.diagnostics[2]["coverage"] == 1.0
    assert a.rules[2].features == ["A1", "X2_2"]


def test_balancing_weights_ignore_outcomes():
    c, _ = generate_scenario(ScenarioSpec("SIM2", 250, 13))
    cfg = FitConfig(**SIM2_CFG)
    a = fit_multistage(c, cfg)
    perm = np.random.default_rng(0).permutation(c.n)
    shuffled = CohortDataset(c.X, c.A, np.column_stack([c.Y[:, 0], c.Y[perm, 1]]))
    b = fit_multistage(shuffled, cfg)
    # stage-1 histories do not contain outcomes, so the weights cannot move
    assert a.diagnostics[1]["balance"] == b.diagnostics[1]["balance"]


def test_empty_sample_is_a_data_error():
    X1 = np.full((20, 1), np.nan)
    A = np.ones(20, int)
    A[::2] = -1
    c = CohortDataset([X1], A, np.zeros(20))
    with pytest.raises(DataError):
        fit_single_stage(c, "ACFBL", FitConfig(rule_features={1: ["X1_1"]}))


def test_complete_case_mode_drops_missing_rows():
    c, _ = generate_scenario(ScenarioSpec("SIM2", 250, 14))
    reg = fit_multistage(c, FitConfig(**SIM2_CFG, missing_weighting="NONE"))
    assert "gamma" not in reg.diagnostics[1]
    with pytest.raises(ValueError):
        fit_multistage(c, FitConfig(**SIM2_CFG), "CFBL")

import dataclasses

import numpy as np
import pytest

from regime_kit.baselines import (
    Formula,
    QSpec,
    builtin_q_specs,
    fit_linear_q,
    fit_logistic,
    fit_owl_ipw,
    fit_parametric_q_learning,
)
from regime_kit.config import SCENARIO_DEFAULTS
from regime_kit.data import CohortDataset
from regime_kit.dtr import FitConfig
from regime_kit.simgen import ScenarioSpec, _y1, _y2, evaluate_regime, generate_scenario


def _noiseless_full(n, seed):
    c, t = generate_scenario(ScenarioSpec("SIM2", n, seed))
    d = dataclasses.replace(t.draws, e1=np.zeros(n), e2=np.zeros(n))
    a1, a2 = c.A[:, 0], c.A[:, 1]
    Y = np.column_stack([_y1("SIM2", a1, d), _y2(a1, a2, d)])
    return CohortDataset(t.X_full, c.A, Y)


def test_formula_parsing_and_design():
    f = Formula.parse("1 + X1_1^2 + A1*X2_2")
    H = np.array([[2.0, -1.0, 3.0]])
    assert f.design(H, ["X1_1", "A1", "X2_2"]).tolist() == [[1.0, 4.0, -3.0]]
    assert f.columns() == {"X1_1", "A1", "X2_2"}
    with pytest.raises(ValueError):
        Formula.parse("1 + + X")
    with pytest.raises(KeyError):
        f.design(H, ["a", "b", "c"])


def test_noiseless_correct_model_recovers_coefficients():
    full = _noiseless_full(100_000, 3)
    reg = fit_parametric_q_learning(full, builtin_q_specs("SIM2", "CORRECT"))
    assert np.allclose(reg.diagnostics[2]["psi"], [1.0, -1.0, 1.0], atol=1e-6)
    assert np.allclose(reg.diagnostics[2]["beta"], [-3.0, 1.0, 2.0, -2.0], atol=1e-6)
    # stage 1 regresses on a pseudo-outcome that still varies with X2 given h1,
    # so recovery is only up to sampling error
    assert np.allclose(reg.diagnostics[1]["psi"], [2.0, -2.0], atol=0.05)


def test_ee_without_missingness_equals_unweighted():
    full = _noiseless_full(2000, 5)
    specs = builtin_q_specs("SIM2", "INCORRECT")
    cfg = FitConfig(rule_features={}, u_columns={1: ["X1_2"]}, z_columns={1: ["X1_1", "A1"]})
    a = fit_parametric_q_learning(full, specs, "EE", cfg)
    b = fit_parametric_q_learning(full, specs, "NONE", cfg)
    for t in (1, 2):
        assert np.array_equal(a.diagnostics[t]["psi"], b.diagnostics[t]["psi"])


def test_rank_deficiency_flag(rng):
    spec = QSpec.parse("1 + X", "1 + X")
    H = np.ones((20, 1))
    fit = fit_linear_q(spec, H, ["X"], np.where(rng.uniform(size=20) < 0.5, 1, -1), rng.normal(size=20))
    assert fit.rank_deficient


def test_sim1_misspecified_q_learning():
    vals, opts = [], []
    for s in range(15):
        spec = ScenarioSpec("SIM1", 500, 500 + s)
        c, _ = generate_scenario(spec)
        reg = fit_parametric_q_learning(c, builtin_q_specs("SIM1", "INCORRECT"))
        ev = evaluate_regime(reg, spec, 50_000, 1)
        vals.append(ev["value"])
        opts.append(ev["opt_pct"])
    assert abs(np.mean(vals) - 1.420) <= 0.15
    assert abs(np.mean(opts) - 0.624) <= 0.1


def test_logistic_fit_on_constant_design(rng):
    a = np.where(rng.uniform(size=400) < 0.3, 1, -1)
    beta = fit_logistic(np.ones((400, 1)), a)
    assert 1 / (1 + np.exp(-beta[0])) == pytest.approx(np.mean(a == 1), abs=1e-8)


def test_owl_known_randomization_weights(rng):
    c, _ = generate_scenario(ScenarioSpec("SIM1", 200, 1))
    reg = fit_owl_ipw(c, ["X1_2"], known_propensity=0.5)
    assert np.allclose(reg.diagnostics[1]["weights"], 2.0)


def test_owl_constant_covariates_use_marginal_rate(rng):
    n = 300
    A = np.where(rng.uniform(size=n) < 0.35, 1, -1)
    c = CohortDataset([np.ones((n, 2))], A, rng.normal(size=n))
    reg = fit_owl_ipw(c, ["X1_2"], "1 + X1_1")
    w = reg.diagnostics[1]["weights"]
    pbar = np.mean(A == 1)
    assert np.allclose(w, np.where(A == 1, 1 / pbar, 1 / (1 - pbar)), rtol=1e-6)


def test_owl_sim1_accuracy_bracket():
    opts = []
    for s in range(6):
        spec = ScenarioSpec("SIM1", 2000, 900 + s)
        c, _ = generate_scenario(spec)
        reg = fit_owl_ipw(c, ["X1_2"], SCENARIO_DEFAULTS["SIM1"]["owl_propensity"])
        opts.append(evaluate_regime(reg, spec, 50_000, 2)["opt_pct"])
    assert 0.85 <= np.mean(opts) <= 0.97


def test_owl_clipping_count(rng):
    n = 200
    x = np.linspace(-5, 5, n)
    A = np.where(x > 0, 1, -1)
    c = CohortDataset([np.column_stack([x, x])], A, rng.normal(size=n))
    reg = fit_owl_ipw(c, ["X1_2"], "1 + X1_1")
    assert reg.diagnostics[1]["clipped"] > 0
    assert reg.diagnostics[1]["weights"].max() <= 100 + 1e-9

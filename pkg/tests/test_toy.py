import json
import math

import numpy as np
import pytest
from scipy import integrate, optimize

from calsynth._logistic import irls
from calsynth.errors import InvalidParam, OneClass, Separable
from calsynth.toy import (
    ExperimentConfig, ToyDataset, TruncNormalSpec, bin_trunc_spec, curve_csv, fit_logistic,
    run_experiment, sample_trunc_normal, simulate, toy_accuracy, toy_diagram,
)


def nll(beta, x, y):
    eta = beta[0] + beta[1] * x
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def nll_grad(beta, x, y):
    r = 1 / (1 + np.exp(-(beta[0] + beta[1] * x))) - y
    return np.array([r.sum(), (r * x).sum()])


# --- simulation -------------------------------------------------------------

def test_symmetric_coin():
    data = simulate(300, -10, 10, 0.0, 0.0, seed=5)
    assert abs(data.y.mean() - 0.5) <= 0.06


def test_positive_fraction_matches_quadrature():
    expected, _ = integrate.quad(lambda x: 1 / (1 + math.exp(-(2 * x - 1))) / 20, -10, 10)
    assert expected == pytest.approx(0.475, abs=1e-3)
    data = simulate(300, -10, 10, -1.0, 2.0, seed=17)
    assert abs(data.y.mean() - expected) <= 0.06
    assert data.x.min() >= -10 and data.x.max() <= 10


def test_simulation_is_deterministic():
    a, b = simulate(50, -1, 1, 0.3, 1.0, seed=9), simulate(50, -1, 1, 0.3, 1.0, seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


@pytest.mark.parametrize("args", [(0, -1, 1), (10, 1, 1), (2.5, -1, 1)])
def test_simulation_validation(args):
    with pytest.raises(InvalidParam):
        simulate(*args, 0.0, 1.0, seed=0)


# --- logistic fit -----------------------------------------------------------

def test_fit_symmetric_data():
    model = fit_logistic(ToyDataset(np.array([-1.0, -1, 1, 1]), np.array([0, 1, 0, 1])))
    assert abs(model.beta0) <= 1e-8 and abs(model.beta1) <= 1e-8
    assert model.converged


def test_fit_matches_bfgs_oracle():
    for seed in range(20):
        data = simulate(300, -10, 10, -1.0, 2.0, seed=seed)
        model = fit_logistic(data)
        ref = optimize.minimize(nll, x0=np.zeros(2), args=(data.x, data.y), jac=nll_grad,
                                method="BFGS", options={"gtol": 1e-10, "maxiter": 10_000})
        assert model.beta0 == pytest.approx(ref.x[0], abs=1e-5)
        assert model.beta1 == pytest.approx(ref.x[1], abs=1e-5)


def test_fit_on_toy_config():
    data = simulate(300, -10, 10, -1.0, 2.0, seed=42)
    model = fit_logistic(data)
    assert model.beta1 > 0
    assert 0.90 <= toy_accuracy(data, model) <= 0.99


def test_irls_likelihood_never_increases():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.uniform(-10, 10, size=200)
        y = (rng.uniform(size=200) < 1 / (1 + np.exp(-(0.5 + 0.8 * x)))).astype(int)
        res = irls(x, y)
        assert res.converged
        assert np.all(np.diff(res.nll_trace) <= 1e-9)


def test_irls_degenerate_inputs():
    with pytest.raises(Separable):
        irls(np.array([-2.0, -1, 1, 2]), np.array([0, 0, 1, 1]))
    with pytest.raises(OneClass):
        irls(np.array([-2.0, 1]), np.array([1, 1]))


# --- truncated normal -------------------------------------------------------

def test_truncated_at_mean_shifts_by_half_normal_mean():
    spec = TruncNormalSpec(mu=1.5, sd=2.0, n=10_000, lower=1.5, label=1)
    xs = sample_trunc_normal(spec, seed=0)
    shift = math.sqrt(2 / math.pi)  # phi(0) / (1 - Phi(0))
    assert xs.mean() == pytest.approx(1.5 + 2.0 * shift, abs=4 * 2.0 / math.sqrt(10_000))
    assert xs.min() >= 1.5


def test_untruncated_limit():
    spec = TruncNormalSpec(mu=-3.0, sd=0.5, n=10_000, lower=-math.inf, label=0)
    xs = sample_trunc_normal(spec, seed=1)
    assert xs.mean() == pytest.approx(-3.0, abs=4 * 0.5 / 100)


def test_far_tail_truncation_stays_finite():
    xs = sample_trunc_normal(TruncNormalSpec(0.0, 1.0, 500, 9.0, 1), seed=2)
    assert np.all(np.isfinite(xs)) and xs.min() >= 9.0 and xs.mean() < 9.5


@pytest.mark.parametrize("kwargs", [dict(sd=0.0), dict(n=0), dict(label=2), dict(mu=math.nan)])
def test_trunc_spec_validation(kwargs):
    base = dict(mu=0.0, sd=1.0, n=5, lower=0.0, label=1)
    with pytest.raises(InvalidParam):
        TruncNormalSpec(**{**base, **kwargs})


def test_bin_spec_uses_members():
    data = simulate(300, -10, 10, -1.0, 2.0, seed=42)
    model = fit_logistic(data)
    diagram = toy_diagram(data, model, 5)
    for b in diagram.bins:
        if not b.count:
            continue
        spec = bin_trunc_spec(data, diagram, b.index, model)
        xs = data.x[list(b.members)]
        assert spec.n == b.count
        assert spec.lower == xs.min()
        assert spec.mu == pytest.approx(xs.mean())
        majority = data.y[list(b.members)].mean()
        if majority != 0.5:
            assert spec.label == int(majority > 0.5)


# --- experiment -------------------------------------------------------------

def test_no_targets_gives_single_stage():
    report = run_experiment(ExperimentConfig(threshold=1.0))
    assert report.targets == [] and len(report.stages) == 1


def test_experiment_structure_and_determinism():
    config = ExperimentConfig(seed=42)
    report = run_experiment(config)
    assert json.dumps(report.to_dict()) == json.dumps(run_experiment(config).to_dict())
    assert len(report.stages) == 1 + len(report.targets)
    base = report.initial
    assert base.n_train == 300 and base.acc == base.acc_original
    running = 300
    for stage, index in zip(report.stages[1:], report.targets):
        (syn,) = stage.synthetic
        assert syn["bin"] == index
        assert syn["n"] == base.diagram.bin(index).count
        running += syn["n"]
        assert stage.n_train == running
    assert report.targets == sorted(report.targets)


def test_injected_points_respect_truncation():
    config = ExperimentConfig(seed=3)
    report = run_experiment(config)
    seeds = np.random.SeedSequence(config.seed).spawn(len(report.targets))
    for stage, child in zip(report.stages[1:], seeds):
        spec = {k: v for k, v in stage.synthetic[0].items() if k != "bin"}
        xs = sample_trunc_normal(TruncNormalSpec(**spec), child)
        assert xs.min() >= spec["lower"]


def test_curve_csv_columns():
    report = run_experiment(ExperimentConfig(seed=1))
    lines = curve_csv(report, points=11).splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["x", "true"]
    assert len(header) == 2 + len(report.stages)
    assert len(lines) == 12


def test_final_slope_moves_closer_to_truth_in_most_seeds():
    closer = 0
    for seed in range(20):
        report = run_experiment(ExperimentConfig(seed=seed))
        closer += abs(report.final.beta1 - 2.0) < abs(report.initial.beta1 - 2.0)
    assert closer > 10, f"final slope closer to 2 in only {closer}/20 seeds"

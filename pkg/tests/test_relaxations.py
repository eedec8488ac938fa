import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwg.analysis import enumerate_distribution
from gwg.core import make_rng, state_index
from gwg.models import IsingModel
from gwg.relaxations import (RHMC, RMALA, RelaxConfig, gamma, gamma_lambda, grad_log_pc_lambda,
                             hyperparameter_grid, init_from_discrete, leapfrog, log_pc,
                             log_pc_lambda, rhmc_step, rmala_step)
from gwg.testkit import chi_square_pvalue, finite_difference_grad, random_model

P_MIN = 0.0027


def test_gamma_examples():
    assert gamma([-1.0, 2.0]).tolist() == [0, 1]
    assert gamma([0.0]).tolist() == [0]


def test_gamma_lambda_examples():
    assert gamma_lambda(0.0, 0.7) == 0.5
    assert gamma_lambda(math.log(3), 1.0) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        gamma_lambda(1.0, 0.0)
    z = np.array([-2.0, -0.1, 0.3, 1.5])
    assert np.allclose(gamma_lambda(z, 1e-3), gamma(z))


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-20, 20), b=st.floats(-20, 20), lam=st.floats(0.05, 5))
def test_gamma_lambda_monotone(a, b, lam):
    lo, hi = min(a, b), max(a, b)
    assert gamma_lambda(lo, lam) <= gamma_lambda(hi, lam)


def test_relaxed_config_validation():
    for kw in ({"lam": 0.0}, {"epsilon": -1.0}, {"leapfrog_steps": 0}):
        with pytest.raises(ValueError):
            RelaxConfig(**kw)
    grid = hyperparameter_grid("rhmc")
    assert len(grid) == 9 and {s.cfg.epsilon for s in grid} == {0.1, 0.01, 0.001}
    assert {s.cfg.lam for s in grid} == {0.5, 1.0, 2.0}


def test_zero_energy_gradient_is_gaussian():
    m = IsingModel(np.zeros((4, 4)))
    z = make_rng(0).normal(size=(3, 4))
    assert np.allclose(grad_log_pc_lambda(m, z, 0.5), -z)


@pytest.mark.parametrize("family", ["ising-er", "rbm", "cubic"])
def test_relaxed_gradient_finite_differences(family):
    m = random_model(family, 6, 0)
    rng = make_rng(1)
    for lam in (0.5, 1.0, 2.0):
        for _ in range(10):
            z = rng.normal(size=6)
            fd = finite_difference_grad(lambda u: float(log_pc_lambda(m, u, lam)), z)
            g = grad_log_pc_lambda(m, z, lam)
            assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_log_pc_is_gaussian_within_an_orthant():
    m = random_model("ising-er", 5, 2, bias_std=0.5)
    rng = make_rng(3)
    z = np.abs(rng.normal(size=5)) * np.array([1, -1, 1, 1, -1])
    w = np.abs(rng.normal(size=5)) * np.array([1, -1, 1, 1, -1])
    d = log_pc(m, z) - log_pc(m, w)
    assert d == pytest.approx(-0.5 * (z @ z - w @ w))


def test_init_from_discrete_preserves_state():
    x = make_rng(0).integers(2, size=(100, 7))
    z = init_from_discrete(x, make_rng(1))
    assert np.array_equal(gamma(z), x)


def test_leapfrog_reversible():
    m = random_model("rbm", 6, 4)
    cfg = RelaxConfig(0.7, 0.1, 5)
    rng = make_rng(0)
    z, v = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    z1, v1 = leapfrog(m, z, v, cfg)
    z2, v2 = leapfrog(m, z1, -v1, cfg)
    assert np.max(np.abs(z2 - z)) <= 1e-8 and np.max(np.abs(-v2 - v)) <= 1e-8


def test_rhmc_gaussian_acceptance():
    m = IsingModel(np.zeros((10, 10)))
    z = make_rng(0).normal(size=(2000, 10))
    _, rec = rhmc_step(m, z, RelaxConfig(1.0, 0.05, 5), make_rng(1))
    assert rec.acceptance_prob.mean() >= 0.95
    assert rec.gradient_evals == 6


def test_acceptance_tends_to_one_as_step_shrinks():
    m = random_model("ising-er", 6, 0)
    z = init_from_discrete(make_rng(0).integers(2, size=(200, 6)), make_rng(1))
    ok = np.abs(z).min(1) > 1e-2   # away from orthant boundaries
    for step in (rmala_step, rhmc_step):
        gaps = []
        for eps in (1e-4, 1e-6, 1e-8):
            _, rec = step(m, z, RelaxConfig(1.0, eps, 5), make_rng(2))
            gaps.append(float(np.mean(1 - rec.acceptance_prob[ok])))
        assert gaps[0] > gaps[1] > gaps[2] or gaps[2] == 0.0
        assert gaps[2] <= 1e-3


def test_rmala_preserves_standard_normal():
    m = IsingModel(np.zeros((3, 3)))
    rng = make_rng(0)
    z = rng.normal(size=(20000, 3))
    for _ in range(30):
        z, _ = rmala_step(m, z, RelaxConfig(1.0, 0.5), rng)
    n = z.size
    assert abs(z.mean()) <= 3 / math.sqrt(n)
    assert abs((z**2).mean() - 1) <= 3 * math.sqrt(2 / n)


@pytest.mark.parametrize("sampler", [RMALA(RelaxConfig(1.0, 0.5)), RHMC(RelaxConfig(0.5, 0.1, 5))],
                         ids=lambda s: s.name)
def test_pushforward_stationarity(sampler):
    m = IsingModel(random_model("ising-er", 5, 1).J, 0.7, make_rng(4).normal(size=5) * 0.4)
    states, pi = enumerate_distribution(m)
    rng = make_rng(5)
    x = states[rng.choice(len(pi), size=50_000, p=pi)]
    z = sampler.init(x, rng)
    acc = []
    for t in range(20):
        z, rec = sampler.step(m, z, rng, t)
        acc.append(rec.acceptance_prob.mean())
    assert 0.05 < np.mean(acc) < 1.0
    counts = np.bincount(state_index(sampler.discrete(z)), minlength=len(pi))
    assert chi_square_pvalue(counts, pi) > P_MIN

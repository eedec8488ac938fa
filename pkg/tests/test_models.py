import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from gwg.core import all_states, embed, make_rng, onehot
from gwg.models import (CubicModel, FactorizedBase, FhmmPosterior, IsingModel, PottsModel,
                        RbmModel, base_fit, base_logp, lattice_adjacency, softplus)
from gwg.testkit import (edge_list_ising_energy, finite_difference_grad, flip_differences,
                         power_iteration_norm, random_model)


def _fd_check(model, e, rtol=1e-5):
    g = model.grad(e)
    fd = finite_difference_grad(lambda z: float(model.energy(z)), e)
    scale = max(1.0, float(np.max(np.abs(fd))))
    assert np.max(np.abs(g - fd)) <= rtol * scale


# ---------------------------------------------------------------- Ising

def test_ising_energy_examples():
    m = IsingModel([[0, 1], [1, 0]], theta=0.5)
    assert m.energy(np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert m.energy(np.zeros(2)) == 0.0
    assert m.grad(np.array([1.0, 1.0])).tolist() == [1.0, 1.0]


def test_ising_energy_matches_edge_list():
    rng = make_rng(3)
    m = IsingModel.lattice(4, 0.37, b=rng.normal(size=16))
    for _ in range(20):
        x = rng.integers(2, size=16)
        assert float(m.energy(x.astype(float))) == pytest.approx(
            edge_list_ising_energy(m.J, m.theta, m.b, x), abs=1e-12)


def test_ising_theta_zero_gradient_is_bias():
    b = np.array([0.3, -1.0, 2.0])
    m = IsingModel(np.ones((3, 3)) - np.eye(3), theta=0.0, b=b)
    assert np.array_equal(m.grad(np.array([1.0, 0.0, 1.0])), b)
    assert m.lipschitz_bound() == 0.0


def test_ising_gradient_finite_differences():
    rng = make_rng(4)
    m = random_model("ising-er", 12, 1, bias_std=0.5)
    ms = IsingModel(m.J, 0.3, m.b, spin=True)
    for _ in range(100):
        x = rng.integers(2, size=12).astype(float)
        _fd_check(m, x)
        _fd_check(ms, x)


def test_ising_lattice_structure():
    J = lattice_adjacency(5)
    assert np.all(J.sum(1) == 4) and np.array_equal(J, J.T) and np.all(np.diag(J) == 0)
    with pytest.raises(ValueError):
        IsingModel([[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        IsingModel([[1, 0], [0, 0]])


def test_lattice_lipschitz():
    assert IsingModel.lattice(10, 0.1).lipschitz_bound() == pytest.approx(0.8, abs=1e-12)
    # the spin reading carries the chain-rule factor 4
    assert IsingModel.lattice(10, 0.1, spin=True).lipschitz_bound() == pytest.approx(3.2)


def test_ising_er_lipschitz_matches_power_iteration():
    for seed in range(3):
        m = random_model("ising-er", 40, seed)
        assert m.lipschitz_bound() == pytest.approx(2 * power_iteration_norm(m.J), abs=1e-8)


def test_ising_value_and_grad_agree():
    rng = make_rng(0)
    for spin in (False, True):
        m = IsingModel(random_model("ising-er", 9, 2).J, 0.4, rng.normal(size=9), spin)
        x = rng.random((5, 9))
        f, g = m.value_and_grad(x)
        assert np.allclose(f, m.energy(x)) and np.allclose(g, m.grad(x))


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        IsingModel.lattice(3, 0.1).energy(np.zeros(8))
    with pytest.raises(ValueError):
        RbmModel(np.zeros((2, 3)), np.zeros(3), np.zeros(2)).energy(np.zeros(4))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), spin=st.booleans())
def test_quadratic_taylor_differences_are_exact(seed, spin):
    rng = make_rng(seed)
    base = random_model("ising-er", 10, seed % 50, bias_std=0.5)
    m = IsingModel(base.J, rng.uniform(0, 1), base.b, spin)
    x = rng.integers(2, size=10)
    g = m.grad(x.astype(float))
    d_est = -(2 * x - 1) * g
    assert np.max(np.abs(d_est - flip_differences(m, x))) <= 1e-10


# ---------------------------------------------------------------- RBM

def test_rbm_examples():
    m = RbmModel(np.zeros((3, 4)), np.zeros(4), np.zeros(3))
    assert float(m.energy(np.array([1.0, 0, 1, 1]))) == pytest.approx(3 * math.log(2))
    m1 = RbmModel([[1.0, 0.0]], np.zeros(2), np.zeros(1))
    assert float(m1.energy(np.array([1.0, 0.0]))) == pytest.approx(1.3133, abs=1e-4)
    assert float(softplus(1.0)) == pytest.approx(math.log1p(math.e))


def test_rbm_gradient_finite_differences():
    rng = make_rng(1)
    m = RbmModel.random(8, 5, rng)
    for _ in range(100):
        _fd_check(m, rng.integers(2, size=8).astype(float))


def test_rbm_conditionals_without_weights():
    c = np.array([0.5, -1.0])
    m = RbmModel(np.zeros((2, 3)), np.zeros(3), c)
    for x in all_states(3):
        assert np.allclose(m.prob_h_given_x(x), 1 / (1 + np.exp(-c)))


def test_rbm_marginalises_hidden_units():
    m = RbmModel.random(3, 2, make_rng(5))
    H = all_states(2)
    for x in all_states(3):
        lj = logsumexp([m.joint_energy(x, h) for h in H])
        assert lj == pytest.approx(float(m.energy(x.astype(float))), abs=1e-12)


def test_rbm_conditionals_match_joint():
    m = RbmModel.random(3, 2, make_rng(6))
    X, H = all_states(3), all_states(2)
    logj = np.array([[m.joint_energy(x, h) for h in H] for x in X])
    pj = np.exp(logj - logsumexp(logj))
    for a, x in enumerate(X):
        ph = pj[a] / pj[a].sum()
        assert np.allclose((ph[:, None] * H).sum(0), m.prob_h_given_x(x))
    for c, h in enumerate(H):
        px = pj[:, c] / pj[:, c].sum()
        assert np.allclose((px[:, None] * X).sum(0), m.prob_x_given_h(h))


def test_rbm_rejects_bad_parameters():
    with pytest.raises(ValueError):
        RbmModel(np.zeros((0, 3)), np.zeros(3), np.zeros(0))
    with pytest.raises(ValueError):
        RbmModel([[np.nan]], [0.0], [0.0])


# ---------------------------------------------------------------- Potts

def test_potts_binary_reduces_to_ising():
    rng = make_rng(2)
    D = 5
    u = np.triu(rng.normal(size=(D, D)), 1)
    v = np.triu(rng.normal(size=(D, D)), 1)
    u, v = u + u.T, v + v.T
    J = np.zeros((D, D, 2, 2))
    J[..., 0, 0], J[..., 1, 1] = u, v
    h = rng.normal(size=(D, 2))
    potts = PottsModel(J, h)
    # (1-a)(1-b) = 1 - a - b + ab, summed over ordered pairs
    ising = IsingModel(u + v, 1.0, h[:, 1] - h[:, 0] - 2 * u.sum(1))
    const = u.sum() + h[:, 0].sum()
    for x in all_states(D):
        assert float(potts.energy(onehot(x, 2))) == pytest.approx(
            float(ising.energy(x.astype(float))) + const, abs=1e-10)


def test_potts_zero_coupling_is_field_sum():
    rng = make_rng(3)
    h = rng.normal(size=(4, 3))
    m = PottsModel(np.zeros((4, 4, 3, 3)), h)
    x = np.array([2, 0, 1, 1])
    assert float(m.energy(onehot(x, 3))) == pytest.approx(h[np.arange(4), x].sum())


def test_potts_gradient_finite_differences():
    rng = make_rng(4)
    m = random_model("potts", 5, 0, K=4)
    for _ in range(100):
        _fd_check(m, onehot(rng.integers(4, size=5), 4))
    f, g = m.value_and_grad(onehot(rng.integers(4, size=(3, 5)), 4))
    assert g.shape == (3, 5, 4)


def test_potts_pair_order_invariance():
    rng = make_rng(8)
    m = random_model("potts", 4, 3, K=3)
    perm = np.array([2, 0, 3, 1])
    mp = PottsModel(m.J[np.ix_(perm, perm)], m.h[perm])
    for _ in range(20):
        x = rng.integers(3, size=4)
        assert float(mp.energy(onehot(x[perm], 3))) == pytest.approx(float(m.energy(onehot(x, 3))))


def test_potts_rejects_asymmetric_couplings():
    J = np.zeros((2, 2, 2, 2))
    J[0, 1, 0, 1] = 1.0
    with pytest.raises(ValueError):
        PottsModel(J, np.zeros((2, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_potts_taylor_differences_are_exact(seed):
    rng = make_rng(seed)
    m = random_model("potts", 4, seed % 20, K=3)
    x = rng.integers(3, size=4)
    e = onehot(x, 3)
    g = m.grad(e)
    f0 = float(m.energy(e))
    for i in range(4):
        for k in range(3):
            xp = x.copy()
            xp[i] = k
            est = g[i, k] - g[i, x[i]]
            assert est == pytest.approx(float(m.energy(onehot(xp, 3))) - f0, abs=1e-10)


# ---------------------------------------------------------------- FHMM

def _tiny_fhmm(L, K, seed):
    return FhmmPosterior.sample(L, K, make_rng(seed))[0]


def test_fhmm_single_step():
    m = FhmmPosterior([0.7, -0.4], 0.2, 0.5, [0.1, 0.3], [0.95, 0.9], [0.8])
    x = np.array([1.0, 0.0])
    gauss = -0.5 * (0.8 - 0.7 - 0.2) ** 2 / 0.5 - 0.5 * math.log(2 * math.pi * 0.5)
    prior = math.log(0.1) + math.log(0.7)
    assert float(m.energy(x)) == pytest.approx(gauss + prior, abs=1e-12)


def test_fhmm_transition_corners():
    m = FhmmPosterior([1.0], 0.0, 0.5, 0.1, 0.95, [0.0, 0.0])
    # with L=2, K=1 the transition term is f(x) minus emissions and the initial term
    corners = {}
    for a, c in itertools.product((0, 1), repeat=2):
        corners[a, c] = (m.trans_inter * a * c + m.trans_prev * a + m.trans_next * c
                         + m.trans_const)[0]
    assert corners[1, 1] == pytest.approx(math.log(0.95))
    assert corners[0, 0] == pytest.approx(math.log(0.95))
    assert corners[0, 1] == pytest.approx(math.log(0.05))
    assert corners[1, 0] == pytest.approx(math.log(0.05))


def _forward_log_py(m):
    L, K = m.L, m.K
    S = all_states(K)
    emit = np.array([[-0.5 * (m.y[t] - s @ m.W - m.b) ** 2 / m.sigma2
                      - 0.5 * math.log(2 * math.pi * m.sigma2) for s in S] for t in range(L)])
    init = np.array([np.sum(s * np.log(m.alpha) + (1 - s) * np.log1p(-m.alpha)) for s in S])
    trans = np.array([[np.sum(np.where(a == c, np.log(m.beta), np.log1p(-m.beta)))
                       for c in S] for a in S])
    la = init + emit[0]
    for t in range(1, L):
        la = logsumexp(la[:, None] + trans, axis=0) + emit[t]
    return logsumexp(la)


@pytest.mark.parametrize("L,K", [(1, 2), (3, 2), (6, 2), (4, 3), (2, 3)])
def test_fhmm_evidence_matches_forward_algorithm(L, K):
    m = _tiny_fhmm(L, K, 10 * L + K)
    X = all_states(L * K).astype(float)
    brute = logsumexp(m.energy(X))
    fwd = _forward_log_py(m)
    assert abs(brute - fwd) <= 1e-8 * abs(fwd)


def test_fhmm_gradient_finite_differences():
    rng = make_rng(2)
    m = _tiny_fhmm(5, 3, 1)
    for _ in range(100):
        _fd_check(m, rng.integers(2, size=15).astype(float))


def test_fhmm_parameter_checks():
    with pytest.raises(ValueError):
        FhmmPosterior([1.0], 0.0, 0.0, 0.1, 0.9, [0.0])
    with pytest.raises(ValueError):
        FhmmPosterior([1.0], 0.0, 0.5, 1.0, 0.9, [0.0])
    with pytest.raises(ValueError):
        FhmmPosterior([1.0], 0.0, 0.5, 0.1, 0.0, [0.0])


def test_fhmm_lipschitz_is_hessian_norm():
    m = _tiny_fhmm(4, 2, 3)
    H = m.hessian()
    assert np.allclose(H, H.T)
    # the log joint is exactly quadratic: second differences equal the Hessian
    rng = make_rng(0)
    e = rng.random(8)
    i, j = 1, 6
    h = 0.5
    E = np.eye(8)
    d2 = (m.energy(e + h * E[i] + h * E[j]) - m.energy(e + h * E[i]) - m.energy(e + h * E[j])
          + m.energy(e)) / h**2
    assert float(d2) == pytest.approx(H[i, j], abs=1e-9)


# ---------------------------------------------------------------- cubic

def test_cubic_gradient_and_discrete_equivalence():
    rng = make_rng(5)
    m = random_model("cubic", 6, 0)
    for _ in range(100):
        _fd_check(m, rng.integers(2, size=6).astype(float))
    ising = IsingModel(m.A, 1.0, m.b + m.g)
    for x in all_states(6):
        assert float(m.energy(x.astype(float))) == pytest.approx(float(ising.energy(x.astype(float))))
    with pytest.raises(ValueError):
        CubicModel(np.ones((2, 2)), np.zeros(2), np.zeros(2))


# ---------------------------------------------------------------- base distributions

def test_base_fit_single_point():
    base = base_fit(np.array([[1, 0, 1]]), K=2, smoothing=1.0)
    p = np.exp(base.logp)
    assert np.allclose(p, [[1 / 3, 2 / 3], [2 / 3, 1 / 3], [1 / 3, 2 / 3]])


def test_base_fit_uniform_data():
    data = all_states(3, 3)
    base = base_fit(data, K=3)
    assert np.allclose(np.exp(base.logp), 1 / 3)


@pytest.mark.parametrize("K", [2, 3])
def test_base_logp_normalises(K):
    data = make_rng(K).integers(K, size=(40, 4))
    base = base_fit(data, K=K)
    S = all_states(4, K)
    assert logsumexp(base_logp(base, S)) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(base.energy(embed(S, K)), base_logp(base, S))


def test_base_fit_rejects_empty_data():
    with pytest.raises(ValueError):
        base_fit(np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError):
        FactorizedBase(np.zeros((3, 2)))


def test_base_sampling_frequencies():
    base = FactorizedBase(np.log([[0.2, 0.8], [0.6, 0.4]]))
    x = base.sample(100000, make_rng(0))
    assert np.allclose(x.mean(0), [0.8, 0.4], atol=0.01)
    assert base.log_z() == 0.0

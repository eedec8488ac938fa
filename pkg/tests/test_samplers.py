import numpy as np
import pytest
from scipy.special import expit, softmax

from gwg.analysis import (_block_conditional_matrix, build_transition_matrix,
                          enumerate_distribution, hamming_ball_block_matrix)
from gwg.core import (EnumerationError, SamplerFault, all_states, hamming_window, make_rng,
                      onehot, state_index)
from gwg.models import FactorizedBase, IsingModel, PottsModel, RbmModel
from gwg.samplers import (GWG, Gibbs, HammingBall, LocallyBalanced, RbmBlockGibbs,
                          block_gibbs_step, diff_binary, diff_categorical, fhmm_time_blocks,
                          gibbs_step, gibbs_sweep, gwg_multisample_step, gwg_propose, gwg_step,
                          gwg_proposal_logprobs, hamming_ball_step, locally_balanced_step,
                          rbm_block_gibbs_step, run_chain)
from gwg.testkit import chi_square_pvalue, flip_differences, random_model

P_MIN = 0.0027  # family-wise 3 sigma equivalent


class Counting:
    """Wraps a model and tallies evaluated states per chain."""

    def __init__(self, model, n_chains):
        self.m, self.n = model, n_chains
        self.dim, self.arity = model.dim, model.arity
        self.energy_calls = self.grad_calls = 0

    def _rows(self, e):
        e = np.asarray(e)
        lead = e.shape[:-1] if self.arity == 2 else e.shape[:-2]
        return int(np.prod(lead)) // self.n

    def energy(self, e):
        self.energy_calls += self._rows(e)
        return self.m.energy(e)

    def grad(self, e):
        self.grad_calls += self._rows(e)
        return self.m.grad(e)

    def value_and_grad(self, e):
        self.energy_calls += self._rows(e)
        self.grad_calls += self._rows(e)
        return self.m.value_and_grad(e)

    def f(self, x):
        from gwg.core import embed
        return self.energy(embed(x, self.arity))


def _models():
    return {
        "ising": random_model("ising-er", 5, 0, bias_std=0.3),
        "cubic": random_model("cubic", 5, 1),
        "rbm": random_model("rbm", 5, 2, H=3),
        "potts": random_model("potts", 3, 3, K=3),
        "fhmm": random_model("fhmm", 6, 4, K=2),
    }


def _samplers(model):
    out = [GWG(), LocallyBalanced(2.0, 1), Gibbs(1), Gibbs(2), HammingBall(3, 1)]
    if model.arity == 2:
        out += [GWG(2), LocallyBalanced(2.0, 2), HammingBall(2, 2)]
    if isinstance(model, RbmModel):
        out.append(RbmBlockGibbs())
    return out


CASES = [(name, s) for name, m in _models().items() for s in _samplers(m)]


def _one_step_pvalue(model, sampler, x, n=200_000, seed=0):
    """Frequencies of a single step from ``x`` against the exact kernel row."""
    T = build_transition_matrix(sampler, model)
    rng = make_rng(seed)
    X = np.repeat(np.asarray(x)[None], n, axis=0)
    if isinstance(sampler, Gibbs) and sampler.block_size == 1:
        # the exact kernel is random-scan
        sampler = Gibbs(1, random_scan=True)
    out, _ = sampler.step(model, X, rng, 0)
    counts = np.bincount(state_index(out, model.arity), minlength=len(T.pi))
    return chi_square_pvalue(counts, T.P[state_index(np.asarray(x)[None], model.arity)[0]])


# ---------------------------------------------------------------- exact kernels

@pytest.mark.parametrize("name,sampler", CASES, ids=[f"{n}-{s.name}" for n, s in CASES])
def test_exact_kernel_is_stochastic_stationary_reversible(name, sampler):
    T = build_transition_matrix(sampler, _models()[name])
    assert T.row_sum_error() <= 1e-12
    assert T.stationarity_error() <= 1e-10
    assert T.detailed_balance_error() <= 1e-10


@pytest.mark.parametrize("name,sampler", CASES, ids=[f"{n}-{s.name}" for n, s in CASES])
def test_step_frequencies_match_exact_kernel(name, sampler):
    m = _models()[name]
    x = make_rng(1).integers(m.arity, size=m.dim)
    assert _one_step_pvalue(m, sampler, x) > P_MIN


def _stationarity_pvalue(model, sampler, n_chains=50_000, n_steps=20, seed=0):
    # iid draws from p, advanced n_steps; final states are iid from p if p is invariant
    states, pi = enumerate_distribution(model)
    rng = make_rng(seed)
    x = states[rng.choice(len(pi), size=n_chains, p=pi)]
    state = sampler.init(x, rng)
    for t in range(n_steps):
        state, _ = sampler.step(model, state, rng, t)
    counts = np.bincount(state_index(sampler.discrete(state), model.arity), minlength=len(pi))
    return chi_square_pvalue(counts, pi)


@pytest.mark.parametrize("sampler", [GWG(), GWG(3), Gibbs(1), Gibbs(2), HammingBall(3, 1)],
                         ids=lambda s: s.name)
def test_ising_stationarity_over_a_million_transitions(sampler):
    m = IsingModel(random_model("ising-er", 6, 5).J, 0.8, make_rng(2).normal(size=6) * 0.3)
    assert _stationarity_pvalue(m, sampler) > P_MIN


def test_gwg_equals_locally_balanced_when_taylor_exact():
    m = random_model("ising-er", 6, 7, bias_std=0.5)
    A = build_transition_matrix(GWG(), m).P
    B = build_transition_matrix(LocallyBalanced(2.0, 1), m).P
    assert np.max(np.abs(A - B)) <= 1e-12
    # the cubic representation is not Taylor exact
    c = random_model("cubic", 6, 7, cubic_scale=0.5)
    A = build_transition_matrix(GWG(), c).P
    B = build_transition_matrix(LocallyBalanced(2.0, 1), c).P
    assert np.max(np.abs(A - B)) > 1e-6


# ---------------------------------------------------------------- Taylor differences

def test_diff_binary_sign_pattern():
    a, b = 0.7, -1.3
    m = IsingModel(np.zeros((2, 2)), 1.0, [a, b])
    assert np.allclose(diff_binary(m, np.array([0, 1])), [a, -b])
    m2 = IsingModel([[0, 1], [1, 0]], 1.0)
    x = np.array([1, 0])
    assert np.allclose(m2.grad(x.astype(float)), [0, 2])
    assert np.allclose(diff_binary(m2, x), [0, 2])
    assert np.allclose(diff_binary(m2, x), flip_differences(m2, x))


def test_diff_categorical_properties():
    rng = make_rng(0)
    theta = rng.normal(size=(4, 3))
    lin = PottsModel(np.zeros((4, 4, 3, 3)), theta)
    x = np.array([2, 0, 1, 1])
    d = diff_categorical(lin, x)
    assert np.all(d[np.arange(4), x] == 0)
    assert np.allclose(d, theta - theta[np.arange(4), x][:, None])
    m = random_model("ising-er", 5, 1, bias_std=0.4)
    x2 = make_rng(4).integers(2, size=5)
    dc = diff_categorical(m, x2)
    assert np.allclose(dc[np.arange(5), 1 - x2], diff_binary(m, x2))
    with pytest.raises(ValueError):
        diff_binary(lin, x)


# ---------------------------------------------------------------- GWG

def test_gwg_constant_energy_is_uniform_and_always_accepts():
    m = IsingModel(np.zeros((5, 5)))
    x = make_rng(0).integers(2, size=(7, 5))
    assert np.allclose(np.exp(gwg_proposal_logprobs(m, x)), 0.2)
    _, rec = gwg_step(m, x, make_rng(1))
    assert np.all(rec.accepted) and np.all(rec.acceptance_prob == 1.0)
    p = PottsModel(np.zeros((3, 3, 4, 4)), np.zeros((3, 4)))
    lq = gwg_proposal_logprobs(p, np.array([0, 1, 2]))
    q = np.exp(lq).reshape(3, 4)
    assert np.allclose(q[np.arange(3), [0, 1, 2]], 0) and np.allclose(q.sum(), 1)
    assert np.allclose(q[q > 0], 1 / 9)


def test_gwg_proposal_hand_example():
    m = IsingModel([[0, 1], [1, 0]], 1.0)  # f = 2 x1 x2
    q = np.exp(gwg_proposal_logprobs(m, np.array([1, 0])))[0]
    assert np.allclose(q, [0.2689, 0.7311], atol=1e-4)
    assert np.allclose(q, softmax([0.0, 1.0]))


def test_gwg_propose_outcome():
    m = random_model("potts", 4, 0, K=3)
    x = np.array([0, 1, 2, 0])
    out = gwg_propose(m, x, make_rng(2))
    diff = np.flatnonzero(out.proposed[0] != x)
    assert diff.tolist() == [int(out.changed_indices[0])]
    assert np.isfinite(out.log_q_fwd).all() and np.isfinite(out.log_q_rev).all()


def test_gwg_eval_accounting():
    for base in (random_model("ising-er", 8, 0), random_model("potts", 4, 0, K=3)):
        m = Counting(base, 5)
        x = make_rng(0).integers(base.arity, size=(5, base.dim))
        _, rec = gwg_step(m, x, make_rng(1))
        assert (m.energy_calls, m.grad_calls) == (2, 2)
        assert (rec.model_evals, rec.gradient_evals) == (2, 2)


def test_gwg_non_finite_energy_is_a_fault():
    m = IsingModel(np.zeros((3, 3)), 1.0, [np.inf, 0, 0])
    with pytest.raises(SamplerFault):
        gwg_step(m, np.array([0, 0, 0]), make_rng(0))


def test_multisample_single_draw_matches_gwg():
    m = random_model("ising-er", 10, 3, bias_std=0.3)
    x = make_rng(0).integers(2, size=(50, 10))
    a, ra = gwg_step(m, x, make_rng(9))
    b, rb = gwg_multisample_step(m, x, 1, make_rng(9))
    assert np.array_equal(a, b) and np.allclose(ra.acceptance_prob, rb.acceptance_prob)


def test_multisample_even_repeats_give_identity():
    m = IsingModel(np.zeros((1, 1)), 1.0, [0.8])  # one dimension: every draw is index 0
    x = np.array([[0], [1]])
    out, rec = gwg_multisample_step(m, x, 2, make_rng(0))
    assert np.array_equal(out, x) and np.all(rec.acceptance_prob == 1.0)
    with pytest.raises(ValueError):
        gwg_multisample_step(m, x, 0, make_rng(0))
    with pytest.raises(ValueError):
        gwg_multisample_step(random_model("potts", 3, 0), np.zeros(3, dtype=int), 2, make_rng(0))


# ---------------------------------------------------------------- locally balanced

def test_locally_balanced_constant_energy():
    m = IsingModel(np.zeros((4, 4)))
    x = make_rng(0).integers(2, size=(6, 4))
    _, rec = locally_balanced_step(m, x, 2.0, 2, make_rng(1))
    assert np.all(rec.acceptance_prob == 1.0)


def test_locally_balanced_infinite_tau_is_uniform_walk():
    m = random_model("ising-er", 4, 2, bias_std=0.5)
    x = np.array([0, 1, 1, 0])
    W = hamming_window(x, 1, K=2)
    P = build_transition_matrix(LocallyBalanced(np.inf, 1), m).P
    f = m.f(all_states(4))
    i = state_index(x[None])[0]
    for w in W:
        j = state_index(w[None])[0]
        assert P[i, j] == pytest.approx(min(1.0, np.exp(f[j] - f[i])) / len(W), abs=1e-14)
    assert _one_step_pvalue(m, LocallyBalanced(np.inf, 1), x) > P_MIN


def test_locally_balanced_eval_accounting():
    base = random_model("ising-er", 6, 0)
    m = Counting(base, 3)
    _, rec = locally_balanced_step(m, make_rng(0).integers(2, size=(3, 6)), 2.0, 2, make_rng(1))
    n = 6 + 15
    assert m.energy_calls == rec.model_evals == 2 * n + 2


def test_locally_balanced_cap():
    m = random_model("ising-er", 30, 0)
    with pytest.raises(EnumerationError):
        locally_balanced_step(m, np.zeros(30, dtype=int), 2.0, 3, make_rng(0), cap=1000)
    with pytest.raises(ValueError):
        locally_balanced_step(m, np.zeros(30, dtype=int), 0.0, 1, make_rng(0))


# ---------------------------------------------------------------- Gibbs family

def test_gibbs_conditional_is_two_point_softmax():
    m = random_model("ising-er", 5, 4, bias_std=0.5)
    x = np.array([1, 0, 1, 1, 0])
    x1, x0 = x.copy(), x.copy()
    x1[2], x0[2] = 1, 0
    p1 = expit(m.f(x1[None])[0] - m.f(x0[None])[0])
    out, rec = gibbs_step(m, np.repeat(x[None], 200_000, 0), 2, make_rng(0))
    assert chi_square_pvalue(np.bincount(out[:, 2], minlength=2), [1 - p1, p1]) > P_MIN
    assert np.all((out != x).sum(1) <= 1) and np.all(out[:, [0, 1, 3, 4]] == x[[0, 1, 3, 4]])


def test_gibbs_factorised_conditional_equals_marginal():
    logp = np.log([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
    base = FactorizedBase(logp)
    out, _ = gibbs_step(base, np.repeat([[2, 1]], 100_000, 0), 0, make_rng(3))
    assert chi_square_pvalue(np.bincount(out[:, 0], minlength=3), np.exp(logp[0])) > P_MIN


def test_gibbs_eval_accounting_and_sweep():
    base = random_model("potts", 4, 0, K=3)
    m = Counting(base, 2)
    _, rec = gibbs_step(m, np.zeros((2, 4), dtype=int), 1, make_rng(0))
    assert m.energy_calls == rec.model_evals == 3
    _, rec = gibbs_sweep(base, np.zeros((2, 4), dtype=int), make_rng(0))
    assert rec.model_evals == 12
    with pytest.raises(IndexError):
        gibbs_step(base, np.zeros(4, dtype=int), 4, make_rng(0))


def test_systematic_sweep_is_stationary():
    m = random_model("ising-er", 5, 11, bias_std=0.4)
    T = build_transition_matrix(Gibbs(1), m)
    P = np.eye(len(T.pi))
    for i in range(5):
        P = P @ _block_conditional_matrix(m, T.states, [i])
    assert np.max(np.abs(T.pi @ P - T.pi)) <= 1e-12


def test_block_gibbs_limits():
    m = random_model("ising-er", 6, 3, bias_std=0.3)
    states, pi = enumerate_distribution(m)
    # block of every dimension is an exact draw from p
    out, _ = block_gibbs_step(m, np.zeros((100_000, 6), dtype=int), 6, make_rng(0))
    assert chi_square_pvalue(np.bincount(state_index(out), minlength=64), pi) > P_MIN
    A = build_transition_matrix(Gibbs(1), m).P
    B = sum(_block_conditional_matrix(m, states, [i]) for i in range(6)) / 6
    assert np.allclose(A, B, atol=1e-14)
    with pytest.raises(EnumerationError):
        block_gibbs_step(m, np.zeros(6, dtype=int), 6, make_rng(0), cap=10)


def test_hamming_ball_full_radius_is_block_gibbs():
    m = random_model("ising-er", 5, 6, bias_std=0.3)
    states, _ = enumerate_distribution(m)
    for block in ([0, 2], [1, 3, 4]):
        A = hamming_ball_block_matrix(m, states, block, len(block))
        B = _block_conditional_matrix(m, states, block)
        assert np.allclose(A, B, atol=1e-14)


def test_hamming_ball_changes_only_the_block():
    m = random_model("fhmm", 12, 0, K=3)
    blocks = fhmm_time_blocks(4, 3)
    assert blocks[1] == (3, 4, 5)
    x = make_rng(0).integers(2, size=(500, 12))
    out = x
    for b in blocks:
        out, _ = hamming_ball_step(m, x, 3, 1, make_rng(1), blocks=[b])
        changed = np.flatnonzero((out != x).any(0))
        assert set(changed) <= set(b)
        assert np.all((out != x).sum(1) <= 2)


def test_hamming_ball_step_frequencies_with_time_blocks():
    m = random_model("fhmm", 6, 2, K=2)
    hb = HammingBall(2, 1, blocks=fhmm_time_blocks(3, 2))
    assert _one_step_pvalue(m, hb, np.array([1, 0, 0, 1, 1, 1])) > P_MIN
    T = build_transition_matrix(hb, m)
    assert T.stationarity_error() <= 1e-10 and T.detailed_balance_error() <= 1e-10


# ---------------------------------------------------------------- RBM block Gibbs

def test_rbm_block_gibbs_without_weights():
    b = np.array([1.0, -0.5, 0.0])
    m = RbmModel(np.zeros((2, 3)), b, np.zeros(2))
    out, rec = rbm_block_gibbs_step(m, np.ones((200_000, 3), dtype=int), make_rng(0))
    assert np.allclose(out.mean(0), expit(b), atol=0.004)
    assert rec.model_evals == 0 and rec.gradient_evals == 0


# ---------------------------------------------------------------- chain driver

def test_run_chain_records_every_step():
    m = random_model("ising-er", 8, 0)
    x0 = np.zeros((3, 8), dtype=int)
    x, tr = run_chain(m, GWG(), x0, 50, make_rng(0), timing=False)
    assert tr.stat.shape == (50, 3) and tr.cum_model_evals[-1] == 100
    assert np.all(np.diff(tr.cum_grad_evals) == 2)
    assert np.array_equal(tr.stat[-1], x.sum(1))
    assert np.all(tr.seconds == 0)


def test_run_chain_fault_keeps_partial_trace():
    class Breaks(GWG):
        def step(self, model, state, rng, t=0):
            if t == 3:
                raise SamplerFault("boom")
            return super().step(model, state, rng, t)

    m = random_model("ising-er", 5, 0)
    with pytest.raises(SamplerFault) as err:
        run_chain(m, Breaks(), np.zeros((2, 5), dtype=int), 10, make_rng(0))
    assert len(err.value.partial_trace) == 3


def test_sampler_names():
    assert [s.name for s in (GWG(), GWG(4), LocallyBalanced(2.0, 1), Gibbs(1), HammingBall(10, 1),
                             RbmBlockGibbs())] == ["gwg", "gwg-4", "lb-2-1", "gibbs-1",
                                                   "hb-10-1", "rbm-block-gibbs"]


def test_onehot_binary_potts_uses_binary_embedding():
    # a K=2 Potts model runs through the binary code path
    m = random_model("potts", 4, 5, K=2)
    T = build_transition_matrix(GWG(), m)
    assert T.stationarity_error() <= 1e-10
    assert np.allclose(onehot(np.array([1, 0]), 2), [1.0, 0.0])

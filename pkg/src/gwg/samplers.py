"""Discrete MCMC kernels: Gibbs-With-Gradients and the baselines it is compared with.

Every step function takes a batch of integer states ``x`` of shape ``(N, D)`` (each row
an independent chain) and returns the new batch together with a :class:`StepRecord`.
Evaluation counts in the record are per chain: one batched call that evaluates ``f``
at ``M`` states of every chain counts as ``M`` energy evaluations.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (ENUMERATION_CAP, EnumerationError, SamplerFault, embed, log_softmax,
                   sample_categorical, shift_patterns)
from .diagnostics import ChainTrace, hamming_statistic


@dataclass
class ProposalOutcome:
    proposed: np.ndarray
    log_q_fwd: np.ndarray
    log_q_rev: np.ndarray
    changed_indices: np.ndarray


@dataclass
class StepRecord:
    accepted: np.ndarray
    acceptance_prob: np.ndarray
    energy_after: np.ndarray
    model_evals: int = 0
    gradient_evals: int = 0


def _finite(a, what="energy"):
    if not np.all(np.isfinite(a)):
        raise SamplerFault(f"non-finite {what} encountered")
    return a


def _valid_logq(logq):
    # masked moves are -inf by construction; anything else must be finite
    if np.any(np.isnan(logq)) or np.any(np.isposinf(logq)) or not np.all(np.isfinite(logq.max(-1))):
        raise SamplerFault("non-finite proposal encountered")
    return logq


def _as_batch(x):
    x = np.asarray(x, dtype=np.int64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _mh_accept(log_ratio, rng):
    log_alpha = np.minimum(log_ratio, 0.0)
    accept = np.log(rng.random(log_alpha.shape)) < log_alpha
    return accept, np.exp(log_alpha)


# ---------------------------------------------------------------- Taylor differences

def diff_binary(model, x) -> np.ndarray:
    """First-order estimate of ``f(flipdim(x, i)) - f(x)`` for every ``i``."""
    if model.arity != 2:
        raise ValueError("diff_binary requires a binary model")
    e = embed(np.asarray(x), 2)
    return -(2.0 * e - 1.0) * model.grad(e)


def diff_categorical(model, x) -> np.ndarray:
    """First-order estimate of changing dimension ``i`` to value ``j``; shape ``(..., D, K)``."""
    x = np.asarray(x, dtype=np.int64)
    e = embed(x, model.arity) if model.arity > 2 else np.eye(2)[x]
    if model.arity == 2:
        # express the binary gradient in one-hot coordinates: f depends on e[..., 1] only
        g1 = model.grad(x.astype(float))
        g = np.stack([np.zeros_like(g1), g1], axis=-1)
    else:
        g = model.grad(e)
    return g - (e * g).sum(-1, keepdims=True)


def _proposal_logprobs(model, x, g):
    """``log q(.|x)`` from the gradient ``g`` at the embedding of ``x``."""
    if model.arity == 2:
        return log_softmax(-(2.0 * x - 1.0) * g / 2.0)
    e = embed(x, model.arity)
    logits = (g - (e * g).sum(-1, keepdims=True)) / 2.0
    logits[e.astype(bool)] = -np.inf
    return log_softmax(logits.reshape(x.shape[0], -1))


# ---------------------------------------------------------------- GWG

def gwg_proposal_logprobs(model, x) -> np.ndarray:
    """``log q(. | x)`` over the D (binary) or D*K (categorical, current values masked) moves."""
    x, _ = _as_batch(x)
    return _proposal_logprobs(model, x, model.grad(embed(x, model.arity)))


def _apply_move(x, move, K):
    rows = np.arange(x.shape[0])
    xp = x.copy()
    if K == 2:
        xp[rows, move] = 1 - xp[rows, move]
        return xp, move, move
    i, j = np.divmod(move, K)
    xp[rows, i] = j
    return xp, i, i * K + x[rows, i]


def gwg_propose(model, x, rng) -> ProposalOutcome:
    """Draw one single-site move from the gradient-informed proposal (two gradient calls)."""
    x, _ = _as_batch(x)
    rows = np.arange(x.shape[0])
    logq = _valid_logq(gwg_proposal_logprobs(model, x))
    move = sample_categorical(logq, rng)
    xp, i, rev = _apply_move(x, move, model.arity)
    logq_p = gwg_proposal_logprobs(model, xp)
    return ProposalOutcome(xp, logq[rows, move], logq_p[rows, rev], i)


def gwg_step(model, x, rng):
    """One Gibbs-With-Gradients transition (Taylor-approximated locally balanced proposal).

    Energy and gradient at ``x`` and at the proposal are obtained together through
    ``value_and_grad``; that is 2 energy and 2 gradient evaluations per step.
    """
    x, single = _as_batch(x)
    K = model.arity
    rows = np.arange(x.shape[0])
    f_x, g_x = model.value_and_grad(embed(x, K))
    logq = _valid_logq(_proposal_logprobs(model, x, g_x))
    move = sample_categorical(logq, rng)
    xp, _, rev = _apply_move(x, move, K)
    f_p, g_p = model.value_and_grad(embed(xp, K))
    _finite(f_x)
    _finite(f_p)
    logq_p = _valid_logq(_proposal_logprobs(model, xp, g_p))
    accept, prob = _mh_accept(f_p - f_x + logq_p[rows, rev] - logq[rows, move], rng)
    out = np.where(accept[:, None], xp, x)
    rec = StepRecord(accept, prob, np.where(accept, f_p, f_x), model_evals=2, gradient_evals=2)
    return (out[0] if single else out), rec


def gwg_multisample_step(model, x, n_draws: int, rng):
    """GWG with ``n_draws`` iid indices toggled in turn (binary models only)."""
    if model.arity != 2:
        raise ValueError("multi-sample GWG is defined for binary models")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    x, single = _as_batch(x)
    N, D = x.shape
    rows = np.arange(N)[:, None]
    f_x, g_x = model.value_and_grad(embed(x, 2))
    logq = _valid_logq(_proposal_logprobs(model, x, g_x))
    idx = np.stack([sample_categorical(logq, rng) for _ in range(n_draws)], axis=1)
    counts = np.zeros((N, D), dtype=np.int64)
    np.add.at(counts, (np.broadcast_to(rows, idx.shape), idx), 1)
    xp = (x + counts) % 2
    f_p, g_p = model.value_and_grad(embed(xp, 2))
    _finite(f_x)
    _finite(f_p)
    logq_p = _valid_logq(_proposal_logprobs(model, xp, g_p))
    log_ratio = f_p - f_x + logq_p[rows, idx].sum(1) - logq[rows, idx].sum(1)
    accept, prob = _mh_accept(log_ratio, rng)
    out = np.where(accept[:, None], xp, x)
    rec = StepRecord(accept, prob, np.where(accept, f_p, f_x), model_evals=2, gradient_evals=2)
    return (out[0] if single else out), rec


# ---------------------------------------------------------------- exact locally balanced

def _window_logits(model, x, M, tau):
    """Energies of every window member and the tempered logits, per chain."""
    K = model.arity
    N, D = x.shape
    W = (x[:, None, :] + M[None]) % K
    f_w = _finite(model.f(W.reshape(-1, D)).reshape(N, -1))
    f_x = _finite(model.f(x))
    delta = f_w - f_x[:, None]
    logits = np.zeros_like(delta) if np.isinf(tau) else delta / tau
    return W, f_x, delta, logits


def locally_balanced_step(model, x, tau: float = 2.0, radius: int = 1, rng=None,
                          cap: int = ENUMERATION_CAP):
    """MH with the exact proposal ``q_tau(x'|x) ∝ exp((f(x') - f(x)) / tau)`` over the window."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    x, single = _as_batch(x)
    N, D = x.shape
    M = shift_patterns(D, model.arity, radius, cap=cap)
    rows = np.arange(N)
    W, f_x, delta, logits = _window_logits(model, x, M, tau)
    logq = log_softmax(logits)
    pick = sample_categorical(logq, rng)
    xp = W[rows, pick]
    _, f_p, delta_p, logits_p = _window_logits(model, xp, M, tau)
    # reverse move x' -> x: its logit is (f(x) - f(x')) / tau
    back = np.zeros(N) if np.isinf(tau) else (f_x - f_p) / tau
    lse_p = np.logaddexp.reduce(logits_p, axis=1)
    log_ratio = f_p - f_x + (back - lse_p) - logq[rows, pick]
    accept, prob = _mh_accept(log_ratio, rng)
    out = np.where(accept[:, None], xp, x)
    n = M.shape[0]
    rec = StepRecord(accept, prob, np.where(accept, f_p, f_x), model_evals=2 * n + 2)
    return (out[0] if single else out), rec


# ---------------------------------------------------------------- Gibbs family

def _resample_block(model, x, idx, assignments, rng):
    """Replace ``x[:, idx]`` with a draw from p restricted to the given assignments.

    ``idx`` is (N, X); ``assignments`` is (C, X) shared or (N, C, X) per chain.
    """
    N, D = x.shape
    if assignments.ndim == 2:
        assignments = np.broadcast_to(assignments, (N,) + assignments.shape)
    C = assignments.shape[1]
    cand = np.repeat(x[:, None, :], C, axis=1)
    np.put_along_axis(cand, np.broadcast_to(idx[:, None, :], assignments.shape), assignments, axis=2)
    f_c = _finite(model.f(cand.reshape(-1, D)).reshape(N, C))
    pick = sample_categorical(log_softmax(f_c), rng)
    rows = np.arange(N)
    return cand[rows, pick], f_c[rows, pick]


def _always(N, f_new, evals):
    return StepRecord(np.ones(N, dtype=bool), np.ones(N), f_new, model_evals=evals)


def gibbs_step(model, x, i, rng):
    """Resample dimension ``i`` (int or per-chain array) from its exact conditional."""
    x, single = _as_batch(x)
    N, D = x.shape
    i = np.broadcast_to(np.asarray(i, dtype=np.int64), (N,))
    if np.any(i < 0) or np.any(i >= D):
        raise IndexError("Gibbs index out of range")
    K = model.arity
    out, f_new = _resample_block(model, x, i[:, None], np.arange(K)[:, None], rng)
    rec = _always(N, f_new, K)
    return (out[0] if single else out), rec


def gibbs_sweep(model, x, rng, random_scan: bool = False):
    """D single-site updates, ascending order (or D uniformly random sites)."""
    x, single = _as_batch(x)
    N, D = x.shape
    evals = 0
    for t in range(D):
        i = rng.integers(D, size=N) if random_scan else t
        x, rec = gibbs_step(model, x, i, rng)
        evals += rec.model_evals
    rec = _always(N, rec.energy_after, evals)
    return (x[0] if single else x), rec


def _random_blocks(N, D, size, rng):
    if not 1 <= size <= D:
        raise ValueError("block size must lie in [1, D]")
    return np.argsort(rng.random((N, D)), axis=1)[:, :size]


def block_gibbs_step(model, x, block_size: int, rng, cap: int = ENUMERATION_CAP):
    """Resample a uniformly random block of dimensions from its joint conditional."""
    x, single = _as_batch(x)
    N, D = x.shape
    K = model.arity
    if K**block_size > cap:
        raise EnumerationError(f"K^block = {K**block_size} exceeds cap {cap}")
    idx = _random_blocks(N, D, block_size, rng)
    assign = np.array(list(itertools.product(range(K), repeat=block_size)), dtype=np.int64)
    out, f_new = _resample_block(model, x, idx, assign, rng)
    rec = _always(N, f_new, assign.shape[0])
    return (out[0] if single else out), rec


def hamming_ball_step(model, x, block_size: int, ball_radius: int, rng, blocks=None,
                      cap: int = ENUMERATION_CAP):
    """Block Hamming-ball update with an auxiliary centre drawn uniformly in the ball.

    ``blocks`` optionally fixes the candidate blocks as a (B, block_size) index array; one
    is chosen uniformly per chain (e.g. all factors of one FHMM time step). Otherwise
    blocks are uniform random subsets.
    """
    x, single = _as_batch(x)
    N, D = x.shape
    K = model.arity
    if blocks is None:
        idx = _random_blocks(N, D, block_size, rng)
    else:
        blocks = np.asarray(blocks, dtype=np.int64)
        block_size = blocks.shape[1]
        idx = blocks[rng.integers(blocks.shape[0], size=N)]
    M = shift_patterns(block_size, K, ball_radius, include_zero=True, cap=cap)
    B = M.shape[0]
    xb = np.take_along_axis(x, idx, axis=1)
    u = (xb + M[rng.integers(B, size=N)]) % K
    assign = (u[:, None, :] + M[None]) % K
    out, f_new = _resample_block(model, x, idx, assign, rng)
    rec = _always(N, f_new, B)
    return (out[0] if single else out), rec


def rbm_block_gibbs_step(rbm, x, rng):
    """One ``h ~ p(h|x)``, ``x ~ p(x|h)`` alternation; uses conditionals only."""
    x, single = _as_batch(x)
    h = (rng.random((x.shape[0], rbm.n_hidden)) < rbm.prob_h_given_x(x)).astype(float)
    out = (rng.random(x.shape) < rbm.prob_x_given_h(h)).astype(np.int64)
    N = x.shape[0]
    rec = StepRecord(np.ones(N, dtype=bool), np.ones(N), np.full(N, np.nan))
    return (out[0] if single else out), rec


# ---------------------------------------------------------------- sampler specs

class Sampler:
    """A named transition kernel usable by chain drivers.

    ``step(model, state, rng, t)`` advances the chain state; ``t`` is the global step
    counter (systematic-scan samplers use it to pick the site). Discrete samplers use
    the integer state batch itself as chain state.
    """

    name = "sampler"
    relaxed = False

    def init(self, x, rng):
        return np.asarray(x, dtype=np.int64)

    def discrete(self, state):
        return state

    def step(self, model, state, rng, t=0):
        raise NotImplementedError


@dataclass(frozen=True)
class GWG(Sampler):
    n_draws: int = 1

    def __post_init__(self):
        if int(self.n_draws) < 1:
            raise ValueError("n_draws must be >= 1")

    @property
    def name(self):
        return "gwg" if self.n_draws == 1 else f"gwg-{self.n_draws}"

    def step(self, model, state, rng, t=0):
        if self.n_draws == 1:
            return gwg_step(model, state, rng)
        return gwg_multisample_step(model, state, self.n_draws, rng)


@dataclass(frozen=True)
class LocallyBalanced(Sampler):
    tau: float = 2.0
    radius: int = 1

    def __post_init__(self):
        if not self.tau > 0 or int(self.radius) < 1:
            raise ValueError("tau must be positive and radius >= 1")

    @property
    def name(self):
        return f"lb-{self.tau:g}-{self.radius}"

    def step(self, model, state, rng, t=0):
        return locally_balanced_step(model, state, self.tau, self.radius, rng)


@dataclass(frozen=True)
class Gibbs(Sampler):
    """Gibbs-X: single-site (systematic or random scan) for X=1, random blocks otherwise."""

    block_size: int = 1
    random_scan: bool = False

    def __post_init__(self):
        if int(self.block_size) < 1:
            raise ValueError("block_size must be >= 1")

    @property
    def name(self):
        return f"gibbs-{self.block_size}"

    def step(self, model, state, rng, t=0):
        if self.block_size == 1:
            N, D = np.atleast_2d(state).shape
            i = rng.integers(D, size=N) if self.random_scan else t % D
            return gibbs_step(model, state, i, rng)
        return block_gibbs_step(model, state, self.block_size, rng)


@dataclass(frozen=True)
class HammingBall(Sampler):
    """HB-X-Y; ``blocks`` fixes structured blocks such as FHMM time steps."""

    block_size: int = 10
    ball_radius: int = 1
    blocks: tuple | None = field(default=None, hash=False)

    def __post_init__(self):
        if int(self.block_size) < 1 or int(self.ball_radius) < 1:
            raise ValueError("block_size and ball_radius must be >= 1")

    @property
    def name(self):
        return f"hb-{self.block_size}-{self.ball_radius}"

    def step(self, model, state, rng, t=0):
        return hamming_ball_step(model, state, self.block_size, self.ball_radius, rng,
                                 blocks=None if self.blocks is None else np.asarray(self.blocks))


@dataclass(frozen=True)
class RbmBlockGibbs(Sampler):
    name = "rbm-block-gibbs"

    def step(self, model, state, rng, t=0):
        return rbm_block_gibbs_step(model, state, rng)


def fhmm_time_blocks(L: int, K: int) -> tuple:
    """All-factor blocks of each time step for a time-major flattened FHMM state."""
    return tuple(tuple(range(t * K, (t + 1) * K)) for t in range(L))


# ---------------------------------------------------------------- chain driver

def run_chain(model, sampler: Sampler, x0, n_steps: int, rng, x_ref=None, stat=None,
              t0: int = 0, timing: bool = True):
    """Advance a batch of chains and record a :class:`ChainTrace` of every step.

    ``stat`` maps the (N, D) discrete batch to an (N,) summary; by default the Hamming
    distance to ``x_ref`` (all-zeros if not supplied). Rejected steps are recorded too.
    Returns ``(final_state, trace)``.
    """
    state = sampler.init(np.atleast_2d(np.asarray(x0, dtype=np.int64)), rng)
    x = sampler.discrete(state)
    N, D = x.shape
    if stat is None:
        ref = np.zeros(D, dtype=np.int64) if x_ref is None else np.asarray(x_ref)
        stat = lambda xs: hamming_statistic(xs, ref)
    stats = np.empty((n_steps, N))
    energy = np.empty((n_steps, N))
    acc = np.empty((n_steps, N), dtype=bool)
    cme = np.zeros(n_steps, dtype=np.int64)
    cge = np.zeros(n_steps, dtype=np.int64)
    secs = np.zeros(n_steps)
    me = ge = 0
    for t in range(n_steps):
        t_start = time.perf_counter()
        try:
            state, rec = sampler.step(model, state, rng, t0 + t)
        except SamplerFault as err:
            # keep the completed steps so callers can flush them
            err.partial_trace = ChainTrace(stats[:t], energy[:t], acc[:t], cme[:t], cge[:t],
                                           secs[:t])
            raise
        if timing:
            secs[t] = time.perf_counter() - t_start
        x = sampler.discrete(state)
        me += rec.model_evals
        ge += rec.gradient_evals
        stats[t] = stat(x)
        energy[t] = rec.energy_after
        acc[t] = rec.accepted
        cme[t], cge[t] = me, ge
    return state, ChainTrace(stats, energy, acc, cme, cge, secs)

"""Exact transition matrices and efficiency quantities on enumerable state spaces.

The kernels here are assembled directly from each sampler's transition formula;
they do not call the step functions in :mod:`gwg.samplers`, so agreement between
the two is a genuine cross-check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .core import (ENUMERATION_CAP, EnumerationError, all_states, embed, log_softmax,
                   make_rng, shift_patterns, state_index)
from .diagnostics import hamming_statistic
from .samplers import GWG, Gibbs, HammingBall, LocallyBalanced, RbmBlockGibbs


@dataclass
class TransitionMatrix:
    P: np.ndarray
    states: np.ndarray
    pi: np.ndarray
    K: int = 2

    def index(self, x) -> np.ndarray:
        return state_index(x, self.K)

    def stationarity_error(self) -> float:
        return float(np.max(np.abs(self.pi @ self.P - self.pi)))

    def detailed_balance_error(self) -> float:
        F = self.pi[:, None] * self.P
        return float(np.max(np.abs(F - F.T)))

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(self.P.sum(1) - 1.0)))


def enumerate_distribution(model, cap: int = ENUMERATION_CAP):
    """All states and their normalised probabilities ``exp(f) / Z``."""
    K, D = model.arity, model.dim
    if K**D > cap:
        raise EnumerationError(f"state space of {K**D} exceeds cap {cap}")
    states = all_states(D, K)
    f = model.f(states)
    return states, np.exp(f - logsumexp(f))


def log_partition(model, cap: int = ENUMERATION_CAP) -> float:
    states = all_states(model.dim, model.arity, cap=cap)
    return float(logsumexp(model.f(states)))


# ---------------------------------------------------------------- kernels

def _neighbours(states, K, radius):
    M = shift_patterns(states.shape[1], K, radius)
    W = (states[:, None, :] + M[None]) % K
    return W, state_index(W, K)


def _gwg_logq(model, states):
    """log q(move | x) for every state; binary moves index dims, categorical (dim, value)."""
    K = model.arity
    e = embed(states, K)
    g = model.grad(e)
    if K == 2:
        return log_softmax(-(2 * e - 1) * g / 2)
    d = g - (e * g).sum(-1, keepdims=True)
    logits = np.where(e.astype(bool), -np.inf, d / 2)
    return log_softmax(logits.reshape(len(states), -1))


def gwg_matrix(model, states, n_draws: int = 1):
    S, D = states.shape
    K = model.arity
    f = model.f(states)
    logq = _gwg_logq(model, states)
    P = np.zeros((S, S))
    if n_draws == 1:
        for i in range(D):
            for k in range(1, K):
                xp = states.copy()
                xp[:, i] = (xp[:, i] + k) % K
                j = state_index(xp, K)
                fwd = i if K == 2 else i * K + xp[:, i]
                rev = i if K == 2 else i * K + states[:, i]
                lq = logq[np.arange(S), fwd]
                lqr = logq[j, rev]
                P[np.arange(S), j] += np.exp(lq + np.minimum(0.0, f[j] - f + lqr - lq))
    else:
        if K != 2:
            raise ValueError("multi-draw GWG is binary only")
        if D**n_draws > ENUMERATION_CAP:
            raise EnumerationError("too many index sequences")
        for seq in itertools.product(range(D), repeat=n_draws):
            par = np.bincount(seq, minlength=D) % 2
            j = state_index((states + par) % 2, 2)
            lq = logq[:, list(seq)].sum(1)
            lqr = logq[j][:, list(seq)].sum(1)
            P[np.arange(S), j] += np.exp(lq + np.minimum(0.0, f[j] - f + lqr - lq))
    P[np.arange(S), np.arange(S)] += 1.0 - P.sum(1)
    return P


def locally_balanced_matrix(model, states, tau: float = 2.0, radius: int = 1):
    S = len(states)
    K = model.arity
    f = model.f(states)
    W, widx = _neighbours(states, K, radius)
    delta = f[widx] - f[:, None]
    logits = np.zeros_like(delta) if np.isinf(tau) else delta / tau
    logZ = logsumexp(logits, axis=1)
    lq = logits - logZ[:, None]
    lq_rev = (np.zeros_like(delta) if np.isinf(tau) else -delta / tau) - logZ[widx]
    P = np.zeros((S, S))
    rows = np.repeat(np.arange(S), W.shape[1])
    np.add.at(P, (rows, widx.ravel()),
              np.exp(lq + np.minimum(0.0, delta + lq_rev - lq)).ravel())
    P[np.arange(S), np.arange(S)] += 1.0 - P.sum(1)
    return P


def _block_conditional_matrix(model, states, block, assignments=None):
    """Exact resampling of ``block`` from p(x_block | rest), as an S x S matrix."""
    S = len(states)
    K = model.arity
    block = list(block)
    if assignments is None:
        assignments = np.array(list(itertools.product(range(K), repeat=len(block))))
    f = model.f(states)
    C = len(assignments)
    tgt = np.repeat(states[:, None, :], C, axis=1)
    tgt[:, :, block] = assignments[None]
    tidx = state_index(tgt, K)
    lp = f[tidx] - logsumexp(f[tidx], axis=1, keepdims=True)
    P = np.zeros((S, S))
    np.add.at(P, (np.repeat(np.arange(S), C), tidx.ravel()), np.exp(lp).ravel())
    return P


def gibbs_site_matrix(model, states, i: int):
    return _block_conditional_matrix(model, states, [i])


def hamming_ball_block_matrix(model, states, block, radius: int):
    S = len(states)
    K = model.arity
    block = list(block)
    M = shift_patterns(len(block), K, radius, include_zero=True)
    B = len(M)
    f = model.f(states)
    P = np.zeros((S, S))
    for a in range(B):
        u = (states[:, block] + M[a]) % K
        tgt = np.repeat(states[:, None, :], B, axis=1)
        tgt[:, :, block] = (u[:, None, :] + M[None]) % K
        tidx = state_index(tgt, K)
        lp = f[tidx] - logsumexp(f[tidx], axis=1, keepdims=True)
        np.add.at(P, (np.repeat(np.arange(S), B), tidx.ravel()), np.exp(lp).ravel() / B)
    return P


def rbm_block_gibbs_matrix(rbm, states):
    H = rbm.n_hidden
    if 2**H > ENUMERATION_CAP:
        raise EnumerationError("too many hidden units to enumerate")
    hs = all_states(H, 2).astype(float)
    ph = rbm.prob_h_given_x(states)                      # (S, H)
    A = np.prod(np.where(hs[None] == 1, ph[:, None], 1 - ph[:, None]), axis=2)  # (S, 2^H)
    px = rbm.prob_x_given_h(hs)                          # (2^H, D)
    B = np.prod(np.where(states[None] == 1, px[:, None], 1 - px[:, None]), axis=2)  # (2^H, S)
    return A @ B


def build_transition_matrix(sampler, model, cap: int = ENUMERATION_CAP) -> TransitionMatrix:
    """Exact one-step kernel of ``sampler`` on the full state space of ``model``.

    Single-site Gibbs is the random-scan kernel (uniform site); block samplers average
    over their block choices.
    """
    states, pi = enumerate_distribution(model, cap)
    D, K = model.dim, model.arity
    if isinstance(sampler, GWG):
        P = gwg_matrix(model, states, sampler.n_draws)
    elif isinstance(sampler, LocallyBalanced):
        P = locally_balanced_matrix(model, states, sampler.tau, sampler.radius)
    elif isinstance(sampler, Gibbs):
        blocks = list(itertools.combinations(range(D), sampler.block_size))
        if comb(D, sampler.block_size) * len(states) > cap:
            raise EnumerationError("too many blocks")
        P = sum(_block_conditional_matrix(model, states, b) for b in blocks) / len(blocks)
    elif isinstance(sampler, HammingBall):
        blocks = (list(itertools.combinations(range(D), sampler.block_size))
                  if sampler.blocks is None else [list(b) for b in sampler.blocks])
        P = sum(hamming_ball_block_matrix(model, states, b, sampler.ball_radius)
                for b in blocks) / len(blocks)
    elif isinstance(sampler, RbmBlockGibbs):
        P = rbm_block_gibbs_matrix(model, states)
    else:
        raise TypeError(f"no closed-form kernel for {type(sampler).__name__}")
    return TransitionMatrix(P, states, pi, K)


# ---------------------------------------------------------------- efficiency

def is_reversible(P, pi, tol: float = 1e-9) -> bool:
    F = pi[:, None] * P
    return bool(np.max(np.abs(F - F.T)) <= tol)


def spectral_gap(P, pi=None, lazy: bool = False, tol: float = 1e-9) -> float:
    """``1 - lambda_2`` of a reversible kernel (via the pi-symmetrised matrix).

    Without ``pi`` the stationary distribution is taken from the leading left eigenvector.
    """
    P = np.asarray(P, dtype=float)
    if lazy:
        P = 0.5 * (np.eye(len(P)) + P)
    if pi is None:
        pi = stationary_distribution(P)
    pi = np.asarray(pi, dtype=float)
    if not is_reversible(P, pi, tol):
        raise ValueError("spectral_gap requires a pi-reversible kernel")
    s = np.sqrt(pi)
    A = s[:, None] * P / s[None, :]
    ev = np.sort(np.linalg.eigvalsh(0.5 * (A + A.T)))[::-1]
    return float(1.0 - ev[1]) if len(ev) > 1 else 1.0


def stationary_distribution(P) -> np.ndarray:
    w, v = np.linalg.eig(np.asarray(P).T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return pi / pi.sum()


def _irreducible(P) -> bool:
    n, _ = connected_components(np.asarray(P) > 0, directed=True, connection="strong")
    return n == 1


def asymptotic_variance(P, pi, h) -> float:
    """Limiting ``var(sum_t h(x_t)) / T`` for a stationary chain.

    Uses the fundamental matrix: with ``hb = h - E_pi h`` and ``(I - P + 1 pi^T) g = hb``,
    the variance is ``2 <hb, g>_pi - <hb, hb>_pi``.
    """
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    h = np.asarray(h, dtype=float)
    if not _irreducible(P):
        raise ValueError("asymptotic_variance requires an irreducible kernel")
    hb = h - pi @ h
    A = np.eye(len(P)) - P + np.outer(np.ones(len(P)), pi)
    g = np.linalg.solve(A, hb)
    return float(2.0 * pi @ (hb * g) - pi @ (hb * hb))


def theorem1_factor(L: float, D_H: float) -> float:
    """Efficiency factor ``c = exp(-L D_H^2 / 2)``."""
    if L < 0 or D_H < 0:
        raise ValueError("L and D_H must be non-negative")
    return float(np.exp(-0.5 * L * D_H**2))


def window_diameter_sq(K: int, radius: int) -> float:
    """``sup ||x - x'||^2`` over the window in the model's embedding."""
    return float(radius if K == 2 else 2 * radius)


def estimate_lipschitz(model, n: int = 4000, seed: int = 0) -> float:
    """Empirical max of ``|grad(a) - grad(b)| / |a - b|`` over random pairs in the unit cube."""
    rng = make_rng(seed, 7)
    shape = (n, model.dim) if model.arity == 2 else (n, model.dim, model.arity)
    a = rng.random(shape)
    b = np.clip(a + rng.normal(scale=0.05, size=shape), 0, 1)
    ga, gb = model.grad(a), model.grad(b)
    axes = tuple(range(1, a.ndim))
    num = np.sqrt(((ga - gb) ** 2).sum(axes))
    den = np.sqrt(((a - b) ** 2).sum(axes))
    return float(np.max(num / np.maximum(den, 1e-300)))


def _lipschitz(model):
    try:
        return model.lipschitz_bound(), "bound"
    except NotImplementedError:
        return estimate_lipschitz(model), "estimated"


def verify_theorem1(model, radius: int = 1, h=None, seed: int = 0, tol: float = 1e-10) -> dict:
    """Exact check of the GWG vs locally-balanced efficiency inequalities.

    ``h`` defaults to the Hamming distance to a random reference state drawn from ``seed``.
    """
    if radius != 1:
        raise ValueError("the gradient proposal is implemented for radius 1")
    Q_grad = build_transition_matrix(GWG(), model)
    Q = build_transition_matrix(LocallyBalanced(2.0, radius), model)
    pi, states = Q.pi, Q.states
    L, how = _lipschitz(model)
    c = theorem1_factor(L, np.sqrt(window_diameter_sq(model.arity, radius)))
    if h is None:
        ref = make_rng(seed, 3).integers(model.arity, size=model.dim)
        h = hamming_statistic(states, ref).astype(float)
    gap_grad = spectral_gap(Q_grad.P, pi)
    gap = spectral_gap(Q.P, pi)
    var_grad = asymptotic_variance(Q_grad.P, pi, h)
    var_lb = asymptotic_variance(Q.P, pi, h)
    var_h = float(pi @ (h - pi @ h) ** 2)
    var_bound = var_lb / c + (1 - c) / c * var_h
    off = ~np.eye(len(pi), dtype=bool)
    kernel_slack = float(np.min(Q_grad.P[off] - c * Q.P[off]))
    report = {
        "dim": model.dim, "arity": model.arity, "L": float(L), "L_source": how, "c": c,
        "gap_grad": gap_grad, "gap_lb": gap, "var_grad": var_grad, "var_lb": var_lb,
        "var_h": var_h, "var_bound": var_bound, "kernel_slack": kernel_slack,
        "max_kernel_diff": float(np.max(np.abs(Q_grad.P - Q.P))),
        "gap_ok": bool(gap_grad >= c * gap - tol),
        "var_ok": bool(var_grad <= var_bound + tol),
        "kernel_ok": bool(kernel_slack >= -tol),
    }
    report["passed"] = report["gap_ok"] and report["var_ok"] and report["kernel_ok"]
    return report


def _window_sums(model, states, radius):
    K = model.arity
    W, widx = _neighbours(states, K, radius)
    f = model.f(states)
    e = embed(states, K)
    g = model.grad(e)
    eW = embed(W, K)
    axes = tuple(range(2, eW.ndim))
    taylor = ((eW - e[:, None]) * g[:, None]).sum(axes)
    delta = f[widx] - f[:, None]
    return delta, taylor, widx


def verify_normalizer_bounds(model, radius: int = 1, tol: float = 1e-12) -> dict:
    """Check ``exp(-L D_H^2/4) Z(x) <= Z~(x) <= exp(L D_H^2/4) Z(x)`` at every state."""
    states = all_states(model.dim, model.arity)
    delta, taylor, _ = _window_sums(model, states, radius)
    logZ = logsumexp(delta / 2, axis=1)
    logZt = logsumexp(taylor / 2, axis=1)
    L, how = _lipschitz(model)
    half_width = L * window_diameter_sq(model.arity, radius) / 4
    gap = logZt - logZ
    return {
        "L": float(L), "L_source": how, "log_bound": half_width,
        "max_log_ratio": float(np.max(gap)), "min_log_ratio": float(np.min(gap)),
        "max_taylor_error": float(np.max(np.abs(taylor - delta))),
        "passed": bool(np.all(np.abs(gap) <= half_width + tol)),
    }


def verify_balancing(model, radius: int = 1, tau: float = 2.0) -> dict:
    """Compare each MH ratio ``exp(Δ) q(x|x')/q(x'|x)`` with ``Z(x)/Z(x')`` over all window pairs.

    The ratio always equals ``exp((1 - 2/tau) Δ) Z(x)/Z(x')``; ``identity_error`` measures it
    against that closed form and ``residual_log_factor`` reports the ``(1 - 2/tau) Δ`` term.
    """
    states = all_states(model.dim, model.arity)
    f = model.f(states)
    _, widx = _neighbours(states, model.arity, radius)
    delta = f[widx] - f[:, None]
    logits = delta / tau
    logZ = logsumexp(logits, axis=1)
    log_fwd = logits - logZ[:, None]
    log_rev = -delta / tau - logZ[widx]
    log_ratio = delta + log_rev - log_fwd
    log_zratio = logZ[:, None] - logZ[widx]
    resid = (1 - 2 / tau) * delta
    ratio = np.exp(log_ratio)
    predicted = np.exp(resid + log_zratio)
    return {
        "tau": tau,
        "identity_error": float(np.max(np.abs(ratio - predicted))),
        "z_ratio_error": float(np.max(np.abs(ratio - np.exp(log_zratio)))),
        "residual_log_factor_max": float(np.max(np.abs(resid))),
        "passed": bool(np.max(np.abs(ratio - predicted)) <= 1e-12 * max(1.0, np.max(predicted))),
    }

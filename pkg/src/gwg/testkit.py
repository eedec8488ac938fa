"""Brute-force oracles and random instances used by the test-suite.

The oracles are deliberately naive (python loops over single states) and share no
code with the operations they check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .core import ENUMERATION_CAP, EnumerationError, make_rng
from .models import (CubicModel, FhmmPosterior, IsingModel, PottsModel, RbmModel,
                     erdos_renyi_couplings)


def _embed_one(x, K):
    x = np.asarray(x, dtype=np.int64)
    return x.astype(float) if K == 2 else np.eye(K)[x]


def _f_one(model, x):
    return float(model.energy(_embed_one(x, model.arity)))


def naive_window(x, K, radius):
    """Every state at Hamming distance 1..radius, by loops over positions and values."""
    x = tuple(int(v) for v in x)
    D = len(x)
    out = []
    for cand in itertools.product(range(K), repeat=D):
        d = sum(a != b for a, b in zip(cand, x))
        if 1 <= d <= radius:
            out.append(cand)
    return out


def exact_local_differences(model, x, radius: int = 1, cap: int = ENUMERATION_CAP) -> dict:
    """``{x': f(x') - f(x)}`` over the Hamming window, by literal evaluation."""
    K, D = model.arity, model.dim
    n = sum(math.comb(D, j) * (K - 1) ** j for j in range(1, radius + 1))
    if n > cap:
        raise EnumerationError("window exceeds enumeration cap")
    x = tuple(int(v) for v in x)
    f0 = _f_one(model, x)
    if radius == 1:
        # avoid a K^D scan for large D
        out = {}
        for i in range(D):
            for k in range(K):
                if k != x[i]:
                    xp = list(x)
                    xp[i] = k
                    out[tuple(xp)] = _f_one(model, xp) - f0
        return out
    return {xp: _f_one(model, xp) - f0 for xp in naive_window(x, K, radius)}


def flip_differences(model, x) -> np.ndarray:
    """Vector of exact ``f(flip_i x) - f(x)`` for a binary state."""
    d = exact_local_differences(model, x, 1)
    out = np.empty(len(x))
    for i in range(len(x)):
        xp = list(int(v) for v in x)
        xp[i] = 1 - xp[i]
        out[i] = d[tuple(xp)]
    return out


def brute_force_distribution(model):
    """Dict ``state -> probability`` by a python loop over every configuration."""
    K, D = model.arity, model.dim
    if K**D > ENUMERATION_CAP:
        raise EnumerationError("state space too large")
    logs = {s: _f_one(model, s) for s in itertools.product(range(K), repeat=D)}
    m = max(logs.values())
    Z = sum(math.exp(v - m) for v in logs.values())
    return {s: math.exp(v - m) / Z for s, v in logs.items()}


def brute_force_log_z(model) -> float:
    K, D = model.arity, model.dim
    vals = [_f_one(model, s) for s in itertools.product(range(K), repeat=D)]
    m = max(vals)
    return m + math.log(sum(math.exp(v - m) for v in vals))


def finite_difference_grad(fn, e, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function of an array."""
    e = np.asarray(e, dtype=float)
    g = np.zeros_like(e)
    it = np.nditer(e, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        ep, em = e.copy(), e.copy()
        ep[idx] += h
        em[idx] -= h
        g[idx] = (fn(ep) - fn(em)) / (2 * h)
    return g


def edge_list_ising_energy(J, theta, b, x) -> float:
    """``theta * x^T J x + b^T x`` summed edge by edge."""
    x = [float(v) for v in x]
    D = len(x)
    total = 0.0
    for i in range(D):
        for j in range(i + 1, D):
            if J[i][j] != 0:
                total += 2.0 * theta * J[i][j] * x[i] * x[j]
        total += float(b[i]) * x[i]
    return total


def power_iteration_norm(M, iters: int = 5000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``M^T M``."""
    M = np.asarray(M, dtype=float)
    v = make_rng(seed).normal(size=M.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        n = np.linalg.norm(w)
        if n == 0:
            return 0.0
        v = w / n
        s_new = math.sqrt(n)
        if abs(s_new - s) < 1e-15 * max(1.0, s_new):
            break
        s = s_new
    return math.sqrt(np.linalg.norm(M.T @ (M @ v)))


def naive_rmse(A, B) -> float:
    D = len(A)
    acc, n = 0.0, 0
    for i in range(D):
        for j in range(i + 1, D):
            acc += (A[i][j] - B[i][j]) ** 2
            n += 1
    return math.sqrt(acc / n)


def naive_ranked_pairs(strengths, exclude: int = 0):
    """Upper-triangle pairs by strength, descending, ties by (i, j), using a plain sort."""
    D = len(strengths)
    pairs = [(i, j) for i in range(D) for j in range(i + 1, D) if j - i > exclude]
    return sorted(pairs, key=lambda p: (-strengths[p[0]][p[1]], p[0], p[1]))


def within_sigma(counts, probs, n_sigma: float = 3.0):
    """Per-state multinomial check ``|freq - p| <= n_sigma * sqrt(p (1 - p) / n)``.

    Returns ``(ok, max_z)``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    sd = np.sqrt(probs * (1 - probs) / n)
    z = np.abs(counts / n - probs) / np.where(sd > 0, sd, np.inf)
    return bool(np.all(z <= n_sigma)), float(np.max(z))


def chi_square_pvalue(counts, probs, min_expected: float = 5.0) -> float:
    """Pearson goodness-of-fit p-value; cells with small expected counts are pooled."""
    from scipy.stats import chisquare
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    exp = probs * n
    big = exp >= min_expected
    obs_c, exp_c = list(counts[big]), list(exp[big])
    if (~big).any():
        obs_c.append(counts[~big].sum())
        exp_c.append(exp[~big].sum())
    if exp_c[-1] == 0:
        if obs_c[-1] > 0:
            return 0.0
        obs_c, exp_c = obs_c[:-1], exp_c[:-1]
    if len(exp_c) < 2:
        return 1.0
    exp_c = np.array(exp_c) * (n / np.sum(exp_c))
    return float(chisquare(obs_c, exp_c).pvalue)


def planted_potts(D: int, K: int, n_pairs: int, strength: float, rng):
    """Potts model whose only couplings are ``n_pairs`` random pairs with strong blocks.

    Returns ``(model, contacts)`` where ``contacts`` marks the planted pairs.
    """
    pairs = [(i, j) for i in range(D) for j in range(i + 1, D)]
    if not 1 <= n_pairs <= len(pairs):
        raise ValueError("n_pairs out of range")
    pick = rng.choice(len(pairs), size=n_pairs, replace=False)
    J = np.zeros((D, D, K, K))
    contacts = np.zeros((D, D), dtype=bool)
    for p in pick:
        i, j = pairs[p]
        # favour matching states: a diagonal block plus noise
        J[i, j] = strength * (np.eye(K) + 0.1 * rng.normal(size=(K, K)))
        contacts[i, j] = contacts[j, i] = True
    return PottsModel(PottsModel.symmetrize(J), rng.normal(scale=0.2, size=(D, K))), contacts


def random_model(family: str, D: int, seed: int, **kw):
    """Reproducible random instance of a model family.

    Families: ``ising-lattice`` (D a perfect square), ``ising-er``, ``rbm``, ``potts``,
    ``potts-planted``,
    ``fhmm`` (``D = L*K``, pass ``K``), ``cubic``.
    """
    rng = make_rng(seed, 11)
    if family == "ising-lattice":
        n = int(round(math.sqrt(D)))
        if n * n != D:
            raise ValueError("lattice dimension must be a perfect square")
        return IsingModel.lattice(n, kw.get("theta", rng.uniform(0.1, 0.5)))
    if family == "ising-er":
        J = erdos_renyi_couplings(D, rng, kw.get("mean_degree", 4.0), kw.get("weight_std", 0.5))
        b = rng.normal(scale=kw.get("bias_std", 0.0), size=D)
        return IsingModel(J, 1.0, b)
    if family == "rbm":
        return RbmModel.random(D, kw.get("H", 10), rng)
    if family == "potts":
        K = kw.get("K", 3)
        Ju = rng.normal(scale=kw.get("scale", 0.3), size=(D, D, K, K))
        return PottsModel(PottsModel.symmetrize(Ju), rng.normal(scale=0.5, size=(D, K)))
    if family == "potts-planted":
        return planted_potts(D, kw.get("K", 3), kw.get("n_pairs", 1), kw.get("strength", 1.0),
                             rng)[0]
    if family == "fhmm":
        K = kw.get("K", 2)
        if D % K:
            raise ValueError("D must be a multiple of K")
        model, _ = FhmmPosterior.sample(D // K, K, rng, kw.get("sigma2", 0.5),
                                        kw.get("alpha", 0.1), kw.get("beta", 0.95))
        return model
    if family == "cubic":
        A = np.triu(rng.normal(scale=kw.get("scale", 0.3), size=(D, D)), 1)
        return CubicModel(A + A.T, rng.normal(scale=0.5, size=D),
                          rng.normal(scale=kw.get("cubic_scale", 0.2), size=D))
    raise ValueError(f"unknown model family {family!r}")

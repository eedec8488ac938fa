"""Maximum-likelihood training of unnormalised models.

PCD keeps a replay buffer of persistent chains: each iteration advances a buffer
minibatch with an MCMC sampler and steps the parameters along
``mean_data grad f - mean_samples grad f`` minus a sparsity subgradient. The
pseudo-likelihood trainer fits Potts models from exact per-site softmax conditionals.

Couplings are parameterised by their strict upper triangle (blocks ``i < j`` for
Potts), so learned models are symmetric with zero diagonal by construction.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .core import SamplerFault, embed, log_softmax
from .models import IsingModel, PottsModel, RbmModel
from .samplers import Sampler


# ---------------------------------------------------------------- config and buffer

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    mcmc_steps: int = 25
    l1: float = 0.01
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    buffer_size: int = 256
    checkpoint_every: int = 100
    learn_bias: bool = False

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.mcmc_steps < 1 or self.buffer_size < 1:
            raise ValueError("lr, batch_size, mcmc_steps and buffer_size must be positive")
        if self.l1 < 0 or self.iterations < 0 or self.checkpoint_every < 1:
            raise ValueError("l1 and iterations must be non-negative, checkpoint_every positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1) or self.adam_eps <= 0:
            raise ValueError("moment coefficients must lie in (0, 1)")


class ReplayBuffer:
    """Fixed-capacity store of persistent chain states, initialised uniformly at random."""

    def __init__(self, capacity: int, D: int, K: int, rng):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity, self.K = capacity, K
        self.states = rng.integers(K, size=(capacity, D)).astype(np.int64)

    def __len__(self):
        return self.states.shape[0]

    def sample(self, n: int, rng):
        """Distinct buffer indices and their states."""
        if n > self.capacity:
            raise ValueError("batch larger than buffer")
        idx = rng.choice(self.capacity, size=n, replace=False)
        return idx, self.states[idx].copy()

    def write(self, idx, states):
        self.states[idx] = states


class Adam:
    """Adaptive-moment ascent on a dict of arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.b1 + (1 - self.b1) * g
            v = self.v.get(k, 0.0) * self.b2 + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            out[k] = params[k] + self.lr * mh / (np.sqrt(vh) + self.eps)
        return out


# ---------------------------------------------------------------- parameterisation

def _upper(D):
    return np.triu_indices(D, k=1)


def mirror(u, D):
    """Symmetric zero-diagonal matrix from its strict upper triangle."""
    J = np.zeros((D, D))
    iu = _upper(D)
    J[iu] = u
    return J + J.T


def mirror_blocks(u, D):
    """Potts coupling tensor from its ``i < j`` blocks, shape (P, K, K)."""
    K = u.shape[-1]
    J = np.zeros((D, D, K, K))
    iu = _upper(D)
    J[iu] = u
    return J + J.transpose(1, 0, 3, 2)


def get_params(model) -> dict:
    if isinstance(model, IsingModel):
        return {"J": model.theta * model.J[_upper(model.dim)], "b": model.b.copy()}
    if isinstance(model, PottsModel):
        return {"J": model.J[_upper(model.dim)].copy(), "h": model.h.copy()}
    if isinstance(model, RbmModel):
        return {"W": model.W.copy(), "b": model.b.copy(), "c": model.c.copy()}
    raise TypeError(f"no trainable parameterisation for {type(model).__name__}")


def set_params(model, params: dict):
    if isinstance(model, IsingModel):
        return IsingModel(mirror(params["J"], model.dim), 1.0, params["b"], model.spin)
    if isinstance(model, PottsModel):
        return PottsModel(mirror_blocks(params["J"], model.dim), params["h"])
    if isinstance(model, RbmModel):
        return RbmModel(params["W"], params["b"], params["c"])
    raise TypeError(f"no trainable parameterisation for {type(model).__name__}")


def _wmean(a, w):
    return np.tensordot(w, a, axes=(0, 0))


def sufficient_gradient(model, x, weights=None) -> dict:
    """Weighted mean over ``x`` of ``grad_params f(x)`` in matrix form.

    Ising and Potts coupling entries are derivatives with respect to the
    upper-triangle parameters, mirrored to a full symmetric array.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if x.shape[1] != model.dim:
        raise ValueError("batch dimension does not match the model")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if isinstance(model, IsingModel):
        e = 2.0 * x - 1.0 if model.spin else x.astype(float)
        S = 2.0 * model.theta * (e * w[:, None]).T @ e
        np.fill_diagonal(S, 0.0)
        return {"J": S, "b": _wmean(e, w)}
    if isinstance(model, PottsModel):
        e = np.eye(model.arity)[x]
        S = 2.0 * np.einsum("n,nia,njb->ijab", w, e, e)
        S[np.arange(model.dim), np.arange(model.dim)] = 0.0
        return {"J": S, "h": _wmean(e, w)}
    if isinstance(model, RbmModel):
        e = x.astype(float)
        s = model.prob_h_given_x(e)
        return {"W": (s * w[:, None]).T @ e, "b": _wmean(e, w), "c": _wmean(s, w)}
    raise TypeError(f"no trainable parameterisation for {type(model).__name__}")


def ml_gradient(model, data, samples, weights=None) -> dict:
    """Log-likelihood gradient estimate: data average minus sample average of ``grad f``.

    ``weights`` optionally weights the samples (e.g. exact probabilities of all states).
    """
    gd = sufficient_gradient(model, data)
    gs = sufficient_gradient(model, samples, weights)
    return {k: gd[k] - gs[k] for k in gd}


def _to_param_shape(model, g: dict) -> dict:
    out = dict(g)
    if "J" in g and isinstance(model, (IsingModel, PottsModel)):
        out["J"] = g["J"][_upper(model.dim)]
    return out


def grad_norm(g: dict) -> float:
    return float(np.sqrt(sum(float((np.asarray(v) ** 2).sum()) for v in g.values())))


# ---------------------------------------------------------------- penalties

def l1_penalty(J):
    """``sum_{i<j} |J_ij|`` and its subgradient (sign, 0 at exact zeros)."""
    J = np.asarray(J, dtype=float)
    return float(np.abs(J[_upper(J.shape[0])]).sum()), np.sign(J) * (1 - np.eye(J.shape[0]))


def block_l1_penalty(J):
    """``sum_{i<j} ||J_ij||_F`` for a (D, D, K, K) tensor and its subgradient."""
    J = np.asarray(J, dtype=float)
    D = J.shape[0]
    norms = np.sqrt((J**2).sum((2, 3)))
    safe = np.where(norms > 0, norms, 1.0)
    sub = np.where((norms > 0)[:, :, None, None], J / safe[:, :, None, None], 0.0)
    sub[np.arange(D), np.arange(D)] = 0.0
    return float(norms[_upper(D)].sum()), sub


def _penalty_subgradient(model, params):
    if isinstance(model, IsingModel):
        return {"J": np.sign(params["J"])}
    if isinstance(model, PottsModel):
        n = np.sqrt((params["J"] ** 2).sum((1, 2)))
        safe = np.where(n > 0, n, 1.0)[:, None, None]
        return {"J": np.where(n[:, None, None] > 0, params["J"] / safe, 0.0)}
    if isinstance(model, RbmModel):
        return {"W": np.sign(params["W"])}
    return {}


# ---------------------------------------------------------------- metrics

def rmse(J_hat, J_true) -> float:
    """RMSE over the strict upper triangle."""
    J_hat, J_true = np.asarray(J_hat, dtype=float), np.asarray(J_true, dtype=float)
    if J_hat.shape != J_true.shape or J_hat.ndim != 2:
        raise ValueError("shape mismatch")
    iu = _upper(J_hat.shape[0])
    return float(np.sqrt(np.mean((J_hat[iu] - J_true[iu]) ** 2)))


def coupling_strength(J) -> np.ndarray:
    """Frobenius norm of every (i, j) block of a Potts coupling tensor."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 4 or J.shape[0] != J.shape[1]:
        raise ValueError("J must have shape (D, D, K, K)")
    return np.sqrt((J**2).sum((2, 3)))


def ranked_pairs(strengths, exclude: int = 0):
    """Upper-triangle pairs with ``j - i > exclude``, strongest first, ties by (i, j)."""
    S = np.asarray(strengths, dtype=float)
    i, j = _upper(S.shape[0])
    keep = (j - i) > exclude
    i, j = i[keep], j[keep]
    order = np.lexsort((j, i, -S[i, j]))
    return i[order], j[order]


def recall_curve(strengths, contacts, n: int | None = None, exclude: int = 0):
    """``[(rank, recall)]`` for the top ``n`` ranked pairs against a boolean contact map."""
    S = np.asarray(strengths, dtype=float)
    C = np.asarray(contacts, dtype=bool)
    if S.shape != C.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("strengths and contacts must be matching square matrices")
    i, j = ranked_pairs(S, exclude)
    hits = C[i, j]
    allc = np.triu(C, k=1)
    r_i, r_j = np.nonzero(allc)
    total = int(((r_j - r_i) > exclude).sum())
    if total == 0:
        raise ValueError("no contacts outside the exclusion window")
    n = len(hits) if n is None else min(n, len(hits))
    rec = np.cumsum(hits[:n]) / total
    return [(r + 1, float(rec[r])) for r in range(n)]


# ---------------------------------------------------------------- data generation

def ising_gibbs_sweeps(model: IsingModel, n_samples: int, n_sweeps: int, rng, x0=None):
    """Independent chains of systematic-scan single-site Gibbs using local fields.

    Used to synthesise training data; each of ``n_samples`` chains contributes its
    final state.
    """
    W, b = model.theta * model.J, model.b
    x = rng.integers(2, size=(n_samples, model.dim)).astype(float) if x0 is None \
        else np.array(x0, dtype=float)
    s = 2.0 * x - 1.0 if model.spin else x
    for _ in range(n_sweeps):
        for i in range(model.dim):
            # f(x^{i<-1}) - f(x^{i<-0}); W_ii = 0 so it does not depend on x_i
            a = 2.0 * (s @ W[:, i]) + b[i]
            if model.spin:
                a = 2.0 * a
            new = rng.random(n_samples) < 1.0 / (1.0 + np.exp(-a))
            s[:, i] = 2.0 * new - 1.0 if model.spin else new
    return ((s + 1.0) / 2.0 if model.spin else s).astype(np.int64)


# ---------------------------------------------------------------- PCD

@dataclass
class TrainResult:
    model: object
    history: list
    snapshots: list


def _frozen_keys(model, cfg):
    if isinstance(model, IsingModel) and not cfg.learn_bias:
        return {"b"}
    return set()


def pcd_train(model, data, sampler: Sampler, cfg: TrainConfig, rng, J_true=None) -> TrainResult:
    """Persistent contrastive divergence with a replay buffer and Adam.

    ``history`` rows hold ``iteration, loss, rmse, grad_norm`` where ``loss`` is the
    contrastive gap ``mean f(data) - mean f(samples)`` and ``rmse`` is against
    ``J_true`` (Ising only; NaN otherwise). ``snapshots`` holds ``(iteration, params)``
    at every checkpoint.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    N = data.shape[0]
    params = get_params(model)
    frozen = _frozen_keys(model, cfg)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    buf = ReplayBuffer(cfg.buffer_size, model.dim, model.arity, rng)
    bs = min(cfg.batch_size, cfg.buffer_size)

    def record(it, cur, loss, gn):
        r = rmse(cur.theta * cur.J, J_true) if (J_true is not None and isinstance(cur, IsingModel)) \
            else float("nan")
        history.append({"iteration": it, "loss": loss, "rmse": r, "grad_norm": gn})

    history, snapshots = [], [(0, copy.deepcopy(params))]
    cur = set_params(model, params) if isinstance(model, IsingModel) else model
    record(0, cur, float("nan"), float("nan"))
    t = 0
    for it in range(1, cfg.iterations + 1):
        d = data[rng.choice(N, size=min(cfg.batch_size, N), replace=N < cfg.batch_size)]
        idx, x = buf.sample(bs, rng)
        state = sampler.init(x, rng)
        for _ in range(cfg.mcmc_steps):
            state, _ = sampler.step(cur, state, rng, t)
            t += 1
        x = sampler.discrete(state)
        buf.write(idx, x)
        loss = float(cur.f(d).mean() - cur.f(x).mean())
        if not np.isfinite(loss):
            raise SamplerFault("non-finite loss")
        g = _to_param_shape(cur, ml_gradient(cur, d, x))
        if cfg.l1 > 0:
            for k, s in _penalty_subgradient(cur, params).items():
                g[k] = g[k] - cfg.l1 * s
        for k in frozen:
            g[k] = np.zeros_like(params[k])
        params = opt.step(params, g)
        cur = set_params(model, params)
        if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
            record(it, cur, loss, grad_norm(g))
            snapshots.append((it, copy.deepcopy(params)))
    return TrainResult(cur if cfg.iterations else model, history, snapshots)


# ---------------------------------------------------------------- pseudo-likelihood

def pseudo_loglik(model: PottsModel, data) -> float:
    """Mean over sequences of ``sum_i log p(x_i | x_-i)``."""
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    logits = model.local_fields(embed(data, model.arity))
    lp = log_softmax(logits)
    return float(np.take_along_axis(lp, data[..., None], -1).sum((1, 2)).mean())


def pseudo_loglik_grad(model: PottsModel, data) -> dict:
    """Gradient of :func:`pseudo_loglik` with respect to (upper-block J, h)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    n, D = data.shape
    E = np.eye(model.arity)[data]
    R = E - np.exp(log_softmax(model.local_fields(embed(data, model.arity))))
    A = np.einsum("nia,njb->ijab", R, E) / n
    # J_ij enters the conditionals of both i and j
    G = 2.0 * (A + A.transpose(1, 0, 3, 2))
    return {"J": G[_upper(D)], "h": R.mean(0)}


def plm_train(model: PottsModel, data, cfg: TrainConfig, rng=None) -> TrainResult:
    """ℓ1(block)-regularised pseudo-likelihood ascent with Adam on the full dataset
    (or minibatches of ``cfg.batch_size`` when ``rng`` is given)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    params = get_params(model)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    cur = model
    history = [{"iteration": 0, "loss": pseudo_loglik(cur, data), "rmse": float("nan"),
                "grad_norm": float("nan")}]
    snapshots = [(0, copy.deepcopy(params))]
    for it in range(1, cfg.iterations + 1):
        batch = data if rng is None or cfg.batch_size >= len(data) else \
            data[rng.choice(len(data), cfg.batch_size, replace=False)]
        g = pseudo_loglik_grad(cur, batch)
        if cfg.l1 > 0:
            g["J"] = g["J"] - cfg.l1 * _penalty_subgradient(cur, params)["J"]
        params = opt.step(params, g)
        cur = set_params(model, params)
        if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
            obj = pseudo_loglik(cur, data)
            if not np.isfinite(obj):
                raise SamplerFault("non-finite objective")
            history.append({"iteration": it, "loss": obj, "rmse": float("nan"),
                            "grad_norm": grad_norm(g)})
            snapshots.append((it, copy.deepcopy(params)))
    return TrainResult(cur, history, snapshots)

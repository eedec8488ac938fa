"""Annealed importance sampling for log-partition estimates of discrete models.

Intermediate targets interpolate between a normalised factorised base and the model:
``f_t(x) = beta_t f(x) + (1 - beta_t) log p_n(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .core import EnergyModel, SamplerFault
from .samplers import GWG, Sampler


@dataclass(frozen=True)
class AnnealSchedule:
    betas: tuple

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("schedule needs at least the two endpoints")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("schedule must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("schedule must be strictly increasing")

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    @classmethod
    def linear(cls, T: int) -> "AnnealSchedule":
        if T < 1:
            raise ValueError("T must be >= 1")
        b = np.linspace(0.0, 1.0, T + 1)
        b[0], b[-1] = 0.0, 1.0
        return cls(tuple(b))

    @classmethod
    def sigmoid(cls, T: int, scale: float = 4.0) -> "AnnealSchedule":
        """Rescaled sigmoid over ``[-scale, scale]``; denser near both endpoints."""
        if T < 1:
            raise ValueError("T must be >= 1")
        s = expit(np.linspace(-scale, scale, T + 1))
        b = (s - s[0]) / (s[-1] - s[0])
        b[0], b[-1] = 0.0, 1.0
        return cls(tuple(b))


class AnnealedModel(EnergyModel):
    """The tempered energy at one ``beta`` as an ordinary model (for samplers)."""

    family = "annealed"

    def __init__(self, model, base, beta: float):
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if model.dim != base.dim or model.arity != base.arity:
            raise ValueError("model and base must share dimension and arity")
        self.model, self.base, self.beta = model, base, float(beta)
        self.dim, self.arity = model.dim, model.arity

    def energy(self, e):
        if self.beta == 1.0:
            return self.model.energy(e)
        if self.beta == 0.0:
            return self.base.energy(e)
        return self.beta * self.model.energy(e) + (1.0 - self.beta) * self.base.energy(e)

    def grad(self, e):
        if self.beta == 1.0:
            return self.model.grad(e)
        if self.beta == 0.0:
            return self.base.grad(e)
        return self.beta * self.model.grad(e) + (1.0 - self.beta) * self.base.grad(e)

    def lipschitz_bound(self) -> float:
        return self.beta * self.model.lipschitz_bound()


def annealed_energy(model, base, beta: float, x) -> np.ndarray:
    """``beta f(x) + (1 - beta) log p_n(x)`` for discrete states ``x``."""
    return AnnealedModel(model, base, beta).f(np.asarray(x, dtype=np.int64))


def _log_weights(model, base, schedule, sampler, n_chains, rng, transitions):
    betas = schedule.betas
    x = base.sample(n_chains, rng)
    state = sampler.init(x, rng)
    f_model = model.f(x)
    f_base = base.f(x)
    logw = np.zeros(n_chains)
    for t in range(1, len(betas)):
        # weight increment f_t(x) - f_{t-1}(x), then move under f_t
        logw += (betas[t] - betas[t - 1]) * (f_model - f_base)
        if t == len(betas) - 1:
            break
        target = AnnealedModel(model, base, betas[t])
        for k in range(transitions):
            state, _ = sampler.step(target, state, rng, (t - 1) * transitions + k)
        x = sampler.discrete(state)
        f_model, f_base = model.f(x), base.f(x)
    if not np.all(np.isfinite(logw)):
        raise SamplerFault("non-finite AIS weight")
    return logw


def ais_log_z(model, base, schedule: AnnealSchedule, sampler: Sampler | None = None,
              n_chains: int = 64, rng=None, transitions: int = 1):
    """AIS estimate ``logsumexp(w) - log n + log Z_base`` and the per-chain log-weights."""
    if transitions < 1 or n_chains < 1:
        raise ValueError("transitions and n_chains must be positive")
    sampler = GWG() if sampler is None else sampler
    logw = _log_weights(model, base, schedule, sampler, n_chains, rng, transitions)
    return float(logsumexp(logw) - np.log(n_chains) + base.log_z()), logw


def ais_repeated(model, base, schedule, sampler=None, n_chains: int = 64, n_reps: int = 10,
                 rng=None, transitions: int = 1) -> np.ndarray:
    """``n_reps`` independent AIS estimates, run as one batch of chains."""
    sampler = GWG() if sampler is None else sampler
    logw = _log_weights(model, base, schedule, sampler, n_chains * n_reps, rng, transitions)
    logw = logw.reshape(n_reps, n_chains)
    return logsumexp(logw, axis=1) - np.log(n_chains) + base.log_z()


def ais_convergence(model, base, Ts, sampler=None, n_chains: int = 64, n_reps: int = 10,
                    rng=None, schedule: str = "linear") -> list:
    """Estimate mean and spread versus the number of temperatures."""
    make = {"linear": AnnealSchedule.linear, "sigmoid": AnnealSchedule.sigmoid}[schedule]
    out = []
    for T in Ts:
        est = ais_repeated(model, base, make(int(T)), sampler, n_chains, n_reps, rng)
        out.append({"T": int(T), "mean": float(est.mean()), "std": float(est.std(ddof=1))
                    if n_reps > 1 else float("nan"), "var": float(est.var(ddof=1))
                    if n_reps > 1 else float("nan")})
    return out


def ais_loglik(model, data, log_z: float):
    """Mean log-likelihood in nats and the corresponding bits per dimension."""
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    ll = float(model.f(data).mean() - log_z)
    return ll, -ll / (model.dim * np.log(2.0))

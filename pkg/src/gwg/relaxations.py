"""Continuous-relaxation baselines: relaxed MALA and relaxed HMC for binary models.

The discrete target ``p(x)`` is lifted to ``p_c(z) = N(z; 0, I) p(gamma(z))`` on R^D.
Proposals follow the smoothed surrogate ``p_c^lam(z) = N(z; 0, I) p(sigmoid(z / lam))`` and
are Metropolis-corrected against the piecewise target ``p_c``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import SamplerFault
from .samplers import Sampler, StepRecord, _mh_accept

#: hyper-parameter grid searched for both relaxed samplers
EPSILON_GRID = (0.1, 0.01, 0.001)
LAMBDA_GRID = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class RelaxConfig:
    lam: float = 1.0
    epsilon: float = 0.1
    leapfrog_steps: int = 5

    def __post_init__(self):
        if self.lam <= 0 or self.epsilon <= 0:
            raise ValueError("lambda and epsilon must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")


def gamma(z) -> np.ndarray:
    """Orthant map: 1 where ``z > 0``, else 0 (ties at exactly zero go to 0)."""
    return (np.asarray(z) > 0).astype(np.int64)


def gamma_lambda(z, lam: float) -> np.ndarray:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return expit(np.asarray(z, dtype=float) / lam)


def log_pc(model, z) -> np.ndarray:
    """Piecewise log density (up to a constant)."""
    z = np.asarray(z, dtype=float)
    f = model.f(gamma(z))
    if not np.all(np.isfinite(f)):
        raise SamplerFault("non-finite energy")
    return -0.5 * (z**2).sum(-1) + f


def log_pc_lambda(model, z, lam: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return -0.5 * (z**2).sum(-1) + model.energy(gamma_lambda(z, lam))


def grad_log_pc_lambda(model, z, lam: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = gamma_lambda(z, lam)
    g = model.grad(s)
    if not np.all(np.isfinite(g)):
        raise SamplerFault("non-finite gradient")
    return -z + s * (1.0 - s) / lam * g


def init_from_discrete(x, rng) -> np.ndarray:
    """Draw ``z | x`` under ``p_c``: independent half-normals signed by ``x``."""
    x = np.asarray(x)
    mag = np.abs(rng.standard_normal(x.shape))
    # |N(0,1)| is a.s. positive, so gamma(z) == x
    return np.where(x > 0, mag, -mag)


def rmala_step(model, z, cfg: RelaxConfig, rng):
    """Relaxed MALA: ``z' ~ N(z + eps/2 grad log p_c^lam(z), eps I)``, corrected against ``p_c``.

    ``eps`` is the proposal variance, so drift and noise shrink together as in Langevin dynamics.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    eps, lam = cfg.epsilon, cfg.lam
    mean = z + 0.5 * eps * grad_log_pc_lambda(model, z, lam)
    zp = mean + np.sqrt(eps) * rng.standard_normal(z.shape)
    mean_p = zp + 0.5 * eps * grad_log_pc_lambda(model, zp, lam)
    log_q_fwd = -0.5 * ((zp - mean) ** 2).sum(-1) / eps
    log_q_rev = -0.5 * ((z - mean_p) ** 2).sum(-1) / eps
    lp, lpp = log_pc(model, z), log_pc(model, zp)
    accept, prob = _mh_accept(lpp - lp + log_q_rev - log_q_fwd, rng)
    out = np.where(accept[:, None], zp, z)
    f_after = model.f(gamma(out))
    return out, StepRecord(accept, prob, f_after, model_evals=2, gradient_evals=2)


def leapfrog(model, z, v, cfg: RelaxConfig):
    """``k`` leapfrog steps on the relaxed Hamiltonian (unit mass)."""
    eps, lam = cfg.epsilon, cfg.lam
    v = v + 0.5 * eps * grad_log_pc_lambda(model, z, lam)
    for k in range(cfg.leapfrog_steps):
        z = z + eps * v
        if k + 1 < cfg.leapfrog_steps:
            v = v + eps * grad_log_pc_lambda(model, z, lam)
    v = v + 0.5 * eps * grad_log_pc_lambda(model, z, lam)
    return z, v


def rhmc_step(model, z, cfg: RelaxConfig, rng):
    """Relaxed HMC; accepted with ``min(1, exp(H(z, v) - H(z', v')))`` under the piecewise target."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    v = rng.standard_normal(z.shape)
    zp, vp = leapfrog(model, z, v, cfg)
    H0 = -log_pc(model, z) + 0.5 * (v**2).sum(-1)
    H1 = -log_pc(model, zp) + 0.5 * (vp**2).sum(-1)
    accept, prob = _mh_accept(H0 - H1, rng)
    out = np.where(accept[:, None], zp, z)
    f_after = model.f(gamma(out))
    return out, StepRecord(accept, prob, f_after, model_evals=2,
                           gradient_evals=cfg.leapfrog_steps + 1)


class _Relaxed(Sampler):
    relaxed = True

    def init(self, x, rng):
        return init_from_discrete(x, rng)

    def discrete(self, state):
        return gamma(state)


@dataclass(frozen=True)
class RMALA(_Relaxed):
    cfg: RelaxConfig = RelaxConfig()

    @property
    def name(self):
        return f"rmala-{self.cfg.epsilon:g}-{self.cfg.lam:g}"

    def step(self, model, state, rng, t=0):
        return rmala_step(model, state, self.cfg, rng)


@dataclass(frozen=True)
class RHMC(_Relaxed):
    cfg: RelaxConfig = RelaxConfig()

    @property
    def name(self):
        return f"rhmc-{self.cfg.epsilon:g}-{self.cfg.lam:g}"

    def step(self, model, state, rng, t=0):
        return rhmc_step(model, state, self.cfg, rng)


def hyperparameter_grid(kind: str = "rmala", leapfrog_steps: int = 5):
    cls = {"rmala": RMALA, "rhmc": RHMC}[kind]
    return [cls(RelaxConfig(lam, eps, leapfrog_steps)) for eps in EPSILON_GRID for lam in LAMBDA_GRID]

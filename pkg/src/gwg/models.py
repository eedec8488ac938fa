"""Closed-form energy models with analytic gradients on their continuous extensions."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit

from .core import EnergyModel, embed


def softplus(a):
    return np.logaddexp(0.0, a)


def _spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def lattice_adjacency(n: int) -> np.ndarray:
    """Adjacency of the cyclic ``n x n`` lattice, row-major node order."""
    if n < 3:
        raise ValueError("cyclic lattice needs n >= 3 so every node has 4 distinct neighbours")
    D = n * n
    J = np.zeros((D, D))
    for r in range(n):
        for c in range(n):
            i = r * n + c
            for j in (r * n + (c + 1) % n, ((r + 1) % n) * n + c):
                J[i, j] = J[j, i] = 1.0
    return J


def erdos_renyi_couplings(D: int, rng: np.random.Generator, mean_degree: float = 4.0,
                          weight_std: float = 0.5) -> np.ndarray:
    """Symmetric ER coupling matrix with Gaussian edge strengths."""
    p = min(1.0, mean_degree / max(D - 1, 1))
    mask = np.triu(rng.random((D, D)) < p, k=1)
    W = np.triu(rng.normal(0.0, weight_std, size=(D, D)), k=1) * mask
    return W + W.T


class IsingModel(EnergyModel):
    """``f(x) = theta * x^T J x + b^T x`` on ``x`` in {0,1}^D.

    With ``spin=True`` the same form is evaluated at ``s = 2x - 1`` (spins in {-1, 1}),
    still as a function of the {0,1} embedding so flip differences keep their form.
    """

    family = "ising"

    def __init__(self, J, theta: float = 1.0, b=None, spin: bool = False):
        J = np.array(J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("J must be square")
        if not np.allclose(J, J.T, atol=1e-12):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("J must have a zero diagonal")
        self.J = J
        self.theta = float(theta)
        self.spin = bool(spin)
        self.dim = J.shape[0]
        self.arity = 2
        self.b = np.zeros(self.dim) if b is None else np.array(b, dtype=float)
        if self.b.shape != (self.dim,):
            raise ValueError("bias must have length D")
        self._W = self.theta * self.J

    @classmethod
    def lattice(cls, n: int, theta: float, b=None, spin: bool = False) -> "IsingModel":
        return cls(lattice_adjacency(n), theta, b, spin)

    def energy(self, e):
        e = self.check_input(e)
        if self.spin:
            e = 2.0 * e - 1.0
        return np.einsum("...i,...i->...", e @ self._W, e) + e @ self.b

    def grad(self, e):
        e = self.check_input(e)
        if self.spin:
            return 2.0 * (2.0 * ((2.0 * e - 1.0) @ self._W) + self.b)
        return 2.0 * (e @ self._W) + self.b

    def value_and_grad(self, e):
        e = self.check_input(e)
        s = 2.0 * e - 1.0 if self.spin else e
        sW = s @ self._W
        f = np.einsum("...i,...i->...", sW, s) + s @ self.b
        g = 2.0 * sW + self.b
        return f, (2.0 * g if self.spin else g)

    def lipschitz_bound(self) -> float:
        if self.theta < 0:
            raise ValueError("bound stated for theta >= 0")
        # Hessian 2 theta J, or 8 theta J through the spin map
        return (8.0 if self.spin else 2.0) * self.theta * _spectral_norm(self.J)

    def to_dict(self):
        return {"arrays": {"J": self.J, "b": self.b},
                "scalars": {"theta": self.theta, "spin": self.spin}}


class RbmModel(EnergyModel):
    """Marginal RBM: ``f(x) = sum softplus(W x + c) + b^T x`` with ``W`` of shape (H, D)."""

    family = "rbm"

    def __init__(self, W, b, c):
        self.W = np.array(W, dtype=float)
        self.b = np.array(b, dtype=float)
        self.c = np.array(c, dtype=float)
        if self.W.ndim != 2 or min(self.W.shape) < 1:
            raise ValueError("W must be a non-empty (H, D) matrix")
        H, D = self.W.shape
        if self.b.shape != (D,) or self.c.shape != (H,):
            raise ValueError("bias shapes do not match W")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.c))):
            raise ValueError("RBM parameters must be finite")
        self.dim, self.n_hidden, self.arity = D, H, 2

    @classmethod
    def random(cls, D: int, H: int, rng: np.random.Generator) -> "RbmModel":
        # W ~ N(0, .05) (variance), b, c ~ N(0, 1)
        return cls(rng.normal(0.0, np.sqrt(0.05), size=(H, D)),
                   rng.normal(size=D), rng.normal(size=H))

    def energy(self, e):
        e = self.check_input(e)
        return softplus(e @ self.W.T + self.c).sum(-1) + e @ self.b

    def grad(self, e):
        e = self.check_input(e)
        return expit(e @ self.W.T + self.c) @ self.W + self.b

    def prob_h_given_x(self, x):
        return expit(np.asarray(x, dtype=float) @ self.W.T + self.c)

    def prob_x_given_h(self, h):
        return expit(np.asarray(h, dtype=float) @ self.W + self.b)

    def joint_energy(self, x, h):
        """Unnormalised ``log p(x, h) = h^T W x + b^T x + c^T h``."""
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        return np.einsum("...h,...h->...", h, x @ self.W.T) + x @ self.b + h @ self.c

    def lipschitz_bound(self) -> float:
        # Hessian W^T diag(s(1-s)) W with s(1-s) <= 1/4
        return 0.25 * _spectral_norm(self.W) ** 2

    def to_dict(self):
        return {"arrays": {"W": self.W, "b": self.b, "c": self.c}, "scalars": {}}


class PottsModel(EnergyModel):
    """``f(x) = sum_i h_i^T x_i + sum_{i,j} x_i^T J_ij x_j`` on one-hot ``x``.

    ``J`` has shape (D, D, K, K) with ``J_ji = J_ij^T`` and ``J_ii = 0``; the double
    sum runs over ordered pairs, so each unordered pair contributes twice.
    """

    family = "potts"

    def __init__(self, J, h):
        J = np.array(J, dtype=float)
        h = np.array(h, dtype=float)
        if J.ndim != 4 or J.shape[0] != J.shape[1] or J.shape[2] != J.shape[3]:
            raise ValueError("J must have shape (D, D, K, K)")
        D, _, K, _ = J.shape
        if h.shape != (D, K):
            raise ValueError("h must have shape (D, K)")
        if not np.allclose(J, J.transpose(1, 0, 3, 2), atol=1e-12):
            raise ValueError("J must satisfy J_ij = J_ji^T")
        if np.any(J[np.arange(D), np.arange(D)] != 0):
            raise ValueError("J_ii must be zero")
        self.J, self.h = J, h
        self.dim, self.arity = D, K
        self._Jm = J.transpose(0, 2, 1, 3).reshape(D * K, D * K)

    @staticmethod
    def symmetrize(J_upper: np.ndarray) -> np.ndarray:
        """Build a valid coupling tensor from its i < j blocks."""
        D = J_upper.shape[0]
        iu = np.triu(np.ones((D, D), dtype=bool), k=1)
        J = np.where(iu[:, :, None, None], J_upper, 0.0)
        return J + J.transpose(1, 0, 3, 2)

    def _flat(self, e):
        e = self.check_input(e)
        if self.arity == 2:
            # the binary embedding x stands for the one-hot pair (1 - x, x)
            e = np.stack([1.0 - e, e], axis=-1)
        return e.reshape(e.shape[:-2] + (self.dim * self.arity,))

    def _grid(self, g, ef):
        return g.reshape(ef.shape[:-1] + (self.dim, self.arity))

    def _chain(self, g):
        return g[..., 1] - g[..., 0] if self.arity == 2 else g

    def energy(self, e):
        ef = self._flat(e)
        return np.einsum("...a,...a->...", ef @ self._Jm, ef) + ef @ self.h.ravel()

    def grad(self, e):
        ef = self._flat(e)
        return self._chain(self._grid(2.0 * (ef @ self._Jm) + self.h.ravel(), ef))

    def value_and_grad(self, e):
        ef = self._flat(e)
        eJ = ef @ self._Jm
        f = np.einsum("...a,...a->...", eJ, ef) + ef @ self.h.ravel()
        return f, self._chain(self._grid(2.0 * eJ + self.h.ravel(), ef))

    def local_fields(self, e):
        """Conditional logits of each site given the rest: ``h_i + 2 sum_j J_ij x_j``, shape (..., D, K)."""
        ef = self._flat(e)
        return self._grid(2.0 * (ef @ self._Jm) + self.h.ravel(), ef)

    def lipschitz_bound(self) -> float:
        return 2.0 * _spectral_norm(self._Jm)

    def to_dict(self):
        return {"arrays": {"J": self.J, "h": self.h}, "scalars": {}}


class FhmmPosterior(EnergyModel):
    """Log joint ``log p(x, y)`` of a factorial HMM as a function of ``x`` in {0,1}^{L x K}.

    States are flattened time-major: dimension ``t*K + k`` is factor ``k`` at step ``t``.
    The log transition factor of each chain is extended to the reals by the
    multilinear interpolation of its four corner values.
    """

    family = "fhmm"

    def __init__(self, W, b, sigma2, alpha, beta, y):
        self.W = np.atleast_1d(np.array(W, dtype=float))
        self.b = float(b)
        self.sigma2 = float(sigma2)
        self.y = np.atleast_1d(np.array(y, dtype=float))
        self.K = self.W.shape[0]
        self.L = self.y.shape[0]
        self.alpha = np.broadcast_to(np.array(alpha, dtype=float), (self.K,)).copy()
        self.beta = np.broadcast_to(np.array(beta, dtype=float), (self.K,)).copy()
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if np.any(v <= 0) or np.any(v >= 1):
                raise ValueError(f"{name} must lie in (0, 1)")
        self.dim, self.arity = self.L * self.K, 2
        lb, l1b = np.log(self.beta), np.log1p(-self.beta)
        # corner values phi(a, b) = log p(x_{t+1} = b | x_t = a)
        phi00, phi01, phi10, phi11 = lb, l1b, l1b, lb
        self.trans_const = phi00
        self.trans_prev = phi10 - phi00
        self.trans_next = phi01 - phi00
        self.trans_inter = phi11 - phi10 - phi01 + phi00
        self.init_logit = np.log(self.alpha) - np.log1p(-self.alpha)

    @classmethod
    def sample(cls, L: int, K: int, rng: np.random.Generator, sigma2: float = 0.5,
               alpha: float = 0.1, beta: float = 0.95):
        """Random FHMM with ``W, b ~ N(0, 1)``; returns ``(posterior, x_true)`` with ``x_true`` flat."""
        W = rng.normal(size=K)
        b = rng.normal()
        alpha = np.full(K, alpha)
        beta = np.full(K, beta)
        x = np.zeros((L, K), dtype=np.int64)
        x[0] = rng.random(K) < alpha
        for t in range(1, L):
            p1 = np.where(x[t - 1] == 1, beta, 1.0 - beta)
            x[t] = rng.random(K) < p1
        y = x @ W + b + rng.normal(scale=np.sqrt(sigma2), size=L)
        return cls(W, b, sigma2, alpha, beta, y), x.ravel()

    def _grid(self, e):
        e = self.check_input(e)
        return e.reshape(e.shape[:-1] + (self.L, self.K))

    def energy(self, e):
        X = self._grid(e)
        r = self.y - X @ self.W - self.b
        emit = -0.5 * (r**2).sum(-1) / self.sigma2 - 0.5 * self.L * np.log(2 * np.pi * self.sigma2)
        init = (X[..., 0, :] * np.log(self.alpha) + (1 - X[..., 0, :]) * np.log1p(-self.alpha)).sum(-1)
        a, c = X[..., :-1, :], X[..., 1:, :]
        trans = (self.trans_inter * a * c + self.trans_prev * a + self.trans_next * c
                 + self.trans_const).sum((-1, -2))
        return emit + init + trans

    def grad(self, e):
        X = self._grid(e)
        r = self.y - X @ self.W - self.b
        g = (r / self.sigma2)[..., None] * self.W
        g[..., 0, :] += self.init_logit
        g[..., :-1, :] += self.trans_inter * X[..., 1:, :] + self.trans_prev
        g[..., 1:, :] += self.trans_inter * X[..., :-1, :] + self.trans_next
        return g.reshape(g.shape[:-2] + (self.dim,))

    def hessian(self) -> np.ndarray:
        """The (constant) Hessian of the continuous log joint."""
        L, K = self.L, self.K
        Hm = np.zeros((L, K, L, K))
        blk = -np.outer(self.W, self.W) / self.sigma2
        for t in range(L):
            Hm[t, :, t, :] = blk
            if t + 1 < L:
                Hm[t, :, t + 1, :] = np.diag(self.trans_inter)
                Hm[t + 1, :, t, :] = np.diag(self.trans_inter)
        return Hm.reshape(L * K, L * K)

    def lipschitz_bound(self) -> float:
        if self.dim <= 4096:
            return float(np.max(np.abs(np.linalg.eigvalsh(self.hessian()))))
        return float(self.W @ self.W / self.sigma2 + 2 * np.max(np.abs(self.trans_inter)))

    def to_dict(self):
        return {"arrays": {"W": self.W, "alpha": self.alpha, "beta": self.beta, "y": self.y},
                "scalars": {"b": self.b, "sigma2": self.sigma2}}


class CubicModel(EnergyModel):
    """``f(x) = x^T A x + b^T x + sum_i g_i x_i^3``.

    On {0,1}^D the cubic term equals ``g^T x``, so this is an Ising distribution with a
    representation whose first-order Taylor differences are inexact.
    """

    family = "cubic"

    def __init__(self, A, b, g):
        A = np.array(A, dtype=float)
        if not np.allclose(A, A.T) or np.any(np.diag(A) != 0):
            raise ValueError("A must be symmetric with zero diagonal")
        self.A = A
        self.b = np.array(b, dtype=float)
        self.g = np.array(g, dtype=float)
        self.dim, self.arity = A.shape[0], 2

    def energy(self, e):
        e = self.check_input(e)
        return np.einsum("...i,...i->...", e @ self.A, e) + e @ self.b + (e**3) @ self.g

    def grad(self, e):
        e = self.check_input(e)
        return 2.0 * (e @ self.A) + self.b + 3.0 * self.g * e**2

    def lipschitz_bound(self) -> float:
        # Hessian 2A + diag(6 g x) with x in [0, 1]
        return 2.0 * _spectral_norm(self.A) + 6.0 * float(np.max(np.abs(self.g), initial=0.0))

    def to_dict(self):
        return {"arrays": {"A": self.A, "b": self.b, "g": self.g}, "scalars": {}}


class FactorizedBase(EnergyModel):
    """Independent per-dimension categorical distribution (normalised)."""

    family = "base"

    def __init__(self, logp):
        logp = np.array(logp, dtype=float)
        if logp.ndim != 2 or logp.shape[1] < 2:
            raise ValueError("logp must have shape (D, K)")
        if not np.allclose(np.exp(logp).sum(1), 1.0, atol=1e-10):
            raise ValueError("each row must normalise")
        self.logp = logp
        self.dim, self.arity = logp.shape

    @classmethod
    def uniform(cls, D: int, K: int = 2) -> "FactorizedBase":
        return cls(np.full((D, K), -np.log(K)))

    def energy(self, e):
        e = self.check_input(e)
        if self.arity == 2:
            return e @ self.logp[:, 1] + (1 - e) @ self.logp[:, 0]
        return np.einsum("...ik,ik->...", e, self.logp)

    def grad(self, e):
        e = self.check_input(e)
        g = self.logp[:, 1] - self.logp[:, 0] if self.arity == 2 else self.logp
        return np.broadcast_to(g, e.shape).copy()

    def log_z(self) -> float:
        return 0.0

    def lipschitz_bound(self) -> float:
        return 0.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = np.exp(self.logp)
        c = np.cumsum(p, axis=1)
        u = rng.random((n, self.dim, 1))
        return np.minimum((c[None] <= u).sum(-1), self.arity - 1).astype(np.int64)

    def to_dict(self):
        return {"arrays": {"logp": self.logp}, "scalars": {}}


def base_fit(data, K: int = 2, smoothing: float = 1.0) -> FactorizedBase:
    """Per-dimension frequencies with additive smoothing: ``(count + s) / (N + K s)``."""
    data = np.asarray(data, dtype=np.int64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("base_fit needs a non-empty (N, D) array")
    N = data.shape[0]
    counts = np.stack([(data == k).sum(0) for k in range(K)], axis=1).astype(float)
    p = (counts + smoothing) / (N + K * smoothing)
    return FactorizedBase(np.log(p))


def base_logp(base: FactorizedBase, x) -> np.ndarray:
    return base.energy(embed(np.asarray(x, dtype=np.int64), base.arity))


def rbm_hidden_logp(rbm: RbmModel, x, h):
    """log p(h | x) for binary ``h``; used by exact checks."""
    a = np.asarray(x, dtype=float) @ rbm.W.T + rbm.c
    h = np.asarray(h, dtype=float)
    return (h * log_expit(a) + (1 - h) * log_expit(-a)).sum(-1)


FAMILIES = {cls.family: cls for cls in (IsingModel, RbmModel, PottsModel, FhmmPosterior,
                                        CubicModel, FactorizedBase)}

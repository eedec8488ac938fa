"""Chain-quality metrics: effective sample size, kernel MMD and cost accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ChainTrace:
    """Per-step record of a batch of ``N`` chains run for ``T`` steps.

    ``stat``, ``energy`` and ``accept`` have shape (T, N). Evaluation counts are
    cumulative per chain, and ``seconds`` is the wall-clock of each batched step.
    """

    stat: np.ndarray
    energy: np.ndarray
    accept: np.ndarray
    cum_model_evals: np.ndarray
    cum_grad_evals: np.ndarray
    seconds: np.ndarray

    def __post_init__(self):
        T = len(self.seconds)
        for name in ("stat", "energy", "accept", "cum_model_evals", "cum_grad_evals"):
            if len(getattr(self, name)) != T:
                raise ValueError("all trace series must have the same length")
        if np.any(np.diff(self.cum_model_evals) < 0) or np.any(np.diff(self.cum_grad_evals) < 0):
            raise ValueError("cumulative counts must be non-decreasing")

    def __len__(self):
        return len(self.seconds)

    @property
    def n_chains(self) -> int:
        return self.stat.shape[1] if self.stat.ndim == 2 else 1

    def chain(self, n: int) -> "ChainTrace":
        return ChainTrace(self.stat[:, n:n + 1], self.energy[:, n:n + 1], self.accept[:, n:n + 1],
                          self.cum_model_evals, self.cum_grad_evals, self.seconds)

    def rows(self, n: int = 0):
        """CSV rows ``(step, stat, energy, accepted, cum_evals, seconds)`` for chain ``n``."""
        cum = self.cum_model_evals + self.cum_grad_evals
        for t in range(len(self)):
            yield (t, float(self.stat[t, n]), float(self.energy[t, n]), int(self.accept[t, n]),
                   int(cum[t]), float(self.seconds[t]))


def hamming_statistic(x, x_ref) -> np.ndarray:
    """Number of dimensions where ``x`` (single state or batch) differs from ``x_ref``."""
    x = np.asarray(x)
    x_ref = np.asarray(x_ref)
    if x.shape[-1] != x_ref.shape[-1]:
        raise ValueError("shape mismatch")
    return (x != x_ref).sum(-1)


def autocorrelation(series: np.ndarray) -> np.ndarray:
    """Biased sample autocorrelation at every lag, via FFT."""
    x = np.asarray(series, dtype=float)
    T = x.shape[0]
    x = x - x.mean()
    n = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(x, n)
    acov = np.fft.irfft(f * np.conj(f), n)[:T] / T
    return acov / acov[0]


def ess(series) -> float:
    """Effective sample size with Geyer's initial monotone positive sequence.

    Consecutive autocorrelation pairs are summed until a pair goes non-positive, and
    the pair sums are forced non-increasing. The integrated autocorrelation time is
    floored at ``1 / log10(T)`` so antithetic chains give a finite ESS above ``T``.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.shape[0]
    if T < 10:
        raise ValueError("ess needs at least 10 samples")
    if np.ptp(x) == 0:
        raise ValueError("ess is undefined for a constant series")
    rho = autocorrelation(x)
    n_pairs = T // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(1)
    nonpos = np.nonzero(pairs <= 0)[0]
    m = nonpos[0] if nonpos.size else n_pairs
    pairs = np.minimum.accumulate(pairs[:m])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(T))
    return float(T / tau)


def exp_hamming_kernel(a, b) -> np.ndarray:
    """``exp(-d_H(a, b) / D)``; broadcasts over leading dimensions of matching shape."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError("shape mismatch")
    return np.exp(-(a != b).sum(-1) / a.shape[-1])


def kernel_matrix(A, B) -> np.ndarray:
    """Gram matrix of :func:`exp_hamming_kernel` between two sample sets (N, D), (M, D)."""
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    if A.shape[1] != B.shape[1]:
        raise ValueError("shape mismatch")
    D = A.shape[1]
    K = int(max(A.max(initial=0), B.max(initial=0))) + 1
    if K <= 2:
        Af, Bf = A.astype(float), B.astype(float)
        matches = Af @ Bf.T + (1 - Af) @ (1 - Bf).T
    else:
        eye = np.eye(K)
        matches = eye[A].reshape(len(A), -1) @ eye[B].reshape(len(B), -1).T
    return np.exp(-(D - np.rint(matches)) / D)


def mmd(a, b) -> float:
    """Biased (V-statistic) squared MMD under the exponential Hamming kernel."""
    a = np.asarray(a)
    b = np.asarray(b)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("mmd needs at least two samples per set")
    val = kernel_matrix(a, a).mean() + kernel_matrix(b, b).mean() - 2.0 * kernel_matrix(a, b).mean()
    return max(float(val), 0.0)


def log_mmd(a, b) -> float:
    """``log10`` of :func:`mmd` (``-inf`` for identical multisets)."""
    v = mmd(a, b)
    return float(np.log10(v)) if v > 0 else -np.inf


def cost_report(trace: ChainTrace, chain: int | None = None) -> dict:
    """Acceptance rate, evaluations per step, seconds per step and ESS per second."""
    T = len(trace)
    if T == 0:
        raise ValueError("empty trace")
    cols = range(trace.n_chains) if chain is None else [chain]
    total = float(trace.seconds.sum())
    esses = []
    for n in cols:
        try:
            esses.append(ess(trace.stat[:, n]))
        except ValueError:
            esses.append(float("nan"))
    e = float(np.nanmedian(esses)) if not np.all(np.isnan(esses)) else float("nan")
    acc = trace.accept[:, list(cols)]
    return {
        "steps": T,
        "acceptance_rate": float(acc.mean()),
        "model_evals_per_step": float(trace.cum_model_evals[-1]) / T,
        "gradient_evals_per_step": float(trace.cum_grad_evals[-1]) / T,
        "seconds_per_step": total / T,
        "ess": e,
        "ess_per_second": e / total if total > 0 else float("nan"),
    }

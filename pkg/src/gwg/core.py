"""State representations, neighbourhoods, the energy-model contract and RNG streams.

Discrete states are stored as integer category indices. A batch of chains is an
integer array of shape ``(N, D)``; a single state is shape ``(D,)``. Models are
evaluated on the *embedding* of a state: the raw 0/1 vector for binary models and
the one-hot ``(D, K)`` matrix for categorical ones (see :func:`embed`).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

#: Maximum number of states any enumeration (windows, blocks, full spaces) may produce.
ENUMERATION_CAP = 2**20


class EnumerationError(ValueError):
    """An enumeration would exceed :data:`ENUMERATION_CAP`."""


class SamplerFault(FloatingPointError):
    """A sampler encountered a non-finite energy or probability."""


@dataclass(frozen=True)
class DiscreteState:
    """A single configuration in ``{0, ..., K-1}^D``."""

    values: tuple
    K: int = 2

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if self.K < 2:
            raise ValueError("arity K must be at least 2")
        if any(v < 0 or v >= self.K for v in vals):
            raise ValueError(f"state entries must lie in [0, {self.K})")
        object.__setattr__(self, "values", vals)

    @property
    def D(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    @classmethod
    def from_array(cls, a, K: int = 2) -> "DiscreteState":
        return cls(tuple(np.asarray(a).ravel().tolist()), K)


def _values(x):
    if isinstance(x, DiscreteState):
        return x.array(), x.K
    return np.asarray(x, dtype=np.int64), None


def flipdim(x, i: int):
    """Toggle bit ``i`` of a binary state (or of every row of a batch)."""
    arr, K = _values(x)
    if K is not None and K != 2:
        raise ValueError("flipdim requires a binary state")
    if K is None and arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("flipdim requires a binary state")
    D = arr.shape[-1]
    if not 0 <= i < D:
        raise IndexError(f"index {i} out of range for dimension {D}")
    out = arr.copy()
    out[..., i] = 1 - out[..., i]
    return DiscreteState.from_array(out, 2) if K is not None else out


def setdim(x, i: int, k: int, K: int | None = None):
    """Return ``x`` with dimension ``i`` set to category ``k``."""
    arr, sK = _values(x)
    K = sK if sK is not None else K
    D = arr.shape[-1]
    if not 0 <= i < D:
        raise IndexError(f"index {i} out of range for dimension {D}")
    if k < 0 or (K is not None and k >= K):
        raise ValueError(f"category {k} out of range")
    out = arr.copy()
    out[..., i] = k
    return DiscreteState.from_array(out, K) if sK is not None else out


def window_size(D: int, K: int, radius: int) -> int:
    """Number of states at Hamming distance 1..radius from a point."""
    return sum(comb(D, j) * (K - 1) ** j for j in range(1, min(radius, D) + 1))


def shift_patterns(D: int, K: int, radius: int, include_zero: bool = False,
                   cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All shift vectors ``m`` with 1..radius non-zero entries in {1..K-1}.

    ``(x + m) % K`` then enumerates the Hamming window of ``x`` independently of the
    current values. With ``include_zero`` the zero vector is prepended (the
    closed Hamming ball).
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    n = window_size(D, K, radius) + int(include_zero)
    if n > cap:
        raise EnumerationError(f"window of {n} states exceeds cap {cap}")
    rows = [np.zeros(D, dtype=np.int64)] if include_zero else []
    for j in range(1, min(radius, D) + 1):
        for dims in itertools.combinations(range(D), j):
            for shifts in itertools.product(range(1, K), repeat=j):
                m = np.zeros(D, dtype=np.int64)
                m[list(dims)] = shifts
                rows.append(m)
    return np.array(rows, dtype=np.int64).reshape(-1, D)


def hamming_window(x, radius: int = 1, K: int | None = None,
                   cap: int = ENUMERATION_CAP) -> np.ndarray:
    """States at Hamming distance 1..radius from ``x``; ``x`` itself excluded.

    Returns an integer array of shape ``(W, D)``.
    """
    arr, sK = _values(x)
    K = sK or K or 2
    M = shift_patterns(arr.shape[-1], K, radius, cap=cap)
    return (arr[None, :] + M) % K


def all_states(D: int, K: int = 2, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Every configuration of ``{0..K-1}^D`` in lexicographic order (last dim fastest)."""
    if K**D > cap:
        raise EnumerationError(f"state space K^D = {K**D} exceeds cap {cap}")
    grids = np.indices((K,) * D).reshape(D, -1).T
    return grids.astype(np.int64)


def state_index(x: np.ndarray, K: int = 2) -> np.ndarray:
    """Lexicographic index of states (inverse of :func:`all_states`)."""
    x = np.asarray(x, dtype=np.int64)
    D = x.shape[-1]
    weights = K ** np.arange(D - 1, -1, -1, dtype=np.int64)
    return x @ weights


def onehot(x, K: int | None = None) -> np.ndarray:
    """One-hot view of a state or batch; binary states map to their raw 0/1 vector."""
    arr, sK = _values(x)
    K = sK or K or 2
    if K == 2:
        return arr.astype(float)
    return np.eye(K)[arr]


def decode(e: np.ndarray, K: int) -> np.ndarray:
    """Inverse of :func:`onehot`."""
    e = np.asarray(e)
    if K == 2:
        return np.rint(e).astype(np.int64)
    return e.argmax(axis=-1).astype(np.int64)


def embed(x: np.ndarray, K: int) -> np.ndarray:
    """Real-valued embedding of an integer state batch, as consumed by models."""
    if K == 2:
        return np.asarray(x, dtype=float)
    return np.eye(K)[x]


class EnergyModel:
    """Contract for an unnormalised log-probability ``f`` over ``{0..K-1}^D``.

    Subclasses implement :meth:`energy` and :meth:`grad` on the continuous
    extension. Inputs are embeddings with leading batch dimensions: ``(..., D)``
    for binary models and ``(..., D, K)`` for categorical ones. Models are
    immutable after construction.
    """

    dim: int
    arity: int = 2

    def energy(self, e: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, e: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_and_grad(self, e: np.ndarray):
        """``(energy(e), grad(e))``; models override this to share work."""
        return self.energy(e), self.grad(e)

    def lipschitz_bound(self) -> float:
        """Upper bound on the Lipschitz constant of ``grad`` over the unit cube."""
        raise NotImplementedError

    # convenience on integer states
    def f(self, x: np.ndarray) -> np.ndarray:
        return self.energy(embed(x, self.arity))

    def check_input(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        want = (self.dim,) if self.arity == 2 else (self.dim, self.arity)
        if e.shape[e.ndim - len(want):] != want:
            raise ValueError(f"expected trailing shape {want}, got {e.shape}")
        return e


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Reproducible generator for ``(seed, stream)``; PCG64 output is platform independent."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def log_softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = a - m
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


def sample_categorical(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw from each row of ``logp`` (shape ``(N, C)``)."""
    p = np.exp(logp)
    c = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1])[..., None] * c[..., -1:]
    idx = (c <= u).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)

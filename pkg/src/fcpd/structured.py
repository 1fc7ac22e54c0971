"""Rank-J Kruskal tensors with one split component per rank-R term.

A :class:`StructuredKruskal` of order N stores R components whose first N-2
factors are shared columns ``B^(k)[:, r]`` and whose last two modes carry a
rank-``J_r`` block ``U_r diag(sigma_r) V_r^T``.  Expanded, it is the rank-J
Kruskal tensor

    (lambda~, [B^(1) M, ..., B^(N-2) M, [U_1 .. U_R], [V_1 S_1 .. V_R S_R]])

with ``lambda~`` the block-replicated weights and ``M`` the replication map.
Gradients and ALS updates are evaluated from R x R and J x R products only.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .als import AlsOptions, FitReport, run_als
from .errors import InvalidArgumentError
from .tensor import DenseTensor, KruskalTensor, hadamard_product, kruskal_to_dense

__all__ = [
    "StructuredKruskal",
    "structured_mttkrp",
    "structured_gradient",
    "structured_als",
]


@dataclass(frozen=True, eq=False)
class StructuredKruskal:
    weights: np.ndarray
    shared: tuple
    u_blocks: tuple
    v_blocks: tuple
    sigmas: tuple

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).ravel()
        R = weights.size
        shared = tuple(np.array(b, dtype=float, ndmin=2) for b in self.shared)
        us = tuple(np.array(u, dtype=float, ndmin=2) for u in self.u_blocks)
        vs = tuple(np.array(v, dtype=float, ndmin=2) for v in self.v_blocks)
        sig = tuple(np.array(s, dtype=float).ravel() for s in self.sigmas)
        if not len(us) == len(vs) == len(sig) == R:
            raise InvalidArgumentError("need one U, V and sigma block per component")
        for n, b in enumerate(shared):
            if b.shape[1] != R:
                raise InvalidArgumentError(f"shared factor {n} has {b.shape[1]} columns, expected {R}")
        for r, (u, v, s) in enumerate(zip(us, vs, sig)):
            if not (u.shape[1] == v.shape[1] == s.size >= 1):
                raise InvalidArgumentError(f"block {r} has inconsistent sizes")
            if u.shape[0] != us[0].shape[0] or v.shape[0] != vs[0].shape[0]:
                raise InvalidArgumentError(f"block {r} has inconsistent row counts")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "shared", shared)
        object.__setattr__(self, "u_blocks", us)
        object.__setattr__(self, "v_blocks", vs)
        object.__setattr__(self, "sigmas", sig)
        # derived quantities used by every kernel
        index = np.repeat(np.arange(R), [s.size for s in sig])
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "u_all", np.hstack(us))
        object.__setattr__(self, "v_all", np.hstack([v * s for v, s in zip(vs, sig)]))

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.sigmas)

    @property
    def total_rank(self) -> int:
        return int(self.index.size)

    @property
    def order(self) -> int:
        return len(self.shared) + 2

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.shared) + (
            self.u_all.shape[0],
            self.v_all.shape[0],
        )

    @property
    def expanded_weights(self) -> np.ndarray:
        return self.weights[self.index]

    def to_kruskal(self) -> KruskalTensor:
        """The equivalent rank-J Kruskal tensor (not normalized)."""
        factors = [b[:, self.index] for b in self.shared] + [self.u_all, self.v_all]
        return KruskalTensor(self.expanded_weights, factors)

    def leading(self) -> KruskalTensor:
        """Rank-R tensor keeping only the leading singular triple of each block."""
        factors = list(self.shared)
        factors.append(np.column_stack([u[:, 0] for u in self.u_blocks]))
        factors.append(np.column_stack([v[:, 0] for v in self.v_blocks]))
        weights = self.weights * np.array([s[0] for s in self.sigmas])
        return KruskalTensor(weights, factors)

    def full(self) -> DenseTensor:
        return kruskal_to_dense(self.to_kruskal())

    def norm_sq(self) -> float:
        """``||Y~||^2`` from J x J Gram matrices."""
        idx = self.index
        g = self.u_all.T @ self.u_all
        g = g * (self.v_all.T @ self.v_all)
        for b in self.shared:
            g = g * (b.T @ b)[np.ix_(idx, idx)]
        w = self.expanded_weights
        return float(w @ g @ w)


def _check_current(s: StructuredKruskal, factors) -> None:
    if len(factors) != s.order:
        raise InvalidArgumentError(f"{len(factors)} factors for order {s.order}")
    rank = np.shape(factors[0])[1]
    for n, (f, size) in enumerate(zip(factors, s.shape)):
        if np.shape(f) != (size, rank):
            raise InvalidArgumentError(
                f"factor {n} has shape {np.shape(f)}, expected ({size}, {rank})"
            )


def structured_mttkrp(s: StructuredKruskal, factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """``Y~_(n) (KR of factors k != n)`` without expanding ``Y~``."""
    _check_current(s, factors)
    N = s.order
    if not 0 <= n < N:
        raise InvalidArgumentError(f"mode {n} out of range for order {N}")
    ns = N - 2
    idx = s.index
    w = s.expanded_weights[:, None]
    proj = [b.T @ a for b, a in zip(s.shared, factors[:ns])]
    ua = s.u_all.T @ factors[ns]
    va = s.v_all.T @ factors[ns + 1]
    if n < ns:
        rank = ua.shape[1]
        kmat = np.zeros((s.rank, rank))
        np.add.at(kmat, idx, w * ua * va)
        omega = hadamard_product(proj, skip=n)
        if omega is None:
            return s.shared[n] @ kmat
        return s.shared[n] @ (omega * kmat)
    omega = hadamard_product(proj)
    omega_j = np.ones_like(ua) if omega is None else omega[idx]
    if n == ns:
        return s.u_all @ (w * va * omega_j)
    return s.v_all @ (w * ua * omega_j)


def structured_gradient(s: StructuredKruskal, current: KruskalTensor, n: int) -> np.ndarray:
    """``(Y~_(n) - Yhat_(n)) (KR of current factors k != n)``."""
    factors = current.factors
    t = structured_mttkrp(s, factors, n)
    grams = [f.T @ f for f in factors]
    gamma = hadamard_product(grams, skip=n)
    return t - (factors[n] * current.weights) @ gamma


DENSE_CHECK_LIMIT = 1 << 22


class StructuredTarget:
    """ALS target for a structured tensor.

    Near an exact fit the Gram-based error cancels down to about 1e-8; small
    tensors are then expanded once to get the residual to full precision.
    """

    def __init__(self, s: StructuredKruskal):
        self.s = s
        self.shape = s.shape
        self.norm_sq = s.norm_sq()
        if np.prod(self.shape, dtype=float) <= DENSE_CHECK_LIMIT:
            self.exact_error_sq = self._exact_error_sq

    def mttkrp(self, factors, n):
        return structured_mttkrp(self.s, factors, n)

    def _exact_error_sq(self, weights, factors) -> float:
        d = (self.s.full().data - kruskal_to_dense(KruskalTensor(weights, factors)).data).ravel()
        return float(d @ d)


def structured_als(s: StructuredKruskal, rank: int, init: KruskalTensor,
                   opts: AlsOptions | None = None,
                   callback=None) -> tuple[KruskalTensor, FitReport]:
    """Rank-``rank`` ALS fit to ``s``; errors are relative to ``||Y~||``."""
    opts = opts or AlsOptions()
    start = time.perf_counter()
    if init.rank != int(rank) or init.shape != s.shape:
        raise InvalidArgumentError(
            f"init has shape {init.shape} and rank {init.rank}, expected {s.shape} and {rank}"
        )
    return run_als(StructuredTarget(s), init.with_weights_absorbed(0), opts, callback, start=start)

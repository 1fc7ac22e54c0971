"""Synthetic Kruskal tensors with prescribed collinearity, matching and SAE metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .crib import DB_CAP, to_db
from .errors import DegenerateComponentError, InvalidArgumentError
from .tensor import DenseTensor, KruskalTensor, kruskal_to_dense

__all__ = [
    "SynthSpec",
    "SaeReport",
    "Matching",
    "DB_CAP",
    "generate",
    "collinear_factor",
    "match_components",
    "sae",
    "realized_snr",
]


@dataclass(frozen=True)
class SynthSpec:
    shape: tuple
    rank: int
    collinearity: tuple
    snr_db: float = float("inf")
    seed: int | None = None
    weights: tuple | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        c = tuple(float(x) for x in self.collinearity)
        R = int(self.rank)
        if R < 1:
            raise InvalidArgumentError("rank must be at least 1")
        if len(c) != len(shape):
            raise InvalidArgumentError(f"{len(c)} collinearity values for order {len(shape)}")
        if any(s < R for s in shape):
            raise InvalidArgumentError(f"rank {R} exceeds a mode size in {shape}")
        for n, x in enumerate(c):
            if not abs(x) < 1:
                raise InvalidArgumentError(f"collinearity of mode {n + 1} must satisfy |c| < 1")
            if R > 1 and x <= -1.0 / (R - 1):
                raise InvalidArgumentError(
                    f"c = {x} of mode {n + 1} is not attainable for rank {R} (needs c > {-1 / (R - 1):.4g})"
                )
        if self.weights is not None and len(self.weights) != R:
            raise InvalidArgumentError("one weight per component is required")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "collinearity", c)
        object.__setattr__(self, "rank", R)


def collinear_factor(size: int, rank: int, c: float, rng: np.random.Generator) -> np.ndarray:
    """``Q L^T`` with orthonormal ``Q`` and ``L L^T`` the equicorrelation matrix."""
    corr = np.full((rank, rank), float(c))
    np.fill_diagonal(corr, 1.0)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError(f"c = {c} gives an indefinite correlation matrix") from exc
    q, r = np.linalg.qr(rng.standard_normal((size, rank)))
    q = q * np.sign(np.diag(r))
    return q @ chol.T


def generate(spec: SynthSpec) -> tuple[DenseTensor, KruskalTensor]:
    """Noisy dense tensor and its ground truth.

    Gaussian noise is rescaled so the realized SNR equals ``spec.snr_db``
    exactly; an infinite SNR gives the noiseless tensor.
    """
    rng = np.random.default_rng(spec.seed)
    factors = [collinear_factor(i, spec.rank, c, rng) for i, c in zip(spec.shape, spec.collinearity)]
    weights = np.ones(spec.rank) if spec.weights is None else np.array(spec.weights, dtype=float)
    truth = KruskalTensor(weights, factors)
    clean = kruskal_to_dense(truth).data
    if math.isinf(spec.snr_db):
        return DenseTensor(clean), truth
    noise = rng.standard_normal(clean.shape)
    signal = np.linalg.norm(clean.ravel())
    noise *= signal / (np.linalg.norm(noise.ravel()) * 10 ** (spec.snr_db / 20))
    return DenseTensor(clean + noise), truth


def realized_snr(noisy, truth: KruskalTensor) -> float:
    clean = kruskal_to_dense(truth).data
    arr = noisy.data if isinstance(noisy, DenseTensor) else np.asarray(noisy)
    return 10 * math.log10(np.sum(clean ** 2) / np.sum((arr - clean) ** 2))


def _unit(f: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(f, axis=0)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise DegenerateComponentError(f"column {bad[0]} has zero norm", component=int(bad[0]))
    return f / norms


def _congruence(truth: KruskalTensor, est: KruskalTensor) -> np.ndarray:
    if truth.rank != est.rank:
        raise InvalidArgumentError(f"rank {truth.rank} vs {est.rank}")
    if truth.shape != est.shape:
        raise InvalidArgumentError(f"shape {truth.shape} vs {est.shape}")
    cong = np.ones((truth.rank, truth.rank))
    for a, b in zip(truth.factors, est.factors):
        cong = cong * np.abs(_unit(a).T @ _unit(b))
    return cong


@dataclass
class Matching:
    """``est`` component ``permutation[r]`` matches truth component ``r``."""

    permutation: np.ndarray
    signs: np.ndarray
    congruence: np.ndarray

    @property
    def cost(self) -> float:
        return float(np.sum(1 - self.congruence))


def match_components(truth: KruskalTensor, est: KruskalTensor) -> Matching:
    """Optimal assignment on ``1 - prod_n |cos|``, plus per-mode signs."""
    cong = _congruence(truth, est)
    rows, cols = linear_sum_assignment(1 - cong)
    perm = cols[np.argsort(rows)]
    signs = np.empty((truth.order, truth.rank))
    for n, (a, b) in enumerate(zip(truth.factors, est.factors)):
        dots = np.einsum("ir,ir->r", a, b[:, perm])
        signs[n] = np.where(dots < 0, -1.0, 1.0)
    return Matching(perm, signs, cong[np.arange(truth.rank), perm])


@dataclass
class SaeReport:
    alpha_sq: np.ndarray
    permutation: np.ndarray
    per_mode_mean_db: list = field(default_factory=list)
    per_mode_median_db: list = field(default_factory=list)

    @property
    def msae_db(self) -> float:
        """``-10 log10`` of the mean squared angular error over all columns."""
        return to_db(float(np.mean(self.alpha_sq)))

    @property
    def median_db(self) -> float:
        return to_db(float(np.median(self.alpha_sq)))

    def rows(self):
        for n in range(self.alpha_sq.shape[0]):
            for r in range(self.alpha_sq.shape[1]):
                yield n + 1, r + 1, float(self.alpha_sq[n, r]), to_db(self.alpha_sq[n, r])


def sae(truth: KruskalTensor, est: KruskalTensor) -> SaeReport:
    """Squared angular errors of every matched column (``N x R`` array)."""
    m = match_components(truth, est)
    out = np.empty((truth.order, truth.rank))
    for n, (a, b) in enumerate(zip(truth.factors, est.factors)):
        ua = _unit(a)
        ub = _unit(b[:, m.permutation])
        dots = np.einsum("ir,ir->r", ua, ub)
        perp = np.linalg.norm(ub - ua * dots, axis=0)
        out[n] = np.arctan2(perp, np.abs(dots)) ** 2
    return SaeReport(
        alpha_sq=out,
        permutation=m.permutation,
        per_mode_mean_db=[to_db(x) for x in out.mean(axis=1)],
        per_mode_median_db=[to_db(x) for x in np.median(out, axis=1)],
    )

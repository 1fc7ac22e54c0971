"""CP-ALS, Tucker compression by HOOI and best rank-one approximation."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla

from .errors import DegenerateComponentError, InvalidArgumentError
from .tensor import (
    KruskalTensor,
    TuckerTensor,
    as_array,
    hadamard_product,
    kruskal_norm_sq,
    kruskal_to_dense,
    matricize,
    mode_product,
    mttkrp,
    normalize,
)

__all__ = [
    "AlsOptions",
    "FitReport",
    "cp_als",
    "fast_relative_error",
    "tucker_hooi",
    "best_rank_one",
    "initial_factors",
    "relative_error",
]

STOPPING_RULES = ("relative_change", "squared_error_change")
INIT_KINDS = ("random", "svd", "gevd")


@dataclass(frozen=True)
class AlsOptions:
    """Options shared by the dense and structured ALS solvers.

    ``stopping`` selects the convergence test:

    ``"relative_change"``
        stop when ``|eps_old - eps| <= tol * eps`` with ``eps`` the relative
        error ``||Y - Yhat|| / ||Y||``.
    ``"squared_error_change"``
        the same test applied to the squared error ``||Y - Yhat||^2``.

    Independently of the rule, iterations stop once the relative error
    drops to ``error_floor`` (an exact fit cannot improve further).
    ``init`` is ``"random"``, ``"svd"``, ``"gevd"`` or a :class:`KruskalTensor`.
    """

    max_iters: int = 1000
    tol: float = 1e-8
    init: object = "random"
    seed: object = None
    stopping: str = "relative_change"
    error_floor: float = 1e-12

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise InvalidArgumentError("max_iters must be at least 1")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.stopping not in STOPPING_RULES:
            raise InvalidArgumentError(f"unknown stopping rule {self.stopping!r}")
        if not isinstance(self.init, KruskalTensor) and self.init not in INIT_KINDS:
            raise InvalidArgumentError(f"unknown init {self.init!r}")

    def replace(self, **changes) -> "AlsOptions":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class FitReport:
    relative_error: float
    iterations: int
    seconds: float
    converged: bool = False
    degenerate: bool = False
    history: list = field(default_factory=list)
    times: list = field(default_factory=list)

    @property
    def fit_percent(self) -> float:
        return 100.0 * (1.0 - self.relative_error)

    def time_to_reach(self, error: float) -> float | None:
        """Seconds until the relative error first dropped to ``error``."""
        for e, s in zip(self.history, self.times):
            if e <= error:
                return s
        return None

    def as_dict(self) -> dict:
        return {
            "relative_error": self.relative_error,
            "fit_percent": self.fit_percent,
            "iterations": self.iterations,
            "seconds": self.seconds,
            "converged": self.converged,
            "degenerate": self.degenerate,
        }


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def relative_error(t, k: KruskalTensor) -> float:
    """``||Y - dense(k)|| / ||Y||`` computed densely."""
    arr = as_array(t)
    diff = arr - kruskal_to_dense(k).data
    return float(np.linalg.norm(diff.ravel()) / np.linalg.norm(arr.ravel()))


def fast_relative_error(t, k: KruskalTensor) -> float:
    """Same as :func:`relative_error` but through one MTTKRP and Gram matrices.

    Falls back to the dense residual when cancellation would lose accuracy.
    """
    arr = np.ascontiguousarray(as_array(t))
    flat = arr.reshape(-1)
    y2 = float(flat @ flat)
    if y2 == 0:
        return relative_error(arr, k)
    last = arr.ndim - 1
    m = mttkrp(arr, k.factors, last)
    inner = float(np.sum((m * k.factors[last]) @ k.weights))
    e2 = y2 - 2 * inner + kruskal_norm_sq(k)
    if e2 < 1e-8 * y2:
        return relative_error(arr, k)
    return math.sqrt(e2 / y2)


def _leading_left_vectors(arr: np.ndarray, n: int, r: int) -> np.ndarray:
    """Leading ``r`` left singular vectors of the mode-n matricization.

    Large unfoldings use a randomized range finder with one power step
    (fixed seed, so results are reproducible).
    """
    size = arr.shape[n]
    rest = arr.size // size
    others = [k for k in range(arr.ndim) if k != n]
    width = r + 10
    if width < min(size, rest) and size * rest > 200_000:
        # column order of the matricization does not matter for left vectors
        mat = np.moveaxis(arr, n, 0).reshape(size, rest)
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(mat @ rng.standard_normal((rest, width)))
        q, _ = np.linalg.qr(mat @ (mat.T @ q))
        _, _, vt = np.linalg.svd(mat.T @ q, full_matrices=False)
        return q @ vt[:r].T
    if size * size > arr.size:
        u, _, _ = np.linalg.svd(matricize(arr, n), full_matrices=False)
        return u[:, :r]
    gram = np.tensordot(arr, arr, axes=(others, others))
    _, v = np.linalg.eigh(gram)
    return v[:, ::-1][:, :r]


def _gevd_factors(arr: np.ndarray, rank: int) -> list[np.ndarray] | None:
    """Direct start from a generalized eigenproblem on two compressed slices.

    Modes ``2..N-1`` are merged into one; needs ``rank <= I_0, I_1``.  The
    first factor comes from the eigenvectors, the others from rank-one fits
    of the slices of ``arr x_0 pinv(A)``.  Returns None when not applicable.
    """
    I, J = arr.shape[:2]
    rest = arr.size // (I * J)
    if arr.ndim < 3 or rank > min(I, J) or rest < 2:
        return None
    m = arr.reshape(I, J, rest, order="F")
    u1 = _leading_left_vectors(m, 0, rank)
    u2 = _leading_left_vectors(m, 1, rank)
    w = _leading_left_vectors(m, 2, 2)
    core = np.einsum("ijk,ia,jb,kc->abc", m, u1, u2, w, optimize=True)
    try:
        _, x = sla.eig(core[:, :, 0], core[:, :, 1])
    except (np.linalg.LinAlgError, ValueError):
        return None
    a = u1 @ np.real(core[:, :, 1] @ x)
    norms = np.linalg.norm(a, axis=0)
    if not np.all(np.isfinite(a)) or norms.min() <= 1e-12 * norms.max():
        return None
    a /= norms
    slices = np.tensordot(np.linalg.pinv(a), arr, axes=(1, 0))
    others = [np.empty((size, rank)) for size in arr.shape[1:]]
    for r in range(rank):
        try:
            _, vecs = best_rank_one(slices[r])
        except DegenerateComponentError:
            return None
        for f, v in zip(others, vecs):
            f[:, r] = v
    return [a] + others


def initial_factors(t, rank: int, init, seed=None) -> list[np.ndarray]:
    """Starting factors for ALS; weights of a given Kruskal init go into mode 0.

    ``"gevd"`` falls back to ``"svd"`` where the direct start does not apply.
    """
    arr = as_array(t)
    if init == "gevd":
        direct = _gevd_factors(arr, rank)
        if direct is not None:
            return direct
        init = "svd"
    if isinstance(init, KruskalTensor):
        if init.shape != arr.shape or init.rank != rank:
            raise InvalidArgumentError(
                f"init has shape {init.shape} and rank {init.rank}, "
                f"expected {arr.shape} and {rank}"
            )
        return init.with_weights_absorbed(0)
    rng = _rng(seed)
    factors = []
    for n, size in enumerate(arr.shape):
        if init == "svd":
            lead = _leading_left_vectors(arr, n, min(rank, size))
            if lead.shape[1] < rank:
                extra = rng.standard_normal((size, rank - lead.shape[1]))
                lead = np.hstack([lead, extra / np.linalg.norm(extra, axis=0)])
            factors.append(lead)
        else:
            a = rng.standard_normal((size, rank))
            factors.append(a / np.linalg.norm(a, axis=0))
    return factors


class DenseTarget:
    """ALS target backed by a dense array."""

    def __init__(self, t):
        self.data = np.ascontiguousarray(as_array(t))
        self.shape = self.data.shape
        self.norm_sq = float(np.dot(self.data.ravel(), self.data.ravel()))

    def mttkrp(self, factors, n):
        return mttkrp(self.data, factors, n)

    def exact_error_sq(self, weights, factors) -> float:
        model = kruskal_to_dense(KruskalTensor(weights, factors)).data
        d = (self.data - model).ravel()
        return float(d @ d)


def _solve_gram(rhs: np.ndarray, gram: np.ndarray) -> tuple[np.ndarray, bool]:
    """``rhs @ inv(gram)``; falls back to a pseudo-inverse on failure."""
    try:
        c = sla.cho_factor(gram, check_finite=False)
        d = np.diag(c[0])
        if d.min() > 1e-7 * d.max():
            return sla.cho_solve(c, rhs.T, check_finite=False).T, False
    except np.linalg.LinAlgError:
        pass
    return rhs @ np.linalg.pinv(gram, rcond=1e-12, hermitian=True), True


def run_als(target, factors: Sequence[np.ndarray], opts: AlsOptions,
            callback: Callable | None = None,
            start: float | None = None) -> tuple[KruskalTensor, FitReport]:
    """Alternating least squares on any target exposing ``mttkrp``.

    ``target`` provides ``shape``, ``norm_sq``, ``mttkrp(factors, n)`` and
    optionally ``exact_error_sq(weights, factors)`` used when the cheap
    Gram-based error estimate loses precision near an exact fit.  Reported
    times count from ``start`` (a ``perf_counter`` value, default now).
    """
    if start is None:
        start = time.perf_counter()
    factors = [np.array(f, dtype=float) for f in factors]
    N = len(factors)
    rank = factors[0].shape[1]
    weights = np.ones(rank)
    grams = [f.T @ f for f in factors]
    norm_sq = target.norm_sq
    if norm_sq <= 0:
        raise DegenerateComponentError("cannot fit a zero tensor")
    exact = getattr(target, "exact_error_sq", None)
    history, times = [], []
    degenerate = converged = False
    err_old = None
    it = 0
    for it in range(1, int(opts.max_iters) + 1):
        for n in range(N):
            v = target.mttkrp(factors, n)
            gamma = hadamard_product(grams, skip=n) if N > 1 else np.ones((rank, rank))
            a, bad = _solve_gram(v, gamma)
            degenerate |= bad
            norms = np.linalg.norm(a, axis=0)
            zero = norms == 0
            if zero.any():
                degenerate = True
                norms[zero] = 1.0
            factors[n] = a / norms
            weights = norms
            grams[n] = factors[n].T @ factors[n]
        # cheap error from the last mttkrp: <Y, Yhat> and ||Yhat||^2 from Grams
        inner = float(weights @ np.einsum("ir,ir->r", v, factors[-1]))
        model_sq = float(weights @ (gamma * grams[-1]) @ weights)
        err_sq = max(norm_sq - 2 * inner + model_sq, 0.0)
        if exact is not None and err_sq < 1e-10 * norm_sq:
            err_sq = exact(weights, factors)
        err = float(np.sqrt(err_sq / norm_sq))
        history.append(err)
        times.append(time.perf_counter() - start)
        if callback is not None:
            callback(it, err, weights, factors)
        if err <= opts.error_floor:
            converged = True
            break
        if err_old is not None:
            if opts.stopping == "relative_change":
                change, scale = abs(err_old - err), err
            else:
                change, scale = abs(err_old ** 2 - err ** 2), err ** 2
            if change <= opts.tol * scale:
                converged = True
                break
        err_old = err
    result = KruskalTensor(weights, factors)
    try:
        result = normalize(result)
    except DegenerateComponentError:
        degenerate = True
    report = FitReport(
        relative_error=history[-1],
        iterations=it,
        seconds=time.perf_counter() - start,
        converged=converged,
        degenerate=degenerate,
        history=history,
        times=times,
    )
    return result, report


def cp_als(t, rank: int, opts: AlsOptions | None = None,
           callback: Callable | None = None) -> tuple[KruskalTensor, FitReport]:
    """Rank-``rank`` CPD of a dense tensor by alternating least squares."""
    opts = opts or AlsOptions()
    arr = as_array(t)
    if int(rank) < 1:
        raise InvalidArgumentError("rank must be at least 1")
    if arr.ndim < 2:
        raise InvalidArgumentError("cp_als needs a tensor of order 2 or more")
    start = time.perf_counter()
    factors = initial_factors(arr, int(rank), opts.init, opts.seed)
    return run_als(DenseTarget(arr), factors, opts, callback, start=start)


def tucker_hooi(t, ranks: Sequence[int], sweeps: int = 2) -> TuckerTensor:
    """Sequentially truncated HOSVD followed by ``sweeps`` HOOI sweeps."""
    arr = as_array(t)
    ranks = [int(r) for r in ranks]
    if len(ranks) != arr.ndim:
        raise InvalidArgumentError(f"{len(ranks)} ranks for an order-{arr.ndim} tensor")
    for n, (r, size) in enumerate(zip(ranks, arr.shape)):
        if not 1 <= r <= size:
            raise InvalidArgumentError(f"rank {r} for mode {n} of size {size}")
    # truncate the modes with the largest reduction first
    order = sorted(range(arr.ndim), key=lambda n: ranks[n] / arr.shape[n])
    factors = [None] * arr.ndim
    core = arr
    for n in order:
        factors[n] = _leading_left_vectors(core, n, ranks[n])
        core = mode_product(core, factors[n].T, n)
    for _ in range(int(sweeps)):
        for n in range(arr.ndim):
            proj = arr
            for k in order:
                if k != n:
                    proj = mode_product(proj, factors[k].T, k)
            u, _, _ = np.linalg.svd(matricize(proj, n), full_matrices=False)
            factors[n] = u[:, :ranks[n]]
    if sweeps:
        core = arr
        for n in order:
            core = mode_product(core, factors[n].T, n)
    return TuckerTensor(core, factors)


def best_rank_one(t, max_iters: int = 200, tol: float = 1e-13) -> tuple[float, list[np.ndarray]]:
    """Best rank-one approximation ``g * u_1 o ... o u_N`` with ``g > 0``.

    Matrices use the leading singular pair; higher orders use HOOI with all
    ranks one, started from the leading left singular vectors.
    """
    arr = as_array(t)
    total = float(np.linalg.norm(arr.ravel()))
    if total == 0 or not np.isfinite(total):
        raise DegenerateComponentError("best rank-one approximation of a zero tensor")
    if arr.ndim == 1:
        return total, [arr / total]
    if arr.ndim == 2:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
        return float(s[0]), [u[:, 0].copy(), vt[0].copy()]
    vecs = [_leading_left_vectors(arr, n, 1)[:, 0] for n in range(arr.ndim)]
    g_old = 0.0
    g = 0.0
    for _ in range(int(max_iters)):
        for n in range(arr.ndim):
            v = arr
            for k in reversed(range(arr.ndim)):
                if k != n:
                    v = np.tensordot(v, vecs[k], axes=(k, 0))
            nv = np.linalg.norm(v)
            if nv == 0:
                raise DegenerateComponentError("rank-one iteration collapsed to zero")
            vecs[n] = v / nv
            g = float(nv)
        if abs(g - g_old) <= tol * g:
            break
        g_old = g
    # sign so that g * outer(vecs) approximates t with g > 0
    proj = arr
    for k in reversed(range(arr.ndim)):
        proj = np.tensordot(proj, vecs[k], axes=(k, 0))
    g = float(proj)
    if g < 0:
        vecs[0] = -vecs[0]
        g = -g
    return g, vecs

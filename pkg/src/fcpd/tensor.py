"""Dense and Kruskal tensors, generalized unfolding and the multilinear kernels.

All linearizations are first-mode-fastest (column-major): the linear index of
element ``(i_1, ..., i_N)`` is ``i_1 + I_1 i_2 + I_1 I_2 i_3 + ...``.  The same
order is used by :func:`khatri_rao`, so that merging modes of a Kruskal tensor
is a Khatri-Rao product of the merged factors.

Arrays are held C-contiguous in memory; only the *semantics* of ``vec`` and
``reshape`` are column-major.  Mode numbers are 0-based in the API and
1-based in rule strings and file formats.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateComponentError, InvalidArgumentError

__all__ = [
    "DenseTensor",
    "KruskalTensor",
    "TuckerTensor",
    "UnfoldingRule",
    "as_array",
    "reshape",
    "transpose",
    "unfold",
    "matricize",
    "khatri_rao",
    "kruskal_to_dense",
    "kruskal_unfold",
    "mttkrp",
    "normalize",
    "hadamard_gram",
    "hadamard_product",
    "kruskal_norm_sq",
    "kruskal_inner",
]


class DenseTensor:
    """An order-N array of reals.

    Parameters
    ----------
    data : array_like
        Values indexed as ``data[i_1, ..., i_N]``.  A private, read-only copy
        is kept.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=float, order="C", copy=True)
        if arr.ndim == 0:
            raise InvalidArgumentError("a tensor needs at least one mode")
        if any(s < 1 for s in arr.shape):
            raise InvalidArgumentError(f"mode sizes must be positive, got {arr.shape}")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_vec(cls, values, shape: Sequence[int]) -> "DenseTensor":
        """Build from column-major linear data."""
        values = np.asarray(values, dtype=float).ravel()
        shape = tuple(int(s) for s in shape)
        if values.size != int(np.prod(shape)):
            raise InvalidArgumentError(
                f"{values.size} values cannot fill shape {shape}"
            )
        return cls(values.reshape(shape, order="F"))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def order(self) -> int:
        return self._data.ndim

    def vec(self) -> np.ndarray:
        """Column-major vectorization."""
        return self._data.ravel(order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self._data.ravel()))

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    __hash__ = None


def as_array(t) -> np.ndarray:
    """Return the ndarray behind a DenseTensor (or the input as an array)."""
    if isinstance(t, DenseTensor):
        return t.data
    return np.asarray(t, dtype=float)


@dataclass(frozen=True, eq=False)
class KruskalTensor:
    """Weights plus factor matrices, ``sum_r w_r a_r^(1) o ... o a_r^(N)``.

    The unit-norm / sorted-weight invariants hold only after :func:`normalize`;
    solvers return normalized tensors.
    """

    weights: np.ndarray
    factors: tuple

    def __post_init__(self):
        factors = tuple(np.array(f, dtype=float, ndmin=2) for f in self.factors)
        if not factors:
            raise InvalidArgumentError("a Kruskal tensor needs at least one factor")
        rank = factors[0].shape[1]
        for n, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != rank:
                raise InvalidArgumentError(
                    f"factor {n} has shape {f.shape}, expected (I_{n}, {rank})"
                )
        weights = np.array(self.weights, dtype=float).ravel()
        if weights.size != rank:
            raise InvalidArgumentError(f"{weights.size} weights for rank {rank}")
        for a in (weights, *factors):
            a.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def from_factors(cls, factors) -> "KruskalTensor":
        factors = list(factors)
        return cls(np.ones(np.shape(factors[0])[1]), factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def full(self) -> DenseTensor:
        return kruskal_to_dense(self)

    def norm(self) -> float:
        return float(np.sqrt(max(kruskal_norm_sq(self), 0.0)))

    def with_weights_absorbed(self, mode: int = -1) -> list[np.ndarray]:
        """Factor list with the weights multiplied into one mode."""
        out = [np.array(f) for f in self.factors]
        out[mode] = out[mode] * self.weights
        return out

    def __repr__(self):
        return f"KruskalTensor(shape={self.shape}, rank={self.rank})"


@dataclass(frozen=True, eq=False)
class TuckerTensor:
    """Core tensor with one orthonormal factor per mode."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.array(as_array(self.core), dtype=float)
        factors = tuple(np.array(f, dtype=float) for f in self.factors)
        if core.ndim != len(factors):
            raise InvalidArgumentError("core order and factor count differ")
        for n, u in enumerate(factors):
            if u.shape[1] != core.shape[n]:
                raise InvalidArgumentError(f"factor {n} does not match core size")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    def full(self) -> DenseTensor:
        out = self.core
        for n, u in enumerate(self.factors):
            out = mode_product(out, u, n)
        return DenseTensor(out)


_GROUP_RE = re.compile(r"\(([^()]*)\)|([^,()]+)")


@dataclass(frozen=True)
class UnfoldingRule:
    """Ordered partition of the modes ``0..N-1`` into M groups.

    Within a group the first listed mode varies fastest in the merged index.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(k) for k in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise InvalidArgumentError("every group of an unfolding rule must be nonempty")
        flat = [k for g in groups for k in g]
        if sorted(flat) != list(range(len(flat))):
            raise InvalidArgumentError(
                f"rule {groups} is not a partition of modes 0..{len(flat) - 1}"
            )
        object.__setattr__(self, "groups", groups)

    @classmethod
    def parse(cls, text: str) -> "UnfoldingRule":
        """Parse a 1-based rule string such as ``"1,(2,3),(4,5)"``."""
        compact = re.sub(r"\s+", "", text)
        if compact.startswith("[") and compact.endswith("]"):
            compact = compact[1:-1]
        groups = []
        pos = 0
        while pos < len(compact):
            m = _GROUP_RE.match(compact, pos)
            if m is None:
                raise InvalidArgumentError(f"cannot parse unfolding rule {text!r}")
            body = m.group(1) if m.group(1) is not None else m.group(2)
            try:
                groups.append(tuple(int(tok) - 1 for tok in body.split(",") if tok))
            except ValueError as exc:
                raise InvalidArgumentError(f"cannot parse unfolding rule {text!r}") from exc
            pos = m.end()
            if pos < len(compact):
                if compact[pos] != ",":
                    raise InvalidArgumentError(f"cannot parse unfolding rule {text!r}")
                pos += 1
        if any(k < 0 for g in groups for k in g):
            raise InvalidArgumentError("mode numbers in rule strings start at 1")
        return cls(tuple(groups))

    @classmethod
    def identity(cls, order: int) -> "UnfoldingRule":
        return cls(tuple((n,) for n in range(order)))

    @classmethod
    def mode_n(cls, n: int, order: int) -> "UnfoldingRule":
        """Rule ``[n, (others)]`` giving the classical mode-n matricization."""
        return cls(((n,), tuple(k for k in range(order) if k != n)))

    @property
    def order(self) -> int:
        """Order N of the tensors the rule applies to."""
        return sum(len(g) for g in self.groups)

    @property
    def unfolded_order(self) -> int:
        return len(self.groups)

    @property
    def permutation(self) -> tuple[int, ...]:
        return tuple(k for g in self.groups for k in g)

    def unfolded_shape(self, shape: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(np.prod([shape[k] for k in g])) for g in self.groups)

    def check_order(self, order: int) -> None:
        if self.order != order:
            raise InvalidArgumentError(
                f"rule {self} covers {self.order} modes, tensor has {order}"
            )

    def __str__(self):
        parts = []
        for g in self.groups:
            if len(g) == 1:
                parts.append(str(g[0] + 1))
            else:
                parts.append("(" + ",".join(str(k + 1) for k in g) + ")")
        return ",".join(parts)


def _check_positive_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise InvalidArgumentError(f"invalid shape {shape}")
    return shape


def reshape(t, new_shape: Sequence[int]) -> DenseTensor:
    """Reshape keeping the column-major vectorization unchanged."""
    arr = as_array(t)
    new_shape = _check_positive_shape(new_shape)
    if int(np.prod(new_shape)) != arr.size:
        raise InvalidArgumentError(
            f"cannot reshape {arr.shape} ({arr.size} entries) to {new_shape}"
        )
    return DenseTensor(np.reshape(arr, new_shape, order="F"))


def _check_permutation(p, order: int) -> tuple[int, ...]:
    p = tuple(int(k) for k in p)
    if sorted(p) != list(range(order)):
        raise InvalidArgumentError(f"{p} is not a permutation of 0..{order - 1}")
    return p


def transpose(t, p: Sequence[int]) -> DenseTensor:
    """Tensor transposition: ``result[i_{p_1}, ..., i_{p_N}] = t[i_1, ..., i_N]``."""
    arr = as_array(t)
    return DenseTensor(np.transpose(arr, _check_permutation(p, arr.ndim)))


def unfold(t, rule: UnfoldingRule) -> DenseTensor:
    """Generalized unfolding: reshape of the transpose by the concatenated groups."""
    arr = as_array(t)
    rule.check_order(arr.ndim)
    permuted = np.transpose(arr, rule.permutation)
    return DenseTensor(np.reshape(permuted, rule.unfolded_shape(arr.shape), order="F"))


def matricize(t, n: int) -> np.ndarray:
    """Mode-n matricization ``Y_(n)`` (remaining modes first-fastest)."""
    arr = as_array(t)
    return np.reshape(np.moveaxis(arr, n, 0), (arr.shape[n], -1), order="F")


def khatri_rao(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product ``U_K (x) ... (x) U_1`` of ``[U_1, ..., U_K]``.

    The row index of the first matrix varies fastest.
    """
    mats = [np.asarray(m, dtype=float) for m in matrices]
    if not mats:
        raise InvalidArgumentError("khatri_rao needs at least one matrix")
    rank = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != rank for m in mats):
        raise InvalidArgumentError("all Khatri-Rao operands need the same column count")
    out = mats[0]
    for m in mats[1:]:
        out = (m[:, None, :] * out[None, :, :]).reshape(-1, rank)
    return out


def kruskal_to_dense(k: KruskalTensor) -> DenseTensor:
    """Expand a Kruskal tensor into a dense one."""
    first = k.factors[0] * k.weights
    if k.order == 1:
        return DenseTensor(first.sum(axis=1))
    rest = khatri_rao(k.factors[1:])
    mat = first @ rest.T
    return DenseTensor(np.reshape(mat, k.shape, order="F"))


def kruskal_unfold(k: KruskalTensor, rule: UnfoldingRule) -> KruskalTensor:
    """Unfold a Kruskal tensor: each group merges into the Khatri-Rao of its factors."""
    rule.check_order(k.order)
    merged = [khatri_rao([k.factors[n] for n in g]) for g in rule.groups]
    return KruskalTensor(k.weights, merged)


def _check_factors_for(arr: np.ndarray, factors) -> int:
    if len(factors) != arr.ndim:
        raise InvalidArgumentError(
            f"{len(factors)} factors for an order-{arr.ndim} tensor"
        )
    rank = np.shape(factors[0])[1]
    for n, f in enumerate(factors):
        if np.ndim(f) != 2 or np.shape(f)[0] != arr.shape[n] or np.shape(f)[1] != rank:
            raise InvalidArgumentError(
                f"factor {n} has shape {np.shape(f)}, tensor mode has size {arr.shape[n]}"
            )
    return rank


def mttkrp(t, factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product, ``Y_(n) (KR of the other factors)``.

    The contraction is split into the modes before and after ``n`` so the
    tensor is never permuted in memory.
    """
    arr = as_array(t)
    rank = _check_factors_for(arr, factors)
    N = arr.ndim
    if not 0 <= n < N:
        raise InvalidArgumentError(f"mode {n} out of range for order {N}")
    left = [np.asarray(f, dtype=float) for f in factors[:n]]
    right = [np.asarray(f, dtype=float) for f in factors[n + 1:]]
    size_l = int(np.prod(arr.shape[:n])) if n else 1
    size_r = int(np.prod(arr.shape[n + 1:])) if n < N - 1 else 1
    y3 = np.ascontiguousarray(arr).reshape(size_l, arr.shape[n], size_r)
    # memory is C-ordered, so the last mode of each side varies fastest
    kl = khatri_rao(left[::-1]) if left else np.ones((1, rank))
    kr = khatri_rao(right[::-1]) if right else np.ones((1, rank))
    if size_r >= size_l:
        tmp = (y3.reshape(size_l * arr.shape[n], size_r) @ kr).reshape(size_l, arr.shape[n], rank)
        return np.einsum("lir,lr->ir", tmp, kl)
    tmp = (kl.T @ y3.reshape(size_l, arr.shape[n] * size_r)).reshape(rank, arr.shape[n], size_r)
    return np.einsum("rim,mr->ir", tmp, kr)


def hadamard_gram(factors: Iterable[np.ndarray], skip: int | None = None) -> np.ndarray:
    """Hadamard product of the factor Grams ``A^(k)T A^(k)`` over ``k != skip``."""
    out = None
    for k, f in enumerate(factors):
        if k == skip:
            continue
        g = f.T @ f
        out = g if out is None else out * g
    return out


def hadamard_product(mats: Iterable[np.ndarray], skip: int | None = None) -> np.ndarray:
    """Elementwise product of ``mats`` leaving out index ``skip``."""
    out = None
    for k, m in enumerate(mats):
        if k == skip:
            continue
        out = np.array(m) if out is None else out * m
    return out


def kruskal_norm_sq(k: KruskalTensor) -> float:
    """Squared Frobenius norm via the Gram identity."""
    g = hadamard_gram(k.factors)
    return float(k.weights @ g @ k.weights)


def kruskal_inner(a: KruskalTensor, b: KruskalTensor) -> float:
    """Inner product of two Kruskal tensors of equal shape."""
    g = None
    for fa, fb in zip(a.factors, b.factors):
        p = fa.T @ fb
        g = p if g is None else g * p
    return float(a.weights @ g @ b.weights)


def normalize(k: KruskalTensor) -> KruskalTensor:
    """Unit-norm columns, positive weights sorted in descending order.

    Column norms go into the weights; a negative weight is made positive by
    flipping the sign of the component's first-factor column.  Ties keep
    their original order.
    """
    weights = np.array(k.weights, dtype=float)
    factors = [np.array(f) for f in k.factors]
    for n, f in enumerate(factors):
        norms = np.linalg.norm(f, axis=0)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise DegenerateComponentError(
                f"component {zero[0]} has a zero column in mode {n}",
                mode=n,
                component=int(zero[0]),
            )
        factors[n] = f / norms
        weights *= norms
    neg = weights < 0
    if neg.any():
        factors[0][:, neg] *= -1
        weights[neg] *= -1
    if (weights == 0).any():
        r = int(np.flatnonzero(weights == 0)[0])
        raise DegenerateComponentError(f"component {r} has zero weight", component=r)
    order = np.argsort(-weights, kind="stable")
    return KruskalTensor(weights[order], [f[:, order] for f in factors])


def mode_product(arr: np.ndarray, matrix: np.ndarray, n: int) -> np.ndarray:
    """Multiply mode ``n`` of ``arr`` by ``matrix`` (``matrix @ Y_(n)``)."""
    out = np.tensordot(matrix, arr, axes=(1, n))
    return np.moveaxis(out, 0, n)


def multi_mode_product(arr: np.ndarray, matrices, skip: int | None = None,
                       transpose: bool = False) -> np.ndarray:
    """Apply ``mode_product`` for every mode except ``skip``.

    Modes are processed in the order that shrinks the tensor fastest.
    """
    mats = [m.T if transpose else m for m in matrices]
    modes = [n for n in range(arr.ndim) if n != skip]
    modes.sort(key=lambda n: mats[n].shape[0] / mats[n].shape[1])
    out = arr
    for n in modes:
        out = mode_product(out, mats[n], n)
    return out


def product(values) -> int:
    return int(reduce(lambda a, b: a * b, values, 1))

"""Cramér-Rao induced bounds (CRIB) on the squared angular error of a_1^(1).

Closed forms cover rank-2 tensors of any order and several rank-R special
cases.  :func:`crib_numeric` evaluates the bound for every component of an
arbitrary Kruskal tensor from its Fisher information matrix and is used as the
reference in Monte-Carlo comparisons.  :func:`advise_unfolding` implements the
greedy merge strategy driven by per-mode collinearity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, SingularConfigurationError
from .tensor import KruskalTensor, UnfoldingRule

__all__ = [
    "CollinearityProfile",
    "CribReport",
    "to_db",
    "crib_rank2_general",
    "crib_rank2_unfolded",
    "crib4_full",
    "crib4_unfold_34",
    "crib4_unfold_23",
    "crib4_orthomode_rankR",
    "crib5_full",
    "crib5_unfold_345",
    "crib5_unfold_23_45",
    "crib6_family",
    "CRIB6_RULES",
    "crib_ortho_two_modes",
    "crib_numeric",
    "noise_variance",
    "advise_unfolding",
    "estimate_collinearity",
]

DB_CAP = 300.0


def to_db(value) -> float:
    """``-10 log10(value)``, capped at 300 dB for zero."""
    value = float(value)
    if value <= 0:
        return DB_CAP
    return min(-10.0 * math.log10(value), DB_CAP) + 0.0  # no negative zero


@dataclass(frozen=True)
class CollinearityProfile:
    """Per-mode collinearity degrees plus the scalars the bounds need.

    ``theta`` is the noise-to-signal ratio ``sigma^2 / lambda_1^2`` and
    ``I1`` the size of the first mode.
    """

    c: tuple
    theta: float = 1.0
    I1: int = 2
    R: int = 2

    def __post_init__(self):
        c = tuple(float(x) for x in self.c)
        if any(abs(x) > 1 for x in c):
            raise InvalidArgumentError("collinearity degrees must lie in [-1, 1]")
        if not self.theta > 0:
            raise InvalidArgumentError("theta must be positive")
        if int(self.I1) < 2 or int(self.R) < 2:
            raise InvalidArgumentError("I1 and R must be at least 2")
        object.__setattr__(self, "c", c)

    @property
    def order(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class CribReport:
    value: float
    rule: str | None = None
    baseline: float | None = None
    label: str = ""

    @property
    def db(self) -> float:
        return to_db(self.value)

    @property
    def loss_db(self) -> float | None:
        """``-10 log10(baseline / value)``; positive when this bound is worse."""
        if self.baseline is None:
            return None
        return -10.0 * math.log10(self.baseline / self.value) + 0.0

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "rule": self.rule,
            "bound": self.value,
            "bound_db": self.db,
            "loss_db": self.loss_db,
        }


def _args(profile, theta, I1):
    if isinstance(profile, CollinearityProfile):
        return np.array(profile.c), profile.theta, profile.I1
    return np.asarray(profile, dtype=float).ravel(), float(theta), int(I1)


def _check_h(h: float) -> None:
    if abs(h) >= 1:
        raise SingularConfigurationError(f"|h| = {abs(h):g} makes the bound singular")


def _rank2_value(c: np.ndarray, theta: float, I1: int) -> float:
    N = c.size
    if N < 2:
        raise InvalidArgumentError("a rank-2 bound needs at least two modes")
    c1 = c[0]
    rest = c[1:]
    h1 = float(np.prod(rest))
    _check_h(h1)
    hn = np.array([np.prod(np.delete(rest, j)) for j in range(N - 1)])
    if c1 == 0:
        # h1^2 z with z's 1/c_n^2 cancelled, finite when some c_n = 0
        big_z = float(np.sum(hn ** 2 * (1 - rest ** 2)))
        y = 0.0
        cross = 0.0
    else:
        d = rest ** 2 - hn ** 2 * c1 ** 2
        bad = np.flatnonzero(d == 0)
        if bad.size:
            raise SingularConfigurationError(
                f"denominator c_n^2 - h_n^2 c_1^2 vanishes for mode {bad[0] + 2}",
                mode=int(bad[0]) + 1,
            )
        z = float(np.sum((1 - rest ** 2) / d))
        y = float(-c1 * np.sum(hn ** 2 * (1 - rest ** 2) / d))
        big_z = h1 ** 2 * z
        cross = c1 * h1 * z
    num = (h1 * y) ** 2 + big_z - big_z * (big_z + h1 ** 2)
    den = (1 - c1 * y - big_z - h1 ** 2) ** 2 - (h1 * y + cross) ** 2
    corr = 0.0 if num == 0 else (1 - c1 ** 2) / (1 - h1 ** 2) * num / den
    return theta * ((I1 - 1) / (1 - h1 ** 2) + corr)


def crib_rank2_general(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Bound on ``a_1^(1)`` for a rank-2 tensor of any order.

    ``c_n`` is the inner product of the two unit columns of mode n; with
    ``h_n = prod_{k>=2, k!=n} c_k`` and ``h_1 = prod_{k>=2} c_k``.
    """
    c, theta, I1 = _args(profile, theta, I1)
    return CribReport(_rank2_value(c, theta, I1), label="full")


def crib_rank2_unfolded(profile, rule: UnfoldingRule, theta: float = 1.0,
                        I1: int = 2) -> CribReport:
    """Rank-2 bound after unfolding: merged modes multiply their ``c``.

    The first group must be the singleton mode 0 so ``a_1^(1)`` survives.
    """
    c, theta, I1 = _args(profile, theta, I1)
    rule.check_order(c.size)
    if rule.groups[0] != (0,):
        if (0,) not in rule.groups:
            raise InvalidArgumentError("mode 1 must stay a singleton group")
    groups = sorted(rule.groups, key=lambda g: g != (0,))
    merged = np.array([np.prod(c[list(g)]) for g in groups])
    base = _rank2_value(c, theta, I1)
    return CribReport(_rank2_limit(merged, theta, I1), rule=str(rule), baseline=base,
                      label=str(rule))


def _singular_modes(c: np.ndarray) -> np.ndarray:
    c1, rest = c[0], c[1:]
    if c1 == 0:
        return np.array([], dtype=int)
    hn = np.array([np.prod(np.delete(rest, j)) for j in range(rest.size)])
    d = rest ** 2 - hn ** 2 * c1 ** 2
    return np.flatnonzero(np.abs(d) <= 1e-6 * np.maximum(rest ** 2, 1e-300))


def _rank2_exact(c: list, I1: int) -> Fraction:
    """The rank-2 bound for ``theta = 1`` in exact rational arithmetic."""
    c1, rest = c[0], c[1:]
    h1 = _prod(rest)
    hn = [_prod(rest[:j] + rest[j + 1:]) for j in range(len(rest))]
    d = [x * x - h * h * c1 * c1 for x, h in zip(rest, hn)]
    z = sum((1 - x * x) / e for x, e in zip(rest, d))
    y = -c1 * sum(h * h * (1 - x * x) / e for x, h, e in zip(rest, hn, d))
    big_z = h1 * h1 * z
    num = (h1 * y) ** 2 + big_z - big_z * (big_z + h1 * h1)
    den = (1 - c1 * y - big_z - h1 * h1) ** 2 - (h1 * y + c1 * h1 * z) ** 2
    return (I1 - 1) / (1 - h1 * h1) + (1 - c1 * c1) / (1 - h1 * h1) * num / den


def _prod(xs) -> Fraction:
    out = Fraction(1)
    for x in xs:
        out *= x
    return out


def _rank2_limit(c: np.ndarray, theta: float, I1: int) -> float:
    """Rank-2 bound, taking the limit where a y/z denominator vanishes.

    Merged coefficients such as ``(c, c, c, c^3)`` make ``c_n^2 - h_n^2
    c_1^2`` zero although the bound itself is finite.  The even part of
    symmetric perturbations of that ``c_n`` is evaluated exactly in
    rationals and extrapolated to zero step, so no cancellation occurs.
    """
    bad = _singular_modes(c)
    if bad.size == 0:
        return _rank2_value(c, theta, I1)
    n = int(bad[0]) + 1
    exact = [Fraction(float(x)) for x in c]
    h = Fraction(1, 10 ** 9) * max(abs(exact[n]), Fraction(1, 1000))

    def sym(step):
        lo, hi = list(exact), list(exact)
        lo[n] -= step
        hi[n] += step
        return (_rank2_exact(lo, I1) + _rank2_exact(hi, I1)) / 2

    s1, s2 = sym(h), sym(h / 2)
    return theta * float((4 * s2 - s1) / 3)


def _order(c: np.ndarray, n: int) -> None:
    if c.size != n:
        raise InvalidArgumentError(f"expected {n} collinearity degrees, got {c.size}")
    if c[0] != 0:
        raise InvalidArgumentError("these closed forms assume c_1 = 0; use crib_rank2_general")


def crib4_full(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-4 rank-2 bound in the ``c_1 = 0`` regime."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 4)
    _, c2, c3, c4 = c
    h = c2 * c3 * c4
    _check_h(h)
    s = c2 ** 2 * c3 ** 2 + c2 ** 2 * c4 ** 2 + c3 ** 2 * c4 ** 2
    val = theta / (1 - h ** 2) * (I1 - 1 + (s - 3 * h ** 2) / (1 + 2 * h ** 2 - s))
    return CribReport(val, label="full")


def crib4_unfold_34(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-4 bound through the rule ``1,2,(3,4)``."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 4)
    _, c2, c3, c4 = c
    h = c2 * c3 * c4
    _check_h(h)
    _check_h(c2)
    _check_h(c3 * c4)
    val = theta / (1 - h ** 2) * (I1 - 3 + 1 / (1 - c2 ** 2) + 1 / (1 - c3 ** 2 * c4 ** 2))
    return CribReport(val, rule="1,2,(3,4)", baseline=crib4_full(c, theta, I1).value,
                      label="1,2,(3,4)")


def crib4_unfold_23(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-4 bound through the rule ``1,(2,3),4``."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 4)
    _, c2, c3, c4 = c
    h = c2 * c3 * c4
    _check_h(h)
    _check_h(c4)
    _check_h(c2 * c3)
    val = theta / (1 - h ** 2) * (I1 - 3 + 1 / (1 - c2 ** 2 * c3 ** 2) + 1 / (1 - c4 ** 2))
    return CribReport(val, rule="1,(2,3),4", baseline=crib4_full(c, theta, I1).value,
                      label="1,(2,3),4")


def crib4_orthomode_rankR(c2: float, c4: float, theta: float = 1.0, I1: int = 2,
                          R: int = 2) -> tuple[CribReport, CribReport, CribReport]:
    """Rank-R order-4 bounds when ``c_1 = c_3 = 0``.

    Returns the bounds through ``1,2,(3,4)`` and ``1,(2,3),4`` and the
    full-tensor bound.
    """
    if int(R) < 2:
        raise InvalidArgumentError("R must be at least 2")
    for v in (c2, c4):
        _check_h(v)

    def form(x):
        return theta * (I1 - R + (R - 1) / (1 - x ** 2))

    full = form(c2 * c4)
    return (
        CribReport(form(c2), rule="1,2,(3,4)", baseline=full, label="1,2,(3,4)"),
        CribReport(form(c4), rule="1,(2,3),4", baseline=full, label="1,(2,3),4"),
        CribReport(full, label="full"),
    )


def crib5_full(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-5 rank-2 bound in the ``c_1 = 0`` regime."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 5)
    sq = c[1:] ** 2
    h = float(np.prod(c[1:]))
    _check_h(h)
    zeta = sum(float(np.prod(np.delete(sq, j))) for j in range(4))
    val = theta / (1 - h ** 2) * (I1 - 1 + (zeta - 4 * h ** 2) / (1 + 3 * h ** 2 - zeta))
    return CribReport(val, label="full")


def _crib5_unfolded(c, theta, I1, p, q, rule):
    h = float(np.prod(c[1:]))
    _check_h(h)
    _check_h(p)
    _check_h(q)
    val = theta / (1 - h ** 2) * (I1 - 3 + 1 / (1 - p ** 2) + 1 / (1 - q ** 2))
    return CribReport(val, rule=rule, baseline=crib5_full(c, theta, I1).value, label=rule)


def crib5_unfold_345(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-5 bound through ``1,2,(3,4,5)``."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 5)
    return _crib5_unfolded(c, theta, I1, c[1], c[2] * c[3] * c[4], "1,2,(3,4,5)")


def crib5_unfold_23_45(profile, theta: float = 1.0, I1: int = 2) -> CribReport:
    """Order-5 bound through ``1,(2,3),(4,5)``."""
    c, theta, I1 = _args(profile, theta, I1)
    _order(c, 5)
    return _crib5_unfolded(c, theta, I1, c[1] * c[2], c[3] * c[4], "1,(2,3),(4,5)")


CRIB6_RULES = (
    ("full", None),
    ("l1", "1,2,3,4,(5,6)"),
    ("l2", "1,2,3,(4,5,6)"),
    ("l3", "1,2,(3,4,5,6)"),
    ("l4", "1,(2,3),(4,5,6)"),
    ("l5", "1,2,(3,4),(5,6)"),
)


def crib6_family(c: float, theta: float = 1.0, I1: int = 2) -> list[CribReport]:
    """Order-6 rank-2 bounds with a common ``c_n = c``.

    Returned in the order full, l1..l5 of :data:`CRIB6_RULES`; each unfolded
    report carries the full-tensor bound as its loss baseline.
    """
    c = float(c)
    _check_h(c)
    c2, c4, c6, c8 = c ** 2, c ** 4, c ** 6, c ** 8
    base = (I1 - 1) / (1 - c ** 10)
    d = (1 - c ** 10) * (1 - c8)
    terms = [
        5 * c8 * (4 * c6 + 3 * c4 + 2 * c2 + 1)
        / (d * (1 + 3 * c2 + c4) * (1 + c2 + 6 * c4 + c6 + c8)),
        c6 * (6 * c8 + 11 * c6 + 7 * c4 + 5 * c2 + 1)
        / (d * (1 + c2) * (1 + 2 * c2 + 6 * c4 + 2 * c6 + c8)),
        c4 * (4 * c6 + 3 * c4 + 2 * c2 + 1) / (d * (1 + 3 * c2 + c4)),
        c2 * (2 * c6 + c4 + c2 + 1) / d,
        c4 * (1 + c4) * (2 * c4 + 2 * c2 + 1) / (d * (1 + c2 + c4)),
        c6 * (2 * c6 + 2 * c4 + 2 * c2 + 1) * (c6 + 4 * c4 + 3 * c2 + 2)
        / (d * (1 + c2 + c4) * (c8 + 3 * c6 + 6 * c4 + 3 * c2 + 1)),
    ]
    values = [theta * (base + t) for t in terms]
    full = values[0]
    return [
        CribReport(v, rule=rule, baseline=None if rule is None else full, label=name)
        for (name, rule), v in zip(CRIB6_RULES, values)
    ]


def crib_ortho_two_modes(gamma: Sequence[float], theta: float = 1.0, I1: int = 2,
                         R: int | None = None) -> CribReport:
    """Rank-R bound when modes 1 and 2 have orthogonal columns.

    ``gamma`` lists ``gamma_r = prod_{n>=3} a_1^(n)T a_r^(n)`` for r = 2..R.
    """
    g = np.asarray(gamma, dtype=float).ravel()
    R = g.size + 1 if R is None else int(R)
    if g.size != R - 1:
        raise InvalidArgumentError(f"need {R - 1} gamma values for rank {R}")
    bad = np.flatnonzero(np.abs(g) >= 1)
    if bad.size:
        raise SingularConfigurationError(f"|gamma_{bad[0] + 2}| = 1 makes the bound singular")
    return CribReport(theta * (I1 - R + float(np.sum(1 / (1 - g ** 2)))), label="full")


def noise_variance(k: KruskalTensor, snr_db: float) -> float:
    """Per-entry Gaussian variance giving ``snr_db`` for the tensor ``k``."""
    energy = k.norm() ** 2
    return energy / (10 ** (snr_db / 10) * float(np.prod(k.shape)))


def crib_numeric(k: KruskalTensor, sigma2: float) -> np.ndarray:
    """Bounds on the squared angular error of every column of every factor.

    Returns an ``N x R`` array for i.i.d. Gaussian noise of variance
    ``sigma2``.  Scale indeterminacy is removed by fixing the norm of each
    column in all modes but the last.  Each factor is expressed in an
    orthonormal basis of its column span; directions outside the span add
    ``sigma2 (Gamma_n^-1)_rr`` each.
    """
    factors = k.with_weights_absorbed(-1)
    N = len(factors)
    R = factors[0].shape[1]
    sizes = [f.shape[0] for f in factors]
    grams = [f.T @ f for f in factors]
    coords = []
    for f in factors:
        _, r = np.linalg.qr(f)
        coords.append(r)
    dims = [c.shape[0] for c in coords]
    offs = np.concatenate([[0], np.cumsum([d * R for d in dims])])
    P = int(offs[-1])
    fim = np.zeros((P, P))
    for n in range(N):
        for m in range(n, N):
            rest = [grams[j] for j in range(N) if j != n and j != m]
            g = np.prod(rest, axis=0) if rest else np.ones((R, R))
            if n == m:
                blk = np.einsum("rs,ab->rasb", g, np.eye(dims[n]))
            else:
                # d<Y, a_r^(n)> / d a_s^(m) couples through a_s^(n) a_r^(m)T
                blk = np.einsum("rs,as,br->rasb", g, coords[n], coords[m])
            blk = blk.reshape(R * dims[n], R * dims[m])
            fim[offs[n]:offs[n + 1], offs[m]:offs[m + 1]] = blk
            if n != m:
                fim[offs[m]:offs[m + 1], offs[n]:offs[n + 1]] = blk.T
    # tangent bases: orthogonal complement of each column except in the last mode
    bases = []
    for n in range(N):
        for r in range(R):
            if n < N - 1:
                col = coords[n][:, r]
                q, _ = np.linalg.qr(np.column_stack([col, np.eye(dims[n])]))
                bases.append(q[:, 1:dims[n]])
            else:
                bases.append(np.eye(dims[n]))
    from scipy.linalg import block_diag

    T = block_diag(*bases)
    reduced = T.T @ fim @ T
    try:
        cov = np.linalg.inv(reduced) * sigma2
    except np.linalg.LinAlgError as exc:
        raise SingularConfigurationError("Fisher information matrix is singular") from exc
    out = np.zeros((N, R))
    pos = 0
    idx = 0
    for n in range(N):
        gamma = np.prod([grams[j] for j in range(N) if j != n], axis=0) if N > 1 else np.ones((R, R))
        ginv = np.linalg.pinv(gamma)
        for r in range(R):
            t = bases[idx]
            d = t.shape[1]
            blk = cov[pos:pos + d, pos:pos + d]
            nrm2 = grams[n][r, r]
            if n < N - 1:
                val = np.trace(blk)
            else:
                col = coords[n][:, r]
                proj = np.eye(dims[n]) - np.outer(col, col) / nrm2
                val = np.trace(proj @ t @ blk @ t.T)
            val += (sizes[n] - dims[n]) * sigma2 * ginv[r, r]
            out[n, r] = val / nrm2
            pos += d
            idx += 1
    return out


def _group_label(g: tuple) -> int:
    return max(g)


def advise_unfolding(profile, target_order: int = 3, ortho_threshold: float = 0.15,
                     tie_tol: float = 1e-9) -> UnfoldingRule:
    """Greedy merge of the most collinear groups until ``target_order`` remain.

    A group's coefficient is the product of its members' ``c``.  At each step
    the group with the largest ``|c|`` is merged with the best allowed partner.
    Two groups made only of nearly orthogonal modes (``|c_n| <
    ortho_threshold``) are not merged together unless nothing else is left.
    Coefficients within ``tie_tol`` count as equal and the group holding the
    highest mode number wins, so equal coefficients pair up from the last
    modes backwards.
    """
    c = np.array(profile.c if isinstance(profile, CollinearityProfile) else profile, dtype=float)
    N = c.size
    M = int(target_order)
    if not 1 <= M < N:
        raise InvalidArgumentError(f"target order {M} must lie in 1..{N - 1}")
    ortho = np.abs(c) < ortho_threshold
    groups = [(n,) for n in range(N)]

    def coef(g):
        return abs(float(np.prod(c[list(g)])))

    def near_orth(g):
        return bool(all(ortho[list(g)]))

    def best(cands):
        top = max(coef(g) for g in cands)
        tied = [g for g in cands if coef(g) >= top - tie_tol]
        return max(tied, key=_group_label)

    while len(groups) > M:
        first = best(groups)
        others = [g for g in groups if g != first]
        allowed = [g for g in others if not (near_orth(first) and near_orth(g))]
        if not allowed:
            allowed = others
        partner = best(allowed)
        merged = tuple(sorted(first + partner))
        groups = [g for g in groups if g not in (first, partner)] + [merged]
    groups.sort(key=min)
    return UnfoldingRule(tuple(groups))


def estimate_collinearity(k: KruskalTensor, theta: float = 1.0) -> CollinearityProfile:
    """Average absolute inner product between distinct unit columns, per mode."""
    R = k.rank
    if R < 2:
        raise InvalidArgumentError("collinearity is undefined for rank 1")
    cs = []
    for f in k.factors:
        u = f / np.linalg.norm(f, axis=0)
        g = np.abs(u.T @ u)
        cs.append(float((g.sum() - np.trace(g)) / (R * (R - 1))))
    cs = [min(x, 1.0) for x in cs]
    return CollinearityProfile(tuple(cs), theta=theta, I1=max(k.shape[0], 2), R=R)

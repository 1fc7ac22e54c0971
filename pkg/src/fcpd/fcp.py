"""Fast CPD through a low-order unfolding.

Both pipelines unfold the data by a rule, optionally compress the unfolded
tensor with a Tucker model, fit a CPD to it, and then recover the factors of
every merged group.  :func:`fcp_rank_one` takes the best rank-one
approximation of each refolded merged column; :func:`fcp_low_rank` peels
modes off one at a time with truncated SVDs and polishes each split with a
structured ALS run.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .als import AlsOptions, FitReport, best_rank_one, cp_als, fast_relative_error, tucker_hooi
from .errors import (
    DegenerateComponentError,
    InvalidArgumentError,
    InvalidStateError,
    NumericError,
)
from .structured import StructuredKruskal, structured_als
from .tensor import (
    KruskalTensor,
    UnfoldingRule,
    as_array,
    kruskal_to_dense,
    normalize,
    unfold,
)

__all__ = [
    "FcpOptions",
    "FcpTrace",
    "SplitRun",
    "ErrorOrdering",
    "fcp",
    "fcp_rank_one",
    "fcp_low_rank",
    "error_ordering_check",
]

MODES = ("low_rank", "rank_one")


@dataclass(frozen=True)
class FcpOptions:
    """Options for both FCP variants.

    ``rank_overshoot`` (``R+ >= R``) fits the unfolded and structured models
    with extra components; the ``R`` strongest are kept before refinement.
    ``j_max`` caps every block rank ``J_r``.  The unfolded CPD also tries a
    direct GEVD start and ``restarts`` seeded random starts, keeping the
    lowest error: on a compressed core whose size equals the rank the SVD
    start is uninformative and ALS can stall in a swamp.
    """

    rule: UnfoldingRule
    tau: float = 0.99
    mode: str = "low_rank"
    refine: bool = False
    compress: bool = True
    unfolded_als: AlsOptions = field(default_factory=lambda: AlsOptions(init="svd"))
    structured_als: AlsOptions = field(default_factory=AlsOptions)
    refine_als: AlsOptions = field(default_factory=AlsOptions)
    j_max: int = 10
    rank_overshoot: int | None = None
    hooi_sweeps: int = 2
    restarts: int = 0
    keep_artifacts: bool = False

    def __post_init__(self):
        if isinstance(self.rule, str):
            object.__setattr__(self, "rule", UnfoldingRule.parse(self.rule))
        if not 0 < self.tau <= 1:
            raise InvalidArgumentError("tau must lie in (0, 1]")
        if self.tau < 0.98:
            warnings.warn(f"tau = {self.tau} is below the recommended 0.98", stacklevel=3)
        if self.mode not in MODES:
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")
        if int(self.j_max) < 1:
            raise InvalidArgumentError("j_max must be at least 1")
        if int(self.restarts) < 0:
            raise InvalidArgumentError("restarts must be non-negative")

    def replace(self, **changes) -> "FcpOptions":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class SplitRun:
    """One low-rank split of a working mode into ``head`` and ``tail``.

    ``modes`` lists the working modes (tuples of original modes) in the
    order used for the structured tensor: the split pair comes last.
    """

    group: int
    step: int
    modes: list
    block_ranks: list
    seconds: float
    structured: bool
    report: FitReport | None = None
    # kept only with keep_artifacts
    before: KruskalTensor | None = None
    before_modes: list | None = None
    y_j: StructuredKruskal | None = None
    y_r: KruskalTensor | None = None


@dataclass
class FcpTrace:
    stage_seconds: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    unfolded_report: FitReport | None = None
    fit: FitReport | None = None
    refine_report: FitReport | None = None
    rule: str = ""
    unfolded: KruskalTensor | None = None

    @property
    def block_ranks(self) -> list:
        return [run.block_ranks for run in self.runs]

    def as_dict(self) -> dict:
        return {
            "rule": self.rule,
            "stage_seconds": dict(self.stage_seconds),
            "runs": [
                {
                    "group": run.group + 1,
                    "step": run.step + 1,
                    "block_ranks": list(run.block_ranks),
                    "structured": run.structured,
                    "seconds": run.seconds,
                    "iterations": None if run.report is None else run.report.iterations,
                }
                for run in self.runs
            ],
            "unfolded": None if self.unfolded_report is None else self.unfolded_report.as_dict(),
            "refine": None if self.refine_report is None else self.refine_report.as_dict(),
            "fit": None if self.fit is None else self.fit.as_dict(),
        }


def _block_rank(s: np.ndarray, tau: float, cap: int) -> int:
    energy = np.cumsum(s ** 2)
    if energy[-1] <= 0:
        return 1
    j = int(np.searchsorted(energy, tau * energy[-1] - 1e-12 * energy[-1]) + 1)
    return max(1, min(j, cap, s.size))


def _rule_of(modes) -> UnfoldingRule:
    return UnfoldingRule(tuple(tuple(m) for m in modes))


def _stages_1_2(arr: np.ndarray, R: int, opts: FcpOptions, trace: FcpTrace):
    rule = opts.rule
    rule.check_order(arr.ndim)
    t0 = time.perf_counter()
    y = np.ascontiguousarray(
        np.reshape(np.transpose(arr, rule.permutation), rule.unfolded_shape(arr.shape), order="F")
    )
    sizes = y.shape
    ranks = [min(s, R) for s in sizes]
    tucker = None
    if opts.compress and any(r < s for r, s in zip(ranks, sizes)):
        tucker = tucker_hooi(y, ranks, sweeps=opts.hooi_sweeps)
        target = tucker.core
    else:
        target = y
    t1 = time.perf_counter()
    trace.stage_seconds["compression"] = t1 - t0
    if target.ndim < 2:
        raise InvalidArgumentError("the unfolding must leave at least two modes")
    k, report = _best_of(target, R, opts)
    if tucker is not None:
        k = KruskalTensor(k.weights, [u @ b for u, b in zip(tucker.factors, k.factors)])
    report.relative_error = fast_relative_error(y, k)
    trace.stage_seconds["unfolded_cpd"] = time.perf_counter() - t1
    trace.unfolded_report = report
    return k


def _best_of(target, R, opts):
    base = opts.unfolded_als
    k, report = cp_als(target, R, base)
    extra = [base.replace(init="gevd")] if base.init != "gevd" else []
    extra += [base.replace(init="random", seed=i) for i in range(int(opts.restarts))]
    for o in extra:
        k2, rep2 = cp_als(target, R, o)
        if rep2.relative_error < report.relative_error:
            k, report = k2, rep2
    return k, report


def _finish(arr, kt: KruskalTensor, R: int, opts: FcpOptions, trace: FcpTrace, start: float):
    kt = normalize(kt)
    if kt.rank > R:
        kt = KruskalTensor(kt.weights[:R], [f[:, :R] for f in kt.factors])
    t0 = time.perf_counter()
    if opts.refine:
        kt, rep = cp_als(arr, R, opts.refine_als.replace(init=kt))
        trace.refine_report = rep
    trace.stage_seconds["refinement"] = time.perf_counter() - t0
    err = fast_relative_error(arr, kt)
    trace.fit = FitReport(
        relative_error=err,
        iterations=trace.refine_report.iterations if trace.refine_report else 0,
        seconds=time.perf_counter() - start,
        converged=True,
    )
    return kt


def _prepare(t, R, opts):
    arr = as_array(t)
    R = int(R)
    if R < 1:
        raise InvalidArgumentError("rank must be at least 1")
    opts.rule.check_order(arr.ndim)
    Rp = R if opts.rank_overshoot is None else int(opts.rank_overshoot)
    if Rp < R:
        raise InvalidArgumentError("rank_overshoot must be at least the rank")
    return arr, R, Rp


def fcp_rank_one(t, R: int, opts: FcpOptions) -> tuple[KruskalTensor, FcpTrace]:
    """FCP with rank-one refolding of every merged component."""
    start = time.perf_counter()
    arr, R, Rp = _prepare(t, R, opts)
    trace = FcpTrace(rule=str(opts.rule))
    k = _stages_1_2(arr, Rp, opts, trace)
    if opts.keep_artifacts:
        trace.unfolded = k
    t0 = time.perf_counter()
    weights = np.array(k.weights)
    factors = [None] * arr.ndim
    for m, group in enumerate(opts.rule.groups):
        b = k.factors[m]
        if len(group) == 1:
            factors[group[0]] = b
            continue
        shape = [arr.shape[n] for n in group]
        cols = [np.empty((s, Rp)) for s in shape]
        for r in range(Rp):
            try:
                g, vecs = best_rank_one(b[:, r].reshape(shape, order="F"))
            except DegenerateComponentError as exc:
                raise DegenerateComponentError(
                    f"merged component {r + 1} of group {m + 1} is zero", mode=m, component=r
                ) from exc
            weights[r] *= g
            for c, v in zip(cols, vecs):
                c[:, r] = v
        for n, c in zip(group, cols):
            factors[n] = c
    trace.stage_seconds["reconstruction"] = time.perf_counter() - t0
    kt = _finish(arr, KruskalTensor(weights, factors), R, opts, trace, start)
    return kt, trace


def _split(weights, factors, w, shape_of, tau, cap, ctx):
    """Truncated SVD of every refolded column of working factor ``w``."""
    head_size, tail_size = shape_of
    us, vs, ss = [], [], []
    for r in range(weights.size):
        f = factors[w][:, r].reshape((head_size, tail_size), order="F")
        if not np.any(f):
            raise DegenerateComponentError(
                f"component {r + 1} is zero in {ctx}", component=r
            )
        try:
            u, s, vt = np.linalg.svd(f, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"SVD failed for component {r + 1} in {ctx}") from exc
        j = _block_rank(s, tau, min(cap, head_size, tail_size))
        us.append(u[:, :j])
        vs.append(vt[:j].T)
        ss.append(s[:j])
    return us, vs, ss


def fcp_low_rank(t, R: int, opts: FcpOptions) -> tuple[KruskalTensor, FcpTrace]:
    """FCP with sequential low-rank splitting and structured ALS."""
    start = time.perf_counter()
    arr, R, Rp = _prepare(t, R, opts)
    trace = FcpTrace(rule=str(opts.rule))
    k = _stages_1_2(arr, Rp, opts, trace)
    if opts.keep_artifacts:
        trace.unfolded = k
    t0 = time.perf_counter()
    modes = [tuple(g) for g in opts.rule.groups]
    weights = np.array(k.weights)
    factors = [np.array(f) for f in k.factors]
    groups = opts.rule.groups
    for m in reversed(range(len(groups))):
        group = groups[m]
        for step in range(len(group) - 1):
            run_start = time.perf_counter()
            w = modes.index(tuple(group[step:]))
            head, tail = (group[step],), tuple(group[step + 1:])
            head_size = arr.shape[head[0]]
            tail_size = int(np.prod([arr.shape[n] for n in tail]))
            ctx = f"group {m + 1}, step {step + 1}"
            us, vs, ss = _split(weights, factors, w, (head_size, tail_size), opts.tau, opts.j_max, ctx)
            others = [i for i in range(len(modes)) if i != w]
            new_modes = [modes[i] for i in others] + [head, tail]
            before = KruskalTensor(weights, factors) if opts.keep_artifacts else None
            before_modes = list(modes)
            s = StructuredKruskal(weights, [factors[i] for i in others], us, vs, ss)
            y_r = s.leading()
            blocks = list(s.block_sizes)
            report = None
            if sum(blocks) > Rp:
                result, report = structured_als(s, Rp, y_r, opts.structured_als)
            else:
                result = y_r
            weights = np.array(result.weights)
            factors = [np.array(f) for f in result.factors]
            modes = new_modes
            run = SplitRun(
                group=m,
                step=step,
                modes=list(new_modes),
                block_ranks=blocks,
                seconds=time.perf_counter() - run_start,
                structured=report is not None,
                report=report,
            )
            if opts.keep_artifacts:
                run.before, run.before_modes, run.y_j, run.y_r = before, before_modes, s, y_r
            trace.runs.append(run)
    trace.stage_seconds["reconstruction"] = time.perf_counter() - t0
    order = sorted(range(len(modes)), key=lambda i: modes[i][0])
    if [modes[i] for i in order] != [(n,) for n in range(arr.ndim)]:
        raise InvalidStateError(f"reconstruction ended with modes {modes}")
    kt = _finish(arr, KruskalTensor(weights, [factors[i] for i in order]), R, opts, trace, start)
    return kt, trace


def fcp(t, R: int, opts: FcpOptions) -> tuple[KruskalTensor, FcpTrace]:
    """Dispatch on ``opts.mode``."""
    if opts.mode == "rank_one":
        return fcp_rank_one(t, R, opts)
    return fcp_low_rank(t, R, opts)


@dataclass(frozen=True)
class ErrorOrdering:
    """Squared residuals of the split input, ``Y~_J`` and ``Y~_R``."""

    e_sq: float
    j_sq: float
    r_sq: float
    slack: float = 1e-9

    @property
    def holds(self) -> bool:
        tol = self.slack * max(self.r_sq, self.j_sq, self.e_sq)
        return self.e_sq <= self.j_sq + tol and self.j_sq <= self.r_sq + tol


def _residual_sq(arr: np.ndarray, modes, k: KruskalTensor) -> float:
    y = unfold(arr, _rule_of(modes)).data
    d = (y - kruskal_to_dense(k).data).ravel()
    return float(d @ d)


def error_ordering_check(t, trace: FcpTrace, run: int = 0, slack: float = 1e-9,
                         strict: bool = False) -> ErrorOrdering:
    """Residuals ``(||E||^2, ||Y - Y~_J||^2, ||Y - Y~_R||^2)`` of one split.

    ``E`` is the residual of the model entering the split (the unfolded CPD
    for the first run).  With ``strict`` a violated ordering raises
    :class:`NumericError`.
    """
    if not trace.runs:
        raise InvalidStateError("the trace has no low-rank split runs")
    sr = trace.runs[run]
    if sr.y_j is None or sr.before is None:
        raise InvalidStateError("run artifacts were not kept; use keep_artifacts=True")
    arr = as_array(t)
    out = ErrorOrdering(
        e_sq=_residual_sq(arr, sr.before_modes, sr.before),
        j_sq=_residual_sq(arr, sr.modes, sr.y_j.to_kruskal()),
        r_sq=_residual_sq(arr, sr.modes, sr.y_r),
        slack=slack,
    )
    if strict and not out.holds:
        raise NumericError(
            f"error ordering violated: {out.e_sq:.6g}, {out.j_sq:.6g}, {out.r_sq:.6g}"
        )
    return out

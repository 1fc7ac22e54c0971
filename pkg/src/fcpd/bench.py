"""Monte-Carlo benchmarks over synthetic collinear tensors.

A benchmark runs every (case, rule, algorithm) combination on ``reps``
seeded tensors and records per-column squared angular errors plus an
aggregate table that sets the mean MSAE next to the numeric CRIB.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .als import AlsOptions, cp_als
from .crib import advise_unfolding, crib_numeric, noise_variance, to_db
from .errors import InvalidArgumentError
from .fcp import FcpOptions, fcp
from .synth import SynthSpec, generate, sae

__all__ = [
    "ALGORITHMS",
    "BenchCase",
    "BenchConfig",
    "BenchResult",
    "PRESETS",
    "preset",
    "run_bench",
    "run_one",
]

ALGORITHMS = ("als", "r1fcp", "fcp")
SAE_SCHEMA = "sae.v1"
SUMMARY_SCHEMA = "summary.v1"
SAE_FIELDS = ["schema", "case", "rule", "alg", "run", "seed", "mode", "component", "alpha_sq", "sae_db"]
SUMMARY_FIELDS = [
    "schema", "case", "rule", "alg", "runs", "msae_db", "median_db", "crib_db", "loss_db",
    "fit", "seconds",
]


@dataclass(frozen=True)
class BenchCase:
    """One collinearity profile and the rules to try on it.

    The rule name ``"advised"`` is replaced by :func:`advise_unfolding`'s
    choice for ``target_order``.
    """

    label: str
    collinearity: tuple
    rules: tuple = ("advised",)
    target_order: int = 3

    def resolved_rules(self) -> list[str]:
        out = []
        for rule in self.rules:
            if rule == "advised":
                rule = str(advise_unfolding(self.collinearity, self.target_order))
            if rule not in out:
                out.append(rule)
        return out


@dataclass(frozen=True)
class BenchConfig:
    name: str
    shape: tuple
    rank: int
    snr_db: float
    cases: tuple
    algorithms: tuple = ("fcp", "r1fcp")
    reps: int = 10
    seed: int = 0
    tau: float = 0.99
    refine: bool = False

    def __post_init__(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise InvalidArgumentError(f"unknown algorithm {bad[0]!r}")
        if int(self.reps) < 1:
            raise InvalidArgumentError("reps must be at least 1")

    def replace(self, **changes) -> "BenchConfig":
        return replace(self, **changes)


_E3 = (0.1, 0.7, 0.7, 0.7, 0.8)

PRESETS = {
    "example3": BenchConfig(
        name="example3",
        shape=(10,) * 5,
        rank=10,
        snr_db=10.0,
        cases=(BenchCase("c=" + ",".join(map(str, _E3)), _E3,
                         ("1,(2,3),(4,5)", "(1,4,5),2,3", "1,2,(3,4,5)")),),
        reps=30,
    ),
    "example7-small": BenchConfig(
        name="example7-small",
        shape=(8,) * 6,
        rank=8,
        snr_db=0.0,
        cases=(
            BenchCase("row1", (0.1,) + (0.9,) * 5, ("advised", "2,3,(1,4,5,6)")),
            BenchCase("row2", (0.1,) * 2 + (0.9,) * 4, ("advised", "3,4,(1,2,5,6)")),
            BenchCase("row3", (0.1,) * 3 + (0.9,) * 3, ("advised", "4,5,(1,2,3,6)")),
            BenchCase("row4", (0.1,) * 4 + (0.9,) * 2, ("advised", "1,(2,3),(4,5,6)")),
            BenchCase("row5", (0.1,) * 5 + (0.9,), ("advised", "(1,2),(3,4),(5,6)")),
        ),
        reps=10,
    ),
}


def preset(name: str) -> BenchConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"
        ) from None


@dataclass
class BenchResult:
    config: BenchConfig
    runs: list = field(default_factory=list)

    def sae_rows(self):
        for run in self.runs:
            for mode, comp, a2, db in run["sae"]:
                yield {
                    "schema": SAE_SCHEMA,
                    "case": run["case"],
                    "rule": run["rule"],
                    "alg": run["alg"],
                    "run": run["run"],
                    "seed": run["seed"],
                    "mode": mode,
                    "component": comp,
                    "alpha_sq": repr(a2),
                    "sae_db": repr(db),
                }

    def summary(self) -> list[dict]:
        groups: dict = {}
        cribs: dict = {}
        for run in self.runs:
            groups.setdefault((run["case"], run["rule"], run["alg"]), []).append(run)
            cribs.setdefault(run["case"], {})[run["seed"]] = run["crib_mean"]
        out = []
        for (case, rule, alg), runs in groups.items():
            msae = float(np.mean([r["msae_db"] for r in runs]))
            crib = to_db(float(np.mean(list(cribs[case].values()))))
            out.append({
                "schema": SUMMARY_SCHEMA,
                "case": case,
                "rule": rule,
                "alg": alg,
                "runs": len(runs),
                "msae_db": msae,
                "median_db": float(np.median([r["msae_db"] for r in runs])),
                "crib_db": crib,
                "loss_db": crib - msae,
                "fit": float(np.mean([r["fit"] for r in runs])),
                "seconds": float(np.mean([r["seconds"] for r in runs])),
            })
        return out

    def sae_csv(self) -> str:
        return _csv(SAE_FIELDS, self.sae_rows())

    def summary_csv(self) -> str:
        return _csv(SUMMARY_FIELDS, self.summary())

    def table(self) -> str:
        rows = self.summary()
        cw = max([4] + [len(r["case"]) for r in rows])
        rw = max([4] + [len(r["rule"]) for r in rows])
        lines = [f"{'case':<{cw}} {'rule':<{rw}} {'alg':<6} {'runs':>4} {'MSAE':>8} {'CRIB':>8} "
                 f"{'loss':>7} {'fit%':>7} {'sec':>7}"]
        for row in rows:
            lines.append(
                f"{row['case']:<{cw}} {row['rule']:<{rw}} {row['alg']:<6} {row['runs']:>4} "
                f"{row['msae_db']:>8.2f} {row['crib_db']:>8.2f} {row['loss_db']:>7.2f} "
                f"{row['fit']:>7.2f} {row['seconds']:>7.3f}"
            )
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "preset": self.config.name,
            "summary": self.summary(),
            "runs": [{k: v for k, v in run.items() if k != "sae"} for run in self.runs],
        }


def _csv(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _decompose(alg, y, rank, rule, cfg):
    if alg == "als":
        k, rep = cp_als(y, rank, AlsOptions(init="svd"))
        return k, rep.fit_percent
    mode = "rank_one" if alg == "r1fcp" else "low_rank"
    k, trace = fcp(y, rank, FcpOptions(rule=rule, mode=mode, tau=cfg.tau, refine=cfg.refine))
    return k, trace.fit.fit_percent


def run_one(cfg: BenchConfig, case_index: int, rep: int) -> list[dict]:
    """All rules and algorithms of one case on one seeded tensor."""
    case = cfg.cases[case_index]
    seed = cfg.seed + rep
    y, truth = generate(SynthSpec(cfg.shape, cfg.rank, case.collinearity, cfg.snr_db, seed=seed))
    crib_mean = float(np.mean(crib_numeric(truth, noise_variance(truth, cfg.snr_db))))
    out = []
    for rule in case.resolved_rules():
        for alg in cfg.algorithms:
            if alg == "als" and rule != case.resolved_rules()[0]:
                continue  # ALS ignores the rule
            t0 = time.perf_counter()
            k, fit = _decompose(alg, y, cfg.rank, rule, cfg)
            seconds = time.perf_counter() - t0
            report = sae(truth, k)
            out.append({
                "case": case.label,
                "rule": "-" if alg == "als" else rule,
                "alg": alg,
                "run": rep,
                "seed": seed,
                "msae_db": report.msae_db,
                "fit": fit,
                "seconds": seconds,
                "crib_mean": crib_mean,
                "sae": list(report.rows()),
            })
    return out


def _run_task(args):
    return run_one(*args)


def run_bench(cfg: BenchConfig, threads: int = 1, progress=None) -> BenchResult:
    """Run every case for ``cfg.reps`` seeds; results are ordered by case and run."""
    tasks = [(cfg, c, r) for c in range(len(cfg.cases)) for r in range(int(cfg.reps))]
    result = BenchResult(cfg)
    if int(threads) > 1:
        with ProcessPoolExecutor(max_workers=int(threads)) as pool:
            chunks = pool.map(_run_task, tasks)
            for task, chunk in zip(tasks, chunks):
                result.runs.extend(chunk)
                if progress:
                    progress(task)
    else:
        for task in tasks:
            result.runs.extend(_run_task(task))
            if progress:
                progress(task)
    return result

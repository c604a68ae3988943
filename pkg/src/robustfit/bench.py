"""Benchmark harness: solver dispatch, trace files, performance profiles and
escape experiments."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .additive import addfilter_solve
from .asker import AskerConfig, asker_solve
from .bal import SynthConfig, load_bal, make_reprojection_problem, synth_ba
from .baselines import GncSchedule, gnc_solve, irls_solve, mhq_solve
from .errors import InvalidArgument
from .kernels import RobustKernel
from .lm import LMConfig, SolverTrace
from .mean1d import MeanFamily, RobustMean1D, brute_force_1d
from .problem import Problem
from .regemm import RegemmConfig, regemm_solve

METHODS = ("irls", "gnc", "mhq", "asker", "regemm", "addfilter")
BASE_COLUMNS = ("iter", "seconds", "psi", "aux", "h", "inlier_rate", "step_kind", "accepted")


@dataclass
class RunSpec:
    method: str
    input: str | None = None
    synthetic: str | None = None
    tau: float = 1.0
    max_iter: int = 50
    eta: float = 0.5
    mu_f: float = 0.9
    alpha: float = 0.01
    init_scale: float = 5.0
    gnc_levels: int = 5
    seed: int = 0
    inlier_threshold: float = 1.0
    out: str | None = None

    def validate(self) -> "RunSpec":
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if (self.input is None) == (self.synthetic is None):
            raise InvalidArgument("give exactly one of an input file or a synthetic spec")
        if self.max_iter < 0:
            raise InvalidArgument("max_iter must be non-negative")
        if not self.inlier_threshold > 0:
            raise InvalidArgument("inlier threshold must be positive")
        RobustKernel(self.tau)
        self.config()
        return self

    def lm_config(self) -> LMConfig:
        return LMConfig(max_iter=self.max_iter, inlier_threshold=self.inlier_threshold)

    def config(self):
        lm = self.lm_config()
        if self.method in ("asker", "addfilter"):
            return AskerConfig(mu_f=self.mu_f, alpha=self.alpha, init_scale=self.init_scale, lm=lm)
        if self.method == "regemm":
            return RegemmConfig(eta=self.eta, lm=lm)
        if self.method == "gnc":
            return GncSchedule(self.gnc_levels)
        return lm


def solve(method: str, problem: Problem, theta0=None, config=None, lm: LMConfig | None = None) -> SolverTrace:
    """Run ``method`` with its own config object (or defaults)."""
    lm = lm or LMConfig()
    if method == "irls":
        return irls_solve(problem, theta0, config or lm)
    if method == "gnc":
        return gnc_solve(problem, theta0, config or GncSchedule(), lm)
    if method == "mhq":
        return mhq_solve(problem, theta0, config or lm)
    if method == "asker":
        return asker_solve(problem, theta0, config or AskerConfig(lm=lm))
    if method == "addfilter":
        return addfilter_solve(problem, theta0, config or AskerConfig(lm=lm))
    if method == "regemm":
        return regemm_solve(problem, theta0, config or RegemmConfig(lm=lm))
    raise InvalidArgument(f"unknown method {method!r}")


# -- problem construction -------------------------------------------------

def parse_synthetic(text: str) -> dict:
    """``key=value`` pairs separated by commas, e.g. ``cameras=10,points=200,outliers=0.2``.

    ``kind=mean`` selects the 1-D robust mean; its data are ``;``-separated.
    """
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise InvalidArgument(f"synthetic spec entry {part!r} is not key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        out[k] = v
    return out


_SYNTH_KEYS = {"cameras": int, "points": int, "density": float, "noise": float, "outliers": float,
               "focal": float, "seed": int}


def build_problem(spec: RunSpec) -> tuple[Problem, np.ndarray]:
    kernel = RobustKernel(spec.tau)
    if spec.input is not None:
        problem = make_reprojection_problem(load_bal(spec.input), kernel)
        return problem, problem.initial_theta()
    params = parse_synthetic(spec.synthetic)
    kind = params.pop("kind", "ba")
    if kind == "mean":
        try:
            data = [float(v) for v in params.pop("data").split(";")]
            theta0 = float(params.pop("theta0", data[-1]))
        except (KeyError, ValueError):
            raise InvalidArgument("mean spec needs data=v1;v2;... and optional theta0") from None
        if params:
            raise InvalidArgument(f"unknown mean spec keys: {', '.join(params)}")
        problem = RobustMean1D(data, kernel).problem(theta0)
        return problem, problem.initial_theta()
    if kind != "ba":
        raise InvalidArgument(f"unknown synthetic kind {kind!r}")
    kw = {"seed": spec.seed}
    for k, v in params.items():
        if k not in _SYNTH_KEYS:
            raise InvalidArgument(f"unknown synthetic key {k!r}")
        try:
            kw["outlier_fraction" if k == "outliers" else k] = _SYNTH_KEYS[k](v)
        except ValueError:
            raise InvalidArgument(f"bad value for {k}: {v!r}") from None
    scene = synth_ba(SynthConfig(**kw))
    problem = make_reprojection_problem(scene.dataset, kernel)
    return problem, problem.initial_theta()


def run(spec: RunSpec) -> SolverTrace:
    spec.validate()
    problem, theta0 = build_problem(spec)
    trace = solve(spec.method, problem, theta0, spec.config(), spec.lm_config())
    if spec.out:
        write_trace(trace, spec.out)
    return trace


# -- trace files ----------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def trace_rows(trace: SolverTrace) -> tuple[list[str], list[list[str]]]:
    extra = sorted({k for r in trace.records for k in r.extras})
    header = list(BASE_COLUMNS) + extra
    rows = []
    for r in trace.records:
        base = [str(r.iteration), _fmt(r.seconds), _fmt(r.psi), _fmt(r.aux), _fmt(r.h),
                _fmt(r.inlier_rate), r.step_kind, _fmt(bool(r.accepted))]
        rows.append(base + [_fmt(r.extras.get(k)) for k in extra])
    return header, rows


def write_trace(trace: SolverTrace, path) -> None:
    header, rows = trace_rows(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_trace(path) -> dict[str, np.ndarray | list[str]]:
    """Columns of a trace file; numeric columns as float arrays (NaN for empty)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0][:len(BASE_COLUMNS)]) != BASE_COLUMNS:
        raise InvalidArgument(f"{path}: not a trace file")
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        if name == "step_kind":
            cols[name] = vals
        else:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
    return cols


# -- performance profiles -------------------------------------------------

def _ratio(value: float, best: float) -> float:
    if not math.isfinite(value):
        return math.inf
    if best == 0:
        return 1.0 if value == 0 else math.inf
    return value / best


@dataclass
class ProfileTable:
    """Dolan-More profiles over instances for a lower-is-better measure."""

    methods: list[str]
    instances: list[str]
    values: np.ndarray  # (instances, methods); inf marks a failed/missing run
    higher_is_better: bool = False
    missing: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ratios(self) -> np.ndarray:
        out = np.full(self.values.shape, math.inf)
        for i, row in enumerate(self.values):
            finite = row[np.isfinite(row)]
            if finite.size == 0:
                continue
            best = finite.max() if self.higher_is_better else finite.min()
            for j, v in enumerate(row):
                if self.higher_is_better:
                    out[i, j] = math.inf if not math.isfinite(v) else (
                        1.0 if v == best else (math.inf if v <= 0 else best / v))
                else:
                    out[i, j] = _ratio(v, best)
        return out

    def rho(self, method: str, t: float) -> float:
        j = self.methods.index(method)
        return float(np.mean(self.ratios[:, j] <= t)) if self.instances else 0.0

    def curve(self, method: str, ts: Sequence[float]) -> np.ndarray:
        return np.array([self.rho(method, t) for t in ts])


def profile_table(results: dict[str, dict[str, float]], methods: Sequence[str] | None = None,
                  higher_is_better: bool = False) -> ProfileTable:
    """``results[instance][method]`` -> profile; absent pairs count as failures."""
    instances = sorted(results)
    methods = sorted({m for r in results.values() for m in r}) if methods is None else list(methods)
    vals = np.full((len(instances), len(methods)), math.inf)
    missing = []
    for i, inst in enumerate(instances):
        for j, m in enumerate(methods):
            v = results[inst].get(m)
            if v is None or not math.isfinite(v):
                missing.append((inst, m))
                continue
            vals[i, j] = v
    return ProfileTable(methods, instances, vals, higher_is_better, missing)


def split_trace_name(path) -> tuple[str, str]:
    """``<instance>__<method>.csv`` -> (instance, method)."""
    stem = Path(path).stem
    if "__" not in stem:
        raise InvalidArgument(f"trace file {path} is not named <instance>__<method>.csv")
    inst, method = stem.rsplit("__", 1)
    return inst, method


def profile(paths: Iterable, methods: Sequence[str] | None = None) -> tuple[ProfileTable, ProfileTable]:
    """Objective and inlier-rate profiles from trace files."""
    obj, inl = {}, {}
    for p in paths:
        inst, m = split_trace_name(p)
        cols = read_trace(p)
        obj.setdefault(inst, {})[m] = float(np.nanmin(cols["psi"]))
        inl.setdefault(inst, {})[m] = float(np.nanmax(cols["inlier_rate"]))
    return profile_table(obj, methods), profile_table(inl, methods, higher_is_better=True)


def normalized_objective(traces: dict[str, SolverTrace]) -> dict[str, np.ndarray]:
    """Psi columns divided by the largest initial Psi among the compared runs."""
    scale = max(t.records[0].psi for t in traces.values())
    scale = scale if scale > 0 else 1.0
    return {m: t.column("psi") / scale for m, t in traces.items()}


# -- escape experiments ---------------------------------------------------

def escape_experiment(trials: int, family: MeanFamily = MeanFamily(), methods: Sequence[str] = ("irls", "asker", "regemm"),
                      seed: int = 0, tolerance: float = 1e-6, start: str = "adversarial",
                      lm: LMConfig = LMConfig()) -> dict[str, float]:
    """Fraction of 1-D trials in which each method ends within ``tolerance`` of the global minimum."""
    if trials == 0:
        return {}
    rng = np.random.default_rng(seed)
    wins = {m: 0 for m in methods}
    for _ in range(trials):
        mean, theta0 = family.sample(rng)
        best_t, best_v = brute_force_1d(mean)
        if start == "oracle":
            theta0 = best_t
        problem = mean.problem(theta0)
        for m in methods:
            tr = solve(m, problem, lm=lm)
            wins[m] += tr.final.psi <= best_v + tolerance
    return {m: wins[m] / trials for m in methods}


def escape_experiment_ba(seeds: Sequence[int], config: SynthConfig = SynthConfig(),
                         methods: Sequence[str] = ("irls", "asker", "regemm"), tau: float = 1.0,
                         margin: float = 0.05, lm: LMConfig = LMConfig()) -> dict[str, float]:
    """Fraction of synthetic scenes where the final inlier rate reaches the planted rate minus ``margin``."""
    if not seeds:
        return {}
    wins = {m: 0 for m in methods}
    for s in seeds:
        scene = synth_ba(SynthConfig(**{**config.__dict__, "seed": s}))
        problem = make_reprojection_problem(scene.dataset, RobustKernel(tau))
        for m in methods:
            tr = solve(m, problem, lm=lm)
            wins[m] += tr.final.inlier_rate >= scene.planted_inlier_fraction - margin
    return {m: wins[m] / len(seeds) for m in methods}

"""Damped Gauss-Newton (Levenberg-Marquardt) step and the outer iteration driver.

Every solver in the package is written as an iteration *body*: an object that
owns the solver state and performs one outer iteration per ``iterate()`` call.
:func:`run` drives a body, records an :class:`IterationRecord` per outer
iteration and decides termination.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import EvaluationFailure, InvalidArgument, SingularSystem, StepFailed
from .linalg import LinearSolverConfig, assemble_linearization, direct_solve_dense, pcg_solve
from .problem import Linearization, Problem

CONVERGED = "converged"
MAX_ITER = "max_iter"
STALLED = "stalled"


@dataclass(frozen=True)
class LMConfig:
    initial_damping: float = 1e-3
    increase: float = 10.0
    decrease: float = 10.0
    min_damping: float = 1e-12
    max_damping: float = 1e12
    max_trials: int = 30
    max_iter: int = 50
    gradient_tol: float = 1e-8
    decrease_tol: float = 1e-10
    decrease_window: int = 3
    feasibility_tol: float = 1e-10
    inlier_threshold: float = 1.0
    linear: LinearSolverConfig = LinearSolverConfig()

    def __post_init__(self):
        if self.increase <= 1 or self.decrease <= 1:
            raise InvalidArgument("damping factors must exceed 1")
        if not 0 < self.min_damping <= self.initial_damping <= self.max_damping:
            raise InvalidArgument("initial damping must lie within the damping range")
        if self.max_iter < 0 or self.max_trials < 1:
            raise InvalidArgument("iteration limits must be non-negative")

    def clamp(self, lam: float) -> float:
        return min(max(lam, self.min_damping), self.max_damping)


@dataclass
class IterationRecord:
    iteration: int
    seconds: float
    psi: float
    aux: float
    h: float | None
    inlier_rate: float
    step_kind: str
    accepted: bool
    extras: dict = field(default_factory=dict)


@dataclass
class SolverTrace:
    method: str
    records: list[IterationRecord]
    status: str
    theta: np.ndarray
    state: dict = field(default_factory=dict)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    def column(self, name: str) -> np.ndarray:
        if hasattr(self.records[0], name):
            return np.array([getattr(r, name) for r in self.records], dtype=float)
        return np.array([r.extras.get(name, np.nan) for r in self.records], dtype=float)


@dataclass
class Observation:
    psi: float
    aux: float
    norms: np.ndarray
    h: float | None = None
    extras: dict = field(default_factory=dict)


class SolverBody(Protocol):
    method: str
    theta: np.ndarray

    def observe(self) -> Observation: ...

    def gradient_norm(self) -> float: ...

    def feasibility(self) -> float: ...

    def monitor(self) -> float: ...

    def iterate(self) -> tuple[str, bool]: ...


# -- single damped step ---------------------------------------------------

@dataclass
class StepResult:
    theta: np.ndarray
    norms: np.ndarray
    damping: float
    predicted: float
    actual: float
    trials: int
    accepted: bool = True


class DampedSolver:
    """Solves (H + lam I) x = g for varying ``lam`` on a fixed undamped system."""

    def __init__(self, system, linear: LinearSolverConfig):
        self.system = system
        self.linear = linear
        self.dense = system.size <= linear.dense_threshold
        self.H = system.dense() if self.dense else system.matrix()

    def solve(self, lam: float) -> np.ndarray:
        if self.dense:
            return direct_solve_dense(self.H + lam * np.eye(self.system.size), self.system.rhs)
        res = pcg_solve(self.system.with_damping(lam), self.linear.pcg_max_iter, self.linear.pcg_forcing)
        if not np.all(np.isfinite(res.x)):
            raise SingularSystem("PCG produced a non-finite solution")
        return res.x

    def model_decrease(self, x: np.ndarray) -> float:
        """Decrease of the undamped quadratic model for the step -x."""
        g = self.system.rhs
        return float(g @ x - 0.5 * x @ (self.H @ x))


def weighted_sq(weights: np.ndarray, norms: np.ndarray) -> float:
    return float(0.5 * np.sum(weights * norms * norms))


def lm_step(problem: Problem, theta, weights, damping: float, config: LMConfig = LMConfig(),
            lin: Linearization | None = None) -> StepResult:
    """One successful damped step on sum_i (w_i/2)||r_i(theta)||^2 with fixed weights.

    A trial is accepted iff the weighted objective strictly decreases; each
    rejection multiplies the damping by ``config.increase``.  Raises
    :class:`StepFailed` when ``config.max_trials`` trials are exhausted or the
    damping reaches its upper bound.
    """
    if lin is None:
        lin = problem.linearize(theta)
    w = np.asarray(weights, dtype=float)
    theta = lin.theta
    solver = DampedSolver(assemble_linearization(problem.layout, lin, w), config.linear)
    obj0 = weighted_sq(w, lin.norms)
    lam = config.clamp(damping)
    first_pred = None
    for trial in range(1, config.max_trials + 1):
        obj = np.inf
        try:
            x = solver.solve(lam)
        except SingularSystem:
            x = None
        if x is not None:
            pred = solver.model_decrease(x)
            if first_pred is None:
                first_pred = pred
            try:
                cand = problem.update(theta, -x)
                norms = problem.residual_norms(cand)
                obj = weighted_sq(w, norms)
            except EvaluationFailure:
                pass
        if obj < obj0:
            return StepResult(cand, norms, config.clamp(lam / config.decrease), pred, obj0 - obj, trial)
        if lam >= config.max_damping:
            break
        lam = config.clamp(lam * config.increase)
    raise StepFailed(lam, np.inf if first_pred is None else first_pred, obj0)


# -- driver ---------------------------------------------------------------

def _stationary(body, history: list[float], config: LMConfig) -> bool:
    if body.feasibility() > config.feasibility_tol:
        return False
    if body.gradient_norm() < config.gradient_tol:
        return True
    w = config.decrease_window
    if len(history) <= w:
        return False
    recent = history[-(w + 1):]
    for a, b in zip(recent[:-1], recent[1:]):
        if abs(a - b) > config.decrease_tol * max(abs(a), 1e-300):
            return False
    return True


def _negligible(err: StepFailed, config: LMConfig) -> bool:
    return err.predicted <= config.decrease_tol * max(abs(err.objective), 1e-300)


def run(body, config: LMConfig = LMConfig()) -> SolverTrace:
    """Iterate ``body`` until stationarity, ``config.max_iter`` or a stall."""
    t0 = time.perf_counter()
    last = [t0]

    def record(it, kind, accepted):
        now = time.perf_counter()
        if now <= last[0]:
            now = np.nextafter(last[0], np.inf)
        last[0] = now
        obs = body.observe()
        rate = float(np.mean(obs.norms <= config.inlier_threshold))
        return IterationRecord(it, now - t0, obs.psi, obs.aux, obs.h, rate, kind, accepted, dict(obs.extras))

    records = [record(0, "init", True)]
    history = [body.monitor()]
    status = MAX_ITER
    failures = 0
    it = 0
    while True:
        if _stationary(body, history, config):
            status = CONVERGED
            break
        if it >= config.max_iter:
            break
        try:
            kind, accepted = body.iterate()
            failures = 0
        except StepFailed as err:
            if _negligible(err, config):
                if body.feasibility() <= config.feasibility_tol:
                    status = CONVERGED
                    break
            else:
                failures += 1
            kind, accepted = "failed", False
        it += 1
        records.append(record(it, kind, accepted))
        history.append(body.monitor())
        if failures >= 2 or getattr(body, "stalled", False):
            status = STALLED
            break
    state = body.final_state() if hasattr(body, "final_state") else {}
    return SolverTrace(body.method, records, status, np.array(body.theta, copy=True), state)

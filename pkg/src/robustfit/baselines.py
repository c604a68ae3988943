"""Comparison solvers: IRLS, graduated non-convexity and M-HQ joint lifting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NotLiftable, StepFailed
from .kernels import KernelKind, RobustKernel
from .lm import LMConfig, Observation, SolverTrace, lm_step, run
from .problem import ParameterBlock, Problem, ResidualGroup, lifted_objective, weighted_gradient


@dataclass(frozen=True)
class GncSchedule:
    """Kernel scales visited from coarse to fine; the last one is always 1."""

    levels: int = 5
    factor: float = 2.0
    switch_tol: float = 1e-4

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidArgument("GNC needs at least one level")
        if self.factor <= 1:
            raise InvalidArgument("scale factor must exceed 1")

    @property
    def scales(self) -> tuple[float, ...]:
        return tuple(self.factor ** j for j in range(self.levels - 1, -1, -1))


class ReweightedBody:
    """IRLS under a (possibly scaled) kernel: weight update then one LM step."""

    def __init__(self, problem: Problem, theta0, config: LMConfig, scales=(1.0,),
                 switch_tol: float = 1e-4, initial_weights=None, method: str = "irls"):
        self.problem = problem
        self.kernel = problem.kernel
        self.config = config
        self.scales = tuple(float(s) for s in scales)
        if self.scales[-1] != 1.0 or any(a <= b for a, b in zip(self.scales[:-1], self.scales[1:])):
            raise InvalidArgument("scales must strictly decrease to exactly 1")
        self.switch_tol = switch_tol
        self.method = method
        self.level = 0
        self.lam = config.initial_damping
        self._override = None if initial_weights is None else np.asarray(initial_weights, float)
        self._set(np.asarray(theta0, dtype=float))

    @property
    def scale(self) -> float:
        return self.scales[self.level]

    @property
    def final_level(self) -> bool:
        return self.level == len(self.scales) - 1

    def _set(self, theta, lin=None):
        self.theta = theta
        self.lin = lin if lin is not None else self.problem.linearize(theta)
        self._reweight()

    def _reweight(self):
        norms = self.lin.norms
        self.weights = self.kernel.scaled_omega(norms, self.scale)
        self.grad = weighted_gradient(self.lin, self.weights, self.problem.num_parameters)
        self.scaled_obj = float(np.sum(self.kernel.scaled_psi(norms, self.scale)))

    def _advance(self):
        self.level += 1
        self._reweight()

    def observe(self):
        psi = float(np.sum(self.kernel.psi(self.lin.norms)))
        return Observation(psi, self.scaled_obj, self.lin.norms, None,
                           {"scale": self.scale, "lambda": self.lam})

    def gradient_norm(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0

    def feasibility(self):
        return self.scale - 1.0

    def monitor(self):
        return self.scaled_obj

    def iterate(self):
        while not self.final_level and self.gradient_norm() < self.config.gradient_tol:
            self._advance()
        while True:
            weights = self.weights
            if self._override is not None:
                weights, self._override = self._override, None
            before = self.scaled_obj
            try:
                step = lm_step(self.problem, self.theta, weights, self.lam, self.config, self.lin)
            except StepFailed as err:
                if self.final_level:
                    self.lam = err.damping
                    raise
                self._advance()
                continue
            self.lam = step.damping
            self._set(step.theta)
            rel = (before - self.scaled_obj) / max(abs(before), 1e-300)
            if not self.final_level and rel < self.switch_tol:
                self._advance()
            return "lm", True


def irls_solve(problem: Problem, theta0=None, config: LMConfig = LMConfig(), initial_weights=None) -> SolverTrace:
    """Iteratively reweighted least squares with touching weights omega(||r_i||).

    ``initial_weights`` replaces the touching weights for the first step only.
    """
    theta0 = problem.initial_theta() if theta0 is None else theta0
    return run(ReweightedBody(problem, theta0, config, (1.0,), initial_weights=initial_weights), config)


def gnc_solve(problem: Problem, theta0=None, schedule: GncSchedule = GncSchedule(),
              config: LMConfig = LMConfig()) -> SolverTrace:
    """Graduated non-convexity over the kernels s^2 psi(r/s), coarse to fine."""
    theta0 = problem.initial_theta() if theta0 is None else theta0
    body = ReweightedBody(problem, theta0, config, schedule.scales, schedule.switch_tol, method="gnc")
    return run(body, config)


# -- M-HQ joint lifting ---------------------------------------------------

class _WeightedResiduals(ResidualGroup):
    """w_i r_i(theta) with an extra slot holding the lifted weight w_i."""

    def __init__(self, group: ResidualGroup, weight_ids: np.ndarray):
        self.group = group
        self.dim = group.dim
        self.slot_dims = tuple(group.slot_dims) + (1,)
        self.block_ids = np.concatenate([group.block_ids, weight_ids[:, None]], axis=1)

    def evaluate(self, slot_values, jacobians=True):
        w = slot_values[-1][:, 0]
        r, J = self.group.evaluate(slot_values[:-1], jacobians)
        out = w[:, None] * r
        if not jacobians:
            return out, None
        return out, [w[:, None, None] * Jk for Jk in J] + [r[:, :, None]]


class _BiasResiduals(ResidualGroup):
    """(tau/sqrt 2)(w_i^2 - 1); half its square is kappa(w_i^2)."""

    def __init__(self, tau: float, weight_ids: np.ndarray):
        self.c = tau / math.sqrt(2.0)
        self.dim = 1
        self.slot_dims = (1,)
        self.block_ids = weight_ids[:, None]

    def evaluate(self, slot_values, jacobians=True):
        w = slot_values[0]
        r = self.c * (w * w - 1.0)
        return r, ([(2.0 * self.c * w)[:, :, None]] if jacobians else None)


class LiftedProblem(Problem):
    """Non-robust least squares over (theta, w) whose cost is the lifted objective at u = w^2."""

    def __init__(self, base: Problem, w0):
        if not base.kernel.liftable:
            raise NotLiftable("M-HQ lifting requires the smooth truncated kernel")
        self.base = base
        w0 = np.broadcast_to(np.asarray(w0, dtype=float), (base.num_residuals,))
        first = max(b.id for b in base.blocks) + 1
        ids = first + np.arange(base.num_residuals, dtype=np.int64)
        blocks = list(base.blocks) + [ParameterBlock(int(i), 1, [w]) for i, w in zip(ids, w0)]
        groups, start = [], 0
        for g in base.groups:
            groups.append(_WeightedResiduals(g, ids[start:start + len(g)]))
            start += len(g)
        groups.append(_BiasResiduals(base.kernel.tau, ids))
        super().__init__(blocks, groups, RobustKernel(1.0, KernelKind.QUADRATIC))
        self.n_theta = base.num_parameters

    def split(self, x):
        return x[:self.n_theta], x[self.n_theta:]

    def update(self, x, delta):
        th = self.base.update(x[:self.n_theta], delta[:self.n_theta])
        return np.concatenate([th, x[self.n_theta:] + delta[self.n_theta:]])

    def lifted_cost(self, x) -> float:
        norms = self.residual_norms(x)
        return float(0.5 * np.sum(norms * norms))


class MhqBody:
    method = "mhq"

    def __init__(self, lifted: LiftedProblem, x0, config: LMConfig):
        self.lifted = lifted
        self.base = lifted.base
        self.config = config
        self.lam = config.initial_damping
        self._set(np.asarray(x0, dtype=float))

    def _set(self, x):
        self.x = x
        self.lin = self.lifted.linearize(x)
        self.grad = weighted_gradient(self.lin, np.ones(self.lifted.num_residuals), self.lifted.num_parameters)
        self.cost = float(0.5 * np.sum(self.lin.norms ** 2))
        theta, w = self.lifted.split(x)
        self.norms = self.base.residual_norms(theta)

    @property
    def theta(self):
        return self.lifted.split(self.x)[0]

    def observe(self):
        psi = float(np.sum(self.base.kernel.psi(self.norms)))
        return Observation(psi, self.cost, self.norms, None, {"lambda": self.lam})

    def gradient_norm(self):
        return float(np.max(np.abs(self.grad)))

    def feasibility(self):
        return 0.0

    def monitor(self):
        return self.cost

    def iterate(self):
        try:
            step = lm_step(self.lifted, self.x, np.ones(self.lifted.num_residuals), self.lam,
                           self.config, self.lin)
        except StepFailed as err:
            self.lam = err.damping
            raise
        self.lam = step.damping
        self._set(step.theta)
        return "lm", True

    def final_state(self):
        return {"weights": self.lifted.split(self.x)[1] ** 2}


def mhq_solve(problem: Problem, theta0=None, config: LMConfig = LMConfig(), w0=None) -> SolverTrace:
    """Joint LM over parameters and lifted weights u = w^2.

    ``w0`` defaults to all ones; pass ``"touching"`` to start from sqrt(omega).
    """
    theta0 = problem.initial_theta() if theta0 is None else np.asarray(theta0, float)
    if w0 is None:
        w0 = np.ones(problem.num_residuals)
    elif isinstance(w0, str) and w0 == "touching":
        w0 = np.sqrt(problem.kernel.omega(problem.residual_norms(theta0)))
    lifted = LiftedProblem(problem, w0)
    x0 = np.concatenate([theta0, np.broadcast_to(np.asarray(w0, float), (problem.num_residuals,))])
    return run(MhqBody(lifted, x0, config), config)


def lifted_cost_identity(problem: Problem, theta, w) -> tuple[float, float]:
    """(M-HQ cost at (theta, w), lifted objective at u = w^2) for identity checks."""
    w = np.broadcast_to(np.asarray(w, dtype=float), (problem.num_residuals,))
    lifted = LiftedProblem(problem, w)
    x = np.concatenate([np.asarray(theta, dtype=float), w])
    return lifted.lifted_cost(x), lifted_objective(problem.kernel, problem.residual_norms(theta), np.asarray(w) ** 2)

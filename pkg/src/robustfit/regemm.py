"""Relaxed generalized majorization-minimization.

Weights are only partially moved toward the touching weights: each outer
iteration picks the largest kernel scale sigma whose weights omega(r/sigma)
still close a fraction eta of the gap between the lifted bound and the true
objective.  One successful damped step on the weighted problem follows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NotLiftable, StepFailed
from .kernels import RobustKernel
from .lm import LMConfig, Observation, SolverTrace, lm_step, run
from .problem import Problem, lifted_objective, weighted_gradient


@dataclass(frozen=True)
class RegemmConfig:
    eta: float = 0.5
    sigma_max: float = 64.0
    sigma_cap: float = 2.0 ** 16
    rel_tol: float = 1e-3
    criterion: str = "relaxed"  # or "generalized": bound uses the previous lifted value
    weight_formula: str = "omega"  # "kernel" is a debug variant using psi(r/sigma)
    lm: LMConfig = field(default_factory=LMConfig)

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise InvalidArgument("eta must lie in (0, 1)")
        if not 1 <= self.sigma_max <= self.sigma_cap:
            raise InvalidArgument("need 1 <= sigma_max <= sigma_cap")
        if self.criterion not in ("relaxed", "generalized"):
            raise InvalidArgument(f"unknown criterion {self.criterion!r}")
        if self.weight_formula not in ("omega", "kernel"):
            raise InvalidArgument(f"unknown weight formula {self.weight_formula!r}")


@dataclass
class WeightUpdate:
    weights: np.ndarray
    sigma: float
    lhs: float
    bound: float


def _weights(kernel: RobustKernel, norms, sigma, formula):
    if formula == "omega":
        return kernel.scaled_omega(norms, sigma)
    return np.asarray(kernel.psi(norms / sigma))


def weight_update(kernel: RobustKernel, norms, objective: float, previous_bound: float,
                  config: RegemmConfig = RegemmConfig()) -> WeightUpdate:
    """Largest sigma in [1, sigma_max] with lifted(u(sigma)) <= eta J + (1 - eta) B_prev.

    ``sigma_max`` doubles (up to ``sigma_cap``) while the criterion still holds
    there; the bracket is then bisected to relative tolerance ``rel_tol``.
    """
    if not kernel.liftable:
        raise NotLiftable("weight update needs the smooth truncated kernel")
    norms = np.asarray(norms, dtype=float)
    bound = config.eta * objective + (1.0 - config.eta) * previous_bound

    def lifted(sig):
        u = _weights(kernel, norms, sig, config.weight_formula)
        return u, lifted_objective(kernel, norms, u)

    def ok(sig):
        return lifted(sig)[1] <= bound

    if not ok(1.0):
        u, val = lifted(1.0)
        return WeightUpdate(u, 1.0, val, bound)
    hi = config.sigma_max
    while ok(hi):
        if hi >= config.sigma_cap:
            u, val = lifted(hi)
            return WeightUpdate(u, hi, val, bound)
        hi = min(2.0 * hi, config.sigma_cap)
    lo = 1.0
    while hi - lo > config.rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    u, val = lifted(lo)
    return WeightUpdate(u, lo, val, bound)


class RegemmBody:
    method = "regemm"

    def __init__(self, problem: Problem, theta0, config: RegemmConfig, initial_weights=None):
        if not problem.kernel.liftable:
            raise NotLiftable("ReGeMM needs the smooth truncated kernel")
        self.problem = problem
        self.kernel = problem.kernel
        self.config = config
        self.lam = config.lm.initial_damping
        self.theta = np.asarray(theta0, dtype=float)
        self.lin = problem.linearize(self.theta)
        n = problem.num_residuals
        u0 = np.ones(n) if initial_weights is None else np.broadcast_to(np.asarray(initial_weights, float), (n,))
        self.weights = np.array(u0)
        self.psi = float(np.sum(self.kernel.psi(self.lin.norms)))
        self.jbar = lifted_objective(self.kernel, self.lin.norms, self.weights)
        self.b_prev = self.jbar
        self.sigma = np.nan
        self.lhs = np.nan
        self.bound = np.nan

    @property
    def gap(self) -> float:
        return self.jbar - self.psi

    def iterate(self):
        cfg = self.config
        upd = weight_update(self.kernel, self.lin.norms, self.psi, self.b_prev, cfg)
        self.sigma, self.lhs, self.bound = upd.sigma, upd.lhs, upd.bound
        self.weights = upd.weights
        # bound the next criterion uses; the old weights are discarded
        self.b_prev = upd.lhs if cfg.criterion == "relaxed" else None
        try:
            step = lm_step(self.problem, self.theta, upd.weights, self.lam, cfg.lm, self.lin)
        except StepFailed as err:
            self.lam = err.damping
            self.jbar = upd.lhs
            if cfg.criterion == "generalized":
                self.b_prev = self.jbar
            raise
        self.lam = step.damping
        self.theta = step.theta
        self.lin = self.problem.linearize(self.theta)
        self.psi = float(np.sum(self.kernel.psi(self.lin.norms)))
        self.jbar = lifted_objective(self.kernel, self.lin.norms, self.weights)
        if cfg.criterion == "generalized":
            self.b_prev = self.jbar
        return "lm", True

    def observe(self):
        extras = {"sigma": self.sigma, "gap": self.gap, "lhs": self.lhs, "bound": self.bound,
                  "lambda": self.lam}
        return Observation(self.psi, self.jbar, self.lin.norms, None, extras)

    def gradient_norm(self):
        g = weighted_gradient(self.lin, self.kernel.omega(self.lin.norms), self.problem.num_parameters)
        return float(np.max(np.abs(g)))

    def feasibility(self):
        return max(self.gap, 0.0)

    def monitor(self):
        return self.jbar

    def final_state(self):
        return {"weights": self.weights.copy()}


def regemm_solve(problem: Problem, theta0=None, config: RegemmConfig = RegemmConfig(),
                 initial_weights=None) -> SolverTrace:
    theta0 = problem.initial_theta() if theta0 is None else theta0
    return run(RegemmBody(problem, theta0, config, initial_weights), config.lm)

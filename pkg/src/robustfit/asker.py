"""Adaptive kernel scaling driven by a filter method.

Each residual gets its own scale sigma_i = 1 + s_i^2.  The solver minimises
the scaled objective f(theta, s) = sum_i psi(||r_i|| / sigma_i) while driving
the violation h(s) = sum_i s_i^2 to zero.  Steps are either cooperative
(damped descent on mu_f f + mu_h h) or restorative (shrink s along -s).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationFailure, InvalidArgument, SingularSystem
from .filter import Filter
from .lm import DampedSolver, LMConfig, Observation, SolverTrace, run
from .linalg import Term, assemble_terms
from .problem import Layout, Linearization, Problem, weighted_gradient


@dataclass(frozen=True)
class AskerConfig:
    mu_f: float = 0.9
    alpha: float = 0.01
    init_scale: float = 5.0
    gamma_points: int = 11
    gamma_max: float = 0.5
    stall_window: int = 20
    # coefficient c of the curvature term in the step model
    # g^T d + c d^T H d + c lam |d|^2; c = 1/2 gives the plain damped Newton step
    curvature: float = 1.0
    lm: LMConfig = field(default_factory=LMConfig)

    def __post_init__(self):
        if not 0 < self.mu_f < 1:
            raise InvalidArgument("mu_f must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("filter margin must lie in (0, 1)")
        if self.init_scale < 0 or not np.isfinite(self.init_scale):
            raise InvalidArgument("initial scale must be finite and non-negative")
        if self.gamma_points < 2 or not 0 < self.gamma_max <= 1:
            raise InvalidArgument("bad restoration grid")
        if not self.curvature > 0:
            raise InvalidArgument("curvature coefficient must be positive")

    @property
    def mu_h(self) -> float:
        return 1.0 - self.mu_f

    @property
    def gammas(self) -> np.ndarray:
        return np.linspace(0.0, self.gamma_max, self.gamma_points)


def gradient_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two vectors; pi when either one vanishes."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float(np.pi)
    return float(np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0)))


@dataclass
class Candidate:
    x: np.ndarray
    f: float
    h: float
    lin: Linearization


class FilterBody:
    """Filter-globalised cooperative/restoration iteration over x = (theta, aux).

    Subclasses define the auxiliary variable through ``evaluate``,
    ``gradients``, ``terms`` and ``restoration_direction``.
    """

    method = "filter"

    def __init__(self, problem: Problem, x0: np.ndarray, config: AskerConfig):
        self.problem = problem
        self.kernel = problem.kernel
        self.config = config
        self.n_theta = problem.num_parameters
        self.filter = Filter(config.alpha)
        self.lam = config.lm.initial_damping
        self.idle = 0
        self.filter_ok = True
        self.gamma = np.nan
        self.current = self.candidate(np.asarray(x0, dtype=float))

    # -- hooks -------------------------------------------------------------
    def evaluate(self, x, lin) -> tuple[float, float]:
        raise NotImplementedError

    def gradients(self, x, lin) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def system(self, x, lin):
        """Undamped mu_f H_f + mu_h H_h and right-hand side mu_f g_f + mu_h g_h."""
        raise NotImplementedError

    def restoration_direction(self, x, lin) -> np.ndarray:
        raise NotImplementedError

    def extra_layout(self) -> Layout:
        raise NotImplementedError

    # -- shared machinery ---------------------------------------------------
    def split(self, x):
        return x[:self.n_theta], x[self.n_theta:]

    @property
    def theta(self):
        return self.split(self.current.x)[0]

    def candidate(self, x) -> Candidate:
        lin = self.problem.linearize(self.split(x)[0])
        f, h = self.evaluate(x, lin)
        return Candidate(x, f, h, lin)

    def update(self, x, delta):
        th, aux = self.split(x)
        dth, daux = self.split(delta)
        return np.concatenate([self.problem.update(th, dth), aux + daux])

    def cooperative_step(self, lam: float) -> np.ndarray:
        """Minimiser of mu_f m_f(d) + mu_h m_h(d) + c lam |d|^2 with models
        m(d) = g^T d + c d^T H d, i.e. -(mu_f H_f + mu_h H_h + lam I)^-1 (mu_f g_f + mu_h g_h) / (2c)."""
        system = self.system(self.current.x, self.current.lin)
        return -DampedSolver(system, self.config.lm.linear).solve(lam) / (2.0 * self.config.curvature)

    def restoration_step(self) -> tuple[np.ndarray, float]:
        """Move aux along the restoration direction by the grid gamma whose
        displaced point best aligns the gradients of f and h."""
        x, lin = self.current.x, self.current.lin
        d = self.restoration_direction(x, lin)
        best, best_gamma = None, 0.0
        for g in self.config.gammas:
            xg = x + g * np.concatenate([np.zeros(self.n_theta), d])
            gf, gh = self.gradients(xg, lin)
            ang = gradient_angle(gf, gh)
            if best is None or ang < best:
                best, best_gamma = ang, float(g)
        return x + best_gamma * np.concatenate([np.zeros(self.n_theta), d]), best_gamma

    def iterate(self):
        cfg = self.config
        cur = self.current
        handle = self.filter.push_temporary(cur.f, cur.h)
        new, kind = None, "cooperative"
        try:
            cand = self.candidate(self.update(cur.x, self.cooperative_step(self.lam)))
            if self.filter.accepts(cand.f, cand.h):
                new = cand
        except (SingularSystem, EvaluationFailure):
            pass
        self.filter_ok = new is not None
        if new is not None:
            self.lam = cfg.lm.clamp(self.lam / cfg.lm.decrease)
            self.gamma = np.nan
        else:
            kind = "restoration"
            x, self.gamma = self.restoration_step()
            new = self.candidate(x)
            self.lam = cfg.lm.clamp(self.lam * cfg.lm.increase)
        moved = not np.array_equal(new.x, cur.x)
        self.filter.resolve_temporary(handle, new.f < cur.f)
        self.current = new
        self.idle = 0 if moved else self.idle + 1
        return kind, moved

    @property
    def stalled(self) -> bool:
        return self.idle >= self.config.stall_window

    def observe(self):
        c = self.current
        norms = c.lin.norms
        psi = float(np.sum(self.kernel.psi(norms)))
        extras = {"lambda": self.lam, "f": c.f, "filter_ok": float(self.filter_ok),
                  "gamma": self.gamma, "filter_size": len(self.filter)}
        return Observation(psi, c.f, norms, c.h, extras)

    def gradient_norm(self):
        lin = self.current.lin
        g = weighted_gradient(lin, self.kernel.omega(lin.norms), self.n_theta)
        return float(np.max(np.abs(g)))

    def feasibility(self):
        return self.current.h

    def monitor(self):
        return self.current.f

    def final_state(self):
        return {"aux": self.split(self.current.x)[1].copy(), "filter": self.filter.entries()}


class AskerBody(FilterBody):
    """x = (theta, s) with per-residual scales sigma_i = 1 + s_i^2."""

    method = "asker"

    def _scaled(self, x, lin):
        s = self.split(x)[1]
        sigma = 1.0 + s * s
        rho = lin.norms / sigma
        return s, sigma, rho, self.kernel.omega(rho)

    def evaluate(self, x, lin):
        s, sigma, rho, _ = self._scaled(x, lin)
        return float(np.sum(self.kernel.psi(rho))), float(s @ s)

    def gradients(self, x, lin):
        s, sigma, rho, w = self._scaled(x, lin)
        g_theta = weighted_gradient(lin, w / sigma ** 2, self.n_theta)
        g_s = -2.0 * w * s * lin.norms ** 2 / sigma ** 3
        g_h = np.concatenate([np.zeros(self.n_theta), 2.0 * s])
        return np.concatenate([g_theta, g_s]), g_h

    def extra_layout(self):
        return self.problem.layout.extend(np.ones(self.problem.num_residuals, dtype=np.int64))

    def system(self, x, lin):
        cfg = self.config
        s, sigma, rho, w = self._scaled(x, lin)
        terms = []
        for gl in lin.groups:
            n = gl.residuals.shape[0]
            sl = slice(gl.start, gl.start + n)
            sg = sigma[sl]
            rs = gl.residuals / sg[:, None]
            slots = [(c, J / sg[:, None, None]) for c, J in zip(gl.cols, gl.jacobians)]
            ds = (-2.0 * s[sl] / sg ** 2)[:, None] * gl.residuals
            slots.append((self.n_theta + np.arange(gl.start, gl.start + n), ds[:, :, None]))
            terms.append(Term(rs, cfg.mu_f * w[sl], slots))
        system = assemble_terms(self.extra_layout(), terms)
        diag = np.zeros(system.size)
        diag[self.n_theta:] = 2.0 * cfg.mu_h
        system.add_diagonal(diag)
        system.rhs[self.n_theta:] += cfg.mu_h * 2.0 * s
        return system

    def restoration_direction(self, x, lin):
        return -self.split(x)[1]


def eval_fh(problem: Problem, theta, s) -> tuple[float, float]:
    """Scaled objective f and violation h at (theta, s)."""
    s = np.asarray(s, dtype=float)
    sigma = 1.0 + s * s
    rho = problem.residual_norms(theta) / sigma
    return float(np.sum(problem.kernel.psi(rho))), float(s @ s)


def asker_body(problem: Problem, theta0=None, config: AskerConfig = AskerConfig(), s0=None) -> AskerBody:
    theta0 = problem.initial_theta() if theta0 is None else np.asarray(theta0, float)
    if s0 is None:
        s0 = np.full(problem.num_residuals, config.init_scale)
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (problem.num_residuals,))
    return AskerBody(problem, np.concatenate([theta0, s0]), config)


def asker_solve(problem: Problem, theta0=None, config: AskerConfig = AskerConfig(), s0=None) -> SolverTrace:
    return run(asker_body(problem, theta0, config, s0), config.lm)

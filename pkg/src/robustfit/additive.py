"""Filter solver over replicated residuals p_i constrained to equal r_i(theta).

f = sum_i psi(||p_i||) and h = sum_i ||p_i - r_i(theta)||^2.  The cooperative
and restoration machinery is shared with ASKER; restoration moves p toward
r(theta).
"""
from __future__ import annotations

import numpy as np

from .asker import AskerConfig, FilterBody
from .linalg import Term, assemble_terms
from .lm import SolverTrace, run
from .problem import Linearization, Problem, weighted_gradient


def _flat_residuals(lin: Linearization) -> np.ndarray:
    return np.concatenate([gl.residuals.ravel() for gl in lin.groups])


class AdditiveBody(FilterBody):
    method = "addfilter"

    def __init__(self, problem: Problem, x0, config: AskerConfig):
        dims, offs = [], []
        pos = 0
        for g in problem.groups:
            dims.append(np.full(len(g), g.dim, dtype=np.int64))
            offs.append(pos + g.dim * np.arange(len(g)))
            pos += g.dim * len(g)
        self.p_dims = np.concatenate(dims)
        self.p_offsets = np.concatenate(offs)
        super().__init__(problem, x0, config)

    def _p_blocks(self, x, lin):
        p = self.split(x)[1]
        out = []
        for gl, g in zip(lin.groups, self.problem.groups):
            n = gl.residuals.shape[0]
            start = self.p_offsets[gl.start]
            out.append(p[start:start + n * g.dim].reshape(n, g.dim))
        return out

    def _p_norms(self, x, lin):
        return np.concatenate([np.sqrt(np.einsum("np,np->n", b, b)) for b in self._p_blocks(x, lin)])

    def evaluate(self, x, lin):
        p = self.split(x)[1]
        c = p - _flat_residuals(lin)
        return float(np.sum(self.kernel.psi(self._p_norms(x, lin)))), float(c @ c)

    def gradients(self, x, lin):
        p = self.split(x)[1]
        w = np.repeat(self.kernel.omega(self._p_norms(x, lin)), self.p_dims)
        g_f = np.concatenate([np.zeros(self.n_theta), w * p])
        c = p - _flat_residuals(lin)
        # d h / d theta = -2 sum_i J_i^T c_i, d h / d p = 2 c
        neg = Linearization(lin.theta, [], lin.norms)
        for gl, cb in zip(lin.groups, self._split_flat(c, lin)):
            neg.groups.append(type(gl)(gl.start, cb, gl.cols, gl.jacobians))
        g_theta = -2.0 * weighted_gradient(neg, np.ones(len(lin.norms)), self.n_theta)
        return g_f, np.concatenate([g_theta, 2.0 * c])

    def _split_flat(self, v, lin):
        out = []
        for gl, g in zip(lin.groups, self.problem.groups):
            n = gl.residuals.shape[0]
            start = self.p_offsets[gl.start]
            out.append(v[start:start + n * g.dim].reshape(n, g.dim))
        return out

    def extra_layout(self):
        return self.problem.layout.extend(self.p_dims)

    def system(self, x, lin):
        cfg = self.config
        pnorm = self._p_norms(x, lin)
        w = self.kernel.omega(pnorm)
        c = self.split(x)[1] - _flat_residuals(lin)
        terms = []
        for gl, g, pb, cb in zip(lin.groups, self.problem.groups, self._p_blocks(x, lin), self._split_flat(c, lin)):
            n, d = gl.residuals.shape
            sl = slice(gl.start, gl.start + n)
            pcols = self.n_theta + self.p_offsets[sl]
            eye = np.broadcast_to(np.eye(d), (n, d, d))
            terms.append(Term(pb, cfg.mu_f * w[sl], [(pcols, eye)]))
            slots = [(cc, -J) for cc, J in zip(gl.cols, gl.jacobians)] + [(pcols, eye)]
            terms.append(Term(cb, np.full(n, 2.0 * cfg.mu_h), slots))
        return assemble_terms(self.extra_layout(), terms)

    def restoration_direction(self, x, lin):
        return _flat_residuals(lin) - self.split(x)[1]


def eval_fh_additive(problem: Problem, theta, p) -> tuple[float, float]:
    """f = sum psi(||p_i||), h = sum ||p_i - r_i(theta)||^2 with p flattened in residual order."""
    lin = problem.linearize(theta, jacobians=False)
    p = np.asarray(p, dtype=float).ravel()
    r = _flat_residuals(lin)
    if p.shape != r.shape:
        raise ValueError(f"p must have {r.size} entries")
    norms, pos = [], 0
    for gl in lin.groups:
        n, d = gl.residuals.shape
        blk = p[pos:pos + n * d].reshape(n, d)
        norms.append(np.sqrt(np.einsum("np,np->n", blk, blk)))
        pos += n * d
    c = p - r
    return float(np.sum(problem.kernel.psi(np.concatenate(norms)))), float(c @ c)


def additive_body(problem: Problem, theta0=None, config: AskerConfig = AskerConfig(), p0=None) -> AdditiveBody:
    theta0 = problem.initial_theta() if theta0 is None else np.asarray(theta0, float)
    if p0 is None:
        p0 = _flat_residuals(problem.linearize(theta0, jacobians=False))
    return AdditiveBody(problem, np.concatenate([theta0, np.asarray(p0, float).ravel()]), config)


def addfilter_solve(problem: Problem, theta0=None, config: AskerConfig = AskerConfig(), p0=None) -> SolverTrace:
    return run(additive_body(problem, theta0, config, p0), config.lm)

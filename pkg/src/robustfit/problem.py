"""Residual-block problems: parameter layout, residual/Jacobian evaluation and
robust objective evaluation.

Residuals are organised in *groups*.  A group evaluates many residual blocks
of identical structure in one vectorised call; each residual block attaches
to one parameter block per slot.  Jacobians are therefore stored block-sparse
as one ``(n, p, d)`` array per slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationFailure, InvalidArgument
from .kernels import RobustKernel


@dataclass
class ParameterBlock:
    id: int
    dimension: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.dimension < 1 or self.values.shape != (self.dimension,):
            raise InvalidArgument(f"parameter block {self.id}: expected {self.dimension} values")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument(f"parameter block {self.id}: values must be finite")


@dataclass
class ResidualBlock:
    """A single residual r_i in R^p attached to an ordered list of parameter blocks.

    ``evaluator(*block_values)`` returns ``(r, [J_0, J_1, ...])`` with ``J_k`` of
    shape ``(p, dim(block_k))``.  It must be deterministic and side-effect free.
    """

    id: int
    dimension: int
    block_ids: tuple[int, ...]
    evaluator: Callable


class ResidualGroup:
    """Vectorised evaluator for ``n`` residual blocks with a common structure."""

    dim: int
    slot_dims: tuple[int, ...]
    block_ids: np.ndarray  # (n, num_slots) parameter block ids

    def __len__(self) -> int:
        return self.block_ids.shape[0]

    @property
    def residual_ids(self) -> np.ndarray | None:
        return None

    def evaluate(self, slot_values: Sequence[np.ndarray], jacobians: bool = True):
        """Return ``r`` of shape (n, p) and a list of (n, p, d_k) Jacobians (or None)."""
        raise NotImplementedError


class LinearResiduals(ResidualGroup):
    """Affine residuals r_i = A_i x_i - b_i on a single slot."""

    def __init__(self, A, b, block_ids):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 3 or b.shape != A.shape[:2]:
            raise InvalidArgument("A must be (n, p, d) and b (n, p)")
        self.A, self.b = A, b
        self.dim = A.shape[1]
        self.slot_dims = (A.shape[2],)
        self.block_ids = np.asarray(block_ids, dtype=np.int64).reshape(-1, 1)
        if self.block_ids.shape[0] != A.shape[0]:
            raise InvalidArgument("one block id per residual required")

    def evaluate(self, slot_values, jacobians=True):
        x = slot_values[0]
        r = np.einsum("npd,nd->np", self.A, x) - self.b
        return r, ([self.A] if jacobians else None)


class CallbackResiduals(ResidualGroup):
    """Wraps one user-supplied :class:`ResidualBlock`."""

    def __init__(self, block: ResidualBlock, block_dims: Sequence[int]):
        self.block = block
        self.dim = int(block.dimension)
        self.slot_dims = tuple(int(d) for d in block_dims)
        self.block_ids = np.asarray([block.block_ids], dtype=np.int64)

    @property
    def residual_ids(self):
        return np.array([self.block.id])

    def evaluate(self, slot_values, jacobians=True):
        r, jacs = self.block.evaluator(*[v[0] for v in slot_values])
        r = np.asarray(r, dtype=float).reshape(1, self.dim)
        if not jacobians:
            return r, None
        out = []
        for J, d in zip(jacs, self.slot_dims):
            out.append(np.asarray(J, dtype=float).reshape(1, self.dim, d))
        return r, out


@dataclass
class Layout:
    """Column layout of a flat parameter vector split into blocks."""

    dims: np.ndarray
    offsets: np.ndarray = field(init=False)
    size: int = field(init=False)

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(np.int64)
        self.size = int(self.dims.sum())

    def extend(self, dims) -> "Layout":
        return Layout(np.concatenate([self.dims, np.asarray(dims, dtype=np.int64)]))


@dataclass
class GroupLinearization:
    start: int
    residuals: np.ndarray
    cols: list[np.ndarray]
    jacobians: list[np.ndarray] | None


@dataclass
class Linearization:
    theta: np.ndarray
    groups: list[GroupLinearization]
    norms: np.ndarray


@dataclass
class JacobianReport:
    max_error: np.ndarray  # per residual block
    tolerance: float

    @property
    def worst(self) -> float:
        return float(self.max_error.max()) if self.max_error.size else 0.0

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


class Problem:
    """Robust objective sum_i psi(||r_i(theta)||) over parameter and residual blocks."""

    def __init__(self, blocks: Sequence[ParameterBlock], groups: Sequence[ResidualGroup],
                 kernel: RobustKernel):
        if not blocks:
            raise InvalidArgument("problem needs at least one parameter block")
        self.blocks = list(blocks)
        self.groups = list(groups)
        self.kernel = kernel
        ids = np.array([b.id for b in self.blocks], dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise InvalidArgument("parameter block ids must be unique")
        self.layout = Layout([b.dimension for b in self.blocks])
        order = np.argsort(ids)
        self._sorted_ids, self._sorted_pos = ids[order], order
        self._starts = []
        self._slot_cols = []
        n = 0
        for g in self.groups:
            pos = self._positions(g.block_ids)
            for k, d in enumerate(g.slot_dims):
                if np.any(self.layout.dims[pos[:, k]] != d):
                    raise InvalidArgument("slot dimension does not match parameter block")
            self._slot_cols.append([self.layout.offsets[pos[:, k]] for k in range(pos.shape[1])])
            self._starts.append(n)
            n += len(g)
        self.num_residuals = n
        if n < 1:
            raise InvalidArgument("problem needs at least one residual")

    @classmethod
    def from_blocks(cls, blocks: Sequence[ParameterBlock], residuals: Sequence[ResidualBlock],
                    kernel: RobustKernel) -> "Problem":
        dims = {b.id: b.dimension for b in blocks}
        groups = []
        for rb in residuals:
            try:
                bd = [dims[i] for i in rb.block_ids]
            except KeyError as exc:
                raise InvalidArgument(f"residual {rb.id} references unknown block {exc}") from None
            groups.append(CallbackResiduals(rb, bd))
        return cls(blocks, groups, kernel)

    def _positions(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        idx = np.searchsorted(self._sorted_ids, ids)
        idx = np.clip(idx, 0, len(self._sorted_ids) - 1)
        if np.any(self._sorted_ids[idx] != ids):
            raise InvalidArgument("residual references an unknown parameter block")
        return self._sorted_pos[idx]

    # -- parameter state -------------------------------------------------
    @property
    def num_parameters(self) -> int:
        return self.layout.size

    def initial_theta(self) -> np.ndarray:
        return np.concatenate([b.values for b in self.blocks])

    def update(self, theta: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Apply an additive step; subclasses may renormalise blocks afterwards."""
        return theta + delta

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise InvalidArgument(f"theta must have {self.layout.size} entries, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgument("theta must be finite")
        return theta

    def _slot_values(self, theta, gi):
        g = self.groups[gi]
        return [theta[cols[:, None] + np.arange(d)] for cols, d in zip(self._slot_cols[gi], g.slot_dims)]

    # -- evaluation ------------------------------------------------------
    def linearize(self, theta, jacobians: bool = True) -> Linearization:
        theta = self._check_theta(theta)
        out, norms = [], []
        for gi, g in enumerate(self.groups):
            r, J = g.evaluate(self._slot_values(theta, gi), jacobians)
            bad = ~np.all(np.isfinite(r), axis=1)
            if jacobians and not bad.any():
                for Jk in J:
                    bad |= ~np.all(np.isfinite(Jk), axis=(1, 2))
            if bad.any():
                first = int(np.argmax(bad))
                ids = g.residual_ids
                rid = int(ids[first]) if ids is not None else self._starts[gi] + first
                raise EvaluationFailure(rid)
            out.append(GroupLinearization(self._starts[gi], r, self._slot_cols[gi], J))
            norms.append(np.sqrt(np.einsum("np,np->n", r, r)))
        return Linearization(theta, out, np.concatenate(norms))

    def residual_norms(self, theta) -> np.ndarray:
        return self.linearize(theta, jacobians=False).norms

    def objective_and_norms(self, theta) -> tuple[float, np.ndarray]:
        norms = self.residual_norms(theta)
        return float(np.sum(self.kernel.psi(norms))), norms

    def evaluate_objective(self, theta) -> float:
        return self.objective_and_norms(theta)[0]

    def evaluate_weighted_sq(self, theta, weights) -> float:
        """Lifted upper bound sum_i (u_i/2)||r_i||^2 + kappa(u_i)."""
        u = np.asarray(weights, dtype=float)
        if u.shape != (self.num_residuals,):
            raise InvalidArgument(f"need {self.num_residuals} weights, got {u.shape}")
        return lifted_objective(self.kernel, self.residual_norms(theta), u)

    def gradient(self, theta, weights=None) -> np.ndarray:
        """sum_i w_i J_i^T r_i; the robust gradient when weights are omitted."""
        lin = self.linearize(theta)
        w = self.kernel.omega(lin.norms) if weights is None else np.asarray(weights, float)
        return weighted_gradient(lin, w, self.layout.size)

    def check_jacobian(self, theta, step: float = 1e-6, tolerance: float = 1e-5) -> JacobianReport:
        """Compare analytic Jacobian blocks against central differences.

        The error of a block is ||J - J_fd||_F / max(||J_fd||_F, 1).
        """
        if not 0 < step <= 1e-2:
            raise InvalidArgument("finite-difference step must lie in (0, 1e-2]")
        theta = self._check_theta(theta)
        errors = []
        for gi, g in enumerate(self.groups):
            vals = self._slot_values(theta, gi)
            _, J = g.evaluate(vals, True)
            err = np.zeros(len(g))
            for k, d in enumerate(g.slot_dims):
                fd = np.empty_like(J[k])
                for c in range(d):
                    plus = [v.copy() for v in vals]
                    minus = [v.copy() for v in vals]
                    plus[k][:, c] += step
                    minus[k][:, c] -= step
                    rp, _ = g.evaluate(plus, False)
                    rm, _ = g.evaluate(minus, False)
                    fd[:, :, c] = (rp - rm) / (2 * step)
                num = np.sqrt(np.sum((J[k] - fd) ** 2, axis=(1, 2)))
                den = np.maximum(np.sqrt(np.sum(fd ** 2, axis=(1, 2))), 1.0)
                err = np.maximum(err, num / den)
            errors.append(err)
        return JacobianReport(np.concatenate(errors), tolerance)


def lifted_objective(kernel: RobustKernel, norms: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(0.5 * weights * norms * norms + kernel.kappa(weights)))


def weighted_gradient(lin: Linearization, weights: np.ndarray, size: int) -> np.ndarray:
    g = np.zeros(size)
    for gl in lin.groups:
        w = weights[gl.start:gl.start + gl.residuals.shape[0]]
        for cols, J in zip(gl.cols, gl.jacobians):
            contrib = w[:, None] * np.einsum("npd,np->nd", J, gl.residuals)
            np.add.at(g, cols[:, None] + np.arange(J.shape[2]), contrib)
    return g

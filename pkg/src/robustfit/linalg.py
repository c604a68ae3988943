"""Block-sparse damped normal equations and their solvers.

The system H x = g with H = sum_i w_i J_i^T J_i + damping and g = sum_i w_i J_i^T r_i
is assembled from per-slot Jacobian blocks into COO triplets.  Large systems
are solved with conjugate gradients preconditioned by the inverted block
diagonal of H; small ones by a dense Cholesky factorisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import InvalidArgument, SingularSystem
from .problem import Layout, Linearization, Problem

DENSE_THRESHOLD = 2000


@dataclass
class Term:
    """Weighted residual blocks contributing w_i J_i^T J_i and w_i J_i^T r_i."""

    residuals: np.ndarray  # (n, p)
    weights: np.ndarray  # (n,)
    slots: list[tuple[np.ndarray, np.ndarray]]  # (column offsets (n,), J (n, p, d))


@dataclass
class BlockSparseSystem:
    layout: Layout
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray
    damping: float = 0.0
    weights: np.ndarray | None = None
    _csr: scipy.sparse.csr_matrix | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.layout.size

    def add_diagonal(self, values) -> None:
        d = np.broadcast_to(np.asarray(values, dtype=float), (self.size,))
        idx = np.arange(self.size)
        self.rows = np.concatenate([self.rows, idx])
        self.cols = np.concatenate([self.cols, idx])
        self.vals = np.concatenate([self.vals, d])
        self._csr = None

    def with_damping(self, lam: float) -> "BlockSparseSystem":
        out = BlockSparseSystem(self.layout, self.rows, self.cols, self.vals, self.rhs,
                                self.damping + lam, self.weights)
        out.add_diagonal(lam)
        return out

    def matrix(self) -> scipy.sparse.csr_matrix:
        if self._csr is None:
            n = self.size
            self._csr = scipy.sparse.coo_matrix((self.vals, (self.rows, self.cols)), shape=(n, n)).tocsr()
        return self._csr

    def dense(self) -> np.ndarray:
        n = self.size
        flat = np.bincount(self.rows * n + self.cols, weights=self.vals, minlength=n * n)
        return flat.reshape(n, n)

    def block_diagonal(self) -> np.ndarray:
        """Diagonal blocks of H padded to a common size (padding is identity)."""
        lay = self.layout
        dmax = int(lay.dims.max())
        owner = np.repeat(np.arange(len(lay.dims)), lay.dims)
        br, bc = owner[self.rows], owner[self.cols]
        keep = br == bc
        b = br[keep]
        lr = self.rows[keep] - lay.offsets[b]
        lc = self.cols[keep] - lay.offsets[b]
        nb = len(lay.dims)
        flat = np.bincount((b * dmax + lr) * dmax + lc, weights=self.vals[keep],
                           minlength=nb * dmax * dmax)
        D = flat.reshape(nb, dmax, dmax)
        pad = np.arange(dmax)[None, :] >= lay.dims[:, None]
        diag = np.arange(dmax)
        D[:, diag, diag] += pad
        return D


def assemble_terms(layout: Layout, terms: Sequence[Term], damping: float = 0.0) -> BlockSparseSystem:
    if damping < 0:
        raise InvalidArgument("damping must be non-negative")
    rows, cols, vals = [], [], []
    g = np.zeros(layout.size)
    for t in terms:
        w = np.asarray(t.weights, dtype=float)
        n = t.residuals.shape[0]
        if w.shape != (n,):
            raise InvalidArgument("one weight per residual block required")
        if np.any(w < 0):
            raise InvalidArgument("weights must be non-negative")
        for ca, Ja in t.slots:
            if Ja.shape[:2] != t.residuals.shape or ca.shape != (n,):
                raise InvalidArgument("Jacobian block shape does not match residuals")
            da = Ja.shape[2]
            ia = ca[:, None] + np.arange(da)
            np.add.at(g, ia, w[:, None] * np.einsum("npd,np->nd", Ja, t.residuals))
            for cb, Jb in t.slots:
                db = Jb.shape[2]
                ib = cb[:, None] + np.arange(db)
                blk = w[:, None, None] * np.einsum("npi,npj->nij", Ja, Jb)
                rows.append(np.broadcast_to(ia[:, :, None], blk.shape).ravel())
                cols.append(np.broadcast_to(ib[:, None, :], blk.shape).ravel())
                vals.append(blk.ravel())
    empty = np.zeros(0, dtype=np.int64)
    system = BlockSparseSystem(
        layout,
        np.concatenate(rows) if rows else empty,
        np.concatenate(cols) if cols else empty,
        np.concatenate(vals) if vals else np.zeros(0),
        g,
    )
    if damping > 0:
        system.add_diagonal(damping)
    system.damping = float(damping)
    return system


def linearization_terms(lin: Linearization, weights: np.ndarray) -> list[Term]:
    terms = []
    for gl in lin.groups:
        n = gl.residuals.shape[0]
        terms.append(Term(gl.residuals, weights[gl.start:gl.start + n], list(zip(gl.cols, gl.jacobians))))
    return terms


def assemble_linearization(layout: Layout, lin: Linearization, weights, damping: float = 0.0) -> BlockSparseSystem:
    w = np.asarray(weights, dtype=float)
    if w.shape != lin.norms.shape:
        raise InvalidArgument(f"need {lin.norms.size} weights, got {w.shape}")
    system = assemble_terms(layout, linearization_terms(lin, w), damping)
    system.weights = w
    return system


def assemble(problem: Problem, theta, weights, damping: float = 0.0) -> BlockSparseSystem:
    """Gauss-Newton normal equations J^T W J + damping*I and J^T W r at ``theta``."""
    return assemble_linearization(problem.layout, problem.linearize(theta), weights, damping)


# -- solvers --------------------------------------------------------------

@dataclass
class BlockJacobi:
    inverses: np.ndarray  # (B, dmax, dmax)
    index: np.ndarray  # (B, dmax) gather indices into the padded vector
    mask: np.ndarray
    fallback_blocks: np.ndarray

    @classmethod
    def from_system(cls, system: BlockSparseSystem) -> "BlockJacobi":
        D = system.block_diagonal()
        lay = system.layout
        dmax = D.shape[1]
        mask = np.arange(dmax)[None, :] < lay.dims[:, None]
        index = np.where(mask, lay.offsets[:, None] + np.arange(dmax), system.size)
        inv = np.empty_like(D)
        fallback = []
        try:
            np.linalg.cholesky(D)
            inv[:] = np.linalg.inv(D)
            ok = np.all(np.isfinite(inv), axis=(1, 2))
        except np.linalg.LinAlgError:
            ok = np.zeros(len(D), dtype=bool)
            for b in range(len(D)):
                try:
                    np.linalg.cholesky(D[b])
                    inv[b] = np.linalg.inv(D[b])
                    ok[b] = np.all(np.isfinite(inv[b]))
                except np.linalg.LinAlgError:
                    pass
        for b in np.flatnonzero(~ok):
            d = np.diagonal(D[b]).copy()
            inv[b] = np.diag(np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0))
            fallback.append(b)
        return cls(inv, index, mask, np.asarray(fallback, dtype=np.int64))

    def apply(self, r: np.ndarray) -> np.ndarray:
        padded = np.append(r, 0.0)[self.index]
        z = np.einsum("bij,bj->bi", self.inverses, padded)
        return z[self.mask]


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    fallback_blocks: np.ndarray
    history: list[float] = field(default_factory=list)


def pcg_solve(system: BlockSparseSystem, max_iter: int = 1000, forcing: float = 0.1,
              callback: Callable[[np.ndarray], None] | None = None) -> PCGResult:
    """Block-Jacobi preconditioned CG for H x = g, started from x = 0.

    Stops once ||g - H x|| <= forcing * ||g|| or after ``max_iter`` iterations.
    """
    b = system.rhs
    bnorm = float(np.linalg.norm(b))
    pre = BlockJacobi.from_system(system)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return PCGResult(x, 0, True, 0.0, pre.fallback_blocks, [0.0])
    A = system.matrix()
    r = b.copy()
    z = pre.apply(r)
    p = z.copy()
    rz = r @ z
    history = [bnorm]
    converged = False
    k = 0
    while k < max_iter:
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            break
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        k += 1
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if callback is not None:
            callback(x)
        if rn <= forcing * bnorm:
            converged = True
            break
        z = pre.apply(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PCGResult(x, k, converged, history[-1], pre.fallback_blocks, history)


def direct_solve_dense(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Cholesky solve of H x = g, falling back to LU for indefinite H."""
    n = H.shape[0]
    if not np.all(np.isfinite(H)) or not np.all(np.isfinite(g)):
        raise SingularSystem("non-finite normal equations")
    try:
        c = scipy.linalg.cho_factor(H, check_finite=False)
        x = scipy.linalg.cho_solve(c, g, check_finite=False)
        if np.all(np.isfinite(x)):
            return x
    except np.linalg.LinAlgError:
        pass
    lu, piv = scipy.linalg.lu_factor(H, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.size == 0 or diag.min() <= np.finfo(float).eps * n * max(diag.max(), 1e-300):
        raise SingularSystem("normal equations are singular")
    x = scipy.linalg.lu_solve((lu, piv), g, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("normal equations are singular")
    return x


def direct_solve(system: BlockSparseSystem, dense_threshold: int = DENSE_THRESHOLD) -> np.ndarray:
    n = system.size
    if n > dense_threshold:
        raise InvalidArgument(f"system of size {n} exceeds the dense threshold {dense_threshold}")
    return direct_solve_dense(system.dense(), system.rhs)


@dataclass(frozen=True)
class LinearSolverConfig:
    dense_threshold: int = DENSE_THRESHOLD
    pcg_max_iter: int = 1000
    pcg_forcing: float = 0.1


def solve(system: BlockSparseSystem, config: LinearSolverConfig = LinearSolverConfig()) -> np.ndarray:
    """Exact dense solve for small systems, PCG otherwise."""
    if system.size <= config.dense_threshold:
        return direct_solve(system, config.dense_threshold)
    res = pcg_solve(system, config.pcg_max_iter, config.pcg_forcing)
    if not np.all(np.isfinite(res.x)):
        raise SingularSystem("PCG produced a non-finite solution")
    return res.x

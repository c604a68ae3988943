"""One-dimensional robust mean: the smallest problem with spurious minima."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .kernels import RobustKernel
from .problem import LinearResiduals, ParameterBlock, Problem


@dataclass
class RobustMean1D:
    data: np.ndarray
    kernel: RobustKernel = RobustKernel(1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1)
        if self.data.size < 1 or not np.all(np.isfinite(self.data)):
            raise InvalidArgument("robust mean needs at least one finite datum")

    def objective(self, theta):
        """Psi at one or many theta values."""
        t = np.asarray(theta, dtype=float)
        r = np.abs(t[..., None] - self.data)
        val = np.sum(self.kernel.psi(r), axis=-1)
        return float(val) if np.ndim(t) == 0 else val

    def derivative(self, theta: float) -> float:
        d = theta - self.data
        return float(np.sum(np.sign(d) * self.kernel.psi_prime(np.abs(d))))

    def problem(self, theta0: float = 0.0) -> Problem:
        n = self.data.size
        A = np.ones((n, 1, 1))
        return Problem([ParameterBlock(0, 1, [theta0])],
                       [LinearResiduals(A, self.data[:, None], np.zeros(n, dtype=np.int64))], self.kernel)


def make_problem(data, tau: float = 1.0, theta0: float = 0.0) -> Problem:
    return RobustMean1D(data, RobustKernel(tau)).problem(theta0)


def brute_force_1d(mean: RobustMean1D, lo: float | None = None, hi: float | None = None,
                   step: float = 1e-3) -> tuple[float, float]:
    """Global minimiser of Psi by grid search, refined by bisection on Psi'
    inside the neighbouring grid cells of the winner."""
    if not step > 0:
        raise InvalidArgument("grid step must be positive")
    tau = mean.kernel.tau
    lo = float(mean.data.min() - tau) if lo is None else float(lo)
    hi = float(mean.data.max() + tau) if hi is None else float(hi)
    grid = np.arange(lo, hi + 0.5 * step, step)
    vals = mean.objective(grid)
    k = int(np.argmin(vals))
    best_t, best_v = float(grid[k]), float(vals[k])
    a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, len(grid) - 1)])
    da, db = mean.derivative(a), mean.derivative(b)
    if da < 0 < db:
        for _ in range(200):
            m = 0.5 * (a + b)
            if m in (a, b):
                break
            if mean.derivative(m) < 0:
                a = m
            else:
                b = m
        t = 0.5 * (a + b)
        v = mean.objective(t)
        if v <= best_v:
            best_t, best_v = t, v
    return best_t, best_v


@dataclass(frozen=True)
class MeanFamily:
    """Inliers around 0 plus a tight outlier cluster; theta0 sits on the outliers."""

    size: int = 20
    outlier_fraction: float = 0.3
    tau: float = 1.0
    inlier_spread: float = 0.3
    outlier_spread: float = 0.2
    outlier_distance: tuple[float, float] = (4.0, 10.0)

    def sample(self, rng: np.random.Generator) -> tuple[RobustMean1D, float]:
        n_out = int(round(self.outlier_fraction * self.size))
        inl = self.inlier_spread * self.tau * rng.standard_normal(self.size - n_out)
        mode = rng.uniform(*self.outlier_distance) * self.tau * rng.choice([-1.0, 1.0])
        out = mode + self.outlier_spread * self.tau * rng.standard_normal(n_out)
        data = np.concatenate([inl, out])
        return RobustMean1D(data, RobustKernel(self.tau)), float(out.mean()) if n_out else float(mode)


def constructed_instance() -> tuple[RobustMean1D, float]:
    """Three inliers at 0, one outlier at 10, started on the outlier."""
    return RobustMean1D(np.array([0.0, 0.0, 0.0, 10.0]), RobustKernel(1.0)), 10.0

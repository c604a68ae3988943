"""Robust kernels, IRLS weights and the half-quadratic bias function.

All kernels are normalised so that psi(0) = 0 and psi''(0) = 1.  Every
function accepts scalars or numpy arrays of non-negative residual norms and
returns the same shape.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, InvalidScale, NotLiftable


class KernelKind(str, enum.Enum):
    SMOOTH_TRUNCATED = "smooth-truncated"
    QUADRATIC = "quadratic"
    HUBER = "huber"
    CAUCHY = "cauchy"


def _as_norms(r):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("residual norm must be finite")
    if np.any(arr < 0):
        raise InvalidArgument("residual norm must be non-negative")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class RobustKernel:
    """A symmetric robust kernel with truncation (or transition) scale ``tau``."""

    tau: float = 1.0
    kind: KernelKind = KernelKind.SMOOTH_TRUNCATED

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        tau = float(self.tau)
        if not math.isfinite(tau) or tau <= 0:
            raise InvalidArgument(f"tau must be a positive finite number, got {self.tau!r}")
        object.__setattr__(self, "tau", tau)

    @property
    def liftable(self) -> bool:
        return self.kind is KernelKind.SMOOTH_TRUNCATED

    def psi(self, r):
        x = _as_norms(r)
        t2 = self.tau * self.tau
        k = self.kind
        if k is KernelKind.SMOOTH_TRUNCATED:
            x2 = x * x
            val = np.where(x2 <= t2, 0.5 * x2 * (1.0 - x2 / (2.0 * t2)), 0.25 * t2)
        elif k is KernelKind.QUADRATIC:
            val = 0.5 * x * x
        elif k is KernelKind.HUBER:
            val = np.where(x <= self.tau, 0.5 * x * x, self.tau * (x - 0.5 * self.tau))
        else:
            val = 0.5 * t2 * np.log1p(x * x / t2)
        return _out(val, r)

    def psi_prime(self, r):
        x = _as_norms(r)
        t2 = self.tau * self.tau
        k = self.kind
        if k is KernelKind.SMOOTH_TRUNCATED:
            val = np.where(x * x <= t2, x * (1.0 - x * x / t2), 0.0)
        elif k is KernelKind.QUADRATIC:
            val = x.copy()
        elif k is KernelKind.HUBER:
            val = np.minimum(x, self.tau)
        else:
            val = x / (1.0 + x * x / t2)
        return _out(val, r)

    def omega(self, r):
        """IRLS weight psi'(r)/r, with the limit value 1 at r = 0."""
        x = _as_norms(r)
        t2 = self.tau * self.tau
        k = self.kind
        if k is KernelKind.SMOOTH_TRUNCATED:
            val = np.maximum(0.0, 1.0 - x * x / t2)
        elif k is KernelKind.QUADRATIC:
            val = np.ones_like(x)
        elif k is KernelKind.HUBER:
            with np.errstate(divide="ignore"):
                val = np.where(x <= self.tau, 1.0, self.tau / np.where(x > 0, x, 1.0))
        else:
            val = 1.0 / (1.0 + x * x / t2)
        return _out(val, r)

    def kappa(self, u):
        """Half-quadratic bias function for the confidence weight ``u``."""
        if not self.liftable:
            raise NotLiftable(f"{self.kind.value} kernel has no closed-form bias function")
        w = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgument("confidence weight must be finite and non-negative")
        val = 0.25 * self.tau * self.tau * (w - 1.0) ** 2
        return _out(val, u)

    def lifted_value(self, u, r):
        """Per-residual lifted cost (u/2) r^2 + kappa(u)."""
        x = _as_norms(r)
        val = 0.5 * np.asarray(u, dtype=float) * x * x + np.asarray(self.kappa(u))
        return float(val) if np.ndim(val) == 0 else val

    def scaled_psi(self, r, s):
        """GNC kernel s^2 psi(r / s) for a scale s >= 1."""
        s = float(s)
        if not s >= 1.0:
            raise InvalidScale(f"kernel scale must be >= 1, got {s}")
        x = _as_norms(r)
        return _out(s * s * np.asarray(self.psi(x / s)), r)

    def scaled_omega(self, r, s):
        """Weight function of the scaled kernel, omega(r / s)."""
        s = float(s)
        if not s >= 1.0:
            raise InvalidScale(f"kernel scale must be >= 1, got {s}")
        x = _as_norms(r)
        return _out(np.asarray(self.omega(x / s)), r)


def smooth_truncated(tau: float = 1.0) -> RobustKernel:
    return RobustKernel(tau, KernelKind.SMOOTH_TRUNCATED)

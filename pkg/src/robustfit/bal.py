"""Bundle adjustment backend: BAL text files, the BAL camera model,
reprojection residuals and a synthetic scene generator with planted outliers.

BAL cameras are 9 numbers: axis-angle rotation, translation, focal length f
and radial distortion k1, k2.  A point X projects as

    P = R X + t,  p = -P[:2] / P[2],  x = f (1 + k1 |p|^2 + k2 |p|^4) p.

Only the pose (6 numbers) and the points are optimised; intrinsics stay fixed.
"""
from __future__ import annotations

import bz2
import gzip
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidArgument, ParseError, ValidationError
from .kernels import RobustKernel
from .problem import ParameterBlock, Problem, ResidualGroup

MIN_DEPTH = 1e-12


@dataclass
class BalDataset:
    cameras: np.ndarray  # (C, 9)
    points: np.ndarray  # (P, 3)
    camera_index: np.ndarray  # (N,)
    point_index: np.ndarray  # (N,)
    observations: np.ndarray  # (N, 2) pixels

    def __post_init__(self):
        self.cameras = np.asarray(self.cameras, dtype=float).reshape(-1, 9)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.camera_index = np.asarray(self.camera_index, dtype=np.int64).reshape(-1)
        self.point_index = np.asarray(self.point_index, dtype=np.int64).reshape(-1)
        self.observations = np.asarray(self.observations, dtype=float).reshape(-1, 2)

    @property
    def num_cameras(self) -> int:
        return self.cameras.shape[0]

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observations.shape[0]

    def validate(self) -> "BalDataset":
        n = self.num_observations
        if self.camera_index.shape != (n,) or self.point_index.shape != (n,):
            raise ValidationError("observation index arrays do not match the observation count")
        if n and (self.camera_index.min() < 0 or self.camera_index.max() >= self.num_cameras):
            bad = int(np.flatnonzero((self.camera_index < 0) | (self.camera_index >= self.num_cameras))[0])
            raise ValidationError(f"observation {bad}: camera index {self.camera_index[bad]} out of range")
        if n and (self.point_index.min() < 0 or self.point_index.max() >= self.num_points):
            bad = int(np.flatnonzero((self.point_index < 0) | (self.point_index >= self.num_points))[0])
            raise ValidationError(f"observation {bad}: point index {self.point_index[bad]} out of range")
        for name in ("cameras", "points", "observations"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contain non-finite values")
        return self

    def equals(self, other: "BalDataset") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("cameras", "points", "camera_index", "point_index", "observations"))

    def pose_vector(self) -> np.ndarray:
        """Optimisation vector: 6 pose numbers per camera, then 3 per point."""
        return np.concatenate([self.cameras[:, :6].ravel(), self.points.ravel()])

    def with_pose_vector(self, theta) -> "BalDataset":
        theta = np.asarray(theta, dtype=float)
        c = 6 * self.num_cameras
        cams = self.cameras.copy()
        cams[:, :6] = theta[:c].reshape(-1, 6)
        return replace(self, cameras=cams, points=theta[c:].reshape(-1, 3).copy())


# -- text format ----------------------------------------------------------

def _numbers(tokens, line, kind, count):
    try:
        return [kind(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected {count} numbers, got {' '.join(tokens)!r}", line) from None


def parse_bal(stream: TextIO | Iterable[str]) -> BalDataset:
    """Parse a BAL problem: header, observation lines, then camera and point values."""
    lines = iter(stream)
    lineno = 0
    header = None
    for raw in lines:
        lineno += 1
        if raw.strip():
            header = raw.split()
            break
    if header is None:
        raise ParseError("empty file: expected header 'num_cameras num_points num_observations'", lineno)
    if len(header) != 3:
        raise ParseError("header must hold 3 integers: num_cameras num_points num_observations", lineno)
    nc, npt, nobs = _numbers(header, lineno, int, 3)
    if min(nc, npt, nobs) < 0:
        raise ParseError("counts must be non-negative", lineno)

    cam_idx = np.empty(nobs, dtype=np.int64)
    pt_idx = np.empty(nobs, dtype=np.int64)
    obs = np.empty((nobs, 2))
    k = 0
    while k < nobs:
        raw = next(lines, None)
        lineno += 1
        if raw is None:
            raise ParseError(f"expected {nobs} observations, found {k}", lineno)
        tok = raw.split()
        if not tok:
            continue
        if len(tok) != 4:
            raise ParseError(f"observation needs 'camera point x y', got {raw.strip()!r}", lineno)
        try:
            cam_idx[k], pt_idx[k] = int(tok[0]), int(tok[1])
            obs[k] = float(tok[2]), float(tok[3])
        except ValueError:
            raise ParseError(f"malformed observation {raw.strip()!r}", lineno) from None
        k += 1

    need = 9 * nc + 3 * npt
    values = np.empty(need)
    k = 0
    for raw in lines:
        lineno += 1
        tok = raw.split()
        if not tok:
            continue
        if k + len(tok) > need:
            raise ParseError(f"unexpected trailing data after {need} parameter values", lineno)
        values[k:k + len(tok)] = _numbers(tok, lineno, float, len(tok))
        k += len(tok)
    if k < need:
        raise ParseError(f"expected {need} parameter values (9 per camera, 3 per point), found {k}", lineno)
    data = BalDataset(values[:9 * nc].reshape(nc, 9), values[9 * nc:].reshape(npt, 3), cam_idx, pt_idx, obs)
    return data.validate()


def _open_text(path: Path, mode: str):
    if path.suffix == ".bz2":
        return bz2.open(path, mode + "t")
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t")
    return open(path, mode)


def load_bal(path) -> BalDataset:
    path = Path(path)
    with _open_text(path, "r") as fh:
        return parse_bal(fh)


def format_bal(data: BalDataset) -> str:
    out = io.StringIO()
    out.write(f"{data.num_cameras} {data.num_points} {data.num_observations}\n")
    for c, p, (x, y) in zip(data.camera_index, data.point_index, data.observations):
        out.write(f"{c} {p} {x:.17g} {y:.17g}\n")
    for v in np.concatenate([data.cameras.ravel(), data.points.ravel()]):
        out.write(f"{v:.17g}\n")
    return out.getvalue()


def write_bal(data: BalDataset, path) -> None:
    path = Path(path)
    with _open_text(path, "w") as fh:
        fh.write(format_bal(data))


# -- camera model ---------------------------------------------------------

def _skew(v):
    z = np.zeros(v.shape[:-1])
    return np.stack([
        np.stack([z, -v[..., 2], v[..., 1]], -1),
        np.stack([v[..., 2], z, -v[..., 0]], -1),
        np.stack([-v[..., 1], v[..., 0], z], -1),
    ], -2)


def rotation_matrix(w):
    """Rodrigues formula, vectorised over leading axes."""
    w = np.asarray(w, dtype=float)
    th2 = np.sum(w * w, axis=-1)[..., None, None]
    th = np.sqrt(th2)
    small = th2 < 1e-12
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = _skew(w)
    return np.eye(3) + a * K + b * (K @ K)


def right_jacobian(w):
    """J_r with R(w + dw) ~ R(w) exp([J_r(w) dw]_x)."""
    w = np.asarray(w, dtype=float)
    th2 = np.sum(w * w, axis=-1)[..., None, None]
    th = np.sqrt(th2)
    small = th2 < 1e-8
    safe = np.where(small, 1.0, th)
    a = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    b = np.where(small, 1.0 / 6.0 - th2 / 120.0, (safe - np.sin(safe)) / (safe ** 3))
    K = _skew(w)
    return np.eye(3) - a * K + b * (K @ K)


def project(camera, point, jacobians: bool = False):
    """Pixel projection of ``point`` by a BAL ``camera`` (9 numbers), vectorised.

    With ``jacobians`` also returns d x / d pose (…, 2, 6) and d x / d point
    (…, 2, 3).  Depths with |P_3| < 1e-12 yield NaN.
    """
    camera = np.asarray(camera, dtype=float)
    point = np.asarray(point, dtype=float)
    w, t = camera[..., 0:3], camera[..., 3:6]
    f, k1, k2 = camera[..., 6], camera[..., 7], camera[..., 8]
    R = rotation_matrix(w)
    RX = np.einsum("...ij,...j->...i", R, point)
    P = RX + t
    z = P[..., 2]
    bad = np.abs(z) < MIN_DEPTH
    zs = np.where(bad, 1.0, z)
    p = -P[..., :2] / zs[..., None]
    r2 = np.sum(p * p, axis=-1)
    d = 1.0 + k1 * r2 + k2 * r2 * r2
    x = (f * d)[..., None] * p
    x = np.where(bad[..., None], np.nan, x)
    if not jacobians:
        return x
    # dx/dp = f (d I + p (dd/dp)^T), dd/dp = (2 k1 + 4 k2 r2) p
    dd = (2.0 * k1 + 4.0 * k2 * r2)[..., None] * p
    dx_dp = f[..., None, None] * (d[..., None, None] * np.eye(2) + p[..., :, None] * dd[..., None, :])
    iz = 1.0 / zs
    zero = np.zeros_like(iz)
    dp_dP = np.stack([
        np.stack([-iz, zero, P[..., 0] * iz * iz], -1),
        np.stack([zero, -iz, P[..., 1] * iz * iz], -1),
    ], -2)
    dx_dP = dx_dp @ dp_dP
    dP_dw = -R @ _skew(point) @ right_jacobian(w)
    J_pose = np.concatenate([dx_dP @ dP_dw, dx_dP], axis=-1)
    J_point = dx_dP @ R
    return x, J_pose, J_point


class ReprojectionResiduals(ResidualGroup):
    """r_i = measured_i - project(camera_i, point_i); slots (pose 6, point 3)."""

    dim = 2
    slot_dims = (6, 3)

    def __init__(self, data: BalDataset, point_offset: int):
        self.intrinsics = data.cameras[data.camera_index, 6:9]
        self.measured = data.observations
        self.block_ids = np.stack([data.camera_index, point_offset + data.point_index], axis=1)

    def evaluate(self, slot_values, jacobians=True):
        pose, X = slot_values
        cam = np.concatenate([pose, self.intrinsics], axis=1)
        if not jacobians:
            return self.measured - project(cam, X), None
        x, Jc, Jp = project(cam, X, jacobians=True)
        return self.measured - x, [-Jc, -Jp]


def normalize_axis_angle(w: np.ndarray) -> np.ndarray:
    """Map rotation vectors with angle > pi to the equivalent one with angle < pi."""
    th = np.linalg.norm(w, axis=-1, keepdims=True)
    big = th > math.pi
    return np.where(big, w * (1.0 - 2.0 * math.pi / np.where(big, th, 1.0)), w)


class ReprojectionProblem(Problem):
    def __init__(self, data: BalDataset, kernel: RobustKernel):
        data.validate()
        self.dataset = data
        nc = data.num_cameras
        blocks = [ParameterBlock(i, 6, data.cameras[i, :6]) for i in range(nc)]
        blocks += [ParameterBlock(nc + j, 3, data.points[j]) for j in range(data.num_points)]
        super().__init__(blocks, [ReprojectionResiduals(data, nc)], kernel)
        self.num_cameras = nc

    def update(self, theta, delta):
        out = theta + delta
        c = 6 * self.num_cameras
        poses = out[:c].reshape(-1, 6)
        poses[:, :3] = normalize_axis_angle(poses[:, :3])
        return out

    def to_dataset(self, theta) -> BalDataset:
        return self.dataset.with_pose_vector(theta)


def make_reprojection_problem(data: BalDataset, kernel: RobustKernel) -> ReprojectionProblem:
    return ReprojectionProblem(data, kernel)


def inlier_rate(problem: Problem, theta, threshold: float = 1.0) -> float:
    if not threshold > 0:
        raise InvalidArgument("inlier threshold must be positive")
    return inlier_rate_from_norms(problem.residual_norms(theta), threshold)


def inlier_rate_from_norms(norms, threshold: float = 1.0) -> float:
    norms = np.asarray(norms, dtype=float)
    return float(np.mean(norms <= threshold)) if norms.size else 1.0


# -- synthetic scenes -----------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    cameras: int = 10
    points: int = 200
    density: float = 0.5  # fraction of (camera, point) pairs observed
    noise: float = 1.0  # pixel standard deviation per coordinate
    outlier_fraction: float = 0.2
    seed: int = 0
    focal: float = 500.0
    image_size: tuple[float, float] = (640.0, 480.0)
    radius: float = 6.0  # camera distance from the scene centre
    scene_extent: float = 1.0  # points drawn from the cube [-extent, extent]^3
    rotation_perturbation: float = 0.01
    translation_perturbation: float = 0.05
    point_perturbation: float = 0.05
    max_retries: int = 100

    def __post_init__(self):
        for name in ("density", "outlier_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidArgument(f"{name} must lie in [0, 1]")
        if self.cameras < 1 or self.points < 1:
            raise InvalidArgument("need at least one camera and one point")
        if self.noise < 0:
            raise InvalidArgument("noise must be non-negative")


@dataclass
class SynthScene:
    dataset: BalDataset  # noisy observations with perturbed initial parameters
    ground_truth: np.ndarray  # pose vector of the true scene
    outlier_mask: np.ndarray  # (N,) bool

    @property
    def planted_inlier_fraction(self) -> float:
        return 1.0 - float(np.mean(self.outlier_mask)) if self.outlier_mask.size else 1.0

    def true_dataset(self) -> BalDataset:
        return self.dataset.with_pose_vector(self.ground_truth)


def _look_at(center):
    """Axis-angle and translation of a camera at ``center`` looking at the origin (down -z)."""
    zc = center / np.linalg.norm(center)
    up = np.array([0.0, 0.0, 1.0]) if abs(zc[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    xc = np.cross(up, zc)
    xc /= np.linalg.norm(xc)
    yc = np.cross(zc, xc)
    R = np.stack([xc, yc, zc])
    cos = np.clip((np.trace(R) - 1) / 2, -1, 1)
    ang = math.acos(cos)
    if ang < 1e-12:
        w = np.zeros(3)
    else:
        v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        w = ang * v / (2 * math.sin(ang))
    return w, -R @ center


def synth_ba(config: SynthConfig = SynthConfig()) -> SynthScene:
    """Random ring of cameras around a point cloud, with Gaussian pixel noise
    on inliers and exactly round(fraction * N) uniform outliers."""
    rng = np.random.default_rng(config.seed)
    C, Pn = config.cameras, config.points
    cams = np.zeros((C, 9))
    for i in range(C):
        az = 2 * math.pi * i / C + rng.uniform(-0.1, 0.1)
        el = rng.uniform(0.2, 0.6)
        center = config.radius * np.array([math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el)])
        w, t = _look_at(center)
        cams[i] = np.concatenate([w, t, [config.focal, 0.0, 0.0]])
    half = np.asarray(config.image_size) / 2
    pts = np.empty((Pn, 3))
    for j in range(Pn):
        for _ in range(config.max_retries):
            X = rng.uniform(-config.scene_extent, config.scene_extent, 3)
            x = project(cams, np.broadcast_to(X, (C, 3)))
            P3 = (np.einsum("cij,j->ci", rotation_matrix(cams[:, :3]), X) + cams[:, 3:6])[:, 2]
            if np.all(P3 < -0.1) and np.all(np.abs(x) < half):
                break
        else:
            raise InvalidArgument("could not place a point in front of every camera")
        pts[j] = X

    # each point seen by at least two cameras, then extra random pairs up to the density
    min_views = min(2, C)
    pairs = set()
    for j in range(Pn):
        for c in rng.choice(C, size=min_views, replace=False):
            pairs.add((int(c), j))
    target = max(len(pairs), int(round(config.density * C * Pn)))
    rest = [(c, j) for c in range(C) for j in range(Pn) if (c, j) not in pairs]
    extra = rng.permutation(len(rest))[:target - len(pairs)]
    pairs.update(rest[k] for k in extra)
    pairs = sorted(pairs, key=lambda cj: (cj[1], cj[0]))
    ci = np.array([c for c, _ in pairs], dtype=np.int64)
    pj = np.array([j for _, j in pairs], dtype=np.int64)

    clean = project(cams[ci], pts[pj])
    obs = clean + config.noise * rng.standard_normal(clean.shape)
    n = len(ci)
    n_out = int(round(config.outlier_fraction * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=n_out, replace=False)] = True
    obs[mask] = rng.uniform(-half, half, size=(n_out, 2))

    truth = BalDataset(cams, pts, ci, pj, obs)
    gt = truth.pose_vector()
    init_cams = cams.copy()
    init_cams[:, :3] += config.rotation_perturbation * rng.standard_normal((C, 3))
    init_cams[:, 3:6] += config.translation_perturbation * rng.standard_normal((C, 3))
    init_pts = pts + config.point_perturbation * rng.standard_normal(pts.shape)
    data = BalDataset(init_cams, init_pts, ci, pj, obs).validate()
    return SynthScene(data, gt, mask)

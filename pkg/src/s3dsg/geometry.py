"""3D primitives shared by the graph, visibility, and evaluation code.

Points in bulk (instance clouds) travel as ``(N, 3)`` float arrays; single
positions use :class:`Vec3` so field names stay visible in serialized files.
All coordinates are meters in the world frame unless a function says
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Vec3",
    "Quat",
    "Aabb",
    "RigidTransform",
    "as_points",
    "voxel_iou",
]


@dataclass(frozen=True)
class Vec3:
    """A 3D position or direction with finite components."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite component in Vec3: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        a = np.asarray(a, dtype=float)
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Vec3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class Quat:
    """Unit quaternion, scalar-first (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    UNIT_TOL = 1e-6

    @staticmethod
    def identity() -> "Quat":
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle_rad: float) -> "Quat":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ValueError("zero rotation axis")
        axis = axis / n
        half = 0.5 * angle_rad
        s = math.sin(half)
        return Quat(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> "Quat":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize zero quaternion")
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def __mul__(self, other: "Quat") -> "Quat":
        """Hamilton product; ``(a * b).rotate(v) == a.rotate(b.rotate(v))``."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def rotate(self, v) -> np.ndarray:
        return self.rotation_matrix() @ np.asarray(v, dtype=float)

    @staticmethod
    def from_rotation_matrix(m) -> "Quat":
        """Shepperd's method; tolerant of small numeric drift in ``m``."""
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0:
            s = math.sqrt(t + 1.0) * 2
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return Quat(w, x, y, z).normalized()


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box given by opposite corners."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        if not (self.lo.x <= self.hi.x and self.lo.y <= self.hi.y and self.lo.z <= self.hi.z):
            raise ValueError(f"inverted Aabb: lo={self.lo} hi={self.hi}")

    @staticmethod
    def from_points(points) -> "Aabb":
        pts = as_points(points)
        if pts.shape[0] == 0:
            raise ValueError("cannot bound an empty point set")
        return Aabb(Vec3.from_array(pts.min(axis=0)), Vec3.from_array(pts.max(axis=0)))

    def contains(self, p: Vec3, margin: float = 0.0) -> bool:
        return (
            self.lo.x - margin <= p.x <= self.hi.x + margin
            and self.lo.y - margin <= p.y <= self.hi.y + margin
            and self.lo.z - margin <= p.z <= self.hi.z + margin
        )

    def encloses_points(self, points, tol: float = 1e-9) -> bool:
        pts = as_points(points)
        lo = self.lo.as_array() - tol
        hi = self.hi.as_array() + tol
        return bool(np.all(pts >= lo) and np.all(pts <= hi))

    def volume(self) -> float:
        d = self.hi.as_array() - self.lo.as_array()
        return float(np.prod(d))

    def iou(self, other: "Aabb") -> float:
        lo = np.maximum(self.lo.as_array(), other.lo.as_array())
        hi = np.minimum(self.hi.as_array(), other.hi.as_array())
        if np.any(hi <= lo):
            return 0.0
        inter = float(np.prod(hi - lo))
        union = self.volume() + other.volume() - inter
        if union <= 0:
            return 0.0
        return inter / union

    def center(self) -> Vec3:
        return Vec3.from_array((self.lo.as_array() + self.hi.as_array()) / 2.0)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation; maps local coordinates to world."""

    rotation: Quat
    translation: Vec3

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(Quat.identity(), Vec3(0.0, 0.0, 0.0))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        r = m[:3, :3]
        # Rigid transforms have orthonormal rotation blocks; reject shears.
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise ValueError("rotation block is not orthonormal")
        return RigidTransform(Quat.from_rotation_matrix(r), Vec3.from_array(m[:3, 3]))

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.rotation_matrix()
        m[:3, 3] = self.translation.as_array()
        return m

    def apply(self, points) -> np.ndarray:
        pts = as_points(points)
        return pts @ self.rotation.rotation_matrix().T + self.translation.as_array()

    def apply_vec(self, v: Vec3) -> Vec3:
        return Vec3.from_array(self.apply(v.as_array().reshape(1, 3))[0])

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.conjugate()
        t = -rinv.rotate(self.translation.as_array())
        return RigidTransform(rinv, Vec3.from_array(t))


def as_points(points) -> np.ndarray:
    """Coerce point-cloud input to a contiguous ``(N, 3)`` float array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 0:
        return pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


def voxel_iou(points_a, points_b, voxel_size: float = 0.05) -> float:
    """Occupancy IoU of two clouds on a shared voxel lattice.

    Point clouds have no volume of their own, so overlap is measured on the
    set of ``voxel_size`` cells each cloud touches.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    a = as_points(points_a)
    b = as_points(points_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0.0
    va = {tuple(ijk) for ijk in np.floor(a / voxel_size).astype(np.int64)}
    vb = {tuple(ijk) for ijk in np.floor(b / voxel_size).astype(np.int64)}
    inter = len(va & vb)
    union = len(va | vb)
    return inter / union if union else 0.0

"""Shared geometric, image, and time primitives.

Units: millimeters for lengths, radians for angles, seconds in physics,
integer microseconds on the wire and in stream timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Pose6D",
    "HeightMap",
    "RgbImage",
    "rotvec_to_matrix",
    "matrix_to_rotvec",
    "pose_compose",
    "pose_inverse",
]


def rotvec_to_matrix(r) -> np.ndarray:
    """Rotation matrix from a rotation vector (Rodrigues formula)."""
    r = np.asarray(r, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.eye(3)
    k = r / theta
    kx, ky, kz = k
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def matrix_to_rotvec(m: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix; magnitude in [0, pi]."""
    m = np.asarray(m, dtype=np.float64)
    trace = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(trace))
    if theta < 1e-12:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # Near a half turn the off-diagonal difference vanishes; recover the
        # axis from the symmetric part instead.
        a = (m + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(a), 0.0))
        # Fix signs using the largest component.
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis = a[i] / axis[i]
        n = np.linalg.norm(axis)
        if n > 0:
            axis = axis / n
        return theta * axis
    axis = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return theta / (2.0 * np.sin(theta)) * axis


def _normalize_rotvec(r: np.ndarray) -> np.ndarray:
    """Wrap a rotation vector so its magnitude lies in [0, pi]."""
    theta = float(np.linalg.norm(r))
    if theta <= np.pi or theta < 1e-12:
        return r
    # Equivalent rotation with angle wrapped into (-pi, pi].
    wrapped = np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi
    return r * (wrapped / theta)


@dataclass(frozen=True)
class Pose6D:
    """Rigid transform: translation in mm plus rotation vector in radians."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise DomainError("pose components must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", _normalize_rotvec(r))

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        m = np.eye(4)
        m[:3, :3] = rotvec_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        rot = rotvec_to_matrix(self.rotation)
        return np.asarray(points) @ rot.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors of shape (..., 3)."""
        rot = rotvec_to_matrix(self.rotation)
        return np.asarray(vectors) @ rot.T

    @staticmethod
    def identity() -> "Pose6D":
        return Pose6D()


def pose_compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """Composition a . b: apply b first, then a."""
    ra = rotvec_to_matrix(a.rotation)
    rb = rotvec_to_matrix(b.rotation)
    return Pose6D(
        translation=ra @ b.translation + a.translation,
        rotation=matrix_to_rotvec(ra @ rb),
    )


def pose_inverse(p: Pose6D) -> Pose6D:
    r = rotvec_to_matrix(p.rotation)
    return Pose6D(translation=-(r.T @ p.translation), rotation=-p.rotation)


@dataclass(frozen=True)
class HeightMap:
    """Regular grid of depths in mm.

    Sample points sit at ``origin + index * resolution``; ``values[i, j]``
    is the depth at y-index i, x-index j.
    """

    values: np.ndarray
    resolution: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise DomainError("heightmap must be at least 2x2")
        if not self.resolution > 0:
            raise DomainError("resolution must be positive")
        if not np.all(np.isfinite(v)):
            raise DomainError("heightmap values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def extent(self) -> tuple:
        """(xmin, xmax, ymin, ymax) of the sampled domain in mm."""
        x0, y0 = self.origin
        return (
            x0,
            x0 + (self.width - 1) * self.resolution,
            y0,
            y0 + (self.height - 1) * self.resolution,
        )

    def sample(self, x, y):
        """Bilinear interpolation at (x, y) mm; arrays broadcast.

        Raises DomainError for queries outside the map extent.
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        xmin, xmax, ymin, ymax = self.extent
        eps = 1e-9 * self.resolution
        if np.any(x < xmin - eps) or np.any(x > xmax + eps) or np.any(y < ymin - eps) or np.any(y > ymax + eps):
            raise DomainError("heightmap query outside extent")
        return self._sample_unchecked(x, y)

    def _sample_unchecked(self, x, y):
        """Bilinear interpolation when the caller guarantees the extent."""
        xmin, _, ymin, _ = self.extent
        gx = np.clip((x - xmin) / self.resolution, 0.0, self.width - 1.0)
        gy = np.clip((y - ymin) / self.resolution, 0.0, self.height - 1.0)
        j0 = np.minimum(gx.astype(int), self.width - 2)
        i0 = np.minimum(gy.astype(int), self.height - 2)
        fx = gx - j0
        fy = gy - i0
        v = self.values
        return (
            v[i0, j0] * (1 - fx) * (1 - fy)
            + v[i0, j0 + 1] * fx * (1 - fy)
            + v[i0 + 1, j0] * (1 - fx) * fy
            + v[i0 + 1, j0 + 1] * fx * fy
        )


def heightmap_sample(h: HeightMap, x: float, y: float) -> float:
    """Bilinear depth at a single (x, y) query in mm."""
    return float(h.sample(x, y))


@dataclass(frozen=True)
class RgbImage:
    """H x W x 3 float image with channels clamped to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise DomainError("rgb image must have shape (H, W, 3)")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def to_uint8(self) -> np.ndarray:
        return np.round(self.values * 255.0).astype(np.uint8)

    @staticmethod
    def from_uint8(data: np.ndarray) -> "RgbImage":
        return RgbImage(np.asarray(data, dtype=np.float64) / 255.0)

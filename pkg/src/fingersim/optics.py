"""Ray-tracing validation of the finger's internal optical path.

Traces camera pixels through an optional curved mirror onto the acrylic
back plate and the side windows, and computes the three design metrics:
plate coverage, incidence orthogonality, and magnification distortion.

All geometry lives in one finger frame: the plate spans x in [0, length],
y in [0, width] at z = 0 with inner normal +z; the camera and mirror sit
at z > 0. The mirror is a sagittal (x-z plane) curve extruded along y.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import configio
from .core import Pose6D, rotvec_to_matrix
from .errors import ConfigurationError, DomainError

__all__ = [
    "CameraModel",
    "Rect3D",
    "BackPlate",
    "MirrorProfile",
    "FingerOptics",
    "PlateHit",
    "WindowHit",
    "Miss",
    "reflect",
    "trace_pixel",
    "trace_all",
    "coverage_metric",
    "orthogonality_metric",
    "distortion_metric",
    "pixel_plate_map",
    "PixelPlateMap",
    "unfold_flat_mirror",
    "mirror_free_baseline",
    "search_mirror_design",
    "camera_pose",
    "load_optics_config",
    "save_optics_config",
    "default_optics",
    "optics_report",
]

_EPS = 1e-9


def reflect(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Specular reflection of direction(s) d about unit normal(s) n."""
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def camera_pose(position, pitch_deg: float) -> Pose6D:
    """Camera pose whose optical axis lies in the sagittal plane.

    pitch_deg = 0 looks along +x; positive pitch tilts the axis up (+z).
    The camera x axis (pixel u) runs along finger +y.
    """
    th = np.deg2rad(pitch_deg)
    z_cam = np.array([np.cos(th), 0.0, np.sin(th)])
    x_cam = np.array([0.0, 1.0, 0.0])
    y_cam = np.cross(z_cam, x_cam)
    rot = np.column_stack([x_cam, y_cam, z_cam])
    from .core import matrix_to_rotvec

    return Pose6D(translation=np.asarray(position, dtype=float), rotation=matrix_to_rotvec(rot))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a diagonal field of view."""

    resolution: tuple = (640, 480)
    fov_deg: float = 120.0
    pose: Pose6D = field(default_factory=Pose6D)

    def __post_init__(self):
        w, h = self.resolution
        if w < 2 or h < 2:
            raise ConfigurationError("camera resolution must be at least 2x2")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigurationError("diagonal FoV must lie in (0, 180) degrees")

    @property
    def focal_px(self) -> float:
        w, h = self.resolution
        half_diag = 0.5 * np.hypot(w, h)
        return half_diag / np.tan(np.deg2rad(self.fov_deg) / 2.0)

    def pixel_dirs(self) -> np.ndarray:
        """Unit ray directions in the finger frame, shape (H, W, 3)."""
        w, h = self.resolution
        f = self.focal_px
        u = (np.arange(w) + 0.5 - w / 2.0) / f
        v = (np.arange(h) + 0.5 - h / 2.0) / f
        uu, vv = np.meshgrid(u, v)
        dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        rot = rotvec_to_matrix(self.pose.rotation)
        return dirs @ rot.T

    def ray_for_pixel(self, u: int, v: int) -> np.ndarray:
        w, h = self.resolution
        if not (0 <= u < w and 0 <= v < h):
            raise DomainError(f"pixel ({u}, {v}) outside {w}x{h} resolution")
        f = self.focal_px
        d = np.array([(u + 0.5 - w / 2.0) / f, (v + 0.5 - h / 2.0) / f, 1.0])
        d /= np.linalg.norm(d)
        return rotvec_to_matrix(self.pose.rotation) @ d


@dataclass(frozen=True)
class Rect3D:
    """Planar rectangle: local x in [0, size[0]], y in [0, size[1]], z = 0."""

    size: tuple = (100.0, 25.0)
    pose: Pose6D = field(default_factory=Pose6D)

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ConfigurationError("rectangle side lengths must be positive")

    @property
    def normal(self) -> np.ndarray:
        return rotvec_to_matrix(self.pose.rotation)[:, 2]

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        """Ray-rectangle intersection.

        Returns (t, u, v): t is inf where the ray misses; (u, v) are local
        plane coordinates in mm.
        """
        rot = rotvec_to_matrix(self.pose.rotation)
        o_local = (origin - self.pose.translation) @ rot
        d_local = dirs @ rot
        dz = d_local[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(dz) > 1e-15, -o_local[..., 2] / dz, np.inf)
        pu = o_local[..., 0] + t * d_local[..., 0]
        pv = o_local[..., 1] + t * d_local[..., 1]
        ok = (
            (t > _EPS)
            & np.isfinite(t)
            & (pu >= 0.0)
            & (pu <= self.size[0])
            & (pv >= 0.0)
            & (pv <= self.size[1])
        )
        return np.where(ok, t, np.inf), pu, pv


class BackPlate(Rect3D):
    """The acrylic sensing plate; default 100 mm x 25 mm at z = 0."""


def _wrap_angle(a):
    return np.mod(a + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class MirrorProfile:
    """Sagittal mirror curve extruded along finger y.

    kinds:
      flat  -- segment p0 -> p1 in the x-z plane
      arc   -- circular arc through p0, p1 with signed radius (sign picks
               the bulge side relative to the chord's CCW normal)
      conic -- conic-section sag profile around a vertex, sampled to a
               polyline (vertex, axis_deg, radius, conic_k, half_extent)
    """

    kind: str = "flat"
    p0: tuple = (0.0, 40.0)
    p1: tuple = (100.0, 20.0)
    y_range: tuple = (0.0, 25.0)
    radius: float = 0.0
    vertex: tuple = (50.0, 30.0)
    axis_deg: float = 0.0
    conic_k: float = 0.0
    half_extent: float = 50.0
    samples: int = 1024

    def __post_init__(self):
        if self.kind not in ("flat", "arc", "conic"):
            raise ConfigurationError(f"unknown mirror kind {self.kind!r}")
        if self.y_range[0] >= self.y_range[1]:
            raise ConfigurationError("mirror y_range must be ordered")
        if self.kind == "arc":
            chord = np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])
            if abs(self.radius) < chord / 2.0:
                raise ConfigurationError("arc radius smaller than half the chord")

    # -- arc bookkeeping ------------------------------------------------
    def _arc_geometry(self):
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        chord = p1 - p0
        length = np.linalg.norm(chord)
        mid = (p0 + p1) / 2.0
        n_hat = np.array([-chord[1], chord[0]]) / length
        h = np.sqrt(self.radius**2 - (length / 2.0) ** 2)
        center = mid - np.sign(self.radius) * n_hat * h
        a0 = np.arctan2(p0[1] - center[1], p0[0] - center[0])
        a1 = np.arctan2(p1[1] - center[1], p1[0] - center[0])
        span = _wrap_angle(a1 - a0)
        return center, abs(self.radius), a0, span

    def sample_points(self, n: int | None = None) -> np.ndarray:
        """Ordered polyline approximation of the sagittal curve, shape (n, 2)."""
        n = n or self.samples
        if self.kind == "flat":
            ts = np.linspace(0.0, 1.0, 2)[:, None]
            return np.asarray(self.p0) + ts * (np.asarray(self.p1) - np.asarray(self.p0))
        if self.kind == "arc":
            center, r, a0, span = self._arc_geometry()
            ang = a0 + span * np.linspace(0.0, 1.0, n)
            return center + r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        # conic: sag profile s -> s^2 / (R (1 + sqrt(1 - (1+k) s^2 / R^2)))
        s = np.linspace(-self.half_extent, self.half_extent, n)
        r, k = self.radius, self.conic_k
        disc = np.maximum(1.0 - (1.0 + k) * s**2 / r**2, 0.0)
        sag = s**2 / (r * (1.0 + np.sqrt(disc)))
        th = np.deg2rad(self.axis_deg)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        pts = np.stack([s, sag], axis=-1) @ rot.T
        return pts + np.asarray(self.vertex)

    def contains_point(self, position, thickness: float = 2.0) -> bool:
        """True when `position` lies inside the mirror's material shell.

        The shell sits behind the reflective face: within `thickness` of the
        sagittal curve, inside the y extrusion.
        """
        x, y, z = position
        if not (self.y_range[0] <= y <= self.y_range[1]):
            return False
        pts = self.sample_points(256)
        d = np.hypot(pts[:, 0] - x, pts[:, 1] - z)
        return bool(np.min(d) < thickness)

    # -- intersection ---------------------------------------------------
    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        """Nearest ray-mirror hit: (t, unit normal); t = inf where missed."""
        if self.kind == "arc":
            return self._intersect_arc(origin, dirs)
        pts = self.sample_points(2 if self.kind == "flat" else None)
        return self._intersect_polyline(origin, dirs, pts)

    def _intersect_arc(self, origin, dirs):
        center, r, a0, span = self._arc_geometry()
        ox, oz = origin[0] - center[0], origin[2] - center[1]
        dx, dz = dirs[..., 0], dirs[..., 2]
        a = dx**2 + dz**2
        b = 2.0 * (ox * dx + oz * dz)
        c = ox**2 + oz**2 - r**2
        disc = b**2 - 4.0 * a * c
        ok = (disc >= 0.0) & (a > 1e-18)
        sq = np.sqrt(np.maximum(disc, 0.0))
        best_t = np.full(dirs.shape[:-1], np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            for sign in (-1.0, 1.0):
                t = np.where(ok, (-b + sign * sq) / (2.0 * a), np.inf)
                px = origin[0] + t * dirs[..., 0]
                py = origin[1] + t * dirs[..., 1]
                pz = origin[2] + t * dirs[..., 2]
                rel_ang = _wrap_angle(np.arctan2(pz - center[1], px - center[0]) - a0)
                on_arc = (rel_ang >= min(0.0, span)) & (rel_ang <= max(0.0, span))
                in_y = (py >= self.y_range[0]) & (py <= self.y_range[1])
                valid = (t > _EPS) & np.isfinite(t) & on_arc & in_y
                best_t = np.where(valid & (t < best_t), t, best_t)
        hit = origin + best_t[..., None] * dirs
        n = np.zeros_like(dirs)
        n[..., 0] = hit[..., 0] - center[0]
        n[..., 2] = hit[..., 2] - center[1]
        with np.errstate(invalid="ignore"):
            n /= np.maximum(np.linalg.norm(n, axis=-1, keepdims=True), 1e-30)
        return best_t, n

    def _intersect_polyline(self, origin, dirs, pts):
        best_t = np.full(dirs.shape[:-1], np.inf)
        best_n = np.zeros_like(dirs)
        for i in range(len(pts) - 1):
            p0, p1 = pts[i], pts[i + 1]
            seg = p1 - p0
            seg_len = np.linalg.norm(seg)
            if seg_len < 1e-12:
                continue
            c_hat = seg / seg_len
            n2 = np.array([-c_hat[1], c_hat[0]])
            denom = dirs[..., 0] * n2[0] + dirs[..., 2] * n2[1]
            num = (p0[0] - origin[0]) * n2[0] + (p0[1] - origin[2]) * n2[1]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(np.abs(denom) > 1e-15, num / denom, np.inf)
            hx = origin[0] + t * dirs[..., 0]
            hy = origin[1] + t * dirs[..., 1]
            hz = origin[2] + t * dirs[..., 2]
            s = (hx - p0[0]) * c_hat[0] + (hz - p0[1]) * c_hat[1]
            valid = (
                (t > _EPS)
                & np.isfinite(t)
                & (s >= 0.0)
                & (s <= seg_len)
                & (hy >= self.y_range[0])
                & (hy <= self.y_range[1])
            )
            better = valid & (t < best_t)
            if np.any(better):
                best_t = np.where(better, t, best_t)
                best_n[better] = np.array([n2[0], 0.0, n2[1]])
        return best_t, best_n


@dataclass(frozen=True)
class PlateHit:
    point: tuple
    incidence: float


@dataclass(frozen=True)
class WindowHit:
    window: int
    point: tuple


class Miss:
    def __repr__(self):
        return "Miss()"

    def __eq__(self, other):
        return isinstance(other, Miss)

    def __hash__(self):
        return hash("Miss")


@dataclass(frozen=True)
class FingerOptics:
    """Full optical assembly in one finger frame."""

    camera: CameraModel = field(default_factory=CameraModel)
    mirror: MirrorProfile | None = None
    plate: BackPlate = field(default_factory=BackPlate)
    side_windows: tuple = ()
    baffles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "side_windows", tuple(self.side_windows))
        object.__setattr__(self, "baffles", tuple(self.baffles))


@dataclass
class TraceResult:
    """Per-pixel classification arrays from a full trace."""

    kind: np.ndarray  # (H, W) uint8: 0 miss, 1 plate, 2 window
    plate_xy: np.ndarray  # (H, W, 2) local plate mm (nan where not plate)
    incidence: np.ndarray  # (H, W) radians (nan where not plate)
    window_id: np.ndarray  # (H, W) int16 (-1 where not window)
    window_uv: np.ndarray  # (H, W, 2) local window mm
    reflected: np.ndarray  # (H, W) bool: path included a mirror bounce

    KIND_MISS = 0
    KIND_PLATE = 1
    KIND_WINDOW = 2


def _closest_surface(ts):
    """Stack per-surface t arrays and pick the nearest hit per ray.

    Ties go to the lowest index, so windows must precede the coplanar wall
    baffles they are cut into.
    """
    stack = np.stack(ts, axis=0)
    idx = np.argmin(stack, axis=0)
    best = np.take_along_axis(stack, idx[None], axis=0)[0]
    return idx, best


def _classify_stage(optics: FingerOptics, origins, dirs, out, sel):
    """Intersect `dirs[sel]` with plate/windows/baffles and fill `out`.

    `origins` is either the shared camera origin (3,) or per-ray origins with
    the same leading shape as `dirs`. Baffle hits stay classified as miss.
    """
    kind, plate_xy, incidence, window_id, window_uv = out
    o = origins if origins.ndim == 1 else origins[sel]
    d = dirs[sel]
    surfaces = [optics.plate.intersect(o, d)]
    for win in optics.side_windows:
        surfaces.append(win.intersect(o, d))
    ts = [s[0] for s in surfaces] + [b.intersect(o, d)[0] for b in optics.baffles]
    idx, best = _closest_surface(ts)
    hit = np.isfinite(best)

    flat_index = np.flatnonzero(sel.reshape(-1))
    plate_n = optics.plate.normal

    psel = hit & (idx == 0)
    tgt = flat_index[psel]
    kind.reshape(-1)[tgt] = TraceResult.KIND_PLATE
    plate_xy.reshape(-1, 2)[tgt, 0] = surfaces[0][1][psel]
    plate_xy.reshape(-1, 2)[tgt, 1] = surfaces[0][2][psel]
    cosang = np.abs(d[psel] @ plate_n)
    incidence.reshape(-1)[tgt] = np.arccos(np.clip(cosang, -1.0, 1.0))
    for k in range(len(optics.side_windows)):
        wsel = hit & (idx == 1 + k)
        tgt = flat_index[wsel]
        kind.reshape(-1)[tgt] = TraceResult.KIND_WINDOW
        window_id.reshape(-1)[tgt] = k
        window_uv.reshape(-1, 2)[tgt, 0] = surfaces[1 + k][1][wsel]
        window_uv.reshape(-1, 2)[tgt, 1] = surfaces[1 + k][2][wsel]


def _trace_rays(optics: FingerOptics, origin: np.ndarray, dirs: np.ndarray) -> TraceResult:
    """Trace rays from one origin through the assembly, one bounce max."""
    if optics.mirror is not None and optics.mirror.contains_point(origin):
        raise ConfigurationError("camera sits inside the mirror volume")
    shape = dirs.shape[:-1]
    kind = np.zeros(shape, dtype=np.uint8)
    plate_xy = np.full(shape + (2,), np.nan)
    incidence = np.full(shape, np.nan)
    window_id = np.full(shape, -1, dtype=np.int16)
    window_uv = np.full(shape + (2,), np.nan)
    reflected = np.zeros(shape, dtype=bool)
    out = (kind, plate_xy, incidence, window_id, window_uv)

    if optics.mirror is None:
        _classify_stage(optics, origin, dirs, out, np.ones(shape, dtype=bool))
        return TraceResult(kind, plate_xy, incidence, window_id, window_uv, reflected)

    # Stage 1: does the mirror win the nearest-hit race?
    ts = [optics.plate.intersect(origin, dirs)[0]]
    for win in optics.side_windows:
        ts.append(win.intersect(origin, dirs)[0])
    for baf in optics.baffles:
        ts.append(baf.intersect(origin, dirs)[0])
    mirror_t, mirror_n = optics.mirror.intersect(origin, dirs)
    ts.append(mirror_t)
    idx, best = _closest_surface(ts)
    mirror_first = np.isfinite(best) & (idx == len(ts) - 1)

    direct = ~mirror_first
    if np.any(direct):
        _classify_stage(optics, origin, dirs, out, direct)
    if np.any(mirror_first):
        d_m = dirs[mirror_first]
        hits = origin + mirror_t[mirror_first][:, None] * d_m
        d_ref = reflect(d_m, mirror_n[mirror_first])
        # Nudge past the surface so the bounce point itself cannot re-hit.
        origins2 = hits + 1e-6 * d_ref
        sub_dirs = np.full(shape + (3,), np.nan)
        sub_origins = np.zeros(shape + (3,))
        sub_dirs[mirror_first] = d_ref
        sub_origins[mirror_first] = origins2
        _classify_stage(optics, sub_origins, sub_dirs, out, mirror_first)
        reflected[mirror_first] = True
    return TraceResult(kind, plate_xy, incidence, window_id, window_uv, reflected)


def trace_all(optics: FingerOptics) -> TraceResult:
    """Trace every camera pixel through the assembly (vectorized)."""
    cam = optics.camera
    return _trace_rays(optics, cam.pose.translation, cam.pixel_dirs())


def trace_pixel(optics: FingerOptics, pixel):
    """Classify one pixel's ray; consistent with trace_all by construction."""
    u, v = pixel
    d = optics.camera.ray_for_pixel(u, v).reshape(1, 1, 3)
    res = _trace_rays(optics, optics.camera.pose.translation, d)
    if res.kind[0, 0] == TraceResult.KIND_PLATE:
        return PlateHit(point=tuple(res.plate_xy[0, 0]), incidence=float(res.incidence[0, 0]))
    if res.kind[0, 0] == TraceResult.KIND_WINDOW:
        return WindowHit(window=int(res.window_id[0, 0]), point=tuple(res.window_uv[0, 0]))
    return Miss()


def coverage_metric(optics: FingerOptics, grid_density: float = 2.0, trace: TraceResult | None = None) -> float:
    """Fraction of plate area reachable by at least one pixel ray."""
    res = trace if trace is not None else trace_all(optics)
    lx, ly = optics.plate.size
    nx = max(1, int(round(lx * grid_density)))
    ny = max(1, int(round(ly * grid_density)))
    mask = res.kind == TraceResult.KIND_PLATE
    if not np.any(mask):
        return 0.0
    px = res.plate_xy[mask, 0]
    py = res.plate_xy[mask, 1]
    ix = np.clip((px / lx * nx).astype(int), 0, nx - 1)
    iy = np.clip((py / ly * ny).astype(int), 0, ny - 1)
    occ = np.zeros((ny, nx), dtype=bool)
    occ[iy, ix] = True
    return float(occ.sum()) / float(nx * ny)


def orthogonality_metric(optics: FingerOptics, trace: TraceResult | None = None):
    """(mean, max) incidence angle in radians over all plate hits."""
    res = trace if trace is not None else trace_all(optics)
    mask = res.kind == TraceResult.KIND_PLATE
    if not np.any(mask):
        raise DomainError("no plate coverage; orthogonality undefined")
    inc = res.incidence[mask]
    return float(np.mean(inc)), float(np.max(inc))


def distortion_metric(optics: FingerOptics, trace: TraceResult | None = None) -> float:
    """Coefficient of variation of local pixel->plate magnification."""
    res = trace if trace is not None else trace_all(optics)
    if coverage_metric(optics, trace=res) <= 0.5:
        raise DomainError("coverage below 0.5; distortion metric undefined")
    plate = res.kind == TraceResult.KIND_PLATE
    xy = res.plate_xy
    du = xy[:, 1:] - xy[:, :-1]
    dv = xy[1:, :] - xy[:-1, :]
    du_ok = plate[:, 1:] & plate[:, :-1]
    dv_ok = plate[1:, :] & plate[:-1, :]
    # Frobenius norm of the 2x2 Jacobian where both one-pixel steps exist.
    both = du_ok[:-1] & dv_ok[:, :-1]
    ju = du[:-1][both]
    jv = dv[:, :-1][both]
    mags = np.sqrt(np.sum(ju**2, axis=-1) + np.sum(jv**2, axis=-1))
    if mags.size < 16:
        raise DomainError("too few interior plate pixels for distortion")
    return float(np.std(mags) / np.mean(mags))


@dataclass
class PixelPlateMap:
    """Dense pixel -> surface lookup consumed by frame compositing."""

    kind: np.ndarray
    plate_xy: np.ndarray
    window_id: np.ndarray
    window_uv: np.ndarray
    incidence: np.ndarray
    plate_size: tuple = (100.0, 25.0)
    window_sizes: tuple = ()

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            kind=self.kind,
            plate_xy=self.plate_xy,
            window_id=self.window_id,
            window_uv=self.window_uv,
            incidence=self.incidence,
            plate_size=np.asarray(self.plate_size),
            window_sizes=np.asarray(self.window_sizes).reshape(-1, 2),
        )

    @staticmethod
    def load(path) -> "PixelPlateMap":
        data = np.load(path)
        return PixelPlateMap(
            kind=data["kind"],
            plate_xy=data["plate_xy"],
            window_id=data["window_id"],
            window_uv=data["window_uv"],
            incidence=data["incidence"],
            plate_size=tuple(data["plate_size"]),
            window_sizes=tuple(tuple(row) for row in data["window_sizes"]),
        )

    def counts(self) -> dict:
        return {
            "plate": int(np.sum(self.kind == TraceResult.KIND_PLATE)),
            "window": int(np.sum(self.kind == TraceResult.KIND_WINDOW)),
            "miss": int(np.sum(self.kind == TraceResult.KIND_MISS)),
        }


def pixel_plate_map(optics: FingerOptics, trace: TraceResult | None = None) -> PixelPlateMap:
    res = trace if trace is not None else trace_all(optics)
    return PixelPlateMap(
        kind=res.kind.copy(),
        plate_xy=res.plate_xy.copy(),
        window_id=res.window_id.copy(),
        window_uv=res.window_uv.copy(),
        incidence=res.incidence.copy(),
        plate_size=tuple(optics.plate.size),
        window_sizes=tuple(tuple(w.size) for w in optics.side_windows),
    )


def unfold_flat_mirror(optics: FingerOptics) -> FingerOptics:
    """Replace a flat mirror by the mirrored (unfolded) camera.

    Valid for configurations where every plate ray reflects exactly once.
    The unfolded camera flips one pixel axis to stay right-handed, which
    leaves all three metrics unchanged.
    """
    m = optics.mirror
    if m is None or m.kind != "flat":
        raise ConfigurationError("unfolding requires a flat mirror")
    p0 = np.array([m.p0[0], 0.0, m.p0[1]])
    c_hat = np.array([m.p1[0] - m.p0[0], 0.0, m.p1[1] - m.p0[1]])
    c_hat /= np.linalg.norm(c_hat)
    n = np.array([-c_hat[2], 0.0, c_hat[0]])
    house = np.eye(3) - 2.0 * np.outer(n, n)
    cam = optics.camera
    c_mirrored = house @ (cam.pose.translation - p0) + p0
    rot = rotvec_to_matrix(cam.pose.rotation)
    rot_mirrored = house @ rot @ np.diag([-1.0, 1.0, 1.0])
    from .core import matrix_to_rotvec

    new_pose = Pose6D(translation=c_mirrored, rotation=matrix_to_rotvec(rot_mirrored))
    new_cam = CameraModel(resolution=cam.resolution, fov_deg=cam.fov_deg, pose=new_pose)
    return replace(optics, camera=new_cam, mirror=None)


def mirror_free_baseline(optics: FingerOptics, n_aims: int = 17):
    """Best (lowest) mean plate incidence achievable without the mirror.

    Sweeps camera aim points along the plate centerline from the same
    camera position and returns (best mean incidence, per-aim list).
    """
    cam = optics.camera
    pos = cam.pose.translation
    lx, ly = optics.plate.size
    results = []
    for x_aim in np.linspace(0.02 * lx, 0.98 * lx, n_aims):
        target = optics.plate.pose.apply(np.array([x_aim, ly / 2.0, 0.0]))
        z_axis = target - pos
        nz = np.linalg.norm(z_axis)
        if nz < 1e-9:
            continue
        z_axis = z_axis / nz
        ref = np.array([0.0, 1.0, 0.0])
        x_axis = ref - z_axis * (ref @ z_axis)
        if np.linalg.norm(x_axis) < 1e-6:
            x_axis = np.array([1.0, 0.0, 0.0]) - z_axis * z_axis[0]
        x_axis /= np.linalg.norm(x_axis)
        y_axis = np.cross(z_axis, x_axis)
        from .core import matrix_to_rotvec

        pose = Pose6D(pos, matrix_to_rotvec(np.column_stack([x_axis, y_axis, z_axis])))
        candidate = replace(
            optics,
            camera=CameraModel(cam.resolution, cam.fov_deg, pose),
            mirror=None,
        )
        res = trace_all(candidate)
        mask = res.kind == TraceResult.KIND_PLATE
        if not np.any(mask):
            continue
        mean_inc = float(np.mean(res.incidence[mask]))
        cov = coverage_metric(candidate, trace=res)
        results.append({"aim_x": float(x_aim), "mean_incidence": mean_inc, "coverage": cov})
    if not results:
        raise DomainError("no mirror-free aim reaches the plate")
    best = min(r["mean_incidence"] for r in results)
    return best, results


def search_mirror_design(
    base: FingerOptics,
    radii,
    tilts_deg,
    offsets,
    chord_mid_x: float = 52.0,
    chord_len: float = 112.0,
    resolution=(160, 120),
    grid_density: float = 2.0,
    coverage_floor: float = 0.99,
):
    """Coarse grid search for the arc mirror minimizing distortion.

    Candidates failing the coverage floor are kept (flagged) but rank last.
    Returns candidates sorted best-first.
    """
    cam = CameraModel(resolution=resolution, fov_deg=base.camera.fov_deg, pose=base.camera.pose)
    candidates = []
    for radius in radii:
        for tilt in tilts_deg:
            for offset in offsets:
                th = np.deg2rad(tilt)
                half = chord_len / 2.0
                p0 = (chord_mid_x - half * np.cos(th), offset - half * np.sin(th))
                p1 = (chord_mid_x + half * np.cos(th), offset + half * np.sin(th))
                try:
                    mirror = MirrorProfile(
                        kind="arc", p0=p0, p1=p1, radius=radius, y_range=base.mirror.y_range
                    )
                    cand = replace(base, camera=cam, mirror=mirror)
                    res = trace_all(cand)
                    cov = coverage_metric(cand, grid_density=grid_density, trace=res)
                    entry = {
                        "radius": radius,
                        "tilt_deg": tilt,
                        "offset": offset,
                        "p0": p0,
                        "p1": p1,
                        "coverage": cov,
                    }
                    if cov > 0.5:
                        mean_inc, max_inc = orthogonality_metric(cand, trace=res)
                        entry["mean_incidence"] = mean_inc
                        entry["distortion"] = distortion_metric(cand, trace=res)
                    else:
                        entry["mean_incidence"] = np.inf
                        entry["distortion"] = np.inf
                    entry["feasible"] = cov >= coverage_floor
                    candidates.append(entry)
                except (ConfigurationError, DomainError):
                    continue
    candidates.sort(key=lambda e: (not e["feasible"], e["distortion"], -e["coverage"]))
    return candidates


# -- config file ---------------------------------------------------------

_OPTICS_SCHEMA = {
    "camera": {"resolution", "fov_deg", "position", "pitch_deg"},
    "mirror": {
        "kind",
        "p0",
        "p1",
        "radius",
        "y_range",
        "vertex",
        "axis_deg",
        "conic_k",
        "half_extent",
    },
    "plate": {"size"},
    "window.*": {"x_range", "z_range", "side"},
    "walls": {"x_range", "z_top"},
}


def load_optics_config(path) -> FingerOptics:
    """Build a FingerOptics assembly from a geometry config file."""
    cp = configio.load_config(path)
    configio.validate_schema(cp, _OPTICS_SCHEMA, path)
    if "camera" not in cp or "plate" not in cp:
        raise ConfigurationError(f"{path}: [camera] and [plate] sections are required")

    cam_sec = cp["camera"]
    res = configio.get_floats(cam_sec, "resolution", n=2, default=(640, 480))
    fov = configio.get_float(cam_sec, "fov_deg", default=120.0)
    position = configio.get_floats(cam_sec, "position", n=3)
    pitch = configio.get_float(cam_sec, "pitch_deg", default=0.0)
    camera = CameraModel(
        resolution=(int(res[0]), int(res[1])), fov_deg=fov, pose=camera_pose(position, pitch)
    )

    plate_size = configio.get_floats(cp["plate"], "size", n=2, default=(100.0, 25.0))
    plate = BackPlate(size=(plate_size[0], plate_size[1]))

    mirror = None
    if "mirror" in cp:
        sec = cp["mirror"]
        kind = configio.get_str(sec, "kind", default="arc")
        y_range = configio.get_floats(sec, "y_range", n=2, default=(0.0, plate_size[1]))
        if kind in ("flat", "arc"):
            p0 = configio.get_floats(sec, "p0", n=2)
            p1 = configio.get_floats(sec, "p1", n=2)
            mirror = MirrorProfile(
                kind=kind,
                p0=tuple(p0),
                p1=tuple(p1),
                radius=configio.get_float(sec, "radius", default=0.0),
                y_range=tuple(y_range),
            )
        else:
            mirror = MirrorProfile(
                kind="conic",
                vertex=tuple(configio.get_floats(sec, "vertex", n=2)),
                axis_deg=configio.get_float(sec, "axis_deg", default=0.0),
                radius=configio.get_float(sec, "radius"),
                conic_k=configio.get_float(sec, "conic_k", default=0.0),
                half_extent=configio.get_float(sec, "half_extent"),
                y_range=tuple(y_range),
            )

    windows = []
    walls = []
    wall_x = wall_top = None
    if "walls" in cp:
        wall_x = configio.get_floats(cp["walls"], "x_range", n=2)
        wall_top = configio.get_float(cp["walls"], "z_top")
    for section in cp.sections():
        if not section.startswith("window."):
            continue
        sec = cp[section]
        xr = configio.get_floats(sec, "x_range", n=2)
        zr = configio.get_floats(sec, "z_range", n=2)
        side = configio.get_str(sec, "side")
        windows.append(_side_rect(side, xr, zr, plate_size[1]))
    if wall_x is not None:
        for side in ("left", "right"):
            walls.append(_side_rect(side, wall_x, (0.0, wall_top), plate_size[1]))
    return FingerOptics(
        camera=camera, mirror=mirror, plate=plate, side_windows=tuple(windows), baffles=tuple(walls)
    )


def _side_rect(side: str, x_range, z_range, plate_width: float) -> Rect3D:
    """Rectangle in a side plane (y = 0 for left, y = plate width for right)."""
    if side not in ("left", "right"):
        raise ConfigurationError(f"window side must be left or right, got {side!r}")
    y = 0.0 if side == "left" else plate_width
    # Local u along finger x, local v along finger z; normal is -y, which is
    # right-handed and fine for hit tests on either face.
    rot = np.column_stack(
        [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), np.array([0.0, -1.0, 0.0])]
    )
    from .core import matrix_to_rotvec

    pose = Pose6D(
        translation=np.array([x_range[0], y, z_range[0]]),
        rotation=matrix_to_rotvec(rot),
    )
    return Rect3D(size=(x_range[1] - x_range[0], z_range[1] - z_range[0]), pose=pose)


def save_optics_config(path, camera_position, camera_pitch_deg, camera_resolution, fov_deg, mirror: MirrorProfile, plate_size, windows, wall_x, wall_top) -> None:
    """Write a geometry config in the documented key-value format."""
    buf = io.StringIO()
    buf.write("[camera]\n")
    buf.write(f"resolution = {int(camera_resolution[0])}, {int(camera_resolution[1])}\n")
    buf.write(f"fov_deg = {fov_deg}\n")
    buf.write(f"position = {camera_position[0]}, {camera_position[1]}, {camera_position[2]}\n")
    buf.write(f"pitch_deg = {camera_pitch_deg}\n\n")
    buf.write("[plate]\n")
    buf.write(f"size = {plate_size[0]}, {plate_size[1]}\n\n")
    buf.write("[mirror]\n")
    buf.write(f"kind = {mirror.kind}\n")
    if mirror.kind in ("flat", "arc"):
        buf.write(f"p0 = {mirror.p0[0]}, {mirror.p0[1]}\n")
        buf.write(f"p1 = {mirror.p1[0]}, {mirror.p1[1]}\n")
        if mirror.kind == "arc":
            buf.write(f"radius = {mirror.radius}\n")
    else:
        buf.write(f"vertex = {mirror.vertex[0]}, {mirror.vertex[1]}\n")
        buf.write(f"axis_deg = {mirror.axis_deg}\n")
        buf.write(f"radius = {mirror.radius}\n")
        buf.write(f"conic_k = {mirror.conic_k}\n")
        buf.write(f"half_extent = {mirror.half_extent}\n")
    buf.write(f"y_range = {mirror.y_range[0]}, {mirror.y_range[1]}\n\n")
    for name, (xr, zr, side) in windows.items():
        buf.write(f"[window.{name}]\n")
        buf.write(f"side = {side}\n")
        buf.write(f"x_range = {xr[0]}, {xr[1]}\n")
        buf.write(f"z_range = {zr[0]}, {zr[1]}\n\n")
    buf.write("[walls]\n")
    buf.write(f"x_range = {wall_x[0]}, {wall_x[1]}\n")
    buf.write(f"z_top = {wall_top}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def default_optics() -> FingerOptics:
    """The shipped default geometry (solved by the design grid search)."""
    cfg = Path(__file__).parent / "data" / "default_optics.cfg"
    return load_optics_config(cfg)


def optics_report(optics: FingerOptics, grid_density: float = 2.0) -> dict:
    """All three design metrics plus the mirror-free baseline."""
    res = trace_all(optics)
    coverage = coverage_metric(optics, grid_density=grid_density, trace=res)
    mean_inc, max_inc = orthogonality_metric(optics, trace=res)
    distortion = distortion_metric(optics, trace=res)
    baseline, _ = mirror_free_baseline(optics)
    counts = pixel_plate_map(optics, trace=res).counts()
    return {
        "coverage": coverage,
        "mean_incidence_rad": mean_inc,
        "max_incidence_rad": max_inc,
        "distortion_cv": distortion,
        "mirror_free_mean_incidence_rad": baseline,
        "plate_pixels": counts["plate"],
        "window_pixels": counts["window"],
        "miss_pixels": counts["miss"],
    }

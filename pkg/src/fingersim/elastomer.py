"""Quasi-static Winkler contact and viscoelastic relaxation of the elastomer.

The sensing layer is modeled as an elastic foundation (pressure proportional
to local indentation) with Gaussian membrane smoothing, evolved in time by an
asymmetric first-order relaxation: loading is fast for both materials, while
recovery is slow for the VHB tape and fast for silicone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .core import HeightMap, Pose6D
from .errors import DomainError

__all__ = [
    "ElastomerParams",
    "VHB_PARAMS",
    "SILICONE_PARAMS",
    "Indenter",
    "sphere_indenter",
    "flat_indenter",
    "edge_indenter",
    "textured_indenter",
    "DeformationState",
    "SlipEvent",
    "ContactReport",
    "sensing_grid",
    "initial_state",
    "gap_map",
    "IndentResult",
    "quasi_static_indent",
    "step_dynamics",
    "tangential_update",
]

SENSING_AREA = (100.0, 25.0)  # mm
GRID_RESOLUTION = 0.25  # mm/cell


@dataclass(frozen=True)
class ElastomerParams:
    """Material constants for one elastomer option."""

    kind: str = "VHB"
    thickness: float = 2.0  # mm
    stiffness: float = 0.05  # N/mm^3 foundation modulus
    shear_stiffness: float = 0.02  # N/mm^3
    smoothing_radius: float = 1.0  # mm, membrane Gaussian sigma
    tau_load: float = 0.01  # s
    tau_recover: float = 0.8  # s
    friction: float = 0.9

    def __post_init__(self):
        for name in ("thickness", "stiffness", "shear_stiffness", "smoothing_radius", "tau_load", "tau_recover", "friction"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")


VHB_PARAMS = ElastomerParams(kind="VHB", tau_recover=0.8)
SILICONE_PARAMS = ElastomerParams(kind="Silicone", tau_recover=0.02)


def sensing_grid(resolution: float = GRID_RESOLUTION, area=SENSING_AREA) -> HeightMap:
    """All-zero displacement grid over the sensing area (cell centers)."""
    nx = int(round(area[0] / resolution))
    ny = int(round(area[1] / resolution))
    return HeightMap(
        np.zeros((ny, nx)), resolution=resolution, origin=(resolution / 2.0, resolution / 2.0)
    )


@dataclass(frozen=True)
class Indenter:
    """Rigid object pressed into the elastomer.

    `shape` is the local surface profile: height above the object's lowest
    point, so 0 marks the deepest-reaching part. The pose positions the
    shape center over the plate; x/y translation and yaw are exact, z lifts
    the object off the surface, and small tilts enter as a plane term.
    """

    shape: HeightMap
    pose: Pose6D = field(default_factory=Pose6D)
    force: float = 0.0

    def __post_init__(self):
        if self.force < 0:
            raise DomainError("indenter force must be non-negative")


def sphere_indenter(radius: float, force: float = 0.0, pose: Pose6D | None = None, resolution: float = GRID_RESOLUTION) -> Indenter:
    n = max(4, int(np.ceil(2.0 * radius / resolution)) + 1)
    c = (n - 1) / 2.0
    ii, jj = np.mgrid[0:n, 0:n]
    rho = np.hypot(jj - c, ii - c) * resolution
    h = radius - np.sqrt(np.maximum(radius**2 - rho**2, 0.0))
    shape = HeightMap(h, resolution=resolution)
    return Indenter(shape=shape, pose=pose or Pose6D(), force=force)


def flat_indenter(size, force: float = 0.0, pose: Pose6D | None = None, resolution: float = GRID_RESOLUTION) -> Indenter:
    nx = max(2, int(round(size[0] / resolution)) + 1)
    ny = max(2, int(round(size[1] / resolution)) + 1)
    shape = HeightMap(np.zeros((ny, nx)), resolution=resolution)
    return Indenter(shape=shape, pose=pose or Pose6D(), force=force)


def edge_indenter(length: float, wedge_angle_deg: float = 30.0, force: float = 0.0, pose: Pose6D | None = None, resolution: float = GRID_RESOLUTION) -> Indenter:
    """A straight ridge along local x; a V profile across local y."""
    nx = max(2, int(round(length / resolution)) + 1)
    ny = max(4, int(round(8.0 / resolution)) + 1)
    c = (ny - 1) / 2.0
    v = (np.arange(ny) - c) * resolution
    profile = np.abs(v) * np.tan(np.deg2rad(wedge_angle_deg))
    shape = HeightMap(np.tile(profile[:, None], (1, nx)), resolution=resolution)
    return Indenter(shape=shape, pose=pose or Pose6D(), force=force)


def textured_indenter(height_values: np.ndarray, resolution: float, depth_scale: float = 1.0, force: float = 0.0, pose: Pose6D | None = None) -> Indenter:
    """Height profile straight from an image-derived array (0 = deepest)."""
    vals = np.asarray(height_values, dtype=float) * depth_scale
    vals = vals - vals.min()
    return Indenter(shape=HeightMap(vals, resolution=resolution), pose=pose or Pose6D(), force=force)


def gap_map(indenter: Indenter, grid: HeightMap) -> np.ndarray:
    """Gap between the indenter surface and the undeformed elastomer, per
    grid cell, in mm; inf outside the indenter footprint.

    At pose z = 0 the lowest indenter point just touches the surface.
    """
    shape = indenter.shape
    res_g = grid.resolution
    x0, y0 = grid.origin
    t = indenter.pose.translation
    rx, ry, yaw = indenter.pose.rotation
    cx = (shape.width - 1) * shape.resolution / 2.0
    cy = (shape.height - 1) * shape.resolution / 2.0

    # Only cells inside the shape's bounding square (any yaw) can touch it,
    # so the heavy work runs on that window alone.
    gap = np.full(grid.values.shape, np.inf)
    reach = np.hypot(cx, cy) + res_g
    j0 = max(0, int(np.ceil((t[0] - reach - x0) / res_g)))
    j1 = min(grid.width, int(np.floor((t[0] + reach - x0) / res_g)) + 1)
    i0 = max(0, int(np.ceil((t[1] - reach - y0) / res_g)))
    i1 = min(grid.height, int(np.floor((t[1] + reach - y0) / res_g)) + 1)
    if j0 >= j1 or i0 >= i1:
        return gap

    dx = (x0 + np.arange(j0, j1) * res_g - t[0])[None, :]
    dy = (y0 + np.arange(i0, i1) * res_g - t[1])[:, None]
    # Plate -> indenter-local: undo translation, undo yaw, re-center.
    cos_y, sin_y = np.cos(-yaw), np.sin(-yaw)
    u = cos_y * dx - sin_y * dy + cx
    v = sin_y * dx + cos_y * dy + cy
    inside = (
        (u >= 0)
        & (u <= (shape.width - 1) * shape.resolution)
        & (v >= 0)
        & (v <= (shape.height - 1) * shape.resolution)
    )
    if not np.any(inside):
        return gap
    # Local surface height plus lift-off plus first-order tilt plane.
    window = np.full(inside.shape, np.inf)
    vals = shape._sample_unchecked(u[inside], v[inside]) + t[2]
    tilt = np.tan(rx) * np.broadcast_to(dy, inside.shape)[inside]
    tilt -= np.tan(ry) * np.broadcast_to(dx, inside.shape)[inside]
    window[inside] = vals + tilt
    gap[i0:i1, j0:j1] = window
    return gap


@dataclass
class IndentResult:
    displacement: HeightMap  # smoothed, clamped target field
    raw: np.ndarray  # pre-smoothing overlap, mm
    pressure: np.ndarray  # stiffness * displacement, N/mm^2
    penetration: float  # solved rigid-body depth, mm
    saturated: bool  # raw overlap exceeded the elastomer thickness


def quasi_static_indent(params: ElastomerParams, indenter: Indenter, grid: HeightMap | None = None) -> IndentResult:
    """Solve the Winkler foundation for the target displacement field.

    The rigid penetration depth is found by bisection on total normal force
    (tolerance 1e-6 N); the overlap field is then Gaussian-smoothed and
    clamped to the elastomer thickness. Bottom-out sets `saturated` rather
    than raising.
    """
    grid = grid if grid is not None else sensing_grid()
    cell_area = grid.resolution**2
    zeros = np.zeros_like(grid.values)
    if indenter.force == 0.0:
        disp = HeightMap(zeros, grid.resolution, grid.origin)
        return IndentResult(disp, zeros.copy(), zeros.copy(), 0.0, False)

    gap = gap_map(indenter, grid)
    finite = np.isfinite(gap)
    if not np.any(finite):
        disp = HeightMap(zeros, grid.resolution, grid.origin)
        return IndentResult(disp, zeros.copy(), zeros.copy(), 0.0, False)

    # Sorted gaps + prefix sums make each force evaluation O(log n), so the
    # bisection itself is essentially free.
    gaps = np.sort(gap[finite].ravel())
    prefix = np.concatenate([[0.0], np.cumsum(gaps)])
    gap_min = float(gaps[0])

    def total_force(depth: float) -> float:
        m = int(np.searchsorted(gaps, depth, side="right"))
        return params.stiffness * (m * depth - prefix[m]) * cell_area

    lo = gap_min
    hi = gap_min + 1.0
    for _ in range(200):
        if total_force(hi) >= indenter.force:
            break
        hi = gap_min + 2.0 * (hi - gap_min)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total_force(mid) < indenter.force:
            lo = mid
        else:
            hi = mid
        if abs(total_force(mid) - indenter.force) <= 1e-6:
            break
    depth = 0.5 * (lo + hi)

    raw = np.zeros_like(gap)
    box = _bbox(finite)
    sl = np.s_[box[0] : box[1], box[2] : box[3]]
    raw[sl] = np.where(finite[sl], np.maximum(0.0, depth - gap[sl]), 0.0)
    saturated = bool(raw[sl].max() > params.thickness)
    smoothed = _smooth_compact(raw, params.smoothing_radius / grid.resolution)
    np.clip(smoothed, 0.0, params.thickness, out=smoothed)
    disp = HeightMap(smoothed, grid.resolution, grid.origin)
    return IndentResult(disp, raw, params.stiffness * smoothed, depth, saturated)


def _bbox(mask: np.ndarray):
    """(i0, i1, j0, j1) bounds of the true cells, or None when empty."""
    rows = np.nonzero(mask.any(axis=1))[0]
    if rows.size == 0:
        return None
    cols = np.nonzero(mask.any(axis=0))[0]
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def _union_box(a, b, shape=None):
    if a is None:
        return b
    if b is None:
        return a
    return (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))


def _smooth_compact(raw: np.ndarray, sigma_cells: float, truncate: float = 4.0) -> np.ndarray:
    """Gaussian filter restricted to the support bounding box.

    Identical to filtering the full array (the truncated kernel cannot
    reach outside the expanded box), but much cheaper for small contacts.
    """
    nz = np.nonzero(raw)
    if len(nz[0]) == 0:
        return np.zeros_like(raw)
    radius = int(truncate * sigma_cells + 0.5)
    i0 = max(0, nz[0].min() - radius)
    i1 = min(raw.shape[0], nz[0].max() + radius + 1)
    j0 = max(0, nz[1].min() - radius)
    j1 = min(raw.shape[1], nz[1].max() + radius + 1)
    out = np.zeros_like(raw)
    out[i0:i1, j0:j1] = cv2.GaussianBlur(
        raw[i0:i1, j0:j1],
        (2 * radius + 1, 2 * radius + 1),
        sigma_cells,
        borderType=cv2.BORDER_CONSTANT,
    )
    return out


@dataclass(frozen=True)
class SlipEvent:
    time: float  # s
    speed: float  # mm/s
    area: float  # mm^2 that slipped
    pressure: float  # N/mm^2, mean over slipped cells
    duration: float  # s
    released: float  # mm, mean shear released by the slip


@dataclass
class ContactReport:
    contact_mask: np.ndarray
    contact_area: float  # mm^2
    mean_pressure: float  # N/mm^2
    slip_events: list


@dataclass
class DeformationState:
    """Time-evolving deformation; owned by exactly one simulation loop."""

    displacement: HeightMap
    shear: np.ndarray  # (H, W, 2) mm
    time: float = 0.0
    # Bounding box of possibly-nonzero shear, a cache that lets the
    # tangential update run on the contact neighborhood only.
    shear_box: tuple | None = None

    def copy(self) -> "DeformationState":
        return DeformationState(
            displacement=HeightMap(
                self.displacement.values.copy(),
                self.displacement.resolution,
                self.displacement.origin,
            ),
            shear=self.shear.copy(),
            time=self.time,
            shear_box=self.shear_box,
        )


def initial_state(grid: HeightMap | None = None) -> DeformationState:
    grid = grid if grid is not None else sensing_grid()
    return DeformationState(
        displacement=HeightMap(np.zeros_like(grid.values), grid.resolution, grid.origin),
        shear=np.zeros(grid.values.shape + (2,)),
    )


def step_dynamics(state: DeformationState, target: HeightMap, dt: float, params: ElastomerParams) -> DeformationState:
    """First-order relaxation toward `target` with asymmetric time constants."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    cur = state.displacement.values
    tgt = target.values
    if cur.shape != tgt.shape:
        raise DomainError("target grid does not match state grid")
    alpha_load = 1.0 - np.exp(-dt / params.tau_load)
    alpha_rec = 1.0 - np.exp(-dt / params.tau_recover)
    alpha = np.where(tgt > cur, alpha_load, alpha_rec)
    new = cur + (tgt - cur) * alpha
    return DeformationState(
        displacement=HeightMap(new, state.displacement.resolution, state.displacement.origin),
        shear=state.shear,
        time=state.time + dt,
    )


def tangential_update(state: DeformationState, delta, params: ElastomerParams, pressure: np.ndarray, dt: float) -> tuple:
    """Accumulate tangential shear; Coulomb-limited cells slip.

    `delta` is the in-plane indenter displacement (mm, 2-vector) over `dt`.
    Returns (new state, ContactReport).
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    delta = np.asarray(delta, dtype=float).reshape(2)
    res = state.displacement.resolution
    cell_area = res**2
    contact = pressure > 0.0
    contact_box = _bbox(contact)

    # Shear can only live where contact was or is; update just that window.
    shear = state.shear.copy()
    work_box = _union_box(state.shear_box, contact_box)
    events = []
    n_contact = 0
    mean_p = 0.0
    if work_box is not None:
        sl = np.s_[work_box[0] : work_box[1], work_box[2] : work_box[3]]
        sub_contact = contact[sl]
        sub_pressure = pressure[sl]
        sub = np.where(sub_contact[..., None], shear[sl] + delta, 0.0)
        mag = np.hypot(sub[..., 0], sub[..., 1])
        limit = params.friction * sub_pressure / params.shear_stiffness  # mm
        slipping = sub_contact & (mag > limit) & (mag > 0)
        if np.any(slipping) and np.any(delta != 0.0):
            released = mag[slipping] - limit[slipping]
            scale = limit[slipping] / mag[slipping]
            sub[slipping] *= scale[:, None]
            events.append(
                SlipEvent(
                    time=state.time,
                    speed=float(np.linalg.norm(delta) / dt),
                    area=float(slipping.sum() * cell_area),
                    pressure=float(sub_pressure[slipping].mean()),
                    duration=dt,
                    released=float(released.mean()),
                )
            )
        shear[sl] = sub
        n_contact = int(sub_contact.sum())
        if n_contact:
            mean_p = float(sub_pressure[sub_contact].mean())

    report = ContactReport(
        contact_mask=contact,
        contact_area=float(n_contact * cell_area),
        mean_pressure=mean_p,
        slip_events=events,
    )
    new_state = replace(state, shear=shear, shear_box=contact_box)
    return new_state, report

"""Photometric rendering of the deformed elastomer and its inversion.

Forward path: displacement field -> normal map -> shaded RGB under the
blue / pink / green directional sources seen through the yellow filter.
Inverse path: RGB -> normals via a calibrated lookup table -> depth via
frequency-domain integration. Peripheral window views are composited into
the full camera frame using the pixel -> surface map from the tracer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import HeightMap, RgbImage
from .errors import CalibrationError, ConfigurationError
from .optics import PixelPlateMap, TraceResult

__all__ = [
    "LightSource",
    "IlluminationConfig",
    "AlbedoModel",
    "default_illumination",
    "semi_specular_albedo",
    "lambertian_albedo",
    "normals_from_heightmap",
    "shade",
    "CalibrationLUT",
    "build_calibration",
    "reconstruct_normals",
    "integrate_normals",
    "composite_frame",
    "write_ppm",
    "read_ppm",
]


@dataclass(frozen=True)
class LightSource:
    """Directional source: unit vector toward the light, RGB emission."""

    direction: tuple
    emission: tuple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ConfigurationError("light direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / n))
        if np.any(np.asarray(self.emission) < 0):
            raise ConfigurationError("emission must be non-negative")


@dataclass(frozen=True)
class IlluminationConfig:
    sources: tuple
    filter_rgb: tuple = (0.95, 0.90, 0.35)
    ambient: tuple = (0.04, 0.04, 0.04)

    def __post_init__(self):
        if np.any(np.asarray(self.filter_rgb) < 0) or np.any(np.asarray(self.filter_rgb) > 1):
            raise ConfigurationError("filter transmission must lie in [0, 1]")
        if np.any(np.asarray(self.ambient) < 0):
            raise ConfigurationError("ambient must be non-negative")


def default_illumination(elevation_deg: float = 40.0) -> IlluminationConfig:
    """Blue LED from the bottom short side; pink and green fluorescent
    strips from the two long sides; yellow filter knocks the blue down."""
    e = np.deg2rad(elevation_deg)
    ce, se = np.cos(e), np.sin(e)
    blue = LightSource(direction=(-ce, 0.0, se), emission=(0.02, 0.05, 1.0))
    pink = LightSource(direction=(0.0, -ce, se), emission=(0.45, 0.11, 0.25))
    green = LightSource(direction=(0.0, ce, se), emission=(0.05, 0.45, 0.09))
    return IlluminationConfig(sources=(blue, pink, green))


@dataclass(frozen=True)
class AlbedoModel:
    kind: str = "SemiSpecular"
    diffuse: tuple = (0.85, 0.85, 0.85)
    specular_strength: float = 0.4
    shininess: float = 24.0

    def __post_init__(self):
        if self.kind not in ("SemiSpecular", "Lambertian"):
            raise ConfigurationError(f"unknown albedo kind {self.kind!r}")
        d = np.asarray(self.diffuse)
        if np.any(d < 0) or np.any(d > 1):
            raise ConfigurationError("diffuse albedo must lie in [0, 1]")


def semi_specular_albedo() -> AlbedoModel:
    """Aluminum-powder paint on the VHB option."""
    return AlbedoModel(kind="SemiSpecular", diffuse=(0.85, 0.85, 0.85), specular_strength=0.4, shininess=24.0)


def lambertian_albedo() -> AlbedoModel:
    """Gray silicone ink on the silicone option."""
    return AlbedoModel(kind="Lambertian", diffuse=(0.6, 0.6, 0.6), specular_strength=0.0, shininess=1.0)


def normals_from_heightmap(displacement: HeightMap) -> np.ndarray:
    """Per-cell unit normals n = normalize(-dd/dx, -dd/dy, 1).

    Central differences inside, one-sided at the borders (the np.gradient
    stencil, fused to avoid temporary allocations in the render loop).
    """
    v = displacement.values
    res = displacement.resolution
    ddx = np.empty_like(v)
    ddx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) * (0.5 / res)
    ddx[:, 0] = (v[:, 1] - v[:, 0]) / res
    ddx[:, -1] = (v[:, -1] - v[:, -2]) / res
    ddy = np.empty_like(v)
    ddy[1:-1, :] = (v[2:, :] - v[:-2, :]) * (0.5 / res)
    ddy[0, :] = (v[1, :] - v[0, :]) / res
    ddy[-1, :] = (v[-1, :] - v[-2, :]) / res
    n = np.empty(v.shape + (3,))
    n[..., 0] = -ddx
    n[..., 1] = -ddy
    n[..., 2] = 1.0
    n /= np.sqrt(ddx * ddx + ddy * ddy + 1.0)[..., None]
    return n


def _pow_shiny(base: np.ndarray, exponent: float) -> np.ndarray:
    """base ** exponent, by squaring for small integral exponents."""
    if not float(exponent).is_integer() or not 1 <= exponent <= 64:
        return base**exponent
    n = int(exponent)
    result = None
    square = base
    while n:
        if n & 1:
            result = square.copy() if result is None else result * square
        n >>= 1
        if n:
            square = square * square
    return result


def shade(
    normals: np.ndarray,
    illum: IlluminationConfig,
    albedo: AlbedoModel,
    albedo_map: np.ndarray | None = None,
    clamp: bool = True,
):
    """Shade unit normals: per channel,
    I_c = filter_c * (ambient_c + sum_s E_sc * (albedo_c * max(0, n.l_s) + spec)).

    `albedo_map` (H, W, 3) overrides the scalar diffuse color per pixel.
    Returns an RgbImage, or the raw float array when clamp=False.
    """
    h, w = normals.shape[:2]
    diffuse = np.asarray(albedo.diffuse) if albedo_map is None else np.asarray(albedo_map)
    view = np.array([0.0, 0.0, 1.0])
    emissions = np.stack([np.asarray(s.emission, dtype=float) for s in illum.sources])
    lams = np.stack([np.maximum(normals @ np.asarray(s.direction), 0.0) for s in illum.sources])
    # The albedo factors out of the per-source sum, so the emission-weighted
    # Lambert and specular fields can be accumulated in one pass each.
    out = np.einsum("shw,sc->hwc", lams, emissions)
    out *= diffuse
    if albedo.kind == "SemiSpecular":
        gain = albedo.specular_strength * (albedo.shininess + 8.0) / (8.0 * np.pi)
        specs = []
        for s in illum.sources:
            half = np.asarray(s.direction) + view
            half = half / np.linalg.norm(half)
            specs.append(gain * _pow_shiny(np.maximum(normals @ half, 0.0), albedo.shininess))
        out += np.einsum("shw,sc->hwc", np.stack(specs), emissions)
    out += np.asarray(illum.ambient, dtype=float)
    out *= np.asarray(illum.filter_rgb)
    if clamp:
        return RgbImage(out)
    return out


@dataclass
class CalibrationLUT:
    """Quantized RGB -> unit normal table (color-to-geometry inversion)."""

    normals: np.ndarray  # (B, B, B, 3)
    bins: int

    def save(self, path) -> None:
        np.savez_compressed(path, normals=self.normals, bins=np.array([self.bins]))

    @staticmethod
    def load(path) -> "CalibrationLUT":
        data = np.load(path)
        return CalibrationLUT(normals=data["normals"], bins=int(data["bins"][0]))

    def lookup(self, rgb: np.ndarray) -> np.ndarray:
        """Trilinear interpolation over bin centers; out-of-gamut clips."""
        b = self.bins
        coords = np.clip(np.asarray(rgb) * b - 0.5, 0.0, b - 1.0)
        i0 = np.floor(coords).astype(int)
        i0 = np.minimum(i0, b - 2)
        f = coords - i0
        acc = np.zeros(rgb.shape[:-1] + (3,))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    wgt = (
                        (f[..., 0] if dx else 1 - f[..., 0])
                        * (f[..., 1] if dy else 1 - f[..., 1])
                        * (f[..., 2] if dz else 1 - f[..., 2])
                    )
                    acc += wgt[..., None] * self.normals[i0[..., 0] + dx, i0[..., 1] + dy, i0[..., 2] + dz]
        norm = np.linalg.norm(acc, axis=-1, keepdims=True)
        return acc / np.maximum(norm, 1e-12)


def _check_illumination_rank(illum: IlluminationConfig) -> None:
    rows = [np.linalg.norm(s.emission) * np.asarray(s.direction) for s in illum.sources]
    m = np.stack(rows)
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size < 3 or sv[2] < 1e-3 * sv[0]:
        raise CalibrationError("illumination is rank-deficient; colors cannot encode normals")


def build_calibration(
    illum: IlluminationConfig,
    albedo: AlbedoModel,
    sphere_radius_mm: float,
    bins: int = 32,
    resolution: float = 0.25,
) -> CalibrationLUT:
    """Render an indented sphere of known geometry and invert its colors.

    (RGB -> normal) pairs are averaged per quantized color bin; empty bins
    are filled from their nearest occupied neighbor.
    """
    _check_illumination_rank(illum)
    r = sphere_radius_mm
    extent = 4.0 * r
    n = int(extent / resolution)
    xs = (np.arange(n) + 0.5) * resolution - extent / 2.0
    gx, gy = np.meshgrid(xs, xs)
    rho2 = gx**2 + gy**2
    # Deep cap: covers surface tilts up to ~60 degrees in every azimuth.
    depth = 0.5 * r
    cap = np.sqrt(np.maximum(r**2 - rho2, 0.0)) - (r - depth)
    disp = HeightMap(np.maximum(cap, 0.0), resolution=resolution)
    normals = normals_from_heightmap(disp)
    img = shade(normals, illum, albedo).values

    idx = np.clip((img * bins).astype(int), 0, bins - 1)
    flat = idx[..., 0] * bins * bins + idx[..., 1] * bins + idx[..., 2]
    table = np.zeros((bins**3, 3))
    counts = np.zeros(bins**3)
    np.add.at(table, flat.ravel(), normals.reshape(-1, 3))
    np.add.at(counts, flat.ravel(), 1.0)
    filled = counts > 0
    table[filled] /= counts[filled][:, None]
    table = table.reshape(bins, bins, bins, 3)
    filled = filled.reshape(bins, bins, bins)

    # Nearest-neighbor fill of the empty color cells.
    _, nearest = ndimage.distance_transform_edt(~filled, return_indices=True)
    table = table[nearest[0], nearest[1], nearest[2]]
    table /= np.maximum(np.linalg.norm(table, axis=-1, keepdims=True), 1e-12)
    table[..., 2] = np.abs(table[..., 2])
    table /= np.linalg.norm(table, axis=-1, keepdims=True)
    return CalibrationLUT(normals=table, bins=bins)


def reconstruct_normals(image: RgbImage, lut: CalibrationLUT) -> np.ndarray:
    """Per-pixel LUT inversion of a rendered tactile image."""
    return lut.lookup(image.values)


def integrate_normals(normals: np.ndarray, resolution: float = 1.0) -> HeightMap:
    """Least-squares surface whose gradients match the normal field.

    Frequency-domain (FFT) Poisson solve on an even/odd mirror extension,
    which suppresses the periodic-boundary artifacts; output is zero-mean.
    """
    nz = np.maximum(normals[..., 2], 1e-9)
    gx = -normals[..., 0] / nz
    gy = -normals[..., 1] / nz
    h, w = gx.shape

    # Integrate the mean gradient as an exact ramp; FFT-solve the residual.
    mx, my = gx.mean(), gy.mean()
    xs = np.arange(w) * resolution
    ys = np.arange(h) * resolution
    ramp = mx * xs[None, :] + my * ys[:, None]
    gx = gx - mx
    gy = gy - my

    # Mirror extension: gx odd in x / even in y; gy even in x / odd in y.
    gx_big = np.block([[gx, -gx[:, ::-1]], [gx[::-1, :], -gx[::-1, ::-1]]])
    gy_big = np.block([[gy, gy[:, ::-1]], [-gy[::-1, :], -gy[::-1, ::-1]]])

    fx = np.fft.fftfreq(2 * w, d=resolution) * 2.0 * np.pi
    fy = np.fft.fftfreq(2 * h, d=resolution) * 2.0 * np.pi
    wx, wy = np.meshgrid(fx, fy)
    gx_hat = np.fft.fft2(gx_big)
    gy_hat = np.fft.fft2(gy_big)
    denom = wx**2 + wy**2
    denom[0, 0] = 1.0
    z_hat = (-1j * wx * gx_hat - 1j * wy * gy_hat) / denom
    z_hat[0, 0] = 0.0
    z_big = np.real(np.fft.ifft2(z_hat))
    z = z_big[:h, :w] + ramp
    return HeightMap(z - z.mean(), resolution=resolution)


def _bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample image (H, W, 3) at fractional pixel coords (u cols, v rows)."""
    h, w = img.shape[:2]
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    j0 = np.minimum(np.floor(u).astype(int), w - 2)
    i0 = np.minimum(np.floor(v).astype(int), h - 2)
    fu = (u - j0)[..., None]
    fv = (v - i0)[..., None]
    # Weight products first: FrameCompositor reproduces this arithmetic
    # bit-for-bit with precomputed weights.
    return (
        img[i0, j0] * ((1 - fu) * (1 - fv))
        + img[i0, j0 + 1] * (fu * (1 - fv))
        + img[i0 + 1, j0] * ((1 - fu) * fv)
        + img[i0 + 1, j0 + 1] * (fu * fv)
    )


def composite_frame(tactile: RgbImage, backgrounds, pmap: PixelPlateMap) -> RgbImage:
    """Assemble the full camera frame from the pixel -> surface map.

    Plate pixels sample the tactile image at their plate mm coordinates;
    window pixels sample the matching peripheral background; miss pixels
    stay black. `backgrounds` maps window id -> RgbImage.
    """
    h, w = pmap.kind.shape
    frame = np.zeros((h, w, 3))

    plate = pmap.kind == TraceResult.KIND_PLATE
    if np.any(plate):
        lx, ly = pmap.plate_size
        timg = tactile.values
        u = pmap.plate_xy[plate, 0] / lx * (timg.shape[1] - 1)
        v = pmap.plate_xy[plate, 1] / ly * (timg.shape[0] - 1)
        frame[plate] = _bilinear(timg, u, v)

    for win_id in np.unique(pmap.window_id):
        if win_id < 0:
            continue
        sel = pmap.kind == TraceResult.KIND_WINDOW
        sel &= pmap.window_id == win_id
        if not np.any(sel):
            continue
        try:
            bg = backgrounds[win_id]
        except (KeyError, IndexError, TypeError):
            raise ConfigurationError(f"no background supplied for window {win_id}")
        if bg is None:
            raise ConfigurationError(f"no background supplied for window {win_id}")
        sw, sh = pmap.window_sizes[win_id]
        bimg = bg.values
        u = pmap.window_uv[sel, 0] / sw * (bimg.shape[1] - 1)
        v = pmap.window_uv[sel, 1] / sh * (bimg.shape[0] - 1)
        frame[sel] = _bilinear(bimg, u, v)
    return RgbImage(frame)


class FrameCompositor:
    """Precomputed equivalent of composite_frame for a fixed assembly.

    Window and miss pixels never change between frames, so their uint8
    values are cached; per frame only the plate pixels are resampled from
    the fresh tactile image. Output is bit-identical to
    composite_frame(tactile, backgrounds, pmap).to_uint8().
    """

    def __init__(self, backgrounds, pmap: PixelPlateMap, tactile_shape):
        plate = pmap.kind == TraceResult.KIND_PLATE
        self._flat_idx = np.flatnonzero(plate.reshape(-1))
        th, tw = tactile_shape[:2]
        lx, ly = pmap.plate_size
        u = pmap.plate_xy[plate, 0] / lx * (tw - 1)
        v = pmap.plate_xy[plate, 1] / ly * (th - 1)
        u = np.clip(u, 0.0, tw - 1.0)
        v = np.clip(v, 0.0, th - 1.0)
        j0 = np.minimum(np.floor(u).astype(int), tw - 2)
        i0 = np.minimum(np.floor(v).astype(int), th - 2)
        fu = (u - j0)[..., None]
        fv = (v - i0)[..., None]
        # Flat gather indices and bilinear weights into the tactile image.
        self._g00 = i0 * tw + j0
        self._g01 = self._g00 + 1
        self._g10 = self._g00 + tw
        self._g11 = self._g10 + 1
        self._w00 = (1 - fu) * (1 - fv)
        self._w01 = fu * (1 - fv)
        self._w10 = (1 - fu) * fv
        self._w11 = fu * fv
        black = RgbImage(np.zeros((th, tw, 3)))
        self._static = composite_frame(black, backgrounds, pmap).to_uint8()

    def render(self, tactile: RgbImage) -> np.ndarray:
        """Full camera frame as uint8, ready for the video payload."""
        img = tactile.values.reshape(-1, 3)
        vals = (
            img[self._g00] * self._w00
            + img[self._g01] * self._w01
            + img[self._g10] * self._w10
            + img[self._g11] * self._w11
        )
        frame = self._static.copy()
        frame.reshape(-1, 3)[self._flat_idx] = np.round(vals * 255.0).astype(np.uint8)
        return frame


def write_ppm(image: RgbImage, path) -> None:
    """Binary P6 portable pixmap (lossless at 8 bits per channel)."""
    data = image.to_uint8()
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> RgbImage:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ConfigurationError(f"{path}: not a binary P6 pixmap")
        fields = []
        while len(fields) < 3:
            line = fh.readline()
            if not line:
                raise ConfigurationError(f"{path}: truncated pixmap header")
            text = line.split(b"#", 1)[0]
            fields.extend(int(tok) for tok in text.split())
        w, h, maxval = fields[:3]
        raw = fh.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise ConfigurationError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return RgbImage(arr.astype(np.float64) / float(maxval))

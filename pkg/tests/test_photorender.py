import numpy as np
import pytest

from fingersim.core import HeightMap, RgbImage
from fingersim.errors import CalibrationError, ConfigurationError
from fingersim.optics import PixelPlateMap
from fingersim.photorender import (
    AlbedoModel,
    IlluminationConfig,
    LightSource,
    build_calibration,
    composite_frame,
    default_illumination,
    integrate_normals,
    lambertian_albedo,
    normals_from_heightmap,
    read_ppm,
    reconstruct_normals,
    semi_specular_albedo,
    shade,
    write_ppm,
)

RES = 0.25


def sphere_cap_displacement(radius, depth, resolution=RES, extent_factor=4.0):
    extent = extent_factor * radius
    n = int(extent / resolution)
    xs = (np.arange(n) + 0.5) * resolution - extent / 2
    gx, gy = np.meshgrid(xs, xs)
    cap = np.sqrt(np.maximum(radius**2 - gx**2 - gy**2, 0.0)) - (radius - depth)
    return HeightMap(np.maximum(cap, 0.0), resolution=resolution), gx, gy


def angular_error_deg(a, b):
    dots = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dots))


def pure_channel_illumination(elevation_deg=40.0):
    """Pink/green reduced to single channels for symmetry arguments."""
    e = np.deg2rad(elevation_deg)
    ce, se = np.cos(e), np.sin(e)
    return IlluminationConfig(
        sources=(
            LightSource(direction=(-ce, 0.0, se), emission=(0.0, 0.0, 1.0)),
            LightSource(direction=(0.0, -ce, se), emission=(0.5, 0.0, 0.0)),
            LightSource(direction=(0.0, ce, se), emission=(0.0, 0.5, 0.0)),
        ),
        filter_rgb=(1.0, 1.0, 1.0),
        ambient=(0.0, 0.0, 0.0),
    )


class TestNormals:
    def test_flat_field(self):
        hm = HeightMap(np.zeros((16, 16)), resolution=RES)
        n = normals_from_heightmap(hm)
        assert np.allclose(n, [0.0, 0.0, 1.0])

    def test_plane_slope(self):
        s = 0.3
        xs = np.arange(32) * RES
        hm = HeightMap(np.tile(s * xs, (16, 1)), resolution=RES)
        n = normals_from_heightmap(hm)
        expected = np.array([-s, 0.0, 1.0])
        expected = expected / np.linalg.norm(expected)
        assert np.allclose(n, expected, atol=1e-9)

    def test_sphere_cap_vs_analytic(self):
        radius, depth = 5.0, 1.5
        hm, gx, gy = sphere_cap_displacement(radius, depth)
        n = normals_from_heightmap(hm)
        inside = hm.values > 0.05
        # Analytic gradient of the cap under the same sign convention.
        sq = np.sqrt(np.maximum(radius**2 - gx**2 - gy**2, 1e-12))
        ex = np.where(inside, gx / sq, 0.0)
        ey = np.where(inside, gy / sq, 0.0)
        na = np.stack([ex, ey, np.ones_like(ex)], axis=-1)
        na /= np.linalg.norm(na, axis=-1, keepdims=True)
        err = angular_error_deg(n[inside], na[inside])
        assert np.median(err) < 1.0


class TestShade:
    def test_symmetric_sources_balance_on_flat(self):
        n = np.zeros((8, 12, 3))
        n[..., 2] = 1.0
        img = shade(n, pure_channel_illumination(), lambertian_albedo())
        assert np.allclose(img.values[..., 0], img.values[..., 1], atol=1e-6)
        for c in range(3):
            assert img.values[..., c].std() < 1e-12

    def test_tilt_toward_pink_side(self):
        illum = default_illumination()
        alb = lambertian_albedo()
        vals = []
        for tilt in np.linspace(0.0, 0.3, 5):
            n = np.array([[[0.0, -np.sin(tilt), np.cos(tilt)]]])
            vals.append(shade(n, illum, alb).values[0, 0])
        reds = [v[0] for v in vals]
        greens = [v[1] for v in vals]
        assert all(b > a for a, b in zip(reds, reds[1:]))
        assert all(b < a for a, b in zip(greens, greens[1:]))

    def test_blue_filter_is_multiplicative_cap(self):
        rng = np.random.default_rng(8)
        n = rng.normal(size=(10, 10, 3))
        n[..., 2] = np.abs(n[..., 2]) + 0.5
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        illum = default_illumination()
        unfiltered = IlluminationConfig(
            sources=illum.sources, filter_rgb=(1.0, 1.0, 1.0), ambient=illum.ambient
        )
        img = shade(n, illum, semi_specular_albedo(), clamp=False)
        raw = shade(n, unfiltered, semi_specular_albedo(), clamp=False)
        assert np.all(img[..., 2] <= illum.filter_rgb[2] * raw[..., 2] + 1e-12)

    def test_monotone_in_emission_scaling(self):
        rng = np.random.default_rng(9)
        n = rng.normal(size=(6, 6, 3))
        n[..., 2] = np.abs(n[..., 2]) + 0.5
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        base = default_illumination()
        for alpha in (1.0, 1.5, 2.0, 4.0):
            scaled = IlluminationConfig(
                sources=tuple(
                    LightSource(s.direction, tuple(alpha * np.asarray(s.emission)))
                    for s in base.sources
                ),
                filter_rgb=base.filter_rgb,
                ambient=base.ambient,
            )
            low = shade(n, base, semi_specular_albedo(), clamp=False)
            high = shade(n, scaled, semi_specular_albedo(), clamp=False)
            assert np.all(high >= low - 1e-12)

    def test_lambertian_has_no_specular_lobe(self):
        n = np.zeros((4, 4, 3))
        n[..., 2] = 1.0
        illum = default_illumination()
        flat_lam = shade(n, illum, lambertian_albedo()).values
        flat_spec = shade(n, illum, semi_specular_albedo()).values
        assert flat_spec.sum() > flat_lam.sum()


@pytest.fixture(scope="module")
def lut():
    return build_calibration(default_illumination(), semi_specular_albedo(), sphere_radius_mm=4.0)


class TestCalibration:
    def test_flat_rgb_maps_to_up(self, lut):
        n = np.zeros((4, 4, 3))
        n[..., 2] = 1.0
        img = shade(n, default_illumination(), semi_specular_albedo())
        rec = reconstruct_normals(img, lut)
        err = angular_error_deg(rec, n)
        assert err.max() < 2.0

    def test_all_stored_normals_unit(self, lut):
        norms = np.linalg.norm(lut.normals, axis=-1)
        assert np.allclose(norms, 1.0, atol=1e-9)
        assert np.all(lut.normals[..., 2] > 0)

    def test_held_out_sphere_roundtrip(self, lut):
        hm, _, _ = sphere_cap_displacement(3.0, 1.2)
        truth = normals_from_heightmap(hm)
        img = shade(truth, default_illumination(), semi_specular_albedo())
        rec = reconstruct_normals(img, lut)
        err = angular_error_deg(rec, truth)
        assert np.median(err) < 5.0

    def test_degenerate_illumination_rejected(self):
        bad = IlluminationConfig(
            sources=(
                LightSource(direction=(0.0, 0.0, 1.0), emission=(1.0, 0.0, 0.0)),
                LightSource(direction=(0.0, 0.0, 1.0), emission=(0.0, 1.0, 0.0)),
                LightSource(direction=(0.0, 0.0, 1.0), emission=(0.0, 0.0, 1.0)),
            )
        )
        with pytest.raises(CalibrationError):
            build_calibration(bad, semi_specular_albedo(), sphere_radius_mm=4.0)

    def test_save_load_roundtrip(self, lut, tmp_path):
        from fingersim.photorender import CalibrationLUT

        path = tmp_path / "lut.npz"
        lut.save(path)
        loaded = CalibrationLUT.load(path)
        assert loaded.bins == lut.bins
        assert np.array_equal(loaded.normals, lut.normals)


class TestReconstructIntegrate:
    def test_tilted_plane_reconstruction(self, lut):
        slope = np.tan(np.deg2rad(12.0))
        xs = np.arange(80) * RES
        hm = HeightMap(np.tile(slope * xs, (40, 1)), resolution=RES)
        truth = normals_from_heightmap(hm)
        img = shade(truth, default_illumination(), semi_specular_albedo())
        rec = reconstruct_normals(img, lut)
        interior = np.s_[2:-2, 2:-2]
        err = angular_error_deg(rec[interior], truth[interior])
        assert np.median(err) < 3.0

    def test_full_pipeline_depth_rmse(self, lut):
        depth = 1.2
        hm, _, _ = sphere_cap_displacement(3.0, depth)
        truth = normals_from_heightmap(hm)
        img = shade(truth, default_illumination(), semi_specular_albedo())
        rec_n = reconstruct_normals(img, lut)
        z = integrate_normals(rec_n, resolution=RES)
        target = hm.values - hm.values.mean()
        rmse = np.sqrt(((z.values - target) ** 2).mean())
        assert rmse < 0.1 * depth

    def test_integrate_plane_exact(self):
        s = 0.2
        xs = np.arange(64) * RES
        hm = HeightMap(np.tile(s * xs, (32, 1)), resolution=RES)
        n = normals_from_heightmap(hm)
        z = integrate_normals(n, resolution=RES)
        recovered_slope = (z.values[:, -1] - z.values[:, 0]) / ((64 - 1) * RES)
        assert np.allclose(recovered_slope, s, atol=1e-6)

    def test_integrate_roundtrip_smooth(self):
        xs = (np.arange(120) + 0.5) * RES
        gx, gy = np.meshgrid(xs, xs)
        d = 0.8 * np.exp(-(((gx - 15) ** 2 + (gy - 15) ** 2) / 30.0))
        hm = HeightMap(d, resolution=RES)
        z = integrate_normals(normals_from_heightmap(hm), resolution=RES)
        rmse = np.sqrt(((z.values - (d - d.mean())) ** 2).mean())
        assert rmse < 1e-3

    def test_constant_up_field_is_flat(self):
        n = np.zeros((32, 32, 3))
        n[..., 2] = 1.0
        z = integrate_normals(n, resolution=RES)
        assert np.allclose(z.values, 0.0, atol=1e-9)


def synthetic_map():
    """4x4 map: row 0 plate, row 1 window 0, row 2 window 1, row 3 miss."""
    kind = np.zeros((4, 4), dtype=np.uint8)
    plate_xy = np.full((4, 4, 2), np.nan)
    window_id = np.full((4, 4), -1, dtype=np.int16)
    window_uv = np.full((4, 4, 2), np.nan)
    kind[0, :] = 1
    plate_xy[0, :, 0] = [10.0, 50.0, 80.0, 99.0]
    plate_xy[0, :, 1] = [5.0, 12.5, 20.0, 2.0]
    kind[1, :] = 2
    window_id[1, :] = 0
    window_uv[1, :, 0] = [1.0, 10.0, 25.0, 40.0]
    window_uv[1, :, 1] = [1.0, 5.0, 8.0, 12.0]
    kind[2, :] = 2
    window_id[2, :] = 1
    window_uv[2, :, 0] = [2.0, 12.0, 30.0, 44.0]
    window_uv[2, :, 1] = [2.0, 6.0, 9.0, 13.0]
    return PixelPlateMap(
        kind=kind,
        plate_xy=plate_xy,
        window_id=window_id,
        window_uv=window_uv,
        incidence=np.full((4, 4), np.nan),
        plate_size=(100.0, 25.0),
        window_sizes=((50.0, 14.0), (50.0, 14.0)),
    )


class TestComposite:
    def test_partition_black_tactile_white_windows(self):
        pmap = synthetic_map()
        tactile = RgbImage(np.zeros((50, 200, 3)))
        white = RgbImage(np.ones((20, 60, 3)))
        frame = composite_frame(tactile, {0: white, 1: white}, pmap)
        window = pmap.kind == 2
        assert np.all(frame.values[window] == 1.0)
        assert np.all(frame.values[~window] == 0.0)

    def test_plate_pixel_samples_tactile(self):
        pmap = synthetic_map()
        rng = np.random.default_rng(4)
        tvals = rng.uniform(0, 1, size=(50, 200, 3))
        tactile = RgbImage(tvals)
        bg = RgbImage(np.ones((20, 60, 3)))
        frame = composite_frame(tactile, {0: bg, 1: bg}, pmap)
        # Pixel (0, 1) is plate at (50, 12.5) mm -> image coords
        u = 50.0 / 100.0 * (200 - 1)
        v = 12.5 / 25.0 * (50 - 1)
        j0, i0 = int(u), int(v)
        fu, fv = u - j0, v - i0
        expected = (
            tvals[i0, j0] * (1 - fu) * (1 - fv)
            + tvals[i0, j0 + 1] * fu * (1 - fv)
            + tvals[i0 + 1, j0] * (1 - fu) * fv
            + tvals[i0 + 1, j0 + 1] * fu * fv
        )
        assert np.allclose(frame.values[0, 1], expected, atol=1e-12)

    def test_no_color_blending_across_partition(self):
        pmap = synthetic_map()
        red = RgbImage(np.tile([1.0, 0.0, 0.0], (50, 200, 1)))
        blue = RgbImage(np.tile([0.0, 0.0, 1.0], (20, 60, 1)))
        frame = composite_frame(red, {0: blue, 1: blue}, pmap)
        colors = {tuple(c) for c in frame.values.reshape(-1, 3)}
        assert colors <= {(1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, 0.0)}

    def test_missing_background_raises(self):
        pmap = synthetic_map()
        tactile = RgbImage(np.zeros((50, 200, 3)))
        with pytest.raises(ConfigurationError):
            composite_frame(tactile, {0: RgbImage(np.ones((20, 60, 3)))}, pmap)


class TestPpm:
    def test_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(6)
        img = RgbImage.from_uint8(rng.integers(0, 256, size=(24, 36, 3), dtype=np.uint8))
        path = tmp_path / "frame.ppm"
        write_ppm(img, path)
        back = read_ppm(path)
        assert np.array_equal(back.to_uint8(), img.to_uint8())

    def test_rejects_non_p6(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(ConfigurationError):
            read_ppm(path)

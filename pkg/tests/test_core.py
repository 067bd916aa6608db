import numpy as np
import pytest

from fingersim.core import (
    HeightMap,
    Pose6D,
    RgbImage,
    heightmap_sample,
    matrix_to_rotvec,
    pose_compose,
    pose_inverse,
    rotvec_to_matrix,
)
from fingersim.errors import DomainError


def quat_matrix_oracle(r):
    """Rotation matrix via unit quaternion, independent of Rodrigues."""
    r = np.asarray(r, dtype=float)
    theta = np.linalg.norm(r)
    if theta < 1e-15:
        return np.eye(3)
    axis = r / theta
    w = np.cos(theta / 2.0)
    x, y, z = np.sin(theta / 2.0) * axis
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


class TestRotvec:
    def test_zero_rotation_is_identity(self):
        assert np.allclose(rotvec_to_matrix([0, 0, 0]), np.eye(3))

    def test_half_turn_about_z(self):
        m = rotvec_to_matrix([0, 0, np.pi])
        assert np.allclose(m, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)

    def test_random_matches_quaternion_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            r = rng.normal(size=3) * rng.uniform(0, np.pi)
            m = rotvec_to_matrix(r)
            assert np.allclose(m, quat_matrix_oracle(r), atol=1e-12)
            assert np.allclose(m.T @ m, np.eye(3), atol=1e-9)
            assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)

    def test_norm_preserved(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            r = rng.normal(size=3)
            v = rng.normal(size=3)
            assert np.linalg.norm(rotvec_to_matrix(r) @ v) == pytest.approx(
                np.linalg.norm(v), abs=1e-9
            )

    def test_matrix_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            r = rng.normal(size=3)
            r = r / np.linalg.norm(r) * rng.uniform(1e-6, np.pi - 1e-9)
            back = matrix_to_rotvec(rotvec_to_matrix(r))
            assert np.allclose(back, r, atol=1e-7)

    def test_near_half_turn_roundtrip(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            r = axis * (np.pi - 1e-8)
            m = rotvec_to_matrix(r)
            back = matrix_to_rotvec(m)
            assert np.allclose(rotvec_to_matrix(back), m, atol=1e-6)


class TestPose:
    def test_identity_compose(self):
        rng = np.random.default_rng(1)
        p = Pose6D(rng.normal(size=3), rng.normal(size=3))
        q = pose_compose(Pose6D.identity(), p)
        assert np.allclose(q.translation, p.translation)
        assert np.allclose(q.rotation, p.rotation)

    def test_inverse_gives_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = Pose6D(rng.normal(size=3), rng.normal(size=3))
            q = pose_compose(p, pose_inverse(p))
            assert np.allclose(q.translation, 0.0, atol=1e-9)
            assert np.allclose(q.rotation, 0.0, atol=1e-9)

    def test_two_quarter_turns_equal_half_turn(self):
        quarter = Pose6D(rotation=[0, 0, np.pi / 2])
        combined = pose_compose(quarter, quarter)
        assert np.allclose(combined.rotation, [0, 0, np.pi], atol=1e-12)
        assert np.allclose(combined.translation, 0.0)

    def test_associativity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, b, c = (Pose6D(rng.normal(size=3), rng.normal(size=3)) for _ in range(3))
            left = pose_compose(pose_compose(a, b), c)
            right = pose_compose(a, pose_compose(b, c))
            assert np.allclose(left.matrix, right.matrix, atol=1e-9)

    def test_rotation_normalized_to_pi(self):
        p = Pose6D(rotation=[0, 0, 3 * np.pi / 2])
        assert np.linalg.norm(p.rotation) <= np.pi + 1e-12
        assert np.allclose(
            rotvec_to_matrix(p.rotation), rotvec_to_matrix([0, 0, 3 * np.pi / 2]), atol=1e-12
        )

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(6)
        p = Pose6D(rng.normal(size=3), rng.normal(size=3))
        pts = rng.normal(size=(10, 3))
        hom = np.concatenate([pts, np.ones((10, 1))], axis=1)
        assert np.allclose(p.apply(pts), (hom @ p.matrix.T)[:, :3], atol=1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            Pose6D(translation=[np.nan, 0, 0])


class TestHeightMap:
    def test_node_query_returns_stored_value(self):
        v = np.arange(12, dtype=float).reshape(3, 4)
        h = HeightMap(v, resolution=0.5)
        assert heightmap_sample(h, 1.0, 0.5) == pytest.approx(v[1, 2])

    def test_midpoint_of_two_nodes(self):
        v = np.array([[0.0, 1.0], [0.0, 1.0]])
        h = HeightMap(v, resolution=1.0)
        assert heightmap_sample(h, 0.5, 0.0) == pytest.approx(0.5)

    def test_random_queries_match_four_cell_oracle(self):
        rng = np.random.default_rng(9)
        v = rng.uniform(0, 2, size=(20, 30))
        res = 0.25
        h = HeightMap(v, resolution=res)
        for _ in range(300):
            x = rng.uniform(0, (30 - 1) * res)
            y = rng.uniform(0, (20 - 1) * res)
            j0, i0 = int(x / res), int(y / res)
            j0, i0 = min(j0, 28), min(i0, 18)
            fx, fy = x / res - j0, y / res - i0
            oracle = (
                v[i0, j0] * (1 - fx) * (1 - fy)
                + v[i0, j0 + 1] * fx * (1 - fy)
                + v[i0 + 1, j0] * (1 - fx) * fy
                + v[i0 + 1, j0 + 1] * fx * fy
            )
            assert heightmap_sample(h, x, y) == pytest.approx(oracle, abs=1e-12)

    def test_out_of_extent_raises(self):
        h = HeightMap(np.zeros((4, 4)), resolution=1.0)
        with pytest.raises(DomainError):
            heightmap_sample(h, 3.5, 0.0)
        with pytest.raises(DomainError):
            heightmap_sample(h, -0.1, 0.0)

    def test_continuity_on_smooth_map(self):
        xs = np.linspace(0, 2 * np.pi, 64)
        v = np.sin(xs)[None, :] * np.cos(xs)[:, None]
        h = HeightMap(v, resolution=0.1)
        rng = np.random.default_rng(10)
        for _ in range(100):
            x = rng.uniform(0.01, 6.2)
            y = rng.uniform(0.01, 6.2)
            a = heightmap_sample(h, x, y)
            b = heightmap_sample(h, x + 1e-6, y)
            assert abs(a - b) < 1e-3

    def test_origin_offsets_extent(self):
        h = HeightMap(np.zeros((4, 4)), resolution=1.0, origin=(10.0, 5.0))
        assert h.extent == (10.0, 13.0, 5.0, 8.0)
        with pytest.raises(DomainError):
            heightmap_sample(h, 0.0, 6.0)

    def test_too_small_rejected(self):
        with pytest.raises(DomainError):
            HeightMap(np.zeros((1, 5)), resolution=1.0)


class TestRgbImage:
    def test_values_clamped(self):
        img = RgbImage(np.array([[[2.0, -1.0, 0.5]]]))
        assert img.values.max() <= 1.0
        assert img.values.min() >= 0.0

    def test_uint8_roundtrip(self):
        rng = np.random.default_rng(12)
        raw = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        img = RgbImage.from_uint8(raw)
        assert np.array_equal(img.to_uint8(), raw)

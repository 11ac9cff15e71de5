import json
import math

import numpy as np
import pytest
from PIL import Image

from vfr.errors import DataError
from vfr.sampling import generate_rays, intersect_ray
from vfr.scene import (AnalyticScene, Frame, SceneDataset, blob_scene, fibonacci_poses,
                       generate_toy_dataset, load_nerf_synthetic, look_at, oracle_render, png_read,
                       png_write, save_nerf_synthetic, sphere_scene)


def write_fixture(root, frames, angle=0.6, extra=None):
    meta = {"camera_angle_x": angle, "frames": frames, **(extra or {})}
    (root / "transforms_train.json").write_text(json.dumps(meta))


def test_png_round_trip_bytes(tmp_path, rng):
    img = rng.integers(0, 256, (7, 5, 3), dtype=np.uint8)
    png_write(tmp_path / "a.png", img / 255.0)
    back = png_read(tmp_path / "a.png")
    np.testing.assert_array_equal(np.round(back * 255).astype(np.uint8), img)
    png_write(tmp_path / "b.png", back)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_png_extremes(tmp_path):
    Image.fromarray(np.array([[[0, 255, 128]]], dtype=np.uint8)).save(tmp_path / "x.png")
    v = png_read(tmp_path / "x.png")
    assert v[0, 0, 0] == 0.0 and v[0, 0, 1] == 1.0 and v[0, 0, 2] == 128 / 255


def test_png_rejects_16_bit(tmp_path):
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(DataError, match="deep.png"):
        png_read(tmp_path / "deep.png")


def test_png_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.png"):
        png_read(tmp_path / "nope.png")


def test_minimal_two_frame_fixture(tmp_path):
    for i in range(2):
        png_write(tmp_path / f"r_{i}.png", np.full((6, 8, 3), 0.5))
    frames = [{"file_path": f"./r_{i}", "transform_matrix": np.eye(4).tolist()} for i in range(2)]
    write_fixture(tmp_path, frames)
    ds = load_nerf_synthetic(tmp_path)
    assert len(ds.frames) == 2
    assert ds.width == 8 and ds.height == 6
    assert ds.focal == pytest.approx(0.5 * 8 / math.tan(0.3))


def test_missing_transform_matrix_names_frame(tmp_path):
    png_write(tmp_path / "r_0.png", np.zeros((4, 4, 3)))
    write_fixture(tmp_path, [{"file_path": "./r_0"}])
    with pytest.raises(DataError, match="frame 0"):
        load_nerf_synthetic(tmp_path)


def test_missing_transforms_file(tmp_path):
    with pytest.raises(DataError, match="transforms_train.json"):
        load_nerf_synthetic(tmp_path)


def test_malformed_json(tmp_path):
    (tmp_path / "transforms_train.json").write_text("{not json")
    with pytest.raises(DataError, match="malformed"):
        load_nerf_synthetic(tmp_path)


def test_size_mismatch(tmp_path):
    png_write(tmp_path / "r_0.png", np.zeros((4, 4, 3)))
    png_write(tmp_path / "r_1.png", np.zeros((5, 4, 3)))
    frames = [{"file_path": f"./r_{i}", "transform_matrix": np.eye(4).tolist()} for i in range(2)]
    write_fixture(tmp_path, frames)
    with pytest.raises(DataError, match="r_1"):
        load_nerf_synthetic(tmp_path)


def test_singular_pose_rejected(tmp_path):
    png_write(tmp_path / "r_0.png", np.zeros((4, 4, 3)))
    write_fixture(tmp_path, [{"file_path": "./r_0", "transform_matrix": np.zeros((4, 4)).tolist()}])
    with pytest.raises(DataError, match="invertible"):
        load_nerf_synthetic(tmp_path)


def test_alpha_composited_onto_background(tmp_path):
    rgba = np.zeros((2, 2, 4))
    rgba[0, 0] = [0.2, 0.3, 0.4, 1.0]
    png_write(tmp_path / "r_0.png", rgba)
    write_fixture(tmp_path, [{"file_path": "./r_0", "transform_matrix": np.eye(4).tolist()}])
    img = load_nerf_synthetic(tmp_path).frames[0].image
    np.testing.assert_array_equal(img[1, 1], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(img[0, 0], np.round(np.array([0.2, 0.3, 0.4]) * 255) / 255)
    black = load_nerf_synthetic(tmp_path, background=(0, 0, 0)).frames[0].image
    np.testing.assert_array_equal(black[1, 1], 0.0)


def test_aabb_key_is_read(tmp_path):
    png_write(tmp_path / "r_0.png", np.zeros((4, 4, 3)))
    write_fixture(tmp_path, [{"file_path": "./r_0", "transform_matrix": np.eye(4).tolist()}],
                  extra={"aabb": [[-1, -1, -1], [1, 1, 1]]})
    np.testing.assert_array_equal(load_nerf_synthetic(tmp_path).aabb, [[-1] * 3, [1] * 3])


# -- oracle ------------------------------------------------------------------

def test_oracle_zero_density_is_background(rng):
    scene = AnalyticScene(lambda x: np.zeros(x.shape[:-1]), lambda x, d: np.zeros(x.shape),
                          background=np.array([0.1, 0.2, 0.3]))
    out = oracle_render(scene, np.array([0.0, 0.0, -2.0]), np.array([0.0, 0.0, 1.0]), 64)
    np.testing.assert_array_equal(out, [0.1, 0.2, 0.3])


def test_oracle_constant_medium_closed_form():
    """Uniform medium filling the box: pixel = c * (1 - T) + T * bg with T = exp(-sigma * chord)."""
    sigma, colour = 3.0, np.array([0.9, 0.1, 0.4])
    scene = AnalyticScene(lambda x: np.full(x.shape[:-1], sigma),
                          lambda x, d: np.broadcast_to(colour, x.shape))
    o = np.array([[0.0, 0.0, -2.0], [-2.0, 0.1, 0.2]])
    d = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    trans = math.exp(-sigma * 1.0)
    expected = colour * (1 - trans) + trans * scene.background
    np.testing.assert_allclose(oracle_render(scene, o, d, 4096), [expected, expected], atol=1e-6)


def test_oracle_gaussian_optical_depth():
    """Black gaussian blob: transmittance through the centre has a closed form via erf."""
    peak, width = 20.0, 0.1
    scene = AnalyticScene(lambda x: peak * np.exp(-np.sum(x * x, -1) / (2 * width ** 2)),
                          lambda x, d: np.zeros(x.shape))
    depth = peak * width * math.sqrt(2 * math.pi) * math.erf(0.5 / (width * math.sqrt(2)))
    out = oracle_render(scene, np.array([0.0, 0.0, -2.0]), np.array([0.0, 0.0, 1.0]), 4096)
    np.testing.assert_allclose(out, math.exp(-depth), atol=1e-6)


def test_oracle_default_sphere_is_nearly_opaque_through_centre():
    out = oracle_render(sphere_scene(), np.array([0.0, 0.0, -2.0]), np.array([0.0, 0.0, 1.0]), 4096)
    assert np.all(out < 0.99)


def test_oracle_converges_on_smooth_scene(rng):
    scene = blob_scene()
    o = rng.standard_normal((20, 3))
    o = 1.5 * o / np.linalg.norm(o, axis=1, keepdims=True)
    d = rng.uniform(-0.2, 0.2, (20, 3)) - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    prev = None
    diffs = []
    for n in (256, 512, 1024, 2048, 4096):
        cur = oracle_render(scene, o, d, n)
        if prev is not None:
            diffs.append(np.abs(cur - prev).max())
        prev = cur
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < 1e-4


def test_oracle_needs_two_samples():
    with pytest.raises(ValueError):
        oracle_render(blob_scene(), np.zeros(3) - 2, np.array([1.0, 0, 0]), 1)


def test_analytic_scene_ranges(rng):
    x = rng.uniform(-0.5, 0.5, (5000, 3))
    d = rng.standard_normal((5000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for scene in (sphere_scene(), sphere_scene(specular=0.3), blob_scene()):
        assert np.all(scene.density_fn(x) >= 0)
        c = scene.color_fn(x, d)
        assert np.all((c >= 0) & (c <= 1))


def test_specular_preset_depends_on_view():
    scene = sphere_scene(specular=0.3)
    x = np.array([[0.1, 0.1, 0.1]] * 2)
    d = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    c = scene.color_fn(x, d)
    assert not np.allclose(c[0], c[1])


# -- toy dataset -------------------------------------------------------------

def test_single_view_pose_orthonormal():
    (pose,) = fibonacci_poses(1, 1.3, 0)
    r = pose[:3, :3]
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
    assert np.linalg.norm(pose[:3, 3]) == pytest.approx(1.3)
    # camera looks at the origin along -z
    np.testing.assert_allclose(-r[:, 2], -pose[:3, 3] / 1.3, atol=1e-12)


def test_look_at_handles_polar_position():
    pose = look_at([0.0, 0.0, 2.0])
    np.testing.assert_allclose(pose[:3, :3].T @ pose[:3, :3], np.eye(3), atol=1e-12)


def test_seeds_change_azimuth_only():
    a = np.array([p[:3, 3] for p in fibonacci_poses(6, 1.3, 0)])
    b = np.array([p[:3, 3] for p in fibonacci_poses(6, 1.3, 1)])
    np.testing.assert_allclose(a[:, 2], b[:, 2])
    assert not np.allclose(a[:, :2], b[:, :2])


def test_generated_dataset_deterministic_and_quantised():
    scene = sphere_scene()
    a = generate_toy_dataset(scene, 2, 8, seed=3, quadrature=256)
    b = generate_toy_dataset(scene, 2, 8, seed=3, quadrature=256)
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(fa.image, fb.image)
        np.testing.assert_array_equal(fa.pose, fb.pose)
    q = a.frames[0].image * 255
    np.testing.assert_array_equal(q, np.round(q))


def test_default_sphere_centre_darker_than_corner():
    ds = generate_toy_dataset(sphere_scene(), 1, 16, seed=0)
    img = ds.frames[0].image
    assert img[8, 8].mean() < img[0, 0].mean()
    np.testing.assert_array_equal(img[0, 0], [1.0, 1.0, 1.0])


def test_golden_image(tmp_path):
    from pathlib import Path

    golden = png_read(Path(__file__).parent / "data" / "toy_sphere_view0_16px.png")
    ds = generate_toy_dataset(sphere_scene(), 1, 16, seed=0)
    np.testing.assert_array_equal(ds.frames[0].image, golden)


def test_dataset_round_trip(tmp_path):
    ds = generate_toy_dataset(sphere_scene(specular=0.2), 3, 8, seed=5, quadrature=256)
    save_nerf_synthetic(tmp_path, {"train": ds})
    back = load_nerf_synthetic(tmp_path, "train")
    assert back.camera_angle_x == ds.camera_angle_x
    np.testing.assert_array_equal(back.aabb, ds.aabb)
    for fa, fb in zip(ds.frames, back.frames):
        np.testing.assert_allclose(fb.pose, fa.pose, atol=1e-7)
        np.testing.assert_array_equal(fb.image, fa.image)


def test_all_rays_shapes():
    ds = generate_toy_dataset(sphere_scene(), 2, 4, seed=0, quadrature=64)
    o, d, c = ds.all_rays()
    assert o.shape == d.shape == c.shape == (32, 3)


def test_dataset_rejects_mixed_sizes():
    with pytest.raises(DataError):
        SceneDataset(0.5, [Frame(np.eye(4), np.zeros((4, 4, 3))), Frame(np.eye(4), np.zeros((5, 4, 3)))])

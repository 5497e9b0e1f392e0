import json
import math

import numpy as np
import pytest

from quadnerf.geometry import (
    AnalyticField, Camera, Dataset, DatasetError, Primitive, SceneSpec, default_scene,
    focal_from_angle, generate_scene, load_nerf_synthetic, look_at, pixel_ray,
    save_nerf_synthetic,
)
from quadnerf.imaging import Image
from quadnerf.render import RaySampling, render_view


def cam100(pose=None):
    return Camera(100.0, 100.0, 50.0, 50.0, np.eye(4) if pose is None else pose, 200, 100)


def test_principal_point_is_on_axis():
    cam = Camera(100.0, 100.0, 50.5, 40.5, np.eye(4), 100, 80)
    ray = pixel_ray(cam, 40, 50)
    assert np.allclose(ray.direction, [0.0, 0.0, -1.0], atol=1e-15)
    assert np.array_equal(ray.origin, np.zeros(3))


def test_translation_moves_origin_only():
    pose = np.eye(4)
    pose[:3, 3] = [1.0, -2.0, 3.5]
    a, b = pixel_ray(cam100(), 17, 63), pixel_ray(cam100(pose), 17, 63)
    assert np.array_equal(a.direction, b.direction)
    assert np.array_equal(b.origin, [1.0, -2.0, 3.5])


def test_off_axis_pixel_direction():
    d = np.array([1.005, -0.005, -1.0])
    ray = pixel_ray(cam100(), 50, 150)
    assert np.allclose(ray.direction, d / np.linalg.norm(d), atol=1e-15)


def test_pixel_ray_bounds():
    with pytest.raises(IndexError):
        pixel_ray(cam100(), 100, 0)
    with pytest.raises(IndexError):
        pixel_ray(cam100(), 0, -1)


def test_camera_rejects_bad_pose():
    bad = np.eye(4)
    bad[0, 0] = 2.0
    with pytest.raises(ValueError):
        cam100(bad)
    with pytest.raises(ValueError):
        cam100(np.eye(3))


def test_ray_directions_unit_and_distinct():
    cam = Camera(30.0, 30.0, 12.0, 9.0, look_at([1.0, 2.0, 0.5]), 24, 18)
    origins, dirs = cam.rays()
    assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)
    flat = dirs.reshape(-1, 3)
    assert len(np.unique(np.round(flat, 12), axis=0)) == len(flat)
    ray = pixel_ray(cam, 5, 7)
    assert np.allclose(ray.direction, dirs[5, 7], atol=1e-15)
    assert np.allclose(origins, cam.position)


def test_look_at_points_at_target():
    pose = look_at([0.0, -3.0, 1.0])
    assert np.allclose(-pose[:3, 2], -np.array([0.0, -3.0, 1.0]) / math.sqrt(10))
    assert np.allclose(pose[:3, :3].T @ pose[:3, :3], np.eye(3))


def test_focal_from_angle():
    assert focal_from_angle(800, math.pi / 2) == pytest.approx(400.0, rel=1e-12)


def _write_split(root, name, frames, angle=0.7):
    (root / f"transforms_{name}.json").write_text(
        json.dumps({"camera_angle_x": angle, "frames": frames}))


def test_empty_frames(tmp_path):
    _write_split(tmp_path, "train", [])
    _write_split(tmp_path, "test", [])
    with pytest.raises(DatasetError, match="dataset has no views"):
        load_nerf_synthetic(tmp_path)


def test_loader_errors(tmp_path):
    with pytest.raises(DatasetError, match="missing"):
        load_nerf_synthetic(tmp_path)
    (tmp_path / "transforms_train.json").write_text("{not json")
    _write_split(tmp_path, "test", [])
    with pytest.raises(DatasetError, match="malformed"):
        load_nerf_synthetic(tmp_path)
    _write_split(tmp_path, "train", [{"file_path": "./nope", "transform_matrix": np.eye(4).tolist()}])
    with pytest.raises(DatasetError, match="missing image"):
        load_nerf_synthetic(tmp_path)


@pytest.fixture(scope="module")
def small_scene():
    return generate_scene(default_scene(), n_train=3, n_test=2, resolution=16, seed=5,
                          n_samples=128)


def test_json_round_trip(tmp_path, small_scene):
    save_nerf_synthetic(small_scene, tmp_path)
    back = load_nerf_synthetic(tmp_path, near=small_scene.cameras[0].near,
                               far=small_scene.cameras[0].far)
    assert back.train_ids == small_scene.train_ids and back.test_ids == small_scene.test_ids
    for a, b in zip(small_scene.cameras, back.cameras):
        assert np.allclose(a.c2w, b.c2w, atol=1e-9, rtol=0)
        assert b.fx == pytest.approx(a.fx, abs=1e-9)
    for a, b in zip(small_scene.images, back.images):
        assert np.max(np.abs(a.data - b.data)) <= 0.5 / 255 + 1e-12


def test_non_square_warns(tmp_path):
    img = Image(np.ones((8, 12, 3)))
    cam = Camera(10.0, 10.0, 6.0, 4.0, np.eye(4), 12, 8)
    save_nerf_synthetic(Dataset([img, img], [cam, cam], [0], [1]), tmp_path)
    with pytest.warns(UserWarning, match="non-square"):
        ds = load_nerf_synthetic(tmp_path)
    assert ds.cameras[0].fx == pytest.approx(10.0)


def test_dataset_validation():
    img = Image(np.ones((8, 8, 3)))
    cam = Camera(10.0, 10.0, 4.0, 4.0, np.eye(4), 8, 8)
    with pytest.raises(DatasetError):
        Dataset([img], [cam, cam], [0], [1])
    with pytest.raises(DatasetError):
        Dataset([img, img], [cam, cam], [0, 1], [1])
    with pytest.raises(DatasetError):
        Dataset([img, img], [cam, cam], [0, 1], [])
    ds = Dataset([img, img, img], [cam] * 3, [2, 0], [1])
    assert len(ds.train()) == 2 and len(ds.test()) == 1


def test_split_disjoint_and_covering(small_scene):
    ids = small_scene.train_ids + small_scene.test_ids
    assert sorted(ids) == list(range(len(small_scene.images)))


def test_generator_is_deterministic(small_scene):
    again = generate_scene(default_scene(), n_train=3, n_test=2, resolution=16, seed=5,
                           n_samples=128)
    for a, b in zip(small_scene.images, again.images):
        assert np.array_equal(a.data, b.data)
    for a, b in zip(small_scene.cameras, again.cameras):
        assert np.array_equal(a.c2w, b.c2w)


def test_generator_errors():
    with pytest.raises(ValueError):
        generate_scene(SceneSpec(()), 1, 1, 16)
    with pytest.raises(ValueError):
        generate_scene(default_scene(), 1, 1, 4)


def test_vacuum_scene_is_white():
    ghost = SceneSpec((Primitive("sphere", (0, 0, 0), 0.5, (1.0, 0.0, 0.0), 0.0),))
    ds = generate_scene(ghost, 2, 1, 8, n_samples=64)
    assert all(np.all(img.data == 1.0) for img in ds.images)


def test_opaque_red_sphere_center_pixel():
    spec = SceneSpec((Primitive("sphere", (0, 0, 0), 0.5, (1.0, 0.0, 0.0), 500.0),))
    ds = generate_scene(spec, 4, 2, 16, seed=1)
    for img in ds.images:
        assert np.all(np.abs(img.data[7:9, 7:9] - [1.0, 0.0, 0.0]) <= 1 / 255)


def test_quadrature_convergence():
    spec = default_scene()
    cam = Camera(20.0, 20.0, 12.0, 12.0, look_at([2.0, -1.2, 0.8]), 24, 24)
    gt = AnalyticField(spec.primitives)
    a = render_view(gt, cam, RaySampling(256, spec.near, spec.far, jitter=False))
    b = render_view(gt, cam, RaySampling(512, spec.near, spec.far, jitter=False))
    assert np.mean(np.abs(a.data - b.data)) < 1e-3


def test_analytic_field_overlap_mixes_colors():
    f = AnalyticField([Primitive("sphere", (0, 0, 0), 0.5, (1.0, 0.0, 0.0), 1.0),
                       Primitive("box", (0, 0, 0), 0.2, (0.0, 0.0, 1.0), 3.0)])
    rgb, sigma = f.query(np.array([[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.9, 0.0, 0.0]]))
    assert sigma.tolist() == [4.0, 1.0, 0.0]
    assert np.allclose(rgb[0], [0.25, 0.0, 0.75])
    assert np.allclose(rgb[2], 1.0)

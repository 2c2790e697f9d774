import json

import numpy as np
import pytest

from atv_stereo.errors import InputError
from atv_stereo.geometry import CameraModel, bilinear_sample_many, compose_warp, warp_points
from atv_stereo.synth import (
    Plane,
    SceneSpec,
    Sphere,
    arc_cameras,
    builtin_scenes,
    check_scene,
    get_scene,
    render_camera,
    render_views,
)

from conftest import scene_data

SCENES = ["flat", "two-plane", "sphere-on-plane"]


def axis_camera(w=33, h=25, f=50.0, center=(0.0, 0.0, 0.0)):
    K = np.array([[f, 0, (w - 1) / 2], [0, f, (h - 1) / 2], [0, 0, 1.0]])
    return CameraModel(K, np.eye(3), -np.asarray(center, dtype=float), (w, h))


def test_fronto_parallel_plane_depth_is_constant():
    scene = SceneSpec([Plane((0, 0, 2.5), (0, 0, -1))], [axis_camera()], 1.0, 4.0)
    _, depth, mask = render_camera(scene, scene.cameras[0])
    assert mask.all()
    np.testing.assert_allclose(depth, 2.5, rtol=1e-14)


def test_sphere_on_axis_center_depth():
    scene = SceneSpec([Sphere((0, 0, 5.0), 1.25)], [axis_camera()], 1.0, 8.0)
    _, depth, mask = render_camera(scene, scene.cameras[0])
    assert depth[12, 16] == pytest.approx(5.0 - 1.25, abs=1e-12)
    assert mask[12, 16] and not mask[0, 0]


def warp_consistency(images, depths, masks, cams, ref, src):
    """Mean absolute color error of the source image warped onto the reference
    through ground-truth depth, over pixels visible in both views."""
    h, w = depths[ref].shape
    ys, xs = np.nonzero(masks[ref])
    d = depths[ref][ys, xs]
    H = compose_warp(cams[src], cams[ref])
    u, v, ok = warp_points(H, xs.astype(float), ys.astype(float), d)
    # projected depth in the source view, to reject occluded landings
    X = cams[ref].unproject(xs.astype(float), ys.astype(float), d)
    _, _, d_proj = cams[src].project(X)
    d_src, inb = bilinear_sample_many(depths[src], np.where(ok, u, -1.0), np.where(ok, v, -1.0))
    vis = ok & inb & (np.abs(d_src - d_proj) < 1e-3 * d_proj)
    col, _ = bilinear_sample_many(images[src].astype(np.float64), u[vis], v[vis])
    return np.abs(col - images[ref][ys[vis], xs[vis]]).mean(), vis.mean()


@pytest.mark.parametrize("name", SCENES)
def test_builtin_scenes_are_photo_consistent(name):
    scene, images, depths, masks = scene_data(name)
    for src in range(1, len(scene.cameras)):
        mae, visible = warp_consistency(images, depths, masks, scene.cameras, 0, src)
        assert visible > 0.5
        assert mae < 0.02, (name, src, mae)


@pytest.mark.parametrize("name", SCENES)
def test_builtin_range_encloses_depth_with_margin(name):
    scene, _, depths, masks = scene_data(name)
    hit = np.concatenate([d[m] for d, m in zip(depths, masks)])
    assert scene.d_min < hit.min() and hit.max() < scene.d_max
    assert scene.d_min <= 0.8 * hit.min() and scene.d_max >= 1.2 * hit.max()
    assert len(scene.cameras) == 5 and scene.cameras[0].image_size == (320, 256)
    check_scene(scene)


def test_flat_depth_is_planar_per_view():
    _, _, depths, masks = scene_data("flat")
    assert masks[0].all()
    np.testing.assert_allclose(depths[0], 4.0, rtol=1e-14)
    # a tilted view of a plane has inverse depth affine in the pixel coordinates
    for d in depths[1:]:
        yy, xx = np.nonzero(d > 0)
        A = np.stack([xx, yy, np.ones_like(xx)], axis=1).astype(float)
        coef, *_ = np.linalg.lstsq(A, 1 / d[yy, xx], rcond=None)
        assert np.abs(A @ coef - 1 / d[yy, xx]).max() < 1e-12


def test_two_plane_has_a_straight_boundary():
    _, _, depths, _ = scene_data("two-plane")
    d = depths[0]
    near = np.isclose(d, 3.5, rtol=1e-12)
    far = np.isclose(d, 4.4, rtol=1e-12)
    assert (near | far).all() and near.any() and far.any()
    # every row switches from near to far at the same column
    cols = near.sum(axis=1)
    assert (cols == cols[0]).all()
    assert near[:, : cols[0]].all() and far[:, cols[0] :].all()


def test_rendering_is_deterministic():
    scene = get_scene("sphere-on-plane")
    a = render_views(scene, 1)
    b = render_views(get_scene("sphere-on-plane"), 3)
    for x, y in zip(a, b):
        for p, q in zip(x, y):
            np.testing.assert_array_equal(p, q)


def test_texture_is_anchored_to_the_surface():
    # a 4-pixel sideways camera shift over a fronto-parallel plane
    f, z = 50.0, 2.5
    ref = axis_camera(f=f)
    moved = axis_camera(f=f, center=(4 * z / f, 0.0, 0.0))
    scene = SceneSpec([Plane((0, 0, z), (0, 0, -1), seed=9)], [ref, moved], 1.0, 4.0)
    a, _, _ = render_camera(scene, ref)
    b, _, _ = render_camera(scene, moved)
    np.testing.assert_allclose(b[:, :-4], a[:, 4:], atol=1e-6)


def test_scene_round_trips_through_json():
    scene = get_scene("two-plane")
    back = SceneSpec.from_dict(json.loads(json.dumps(scene.to_dict())))
    np.testing.assert_array_equal(render_camera(back, back.cameras[2])[0], render_camera(scene, scene.cameras[2])[0])
    assert (back.d_min, back.d_max) == (scene.d_min, scene.d_max)


def test_builtin_names():
    assert set(builtin_scenes()) >= set(SCENES)
    with pytest.raises(InputError):
        get_scene("teapot")


def test_bad_scenes_rejected():
    with pytest.raises(InputError):
        SceneSpec([], [axis_camera()], 1.0, 2.0)
    with pytest.raises(InputError):
        axis_camera(f=0.0)
    away = CameraModel(axis_camera().intrinsics, np.diag([-1.0, 1.0, -1.0]), np.zeros(3), (33, 25))
    with pytest.raises(InputError):
        check_scene(SceneSpec([Plane((0, 0, 2.5), (0, 0, -1))], [away], 1.0, 4.0))


def test_arc_cameras_verge_on_the_target():
    for cam in arc_cameras():
        x, y, z = cam.project(np.array([0.0, 0.0, 4.0]))
        assert (x, y) == pytest.approx(((320 - 1) / 2, (256 - 1) / 2), abs=1e-9)
        assert z == pytest.approx(4.0)

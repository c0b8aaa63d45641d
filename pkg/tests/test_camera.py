import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from streamnerf.camera import (
    CameraIntrinsics,
    DegenerateLookAt,
    PoseSE3,
    image_rays,
    look_at,
    pixel_to_ray,
    quaternion_to_rotation,
    rotation_to_quaternion,
)

INTR = CameraIntrinsics(64.0, 64.0, 32.0, 32.0, 64, 64)


def test_principal_point_ray():
    ray = pixel_to_ray(INTR, PoseSE3.identity(), INTR.cx - 0.5, INTR.cy - 0.5)
    assert np.allclose(ray.direction, [0, 0, 1], atol=1e-15)
    assert np.allclose(ray.origin, 0)


def test_one_focal_length_offset():
    wide = CameraIntrinsics(64.0, 64.0, 32.0, 32.0, 128, 64)
    ray = pixel_to_ray(wide, PoseSE3.identity(), wide.cx - 0.5 + wide.fx, wide.cy - 0.5)
    assert np.allclose(ray.direction, np.array([1, 0, 1]) / np.sqrt(2), atol=1e-15)


def test_origin_is_translation():
    pose = PoseSE3(np.eye(3), [1.0, 2.0, 3.0])
    ray = pixel_to_ray(INTR, pose, 10, 20)
    assert np.array_equal(ray.origin, [1.0, 2.0, 3.0])


def test_pixel_out_of_range():
    with pytest.raises(ValueError):
        pixel_to_ray(INTR, PoseSE3.identity(), 64, 0)


def test_y_down_convention():
    # A pixel below the principal point looks toward +y in the camera frame.
    ray = pixel_to_ray(INTR, PoseSE3.identity(), 31.5, 50)
    assert ray.direction[1] > 0


@st.composite
def poses(draw):
    q = np.array(draw(st.lists(st.floats(-1, 1), min_size=4, max_size=4)))
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0, 0, 0])
    t = draw(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    return PoseSE3.from_quaternion(q, t)


@given(poses())
def test_image_rays_unit_and_consistent(pose):
    origins, dirs = image_rays(INTR, pose)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-9, rtol=0)
    ray = pixel_to_ray(INTR, pose, 5, 40)
    assert np.allclose(dirs[40 * 64 + 5], ray.direction, atol=1e-12)
    assert np.allclose(origins, pose.translation)


@given(poses())
def test_quaternion_round_trip(pose):
    r2 = quaternion_to_rotation(rotation_to_quaternion(pose.rotation))
    assert np.allclose(r2, pose.rotation, atol=1e-9)


def test_pose_rejects_non_rotation():
    with pytest.raises(ValueError):
        PoseSE3(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        PoseSE3(2 * np.eye(3), np.zeros(3))


def test_pose_is_immutable():
    pose = PoseSE3.identity()
    with pytest.raises(ValueError):
        pose.rotation[0, 0] = 2.0


def test_look_at_hand_evaluated():
    pose = look_at([1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    # z = target - position = (-1,0,0); x = z x up = (0,1,0); y = z x x = (0,0,-1)
    assert np.allclose(pose.rotation[:, 2], [-1, 0, 0])
    assert np.allclose(pose.rotation[:, 0], [0, 1, 0])
    assert np.allclose(pose.rotation[:, 1], [0, 0, -1])


def test_look_at_vertical_fallback_and_degenerate():
    pose = look_at([0.0, 0.0, 2.0], [0.0, 0.0, 0.0])
    assert np.allclose(pose.rotation[:, 2], [0, 0, -1])
    assert abs(np.linalg.det(pose.rotation) - 1) < 1e-9
    with pytest.raises(DegenerateLookAt):
        look_at([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])

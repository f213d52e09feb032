import math

import numpy as np
import pytest

from s3dsg.geometry import Aabb, Quat, RigidTransform, Vec3, voxel_iou


def test_vec3_rejects_non_finite():
    with pytest.raises(ValueError):
        Vec3(1.0, float("nan"), 0.0)
    with pytest.raises(ValueError):
        Vec3(float("inf"), 0.0, 0.0)


def test_quat_rotation_matches_axis_angle():
    q = Quat.from_axis_angle((0, 0, 1), math.pi / 2)
    rotated = q.rotate((1.0, 0.0, 0.0))
    assert np.allclose(rotated, [0.0, 1.0, 0.0], atol=1e-12)


def test_quat_composition_order():
    qa = Quat.from_axis_angle((0, 0, 1), math.pi / 2)
    qb = Quat.from_axis_angle((1, 0, 0), math.pi / 2)
    v = np.array([0.0, 1.0, 0.0])
    assert np.allclose((qa * qb).rotate(v), qa.rotate(qb.rotate(v)), atol=1e-12)


def test_quat_matrix_round_trip(rng):
    for _ in range(50):
        axis = rng.normal(size=3)
        q = Quat.from_axis_angle(axis, float(rng.uniform(-3, 3)))
        q2 = Quat.from_rotation_matrix(q.rotation_matrix())
        # q and -q encode the same rotation
        assert np.allclose(q2.rotation_matrix(), q.rotation_matrix(), atol=1e-9)


def test_rigid_transform_matrix_round_trip(rng):
    t = RigidTransform(Quat.from_axis_angle((0.3, 1, 0.2), 1.1), Vec3(1.0, -2.0, 0.5))
    t2 = RigidTransform.from_matrix(t.to_matrix())
    pts = rng.normal(size=(10, 3))
    assert np.allclose(t.apply(pts), t2.apply(pts), atol=1e-9)
    assert np.allclose(t.inverse().apply(t.apply(pts)), pts, atol=1e-9)


def test_rigid_transform_rejects_shear():
    m = np.eye(4)
    m[0, 1] = 0.5
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(m)


def test_aabb_iou_identity_and_disjoint():
    a = Aabb(Vec3(0, 0, 0), Vec3(1, 1, 1))
    assert a.iou(a) == pytest.approx(1.0)
    b = Aabb(Vec3(5, 5, 5), Vec3(6, 6, 6))
    assert a.iou(b) == 0.0


def test_aabb_iou_half_overlap():
    a = Aabb(Vec3(0, 0, 0), Vec3(2, 1, 1))
    b = Aabb(Vec3(1, 0, 0), Vec3(3, 1, 1))
    # intersection 1, union 3
    assert a.iou(b) == pytest.approx(1.0 / 3.0)


def test_voxel_iou_exact_counts():
    # 9 shared voxels of |A|=60, |B|=49 -> union 100 -> IoU 0.09
    voxel = 0.05
    centers_a = [(i, 0, 0) for i in range(60)]
    centers_b = [(i, 0, 0) for i in range(51, 60)] + [(i, 5, 0) for i in range(40)]
    pts_a = (np.array(centers_a) + 0.5) * voxel
    pts_b = (np.array(centers_b) + 0.5) * voxel
    assert voxel_iou(pts_a, pts_b, voxel) == pytest.approx(0.09)


def test_voxel_iou_identical_clouds(rng):
    pts = rng.uniform(-1, 1, size=(200, 3))
    assert voxel_iou(pts, pts) == 1.0


def test_voxel_iou_empty_cloud():
    assert voxel_iou(np.zeros((0, 3)), np.ones((4, 3))) == 0.0

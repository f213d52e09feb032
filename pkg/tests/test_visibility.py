import math

import numpy as np
import pytest

from s3dsg.errors import (
    InsufficientDepthError,
    MissingHeadPoseError,
    RasterMismatchError,
)
from s3dsg.geometry import Quat, RigidTransform, Vec3
from s3dsg.graph import EntityNode, HeadPose, SocialSceneGraph
from s3dsg.visibility import (
    DEFAULT_FAR,
    DEFAULT_H_FOV,
    DEFAULT_NEAR,
    DEFAULT_RASTER,
    DEFAULT_V_FOV,
    CameraIntrinsics,
    DepthProxy,
    Frustum,
    FrustumConfig,
    VisibilityConfig,
    anchor_head_pose,
    build_frustum,
    interaction_context,
    render_depth_proxy,
    resolve_occlusion,
    write_depth_pgm,
)

from conftest import make_human
from oracles import BoxPrimitive, SpherePrimitive, ray_cast_fractions

# Rotation sending the canonical gaze (-z) to +x with head-up (+y) to +z, so
# scenes can be laid out "in front" along the world x axis.
GAZE_TO_X = Quat.from_rotation_matrix(
    np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
)


def forward_x_frustum(origin=(0.0, 0.0, 1.5), **overrides):
    cfg = dict(h_fov=DEFAULT_H_FOV, v_fov=DEFAULT_V_FOV, near=DEFAULT_NEAR, far=DEFAULT_FAR)
    cfg.update(overrides)
    return Frustum(
        origin=Vec3(*origin), forward=Vec3(1, 0, 0), up=Vec3(0, 0, 1), **cfg
    )


def plate(node_id, x, y_lo, y_hi, z_lo, z_hi, ny=80, nz=60, label="plate"):
    """Dense axis-aligned plate at fixed world x, facing a +x-looking camera."""
    ys, zs = np.meshgrid(np.linspace(y_lo, y_hi, ny), np.linspace(z_lo, z_hi, nz))
    pts = np.column_stack([np.full(ys.size, float(x)), ys.ravel(), zs.ravel()])
    return EntityNode.from_cloud(node_id, label, pts)


# -- intrinsics and frustum construction ------------------------------------------


def test_intrinsics_invariants():
    CameraIntrinsics(100, 100, 80, 60, 160, 120)
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 100, 80, 60, 160, 120)
    with pytest.raises(ValueError):
        CameraIntrinsics(100, 100, 160, 60, 160, 120)


def test_frustum_invariants():
    with pytest.raises(ValueError):
        forward_x_frustum(near=5.0, far=5.0)
    with pytest.raises(ValueError):
        forward_x_frustum(h_fov=math.pi)
    with pytest.raises(ValueError):
        Frustum(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 0, 0), 1.0, 1.0, 0.3, 10.0)
    with pytest.raises(ValueError):
        Frustum(Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 0, 1), 1.0, 1.0, 0.3, 10.0)


def test_build_frustum_identity_points_down_negative_z():
    pose = HeadPose(Vec3(1, 2, 3), Quat(1, 0, 0, 0), "f0")
    fr = build_frustum(pose)
    assert fr.origin == Vec3(1, 2, 3)
    np.testing.assert_allclose(fr.forward.as_array(), [0, 0, -1], atol=1e-12)
    np.testing.assert_allclose(fr.up.as_array(), [0, 1, 0], atol=1e-12)
    assert (fr.h_fov, fr.v_fov) == (DEFAULT_H_FOV, DEFAULT_V_FOV)
    assert (fr.near, fr.far) == (DEFAULT_NEAR, DEFAULT_FAR)


def test_build_frustum_yaw_rotates_in_horizontal_plane():
    pose = HeadPose(Vec3(0, 0, 0), Quat.from_axis_angle((0, 1, 0), math.pi / 2), "f0")
    fr = build_frustum(pose)
    base = build_frustum(HeadPose(Vec3(0, 0, 0), Quat(1, 0, 0, 0), "f0"))
    f_new = fr.forward.as_array()
    f_old = base.forward.as_array()
    assert abs(float(np.dot(f_new, f_old))) < 1e-9  # rotated a quarter turn
    assert abs(f_new[1]) < 1e-9  # still horizontal (up was the yaw axis)


def test_frustum_config_rejects_bad_range():
    with pytest.raises(ValueError):
        FrustumConfig(near=2.0, far=1.0)


def test_default_parameters():
    assert DEFAULT_H_FOV == pytest.approx(math.radians(120))
    assert DEFAULT_V_FOV == pytest.approx(math.radians(90))
    assert (DEFAULT_NEAR, DEFAULT_FAR) == (0.3, 10.0)
    assert DEFAULT_RASTER == (160, 120)


# -- head pose anchoring -----------------------------------------------------------


def centered_box_setup(depth_m=2.0, width=64, height=48):
    intr = CameraIntrinsics(fx=50.0, fy=50.0, cx=width / 2, cy=height / 2, width=width, height=height)
    depth = np.full((height, width), depth_m, dtype=float)
    box = (width // 2 - 8, height // 2 - 8, width // 2 + 8, height // 2 + 8)
    return intr, depth, box


def test_anchor_at_principal_point_identity_pose():
    intr, depth, box = centered_box_setup(2.0)
    pose = anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, RigidTransform.identity(), "f1")
    np.testing.assert_allclose(pose.centroid.as_array(), [0, 0, 2.0], atol=1e-12)
    assert pose.source_frame_id == "f1"


def test_anchor_translated_camera():
    intr, depth, box = centered_box_setup(2.0)
    cam = RigidTransform(Quat(1, 0, 0, 0), Vec3(1, 0, 0))
    pose = anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, cam)
    np.testing.assert_allclose(pose.centroid.as_array(), [1, 0, 2.0], atol=1e-12)


def test_anchor_composes_orientation_with_camera_rotation():
    intr, depth, box = centered_box_setup(2.0)
    yaw = Quat.from_axis_angle((0, 0, 1), math.pi / 2)
    cam = RigidTransform(yaw, Vec3(0, 0, 0))
    pose = anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, cam)
    np.testing.assert_allclose(
        pose.orientation.rotate((1, 0, 0)), yaw.rotate((1, 0, 0)), atol=1e-12
    )
    # centroid rotated too: camera z maps to world z under yaw
    np.testing.assert_allclose(pose.centroid.as_array(), [0, 0, 2.0], atol=1e-12)


def test_anchor_depth_hole_raises():
    intr, depth, box = centered_box_setup(2.0)
    depth[:, :] = 0.0
    with pytest.raises(InsufficientDepthError):
        anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, RigidTransform.identity())


def test_anchor_sparse_depth_raises_below_20_percent():
    intr, depth, box = centered_box_setup(2.0)
    x0, y0, x1, y1 = box
    region = depth[y0:y1, x0:x1]
    region[:, :] = 0.0
    flat = region.reshape(-1)
    flat[: int(flat.size * 0.15)] = 2.0  # 15% valid < 20% threshold
    with pytest.raises(InsufficientDepthError):
        anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, RigidTransform.identity())


def test_anchor_accepts_millimeter_uint16():
    intr, depth, box = centered_box_setup(2.0)
    mm = (depth * 1000).astype(np.uint16)
    pose = anchor_head_pose(box, Quat(1, 0, 0, 0), mm, intr, RigidTransform.identity())
    np.testing.assert_allclose(pose.centroid.as_array(), [0, 0, 2.0], atol=1e-9)


def test_anchor_uses_median_against_outliers():
    intr, depth, box = centered_box_setup(2.0)
    x0, y0, x1, y1 = box
    depth[y0, x0] = 9.0  # single outlier must not move the median
    pose = anchor_head_pose(box, Quat(1, 0, 0, 0), depth, intr, RigidTransform.identity())
    np.testing.assert_allclose(pose.centroid.as_array(), [0, 0, 2.0], atol=1e-9)


def test_anchor_box_out_of_bounds_rejected():
    intr, depth, box = centered_box_setup(2.0)
    with pytest.raises(ValueError):
        anchor_head_pose((-1, 0, 10, 10), Quat(1, 0, 0, 0), depth, intr, RigidTransform.identity())


# -- depth proxy rendering ---------------------------------------------------------


def test_single_point_straight_ahead():
    fr = forward_x_frustum(origin=(0, 0, 0))
    entity = EntityNode.from_cloud(7, "dot", np.array([[2.0, 0.0, 0.0]]))
    proxy = render_depth_proxy(entity, fr)
    assert proxy is not None
    assert proxy.entity_id == 7
    assert 1 <= proxy.silhouette_pixels <= 9  # point plus closing halo
    depths = proxy.depth_image[proxy.silhouette_mask]
    np.testing.assert_allclose(depths, 2.0, atol=0.01)


def test_entity_behind_head_returns_none():
    fr = forward_x_frustum()
    behind = plate(1, -2.0, -1, 1, 1, 2, ny=20, nz=20)
    assert render_depth_proxy(behind, fr) is None


def test_entity_outside_near_far_returns_none():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    too_close = plate(1, 0.1, -0.1, 0.1, 1.4, 1.6, ny=10, nz=10)
    too_far = plate(2, 11.0, -0.1, 0.1, 1.4, 1.6, ny=10, nz=10)
    assert render_depth_proxy(too_close, fr) is None
    assert render_depth_proxy(too_far, fr) is None


def test_plate_silhouette_matches_analytic_area():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    entity = plate(3, 3.0, -0.5, 0.5, 1.0, 2.0, ny=90, nz=90)
    proxy = render_depth_proxy(entity, fr, raster=DEFAULT_RASTER)
    assert proxy is not None
    intr = fr.intrinsics(DEFAULT_RASTER)
    analytic = (intr.fx * 1.0 / 3.0) * (intr.fy * 1.0 / 3.0)
    assert abs(proxy.silhouette_pixels - analytic) <= 0.10 * analytic
    inside = proxy.depth_image[proxy.silhouette_mask]
    np.testing.assert_allclose(inside, 3.0, atol=0.05)


def test_proxy_invariant_finite_depth_inside_silhouette():
    depth = np.full((4, 4), np.inf)
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = True
    with pytest.raises(ValueError):
        DepthProxy(1, depth, mask)
    depth[1, 1] = 2.0
    DepthProxy(1, depth, mask)  # now satisfies the invariant


def test_sparse_cloud_interior_holes_get_filled():
    rng = np.random.default_rng(3)
    ys = rng.uniform(-0.5, 0.5, 300)
    zs = rng.uniform(1.0, 2.0, 300)
    pts = np.column_stack([np.full(300, 3.0), ys, zs])
    entity = EntityNode.from_cloud(4, "sparse", pts)
    proxy = render_depth_proxy(entity, forward_x_frustum(origin=(0, 0, 1.5)))
    assert proxy is not None
    assert np.all(np.isfinite(proxy.depth_image[proxy.silhouette_mask]))
    assert np.all(np.isinf(proxy.depth_image[~proxy.silhouette_mask]))


# -- occlusion resolution ----------------------------------------------------------


def test_full_occlusion_pair():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    near = plate(1, 2.0, -1.0, 1.0, 0.5, 2.5)
    far = plate(2, 4.0, -1.0, 1.0, 1.0, 2.0)
    report = resolve_occlusion(
        [render_depth_proxy(near, fr), render_depth_proxy(far, fr)], human_id=9
    )
    assert report.human_id == 9
    assert report.fraction_for(1) == 1.0
    assert report.fraction_for(2) == 0.0


def test_single_entity_fully_visible():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    report = resolve_occlusion([render_depth_proxy(plate(5, 3.0, -1, 1, 1, 2), fr)])
    assert report.fraction_for(5) == 1.0


def test_half_occlusion():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    far = plate(2, 4.0, -1.0, 1.0, 1.0, 2.0)
    # covers exactly the far plate's y < 0 half (projectively y/x matches)
    near = plate(1, 2.0, -0.5, 0.0, 1.1, 1.9)
    report = resolve_occlusion(
        [render_depth_proxy(near, fr), render_depth_proxy(far, fr)]
    )
    assert report.fraction_for(1) == 1.0
    assert report.fraction_for(2) == pytest.approx(0.5, abs=0.05)


def test_raster_mismatch_rejected():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    a = render_depth_proxy(plate(1, 3.0, -1, 1, 1, 2), fr, raster=(160, 120))
    b = render_depth_proxy(plate(2, 3.0, -1, 1, 1, 2), fr, raster=(80, 60))
    with pytest.raises(RasterMismatchError):
        resolve_occlusion([a, b])


def test_empty_proxy_list_gives_empty_report():
    report = resolve_occlusion([], human_id=3)
    assert report.entries == []


def test_adding_occluder_never_increases_fractions():
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    rng = np.random.default_rng(11)
    prims = [
        plate(1, 3.0, -1.2, 0.4, 1.0, 2.1),
        plate(2, 4.5, -0.5, 1.5, 0.8, 2.4),
        plate(3, 6.0, -2.0, 2.0, 0.5, 2.8),
    ]
    proxies = [render_depth_proxy(p, fr) for p in prims]
    before = resolve_occlusion(list(proxies))
    occluder = plate(99, float(rng.uniform(1.0, 2.5)), -1.0, 1.0, 1.0, 2.0)
    after = resolve_occlusion(proxies + [render_depth_proxy(occluder, fr)])
    for p in prims:
        assert after.fraction_for(p.id) <= before.fraction_for(p.id) + 1e-12


# -- whole-view composition ----------------------------------------------------------


def context_human(node_id=1, marker=1, origin=(0.0, 0.0, 1.5)):
    human = make_human(node_id, marker, (origin[0], origin[1], 0.9))
    human.set_head_pose(HeadPose(Vec3(*origin), GAZE_TO_X, "f0"))
    return human


def test_context_single_object_fully_visible():
    g = SocialSceneGraph()
    human = context_human()
    g.add_node(human)
    g.add_node(plate(2, 3.0, -1.0, 1.0, 1.0, 2.0, label="tv"))
    report = interaction_context(human, g)
    assert report.human_id == 1
    assert report.fraction_for(2) == 1.0


def test_context_wall_hides_everything_behind():
    g = SocialSceneGraph()
    human = context_human()
    g.add_node(human)
    g.add_node(plate(2, 2.0, -4.0, 4.0, 0.0, 3.0, ny=220, nz=120, label="wall"))
    g.add_node(plate(3, 5.0, -0.5, 0.5, 1.0, 2.0, label="shelf"))
    report = interaction_context(human, g)
    assert report.fraction_for(2) == 1.0
    assert report.fraction_for(3) <= 0.05


def test_context_excludes_own_points():
    g = SocialSceneGraph()
    human = context_human()
    g.add_node(human)
    g.add_node(plate(2, 3.0, -1, 1, 1, 2))
    report = interaction_context(human, g)
    assert all(e.entity_id != human.id for e in report.entries)


def test_context_requires_head_pose():
    g = SocialSceneGraph()
    human = make_human(1, 1, (0, 0, 0.9))
    g.add_node(human)
    with pytest.raises(MissingHeadPoseError):
        interaction_context(human, g)


def test_context_other_humans_participate():
    g = SocialSceneGraph()
    viewer = context_human(1, 1)
    g.add_node(viewer)
    other = make_human(2, 2, (3.0, 0.0, 0.9), size=(0.6, 0.6, 1.8), n=400)
    g.add_node(other)
    report = interaction_context(viewer, g)
    assert report.fraction_for(2) == 1.0


# -- oracle comparison ----------------------------------------------------------------


def oracle_scene(rng, n_prims):
    """Primitives sized/placed so silhouettes cover enough pixels for the
    0.05 tolerance; boundary-pixel bookkeeping differs between point
    splatting and center-ray casting, and that rim noise shrinks as 1/size."""
    primitives = {}
    for k in range(n_prims):
        cx = float(rng.uniform(2.0, 6.0))
        cy = float(rng.uniform(-0.9, 0.9))
        cz = float(rng.uniform(1.1, 1.9))
        if rng.random() < 0.5:
            half = rng.uniform(0.25, 0.55, size=3)
            primitives[k + 1] = BoxPrimitive(
                tuple(np.array([cx, cy, cz]) - half), tuple(np.array([cx, cy, cz]) + half)
            )
        else:
            primitives[k + 1] = SpherePrimitive((cx, cy, cz), float(rng.uniform(0.3, 0.55)))
    return primitives


ORACLE_FOV = dict(h_fov=math.radians(60), v_fov=math.radians(45))


@pytest.mark.parametrize("seed,n_prims", [(101, 2), (202, 3), (303, 4)])
def test_visible_fractions_match_ray_casting_oracle(seed, n_prims):
    rng = np.random.default_rng(seed)
    primitives = oracle_scene(rng, n_prims)
    raster = DEFAULT_RASTER
    fr = forward_x_frustum(origin=(0.0, 0.0, 1.5), **ORACLE_FOV)
    proxies = []
    for eid, prim in primitives.items():
        cloud = prim.sample_surface(10000, rng)
        node = EntityNode.from_cloud(eid, "prim", cloud)
        proxy = render_depth_proxy(node, fr, raster=raster)
        assert proxy is not None
        proxies.append(proxy)
    report = resolve_occlusion(proxies)
    expected = ray_cast_fractions(
        primitives,
        origin=(0.0, 0.0, 1.5),
        forward=(1.0, 0.0, 0.0),
        up=(0.0, 0.0, 1.0),
        near=DEFAULT_NEAR,
        far=DEFAULT_FAR,
        width=raster[0],
        height=raster[1],
        **ORACLE_FOV,
    )
    for eid, want in expected.items():
        assert want is not None
        got = report.fraction_for(eid)
        assert got == pytest.approx(want, abs=0.05), f"entity {eid}"


def test_rigid_invariance_of_fractions():
    rng = np.random.default_rng(17)
    g = SocialSceneGraph()
    human = context_human()
    g.add_node(human)
    for eid, prim in oracle_scene(rng, 3).items():
        g.add_node(EntityNode.from_cloud(eid + 10, "prim", prim.sample_surface(4000, rng)))
    base = interaction_context(human, g)

    t = RigidTransform(Quat.from_axis_angle((0, 0, 1), 1.1), Vec3(3.0, -2.0, 0.4))
    g2 = SocialSceneGraph()
    moved_human = make_human(1, 1, (0, 0, 0.9))
    moved_human = type(moved_human).from_cloud(1, 1, t.apply(moved_human.points))
    pose = human.head_pose
    moved_human.set_head_pose(
        HeadPose(t.apply_vec(pose.centroid), t.rotation * pose.orientation, pose.source_frame_id)
    )
    g2.add_node(moved_human)
    for node in g.entities():
        g2.add_node(EntityNode.from_cloud(node.id, node.class_label, t.apply(node.points)))
    moved = interaction_context(moved_human, g2)

    assert {e.entity_id for e in base.entries} == {e.entity_id for e in moved.entries}
    for entry in base.entries:
        assert moved.fraction_for(entry.entity_id) == pytest.approx(
            entry.visible_fraction, abs=1e-3
        )


# -- exports ---------------------------------------------------------------------------


def test_report_json_shape():
    import json

    fr = forward_x_frustum(origin=(0, 0, 1.5))
    report = resolve_occlusion([render_depth_proxy(plate(5, 3.0, -1, 1, 1, 2), fr)], human_id=2)
    payload = json.loads(report.to_json())
    assert payload["human_id"] == 2
    assert payload["entries"][0]["entity_id"] == 5
    assert payload["entries"][0]["fraction"] == 1.0
    assert payload["entries"][0]["pixels"] > 0


def test_depth_pgm_round_trip(tmp_path):
    fr = forward_x_frustum(origin=(0, 0, 1.5))
    proxy = render_depth_proxy(plate(5, 3.0, -1, 1, 1, 2), fr, raster=(40, 30))
    path = tmp_path / "proxy.pgm"
    write_depth_pgm(proxy, path)
    raw = path.read_bytes()
    header, rest = raw.split(b"65535\n", 1)
    assert header.startswith(b"P5\n40 30\n")
    img = np.frombuffer(rest, dtype=">u2").reshape(30, 40)
    sil = proxy.silhouette_mask
    np.testing.assert_allclose(img[sil] / 1000.0, proxy.depth_image[sil], atol=0.001)
    assert np.all(img[~sil] == 0)

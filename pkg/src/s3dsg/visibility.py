"""Per-person visibility estimation.

Anchors a head pose in world coordinates, simulates the person's visual
frustum, renders every other node's point cloud into a depth proxy on a small
raster, and resolves occlusion by per-pixel depth comparison.  The output is
the fraction of each entity's projected silhouette the person can actually
see, which downstream stages use to decide which entities belong in a
person's interaction context.

Conventions: the canonical gaze axis is the head frame's -z with +y up.  The
virtual camera uses +z forward / +x right / +y down (image rows grow
downward), and depth means distance along the forward axis, not ray length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import (
    InsufficientDepthError,
    MissingHeadPoseError,
    RasterMismatchError,
)
from .geometry import Quat, RigidTransform, Vec3
from .graph import HeadPose, HumanNode, SocialSceneGraph

GAZE_AXIS = np.array([0.0, 0.0, -1.0])
HEAD_UP_AXIS = np.array([0.0, 1.0, 0.0])

DEFAULT_H_FOV = math.radians(120.0)
DEFAULT_V_FOV = math.radians(90.0)
DEFAULT_NEAR = 0.3
DEFAULT_FAR = 10.0
DEFAULT_RASTER = (160, 120)  # (width, height)
DEPTH_EPSILON = 0.05
MIN_VALID_DEPTH_FRACTION = 0.2

_CLOSING_STRUCTURE = np.ones((3, 3), dtype=bool)
_CLOSING_ITERATIONS = 2


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; pixel (u, v) has its center at (u + .5, v + .5)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Frustum:
    origin: Vec3
    forward: Vec3
    up: Vec3
    h_fov: float
    v_fov: float
    near: float
    far: float

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        for name, fov in (("h_fov", self.h_fov), ("v_fov", self.v_fov)):
            if not (0 < fov < math.pi):
                raise ValueError(f"{name} must be in (0, pi), got {fov}")
        f = self.forward.as_array()
        u = self.up.as_array()
        if abs(np.linalg.norm(f) - 1.0) > 1e-6 or abs(np.linalg.norm(u) - 1.0) > 1e-6:
            raise ValueError("forward and up must be unit vectors")
        if abs(float(np.dot(f, u))) > 1e-6:
            raise ValueError("forward must be perpendicular to up")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Camera axes (forward, right, down) as world-frame unit vectors."""
        fwd = self.forward.as_array()
        right = np.cross(fwd, self.up.as_array())
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        return fwd, right, down

    def intrinsics(self, raster: tuple[int, int]) -> CameraIntrinsics:
        width, height = raster
        return CameraIntrinsics(
            fx=(width / 2.0) / math.tan(self.h_fov / 2.0),
            fy=(height / 2.0) / math.tan(self.v_fov / 2.0),
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class FrustumConfig:
    h_fov: float = DEFAULT_H_FOV
    v_fov: float = DEFAULT_V_FOV
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        if self.near >= self.far:
            raise ValueError(f"need near < far, got near={self.near}, far={self.far}")


@dataclass(frozen=True)
class VisibilityConfig:
    frustum: FrustumConfig = field(default_factory=FrustumConfig)
    raster: tuple[int, int] = DEFAULT_RASTER
    epsilon: float = DEPTH_EPSILON


@dataclass
class DepthProxy:
    """One entity's rendering into a person's view.

    ``depth_image`` holds forward-axis depth in meters with +inf marking
    pixels outside the silhouette; ``silhouette_mask`` is the closed
    projected-point mask with interior holes depth-filled.
    """

    entity_id: int
    depth_image: np.ndarray
    silhouette_mask: np.ndarray

    def __post_init__(self):
        if self.depth_image.shape != self.silhouette_mask.shape:
            raise ValueError("depth image and silhouette mask shapes differ")
        if not np.all(np.isfinite(self.depth_image[self.silhouette_mask])):
            raise ValueError("silhouette pixels must all carry finite depth")

    @property
    def silhouette_pixels(self) -> int:
        return int(self.silhouette_mask.sum())


@dataclass(frozen=True)
class VisibilityEntry:
    entity_id: int
    visible_fraction: float
    silhouette_pixels: int

    def __post_init__(self):
        if not (0.0 <= self.visible_fraction <= 1.0):
            raise ValueError(f"fraction out of range: {self.visible_fraction}")
        if self.silhouette_pixels < 1:
            raise ValueError("entries require at least one silhouette pixel")


@dataclass
class VisibilityReport:
    human_id: Optional[int]
    entries: list[VisibilityEntry]

    def fraction_for(self, entity_id: int) -> Optional[float]:
        for entry in self.entries:
            if entry.entity_id == entity_id:
                return entry.visible_fraction
        return None

    def to_json(self) -> str:
        payload = {
            "human_id": self.human_id,
            "entries": [
                {
                    "entity_id": e.entity_id,
                    "fraction": e.visible_fraction,
                    "pixels": e.silhouette_pixels,
                }
                for e in self.entries
            ],
        }
        return json.dumps(payload, sort_keys=True)


def _depth_to_meters(depth_image: np.ndarray) -> np.ndarray:
    """Accept 16-bit millimeter images (0 = invalid) or float meters."""
    depth = np.asarray(depth_image)
    if np.issubdtype(depth.dtype, np.integer):
        meters = depth.astype(float) / 1000.0
    else:
        meters = depth.astype(float)
    meters[~np.isfinite(meters)] = 0.0
    return meters


def anchor_head_pose(
    detection_2d: tuple[int, int, int, int],
    orientation: Quat,
    depth_image: np.ndarray,
    intrinsics: CameraIntrinsics,
    camera_pose: RigidTransform,
    frame_id: str = "",
) -> HeadPose:
    """Lift a 2D head detection into a world-frame head pose.

    The centroid back-projects the median valid depth of the box's central
    region through the pinhole at the box center; the camera-frame
    orientation is composed with the camera pose rotation.
    """
    x0, y0, x1, y1 = detection_2d
    if not (0 <= x0 < x1 <= intrinsics.width and 0 <= y0 < y1 <= intrinsics.height):
        raise ValueError(f"detection box {detection_2d} outside image bounds")
    meters = _depth_to_meters(depth_image)
    box = meters[y0:y1, x0:x1]
    valid = box > 0
    if valid.mean() < MIN_VALID_DEPTH_FRACTION:
        raise InsufficientDepthError(
            f"only {valid.mean():.0%} of box pixels carry depth (need >= "
            f"{MIN_VALID_DEPTH_FRACTION:.0%})"
        )
    # Central half of the box; fall back to the whole box over sparse regions.
    h, w = box.shape
    cy0, cy1 = h // 4, max(h // 4 + 1, h - h // 4)
    cx0, cx1 = w // 4, max(w // 4 + 1, w - w // 4)
    center_region = box[cy0:cy1, cx0:cx1]
    center_valid = center_region[center_region > 0]
    depths = center_valid if center_valid.size else box[valid]
    z = float(np.median(depths))
    u = (x0 + x1) / 2.0
    v = (y0 + y1) / 2.0
    cam_point = np.array(
        [(u - intrinsics.cx) / intrinsics.fx * z, (v - intrinsics.cy) / intrinsics.fy * z, z]
    )
    world = camera_pose.apply(cam_point[None, :])[0]
    world_orientation = camera_pose.rotation * orientation
    return HeadPose(
        centroid=Vec3.from_array(world),
        orientation=world_orientation,
        source_frame_id=frame_id,
    )


def build_frustum(pose: HeadPose, config: Optional[FrustumConfig] = None) -> Frustum:
    """Orient the visual frustum along the head's gaze axis."""
    cfg = config or FrustumConfig()
    forward = pose.orientation.rotate(GAZE_AXIS)
    up = pose.orientation.rotate(HEAD_UP_AXIS)
    return Frustum(
        origin=pose.centroid,
        forward=Vec3.from_array(forward),
        up=Vec3.from_array(up),
        h_fov=cfg.h_fov,
        v_fov=cfg.v_fov,
        near=cfg.near,
        far=cfg.far,
    )


def render_depth_proxy(entity, frustum: Frustum, raster: tuple[int, int] = DEFAULT_RASTER):
    """Project a node's points into the frustum and build its depth proxy.

    Returns None when no point lands inside the frustum.  Per-pixel depth is
    the nearest contributing point; the silhouette is the morphological
    closing of the projected-point mask, with covered-but-unsampled pixels
    filled from their nearest sampled neighbor.
    """
    width, height = raster
    intr = frustum.intrinsics(raster)
    fwd, right, down = frustum.basis()
    rel = entity.points - frustum.origin.as_array()
    z = rel @ fwd
    in_range = (z >= frustum.near) & (z <= frustum.far)
    if not in_range.any():
        return None
    rel = rel[in_range]
    z = z[in_range]
    u = intr.cx + intr.fx * (rel @ right) / z
    v = intr.cy + intr.fy * (rel @ down) / z
    px = np.floor(u).astype(int)
    py = np.floor(v).astype(int)
    on = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    if not on.any():
        return None
    px, py, z = px[on], py[on], z[on]

    depth = np.full((height, width), np.inf)
    np.minimum.at(depth, (py, px), z)
    point_mask = np.isfinite(depth)
    silhouette = ndimage.binary_closing(
        point_mask, structure=_CLOSING_STRUCTURE, iterations=_CLOSING_ITERATIONS
    )
    silhouette |= point_mask  # closing must never drop sampled pixels
    holes = silhouette & ~point_mask
    if holes.any():
        _, (iy, ix) = ndimage.distance_transform_edt(~point_mask, return_indices=True)
        depth[holes] = depth[iy[holes], ix[holes]]
    depth[~silhouette] = np.inf
    return DepthProxy(entity_id=entity.id, depth_image=depth, silhouette_mask=silhouette)


def resolve_occlusion(
    proxies: list[DepthProxy],
    human_id: Optional[int] = None,
    epsilon: float = DEPTH_EPSILON,
) -> VisibilityReport:
    """Depth-compare overlapping proxies into per-entity visible fractions.

    A silhouette pixel of entity e counts as visible when no other proxy
    covers it strictly more than ``epsilon`` nearer.
    """
    if not proxies:
        return VisibilityReport(human_id=human_id, entries=[])
    shape = proxies[0].depth_image.shape
    for p in proxies:
        if p.depth_image.shape != shape:
            raise RasterMismatchError(
                f"proxy raster {p.depth_image.shape} != expected {shape}"
            )
    stack = np.stack([p.depth_image for p in proxies])
    order = np.sort(stack, axis=0)
    min1 = order[0]
    min2 = order[1] if len(proxies) > 1 else np.full(shape, np.inf)
    entries = []
    for p in proxies:
        if not p.silhouette_pixels:
            continue
        min_other = np.where(p.depth_image <= min1, min2, min1)
        visible = p.silhouette_mask & (p.depth_image <= min_other + epsilon)
        fraction = float(visible.sum()) / float(p.silhouette_pixels)
        entries.append(
            VisibilityEntry(
                entity_id=p.entity_id,
                visible_fraction=fraction,
                silhouette_pixels=p.silhouette_pixels,
            )
        )
    return VisibilityReport(human_id=human_id, entries=entries)


def interaction_context(
    human: HumanNode,
    graph: SocialSceneGraph,
    config: Optional[VisibilityConfig] = None,
) -> VisibilityReport:
    """Estimate which entities the given person can currently see."""
    cfg = config or VisibilityConfig()
    if human.head_pose is None:
        raise MissingHeadPoseError(f"human {human.id} has no anchored head pose")
    frustum = build_frustum(human.head_pose, cfg.frustum)
    proxies = []
    for node in sorted(graph.nodes.values(), key=lambda n: n.id):
        if node.id == human.id:
            continue
        proxy = render_depth_proxy(node, frustum, cfg.raster)
        if proxy is not None:
            proxies.append(proxy)
    return resolve_occlusion(proxies, human_id=human.id, epsilon=cfg.epsilon)


def write_depth_pgm(proxy: DepthProxy, path) -> None:
    """Dump a proxy as a 16-bit binary portable graymap (millimeters)."""
    depth = proxy.depth_image
    mm = np.where(np.isfinite(depth), np.clip(depth * 1000.0, 0, 65535), 0.0)
    data = mm.astype(">u2")
    height, width = depth.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())

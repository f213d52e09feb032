"""Per-frame orchestration: detections in, confirmed activity edges out.

Each registered RGB-D frame flows through alignment (detections to graph
nodes), human marker annotation, behavior description, activity proposal,
and — for activities whose target is not in frame — visibility-constrained
remote solving.  Confirmed activities are upserted as edges carrying the
frame id as provenance, which is what makes re-running a frame a no-op.

Detection, segmentation, and head-orientation models are inputs: frames
arrive with boxes, optional masks, and optional head orientations already
attached (the benchmark ships ground truth for all three).
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import (
    InferenceError,
    InsufficientDepthError,
    MissingHeadPoseError,
    MissingMaskError,
    SchemaViolationError,
)
from .geometry import Aabb, Quat, RigidTransform, Vec3
from .graph import (
    BehaviorDescription,
    EntityNode,
    HumanNode,
    SocialSceneGraph,
)
from .inference import (
    STAGE_BEHAVIOR,
    STAGE_PROPOSAL,
    STAGE_SOLVER,
    InferenceRequest,
    infer,
)
from .visibility import (
    CameraIntrinsics,
    VisibilityConfig,
    anchor_head_pose,
    interaction_context,
)

log = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.25
HUMAN_MATCH_DISTANCE = 0.5
MASK_DILATION_ITERATIONS = 3
_DILATION_STRUCTURE = np.ones((5, 5), dtype=bool)

BEHAVIOR_PROMPT = (
    "For each person marked with a numbered contour, report their posture, "
    "gaze direction, physical state, and notable attributes. Answer as JSON "
    '{"humans": [{"marker", "posture", "gaze", "physical_state", "attributes"}]}.'
)
PROPOSAL_PROMPT = (
    "Every person carries a numbered marker and every object an e<id> label. "
    "List the activities each person is performing. Put activities whose "
    "target object is visible in the image under \"local\" (reference the "
    "target by its numeric label); put activities you cannot confirm from "
    "this view under \"remote\". Answer as JSON {\"local\": [...], "
    '"remote": [...]} with items {"human_marker", "target", "raw_label", "frame"}.'
)
SOLVER_PROMPT = (
    "Given one person's unconfirmed activity and the entities visible to "
    "them with visibility fractions, pick the most plausible target entity "
    'or decline. Answer as JSON {"relationships": [{"human_id", "entity_id", '
    '"raw_label", "frame", "confidence"}]}.'
)

_MARKER_COLORS = [
    (230, 40, 40),
    (40, 180, 40),
    (40, 90, 230),
    (240, 160, 20),
    (190, 40, 190),
    (20, 190, 190),
]


@dataclass(frozen=True)
class Detection:
    """One 2D detection; ``head_orientation`` (camera frame) and ``head_box``
    come from an upstream head-pose model and are only present for humans."""

    box: tuple[int, int, int, int]
    class_label: str
    kind: str  # "object" | "human"
    head_orientation: Optional[Quat] = None
    head_box: Optional[tuple[int, int, int, int]] = None

    def __post_init__(self):
        if self.kind not in ("object", "human"):
            raise ValueError(f"detection kind must be object|human, got {self.kind!r}")
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate detection box {self.box}")


@dataclass
class RgbdFrame:
    frame_id: str
    rgb_image: bytes
    depth_image: np.ndarray  # uint16 millimeters, 0 = invalid
    intrinsics: CameraIntrinsics
    camera_pose: RigidTransform
    detections: list[Detection]
    masks: Optional[list[Optional[np.ndarray]]] = None

    def __post_init__(self):
        if self.depth_image.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError(
                f"depth image {self.depth_image.shape} does not match intrinsics "
                f"({self.intrinsics.height}, {self.intrinsics.width})"
            )
        if not isinstance(self.camera_pose, RigidTransform):
            raise ValueError("camera_pose must be a rigid transform")
        if self.masks is not None and len(self.masks) != len(self.detections):
            raise ValueError("masks list must parallel detections")

    def mask_for(self, det_index: int) -> Optional[np.ndarray]:
        if self.masks is None:
            return None
        return self.masks[det_index]


@dataclass
class AnnotatedImage:
    base_frame_id: str
    image_bytes: bytes
    legend: dict[int, int]  # marker label -> human node id
    entity_legend: dict[int, int] = field(default_factory=dict)  # drawn entity node ids
    variant: str = "humans"  # humans-only or humans+entities rendering

    @property
    def image_ref(self) -> str:
        return f"{self.base_frame_id}/{self.variant}.png"


@dataclass(frozen=True)
class ActivityProposal:
    human_id: int
    target_id: Optional[int]
    raw_label: str
    frame: str
    locality: str  # "local" | "remote"
    source_frame_id: str
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.locality not in ("local", "remote"):
            raise ValueError(f"locality must be local|remote, got {self.locality!r}")
        if self.locality == "local" and self.target_id is None:
            raise ValueError("local proposals must name a target node")


# -- geometry helpers --------------------------------------------------------------


def _back_project_box(frame: RgbdFrame, box, mask=None, max_points: int = 2000) -> np.ndarray:
    """World-frame points for the valid-depth pixels inside a detection box."""
    x0, y0, x1, y1 = box
    depth = frame.depth_image[y0:y1, x0:x1].astype(float) / 1000.0
    valid = depth > 0
    if mask is not None:
        valid &= mask[y0:y1, x0:x1]
    vs, us = np.nonzero(valid)
    if vs.size == 0:
        return np.empty((0, 3))
    if vs.size > max_points:
        step = int(np.ceil(vs.size / max_points))
        vs, us = vs[::step], us[::step]
    z = depth[vs, us]
    intr = frame.intrinsics
    u = us + x0 + 0.5
    v = vs + y0 + 0.5
    cam = np.column_stack([(u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z])
    return frame.camera_pose.apply(cam)


def align_detections(
    frame: RgbdFrame,
    graph: SocialSceneGraph,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> dict[int, int]:
    """Match each detection to a graph node by 3D box overlap.

    Returns {detection index -> node id}.  Unmatched humans become new
    HumanNodes (or attach to a node whose center is within 0.5 m — people
    hold still across the capture); unmatched objects are dropped since the
    object layer of the graph is assumed given.
    """
    result: dict[int, int] = {}
    for idx, det in enumerate(frame.detections):
        points = _back_project_box(frame, det.box, frame.mask_for(idx))
        if points.shape[0] == 0:
            continue
        det_aabb = Aabb.from_points(points)
        want_human = det.kind == "human"
        best_id, best_iou = None, 0.0
        for node in graph.nodes.values():
            if isinstance(node, HumanNode) != want_human:
                continue
            iou = det_aabb.iou(node.aabb)
            if iou > best_iou:
                best_id, best_iou = node.id, iou
        if best_id is not None and best_iou >= iou_threshold:
            result[idx] = best_id
            continue
        if not want_human:
            continue
        center = Vec3.from_array(points.mean(axis=0))
        nearest = None
        for node in graph.humans():
            if node.center.distance_to(center) < HUMAN_MATCH_DISTANCE:
                nearest = node.id
                break
        if nearest is not None:
            result[idx] = nearest
            continue
        markers = {h.marker_label for h in graph.humans()}
        marker = 1
        while marker in markers:
            marker += 1
        node = HumanNode.from_cloud(graph.next_free_id(), marker, points)
        graph.add_node(node)
        result[idx] = node.id
    return result


# -- annotation ---------------------------------------------------------------------


def _load_rgb(frame: RgbdFrame) -> Image.Image:
    return Image.open(io.BytesIO(frame.rgb_image)).convert("RGB")


def _draw_contour(array: np.ndarray, mask: np.ndarray, color) -> None:
    dilated = ndimage.binary_dilation(
        mask, structure=_DILATION_STRUCTURE, iterations=MASK_DILATION_ITERATIONS
    )
    band = dilated & ~mask
    array[band] = color


def annotate_humans(
    frame: RgbdFrame,
    humans: list[tuple[HumanNode, int]],
    objects: Optional[list[tuple[EntityNode, int]]] = None,
) -> AnnotatedImage:
    """Draw dilated mask contours plus marker labels for the given humans.

    With ``objects`` supplied the same image additionally carries e<id>
    labels for in-frame entities (the re-annotated image the proposal stage
    consumes).  Zero humans returns the untouched frame bytes.
    """
    variant = "humans" if objects is None else "entities"
    if not humans and not objects:
        return AnnotatedImage(frame.frame_id, frame.rgb_image, {}, variant=variant)
    image = _load_rgb(frame)
    array = np.array(image)
    draw_jobs = []
    legend: dict[int, int] = {}
    for node, det_index in sorted(humans, key=lambda item: item[0].marker_label):
        mask = frame.mask_for(det_index)
        if mask is None:
            raise MissingMaskError(
                f"frame {frame.frame_id}: human node {node.id} (detection {det_index}) has no mask"
            )
        color = _MARKER_COLORS[(node.marker_label - 1) % len(_MARKER_COLORS)]
        _draw_contour(array, mask.astype(bool), color)
        x0, y0, _, _ = frame.detections[det_index].box
        draw_jobs.append((str(node.marker_label), (x0, max(0, y0 - 12)), color))
        legend[node.marker_label] = node.id
    entity_legend: dict[int, int] = {}
    for node, det_index in sorted(objects or [], key=lambda item: item[0].id):
        color = (250, 250, 60)
        mask = frame.mask_for(det_index)
        if mask is not None:
            _draw_contour(array, mask.astype(bool), color)
        x0, y0, x1, y1 = frame.detections[det_index].box
        draw_jobs.append((f"e{node.id}", (x0, max(0, y0 - 12)), color))
        entity_legend[node.id] = node.id
    annotated = Image.fromarray(array)
    artist = ImageDraw.Draw(annotated)
    for text, xy, color in draw_jobs:
        artist.text(xy, text, fill=color)
    buffer = io.BytesIO()
    annotated.save(buffer, format="PNG")
    return AnnotatedImage(frame.frame_id, buffer.getvalue(), legend, entity_legend, variant)


# -- model stages ---------------------------------------------------------------------


def describe_behaviors(
    annotated: AnnotatedImage,
    client,
    graph: SocialSceneGraph,
    prompt_text: str = BEHAVIOR_PROMPT,
) -> dict[int, BehaviorDescription]:
    """One behavior description per marked human, stored on the nodes."""
    if not annotated.legend:
        raise ValueError("annotated image has an empty legend; nothing to describe")
    request = InferenceRequest(
        STAGE_BEHAVIOR, prompt_text, image_ref=annotated.image_ref
    )
    response = infer(request, client)
    payload = json.loads(response.payload_json)
    by_marker = {item["marker"]: item for item in payload["humans"]}
    missing = sorted(set(annotated.legend) - set(by_marker))
    extra = sorted(set(by_marker) - set(annotated.legend))
    problems = [f"payload missing marker {m}" for m in missing]
    problems += [f"payload names unknown marker {m}" for m in extra]
    if problems:
        raise SchemaViolationError(STAGE_BEHAVIOR, problems, response.payload_json)
    result: dict[int, BehaviorDescription] = {}
    for marker, node_id in annotated.legend.items():
        item = by_marker[marker]
        behavior = BehaviorDescription(
            posture=item["posture"],
            gaze=item["gaze"],
            physical_state=item["physical_state"],
            attributes=tuple(item["attributes"]),
        )
        node = graph.node(node_id)
        node.behavior = behavior
        result[node_id] = behavior
    return result


def _behavior_lines(annotated: AnnotatedImage, behaviors: dict[int, BehaviorDescription]) -> str:
    lines = []
    for marker in sorted(annotated.legend):
        b = behaviors.get(annotated.legend[marker])
        if b is None:
            continue
        lines.append(
            f"marker {marker}: posture={b.posture}; gaze={b.gaze}; state={b.physical_state}"
        )
    return "\n".join(lines)


def propose_activities(
    frame: RgbdFrame,
    annotated_all: AnnotatedImage,
    behaviors: dict[int, BehaviorDescription],
    client,
    prompt_text: str = PROPOSAL_PROMPT,
) -> list[ActivityProposal]:
    """Ask for per-human activities split into confirmed-local vs remote.

    Local targets must reference an e<id> label drawn on the image; items
    whose target does not resolve are dropped with a log line rather than
    aborting the frame.
    """
    prompt = prompt_text + "\n" + _behavior_lines(annotated_all, behaviors)
    request = InferenceRequest(STAGE_PROPOSAL, prompt, image_ref=annotated_all.image_ref)
    response = infer(request, client)
    payload = json.loads(response.payload_json)
    proposals: list[ActivityProposal] = []
    for item in payload["local"]:
        marker = item["human_marker"]
        if marker not in annotated_all.legend:
            log.warning("local proposal names unknown marker %s; dropped", marker)
            continue
        target_text = str(item["target"]).lstrip("e")
        try:
            target_id = int(target_text)
        except ValueError:
            log.warning("local proposal target %r is not a node label; dropped", item["target"])
            continue
        if target_id not in annotated_all.entity_legend and target_id not in annotated_all.legend.values():
            log.warning("local proposal target %s not in frame; dropped", target_id)
            continue
        proposals.append(
            ActivityProposal(
                human_id=annotated_all.legend[marker],
                target_id=target_id,
                raw_label=item["raw_label"],
                frame=item["frame"],
                locality="local",
                source_frame_id=frame.frame_id,
            )
        )
    for item in payload["remote"]:
        marker = item["human_marker"]
        if marker not in annotated_all.legend:
            log.warning("remote proposal names unknown marker %s; dropped", marker)
            continue
        proposals.append(
            ActivityProposal(
                human_id=annotated_all.legend[marker],
                target_id=None,
                raw_label=item["raw_label"],
                frame=item["frame"],
                locality="remote",
                source_frame_id=frame.frame_id,
            )
        )
    return proposals


def _solver_context(proposal: ActivityProposal, report, graph: SocialSceneGraph) -> str:
    human = graph.node(proposal.human_id)
    visible = []
    for entry in sorted(report.entries, key=lambda e: e.entity_id):
        node = graph.node(entry.entity_id)
        label = node.class_label if isinstance(node, EntityNode) else "person"
        center = [round(c, 2) for c in node.center.as_array().tolist()]
        visible.append([entry.entity_id, label, center, round(entry.visible_fraction, 3)])
    behavior = None
    if isinstance(human, HumanNode) and human.behavior is not None:
        behavior = {
            "posture": human.behavior.posture,
            "gaze": human.behavior.gaze,
            "physical_state": human.behavior.physical_state,
        }
    context = {
        "human_id": proposal.human_id,
        "activity": {"raw_label": proposal.raw_label, "frame": proposal.frame},
        "behavior": behavior,
        "visible": visible,
    }
    return json.dumps(context, sort_keys=True, separators=(",", ":"))


def solve_remote(
    proposal: ActivityProposal,
    report,
    graph: SocialSceneGraph,
    client,
    prompt_text: str = SOLVER_PROMPT,
) -> Optional[ActivityProposal]:
    """Ground a remote activity in the person's visible entities, or reject.

    Returns the confirmed proposal (now local, with solver confidence) or
    None when the person sees nothing / the solver declines.
    """
    if proposal.locality != "remote":
        raise ValueError("solve_remote expects a remote proposal")
    if report.human_id != proposal.human_id:
        raise ValueError(
            f"visibility report is for human {report.human_id}, proposal for {proposal.human_id}"
        )
    if not report.entries:
        return None
    request = InferenceRequest(
        STAGE_SOLVER, prompt_text, context_json=_solver_context(proposal, report, graph)
    )
    response = infer(request, client)
    payload = json.loads(response.payload_json)
    visible_ids = {entry.entity_id for entry in report.entries}
    for item in payload["relationships"]:
        if item["human_id"] != proposal.human_id:
            continue
        if item["entity_id"] not in visible_ids:
            raise SchemaViolationError(
                STAGE_SOLVER,
                [f"entity {item['entity_id']} is not among the visible entities"],
                response.payload_json,
            )
        return ActivityProposal(
            human_id=proposal.human_id,
            target_id=item["entity_id"],
            raw_label=item["raw_label"],
            frame=item["frame"],
            locality="local",
            source_frame_id=proposal.source_frame_id,
            confidence=float(item["confidence"]),
        )
    return None


# -- per-frame driver -------------------------------------------------------------------


@dataclass
class PipelineConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    visibility: VisibilityConfig = field(default_factory=VisibilityConfig)
    behavior_prompt: str = BEHAVIOR_PROMPT
    proposal_prompt: str = PROPOSAL_PROMPT
    solver_prompt: str = SOLVER_PROMPT
    annotation_dir: Optional[str] = None


@dataclass
class FrameSummary:
    frame_id: str
    aligned: dict[int, int] = field(default_factory=dict)
    created_human_ids: list[int] = field(default_factory=list)
    resolved: list[ActivityProposal] = field(default_factory=list)
    rejected: list[ActivityProposal] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def proposal_dict(p: ActivityProposal) -> dict:
            return {
                "human_id": p.human_id,
                "target_id": p.target_id,
                "raw_label": p.raw_label,
                "frame": p.frame,
                "locality": p.locality,
                "confidence": p.confidence,
            }

        return {
            "frame_id": self.frame_id,
            "aligned": {str(k): v for k, v in sorted(self.aligned.items())},
            "created_human_ids": list(self.created_human_ids),
            "resolved": [proposal_dict(p) for p in self.resolved],
            "rejected": [proposal_dict(p) for p in self.rejected],
            "errors": list(self.errors),
        }


def _maybe_anchor_heads(frame: RgbdFrame, graph: SocialSceneGraph, aligned: dict[int, int]):
    for idx, det in enumerate(frame.detections):
        if det.kind != "human" or det.head_orientation is None or idx not in aligned:
            continue
        node = graph.node(aligned[idx])
        if node.head_pose is not None and node.head_pose.source_frame_id == frame.frame_id:
            continue
        box = det.head_box or det.box
        try:
            pose = anchor_head_pose(
                box,
                det.head_orientation,
                frame.depth_image,
                frame.intrinsics,
                frame.camera_pose,
                frame_id=frame.frame_id,
            )
            node.set_head_pose(pose)
        except (ValueError, InsufficientDepthError) as exc:
            log.warning("head anchoring failed for node %s: %s", node.id, exc)


def _write_annotation(annotated: AnnotatedImage, config: PipelineConfig) -> None:
    if config.annotation_dir is None:
        return
    path = Path(config.annotation_dir) / annotated.image_ref
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(annotated.image_bytes)


def run_frame(
    frame: RgbdFrame,
    graph: SocialSceneGraph,
    client,
    config: Optional[PipelineConfig] = None,
) -> FrameSummary:
    """Run the full per-frame stack and upsert every confirmed activity.

    Re-running the same frame leaves the graph unchanged: alignment finds
    the nodes it created before, and edge upserts deduplicate on
    (raw label, frame id) provenance.
    """
    cfg = config or PipelineConfig()
    summary = FrameSummary(frame_id=frame.frame_id)
    human_dets = [i for i, d in enumerate(frame.detections) if d.kind == "human"]
    if not human_dets:
        return summary  # nothing social in this frame; no model calls at all

    known_before = set(graph.nodes)
    summary.aligned = align_detections(frame, graph, cfg.iou_threshold)
    summary.created_human_ids = sorted(set(graph.nodes) - known_before)
    _maybe_anchor_heads(frame, graph, summary.aligned)

    humans = [
        (graph.node(summary.aligned[i]), i) for i in human_dets if i in summary.aligned
    ]
    if not humans:
        summary.errors.append("no human detection could be aligned or created")
        return summary
    objects = [
        (graph.node(node_id), i)
        for i, node_id in summary.aligned.items()
        if frame.detections[i].kind == "object"
    ]

    annotated_humans = annotate_humans(frame, humans)
    _write_annotation(annotated_humans, cfg)
    behaviors = describe_behaviors(annotated_humans, client, graph, cfg.behavior_prompt)

    annotated_all = annotate_humans(frame, humans, objects)
    _write_annotation(annotated_all, cfg)
    proposals = propose_activities(frame, annotated_all, behaviors, client, cfg.proposal_prompt)

    for proposal in proposals:
        if proposal.locality == "local":
            graph.upsert_activity_edge(
                proposal.human_id,
                proposal.target_id,
                proposal.raw_label,
                proposal.frame,
                source_frame_id=proposal.source_frame_id,
            )
            summary.resolved.append(proposal)
            continue
        human = graph.node(proposal.human_id)
        try:
            report = interaction_context(human, graph, cfg.visibility)
            resolved = solve_remote(proposal, report, graph, client, cfg.solver_prompt)
        except MissingHeadPoseError:
            summary.rejected.append(proposal)
            summary.errors.append(
                f"human {proposal.human_id}: no head pose; remote activity "
                f"{proposal.raw_label!r} left unresolved"
            )
            continue
        except InferenceError as exc:
            summary.rejected.append(proposal)
            summary.errors.append(f"solver failed for {proposal.raw_label!r}: {exc}")
            continue
        if resolved is None:
            summary.rejected.append(proposal)
            continue
        graph.upsert_activity_edge(
            resolved.human_id,
            resolved.target_id,
            resolved.raw_label,
            resolved.frame,
            source_frame_id=resolved.source_frame_id,
        )
        summary.resolved.append(resolved)
    return summary


# -- manifest loading ----------------------------------------------------------------


def _require(record, key, where):
    try:
        return record[key]
    except (KeyError, TypeError):
        raise ValueError(f"{where}: missing {key!r}") from None


def load_frame_manifest(path) -> list[RgbdFrame]:
    """Read a frame manifest and materialize frames (images loaded eagerly).

    Schema per frame: {frame_id, rgb, depth, intrinsics{fx,fy,cx,cy,width,
    height}, camera_pose (16 row-major floats), detections: [{box, label,
    kind, mask?, head_orientation_wxyz?, head_box?}]}.  Relative paths
    resolve against the manifest's directory.
    """
    manifest_path = Path(path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError(f"{path}: manifest must be a JSON array of frames")
    base = manifest_path.parent
    frames = []
    for i, record in enumerate(records):
        where = f"{path}[{i}]"
        frame_id = str(_require(record, "frame_id", where))
        rgb_bytes = (base / _require(record, "rgb", where)).read_bytes()
        depth_img = Image.open(base / _require(record, "depth", where))
        depth = np.array(depth_img).astype(np.uint16)
        ic = _require(record, "intrinsics", where)
        intrinsics = CameraIntrinsics(
            fx=float(ic["fx"]),
            fy=float(ic["fy"]),
            cx=float(ic["cx"]),
            cy=float(ic["cy"]),
            width=int(ic["width"]),
            height=int(ic["height"]),
        )
        pose_values = _require(record, "camera_pose", where)
        if len(pose_values) != 16:
            raise ValueError(f"{where}: camera_pose must hold 16 row-major floats")
        camera_pose = RigidTransform.from_matrix(np.array(pose_values, dtype=float).reshape(4, 4))
        detections = []
        masks: list[Optional[np.ndarray]] = []
        for j, det in enumerate(record.get("detections", [])):
            dwhere = f"{where}.detections[{j}]"
            head_q = det.get("head_orientation_wxyz")
            orientation = Quat(*[float(x) for x in head_q]) if head_q else None
            head_box = tuple(det["head_box"]) if det.get("head_box") else None
            detections.append(
                Detection(
                    box=tuple(int(x) for x in _require(det, "box", dwhere)),
                    class_label=str(_require(det, "label", dwhere)),
                    kind=str(_require(det, "kind", dwhere)),
                    head_orientation=orientation,
                    head_box=head_box,
                )
            )
            if det.get("mask"):
                mask = np.array(Image.open(base / det["mask"])) > 0
                masks.append(mask)
            else:
                masks.append(None)
        frames.append(
            RgbdFrame(
                frame_id=frame_id,
                rgb_image=rgb_bytes,
                depth_image=depth,
                intrinsics=intrinsics,
                camera_pose=camera_pose,
                detections=detections,
                masks=masks,
            )
        )
    return frames

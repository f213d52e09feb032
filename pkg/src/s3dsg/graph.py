"""Social scene graph data model and its serializations.

Nodes are objects or humans grounded to world-frame point clouds; edges are
either spatial relations or directed human->target activity edges.  Two file
forms exist:

* full fidelity (``schema s3dsg-1``): everything, round-trippable;
* compact: ``[id, class, center]`` / ``[from, to, frame]`` triples plus a
  glossary, sized for feeding to a language model.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Union

import numpy as np

from .errors import (
    DuplicateNodeError,
    GraphInvariantError,
    GraphParseError,
    NonHumanSourceError,
    UnknownNodeError,
)
from .geometry import Aabb, Quat, Vec3, as_points

SCHEMA_VERSION = "s3dsg-1"
COMPACT_DECIMALS_DEFAULT = 2
HUMAN_CLASS_LABEL = "person"

FRAME_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")
# Head centroids may sit slightly outside the sampled body cloud (hair, hats).
HEAD_AABB_MARGIN = 0.2


def is_valid_frame_name(frame: str) -> bool:
    return bool(FRAME_RE.match(frame))


@dataclass(frozen=True)
class FrameGlossaryEntry:
    """Human-readable record describing one activity frame."""

    frame: str
    description: str
    gloss: str
    example_actions: tuple[str, ...]

    def __post_init__(self):
        if not is_valid_frame_name(self.frame):
            raise ValueError(f"invalid frame name: {self.frame!r}")
        object.__setattr__(self, "example_actions", tuple(self.example_actions))


def minimal_glossary_entry(frame: str) -> FrameGlossaryEntry:
    """Fallback record for open-vocabulary frames outside the shipped lexicon."""
    verb = frame.lower()
    return FrameGlossaryEntry(
        frame=frame,
        description=f"An agent performs the {verb} activity, possibly on a target.",
        gloss=f"Open-vocabulary activity frame derived from the verb '{verb}'.",
        example_actions=(verb,),
    )


def default_glossary_entries() -> dict[str, FrameGlossaryEntry]:
    """Glossary records from the lexicon file shipped with the package."""
    raw = json.loads(resources.files("s3dsg.data").joinpath("lexicon.json").read_text("utf-8"))
    entries = {}
    for rec in raw["entries"]:
        entries[rec["frame"]] = FrameGlossaryEntry(
            frame=rec["frame"],
            description=rec["description"],
            gloss=rec["gloss"],
            example_actions=tuple(rec["example_actions"]),
        )
    return entries


@dataclass(frozen=True)
class BehaviorDescription:
    """Socially relevant appearance notes for one human."""

    posture: str = ""
    gaze: str = ""
    physical_state: str = ""
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not (self.posture or self.gaze or self.physical_state or self.attributes):
            raise ValueError("behavior description must have at least one non-empty field")


@dataclass(frozen=True)
class HeadPose:
    """World-frame head anchor: centroid plus orientation quaternion."""

    centroid: Vec3
    orientation: Quat
    source_frame_id: str

    def __post_init__(self):
        if not self.orientation.is_unit():
            raise ValueError(f"head orientation is not unit: norm={self.orientation.norm()}")


class _NodeBase:
    """Shared geometry/validation for object and human nodes."""

    def __init__(self, node_id: int, center: Vec3, points, aabb: Optional[Aabb]):
        if node_id < 0:
            raise ValueError(f"node id must be non-negative, got {node_id}")
        pts = as_points(points)
        if pts.shape[0] == 0:
            raise ValueError(f"node {node_id}: point cloud is empty")
        if aabb is None:
            aabb = Aabb.from_points(pts)
        if not aabb.encloses_points(pts):
            raise ValueError(f"node {node_id}: aabb does not enclose all points")
        if not aabb.contains(center, margin=1e-9):
            raise ValueError(f"node {node_id}: center {center} outside aabb")
        self.id = node_id
        self.center = center
        self.points = pts
        self.aabb = aabb

    def _geometry_equal(self, other: "_NodeBase") -> bool:
        return (
            self.id == other.id
            and self.center == other.center
            and self.aabb == other.aabb
            and np.array_equal(self.points, other.points)
        )


class EntityNode(_NodeBase):
    """An object instance with an open-vocabulary class label."""

    kind = "object"

    def __init__(
        self,
        node_id: int,
        class_label: str,
        center: Vec3,
        points,
        aabb: Optional[Aabb] = None,
        caption: Optional[str] = None,
    ):
        super().__init__(node_id, center, points, aabb)
        if not class_label:
            raise ValueError(f"node {node_id}: class label is empty")
        self.class_label = class_label
        self.caption = caption

    @staticmethod
    def from_cloud(node_id: int, class_label: str, points, caption: Optional[str] = None) -> "EntityNode":
        pts = as_points(points)
        center = Vec3.from_array(pts.mean(axis=0))
        return EntityNode(node_id, class_label, center, pts, caption=caption)

    def __eq__(self, other):
        return (
            isinstance(other, EntityNode)
            and self._geometry_equal(other)
            and self.class_label == other.class_label
            and self.caption == other.caption
        )

    def __repr__(self):
        return f"EntityNode(id={self.id}, class={self.class_label!r}, points={len(self.points)})"


class HumanNode(_NodeBase):
    """A human instance; shares the id space with objects."""

    kind = "human"
    class_label = HUMAN_CLASS_LABEL

    def __init__(
        self,
        node_id: int,
        marker_label: int,
        center: Vec3,
        points,
        aabb: Optional[Aabb] = None,
        head_pose: Optional[HeadPose] = None,
        behavior: Optional[BehaviorDescription] = None,
    ):
        super().__init__(node_id, center, points, aabb)
        if marker_label < 0:
            raise ValueError(f"node {node_id}: marker label must be non-negative")
        self.marker_label = marker_label
        self.head_pose = None
        self.behavior = behavior
        if head_pose is not None:
            self.set_head_pose(head_pose)

    @staticmethod
    def from_cloud(node_id: int, marker_label: int, points, **kwargs) -> "HumanNode":
        pts = as_points(points)
        center = Vec3.from_array(pts.mean(axis=0))
        return HumanNode(node_id, marker_label, center, pts, **kwargs)

    def set_head_pose(self, pose: HeadPose) -> None:
        if not self.aabb.contains(pose.centroid, margin=HEAD_AABB_MARGIN):
            raise ValueError(
                f"node {self.id}: head centroid {pose.centroid} outside inflated body aabb"
            )
        self.head_pose = pose

    def __eq__(self, other):
        return (
            isinstance(other, HumanNode)
            and self._geometry_equal(other)
            and self.marker_label == other.marker_label
            and self.head_pose == other.head_pose
            and self.behavior == other.behavior
        )

    def __repr__(self):
        return f"HumanNode(id={self.id}, marker={self.marker_label}, points={len(self.points)})"


Node = Union[EntityNode, HumanNode]


@dataclass(frozen=True)
class SpatialEdge:
    """Undirected-in-meaning spatial relation stored as an ordered pair."""

    from_id: int
    to_id: int
    relation_label: str

    def __post_init__(self):
        if self.from_id == self.to_id:
            raise ValueError(f"spatial edge may not be a self-loop (id {self.from_id})")
        if not self.relation_label:
            raise ValueError("spatial edge relation label is empty")


@dataclass
class ActivityEdge:
    """Directed human->target activity under one canonical frame.

    ``observations`` holds the raw open-vocabulary labels absorbed into this
    frame together with the id of the frame (image) that produced each one;
    the provenance is what makes per-frame re-ingestion idempotent.
    """

    from_id: int
    to_id: int
    frame: str
    observations: list[tuple[str, Optional[str]]] = field(default_factory=list)

    def __post_init__(self):
        if not is_valid_frame_name(self.frame):
            raise ValueError(f"invalid frame name on edge: {self.frame!r}")
        self.observations = [(str(lbl), src) for lbl, src in self.observations]

    @property
    def raw_labels(self) -> list[str]:
        return [lbl for lbl, _ in self.observations]

    @property
    def detection_count(self) -> int:
        return len(self.observations)

    def has_observation(self, raw_label: str, source_frame_id: str) -> bool:
        return (raw_label, source_frame_id) in self.observations


class SocialSceneGraph:
    """Nodes plus spatial and activity edges over one world frame."""

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.spatial_edges: list[SpatialEdge] = []
        self.activity_edges: list[ActivityEdge] = []
        self.frame_glossary: dict[str, FrameGlossaryEntry] = {}

    # -- nodes ---------------------------------------------------------------

    def add_node(self, node: Node) -> int:
        if node.id in self.nodes:
            raise DuplicateNodeError(f"node id {node.id} already present")
        if isinstance(node, HumanNode):
            for other in self.humans():
                if other.marker_label == node.marker_label:
                    raise DuplicateNodeError(
                        f"marker label {node.marker_label} already used by human {other.id}"
                    )
        self.nodes[node.id] = node
        return node.id

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node with id {node_id}") from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self.nodes

    def humans(self) -> list[HumanNode]:
        return [n for n in self.nodes.values() if isinstance(n, HumanNode)]

    def entities(self) -> list[EntityNode]:
        return [n for n in self.nodes.values() if isinstance(n, EntityNode)]

    def next_free_id(self) -> int:
        return max(self.nodes, default=-1) + 1

    # -- edges ---------------------------------------------------------------

    def add_spatial_edge(self, from_id: int, to_id: int, relation_label: str) -> SpatialEdge:
        self.node(from_id)
        self.node(to_id)
        edge = SpatialEdge(from_id, to_id, relation_label)
        self.spatial_edges.append(edge)
        return edge

    def find_activity_edge(self, from_id: int, to_id: int, frame: str) -> Optional[ActivityEdge]:
        for edge in self.activity_edges:
            if edge.from_id == from_id and edge.to_id == to_id and edge.frame == frame:
                return edge
        return None

    def upsert_activity_edge(
        self,
        from_id: int,
        to_id: int,
        raw_label: str,
        frame: str,
        source_frame_id: Optional[str] = None,
    ) -> ActivityEdge:
        """Record one raw activity observation under ``frame``.

        Repeated calls with the same (label, source_frame_id) pair are no-ops
        so re-processing an image does not inflate detection counts.
        """
        source = self.node(from_id)
        self.node(to_id)
        if not isinstance(source, HumanNode):
            raise NonHumanSourceError(f"activity edge source {from_id} is not a human node")
        if not raw_label:
            raise ValueError("raw activity label is empty")
        edge = self.find_activity_edge(from_id, to_id, frame)
        if edge is None:
            edge = ActivityEdge(from_id, to_id, frame)
            self.activity_edges.append(edge)
        if source_frame_id is not None and edge.has_observation(raw_label, source_frame_id):
            return edge
        edge.observations.append((raw_label, source_frame_id))
        self.ensure_glossary_entry(frame)
        return edge

    # -- glossary ------------------------------------------------------------

    def ensure_glossary_entry(self, frame: str) -> FrameGlossaryEntry:
        if frame not in self.frame_glossary:
            shipped = default_glossary_entries()
            self.frame_glossary[frame] = shipped.get(frame, minimal_glossary_entry(frame))
        return self.frame_glossary[frame]

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        """Raise GraphInvariantError on the first violated structural rule."""
        markers = {}
        for human in self.humans():
            if human.marker_label in markers:
                raise GraphInvariantError(
                    f"marker label {human.marker_label} shared by humans "
                    f"{markers[human.marker_label]} and {human.id}"
                )
            markers[human.marker_label] = human.id
        for edge in self.spatial_edges:
            for endpoint in (edge.from_id, edge.to_id):
                if endpoint not in self.nodes:
                    raise GraphInvariantError(f"spatial edge endpoint {endpoint} unresolved")
        seen = set()
        for edge in self.activity_edges:
            for endpoint in (edge.from_id, edge.to_id):
                if endpoint not in self.nodes:
                    raise GraphInvariantError(f"activity edge endpoint {endpoint} unresolved")
            if not isinstance(self.nodes[edge.from_id], HumanNode):
                raise GraphInvariantError(f"activity edge source {edge.from_id} is not human")
            key = (edge.from_id, edge.to_id, edge.frame)
            if key in seen:
                raise GraphInvariantError(f"duplicate activity edge {key}")
            seen.add(key)
            if edge.detection_count != len(edge.raw_labels):
                raise GraphInvariantError(f"edge {key}: detection count out of sync")
            if edge.frame not in self.frame_glossary:
                raise GraphInvariantError(f"frame {edge.frame} missing from glossary")

    def __eq__(self, other):
        """Structural equality; edge lists compare as unordered collections."""
        if not isinstance(other, SocialSceneGraph):
            return NotImplemented

        def spatial_key(e):
            return (e.from_id, e.to_id, e.relation_label)

        def activity_key(e):
            return (e.from_id, e.to_id, e.frame)

        return (
            self.nodes == other.nodes
            and sorted(self.spatial_edges, key=spatial_key) == sorted(other.spatial_edges, key=spatial_key)
            and sorted(self.activity_edges, key=activity_key) == sorted(other.activity_edges, key=activity_key)
            and self.frame_glossary == other.frame_glossary
        )


# -- compact serialization ----------------------------------------------------


def _round(v: float, decimals: int) -> float:
    r = round(float(v), decimals)
    return 0.0 if r == 0 else r


def serialize_compact(graph: SocialSceneGraph, decimals: int = COMPACT_DECIMALS_DEFAULT) -> str:
    """Token-light JSON projection of the graph for language-model prompts.

    Nodes become ``[id, class, [x, y, z]]``, activity edges become
    ``[from, to, frame]``, and each frame present on an edge contributes one
    ``[frame, description, gloss, example_actions]`` glossary record.  Output
    is byte-deterministic: nodes sort by id, edges by (from, to, frame).
    """
    nodes = []
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        c = node.center
        nodes.append(
            [node_id, node.class_label, [_round(c.x, decimals), _round(c.y, decimals), _round(c.z, decimals)]]
        )
    edges = sorted(
        ([e.from_id, e.to_id, e.frame] for e in graph.activity_edges),
        key=lambda t: (t[0], t[1], t[2]),
    )
    frames_present = sorted({e.frame for e in graph.activity_edges})
    glossary = []
    for frame in frames_present:
        entry = graph.frame_glossary.get(frame) or minimal_glossary_entry(frame)
        glossary.append([entry.frame, entry.description, entry.gloss, list(entry.example_actions)])
    doc = {"nodes": nodes, "edges": edges, "glossary": glossary}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


# -- full-fidelity serialization ----------------------------------------------


def _vec3_to_list(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _node_to_dict(node: Node) -> dict:
    rec = {
        "id": node.id,
        "kind": node.kind,
        "center": _vec3_to_list(node.center),
        "aabb": {"min": _vec3_to_list(node.aabb.lo), "max": _vec3_to_list(node.aabb.hi)},
        "points": [[float(x), float(y), float(z)] for x, y, z in node.points],
    }
    if isinstance(node, HumanNode):
        rec["marker_label"] = node.marker_label
        if node.head_pose is not None:
            hp = node.head_pose
            rec["head_pose"] = {
                "centroid": _vec3_to_list(hp.centroid),
                "orientation_wxyz": [hp.orientation.w, hp.orientation.x, hp.orientation.y, hp.orientation.z],
                "source_frame_id": hp.source_frame_id,
            }
        if node.behavior is not None:
            b = node.behavior
            rec["behavior"] = {
                "posture": b.posture,
                "gaze": b.gaze,
                "physical_state": b.physical_state,
                "attributes": list(b.attributes),
            }
    else:
        rec["class_label"] = node.class_label
        if node.caption is not None:
            rec["caption"] = node.caption
    return rec


def serialize_full(graph: SocialSceneGraph) -> str:
    """Complete, deterministic, round-trippable JSON form of the graph."""
    doc = {
        "meta": {"schema": SCHEMA_VERSION},
        "nodes": [_node_to_dict(graph.nodes[i]) for i in sorted(graph.nodes)],
        "spatial_edges": [
            {"from_id": e.from_id, "to_id": e.to_id, "relation_label": e.relation_label}
            for e in graph.spatial_edges
        ],
        "activity_edges": [
            {
                "from_id": e.from_id,
                "to_id": e.to_id,
                "frame": e.frame,
                "observations": [[lbl, src] for lbl, src in e.observations],
            }
            for e in sorted(graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame))
        ],
        "glossary": [
            {
                "frame": entry.frame,
                "description": entry.description,
                "gloss": entry.gloss,
                "example_actions": list(entry.example_actions),
            }
            for frame, entry in sorted(graph.frame_glossary.items())
        ],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, sort_keys=True)


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise GraphParseError(f"missing required key {key!r}", field=path)
    return mapping[key]


def _parse_vec3(value, path: str) -> Vec3:
    try:
        x, y, z = value
        return Vec3(float(x), float(y), float(z))
    except (TypeError, ValueError) as exc:
        raise GraphParseError(f"bad 3-vector: {exc}", field=path) from None


def _parse_node(rec: dict, index: int) -> Node:
    path = f"nodes[{index}]"
    kind = _require(rec, "kind", path)
    node_id = int(_require(rec, "id", path))
    center = _parse_vec3(_require(rec, "center", path), f"{path}.center")
    aabb_rec = _require(rec, "aabb", path)
    aabb = Aabb(
        _parse_vec3(_require(aabb_rec, "min", f"{path}.aabb"), f"{path}.aabb.min"),
        _parse_vec3(_require(aabb_rec, "max", f"{path}.aabb"), f"{path}.aabb.max"),
    )
    points = as_points(_require(rec, "points", path))
    try:
        if kind == "human":
            head_pose = None
            if "head_pose" in rec:
                hp = rec["head_pose"]
                w, x, y, z = _require(hp, "orientation_wxyz", f"{path}.head_pose")
                head_pose = HeadPose(
                    centroid=_parse_vec3(_require(hp, "centroid", f"{path}.head_pose"), f"{path}.head_pose.centroid"),
                    orientation=Quat(float(w), float(x), float(y), float(z)),
                    source_frame_id=str(_require(hp, "source_frame_id", f"{path}.head_pose")),
                )
            behavior = None
            if "behavior" in rec:
                b = rec["behavior"]
                behavior = BehaviorDescription(
                    posture=b.get("posture", ""),
                    gaze=b.get("gaze", ""),
                    physical_state=b.get("physical_state", ""),
                    attributes=tuple(b.get("attributes", ())),
                )
            return HumanNode(
                node_id,
                int(_require(rec, "marker_label", path)),
                center,
                points,
                aabb=aabb,
                head_pose=head_pose,
                behavior=behavior,
            )
        if kind == "object":
            return EntityNode(
                node_id,
                str(_require(rec, "class_label", path)),
                center,
                points,
                aabb=aabb,
                caption=rec.get("caption"),
            )
    except ValueError as exc:
        raise GraphInvariantError(f"{path}: {exc}") from None
    raise GraphParseError(f"unknown node kind {kind!r}", field=path)


def deserialize_graph(text: str) -> SocialSceneGraph:
    """Parse a full-fidelity graph file, enforcing all structural invariants."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise GraphParseError("top level must be a JSON object")
    meta = _require(doc, "meta", "$")
    schema = meta.get("schema")
    if schema != SCHEMA_VERSION:
        raise GraphParseError(f"unsupported schema {schema!r} (expected {SCHEMA_VERSION!r})", field="meta.schema")

    graph = SocialSceneGraph()
    for i, rec in enumerate(_require(doc, "nodes", "$")):
        node = _parse_node(rec, i)
        if graph.has_node(node.id):
            raise GraphInvariantError(f"duplicate node id {node.id} in file")
        graph.nodes[node.id] = node
    for i, rec in enumerate(_require(doc, "glossary", "$")):
        path = f"glossary[{i}]"
        entry = FrameGlossaryEntry(
            frame=str(_require(rec, "frame", path)),
            description=str(_require(rec, "description", path)),
            gloss=str(_require(rec, "gloss", path)),
            example_actions=tuple(_require(rec, "example_actions", path)),
        )
        graph.frame_glossary[entry.frame] = entry
    for i, rec in enumerate(_require(doc, "spatial_edges", "$")):
        path = f"spatial_edges[{i}]"
        edge = SpatialEdge(
            int(_require(rec, "from_id", path)),
            int(_require(rec, "to_id", path)),
            str(_require(rec, "relation_label", path)),
        )
        graph.spatial_edges.append(edge)
    for i, rec in enumerate(_require(doc, "activity_edges", "$")):
        path = f"activity_edges[{i}]"
        observations = [
            (str(lbl), None if src is None else str(src))
            for lbl, src in _require(rec, "observations", path)
        ]
        edge = ActivityEdge(
            int(_require(rec, "from_id", path)),
            int(_require(rec, "to_id", path)),
            str(_require(rec, "frame", path)),
            observations,
        )
        graph.activity_edges.append(edge)

    graph.validate()
    return graph


def load_graph(path) -> SocialSceneGraph:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GraphParseError(str(exc), path=str(path)) from None
    try:
        return deserialize_graph(text)
    except GraphParseError as exc:
        raise GraphParseError(str(exc), path=str(path)) from None


def iter_activity_edges_sorted(graph: SocialSceneGraph) -> Iterable[ActivityEdge]:
    return sorted(graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame))

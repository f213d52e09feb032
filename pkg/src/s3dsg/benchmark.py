"""Benchmark ingestion, relationship metrics, and query scoring.

A benchmark scene is a directory with a ground-truth point cloud, a frames
manifest, relationship and query annotations, and a base (human-free) graph:

    scene_k/
        cloud.ply            x, y, z, instance_id, is_human per vertex
        frames/manifest.json augmentation input (see pipeline.load_frame_manifest)
        masks/               segmentation masks referenced by the manifest
        relationships.json   [{human_id, target_id, target_class, frame}, ...]
        queries.json         [{id, text, category, gt_ids}, ...]
        base_graph.json      full-fidelity graph of the static entities

Relationship metrics follow the point-cloud protocol: a predicted activity
edge is a true positive when both endpoint clouds overlap the ground-truth
endpoint clouds with voxel-occupancy IoU >= 0.10, the target class matches,
and the frames agree. Matching is greedy by descending IoU, each ground-truth
entry consumed at most once. Query scoring awards one point per ground-truth
instance retrieved among at most the top-2 candidates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .consolidation import FrameLexicon, canonicalize, load_lexicon
from .errors import BenchmarkFormatError, SchemaViolationError
from .graph import (
    FRAME_RE,
    HUMAN_CLASS_LABEL,
    ActivityEdge,
    HumanNode,
    SocialSceneGraph,
    load_graph,
    serialize_compact,
)
from .inference import STAGE_QUERY, InferenceRequest

log = logging.getLogger(__name__)

VOXEL_SIZE = 0.05
DEFAULT_IOU_THRESHOLD = 0.10
MAX_CANDIDATES = 2
QUERY_CATEGORIES = ("spatial", "activity", "functional")

QUERY_PROMPT = (
    "You are given a compact social scene graph as JSON (nodes as [id, class, "
    "center], activity edges as [from, to, frame], and a glossary of the "
    "relationship frames), followed by a question about the people in the "
    "scene. Reply with a JSON object {\"candidates\": [...]} holding the ids "
    "of at most the top-2 human nodes answering the question, best first."
)


# -- config and reports -------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    max_candidates: int = MAX_CANDIDATES
    voxel_size: float = VOXEL_SIZE

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.voxel_size <= 0.0:
            raise ValueError("voxel_size must be positive")


@dataclass
class MapMetrics:
    """Precision/recall/F1 row for one map, percentages in [0, 100]."""

    map_id: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "map": self.map_id,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": round(self.precision, 1),
            "recall": round(self.recall, 1),
            "f1": round(self.f1, 1),
            "degenerate": self.degenerate,
        }


@dataclass
class MetricsReport:
    per_map: list[MapMetrics]
    total: MapMetrics
    frame_tallies: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_map": [m.to_dict() for m in self.per_map],
            "total": self.total.to_dict(),
            "frame_tallies": dict(sorted(self.frame_tallies.items())),
        }


@dataclass
class CategoryScore:
    category: str
    points: int
    possible: int

    @property
    def ratio(self) -> float:
        return 100.0 * self.points / self.possible if self.possible else 0.0

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "points": self.points,
            "possible": self.possible,
            "ratio": round(self.ratio, 1),
        }


@dataclass
class QueryScoreReport:
    categories: list[CategoryScore]
    warnings: list[str] = field(default_factory=list)

    @property
    def points(self) -> int:
        return sum(c.points for c in self.categories)

    @property
    def possible(self) -> int:
        return sum(c.possible for c in self.categories)

    @property
    def overall_ratio(self) -> float:
        return 100.0 * self.points / self.possible if self.possible else 0.0

    @property
    def mean_ratio(self) -> float:
        """Unweighted mean over the categories that carry any points."""
        scored = [c.ratio for c in self.categories if c.possible]
        return sum(scored) / len(scored) if scored else 0.0

    def to_dict(self) -> dict:
        return {
            "categories": [c.to_dict() for c in self.categories],
            "points": self.points,
            "possible": self.possible,
            "overall": round(self.overall_ratio, 1),
            "mean": round(self.mean_ratio, 1),
            "warnings": list(self.warnings),
        }


def compute_prf(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    """Percent precision/recall/F1 plus a flag for division-by-zero cases."""
    degenerate = False
    if tp + fp > 0:
        precision = 100.0 * tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn > 0:
        recall = 100.0 * tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return precision, recall, f1, degenerate


# -- PLY ground-truth clouds ---------------------------------------------------

_PLY_DTYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

_REQUIRED_PROPERTIES = ("x", "y", "z", "instance_id", "is_human")


def write_ply(path, points, instance_ids, is_human, binary: bool = True) -> None:
    """Write a ground-truth cloud with per-vertex instance labels."""
    points = np.asarray(points, dtype=np.float64)
    instance_ids = np.asarray(instance_ids, dtype=np.int64)
    is_human = np.asarray(is_human, dtype=bool)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be an (N, 3) array")
    if len(instance_ids) != len(points) or len(is_human) != len(points):
        raise ValueError("instance_ids and is_human must parallel points")

    fmt = "binary_little_endian" if binary else "ascii"
    header = "\n".join(
        [
            "ply",
            f"format {fmt} 1.0",
            f"element vertex {len(points)}",
            "property float x",
            "property float y",
            "property float z",
            "property int instance_id",
            "property uchar is_human",
            "end_header",
        ]
    )
    path = Path(path)
    if binary:
        rows = np.empty(
            len(points),
            dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                   ("instance_id", "<i4"), ("is_human", "u1")],
        )
        rows["x"], rows["y"], rows["z"] = points.T.astype(np.float32)
        rows["instance_id"] = instance_ids
        rows["is_human"] = is_human
        path.write_bytes(header.encode("ascii") + b"\n" + rows.tobytes())
    else:
        lines = [header]
        for p, i, h in zip(points.astype(np.float32), instance_ids, is_human):
            lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {int(i)} {int(h)}")
        path.write_text("\n".join(lines) + "\n")


def read_ply(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a cloud written by :func:`write_ply` (or an equivalent tool).

    Accepts ascii and binary_little_endian files whose single ``vertex``
    element carries at least x/y/z/instance_id/is_human scalar properties.
    """
    path = Path(path)
    blob = path.read_bytes()
    marker = b"end_header\n"
    split = blob.find(marker)
    if not blob.startswith(b"ply") or split < 0:
        raise BenchmarkFormatError(f"{path}: not a PLY file")
    header = blob[:split].decode("ascii", errors="replace").splitlines()
    body = blob[split + len(marker):]

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    for line in header[1:]:
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            if tokens[1] != "vertex" or count is not None:
                raise BenchmarkFormatError(
                    f"{path}: only a single vertex element is supported"
                )
            count = int(tokens[2])
        elif tokens[0] == "property":
            if tokens[1] == "list":
                raise BenchmarkFormatError(f"{path}: list properties unsupported")
            if tokens[1] not in _PLY_DTYPES:
                raise BenchmarkFormatError(f"{path}: unknown property type {tokens[1]}")
            props.append((tokens[2], _PLY_DTYPES[tokens[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise BenchmarkFormatError(f"{path}: unsupported format {fmt!r}")
    if count is None:
        raise BenchmarkFormatError(f"{path}: missing vertex element")
    names = [name for name, _ in props]
    missing = [name for name in _REQUIRED_PROPERTIES if name not in names]
    if missing:
        raise BenchmarkFormatError(f"{path}: missing properties {missing}")

    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + code) for name, code in props])
        if len(body) < count * dtype.itemsize:
            raise BenchmarkFormatError(f"{path}: truncated vertex data")
        rows = np.frombuffer(body, dtype=dtype, count=count)
    else:
        table = np.loadtxt(
            [ln for ln in body.decode("ascii").splitlines() if ln.strip()],
            dtype=np.float64,
            ndmin=2,
            max_rows=count,
        )
        if table.shape != (count, len(props)):
            raise BenchmarkFormatError(f"{path}: expected {count} ascii rows")
        rows = {name: table[:, i] for i, (name, _) in enumerate(props)}

    points = np.stack(
        [np.asarray(rows["x"]), np.asarray(rows["y"]), np.asarray(rows["z"])], axis=1
    ).astype(np.float64)
    instance_ids = np.asarray(rows["instance_id"]).astype(np.int64)
    is_human = np.asarray(rows["is_human"]).astype(bool)
    return points, instance_ids, is_human


# -- scene bundles -------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruthRelationship:
    human_instance_id: int
    target_instance_id: int
    target_class: str
    frame: str
    human_points: np.ndarray
    target_points: np.ndarray


@dataclass(frozen=True)
class BenchmarkQuery:
    query_id: str
    text: str
    category: str
    gt_instance_ids: tuple[int, ...]

    def __post_init__(self):
        if self.category not in QUERY_CATEGORIES:
            raise BenchmarkFormatError(
                f"query {self.query_id}: unknown category {self.category!r}"
            )
        if not 1 <= len(self.gt_instance_ids) <= 2:
            raise BenchmarkFormatError(
                f"query {self.query_id}: expected 1-2 ground-truth ids"
            )


@dataclass
class SceneBundle:
    scene_id: str
    root: Path
    points: np.ndarray
    instance_ids: np.ndarray
    is_human: np.ndarray
    frames_manifest: list[dict]
    relationships: list[GroundTruthRelationship]
    queries: list[BenchmarkQuery]
    base_graph: SocialSceneGraph

    def instance_cloud(self, instance_id: int) -> np.ndarray:
        return self.points[self.instance_ids == instance_id]

    def human_instance_ids(self) -> list[int]:
        return sorted(int(i) for i in np.unique(self.instance_ids[self.is_human]))

    def manifest_path(self) -> Path:
        return self.root / "frames" / "manifest.json"


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise BenchmarkFormatError(f"{path}: missing file")
    except json.JSONDecodeError as exc:
        raise BenchmarkFormatError(f"{path}: invalid JSON ({exc})")


def load_scene(root, lexicon: Optional[FrameLexicon] = None) -> SceneBundle:
    """Load and cross-validate one benchmark scene directory."""
    root = Path(root)
    lexicon = lexicon or load_lexicon()
    points, instance_ids, is_human = read_ply(root / "cloud.ply")

    for iid in np.unique(instance_ids):
        flags = np.unique(is_human[instance_ids == iid])
        if len(flags) > 1:
            raise BenchmarkFormatError(
                f"{root / 'cloud.ply'}: instance {int(iid)} mixes human and "
                f"non-human points"
            )
    known = {int(i) for i in np.unique(instance_ids)}
    humans = {int(i) for i in np.unique(instance_ids[is_human])}

    manifest_path = root / "frames" / "manifest.json"
    manifest = _load_json(manifest_path)
    if not isinstance(manifest, list):
        raise BenchmarkFormatError(f"{manifest_path}: expected a JSON array")
    seen_frames = set()
    for entry in manifest:
        frame_id = entry.get("frame_id")
        if not frame_id or frame_id in seen_frames:
            raise BenchmarkFormatError(
                f"{manifest_path}: duplicate or missing frame_id {frame_id!r}"
            )
        seen_frames.add(frame_id)
        refs = [entry.get("rgb"), entry.get("depth")]
        refs += [d.get("mask") for d in entry.get("detections", []) if d.get("mask")]
        for ref in refs:
            if ref is None or not (manifest_path.parent / ref).exists():
                raise BenchmarkFormatError(
                    f"{manifest_path}: frame {frame_id} references missing "
                    f"file {ref!r}"
                )

    raw_rel = _load_json(root / "relationships.json")
    declared_frames: set[str] = set()
    if isinstance(raw_rel, dict):
        declared_frames = {str(f) for f in raw_rel.get("frames", [])}
        raw_rel = raw_rel.get("relationships", [])
    relationships = []
    for i, rec in enumerate(raw_rel):
        where = f"{root / 'relationships.json'}[{i}]"
        try:
            human_id = int(rec["human_id"])
            target_id = int(rec["target_id"])
            target_class = str(rec["target_class"])
            frame = str(rec["frame"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BenchmarkFormatError(f"{where}: {exc}")
        if human_id not in humans:
            raise BenchmarkFormatError(
                f"{where}: human_id {human_id} is not a human instance in the cloud"
            )
        if target_id not in known:
            raise BenchmarkFormatError(
                f"{where}: target_id {target_id} does not appear in the cloud"
            )
        if not FRAME_RE.match(frame) or (
            frame not in lexicon.entries and frame not in declared_frames
        ):
            raise BenchmarkFormatError(
                f"{where}: frame {frame!r} is neither in the lexicon nor declared"
            )
        relationships.append(
            GroundTruthRelationship(
                human_instance_id=human_id,
                target_instance_id=target_id,
                target_class=target_class,
                frame=frame,
                human_points=points[instance_ids == human_id],
                target_points=points[instance_ids == target_id],
            )
        )

    raw_queries = _load_json(root / "queries.json")
    queries = []
    seen_ids = set()
    for i, rec in enumerate(raw_queries):
        where = f"{root / 'queries.json'}[{i}]"
        try:
            query = BenchmarkQuery(
                query_id=str(rec["id"]),
                text=str(rec["text"]),
                category=str(rec["category"]),
                gt_instance_ids=tuple(int(g) for g in rec["gt_ids"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BenchmarkFormatError(f"{where}: {exc}")
        if query.query_id in seen_ids:
            raise BenchmarkFormatError(f"{where}: duplicate query id {query.query_id}")
        seen_ids.add(query.query_id)
        for gid in query.gt_instance_ids:
            if gid not in humans:
                raise BenchmarkFormatError(
                    f"{where}: gt id {gid} is not a human instance in the cloud"
                )
        queries.append(query)

    base_graph = load_graph(root / "base_graph.json")
    return SceneBundle(
        scene_id=root.name,
        root=root,
        points=points,
        instance_ids=instance_ids,
        is_human=is_human,
        frames_manifest=manifest,
        relationships=relationships,
        queries=queries,
        base_graph=base_graph,
    )


def load_benchmark(root, lexicon: Optional[FrameLexicon] = None) -> list[SceneBundle]:
    """Load every scene under a benchmark root.

    A root-level ``manifest.json`` with a ``scenes`` list fixes the scene
    order; otherwise any immediate subdirectory containing ``cloud.ply``
    is taken, sorted by name.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        names = _load_json(manifest_path).get("scenes", [])
    else:
        names = sorted(p.name for p in root.iterdir() if (p / "cloud.ply").exists())
    if not names:
        raise BenchmarkFormatError(f"{root}: no scenes found")
    lexicon = lexicon or load_lexicon()
    return [load_scene(root / name, lexicon) for name in names]


def benchmark_stats(bundles: Sequence[SceneBundle]) -> dict:
    """Aggregate counts in the shape of the dataset summary table."""
    query_counts = {c: 0 for c in QUERY_CATEGORIES}
    points = 0
    frames: set[str] = set()
    humans = 0
    relationships = 0
    for bundle in bundles:
        humans += len(bundle.human_instance_ids())
        relationships += len(bundle.relationships)
        frames.update(r.frame for r in bundle.relationships)
        for q in bundle.queries:
            query_counts[q.category] += 1
            points += len(q.gt_instance_ids)
    return {
        "scenes": len(bundles),
        "humans": humans,
        "relationships": relationships,
        "queries": {**query_counts, "total": sum(query_counts.values())},
        "points": points,
        "frames": sorted(frames),
    }


# -- relationship matching -------------------------------------------------------


def voxel_iou(a, b, voxel_size: float = VOXEL_SIZE) -> float:
    """Intersection-over-union of the voxel sets occupied by two clouds."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return 0.0
    va = {tuple(v) for v in np.floor(a / voxel_size).astype(np.int64)}
    vb = {tuple(v) for v in np.floor(b / voxel_size).astype(np.int64)}
    union = len(va | vb)
    return len(va & vb) / union if union else 0.0


@dataclass(frozen=True)
class PredictedRelationship:
    human_points: np.ndarray
    target_points: np.ndarray
    target_class: str
    frame: str


def prediction_from_edge(
    graph: SocialSceneGraph, edge: ActivityEdge
) -> PredictedRelationship:
    human = graph.node(edge.from_id)
    target = graph.node(edge.to_id)
    target_class = (
        HUMAN_CLASS_LABEL if isinstance(target, HumanNode) else target.class_label
    )
    return PredictedRelationship(
        human_points=human.points,
        target_points=target.points,
        target_class=target_class,
        frame=edge.frame,
    )


def _canonical_frame(value: str, lexicon: FrameLexicon) -> str:
    if FRAME_RE.match(value):
        return value
    return canonicalize(value, lexicon)


def _pair_score(
    pred: PredictedRelationship,
    gt: GroundTruthRelationship,
    config: EvalConfig,
    lexicon: FrameLexicon,
) -> Optional[float]:
    """Min endpoint IoU when all match conditions hold, else None."""
    if pred.target_class.lower() != gt.target_class.lower():
        return None
    if _canonical_frame(pred.frame, lexicon) != _canonical_frame(gt.frame, lexicon):
        return None
    iou_h = voxel_iou(pred.human_points, gt.human_points, config.voxel_size)
    if iou_h < config.iou_threshold:
        return None
    iou_t = voxel_iou(pred.target_points, gt.target_points, config.voxel_size)
    if iou_t < config.iou_threshold:
        return None
    return min(iou_h, iou_t)


def _greedy_pairs(
    preds: Sequence[PredictedRelationship],
    gts: Sequence[GroundTruthRelationship],
    config: EvalConfig,
    lexicon: FrameLexicon,
) -> list[tuple[int, int, float]]:
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gt in enumerate(gts):
            score = _pair_score(pred, gt, config, lexicon)
            if score is not None:
                candidates.append((score, pi, gi))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for score, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        matches.append((pi, gi, score))
    return matches


def match_prediction(
    pred: PredictedRelationship,
    gt_list: Sequence[GroundTruthRelationship],
    config: Optional[EvalConfig] = None,
    *,
    used: Iterable[int] = (),
    lexicon: Optional[FrameLexicon] = None,
) -> Optional[GroundTruthRelationship]:
    """Best-IoU ground-truth entry this prediction matches, or None.

    ``used`` lists indices into ``gt_list`` already consumed by earlier
    predictions.
    """
    config = config or EvalConfig()
    lexicon = lexicon or load_lexicon()
    taken = set(used)
    best = None
    best_score = -1.0
    for gi, gt in enumerate(gt_list):
        if gi in taken:
            continue
        score = _pair_score(pred, gt, config, lexicon)
        if score is not None and score > best_score:
            best, best_score = gt, score
    return best


def evaluate_relationships(
    pred_graph: SocialSceneGraph,
    bundle: SceneBundle,
    config: Optional[EvalConfig] = None,
    lexicon: Optional[FrameLexicon] = None,
) -> MetricsReport:
    """Score one predicted graph against one scene's ground truth."""
    config = config or EvalConfig()
    lexicon = lexicon or load_lexicon()
    edges = sorted(
        pred_graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame)
    )
    preds = [prediction_from_edge(pred_graph, e) for e in edges]
    matches = _greedy_pairs(preds, bundle.relationships, config, lexicon)
    tp = len(matches)
    fp = len(preds) - tp
    fn = len(bundle.relationships) - tp
    row = _metrics_row(bundle.scene_id, tp, fp, fn)
    tallies: dict[str, int] = {}
    for edge in edges:
        tallies[edge.frame] = tallies.get(edge.frame, 0) + 1
    return MetricsReport(per_map=[row], total=_total_row([row]), frame_tallies=tallies)


def _metrics_row(map_id: str, tp: int, fp: int, fn: int) -> MapMetrics:
    precision, recall, f1, degenerate = compute_prf(tp, fp, fn)
    return MapMetrics(map_id, tp, fp, fn, precision, recall, f1, degenerate)


def _total_row(rows: Sequence[MapMetrics]) -> MapMetrics:
    return _metrics_row(
        "Total",
        sum(r.tp for r in rows),
        sum(r.fp for r in rows),
        sum(r.fn for r in rows),
    )


def aggregate_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Combine per-scene reports into one table with a recomputed total."""
    rows = [row for report in reports for row in report.per_map]
    tallies: dict[str, int] = {}
    for report in reports:
        for frame, n in report.frame_tallies.items():
            tallies[frame] = tallies.get(frame, 0) + n
    return MetricsReport(per_map=rows, total=_total_row(rows), frame_tallies=tallies)


def format_metrics_table(report: MetricsReport) -> str:
    """Aligned-column text table, one row per map plus the total."""
    rows = report.per_map + [report.total]
    width = max([len("Map")] + [len(r.map_id) for r in rows])
    header = f"{'Map':<{width}}      P      R     F1   TP   FP   FN"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.map_id:<{width}}  {r.precision:5.1f}  {r.recall:5.1f}  "
            f"{r.f1:5.1f}  {r.tp:3d}  {r.fp:3d}  {r.fn:3d}"
        )
    return "\n".join(lines)


# -- query answering and scoring ----------------------------------------------------


def answer_queries_llm(
    bundle: SceneBundle,
    pred_graph: SocialSceneGraph,
    client,
    config: Optional[EvalConfig] = None,
) -> dict[str, list[int]]:
    """Ask the backend each scene query over the compact graph serialization.

    Over-long candidate lists are truncated to the top-2 cap and ids that do
    not resolve in the predicted graph are dropped; malformed payloads raise
    ``SchemaViolationError`` and backend failures propagate.
    """
    config = config or EvalConfig()
    context = serialize_compact(pred_graph)
    answers: dict[str, list[int]] = {}
    for query in bundle.queries:
        request = InferenceRequest(
            stage=STAGE_QUERY,
            prompt_text=QUERY_PROMPT + "\nQuestion: " + query.text,
            context_json=context,
        )
        raw = client.complete(request)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            raise SchemaViolationError(
                STAGE_QUERY, ["payload is not valid JSON"], payload=raw
            )
        candidates = payload.get("candidates") if isinstance(payload, dict) else None
        if not isinstance(candidates, list) or any(
            isinstance(c, bool) or not isinstance(c, int) for c in candidates
        ):
            raise SchemaViolationError(
                STAGE_QUERY,
                ["candidates must be a list of integer node ids"],
                payload=raw,
            )
        if len(candidates) > config.max_candidates:
            log.warning(
                "query %s: %d candidates, truncating to top-%d",
                query.query_id,
                len(candidates),
                config.max_candidates,
            )
            candidates = candidates[: config.max_candidates]
        kept = []
        for cand in candidates:
            if pred_graph.has_node(cand):
                kept.append(cand)
            else:
                log.warning("query %s: dropping unknown node id %d", query.query_id, cand)
        answers[query.query_id] = kept
    return answers


def score_queries(
    answers: dict[str, list[int]],
    scenes: Sequence[tuple[SceneBundle, SocialSceneGraph]],
    config: Optional[EvalConfig] = None,
) -> QueryScoreReport:
    """Award one point per ground-truth instance retrieved by a candidate.

    ``answers`` maps query id to an ordered candidate list of node ids in
    that scene's predicted graph. Each candidate consumes at most one
    ground-truth instance (IoU >= threshold between the node cloud and the
    instance cloud); each instance is scored once.
    """
    config = config or EvalConfig()
    scores = {c: CategoryScore(c, 0, 0) for c in QUERY_CATEGORIES}
    warnings: list[str] = []
    seen_queries: set[str] = set()
    for bundle, graph in scenes:
        for query in bundle.queries:
            if query.query_id in seen_queries:
                raise BenchmarkFormatError(
                    f"query id {query.query_id} appears in more than one scene"
                )
            seen_queries.add(query.query_id)
            cat = scores[query.category]
            cat.possible += len(query.gt_instance_ids)
            candidates = list(answers.get(query.query_id, []))
            if len(candidates) > config.max_candidates:
                warnings.append(
                    f"query {query.query_id}: truncated {len(candidates)} "
                    f"candidates to {config.max_candidates}"
                )
                candidates = candidates[: config.max_candidates]
            remaining = list(query.gt_instance_ids)
            for cand in candidates:
                if not graph.has_node(cand):
                    continue
                cloud = graph.node(cand).points
                best_gid = None
                best_iou = 0.0
                for gid in remaining:
                    iou = voxel_iou(cloud, bundle.instance_cloud(gid), config.voxel_size)
                    if iou >= config.iou_threshold and iou > best_iou:
                        best_gid, best_iou = gid, iou
                if best_gid is not None:
                    remaining.remove(best_gid)
                    cat.points += 1
    report = QueryScoreReport(
        categories=[scores[c] for c in QUERY_CATEGORIES], warnings=warnings
    )
    return report


def format_query_table(report: QueryScoreReport) -> str:
    cells = {c.category: c.ratio for c in report.categories}
    header = "Spatial  Activity  Functional   Mean   Pts"
    row = (
        f"{cells.get('spatial', 0.0):7.1f}  {cells.get('activity', 0.0):8.1f}  "
        f"{cells.get('functional', 0.0):10.1f}  {report.mean_ratio:5.1f}  "
        f"{report.points:3d}/{report.possible}"
    )
    return "\n".join([header, "-" * len(header), row])

#!/usr/bin/env python3
"""Regenerate the miniature two-scene benchmark under tests/data/mini_benchmark.

The fixture replays the deterministic pipeline fixture scene twice (frames f1
and f2) so that consolidation keeps both activity edges, then freezes the
scripted backend payloads, ground-truth clouds, annotations, and queries.
Scene A's ground truth matches the pipeline output exactly; scene B disagrees
on the book relationship (USE vs the predicted READ) so the metrics table has
a false positive and a false negative to show.

Run from the repository root:

    python3 scripts/make_fixture_benchmark.py [--out tests/data/mini_benchmark]
"""

import argparse
import io
import json
import shutil
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import pipeline_fixture as fx  # noqa: E402

from s3dsg.benchmark import (  # noqa: E402
    QUERY_PROMPT,
    answer_queries_llm,
    benchmark_stats,
    evaluate_relationships,
    load_benchmark,
    score_queries,
    write_ply,
)
from s3dsg.consolidation import consolidate  # noqa: E402
from s3dsg.graph import serialize_compact, serialize_full  # noqa: E402
from s3dsg.inference import ScriptedBackend, ScriptedScenario  # noqa: E402
from s3dsg.pipeline import run_frame  # noqa: E402

HUMAN_GT = 101
TV_GT = 102
BOOK_GT = 103

SCENE_QUERIES = {
    "scene_a": [
        {"id": "qa1", "text": "Who is next to the TV?", "category": "spatial",
         "gt_ids": [HUMAN_GT]},
        {"id": "qa2", "text": "Who is watching the TV?", "category": "activity",
         "gt_ids": [HUMAN_GT]},
        {"id": "qa3", "text": "Who might reach for a bookmark soon?",
         "category": "functional", "gt_ids": [HUMAN_GT]},
    ],
    "scene_b": [
        {"id": "qb1", "text": "Who is the closest to the book?",
         "category": "spatial", "gt_ids": [HUMAN_GT]},
        {"id": "qb2", "text": "Who is likely to change the channel?",
         "category": "functional", "gt_ids": [HUMAN_GT]},
    ],
}

# Scripted retrieval per query; qb2 deliberately answers with the tv node so
# the fixture exercises a scored miss (0 of 1 points on that query).
SCENE_ANSWERS = {
    "scene_a": {"qa1": [fx.HUMAN_ID], "qa2": [fx.HUMAN_ID], "qa3": [fx.HUMAN_ID]},
    "scene_b": {"qb1": [fx.HUMAN_ID], "qb2": [fx.TV_ID]},
}

SCENE_RELATIONSHIPS = {
    "scene_a": [
        {"human_id": HUMAN_GT, "target_id": TV_GT, "target_class": "tv",
         "frame": "SEE"},
        {"human_id": HUMAN_GT, "target_id": BOOK_GT, "target_class": "book",
         "frame": "READ"},
    ],
    "scene_b": [
        {"human_id": HUMAN_GT, "target_id": TV_GT, "target_class": "tv",
         "frame": "SEE"},
        {"human_id": HUMAN_GT, "target_id": BOOK_GT, "target_class": "book",
         "frame": "USE"},
    ],
}

FRAME_IDS = ("f1", "f2")


def build_final_graph(records):
    """Replay augment(f1) + augment(f2) + consolidate with the scripted backend."""
    backend = ScriptedBackend(ScriptedScenario.from_records(records))
    graph = fx.base_graph()
    for frame_id in FRAME_IDS:
        summary = run_frame(fx.make_frame(frame_id), graph, backend)
        if summary.rejected or summary.errors:
            raise RuntimeError(f"frame {frame_id} did not replay cleanly: {summary.errors}")
    final, _ = consolidate(graph)
    return final


def query_records(final_graph, scene_id):
    context = serialize_compact(final_graph)
    records = []
    for query in SCENE_QUERIES[scene_id]:
        records.append(
            {
                "stage": "query_answer",
                "fingerprint_inputs": {
                    "prompt_text": QUERY_PROMPT + "\nQuestion: " + query["text"],
                    "context_json": context,
                },
                "payload": {"candidates": SCENE_ANSWERS[scene_id][query["id"]]},
            }
        )
    return records


def save_png(path, array):
    Image.fromarray(array).save(path)


def write_scene(root, scene_id, frame_records, final_graph):
    scene = root / scene_id
    if scene.exists():
        shutil.rmtree(scene)
    (scene / "frames").mkdir(parents=True)
    (scene / "masks").mkdir()

    frame = fx.make_frame("f1")
    (scene / "frames" / "rgb.png").write_bytes(frame.rgb_image)
    save_png(scene / "frames" / "depth.png", frame.depth_image)
    save_png(scene / "masks" / "human.png", frame.masks[0].astype(np.uint8) * 255)
    save_png(scene / "masks" / "tv.png", frame.masks[1].astype(np.uint8) * 255)

    quat = fx.HEAD_ORIENTATION
    detections = [
        {
            "box": list(fx.HUMAN_RECT),
            "label": "person",
            "kind": "human",
            "mask": "../masks/human.png",
            "head_box": list(fx.HEAD_RECT),
            "head_orientation_wxyz": [quat.w, quat.x, quat.y, quat.z],
        },
        {
            "box": list(fx.TV_RECT),
            "label": "tv",
            "kind": "object",
            "mask": "../masks/tv.png",
        },
    ]
    manifest = [
        {
            "frame_id": frame_id,
            "rgb": "rgb.png",
            "depth": "depth.png",
            "intrinsics": {
                "fx": fx.INTRINSICS.fx,
                "fy": fx.INTRINSICS.fy,
                "cx": fx.INTRINSICS.cx,
                "cy": fx.INTRINSICS.cy,
                "width": fx.INTRINSICS.width,
                "height": fx.INTRINSICS.height,
            },
            "camera_pose": np.eye(4).ravel().tolist(),
            "detections": detections,
        }
        for frame_id in FRAME_IDS
    ]
    (scene / "frames" / "manifest.json").write_text(json.dumps(manifest, indent=2))

    human_cloud = final_graph.node(fx.HUMAN_ID).points
    tv_cloud = fx.plate_cloud(fx.TV_RECT, *fx.TV_DEPTH)
    book_cloud = fx.plate_cloud(fx.BOOK_RECT, *fx.BOOK_DEPTH)
    points = np.vstack([human_cloud, tv_cloud, book_cloud])
    ids = np.concatenate(
        [
            np.full(len(human_cloud), HUMAN_GT),
            np.full(len(tv_cloud), TV_GT),
            np.full(len(book_cloud), BOOK_GT),
        ]
    )
    humans = ids == HUMAN_GT
    write_ply(scene / "cloud.ply", points, ids, humans)

    (scene / "relationships.json").write_text(
        json.dumps(SCENE_RELATIONSHIPS[scene_id], indent=2)
    )
    (scene / "queries.json").write_text(json.dumps(SCENE_QUERIES[scene_id], indent=2))
    (scene / "base_graph.json").write_text(serialize_full(fx.base_graph()))

    scenario = frame_records + query_records(final_graph, scene_id)
    (scene / "scenario.json").write_text(json.dumps(scenario, indent=2))


def verify(root):
    """Re-run the whole flow from the written files and check the numbers."""
    bundles = load_benchmark(root)
    stats = benchmark_stats(bundles)
    expected = json.loads((root / "manifest.json").read_text())["expected"]
    for key in ("humans", "relationships", "points"):
        assert stats[key] == expected[key], (key, stats[key], expected[key])
    assert stats["queries"]["total"] == expected["queries"]["total"]

    reports = []
    scored_scenes = []
    merged_answers = {}
    for bundle in bundles:
        backend = ScriptedBackend(ScriptedScenario.from_file(bundle.root / "scenario.json"))
        graph = bundle.base_graph
        from s3dsg.pipeline import load_frame_manifest

        for frame in load_frame_manifest(bundle.manifest_path()):
            run_frame(frame, graph, backend)
        final, _ = consolidate(graph)
        reports.append(evaluate_relationships(final, bundle))
        merged_answers.update(answer_queries_llm(bundle, final, backend))
        scored_scenes.append((bundle, final))

    from s3dsg.benchmark import aggregate_reports, format_metrics_table, format_query_table

    combined = aggregate_reports(reports)
    assert (combined.total.tp, combined.total.fp, combined.total.fn) == (3, 1, 1)
    queries = score_queries(merged_answers, scored_scenes)
    assert queries.points == 4 and queries.possible == 5
    print(format_metrics_table(combined))
    print()
    print(format_query_table(queries))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "tests" / "data" / "mini_benchmark"))
    args = parser.parse_args()
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)

    frame_records = []
    for frame_id in FRAME_IDS:
        frame_records.extend(fx.scenario_records(frame_id))
    final_graph = build_final_graph(frame_records)

    merged = list(frame_records)
    for scene_id in ("scene_a", "scene_b"):
        write_scene(root, scene_id, frame_records, final_graph)
        merged.extend(query_records(final_graph, scene_id))
    # One combined scenario so --benchmark runs can use a single backend file.
    (root / "scenario.json").write_text(json.dumps(merged, indent=2))

    manifest = {
        "name": "mini-benchmark",
        "scenes": ["scene_a", "scene_b"],
        "expected": {
            "humans": 2,
            "relationships": 4,
            "queries": {"spatial": 2, "activity": 1, "functional": 2, "total": 5},
            "points": 5,
        },
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    verify(root)
    print(f"\nwrote fixture benchmark to {root}")


if __name__ == "__main__":
    main()

"""Shared synthetic-frame fixture for pipeline, CLI, and end-to-end tests.

The scene is one camera at the world origin looking along +z (identity
pose): a person plate ~2 m out, a tv plate ~3 m out (both detected in the
frame), and a book ~4 m out that exists only in the graph, so the "reading"
activity has to go through the remote solver.  Depth plates are slanted
along the image u axis so back-projected clouds have volume and 3D box
overlap is well defined.
"""

import io
import json
import math

import numpy as np
from PIL import Image

from s3dsg.geometry import Quat, RigidTransform
from s3dsg.graph import EntityNode, SocialSceneGraph, deserialize_graph, serialize_full
from s3dsg.inference import ScriptedBackend, ScriptedScenario
from s3dsg.pipeline import (
    BEHAVIOR_PROMPT,
    PROPOSAL_PROMPT,
    SOLVER_PROMPT,
    Detection,
    RgbdFrame,
    _behavior_lines,
    _solver_context,
    annotate_humans,
    describe_behaviors,
)
from s3dsg.visibility import CameraIntrinsics, anchor_head_pose, interaction_context

INTRINSICS = CameraIntrinsics(fx=100.0, fy=100.0, cx=80.0, cy=60.0, width=160, height=120)

HUMAN_RECT = (60, 30, 100, 110)
HEAD_RECT = (70, 30, 90, 50)
TV_RECT = (10, 30, 50, 70)
BOOK_RECT = (100, 50, 130, 90)

HUMAN_DEPTH = (2.0, 0.2)  # base meters, slant across the rect
TV_DEPTH = (3.0, 0.3)
BOOK_DEPTH = (4.0, 0.3)

# gaze -z rotated to +z: the person looks deeper into the scene
HEAD_ORIENTATION = Quat.from_axis_angle((0, 1, 0), math.pi)

TV_ID = 1
BOOK_ID = 2
HUMAN_ID = 3  # created by alignment: next free id after the two objects

BEHAVIOR_PAYLOAD = {
    "humans": [
        {
            "marker": 1,
            "posture": "sitting",
            "gaze": "towards the window",
            "physical_state": "relaxed",
            "attributes": ["wearing glasses"],
        }
    ]
}


def plate_depth(rect, base, slant):
    """Depth (meters) across a rect, linear in the u direction."""
    x0, y0, x1, y1 = rect
    u = np.arange(x0, x1)
    return base + slant * (u - x0) / max(1, (x1 - x0 - 1))


def render_depth():
    depth = np.zeros((INTRINSICS.height, INTRINSICS.width), dtype=np.uint16)
    for rect, (base, slant) in ((HUMAN_RECT, HUMAN_DEPTH), (TV_RECT, TV_DEPTH), (BOOK_RECT, BOOK_DEPTH)):
        x0, y0, x1, y1 = rect
        row = (plate_depth(rect, base, slant) * 1000.0).astype(np.uint16)
        depth[y0:y1, x0:x1] = row[None, :]
    return depth


def plate_cloud(rect, base, slant):
    """World points for every pixel of a plate (identity camera pose)."""
    x0, y0, x1, y1 = rect
    us, vs = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    z = base + slant * (us - 0.5 - x0) / max(1, (x1 - x0 - 1))
    x = (us - INTRINSICS.cx) / INTRINSICS.fx * z
    y = (vs - INTRINSICS.cy) / INTRINSICS.fy * z
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def rect_mask(rect):
    mask = np.zeros((INTRINSICS.height, INTRINSICS.width), dtype=bool)
    x0, y0, x1, y1 = rect
    mask[y0:y1, x0:x1] = True
    return mask


def solid_rgb_png(color=(120, 120, 120)):
    img = Image.new("RGB", (INTRINSICS.width, INTRINSICS.height), color)
    buffer = io.BytesIO()
    img.save(buffer, format="PNG")
    return buffer.getvalue()


def base_graph():
    """Objects only; the human enters through frame alignment."""
    g = SocialSceneGraph()
    g.add_node(EntityNode.from_cloud(TV_ID, "tv", plate_cloud(TV_RECT, *TV_DEPTH)))
    g.add_node(EntityNode.from_cloud(BOOK_ID, "book", plate_cloud(BOOK_RECT, *BOOK_DEPTH)))
    return g


def make_frame(frame_id="f1", with_head=True):
    detections = [
        Detection(
            box=HUMAN_RECT,
            class_label="person",
            kind="human",
            head_orientation=HEAD_ORIENTATION if with_head else None,
            head_box=HEAD_RECT if with_head else None,
        ),
        Detection(box=TV_RECT, class_label="tv", kind="object"),
    ]
    masks = [rect_mask(HUMAN_RECT), rect_mask(TV_RECT)]
    return RgbdFrame(
        frame_id=frame_id,
        rgb_image=solid_rgb_png(),
        depth_image=render_depth(),
        intrinsics=INTRINSICS,
        camera_pose=RigidTransform.identity(),
        detections=detections,
        masks=masks,
    )


def scenario_records(frame_id="f1"):
    """Author the scripted scenario by replaying the deterministic prompts.

    A cloned graph goes through the same annotation/anchoring steps the
    pipeline will run, which yields the exact image refs, behavior lines,
    and solver context the fingerprints must cover.
    """
    frame = make_frame(frame_id)
    clone = deserialize_graph(serialize_full(base_graph()))

    # Reproduce alignment outcome: the human node the pipeline will create.
    from s3dsg.pipeline import align_detections

    aligned = align_detections(frame, clone)
    human = clone.node(aligned[0])
    assert human.id == HUMAN_ID

    pose = anchor_head_pose(
        HEAD_RECT,
        HEAD_ORIENTATION,
        frame.depth_image,
        INTRINSICS,
        frame.camera_pose,
        frame_id=frame_id,
    )
    human.set_head_pose(pose)

    annotated_humans = annotate_humans(frame, [(human, 0)])

    records = [
        {
            "stage": "behavior_description",
            "fingerprint_inputs": {
                "prompt_text": BEHAVIOR_PROMPT,
                "image_ref": annotated_humans.image_ref,
            },
            "payload": BEHAVIOR_PAYLOAD,
        }
    ]

    backend = ScriptedBackend(ScriptedScenario.from_records(records))
    behaviors = describe_behaviors(annotated_humans, backend, clone)

    annotated_all = annotate_humans(frame, [(human, 0)], [(clone.node(TV_ID), 1)])
    proposal_prompt = PROPOSAL_PROMPT + "\n" + _behavior_lines(annotated_all, behaviors)
    proposal_payload = {
        "local": [
            {
                "human_marker": 1,
                "target": f"e{TV_ID}",
                "raw_label": "watching tv",
                "frame": "SEE",
            }
        ],
        "remote": [{"human_marker": 1, "raw_label": "reading", "frame": "READ"}],
    }
    records.append(
        {
            "stage": "activity_proposal",
            "fingerprint_inputs": {
                "prompt_text": proposal_prompt,
                "image_ref": annotated_all.image_ref,
            },
            "payload": proposal_payload,
        }
    )

    from s3dsg.pipeline import ActivityProposal

    remote = ActivityProposal(
        human_id=human.id,
        target_id=None,
        raw_label="reading",
        frame="READ",
        locality="remote",
        source_frame_id=frame_id,
    )
    report = interaction_context(human, clone)
    context_json = _solver_context(remote, report, clone)
    solver_payload = {
        "relationships": [
            {
                "human_id": human.id,
                "entity_id": BOOK_ID,
                "raw_label": "reading",
                "frame": "READ",
                "confidence": 0.9,
            }
        ]
    }
    records.append(
        {
            "stage": "remote_solver",
            "fingerprint_inputs": {
                "prompt_text": SOLVER_PROMPT,
                "context_json": context_json,
            },
            "payload": solver_payload,
        }
    )
    return records


def scripted_backend(frame_id="f1"):
    return ScriptedBackend(ScriptedScenario.from_records(scenario_records(frame_id)))


def write_scenario(path, frame_id="f1"):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_records(frame_id), fh, indent=2)

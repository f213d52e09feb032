import numpy as np
import pytest

from s3dsg.geometry import Vec3
from s3dsg.graph import EntityNode, HumanNode, SocialSceneGraph


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def box_cloud(center, size, n=60, rng=None, seed=7):
    """Points uniformly filling an axis-aligned box around ``center``."""
    rng = rng or np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    half = np.asarray(size, dtype=float) / 2.0
    pts = center + (rng.random((n, 3)) * 2.0 - 1.0) * half
    # Pin the corners so the AABB is exactly the requested box.
    pts[0] = center - half
    pts[1] = center + half
    return pts


def make_entity(node_id, label, center, size=(0.5, 0.5, 0.5), n=60, seed=7, caption=None):
    return EntityNode.from_cloud(node_id, label, box_cloud(center, size, n=n, seed=seed), caption=caption)


def make_human(node_id, marker, center, size=(0.5, 0.5, 1.7), n=60, seed=11):
    return HumanNode.from_cloud(node_id, marker, box_cloud(center, size, n=n, seed=seed))


def small_graph():
    """Two humans facing a sofa and a tv; one SPEAK pair, one SEE edge."""
    g = SocialSceneGraph()
    g.add_node(make_human(1, 1, (0.0, 0.0, 0.9)))
    g.add_node(make_human(2, 2, (1.2, 0.0, 0.9)))
    g.add_node(make_entity(3, "sofa", (0.6, -1.0, 0.4), size=(1.8, 0.8, 0.8)))
    g.add_node(make_entity(4, "tv", (0.6, 2.5, 1.2), size=(1.0, 0.1, 0.6), caption="wall-mounted"))
    g.add_spatial_edge(4, 3, "in front of")
    g.upsert_activity_edge(1, 2, "chatting with", "SPEAK")
    g.upsert_activity_edge(2, 1, "listening to", "LISTEN")
    g.upsert_activity_edge(1, 4, "watching tv", "SEE")
    return g


def random_graph(rng: np.random.Generator) -> SocialSceneGraph:
    """Randomized valid graph for round-trip and projection properties."""
    from s3dsg.geometry import Quat
    from s3dsg.graph import BehaviorDescription, HeadPose

    g = SocialSceneGraph()
    n_humans = int(rng.integers(0, 4))
    n_objects = int(rng.integers(1, 6))
    next_id = int(rng.integers(0, 5))
    frames = ["SPEAK", "SEE", "SIT", "USE", "READ", "LISTEN"]
    labels = ["chair", "table", "tv", "book", "lamp", "sofa"]

    human_ids = []
    for k in range(n_humans):
        center = rng.uniform(-4, 4, size=3)
        center[2] = abs(center[2]) / 4 + 0.9
        node = HumanNode.from_cloud(
            next_id,
            k + 1,
            box_cloud(center, (0.5, 0.5, 1.7), n=int(rng.integers(3, 30)), rng=rng),
        )
        if rng.random() < 0.5:
            node.set_head_pose(
                HeadPose(
                    centroid=Vec3.from_array(node.aabb.hi.as_array() - 0.05),
                    orientation=Quat.from_axis_angle((0, 0, 1), float(rng.uniform(0, 6.28))),
                    source_frame_id=f"f{int(rng.integers(0, 9))}",
                )
            )
        if rng.random() < 0.5:
            node.behavior = BehaviorDescription(posture="upright", gaze="direct")
        g.add_node(node)
        human_ids.append(next_id)
        next_id += int(rng.integers(1, 3))

    object_ids = []
    for _ in range(n_objects):
        center = rng.uniform(-4, 4, size=3)
        caption = "dusty" if rng.random() < 0.3 else None
        g.add_node(
            EntityNode.from_cloud(
                next_id,
                str(rng.choice(labels)),
                box_cloud(center, rng.uniform(0.2, 1.5, size=3), n=int(rng.integers(3, 30)), rng=rng),
                caption=caption,
            )
        )
        object_ids.append(next_id)
        next_id += int(rng.integers(1, 3))

    all_ids = human_ids + object_ids
    if len(all_ids) >= 2:
        for _ in range(int(rng.integers(0, 4))):
            a, b = rng.choice(all_ids, size=2, replace=False)
            g.add_spatial_edge(int(a), int(b), "next to")
    for _ in range(int(rng.integers(0, 5))):
        if not human_ids:
            break
        src = int(rng.choice(human_ids))
        dst = int(rng.choice(all_ids))
        if src == dst:
            continue
        frame = str(rng.choice(frames))
        for _ in range(int(rng.integers(1, 4))):
            g.upsert_activity_edge(src, dst, f"{frame.lower()}ing", frame)
    return g

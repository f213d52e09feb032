import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

import pipeline_fixture as fixture
from s3dsg.cli import main
from s3dsg.graph import (
    HumanNode,
    load_graph,
    serialize_compact,
    serialize_full,
)
from s3dsg.inference import InferenceRequest, fingerprint

MINI = Path(__file__).parent / "data" / "mini_benchmark"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args, **kwargs):
    return runner.invoke(main, args, catch_exceptions=False, **kwargs)


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_help_and_unknown_subcommand(runner):
    assert invoke(runner, ["--help"]).exit_code == 0
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code == 2


def test_fingerprint_matches_library(runner, tmp_path):
    request = InferenceRequest(
        stage="behavior_description", prompt_text="describe", image_ref="f1/humans.png"
    )
    result = invoke(
        runner,
        ["fingerprint", "--stage", "behavior_description", "--prompt", "describe",
         "--image-ref", "f1/humans.png"],
    )
    assert result.exit_code == 0
    assert result.output.strip() == fingerprint(request)

    prompt_file = tmp_path / "prompt.txt"
    prompt_file.write_text("describe")
    result = invoke(
        runner,
        ["fingerprint", "--stage", "behavior_description", "--prompt",
         f"@{prompt_file}", "--image-ref", "f1/humans.png"],
    )
    assert result.output.strip() == fingerprint(request)


def test_export_compact(runner, tmp_path):
    graph = fixture.base_graph()
    graph_path = tmp_path / "g.json"
    graph_path.write_text(serialize_full(graph))
    result = invoke(runner, ["export", "--graph", str(graph_path)])
    assert result.exit_code == 0
    assert result.output.strip() == serialize_compact(graph)


def test_stats_fixture_benchmark(runner):
    result = invoke(runner, ["stats", "--benchmark", str(MINI), "--json"])
    assert result.exit_code == 0
    got = json.loads(result.output)
    expected = json.loads((MINI / "manifest.json").read_text())["expected"]
    assert got["humans"] == expected["humans"]
    assert got["relationships"] == expected["relationships"]
    assert got["queries"] == expected["queries"]
    assert got["points"] == expected["points"]

    text = invoke(runner, ["stats", "--benchmark", str(MINI)])
    assert "Total Unique Humans" in text.output


def augment_scene(runner, scene, out, summary=None):
    args = [
        "augment",
        "--frames", str(MINI / scene / "frames" / "manifest.json"),
        "--graph", str(MINI / scene / "base_graph.json"),
        "--backend", f"scripted:{MINI / scene / 'scenario.json'}",
        "--out", str(out),
    ]
    if summary:
        args += ["--summary", str(summary)]
    return invoke(runner, args)


def test_end_to_end_scene(runner, tmp_path):
    aug = tmp_path / "aug.json"
    final = tmp_path / "final.json"
    summary = tmp_path / "summary.json"
    result = augment_scene(runner, "scene_a", aug, summary)
    assert result.exit_code == 0
    assert load_graph(aug).find_activity_edge(
        fixture.HUMAN_ID, fixture.TV_ID, "SEE"
    )
    frames = json.loads(summary.read_text())
    assert [f["frame_id"] for f in frames] == ["f1", "f2"]

    result = invoke(
        runner,
        ["consolidate", "--graph", str(aug), "--out", str(final)],
    )
    assert result.exit_code == 0
    assert len(load_graph(final).activity_edges) == 2

    report = tmp_path / "report.json"
    result = invoke(
        runner,
        ["evaluate", "--scene", str(MINI / "scene_a"), "--graph", str(final),
         "--out", str(report)],
    )
    assert result.exit_code == 0
    assert "100.0" in result.output
    body = json.loads(report.read_text())
    assert body["total"]["tp"] == 2 and body["total"]["fp"] == 0


def test_augment_is_deterministic(runner, tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    assert augment_scene(runner, "scene_a", first).exit_code == 0
    assert augment_scene(runner, "scene_a", second).exit_code == 0
    assert first.read_bytes() == second.read_bytes()


def test_augment_does_not_mutate_inputs(runner, tmp_path):
    base = MINI / "scene_a" / "base_graph.json"
    before = sha(base)
    assert augment_scene(runner, "scene_a", tmp_path / "out.json").exit_code == 0
    assert sha(base) == before


def test_query_benchmark_scoring(runner, tmp_path):
    finals = []
    for scene in ("scene_a", "scene_b"):
        aug = tmp_path / f"{scene}.aug.json"
        final = tmp_path / f"{scene}.json"
        assert augment_scene(runner, scene, aug).exit_code == 0
        assert invoke(
            runner, ["consolidate", "--graph", str(aug), "--out", str(final)]
        ).exit_code == 0
        finals.append(final)
    answers = tmp_path / "answers.json"
    scores = tmp_path / "scores.json"
    result = invoke(
        runner,
        ["query", "--benchmark", str(MINI),
         "--graph", str(finals[0]), "--graph", str(finals[1]),
         "--backend", f"scripted:{MINI / 'scenario.json'}",
         "--answers", str(answers), "--out", str(scores)],
    )
    assert result.exit_code == 0
    assert "4/5" in result.output
    body = json.loads(scores.read_text())
    assert body["points"] == 4 and body["possible"] == 5
    assert json.loads(answers.read_text())["qa1"] == [fixture.HUMAN_ID]


def test_evaluate_usage_errors(runner, tmp_path):
    graph = tmp_path / "g.json"
    graph.write_text(serialize_full(fixture.base_graph()))
    result = runner.invoke(main, ["evaluate", "--graph", str(graph)])
    assert result.exit_code == 2  # neither --scene nor --benchmark
    result = runner.invoke(
        main,
        ["evaluate", "--benchmark", str(MINI), "--graph", str(graph)],
    )
    assert result.exit_code == 2  # two scenes, one graph


def test_domain_errors_exit_one(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    result = runner.invoke(
        main, ["consolidate", "--graph", str(bad), "--out", str(tmp_path / "o.json")]
    )
    assert result.exit_code == 1

    result = runner.invoke(
        main,
        ["augment", "--frames", str(MINI / "scene_a" / "frames" / "manifest.json"),
         "--graph", str(MINI / "scene_a" / "base_graph.json"),
         "--backend", "http", "--out", str(tmp_path / "o.json")],
        env={"S3DSG_INFERENCE_URL": ""},
    )
    assert result.exit_code == 1


def test_plan_round_trip(runner, tmp_path):
    aug = tmp_path / "aug.json"
    final = tmp_path / "final.json"
    assert augment_scene(runner, "scene_a", aug).exit_code == 0
    assert invoke(
        runner, ["consolidate", "--graph", str(aug), "--out", str(final)]
    ).exit_code == 0
    out = tmp_path / "path.json"
    svg = tmp_path / "path.svg"
    result = invoke(
        runner,
        ["plan", "--graph", str(final), "--start", "-2.3,-1.2", "--goal", "2.5,1.5",
         "--out", str(out), "--svg", str(svg)],
    )
    assert result.exit_code == 0
    body = json.loads(out.read_text())
    assert body["plan"]["social_cost"] <= body["baseline"]["social_cost"]
    assert body["plan"]["cells"][0] == body["baseline"]["cells"][0]
    assert svg.read_text().startswith("<svg")

    result = runner.invoke(
        main,
        ["plan", "--graph", str(final), "--start", "99,99", "--goal", "2.5,1.5",
         "--out", str(out)],
    )
    assert result.exit_code == 1  # start cell outside the grid

    result = runner.invoke(
        main,
        ["plan", "--graph", str(final), "--start", "oops", "--goal", "2.5,1.5",
         "--out", str(out)],
    )
    assert result.exit_code == 2  # malformed coordinate is a usage error


def test_config_file_precedence(runner, tmp_path):
    # Graph with one edge seen once and one seen twice; defaults prune the
    # single observation, a permissive config keeps it, flags beat config.
    graph = fixture.base_graph()
    human_points = fixture.plate_cloud(fixture.HUMAN_RECT, 2.0, 0.2)
    graph.add_node(HumanNode.from_cloud(fixture.HUMAN_ID, 1, human_points))
    graph.upsert_activity_edge(fixture.HUMAN_ID, fixture.TV_ID, "watching", "SEE",
                               source_frame_id="f1")
    graph.upsert_activity_edge(fixture.HUMAN_ID, fixture.TV_ID, "watching", "SEE",
                               source_frame_id="f2")
    graph.upsert_activity_edge(fixture.HUMAN_ID, fixture.BOOK_ID, "reading", "READ",
                               source_frame_id="f1")
    graph_path = tmp_path / "g.json"
    graph_path.write_text(serialize_full(graph))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_min": 1, "tau": 0.1}))
    out = tmp_path / "out.json"

    assert invoke(
        runner, ["consolidate", "--graph", str(graph_path), "--out", str(out)]
    ).exit_code == 0
    assert len(load_graph(out).activity_edges) == 1  # default n_min=2 prunes READ

    assert invoke(
        runner,
        ["--config", str(config), "consolidate", "--graph", str(graph_path),
         "--out", str(out)],
    ).exit_code == 0
    assert len(load_graph(out).activity_edges) == 2  # config keeps both

    assert invoke(
        runner,
        ["--config", str(config), "consolidate", "--graph", str(graph_path),
         "--n-min", "2", "--out", str(out)],
    ).exit_code == 0
    assert len(load_graph(out).activity_edges) == 1  # flag wins over config

    env_out = tmp_path / "env.json"
    assert invoke(
        runner,
        ["consolidate", "--graph", str(graph_path), "--out", str(env_out)],
        env={"S3DSG_CONFIG": str(config)},
    ).exit_code == 0
    assert len(load_graph(env_out).activity_edges) == 2  # env names the config

"""Command-line entry point.

Subcommands cover the full loop: ``augment`` runs RGB-D frames through the
perception pipeline against a backend, ``consolidate`` canonicalizes and
prunes, ``evaluate``/``query``/``stats`` work against benchmark scenes,
``plan`` runs the social-cost grid planner, and ``fingerprint`` helps author
scripted scenarios.

Option resolution order everywhere: explicit flags, then the JSON config file
(--config or $S3DSG_CONFIG), then environment variables, then the documented
defaults. Outputs are written atomically (temp file + rename) and inputs are
never modified in place.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import click

from .benchmark import (
    EvalConfig,
    aggregate_reports,
    answer_queries_llm,
    benchmark_stats,
    evaluate_relationships,
    format_metrics_table,
    format_query_table,
    load_benchmark,
    load_scene,
    score_queries,
)
from .consolidation import PruningConfig, consolidate, load_lexicon
from .errors import S3dsgError
from .graph import load_graph, serialize_compact, serialize_full
from .inference import (
    ENV_URL,
    HttpBackend,
    InferenceRequest,
    ScriptedBackend,
    ScriptedScenario,
    fingerprint as request_fingerprint,
)
from .pipeline import PipelineConfig, load_frame_manifest, run_frame
from .planner import (
    SocialCostField,
    extract_segments,
    occupancy_from_graph,
    path_social_cost,
    plan as plan_path,
    rasterize_cost,
    render_svg,
)

ENV_CONFIG = "S3DSG_CONFIG"

log = logging.getLogger(__name__)


def _atomic_write(path, text: str) -> None:
    """Write via a sibling temp file so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Settings:
    """Flag > config file > environment > default resolution."""

    def __init__(self, config_path=None):
        path = config_path or os.environ.get(ENV_CONFIG)
        self.values = {}
        if path:
            try:
                self.values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise click.ClickException(f"config file {path}: {exc}")
            if not isinstance(self.values, dict):
                raise click.ClickException(f"config file {path}: expected a JSON object")

    def get(self, flag, key, env=None, default=None):
        if flag is not None:
            return flag
        if key in self.values:
            return self.values[key]
        if env is not None and os.environ.get(env):
            return os.environ[env]
        return default


pass_settings = click.make_pass_decorator(Settings)


def _build_backend(settings: Settings, flag):
    spec = settings.get(flag, "backend", env=None)
    if spec is None:
        if os.environ.get(ENV_URL):
            return HttpBackend()
        raise click.ClickException(
            "no backend configured; pass --backend scripted:PATH or --backend "
            f"http[:URL], or set ${ENV_URL}"
        )
    kind, _, rest = str(spec).partition(":")
    if kind == "scripted":
        if not rest:
            raise click.ClickException("scripted backend needs a path: scripted:PATH")
        return ScriptedBackend(ScriptedScenario.from_file(rest))
    if kind == "http":
        return HttpBackend(url=rest or None)
    raise click.ClickException(f"unknown backend spec {spec!r}")


def _handle_domain_errors(fn):
    """Map package errors to exit code 1, leaving click usage errors at 2."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except S3dsgError as exc:
            raise click.ClickException(str(exc))
        except (ValueError, OSError) as exc:
            raise click.ClickException(str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help=f"JSON config file (default: ${ENV_CONFIG}). Precedence: "
                   "flags > config file > environment > defaults.")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug.")
@click.version_option(package_name="s3dsg")
@click.pass_context
def main(ctx, config_path, verbose):
    """Social 3D scene graphs: augmentation, evaluation, and planning."""
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = Settings(config_path)


@main.command()
@click.option("--frames", required=True, type=click.Path(exists=True),
              help="Frame manifest JSON.")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True),
              help="Input graph (never modified).")
@click.option("--backend", "backend_flag", default=None,
              help="scripted:PATH or http[:URL].")
@click.option("--iou", type=float, default=None,
              help="Detection-to-node alignment IoU threshold (default 0.25).")
@click.option("--out", required=True, type=click.Path(), help="Output graph JSON.")
@click.option("--summary", "summary_path", type=click.Path(), default=None,
              help="Optional per-frame summary JSON.")
@pass_settings
@_handle_domain_errors
def augment(settings, frames, graph_path, backend_flag, iou, out, summary_path):
    """Run RGB-D frames through the pipeline, adding humans and activities."""
    backend = _build_backend(settings, backend_flag)
    iou = float(settings.get(iou, "iou_threshold", default=0.25))
    config = PipelineConfig(iou_threshold=iou)
    graph = load_graph(graph_path)
    summaries = []
    for frame in load_frame_manifest(frames):
        summary = run_frame(frame, graph, backend, config)
        summaries.append(summary.to_dict())
        click.echo(
            f"{frame.frame_id}: +{len(summary.created_human_ids)} humans, "
            f"{len(summary.resolved)} activities, {len(summary.rejected)} rejected",
            err=True,
        )
    _atomic_write(out, serialize_full(graph))
    if summary_path:
        _atomic_write(summary_path, _dump(summaries))


@main.command("consolidate")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--tau", type=float, default=None,
              help="Pruning ratio threshold (default 0.4).")
@click.option("--n-min", type=int, default=None,
              help="Minimum detections to keep an edge (default 2).")
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True), default=None,
              help="Alternative verb-to-frame lexicon JSON.")
@click.option("--out", required=True, type=click.Path())
@click.option("--removal-log", "removal_log_path", type=click.Path(), default=None)
@pass_settings
@_handle_domain_errors
def consolidate_cmd(settings, graph_path, tau, n_min, lexicon_path, out,
                    removal_log_path):
    """Canonicalize activity labels and prune rarely-observed edges."""
    config = PruningConfig(
        tau=float(settings.get(tau, "tau", default=0.4)),
        n_min=int(settings.get(n_min, "n_min", default=2)),
    )
    lexicon = load_lexicon(settings.get(lexicon_path, "lexicon"))
    graph = load_graph(graph_path)
    pruned, removal_log = consolidate(graph, lexicon, config)
    _atomic_write(out, serialize_full(pruned))
    if removal_log_path:
        _atomic_write(removal_log_path, _dump(removal_log))
    click.echo(
        f"kept {len(pruned.activity_edges)} activity edges, "
        f"removed {len(removal_log)}",
        err=True,
    )


def _eval_config(settings, iou):
    return EvalConfig(iou_threshold=float(settings.get(iou, "eval_iou", default=0.10)))


@main.command()
@click.option("--graph", "graph_paths", multiple=True, type=click.Path(exists=True),
              help="Predicted graph; repeat in scene order for --benchmark.")
@click.option("--scene", "scene_dir", type=click.Path(exists=True), default=None,
              help="Single benchmark scene directory.")
@click.option("--benchmark", "benchmark_dir", type=click.Path(exists=True),
              default=None, help="Benchmark root; evaluates every scene.")
@click.option("--iou", type=float, default=None,
              help="Voxel IoU match threshold (default 0.10).")
@click.option("--out", type=click.Path(), default=None, help="Report JSON.")
@pass_settings
@_handle_domain_errors
def evaluate(settings, graph_paths, scene_dir, benchmark_dir, iou, out):
    """Score predicted activity edges against ground-truth relationships."""
    if (scene_dir is None) == (benchmark_dir is None):
        raise click.UsageError("pass exactly one of --scene or --benchmark")
    config = _eval_config(settings, iou)
    if scene_dir:
        bundles = [load_scene(scene_dir)]
    else:
        bundles = load_benchmark(benchmark_dir)
    if len(graph_paths) != len(bundles):
        raise click.UsageError(
            f"{len(bundles)} scenes but {len(graph_paths)} --graph options"
        )
    reports = [
        evaluate_relationships(load_graph(path), bundle, config)
        for path, bundle in zip(graph_paths, bundles)
    ]
    combined = aggregate_reports(reports)
    click.echo(format_metrics_table(combined))
    if out:
        _atomic_write(out, _dump(combined.to_dict()))


@main.command()
@click.option("--graph", "graph_paths", multiple=True, required=True,
              type=click.Path(exists=True),
              help="Predicted graph; repeat in scene order for --benchmark.")
@click.option("--scene", "scene_dir", type=click.Path(exists=True), default=None)
@click.option("--benchmark", "benchmark_dir", type=click.Path(exists=True),
              default=None)
@click.option("--backend", "backend_flag", default=None,
              help="scripted:PATH or http[:URL].")
@click.option("--iou", type=float, default=None)
@click.option("--answers", "answers_path", type=click.Path(), default=None,
              help="Write raw answers JSON.")
@click.option("--out", type=click.Path(), default=None, help="Score report JSON.")
@pass_settings
@_handle_domain_errors
def query(settings, graph_paths, scene_dir, benchmark_dir, backend_flag, iou,
          answers_path, out):
    """Answer scene-understanding queries over the compact graph and score them."""
    if (scene_dir is None) == (benchmark_dir is None):
        raise click.UsageError("pass exactly one of --scene or --benchmark")
    config = _eval_config(settings, iou)
    backend = _build_backend(settings, backend_flag)
    bundles = [load_scene(scene_dir)] if scene_dir else load_benchmark(benchmark_dir)
    if len(graph_paths) != len(bundles):
        raise click.UsageError(
            f"{len(bundles)} scenes but {len(graph_paths)} --graph options"
        )
    answers = {}
    scored = []
    for path, bundle in zip(graph_paths, bundles):
        graph = load_graph(path)
        answers.update(answer_queries_llm(bundle, graph, backend, config))
        scored.append((bundle, graph))
    report = score_queries(answers, scored, config)
    click.echo(format_query_table(report))
    if answers_path:
        _atomic_write(answers_path, _dump(answers))
    if out:
        _atomic_write(out, _dump(report.to_dict()))


@main.command()
@click.option("--benchmark", "benchmark_dir", required=True,
              type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of text.")
@click.option("--out", type=click.Path(), default=None)
@pass_settings
@_handle_domain_errors
def stats(settings, benchmark_dir, as_json, out):
    """Aggregate counts over a benchmark (humans, relationships, queries)."""
    totals = benchmark_stats(load_benchmark(benchmark_dir))
    if as_json:
        click.echo(json.dumps(totals, indent=2, sort_keys=True))
    else:
        q = totals["queries"]
        lines = [
            f"Scenes                     {totals['scenes']}",
            f"Total Unique Humans        {totals['humans']}",
            f"Total Relationships (GT)   {totals['relationships']}",
            f"Total Spatial Queries      {q['spatial']}",
            f"Total Activity Queries     {q['activity']}",
            f"Total Functional Queries   {q['functional']}",
            f"Total Queries              {q['total']}",
            f"Total Points               {totals['points']}",
            f"Frames                     {', '.join(totals['frames'])}",
        ]
        click.echo("\n".join(lines))
    if out:
        _atomic_write(out, _dump(totals))


def _parse_point(text, label):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"--{label} must look like X,Y (got {text!r})")
    return x, y


@main.command("plan")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True),
              help="Consolidated graph providing obstacles and interactions.")
@click.option("--start", required=True, help="Start position in meters: X,Y.")
@click.option("--goal", required=True, help="Goal position in meters: X,Y.")
@click.option("--costs", "costs_path", type=click.Path(exists=True), default=None,
              help="JSON {FRAME: [c_rel, radius]} overriding the default table.")
@click.option("--resolution", type=float, default=None,
              help="Grid resolution in meters (default 0.1).")
@click.option("--combination", type=click.Choice(["max", "sum"]), default=None,
              help="How overlapping interaction zones combine (default max).")
@click.option("--out", required=True, type=click.Path(), help="Path JSON.")
@click.option("--svg", "svg_path", type=click.Path(), default=None,
              help="Figure with grid, segments, and both paths.")
@pass_settings
@_handle_domain_errors
def plan_cmd(settings, graph_path, start, goal, costs_path, resolution, combination,
             out, svg_path):
    """Plan a path that detours around human interaction zones."""
    graph = load_graph(graph_path)
    cost_table = None
    costs_path = settings.get(costs_path, "costs")
    if costs_path:
        raw = json.loads(Path(costs_path).read_text())
        cost_table = {frame: (float(v[0]), float(v[1])) for frame, v in raw.items()}
    resolution = float(settings.get(resolution, "resolution", default=0.1))
    combination = settings.get(combination, "combination", default="max")

    grid = occupancy_from_graph(graph, resolution=resolution)
    segments = extract_segments(graph, cost_table)
    augmented = rasterize_cost(grid, SocialCostField(segments, combination=combination))
    baseline = rasterize_cost(grid, SocialCostField([], combination=combination))

    start_cell = grid.world_to_cell(*_parse_point(start, "start"))
    goal_cell = grid.world_to_cell(*_parse_point(goal, "goal"))
    social_plan = plan_path(augmented, start_cell, goal_cell)
    base_plan = plan_path(baseline, start_cell, goal_cell)

    def result_dict(result):
        # Both paths are judged against the augmented field so the baseline
        # shows what it would have cost socially to ignore the interactions.
        return {
            "cells": [list(c) for c in result.cells],
            "waypoints": [list(grid.cell_center(*c)) for c in result.cells],
            "total_cost": result.total_cost,
            "geometric_length": result.geometric_length,
            "social_cost": path_social_cost(augmented, result.cells),
        }

    payload = {
        "resolution": resolution,
        "origin": [grid.origin.x, grid.origin.y],
        "start_cell": list(start_cell),
        "goal_cell": list(goal_cell),
        "plan": result_dict(social_plan),
        "baseline": result_dict(base_plan),
        "segments": [
            {"frame": s.frame, "a": [s.a.x, s.a.y], "b": [s.b.x, s.b.y],
             "c_rel": s.c_rel, "radius": s.radius}
            for s in segments
        ],
    }
    _atomic_write(out, _dump(payload))
    if svg_path:
        svg = render_svg(
            augmented, {"baseline": base_plan, "social": social_plan}, segments
        )
        _atomic_write(svg_path, svg)
    click.echo(
        f"social path: {social_plan.geometric_length:.2f} m, "
        f"accumulated social cost {social_plan.social_cost:.3f} "
        f"(baseline {base_plan.geometric_length:.2f} m at "
        f"{path_social_cost(augmented, base_plan.cells):.3f})",
        err=True,
    )


@main.command("fingerprint")
@click.option("--stage", required=True,
              type=click.Choice(["behavior_description", "activity_proposal",
                                 "remote_solver", "query_answer"]))
@click.option("--prompt", required=True,
              help="Prompt text, or @FILE to read it from a file.")
@click.option("--image-ref", default=None)
@click.option("--context-json", default=None,
              help="Context JSON string, or @FILE.")
@_handle_domain_errors
def fingerprint_cmd(stage, prompt, image_ref, context_json):
    """Print the scenario-lookup fingerprint for a request (for authoring)."""

    def deref(value):
        if value is not None and value.startswith("@"):
            return Path(value[1:]).read_text()
        return value

    request = InferenceRequest(
        stage=stage,
        prompt_text=deref(prompt),
        image_ref=image_ref,
        context_json=deref(context_json),
    )
    click.echo(request_fingerprint(request))


@main.command("export")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--decimals", type=int, default=2, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Write compact JSON here instead of stdout.")
@_handle_domain_errors
def export(graph_path, decimals, out):
    """Emit the compact node/edge/glossary serialization of a graph."""
    compact = serialize_compact(load_graph(graph_path), decimals=decimals)
    if out:
        _atomic_write(out, compact + "\n")
    else:
        click.echo(compact)


if __name__ == "__main__":
    main()

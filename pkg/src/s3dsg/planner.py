"""Socially-aware 2D grid planning on top of a consolidated scene graph.

Activity edges turn into interaction segments between the two endpoints'
planar centers; each segment radiates a linear-falloff penalty

    cost(p) = c_rel * (1 - d(p, segment) / radius)   while d < radius

which is added onto a geometric occupancy grid.  The planner then finds the
least-cost 8-connected path where a step of length L into a cell with
augmented cost c costs L * (1 + c), so penalties trade off against detour
distance in meters.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NoPathError
from .geometry import Vec3
from .graph import SocialSceneGraph

OBSTACLE = math.inf

# Default per-frame (cost magnitude, radius of influence in meters). Frames
# absent from the table produce no segment. Conversation-style frames get a
# tight expensive zone; SEE gets a longer, cheaper view-line penalty.
DEFAULT_COST_TABLE: dict[str, tuple[float, float]] = {
    "SPEAK": (10.0, 1.5),
    "LISTEN": (10.0, 1.5),
    "INTERACT": (10.0, 1.5),
    "SEE": (6.0, 3.0),
}

DEFAULT_RESOLUTION = 0.1
OBSTACLE_Z_MIN = 0.1
OBSTACLE_Z_MAX = 1.8


@dataclass
class OccupancyGrid:
    """Row-major cost grid; cell (ix, iy) center is origin + (ix+.5, iy+.5)*res."""

    origin: Vec3
    resolution: float
    width: int
    height: int
    base_cost: np.ndarray  # shape (height, width); OBSTACLE marks impassable

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.base_cost = np.asarray(self.base_cost, dtype=float)
        if self.base_cost.shape != (self.height, self.width):
            raise ValueError(
                f"base_cost shape {self.base_cost.shape} != (height={self.height}, width={self.width})"
            )
        finite = self.base_cost[np.isfinite(self.base_cost)]
        if finite.size and finite.min() < 0:
            raise ValueError("base costs must be non-negative")

    @staticmethod
    def empty(origin: Vec3, resolution: float, width: int, height: int) -> "OccupancyGrid":
        return OccupancyGrid(origin, resolution, width, height, np.zeros((height, width)))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_obstacle(self, ix: int, iy: int) -> bool:
        return not math.isfinite(self.base_cost[iy, ix])


@dataclass(frozen=True)
class InteractionSegment:
    """Planar segment between two interacting nodes with its penalty profile."""

    a: Vec3
    b: Vec3
    frame: str
    c_rel: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.c_rel < 0:
            raise ValueError("c_rel must be non-negative")

    def distance_to(self, x: float, y: float) -> float:
        ax, ay = self.a.x, self.a.y
        bx, by = self.b.x, self.b.y
        dx, dy = bx - ax, by - ay
        len_sq = dx * dx + dy * dy
        if len_sq == 0:
            return math.hypot(x - ax, y - ay)
        t = ((x - ax) * dx + (y - ay) * dy) / len_sq
        t = min(1.0, max(0.0, t))
        return math.hypot(x - (ax + t * dx), y - (ay + t * dy))

    def cost_at(self, x: float, y: float) -> float:
        d = self.distance_to(x, y)
        if d < self.radius:
            return self.c_rel * (1.0 - d / self.radius)
        return 0.0


@dataclass
class SocialCostField:
    """Collection of interaction segments with a combination rule."""

    segments: list[InteractionSegment] = field(default_factory=list)
    combination: str = "max"  # "sum" is the config-gated alternative

    def __post_init__(self):
        if self.combination not in ("max", "sum"):
            raise ValueError(f"combination must be 'max' or 'sum', got {self.combination!r}")


def extract_segments(
    graph: SocialSceneGraph,
    cost_table: Optional[dict[str, tuple[float, float]]] = None,
) -> list[InteractionSegment]:
    """One segment per activity edge whose frame has a cost entry.

    Opposite-direction edges of the same frame over the same node pair
    collapse into a single segment (the segment itself is symmetric).
    """
    table = DEFAULT_COST_TABLE if cost_table is None else cost_table
    segments = []
    seen = set()
    for edge in sorted(graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame)):
        if edge.frame not in table:
            continue
        key = (edge.frame, min(edge.from_id, edge.to_id), max(edge.from_id, edge.to_id))
        if key in seen:
            continue
        seen.add(key)
        c_rel, radius = table[edge.frame]
        a = graph.node(edge.from_id).center
        b = graph.node(edge.to_id).center
        segments.append(
            InteractionSegment(
                a=Vec3(a.x, a.y, 0.0),
                b=Vec3(b.x, b.y, 0.0),
                frame=edge.frame,
                c_rel=c_rel,
                radius=radius,
            )
        )
    return segments


def social_cost_at(p: tuple[float, float], field_: SocialCostField) -> float:
    """Evaluate the combined interaction penalty at a planar (x, y) point."""
    x, y = float(p[0]), float(p[1])
    costs = [seg.cost_at(x, y) for seg in field_.segments]
    if not costs:
        return 0.0
    if field_.combination == "sum":
        return float(sum(costs))
    return float(max(costs))


@dataclass
class AugmentedGrid:
    """Occupancy grid plus the rasterized social layer and their sum."""

    grid: OccupancyGrid
    social: np.ndarray
    total: np.ndarray


def rasterize_cost(grid: OccupancyGrid, field_: SocialCostField) -> AugmentedGrid:
    """Sample the social field at free-cell centers and add it to base costs."""
    social = np.zeros((grid.height, grid.width))
    for iy in range(grid.height):
        for ix in range(grid.width):
            if grid.is_obstacle(ix, iy):
                continue
            social[iy, ix] = social_cost_at(grid.cell_center(ix, iy), field_)
    total = grid.base_cost + social
    total[~np.isfinite(grid.base_cost)] = OBSTACLE
    return AugmentedGrid(grid=grid, social=social, total=total)


@dataclass
class PlanResult:
    cells: list[tuple[int, int]]  # (ix, iy) from start to goal inclusive
    total_cost: float
    geometric_length: float
    social_cost: float


_STEPS = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)]


def plan(aug: AugmentedGrid, start: tuple[int, int], goal: tuple[int, int]) -> PlanResult:
    """Dijkstra over the augmented grid with deterministic tie-breaking.

    A step of length L meters into cell c costs L * (1 + total[c]); ties on
    path cost resolve by lexicographic (iy, ix) heap order so identical
    inputs always return the identical path.
    """
    grid = aug.grid
    for name, (ix, iy) in (("start", start), ("goal", goal)):
        if not grid.in_bounds(ix, iy):
            raise NoPathError(f"{name} cell {(ix, iy)} outside the grid")
        if grid.is_obstacle(ix, iy):
            raise NoPathError(f"{name} cell {(ix, iy)} is an obstacle")

    res = grid.resolution
    sx, sy = start
    gx, gy = goal
    dist = np.full((grid.height, grid.width), np.inf)
    dist[sy, sx] = 0.0
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(0.0, sy, sx)]
    done = np.zeros((grid.height, grid.width), dtype=bool)
    while heap:
        d, iy, ix = heapq.heappop(heap)
        if done[iy, ix]:
            continue
        done[iy, ix] = True
        if (ix, iy) == (gx, gy):
            break
        for dix, diy in _STEPS:
            nx, ny = ix + dix, iy + diy
            if not grid.in_bounds(nx, ny) or grid.is_obstacle(nx, ny) or done[ny, nx]:
                continue
            length = res * math.hypot(dix, diy)
            cand = d + length * (1.0 + aug.total[ny, nx])
            if cand < dist[ny, nx]:
                dist[ny, nx] = cand
                parent[(nx, ny)] = (ix, iy)
                heapq.heappush(heap, (cand, ny, nx))

    if not math.isfinite(dist[gy, gx]):
        raise NoPathError(f"no traversable path from {start} to {goal}")

    cells = [(gx, gy)]
    while cells[-1] != (sx, sy):
        cells.append(parent[cells[-1]])
    cells.reverse()

    length = 0.0
    for (ax, ay), (bx, by) in zip(cells, cells[1:]):
        length += res * math.hypot(bx - ax, by - ay)
    return PlanResult(
        cells=cells,
        total_cost=float(dist[gy, gx]),
        geometric_length=length,
        social_cost=path_social_cost(aug, cells),
    )


def path_social_cost(aug: AugmentedGrid, cells: list[tuple[int, int]]) -> float:
    """Social cost a cell path accumulates on this field.

    Lets a path planned on one field (say, the zero field) be judged against
    another (the augmented one) for before/after comparisons.
    """
    res = aug.grid.resolution
    total = 0.0
    for (ax, ay), (bx, by) in zip(cells, cells[1:]):
        total += res * math.hypot(bx - ax, by - ay) * aug.social[by, bx]
    return total


def occupancy_from_graph(
    graph: SocialSceneGraph,
    resolution: float = DEFAULT_RESOLUTION,
    margin: float = 0.5,
    floor_z: Optional[float] = None,
) -> OccupancyGrid:
    """Project object point clouds into an obstacle grid.

    Points between floor + 0.1 m and floor + 1.8 m mark their cell as an
    obstacle; humans are represented through the social field instead.
    """
    all_points = [n.points for n in graph.nodes.values()]
    if not all_points:
        raise ValueError("cannot build a grid from an empty graph")
    stacked = np.vstack(all_points)
    if floor_z is None:
        floor_z = float(stacked[:, 2].min())
    lo = stacked[:, :2].min(axis=0) - margin
    hi = stacked[:, :2].max(axis=0) + margin
    width = max(1, int(math.ceil((hi[0] - lo[0]) / resolution)))
    height = max(1, int(math.ceil((hi[1] - lo[1]) / resolution)))
    grid = OccupancyGrid.empty(Vec3(float(lo[0]), float(lo[1]), floor_z), resolution, width, height)
    for node in graph.entities():
        pts = node.points
        band = pts[(pts[:, 2] >= floor_z + OBSTACLE_Z_MIN) & (pts[:, 2] <= floor_z + OBSTACLE_Z_MAX)]
        for x, y in band[:, :2]:
            ix, iy = grid.world_to_cell(float(x), float(y))
            if grid.in_bounds(ix, iy):
                grid.base_cost[iy, ix] = OBSTACLE
    return grid


# -- figure-style export --------------------------------------------------------


def _svg_color_for_cost(cost: float, max_cost: float) -> str:
    if not math.isfinite(cost):
        return "#222222"
    if max_cost <= 0 or cost <= 0:
        return "#f8f8f8"
    t = min(1.0, cost / max_cost)
    r = 255
    g = int(235 - 165 * t)
    b = int(205 - 175 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_svg(
    aug: AugmentedGrid,
    paths: dict[str, PlanResult],
    segments: list[InteractionSegment],
    cell_px: int = 10,
) -> str:
    """Plain SVG of the augmented grid, interaction segments, and paths."""
    grid = aug.grid
    w, h = grid.width * cell_px, grid.height * cell_px
    finite = aug.total[np.isfinite(aug.total)]
    max_cost = float(finite.max()) if finite.size else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    ]
    for iy in range(grid.height):
        for ix in range(grid.width):
            color = _svg_color_for_cost(float(aug.total[iy, ix]), max_cost)
            # flip y so +y points up in the figure
            py = (grid.height - 1 - iy) * cell_px
            parts.append(
                f'<rect x="{ix * cell_px}" y="{py}" width="{cell_px}" height="{cell_px}" fill="{color}"/>'
            )

    def to_px(ix: int, iy: int) -> tuple[float, float]:
        return ((ix + 0.5) * cell_px, (grid.height - 1 - iy + 0.5) * cell_px)

    def world_to_px(x: float, y: float) -> tuple[float, float]:
        fx = (x - grid.origin.x) / grid.resolution
        fy = (y - grid.origin.y) / grid.resolution
        return (fx * cell_px, (grid.height - fy) * cell_px)

    for seg in segments:
        (x1, y1), (x2, y2) = world_to_px(seg.a.x, seg.a.y), world_to_px(seg.b.x, seg.b.y)
        parts.append(
            f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" '
            f'stroke="#9933cc" stroke-width="3" stroke-dasharray="6,3"/>'
        )
    colors = {"geometric": "#3366ff", "social": "#dd2222"}
    for name, result in paths.items():
        pts = " ".join(f"{px:.1f},{py:.1f}" for px, py in (to_px(ix, iy) for ix, iy in result.cells))
        color = colors.get(name, "#00aa55")
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)

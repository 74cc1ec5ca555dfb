"""Agent embodiment: pose, discrete actions, semantic field-of-view sensing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .world import OUTSIDE, WALL, SemanticGrid

FORWARD_STEP = 0.25
TURN_STEP = 10.0
_EPS = 1e-9


class Action(enum.Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"


MOVE_ACTIONS = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0  # degrees, counter-clockwise from +x

    def __post_init__(self):
        object.__setattr__(self, "heading", float(self.heading) % 360.0)

    @property
    def point(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SensorParams:
    fov: float = 90.0
    range: float = 5.0
    ray_step: float = 1.0

    def __post_init__(self):
        if not (0 < self.fov <= 360 and self.range > 0 and self.ray_step > 0):
            raise ValueError(f"invalid sensor parameters {self}")


@dataclass(frozen=True)
class Observation:
    cells: np.ndarray  # (n, 2) int rows/cols of visible cells
    labels: np.ndarray  # (n,) cell codes
    ranges: np.ndarray  # per-ray distance to first blocker, capped at sensor range
    gps: tuple[float, float]
    compass: float

    @property
    def visible_cells(self):
        return [((int(r), int(c)), int(code)) for (r, c), code in zip(self.cells, self.labels)]


def unit_vector(heading: float) -> tuple[float, float]:
    """Exact axis vectors at multiples of 90 degrees, trig otherwise."""
    h = heading % 360.0
    exact = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if h in exact:
        return exact[h]
    rad = math.radians(h)
    return (math.cos(rad), math.sin(rad))


def step(grid: SemanticGrid, pose: Pose, action: Action) -> tuple[Pose, bool]:
    """Apply one action. Returns the new pose and whether a forward move collided."""
    if action is Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.heading + TURN_STEP), False
    if action is Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.heading - TURN_STEP), False
    if action is Action.STOP:
        return pose, False
    ux, uy = unit_vector(pose.heading)
    nx, ny = pose.x + FORWARD_STEP * ux, pose.y + FORWARD_STEP * uy
    if not grid.is_navigable(grid.cell_of((nx, ny))):
        return pose, True
    return Pose(nx, ny, pose.heading), False


def forward_target(grid: SemanticGrid, pose: Pose) -> tuple[int, int]:
    """Cell a forward move from ``pose`` would land in."""
    ux, uy = unit_vector(pose.heading)
    return grid.cell_of((pose.x + FORWARD_STEP * ux, pose.y + FORWARD_STEP * uy))


def blocking_mask(grid: SemanticGrid) -> np.ndarray:
    """Cells that stop sight lines: walls and outside."""
    mask = grid._caches.get("blocking")
    if mask is None:
        mask = (grid.cells == WALL) | (grid.cells == OUTSIDE)
        mask.setflags(write=False)
        grid._caches["blocking"] = mask
    return mask


def first_block(blocked: np.ndarray, origin, ends: np.ndarray, include_end: bool) -> np.ndarray:
    """Fraction of each segment ``origin -> ends[i]`` (cell units) before it touches a blocked cell.

    Traversal is supercover: a segment through a grid corner touches all four
    cells meeting there. Cells outside ``blocked`` count as blocked. The cell
    holding ``origin`` is never tested; the cell holding the end point is
    tested only when ``include_end``. Returns ``inf`` for clear segments.
    """
    ends = np.asarray(ends, dtype=float).reshape(-1, 2)
    n = len(ends)
    if n == 0:
        return np.zeros(0)
    h, w = blocked.shape
    x0, y0 = float(origin[0]), float(origin[1])
    dx = ends[:, 0] - x0
    dy = ends[:, 1] - y0
    span = int(math.ceil(max(np.abs(dx).max(), np.abs(dy).max()))) + 2

    def crossings(p0, d):
        k = np.arange(1, span + 1)
        lines = np.where(d[:, None] > 0, math.floor(p0) + k[None, :], math.ceil(p0) - k[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (lines - p0) / d[:, None]
        t[(d[:, None] == 0) | ~(t > _EPS) | ~(t < 1 - _EPS)] = np.inf
        return t

    ts = np.concatenate([np.zeros((n, 1)), crossings(x0, dx), crossings(y0, dy), np.ones((n, 1))], axis=1)
    ts[~np.isfinite(ts)] = 1.0
    ts.sort(axis=1)
    lo, hi = ts[:, :-1], ts[:, 1:]
    seg = hi - lo > _EPS
    mid = 0.5 * (lo + hi)
    px = x0 + mid * dx[:, None]
    py = y0 + mid * dy[:, None]
    col = np.floor(px).astype(np.int64)
    row = np.floor(py).astype(np.int64)
    inside = (row >= 0) & (row < h) & (col >= 0) & (col < w)
    hit = np.ones_like(seg)
    hit[inside] = blocked[row[inside], col[inside]]
    start_cell = (col == math.floor(x0)) & (row == math.floor(y0))
    end_col = np.floor(ends[:, 0]).astype(np.int64)[:, None]
    end_row = np.floor(ends[:, 1]).astype(np.int64)[:, None]
    end_cell = (col == end_col) & (row == end_row)
    test = seg & ~start_cell
    if not include_end:
        test &= ~end_cell
    t_hit = np.where(test & hit, lo, np.inf).min(axis=1)

    # corners: an x- and a y-crossing at the same parameter give a zero-length interval
    seg_i, kx = np.nonzero(~seg & (lo > _EPS) & (lo < 1 - _EPS))
    if seg_i.size:
        t = lo[seg_i, kx]
        cx = np.rint(x0 + t * dx[seg_i]).astype(np.int64)
        cy = np.rint(y0 + t * dy[seg_i]).astype(np.int64)
        for dr, dc in ((-1, -1), (-1, 0), (0, -1), (0, 0)):
            r, c = cy + dr, cx + dc
            test = ~((r == math.floor(y0)) & (c == math.floor(x0)))
            if not include_end:
                test &= ~((r == end_row[seg_i, 0]) & (c == end_col[seg_i, 0]))
            inb = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            hit = np.ones(r.shape, dtype=bool)
            hit[inb] = blocked[r[inb], c[inb]]
            sel = test & hit
            np.minimum.at(t_hit, seg_i[sel], t[sel])
    return t_hit


def visible_mask(grid: SemanticGrid, pose: Pose, sensor: SensorParams = SensorParams()) -> np.ndarray:
    """Boolean mask of cells whose centers the sensor sees from ``pose``."""
    res = grid.resolution
    px, py = pose.x / res, pose.y / res
    rng_c = sensor.range / res
    r0 = max(0, int(math.floor(py - rng_c)) - 1)
    r1 = min(grid.height, int(math.ceil(py + rng_c)) + 2)
    c0 = max(0, int(math.floor(px - rng_c)) - 1)
    c1 = min(grid.width, int(math.ceil(px + rng_c)) + 2)
    rows, cols = np.mgrid[r0:r1, c0:c1]
    cx = cols + 0.5
    cy = rows + 0.5
    ddx, ddy = cx - px, cy - py
    dist = np.hypot(ddx, ddy) * res
    cand = dist <= sensor.range + _EPS
    if sensor.fov < 360:
        ang = np.degrees(np.arctan2(ddy, ddx))
        diff = np.abs((ang - pose.heading + 180.0) % 360.0 - 180.0)
        cand &= (diff <= sensor.fov / 2 + _EPS) | (dist < _EPS)
    rr, cc = rows[cand], cols[cand]
    ends = np.stack([cc + 0.5, rr + 0.5], axis=1)
    t = first_block(blocking_mask(grid), (px, py), ends, include_end=False)
    mask = np.zeros(grid.shape, dtype=bool)
    ok = ~np.isfinite(t)
    mask[rr[ok], cc[ok]] = True
    return mask


def ray_angles(pose: Pose, sensor: SensorParams) -> np.ndarray:
    n = int(math.floor(sensor.fov / sensor.ray_step + _EPS))
    if sensor.fov >= 360:
        offsets = np.arange(n) * sensor.ray_step - 180.0
    else:
        offsets = np.arange(n + 1) * sensor.ray_step - sensor.fov / 2
    return pose.heading + offsets


def observe(
    grid: SemanticGrid,
    pose: Pose,
    sensor: SensorParams = SensorParams(),
    origin: Pose | None = None,
    with_ranges: bool = True,
) -> Observation:
    """Semantic view of the cells visible from ``pose`` plus relative GPS and compass.

    ``origin`` is the episode start pose; GPS is expressed in its frame.
    ``with_ranges=False`` skips the range rays and returns an empty array.
    """
    mask = visible_mask(grid, pose, sensor)
    cells = np.argwhere(mask)
    labels = grid.cells[mask]
    res = grid.resolution
    ranges = np.zeros(0)
    if with_ranges:
        angles = np.radians(ray_angles(pose, sensor))
        rc = sensor.range / res
        ends = np.stack([pose.x / res + rc * np.cos(angles), pose.y / res + rc * np.sin(angles)], axis=1)
        t = first_block(blocking_mask(grid), (pose.x / res, pose.y / res), ends, include_end=True)
        ranges = np.minimum(t, 1.0) * sensor.range
    origin = origin or pose
    ux, uy = unit_vector(origin.heading)
    ex, ey = pose.x - origin.x, pose.y - origin.y
    gps = (ex * ux + ey * uy, -ex * uy + ey * ux)
    compass = (pose.heading - origin.heading) % 360.0
    return Observation(cells, labels, ranges, gps, compass)

"""Room-navigation episodes: sampling, ground-truth target points, dataset files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ResolutionError, SamplingError, ValidationError
from .sim import Pose
from .world import ROOM_TYPES, SemanticGrid, layout_hash, room_type_index, target_field

MIN_GEODESIC = 4.0
MAX_GEODESIC = 45.0
MAX_STEPS = 500
MAX_DRAWS = 10_000

DATASET_FIELDS = ("house_id", "house_hash", "start_x", "start_y", "start_heading", "target_type", "gt_x", "gt_y", "l")


@dataclass(frozen=True)
class Episode:
    house_id: str
    start: Pose
    target_type: str
    gt_point: tuple[float, float]
    geodesic_len: float
    max_steps: int = MAX_STEPS
    house_hash: str = field(default="", compare=True)

    def validate(self) -> None:
        room_type_index(self.target_type)
        if not (MIN_GEODESIC <= self.geodesic_len <= MAX_GEODESIC):
            raise ValidationError(
                f"episode geodesic length {self.geodesic_len} outside [{MIN_GEODESIC}, {MAX_GEODESIC}]"
            )
        if self.max_steps < 1:
            raise ValidationError("max_steps must be positive")


def gt_target_point(grid: SemanticGrid, start, target_type: str) -> tuple[tuple[float, float], float]:
    """Nearest inset point of any ``target_type`` room and its geodesic distance from ``start``.

    Equally near candidates resolve to the lowest ``(row, col)`` cell.
    """
    room_type_index(target_type)
    cell = grid.cell_of(start)
    if not grid.is_navigable(cell):
        raise SamplingError(f"start {tuple(start)} is not navigable")
    room = grid.room_at(cell)
    if room is not None and room.room_type == target_type:
        raise SamplingError(f"start lies inside a {target_type}")
    dist, origin = target_field(grid, target_type)
    d = float(dist[cell])
    if not math.isfinite(d):
        raise SamplingError(f"no reachable {target_type} from {tuple(start)}")
    src = int(origin[cell])
    return grid.center(divmod(src, grid.width)), d


def sample_episode(
    grid: SemanticGrid,
    rng: np.random.Generator,
    house_id: str = "",
    start: Pose | None = None,
    max_draws: int = MAX_DRAWS,
    max_steps: int = MAX_STEPS,
) -> Episode:
    """Rejection-sample a valid (start, target type) pair.

    When ``start`` is given only the target type is drawn.
    """
    types = sorted({r.room_type for r in grid.rooms}, key=ROOM_TYPES.index)
    if not types:
        raise SamplingError("house has no rooms")
    nav = np.flatnonzero(grid.navigable.ravel())
    digest = layout_hash(grid)
    for _ in range(max_draws):
        if start is None:
            idx = int(nav[rng.integers(len(nav))])
            pose = Pose(*grid.center(divmod(idx, grid.width)), 10.0 * int(rng.integers(36)))
        else:
            pose = start
        tr = types[int(rng.integers(len(types)))]
        try:
            point, length = gt_target_point(grid, pose.point, tr)
        except SamplingError:
            continue
        if MIN_GEODESIC <= length <= MAX_GEODESIC:
            return Episode(house_id, pose, tr, point, length, max_steps, digest)
    raise SamplingError(f"no valid episode after {max_draws} draws")


def sample_episodes(grid: SemanticGrid, n: int, seed: int, house_id: str = "") -> list[Episode]:
    rng = np.random.default_rng(seed)
    return [sample_episode(grid, rng, house_id) for _ in range(n)]


def write_dataset(episodes, meta: dict | None = None) -> bytes:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_FIELDS)
    for ep in episodes:
        writer.writerow([
            ep.house_id, ep.house_hash, repr(ep.start.x), repr(ep.start.y), repr(ep.start.heading),
            ep.target_type, repr(ep.gt_point[0]), repr(ep.gt_point[1]), repr(ep.geodesic_len),
        ])
    return buf.getvalue().encode()


def read_dataset_meta(data: bytes) -> dict:
    meta = {}
    for line in data.decode().splitlines():
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        meta[key.strip()] = value.strip()
    return meta


def read_dataset(data: bytes, houses: dict | None = None) -> list[Episode]:
    """Parse a dataset file.

    ``houses`` maps house ids to grids; when given every record must resolve
    to a known house whose layout hash matches.
    """
    try:
        text = data.decode()
    except UnicodeDecodeError as exc:
        raise ParseError(f"dataset is not UTF-8: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("dataset has no header row")
    reader = csv.reader(lines)
    header = tuple(next(reader))
    if header != DATASET_FIELDS:
        raise ParseError(f"unexpected dataset columns {header}")
    hashes = {}
    episodes = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(DATASET_FIELDS):
            raise ParseError(f"record {lineno} has {len(row)} fields")
        try:
            house_id, house_hash, sx, sy, sh, tr, gx, gy, length = row
            ep = Episode(house_id, Pose(float(sx), float(sy), float(sh)), tr, (float(gx), float(gy)),
                         float(length), MAX_STEPS, house_hash)
        except ValueError as exc:
            raise ParseError(f"record {lineno}: {exc}") from None
        ep.validate()
        if houses is not None:
            if house_id not in houses:
                raise ResolutionError(f"record {lineno} references unknown house {house_id!r}")
            if house_id not in hashes:
                hashes[house_id] = layout_hash(houses[house_id])
            if hashes[house_id] != house_hash:
                raise ValidationError(f"record {lineno}: house {house_id!r} hash mismatch")
        episodes.append(ep)
    return episodes

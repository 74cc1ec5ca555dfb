"""Single-floor house grids: labels, geodesics, layout files, generation.

Cells are stored row-major as ``cells[row, col]`` with ``row`` along +y and
``col`` along +x. A point ``(x, y)`` in meters falls in cell
``(floor(y / res), floor(x / res))``. Cell codes:

* ``OUTSIDE`` (-3): outside the house, not navigable
* ``WALL`` (-2): interior but not navigable, blocks sight
* ``INTERIOR`` (-1): navigable house space that belongs to no room
* ``k >= 0``: floor of ``rooms[k]``
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, GenerationError, ParseError, ValidationError

ROOM_TYPES = ("Bathroom", "Bedroom", "DiningRoom", "Kitchen", "LivingRoom")
OUTSIDE, WALL, INTERIOR = -3, -2, -1
DEFAULT_RESOLUTION = 0.25
INSET = 0.2
SQRT2 = math.sqrt(2.0)

# full semantic labels used by the priors: outside, interior (incl. walls), then room types
N_LABELS = 2 + len(ROOM_TYPES)
LABEL_OUTSIDE, LABEL_INTERIOR = 0, 1

LAYOUT_VERSION = 1


def room_type_index(room_type: str) -> int:
    try:
        return ROOM_TYPES.index(room_type)
    except ValueError:
        raise ValidationError(f"unknown room type {room_type!r}") from None


@dataclass(frozen=True)
class RoomInstance:
    id: int
    room_type: str
    bounds: tuple[int, int, int, int]  # x0, y0, x1, y1 in cells, half-open

    @property
    def area(self) -> int:
        x0, y0, x1, y1 = self.bounds
        return max(0, x1 - x0) * max(0, y1 - y0)

    def contains_cell(self, row: int, col: int) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= col < x1 and y0 <= row < y1

    def inset_depth(self, x: float, y: float, resolution: float) -> float:
        """Distance (m) from a point to the nearest side of the room, negative outside."""
        x0, y0, x1, y1 = (b * resolution for b in self.bounds)
        return min(x - x0, x1 - x, y - y0, y1 - y)


@dataclass(frozen=True, eq=False)
class SemanticGrid:
    """Immutable labelled house grid; validated on construction."""

    cells: np.ndarray
    rooms: tuple[RoomInstance, ...] = ()
    resolution: float = DEFAULT_RESOLUTION
    _caches: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int32, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "resolution", float(self.resolution))
        _validate(self)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def __eq__(self, other):
        if not isinstance(other, SemanticGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.rooms == other.rooms
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )

    __hash__ = None

    def __getstate__(self):
        return {"cells": self.cells, "rooms": self.rooms, "resolution": self.resolution}

    def __setstate__(self, state):
        object.__setattr__(self, "cells", state["cells"])
        object.__setattr__(self, "rooms", state["rooms"])
        object.__setattr__(self, "resolution", state["resolution"])
        object.__setattr__(self, "_caches", {})

    @cached_property
    def navigable(self) -> np.ndarray:
        nav = self.cells >= INTERIOR
        nav.setflags(write=False)
        return nav

    @cached_property
    def labels(self) -> np.ndarray:
        """Full semantic label per cell (0 outside, 1 interior/wall, 2+type)."""
        lab = np.full(self.shape, LABEL_INTERIOR, dtype=np.int8)
        lab[self.cells == OUTSIDE] = LABEL_OUTSIDE
        for room in self.rooms:
            lab[self.cells == room.id] = 2 + room_type_index(room.room_type)
        lab.setflags(write=False)
        return lab

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def cell_of(self, point) -> tuple[int, int]:
        x, y = point
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def center(self, cell) -> tuple[float, float]:
        row, col = cell
        return ((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def is_navigable(self, cell) -> bool:
        row, col = cell
        return self.in_bounds(row, col) and bool(self.navigable[row, col])

    def room_at(self, cell) -> RoomInstance | None:
        row, col = cell
        if not self.in_bounds(row, col):
            return None
        code = int(self.cells[row, col])
        return self.rooms[code] if code >= 0 else None

    def rooms_of_type(self, room_type: str) -> list[RoomInstance]:
        return [r for r in self.rooms if r.room_type == room_type]

    def room_mask(self, room_type: str) -> np.ndarray:
        ids = [r.id for r in self.rooms_of_type(room_type)]
        return np.isin(self.cells, ids)

    def inset_mask(self, room_type: str, inset: float = INSET) -> np.ndarray:
        """Room cells of ``room_type`` whose center lies at least ``inset`` m inside the room."""
        key = ("inset", room_type, inset)
        if key not in self._caches:
            mask = np.zeros(self.shape, dtype=bool)
            res = self.resolution
            for room in self.rooms_of_type(room_type):
                x0, y0, x1, y1 = room.bounds
                rows = np.arange(y0, y1)
                cols = np.arange(x0, x1)
                cy = (rows + 0.5) * res
                cx = (cols + 0.5) * res
                dy = np.minimum(cy - y0 * res, y1 * res - cy)
                dx = np.minimum(cx - x0 * res, x1 * res - cx)
                depth = np.minimum(dy[:, None], dx[None, :])
                sub = (depth >= inset - 1e-9) & (self.cells[y0:y1, x0:x1] == room.id)
                mask[y0:y1, x0:x1] |= sub
            mask.setflags(write=False)
            self._caches[key] = mask
        return self._caches[key]

    def point_inset_in(self, point, room_type: str, inset: float = INSET) -> bool:
        """True when the cell containing ``point`` is an inset cell of a ``room_type`` room."""
        row, col = self.cell_of(point)
        return self.in_bounds(row, col) and bool(self.inset_mask(room_type, inset)[row, col])

    @cached_property
    def _adjacency(self):
        return _build_adjacency(self.navigable)


def _validate(grid: SemanticGrid) -> None:
    cells = grid.cells
    if not grid.resolution > 0 or not math.isfinite(grid.resolution):
        raise ValidationError(f"resolution must be positive, got {grid.resolution}")
    if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
        raise ValidationError(f"cells must be a non-empty 2-D array, got shape {cells.shape}")
    n = len(grid.rooms)
    bad = np.argwhere((cells < OUTSIDE) | (cells >= n))
    if len(bad):
        raise ValidationError(f"invalid cell code {int(cells[tuple(bad[0])])}", tuple(int(v) for v in bad[0]))
    h, w = cells.shape
    for i, room in enumerate(grid.rooms):
        if room.id != i:
            raise ValidationError(f"room at position {i} has id {room.id}")
        room_type_index(room.room_type)
        x0, y0, x1, y1 = room.bounds
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise ValidationError(f"room {i} bounds {room.bounds} fall outside the {w}x{h} grid")
        if room.area < 4:
            raise ValidationError(f"room {i} area {room.area} is below 4 cells")
    for i, a in enumerate(grid.rooms):
        for b in grid.rooms[i + 1:]:
            if _rects_overlap(a.bounds, b.bounds):
                raise ValidationError(f"rooms {a.id} and {b.id} overlap")
    if n:
        inside = np.zeros(cells.shape, dtype=bool)
        for room in grid.rooms:
            x0, y0, x1, y1 = room.bounds
            inside[y0:y1, x0:x1] |= cells[y0:y1, x0:x1] == room.id
        stray = np.argwhere((cells >= 0) & ~inside)
        if len(stray):
            r, c = (int(v) for v in stray[0])
            raise ValidationError(f"cell labelled room {int(cells[r, c])} lies outside its bounds", (r, c))
    if not (cells >= INTERIOR).any():
        raise ValidationError("grid has no navigable cell")


def _rects_overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


# --------------------------------------------------------------------------
# geodesics

_STRAIGHT = ((0, 1), (0, -1), (1, 0), (-1, 0))
_DIAGONAL = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _build_adjacency(nav: np.ndarray) -> list:
    """Per flat cell index, a list of ``(neighbor, is_diagonal)``.

    Diagonal moves require both orthogonal cells to be navigable (no corner cutting).
    """
    h, w = nav.shape
    adj = [() for _ in range(h * w)]
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = nav

    def shifted(dr, dc):
        return pad[1 + dr:h + 1 + dr, 1 + dc:w + 1 + dc]

    moves = []
    for dr, dc in _STRAIGHT:
        moves.append((dr, dc, False, nav & shifted(dr, dc)))
    for dr, dc in _DIAGONAL:
        ok = nav & shifted(dr, dc) & shifted(dr, 0) & shifted(0, dc)
        moves.append((dr, dc, True, ok))
    lists = {}
    for dr, dc, diag, ok in moves:
        for r, c in zip(*np.nonzero(ok)):
            u = int(r) * w + int(c)
            lists.setdefault(u, []).append(((int(r) + dr) * w + int(c) + dc, diag))
    for u, lst in lists.items():
        lst.sort()
        adj[u] = tuple(lst)
    return adj


def _dijkstra(adj, n: int, sources) -> tuple[np.ndarray, np.ndarray]:
    """Multi-source octile Dijkstra in step units.

    Path lengths are carried as exact (straight, diagonal) step counts and
    compared through ``straight + diagonal * sqrt(2)``, so equal-length paths
    yield bit-identical values regardless of expansion order. Among equally
    near sources the lowest flat index wins.
    """
    inf = math.inf
    key = [inf] * n
    cnt_s = [0] * n
    cnt_d = [0] * n
    origin = [-1] * n
    done = bytearray(n)
    heap = []
    for s in sorted(set(sources)):
        key[s] = 0.0
        origin[s] = s
        heap.append((0.0, s, s))
    heapq.heapify(heap)
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        _, o, u = pop(heap)
        if done[u]:
            continue
        done[u] = 1
        su, du = cnt_s[u], cnt_d[u]
        for v, diag in adj[u]:
            if done[v]:
                continue
            if diag:
                s_, d_ = su, du + 1
            else:
                s_, d_ = su + 1, du
            nk = s_ + d_ * SQRT2
            kv = key[v]
            if nk < kv or (nk == kv and o < origin[v]):
                key[v] = nk
                cnt_s[v] = s_
                cnt_d[v] = d_
                origin[v] = o
                push(heap, (nk, o, v))
    return np.asarray(key, dtype=float), np.asarray(origin, dtype=np.int64)


def _require_navigable(grid: SemanticGrid, point) -> tuple[int, int]:
    cell = grid.cell_of(point)
    if not grid.is_navigable(cell):
        raise DomainError(f"point {tuple(point)} is not on a navigable cell")
    return cell


def geodesic_field(grid: SemanticGrid, source) -> np.ndarray:
    """Geodesic distance (m) from the cell containing ``source`` to every cell.

    Non-navigable and unreachable cells hold ``inf``.
    """
    row, col = _require_navigable(grid, source)
    fields = grid._caches.setdefault("fields", {})
    cached = fields.get((row, col))
    if cached is None:
        units, _ = _dijkstra(grid._adjacency, grid.width * grid.height, [row * grid.width + col])
        cached = (units * grid.resolution).reshape(grid.shape)
        cached.setflags(write=False)
        if len(fields) >= 256:
            fields.clear()
        fields[(row, col)] = cached
    return cached


def geodesic_distance(grid: SemanticGrid, a, b) -> float:
    """Shortest 8-connected path length (m) between two navigable points; ``inf`` if unreachable."""
    _require_navigable(grid, b)
    row, col = grid.cell_of(b)
    return float(geodesic_field(grid, a)[row, col])


def nearest_source_field(grid: SemanticGrid, source_mask: np.ndarray):
    """Distance to the nearest source cell and that cell's flat index, per cell.

    Ties between equally distant sources resolve to the lowest ``(row, col)``.
    """
    sources = np.flatnonzero(source_mask & grid.navigable)
    units, origin = _dijkstra(grid._adjacency, grid.width * grid.height, sources.tolist())
    return (units * grid.resolution).reshape(grid.shape), origin.reshape(grid.shape)


def target_field(grid: SemanticGrid, room_type: str):
    """Cached :func:`nearest_source_field` over the inset cells of ``room_type`` rooms."""
    key = ("target", room_type)
    if key not in grid._caches:
        dist, origin = nearest_source_field(grid, grid.inset_mask(room_type))
        dist.setflags(write=False)
        origin.setflags(write=False)
        grid._caches[key] = (dist, origin)
    return grid._caches[key]


def connected_navigable(grid: SemanticGrid) -> bool:
    """True when all navigable cells form one 8-connected component."""
    nav = np.flatnonzero(grid.navigable.ravel())
    units, _ = _dijkstra(grid._adjacency, grid.width * grid.height, [int(nav[0])])
    return bool(np.isfinite(units[nav]).all())


# --------------------------------------------------------------------------
# layout documents

_RUN = re.compile(r"(\d+)(O|I|W|R\d+)")


def _code_token(code: int) -> str:
    if code == OUTSIDE:
        return "O"
    if code == WALL:
        return "W"
    if code == INTERIOR:
        return "I"
    return f"R{code}"


def _token_code(tok: str) -> int:
    return {"O": OUTSIDE, "W": WALL, "I": INTERIOR}.get(tok) if tok[0] != "R" else int(tok[1:])


def save_layout(grid: SemanticGrid) -> bytes:
    flat = grid.cells.ravel()
    runs = []
    start = 0
    change = np.flatnonzero(np.diff(flat)) + 1
    for end in list(change) + [len(flat)]:
        runs.append(f"{end - start}{_code_token(int(flat[start]))}")
        start = end
    doc = {
        "version": LAYOUT_VERSION,
        "resolution": grid.resolution,
        "width": grid.width,
        "height": grid.height,
        "rooms": [
            {"id": r.id, "type": r.room_type, "x0": r.bounds[0], "y0": r.bounds[1], "x1": r.bounds[2], "y1": r.bounds[3]}
            for r in grid.rooms
        ],
        "cells": " ".join(runs),
    }
    return (json.dumps(doc, sort_keys=True) + "\n").encode()


def load_layout(data: bytes) -> SemanticGrid:
    try:
        doc = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"layout is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("layout document must be an object")
    missing = {"version", "resolution", "width", "height", "rooms", "cells"} - doc.keys()
    if missing:
        raise ParseError(f"layout missing fields: {sorted(missing)}")
    if doc["version"] != LAYOUT_VERSION:
        raise ParseError(f"unsupported layout version {doc['version']}")
    try:
        width, height = int(doc["width"]), int(doc["height"])
        rooms = tuple(
            RoomInstance(int(r["id"]), str(r["type"]), (int(r["x0"]), int(r["y0"]), int(r["x1"]), int(r["y1"])))
            for r in doc["rooms"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed layout header: {exc}") from None
    text = doc["cells"]
    if not isinstance(text, str):
        raise ParseError("cells must be a run-length string")
    codes = []
    total = 0
    for tok in text.split():
        m = _RUN.fullmatch(tok)
        if not m:
            raise ParseError(f"bad run token {tok!r}")
        count = int(m.group(1))
        codes.append((count, _token_code(m.group(2))))
        total += count
    if total != width * height:
        raise ParseError(f"cell runs cover {total} cells, expected {width * height}")
    flat = np.concatenate([np.full(c, v, dtype=np.int32) for c, v in codes]) if codes else np.zeros(0, np.int32)
    return SemanticGrid(flat.reshape(height, width), rooms, float(doc["resolution"]))


def layout_hash(grid: SemanticGrid) -> str:
    """Short content hash of the layout document; episodes reference houses by it."""
    digest = grid._caches.get("hash")
    if digest is None:
        digest = grid._caches["hash"] = hashlib.sha256(save_layout(grid)).hexdigest()[:16]
    return digest


# --------------------------------------------------------------------------
# procedural generation

SIDES = ("E", "W", "N", "S")  # N is +y


@dataclass(frozen=True)
class AdjacencyRule:
    """Place a new ``b`` room next to an ``a`` room with probability ``p``.

    ``side`` restricts adjacency to one side of ``a`` (``N`` is +y).
    """

    a: str
    b: str
    p: float
    side: str | None = None


DEFAULT_RULES = (
    AdjacencyRule("Kitchen", "DiningRoom", 0.9),
    AdjacencyRule("DiningRoom", "LivingRoom", 0.8),
    AdjacencyRule("Bedroom", "Bathroom", 0.7),
)


@dataclass(frozen=True)
class GenParams:
    rng_seed: int = 0
    house_extent: tuple[float, float] = (14.0, 11.0)
    room_count_range: tuple[int, int] = (4, 7)
    adjacency_rules: tuple[AdjacencyRule, ...] = DEFAULT_RULES
    door_width: float = 0.5
    resolution: float = DEFAULT_RESOLUTION
    margin: float = 0.5
    min_room_size: float = 2.5
    split_jitter: float = 0.2
    fill_types: tuple[str, ...] = ("Bedroom", "Bedroom", "Bathroom", "LivingRoom")
    hall_prob: float = 0.3
    max_attempts: int = 200

    def validate(self) -> None:
        ex, ey = self.house_extent
        if not (ex > 0 and ey > 0):
            raise ValidationError(f"house_extent must be positive, got {self.house_extent}")
        lo, hi = self.room_count_range
        if not (1 <= lo <= hi):
            raise ValidationError(f"bad room_count_range {self.room_count_range}")
        if not (self.resolution > 0 and self.door_width > 0 and self.min_room_size > 0 and self.margin >= 0):
            raise ValidationError("resolution, door_width and min_room_size must be positive")
        if not 0 <= self.split_jitter <= 0.5:
            raise ValidationError("split_jitter must lie in [0, 0.5]")
        for rule in self.adjacency_rules:
            if not 0.0 <= rule.p <= 1.0:
                raise ValidationError(f"rule probability {rule.p} outside [0, 1]")
            room_type_index(rule.a)
            room_type_index(rule.b)
            if rule.side is not None and rule.side not in SIDES:
                raise ValidationError(f"unknown side {rule.side!r}")
        for t in self.fill_types:
            room_type_index(t)


def _side_adjacent(a, b, side: str | None) -> bool:
    """Leaves ``a`` and ``b`` share a one-cell wall, with ``b`` on ``side`` of ``a``."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    yover = min(ay1, by1) - max(ay0, by0) >= 1
    xover = min(ax1, bx1) - max(ax0, bx0) >= 1
    checks = {
        "E": bx0 == ax1 + 1 and yover,
        "W": ax0 == bx1 + 1 and yover,
        "N": by0 == ay1 + 1 and xover,
        "S": ay0 == by1 + 1 and xover,
    }
    if side is None:
        return any(checks.values())
    return checks[side]


def rooms_adjacent(a: RoomInstance, b: RoomInstance, side: str | None = None) -> bool:
    return _side_adjacent(a.bounds, b.bounds, side)


def _bsp(rng, rect, n_leaves, minc, jitter):
    leaves = [rect]
    splits = []  # (orientation, coordinate, span0, span1)
    while len(leaves) < n_leaves:
        best = None
        for i, (x0, y0, x1, y1) in enumerate(leaves):
            w, h = x1 - x0, y1 - y0
            if max(w, h) >= 2 * minc + 1 and (best is None or w * h > best[1]):
                best = (i, w * h)
        if best is None:
            break
        i = best[0]
        x0, y0, x1, y1 = leaves.pop(i)
        w, h = x1 - x0, y1 - y0
        if w > h:
            vertical = True
        elif h > w:
            vertical = False
        else:
            vertical = bool(rng.integers(2))
        if vertical and w < 2 * minc + 1:
            vertical = False
        if not vertical and h < 2 * minc + 1:
            vertical = True
        length = w if vertical else h
        lo, hi = minc, length - 1 - minc
        center = (length - 1) / 2
        s = int(round(center + rng.uniform(-jitter, jitter) * length)) if jitter > 0 else int(math.floor(center))
        s = min(max(s, lo), hi)
        if vertical:
            a, b = (x0, y0, x0 + s, y1), (x0 + s + 1, y0, x1, y1)
            splits.append(("v", x0 + s, y0, y1))
        else:
            a, b = (x0, y0, x1, y0 + s), (x0, y0 + s + 1, x1, y1)
            splits.append(("h", y0 + s, x0, x1))
        leaves[i:i] = [a, b]
    return leaves, splits


def _assign(rng, leaves, n_rooms, rules, outcomes, fill_types):
    """Room type per leaf index (None for halls), or None when infeasible."""
    types = [None] * len(leaves)
    budget = n_rooms

    def free():
        return [i for i, t in enumerate(types) if t is None]

    for rule, adjacent in zip(rules, outcomes):
        if budget == 0:
            break
        b_new = rule.a == rule.b or rule.b not in types
        a_idx = [i for i, t in enumerate(types) if t == rule.a]

        def candidates(anchors):
            out = []
            for i in free():
                if i in anchors:
                    continue
                touching = any(_side_adjacent(leaves[a], leaves[i], rule.side) for a in anchors)
                if touching == adjacent:
                    out.append(i)
            return out

        if not a_idx:
            place_b = b_new and budget >= 2
            options = [i for i in free() if not place_b or candidates([i])]
            if not options and place_b and not adjacent:
                # nowhere keeps B away from A: leave B out, which still honors the outcome
                place_b, options = False, free()
            if not options:
                return None
            i = options[int(rng.integers(len(options)))]
            types[i] = rule.a
            a_idx = [i]
            budget -= 1
        else:
            place_b = b_new and budget >= 1
        if not place_b:
            continue
        cand = candidates(a_idx)
        if not cand and not adjacent:
            continue
        if not cand:
            return None
        j = cand[int(rng.integers(len(cand)))]
        types[j] = rule.b
        budget -= 1
    rest = free()
    order = rng.permutation(len(rest))
    for k in order[:budget]:
        types[rest[int(k)]] = fill_types[int(rng.integers(len(fill_types)))]
    return types


def generate_house(params: GenParams = GenParams()) -> SemanticGrid:
    """Binary-space-partition house honoring the adjacency rules; deterministic in ``rng_seed``."""
    params.validate()
    rng = np.random.default_rng(params.rng_seed)
    res = params.resolution
    iw = int(round(params.house_extent[0] / res))
    ih = int(round(params.house_extent[1] / res))
    m = int(round(params.margin / res))
    minc = max(2, int(math.ceil(params.min_room_size / res - 1e-9)))
    dw = max(2, int(round(params.door_width / res)))
    lo, hi = params.room_count_range
    if min(iw, ih) < minc:
        raise GenerationError("house extent is smaller than one room")
    width, height = iw + 2 + 2 * m, ih + 2 + 2 * m
    rect = (m + 1, m + 1, m + 1 + iw, m + 1 + ih)
    n_rooms = int(rng.integers(lo, hi + 1))
    n_halls = 1 if rng.random() < params.hall_prob else 0
    # decide each rule's outcome up front so layout retries do not bias the realized rate
    outcomes = [bool(rng.random() < r.p) for r in params.adjacency_rules]

    for _ in range(params.max_attempts):
        leaves, splits = _bsp(rng, rect, n_rooms + n_halls, minc, params.split_jitter)
        if len(leaves) < lo:
            raise GenerationError(f"extent {params.house_extent} fits only {len(leaves)} rooms, need {lo}")
        rooms_here = min(n_rooms, len(leaves))
        types = _assign(rng, leaves, rooms_here, params.adjacency_rules, outcomes, params.fill_types)
        if types is None:
            continue
        cells = np.full((height, width), OUTSIDE, dtype=np.int32)
        cells[m:m + ih + 2, m:m + iw + 2] = WALL
        order = sorted((i for i, t in enumerate(types) if t is not None), key=lambda i: (leaves[i][1], leaves[i][0]))
        rooms = []
        for rid, i in enumerate(order):
            x0, y0, x1, y1 = leaves[i]
            rooms.append(RoomInstance(rid, types[i], leaves[i]))
            cells[y0:y1, x0:x1] = rid
        for i, t in enumerate(types):
            if t is None:
                x0, y0, x1, y1 = leaves[i]
                cells[y0:y1, x0:x1] = INTERIOR
        if not _place_doors(rng, cells, splits, dw):
            continue
        grid = SemanticGrid(cells, tuple(rooms), res)
        if connected_navigable(grid):
            return grid
    raise GenerationError(f"no feasible layout after {params.max_attempts} attempts")


def _place_doors(rng, cells, splits, dw) -> bool:
    for orient, coord, s0, s1 in splits:
        options = []
        for start in range(s0, s1 - dw + 1):
            ok = True
            for k in range(start, start + dw):
                if orient == "v":
                    wall, a, b = cells[k, coord], cells[k, coord - 1], cells[k, coord + 1]
                else:
                    wall, a, b = cells[coord, k], cells[coord - 1, k], cells[coord + 1, k]
                if wall != WALL or a < INTERIOR or b < INTERIOR:
                    ok = False
                    break
            if ok:
                options.append(start)
        if not options:
            return False
        start = options[int(rng.integers(len(options)))]
        for k in range(start, start + dw):
            if orient == "v":
                cells[k, coord] = INTERIOR
            else:
                cells[coord, k] = INTERIOR
    return True


def mask_geodesic_field(mask: np.ndarray, cell, resolution: float = DEFAULT_RESOLUTION) -> np.ndarray:
    """Exact geodesic distances (m) from ``cell`` through an arbitrary free-cell mask."""
    mask = np.asarray(mask, dtype=bool)
    row, col = cell
    if not mask[row, col]:
        raise DomainError(f"cell {tuple(cell)} is not free in the mask")
    h, w = mask.shape
    units, _ = _dijkstra(_build_adjacency(mask), h * w, [row * w + col])
    return (units * resolution).reshape(mask.shape)

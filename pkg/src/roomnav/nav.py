"""Point selection, point-goal control, rewards, and the episode loop for every agent variant."""

from __future__ import annotations

import io
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as sparse_dijkstra

from .belief import BeliefStack, FusionParams, gt_stack, init_beliefs, update_beliefs
from .episodes import Episode
from .errors import NoCandidateError, NoFrontierError, ParseError, ValidationError
from .metrics import is_success, spl as spl_of
from .priors import PriorModel
from .sim import FORWARD_STEP, MOVE_ACTIONS, TURN_STEP, Action, Pose, SensorParams, first_block, forward_target, observe, step, unit_vector
from .world import OUTSIDE, SQRT2, WALL, SemanticGrid, layout_hash, room_type_index, target_field

VARIANTS = ("random", "no_maps", "ours", "gt_maps", "gt_point")
BELIEF_VARIANTS = ("no_maps", "ours")
BEARING_TOLERANCE = 5.0
LOOKAHEAD = 24
STEP_PENALTY = 0.01
TERMINAL_REWARD = 2.5


@dataclass(frozen=True)
class AgentConfig:
    k: int = 6
    K: int = 60
    N: int = 500
    stop_radius: float = 0.2
    random_stop: int = 60
    sensor: SensorParams = SensorParams()
    fusion: FusionParams = FusionParams()

    def __post_init__(self):
        if not (0 < self.k <= self.K <= self.N):
            raise ValidationError(f"need 0 < k <= K <= N, got k={self.k} K={self.K} N={self.N}")
        if self.stop_radius <= 0:
            raise ValidationError("stop_radius must be positive")


@dataclass(frozen=True)
class PointPrediction:
    point: tuple[float, float]
    cell: tuple[int, int]
    relative_goal: tuple[float, float]  # (distance m, bearing deg, left positive)
    confidence: float
    frozen: bool = False


def _wrap(angle: float) -> float:
    """Angle in degrees folded to (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def relative_goal(pose: Pose, point) -> tuple[float, float]:
    dx, dy = point[0] - pose.x, point[1] - pose.y
    dist = math.hypot(dx, dy)
    if dist == 0:
        return 0.0, 0.0
    return dist, _wrap(math.degrees(math.atan2(dy, dx)) - pose.heading)


def eroded(scores: np.ndarray) -> np.ndarray:
    """Minimum over each cell's 3x3 neighborhood; cells beyond the grid count as 0."""
    return ndimage.minimum_filter(scores, size=3, mode="constant", cval=0.0)


def select_point(stack: BeliefStack, pose: Pose, target_type: str, frozen: bool = False) -> PointPrediction:
    """Believed-navigable cell with the highest in-room belief for ``target_type``.

    Ties go to the higher eroded score (whole neighborhood in the room), then
    to the smaller geodesic distance from ``pose`` through believed-navigable
    cells, then to the lowest ``(row, col)``.
    """
    p_in = stack.probs[room_type_index(target_type)][..., 2]
    cand = stack.believed_navigable()
    scores = np.where(cand, p_in, -np.inf)
    best = scores.max()
    if not best > 0:
        raise NoCandidateError(f"no believed {target_type} cell")
    tied = scores == best
    if np.count_nonzero(tied) > 1:
        er = np.where(tied, eroded(p_in), -np.inf)
        tied &= er == er.max()
    if np.count_nonzero(tied) > 1:
        res = stack.resolution
        here = (int(math.floor(pose.y / res)), int(math.floor(pose.x / res)))
        h, w = cand.shape
        if 0 <= here[0] < h and 0 <= here[1] < w and cand[here]:
            # distinct octile lengths on these grids differ by far more than the tolerance
            geo = sparse_dijkstra(mask_graph(cand), indices=here[0] * w + here[1]).reshape(h, w)
            geo = np.where(tied, geo, np.inf)
            if np.isfinite(geo).any():
                tied &= geo <= geo.min() + 1e-9
    cell = tuple(int(v) for v in np.argwhere(tied)[0])
    point = ((cell[1] + 0.5) * stack.resolution, (cell[0] + 0.5) * stack.resolution)
    return PointPrediction(point, cell, relative_goal(pose, point), float(p_in[cell]), frozen)


def frontier_cells(stack: BeliefStack) -> np.ndarray:
    free = stack.observed_mask & ~stack.blocked
    near = ndimage.binary_dilation(free, structure=ndimage.generate_binary_structure(2, 1))
    return near & ~stack.observed_mask & stack.believed_navigable()


def frontier_fallback(stack: BeliefStack, pose: Pose, exclude=()) -> tuple[float, float]:
    """Center of the frontier cell nearest to ``pose`` (Euclidean, ties lexicographic).

    ``exclude`` lists cell-center points to pass over.
    """
    mask = frontier_cells(stack)
    res = stack.resolution
    for x, y in exclude:
        mask[int(math.floor(y / res)), int(math.floor(x / res))] = False
    cells = np.argwhere(mask)
    if len(cells) == 0:
        raise NoFrontierError("no frontier cells")
    cx = (cells[:, 1] + 0.5) * res
    cy = (cells[:, 0] + 0.5) * res
    d2 = (cx - pose.x) ** 2 + (cy - pose.y) ** 2
    i = int(np.flatnonzero(d2 == d2.min())[0])
    return (float(cx[i]), float(cy[i]))


# --------------------------------------------------------------------------
# point-goal controller

_MOVES = ((0, 1, 1.0), (0, -1, 1.0), (1, 0, 1.0), (-1, 0, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


def mask_graph(free: np.ndarray) -> csr_matrix:
    """8-connected graph over ``free`` cells in step units, without corner cutting."""
    h, w = free.shape
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = free

    def shifted(dr, dc):
        return pad[1 + dr:h + 1 + dr, 1 + dc:w + 1 + dc]

    idx = np.arange(h * w).reshape(h, w)
    src, dst, cost = [], [], []
    for dr, dc, c in _MOVES:
        ok = free & shifted(dr, dc)
        if dr and dc:
            ok &= shifted(dr, 0) & shifted(0, dc)
        s = idx[ok]
        src.append(s)
        dst.append(s + dr * w + dc)
        cost.append(np.full(s.size, c))
    return csr_matrix((np.concatenate(cost), (np.concatenate(src), np.concatenate(dst))), shape=(h * w, h * w))


class PointNavController:
    """Geodesic follower over known-free plus optimistically free unknown cells.

    ``blocked`` accumulates observed walls/outside and cells where a forward
    move collided; everything else is assumed free.
    """

    def __init__(self, shape, resolution: float):
        self.shape = tuple(shape)
        self.resolution = resolution
        self.blocked = np.zeros(self.shape, dtype=bool)
        self._version = 0
        self._graph = None
        self._fields = {}
        self.last_reason = ""

    def note_blocked(self, cells) -> None:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if len(cells) == 0:
            return
        fresh = ~self.blocked[cells[:, 0], cells[:, 1]]
        if fresh.any():
            self.blocked[cells[fresh, 0], cells[fresh, 1]] = True
            self._version += 1
            self._graph = None
            self._fields = {}

    def note_observation(self, obs) -> None:
        codes = np.asarray(obs.labels)
        self.note_blocked(np.asarray(obs.cells).reshape(-1, 2)[(codes == WALL) | (codes == OUTSIDE)])

    def field(self, goal_cell) -> tuple[np.ndarray, np.ndarray]:
        f = self._fields.get(goal_cell)
        if f is None:
            if self._graph is None:
                self._graph = mask_graph(~self.blocked)
            h, w = self.shape
            dist, pred = sparse_dijkstra(self._graph, directed=True, indices=goal_cell[0] * w + goal_cell[1],
                                         return_predecessors=True)
            f = (dist.reshape(self.shape), pred)
            self._fields[goal_cell] = f
        return f

    def _cell(self, x, y):
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def _free(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1] and not self.blocked[r, c]

    def act(self, pose: Pose, goal) -> Action:
        """Next action toward ``goal``; Stop on arrival (goal cell) or when no path exists."""
        here = self._cell(pose.x, pose.y)
        target = self._cell(*goal)
        if here == target:
            self.last_reason = "arrived"
            return Action.STOP
        if not self._free(target):
            self.last_reason = "unreachable"
            return Action.STOP
        dist, pred = self.field(target)
        if not math.isfinite(dist[here]):
            self.last_reason = "unreachable"
            return Action.STOP
        self.last_reason = ""
        w = self.shape[1]
        path = []
        node = here[0] * w + here[1]
        goal_idx = target[0] * w + target[1]
        while node != goal_idx and len(path) < LOOKAHEAD:
            node = int(pred[node])
            path.append(node)
        res = self.resolution
        pts = [((n % w + 0.5), (n // w + 0.5)) for n in path]
        if path[-1] == goal_idx:
            pts[-1] = (goal[0] / res, goal[1] / res)
        origin = (pose.x / res, pose.y / res)
        t = first_block(self.blocked, origin, np.array(pts), include_end=True)
        clear = ~np.isfinite(t)
        k = 0
        while k + 1 < len(pts) and clear[k + 1] and clear[k]:
            k += 1
        wx, wy = pts[k]
        bearing = math.degrees(math.atan2(wy - origin[1], wx - origin[0]))
        err = _wrap(bearing - pose.heading)
        if abs(err) <= BEARING_TOLERANCE and self._forward_ok(pose, pose.heading, dist, here):
            return Action.FORWARD
        best = None
        for j in range(-18, 19):
            h = pose.heading + TURN_STEP * j
            if not self._forward_ok(pose, h, dist, here):
                continue
            key = (abs(_wrap(bearing - h)), abs(j), -j)
            if best is None or key < best[0]:
                best = (key, j)
        if best is None:
            j = 1 if err >= 0 else -1
        else:
            j = best[1]
        if j == 0:
            return Action.FORWARD
        return Action.TURN_LEFT if j > 0 else Action.TURN_RIGHT

    def _forward_ok(self, pose: Pose, heading: float, dist: np.ndarray, here) -> bool:
        ux, uy = unit_vector(heading)
        cell = self._cell(pose.x + FORWARD_STEP * ux, pose.y + FORWARD_STEP * uy)
        return self._free(cell) and dist[cell] <= dist[here]


def pointnav_step(grid: SemanticGrid, pose: Pose, goal, controller: PointNavController | None = None) -> Action:
    """One controller decision; without a controller, plans on the grid's true free space."""
    if controller is None:
        controller = PointNavController(grid.shape, grid.resolution)
        controller.note_blocked(np.argwhere(~grid.navigable))
    return controller.act(pose, goal)


# --------------------------------------------------------------------------
# rewards


def compute_reward(prev_d: float, cur_d: float, terminal: bool, success: bool, spl: float,
                   variant: str = "roomnav") -> float:
    """Shaped step reward, or the terminal reward when ``terminal``."""
    if prev_d < 0 or cur_d < 0:
        raise ValidationError("distances must be non-negative")
    if variant not in ("pointnav", "roomnav"):
        raise ValidationError(f"unknown reward variant {variant!r}")
    if terminal:
        if variant == "pointnav":
            return TERMINAL_REWARD if success else 0.0
        return TERMINAL_REWARD * spl
    return -(cur_d - prev_d) - STEP_PENALTY


# --------------------------------------------------------------------------
# trajectory logs

LOG_COLUMNS = ("t", "x", "y", "heading", "action", "collided", "pred_x", "pred_y", "frozen", "reward")


@dataclass(frozen=True)
class StepRecord:
    t: int
    x: float
    y: float
    heading: float
    action: Action
    collided: bool
    pred_x: float
    pred_y: float
    frozen: bool
    reward: float


@dataclass
class TrajectoryLog:
    house_id: str
    house_hash: str
    variant: str
    target_type: str
    steps: list = field(default_factory=list)
    prediction_steps: tuple = ()
    success: bool = False
    spl: float = 0.0
    path_len: float = 0.0
    l: float = 0.0
    episode_index: int = -1

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"# house_id={self.house_id}\n# house_hash={self.house_hash}\n")
        out.write(f"# variant={self.variant}\n# target={self.target_type}\n")
        out.write(f"# episode={self.episode_index}\n")
        out.write(f"# predictions={' '.join(map(str, self.prediction_steps))}\n")
        out.write(",".join(LOG_COLUMNS) + "\n")
        for s in self.steps:
            out.write(
                f"{s.t},{s.x!r},{s.y!r},{s.heading!r},{s.action.value},{int(s.collided)},"
                f"{s.pred_x!r},{s.pred_y!r},{int(s.frozen)},{s.reward!r}\n"
            )
        out.write(f"# footer success={int(self.success)} spl={self.spl!r} path_len={self.path_len!r} l={self.l!r}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "TrajectoryLog":
        meta, footer, steps = {}, None, []
        header_seen = False
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            if line.startswith("# footer "):
                footer = dict(kv.split("=", 1) for kv in line[len("# footer "):].split())
            elif line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif not header_seen:
                if tuple(line.split(",")) != LOG_COLUMNS:
                    raise ParseError(f"log line {lineno}: unexpected columns")
                header_seen = True
            else:
                parts = line.split(",")
                if len(parts) != len(LOG_COLUMNS):
                    raise ParseError(f"log line {lineno}: expected {len(LOG_COLUMNS)} fields")
                try:
                    steps.append(StepRecord(int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
                                            Action(parts[4]), bool(int(parts[5])), float(parts[6]), float(parts[7]),
                                            bool(int(parts[8])), float(parts[9])))
                except ValueError as exc:
                    raise ParseError(f"log line {lineno}: {exc}") from None
        if footer is None or not header_seen:
            raise ParseError("log is truncated")
        try:
            preds = tuple(int(v) for v in meta.get("predictions", "").split())
            return cls(meta["house_id"], meta["house_hash"], meta["variant"], meta["target"], steps, preds,
                       bool(int(footer["success"])), float(footer["spl"]), float(footer["path_len"]),
                       float(footer["l"]), int(meta.get("episode", -1)))
        except (KeyError, ValueError) as exc:
            raise ParseError(f"log header incomplete: {exc}") from None

    @property
    def final_action(self) -> Action | None:
        return self.steps[-1].action if self.steps else None

    @property
    def final_prediction(self):
        for s in reversed(self.steps):
            if not math.isnan(s.pred_x):
                return (s.pred_x, s.pred_y)
        return None


# --------------------------------------------------------------------------
# episode loop


def _episode_seed(ep: Episode) -> int:
    key = f"{ep.house_id}|{ep.start.x!r}|{ep.start.y!r}|{ep.start.heading!r}|{ep.target_type}"
    return zlib.crc32(key.encode())


def run_agent(grid: SemanticGrid, episode: Episode, prior: PriorModel | None = None,
              config: AgentConfig = AgentConfig(), variant: str = "ours", reward_variant: str = "roomnav",
              trace: list | None = None) -> TrajectoryLog:
    """Run one episode. ``trace``, when given, receives ``(t, PointPrediction)`` for every prediction."""
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    if variant in BELIEF_VARIANTS and prior is None:
        raise ValidationError(f"variant {variant} needs a prior model")
    digest = layout_hash(grid)
    if episode.house_hash and episode.house_hash != digest:
        raise ValidationError(f"episode house hash {episode.house_hash} does not match the grid")
    tr = episode.target_type
    dist_field, _ = target_field(grid, tr)

    res = grid.resolution
    n_steps = min(config.N, episode.max_steps)
    perception = init_beliefs(grid.shape, prior if variant in BELIEF_VARIANTS else None, config.fusion, res)
    truth = gt_stack(grid) if variant in ("gt_maps", "gt_point") else None
    frozen_prior = perception if variant == "no_maps" else None
    controller = PointNavController(grid.shape, res)
    if truth is not None:
        # ground-truth variants know the full free space, not just what was seen
        controller.note_blocked(np.argwhere(~grid.navigable))
    rng = np.random.default_rng(_episode_seed(episode)) if variant == "random" else None

    log = TrajectoryLog(episode.house_id, digest, variant, tr, l=episode.geodesic_len)
    pose = episode.start
    state = _Pursuit()
    predictions = []
    path_len = 0.0
    cell_d = lambda p: float(dist_field[grid.cell_of(p.point)])  # noqa: E731
    prev_d = cell_d(pose)
    r_idx = room_type_index(tr)

    for t in range(n_steps):
        obs = observe(grid, pose, config.sensor, origin=episode.start, with_ranges=False)
        here = grid.cell_of(pose.point)
        perception = update_beliefs(perception, obs, grid, [here])
        controller.note_observation(obs)
        frozen = t >= config.K

        if variant == "random":
            action = Action.STOP if t == config.random_stop else MOVE_ACTIONS[int(rng.integers(3))]
        else:
            if t % config.k == 0 and t < config.K:
                pred = _predict(variant, episode, pose, perception, frozen_prior, truth)
                predictions.append(t)
                if pred is not None:
                    state.retarget(pred.point)
                    if trace is not None:
                        trace.append((t, pred))
            action = _decide(pose, state, t, config, controller,
                             truth if truth is not None else perception, perception, r_idx)
        new_pose, collided = step(grid, pose, action)
        if collided:
            controller.note_blocked([forward_target(grid, pose)])
        if action is Action.FORWARD and not collided:
            path_len += FORWARD_STEP
        cur_d = cell_d(new_pose)
        reward = compute_reward(prev_d, cur_d, False, False, 0.0, reward_variant)
        px, py = state.point if state.point is not None else (math.nan, math.nan)
        log.steps.append(StepRecord(t, pose.x, pose.y, pose.heading, action, collided, px, py, frozen, reward))
        prev_d = cur_d
        pose = new_pose
        if action is Action.STOP:
            break

    success = is_success(grid, pose.point, tr, log.final_action is Action.STOP)
    score = spl_of(success, episode.geodesic_len, path_len)
    if log.steps:
        last = log.steps[-1]
        terminal = compute_reward(0.0, 0.0, True, success, score, reward_variant)
        log.steps[-1] = StepRecord(last.t, last.x, last.y, last.heading, last.action, last.collided,
                                   last.pred_x, last.pred_y, last.frozen, last.reward + terminal)
    log.prediction_steps = tuple(predictions)
    log.success, log.spl, log.path_len = success, score, path_len
    return log


def _predict(variant, episode, pose, perception, frozen_prior, truth) -> PointPrediction | None:
    if variant == "gt_point":
        point = episode.gt_point
        cell = (int(math.floor(point[1] / perception.resolution)), int(math.floor(point[0] / perception.resolution)))
        return PointPrediction(point, cell, relative_goal(pose, point), 1.0)
    stack = {"ours": perception, "no_maps": frozen_prior, "gt_maps": truth}[variant]
    try:
        return select_point(stack, pose, episode.target_type)
    except NoCandidateError:
        try:
            point = frontier_fallback(perception, pose)
        except NoFrontierError:
            return None
        res = perception.resolution
        cell = (int(math.floor(point[1] / res)), int(math.floor(point[0] / res)))
        return PointPrediction(point, cell, relative_goal(pose, point), 0.0)


def stop_check(stack: BeliefStack, pose: Pose, point, room: int, radius: float) -> bool:
    """Near the point and the agent's own neighborhood believed inside the target room."""
    if point is None or math.hypot(pose.x - point[0], pose.y - point[1]) > radius:
        return False
    res = stack.resolution
    r, c = int(math.floor(pose.y / res)), int(math.floor(pose.x / res))
    p_in = stack.probs[room][..., 2]
    h, w = p_in.shape
    window = np.zeros((3, 3))
    r0, c0 = max(r - 1, 0), max(c - 1, 0)
    sub = p_in[r0:min(r + 2, h), c0:min(c + 2, w)]
    window[r0 - (r - 1):r0 - (r - 1) + sub.shape[0], c0 - (c - 1):c0 - (c - 1) + sub.shape[1]] = sub
    return float(window.min()) > 0.5


@dataclass
class _Pursuit:
    """Current navigation goal: the predicted point, or a frontier while exploring."""

    point: tuple | None = None
    goal: tuple | None = None
    skipped: set = field(default_factory=set)

    def retarget(self, point) -> None:
        self.point = point
        self.goal = point
        self.skipped = set()


def _decide(pose, state: _Pursuit, t, config, controller, stop_stack, frontier_stack, room) -> Action:
    if state.point is None:
        return Action.STOP
    if stop_check(stop_stack, pose, state.point, room, config.stop_radius):
        return Action.STOP
    action = controller.act(pose, state.goal)
    # reached or cannot reach the goal: explore frontiers until the next prediction
    for _ in range(8):
        if action is not Action.STOP or t >= config.K:
            break
        if controller.last_reason == "unreachable":
            state.skipped.add(state.goal)
        try:
            state.goal = frontier_fallback(frontier_stack, pose, exclude=state.skipped)
        except NoFrontierError:
            return Action.STOP
        action = controller.act(pose, state.goal)
    return action

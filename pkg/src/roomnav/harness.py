"""Scoring, batch evaluation and the baseline ladder."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .episodes import Episode
from .errors import ValidationError
from .metrics import is_success, spl as spl_of
from .nav import BELIEF_VARIANTS, VARIANTS, AgentConfig, TrajectoryLog, run_agent
from .sim import FORWARD_STEP, Action, step
from .world import SemanticGrid, layout_hash

CROP_SPAN_M = 26.0


@dataclass(frozen=True)
class EvalRow:
    episode: int
    house_id: str
    variant: str
    success: bool
    spl: float
    path_len: float
    l: float
    steps: int


def score_episode(log: TrajectoryLog, episode: Episode, grid: SemanticGrid, index: int = -1) -> EvalRow:
    """Re-derive success and SPL by replaying the logged actions on ``grid``.

    The log must match the episode's house and target, every logged pose must
    agree with the replay, and the run must end with Stop or at the step cap.
    """
    digest = layout_hash(grid)
    if log.house_hash != digest or (episode.house_hash and episode.house_hash != digest):
        raise ValidationError("log, episode and grid disagree on the house hash")
    if log.house_id != episode.house_id or log.target_type != episode.target_type:
        raise ValidationError("log does not belong to this episode")
    if not log.steps:
        raise ValidationError("log has no steps")
    if log.final_action is not Action.STOP and len(log.steps) < episode.max_steps:
        raise ValidationError("log ends before Stop or the step cap")
    if len(log.steps) > episode.max_steps:
        raise ValidationError(f"log runs {len(log.steps)} steps, cap is {episode.max_steps}")
    pose = episode.start
    moves = 0
    for i, rec in enumerate(log.steps):
        if rec.t != i or (rec.x, rec.y, rec.heading) != (pose.x, pose.y, pose.heading):
            raise ValidationError(f"log step {i} does not replay")
        pose, collided = step(grid, pose, rec.action)
        if collided != rec.collided:
            raise ValidationError(f"log step {i} collision flag does not replay")
        if rec.action is Action.FORWARD and not collided:
            moves += 1
    p = FORWARD_STEP * moves
    success = is_success(grid, pose.point, episode.target_type, log.final_action is Action.STOP)
    score = spl_of(success, episode.geodesic_len, p)
    assert 0.0 <= score <= 1.0 and (score == 0.0 or success)
    return EvalRow(index, episode.house_id, log.variant, success, score, p, episode.geodesic_len, len(log.steps))


@dataclass
class EvalTable:
    rows: list
    logs: dict  # (episode index, variant) -> TrajectoryLog

    def summary(self) -> list:
        """``(variant, mean_spl, success_rate, n)`` in ladder order."""
        out = []
        present = {r.variant for r in self.rows}
        for v in [v for v in VARIANTS if v in present] + sorted(present - set(VARIANTS)):
            rows = [r for r in self.rows if r.variant == v]
            spl = math.fsum(r.spl for r in rows) / len(rows)
            succ = sum(r.success for r in rows) / len(rows)
            out.append((v, spl, succ, len(rows)))
        return out

    def mean_spl(self, variant: str) -> float:
        for v, spl, _, _ in self.summary():
            if v == variant:
                return spl
        raise KeyError(variant)

    def to_text(self) -> str:
        lines = [f"{'variant':<10} {'mean_spl':>9} {'success':>9} {'n':>6}"]
        for v, spl, succ, n in self.summary():
            lines.append(f"{v:<10} {spl:>9.4f} {succ:>9.4f} {n:>6d}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("variant", "mean_spl", "success_rate", "n"))
        for v, spl, succ, n in self.summary():
            w.writerow((v, repr(spl), repr(succ), n))
        return buf.getvalue()


def _run_one(args):
    grid, episode, prior, config, variant = args
    return run_agent(grid, episode, prior, config, variant)


def evaluate(episodes, houses: dict, variants=VARIANTS, prior=None, config: AgentConfig = AgentConfig(),
             workers: int = 1) -> EvalTable:
    """Run every variant on every episode and score each log by replay.

    ``houses`` maps house ids to grids. With ``workers > 1`` the runs fan out
    over a process pool; results are identical to the serial order.
    """
    episodes = list(episodes)
    for v in variants:
        if v not in VARIANTS:
            raise ValidationError(f"unknown variant {v!r}")
        if v in BELIEF_VARIANTS and prior is None:
            raise ValidationError(f"variant {v} needs a prior model")
    jobs = []
    for i, ep in enumerate(episodes):
        if ep.house_id not in houses:
            raise ValidationError(f"episode {i} references unknown house {ep.house_id!r}")
        for v in variants:
            jobs.append((i, v, (houses[ep.house_id], ep, prior if v in BELIEF_VARIANTS else None, config, v)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            logs = list(pool.map(_run_one, [j[2] for j in jobs], chunksize=4))
    else:
        logs = [_run_one(j[2]) for j in jobs]
    rows, by_key = [], {}
    for (i, v, _), log in zip(jobs, logs):
        log.episode_index = i
        ep = episodes[i]
        rows.append(score_episode(log, ep, houses[ep.house_id], i))
        by_key[(i, v)] = log
    return EvalTable(rows, by_key)


def point_errors(logs, episodes) -> list:
    """Per-episode Euclidean distance (m) from the final predicted point to the GT point."""
    out = []
    for log, ep in zip(logs, episodes):
        final = log.final_prediction
        if final is None:
            out.append(math.inf)
        else:
            out.append(math.hypot(final[0] - ep.gt_point[0], final[1] - ep.gt_point[1]))
    return out


def point_error(logs, episodes, houses: dict) -> dict:
    """Mean final point error, the same as a percentage of the 26 m crop span, and the out-of-room rate."""
    logs, episodes = list(logs), list(episodes)
    if len(logs) != len(episodes):
        raise ValidationError("need one log per episode")
    if not logs:
        return {"mean_error": math.nan, "error_pct": math.nan, "outside_rate": math.nan, "n": 0}
    errs = point_errors(logs, episodes)
    outside = 0
    for log, ep in zip(logs, episodes):
        final = log.final_prediction
        grid = houses[ep.house_id]
        room = None if final is None else grid.room_at(grid.cell_of(final))
        outside += room is None or room.room_type != ep.target_type
    mean = math.fsum(errs) / len(errs)
    return {"mean_error": mean, "error_pct": 100.0 * mean / CROP_SPAN_M, "outside_rate": outside / len(logs),
            "n": len(logs)}


def ladder_holds(table: EvalTable, order=VARIANTS) -> bool:
    spl = dict((v, s) for v, s, _, _ in table.summary())
    vals = [spl[v] for v in order if v in spl]
    return all(a <= b for a, b in zip(vals, vals[1:]))

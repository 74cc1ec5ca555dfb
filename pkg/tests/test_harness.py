import math

import pytest

from conftest import ascii_grid
from roomnav.episodes import Episode, sample_episodes
from roomnav.errors import ValidationError
from roomnav.harness import EvalTable, evaluate, ladder_holds, point_error, score_episode
from roomnav.metrics import spl
from roomnav.nav import StepRecord, TrajectoryLog
from roomnav.sim import Action, Pose, step
from roomnav.world import GenParams, generate_house, layout_hash

# kitchen in columns 1..5, open corridor 6..23, bedroom 24..32; rows 1..4 are inside the house
STRIP = ascii_grid("""
oooooooooooooooooooooooooooooooooo
oKKKKK..................BBBBBBBBBo
oKKKKK..................BBBBBBBBBo
oKKKKK..................BBBBBBBBBo
oKKKKK..................BBBBBBBBBo
oooooooooooooooooooooooooooooooooo
""")
F, L, R, S = Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP


def col_x(col):
    return (col + 0.5) * 0.25


def make_case(start, actions, l, target="Bedroom", max_steps=500, grid=STRIP):
    ep = Episode("strip", start, target, (0.0, 0.0), l, max_steps, layout_hash(grid))
    log = TrajectoryLog("strip", layout_hash(grid), "hand", target, l=l)
    pose = start
    for t, a in enumerate(actions):
        new, hit = step(grid, pose, a)
        log.steps.append(StepRecord(t, pose.x, pose.y, pose.heading, a, hit, math.nan, math.nan, False, 0.0))
        pose = new
    return log, ep


EAST = lambda col: Pose(col_x(col), 0.625, 0.0)  # noqa: E731  (row 2, facing east)
ROUNDABOUT = [F, F, F] + [L] * 18 + [F] + [R] * 9 + [F] * 6 + [S]

# (name, start, actions, l, target, max_steps, success, spl)
CASES = [
    ("l equals p", EAST(20), [F] * 6 + [S], 1.5, "Bedroom", 500, True, 1.0),
    ("l=1.125 p=1.5", EAST(20), [F] * 6 + [S], 1.125, "Bedroom", 500, True, 0.75),
    ("l=10 p=12.5 ratio", EAST(20), [F] * 6 + [S], 1.2, "Bedroom", 500, True, 1.2 / 1.5),
    ("p shorter than l", EAST(20), [F] * 6 + [S], 3.0, "Bedroom", 500, True, 1.0),
    ("first inset column", EAST(20), [F] * 5 + [S], 1.25, "Bedroom", 500, True, 1.0),
    ("boundary column 0.125 m inside", EAST(20), [F] * 4 + [S], 1.0, "Bedroom", 500, False, 0.0),
    ("0.1 m inside", Pose(6.1 - 1.25, 0.625, 0.0), [F] * 5 + [S], 1.25, "Bedroom", 500, False, 0.0),
    ("exactly 0.2 m inside the wall line", Pose(6.2 - 1.25, 0.625, 0.0), [F] * 5 + [S], 1.25, "Bedroom", 500, False, 0.0),
    ("0.25 m inside", Pose(5.0, 0.625, 0.0), [F] * 5 + [S], 1.25, "Bedroom", 500, True, 1.0),
    ("just short of 0.25 m", Pose(4.9999, 0.625, 0.0), [F] * 5 + [S], 1.25, "Bedroom", 500, False, 0.0),
    ("last inset column", EAST(20), [F] * 11 + [S], 2.75, "Bedroom", 500, True, 1.0),
    ("far wall column", EAST(20), [F] * 12 + [S], 2.75, "Bedroom", 500, False, 0.0),
    ("top inset row", Pose(col_x(20), 0.875, 0.0), [F] * 6 + [S], 1.5, "Bedroom", 500, True, 1.0),
    ("top boundary row", Pose(col_x(20), 1.125, 0.0), [F] * 6 + [S], 1.5, "Bedroom", 500, False, 0.0),
    ("turns cost nothing", EAST(20), [L, R] + [F] * 6 + [S], 1.5, "Bedroom", 500, True, 1.0),
    ("full spin", EAST(20), [L] * 36 + [F] * 6 + [S], 1.5, "Bedroom", 500, True, 1.0),
    ("collisions add no length", Pose(col_x(20), 0.625, 270.0), [F, F, F] + [L] * 18 + [F] + [R] * 9 + [F] * 6 + [S],
     1.5, "Bedroom", 500, True, 0.75),
    ("detour", EAST(20), [F] * 6 + [L] * 18 + [F, F] + [L] * 18 + [F, F] + [S], 1.5, "Bedroom", 500, True, 0.6),
    ("no stop, cap reached in room", EAST(20), [F] * 7, 1.5, "Bedroom", 7, False, 0.0),
    ("stop as the capped last action", EAST(20), [F] * 6 + [S], 1.5, "Bedroom", 7, True, 1.0),
    ("stop at start in corridor", EAST(20), [S], 1.5, "Bedroom", 500, False, 0.0),
    ("wrong room type", Pose(col_x(7), 0.625, 180.0), [F] * 4 + [S], 1.0, "Bedroom", 500, False, 0.0),
    ("kitchen target", Pose(col_x(7), 0.625, 180.0), [F] * 4 + [S], 1.0, "Kitchen", 500, True, 1.0),
    ("long straight l=p=4", EAST(9), [F] * 16 + [S], 4.0, "Bedroom", 500, True, 1.0),
    ("l=2 p=4", EAST(9), [F] * 16 + [S], 2.0, "Bedroom", 500, True, 0.5),
]


@pytest.mark.parametrize("case", CASES, ids=[c[0] for c in CASES])
def test_hand_built_spl(case):
    name, start, actions, l, target, cap, success, expect = case
    log, ep = make_case(start, actions, l, target, cap)
    row = score_episode(log, ep, STRIP)
    assert row.success is success
    assert row.spl == expect
    assert row.spl == spl(success, l, row.path_len)


def test_case_count():
    assert len(CASES) >= 20


def test_path_length_counts_only_realized_moves():
    log, ep = make_case(Pose(col_x(20), 0.625, 270.0), ROUNDABOUT, 1.5)
    # one move south, two bumps into the outside row, back north, then six east
    row = score_episode(log, ep, STRIP)
    assert sum(s.collided for s in log.steps) == 2
    assert row.path_len == 0.25 * 8


def test_spl_formula_edges():
    assert spl(True, 10.0, 12.5) == 0.8
    assert spl(False, 10.0, 10.0) == 0.0
    assert spl(True, 0.0, 0.0) == 1.0
    with pytest.raises(ValidationError):
        spl(True, -1.0, 1.0)


def test_scoring_rejects_mismatches():
    log, ep = make_case(EAST(20), [F] * 6 + [S], 1.5)
    other = generate_house(GenParams(rng_seed=1))
    with pytest.raises(ValidationError):
        score_episode(log, ep, other)
    incomplete, ep2 = make_case(EAST(20), [F] * 6, 1.5)
    with pytest.raises(ValidationError):
        score_episode(incomplete, ep2, STRIP)
    bad = TrajectoryLog(log.house_id, log.house_hash, "hand", "Kitchen", list(log.steps))
    with pytest.raises(ValidationError):
        score_episode(bad, ep, STRIP)
    s = log.steps[2]
    tampered = TrajectoryLog(log.house_id, log.house_hash, "hand", "Bedroom", list(log.steps))
    tampered.steps[2] = StepRecord(s.t, s.x + 0.25, s.y, s.heading, s.action, s.collided, s.pred_x, s.pred_y,
                                   s.frozen, s.reward)
    with pytest.raises(ValidationError):
        score_episode(tampered, ep, STRIP)
    flipped = TrajectoryLog(log.house_id, log.house_hash, "hand", "Bedroom", list(log.steps))
    flipped.steps[0] = StepRecord(0, s.x - 0.5, s.y, 0.0, F, True, math.nan, math.nan, False, 0.0)
    with pytest.raises(ValidationError):
        score_episode(flipped, ep, STRIP)


@pytest.fixture(scope="module")
def tiny_eval():
    houses = {f"h{i}": generate_house(GenParams(rng_seed=60 + i)) for i in range(2)}
    eps = [e for hid, g in houses.items() for e in sample_episodes(g, 2, 1, hid)]
    return houses, eps


def test_evaluate_parallel_matches_serial(tiny_eval):
    houses, eps = tiny_eval
    a = evaluate(eps, houses, ("random", "gt_point"))
    b = evaluate(eps, houses, ("random", "gt_point"), workers=2)
    assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()
    assert [r.variant for r in a.rows[:2]] == ["random", "gt_point"]
    assert a.summary()[0][0] == "random" and a.summary()[0][3] == 4


def test_evaluate_replay_equals_live(tiny_eval):
    houses, eps = tiny_eval
    table = evaluate(eps, houses, ("gt_maps",))
    for row in table.rows:
        log = table.logs[(row.episode, "gt_maps")]
        assert (row.success, row.spl, row.path_len) == (log.success, log.spl, log.path_len)


def test_evaluate_errors_and_empty(tiny_eval):
    houses, eps = tiny_eval
    with pytest.raises(ValidationError):
        evaluate(eps, houses, ("ours",))
    with pytest.raises(ValidationError):
        evaluate(eps, {}, ("random",))
    empty = evaluate([], houses, ("random", "gt_point"))
    assert empty.summary() == [] and empty.to_csv() == "variant,mean_spl,success_rate,n\n"


def test_point_error_gt_point_is_zero(tiny_eval):
    houses, eps = tiny_eval
    table = evaluate(eps, houses, ("gt_point",))
    logs = [table.logs[(i, "gt_point")] for i in range(len(eps))]
    res = point_error(logs, eps, houses)
    assert res["mean_error"] == 0.0 and res["outside_rate"] == 0.0 and res["n"] == len(eps)


def test_point_error_hand_arithmetic():
    def with_pred(px, py):
        log = TrajectoryLog("strip", layout_hash(STRIP), "hand", "Bedroom")
        log.steps.append(StepRecord(0, 1.0, 0.625, 0.0, S, False, px, py, False, 0.0))
        return log

    eps = [Episode("strip", Pose(1.0, 0.625), "Bedroom", (6.625, 0.625), 5.0)] * 2
    logs = [with_pred(6.625 + 3.0, 0.625 + 4.0), with_pred(col_x(10), 0.625)]
    res = point_error(logs, eps, {"strip": STRIP})
    # 5 m off (3-4-5), and 6.625 - 2.625 = 4 m off in the corridor
    assert res["mean_error"] == 4.5
    assert res["error_pct"] == 100 * 4.5 / 26
    assert res["outside_rate"] == 1.0


def test_ladder_holds_on_ordered_table():
    from roomnav.harness import EvalRow

    rows = [EvalRow(0, "h", v, s > 0, s, 1.0, 1.0, 5) for v, s in
            (("random", 0.0), ("no_maps", 0.1), ("ours", 0.2), ("gt_maps", 0.9), ("gt_point", 1.0))]
    assert ladder_holds(EvalTable(rows, {}))
    rows[2] = EvalRow(0, "h", "ours", True, 0.05, 1.0, 1.0, 5)
    assert not ladder_holds(EvalTable(rows, {}))

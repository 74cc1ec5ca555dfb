import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ascii_grid
from roomnav.belief import (
    CROP_SIZE,
    FusionParams,
    extract_crop,
    format_metrics_row,
    gt_classes,
    gt_stack,
    init_beliefs,
    map_metrics,
    observe_set,
    stack_metrics,
    update_beliefs,
)
from roomnav.errors import ValidationError
from roomnav.priors import PriorModel, train_prior
from roomnav.sim import Pose, SensorParams, observe
from roomnav.world import ROOM_TYPES, AdjacencyRule, GenParams, generate_house, room_type_index

DINING = room_type_index("DiningRoom")
KITCHEN = room_type_index("Kitchen")


def dining_east_corpus(n=10):
    # interior 7x4 cells: a 3x4 kitchen, a wall column, a 3x4 dining room to its east
    return [generate_house(GenParams(rng_seed=s, house_extent=(1.75, 1.0), min_room_size=0.75, split_jitter=0,
                                     room_count_range=(2, 2), hall_prob=0,
                                     adjacency_rules=(AdjacencyRule("Kitchen", "DiningRoom", 1.0, "E"),)))
            for s in range(n)]


@pytest.fixture(scope="module")
def east_model():
    return train_prior(dining_east_corpus())


@pytest.fixture(scope="module")
def house_model():
    return train_prior([generate_house(GenParams(rng_seed=100 + s)) for s in range(15)])


FIVE = """
KK#DD
KK#DD
KK#DD
KK#DD
KK#DD
"""


def fusion_oracle(model, init, observed, room, params=FusionParams()):
    """Direct per-cell log-odds sum, following the two binary stages by hand."""
    co = model.cooccurrence
    W = co.window
    cond = co.conditional(room)
    marg = co.marginal(room)
    cond0 = co.conditional(0)
    marg0 = co.marginal(0)
    h, w = init.shape[:2]
    out = np.empty_like(init)

    def logit(p):
        return math.log(p) - math.log(1 - p)

    for r in range(h):
        for c in range(w):
            if (r, c) in observed:
                out[r, c] = np.eye(3)[observed[(r, c)][1]]
                continue
            e_out = e_room = mass = 0.0
            for (orow, ocol), (lab, _) in observed.items():
                dy, dx = r - orow, c - ocol
                wt = 1.0 / (1.0 + math.hypot(dx, dy) * model.resolution / params.decay)
                mass += wt
                po = cond0[lab, 0, W + dy, W + dx]
                e_out += wt * (logit(po) - logit(marg0[0]))
                pin = cond[lab, 2, W + dy, W + dx]
                ph = cond[lab, 1, W + dy, W + dx]
                q, q_m = pin / (pin + ph), marg[2] / (marg[1] + marg[2])
                e_room += wt * (logit(q) - logit(q_m))
            e_out /= max(mass, 1.0)
            e_room /= max(mass, 1.0)
            base = init[r, c]
            p_out = 1 / (1 + math.exp(-(logit(base[0]) + e_out)))
            q = 1 / (1 + math.exp(-(logit(base[2] / (base[1] + base[2])) + e_room)))
            p_out = min(max(p_out, 1e-6), 1 - 1e-6)
            q = min(max(q, 1e-6), 1 - 1e-6)
            out[r, c] = (p_out, (1 - p_out) * (1 - q), (1 - p_out) * q)
    return out


def test_one_kitchen_cell_predicts_dining_one_metre_east(east_model):
    g = ascii_grid(FIVE)
    stack = observe_set(init_beliefs(g.shape, east_model), g, [(2, 0)])
    lab = int(g.labels[2, 0])
    expect = fusion_oracle(east_model, stack.init[DINING], {(2, 0): (lab, 1)}, DINING)
    assert np.max(np.abs(stack.probs[DINING] - expect)) <= 1e-9
    assert int(np.argmax(stack.probs[DINING][2, 4])) == 2


def test_two_observations_match_oracle(east_model):
    g = ascii_grid(FIVE)
    cells = [(2, 0), (0, 2)]
    stack = observe_set(init_beliefs(g.shape, east_model), g, cells)
    for room in (DINING, KITCHEN):
        observed = {c: (int(g.labels[c]), int(gt_classes(g, ROOM_TYPES[room])[c])) for c in cells}
        expect = fusion_oracle(east_model, stack.init[room], observed, room)
        assert np.max(np.abs(stack.probs[room] - expect)) <= 1e-9


def test_uninformative_prior_is_uniform():
    for prior in (None, PriorModel.uniform()):
        stack = init_beliefs((6, 9), prior)
        assert np.array_equal(stack.probs, np.full((len(ROOM_TYPES), 6, 9, 3), 1 / 3))


def test_no_observation_equals_init(house_model):
    stack = init_beliefs((40, 50), house_model)
    assert stack.probs is stack.init
    again = init_beliefs((40, 50), house_model)
    assert np.array_equal(stack.init, again.init)
    assert np.allclose(stack.init.sum(-1), 1.0, atol=1e-12)


def test_full_observation_is_ground_truth(house_model):
    g = generate_house(GenParams(rng_seed=3))
    rows, cols = np.indices(g.shape)
    stack = observe_set(init_beliefs(g.shape, house_model), g, np.stack([rows.ravel(), cols.ravel()], 1))
    m = stack_metrics(stack, g)
    assert m["miou"] == 1.0 and m["avg_acc"] == 1.0 and m["cross_entropy"] == 0.0
    for r, name in enumerate(ROOM_TYPES):
        assert np.array_equal(stack.argmax()[r], gt_classes(g, name))
    gt = gt_stack(g)
    assert np.array_equal(gt.probs, stack.probs)


def _walk_stacks(grid, prior, steps, seed):
    rng = np.random.default_rng(seed)
    nav = np.argwhere(grid.navigable)
    stack = init_beliefs(grid.shape, prior)
    sensor = SensorParams()
    out = []
    for _ in range(steps):
        r, c = nav[rng.integers(len(nav))]
        pose = Pose(*grid.center((int(r), int(c))), float(rng.integers(36) * 10))
        stack = update_beliefs(stack, observe(grid, pose, sensor, with_ranges=False), grid)
        out.append(stack)
    return out


def test_invariants_along_a_walk(house_model):
    g = generate_house(GenParams(rng_seed=21))
    prev = None
    for stack in _walk_stacks(g, house_model, 15, 0):
        p = stack.probs
        assert np.max(np.abs(p.sum(-1) - 1.0)) <= 1e-9
        assert np.all(p >= 0) and np.all(p <= 1)
        # outside probability is room independent
        assert np.array_equal(p[:, ..., 0], np.broadcast_to(p[0, ..., 0], p.shape[:-1]))
        mask = stack.observed_mask
        for r, name in enumerate(ROOM_TYPES):
            assert np.array_equal(np.argmax(p[r], -1)[mask], gt_classes(g, name)[mask])
            assert np.all(p[r][mask].max(-1) == 1.0)
        if prev is not None:
            assert not (prev.observed_mask & ~mask).any()
            assert np.array_equal(prev.observed[prev.observed_mask], stack.observed[prev.observed_mask])
        prev = stack


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_order_invariance_and_idempotence(seed):
    model = _CACHE.setdefault("m", train_prior([generate_house(GenParams(rng_seed=100 + s)) for s in range(5)]))
    g = _CACHE.setdefault("g", generate_house(GenParams(rng_seed=40)))
    rng = np.random.default_rng(seed)
    allc = np.argwhere(np.ones(g.shape, dtype=bool))
    a = allc[rng.choice(len(allc), 60, replace=False)]
    b = allc[rng.choice(len(allc), 60, replace=False)]
    base = init_beliefs(g.shape, model)
    ab = observe_set(observe_set(base, g, a), g, b)
    ba = observe_set(observe_set(base, g, b), g, a)
    assert np.array_equal(ab.probs, ba.probs)
    assert np.array_equal(observe_set(ab, g, a).probs, ab.probs)


_CACHE = {}


def test_update_rejects_out_of_world_cells(house_model):
    g = generate_house(GenParams(rng_seed=1))
    stack = init_beliefs(g.shape, house_model)
    obs = observe(g, Pose(*g.center(tuple(np.argwhere(g.navigable)[0])), 0.0), with_ranges=False)
    with pytest.raises(ValidationError) as info:
        update_beliefs(stack, obs, g, extra_cells=[(g.height, 0)])
    assert info.value.cell == (g.height, 0)
    with pytest.raises(ValidationError):
        observe_set(stack, g, [(-1, 3)])


def test_prior_resolution_must_match(house_model):
    with pytest.raises(ValidationError):
        init_beliefs((10, 10), house_model, resolution=0.5)


def test_fusion_params_validation():
    with pytest.raises(ValidationError):
        FusionParams(pooling="max")
    with pytest.raises(ValidationError):
        FusionParams(decay=0)


# --- crops -----------------------------------------------------------------


def _labelled_world():
    g = generate_house(GenParams(rng_seed=9))
    return g


def test_crop_heading_zero_is_axis_aligned_window():
    g = _labelled_world()
    pose = Pose(5.0, 5.0, 0.0)  # on a cell corner, 20 cells from the origin
    crop = extract_crop(g, pose, "Kitchen")
    assert crop.probs.shape == (CROP_SIZE, CROP_SIZE, 3)
    world = gt_classes(g, "Kitchen") + 1
    expect = np.ones((CROP_SIZE, CROP_SIZE), dtype=np.int64)
    for i in range(CROP_SIZE):
        for j in range(CROP_SIZE):
            r, c = 20 + i - 52, 20 + j - 52
            if 0 <= r < g.height and 0 <= c < g.width:
                expect[i, j] = world[r, c]
    assert np.array_equal(crop.labels, expect)


def test_crop_periodic_and_half_turn():
    g = _labelled_world()
    a = extract_crop(g, Pose(5.0, 5.0, 0.0), "Bedroom").labels
    assert np.array_equal(extract_crop(g, Pose(5.0, 5.0, 360.0), "Bedroom").labels, a)
    half = extract_crop(g, Pose(5.0, 5.0, 180.0), "Bedroom").labels
    # pixel (i, j) at 180 degrees samples the world cell pixel (104 - i, 104 - j) samples at 0 degrees
    assert np.array_equal(half[1:, 1:], a[1:, 1:][::-1, ::-1])


def test_crop_of_stack_matches_crop_of_grid():
    g = _labelled_world()
    pose = Pose(*g.center(tuple(np.argwhere(g.navigable)[100])), 70.0)
    assert np.array_equal(extract_crop(gt_stack(g), pose, "LivingRoom").labels,
                          extract_crop(g, pose, "LivingRoom").labels)


def test_crop_outside_world_is_outside_class():
    g = ascii_grid("""
KK..
KK..
""")
    crop = extract_crop(g, Pose(0.25, 0.25, 0.0), "Kitchen")
    assert crop.labels[0, 0] == 1 and crop.labels[52, 52] == 3
    assert (crop.labels == 1).sum() == CROP_SIZE * CROP_SIZE - 8


# --- metrics ---------------------------------------------------------------


def test_map_metrics_toy():
    m = map_metrics(np.array([[1, 2], [2, 3]]), np.array([[1, 1], [2, 3]]))
    assert m["iou"] == {1: 0.5, 2: 0.5, 3: 1.0}
    assert m["miou"] == pytest.approx(2 / 3, abs=1e-15)
    assert m["class_acc"] == {1: 0.5, 2: 1.0, 3: 1.0}
    assert m["avg_acc"] == pytest.approx(2.5 / 3, abs=1e-15)


def test_perfect_and_uniform_predictions():
    gt = np.array([[1, 2, 3], [3, 2, 1]])
    m = map_metrics(gt, gt, np.eye(3)[gt - 1])
    assert m["miou"] == 1.0 and m["avg_acc"] == 1.0 and m["cross_entropy"] == 0.0
    u = map_metrics(gt, gt, np.full(gt.shape + (3,), 1 / 3))
    assert u["cross_entropy"] == pytest.approx(math.log(3), abs=1e-12)


def test_metrics_shape_mismatch_and_row_format():
    with pytest.raises(ValidationError):
        map_metrics(np.ones((2, 2)), np.ones((2, 3)))
    row = format_metrics_row("ours", map_metrics(np.array([1, 2, 3]), np.array([1, 2, 3])))
    assert row.split() == ["ours", "100.00", "100.00", "100.00", "100.00", "100.00"]

"""Amodal belief maps: per room type, a 3-class distribution for every world cell.

Classes are indexed 0 = outside the house, 1 = in the house but not in the
room, 2 = in the room. Metrics and rendered crops report them as 1, 2, 3.

A stack keeps only the observed label set; fused probabilities are derived
from it on demand. Fusion is a distance-weighted log-odds sum over observed
cells, done in two binary stages (outside vs house, then room vs rest of the
house) so every room type agrees on the outside probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import ValidationError
from .priors import CANONICAL, N_CLASSES, PriorModel
from .sim import Observation, Pose, unit_vector
from .world import (
    DEFAULT_RESOLUTION,
    LABEL_INTERIOR,
    LABEL_OUTSIDE,
    N_LABELS,
    OUTSIDE,
    ROOM_TYPES,
    WALL,
    SemanticGrid,
    room_type_index,
)

N_ROOMS = len(ROOM_TYPES)
CROP_SIZE = 104
DECAY_M = 4.0
PRIOR_FLOOR = 0.05
CE_CLIP = 1e-12
POOLING = ("sum", "mean")
# fused probabilities are clipped away from 0/1 on unobserved cells
_P_CLIP = 1e-6


@dataclass(frozen=True)
class FusionParams:
    decay: float = DECAY_M
    pooling: str = "mean"
    gain: float = 1.0
    floor: float = PRIOR_FLOOR

    def __post_init__(self):
        if self.pooling not in POOLING:
            raise ValidationError(f"unknown pooling {self.pooling!r}")
        if self.decay <= 0 or self.gain < 0 or not (0 <= self.floor <= 1):
            raise ValidationError(f"invalid fusion parameters {self}")


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def label_classes(labels: np.ndarray, room: int) -> np.ndarray:
    """Full labels -> 3-class index for room ``room``."""
    out = np.ones(labels.shape, dtype=np.int8)
    out[labels == LABEL_OUTSIDE] = 0
    out[labels == 2 + room] = 2
    return out


def prior_probabilities(shape, prior: PriorModel | None, floor: float = PRIOR_FLOOR) -> np.ndarray:
    """Init distribution ``[room, row, col, class]`` for a world of ``shape`` cells.

    Label frequencies over the whole-grid canonical frame are resampled to
    the world grid and mixed with the uniform distribution (weight ``floor``).
    """
    h, w = shape
    out = np.full((N_ROOMS, h, w, N_CLASSES), 1.0 / 3.0)
    if prior is None or prior.extent_fields is None:
        return out
    ri = np.minimum(((np.arange(h) + 0.5) * CANONICAL / h).astype(np.int64), CANONICAL - 1)
    ci = np.minimum(((np.arange(w) + 0.5) * CANONICAL / w).astype(np.int64), CANONICAL - 1)
    freq = prior.extent_fields[:, ri][:, :, ci]
    for r in range(N_ROOMS):
        p_out = freq[LABEL_OUTSIDE]
        p_in = freq[2 + r]
        probs = np.stack([p_out, 1.0 - p_out - p_in, p_in], axis=-1)
        probs = np.clip(probs, 0.0, 1.0)
        probs /= probs.sum(axis=-1, keepdims=True)
        out[r] = (1.0 - floor) * probs + floor / 3.0
    return out


class FusionKernels:
    """Log-odds kernels per observed label, FFT'd for one world shape."""

    def __init__(self, prior: PriorModel, shape, params: FusionParams):
        co = prior.cooccurrence
        self.window = W = co.window
        res = prior.resolution
        dy, dx = np.mgrid[-W:W + 1, -W:W + 1]
        weight = 1.0 / (1.0 + np.hypot(dx, dy) * res / params.decay)
        self.weight = weight
        h, w = shape
        self.shape = shape
        self.fshape = (sfft.next_fast_len(h + 2 * W, real=True), sfft.next_fast_len(w + 2 * W, real=True))
        # stage 0: outside vs house; stages 1..5: room r vs rest of the house
        kernels = np.zeros((1 + N_ROOMS, N_LABELS, 2 * W + 1, 2 * W + 1))
        for r in range(N_ROOMS):
            cond = co.conditional(r)
            marg = co.marginal(r)
            if r == 0:
                p_out = cond[:, 0]
                kernels[0] = weight * (np.log(p_out / marg[0]) - np.log((1 - p_out) / (1 - marg[0])))
            kernels[1 + r] = weight * (
                np.log(cond[:, 2] / (cond[:, 1] + cond[:, 2]) / (marg[2] / (marg[1] + marg[2])))
                - np.log(cond[:, 1] / (cond[:, 1] + cond[:, 2]) / (marg[1] / (marg[1] + marg[2])))
            )
        self.kernel_ffts = sfft.rfft2(kernels, s=self.fshape, axes=(-2, -1))
        self.weight_fft = sfft.rfft2(weight, s=self.fshape)

    def _crop(self, full):
        W = self.window
        h, w = self.shape
        return full[..., W:W + h, W:W + w]

    def evidence(self, observed: np.ndarray, pooling: str) -> np.ndarray:
        """Summed (or weight-normalized) log-odds evidence per stage, shape ``(6, H, W)``."""
        spectra = np.zeros((1 + N_ROOMS,) + self.kernel_ffts.shape[-2:], dtype=complex)
        any_obs = observed >= 0
        for lab in range(N_LABELS):
            ind = observed == lab
            if not ind.any():
                continue
            spectra += self.kernel_ffts[:, lab] * sfft.rfft2(ind.astype(float), s=self.fshape)
        ev = self._crop(sfft.irfft2(spectra, s=self.fshape, axes=(-2, -1)))
        if pooling == "mean":
            mass = self._crop(sfft.irfft2(self.weight_fft * sfft.rfft2(any_obs.astype(float), s=self.fshape),
                                          s=self.fshape))
            ev = ev / np.maximum(mass, 1.0)
        return ev


@dataclass(frozen=True, eq=False)
class BeliefStack:
    """Belief grids for every room type over one world.

    ``observed`` holds the full label of each observed cell and -1 elsewhere;
    ``blocked`` marks observed cells that are walls or outside.
    """

    prior: PriorModel | None
    init: np.ndarray
    observed: np.ndarray
    blocked: np.ndarray
    step_count: int = 0
    params: FusionParams = FusionParams()
    resolution: float = DEFAULT_RESOLUTION
    _shared: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.observed.shape

    @property
    def observed_mask(self) -> np.ndarray:
        return self.observed >= 0

    def _kernels(self) -> FusionKernels:
        k = self._shared.get("kernels")
        if k is None:
            k = FusionKernels(self.prior, self.shape, self.params)
            self._shared["kernels"] = k
        return k

    @cached_property
    def probs(self) -> np.ndarray:
        """``[room, row, col, class]`` distributions."""
        mask = self.observed_mask
        if not mask.any():
            return self.init
        if self.prior is None or not self.prior.informative:
            out = self.init.copy()
        else:
            ev = self.params.gain * self._kernels().evidence(self.observed, self.params.pooling)
            p_out0 = self.init[0, ..., 0]
            p_out = _sigmoid(_logit(p_out0) + ev[0])
            p_out = np.clip(p_out, _P_CLIP, 1 - _P_CLIP)
            out = np.empty_like(self.init)
            for r in range(N_ROOMS):
                base = self.init[r]
                q0 = base[..., 2] / (base[..., 1] + base[..., 2])
                q = np.clip(_sigmoid(_logit(q0) + ev[1 + r]), _P_CLIP, 1 - _P_CLIP)
                out[r, ..., 0] = p_out
                out[r, ..., 1] = (1 - p_out) * (1 - q)
                out[r, ..., 2] = (1 - p_out) * q
        for r in range(N_ROOMS):
            hard = np.eye(N_CLASSES)[label_classes(self.observed[mask], r)]
            out[r][mask] = hard
        out.setflags(write=False)
        return out

    def room(self, room_type: str) -> np.ndarray:
        """``[row, col, class]`` distributions for one room type."""
        return self.probs[room_type_index(room_type)]

    def argmax(self) -> np.ndarray:
        return np.argmax(self.probs, axis=-1)

    def believed_navigable(self) -> np.ndarray:
        """Observed free cells plus unobserved cells believed inside the house."""
        unobserved = ~self.observed_mask
        free = self.observed_mask & ~self.blocked
        if unobserved.any():
            free |= unobserved & (self.probs[0, ..., 0] < 0.5)
        return free

    def with_cells(self, cells, labels, blocked=None, steps: int = 1) -> "BeliefStack":
        """New stack with ``cells`` observed as full ``labels``.

        ``blocked`` flags walls among them; by default only outside cells count as blocked.
        """
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        blocked = labels == LABEL_OUTSIDE if blocked is None else np.asarray(blocked, dtype=bool).reshape(-1)
        h, w = self.shape
        bad = (cells[:, 0] < 0) | (cells[:, 0] >= h) | (cells[:, 1] < 0) | (cells[:, 1] >= w)
        if bad.any():
            raise ValidationError("observation outside the world", cell=tuple(int(v) for v in cells[bad][0]))
        if len(cells) and ((labels < 0) | (labels >= N_LABELS)).any():
            raise ValidationError("observation carries an invalid label")
        prev = self.observed[cells[:, 0], cells[:, 1]]
        clash = (prev >= 0) & (prev != labels)
        if clash.any():
            raise ValidationError("observed cell changed label", cell=tuple(int(v) for v in cells[clash][0]))
        observed = self.observed.copy()
        observed[cells[:, 0], cells[:, 1]] = labels
        observed.setflags(write=False)
        walls = self.blocked.copy()
        walls[cells[:, 0], cells[:, 1]] = blocked
        walls.setflags(write=False)
        return BeliefStack(self.prior, self.init, observed, walls, self.step_count + steps, self.params,
                           self.resolution, self._shared)


def _full_labels(codes: np.ndarray, grid_rooms) -> np.ndarray:
    codes = np.asarray(codes)
    out = np.full(codes.shape, LABEL_INTERIOR, dtype=np.int64)
    out[codes == OUTSIDE] = LABEL_OUTSIDE
    for room in grid_rooms:
        out[codes == room.id] = 2 + room_type_index(room.room_type)
    return out


def init_beliefs(shape, prior: PriorModel | None, params: FusionParams = FusionParams(),
                 resolution: float | None = None) -> BeliefStack:
    """Unobserved stack over a world of ``shape = (height, width)`` cells."""
    shape = tuple(int(v) for v in shape)
    if resolution is None:
        resolution = prior.resolution if prior is not None else DEFAULT_RESOLUTION
    if prior is not None and prior.informative and abs(prior.resolution - resolution) > 1e-12:
        raise ValidationError("prior resolution differs from the world resolution")
    init = prior_probabilities(shape, prior, params.floor)
    init.setflags(write=False)
    observed = np.full(shape, -1, dtype=np.int8)
    observed.setflags(write=False)
    blocked = np.zeros(shape, dtype=bool)
    blocked.setflags(write=False)
    return BeliefStack(prior, init, observed, blocked, 0, params, float(resolution))


def update_beliefs(stack: BeliefStack, obs: Observation, grid: SemanticGrid, extra_cells=()) -> BeliefStack:
    """Mark the observation's cells (plus ``extra_cells``) observed with their true labels.

    Cell codes are translated to labels through ``grid``'s room table.
    """
    cells = np.asarray(obs.cells, dtype=np.int64).reshape(-1, 2)
    codes = np.asarray(obs.labels)
    extra = np.asarray(list(extra_cells), dtype=np.int64).reshape(-1, 2)
    if len(extra):
        h, w = grid.shape
        ok = (extra[:, 0] >= 0) & (extra[:, 0] < h) & (extra[:, 1] >= 0) & (extra[:, 1] < w)
        if not ok.all():
            raise ValidationError("observation outside the world", cell=tuple(int(v) for v in extra[~ok][0]))
        cells = np.concatenate([cells, extra])
        codes = np.concatenate([codes, grid.cells[extra[:, 0], extra[:, 1]]])
    return stack.with_cells(cells, _full_labels(codes, grid.rooms), (codes == WALL) | (codes == OUTSIDE))


def observe_set(stack: BeliefStack, grid: SemanticGrid, cells) -> BeliefStack:
    """Observe an arbitrary cell set with ground-truth labels (tests, oracles)."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    h, w = grid.shape
    ok = (cells[:, 0] >= 0) & (cells[:, 0] < h) & (cells[:, 1] >= 0) & (cells[:, 1] < w)
    if not ok.all():
        raise ValidationError("observation outside the world", cell=tuple(int(v) for v in cells[~ok][0]))
    return stack.with_cells(cells, grid.labels[cells[:, 0], cells[:, 1]], ~grid.navigable[cells[:, 0], cells[:, 1]],
                            steps=0)


def gt_stack(grid: SemanticGrid) -> BeliefStack:
    """Fully observed stack: the ground-truth one-hot maps."""
    stack = init_beliefs(grid.shape, None, resolution=grid.resolution)
    rows, cols = np.indices(grid.shape)
    return stack.with_cells(np.stack([rows.ravel(), cols.ravel()], 1), grid.labels.ravel(),
                            ~grid.navigable.ravel(), steps=0)


def gt_classes(grid: SemanticGrid, room_type: str) -> np.ndarray:
    return label_classes(grid.labels, room_type_index(room_type))


# --------------------------------------------------------------------------
# egocentric crops


@dataclass(frozen=True)
class EgocentricCrop:
    """``probs[i, j]``: row ``i`` runs to the agent's left, column ``j`` along its heading."""

    room_type: str
    probs: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        """Hard classes 1..3."""
        return np.argmax(self.probs, axis=-1) + 1


def crop_sample_cells(shape, resolution: float, pose: Pose, size: int = CROP_SIZE):
    """World ``(row, col)`` sampled by every crop pixel plus an in-world mask."""
    half = size // 2
    ux, uy = unit_vector(pose.heading)
    a = np.arange(size) - half  # along heading, per column
    b = np.arange(size) - half  # to the left, per row
    px, py = pose.x / resolution, pose.y / resolution
    xs = px + a[None, :] * ux - b[:, None] * uy
    ys = py + a[None, :] * uy + b[:, None] * ux
    cols = np.floor(xs).astype(np.int64)
    rows = np.floor(ys).astype(np.int64)
    inside = (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
    return rows, cols, inside


def extract_crop(source, pose: Pose, room_type: str, size: int = CROP_SIZE, resolution: float | None = None):
    """Nearest-cell egocentric window of a BeliefStack or SemanticGrid."""
    r = room_type_index(room_type)
    if isinstance(source, SemanticGrid):
        res = source.resolution
        probs = np.eye(N_CLASSES)[label_classes(source.labels, r)]
    else:
        res = source.resolution if resolution is None else resolution
        probs = source.probs[r]
    rows, cols, inside = crop_sample_cells(probs.shape[:2], res, pose, size)
    out = np.zeros((size, size, N_CLASSES))
    out[..., 0] = 1.0
    out[inside] = probs[rows[inside], cols[inside]]
    return EgocentricCrop(room_type, out)


# --------------------------------------------------------------------------
# metrics


def map_metrics(pred, gt, pred_probs=None) -> dict:
    """IoU / per-class recall / cross-entropy for hard class maps with values 1..3.

    Classes absent from both maps are skipped in the IoU mean; classes absent
    from ``gt`` are skipped in the recall mean. ``pred_probs[..., k]`` is the
    probability of class ``k + 1``.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {gt.shape}")
    iou, acc = {}, {}
    for k in (1, 2, 3):
        p, g = pred == k, gt == k
        tp = int((p & g).sum())
        union = int((p | g).sum())
        iou[k] = tp / union if union else math.nan
        acc[k] = tp / int(g.sum()) if g.any() else math.nan
    out = {
        "iou": iou,
        "miou": _nanmean(iou.values()),
        "class_acc": acc,
        "avg_acc": _nanmean(acc.values()),
    }
    if pred_probs is not None:
        probs = np.asarray(pred_probs)
        if probs.shape[:-1] != gt.shape:
            raise ValidationError("probability map does not match gt shape")
        picked = np.take_along_axis(probs, (gt.astype(np.int64) - 1)[..., None], axis=-1)[..., 0]
        out["cross_entropy"] = float(-np.log(np.clip(picked, CE_CLIP, 1.0)).mean())
    return out


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def stack_metrics(stack: BeliefStack, grid: SemanticGrid, mask: np.ndarray | None = None) -> dict:
    """Metrics pooled over every room type's map, optionally restricted to ``mask`` cells."""
    preds, gts, probs = [], [], []
    sel = np.ones(grid.shape, dtype=bool) if mask is None else mask
    for r, name in enumerate(ROOM_TYPES):
        preds.append(np.argmax(stack.probs[r], axis=-1)[sel] + 1)
        gts.append(gt_classes(grid, name)[sel] + 1)
        probs.append(stack.probs[r][sel])
    return map_metrics(np.concatenate(preds), np.concatenate(gts), np.concatenate(probs))


def format_metrics_row(name: str, m: dict) -> str:
    """One results row: name, mIoU, Class-1..3 accuracy, average accuracy (percent)."""
    vals = [m["miou"], m["class_acc"][1], m["class_acc"][2], m["class_acc"][3], m["avg_acc"]]
    return f"{name:<12}" + "".join(f"{100 * v:>9.2f}" for v in vals)

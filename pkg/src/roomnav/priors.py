"""Architectural priors learned from a corpus of houses.

Two kinds of statistics are kept:

* frequency fields over a 64x64 canonical frame, either kitchen-anchored
  (``aligned_fields``) or spanning the whole grid extent (``extent_fields``);
* offset co-occurrence counts ``pair_counts[l1, l2, dy, dx]``: how often a
  cell of full label ``l1`` has a cell of label ``l2`` at offset ``(dx, dy)``.

Co-occurrence conditionals are derived from the corpus-mean counts with a
per-house pseudo-count ``alpha``, so duplicating a corpus leaves every
probability unchanged.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import ParseError, ValidationError
from .world import (
    DEFAULT_RESOLUTION,
    LABEL_INTERIOR,
    LABEL_OUTSIDE,
    N_LABELS,
    OUTSIDE,
    ROOM_TYPES,
    SemanticGrid,
    room_type_index,
)

log = logging.getLogger(__name__)

MODEL_MAGIC = "roomnav-prior"
MODEL_VERSION = 1
CANONICAL = 64
WINDOW_M = 13.0
N_CLASSES = 3
CLASS_OUTSIDE, CLASS_HOUSE, CLASS_ROOM = 0, 1, 2


def class_map(room: int) -> np.ndarray:
    """Full label -> 3-class label for room type index ``room``."""
    m = np.full(N_LABELS, CLASS_HOUSE, dtype=np.int64)
    m[LABEL_OUTSIDE] = CLASS_OUTSIDE
    m[2 + room] = CLASS_ROOM
    return m


def window_cells(resolution: float, window_m: float = WINDOW_M) -> int:
    return int(round(window_m / resolution))


def house_pair_counts(grid: SemanticGrid, window: int) -> np.ndarray:
    """Label-pair counts at every offset within ``window`` cells.

    The grid is padded with ``window`` cells of Outside on each side, so every
    house cell sees its full window and counts stay exactly symmetric.
    """
    labels = np.pad(grid.labels, window, constant_values=LABEL_OUTSIDE)
    h, w = labels.shape
    shape = (sfft.next_fast_len(h + window, real=True), sfft.next_fast_len(w + window, real=True))
    present = [bool((labels == lab).any()) for lab in range(N_LABELS)]
    spectra = [sfft.rfft2((labels == lab).astype(float), s=shape) if present[lab] else None
               for lab in range(N_LABELS)]
    ry = np.arange(-window, window + 1) % shape[0]
    rx = np.arange(-window, window + 1) % shape[1]
    out = np.zeros((N_LABELS, N_LABELS, 2 * window + 1, 2 * window + 1), dtype=np.int64)
    for a in range(N_LABELS):
        if not present[a]:
            continue
        conj = np.conj(spectra[a])
        for b in range(N_LABELS):
            if not present[b]:
                continue
            corr = sfft.irfft2(conj * spectra[b], s=shape)
            out[a, b] = np.rint(corr[np.ix_(ry, rx)]).astype(np.int64)
    return out


@dataclass
class Cooccurrence:
    pair_counts: np.ndarray | None
    corpus_size: int
    alpha: float = 1.0
    window: int = 52
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _mean_counts(self, room: int) -> np.ndarray:
        """Corpus-mean counts aggregated to (origin label, class, dy, dx)."""
        cm = class_map(room)
        agg = np.zeros((N_LABELS, N_CLASSES) + self.pair_counts.shape[2:])
        for lab in range(N_LABELS):
            agg[:, cm[lab]] += self.pair_counts[:, lab]
        return agg / self.corpus_size

    def conditional(self, room: int) -> np.ndarray:
        """``P[l, c, dy, dx]``: probability that the cell at offset has class ``c`` given origin label ``l``."""
        key = ("cond", room)
        if key not in self._cache:
            size = 2 * self.window + 1
            if self.pair_counts is None or self.corpus_size == 0:
                probs = np.full((N_LABELS, N_CLASSES, size, size), 1.0 / 3.0)
            else:
                agg = self._mean_counts(room)
                total = agg.sum(axis=1, keepdims=True)
                with np.errstate(invalid="ignore", divide="ignore"):  # alpha=0 with unseen origins
                    probs = (agg + self.alpha) / (total + N_CLASSES * self.alpha)
            self._cache[key] = probs
        return self._cache[key]

    def marginal(self, room: int) -> np.ndarray:
        """Class frequencies over all corpus cells, smoothed like the conditionals."""
        if self.pair_counts is None or self.corpus_size == 0:
            return np.full(N_CLASSES, 1.0 / 3.0)
        w = self.window
        cells = np.array([self.pair_counts[lab, lab, w, w] for lab in range(N_LABELS)], dtype=float)
        cm = class_map(room)
        per = np.bincount(cm, weights=cells, minlength=N_CLASSES) / self.corpus_size
        return (per + self.alpha) / (per.sum() + N_CLASSES * self.alpha)

    def label_conditional(self, origin: int, target: int) -> np.ndarray:
        """Unsmoothed ``P(label target at offset | origin label)`` over the window (nan where unseen)."""
        counts = self.pair_counts[origin].astype(float)
        total = counts.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return counts[target] / total


def train_cooccurrence(corpus, alpha: float = 1.0, window_m: float = WINDOW_M) -> Cooccurrence:
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("cannot train on an empty corpus")
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    res = corpus[0].resolution
    window = window_cells(res, window_m)
    total = None
    for grid in corpus:
        if grid.resolution != res:
            raise ValidationError("corpus mixes grid resolutions")
        counts = house_pair_counts(grid, window)
        total = counts if total is None else total + counts
    return Cooccurrence(total, len(corpus), float(alpha), window)


def _canonical_centers(n: int = CANONICAL) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def align_and_accumulate(corpus) -> tuple[np.ndarray, int, int]:
    """Kitchen-anchored mean occupancy per room type.

    Each house is mirrored so its (first) kitchen sits in the lower-left half
    of the house box, then sampled on a 64x64 frame whose origin is the
    kitchen's lower-left corner and whose extent equals the house box.
    Returns ``(fields[type, row, col], used, skipped)``.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("cannot align an empty corpus")
    acc = np.zeros((len(ROOM_TYPES), CANONICAL, CANONICAL))
    used = skipped = 0
    u = _canonical_centers()
    for grid in corpus:
        kitchens = grid.rooms_of_type("Kitchen")
        if not kitchens:
            skipped += 1
            continue
        inside = np.argwhere(grid.cells != OUTSIDE)
        hy0, hx0 = inside.min(axis=0)
        hy1, hx1 = inside.max(axis=0) + 1
        kx0, ky0, kx1, ky1 = kitchens[0].bounds
        flip_x = (kx0 + kx1) > (hx0 + hx1)
        flip_y = (ky0 + ky1) > (hy0 + hy1)
        ax = (hx0 + hx1 - kx1) if flip_x else kx0
        ay = (hy0 + hy1 - ky1) if flip_y else ky0
        xs = ax + u * (hx1 - hx0)
        ys = ay + u * (hy1 - hy0)
        if flip_x:
            xs = hx0 + hx1 - xs
        if flip_y:
            ys = hy0 + hy1 - ys
        acc += _sample_indicators(grid, ys, xs)
        used += 1
    if skipped:
        log.warning("skipped %d corpus houses without a kitchen", skipped)
    if used == 0:
        raise ValidationError("no corpus house contains a kitchen")
    return acc / used, used, skipped


def _sample_labels(grid: SemanticGrid, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    rows = np.floor(ys).astype(np.int64)
    cols = np.floor(xs).astype(np.int64)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    ok = (rr >= 0) & (rr < grid.height) & (cc >= 0) & (cc < grid.width)
    out = np.full(rr.shape, LABEL_OUTSIDE, dtype=np.int64)
    out[ok] = grid.labels[rr[ok], cc[ok]]
    return out


def _sample_indicators(grid, ys, xs) -> np.ndarray:
    labels = _sample_labels(grid, ys, xs)
    return np.stack([(labels == 2 + t) for t in range(len(ROOM_TYPES))]).astype(float)


def extent_frequencies(corpus) -> np.ndarray:
    """Mean full-label frequency per canonical cell, with the frame spanning each whole grid."""
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("cannot accumulate an empty corpus")
    acc = np.zeros((N_LABELS, CANONICAL, CANONICAL))
    u = _canonical_centers()
    for grid in corpus:
        labels = _sample_labels(grid, u * grid.height, u * grid.width)
        for lab in range(N_LABELS):
            acc[lab] += labels == lab
    return acc / len(corpus)


@dataclass
class PriorModel:
    cooccurrence: Cooccurrence
    aligned_fields: np.ndarray | None = None
    extent_fields: np.ndarray | None = None
    resolution: float = DEFAULT_RESOLUTION
    skipped: int = 0

    @property
    def corpus_size(self) -> int:
        return self.cooccurrence.corpus_size

    @property
    def alpha(self) -> float:
        return self.cooccurrence.alpha

    @property
    def window(self) -> int:
        return self.cooccurrence.window

    @classmethod
    def uniform(cls, resolution: float = DEFAULT_RESOLUTION) -> "PriorModel":
        return cls(Cooccurrence(None, 0, 1.0, window_cells(resolution)), None, None, resolution)

    @property
    def informative(self) -> bool:
        return self.cooccurrence.pair_counts is not None and self.corpus_size > 0


def train_prior(corpus, alpha: float = 1.0, window_m: float = WINDOW_M) -> PriorModel:
    corpus = list(corpus)
    co = train_cooccurrence(corpus, alpha, window_m)
    try:
        aligned, _, skipped = align_and_accumulate(corpus)
    except ValidationError:
        aligned, skipped = None, len(corpus)
    return PriorModel(co, aligned, extent_frequencies(corpus), corpus[0].resolution, skipped)


# --------------------------------------------------------------------------
# model files


def _dump_table(name: str, arr: np.ndarray) -> str:
    kind = "int" if np.issubdtype(arr.dtype, np.integer) else "float"
    values = " ".join(map(repr, arr.ravel().tolist())) if kind == "float" else " ".join(map(str, arr.ravel().tolist()))
    return f"TABLE {name} {kind} {' '.join(map(str, arr.shape))}\n{values}\n"


def save_model(model: PriorModel) -> bytes:
    header = {
        "corpus_size": model.corpus_size,
        "alpha": model.alpha,
        "window": model.window,
        "resolution": model.resolution,
        "skipped": model.skipped,
        "canonical": CANONICAL,
        "room_types": list(ROOM_TYPES),
    }
    parts = [f"{MODEL_MAGIC} {MODEL_VERSION}\n", json.dumps(header, sort_keys=True) + "\n"]
    if model.cooccurrence.pair_counts is not None:
        parts.append(_dump_table("pair_counts", model.cooccurrence.pair_counts))
    if model.aligned_fields is not None:
        parts.append(_dump_table("aligned_fields", model.aligned_fields))
    if model.extent_fields is not None:
        parts.append(_dump_table("extent_fields", model.extent_fields))
    parts.append("END\n")
    return "".join(parts).encode()


def load_model(data: bytes) -> PriorModel:
    try:
        lines = data.decode().split("\n")
    except UnicodeDecodeError as exc:
        raise ParseError(f"model file is not text: {exc}") from None
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MODEL_MAGIC:
        raise ParseError("not a roomnav prior model")
    if magic[1] != str(MODEL_VERSION):
        raise ParseError(f"unsupported model version {magic[1]}")
    try:
        header = json.loads(lines[1])
    except (IndexError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad model header: {exc}") from None
    if header.get("room_types") != list(ROOM_TYPES):
        raise ParseError("model room types do not match")
    tables = {}
    i = 2
    while True:
        if i >= len(lines):
            raise ParseError("model file is truncated")
        line = lines[i]
        if line == "END":
            break
        parts = line.split()
        if len(parts) < 3 or parts[0] != "TABLE" or i + 1 >= len(lines):
            raise ParseError(f"bad table line {i + 1}")
        name, kind, shape = parts[1], parts[2], tuple(int(v) for v in parts[3:])
        dtype = np.int64 if kind == "int" else float
        try:
            values = np.array(lines[i + 1].split(), dtype=dtype)
        except ValueError as exc:
            raise ParseError(f"table {name}: {exc}") from None
        if values.size != math.prod(shape):
            raise ParseError(f"table {name} has {values.size} values, expected {math.prod(shape)}")
        tables[name] = values.reshape(shape)
        i += 2
    co = Cooccurrence(tables.get("pair_counts"), int(header["corpus_size"]), float(header["alpha"]), int(header["window"]))
    return PriorModel(
        co,
        tables.get("aligned_fields"),
        tables.get("extent_fields"),
        float(header["resolution"]),
        int(header.get("skipped", 0)),
    )


def model_probabilities(model: PriorModel) -> dict:
    """Every derived probability table, keyed by name; used for model comparisons."""
    out = {}
    for r in range(len(ROOM_TYPES)):
        out[f"cond_{r}"] = model.cooccurrence.conditional(r)
        out[f"marg_{r}"] = model.cooccurrence.marginal(r)
    if model.aligned_fields is not None:
        out["aligned"] = model.aligned_fields
    if model.extent_fields is not None:
        out["extent"] = model.extent_fields
    return out


__all__ = [
    "CLASS_HOUSE",
    "CLASS_OUTSIDE",
    "CLASS_ROOM",
    "Cooccurrence",
    "LABEL_INTERIOR",
    "PriorModel",
    "align_and_accumulate",
    "class_map",
    "extent_frequencies",
    "load_model",
    "model_probabilities",
    "room_type_index",
    "save_model",
    "train_cooccurrence",
    "train_prior",
]

import numpy as np
import pytest

from roomnav.world import INTERIOR, OUTSIDE, WALL, RoomInstance, SemanticGrid

# ASCII maps are written top row first, i.e. +y points up the page.
ROOM_LETTERS = {"K": "Kitchen", "D": "DiningRoom", "B": "Bedroom", "T": "Bathroom", "L": "LivingRoom",
                "k": "Kitchen", "d": "DiningRoom", "b": "Bedroom", "t": "Bathroom", "l": "LivingRoom"}


def ascii_grid(art, resolution=0.25):
    """``.`` interior, ``#`` wall, ``o`` outside, room letters (one room per distinct letter)."""
    lines = [ln for ln in art.strip("\n").splitlines()]
    width = max(len(ln) for ln in lines)
    lines = [ln.ljust(width, "o") for ln in lines][::-1]
    h = len(lines)
    cells = np.full((h, width), OUTSIDE, dtype=np.int32)
    letters = sorted({ch for ln in lines for ch in ln if ch in ROOM_LETTERS})
    ids = {ch: i for i, ch in enumerate(letters)}
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch == ".":
                cells[r, c] = INTERIOR
            elif ch == "#":
                cells[r, c] = WALL
            elif ch in ids:
                cells[r, c] = ids[ch]
    rooms = []
    for ch in letters:
        rr, cc = np.nonzero(cells == ids[ch])
        rooms.append(RoomInstance(ids[ch], ROOM_LETTERS[ch], (int(cc.min()), int(rr.min()), int(cc.max()) + 1,
                                                             int(rr.max()) + 1)))
    return SemanticGrid(cells, tuple(rooms), resolution)


def random_open_grid(rng, h, w, wall_p=0.3):
    """Interior/wall noise grid with at least one interior cell."""
    cells = np.where(rng.random((h, w)) < wall_p, WALL, INTERIOR).astype(np.int32)
    if not (cells == INTERIOR).any():
        cells[rng.integers(h), rng.integers(w)] = INTERIOR
    return SemanticGrid(cells, (), 0.25)


def open_room(h, w, resolution=0.25):
    return SemanticGrid(np.full((h, w), INTERIOR, dtype=np.int32), (), resolution)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

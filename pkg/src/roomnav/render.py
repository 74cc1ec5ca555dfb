"""Binary PPM (P6) images of worlds, crops and heatmaps."""

from __future__ import annotations

import numpy as np

from .world import INTERIOR, OUTSIDE, ROOM_TYPES, WALL, SemanticGrid

WORLD_PALETTE = {
    "Outside": (255, 255, 255),
    "Interior": (160, 160, 160),
    "Wall": (0, 0, 0),
    "Bathroom": (66, 135, 245),
    "Bedroom": (155, 89, 182),
    "DiningRoom": (241, 196, 15),
    "Kitchen": (231, 76, 60),
    "LivingRoom": (46, 204, 113),
}
# crop classes 1..3: outside, in the house but not the room, in the room
CROP_PALETTE = ((255, 255, 255), (160, 160, 160), (220, 40, 40))
TRAJECTORY = (20, 20, 20)


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def world_image(grid: SemanticGrid, path=None) -> np.ndarray:
    """World colors with +y up. ``path`` is an optional sequence of (x, y) points to draw."""
    img = np.zeros(grid.shape + (3,), dtype=np.uint8)
    img[grid.cells == OUTSIDE] = WORLD_PALETTE["Outside"]
    img[grid.cells == INTERIOR] = WORLD_PALETTE["Interior"]
    img[grid.cells == WALL] = WORLD_PALETTE["Wall"]
    for room in grid.rooms:
        img[grid.cells == room.id] = WORLD_PALETTE[room.room_type]
    for x, y in path or ():
        r, c = grid.cell_of((x, y))
        if grid.in_bounds(r, c):
            img[r, c] = TRAJECTORY
    return img[::-1]


def crop_image(labels: np.ndarray) -> np.ndarray:
    """Egocentric crop classes (rows to the left, columns forward) drawn with the heading up."""
    labels = np.asarray(labels)
    up = labels[::-1, ::-1].T  # image row 0 = farthest ahead, image column 0 = farthest left
    return np.array(CROP_PALETTE, dtype=np.uint8)[up - 1]


def heatmap_image(field: np.ndarray, vmax: float | None = None) -> np.ndarray:
    """Black-red-yellow-white ramp, +y up."""
    f = np.asarray(field, dtype=float)
    top = vmax if vmax is not None else (f.max() if f.size and f.max() > 0 else 1.0)
    v = np.clip(f / top, 0.0, 1.0)
    rgb = np.stack([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)
    return (255 * rgb + 0.5).astype(np.uint8)[::-1]


def upscale(img: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(img, k, axis=0), k, axis=1)


__all__ = ["CROP_PALETTE", "ROOM_TYPES", "WORLD_PALETTE", "crop_image", "heatmap_image", "ppm_bytes",
           "read_ppm", "upscale", "world_image"]

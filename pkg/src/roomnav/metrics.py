"""Episode outcome scoring shared by the agent loop and the evaluation harness."""

from __future__ import annotations

from .errors import ValidationError
from .world import SemanticGrid


def spl(success: bool, l: float, p: float) -> float:
    """RoomNav SPL: ``S * l / max(l, p)``."""
    if l < 0 or p < 0:
        raise ValidationError("path lengths must be non-negative")
    if not success:
        return 0.0
    denom = max(l, p)
    return 1.0 if denom == 0 else l / denom


def is_success(grid: SemanticGrid, final_point, target_type: str, stopped: bool) -> bool:
    return bool(stopped) and grid.point_inset_in(final_point, target_type)

"""Room navigation with amodal semantic belief maps, at desk scale."""

__version__ = "0.1.0"

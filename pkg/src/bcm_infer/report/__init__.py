"""SVG figures and console summaries."""

from .figures import (
    EmptySelectionError,
    FigureKind,
    FigureSpec,
    default_figure_specs,
    render_figure,
)
from .summary import print_aggregate_summary, print_simulation_summary, print_sweep_summary

__all__ = [
    "EmptySelectionError",
    "FigureKind",
    "FigureSpec",
    "default_figure_specs",
    "print_aggregate_summary",
    "print_simulation_summary",
    "print_sweep_summary",
    "render_figure",
]

"""Figure rendering for frsde experiment artifacts."""

from .render import (
    FIGURE_KINDS,
    FigureSpec,
    RenderError,
    RenderResult,
    SpecError,
    load_spec,
    render,
)

__all__ = [
    "FIGURE_KINDS",
    "FigureSpec",
    "RenderError",
    "RenderResult",
    "SpecError",
    "load_spec",
    "render",
]

from .forward import RenderOutput, render
from .backward import GaussianGrads, render_backward
from .projection import Splat2D, project
from .reference import render_reference

__all__ = [
    "GaussianGrads",
    "RenderOutput",
    "Splat2D",
    "project",
    "render",
    "render_backward",
    "render_reference",
]

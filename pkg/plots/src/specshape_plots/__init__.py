"""Figure rendering for specshape experiment CSV artifacts."""

from .render import (
    FIGURES,
    EmptyInputError,
    MissingColumnError,
    PlotSpec,
    RenderResult,
    render,
)

__version__ = "0.1.0"

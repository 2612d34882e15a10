"""Story-plot generation pipeline, corpus tooling, pairwise judging, and
preference-annotation service."""

from .config import PipelineConfig
from .model import (
    Character,
    OutlineSection,
    ParseError,
    PlotDocument,
    ValidationReport,
    parse_plot,
    render_plot,
    split_sft,
    validate_structure,
)

__version__ = "0.1.0"

__all__ = [
    "Character",
    "OutlineSection",
    "ParseError",
    "PipelineConfig",
    "PlotDocument",
    "ValidationReport",
    "parse_plot",
    "render_plot",
    "split_sft",
    "validate_structure",
    "__version__",
]

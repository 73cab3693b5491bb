"""Speculative chain-of-thought orchestration engine."""

from .core import (
    CotDraft,
    CotSource,
    GenerationParams,
    Question,
    ReasoningTrace,
    RunReport,
    SelectionOutcome,
    StageLatencies,
    extract_think_block,
)
from .pipeline import PipelineConfig, run_batch, run_scot, run_vanilla

__version__ = "0.1.0"

__all__ = [
    "CotDraft",
    "CotSource",
    "GenerationParams",
    "PipelineConfig",
    "Question",
    "ReasoningTrace",
    "RunReport",
    "SelectionOutcome",
    "StageLatencies",
    "extract_think_block",
    "run_batch",
    "run_scot",
    "run_vanilla",
    "__version__",
]

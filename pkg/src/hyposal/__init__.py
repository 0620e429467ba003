"""Salient object detection from augmented objectness hypotheses."""

from .evaluation import EvalReport, evaluate, load_dataset
from .pipeline import PipelineConfig, SaliencyResult, detect

__version__ = "0.1.0"

__all__ = ["EvalReport", "PipelineConfig", "SaliencyResult", "detect", "evaluate", "load_dataset", "__version__"]

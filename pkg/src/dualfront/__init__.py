"""Geodesic dual-front image segmentation with asymmetric quadratic metrics."""

from .engine import DualFrontConfig, EvolutionTrace, evolve_step, init_labels, run
from .grid import ImageGrid, LabelMap
from .metrics import MetricField, MetricSample, Tensor2, eval_metric

__all__ = [
    "DualFrontConfig", "EvolutionTrace", "ImageGrid", "LabelMap",
    "MetricField", "MetricSample", "Tensor2", "eval_metric", "evolve_step",
    "init_labels", "run",
]

__version__ = "0.1.0"

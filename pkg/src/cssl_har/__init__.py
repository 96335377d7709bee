"""Continual self-supervised learning for accelerometer activity recognition.

A numpy-only stack: a small reverse-mode autodiff engine, a 1D conv encoder,
BYOL / MoCo-style contrastive objectives, feature and classifier
distillation across a class-incremental task stream, and a runner that
writes accuracy matrices, summary metrics and SVG plots.
"""

from .config import ConfigError, ExperimentConfig
from .continual import ContinualConfig, LambdaSchedule, lambda_at
from .runner import run_experiment, sweep

__all__ = ["ConfigError", "ExperimentConfig", "ContinualConfig", "LambdaSchedule", "lambda_at",
           "run_experiment", "sweep"]
__version__ = "0.1.0"

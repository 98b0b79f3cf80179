"""Virtual-motion gesture recognition toolkit.

Turns muscle-only (sEMG) gesture classification into a multimodal problem
without extra hardware: an adversarial generator learns to synthesize
motion-sensor windows from muscle windows, and a dual-stream convolutional
classifier fuses both modalities. Includes the signal chains, a small
verified autodiff core, dataset tooling with a seeded synthetic oracle, and
an experiment harness that reproduces the unimodal / virtual / real-motion
comparison at desk scale.
"""

from . import data, fusion, gan, nn, pipeline, sigproc
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    FormatError,
    LeakageError,
    ModalityError,
    StatsMismatchError,
    VimuError,
)

__version__ = "0.1.0"

__all__ = [
    "data",
    "fusion",
    "gan",
    "nn",
    "pipeline",
    "sigproc",
    "VimuError",
    "ConfigError",
    "DataError",
    "FormatError",
    "ModalityError",
    "StatsMismatchError",
    "LeakageError",
    "DivergenceError",
    "__version__",
]

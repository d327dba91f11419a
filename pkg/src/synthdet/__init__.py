"""Synthetic object-detection datasets from scanned meshes and background photos.

Pipeline: multi-view sprite rendering, background keying, ACE lighting
variants, anchor-based compositing with labels derived by construction.
Also: Mahalanobis open-set rejection and detection mAP evaluation.
"""
from .errors import ConfigError, ParseError, SynthDetError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "ParseError", "SynthDetError", "__version__"]

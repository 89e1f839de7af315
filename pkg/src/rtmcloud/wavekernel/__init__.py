"""Acoustic wave kernel: forward modeling, adjoint propagation, RTM imaging.

The hot stencil loops live in the compiled ``_stencil`` extension with a
NumPy fallback (``_stencil_py``) selected at import; everything else is
orchestration in ``solver``.
"""

from ._backend import backend_name
from .solver import (
    CFLViolationError,
    ImageGrid,
    NumericalBlowupError,
    ShotRecord,
    SourceWavefield,
    Wavelet,
    adjoint_dot_test,
    default_dt,
    forward_model,
    ricker,
    rtm_shot_image,
    stable_dt,
)

__all__ = [
    "CFLViolationError",
    "ImageGrid",
    "NumericalBlowupError",
    "ShotRecord",
    "SourceWavefield",
    "Wavelet",
    "adjoint_dot_test",
    "backend_name",
    "default_dt",
    "forward_model",
    "ricker",
    "rtm_shot_image",
    "stable_dt",
]

"""Discrete-simulation kernel with a compiled core and NumPy fallback.

The compiled extension (``_core``, built from Cython) is preferred; when
it is not available the pure-NumPy twin ``_fallback`` is used instead.
``IMPL`` reports which one was selected.
"""

from .errors import IntegrationFailure

try:
    from ._core import IMPL, simulate_path
except ImportError:  # pragma: no cover - depends on build environment
    from ._fallback import IMPL, simulate_path

__all__ = ["IMPL", "IntegrationFailure", "simulate_path"]

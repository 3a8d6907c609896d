"""Rays, length spectra, WKB modes and rigidity checks for radial wave speeds.

Submodules are imported lazily so that the command-line entry point can set
thread limits before numpy is loaded.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_LAZY = {
    "HelioseisError": "errors",
    "NumericalError": "errors",
    "ValidationError": "errors",
    "RadialModel": "model",
    "load_model": "model",
    "make_model": "model",
}

__all__ = ["__version__", *_LAZY]


def __getattr__(name):
    if name in _LAZY:
        return getattr(importlib.import_module(f".{_LAZY[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

"""Backend selection for the hot numerical kernel.

The sweep simulation evaluates the hyperfine-triplet Lorentzian sum for
every (probe step, pixel) pair; everything else in the pipeline is cheap by
comparison. Two interchangeable implementations exist:

* ``_fast``: a compiled extension, built with FP contraction disabled.
* ``_reference``: plain vectorized numpy.

Both perform the identical sequence of IEEE-754 double operations, so their
outputs are bit-identical; tests assert that. The compiled backend is used
when importable, and ``QDISA_KERNEL=reference|fast`` forces a choice.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ConfigError
from . import _reference

_requested = os.environ.get("QDISA_KERNEL", "").strip().lower()

_impl = None
_backend_name = None
if _requested == "reference":
    _impl, _backend_name = _reference, "reference"
elif _requested in ("", "fast"):
    try:
        from . import _fast

        _impl, _backend_name = _fast, "fast"
    except ImportError:
        if _requested == "fast":
            raise ConfigError(
                "QDISA_KERNEL=fast but the compiled kernel is not available"
            )
        _impl, _backend_name = _reference, "reference"
else:
    raise ConfigError(f"QDISA_KERNEL must be 'fast' or 'reference', got {_requested!r}")


def backend_name() -> str:
    """Which implementation is active: 'fast' (compiled) or 'reference'."""
    return _backend_name


def get_impl(name: str):
    """Fetch a specific backend module by name (for benchmarks/tests)."""
    if name == "reference":
        return _reference
    if name == "fast":
        from . import _fast

        return _fast
    raise ConfigError(f"unknown kernel backend {name!r}")


def triplet_sum(probes, centers, hwhm, hyperfine_hz: float, out=None):
    """Hyperfine-triplet Lorentzian sum for each probe x pixel pair.

    out[f, p] = L(d) + L(d - hyp) + L(d + hyp),  d = probes[f] - centers[p],
    L(x) = a^2 / (a^2 + x^2),  a = hwhm[p].

    ``probes`` has shape (F,), ``centers`` and ``hwhm`` shape (P,); the
    result has shape (F, P). ``hwhm`` entries must be positive. The caller
    controls memory via F (chunk the probe axis for large pixel counts).
    """
    probes = np.ascontiguousarray(probes, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    hwhm = np.ascontiguousarray(hwhm, dtype=np.float64)
    if probes.ndim != 1 or centers.ndim != 1 or hwhm.ndim != 1:
        raise ValueError("probes, centers, hwhm must be 1-D")
    if centers.shape != hwhm.shape:
        raise ValueError("centers and hwhm must have equal length")
    if np.any(hwhm <= 0):
        raise ValueError("hwhm must be positive")
    shape = (probes.shape[0], centers.shape[0])
    if out is None:
        out = np.empty(shape, dtype=np.float64)
    elif out.shape != shape or out.dtype != np.float64 or not out.flags.c_contiguous:
        raise ValueError("out must be a C-contiguous float64 array of shape (F, P)")
    _impl.triplet_sum(probes, centers, hwhm, float(hyperfine_hz), out)
    return out

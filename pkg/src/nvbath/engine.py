"""Kernel selection and shared low-level helpers.

The compiled extension `nvbath._kernel` is preferred when it imported
cleanly; otherwise the numpy implementation `nvbath._kernel_py` is used.
Set NVBATH_PURE_PYTHON=1 to force the fallback (useful for benchmarking
and debugging).
"""

import os

import numpy as np

from . import _kernel_py

if os.environ.get("NVBATH_PURE_PYTHON"):
    _impl = _kernel_py
    KERNEL = "python"
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]

        KERNEL = "compiled"
    except ImportError:
        _impl = _kernel_py
        KERNEL = "python"

evolve = _impl.evolve

# Global sign convention of the pseudospin mapping; coherence magnitudes
# are invariant under it.
PSEUDOSPIN_SIGN = 1.0

# Classical spin-length correction: a unit vector drawn uniformly on the
# sphere has <Rz^2> = 1/3, while the z-projection of a spin-1/2 in the
# maximally mixed state has unit normalized second moment.  Scaling the
# system-bath field by sqrt(3) restores the spin-1/2 second moment, so
# the simulated dephasing reproduces T2* = sqrt(2)/b.  Exposed as a
# config hook (EvolutionParams.system_bath_scale) for calibration.
DEFAULT_SYSTEM_BATH_SCALE = float(np.sqrt(3.0))

# Step-size rule: dt * (estimated max precession rate) <= MAX_PHASE_PER_STEP.
MAX_PHASE_PER_STEP = 0.05

_TRIG_SNAP = 1e-12


def _snap(value: float) -> float:
    """Clean tiny float noise in trig of right-angle pulses (sin(pi) etc.)."""
    for target in (-1.0, 0.0, 1.0):
        if abs(value - target) < _TRIG_SNAP:
            return target
    return value


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis.

    Exact at multiples of pi/2 (trig values snapped), so ideal pi pulses
    about x keep an in-plane central spin exactly in plane.
    """
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if not np.isclose(norm, 1.0, atol=1e-9):
        raise ValueError(f"pulse axis must be unit length, got |axis| = {norm}")
    n = n / norm
    c = _snap(float(np.cos(angle)))
    s = _snap(float(np.sin(angle)))
    cross = np.array(
        [
            [0.0, -n[2], n[1]],
            [n[2], 0.0, -n[0]],
            [-n[1], n[0], 0.0],
        ]
    )
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(n, n)


def max_field_estimate(A, D, sb_scale, hz_max=0.0) -> float:
    """Conservative bound on the fastest precession rate in the system.

    Central spin: a few standard deviations of its bath field.  Bath spin
    j: worst-case back-action plus the root-sum-square of its couplings
    (a >3 sigma statistical bound for an unpolarized bath).
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 1.0
    b = 0.5 * np.sqrt(np.sum(A * A))
    central = 3.0 * abs(sb_scale) * b / np.sqrt(3.0)
    d_rss = np.sqrt(np.sum(np.asarray(D, dtype=float) ** 2, axis=1))
    bath = np.max(0.5 * abs(sb_scale) * np.abs(A) + d_rss) + abs(hz_max)
    return max(central, bath, 1e-12)


def stable_dt(A, D, sb_scale, hz_max=0.0) -> float:
    """Largest step satisfying the phase-per-step rule for this coupling set."""
    return MAX_PHASE_PER_STEP / max_field_estimate(A, D, sb_scale, hz_max)

"""Proximal maps for complex fields."""

from __future__ import annotations

import numpy as np


def soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft-thresholding: shrink magnitudes by tau, keep phases.

    tau = 0 is the identity; magnitudes below tau collapse to exactly 0.
    """
    if tau == 0.0:
        return x.copy()
    mag = np.abs(x)
    scale = np.maximum(mag - tau, 0.0)
    out = np.zeros_like(x)
    nz = mag > 0.0
    out[nz] = x[nz] * (scale[nz] / mag[nz])
    return out


def clamp_magnitude(x: np.ndarray, max_mag: float = 1.0) -> np.ndarray:
    """Project magnitudes onto [0, max_mag], preserving phase."""
    mag = np.abs(x)
    over = mag > max_mag
    out = x.copy()
    out[over] = x[over] * (max_mag / mag[over])
    return out

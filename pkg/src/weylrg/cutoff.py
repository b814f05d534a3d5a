"""Smooth compact-support cutoff shared by the UV regulator and the scale bands."""

from __future__ import annotations

import numpy as np


def _mollifier(u):
    """exp(-1/u) for u > 0, 0 otherwise (smooth, vanishing to all orders at 0)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    # mask before dividing so the dead branch never evaluates 1/0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_cutoff(s):
    """chibar(s): 1 on [0,1], 0 on [2,inf), smooth strictly-decreasing ramp between.

    chibar(s) = psi(2-s) / (psi(2-s) + psi(s-1)) with psi(u) = exp(-1/u) for
    u > 0 and 0 otherwise.  Accepts scalars or arrays of s >= 0.
    """
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    if np.any(s < 0):
        raise ValueError("smooth_cutoff expects s >= 0")
    a = _mollifier(2.0 - s)
    b = _mollifier(s - 1.0)
    out = np.where(s <= 1.0, 1.0, np.where(s >= 2.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))
    return float(out[0]) if scalar else out

"""Shared discretization helpers for the interface and norm modules."""

from __future__ import annotations

import numpy as np
from scipy.special import zeta


def trapezoid_zeta_error(gamma: float) -> float:
    """Leading trapezoid error for ``int |z|^-gamma`` with nodes ``z = 2h, 3h, ...``.

    With half weight on the first node the one-sided sum overshoots the
    integral from ``2h`` by ``e(gamma) h^(1-gamma)`` (generalized
    Euler-Maclaurin), where

        e(gamma) = zeta(gamma) - 1 - 2^(-gamma-1) + 2^(1-gamma) / (1-gamma).

    Valid for ``gamma < 1``; ``e(0) = 0``.
    """
    if not gamma < 1:
        raise ValueError("gamma must be < 1")
    if gamma == 0:
        return 0.0
    return float(zeta(gamma) - 1.0 - 2.0 ** (-gamma - 1.0) + 2.0 ** (1.0 - gamma) / (1.0 - gamma))


def _pad(f, width):
    return np.pad(f, width, mode="edge")


def fd1(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central first derivative; ``f`` is extended by its edge values."""
    g = _pad(f, 2)
    return ((g[:-4] - 8.0 * g[1:-3]) + (8.0 * g[3:-1] - g[4:])) / (12.0 * h)


def fd2(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central second derivative; ``f`` is extended by its edge values."""
    g = _pad(f, 2)
    return (((-g[:-4] + 16.0 * g[1:-3]) - 30.0 * g[2:-2]) + (16.0 * g[3:-1] - g[4:])) / (12.0 * h * h)


def fd4(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth derivative as ``fd2(fd2(f))``."""
    return fd2(fd2(f, h), h)

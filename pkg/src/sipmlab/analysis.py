"""Sobolev norms, the Gagliardo seminorm, dissipation and energy monitors.

Grids are uniform with spacing ``h``; when ``endpoint=True`` the last
sample is the periodic image of the first and is dropped before the FFT.
Fourier norms use ``||f||_s^2 = (h/M) sum (1 + xi^2)^s |F(xi)|^2`` with
physical frequencies ``xi = 2 pi fftfreq(M, h)``, so ``s = 0`` is the
trapezoid ``L2`` norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import fd1, fd4, trapezoid_zeta_error
from .multiplier import DomainError

__all__ = [
    "NormReport",
    "hs_norm",
    "fourier_seminorm",
    "gagliardo_seminorm",
    "dissipation_functional",
    "energy_report",
    "power_law_fit",
]


def _spectrum(samples, h, endpoint, edge_tol):
    f = np.asarray(samples, dtype=float)
    if edge_tol is not None:
        scale = max(np.max(np.abs(f)), 1e-300)
        if max(abs(f[0]), abs(f[-1])) > edge_tol * scale:
            raise DomainError("samples do not vanish at the window edges")
    if endpoint:
        f = f[:-1]
    M = f.size
    F = np.fft.fft(f)
    xi = 2 * np.pi * np.fft.fftfreq(M, h)
    return F, xi, M


def hs_norm(samples, h: float, s: float = 0.0, endpoint: bool = True,
            edge_tol: float | None = 1e-8) -> float:
    """Inhomogeneous ``H^s`` norm of a window-supported signal.

    Examples
    --------
    >>> import numpy as np
    >>> x = np.linspace(-np.pi, np.pi, 257)
    >>> round(hs_norm(np.sin(x), x[1] - x[0]) ** 2, 12)  # pi
    3.14159265359
    """
    if s < 0:
        raise DomainError("s must be non-negative")
    F, xi, M = _spectrum(samples, h, endpoint, edge_tol)
    return float(np.sqrt(h / M * np.sum((1 + xi ** 2) ** s * np.abs(F) ** 2)))


def fourier_seminorm(samples, h: float, s: float, endpoint: bool = True,
                     edge_tol: float | None = 1e-8) -> float:
    """Homogeneous ``sqrt(sum |xi|^(2s) |F|^2 h / M)``."""
    F, xi, M = _spectrum(samples, h, endpoint, edge_tol)
    return float(np.sqrt(h / M * np.sum(np.abs(xi) ** (2 * s) * np.abs(F) ** 2)))


def gagliardo_seminorm(samples, h: float, s: float) -> float:
    """``sqrt(int int |f(x) - f(y)|^2 / |x - y|^(1+2s))`` over the line.

    Samples cover a closed window and are extended by their edge values.
    The same split as the interface velocity is used: closed-form near
    field ``|x - y| <= 2h``, corrected trapezoid in the middle, exact tails.
    """
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    f = np.asarray(samples, dtype=float)
    n = f.size
    N = n - 1
    x = h * np.arange(n)
    delta = 2 * h
    fp = fd1(f, h)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dz = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dz, 1.0)
    T = (f[:, None] - f[None, :]) ** 2 * dz ** (-(1 + 2 * s))
    right = (j >= i + 2).astype(float)
    right[(j == i + 2) | (j == N)] *= 0.5
    right[i + 2 >= N] = 0.0
    left = (j <= i - 2).astype(float)
    left[(j == i - 2) | (j == 0)] *= 0.5
    left[i - 2 <= 0] = 0.0
    middle = h * np.sum((right + left) * T, axis=1)
    A = fp * fp
    near = A * 2 * delta ** (2 - 2 * s) / (2 - 2 * s)
    idx = np.arange(n)
    sides = (idx + 2 < N).astype(float) + (idx - 2 > 0).astype(float)
    corr = sides * trapezoid_zeta_error(2 * s - 1) * h ** (2 - 2 * s) * A
    lo = np.minimum(x[0], x - delta)
    hi = np.maximum(x[-1], x + delta)
    tail = ((f - f[0]) ** 2 * (x - lo) ** (-2 * s) + (f - f[-1]) ** 2 * (hi - x) ** (-2 * s)) / (2 * s)
    inner = middle + near - corr + tail
    wx = np.full(n, h)
    wx[[0, -1]] *= 0.5
    # x outside / y inside mirrors the tail term
    return float(np.sqrt(np.dot(wx, inner) + np.dot(wx, tail)))


def dissipation_functional(f, h: float, beta: float, endpoint: bool = True) -> float:
    """``(1+beta) / (8 (1 + ||f'||_inf^2)^((2+beta)/2)) ||Lambda^((1+beta)/2) d^4 f||^2``."""
    lam = _frac_d4(f, h, beta, endpoint)
    return float((1 + beta) / (8 * (1 + np.max(np.abs(fd1(f, h))) ** 2) ** ((2 + beta) / 2)) * lam)


def _frac_d4(f, h, beta, endpoint=True):
    F, xi, M = _spectrum(fd4(np.asarray(f, dtype=float), h), h, endpoint, None)
    return float(h / M * np.sum(np.abs(xi) ** (1 + beta) * np.abs(F) ** 2))


@dataclass
class NormReport:
    """Norms of an interface profile and the two sides of the energy inequalities.

    ``lhs_ee1 = sum f f_t h`` is the discrete ``d/dt ||f||^2 / 2`` and
    ``rhs_ee1 = ||f||_{H^2}^2``; ``c_ee1`` is the smallest constant making
    ``lhs <= C rhs`` hold at this instant. The ``H^4`` pair adds
    ``sum d4f d4f_t h``, and ``c_h4`` fits
    ``lhs_h4 <= C ||f||_{H^4}^(3+2b) (1 + ||f||_{H^4}^(3+b)) - dissipation``.
    """

    l2: float
    h2: float
    h4: float
    frac_dissipation: float
    dissipation: float
    lhs_ee1: float
    rhs_ee1: float
    c_ee1: float
    lhs_h4: float
    poly_h4: float
    c_h4: float
    gagliardo_check: float | None = None


def energy_report(state, ft, gagliardo_s: float | None = None) -> NormReport:
    """Evaluate the norm monitors for a state and its right-hand side ``ft``."""
    f, h, beta = state.f, state.h, state.beta
    ft = np.asarray(ft, dtype=float)
    l2 = hs_norm(f, h, 0, edge_tol=None)
    h2 = hs_norm(f, h, 2, edge_tol=None)
    h4 = hs_norm(f, h, 4, edge_tol=None)
    frac = _frac_d4(f, h, beta)
    diss = dissipation_functional(f, h, beta)
    w = np.full(f.size, h)
    w[[0, -1]] *= 0.5
    lhs = float(np.dot(w, f * ft))
    rhs = h2 ** 2
    c_ee1 = max(lhs, 0.0) / rhs if rhs > 0 else 0.0
    lhs_h4 = lhs + float(np.dot(w, fd4(f, h) * fd4(ft, h)))
    poly = h4 ** (3 + 2 * beta) * (1 + h4 ** (3 + beta))
    c_h4 = max(lhs_h4 + diss, 0.0) / poly if poly > 0 else 0.0
    g = None
    if gagliardo_s is not None and l2 > 0:
        gs = gagliardo_seminorm(f, h, gagliardo_s)
        fs = fourier_seminorm(f, h, gagliardo_s, edge_tol=None)
        g = gs / fs
    return NormReport(l2, h2, h4, frac, diss, lhs, rhs, c_ee1, lhs_h4, poly, c_h4, g)


def power_law_fit(xs, ys):
    """Least squares of ``log y = slope log x + intercept``; returns ``(slope, intercept, r2)``.

    >>> round(power_law_fit([1, 2, 4], [1, 4, 16])[0], 10)
    2.0
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 2:
        raise DomainError("need at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)

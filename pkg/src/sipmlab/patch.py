"""Contour dynamics of a graph interface ``x2 = f(x1, t)`` between two densities.

The interface moves by

    f_t(eta) = J int (eta - zeta) (f'(eta) - f'(zeta))
                     / ((eta - zeta)^2 + (f(eta) - f(zeta))^2)^((2+beta)/2) dzeta

with ``J = (rho2 - rho1) / C_beta > 0`` and ``0 < beta < 1``. The
perturbation lives on ``[-L, L]``; outside the window ``f`` is held at its
edge value (zero for admissible data).

Discretization (``N`` intervals, nodes ``eta_i = -L + i h``):

* near field ``|zeta - eta| <= 2h``: leading Taylor term in closed form;
* middle field: trapezoid rule over the nodes, minus the generalized
  Euler-Maclaurin term ``2 e(beta) h^(1-beta) A`` from the ``|z|^-beta``
  endpoint singularity, so the scheme is second order;
* tail: exact antiderivative outside the window.

Derivatives are fourth-order central differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from numba import njit
from scipy import integrate
from scipy.interpolate import make_interp_spline
from scipy.special import gamma as _gamma

from ._numerics import fd1, fd2, fd4, trapezoid_zeta_error
from .multiplier import DomainError

__all__ = [
    "SupportError",
    "CFLError",
    "InterfaceState",
    "VelocitySample",
    "PatchRun",
    "cbeta",
    "contour_rhs",
    "contour_rhs_numpy",
    "contour_rhs_reference",
    "velocity_at_point",
    "normal_velocity_limit",
    "extrapolate_limit",
    "max_slope_point",
    "cfl_dt",
    "default_cfl",
    "stiffness",
    "step_rk4",
    "run",
    "C_CFL",
]

C_CFL = None  # None selects the beta-dependent stable constant
RK4_REAL_LIMIT = 2.785293563405282  # RK4 stability interval on the negative real axis
CFL_SAFETY = 0.8


class SupportError(RuntimeError):
    """The profile no longer vanishes at the window edges."""


class CFLError(ValueError):
    """Time step above the explicit stability bound."""


def cbeta(beta: float) -> float:
    """``C_beta = pi 2^(2-beta) Gamma((2-beta)/2) / (beta Gamma(beta/2))``.

    Accepts ``0 < beta <= 1``; ``beta = 1`` gives ``2 pi``.
    """
    if not (0 < beta <= 1):
        raise DomainError(f"cbeta needs 0 < beta <= 1, got {beta!r}")
    return float(math.pi * 2.0 ** (2 - beta) * _gamma((2 - beta) / 2) / (beta * _gamma(beta / 2)))


@dataclass
class InterfaceState:
    """Samples ``f_i`` on ``N + 1`` symmetric nodes of ``[-L, L]``.

    ``jump`` is ``(rho2 - rho1) / C_beta``.
    """

    f: np.ndarray
    L: float
    beta: float
    jump: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f.ndim != 1 or self.f.size - 1 < 64:
            raise DomainError("need N >= 64 intervals")
        if not (0 < self.beta < 1):
            raise DomainError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not self.jump > 0:
            raise DomainError("jump must be positive (rho2 > rho1)")
        if not self.L > 0:
            raise DomainError("L must be positive")
        if not np.all(np.isfinite(self.f)):
            raise DomainError("profile must be finite")

    @property
    def N(self) -> int:
        return self.f.size - 1

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def eta(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N + 1)

    def edge_residual(self) -> float:
        """Largest ``|f|, |f'|, .., |f''''|`` over the two edge nodes (zero extension)."""
        g = np.pad(self.f, 4)
        h = self.h
        d1 = np.pad(fd1(self.f, h), 4)
        d2 = np.pad(fd2(self.f, h), 4)
        d3 = np.pad(fd1(fd2(self.f, h), h), 4)
        d4 = np.pad(fd4(self.f, h), 4)
        ders = [g, d1, d2, d3, d4]
        idx = [4, 4 + self.N]
        return float(max(np.max(np.abs(d[idx])) for d in ders))

    def check_support(self, tol: float = 1e-10, relative: bool = False, scale: float | None = None):
        """Raise :class:`SupportError` if the edge values exceed ``tol`` times a reference.

        The reference is 1, or ``scale`` (default ``max|f|``) when ``relative``.
        """
        if relative:
            ref = max(np.max(np.abs(self.f)) if scale is None else scale, 1e-300)
        else:
            ref = 1.0
        edge = max(abs(self.f[0]), abs(self.f[-1])) if relative else self.edge_residual()
        if edge > tol * ref:
            raise SupportError(
                f"profile reaches the window edge at t={self.t!r}: {edge:.3e} > {tol * ref:.3e}")
        return self

    # initial data -----------------------------------------------------------------
    @classmethod
    def gaussian(cls, amp=0.1, width=1.0, L=20.0, N=1024, beta=0.5, jump=1.0):
        eta = -L + (2.0 * L / N) * np.arange(N + 1)
        return cls(amp * np.exp(-(eta / width) ** 2), L, beta, jump).check_support()

    @classmethod
    def bump(cls, amp=0.1, width=2.0, L=20.0, N=1024, beta=0.5, jump=1.0):
        """Smooth compact bump ``amp exp(1 - 1/(1 - (x/width)^2))`` on ``|x| < width``."""
        eta = -L + (2.0 * L / N) * np.arange(N + 1)
        u = eta / width
        f = np.zeros_like(eta)
        m = np.abs(u) < 1
        f[m] = amp * np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
        return cls(f, L, beta, jump).check_support()

    @classmethod
    def from_file(cls, path, beta=0.5, jump=1.0):
        """Two columns ``eta,f`` (header allowed) on a uniform symmetric grid."""
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=_header_rows(path))
        eta, f = data[:, 0], data[:, 1]
        L = float(eta[-1])
        N = eta.size - 1
        if not np.allclose(eta, -L + (2 * L / N) * np.arange(N + 1), rtol=0, atol=1e-9 * L):
            raise DomainError(f"{path}: grid must be uniform and symmetric about 0")
        return cls(f, L, beta, jump).check_support()

    @classmethod
    def zero(cls, L=20.0, N=1024, beta=0.5, jump=1.0):
        return cls(np.zeros(N + 1), L, beta, jump)


def _header_rows(path):
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(x) for x in first.replace(",", " ").split()]
        return 0
    except ValueError:
        return 1


# right-hand side -----------------------------------------------------------------

_QMAX = 0.01
_NTERMS = 10


def _binom_coeffs(p):
    c = np.empty(_NTERMS)
    c[0] = 1.0
    for k in range(1, _NTERMS):
        c[k] = c[k - 1] * (-p - (k - 1)) / k
    return c


@njit(cache=True)
def _pair_term(i, j, f, fp, kz, invdz2, coef, p, series):
    d = j - i
    df = f[i] - f[j]
    q = df * df * invdz2[d]
    if series:
        s = coef[_NTERMS - 1]
        for k in range(_NTERMS - 2, -1, -1):
            s = s * q + coef[k]
    else:
        s = (1.0 + q) ** (-p)
    return -kz[d] * (fp[i] - fp[j]) * s


@njit(cache=True, fastmath=True)
def _row_series(i, f, fp, kz, invdz2, coef, out):
    n = f.size
    fi, gi = f[i], fp[i]
    acc = 0.0
    for j in range(i + 2, n):
        d = j - i
        df = fi - f[j]
        q = df * df * invdz2[d]
        s = coef[_NTERMS - 1]
        for k in range(_NTERMS - 2, -1, -1):
            s = s * q + coef[k]
        t = -kz[d] * (gi - fp[j]) * s
        acc += t
        out[j] += t
    return acc


@njit(cache=True, fastmath=True)
def _row_pow(i, f, fp, kz, invdz2, p, out):
    n = f.size
    fi, gi = f[i], fp[i]
    acc = 0.0
    for j in range(i + 2, n):
        d = j - i
        df = fi - f[j]
        t = -kz[d] * (gi - fp[j]) * (1.0 + df * df * invdz2[d]) ** (-p)
        acc += t
        out[j] += t
    return acc


@njit(cache=True)
def _middle_sums(f, fp, kz, invdz2, coef, p, series):
    """Corrected-trapezoid sums over ``|i - j| >= 2``.

    The pair term is symmetric in ``(i, j)``; ``kz[d] = (d h)^(-1-beta)``.
    With ``q = (df / dz)^2``, the factor ``(1 + q)^-p`` is a binomial series
    when every pair has ``q < _QMAX`` (truncation below rounding).
    """
    n = f.size
    N = n - 1
    out = np.zeros(n)
    for i in range(n - 2):
        if series:
            out[i] += _row_series(i, f, fp, kz, invdz2, coef, out)
        else:
            out[i] += _row_pow(i, f, fp, kz, invdz2, p, out)
    # boundary weights: segment ends carry 1/2, empty segments carry 0
    for i in range(n - 2):
        j = i + 2
        t = _pair_term(i, j, f, fp, kz, invdz2, coef, p, series)
        out[i] -= (1.0 if j == N else 0.5) * t
        out[j] -= (1.0 if i == 0 else 0.5) * t
        if j < N:
            out[i] -= 0.5 * _pair_term(i, N, f, fp, kz, invdz2, coef, p, series)
    for jj in range(3, n):
        out[jj] -= 0.5 * _pair_term(0, jj, f, fp, kz, invdz2, coef, p, series)
    return out


def _middle_sums_numpy(eta, f, fp, beta):
    n = eta.size
    N = n - 1
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dz = eta[:, None] - eta[None, :]
    df = f[:, None] - f[None, :]
    den = dz * dz + df * df
    np.fill_diagonal(den, 1.0)
    T = dz * (fp[:, None] - fp[None, :]) * den ** (-(1.0 + 0.5 * beta))
    right = (j >= i + 2).astype(float)
    right[(j == i + 2) | (j == N)] *= 0.5
    right[i + 2 >= N] = 0.0
    left = (j <= i - 2).astype(float)
    left[(j == i - 2) | (j == 0)] *= 0.5
    left[i - 2 <= 0] = 0.0
    return np.sum((right + left) * T, axis=1)


def _assemble(state: InterfaceState, middle):
    f, beta, h, L = state.f, state.beta, state.h, state.L
    eta = state.eta
    N = state.N
    fp = fd1(f, h)
    fpp = fd2(f, h)
    p = 1.0 + 0.5 * beta
    delta = 2.0 * h
    A = fpp * (1.0 + fp * fp) ** (-p)
    near = A * 2.0 * delta ** (1.0 - beta) / (1.0 - beta)
    e = trapezoid_zeta_error(beta) * h ** (1.0 - beta)
    idx = np.arange(N + 1)
    sides = (idx + 2 < N).astype(float) + (idx - 2 > 0).astype(float)
    corr = sides * e * A
    R = np.maximum(L, eta + delta)
    Lf = np.minimum(-L, eta - delta)
    tail = fp / beta * (((eta - Lf) ** 2 + (f - f[0]) ** 2) ** (-0.5 * beta)
                        - ((eta - R) ** 2 + (f - f[-1]) ** 2) ** (-0.5 * beta))
    return state.jump * (h * middle + near - corr + tail)


def _tables(N, h, beta):
    d = np.arange(N + 1, dtype=float) * h
    d[0] = 1.0
    return d ** (-1.0 - beta), 1.0 / (d * d)


def contour_rhs(state: InterfaceState) -> np.ndarray:
    """``f_t`` at every node (compiled pair loop, ``O(N^2)``)."""
    fp = fd1(state.f, state.h)
    p = 1.0 + 0.5 * state.beta
    kz, invdz2 = _tables(state.N, state.h, state.beta)
    # |f_i - f_j| / |eta_i - eta_j| never exceeds the largest adjacent slope
    qmax = (np.max(np.abs(np.diff(state.f))) / state.h) ** 2
    middle = _middle_sums(state.f, fp, kz, invdz2, _binom_coeffs(p), p, bool(qmax < _QMAX))
    return _assemble(state, middle)


def contour_rhs_numpy(state: InterfaceState) -> np.ndarray:
    """Same discretization as :func:`contour_rhs` with dense arrays; for checking."""
    fp = fd1(state.f, state.h)
    return _assemble(state, _middle_sums_numpy(state.eta, state.f, fp, state.beta))


def contour_rhs_reference(eta0: float, beta: float, f, fp, fpp, support: float,
                          jump: float = 1.0, epsabs: float = 1e-13, epsrel: float = 1e-12) -> float:
    """Continuum ``f_t(eta0)`` by adaptive quadrature with the algebraic weight.

    ``f, fp, fpp`` are callables; ``f`` is taken as zero beyond ``|zeta| > support``.
    Each side of ``eta0`` is integrated with QUADPACK's ``|zeta - eta0|^-beta``
    weight, so the endpoint singularity is handled exactly.
    """
    p = 1.0 + 0.5 * beta
    f0, fp0 = float(f(eta0)), float(fp(eta0))
    lim = float(fpp(eta0)) * (1.0 + fp0 * fp0) ** (-p)

    def g(z, sgn):
        if z == 0.0:
            return lim
        zeta = eta0 - sgn * z
        df = f0 - float(f(zeta))
        num = sgn * z * (fp0 - float(fp(zeta)))
        return num * (z * z + df * df) ** (-p) * z ** beta

    total = 0.0
    for sgn, length in ((1.0, eta0 + support), (-1.0, support - eta0)):
        if length > 0:
            val, _ = integrate.quad(g, 0.0, length, args=(sgn,), weight="alg", wvar=(-beta, 0.0),
                                    epsabs=epsabs, epsrel=epsrel, limit=500)
            total += val
    R, Lf = max(support, eta0), min(-support, eta0)
    total += fp0 / beta * (((eta0 - Lf) ** 2 + f0 ** 2) ** (-0.5 * beta)
                           - ((eta0 - R) ** 2 + f0 ** 2) ** (-0.5 * beta))
    return jump * total


# velocity -------------------------------------------------------------------------

@dataclass
class VelocitySample:
    x: tuple
    v: np.ndarray
    d: float

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.v))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _graded_breaks(center, scale, lo, hi, hmax):
    """Breakpoints doubling away from ``center`` from ``scale/4`` up to ``hmax``, then uniform."""
    pts = [center, lo, hi]
    r = scale / 4.0
    while r < hi - lo:
        pts += [center - r, center + r]
        r += min(r, hmax)
    return np.unique(np.clip(pts, lo, hi))


def _gl_nodes(breaks):
    a, b = breaks[:-1], breaks[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


class _Interp:
    """Quintic interpolant of the profile and its derivative."""

    def __init__(self, state):
        self.spl = make_interp_spline(state.eta, state.f, k=5)
        self.dspl = self.spl.derivative()
        self.L = state.L
        self.fl, self.fr = state.f[0], state.f[-1]

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = self.spl(np.clip(x, -self.L, self.L))
        out = np.where(x < -self.L, self.fl, out)
        return np.where(x > self.L, self.fr, out)

    def fp(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) > self.L, 0.0, self.dspl(np.clip(x, -self.L, self.L)))


def velocity_at_point(state: InterfaceState, x, hmax: float = 0.25) -> VelocitySample:
    """Velocity ``v(x) = -J int (x1 - zeta)(1, f'(zeta)) / |x - (zeta, f(zeta))|^(2+beta)``.

    Graded Gauss-Legendre panels around ``x1`` resolve the near-singular
    kernel; the first component's tail beyond the window is exact.
    """
    x1, x2 = float(x[0]), float(x[1])
    ip = _Interp(state)
    d = abs(x2 - float(ip.f(x1)))
    if not d > 0:
        raise DomainError("point lies on the interface")
    beta, L = state.beta, state.L
    p = 1.0 + 0.5 * beta
    z, w = _gl_nodes(_graded_breaks(np.clip(x1, -L, L), d, -L, L, hmax))
    dz = x1 - z
    ker = dz * (dz * dz + (x2 - ip.f(z)) ** 2) ** (-p)
    v1 = np.dot(w, ker)
    v2 = np.dot(w, ker * ip.fp(z))
    v1 += ((x1 + L) ** 2 + (x2 - ip.fl) ** 2) ** (-0.5 * beta) / beta \
        - ((x1 - L) ** 2 + (x2 - ip.fr) ** 2) ** (-0.5 * beta) / beta
    return VelocitySample((x1, x2), -state.jump * np.array([v1, v2]), d)


def normal_velocity_limit(state: InterfaceState, i: int, eps_list, hmax: float = 0.25) -> np.ndarray:
    """``v(eta - eps f', f + eps) . (-f'(eta - eps f'), 1)`` at node ``i`` for each ``eps``.

    The two velocity components are combined under the integral, which
    avoids cancelling two ``O(eps^-beta)`` numbers.
    """
    ip = _Interp(state)
    eta0 = state.eta[i]
    f0 = state.f[i]
    s0 = float(ip.fp(eta0))
    beta, L = state.beta, state.L
    p = 1.0 + 0.5 * beta
    out = []
    for eps in eps_list:
        x1, x2 = eta0 - eps * s0, f0 + eps
        d = x2 - float(ip.f(x1))
        if not d > 0.5 * eps:
            raise DomainError(f"eps={eps!r} too large: sample point leaves the upper side")
        s1 = float(ip.fp(x1))
        z, w = _gl_nodes(_graded_breaks(x1, eps, -L, L, hmax))
        dz = x1 - z
        val = np.dot(w, dz * (s1 - ip.fp(z)) * (dz * dz + (x2 - ip.f(z)) ** 2) ** (-p))
        val += s1 / beta * (((x1 + L) ** 2 + (x2 - ip.fl) ** 2) ** (-0.5 * beta)
                            - ((x1 - L) ** 2 + (x2 - ip.fr) ** 2) ** (-0.5 * beta))
        out.append(state.jump * val)
    return np.array(out)


def extrapolate_limit(eps, vals, beta: float, order: int = 2):
    """Least-squares fit of ``v(eps) = v0 + sum_j (c_j eps^(j-beta) + d_j eps^j)``, ``j = 1..order``.

    The expansion follows from Taylor-expanding the profile about the base
    point. Returns the coefficients, ``v0`` first, in the order
    ``eps^(1-beta), eps, eps^(2-beta), eps^2, ...``.
    """
    eps = np.asarray(eps, dtype=float)
    cols = [np.ones_like(eps)]
    for j in range(1, order + 1):
        cols += [eps ** (j - beta), eps ** j]
    A = np.column_stack(cols)
    if A.shape[1] > eps.size:
        raise DomainError(f"need at least {A.shape[1]} eps values for order {order}")
    coef, *_ = np.linalg.lstsq(A, np.asarray(vals, dtype=float), rcond=None)
    return tuple(float(c) for c in coef)


def max_slope_point(state: InterfaceState) -> float:
    """Abscissa of the largest ``|f'|`` on the grid (refined by the interpolant)."""
    ip = _Interp(state)
    i = int(np.argmax(np.abs(fd1(state.f, state.h))))
    a, b = state.eta[max(i - 1, 0)], state.eta[min(i + 1, state.N)]
    xs = np.linspace(a, b, 201)
    return float(xs[np.argmax(np.abs(ip.fp(xs)))])


# time stepping --------------------------------------------------------------------

@lru_cache(maxsize=None)
def stiffness(beta: float, N: int = 128) -> float:
    """``rho(J) h^(1+beta)`` for the operator linearized at ``f = 0``.

    At the flat state the right-hand side is linear in ``f`` and its
    spectrum scales exactly like ``h^-(1+beta)``, so a small grid suffices.
    """
    st = InterfaceState.zero(8.0, N, beta)
    n = N + 1
    eps = 1e-9  # small enough that the quadratic part is below rounding
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        J[:, k] = contour_rhs(replace(st, f=e)) / eps
    return float(np.max(np.abs(np.linalg.eigvals(J))) * st.h ** (1 + beta))


def default_cfl(beta: float) -> float:
    """Largest stable RK4 constant for the flat state, times a safety factor.

    >>> round(default_cfl(0.5), 3)
    0.074
    """
    return CFL_SAFETY * RK4_REAL_LIMIT / stiffness(float(beta))


def cfl_dt(state: InterfaceState, c_cfl: float | None = C_CFL) -> float:
    """``c_cfl h^(1+beta) / (1 + max|f''|)``; ``c_cfl=None`` uses :func:`default_cfl`."""
    if c_cfl is None:
        c_cfl = default_cfl(state.beta)
    return c_cfl * state.h ** (1 + state.beta) / (1.0 + np.max(np.abs(fd2(state.f, state.h))))


def _rk4(state, dt, rhs=contour_rhs):
    k1 = rhs(state)
    k2 = rhs(replace(state, f=state.f + 0.5 * dt * k1))
    k3 = rhs(replace(state, f=state.f + 0.5 * dt * k2))
    k4 = rhs(replace(state, f=state.f + dt * k3))
    f = state.f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return replace(state, f=f, t=state.t + dt), k1


def step_rk4(state: InterfaceState, dt: float, c_cfl: float | None = C_CFL,
             support_tol: float = 1e-2) -> InterfaceState:
    """One classical RK4 step. ``dt < 0`` is allowed for reversibility checks.

    After the step the edge values must stay below ``support_tol`` times
    the pre-step ``max|f|``: the nonlocal flux grows algebraic tails, so this
    relative check replaces the absolute one used for initial data.
    """
    bound = cfl_dt(state, c_cfl)
    if abs(dt) > bound * (1 + 1e-12):
        raise CFLError(f"|dt|={abs(dt)!r} exceeds the bound {bound!r}")
    new, _ = _rk4(state, dt)
    if not np.all(np.isfinite(new.f)):
        raise SupportError(f"non-finite profile at t={new.t!r}")
    return new.check_support(support_tol, relative=True, scale=np.max(np.abs(state.f)))


@dataclass
class PatchRun:
    snapshots: list = field(default_factory=list)
    series: list = field(default_factory=list)
    final: InterfaceState | None = None
    steps: int = 0
    aborted: bool = False
    reason: str = ""

    COLUMNS = ("t", "l2", "h2", "h4", "dissipation", "lhs_ee1", "rhs_ee1")

    def column(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.series])

    def series_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.series:
                w.writerow([f"{row[c]:.17g}" for c in self.COLUMNS])

    def snapshots_to_csv(self, directory):
        directory = Path(directory)
        paths = []
        for k, (t, eta, f) in enumerate(self.snapshots):
            path = directory / f"snapshot_{k:04d}.csv"
            np.savetxt(path, np.column_stack([eta, f]), delimiter=",", header="eta,f",
                       comments="", fmt="%.17g")
            paths.append(path)
        return paths


def run(state0: InterfaceState, T: float, snapshot_every: int = 0, c_cfl: float | None = C_CFL,
        h4_ceiling: float = 1e6, support_tol: float = 1e-2, dt: float | None = None) -> PatchRun:
    """Integrate to ``T`` with RK4 at the CFL step, recording norms every step.

    Stops cleanly (``aborted=True``) when ``||f||_{H^4}`` passes ``h4_ceiling``
    or an edge value exceeds ``support_tol * max|f0|``.
    """
    from .analysis import energy_report

    out = PatchRun()
    state = state0
    scale = float(np.max(np.abs(state0.f)))  # tails are measured against the initial amplitude
    if snapshot_every:
        out.snapshots.append((state.t, state.eta, state.f.copy()))
    while state.t < T * (1 - 1e-14):
        step = cfl_dt(state, c_cfl) if dt is None else dt
        step = min(step, T - state.t)
        new, k1 = _rk4(state, step)
        rep = energy_report(state, k1)
        out.series.append(dict(t=state.t, l2=rep.l2, h2=rep.h2, h4=rep.h4,
                               dissipation=rep.dissipation, lhs_ee1=rep.lhs_ee1,
                               rhs_ee1=rep.rhs_ee1))
        if not np.all(np.isfinite(new.f)) or rep.h4 > h4_ceiling:
            out.aborted, out.reason = True, f"H4 norm {rep.h4:.3e} above ceiling at t={state.t:.6g}"
            break
        try:
            new.check_support(support_tol, relative=True, scale=scale)
        except SupportError as exc:
            out.aborted, out.reason = True, str(exc)
            break
        state = new
        out.steps += 1
        if snapshot_every and out.steps % snapshot_every == 0:
            out.snapshots.append((state.t, state.eta, state.f.copy()))
    if not out.aborted:
        rep = energy_report(state, contour_rhs(state))
        out.series.append(dict(t=state.t, l2=rep.l2, h2=rep.h2, h4=rep.h4,
                               dissipation=rep.dissipation, lhs_ee1=rep.lhs_ee1,
                               rhs_ee1=rep.rhs_ee1))
    out.final = state
    return out

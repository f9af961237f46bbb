"""Linearized SIPM operator on a Fourier slice ``sin(k1 x1) sum_n c_n sin(n a x2)``.

Around the steady state ``sin(a x2)`` the linear operator couples mode
``n`` only to its neighbours ``n +- 1`` with weight ``1/p_n``:

    (L c)_m = sigma (c_{m-1} / p_{m-1} + c_{m+1} / p_{m+1}),   c_0 = 0.

We fix ``sigma = +1``. The eigenvector for ``lambda_*`` is then the
alternated table ``(-1)^(n+1) c_n``, which is positive term by term.

Field norms use the mode normalization ``||sin(j x1) sin(m x2)|| = 1``,
so the L2 norm of an assembled field equals the l2 norm of its
coefficients, and the Sobolev weight of mode ``n`` is ``n^(2s)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contfrac import CoefficientTable, coefficients, solve_lambda_star
from .multiplier import DomainError, PnSequence, SipmParams, _sipm_pn_array

__all__ = [
    "SIGMA",
    "InstabilityError",
    "SpectralSlice",
    "EigenPair",
    "Trajectory",
    "slice_weights",
    "apply_L",
    "eigenpair",
    "assemble_eigenfunction",
    "field_norm",
    "eigen_residual",
    "evolve_linear",
    "stable_dt",
    "beta2_pair",
    "lambda_propagator_norm",
    "lambda_scaling",
    "lemma_constant",
    "write_field_csv",
]

SIGMA = 1


class InstabilityError(RuntimeError):
    """The discrete evolution left the analytic growth envelope."""


def slice_weights(k1: int, a: int, beta: float, N: int) -> np.ndarray:
    """``p_1..p_N`` for the slice; ``beta = 2`` gives the constant ``2/(a k1^2)``."""
    if not (0 < beta <= 2):
        raise DomainError(f"beta must lie in (0, 2], got {beta!r}")
    return _sipm_pn_array(beta, a, k1, np.arange(1, N + 1, dtype=float))


@dataclass
class SpectralSlice:
    k1: int
    a: int
    beta: float
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1 or self.coeffs.size < 3:
            raise DomainError("a slice needs at least 3 coefficients")
        if not np.all(np.isfinite(self.coeffs)):
            raise DomainError("slice coefficients must be finite")
        if self.k1 < 1 or self.a < 1:
            raise DomainError("k1 and a must be positive integers")

    @property
    def N(self) -> int:
        return self.coeffs.size

    def norm(self, s: float = 0.0) -> float:
        n = np.arange(1, self.N + 1, dtype=float)
        return float(np.linalg.norm(n ** s * self.coeffs))

    def tail_fraction(self) -> float:
        """Energy share of modes beyond ``N/2``."""
        c2 = self.coeffs ** 2
        tot = c2.sum()
        return float(c2[self.N // 2:].sum() / tot) if tot > 0 else 0.0


def _apply(c, w, sigma=SIGMA):
    # w = 1/p_n
    out = np.zeros_like(c)
    wc = w * c
    out[1:] += wc[:-1]
    out[:-1] += wc[1:]
    return sigma * out


def apply_L(sl: SpectralSlice, sigma: int = SIGMA) -> SpectralSlice:
    """Coefficients of ``L rho`` for ``rho`` given by the slice (``c_{N+1} = 0``)."""
    w = 1.0 / slice_weights(sl.k1, sl.a, sl.beta, sl.N)
    return replace(sl, coeffs=_apply(sl.coeffs, w, sigma))


@dataclass
class EigenPair:
    """Eigenvalue with its coefficient table, normalized to unit ``H^s`` norm.

    ``coeffs`` is the table in the alternating convention of the recursion;
    :meth:`slice` returns the positive eigenvector of :func:`apply_L`.
    """

    params: SipmParams
    s: float
    lam: float
    coeffs: CoefficientTable
    normalization: float
    N: int = 0
    lambda_result: object = None

    def unit_coeffs(self) -> np.ndarray:
        n = self.coeffs.n_certified
        c = self.coeffs.c[:n]
        alt = np.where(np.arange(1, n + 1) % 2 == 1, 1.0, -1.0)
        return alt * c / self.normalization

    def slice(self) -> SpectralSlice:
        c = np.zeros(self.N)
        u = self.unit_coeffs()
        c[:u.size] = u
        return SpectralSlice(self.params.k, self.params.a, self.params.beta, c)


def eigenpair(params: SipmParams, s: float = 0.0, N: int | None = None) -> EigenPair:
    """Solve the characteristic equation and build the normalized eigenpair.

    The slice length defaults to ``max(4 * certified_prefix, 256)`` and
    doubles until the energy beyond ``N/2`` is below ``1e-10`` of the total.
    """
    if s < 0:
        raise DomainError("s must be non-negative")
    pseq = PnSequence.sipm(params)
    res = solve_lambda_star(pseq)
    tab = coefficients(res, pseq)
    c = tab.c[:tab.n_certified]
    n = np.arange(1, c.size + 1, dtype=float)
    norm = float(np.sqrt(np.sum(n ** (2 * s) * c ** 2)))
    if N is None:
        N = max(4 * tab.n_certified, 256)
    pair = EigenPair(params, s, res.lambda_star, tab, norm, N, res)
    while pair.slice().tail_fraction() > 1e-10:
        pair.N *= 2
    return pair


def field_norm(rho: np.ndarray, s: float = 0.0, a: int = 1) -> float:
    """Norm of a sampled sine-series field on the uniform ``M1 x M2`` torus grid.

    Sine-product coefficients come from the 2D FFT; mode ``sin(j x1) sin(m x2)``
    has weight ``(m/a)^(2s)``.
    """
    M1, M2 = rho.shape
    F = np.fft.fft2(rho)
    b = -4.0 * F.real[1:M1 // 2, 1:M2 // 2] / (M1 * M2)
    m = np.arange(1, M2 // 2, dtype=float) / a
    return float(np.sqrt(np.sum(b ** 2 * m[None, :] ** (2 * s))))


def assemble_eigenfunction(pair: EigenPair, M1: int, M2: int, cutoff: float = 1e-17):
    """Sample ``rho_k = sin(k x1) sum_n (c_n / C_{s,k}) sin(n a x2)`` on the torus.

    Returns ``(x1, x2, rho)``, ``rho`` of shape ``(M1, M2)``. Coefficients
    below ``cutoff`` relative to the largest are dropped before the grid
    resolution check ``M1 >= 4 k``, ``M2 >= 4 N a``.
    """
    u = pair.unit_coeffs()
    k, a = pair.params.k, pair.params.a
    keep = np.nonzero(np.abs(u) > cutoff * np.max(np.abs(u)))[0]
    Neff = int(keep[-1]) + 1
    if M1 < 4 * k or M2 < 4 * Neff * a:
        raise DomainError(f"grid {M1}x{M2} under-resolves k={k}, N*a={Neff * a}")
    x1 = 2 * np.pi * np.arange(M1) / M1
    x2 = 2 * np.pi * np.arange(M2) / M2
    n = np.arange(1, Neff + 1)
    prof = np.sin(np.outer(x2, n * a)) @ u[:Neff]
    return x1, x2, np.outer(np.sin(k * x1), prof)


def eigen_residual(pair: EigenPair, lam: float | None = None) -> float:
    """``||L c - lam c|| / ||c||`` over the certified prefix.

    Minimized over ``sigma = +-1`` and the alternation ``c_n -> (-1)^n c_n``.
    """
    lam = pair.lam if lam is None else lam
    c = pair.coeffs.c[:pair.coeffs.n_certified]
    nc = np.linalg.norm(c)
    if not nc > 0:
        raise DomainError("zero coefficient vector")
    w = 1.0 / slice_weights(pair.params.k, pair.params.a, pair.params.beta, c.size)
    alt = np.where(np.arange(c.size) % 2 == 0, 1.0, -1.0)
    best = math.inf
    for sigma in (1, -1):
        for v in (c, alt * c):
            best = min(best, np.linalg.norm(_apply(v, w, sigma) - lam * v) / nc)
    return float(best)


@dataclass
class Trajectory:
    t: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    final: SpectralSlice
    dt: float
    snapshots: list = field(default_factory=list)

    def growth_rate(self, skip: int = 0) -> float:
        """Slope of a least-squares fit of ``log ||c(t)||``."""
        t, y = self.t[skip:], np.log(self.norms[skip:])
        return float(np.polyfit(t, y, 1)[0])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "shell_norm", "envelope"])
            for row in zip(self.t, self.norms, self.envelope):
                w.writerow([f"{v:.17g}" for v in row])


def stable_dt(sl: SpectralSlice) -> float:
    """Conservative explicit step ``0.5 / (max 2/p_n + lambda estimate)``.

    The Gershgorin radius ``2/p_1`` bounds the spectrum, so it doubles as the
    eigenvalue estimate.
    """
    r = 2.0 / slice_weights(sl.k1, sl.a, sl.beta, 1)[0]
    return 0.5 / (r + r)


def evolve_linear(slice0: SpectralSlice, T: float, dt: float | None = None,
                  envelope_tol: float = 1e-12, store_every: int = 0) -> Trajectory:
    """Classical RK4 for ``dc/dt = L c`` up to time ``T``.

    The shell norm is checked at every step against ``exp(a k1^2 t)`` times
    its initial value; exceeding it by ``10x`` aborts with
    :class:`InstabilityError`.

    Returns a :class:`Trajectory` with ``t``, norms and the envelope.
    """
    if T <= 0:
        raise DomainError("T must be positive")
    bound = stable_dt(slice0)
    if dt is None:
        dt = min(bound, T / 300)
    elif dt > bound:
        raise DomainError(f"dt={dt!r} exceeds the stability bound {bound!r}")
    nsteps = int(math.ceil(T / dt - 1e-12))
    dt = T / nsteps
    w = 1.0 / slice_weights(slice0.k1, slice0.a, slice0.beta, slice0.N)
    rate = slice0.a * slice0.k1 ** 2
    c = slice0.coeffs.copy()
    n0 = np.linalg.norm(c)
    ts = np.empty(nsteps + 1)
    ns = np.empty(nsteps + 1)
    ts[0], ns[0] = 0.0, n0
    snaps = [(0.0, c.copy())] if store_every else []
    for i in range(1, nsteps + 1):
        k1 = _apply(c, w)
        k2 = _apply(c + 0.5 * dt * k1, w)
        k3 = _apply(c + 0.5 * dt * k2, w)
        k4 = _apply(c + dt * k3, w)
        c = c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ts[i] = i * dt
        ns[i] = np.linalg.norm(c)
        env = n0 * math.exp(rate * ts[i])
        if ns[i] > 10 * env * (1 + envelope_tol) or not math.isfinite(ns[i]):
            raise InstabilityError(f"shell norm {ns[i]!r} exceeds 10x envelope {env!r} at t={ts[i]!r}")
        if store_every and i % store_every == 0:
            snaps.append((ts[i], c.copy()))
    env = n0 * np.exp(rate * ts)
    return Trajectory(ts, ns, env, replace(slice0, coeffs=c), dt, snaps)


def beta2_pair(k: int, a: int = 1):
    """Eigen-relation ``L_2 rho = lambda Lambda rho`` from the ``beta = 1`` pair.

    With ``(lambda, c~)`` the ``beta = 1`` eigenpair, ``rho = Lambda^{-1} rho~``
    has ``c_n = c~_n / sqrt(k^2 + n^2 a^2)``. Returns ``(lambda, slice, residual)``
    where the slice carries ``beta = 2`` and the residual is
    ``||L_2 c - lambda Lambda c|| / ||lambda Lambda c||``.
    """
    pair = eigenpair(SipmParams(1.0, a, k))
    ct = pair.unit_coeffs()
    n = np.arange(1, ct.size + 1, dtype=float)
    K = np.sqrt(k * k + (n * a) ** 2)
    c = ct / K
    if not np.any(c):
        raise DomainError("zero coefficient vector")
    sl = SpectralSlice(k, a, 2.0, c)
    lhs = apply_L(sl).coeffs
    rhs = pair.lam * K * c
    # the last row sees the truncation c_{N+1} = 0
    res = float(np.linalg.norm((lhs - rhs)[:-1]) / np.linalg.norm(rhs))
    return pair.lam, sl, res


def lambda_propagator_norm(sl: SpectralSlice, lam: float, t: float) -> float:
    """``||exp(t lam Lambda) rho||`` on the truncated mode set (log-scaled, no overflow)."""
    n = np.arange(1, sl.N + 1, dtype=float)
    K = np.sqrt(sl.k1 ** 2 + (n * sl.a) ** 2)
    nz = sl.coeffs != 0
    if not np.any(nz):
        return 0.0
    e = t * lam * K[nz] + np.log(np.abs(sl.coeffs[nz]))
    m = float(np.max(e))
    if m > 709.0:  # beyond the double range
        return math.inf
    return float(math.exp(m) * np.sqrt(np.sum(np.exp(2 * (e - m)))))


def lambda_scaling(beta: float, ks, a: int = 1):
    """``lambda_k`` over ``ks`` and the log-log slope of a least-squares fit.

    Returns ``(lams, slope)``.
    """
    ks = np.asarray(ks, dtype=float)
    lams = np.array([solve_lambda_star(PnSequence.sipm(SipmParams(beta, a, int(k))),
                                       locate_a2=False).lambda_star for k in ks])
    slope = float(np.polyfit(np.log(ks), np.log(lams), 1)[0])
    return lams, slope


def lemma_constant(beta: float, ks, lams) -> float:
    """Smallest ``C_a`` with ``k^beta / C_a <= lambda_k <= C_a k^(1+beta) / (2-beta)``."""
    ks = np.asarray(ks, dtype=float)
    lams = np.asarray(lams, dtype=float)
    return float(np.max(np.maximum(ks ** beta / lams, lams * (2 - beta) / ks ** (1 + beta))))


def write_field_csv(path, x1, x2, rho):
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    np.savetxt(path, np.column_stack([X1.ravel(), X2.ravel(), rho.ravel()]),
               delimiter=",", header="x1,x2,rho", comments="", fmt="%.17g")

"""Recursion weights p_n and even Fourier-multiplier symbols.

The linearization of an active scalar ``u = M theta`` about the steady state
``sin(a x_d)`` couples the x_d-modes ``sin(n a x_d)`` through a three-term
recursion whose weights are

    p_n = (2 / a) / m_d(k', n a).

For SIPM (``m_d(k) = k_1^2 |k|^(beta - 2)``) this is

    p_n = 2 (k^2 + n^2 a^2)^(1 - beta/2) / (a k^2).
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "SequenceError",
    "SipmParams",
    "MultiplierSymbol",
    "PnSequence",
    "ValidationReport",
    "sipm_pn",
    "sipm_symbol",
    "pn_from_symbol",
    "validate_symbol",
    "check_solver_ready",
]


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class SequenceError(ValueError):
    """A weight sequence does not satisfy the continued-fraction hypotheses."""


@dataclass(frozen=True)
class SipmParams:
    """Exponent ``beta``, steady-state frequency ``a`` and horizontal frequency ``k``."""

    beta: float
    a: int = 1
    k: int = 1

    def __post_init__(self):
        if not (0.0 < self.beta <= 2.0):
            raise DomainError(f"beta must lie in (0, 2], got {self.beta}")
        if int(self.a) != self.a or self.a < 1:
            raise DomainError(f"a must be a positive integer, got {self.a}")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k}")


def _sipm_pn_array(beta, a, k, n):
    n = np.asarray(n, dtype=float)
    return 2.0 * (k * k + n * n * a * a) ** (1.0 - beta / 2.0) / (a * k * k)


def sipm_pn(params: SipmParams, n: int) -> float:
    """Weight ``p_n`` of the SIPM recursion."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return float(_sipm_pn_array(params.beta, params.a, params.k, n))


@dataclass(frozen=True)
class MultiplierSymbol:
    """Fourier symbol ``m: Z^d -> R^d`` of the velocity operator.

    ``evaluator`` receives an integer vector of length ``d`` and returns the
    real ``d``-vector ``m(k)``. ``axis`` is the distinguished coordinate
    (0-based; the last one by default).
    """

    d: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    axis: int = -1
    name: str = "user"

    def __post_init__(self):
        if self.d < 2:
            raise DomainError("symbol dimension must be at least 2")

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=int)
        if k.shape != (self.d,):
            raise DomainError(f"expected a lattice vector of length {self.d}, got shape {k.shape}")
        return np.asarray(self.evaluator(k), dtype=float)

    def md(self, kprime, kd) -> float:
        """Distinguished component evaluated at ``(k', k_d)``."""
        k = np.concatenate([np.atleast_1d(np.asarray(kprime, dtype=int)), [int(kd)]])
        if self.axis not in (-1, self.d - 1):
            k = np.insert(k[:-1], self.axis, k[-1])
        return float(self(k)[self.axis])


def sipm_symbol(beta: float) -> MultiplierSymbol:
    """Two-dimensional SIPM symbol with positive distinguished component.

    ``m = (-k_1 k_2, k_1^2) |k|^(beta - 2)``, which is divergence free and
    even. The zero mode maps to zero.
    """
    if not (0.0 < beta <= 2.0):
        raise DomainError(f"beta must lie in (0, 2], got {beta}")

    def evaluator(k):
        k1, k2 = float(k[0]), float(k[1])
        r2 = k1 * k1 + k2 * k2
        if r2 == 0.0:
            return np.zeros(2)
        w = r2 ** (beta / 2.0 - 1.0)
        return np.array([-k1 * k2 * w, k1 * k1 * w])

    return MultiplierSymbol(2, evaluator, name=f"sipm(beta={beta})")


def pn_from_symbol(sym: MultiplierSymbol, a: int, kprime, n: int) -> float:
    """Weight ``p_n = (2/a) / m_d(k', n a)`` induced by a symbol."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    md = sym.md(kprime, n * a)
    if not md > 0.0:
        point = tuple(np.atleast_1d(kprime).tolist()) + (n * a,)
        raise DomainError(f"m_d must be positive, got m_d{point} = {md}")
    return (2.0 / a) / md


class PnSequence:
    """Positive weight sequence ``p_1, p_2, ...`` with a cached prefix.

    ``func`` maps an integer array of indices ``n >= 1`` to the weights.
    Finite sequences (user tables) carry ``length``; asking for an index
    beyond it raises :class:`SequenceError`.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], provenance: str = "user",
                 length: int | None = None, label: str = ""):
        self._func = func
        self.provenance = provenance
        self.length = length
        self.label = label or provenance
        self._cache = np.empty(0)
        self._lock = threading.Lock()

    def __repr__(self):
        return f"PnSequence({self.label!r}, provenance={self.provenance!r})"

    @classmethod
    def sipm(cls, params: SipmParams) -> "PnSequence":
        b, a, k = params.beta, params.a, params.k
        return cls(lambda n: _sipm_pn_array(b, a, k, n), "sipm",
                   label=f"sipm(beta={b}, a={a}, k={k})")

    @classmethod
    def from_symbol(cls, sym: MultiplierSymbol, a: int, kprime) -> "PnSequence":
        def func(ns):
            return np.array([pn_from_symbol(sym, a, kprime, int(n)) for n in ns])
        return cls(func, "from-symbol", label=f"{sym.name}, a={a}, k'={kprime}")

    @classmethod
    def from_values(cls, values: Sequence[float], provenance: str = "user",
                    label: str = "") -> "PnSequence":
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise SequenceError("weight table must be a non-empty 1-d array")
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise SequenceError("weights must be finite and positive")
        return cls(lambda n: vals[np.asarray(n, dtype=int) - 1], provenance,
                   length=vals.size, label=label or f"table[{vals.size}]")

    @classmethod
    def from_table(cls, path) -> "PnSequence":
        """Load a two-column ``n, p_n`` text table (whitespace or comma separated)."""
        path = Path(path)
        text = path.read_text().replace(",", " ")
        rows = [ln.split() for ln in text.splitlines()
                if ln.strip() and not ln.lstrip().startswith("#")]
        try:
            data = np.array([[float(c) for c in r] for r in rows])
        except ValueError:
            # tolerate a header line
            data = np.array([[float(c) for c in r] for r in rows[1:]])
        if data.ndim != 2 or data.shape[1] != 2:
            raise SequenceError(f"{path}: expected two columns (n, p_n)")
        n = data[:, 0]
        if not np.array_equal(n, np.arange(1, n.size + 1)):
            raise SequenceError(f"{path}: n must run 1, 2, 3, ... without gaps")
        return cls.from_values(data[:, 1], label=path.name)

    def values(self, N: int) -> np.ndarray:
        """Array ``[p_1, ..., p_N]`` (read-only view of the cache)."""
        if N < 1:
            return np.empty(0)
        if self.length is not None and N > self.length:
            raise SequenceError(f"{self.label}: only {self.length} weights available, asked for {N}")
        cache = self._cache
        if cache.size < N:
            with self._lock:
                cache = self._cache
                if cache.size < N:
                    grow = max(N, 2 * cache.size)
                    if self.length is not None:
                        grow = min(grow, self.length)
                    new = np.asarray(self._func(np.arange(cache.size + 1, grow + 1)), dtype=float)
                    if np.any(~np.isfinite(new)) or np.any(new <= 0):
                        bad = cache.size + 1 + int(np.argmax(~np.isfinite(new) | (new <= 0)))
                        raise SequenceError(f"{self.label}: p_{bad} is not a positive finite number")
                    cache = np.concatenate([cache, new])
                    cache.flags.writeable = False
                    self._cache = cache
        return cache[:N]

    def __call__(self, n: int) -> float:
        return float(self.values(n)[n - 1])


def check_solver_ready(pseq: PnSequence, depth: int, threshold: float = 8.0) -> np.ndarray:
    """Check strict growth and the unboundedness proxy on the first ``depth`` weights.

    Returns the checked prefix. ``p_N / p_2 >= threshold`` stands in for
    ``p_n -> infinity``, which cannot be decided from finitely many values.
    """
    N = depth if pseq.length is None else min(depth, pseq.length)
    if N < 3:
        raise SequenceError(f"{pseq.label}: need at least 3 weights, have {N}")
    p = pseq.values(N)
    if p[-1] / p[1] < threshold:
        raise SequenceError(f"{pseq.label}: sequence not unbounded "
                            f"(p_{N}/p_2 = {p[-1] / p[1]:.6g} < {threshold})")
    dp = np.diff(p)
    if np.any(dp <= 0):
        n = int(np.argmax(dp <= 0)) + 1
        raise SequenceError(f"{pseq.label}: sequence not increasing at n={n} "
                            f"(p_{n}={float(p[n - 1])!r}, p_{n + 1}={float(p[n])!r})")
    return p


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_symbol`, keyed ``PM1`` .. ``PM6``."""

    passed: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    r0: float = float("nan")
    growth_constant: float = float("nan")

    @property
    def gates_eigensolver(self) -> bool:
        return all(self.passed.get(f"PM{i}", False) for i in range(1, 6))

    @property
    def all_passed(self) -> bool:
        return all(self.passed.get(f"PM{i}", False) for i in range(1, 7))

    def rows(self):
        for i in range(1, 7):
            key = f"PM{i}"
            wit = self.witnesses.get(key, [])
            yield key, self.passed.get(key, False), "; ".join(map(str, wit[:3]))


def validate_symbol(sym: MultiplierSymbol, a: int, kprime_ranges=((1, 64),), n_range=(1, 64),
                    growth_factor: float = 2.0, atol: float = 1e-14, rtol: float = 1e-12,
                    max_witnesses: int = 5) -> ValidationReport:
    """Check the six structural conditions on a symbol by exhaustive sampling.

    PM1  ``m(0', a) = 0``
    PM2  ``m_d`` even, and positive for ``k' != 0``
    PM3  ``m_d(k', n a)`` grows with ``|k'|`` (largest sample exceeds the
         smallest by ``growth_factor``) for every sampled ``n``
    PM4  ``m_d(k', n a)`` decays in ``n``: negative log-log tail slope
    PM5  ``m_d(k', (n+1) a) < m_d(k', n a)``
    PM6  ``|m(k)| <= C (1 + |k|)^r0``; reports the fitted ``r0``

    Failures are recorded with witness lattice points, never raised.
    """
    dprime = sym.d - 1
    if len(kprime_ranges) != dprime:
        raise DomainError(f"need {dprime} k' ranges, got {len(kprime_ranges)}")
    n_lo, n_hi = n_range
    if n_hi < n_lo or any(hi < lo for lo, hi in kprime_ranges):
        raise DomainError("sample box is empty")
    kprimes = [np.array(kp) for kp in itertools.product(*(range(lo, hi + 1) for lo, hi in kprime_ranges))]
    kprimes = [kp for kp in kprimes if np.any(kp != 0)]
    ns = np.arange(n_lo, n_hi + 1)
    rep = ValidationReport()
    wit = {f"PM{i}": [] for i in range(1, 7)}

    def full(kp, kd):
        k = np.concatenate([kp, [kd]])
        if sym.axis not in (-1, sym.d - 1):
            k = np.insert(k[:-1], sym.axis, k[-1])
        return k

    # PM1
    zero = np.zeros(dprime, dtype=int)
    m0 = sym(full(zero, a))
    if not np.all(np.isfinite(m0)) or np.linalg.norm(m0) > atol:
        wit["PM1"].append((tuple(full(zero, a).tolist()), m0.tolist()))

    md = np.empty((len(kprimes), ns.size))
    for i, kp in enumerate(kprimes):
        for j, n in enumerate(ns):
            md[i, j] = sym.md(kp, n * a)

    # PM2
    for i, kp in enumerate(kprimes):
        for j, n in enumerate(ns):
            v = md[i, j]
            if not (np.isfinite(v) and v > 0):
                if len(wit["PM2"]) < max_witnesses:
                    wit["PM2"].append((tuple(kp.tolist()) + (int(n * a),), "m_d not positive", v))
                continue
            for signs in itertools.product((1, -1), repeat=sym.d):
                s = np.array(signs)
                kk = full(kp, n * a) * s
                w = float(sym(kk)[sym.axis])
                if not abs(w - v) <= rtol * abs(v) + atol:
                    if len(wit["PM2"]) < max_witnesses:
                        wit["PM2"].append((tuple(kk.tolist()), "m_d(-k) != m_d(k)", w, v))
                    break

    # PM3: smallest versus largest |k'| at each n
    norms = np.array([np.linalg.norm(kp) for kp in kprimes])
    i_lo, i_hi = int(np.argmin(norms)), int(np.argmax(norms))
    if i_lo == i_hi:
        wit["PM3"].append(("k' box has a single point",))
    else:
        for j, n in enumerate(ns):
            lo, hi = md[i_lo, j], md[i_hi, j]
            if not (hi >= growth_factor * lo):
                if len(wit["PM3"]) < max_witnesses:
                    wit["PM3"].append((tuple(kprimes[i_hi].tolist()) + (int(n * a),), hi, lo))

    # PM4 and PM5
    tail = ns >= (n_lo + n_hi) / 2.0
    for i, kp in enumerate(kprimes):
        row = md[i]
        if ns.size >= 2 and np.all(row > 0):
            x, y = np.log(ns[tail]), np.log(row[tail])
            slope = np.polyfit(x, y, 1)[0] if x.size >= 2 else np.log(row[-1] / row[0])
            if not (slope < -1e-9 and row[-1] < row[0]):
                if len(wit["PM4"]) < max_witnesses:
                    wit["PM4"].append((tuple(kp.tolist()), "tail slope", float(slope)))
        elif len(wit["PM4"]) < max_witnesses:
            wit["PM4"].append((tuple(kp.tolist()), "non-positive values"))
        bad = np.nonzero(~(row[1:] < row[:-1]))[0]
        if bad.size and len(wit["PM5"]) < max_witnesses:
            n = int(ns[bad[0]])
            wit["PM5"].append((tuple(kp.tolist()) + (n * a,), row[bad[0]], row[bad[0] + 1]))

    # PM6: power-law envelope over the sampled box (both signs of k_d)
    radii, mags = [], []
    for kp in kprimes + [zero]:
        for n in np.concatenate([ns, -ns]):
            k = full(kp, n * a)
            radii.append(np.linalg.norm(k))
            mags.append(np.linalg.norm(sym(k)))
    radii, mags = np.array(radii), np.array(mags)
    if not np.all(np.isfinite(mags)):
        wit["PM6"].append(("non-finite symbol value",))
    else:
        edges = np.geomspace(radii.min(), radii.max() * (1 + 1e-12), 17)
        shell_r, shell_m = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (radii >= lo) & (radii < hi) & (mags > 0)
            if np.any(sel):
                shell_r.append(1.0 + radii[sel].max())
                shell_m.append(mags[sel].max())
        if len(shell_r) >= 2:
            r0 = max(0.0, float(np.polyfit(np.log(shell_r), np.log(shell_m), 1)[0]))
        else:
            r0 = 0.0
        rep.r0 = r0
        rep.growth_constant = float(np.max(mags / (1.0 + radii) ** r0))
        if not np.isfinite(rep.growth_constant):
            wit["PM6"].append(("unbounded growth constant",))

    rep.witnesses = wit
    rep.passed = {key: not w for key, w in wit.items()}
    return rep

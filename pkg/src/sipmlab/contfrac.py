"""Positive root of the characteristic continued fraction and its eigen-coefficients.

Given increasing, unbounded weights ``p_n`` we solve

    lambda p_1 = 1 / (lambda p_2 - 1 / (lambda p_3 - 1 / (lambda p_4 - ...)))

for the root ``lambda_*`` in ``(1/sqrt(p1 p2), 1/sqrt(p1 p2 - p1^2))`` and build
the coefficients ``c_n`` of the three-term recursion

    lambda c_1 + c_2 / p_2 = 0,
    lambda c_n + c_{n+1} / p_{n+1} + c_{n-1} / p_{n-1} = 0   (n >= 2).

The infinite fraction ``F_n`` is evaluated bottom-up from truncations that
terminate in the fixed point ``G_m(lambda)`` of ``t -> 1/(lambda p_m - t)``.
The symmetric tridiagonal truncation (:func:`truncated_matrix_oracle`) gives
an independent route to the same eigenvalue.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .multiplier import DomainError, PnSequence, SequenceError, check_solver_ready

__all__ = [
    "ConvergenceError",
    "DegeneracyError",
    "RootError",
    "LambdaStarResult",
    "CoefficientTable",
    "ScanRow",
    "ScanTable",
    "g_n",
    "f2_truncated",
    "f2",
    "solve_lambda_star",
    "coefficients",
    "n0_theorem",
    "n0_direct",
    "n0_asymptote",
    "sobolev_constant",
    "case_decay_check",
    "sturm_count",
    "truncated_matrix_oracle",
    "scan_f2",
    "refine_crossing",
]

MAX_DEPTH = 100_000
BLOWUP = 1e12
POLE_RTOL = 1e-12


class ConvergenceError(RuntimeError):
    """Truncations of the continued fraction did not settle.

    ``trace`` holds ``(depth, value)`` pairs of the attempted truncations.
    """

    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


class DegeneracyError(ArithmeticError):
    """A recursion ratio vanished, so the coefficient recursion cannot continue."""


class RootError(RuntimeError):
    """The characteristic equation has no sign change in the certified bracket."""


def g_n(lam: float, p: float) -> float:
    """Fixed point ``G = (lam p - sqrt(lam^2 p^2 - 4)) / 2`` of the constant-weight fraction.

    Evaluated in the rationalized form ``2 / (lam p + sqrt(lam^2 p^2 - 4))``.
    """
    x = lam * p
    if not x >= 2.0:
        raise DomainError(f"G_n needs lambda * p >= 2, got {x!r}")
    return 2.0 / (x + math.sqrt(x * x - 4.0))


def _chain(lam, rev_p, g_tail):
    """Bottom-up evaluation over ``rev_p = [p_m, ..., p_2]`` from tail ``g_tail``.

    Returns ``(value, all_positive, pole)``.
    """
    t = g_tail
    positive = True
    for pj in rev_p:
        x = lam * pj
        den = x - t
        if abs(den) <= POLE_RTOL * x:
            return math.nan, False, True
        t = 1.0 / den
        if t <= 0.0:
            positive = False
    return t, positive, False


def _weights(pseq: PnSequence, n: int) -> np.ndarray:
    if pseq.length is not None and n > pseq.length:
        raise SequenceError(f"{pseq.label}: table too short for depth (needs {n} weights)")
    return pseq.values(n)


def _max_depth(pseq: PnSequence, max_depth: int) -> int:
    if pseq.length is not None:
        return min(max_depth, pseq.length - 3)
    return max_depth


def _eval_truncated(lam, pseq, depth, start=2):
    m = start + depth + 1
    p = _weights(pseq, m)
    tail = g_n(lam, p[m - 1])
    rev = p[start - 1:m - 1][::-1].tolist()
    return _chain(lam, rev, tail)


def f2_truncated(lam: float, pseq: PnSequence, depth: int):
    """Depth-``k`` truncation ``F_{2,k}(lam)``; ``None`` marks a vertical asymptote.

    ``F_{2,0} = 1 / (lam p_2 - G_3(lam))``; each extra level inserts one more
    weight above the terminal ``G_{k+3}``.
    """
    if depth < 0:
        raise DomainError("depth must be non-negative")
    val, _, pole = _eval_truncated(lam, pseq, depth)
    return None if pole else val


@dataclass
class _F2Eval:
    value: float
    depth: int
    positive: bool
    asymptote: bool
    trace: list


def _first_depth(lam, pseq, max_depth):
    """Smallest useful depth: the terminal G must exist and sit past the turning point."""
    n = 64
    while True:
        p = _weights(pseq, min(n, max_depth + 3))
        idx = np.nonzero(lam * p >= 2.0)[0]
        if idx.size:
            m = int(idx[0]) + 1
            return max(8, m - 3 + 8)
        if p.size >= max_depth + 3:
            raise DomainError(f"lambda={lam!r} is below 2/p_n for every n <= {max_depth + 3}")
        n *= 4


def _f2_converged(lam, pseq, tol=1e-14, max_depth=MAX_DEPTH, blowup=BLOWUP, start=2):
    max_depth = _max_depth(pseq, max_depth)
    depth = min(_first_depth(lam, pseq, max_depth), max_depth)
    prev = None
    trace = []
    while True:
        val, positive, pole = _eval_truncated(lam, pseq, depth, start)
        trace.append((depth, val))
        if pole or (prev is not None and abs(val) > blowup and abs(prev) > blowup):
            return _F2Eval(math.nan, depth, False, True, trace)
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return _F2Eval(val, depth, positive, False, trace)
        if depth >= max_depth:
            if abs(val) > blowup:
                return _F2Eval(math.nan, depth, False, True, trace)
            raise ConvergenceError(
                f"F_{start}({lam!r}) did not converge by depth {depth}", trace)
        prev = val
        depth = min(2 * depth, max_depth)


def f2(lam: float, pseq: PnSequence, tol: float = 1e-14, max_depth: int = MAX_DEPTH,
       blowup: float = BLOWUP):
    """Limit ``F_2(lam)`` of the truncations; ``None`` marks a vertical asymptote.

    Depth doubles until successive truncations agree to ``tol`` (relative).
    Raises :class:`ConvergenceError` when ``max_depth`` is exhausted.
    """
    ev = _f2_converged(lam, pseq, tol, max_depth, blowup)
    return None if ev.asymptote else ev.value


@dataclass
class LambdaStarResult:
    lambda_star: float
    bracket_lo: float
    bracket_hi: float
    case_tag: str
    a2: float | None
    iterations: int
    residual: float
    depth: int = 0
    p1: float = 0.0
    p2: float = 0.0

    @property
    def sharp_upper(self) -> float:
        return max(2.0 / self.p2, 1.0 / self.p1)


def _h(lam, pseq, p1, tol_f):
    """``F_2 - lam p1`` on the rightmost branch, ``+inf`` to the left of it."""
    ev = _f2_converged(lam, pseq, tol_f)
    if ev.asymptote or not ev.positive:
        return math.inf, ev
    return ev.value - lam * p1, ev


def solve_lambda_star(pseq: PnSequence, tol: float = 1e-15, residual_tol: float = 1e-10,
                      unbounded_threshold: float = 8.0, max_depth: int = MAX_DEPTH,
                      locate_a2: bool = True) -> LambdaStarResult:
    """Root ``lambda_*`` of ``lam p_1 = F_2(lam)`` by bisection.

    To the left of the largest asymptote ``a_2`` some partial fraction
    ``F_j`` (j >= 2) is non-positive; there the residual is treated as
    ``+inf``, which keeps the sign pattern monotone on the whole bracket.
    ``a_2`` itself is located by bisecting that same predicate.

    The default ``tol`` runs bisection down to the last ulp: the first row
    of the coefficient recursion equals the root residual, so a looser root
    shows up directly in the recursion check for large ``lambda_*``.
    """
    check_solver_ready(pseq, _max_depth(pseq, max_depth) + 3, unbounded_threshold)
    p1, p2 = pseq(1), pseq(2)
    lo = 1.0 / math.sqrt(p1 * p2)
    hi = 1.0 / math.sqrt(p1 * p2 - p1 * p1)
    case = "direct" if p2 >= 4.0 * p1 else "asymptote"
    tol_f = 1e-14

    h_lo, _ = _h(lo, pseq, p1, tol_f)
    h_hi, _ = _h(hi, pseq, p1, tol_f)
    if not (h_lo > 0 and h_hi < 0):
        raise RootError(f"{pseq.label}: no sign change of F_2 - lambda p_1 on "
                        f"[{lo!r}, {hi!r}] (h = {h_lo!r}, {h_hi!r})")
    a, b = lo, hi
    it = 0
    while b - a > tol * b:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        hm, _ = _h(mid, pseq, p1, tol_f)
        if hm > 0:
            a = mid
        else:
            b = mid
        it += 1
        if it > 200:
            break
    lam = 0.5 * (a + b)
    hm, ev = _h(lam, pseq, p1, tol_f)
    if not math.isfinite(hm):
        lam = b
        hm, ev = _h(lam, pseq, p1, tol_f)
    residual = abs(hm)
    if not residual <= residual_tol:
        raise RootError(f"{pseq.label}: residual {residual!r} at lambda={lam!r} exceeds {residual_tol}")

    a2 = None
    if case == "asymptote" and locate_a2:
        _, ev0 = _h(lo, pseq, p1, tol_f)
        if ev0.asymptote or not ev0.positive:
            x, y = lo, lam
            while y - x > tol * y:
                mid = 0.5 * (x + y)
                if mid <= x or mid >= y:
                    break
                e = _f2_converged(mid, pseq, tol_f)
                if e.asymptote or not e.positive:
                    x = mid
                else:
                    y = mid
            a2 = 0.5 * (x + y)

    res = LambdaStarResult(lam, lo, hi, case, a2, it, residual, ev.depth, p1, p2)
    if not (lo < lam < hi):
        raise RootError(f"{pseq.label}: lambda*={lam!r} escaped the bracket ({lo!r}, {hi!r})")
    if lam > res.sharp_upper * (1 + 1e-12):
        raise RootError(f"{pseq.label}: lambda*={lam!r} exceeds max(2/p2, 1/p1)={res.sharp_upper!r}")
    return res


def n0_theorem(p: np.ndarray) -> int:
    """Largest ``n`` with ``p_n <= 4 p_2``."""
    return int(np.nonzero(p <= 4.0 * p[1])[0][-1]) + 1


def n0_direct(p: np.ndarray) -> int:
    """``n_0 >= 2`` with ``p_{n0} <= 2 p_2 < p_{n0+1}``."""
    return max(2, int(np.nonzero(p <= 2.0 * p[1])[0][-1]) + 1)


def n0_asymptote(p: np.ndarray) -> int:
    """``n_0 >= 2`` with ``p_{n0} < 4 sqrt(p1 p2) <= p_{n0+1}``."""
    return max(2, int(np.nonzero(p < 4.0 * math.sqrt(p[0] * p[1]))[0][-1]) + 1)


@dataclass
class CoefficientTable:
    """Coefficients ``c_1..c_N`` with ``c_1 = p_1`` (alternating signs).

    ``eta[n-2]`` is ``eta_n = -F_n(lambda_*)`` from the stable backward
    evaluation; ``eta_forward`` is the forward recursion from
    ``eta_2 = -lambda p_1``, trusted only on its first ``forward_agreement``
    entries. ``log_abs_c`` avoids underflow in the decay certificate.
    """

    lam: float
    c: np.ndarray
    eta: np.ndarray
    eta_forward: np.ndarray
    log_abs_c: np.ndarray
    p: np.ndarray
    n0: int
    decay_certified: bool
    n_certified: int
    forward_agreement: int
    residual: float

    @property
    def N(self) -> int:
        return self.c.size

    def recursion_residuals(self) -> np.ndarray:
        return _recursion_residuals(self.lam, self.c, self.p)


def _recursion_residuals(lam, c, p):
    N = c.size
    r = lam * c.copy()
    r[:-1] += c[1:] / p[1:N]
    r[1:] += c[:-1] / p[:N - 1]
    return np.abs(r[:-1])


def _backward_f(lam, pseq, N, max_depth=MAX_DEPTH):
    """``F_2(lam) .. F_N(lam)`` by the stable backward sweep from a deep G tail."""
    M = N + max(64, N)
    M = max(M, _first_depth(lam, pseq, _max_depth(pseq, max_depth)) + 3)
    if pseq.length is not None:
        M = min(M, pseq.length)
    p = _weights(pseq, M)
    if lam * p[M - 1] < 2.0:
        raise SequenceError(f"{pseq.label}: table too short to terminate the fraction at lambda={lam!r}")
    t = g_n(lam, p[M - 1])
    out = np.empty(M - 1)
    out[M - 2] = t
    for j in range(M - 2, 1, -1):  # 1-based index j+1 -> j
        t = 1.0 / (lam * p[j - 1] - t)
        out[j - 2] = t
    return out[:N - 1]


def coefficients(res: LambdaStarResult, pseq: PnSequence, N: int | None = None,
                 agree_rtol: float = 1e-6, residual_rtol: float = 1e-6) -> CoefficientTable:
    """Eigen-coefficients ``c_n = p_n eta_n ... eta_2`` for ``n = 1..N``.

    The forward recursion ``eta_{n+1} = -lam p_n - 1/eta_n`` grows the
    dominant solution once ``c_n`` starts to decay, so the table is built from
    the backward values ``eta_n = -F_n(lam)`` and the forward sweep is kept
    as a cross-check. ``N=None`` picks ``max(256, 4 n0)`` so that the decay
    region ``n >= 3 n0`` is populated. The certificate is ``False`` when the
    table does not reach ``3 n0``.
    """
    if N is None:
        N = 256
        while True:
            n0 = n0_theorem(_weights(pseq, N))
            if 4 * n0 <= N or (pseq.length is not None and N >= pseq.length):
                break
            N = 4 * n0 if pseq.length is None else min(4 * n0, pseq.length)
    if N < 3:
        raise DomainError("N must be at least 3")
    lam = res.lambda_star
    p = _weights(pseq, N)
    eta = -_backward_f(lam, pseq, N)  # eta_2 .. eta_N
    if np.any(np.abs(eta) <= 1e-300):
        n = int(np.argmax(np.abs(eta) <= 1e-300)) + 2
        raise DegeneracyError(f"eta_{n} vanished at lambda={lam!r}")

    fwd = np.empty(N - 1)
    fwd[0] = -lam * p[0]
    agreement = N
    for i in range(1, N - 1):  # fwd[i] = eta_{i+2}
        prev = fwd[i - 1]
        if abs(prev) <= 1e-300:
            if agreement == N:
                raise DegeneracyError(f"forward eta_{i + 1} vanished at lambda={lam!r}")
            fwd[i:] = np.nan
            break
        fwd[i] = -lam * p[i] - 1.0 / prev
        if agreement == N and not abs(fwd[i] - eta[i]) <= agree_rtol * abs(eta[i]):
            agreement = i + 1
    if agreement == N and not abs(fwd[0] - eta[0]) <= agree_rtol * abs(eta[0]):
        agreement = 1

    log_abs = np.empty(N)
    log_abs[0] = math.log(p[0])
    log_abs[1:] = np.log(p[1:]) + np.cumsum(np.log(np.abs(eta)))
    sign = np.ones(N)
    sign[1:] = np.cumprod(np.sign(eta))
    with np.errstate(under="ignore"):
        c = sign * np.exp(log_abs)
    c[0] = p[0]

    rr = _recursion_residuals(lam, c, p)
    scale = np.max(np.abs(c))
    bad = np.nonzero(rr > residual_rtol * scale)[0]
    n_cert = int(bad[0]) if bad.size else N
    n0 = n0_theorem(p)
    cert_n = np.arange(1, n_cert + 1)
    sel = cert_n >= 3 * n0
    if np.any(sel):
        bound = math.log(p[1]) + (3 * n0 - cert_n[sel]) * math.log(2.0)
        decay = bool(np.all(log_abs[:n_cert][sel] <= bound + 1e-12))
    else:
        decay = False
    return CoefficientTable(lam, c, eta, fwd, log_abs, p.copy(), n0, decay, n_cert, agreement,
                            float(np.max(rr[:max(n_cert - 1, 1)]) / scale))


def sobolev_constant(table: CoefficientTable, s: float) -> float:
    """Smallest ``C`` with ``||n^s c_n|| <= C (n0^s + p2/p1) ||c_n||`` on the table."""
    c = table.c
    n = np.arange(1, c.size + 1, dtype=float)
    lhs = np.linalg.norm(n ** s * c)
    p = table.p
    return float(lhs / ((table.n0 ** s + p[1] / p[0]) * np.linalg.norm(c)))


def case_decay_check(res: LambdaStarResult, table: CoefficientTable) -> dict:
    """Coefficient bounds local to each case of the existence argument.

    direct:    ``|c_n| <= p_2`` (n <= n0), ``|c_n| <= p_2 2^(n0+1-n)`` (n > n0),
               with ``p_{n0} <= 2 p_2 < p_{n0+1}``
    asymptote: ``|c_n| <= p_2 2^(3 n0 - 1)`` (n <= n0), ``|c_n| <= p_2 2^(3 n0 - n)``
               (n > n0), with ``p_{n0} < 4 sqrt(p1 p2) <= p_{n0+1}``

    Returns ``{"n0": .., "low": bool, "high": bool, "worst_margin": ..}``; the
    margin is ``max(log2|c_n| - log2 bound)`` (<= 0 means every bound holds).
    """
    p = table.p
    n = np.arange(1, table.n_certified + 1)
    log2c = table.log_abs_c[:n.size] / math.log(2.0)
    lp2 = math.log2(p[1])
    if res.case_tag == "direct":
        n0 = n0_direct(p)
        low_b = np.full(n.size, lp2)
        high_b = lp2 + (n0 + 1 - n)
    else:
        n0 = n0_asymptote(p)
        low_b = np.full(n.size, lp2 + 3 * n0 - 1)
        high_b = lp2 + (3 * n0 - n)
    low = n <= n0
    m_low = log2c[low] - low_b[low]
    m_high = log2c[~low] - high_b[~low]
    return {
        "n0": n0,
        "low": bool(np.all(m_low <= 1e-12)),
        "high": bool(np.all(m_high <= 1e-12)) if m_high.size else True,
        "worst_margin": float(max(m_low.max(initial=-np.inf), m_high.max(initial=-np.inf))),
    }


def sturm_count(off2, x: float) -> int:
    """Number of eigenvalues below ``x`` of the zero-diagonal symmetric tridiagonal
    matrix with squared off-diagonals ``off2`` (LDL^T pivot signs)."""
    count = 0
    d = -x
    if d < 0:
        count += 1
    for e2 in off2:
        if d == 0.0:
            d = 1e-300
        d = -x - e2 / d
        if d < 0:
            count += 1
    return count


def truncated_matrix_oracle(pseq: PnSequence, N: int = 4096, rtol: float = 1e-15) -> float:
    """Largest eigenvalue of the ``N x N`` symmetric tridiagonal truncation.

    Zero diagonal, off-diagonal ``-1 / sqrt(p_n p_{n+1})``: the recursion
    after the similarity ``c_n = sqrt(p_n) d_n``. Found by Sturm-count
    bisection on ``[0, Gershgorin radius]``.
    """
    if N < 2:
        raise DomainError("N must be at least 2")
    p = pseq.values(N)
    off2 = (1.0 / (p[:-1] * p[1:])).tolist()
    e = np.sqrt(np.asarray(off2))
    radius = float(np.max(np.concatenate([[0.0], e]) + np.concatenate([e, [0.0]])))
    lo, hi = 0.0, radius * (1 + 1e-12) + 1e-300
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if sturm_count(off2, mid) >= N:
            hi = mid
        else:
            lo = mid
        if mid in (lo, hi) and hi - lo <= 2 * np.spacing(hi):
            break
    return 0.5 * (lo + hi)


@dataclass
class ScanRow:
    lam: float
    f2: float | None
    lam_p1: float
    status: str  # "ok" | "asymptote"
    depth: int


@dataclass
class ScanTable:
    rows: list = field(default_factory=list)
    lambda0: float = math.nan

    def asymptotes(self) -> list:
        return [r.lam for r in self.rows if r.status == "asymptote"]

    def crossings(self) -> list:
        """Intervals ``(lam_lo, lam_hi)`` where ``F_2 - lam p1`` changes sign from + to -
        between adjacent finite rows (no asymptote in between)."""
        out = []
        for r, s in zip(self.rows, self.rows[1:]):
            if r.status == "ok" and s.status == "ok":
                hr, hs = r.f2 - r.lam_p1, s.f2 - s.lam_p1
                if hr > 0 >= hs:
                    out.append((r.lam, s.lam))
                elif hr == 0:
                    out.append((r.lam, r.lam))
        if self.rows and self.rows[-1].status == "ok" and self.rows[-1].f2 == self.rows[-1].lam_p1:
            out.append((self.rows[-1].lam, self.rows[-1].lam))
        return sorted(set(out))

    def rightmost_branch(self) -> list:
        last = max((i for i, r in enumerate(self.rows) if r.status == "asymptote"), default=-1)
        return self.rows[last + 1:]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "f2", "lambda_p1", "status", "depth"])
            for r in self.rows:
                w.writerow([f"{r.lam:.17g}", "" if r.f2 is None else f"{r.f2:.17g}",
                            f"{r.lam_p1:.17g}", r.status, r.depth])


def _locate_pole(pseq, x, y, tol=1e-13):
    """Bisect the negative-to-positive jump of ``F_2`` on ``[x, y]``."""
    for _ in range(200):
        if y - x <= tol * y:
            break
        mid = 0.5 * (x + y)
        ev = _f2_converged(mid, pseq)
        if ev.asymptote:
            return mid, ev.depth
        if ev.value < 0:
            x = mid
        else:
            y = mid
    return 0.5 * (x + y), ev.depth


def scan_f2(pseq: PnSequence, lambda_grid) -> ScanTable:
    """Tabulate ``F_2`` on a sorted grid in ``[lambda_0, inf)``.

    Poles of ``F_2`` (where it jumps from ``-inf`` to ``+inf``) that fall
    between grid points are located by bisection and inserted as asymptote
    rows, so every asymptote row sits between a negative and a positive row.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    p1, p2 = pseq(1), pseq(2)
    lam0 = 1.0 / math.sqrt(p1 * p2)
    if grid.size and (np.any(np.diff(grid) <= 0) or grid[0] < lam0 * (1 - 1e-12)):
        raise DomainError("grid must be strictly increasing and start at or above lambda_0")
    rows = []
    for lam in grid:
        ev = _f2_converged(float(lam), pseq)
        if ev.asymptote:
            rows.append(ScanRow(float(lam), None, lam * p1, "asymptote", ev.depth))
        else:
            rows.append(ScanRow(float(lam), ev.value, lam * p1, "ok", ev.depth))
    out = []
    for r, s in zip(rows, rows[1:]):
        out.append(r)
        if r.status == "ok" and s.status == "ok" and r.f2 < 0 < s.f2:
            pole, depth = _locate_pole(pseq, r.lam, s.lam)
            out.append(ScanRow(pole, None, pole * p1, "asymptote", depth))
    if rows:
        out.append(rows[-1])
    return ScanTable(out, lam0)


def refine_crossing(pseq: PnSequence, lo: float, hi: float, xtol: float = 1e-15) -> float:
    """Root of ``F_2(lam) - lam p_1`` inside a crossing interval of a scan.

    Uses Brent's method on the raw difference, independently of the
    bisection inside :func:`solve_lambda_star`.
    """
    if lo == hi:
        return float(lo)
    p1 = pseq(1)

    def g(lam):
        ev = _f2_converged(lam, pseq)
        if ev.asymptote:
            raise RootError(f"asymptote inside the crossing interval near {lam!r}")
        return ev.value - lam * p1

    return float(optimize.brentq(g, lo, hi, xtol=xtol * hi, rtol=4 * np.finfo(float).eps))

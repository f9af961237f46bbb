"""Invariance and limit checks for the interface solver.

Each check returns :class:`CheckRow` records so the command line and the
test suite share one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analysis import power_law_fit
from .patch import (InterfaceState, contour_rhs, extrapolate_limit, max_slope_point,
                    normal_velocity_limit, step_rk4, cfl_dt, velocity_at_point)

__all__ = [
    "CheckRow",
    "check_constant",
    "check_odd",
    "check_even_evolution",
    "check_scaling",
    "check_normal_velocity",
    "check_singular_velocity",
    "verify_suite",
]

EPS_NORMAL = 2.0 ** -np.arange(3, 11)
D_SINGULAR = 2.0 ** -np.arange(3, 9)


@dataclass
class CheckRow:
    check: str
    beta: float
    value: float
    target: str
    passed: bool

    def __post_init__(self):
        self.value = float(self.value)
        self.passed = bool(self.passed)


def _gauss(beta, N, L=20.0, amp=0.1, width=1.0):
    return InterfaceState.gaussian(amp, width, L=L, N=N, beta=beta)


def check_constant(beta=0.5, N=1024, c=0.3) -> CheckRow:
    st = InterfaceState(np.full(N + 1, c), 20.0, beta)
    v = float(np.max(np.abs(contour_rhs(st))))
    return CheckRow("constant", beta, v, "== 0", v == 0.0)


def check_odd(beta=0.5, N=1024) -> CheckRow:
    st = _gauss(beta, N)
    a = contour_rhs(st)
    b = contour_rhs(replace(st, f=-st.f))
    v = float(np.max(np.abs(a + b)))
    return CheckRow("odd", beta, v, "== 0", v == 0.0)


def check_even_evolution(beta=0.5, N=1024, steps=100, tol=1e-12) -> CheckRow:
    st = _gauss(beta, N)
    dt = cfl_dt(st)
    for _ in range(steps):
        st = step_rk4(st, dt)
    v = float(np.max(np.abs(st.f - st.f[::-1])) / np.max(np.abs(st.f)))
    return CheckRow(f"even_{steps}_steps", beta, v, f"<= {tol:g}", v <= tol)


def check_scaling(beta=0.5, N=2048, mu=2.0, tol=1e-4) -> CheckRow:
    """``K[mu f(./mu)](mu eta) = mu^-beta K[f](eta)`` on a window scaled by ``mu``."""
    st = _gauss(beta, N)
    sc = InterfaceState(mu * st.f, mu * st.L, beta)
    a = contour_rhs(sc)
    b = mu ** -beta * contour_rhs(st)
    v = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return CheckRow("scaling", beta, v, f"<= {tol:g}", v <= tol)


def check_normal_velocity(beta, N=2048, eps=EPS_NORMAL, slope_tol=0.1, rel_tol=1e-3):
    """Rate and limit of the normal velocity at the peak of the Gaussian bump."""
    st = _gauss(beta, N)
    i = N // 2
    ref = contour_rhs(st)[i]
    vals = normal_velocity_limit(st, i, eps)
    slope = power_law_fit(eps, np.abs(vals - ref))[0]
    v0 = extrapolate_limit(eps, vals, beta)[0]
    rel = abs(v0 - ref) / abs(ref)
    return [
        CheckRow("normal_velocity_rate", beta, slope, f"{1 - beta:g} +- {slope_tol:g}",
                 abs(slope - (1 - beta)) <= slope_tol),
        CheckRow("normal_velocity_limit", beta, rel, f"<= {rel_tol:g}", rel <= rel_tol),
    ]


def check_singular_velocity(beta, N=1024, ds=D_SINGULAR, slope_tol=0.1) -> CheckRow:
    """``log |v|`` against ``log d`` above the steepest point of the bump.

    At the peak the leading ``d^-beta`` term vanishes by symmetry, so the
    steepest point is used.
    """
    st = _gauss(beta, N)
    x = max_slope_point(st)
    fx = float(np.interp(x, st.eta, st.f))
    speeds = [velocity_at_point(st, (x, fx + d)).speed for d in ds]
    slope = power_law_fit(ds, speeds)[0]
    return CheckRow("singular_velocity_rate", beta, slope, f"{-beta:g} +- {slope_tol:g}",
                    abs(slope + beta) <= slope_tol)


def verify_suite(N=1024, betas=(0.25, 0.5, 0.75)) -> list:
    """Run every check; returns the list of rows."""
    rows = [check_constant(N=N), check_odd(N=N), check_even_evolution(N=N),
            check_scaling(N=N)]
    for b in betas:
        rows += check_normal_velocity(b, N=N)
        rows.append(check_singular_velocity(b, N=N))
    return rows

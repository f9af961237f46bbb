"""Acceptance criteria 1 to 13 at their stated tolerances.

Each test prints one ``CRITERION n: PASS|FAIL`` line (also collected in the
terminal summary) and then asserts the same condition.
"""

import math
import time

import mpmath
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sipmlab.contfrac import (coefficients, refine_crossing, scan_f2, sobolev_constant,
                              solve_lambda_star, truncated_matrix_oracle)
from sipmlab.multiplier import PnSequence, SipmParams
from sipmlab.patch import InterfaceState, cbeta, run
from sipmlab.spectral import (SpectralSlice, beta2_pair, eigen_residual, eigenpair, evolve_linear,
                              lambda_propagator_norm, lambda_scaling, lemma_constant)
from sipmlab.verify import (check_constant, check_even_evolution, check_normal_velocity,
                            check_odd, check_scaling, check_singular_velocity)

SWEEP = [(b, a, k) for b in (0.5, 1.0, 1.5) for a in (1, 2) for k in (1, 2, 4, 8, 16, 32)]


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def sipm(b, a, k):
    return PnSequence.sipm(SipmParams(b, a, k))


def test_criterion_01_bracket():
    t0 = time.perf_counter()
    bad = []
    for b, a, k in SWEEP:
        ps = sipm(b, a, k)
        lam = solve_lambda_star(ps).lambda_star
        p1, p2 = ps(1), ps(2)
        inside = 1 / math.sqrt(p1 * p2) < lam < 1 / math.sqrt(p1 * p2 - p1 * p1)
        if not (inside and lam <= max(2 / p2, 1 / p1)):
            bad.append((b, a, k))
    dt = time.perf_counter() - t0
    report(1, not bad and dt < 10, f"{len(SWEEP)} cases, violations {bad}, {dt:.2f} s (< 10 s)")


def test_criterion_02_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for b, a, k in SWEEP:
        ps = sipm(b, a, k)
        lam = solve_lambda_star(ps).lambda_star
        worst = max(worst, abs(lam - truncated_matrix_oracle(ps, 4096)) / lam)
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-6 and dt < 60, f"max relative gap {worst:.2e} (<= 1e-6), {dt:.1f} s (< 60 s)")


def test_criterion_03_scaling():
    ks = np.arange(2, 257)
    parts, ok = [], True
    for b in (0.5, 1.0, 1.5):
        lams, slope = lambda_scaling(b, ks)
        C = lemma_constant(b, ks, lams)
        ok &= abs(slope - b) <= 0.05
        parts.append(f"beta={b}: slope {slope:.4f} (target {b} +- 0.05), C_a {C:.3f}")
    report(3, ok, "; ".join(parts))


def test_criterion_04_residuals():
    worst_rec, worst_eig = 0.0, 0.0
    for b, a, k in SWEEP:
        pair = eigenpair(SipmParams(b, a, k))
        tab = pair.coeffs
        rr = tab.recursion_residuals()[:tab.n_certified - 1]
        worst_rec = max(worst_rec, float(np.max(rr) / np.max(np.abs(tab.c[:tab.n_certified]))))
        worst_eig = max(worst_eig, eigen_residual(pair))
    report(4, worst_rec <= 1e-9 and worst_eig <= 1e-8,
           f"max recursion residual {worst_rec:.2e} (<= 1e-9), max eigen residual {worst_eig:.2e} (<= 1e-8)")


def test_criterion_05_decay():
    bad, worst_C, margin = [], 0.0, -math.inf
    for b, a, k in SWEEP:
        ps = sipm(b, a, k)
        tab = coefficients(solve_lambda_star(ps), ps)
        n = np.arange(1, tab.n_certified + 1)
        sel = n >= 3 * tab.n0
        # log2 |c_n| <= log2 p_2 + 3 n0 - n
        m = tab.log_abs_c[:n.size][sel] / math.log(2) - (math.log2(tab.p[1]) + 3 * tab.n0 - n[sel])
        if not sel.any() or np.any(m > 1e-12):
            bad.append((b, a, k))
        else:
            margin = max(margin, float(m.max()))
        worst_C = max(worst_C, max(sobolev_constant(tab, s) for s in (0, 1, 2, 4)))
    report(5, not bad and worst_C <= 32,
           f"certificate failures {bad}, worst log2 margin {margin:.1f}, max Sobolev constant {worst_C:.3f} (<= 32)")


def test_criterion_06_linear_growth():
    errs = []
    for k in (2, 4, 8):
        pair = eigenpair(SipmParams(1.0, 1, k))
        tr = evolve_linear(pair.slice(), 3 / pair.lam)
        errs.append(abs(tr.growth_rate() / pair.lam - 1))
    zero = evolve_linear(SpectralSlice(4, 1, 1.0, np.zeros(128)), 1.0)
    rng = np.random.default_rng(2024)
    env_ok = True
    for k in (1, 2, 4):
        tr = evolve_linear(SpectralSlice(k, 1, 1.0, rng.standard_normal(128)), 1.0)
        env_ok &= bool(np.all(tr.norms <= tr.envelope * (1 + 1e-12)))
    zmax = float(np.max(zero.norms))
    report(6, max(errs) <= 1e-4 and zmax <= 1e-14 and env_ok,
           f"growth relative errors {[f'{e:.1e}' for e in errs]} (<= 1e-4), zero data max {zmax:.1e}, "
           f"envelope respected {env_ok}")


def test_criterion_07_beta2():
    res_max, growth_ok = 0.0, True
    for k in (1, 2, 4, 8):
        lam, sl, res = beta2_pair(k)
        res_max = max(res_max, res)
        n0 = sl.norm()
        for u in (0.1, 0.5, 1.0):
            growth_ok &= lambda_propagator_norm(sl, lam, u / lam) >= math.exp(u) * n0
    report(7, res_max <= 1e-8 and growth_ok, f"max residual {res_max:.2e} (<= 1e-8), growth bound holds {growth_ok}")


def test_criterion_08_cbeta():
    err1 = abs(cbeta(1.0) - 2 * math.pi) / (2 * math.pi)
    worst = 0.0
    for b in np.round(np.arange(0.1, 1.0, 0.1), 10):
        mb = mpmath.mpf(str(b))
        ref = mpmath.pi * 2 ** (2 - mb) * mpmath.gamma((2 - mb) / 2) / (mb * mpmath.gamma(mb / 2))
        worst = max(worst, abs(cbeta(float(b)) / float(ref) - 1))
    report(8, err1 <= 1e-12 and worst <= 1e-12, f"C_1 vs 2 pi {err1:.1e}, mpmath agreement {worst:.1e} (<= 1e-12)")


def test_criterion_09_invariances():
    rows = [check_constant(N=2048), check_odd(N=2048), check_even_evolution(N=2048, steps=100),
            check_scaling(N=2048)]
    report(9, all(r.passed for r in rows), ", ".join(f"{r.check} {r.value:.1e} ({r.target})" for r in rows))


def test_criterion_10_normal_velocity():
    t0 = time.perf_counter()
    rows = []
    for b in (0.25, 0.5, 0.75):
        rows += check_normal_velocity(b, N=2048)
    dt = time.perf_counter() - t0
    report(10, all(r.passed for r in rows) and dt < 120,
           ", ".join(f"{r.check[16:]}[{r.beta}] {r.value:.4g} ({r.target})" for r in rows) + f", {dt:.1f} s")


def test_criterion_11_singular_velocity():
    rows = [check_singular_velocity(b, N=2048) for b in (0.25, 0.5, 0.75)]
    report(11, all(r.passed for r in rows), ", ".join(f"beta={r.beta}: slope {r.value:.4f} ({r.target})" for r in rows))


def test_criterion_12_patch_evolution():
    t0 = time.perf_counter()
    out = run(InterfaceState.gaussian(0.1, 1.0, L=20.0, N=1024, beta=0.5), 1.0)
    t, l2, h2, h4 = (out.column(c) for c in ("t", "l2", "h2", "h4"))
    # centered difference of ||f||^2 / 2 in time against ||f||_{H^2}^2
    e = 0.5 * l2 ** 2
    dedt = (e[2:] - e[:-2]) / (t[2:] - t[:-2])
    c_fit = float(np.max(np.maximum(dedt, 0.0) / h2[1:-1] ** 2))
    run_ok = (not out.aborted and out.final.t == pytest.approx(1.0) and np.all(np.isfinite(h4))
              and math.isfinite(c_fit) and np.all(dedt <= c_fit * h2[1:-1] ** 2 + 1e-300))
    finals = {}
    for N in (512, 1024, 2048):
        r = run(InterfaceState.gaussian(0.1, 1.0, L=20.0, N=N, beta=0.5), 0.5)
        finals[N] = r.final.f
    h = 40.0 / 512
    e1 = math.sqrt(h * np.sum((finals[512] - finals[1024][::2]) ** 2))
    e2 = math.sqrt(h * np.sum((finals[1024][::2] - finals[2048][::4]) ** 2))
    order = math.log2(e1 / e2)
    dt = time.perf_counter() - t0
    report(12, run_ok and order >= 1.5 and dt < 300,
           f"T=1 run completed {not out.aborted}, max H4 {h4.max():.4g}, ee1 constant {c_fit:.3g}, "
           f"self-convergence order {order:.2f} (>= 1.5), {dt:.0f} s (< 300 s)")


def test_criterion_13_figures():
    ps = sipm(1.5, 1, 1)
    res = solve_lambda_star(ps)
    lam0 = res.bracket_lo
    scan = scan_f2(ps, np.linspace(lam0 * (1 + 1e-6), 2 * res.sharp_upper, 400))
    above = [x for x in scan.asymptotes() if x > lam0]
    cross = refine_crossing(ps, *scan.crossings()[-1])
    rel = abs(cross - res.lambda_star) / res.lambda_star
    n = np.arange(1, 3001, dtype=float)
    table = PnSequence.from_values(0.5 * n ** 4)
    p1, p2 = table(1), table(2)
    regime = 2 / p2 <= 1 / math.sqrt(p1 * p2)
    rt = solve_lambda_star(table)
    scan2 = scan_f2(table, np.linspace(rt.bracket_lo * (1 + 1e-6), 2 * rt.sharp_upper, 400))
    above2 = [x for x in scan2.asymptotes() if x > rt.bracket_lo]
    ok = bool(above) and rel <= 1e-6 and regime and not above2
    report(13, ok, f"asymptote-case: {len(above)} asymptotes above lambda_0, crossing gap {rel:.1e} (<= 1e-6); "
                   f"n^4 table: regime {regime}, {len(above2)} asymptotes above lambda_0")

"""Command-line driver: ``sipmlab <command> [--config PATH] [--out DIR] [--quiet]``.

Configuration is an INI file with one section per module. Every key has a
default, the effective configuration is echoed to ``config.ini`` in the
output directory, and all CSV numbers use 17 significant digits.

Exit codes: 0 success, 1 failed invariant or numerical error, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import contfrac, multiplier, patch, spectral
from .multiplier import DomainError, PnSequence, SequenceError, SipmParams

__all__ = ["RunConfig", "ConfigError", "main", "COMMANDS"]

OUT_ENV = "SIPMLAB_OUT"

DEFAULTS = {
    "run": {"seed": "0", "out": "sipmlab_out"},
    "multiplier": {"kind": "sipm", "table": "", "beta": "1.0", "a": "1", "k": "1",
                   "kmax": "64", "nmax": "64"},
    "contfrac": {"tol": "1e-15", "max_depth": "100000", "lambda_min": "", "lambda_max": "",
                 "n_lambda": "400", "coeff_n": ""},
    "spectral": {"s": "0", "init": "eigen", "T": "", "modes": "64", "dt": "",
                 "t_samples": "0.1, 0.5"},
    "patch": {"beta": "0.5", "L": "20", "N": "1024", "T": "1", "init": "gaussian",
              "amp": "0.1", "width": "1", "path": "", "jump": "1", "c_cfl": "", "dt": "",
              "snapshot_every": "0", "h4_ceiling": "1e6", "support_tol": "1e-2",
              "verify_n": "1024"},
}


class ConfigError(ValueError):
    """Malformed configuration; maps to exit code 2."""


class InvariantFailure(RuntimeError):
    """A computed result violates a checked property; maps to exit code 1."""


def parse_sweep(text: str) -> list:
    """``"1-32"``, ``"1, 2, 4"``, ``"1-8, 16"`` or ``""`` (empty sweep)."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


@dataclass
class RunConfig:
    """Effective configuration: the parsed INI merged over the defaults."""

    command: str
    sections: dict = field(default_factory=dict)

    @classmethod
    def load(cls, command: str, path: str | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(DEFAULTS)
        if path is not None:
            user = configparser.ConfigParser(interpolation=None)
            user.optionxform = str
            try:
                with open(path) as fh:
                    user.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            for sec in user.sections():
                if sec not in DEFAULTS:
                    raise ConfigError(f"unknown section [{sec}]")
                for key, val in user[sec].items():
                    if key not in DEFAULTS[sec]:
                        raise ConfigError(f"unknown key {key!r} in [{sec}]")
                    cp[sec][key] = val
        return cls(command, {s: dict(cp[s]) for s in DEFAULTS})

    def raw(self, sec, key) -> str:
        return self.sections[sec][key].strip()

    def get(self, sec, key, typ=float, default=None):
        text = self.raw(sec, key)
        if text == "":
            return default
        try:
            return typ(text)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key} = {text!r}: {exc}") from exc

    def sweep(self) -> list:
        try:
            return parse_sweep(self.raw("multiplier", "k"))
        except ValueError as exc:
            raise ConfigError(f"[multiplier] k: {exc}") from exc

    def echo(self, path):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(self.sections)
        with open(path, "w") as fh:
            fh.write(f"# sipmlab {self.command}\n")
            cp.write(fh)


class _Ctx:
    def __init__(self, cfg: RunConfig, out: Path, quiet: bool):
        self.cfg, self.out, self.quiet = cfg, out, quiet

    def say(self, msg):
        if not self.quiet:
            print(msg)


def _sequence(cfg: RunConfig, k: int | None = None) -> PnSequence:
    kind = cfg.raw("multiplier", "kind")
    if kind == "sipm":
        beta = cfg.get("multiplier", "beta")
        a = cfg.get("multiplier", "a", int)
        if k is None:
            ks = cfg.sweep()
            k = ks[0] if ks else 1
        return PnSequence.sipm(SipmParams(beta, a, k))
    if kind == "table":
        path = cfg.raw("multiplier", "table")
        if not path:
            raise ConfigError("[multiplier] kind = table needs a table path")
        return PnSequence.from_table(path)
    raise ConfigError(f"[multiplier] kind must be sipm or table, got {kind!r}")


def pseq_params(cfg, k):
    return SipmParams(cfg.get("multiplier", "beta"), cfg.get("multiplier", "a", int), k)


# commands ---------------------------------------------------------------------------

def cmd_spectrum(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    tol = cfg.get("contfrac", "tol")
    max_depth = cfg.get("contfrac", "max_depth", int)
    coeff_n = cfg.get("contfrac", "coeff_n", int)
    table = cfg.raw("multiplier", "kind") == "table"
    ks = [None] if table else cfg.sweep()
    header = ["k", "lambda", "bracket_lo", "bracket_hi", "residual", "n0", "decay_certified"]
    rows, failed = [], []
    try:
        for k in ks:
            pseq = _sequence(cfg, k)
            res = contfrac.solve_lambda_star(pseq, tol=tol, max_depth=max_depth)
            tab = contfrac.coefficients(res, pseq, N=coeff_n)
            if table:
                resid = float(np.max(tab.recursion_residuals()[:tab.n_certified]))
            else:
                pair = spectral.eigenpair(pseq_params(cfg, k))
                resid = spectral.eigen_residual(pair)
            rows.append(["" if k is None else k, res.lambda_star, res.bracket_lo, res.bracket_hi,
                         resid, tab.n0, tab.decay_certified])
            if not tab.decay_certified or resid > 1e-8:
                failed.append(k)
    finally:
        write_csv(ctx.out / "spectrum.csv", header, rows)
    ctx.say(f"spectrum: {len(rows)} rows -> {ctx.out / 'spectrum.csv'}")
    if failed:
        raise InvariantFailure(f"certificate or residual check failed for k = {failed}")
    return 0


def cmd_scan_f2(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    pseq = _sequence(cfg)
    res = contfrac.solve_lambda_star(pseq, tol=cfg.get("contfrac", "tol"),
                                     max_depth=cfg.get("contfrac", "max_depth", int))
    lam0 = res.bracket_lo
    lo = cfg.get("contfrac", "lambda_min", default=lam0 * (1 + 1e-9))
    hi = cfg.get("contfrac", "lambda_max", default=2.0 * res.sharp_upper)
    n = cfg.get("contfrac", "n_lambda", int)
    if n < 1 or hi < lo:
        raise ConfigError("scan grid is empty")
    scan = contfrac.scan_f2(pseq, np.linspace(lo, hi, n))
    scan.to_csv(ctx.out / "scan.csv")
    above = [x for x in scan.asymptotes() if x > lam0]
    crossings = scan.crossings()
    if not crossings:
        write_csv(ctx.out / "crossing.csv", ["lambda_crossing", "lambda_star", "rel_diff", "asymptotes"],
                  [["", res.lambda_star, "", len(above)]])
        raise InvariantFailure("no crossing of F_2 with lambda p_1 on the scan grid")
    lam_c = contfrac.refine_crossing(pseq, *crossings[-1])
    rel = abs(lam_c - res.lambda_star) / res.lambda_star
    write_csv(ctx.out / "crossing.csv", ["lambda_crossing", "lambda_star", "rel_diff", "asymptotes"],
              [[lam_c, res.lambda_star, rel, len(above)]])
    ctx.say(f"crossing,{lam_c:.17g},{res.lambda_star:.17g},{rel:.3g}; asymptotes above lambda_0: {len(above)}")
    if rel > 1e-6:
        raise InvariantFailure(f"scan crossing {lam_c!r} disagrees with lambda_* {res.lambda_star!r}")
    return 0


def cmd_evolve_linear(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    ks = cfg.sweep()
    params = pseq_params(cfg, ks[0] if ks else 1)
    init = cfg.raw("spectral", "init")
    pair = spectral.eigenpair(params, s=cfg.get("spectral", "s"))
    T = cfg.get("spectral", "T", default=3.0 / pair.lam)
    dt = cfg.get("spectral", "dt")
    if init == "eigen":
        sl = pair.slice()
    elif init in ("random", "zero"):
        modes = cfg.get("spectral", "modes", int)
        rng = np.random.default_rng(cfg.get("run", "seed", int))
        c = rng.standard_normal(modes) if init == "random" else np.zeros(modes)
        sl = spectral.SpectralSlice(params.k, params.a, params.beta, c)
    else:
        raise ConfigError(f"[spectral] init must be eigen, random or zero, got {init!r}")
    traj = spectral.evolve_linear(sl, T, dt=dt)
    traj.to_csv(ctx.out / "trajectory.csv")
    if init == "eigen":
        rate = traj.growth_rate()
        rel = abs(rate / pair.lam - 1)
        ctx.say(f"growth rate {rate:.17g}, lambda {pair.lam:.17g}, relative error {rel:.3g}")
        if rel > 1e-4:
            raise InvariantFailure(f"growth rate off by {rel:.3g}")
    elif init == "random":
        worst = float(np.max(traj.norms / traj.envelope))
        ctx.say(f"max norm/envelope {worst:.17g}")
        if worst > 1 + 1e-12:
            raise InvariantFailure("shell norm exceeds the envelope")
    else:
        worst = float(np.max(traj.norms))
        ctx.say(f"max norm {worst:.3g}")
        if worst > 1e-14:
            raise InvariantFailure("zero data did not stay zero")
    return 0


def cmd_beta2_check(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    a = cfg.get("multiplier", "a", int)
    ts = [float(t) for t in cfg.raw("spectral", "t_samples").split(",") if t.strip()]
    rows, bad = [], []
    for k in cfg.sweep():
        lam, sl, res = spectral.beta2_pair(k, a)
        n0 = sl.norm()
        # sample times are given in units of 1 / lambda
        ratio = min((spectral.lambda_propagator_norm(sl, lam, u / lam) / (math.exp(u) * n0)
                     for u in ts), default=math.inf)
        rows.append([k, lam, res, ratio])
        if not (res <= 1e-8 and ratio >= 1.0):
            bad.append(k)
    write_csv(ctx.out / "beta2.csv", ["k", "lambda", "residual", "min_growth_ratio"], rows)
    ctx.say(f"beta2-check: {len(rows)} rows, failures {bad}")
    if bad:
        raise InvariantFailure(f"beta = 2 checks failed for k = {bad}")
    return 0


def _patch_state(cfg: RunConfig) -> patch.InterfaceState:
    beta = cfg.get("patch", "beta")
    L = cfg.get("patch", "L")
    N = cfg.get("patch", "N", int)
    jump = cfg.get("patch", "jump")
    amp = cfg.get("patch", "amp")
    width = cfg.get("patch", "width")
    init = cfg.raw("patch", "init")
    if init == "gaussian":
        return patch.InterfaceState.gaussian(amp, width, L=L, N=N, beta=beta, jump=jump)
    if init == "bump":
        return patch.InterfaceState.bump(amp, width, L=L, N=N, beta=beta, jump=jump)
    if init == "zero":
        return patch.InterfaceState.zero(L, N, beta, jump)
    if init == "file":
        path = cfg.raw("patch", "path")
        if not path:
            raise ConfigError("[patch] init = file needs a path")
        return patch.InterfaceState.from_file(path, beta, jump)
    raise ConfigError(f"[patch] init must be gaussian, bump, zero or file, got {init!r}")


def cmd_patch_run(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    st = _patch_state(cfg)
    every = cfg.get("patch", "snapshot_every", int)
    out = patch.run(st, cfg.get("patch", "T"), snapshot_every=every,
                    c_cfl=cfg.get("patch", "c_cfl"), h4_ceiling=cfg.get("patch", "h4_ceiling"),
                    support_tol=cfg.get("patch", "support_tol"), dt=cfg.get("patch", "dt"))
    out.series_to_csv(ctx.out / "series.csv")
    if every:
        snap = ctx.out / "snapshots"
        snap.mkdir(exist_ok=True)
        out.snapshots_to_csv(snap)
    h4 = out.column("h4")
    c_fit = float(np.max(np.maximum(out.column("lhs_ee1"), 0) / np.maximum(out.column("rhs_ee1"), 1e-300)))
    ctx.say(f"patch-run: {out.steps} steps to t={out.final.t:.6g}, max H4 {np.max(h4):.6g}, "
            f"ee1 constant {c_fit:.3g}")
    if out.aborted:
        raise InvariantFailure(out.reason)
    if not np.all(np.isfinite(h4)):
        raise InvariantFailure("non-finite H4 norm")
    return 0


def cmd_patch_verify(ctx: _Ctx) -> int:
    from .verify import verify_suite

    rows = verify_suite(N=ctx.cfg.get("patch", "verify_n", int))
    write_csv(ctx.out / "verify.csv", ["check", "beta", "value", "target", "passed"],
              [[r.check, r.beta, r.value, r.target, r.passed] for r in rows])
    for r in rows:
        ctx.say(f"{'PASS' if r.passed else 'FAIL'} {r.check} beta={r.beta:g} value={r.value:.6g} ({r.target})")
    bad = [r.check for r in rows if not r.passed]
    if bad:
        raise InvariantFailure(f"failed checks: {bad}")
    return 0


def cmd_cbeta(ctx: _Ctx) -> int:
    beta = ctx.cfg.get("patch", "beta")
    val = patch.cbeta(beta)
    write_csv(ctx.out / "cbeta.csv", ["beta", "cbeta"], [[beta, val]])
    ctx.say(f"{val:.17g}")
    return 0


def cmd_validate_symbol(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    sym = multiplier.sipm_symbol(cfg.get("multiplier", "beta"))
    rep = multiplier.validate_symbol(sym, cfg.get("multiplier", "a", int),
                                     kprime_ranges=((1, cfg.get("multiplier", "kmax", int)),),
                                     n_range=(1, cfg.get("multiplier", "nmax", int)))
    rows = [[key, ok, wit] for key, ok, wit in rep.rows()]
    rows.append(["r0", math.isfinite(rep.r0), _fmt(rep.r0)])
    write_csv(ctx.out / "validate.csv", ["check", "passed", "detail"], rows)
    for key, ok, wit in rep.rows():
        ctx.say(f"{key} {'pass' if ok else 'FAIL'} {wit}")
    if not rep.gates_eigensolver:
        raise InvariantFailure("symbol fails the conditions required by the eigensolver")
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "scan-f2": cmd_scan_f2,
    "evolve-linear": cmd_evolve_linear,
    "beta2-check": cmd_beta2_check,
    "patch-run": cmd_patch_run,
    "patch-verify": cmd_patch_verify,
    "cbeta": cmd_cbeta,
    "validate-symbol": cmd_validate_symbol,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sipmlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and [run] out)")
    ap.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = RunConfig.load(args.command, args.config)
        out = Path(args.out or os.environ.get(OUT_ENV) or cfg.raw("run", "out"))
        out.mkdir(parents=True, exist_ok=True)
        cfg.echo(out / "config.ini")
        return COMMANDS[args.command](_Ctx(cfg, out, args.quiet))
    except ConfigError as exc:
        print(f"sipmlab: configuration error: {exc}", file=sys.stderr)
        return 2
    except InvariantFailure as exc:
        print(f"sipmlab: {args.command}: {exc}", file=sys.stderr)
        return 1
    except (DomainError, SequenceError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"sipmlab: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front end.

Subcommands wrap the computational modules into reproducible file-based
experiments: ``simulate`` writes trace CSVs, ``identify-geometry`` /
``estimate-integrals`` / ``fit-potentials`` run the inverse stages on
measured traces, and ``check`` validates a config by running the basic
invariants on it.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure, 4 I/O.
Every run emits one ``report.json``. All artifacts are byte-stable for a
fixed seed; the wall time is logged to stderr so it cannot break that.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ParameterError, ReflectKitError
from .forward import ReflectionTrace, sweep
from .geometry import b1_flags, identify_geometry
from .io import read_trace, write_json, write_samples_csv, write_trace
from .line_model import BoundarySetting
from .potential import (BasisSpec, assign_resonances, detect_resonances,
                        estimate_potential_integrals, fit_potentials)

_USAGE_EXIT = 2
_NUMERICAL_EXIT = 3
_IO_EXIT = 4


def _parse_window(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise ParameterError(
            f"--window expects MIN:MAX with numeric bounds, got {text!r}"
        ) from None


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH",
                     help="experiment config (INI)")
    sub.add_argument("--trace", metavar="PATH", action="append", default=[],
                     help="measured trace CSV (repeatable)")
    sub.add_argument("--out", metavar="DIR", help="output directory")
    sub.add_argument("--seed", type=int, metavar="N",
                     help="overrides the config noise seed")
    sub.add_argument("--window", metavar="MIN:MAX",
                     help="frequency window for the inverse stages")
    sub.add_argument("--tolerance", type=float, metavar="X",
                     help="overrides the config tolerance for this command")
    sub.add_argument("--json", action="store_true",
                     help="echo the result payload to stdout as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectkit",
        description="forward and inverse reflectometry on star networks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sub = subs.add_parser(name, help=fn.__doc__)
        _add_common(sub)
    return parser


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise ParameterError(f"{args.command} requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    return cfg


def _out_dir(args, cfg) -> str:
    out = args.out or (cfg.out_dir if cfg is not None else "out")
    os.makedirs(out, exist_ok=True)
    return out


def _apply_noise(values, sigma, rng):
    if sigma <= 0.0:
        return values
    g = rng.standard_normal(values.size) + 1j * rng.standard_normal(values.size)
    noisy = values * (1.0 + sigma * g)
    mag = np.abs(noisy)
    big = mag > 1.0
    noisy[big] /= mag[big]
    return noisy


def _load_traces(args):
    traces = []
    for path in args.trace:
        traces.append(read_trace(path))
    return traces


def _geometry_from_config(cfg):
    return [(b.tau, m) for b, m in zip(cfg.branches, cfg.multiplicities)]


def _convergents(x, max_den=64):
    """Continued-fraction convergents p/q of x with q <= max_den."""
    out = []
    h0, h1 = 1, int(np.floor(x))
    k0, k1 = 0, 1
    frac = x - np.floor(x)
    out.append((h1, k1))
    for _ in range(12):
        if frac < 1e-12:
            break
        frac = 1.0 / frac
        a = int(np.floor(frac))
        frac -= a
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > max_den:
            break
        out.append((h1, k1))
    return out


def cmd_simulate(args) -> dict:
    """simulate reflection traces for the configured network"""
    cfg = _require_config(args)
    out = _out_dir(args, cfg)
    net = cfg.network()
    grid = cfg.omega_grid()
    rng = np.random.default_rng(cfg.seed) if cfg.sigma > 0.0 else None
    files = []
    for setting in cfg.settings:
        trace = sweep(net, grid, setting)
        values = _apply_noise(trace.values.copy(), cfg.sigma, rng)
        noisy = ReflectionTrace(trace.omegas, values, setting,
                                h_coupling=trace.h_coupling)
        path = os.path.join(out, f"trace_{setting.value}.csv")
        write_trace(path, noisy)
        files.append(path)
    return {"traces": files, "sigma": cfg.sigma, "seed": cfg.seed,
            "coupling_h": net.coupling_h}


def cmd_identify_geometry(args) -> dict:
    """recover branch travel times and multiplicities from one trace"""
    cfg = load_config(args.config) if args.config else None
    traces = _load_traces(args)
    if len(traces) != 1:
        raise ParameterError("identify-geometry requires exactly one --trace")
    trace = traces[0]
    h = cfg.coupling_h if cfg is not None else 0.0
    window = (_parse_window(args.window) if args.window
              else (float(trace.omegas.min()), float(trace.omegas.max())))
    tol = args.tolerance if args.tolerance is not None else (
        cfg.geometry_residual if cfg is not None else 1e-3)
    est = identify_geometry(trace, h, window, tolerance=tol)

    taus = [t for t, _ in est.groups]
    ratios = []
    for i in range(len(taus)):
        for j in range(i + 1, len(taus)):
            r = taus[i] / taus[j]
            ratios.append({
                "pair": [i, j],
                "ratio": r,
                "convergents": _convergents(r),
            })
    payload = {
        "groups": [list(g) for g in est.groups],
        "residual_sup": est.residual_sup,
        "window": list(est.window),
        "flags": list(est.flags) + list(b1_flags(taus)),
        "tau_ratios": ratios,
    }
    out = _out_dir(args, cfg)
    write_json(os.path.join(out, "geometry.json"), payload)
    return payload


def cmd_estimate_integrals(args) -> dict:
    """estimate per-branch potential integrals from resonance shifts"""
    cfg = _require_config(args)
    traces = _load_traces(args)
    if len(traces) != 1:
        raise ParameterError("estimate-integrals requires exactly one --trace")
    geometry = _geometry_from_config(cfg)
    tol = args.tolerance if args.tolerance is not None else cfg.resonance_threshold
    resonances = detect_resonances(traces[0], depth_tol=tol)
    table = assign_resonances(resonances, geometry)
    estimates = estimate_potential_integrals(table, geometry)
    payload = {
        "resonance_count": len(resonances),
        "unassigned": len(table.unassigned),
        "branches": [
            {
                "branch_index": e.branch_index,
                "tau": geometry[e.branch_index][0],
                "integral_hat": e.integral_hat,
                "shift_scale": e.shift_scale,
                "rms_residual": e.rms_residual,
                "count": e.count,
                "flags": list(e.flags),
            }
            for e in estimates
        ],
    }
    out = _out_dir(args, cfg)
    write_json(os.path.join(out, "integrals.json"), payload)
    return payload


def _fit_options(cfg, n_groups):
    opts = cfg.echo.get("fit", {})
    counts = tuple(int(t) for t in
                   opts.get("basis_counts", "3 " * n_groups).split())
    kind = opts.get("basis_kind", "full")
    freeze = None
    if "freeze" in opts:
        freeze = np.array([bool(int(t)) for t in opts["freeze"].split()])
    init = None
    if "init_coeffs" in opts:
        init = np.array([float(t) for t in opts["init_coeffs"].split()])
    return BasisSpec(counts=counts, kind=kind), freeze, init


def cmd_fit_potentials(args) -> dict:
    """fit per-branch potentials to one or two traces"""
    cfg = _require_config(args)
    traces = _load_traces(args)
    geometry = _geometry_from_config(cfg)
    basis, freeze, init = _fit_options(cfg, len(geometry))

    by_setting = {t.setting: t for t in traces}
    trace_n = by_setting.get(BoundarySetting.NEUMANN)
    trace_d = by_setting.get(BoundarySetting.DIRICHLET)
    if trace_n is None:
        raise ParameterError("fit-potentials requires a Neumann trace")
    if trace_d is None and freeze is None:
        raise ParameterError(
            "fit-potentials needs either two traces (two-spectra mode) or "
            "one trace plus fit.freeze in the config (half-known mode)"
        )
    if trace_d is not None and (
            trace_n.omegas.size != trace_d.omegas.size
            or not np.allclose(trace_n.omegas, trace_d.omegas)):
        raise ParameterError("the two traces sample different frequency grids")

    step_tol = (args.tolerance if args.tolerance is not None
                else cfg.fit_convergence)
    est = fit_potentials(trace_n, trace_d, geometry, basis,
                         freeze_mask=freeze, init_coeffs=init,
                         coupling_h=cfg.coupling_h, zc0=cfg.zc0,
                         step_tol=step_tol)
    out = _out_dir(args, cfg)
    for i, (tau, _) in enumerate(geometry):
        x = np.linspace(0.0, tau, est.q_samples[i].size)
        write_samples_csv(os.path.join(out, f"potential_{i}.csv"),
                          {"x": x, "q": est.q_samples[i]})
    payload = {
        "coeffs": [list(c) for c in est.coeffs],
        "coeff_stderr": [list(s) for s in est.coeff_stderr],
        "integral_hat": list(est.integral_hat),
        "misfit": est.misfit,
        "iterations": est.iterations,
        "flags": list(est.flags),
        "potential_files": [os.path.join(out, f"potential_{i}.csv")
                            for i in range(len(geometry))],
    }
    write_json(os.path.join(out, "fit.json"), payload)
    return payload


def cmd_check(args) -> dict:
    """validate a config and run the basic invariants on it"""
    cfg = _require_config(args)
    net = cfg.network()
    grid = cfg.omega_grid()
    checks = {}
    worst = 0.0
    for setting in cfg.settings:
        trace = sweep(net, grid, setting)
        worst = max(worst, float(np.abs(np.abs(trace.values) - 1.0).max()))
    checks["unit_modulus_defect"] = worst
    checks["unit_modulus_ok"] = bool(worst < 1e-9)
    checks["grid_step"] = float(grid[1] - grid[0])
    tau_sum = sum(b.tau * m for b, m in
                  zip(cfg.branches, cfg.multiplicities))
    nyquist = np.pi / (8.0 * tau_sum)
    checks["grid_resolves_resonances"] = bool(checks["grid_step"] <= nyquist)
    if not checks["unit_modulus_ok"]:
        raise ReflectKitError(
            f"unit-modulus defect {worst:.3e} exceeds 1e-9")
    return checks


_COMMANDS = {
    "simulate": cmd_simulate,
    "identify-geometry": cmd_identify_geometry,
    "estimate-integrals": cmd_estimate_integrals,
    "fit-potentials": cmd_fit_potentials,
    "check": cmd_check,
}


def _error_code(exc) -> str:
    name = type(exc).__name__
    out = []
    for ch in name:
        if ch.isupper() and out:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.monotonic()
    try:
        payload = _COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"error:{_error_code(exc)}:{exc}", file=sys.stderr)
        return _USAGE_EXIT
    except ReflectKitError as exc:
        print(f"error:{_error_code(exc)}:{exc}", file=sys.stderr)
        return _NUMERICAL_EXIT
    except OSError as exc:
        print(f"error:io_error:{exc}", file=sys.stderr)
        return _IO_EXIT
    wall = time.monotonic() - start
    # Wall time goes to stderr, not into report.json: artifacts must be
    # byte-identical across reruns with a fixed seed.
    print(f"reflectkit:{args.command}:ok wall_time_s={wall:.3f}",
          file=sys.stderr)

    cfg_echo = {}
    if args.config:
        try:
            cfg_echo = load_config(args.config).echo
        except (ReflectKitError, OSError):
            cfg_echo = {"path": args.config}
    report = {
        "command": args.command,
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "config_echo": cfg_echo,
        "version": __version__,
        "flags": payload.get("flags", []),
        "payload": payload,
    }
    try:
        out = args.out or (cfg_echo.get("output", {}).get("directory", "out"))
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "report.json"), report)
    except OSError as exc:
        print(f"error:io_error:{exc}", file=sys.stderr)
        return _IO_EXIT
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())

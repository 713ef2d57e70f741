"""Command-line entry point: ``singular-limits <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 domain escape or
other runtime failure, 4 failed acceptance check (``diagnose --assert``).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backward import riemann_profile, run_backward, spike_profile
from .errors import ConfigError, SingularLimitsError
from .functionals import functional_series, reports_from_series
from .harness import (RiemannProblem, cross_scheme_agreement, epsilon_study, lipschitz_study,
                      perturbed_pairs)
from .io import (CSVFormatError, RunConfig, parse_config, read_lattice, read_profile,
                 write_json, write_lattice, write_profile, write_table)
from .kernels import kernel_table
from .semidiscrete import lattice_delta, lattice_riemann, run_semidiscrete
from .systems import get_system

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 2, 3, 4
REPORT_COLUMNS = ("step", "tv", "q", "lyapunov", "c0", "source_magnitude")


def _load_config(args, required=True, study=False) -> RunConfig | None:
    if args.config is None:
        if required:
            raise ConfigError(["--config: this subcommand needs a configuration file"])
        return None
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError([f"--config: cannot read {args.config} ({exc.strerror})"]) from None
    return parse_config(text, study=study)


def _out_dir(args, cfg, default):
    out = Path(args.out or (cfg.out if cfg and cfg.out else default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _system(cfg):
    try:
        return get_system(cfg.system, **cfg.system_params)
    except TypeError as exc:
        raise ConfigError([f"system_params: {exc}"]) from None


def _say(args, text):
    if not args.quiet:
        print(text)


def _manifest(out, args, cfg, started, extra=None):
    payload = {
        "command": args.command,
        "version": __version__,
        "config": cfg.to_dict() if cfg else None,
        "wall_time_seconds": time.perf_counter() - started,
    }
    if extra:
        payload.update(extra)
    write_json(out / "manifest.json", payload)


def _initial_profile(cfg, system):
    ini, g = cfg.initial, cfg.grid
    if ini.kind == "riemann":
        return riemann_profile(ini.left, ini.right, g["x_min"], g["x_max"], g["dx"], ini.jump_at)
    if ini.kind == "spike":
        return spike_profile(g["x_min"], g["x_max"], g["dx"], center=ini.center, width=ini.width,
                             mass=ini.mass, direction=ini.direction, base=ini.base)
    profile, _ = read_profile(ini.path, cfg.system)
    return profile


def _initial_lattice(cfg, system):
    ini, w = cfg.initial, cfg.window
    if ini.kind == "riemann":
        return lattice_riemann(ini.left, ini.right, w["n_min"], w["n_max"], int(ini.jump_at))
    if ini.kind == "spike":
        return lattice_delta(w["n_min"], w["n_max"], at=int(ini.center), mass=ini.mass,
                             direction=ini.direction, base=ini.base)
    state, _ = read_lattice(ini.path, cfg.system)
    return state


def _check_scheme(cfg, scheme):
    if cfg.scheme != scheme:
        raise ConfigError([f"scheme: run-{scheme} needs scheme = \"{scheme}\" (got {cfg.scheme!r})"])


def cmd_run_backward(args):
    started = time.perf_counter()
    cfg = _load_config(args)
    _check_scheme(cfg, "backward")
    system = _system(cfg)
    out = _out_dir(args, cfg, "run-backward")
    initial = _initial_profile(cfg, system)
    records = run_backward(system, initial, cfg.steps, stride=cfg.snapshot_stride,
                           tv_budget=cfg.tv_budget)
    files = [f"step_{0:06d}.csv"]
    write_profile(out / files[0], initial, cfg.system, 0)
    for rec in records:
        name = f"step_{rec.step_index:06d}.csv"
        write_profile(out / name, rec.profile, cfg.system, rec.step_index)
        files.append(name)
    _manifest(out, args, cfg, started, {"scheme": "backward", "snapshots": files})
    _say(args, f"wrote {len(files)} profiles to {out}")
    return EXIT_OK


def cmd_run_semidiscrete(args):
    started = time.perf_counter()
    cfg = _load_config(args)
    _check_scheme(cfg, "semidiscrete")
    system = _system(cfg)
    out = _out_dir(args, cfg, "run-semidiscrete")
    states = run_semidiscrete(system, _initial_lattice(cfg, system), cfg.t_final, dt=cfg.dt,
                              snapshot_every=cfg.snapshot_stride)
    files = []
    for k, st in enumerate(states):
        name = f"snapshot_{k:06d}.csv"
        write_lattice(out / name, st, cfg.system)
        files.append(name)
    _manifest(out, args, cfg, started, {"scheme": "semidiscrete", "snapshots": files})
    _say(args, f"wrote {len(files)} lattice snapshots to {out}")
    return EXIT_OK


def cmd_kernels(args):
    started = time.perf_counter()
    out = _out_dir(args, None, "kernels")
    rows = kernel_table(with_oracle=not args.no_oracle)
    write_table(out / "kernels.csv",
                ("scheme", "lam", "mu", "offset", "closed_form", "oracle", "relative_error"), rows)
    worst = max(r[-1] for r in rows)
    _manifest(out, args, None, started, {"max_relative_error": None if np.isnan(worst) else worst})
    _say(args, f"{len(rows)} kernel values, max relative error {worst:.3g}")
    return EXIT_OK


def _load_run(run_dir, system_name):
    """States of a run directory written by run-backward / run-semidiscrete."""
    from .backward import BackwardRunState

    run_dir = Path(run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError([f"run directory: cannot read manifest.json ({exc})"]) from None
    scheme = manifest.get("scheme")
    files = manifest.get("snapshots", [])
    if scheme == "semidiscrete":
        return scheme, [read_lattice(run_dir / f, system_name)[0] for f in files]
    if scheme != "backward":
        raise ConfigError([f"run directory: unsupported scheme {scheme!r}"])
    loaded = [read_profile(run_dir / f, system_name) for f in files]
    states = []
    for (prev, pmeta), (cur, cmeta) in zip(loaded, loaded[1:]):
        if int(cmeta["step"]) != int(pmeta["step"]) + 1:
            raise ConfigError(["run directory: backward diagnostics need snapshot_stride = 1"])
        states.append(BackwardRunState(int(cmeta["step"]), cur, prev))
    return scheme, states


def cmd_diagnose(args):
    started = time.perf_counter()
    cfg = _load_config(args, required=False)
    run_dir = Path(args.run)
    if cfg is None:
        try:
            echo = json.loads((run_dir / "manifest.json").read_text())["config"]
            cfg = RunConfig(system=echo["system"], scheme=echo["scheme"],
                            system_params=echo["system_params"], c0=echo["c0"],
                            slack=echo["slack"])
        except (OSError, ValueError, KeyError, TypeError):
            raise ConfigError(["--config: missing and the run manifest has no usable config"]) from None
    system = _system(cfg)
    _, states = _load_run(run_dir, cfg.system)
    rows = functional_series(system, states, with_source=True)
    chosen, reports = None, []
    for c0 in sorted(cfg.c0):
        reports = reports_from_series(rows, c0, cfg.slack)
        if not any(r.flagged for r in reports):
            chosen = c0
            break
    out = _out_dir(args, None, str(run_dir / "diagnose"))
    write_table(out / "diagnose.csv", REPORT_COLUMNS + ("flagged",),
                [(r.step, r.total_variation, r.interaction_potential, r.lyapunov, r.c0,
                  r.source_magnitude, float(r.flagged)) for r in reports])
    _manifest(out, args, cfg, started, {"c0": chosen, "run": str(run_dir)})
    _say(args, f"smallest working c0: {chosen}")
    if args.assert_ and chosen is None:
        print("acceptance check failed: Lyapunov functional increased for every c0", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _riemann(cfg, system):
    left = cfg.study.left if cfg.study.left is not None else cfg.initial.left
    right = cfg.study.right if cfg.study.right is not None else cfg.initial.right
    if left is None or right is None:
        raise ConfigError(["study.left/study.right: Riemann states required"])
    return RiemannProblem(system, left, right, tv_budget=cfg.tv_budget)


def cmd_converge(args):
    started = time.perf_counter()
    cfg = _load_config(args, study=True)
    system = _system(cfg)
    out = _out_dir(args, cfg, "converge")
    record = epsilon_study(system, _riemann(cfg, system), cfg.scheme, cfg.study.epsilons,
                           cfg.study.t_physical, dx=cfg.study.dx, dt=cfg.dt)
    write_table(out / "convergence.csv", ("epsilon", "l1_error"),
                list(zip(record.epsilons, record.errors)))
    summary = {"scheme": cfg.scheme, "order": record.order, "errors": record.errors,
               "epsilons": record.epsilons, "runtimes": record.runtimes,
               "failures": {str(k): v for k, v in record.failures.items()}}
    write_json(out / "summary.json", summary)
    _manifest(out, args, cfg, started)
    _say(args, f"{cfg.scheme}: errors {record.errors}, order {record.order}")
    return EXIT_OK


def cmd_cross(args):
    started = time.perf_counter()
    cfg = _load_config(args, study=True)
    system = _system(cfg)
    out = _out_dir(args, cfg, "cross")
    rows = cross_scheme_agreement(system, _riemann(cfg, system), cfg.study.epsilons,
                                  cfg.study.t_physical, dx=cfg.study.dx, dt=cfg.dt)
    write_table(out / "cross.csv", ("epsilon", "l1_distance"), rows)
    ratio = rows[0][1] / rows[-1][1] if rows[-1][1] > 0 else None
    write_json(out / "summary.json", {"distances": rows, "reduction": ratio})
    _manifest(out, args, cfg, started)
    _say(args, f"cross-scheme distances {[d for _, d in rows]}, reduction {ratio}")
    return EXIT_OK


def cmd_stability(args):
    started = time.perf_counter()
    cfg = _load_config(args, study=True)
    system = _system(cfg)
    out = _out_dir(args, cfg, "stability")
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.study.epsilon
    pairs = perturbed_pairs(system, rng, cfg.study.pairs, cfg.study.pair_distance * eps, scale=eps)
    rows = []
    for k, pair in enumerate(pairs):
        rows.append((k, lipschitz_study(system, [pair], cfg.scheme, eps, cfg.study.t_physical,
                                        dx=cfg.study.dx, dt=cfg.dt)))
    write_table(out / "stability.csv", ("pair", "ratio"), rows)
    worst = max(r for _, r in rows)
    write_json(out / "summary.json", {"scheme": cfg.scheme, "lipschitz": worst})
    _manifest(out, args, cfg, started)
    _say(args, f"measured Lipschitz constant {worst:.6g}")
    return EXIT_OK


def _global_flags(parser, suppress):
    # subcommands repeat the flags with suppressed defaults, so a value given
    # before the subcommand name is not reset by the subparser
    extra = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="TOML run configuration", **extra)
    parser.add_argument("--out", help="output directory", **extra)
    parser.add_argument("--quiet", action="store_true", help="suppress summaries on stdout", **extra)
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    parser = _global_flags(argparse.ArgumentParser(
        prog="singular-limits",
        description="Backward and semi-discrete schemes for hyperbolic systems."), suppress=False)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run-backward", parents=[common], help="iterate the backward scheme").set_defaults(func=cmd_run_backward)
    sub.add_parser("run-semidiscrete", parents=[common], help="integrate the lattice scheme").set_defaults(func=cmd_run_semidiscrete)
    k = sub.add_parser("kernels", parents=[common], help="interaction integrals vs oracles")
    k.add_argument("--no-oracle", action="store_true", help="closed forms only")
    k.set_defaults(func=cmd_kernels)
    d = sub.add_parser("diagnose", parents=[common], help="Lyapunov reports for a run directory")
    d.add_argument("run", help="directory written by run-backward or run-semidiscrete")
    d.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 4 unless some c0 keeps the functional nonincreasing")
    d.set_defaults(func=cmd_diagnose)
    sub.add_parser("converge", parents=[common], help="epsilon -> 0 study").set_defaults(func=cmd_converge)
    sub.add_parser("cross", parents=[common], help="backward vs lattice distance").set_defaults(func=cmd_cross)
    sub.add_parser("stability", parents=[common], help="Lipschitz constant over perturbed pairs").set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (CSVFormatError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularLimitsError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

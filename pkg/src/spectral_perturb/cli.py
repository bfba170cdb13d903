"""Command-line front end: ``spectral-perturb {mesh,solve,sweep,verify,presets}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .coefficients import PRESETS, preset, preset_from_dict
from .eigensolve import DEFAULT_SEED, eigenpairs_to_json
from .errors import ConfigError, SolverError, SpectralPerturbError
from .fem import assemble_mass, assemble_stiffness, export_coo
from .geometry import DomainSpec, build_base, build_dumbbell
from .study import ALL_CHECKS, SCHEMA_VERSION, StudyConfig, run_sweep, solve_domain

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3

THREADS_ENV = "SPECTRAL_PERTURB_THREADS"
DEFAULT_H = 1 / 64
DEFAULT_SCHEDULE = (0.25, 0.125, 0.0625)

SCHEMA_HELP = f"""\
configuration file (JSON, "schema": {SCHEMA_VERSION}):
  {{
    "schema": {SCHEMA_VERSION},
    "domain": {{"omega": [x0, y0, x1, y1], "omega_tilde": [x0, y0, x1, y1],
               "p1": [x, y], "p2": [x, y], "tube_length": L,
               "d_exponent": 1, "n": 2, "m": 1}},
    "preset": {{"preset": "laplacian", ...parameters}}   (or just the name)
    "h": 0.015625,
    "epsilon_schedule": [0.25, 0.125, 0.0625],
    optional: "J", "k_max", "p_tilde", "q", "seed", "checks", "rel_gap",
              "tol", "budgets", "caccioppoli_balls", "korn_balls",
              "garding_trials"
  }}
  "domain" defaults to two unit squares joined by a tube of length 0.25.
  Command-line flags override file values.

checks: {", ".join(ALL_CHECKS)}

exit codes: 0 success, 1 invalid configuration or usage,
            2 solver failure, 3 an enabled inequality check failed
"""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _common(p: argparse.ArgumentParser, *, schedule: bool) -> None:
    p.add_argument("--config", type=Path, help="JSON configuration file (see below)")
    p.add_argument("--h", type=float, help=f"mesh pitch (default {DEFAULT_H})")
    if schedule:
        p.add_argument("--eps", type=float, nargs="+", help="epsilon schedule, decreasing")
    else:
        p.add_argument("--eps", type=float, help="tube width; omit for the base domain")
    p.add_argument("--k", type=int, help="number of eigenpairs k_max (default 6)")
    p.add_argument("--preset", help=f"coefficient preset: {', '.join(PRESETS)}")
    p.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    p.add_argument(
        "--threads", type=int,
        help=f"worker threads (default ${THREADS_ENV} or the machine's CPU count)",
    )


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="spectral-perturb", description="Dirichlet spectra of thin-tube dumbbells.",
                     epilog=SCHEMA_HELP, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="build and write a mesh", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(p, schedule=False)

    p = sub.add_parser("solve", help="lowest eigenpairs of one domain", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(p, schedule=False)
    p.add_argument("--export-matrices", action="store_true", help="also write B and M as COO text")

    p = sub.add_parser("sweep", help="epsilon sweep with the configured checks",
                       epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(p, schedule=True)

    p = sub.add_parser("verify", help="epsilon sweep with every inequality check enabled",
                       epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(p, schedule=True)

    p = sub.add_parser("presets", help="list or describe coefficient presets")
    psub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    psub.add_parser("list", help="print the preset names")
    show = psub.add_parser("show", help="print a preset's parameters as JSON")
    show.add_argument("name")
    return parser


def _load_config_dict(args) -> dict:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    data.setdefault("schema", SCHEMA_VERSION)
    data.setdefault("domain", DomainSpec.symmetric().to_dict())
    data.setdefault("preset", {"preset": "laplacian"})
    data.setdefault("h", DEFAULT_H)
    data.setdefault("epsilon_schedule", list(DEFAULT_SCHEDULE))
    if args.h is not None:
        data["h"] = args.h
    if args.eps is not None:
        data["epsilon_schedule"] = list(args.eps) if isinstance(args.eps, list) else [args.eps]
    if args.k is not None:
        data["k_max"] = args.k
    if args.preset is not None:
        data["preset"] = {"preset": args.preset}
    if args.seed is not None:
        data["seed"] = args.seed
    return data


def _config(args) -> StudyConfig:
    cfg = StudyConfig.from_dict(_load_config_dict(args))
    cfg.out = str(args.out)
    cfg.threads = args.threads if args.threads is not None else default_threads()
    if cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def _domain_mesh(args, cfg: StudyConfig):
    tensor = cfg.tensor()
    if args.eps is None:
        return build_base(cfg.domain_spec, cfg.h), tensor, None
    return build_dumbbell(cfg.domain_spec, args.eps, cfg.h), tensor, args.eps


def _cmd_mesh(args) -> int:
    cfg = _config(args)
    mesh, _, eps = _domain_mesh(args, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "mesh.json").write_text(mesh.to_json() + "\n")
    print(f"eps={eps!r} h={cfg.h!r} vertices={mesh.n_vertices} triangles={len(mesh.triangles)} "
          f"interior={len(mesh.interior_nodes)}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = _config(args)
    mesh, tensor, eps = _domain_mesh(args, cfg)
    if cfg.k_max > tensor.m * len(mesh.interior_nodes):
        raise ConfigError(f"k={cfg.k_max} exceeds the number of unknowns")
    prob = solve_domain(mesh, tensor, cfg.k_max, cfg.tol, cfg.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "eigenpairs.json").write_text(eigenpairs_to_json(prob.pairs) + "\n")
    for k, pair in enumerate(prob.pairs, start=1):
        with open(out / f"vector_{k}.txt", "w") as fh:
            pair.dump_vector(fh)
    if args.export_matrices:
        with open(out / "stiffness.coo", "w") as fh:
            export_coo(prob.B, fh)
        with open(out / "mass.coo", "w") as fh:
            export_coo(prob.M, fh)
    sig = " ".join(f"{p.sigma:.10g}" for p in prob.pairs)
    print(f"eps={eps!r} h={cfg.h!r} dofs={prob.B.shape[0]} sigma=[{sig}]")
    return EXIT_OK


def _cmd_sweep(args, all_checks: bool) -> int:
    cfg = _config(args)
    if all_checks:
        cfg.checks = ALL_CHECKS
    report = run_sweep(cfg)
    report.write(args.out)
    target = report.target
    for res in report.per_epsilon:
        diffs = [row["diff"] for row in report.rows
                 if row["epsilon"] == res.epsilon and row["k"] in target.indices]
        ok = all(r.passed for r in res.records)
        print(f"eps={res.epsilon!r} sigma_J={res.sigma[target.J - 1]:.10g} "
              f"diff_J={float(np.mean(diffs)):.6e} checks={'pass' if ok else 'FAIL'}")
    if report.fit is not None:
        print(f"fit a={report.fit['a']:.4f} logC={report.fit['log_C']:.4f} R2={report.fit['r2']:.4f} "
              f"a_theory={report.a_theory:.5f}")
    for flag in report.flags:
        print(f"warning: {flag}", file=sys.stderr)
    failed = [r for r in report.records if not r.passed]
    for r in failed:
        print(f"check failed: {r.name} eps={r.epsilon!r} constant={r.empirical_constant:.6g}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    t = preset(args.name)
    print(json.dumps({"preset": t.name, "m": t.m, "regime": t.regime, "params": t.params},
                     indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mesh":
            return _cmd_mesh(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command in ("sweep", "verify"):
            return _cmd_sweep(args, all_checks=args.command == "verify")
        return _cmd_presets(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpectralPerturbError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

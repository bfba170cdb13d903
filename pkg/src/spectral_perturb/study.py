"""Epsilon sweeps: eigenvalue clusters, convergence-rate fits and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import inequalities as ineq
from .coefficients import CoefficientTensor, DiscreteField, preset, preset_from_dict
from .eigensolve import DEFAULT_SEED, DEFAULT_TOL, EigenPair, smallest_eigenpairs
from .errors import ConfigError, InsufficientPoints, SpectralPerturbError
from .fem import assemble_mass, assemble_stiffness
from .geometry import (
    DomainSpec,
    Mesh,
    build_base,
    build_dumbbell,
    check_corkscrew,
    check_epsilon,
    cutoff_eta,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALL_CHECKS = (
    "monotonicity",
    "reverse_holder",
    "gradient_lp",
    "caccioppoli",
    "korn_ball",
    "sobolev_poincare",
    "near_orthonormality",
    "quasimode",
    "diag_dominance",
    "projector_distance",
    "corkscrew",
    "garding",
)
DEFAULT_CHECKS = tuple(c for c in ALL_CHECKS if c != "corkscrew")
JITTER = 0.05
# Gram entries that vanish by symmetry come out at this level
ROUNDOFF_FLOOR = 1e-12
UNIFORMITY_FACTOR = 3.0


@dataclass
class StudyConfig:
    domain_spec: DomainSpec
    preset: dict
    h: float
    epsilon_schedule: tuple[float, ...]
    J: int = 1
    k_max: int = 6
    p_tilde: float = 2.25
    q: float = 1.9
    seed: int = DEFAULT_SEED
    checks: tuple[str, ...] = DEFAULT_CHECKS
    out: str = "out"
    rel_gap: float = 1e-6
    tol: float = DEFAULT_TOL
    budgets: dict = field(default_factory=dict)
    threads: int = 1
    caccioppoli_balls: int = 50
    korn_balls: int = 20
    garding_trials: int = 1000

    def validate(self) -> None:
        eps = list(self.epsilon_schedule)
        if not eps:
            raise ConfigError("epsilon_schedule is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon_schedule must be strictly decreasing")
        for e in eps:
            check_epsilon(self.domain_spec, e, self.h)
        if not 1 <= self.J <= self.k_max:
            raise ConfigError("need 1 <= J <= k_max")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
        if not 2 < self.p_tilde <= 2.5:
            raise ConfigError("p_tilde must lie in (2, 2.5]")

    def tensor(self) -> CoefficientTensor:
        return preset_from_dict(self.preset)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "domain": self.domain_spec.to_dict(),
            "preset": dict(self.preset),
            "h": self.h,
            "epsilon_schedule": list(self.epsilon_schedule),
            "J": self.J,
            "k_max": self.k_max,
            "p_tilde": self.p_tilde,
            "q": self.q,
            "seed": self.seed,
            "checks": list(self.checks),
            "rel_gap": self.rel_gap,
            "tol": self.tol,
            "budgets": dict(self.budgets),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        schema = data.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {schema}")
        try:
            spec = DomainSpec.from_dict(data.pop("domain"))
            kwargs = dict(
                domain_spec=spec,
                preset=data.pop("preset"),
                h=float(data.pop("h")),
                epsilon_schedule=tuple(float(e) for e in data.pop("epsilon_schedule")),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(kwargs["preset"], str):
            kwargs["preset"] = {"preset": kwargs["preset"]}
        if "checks" in data:
            data["checks"] = tuple(data["checks"])
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**kwargs, **data)


@dataclass(frozen=True)
class Cluster:
    J: int
    size: int
    gap_below: float | None
    gap_above: float | None

    @property
    def indices(self) -> range:
        return range(self.J, self.J + self.size)


def detect_clusters(sigma_0: Sequence[float], rel_gap: float = 1e-6) -> list[Cluster]:
    """Group consecutive eigenvalues whose relative gap is below ``rel_gap``.

    The last cluster may be incomplete when the spectrum is truncated; its
    ``gap_above`` is then ``None``.
    """
    s = np.asarray(sigma_0, dtype=float)
    if len(s) == 0:
        return []
    if np.any(np.diff(s) < -1e-12 * np.abs(s[1:])):
        raise ValueError("sigma_0 must be ascending")
    starts = [0]
    for k in range(1, len(s)):
        if (s[k] - s[k - 1]) > rel_gap * max(abs(s[k]), abs(s[k - 1])):
            starts.append(k)
    out = []
    for a, nxt in zip(starts, starts[1:] + [len(s)]):
        below = float(s[a] - s[a - 1]) if a > 0 else None
        above = float(s[nxt] - s[nxt - 1]) if nxt < len(s) else None
        out.append(Cluster(a + 1, nxt - a, below, above))
    return out


def fit_rate(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through (log eps, log diff); returns (a, log C, R^2)."""
    pts = [(e, d) for e, d in points]
    kept = [(e, d) for e, d in pts if d > 0 and e > 0]
    if len(kept) < len(pts):
        log.warning("dropped %d non-positive differences", len(pts) - len(kept))
    if len(kept) < 2:
        raise InsufficientPoints(f"need at least 2 positive differences, got {len(kept)}")
    x = np.log([e for e, _ in kept])
    y = np.log([d for _, d in kept])
    a, log_c = np.polyfit(x, y, 1)
    resid = y - (a * x + log_c)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(log_c), r2


def theoretical_rate(p_tilde: float, d: float) -> float:
    """d (p - 2) / (4 p), the exponent delivered by the quasimode argument."""
    if p_tilde < 2:
        raise ValueError("p_tilde must be >= 2")
    return d * (p_tilde - 2) / (4 * p_tilde)


@dataclass
class EpsilonResult:
    epsilon: float
    sigma: list[float]
    records: list[ineq.InequalityRecord]
    cluster_gram: list[list[float]] | None = None
    diag_max: float | None = None
    offdiag_max: float | None = None
    quasimode: float | None = None
    projector: float | None = None
    reverse_holder: float | None = None
    gap_intruder: bool = False


@dataclass
class ConvergenceReport:
    config: dict
    h: float
    rows: list[dict]
    clusters: list[Cluster]
    target: Cluster
    fit: dict | None
    a_theory: float
    per_epsilon: list[EpsilonResult]
    sweep_checks: list[ineq.InequalityRecord]
    flags: list[str]

    @property
    def records(self) -> list[ineq.InequalityRecord]:
        out = []
        for r in self.per_epsilon:
            out.extend(r.records)
        return out + self.sweep_checks

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def cluster_diffs(self) -> list[tuple[float, float]]:
        """(eps, mean diff over the target cluster) in schedule order."""
        out = []
        for res in self.per_epsilon:
            diffs = [row["diff"] for row in self.rows if row["epsilon"] == res.epsilon and row["k"] in self.target.indices]
            out.append((res.epsilon, float(np.mean(diffs))))
        return out

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "config": self.config,
            "h": self.h,
            "rows": self.rows,
            "clusters": [c.__dict__ for c in self.clusters],
            "target_cluster": self.target.__dict__,
            "cluster_diffs": [{"epsilon": e, "diff": d} for e, d in self.cluster_diffs()],
            "fit": self.fit,
            "a_theory": self.a_theory,
            "records": [r.to_dict() for r in self.records],
            "flags": self.flags,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "k", "sigma_eps", "sigma_0", "diff", "h"])
        for r in self.rows:
            w.writerow([repr(r["epsilon"]), r["k"], repr(r["sigma_eps"]), repr(r["sigma_0"]), repr(r["diff"]), repr(self.h)])
        return buf.getvalue()

    def records_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "epsilon", "constant", "pass"])
        for r in self.records:
            w.writerow([r.name, "" if r.epsilon is None else repr(r.epsilon), repr(r.empirical_constant), int(r.passed)])
        return buf.getvalue()

    def gnuplot_script(self) -> str:
        pts = self.cluster_diffs()
        lines = [
            "# log-log convergence of the target eigenvalue cluster",
            "set terminal pngcairo size 800,600",
            "set output 'convergence.png'",
            "set logscale xy",
            "set xlabel 'epsilon'",
            "set ylabel 'sigma_0 - sigma_eps'",
            "set key left top",
            "$data << EOD",
        ]
        lines += [f"{e!r} {d!r}" for e, d in pts if d > 0]
        lines.append("EOD")
        plots = ["$data using 1:2 with linespoints title 'cluster mean diff'"]
        if self.fit is not None:
            a, lc = self.fit["a"], self.fit["log_C"]
            lines.append(f"fit_line(x) = exp({lc!r}) * x**{a!r}")
            plots.append(f"fit_line(x) title 'fit a = {a:.3f}'")
            e0, d0 = pts[0]
            lines.append(f"theory(x) = {d0!r} * (x / {e0!r})**{self.a_theory!r}")
            plots.append(f"theory(x) dashtype 2 title 'a_theory = {self.a_theory:.4f}'")
        lines.append("plot " + ", \\\n     ".join(plots))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | os.PathLike) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "csv": out / "sweep.csv",
            "json": out / "report.json",
            "plot": out / "convergence.gp",
            "records": out / "records.jsonl",
            "summary": out / "summary.csv",
        }
        files["csv"].write_text(self.rows_csv())
        files["json"].write_text(self.to_json() + "\n")
        files["plot"].write_text(self.gnuplot_script())
        files["records"].write_text(self.records_jsonl())
        files["summary"].write_text(self.summary_csv())
        return files


def coercivity_constant(tensor: CoefficientTensor) -> float:
    """Lower bound delta of B(u, u) / |grad u|^2 over fields vanishing on the boundary.

    For the Lame family this is the infimum of mu; otherwise the
    ellipticity constant theta, which also covers the null-Lagrangian
    preset since its determinant term integrates to zero.
    """
    if tensor.regime == "lame":
        return float(tensor.delta)
    return float(tensor.theta)


@dataclass
class _Problem:
    mesh: Mesh
    B: object
    M: object
    pairs: list[EigenPair]


def solve_domain(mesh: Mesh, tensor: CoefficientTensor, k: int, tol: float, seed: int) -> _Problem:
    B = assemble_stiffness(mesh, tensor)
    M = assemble_mass(mesh, tensor.m)
    return _Problem(mesh, B, M, smallest_eigenpairs(B, M, k, tol=tol, seed=seed))


def _random_balls(mesh: Mesh, count: int, radii: Sequence[float], rng) -> list[tuple[tuple[float, float], float]]:
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    balls = []
    for i in range(count):
        c = rng.uniform(lo, hi)
        balls.append(((float(c[0]), float(c[1])), float(radii[i % len(radii)])))
    return balls


def _solve_epsilon(cfg: StudyConfig, tensor, base: _Problem, clusters, target, index: int) -> EpsilonResult:
    eps = cfg.epsilon_schedule[index]
    spec = cfg.domain_spec
    m = tensor.m
    h = cfg.h
    budgets = cfg.budgets
    rng = np.random.default_rng([cfg.seed, index])
    try:
        mesh = build_dumbbell(spec, eps, h)
        prob = solve_domain(mesh, tensor, cfg.k_max, cfg.tol, cfg.seed)
    except SpectralPerturbError as exc:
        exc.args = (f"epsilon={eps!r}: {exc}",)
        raise
    sigma = [p.sigma for p in prob.pairs]
    sigma0 = [p.sigma for p in base.pairs]
    res = EpsilonResult(epsilon=eps, sigma=sigma, records=[])
    checks = set(cfg.checks)
    ground = prob.pairs[0]

    def budget(name):
        return float(budgets.get(name, ineq.DEFAULT_BUDGET))

    if "monotonicity" in checks:
        res.records.append(
            ineq.check_monotonicity(sigma, sigma0, cfg.k_max, mesh_eps=mesh, mesh_0=base.mesh, epsilon=eps)
        )
    if "reverse_holder" in checks:
        rec = ineq.check_reverse_holder(mesh, ground, m, cfg.p_tilde, budget("reverse_holder"), eps)
        res.reverse_holder = rec.empirical_constant
        res.records.append(rec)
    if "gradient_lp" in checks:
        for k in range(cfg.k_max):
            rec = ineq.check_gradient_lp(
                mesh, prob.pairs[k], m, cfg.p_tilde, sigma0[k], cfg.q, budget("gradient_lp"), eps
            )
            rec.parameters["k"] = k + 1
            res.records.append(rec)
    if "caccioppoli" in checks:
        balls = _random_balls(mesh, cfg.caccioppoli_balls, [2 * h, 4 * h, 8 * h], rng)
        res.records.append(ineq.check_caccioppoli(mesh, ground, balls, m, budget=budget("caccioppoli"), epsilon=eps))
    if "korn_ball" in checks and m == 2:
        u = DiscreteField.from_dofs(mesh, ground.vector, m)
        balls = _random_balls(mesh, cfg.korn_balls, [4 * h, 8 * h, 16 * h], rng)
        worst = ineq.korn_ball_sample(mesh, u, balls, budget("korn_ball"), eps)
        if worst is not None:
            res.records.append(worst)
    if "sobolev_poincare" in checks:
        u = DiscreteField.from_dofs(mesh, ground.vector, m)
        worst = None
        for center, r in _random_balls(mesh, 10, [8 * h, 16 * h], rng):
            try:
                rec = ineq.check_sobolev_poincare(mesh, u, center, r, budget=budget("sobolev_poincare"), epsilon=eps)
            except (ineq.EmptyBall, ineq.BadSubset):
                continue
            if worst is None or rec.empirical_constant > worst.empirical_constant:
                worst = rec
        if worst is not None:
            res.records.append(worst)
    if "garding" in checks:
        grad_gram = assemble_stiffness(mesh, preset("laplacian", m=m))
        res.records.append(ineq.check_garding(
            prob.B, grad_gram, coercivity_constant(tensor),
            trials=cfg.garding_trials, seed=cfg.seed + index, epsilon=eps,
        ))
    if "corkscrew" in checks:
        c0 = check_corkscrew(spec, eps, [eps / 4, eps / 2, eps], 100, seed=cfg.seed, resolution=eps / 64)
        res.records.append(
            ineq._record("corkscrew", eps, c0, {}, c0, 0.0, {"radii": [eps / 4, eps / 2, eps]}, passed=c0 > 0)
        )

    cluster_pairs = [prob.pairs[k - 1] for k in target.indices]
    need_eta = checks & {"near_orthonormality", "quasimode", "diag_dominance", "projector_distance"}
    if need_eta:
        eta = cutoff_eta(spec, eps, mesh)
        rec = ineq.check_near_orthonormality(
            mesh, eta, cluster_pairs, m, cfg.p_tilde, spec.d_exponent, eps, budget("near_orthonormality")
        )
        res.cluster_gram = rec.parameters["gram"]
        res.diag_max = rec.lhs
        res.offdiag_max = rec.rhs_components["offdiag_max"]
        if "near_orthonormality" in checks:
            res.records.append(rec)
        transferred = [ineq.transfer_to_base(mesh, base.mesh, p.vector, m, eta) for p in cluster_pairs]
        if "quasimode" in checks:
            vals = [
                ineq.check_quasimode_residual(base.B, base.M, f, p.sigma)
                for f, p in zip(transferred, cluster_pairs)
            ]
            res.quasimode = float(max(vals))
        if "projector_distance" in checks:
            basis_a = np.column_stack([base.pairs[k - 1].vector for k in target.indices])
            res.projector = ineq.projector_distance(basis_a, np.column_stack(transferred), base.M)

    # another eigenvalue entering the gap above the target cluster
    upper = target.J + target.size
    if upper <= len(sigma0):
        mid = 0.5 * (sigma0[target.J - 1] + sigma0[upper - 1])
        res.gap_intruder = any(s < mid for s in sigma[upper - 1:])
    return res


def _sequence_record(name, values, epsilons, strict=False):
    ok = ineq.is_decreasing(values, JITTER, strict=strict, floor=ROUNDOFF_FLOOR)
    return ineq._record(
        name, None, values[-1], {"first": values[0]},
        values[-1] / values[0] if values[0] else 0.0, 1.0 + JITTER,
        {"values": list(values), "epsilons": list(epsilons), "jitter": JITTER, "strict": strict,
         "floor": ROUNDOFF_FLOOR},
        passed=ok,
    )


def run_sweep(config: StudyConfig) -> ConvergenceReport:
    """Solve the base domain once and each dumbbell of the schedule, then verify."""
    config.validate()
    tensor = config.tensor()
    base_mesh = build_base(config.domain_spec, config.h)
    base = solve_domain(base_mesh, tensor, config.k_max, config.tol, config.seed)
    sigma0 = [p.sigma for p in base.pairs]
    clusters = detect_clusters(sigma0, config.rel_gap)
    target = next(c for c in clusters if config.J in c.indices)
    if target.gap_above is None:
        raise ConfigError(
            f"cluster of sigma_{config.J} reaches k_max={config.k_max}; increase k_max"
        )

    n = len(config.epsilon_schedule)
    if config.threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda i: _solve_epsilon(config, tensor, base, clusters, target, i), range(n)))
    else:
        results = [_solve_epsilon(config, tensor, base, clusters, target, i) for i in range(n)]

    rows = []
    for res in results:
        for k in range(config.k_max):
            rows.append({
                "epsilon": res.epsilon,
                "k": k + 1,
                "sigma_eps": res.sigma[k],
                "sigma_0": sigma0[k],
                "diff": sigma0[k] - res.sigma[k],
            })

    report = ConvergenceReport(
        config=config.to_dict(),
        h=config.h,
        rows=rows,
        clusters=clusters,
        target=target,
        fit=None,
        a_theory=theoretical_rate(config.p_tilde, config.domain_spec.d_exponent),
        per_epsilon=results,
        sweep_checks=[],
        flags=[],
    )
    pts = report.cluster_diffs()
    try:
        a, log_c, r2 = fit_rate(pts)
        report.fit = {"a": a, "log_C": log_c, "r2": r2, "points": len(pts)}
    except InsufficientPoints as exc:
        report.flags.append(f"no rate fit: {exc}")

    eps = [r.epsilon for r in results]
    sweep = report.sweep_checks
    if n > 1:
        sweep.append(_sequence_record("eigenvalue_convergence", [d for _, d in pts], eps))
    if n > 1 and results[0].diag_max is not None and "near_orthonormality" in config.checks:
        sweep.append(_sequence_record("near_orthonormality_diag_decay", [r.diag_max for r in results], eps))
        if target.size > 1:
            sweep.append(_sequence_record("near_orthonormality_offdiag_decay", [r.offdiag_max for r in results], eps))
    if n > 1 and "quasimode" in config.checks:
        sweep.append(_sequence_record("quasimode_decay", [r.quasimode for r in results], eps))
    if n > 1 and "projector_distance" in config.checks:
        sweep.append(_sequence_record("projector_distance_decay", [r.projector for r in results], eps))
    if "diag_dominance" in config.checks and results[-1].cluster_gram is not None:
        ok = ineq.check_diag_dominance(np.array(results[-1].cluster_gram))
        sweep.append(ineq._record(
            "diag_dominance", results[-1].epsilon, float(ok), {}, float(ok), 1.0,
            {"gram": results[-1].cluster_gram}, passed=ok,
        ))
    if n > 1 and "reverse_holder" in config.checks:
        consts = [r.reverse_holder for r in results]
        spread = max(consts) / min(consts) if min(consts) > 0 else math.inf
        sweep.append(ineq._record(
            "reverse_holder_uniformity", None, spread, {}, spread, UNIFORMITY_FACTOR,
            {"constants": consts, "epsilons": eps},
        ))
    for r in results:
        if r.gap_intruder:
            report.flags.append(f"epsilon={r.epsilon!r}: eigenvalue above the cluster entered the gap")
    return report

"""Command-line front end: ``cpa example1 | sweep | simulate | probe``.

Settings come from built-in defaults, then an optional ``key=value`` config
file, then command-line flags (flags win).  Exit status is 0 on success, 1
when a check fails and 2 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pipeline as pl
from . import simulator as sim
from .errors import CpaError
from .scheme import (
    CpaScheme,
    SystemParams,
    Verdict,
    build_constraint_system,
    cauchy_binet_check,
    check_feasibility,
    construct_evaluation_points,
    genericity_probe,
    individual_threshold,
    infeasibility_certificate,
    min_responses,
    orthogonality_residual,
    random_params,
    residual_scale,
    scheme_from_coefficients,
)

log = logging.getLogger("cpa")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

EXAMPLE1_ALPHA = (-1.0, 0.0, 1.0)
EXAMPLE1_W = (-0.5, 1.0, 0.5)
EXAMPLE1_C = (-0.0506, 0.0506, 0.5)
EXAMPLE1_ROOTS = (-0.37272, 0.27152)

CPA_FEASIBLE = "CPA-feasible"
INDIVIDUAL_ONLY = "individual-only"
INFEASIBLE = "infeasible"

SWEEP_COLUMNS = ("K", "d", "N", "N_star", "individual_threshold", "classification",
                 "mean_residual", "mean_recovery_error", "trials", "certificate")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str | None = None
    trials: int = 5
    k_min: int = 3
    k_max: int = 10
    degrees: tuple[int, ...] = (1, 2)
    tol: float = 1e-6
    n_policy: str = "all"
    k: int = 3
    d: int = 1
    n: int = 2
    latency: str = "zero"
    max_ticks: int = 0
    threaded: bool = True
    q: int = 2
    v: int = 2

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 2 <= k_min <= k_max, got {self.k_min}..{self.k_max}")
        if not self.degrees or min(self.degrees) < 1:
            raise ConfigError("degrees must be a nonempty list of positive integers")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.n_policy not in ("all", "nstar"):
            raise ConfigError("n_policy must be 'all' or 'nstar'")
        if self.k < 2 or self.d < 1 or self.n < 1:
            raise ConfigError("need k >= 2, d >= 1, n >= 1")
        if self.latency not in ("zero", "uniform") or self.max_ticks < 0:
            raise ConfigError("latency must be 'zero' or 'uniform' with max_ticks >= 0")
        if self.q < 1 or self.v < 1:
            raise ConfigError("q and v must be >= 1")
        return self


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_degrees(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


_FIELD_PARSERS = {
    "seed": int, "out": str, "trials": int, "k_min": int, "k_max": int,
    "degrees": _parse_degrees, "tol": float, "n_policy": str, "k": int, "d": int,
    "n": int, "latency": str, "max_ticks": int, "threaded": _parse_bool, "q": int, "v": int,
}


def read_config_file(path: str | os.PathLike) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _FIELD_PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


COMMAND_DEFAULTS = {"probe": {"trials": 200, "k_min": 4, "k_max": 5}}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    merged = dict(COMMAND_DEFAULTS.get(getattr(args, "command", None), {}))
    if args.config:
        merged.update(read_config_file(args.config))
    for f in dataclasses.fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            merged[f.name] = val
    return ExperimentConfig(**merged).validate()


def fmt_number(x) -> str:
    """17 significant digits; complex values as ``a+bi``."""
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
        return f"{z.real:.17g}{sign}{abs(z.imag):.17g}i"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def cell_rng(seed: int, K: int, d: int, N: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, K, d, N, trial]))


def classify(K: int, d: int, N: int) -> str:
    if N >= individual_threshold(K, d):
        return INDIVIDUAL_ONLY
    if N >= min_responses(K, d):
        return CPA_FEASIBLE
    return INFEASIBLE


def _relative_residual(scheme) -> float:
    return orthogonality_residual(scheme) / residual_scale(scheme)


# ---------------------------------------------------------------- example1

def cmd_example1(cfg: ExperimentConfig, out=None) -> dict:
    out = out or sys.stdout
    params = SystemParams(3, 1, 2, EXAMPLE1_W, EXAMPLE1_ALPHA)
    system = build_constraint_system(params)
    scheme = scheme_from_coefficients(params, EXAMPLE1_C)
    roots = sorted(scheme.beta, key=lambda z: z.real)
    residual = orthogonality_residual(scheme)
    print(f"U = {np.round(system.U.real, 12).tolist()}", file=out)
    print(f"c = {list(EXAMPLE1_C)}", file=out)
    print("P_form(z) = " + " + ".join(f"({fmt_number(complex(a))}) z^{i}"
                                       for i, a in enumerate(np.asarray(EXAMPLE1_C) + 0j)), file=out)
    print("roots = " + ", ".join(fmt_number(r) for r in roots), file=out)
    print(f"residual = {residual:.3e}", file=out)

    failures = []
    if np.max(np.abs(system.U - np.array([[1, 1, 0]]))) > 1e-12:
        failures.append("U differs from [1 1 0]")
    if not all(abs(r - e) < 1e-3 for r, e in zip(roots, EXAMPLE1_ROOTS)):
        failures.append(f"roots {roots} not within 1e-3 of {EXAMPLE1_ROOTS}")
    if not residual < 1e-12:
        failures.append(f"residual {residual:.3e} >= 1e-12")

    alternatives = []
    for s in (cfg.seed, cfg.seed + 7):
        alt = construct_evaluation_points(params, seed=s)
        cert = check_feasibility(alt)
        rel = _relative_residual(alt)
        alternatives.append({"seed": s, "beta": [fmt_number(b) for b in alt.beta],
                             "verdict": cert.verdict.value, "relative_residual": rel})
        print(f"seed {s}: beta = {[fmt_number(b) for b in alt.beta]} "
              f"{cert.verdict.value}, relative residual {rel:.3e}", file=out)
        if cert.verdict is not Verdict.FEASIBLE or not rel < 1e-9:
            failures.append(f"seed {s}: {cert.verdict.value}")
    return {"U": [[fmt_number(complex(x)) for x in row] for row in system.U],
            "c": list(EXAMPLE1_C), "roots": [fmt_number(r) for r in roots],
            "residual": residual, "alternatives": alternatives, "failures": failures}


# ------------------------------------------------------------------ sweep

@dataclass
class RegimeRow:
    K: int
    d: int
    N: int
    N_star: int
    individual_threshold: int
    classification: str
    mean_residual: float
    mean_recovery_error: float
    trials: int
    certificate: str = ""

    def as_csv(self) -> list[str]:
        return [fmt_number(getattr(self, c)) for c in SWEEP_COLUMNS]


def _sweep_cell(cfg: ExperimentConfig, K: int, d: int, N: int) -> RegimeRow:
    cls = classify(K, d, N)
    residuals, errors, certs = [], [], []
    for t in range(cfg.trials):
        rng = cell_rng(cfg.seed, K, d, N, t)
        params = random_params(K, d, N, rng)
        if cls == INFEASIBLE:
            certs.append(infeasibility_certificate(params).verdict.value)
            continue
        if cls == CPA_FEASIBLE:
            scheme = construct_evaluation_points(params, rng)
            residuals.append(_relative_residual(scheme))
            certs.append(check_feasibility(scheme).verdict.value)
        else:
            scheme = CpaScheme.from_points(params, pl.baseline_points(params, rng))
            residuals.append(0.0)
            certs.append(Verdict.INDIVIDUAL_DECODING_REGIME.value)
        data = pl.random_dataset(K, cfg.q, cfg.v, rng)
        task = pl.random_task(d, rng)
        truth = pl.ground_truth(data, task, params.w)
        if cls == CPA_FEASIBLE:
            result = pl.run_pipeline(data, scheme, task)
        else:
            responses = [pl.worker_compute(s, task) for s in pl.encode(data, scheme)]
            _, result = pl.decode_individual(responses, scheme.beta, params)
        errors.append(pl.recovery_error(result, truth))
    distinct = sorted(set(certs))
    return RegimeRow(K, d, N, min_responses(K, d), individual_threshold(K, d), cls,
                     float(np.mean(residuals)) if residuals else math.nan,
                     float(np.mean(errors)) if errors else math.nan,
                     cfg.trials, "|".join(distinct))


def sweep_rows(cfg: ExperimentConfig) -> list[RegimeRow]:
    rows = []
    for d in cfg.degrees:
        for K in range(cfg.k_min, cfg.k_max + 1):
            n_star = min_responses(K, d)
            ns = [n_star] if cfg.n_policy == "nstar" else range(1, individual_threshold(K, d) + 1)
            for N in ns:
                log.info("sweep cell K=%d d=%d N=%d", K, d, N)
                rows.append(_sweep_cell(cfg, K, d, N))
    return rows


def write_rows(rows: Sequence[RegimeRow], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow(r.as_csv())


def cmd_sweep(cfg: ExperimentConfig) -> tuple[list[RegimeRow], list[str]]:
    rows = sweep_rows(cfg)
    write_rows(rows, cfg.out or "sweep.csv")
    failures = [f"K={r.K} d={r.d} N={r.N}: mean recovery error {r.mean_recovery_error:.3e}"
                for r in rows if r.classification != INFEASIBLE
                and not r.mean_recovery_error < cfg.tol]
    return rows, failures


# --------------------------------------------------------------- simulate

def cmd_simulate(cfg: ExperimentConfig) -> tuple[dict, sim.RunTrace]:
    K, d, N = cfg.k, cfg.d, cfg.n
    rng = cell_rng(cfg.seed, K, d, N, 0)
    params = random_params(K, d, N, rng)
    if classify(K, d, N) == INDIVIDUAL_ONLY:
        scheme = CpaScheme.from_points(params, pl.baseline_points(params, rng))
        method = pl.METHOD_INDIVIDUAL
    else:
        scheme = construct_evaluation_points(params, rng)
        method = pl.METHOD_CPA
    data = pl.random_dataset(K, cfg.q, cfg.v, rng)
    task = pl.random_task(d, rng)
    latency = (sim.UniformRandomLatency(cfg.max_ticks) if cfg.latency == "uniform"
               else sim.ZeroLatency())
    config = sim.SimConfig(latency, cfg.seed, N, threaded=cfg.threaded)
    trace = sim.run_simulation(params, scheme, data, task, config, method=method)
    report = sim.trace_validate(trace)
    summary = {
        "K": K, "d": d, "N": N, "seed": cfg.seed, "method": method,
        "relative_residual": _relative_residual(scheme) if method == pl.METHOD_CPA else 0.0,
        "recovery_error": pl.recovery_error(trace.final, pl.ground_truth(data, task, params.w)),
        "message_count": len(trace.messages),
        "trace_valid": report.valid,
        "violations": report.violations,
    }
    return summary, trace


# ------------------------------------------------------------------ probe

def probe_points(cfg: ExperimentConfig) -> list[tuple[int, int, int]]:
    pts = []
    for d in cfg.degrees:
        for K in range(cfg.k_min, cfg.k_max + 1):
            for N in sorted({min_responses(K, d), d * (K - 1)}):
                if min_responses(K, d) <= N <= d * (K - 1):
                    pts.append((K, d, N))
    return pts


def cauchy_binet_battery(seed: int, instances: int = 100, max_k: int = 6,
                         max_c: int = 4) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCB]))
    agree = 0
    worst = 0.0
    for _ in range(instances):
        K = int(rng.integers(2, max_k + 1))
        d = int(rng.integers(1, 4))
        # pick N so that 1 <= C <= min(K, N+1, max_c)
        choices = [N for N in range(1, d * (K - 1) + 1)
                   if 1 <= d * (K - 1) - N + 1 <= min(K, N + 1, max_c)]
        if not choices:
            K, d, choices = 3, 1, [2]
        N = int(rng.choice(choices))
        res = cauchy_binet_check(random_params(K, d, N, rng))
        agree += res.agree
        worst = max(worst, abs(res.lhs - res.rhs) / (1.0 + abs(res.lhs)))
    return {"instances": instances, "agree_fraction": agree / instances, "worst_relative_gap": worst}


def cmd_probe(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    reports = [genericity_probe(K, d, N, cfg.trials, cfg.seed).as_dict()
               for K, d, N in probe_points(cfg)]
    cb = cauchy_binet_battery(cfg.seed)
    failures = [f"K={r['K']} d={r['d']} N={r['N']}: {key} = {r[key]}"
                for r in reports for key in ("success", "leading_nonzero", "disjoint", "distinct_roots")
                if r[key] != 1.0]
    if cb["agree_fraction"] != 1.0:
        failures.append(f"Cauchy-Binet agreement {cb['agree_fraction']}")
    return {"seed": cfg.seed, "trials": cfg.trials, "genericity": reports, "cauchy_binet": cb}, failures


# -------------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (flags override it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file")
    common.add_argument("--trials", type=int)
    common.add_argument("--k-min", dest="k_min", type=int)
    common.add_argument("--k-max", dest="k_max", type=int)
    common.add_argument("--degrees", type=_parse_degrees, help="comma-separated, e.g. 1,2")
    common.add_argument("--tol", type=float, help="recovery-error tolerance for checks")

    parser = argparse.ArgumentParser(prog="cpa", description="Coded polynomial aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("example1", parents=[common], help="replay the K=3 linear example")
    sw = sub.add_parser("sweep", parents=[common], help="regime map over (K, d, N)")
    sw.add_argument("--n-policy", dest="n_policy", choices=("all", "nstar"))
    si = sub.add_parser("simulate", parents=[common], help="run the master/worker simulator")
    si.add_argument("--k", type=int)
    si.add_argument("--d", type=int)
    si.add_argument("--n", type=int)
    si.add_argument("--latency", choices=("zero", "uniform"))
    si.add_argument("--max-ticks", dest="max_ticks", type=int)
    si.add_argument("--single-threaded", dest="threaded", action="store_const", const=False)
    sub.add_parser("probe", parents=[common], help="genericity and Cauchy-Binet batteries")
    return parser


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=fmt_number) + "\n",
                          encoding="utf-8")


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("CPA_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = build_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "example1":
            report = cmd_example1(cfg)
            if cfg.out:
                _write_json(report, cfg.out)
            failures = report["failures"]
        elif args.command == "sweep":
            rows, failures = cmd_sweep(cfg)
            print(f"wrote {len(rows)} rows to {cfg.out or 'sweep.csv'}")
        elif args.command == "simulate":
            summary, trace = cmd_simulate(cfg)
            trace_path = cfg.out or "trace.jsonl"
            trace.write(trace_path)
            _write_json(summary, str(trace_path) + ".summary.json")
            print(json.dumps(summary, sort_keys=True))
            failures = list(summary["violations"])
            if not summary["recovery_error"] < cfg.tol:
                failures.append(f"recovery error {summary['recovery_error']:.3e} >= {cfg.tol}")
        else:
            report, failures = cmd_probe(cfg)
            _write_json(report, cfg.out or "probe.json")
            print(json.dumps(report, sort_keys=True))
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except CpaError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL

    for f in failures:
        print(f"FAILED: {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

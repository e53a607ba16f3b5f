"""Command-line experiment runner.

Subcommands: simulate, analyze, clt-hitting, clt-position, lln, diagnostics,
oracle-check.  A run consumes one JSON config file and writes a per-run
directory containing manifest.json (config snapshot, seeds, timestamps,
output digests), report.json (no timing, byte-stable across reruns), and for
sampling experiments samples.csv and cdf.csv.

Exit codes: 0 success, 2 configuration error, 3 eligibility error,
4 numerical non-convergence, 5 guard breach or step budget.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analytics, harness, oracle
from .environment import (
    check_conditions,
    classify,
    model_from_dict,
    model_to_dict,
    odds_growth_rate,
    realize,
    suggested_burn_in,
)
from .errors import (
    ConfigError,
    GuardBreachError,
    IndexRangeError,
    ModelError,
    MomentDivergenceError,
    NonSummableError,
    NotCltEligibleError,
    QuadratureError,
    RwreError,
    StepBudgetExceededError,
    WindowTooSmallError,
)
from .harness import ExperimentConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ELIGIBILITY = 3
EXIT_NUMERICAL = 4
EXIT_GUARD = 5

DEFAULT_SEED = 0xC0FFEE
_EXPERIMENT_FIELDS = {
    "kind", "n", "t", "replicas", "centering", "x_grid", "t_grid", "n_grid",
    "diag_c", "ks_threshold", "lln_rel_tol", "env_replicates", "left_guard", "max_steps",
    "workers", "tol", "summary_budget",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwre", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "simulate", "analyze", "clt-hitting", "clt-position",
        "lln", "diagnostics", "oracle-check",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=None, help="replica-chunk parallelism")
        p.add_argument(
            "--centering", choices=("explicit", "implicit"), default=None,
            help="position centering override",
        )
    return parser


def _load_config(path: str, args) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(raw, dict) or "model" not in raw:
        raise ConfigError("config: top-level object with a 'model' field is required")
    unknown = set(raw) - {"model", "experiment", "seeds"}
    if unknown:
        raise ConfigError(f"config: unknown top-level fields {sorted(unknown)}")
    model = model_from_dict(raw["model"])
    experiment = raw.get("experiment", {})
    if not isinstance(experiment, dict):
        raise ConfigError("config.experiment: must be an object")
    unknown = set(experiment) - _EXPERIMENT_FIELDS
    if unknown:
        raise ConfigError(f"config.experiment: unknown fields {sorted(unknown)}")
    seeds = raw.get("seeds", {})
    unknown = set(seeds) - {"master", "env", "walk"}
    if unknown:
        raise ConfigError(f"config.seeds: unknown fields {sorted(unknown)}")

    master = DEFAULT_SEED
    if seeds.get("master") is not None:
        master = int(seeds["master"])
    if os.environ.get("RWRE_SEED"):
        try:
            master = int(os.environ["RWRE_SEED"], 0)
        except ValueError:
            raise ConfigError("RWRE_SEED: must be an integer")
    if args.seed is not None:
        master = args.seed
    for name, value in (("master", master), ("env", seeds.get("env")), ("walk", seeds.get("walk"))):
        if value is not None and int(value) < 0:
            raise ConfigError(f"seeds.{name}: must be non-negative, got {value}")

    fields = dict(experiment)
    for grid in ("x_grid", "t_grid", "n_grid"):
        if grid in fields:
            fields[grid] = tuple(fields[grid])
    if args.centering is not None:
        fields["centering"] = args.centering
    if args.workers is not None:
        fields["workers"] = args.workers
    try:
        return ExperimentConfig(
            model=model,
            master_seed=master,
            env_seed=seeds.get("env"),
            walk_seed=seeds.get("walk"),
            **fields,
        )
    except TypeError as exc:
        raise ConfigError(f"config.experiment: {exc}")


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _jsonify(dataclasses.asdict(value))
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_samples(path: Path, raw: np.ndarray, standardized: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("replica,value,standardized\n")
        for i, (v, z) in enumerate(zip(raw.tolist(), standardized.tolist())):
            v_txt = str(int(v)) if float(v).is_integer() else _fmt(v)
            fh.write(f"{i},{v_txt},{_fmt(z)}\n")


def _write_cdf(path: Path, standardized: np.ndarray) -> None:
    zs = np.sort(standardized)
    m = len(zs)
    phi = harness.normal_cdf(zs)
    with open(path, "w", newline="\n") as fh:
        fh.write("x,ecdf,phi,diff\n")
        for i in range(m):
            ecdf = (i + 1) / m
            fh.write(f"{_fmt(zs[i])},{_fmt(ecdf)},{_fmt(phi[i])},{_fmt(ecdf - phi[i])}\n")


def _config_snapshot(config: ExperimentConfig) -> dict:
    snap = dataclasses.asdict(config)
    snap["model"] = model_to_dict(config.model)
    snap["env_seed"] = config.resolved_env_seed()
    snap["walk_seed"] = config.resolved_walk_seed()
    return snap


def _experiment_report_dict(report: harness.ExperimentReport) -> dict:
    z = report.standardized
    return {
        "kind": report.kind,
        "scale": report.scale,
        "replicas": report.replicas,
        "centering": report.centering,
        "ks_distance": report.ks_distance,
        "threshold": report.threshold,
        "verdict": "pass" if report.verdict else "fail",
        "centering_value": report.centering_value,
        "scale_value": report.scale_value,
        "window_mu": report.window_mu,
        "window_sigma2": report.window_sigma2,
        "summary": dataclasses.asdict(report.summary),
        "cdf_errors": [
            {"x": x, "ecdf": e, "phi": p, "diff": e - p} for x, e, p in report.cdf_errors
        ],
        "sample_stats": {
            "count": len(z),
            "mean": float(z.mean()),
            "variance": float(z.var(ddof=1)),
        },
        "ks_distribution": list(report.ks_distribution),
        "seeds": {"env": report.env_seed, "walk": report.walk_seed},
    }


def _run_sampling(config: ExperimentConfig, kind: str, out: Path) -> dict:
    if kind == "clt_position":
        report = harness.clt_position(config)
    else:
        report = harness.clt_hitting(config)
    payload = _experiment_report_dict(report)
    _write_samples(out / "samples.csv", report.raw_samples, report.standardized)
    _write_cdf(out / "cdf.csv", report.standardized)
    return payload


def _analyze_report(config: ExperimentConfig) -> dict:
    model = config.model
    cls = classify(model)
    kappa_grid = [0.25 * i for i in range(9)]
    growth = [odds_growth_rate(model, k).value for k in kappa_grid]
    log_growth = [float(np.log(g)) for g in growth]
    second_diff = [
        log_growth[i + 1] - 2 * log_growth[i] + log_growth[i - 1]
        for i in range(1, len(log_growth) - 1)
    ]
    payload = {
        "kind": "analyze",
        "model": model_to_dict(model),
        "classification": {
            "regime": cls.regime.value,
            "lambda": cls.log_odds_mean.value,
            "lambda_se": cls.log_odds_mean.se,
            "tolerance": cls.tolerance,
            "within_tolerance": cls.within_tolerance,
            "method": cls.log_odds_mean.method,
        },
        "growth_rates": {
            "kappa": kappa_grid,
            "value": growth,
            "log_second_differences": second_diff,
            "log_convex": bool(all(d >= -1e-9 for d in second_diff)),
        },
        "conditions": dataclasses.asdict(check_conditions(model, 3.0)),
    }
    try:
        summ = analytics.summary(model, budget=config.summary_budget, tol=config.tol)
        payload["summary"] = dataclasses.asdict(summ)
        payload["eligible"] = True
    except NotCltEligibleError as exc:
        payload["summary"] = None
        payload["eligible"] = False
        payload["eligibility_error"] = str(exc)
    return payload


def _oracle_check_report(config: ExperimentConfig) -> dict:
    """Cross-module equivalence audit on the configured model."""
    model = config.model
    conditions = check_conditions(model, 3.0)
    payload: dict = {
        "kind": "oracle_check",
        "model": model_to_dict(model),
        "regime": conditions.regime,
        "eligible": conditions.clt_eligible,
    }
    if not conditions.clt_eligible:
        payload["eligibility_error"] = (
            f"model is not CLT-eligible: regime={conditions.regime}, r2={conditions.r2!r}"
        )
        return payload

    a, n = -40, 160
    margin = max(suggested_burn_in(model), -a + 8)
    env_seed = config.resolved_env_seed()
    window = realize(model, a - margin, n + 8, env_seed)
    e = oracle.expected_hitting_times(window, a, n)
    v = oracle.hitting_time_variances(window, a, n)
    mu_inc = e.increments()
    v_inc = v.increments()
    interior = range(40, n - 10)
    mu_gap = 0.0
    sg_gap = 0.0
    for k in interior:
        site = analytics.site_variance(window, k, tol=config.tol)
        mu_gap = max(mu_gap, abs(site.mu - mu_inc[k - a]))
        sg_gap = max(sg_gap, abs(site.sigma2 - v_inc[k - a]))
    forcing = oracle.forcing_terms(window, e)
    summ = analytics.summary(model, budget=config.summary_budget, tol=config.tol)
    mc_n = max(200_000, config.replicas)
    mc = oracle.mc_crossing_moments(window, 0, mc_n, config.resolved_walk_seed())
    payload.update(
        {
            "max_mu_gap": mu_gap,
            "max_sigma2_gap": sg_gap,
            "solver_residuals": {"expectation": e.residual, "variance": v.residual},
            "sigma2_table": {
                "closed_form_printed": summ.sigma2_closed_form_printed,
                "closed_form_corrected": summ.sigma2_closed_form,
                "ergodic_average": summ.sigma2,
                "monte_carlo": mc.variance,
                "monte_carlo_se": mc.variance_se,
                "monte_carlo_samples": mc.n_samples,
                "mismatch_flagged": summ.closed_form_mismatch,
            },
            "mu_table": {
                "closed_form": summ.mu,
                "monte_carlo": mc.mean,
                "monte_carlo_se": mc.mean_se,
            },
            "forcing_audit": {
                "max_gap_mean_form": forcing["max_gap_mean_form"],
                "max_gap_swapped": forcing["max_gap_swapped"],
                "swapped_form_inconsistent": bool(
                    forcing["max_gap_swapped"] > 100 * max(forcing["max_gap_mean_form"], 1e-12)
                ),
            },
        }
    )
    return payload


def _diagnostics_report(config: ExperimentConfig) -> dict:
    diag = harness.fluctuation_diagnostics(config)
    erg = harness.uniform_ergodicity_estimate(
        config.model, diag.n_grid, seed=config.resolved_env_seed(), tol=config.tol
    )
    return {
        "kind": "diagnostics",
        "model": model_to_dict(config.model),
        "t_grid": list(diag.t_grid),
        "x_grid": list(diag.x_grid),
        "explicit_window_sums": diag.explicit_window_sums,
        "explicit_window_sums_shifted": diag.explicit_window_sums_shifted,
        "implicit_window_sums": diag.implicit_window_sums,
        "n_grid": list(diag.n_grid),
        "scaled_range": diag.scaled_range,
        "max_abs_over_sqrt": diag.max_abs_over_sqrt,
        "max_abs_over_n": diag.max_abs_over_n,
        "centered_sum_scaled": diag.centered_sum_scaled,
        "diag_c": diag.diag_c,
        "explicit_decreasing": diag.explicit_decreasing,
        "ergodicity": {
            "n_grid": list(erg.n_grid),
            "epsilon": list(erg.epsilon),
            "reference_mean": erg.reference_mean,
            "decreasing": erg.decreasing,
            "uniformly_ergodic": erg.uniformly_ergodic,
        },
        "env_seeds": list(diag.env_seeds),
    }


def _lln_report(config: ExperimentConfig) -> dict:
    rep = harness.lln_check(config)
    return {"kind": "lln", "model": model_to_dict(config.model), **dataclasses.asdict(rep)}


def _digest(path: Path) -> dict:
    data = path.read_bytes()
    return {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}


def _run(args) -> int:
    config = _load_config(args.config, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    command = args.command
    exit_code = EXIT_OK
    if command == "simulate":
        kind = config.kind if config.kind in ("clt_hitting", "clt_position") else "clt_hitting"
        payload = _run_sampling(config, kind, out)
        payload["kind"] = "simulate"
    elif command == "clt-hitting":
        payload = _run_sampling(config, "clt_hitting", out)
    elif command == "clt-position":
        payload = _run_sampling(config, "clt_position", out)
    elif command == "analyze":
        payload = _analyze_report(config)
    elif command == "lln":
        payload = _lln_report(config)
    elif command == "diagnostics":
        payload = _diagnostics_report(config)
    elif command == "oracle-check":
        payload = _oracle_check_report(config)
        if not payload["eligible"]:
            exit_code = EXIT_ELIGIBILITY
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown command {command!r}")
    _write_json(out / "report.json", payload)
    outputs = {}
    for name in ("report.json", "samples.csv", "cdf.csv"):
        path = out / name
        if path.exists():
            outputs[name] = _digest(path)
    manifest = {
        "tool": {"name": "rwre", "version": __version__},
        "command": command,
        "config": _config_snapshot(config),
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "runtime_seconds": time.perf_counter() - t0,
        "outputs": outputs,
    }
    _write_json(out / "manifest.json", manifest)
    return exit_code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotCltEligibleError as exc:
        print(f"eligibility error: {exc}", file=sys.stderr)
        return EXIT_ELIGIBILITY
    except (
        NonSummableError,
        WindowTooSmallError,
        MomentDivergenceError,
        QuadratureError,
        IndexRangeError,
    ) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GuardBreachError, StepBudgetExceededError) as exc:
        print(f"simulation guard error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except RwreError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``run``, ``oracle`` and ``validate``.

Configuration files are flat INI key-value sections; every key is checked
against the schema below and unknown keys are hard errors.  The hopping rate
sets the unit of time: internally ``w = 1`` and all times are reported as
``w * t``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 numerical abort
(partial results are still written).
"""

import argparse
import configparser
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, bss, estimator, oracle, sampler, validate
from .errors import ConfigError, EstimatorError, NumericalError, SizeCapError
from .lattice import LatticeSpec, adjacency_matrix
from .model import ModelParams

logger = logging.getLogger("lindbladqmc")

ENV_OUT_DIR = "LINDBLADQMC_OUTDIR"
CSV_HEADER = "t_w,log_ratio,stderr,V,kind"

_SCHEMA = {
    "lattice": {"lx", "ly"},
    "physics": {"gamma_over_w", "dt_times_w", "n_t_list"},
    "estimator": {"kind", "n_ratio"},
    "sampler": {"n_warmup", "n_sweeps", "meas_interval", "n_stab", "drift_tol",
                "master_seed"},
    "execution": {"max_parallel_chains"},
    "output": {"directory", "format"},
}


@dataclass
class RunConfig:
    """Fully resolved run configuration (defaults applied)."""

    lx: int
    ly: int
    gamma_over_w: float
    kind: str
    dt_times_w: float = 0.05
    n_t_list: list = field(default_factory=list)
    n_ratio: int = 32
    n_warmup: int = 200
    n_sweeps: int = 2000
    meas_interval: int = 2
    n_stab: int = bss.DEFAULT_N_STAB
    drift_tol: float = bss.DEFAULT_DRIFT_TOL
    master_seed: int = 1
    max_parallel_chains: int = 1
    directory: str = ""
    format: str = "csv"


def _default_time_scan(dt_times_w):
    # w*t from 0 to 3 in steps of 0.25
    counts = sorted({int(round(0.25 * k / dt_times_w)) for k in range(13)})
    return counts


def _parse_int(section, key, raw, minimum=None):
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from exc
    if minimum is not None and value < minimum:
        raise ConfigError(f"[{section}] {key} must be >= {minimum}, got {value}")
    return value


def _parse_float(section, key, raw, minimum=None, strict=False):
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from exc
    if minimum is not None and (value < minimum or (strict and value == minimum)):
        op = ">" if strict else ">="
        raise ConfigError(f"[{section}] {key} must be {op} {minimum}, got {value}")
    return value


def parse_config(path):
    """Read and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path!r}: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    for required in ("lattice", "physics", "estimator"):
        if not parser.has_section(required):
            raise ConfigError(f"missing required section [{required}]")

    lat = parser["lattice"]
    for key in ("lx", "ly"):
        if key not in lat:
            raise ConfigError(f"[lattice] missing required key {key!r}")
    phys = parser["physics"]
    if "gamma_over_w" not in phys:
        raise ConfigError("[physics] missing required key 'gamma_over_w'")
    est = parser["estimator"]
    if "kind" not in est:
        raise ConfigError("[estimator] missing required key 'kind'")
    kind = est["kind"].strip().lower()
    if kind not in ("echo", "purity"):
        raise ConfigError(f"[estimator] kind must be 'echo' or 'purity', got {kind!r}")

    cfg = RunConfig(
        lx=_parse_int("lattice", "lx", lat["lx"], minimum=2),
        ly=_parse_int("lattice", "ly", lat["ly"], minimum=2),
        gamma_over_w=_parse_float("physics", "gamma_over_w", phys["gamma_over_w"], minimum=0.0),
        kind=kind,
    )
    if "dt_times_w" in phys:
        cfg.dt_times_w = _parse_float("physics", "dt_times_w", phys["dt_times_w"],
                                      minimum=0.0, strict=True)
    if "n_t_list" in phys:
        tokens = phys["n_t_list"].replace(",", " ").split()
        if not tokens:
            raise ConfigError("[physics] n_t_list is empty")
        cfg.n_t_list = sorted({_parse_int("physics", "n_t_list", tok, minimum=0)
                               for tok in tokens})
    else:
        cfg.n_t_list = _default_time_scan(cfg.dt_times_w)
    if "n_ratio" in est:
        cfg.n_ratio = _parse_int("estimator", "n_ratio", est["n_ratio"], minimum=1)

    if parser.has_section("sampler"):
        samp = parser["sampler"]
        if "n_warmup" in samp:
            cfg.n_warmup = _parse_int("sampler", "n_warmup", samp["n_warmup"], minimum=0)
        if "n_sweeps" in samp:
            cfg.n_sweeps = _parse_int("sampler", "n_sweeps", samp["n_sweeps"], minimum=1)
        if "meas_interval" in samp:
            cfg.meas_interval = _parse_int("sampler", "meas_interval",
                                           samp["meas_interval"], minimum=1)
        if "n_stab" in samp:
            cfg.n_stab = _parse_int("sampler", "n_stab", samp["n_stab"], minimum=1)
        if "drift_tol" in samp:
            cfg.drift_tol = _parse_float("sampler", "drift_tol", samp["drift_tol"],
                                         minimum=0.0, strict=True)
        if "master_seed" in samp:
            cfg.master_seed = _parse_int("sampler", "master_seed",
                                         samp["master_seed"], minimum=0)
    if parser.has_section("execution"):
        execn = parser["execution"]
        if "max_parallel_chains" in execn:
            cfg.max_parallel_chains = _parse_int(
                "execution", "max_parallel_chains",
                execn["max_parallel_chains"], minimum=1)
    if parser.has_section("output"):
        out = parser["output"]
        if "directory" in out:
            cfg.directory = out["directory"].strip()
        if "format" in out:
            fmt = out["format"].strip().lower()
            if fmt not in ("csv", "json"):
                raise ConfigError(f"[output] format must be 'csv' or 'json', got {fmt!r}")
            cfg.format = fmt
    if not cfg.directory:
        cfg.directory = os.environ.get(ENV_OUT_DIR, "runs")
    return cfg


def _params_for(cfg, n_t):
    # w = 1 fixes the unit of time
    return ModelParams(w=1.0, gamma=cfg.gamma_over_w, dt=cfg.dt_times_w,
                       n_t=n_t, n_ratio=cfg.n_ratio)


def _chain_job(task):
    cfg = task["cfg"]
    params = _params_for(cfg, task["n_t"])
    adj = adjacency_matrix(LatticeSpec(cfg.lx, cfg.ly))
    settings = sampler.ChainSettings(
        n_warmup=cfg.n_warmup, n_sweeps=cfg.n_sweeps,
        meas_interval=cfg.meas_interval, n_stab=cfg.n_stab,
        drift_tol=cfg.drift_tol,
    )
    result = sampler.run_chain(settings, adj, params, task["factor"],
                               cfg.kind, task["seed_key"])
    return task["t_index"], task["factor"], result


def _format_float(x):
    return format(float(x), ".17e")


def write_series_csv(path, points):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for p in points:
            fh.write(
                f"{_format_float(p.t_w)},{_format_float(p.log_ratio)},"
                f"{_format_float(p.stderr)},{p.volume},{p.kind}\n"
            )


def write_series_json(path, points):
    rows = [
        {"t_w": p.t_w, "log_ratio": p.log_ratio, "stderr": p.stderr,
         "V": p.volume, "kind": p.kind}
        for p in points
    ]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(config_path, seed=None, out_dir=None, jobs=None):
    """Full Monte Carlo time scan; writes the series and a run record."""
    t_start = time.monotonic()
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg.master_seed = seed
    if out_dir is not None:
        cfg.directory = out_dir
    if jobs is not None:
        cfg.max_parallel_chains = max(1, jobs)
    os.makedirs(cfg.directory, exist_ok=True)

    spec = LatticeSpec(cfg.lx, cfg.ly)
    volume = spec.volume
    tasks = []
    for t_index, n_t in enumerate(cfg.n_t_list):
        if n_t == 0:
            continue
        for f in range(cfg.n_ratio):
            tasks.append({
                "cfg": cfg, "t_index": t_index, "n_t": n_t, "factor": f,
                "seed_key": (cfg.master_seed, t_index, f),
            })

    results = {}
    exit_code = 0
    abort = None
    try:
        if cfg.max_parallel_chains > 1:
            with ProcessPoolExecutor(max_workers=cfg.max_parallel_chains) as pool:
                for t_index, f, res in pool.map(_chain_job, tasks):
                    results[(t_index, f)] = res
        else:
            for task in tasks:
                t_index, f, res = _chain_job(task)
                results[(t_index, f)] = res
    except NumericalError as exc:
        abort = str(exc)
        exit_code = 3
        logger.error("numerical abort: %s", abort)

    points = []
    failures = []
    chain_records = []
    anchors = []
    for t_index, n_t in enumerate(cfg.n_t_list):
        if n_t == 0:
            points.append(estimator.zero_time_point(volume, cfg.kind))
            anchors.append({"t_w": 0.0, "log_anchor": 2.0 * volume * estimator.LOG2,
                            "log_anchor_alt": 2.0 * volume * estimator.LOG2})
            continue
        params = _params_for(cfg, n_t)
        anchors.append({
            "t_w": params.w * params.t,
            "log_anchor": estimator.anchor_log_value(cfg.kind, params, volume),
            "log_anchor_alt": estimator.anchor_log_value_alt(cfg.kind, params, volume),
        })
        chain_results = [results.get((t_index, f)) for f in range(cfg.n_ratio)]
        if any(r is None for r in chain_results):
            failures.append({"t_w": params.w * params.t,
                             "reason": "chains missing (aborted run)"})
            continue
        factors = [estimator.estimate_factor(r) for r in chain_results]
        for r, f_est in zip(chain_results, factors):
            chain_records.append({
                "t_index": t_index, "n_t": n_t, "factor": r.factor_index,
                "seed_key": list(r.seed_key),
                "coupling_lo": r.coupling_lo, "coupling_hi": r.coupling_hi,
                "acceptance_rate": r.acceptance_rate, "max_drift": r.max_drift,
                "n_samples": f_est.n_samples, "mean": f_est.mean,
                "stderr": f_est.stderr,
            })
        try:
            points.append(estimator.assemble_point(factors, params, volume, cfg.kind))
        except EstimatorError as exc:
            failures.append({"t_w": params.w * params.t, "reason": str(exc)})

    points.sort(key=lambda p: p.t_w)
    if cfg.format == "csv":
        write_series_csv(os.path.join(cfg.directory, "series.csv"), points)
    else:
        write_series_json(os.path.join(cfg.directory, "series.json"), points)

    record = {
        "version": __version__,
        "command": "run",
        "config": asdict(cfg),
        "volume": volume,
        "chains": chain_records,
        "anchors": anchors,
        "failures": failures,
        "abort": abort,
        "wall_seconds": time.monotonic() - t_start,
    }
    with open(os.path.join(cfg.directory, "run.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for failure in failures:
        print(f"warning: no estimate at w*t = {failure['t_w']:g}: "
              f"{failure['reason']}", file=sys.stderr)
    print(f"wrote {len(points)} series points to {cfg.directory}")
    return exit_code


def cmd_oracle(config_path, out_dir=None):
    """Dense reference series (exact and sliced) for small lattices."""
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if out_dir is not None:
        cfg.directory = out_dir
    spec = LatticeSpec(cfg.lx, cfg.ly)
    if spec.volume > 4:
        print(f"config error: oracle command capped at 4 sites, got {spec.volume}",
              file=sys.stderr)
        return 2
    os.makedirs(cfg.directory, exist_ok=True)
    volume = spec.volume
    idx = 0 if cfg.kind == "echo" else 1
    exact_points = []
    trotter_points = []
    try:
        for n_t in cfg.n_t_list:
            if n_t == 0:
                exact_points.append(estimator.zero_time_point(volume, cfg.kind))
                trotter_points.append(estimator.zero_time_point(volume, cfg.kind))
                continue
            params = _params_for(cfg, n_t)
            exact_val = oracle.exact_fidelities(spec, params)[idx].real
            trotter_val = oracle.trotter_trace(spec, params, cfg.kind).real
            if exact_val <= 0 or trotter_val <= 0:
                raise NumericalError(
                    f"non-positive reference trace at n_t={n_t}; cannot take log")
            for points, value in ((exact_points, exact_val), (trotter_points, trotter_val)):
                points.append(estimator.SeriesPoint(
                    t_w=params.w * params.t,
                    log_ratio=float(np.log(value) - 2.0 * volume * estimator.LOG2),
                    stderr=0.0, volume=volume, kind=cfg.kind,
                ))
    except SizeCapError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    write_series_csv(os.path.join(cfg.directory, "series_exact.csv"), exact_points)
    write_series_csv(os.path.join(cfg.directory, "series_trotter.csv"), trotter_points)
    record = {
        "version": __version__,
        "command": "oracle",
        "config": asdict(cfg),
        "volume": volume,
    }
    with open(os.path.join(cfg.directory, "run.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote reference series to {cfg.directory}")
    return 0


def cmd_validate():
    """Run the invariant suite and print one line per check."""
    results = validate.run_all()
    width = max(len(r.name) for r in results)
    failed = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        if not r.passed:
            failed.append(r.name)
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def main(argv=None):
    logging.basicConfig(level=os.environ.get("LINDBLADQMC_LOGLEVEL", "WARNING"))
    parser = argparse.ArgumentParser(
        prog="lindbladqmc",
        description="Determinant QMC for fidelities of dissipative lattice fermions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo time scan")
    p_run.add_argument("config", help="path to INI config file")
    p_run.add_argument("--seed", type=int, default=None, help="override master seed")
    p_run.add_argument("--out-dir", default=None, help="override output directory")
    p_run.add_argument("--jobs", type=int, default=None, help="parallel chain workers")

    p_oracle = sub.add_parser("oracle", help="dense reference series (small lattices)")
    p_oracle.add_argument("config", help="path to INI config file")
    p_oracle.add_argument("--out-dir", default=None, help="override output directory")

    sub.add_parser("validate", help="run the invariant suite")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, seed=args.seed, out_dir=args.out_dir, jobs=args.jobs)
    if args.command == "oracle":
        return cmd_oracle(args.config, out_dir=args.out_dir)
    return cmd_validate()


if __name__ == "__main__":
    sys.exit(main())

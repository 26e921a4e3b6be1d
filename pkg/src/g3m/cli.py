"""Command-line front end: ``g3m {simulate,il,v3,analyze}``.

Exit codes: 0 success, 1 config error, 2 verification failure, 3 I/O or
input-data error.  Every CSV starts with a ``# seed=... config=...``
comment so outputs can be traced back to the run that made them.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import analytics as an
from .arbitrage import NoiseTrader, run_simulation
from .benchmarks import check_weights, decompose, mc_verify_il
from .config import Config, ConfigError, apply_overrides, load_config
from .errors import G3MError, PanelError
from .market import CovarianceSpec, sample_paths, time_grid
from .pool import PoolState
from .univ3 import (
    RangePosition,
    ReplicationPortfolio,
    concentrated_il_drift,
    mc_recentered_drift,
    position_report,
    position_wealth,
    replication_check,
)

log = logging.getLogger("g3m")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3
SIM_CHUNK = 100
REPLICATION_RTOL = 1e-10
ZERO_FEE_RTOL = 1e-9


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_frame(path: Path, df: pd.DataFrame, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        df.to_csv(fh, index=False, lineterminator="\n", float_format="%.17g")


def _iso(index) -> list[str]:
    return list(pd.DatetimeIndex(index).strftime("%Y-%m-%dT%H:%M:%SZ"))


# -- building validated objects from the config --------------------------------


def market_spec(cfg: Config) -> CovarianceSpec:
    m = cfg["market"]
    sigma = np.atleast_1d(np.asarray(m["sigma"], dtype=float))
    rho = m["rho"]
    if np.ndim(rho) == 0:
        if sigma.size != 2:
            raise ConfigError(f"{cfg.where('market.rho')}: scalar rho needs exactly two assets")
        rho = [[1.0, float(rho)], [float(rho), 1.0]]
    try:
        return CovarianceSpec(sigma, np.asarray(rho, dtype=float), None if m["mu"] is None else np.asarray(m["mu"], dtype=float))
    except (G3MError, ValueError, TypeError) as exc:
        field = "market.rho" if "correl" in str(exc).lower() or "rho" in str(exc).lower() else "market"
        raise ConfigError(f"{cfg.where(field)}: {exc}") from exc


def pool_state(cfg: Config) -> PoolState:
    p = cfg["pool"]
    try:
        return PoolState(np.asarray(p["weights"], dtype=float), cfg.num("pool.fee"), np.asarray(p["inventory"], dtype=float))
    except (G3MError, ValueError, TypeError) as exc:
        raise ConfigError(f"{cfg.where('pool')}: {exc}") from exc


def _grid(cfg: Config, section: str):
    horizon, dt = cfg.num(f"{section}.horizon"), cfg.num(f"{section}.dt")
    try:
        return time_grid(horizon, dt), dt
    except (G3MError, ValueError) as exc:
        raise ConfigError(f"{cfg.where(section + '.dt')}: {exc}") from exc


def _positive_int(cfg: Config, path: str) -> int:
    sect, key = path.split(".")
    val = cfg[sect][key]
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        raise ConfigError(f"{cfg.where(path)}: expected a positive integer, got {val!r}")
    return val


def _header(cfg: Config) -> str:
    return f"seed={cfg['seed']} config={cfg.digest()}"


# -- commands -------------------------------------------------------------------


def cmd_simulate(cfg: Config, out: Path) -> dict:
    spec, pool = market_spec(cfg), pool_state(cfg)
    if pool.n != spec.n:
        raise ConfigError(f"{cfg.where('pool.weights')}: pool has {pool.n} assets, market has {spec.n}")
    times, _ = _grid(cfg, "grid")
    n_paths = _positive_int(cfg, "simulate.n_paths")
    rate = cfg.num("simulate.noise_rate")
    noise = NoiseTrader(rate, cfg.num("simulate.noise_fraction")) if rate > 0 else None
    seed, header = int(cfg["seed"]), _header(cfg)

    totals = {"band_violations": 0, "bound_violations": 0, "negative_profit_steps": 0, "invariant_decreases": 0, "trades": 0}
    extremes = {"max_zero_fee_gap": [], "max_band_gap": [], "min_bound_ratio": [], "max_bound_ratio": []}
    paths_fh = open(out / "paths.csv", "w", newline="") if cfg["simulate"]["export_paths"] else None
    try:
        for start in range(0, n_paths, SIM_CHUNK):
            ids = range(start, min(start + SIM_CHUNK, n_paths))
            paths = sample_paths(spec, times=times, seed=seed, path_ids=ids)
            if paths_fh is not None:
                paths.write_csv(paths_fh, header if start == 0 else None, column_names=start == 0)
            trace = run_simulation(paths, pool, strict=False, noise=noise)
            for key in totals:
                totals[key] += trace.diagnostics[key]
            for key in extremes:
                extremes[key].append(trace.diagnostics[key])
            for k, pid in enumerate(paths.path_ids):
                with open(out / f"trace_{int(pid):03d}.csv", "w", newline="") as fh:
                    trace.write_csv(fh, path=k, header_comment=header)
    finally:
        if paths_fh is not None:
            paths_fh.close()

    diag = dict(totals)
    diag["max_zero_fee_gap"] = max(extremes["max_zero_fee_gap"])
    diag["max_band_gap"] = max(extremes["max_band_gap"])
    diag["min_bound_ratio"] = min(extremes["min_bound_ratio"])
    diag["max_bound_ratio"] = max(extremes["max_bound_ratio"])
    failures = totals["band_violations"] + totals["bound_violations"] + totals["negative_profit_steps"] + totals["invariant_decreases"]
    zero_fee_ok = pool.fee > 0 or diag["max_zero_fee_gap"] <= ZERO_FEE_RTOL
    report = {
        "command": "simulate",
        "seed": seed,
        "config": cfg.digest(),
        "n_paths": n_paths,
        "n_times": int(times.size),
        "fee": pool.fee,
        "diagnostics": diag,
        "passed": failures == 0 and zero_fee_ok,
    }
    write_json(out / "report.json", report)
    return report


def cmd_il(cfg: Config, out: Path) -> dict:
    spec = market_spec(cfg)
    sect = cfg["il"]
    w_raw = sect["weights"] if sect["weights"] is not None else cfg["pool"]["weights"]
    try:
        w = check_weights(w_raw)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('il.weights')}: {exc}") from exc
    if w.size != spec.n:
        raise ConfigError(f"{cfg.where('il.weights')}: {w.size} weights for {spec.n} assets")
    times, dt = _grid(cfg, "il")
    n_paths, seed = _positive_int(cfg, "il.n_paths"), int(cfg["seed"])
    rep = mc_verify_il(spec, w, float(times[-1]), dt, n_paths, seed=seed, n_se=cfg.num("il.n_se"))
    path = sample_paths(spec, times=times, seed=seed, n_paths=1).paths[0]
    with open(out / "il_decomposition.csv", "w", newline="") as fh:
        decompose(times, path, w, spec).write_csv(fh, _header(cfg))
    report = {"command": "il", "seed": seed, "config": cfg.digest(), "weights": w, **rep.to_dict()}
    write_json(out / "report.json", report)
    return report


def cmd_v3(cfg: Config, out: Path) -> dict:
    spec = market_spec(cfg)
    if spec.n != 2:
        raise ConfigError(f"{cfg.where('market.sigma')}: v3 needs exactly two assets")
    v = cfg["v3"]
    p0, p_a, p_b = cfg.num("v3.p0"), cfg.num("v3.p_a"), cfg.num("v3.p_b")
    L0, lam = cfg.num("v3.L0"), cfg.num("v3.lam")
    rebalance = _positive_int(cfg, "v3.rebalance_every")
    try:
        pos = RangePosition(L0, p_a, p_b)
        drift_pred = concentrated_il_drift(spec.sigma[0], spec.sigma[1], float(spec.rho[0, 1]), lam=lam)
    except (G3MError, ValueError) as exc:
        raise ConfigError(f"{cfg.where('v3')}: {exc}") from exc
    times, dt = _grid(cfg, "v3")
    seed = int(cfg["seed"])

    S = sample_paths(spec, times=times, seed=seed, n_paths=1).paths[0]
    S0, S1 = p0 * S[:, 0], S[:, 1]
    rep = replication_check(pos, S0, S1, times)
    k_rep = ReplicationPortfolio.from_position(pos).value(S0, S1)
    frame = pd.DataFrame(
        {
            "time": times,
            "p": S0 / S1,
            "K_position": position_wealth(pos, S0, S1),
            "K_replication": k_rep,
            "in_range": pos.in_range(S0 / S1).astype(int),
        }
    )
    write_frame(out / "replication.csv", frame, _header(cfg))

    drift = mc_recentered_drift(
        spec, lam, float(times[-1]), dt, _positive_int(cfg, "v3.n_paths"), seed=seed,
        rebalance_every=rebalance, n_se=cfg.num("v3.n_se"),
    )
    report = {
        "command": "v3",
        "seed": seed,
        "config": cfg.digest(),
        "position": position_report(pos, p0),
        "replication": rep.to_dict(),
        "drift": {**drift.to_dict(), "leverage": drift_pred.leverage, "delta0": drift_pred.delta0, "delta1": drift_pred.delta1, "lam": lam},
        "passed": rep.max_gap_in_range <= REPLICATION_RTOL and drift.passed,
    }
    write_json(out / "report.json", report)
    return report


def cmd_analyze(cfg: Config, out: Path, files: list[str]) -> dict:
    a = cfg["analytics"]
    window, min_pools = _positive_int(cfg, "analytics.window"), _positive_int(cfg, "analytics.min_pools")
    for key in ("il_convention", "fee_convention"):
        if a[key] not in ("apy", "apr"):
            raise ConfigError(f"{cfg.where('analytics.' + key)}: expected 'apy' or 'apr', got {a[key]!r}")
    center = a["center"]
    lags = [int(x) for x in a["lags"]]
    panel = an.load_panel(files, tvl_floor=cfg.num("analytics.tvl_floor"), max_ffill_hours=int(a["max_ffill_hours"]))
    header = _header(cfg)

    if len(panel) == 0:
        write_frame(out / "metrics.csv", pd.DataFrame(columns=["time", "pool", "il_apy", "fee_apr", "net_apr"]), header)
        write_frame(out / "quartiles.csv", pd.DataFrame(columns=["time", "metric", "q1", "median", "q3"]), header)
        write_frame(out / "autocorr.csv", pd.DataFrame(columns=["lag_hours", "spearman", "pearson"]), header)
        for name in ("corr_hist.csv", "corr_hist_xs.csv"):
            write_frame(out / name, pd.DataFrame(columns=["pool_or_time", "coefficient"]), header)
        report = {"command": "analyze", "seed": int(cfg["seed"]), "config": cfg.digest(), "pools": [],
                  "excluded": panel.excluded, "gaps": panel.gaps, "identity_max_error": 0.0, "passed": True}
        write_json(out / "report.json", report)
        return report

    m = an.metric_series(panel, window, a["il_convention"], a["fee_convention"])
    long = m.long().reset_index()
    long["time"] = _iso(long["time"])
    write_frame(out / "metrics.csv", long, header)

    q = an.quartiles_long(m, min_pools)
    if len(q):
        q["time"] = _iso(q["time"])
    write_frame(out / "quartiles.csv", q, header)
    write_frame(out / "autocorr.csv", an.autocorrelation_table(m.net_apr, lags, center), header)

    temporal = an.fee_il_correlation(m, "temporal")
    cross = an.fee_il_correlation(m, "cross_sectional")
    write_frame(out / "corr_hist.csv", temporal.reset_index(), header)
    xs = cross.reset_index()
    if len(xs):
        xs["pool_or_time"] = _iso(xs["pool_or_time"])
    write_frame(out / "corr_hist_xs.csv", xs, header)

    diff = (m.net_apr - (m.fee_apr + m.il_apy)).to_numpy(dtype=float)
    err = float(np.nanmax(np.abs(diff))) if np.isfinite(diff).any() else 0.0
    report = {
        "command": "analyze",
        "seed": int(cfg["seed"]),
        "config": cfg.digest(),
        "pools": panel.pools,
        "excluded": panel.excluded,
        "gaps": panel.gaps,
        "identity_max_error": err,
        "mean_temporal_correlation": float(temporal.mean()) if len(temporal) else None,
        "mean_cross_sectional_correlation": float(cross.mean()) if len(cross) else None,
        "undefined_correlations": {"temporal": temporal.attrs["undefined"], "cross_sectional": cross.attrs["undefined"]},
        "passed": err == 0.0,
    }
    write_json(out / "report.json", report)
    return report


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--paths", type=int, help="number of Monte Carlo paths (overrides the config)")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="g3m", description="G3M pool simulation, verification and analytics.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="arbitrage simulation with bound checks")
    sub.add_parser("il", parents=[common], help="Monte Carlo impermanent-loss drift check")
    sub.add_parser("v3", parents=[common], help="concentrated-liquidity replication and drift checks")
    p = sub.add_parser("analyze", parents=[common], help="metrics on hourly pool panels")
    p.add_argument("files", nargs="*", help="one CSV per pool; the file stem is the pool id")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args.seed, args.paths, args.command)
        if args.print_config:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            report = cmd_simulate(cfg, out)
        elif args.command == "il":
            report = cmd_il(cfg, out)
        elif args.command == "v3":
            report = cmd_v3(cfg, out)
        else:
            report = cmd_analyze(cfg, out, args.files)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, PanelError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    status = "ok" if report["passed"] else "FAILED"
    print(f"{args.command}: {status} ({out / 'report.json'})")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())

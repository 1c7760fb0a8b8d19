"""Batch command-line front end.

Commands: calibrate, holdout, loo, price-report, simulate, scenario, greeks.
Every command takes explicit inputs or a versioned JSON config (unknown keys
rejected), writes self-describing CSV/JSON artifacts plus a run manifest, and
is deterministic given (config, seed). SYNTHVOL_SEED is the seed fallback.

Exit codes: 0 success, 2 validation/usage error, 1 internal error.
"""

import argparse
import csv
import datetime as dt
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, calibration, jumphmm, lattice, scenario, surface, variance

SCHEMA_VERSION = 1


class ValidationError(ValueError):
    """User-input problem: bad config, missing file, malformed value."""


def _seed_from(args, config=None):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if config is not None and "seed" in config:
        return int(config["seed"])
    env = os.environ.get("SYNTHVOL_SEED")
    if env is not None:
        return int(env)
    return 0


def _check_keys(d, allowed, context):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValidationError(
            f"unknown keys in {context}: {sorted(unknown)} (allowed: {sorted(allowed)})"
        )


def _load_config(path, allowed):
    try:
        with open(path) as f:
            config = json.load(f)
    except FileNotFoundError as exc:
        raise ValidationError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ValidationError("config must be a JSON object")
    version = config.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            f"config schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    _check_keys(config, set(allowed) | {"schema_version"}, path)
    return config


def _git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _write_manifest(outdir, command, args, seed, inputs, outputs, t_start):
    manifest = {
        "command": command,
        "config_path": getattr(args, "config", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "tool_version": __version__,
        "wall_clock_s": round(time.time() - t_start, 3),
        "git_describe": _git_describe(),
        "started_utc": dt.datetime.fromtimestamp(
            t_start, dt.timezone.utc
        ).isoformat(timespec="seconds"),
    }
    path = Path(outdir) / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _write_csv(path, rows):
    with open(path, "w", newline="") as f:
        csv.writer(f).writerows(rows)
    return path


def _ensure_outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_corpus(ladder, sectors_path, earnings_path=None):
    for p in (ladder, sectors_path) + ((earnings_path,) if earnings_path else ()):
        if not Path(p).exists():
            raise ValidationError(f"input file not found: {p}")
    sectors = calibration.ingest_sectors(sectors_path)
    obs, skipped = calibration.ingest_ladder(ladder, sectors)
    if not obs:
        raise ValidationError(f"no parsable rows in ladder {ladder}")
    obs, tally = calibration.filter_observations(obs)
    if earnings_path:
        calendar = calibration.ingest_earnings(earnings_path)
        calibration.attach_earnings_features(obs, calendar, sectors)
    return obs, sectors, {"skipped_rows": skipped, "rejections": tally}


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args):
    t0 = time.time()
    extra = {}
    if args.config:
        extra = _load_config(args.config, {"four_input", "train", "seed"})
    seed = _seed_from(args, extra)
    train_cfg = None
    if "train" in extra:
        _check_keys(extra["train"], {"epochs", "patience", "seed"}, "train")
        train_cfg = surface.TrainConfig(
            epochs=int(extra["train"].get("epochs", 2000)),
            patience=int(extra["train"].get("patience", 200)),
            seed=seed,
        )
    obs, _, ingest_info = _load_corpus(args.ladder, args.sectors, args.earnings)
    if extra.get("four_input") and not args.earnings:
        raise ValidationError("four_input calibration requires --earnings")

    model = calibration.fit_tier(
        obs, args.tier, seed=seed, four_input=bool(extra.get("four_input", False)),
        config=train_cfg, threads=args.threads,
    )
    outdir = _ensure_outdir(args.out)
    outputs = []

    bundle = Path(outdir) / "model.json"
    with open(bundle, "w") as f:
        json.dump(model.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    outputs.append(bundle)

    for group_by in ("overall", "sector", "ticker"):
        report = calibration.rmse_report(model, obs, group_by=group_by)
        rows = [["group", "rmse_pct", "count"]]
        for r in report["groups"]:
            rows.append([r["group"], f"{r['rmse_pct']:.6f}", r["count"]])
        rows.append(["overall", f"{report['overall']['rmse_pct']:.6f}",
                     report["overall"]["count"]])
        outputs.append(_write_csv(Path(outdir) / f"rmse_{group_by}.csv", rows))

    summary = Path(outdir) / "summary.json"
    with open(summary, "w") as f:
        json.dump({
            "tier": args.tier,
            "seed": seed,
            "n_observations": len(obs),
            "ingest": ingest_info,
            "overall_rmse_pct": calibration.rmse_report(model, obs)["overall"]["rmse_pct"],
            "groups": {name: g.train_rmse_pct for name, g in model.groups.items()},
        }, f, indent=2, sort_keys=True)
        f.write("\n")
    outputs.append(summary)

    inputs = [args.ladder, args.sectors] + ([args.earnings] if args.earnings else [])
    outputs.append(_write_manifest(outdir, "calibrate", args, seed, inputs, outputs, t0))
    return 0


# ---------------------------------------------------------------------------
# holdout / loo


def cmd_holdout(args):
    t0 = time.time()
    config = _load_config(args.config, {
        "ladder", "sectors", "earnings", "train_dates", "test_dates",
        "configurations", "seed",
    })
    seed = _seed_from(args, config)
    for key in ("ladder", "sectors", "train_dates", "test_dates"):
        if key not in config:
            raise ValidationError(f"holdout config requires {key!r}")
    obs, _, _ = _load_corpus(config["ladder"], config["sectors"],
                             config.get("earnings"))
    train_dates = tuple(dt.date.fromisoformat(d) for d in config["train_dates"])
    test_dates = tuple(dt.date.fromisoformat(d) for d in config["test_dates"])
    configurations = config.get("configurations", ["A", "B", "C"])

    rows = [["configuration", "n_train", "n_test", "train_rmse_pct",
             "test_rmse_pct", "gap_pct"]]
    results = []
    for name in configurations:
        hc = calibration.HoldoutConfig(train_dates=train_dates,
                                       test_dates=test_dates, configuration=name)
        res = calibration.temporal_holdout(obs, hc, seed=seed, threads=args.threads)
        results.append({k: v for k, v in res.items() if k != "model"})
        rows.append([name, res["n_train"], res["n_test"],
                     f"{res['train_rmse_pct']:.6f}", f"{res['test_rmse_pct']:.6f}",
                     f"{res['gap_pct']:.6f}"])

    outdir = _ensure_outdir(args.out)
    outputs = [_write_csv(Path(outdir) / "holdout.csv", rows)]
    with open(Path(outdir) / "holdout.json", "w") as f:
        json.dump({"seed": seed, "results": results}, f, indent=2, sort_keys=True)
        f.write("\n")
    outputs.append(Path(outdir) / "holdout.json")
    inputs = [config["ladder"], config["sectors"]]
    outputs.append(_write_manifest(outdir, "holdout", args, seed, inputs, outputs, t0))
    return 0


def cmd_loo(args):
    t0 = time.time()
    config = _load_config(args.config, {
        "ladder", "sectors", "earnings", "held_out_date", "seed",
    })
    seed = _seed_from(args, config)
    for key in ("ladder", "sectors", "held_out_date"):
        if key not in config:
            raise ValidationError(f"loo config requires {key!r}")
    obs, _, _ = _load_corpus(config["ladder"], config["sectors"],
                             config.get("earnings"))
    res = calibration.loo_date(obs, dt.date.fromisoformat(config["held_out_date"]),
                               seed=seed, threads=args.threads)
    rows = [["sector", "train_rmse_pct", "test_rmse_pct", "gap_pct"]]
    for r in res["per_sector"]:
        rows.append([r["sector"], f"{r['train_rmse_pct']:.6f}",
                     f"{r['test_rmse_pct']:.6f}", f"{r['gap_pct']:.6f}"])
    rows.append(["pooled", f"{res['pooled']['train_rmse_pct']:.6f}",
                 f"{res['pooled']['test_rmse_pct']:.6f}",
                 f"{res['pooled']['gap_pct']:.6f}"])
    outdir = _ensure_outdir(args.out)
    outputs = [_write_csv(Path(outdir) / "loo.csv", rows)]
    outputs.append(_write_manifest(outdir, "loo", args, seed,
                                   [config["ladder"], config["sectors"]], outputs, t0))
    return 0


# ---------------------------------------------------------------------------
# price-report


def cmd_price_report(args):
    t0 = time.time()
    seed = _seed_from(args)
    if not Path(args.model).exists():
        raise ValidationError(f"model bundle not found: {args.model}")
    with open(args.model) as f:
        model = calibration.TierModel.from_dict(json.load(f))
    obs, _, _ = _load_corpus(args.ladder, args.sectors, args.earnings)
    date = dt.date.fromisoformat(args.date)
    day_obs = [o for o in obs if o.obs_date == date]
    if not day_obs:
        raise ValidationError(f"no observations on {date} after filtering")

    report = calibration.price_error_report(model, day_obs)
    outdir = _ensure_outdir(args.out)
    rows = [["ticker", "expiry", "parity", "strike", "moneyness", "mid",
             "model_iv", "model_price", "dollar_error",
             "market_iv_price", "market_iv_error", "half_spread"]]
    for c in report["contracts"]:
        rows.append([c["ticker"], c["expiry"], c["parity"], c["strike"],
                     f"{c['moneyness']:.6f}", f"{c['mid']:.6f}",
                     f"{c['model_iv']:.6f}", f"{c['model_price']:.6f}",
                     f"{c['dollar_error']:.6f}", f"{c['market_iv_price']:.6f}",
                     f"{c['market_iv_error']:.6f}", f"{c['half_spread']:.6f}"])
    outputs = [_write_csv(Path(outdir) / "price_errors.csv", rows)]

    ribbon_rows = [["panel", "moneyness", "half_spread"]]
    for name, panel in report["panels"].items():
        for m, hs in zip(panel["moneyness_grid"], panel["ribbon_half_spread"]):
            ribbon_rows.append([name, f"{m:.6f}", f"{hs:.6f}"])
    outputs.append(_write_csv(Path(outdir) / "bidask_ribbon.csv", ribbon_rows))
    inputs = [args.ladder, args.sectors, args.model]
    outputs.append(_write_manifest(outdir, "price-report", args, seed, inputs,
                                   outputs, t0))
    return 0


# ---------------------------------------------------------------------------
# simulate


def _hmm_from_config(spec, context="hmm"):
    if isinstance(spec, str):
        if not Path(spec).exists():
            raise ValidationError(f"HMM params file not found: {spec}")
        return jumphmm.HMMParams.from_json(spec)
    if isinstance(spec, dict):
        try:
            return jumphmm.HMMParams.from_dict(spec)
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad {context} params: {exc}") from exc
    raise ValidationError(f"{context} must be a params object or a file path")


def cmd_simulate(args):
    t0 = time.time()
    config = _load_config(args.config, {
        "tickers", "hmm", "fit", "copula", "steps", "s0", "seed",
    })
    seed = _seed_from(args, config)
    tickers = config.get("tickers")
    if not tickers:
        raise ValidationError("simulate config requires 'tickers'")
    steps = int(config.get("steps", 0))
    if steps < 1:
        raise ValidationError("simulate config requires steps >= 1")
    s0 = config.get("s0")
    if not s0 or len(s0) != len(tickers):
        raise ValidationError("s0 must supply one spot per ticker")

    if "fit" in config:
        fit = config["fit"]
        _check_keys(fit, {"returns", "n_states", "n_tail", "eps", "lam"}, "fit")
        series = calibration.ingest_returns(fit["returns"])
        params_list = []
        for t in tickers:
            if t not in series:
                raise ValidationError(f"returns CSV lacks ticker {t!r}")
            params_list.append(jumphmm.fit_jumphmm(
                series[t], int(fit["n_states"]), int(fit["n_tail"]),
                float(fit["eps"]), float(fit["lam"]),
            ))
        inputs = [fit["returns"]]
    elif "hmm" in config:
        spec = config["hmm"]
        if isinstance(spec, list):
            params_list = [_hmm_from_config(s) for s in spec]
        else:
            params_list = [_hmm_from_config(spec)] * len(tickers)
        inputs = [spec] if isinstance(spec, str) else []
    else:
        raise ValidationError("simulate config requires 'hmm' or 'fit'")

    if "copula" in config:
        _check_keys(config["copula"], {"corr", "nu_c"}, "copula")
        copula = jumphmm.CopulaSpec(
            corr=np.asarray(config["copula"]["corr"], dtype=np.float64),
            nu_c=float(config["copula"]["nu_c"]),
        )
    else:
        copula = jumphmm.CopulaSpec(corr=np.eye(len(tickers)), nu_c=1e6)

    rng = np.random.default_rng(seed)
    paths = jumphmm.simulate_joint(params_list, copula, steps,
                                   np.asarray(s0, dtype=np.float64), rng)
    outdir = _ensure_outdir(args.out)
    outputs = []
    for name, mat in (("prices", paths.prices), ("states", paths.states),
                      ("growth", paths.growth)):
        rows = [["day"] + list(tickers)]
        for t in range(mat.shape[1]):
            rows.append([t] + [mat[a, t] for a in range(len(tickers))])
        outputs.append(_write_csv(Path(outdir) / f"{name}.csv", rows))
    outputs.append(_write_manifest(outdir, "simulate", args, seed, inputs,
                                   outputs, t0))
    return 0


# ---------------------------------------------------------------------------
# scenario / greeks


_SCENARIO_KEYS = {
    "ticker", "model", "theta_i", "shape", "hmm", "heston", "s0", "horizon",
    "n_paths", "lr_steps", "contracts", "seed", "greeks", "rate", "dividend",
    "event_days",
}


def _shape_and_theta(config):
    """Shape + theta_i either from a calibrate bundle or inline."""
    ticker = config["ticker"]
    if "model" in config:
        path = config["model"]
        if not Path(path).exists():
            raise ValidationError(f"model bundle not found: {path}")
        with open(path) as f:
            tier = calibration.TierModel.from_dict(json.load(f))
        group = tier.group_for(ticker)
        if ticker not in group.theta:
            raise ValidationError(f"model bundle has no theta for {ticker!r}")
        return group.shape, float(group.theta[ticker]), [path]
    if "theta_i" in config and "shape" in config:
        return (surface.shape_from_dict(config["shape"]),
                float(config["theta_i"]), [])
    raise ValidationError("scenario config needs 'model' or ('theta_i' + 'shape')")


def _scenario_config(config, seed, force_greeks=False):
    for key in ("ticker", "s0", "horizon", "contracts", "hmm"):
        if key not in config:
            raise ValidationError(f"scenario config requires {key!r}")
    shape, theta_i, inputs = _shape_and_theta(config)
    hmm = _hmm_from_config(config["hmm"])
    if isinstance(config["hmm"], str):
        inputs.append(config["hmm"])
    hp = config.get("heston", {})
    _check_keys(hp, {"kappa", "sigma_v", "rho", "dt"}, "heston")
    heston = variance.HestonParams(
        kappa=float(hp.get("kappa", 2.0)), sigma_v=float(hp.get("sigma_v", 0.5)),
        rho=float(hp.get("rho", -0.6)), dt=float(hp.get("dt", 1.0 / 252.0)),
    )
    rate = float(config.get("rate", lattice.DEFAULT_RATE))
    dividend = float(config.get("dividend", 0.0))
    horizon = int(config["horizon"])

    if getattr(shape, "n_inputs", 2) == 4:
        ev = config.get("event_days", {})
        _check_keys(ev, {"own_print_day", "peer_print_day"}, "event_days")
        shape = scenario.EventShapeAdapter(
            shape, horizon,
            own_print_day=ev.get("own_print_day"),
            peer_print_day=ev.get("peer_print_day"),
        )

    contracts = []
    for c in config["contracts"]:
        _check_keys(c, {"strike", "parity", "entry_mid", "market_delta",
                        "rate", "dividend"}, "contract")
        contracts.append(scenario.ScenarioContract(
            contract=lattice.ContractSpec(
                strike=float(c["strike"]), tau=horizon / 252.0,
                parity=c["parity"], style="american",
                rate=float(c.get("rate", rate)),
                dividend=float(c.get("dividend", dividend)),
            ),
            entry_mid=float(c["entry_mid"]),
            market_delta=c.get("market_delta"),
        ))
    return scenario.ScenarioConfig(
        ticker=config["ticker"], hmm=hmm, heston=heston, theta_i=theta_i,
        shape=shape, contracts=contracts, s0=float(config["s0"]),
        horizon=horizon, n_paths=int(config.get("n_paths", 1000)),
        lr_steps=int(config.get("lr_steps", 201)), seed=seed,
        compute_greeks=bool(config.get("greeks", False)) or force_greeks,
    ), inputs


def _run_scenario_command(args, force_greeks, command):
    t0 = time.time()
    config = _load_config(args.config, _SCENARIO_KEYS)
    seed = _seed_from(args, config)
    sc_config, inputs = _scenario_config(config, seed, force_greeks=force_greeks)
    result = scenario.run_scenario(sc_config)

    outdir = _ensure_outdir(args.out)
    outputs = [Path(outdir) / "stats.json"]
    scenario.result_to_stats_json(result, outputs[0])
    outputs.append(_write_csv(Path(outdir) / "paths.csv",
                              scenario.result_to_path_rows(result)))
    outputs.append(_write_csv(Path(outdir) / "quantiles.csv",
                              scenario.result_to_quantile_rows(result)))
    if any(sc.market_delta is not None for sc in sc_config.contracts):
        checks = scenario.delta_rule_check(result)
        rows = [["parity", "market_delta", "predicted_kept", "simulated_kept",
                 "deviation"]]
        for c in checks:
            rows.append([c["parity"], c["market_delta"], f"{c['predicted_kept']:.6f}",
                         f"{c['simulated_kept']:.6f}", f"{c['deviation']:.6f}"])
        outputs.append(_write_csv(Path(outdir) / "delta_rule.csv", rows))
    if result.greeks is not None:
        P, T, C, _ = result.greeks.shape
        rows = [["path", "day", "contract", "delta", "gamma", "vega"]]
        for j in range(P):
            for t in range(T):
                for c in range(C):
                    d, g, v = result.greeks[j, t, c]
                    rows.append([j, t, c, f"{d:.8f}", f"{g:.8f}", f"{v:.8f}"])
        outputs.append(_write_csv(Path(outdir) / "greeks.csv", rows))
    outputs.append(_write_manifest(outdir, command, args, seed, inputs, outputs, t0))
    return 0


def cmd_scenario(args):
    return _run_scenario_command(args, force_greeks=False, command="scenario")


def cmd_greeks(args):
    return _run_scenario_command(args, force_greeks=True, command="greeks")


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="synthvol",
        description="Synthetic option market generator: calibrate, validate, simulate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit a calibration tier to a ladder CSV")
    p.add_argument("--ladder", required=True)
    p.add_argument("--sectors", required=True)
    p.add_argument("--earnings")
    p.add_argument("--tier", required=True, choices=calibration.TIERS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("holdout", help="temporal-holdout A/B/C comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_holdout)

    p = sub.add_parser("loo", help="leave-one-date-out sector-NN validation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("price-report",
                       help="dollar pricing errors and bid-ask ribbons for one date")
    p.add_argument("--ladder", required=True)
    p.add_argument("--sectors", required=True)
    p.add_argument("--earnings")
    p.add_argument("--model", required=True)
    p.add_argument("--date", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_price_report)

    p = sub.add_parser("simulate", help="raw joint path simulation to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario", help="forward short-premium scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("greeks", help="scenario with per-day Greek export")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_greeks)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Regenerate the shipped fixtures deterministically.

Builds a synthetic eight-date, six-ticker option ladder with sector-specific
smile shapes, per-ticker variance levels, and an earnings-driven IV bump
(own-print expansion plus a weaker same-sector spillover), alongside the
sector map, the earnings calendar, a reference HMM parameter file, a returns
series for HMM fitting, and example CLI configs.

Run from the repo root: python scripts/make_fixtures.py
"""

import csv
import json
from pathlib import Path

import numpy as np

from synthvol import jumphmm, lattice, surface
from synthvol.calibration import trading_day_dte

OUT = Path(__file__).resolve().parent.parent / "fixtures"

SEED = 20260414

CAPTURE_DATES = [
    "2026-04-14", "2026-04-15", "2026-04-16", "2026-04-17",
    "2026-04-21", "2026-04-22", "2026-04-23", "2026-04-24",
]
EXPIRIES = ["2026-04-24", "2026-05-01", "2026-05-15", "2026-06-19"]

TICKERS = {
    # ticker: (sector, is_etf, spot0, theta, beta)
    "SPY":  ("ETF",        True,  512.0, 0.030, (-0.10, -0.50, 0.020, 0.8, 0.012)),
    "NVDA": ("Technology", False, 118.0, 0.110, (-0.06, -0.90, 0.030, 1.8, 0.010)),
    "INTC": ("Technology", False,  31.0, 0.140, (-0.06, -0.90, 0.030, 1.8, 0.010)),
    "GS":   ("Financials", False, 926.0, 0.085, (-0.07, -0.70, 0.020, 1.2, 0.010)),
    "LLY":  ("Healthcare", False, 874.0, 0.120, (-0.05, -0.60, 0.025, 1.5, 0.012)),
    "XOM":  ("Energy",     False, 112.0, 0.070, (-0.06, -0.40, 0.015, 1.0, 0.008)),
}

EARNINGS = {
    "GS":   ["2026-04-16"],                 # inside the training block
    "INTC": ["2026-04-23"],                 # inside the holdout block
    "LLY":  ["2026-04-24"],                 # inside the holdout block
    "NVDA": ["2026-05-06"],                 # after the capture window
    "XOM":  ["2026-05-12"],
}

MONEYNESS = np.round(np.arange(0.80, 1.2001, 0.0125), 4)

OWN_BUMP = 0.30     # peak own-print IV inflation
PEER_BUMP = 0.10    # peak same-sector spillover
BUMP_WIDTH = 4.0    # days over which the bump decays to zero
IV_NOISE = 0.004


def _bump(e, e_peer, is_etf):
    if is_etf:
        return 1.0
    own = OWN_BUMP * max(0.0, 1.0 - abs(e) / BUMP_WIDTH)
    peer = PEER_BUMP * max(0.0, 1.0 - e_peer / BUMP_WIDTH)
    return 1.0 + own + peer


def make_ladder():
    import datetime as dt

    rng = np.random.default_rng(SEED)
    sectors = {t: (v[0], v[1]) for t, v in TICKERS.items()}
    calendar = {t: [dt.date.fromisoformat(d) for d in ds]
                for t, ds in EARNINGS.items()}

    rows = []
    spot_walk = {t: TICKERS[t][2] for t in TICKERS}
    for date_s in CAPTURE_DATES:
        obs_date = dt.date.fromisoformat(date_s)
        for ticker, (sector, is_etf, _, theta, beta) in TICKERS.items():
            spot = spot_walk[ticker]
            feat = surface.earnings_features(ticker, obs_date, calendar, sectors)
            factor = _bump(feat.e, feat.e_peer, is_etf)
            for expiry_s in EXPIRIES:
                expiry = dt.date.fromisoformat(expiry_s)
                dte = trading_day_dte(obs_date, expiry)
                if dte < 1:
                    continue
                strikes = np.round(MONEYNESS * spot, 2)
                base_iv = np.sqrt(theta * surface.psi_param(
                    float(dte), strikes / spot, np.asarray(beta)))
                for parity in ("call", "put"):
                    ivs = base_iv * factor + IV_NOISE * rng.standard_normal(strikes.size)
                    ivs = np.clip(ivs, 0.02, 1.9)
                    phi = 1.0 if parity == "call" else -1.0
                    prices = lattice.price_batch(
                        np.full(strikes.size, spot), strikes, dte / 252.0, ivs,
                        0.04, 0.0, phi, True,
                        lattice.LatticeSpec(kind="CRR", steps=200),
                    )
                    m = strikes / spot
                    half = np.maximum(0.02, prices * 0.012) * (1.0 + 2.0 * ((m - 1.0) / 0.2) ** 2)
                    bids = np.maximum(prices - half, 0.01)
                    asks = prices + half
                    for i, k in enumerate(strikes):
                        rows.append([
                            ticker, date_s, expiry_s, f"{k:.2f}", parity,
                            f"{bids[i]:.4f}", f"{asks[i]:.4f}", f"{ivs[i]:.6f}",
                            f"{spot:.2f}",
                        ])
            # small deterministic daily drift per ticker
            spot_walk[ticker] = spot * float(np.exp(0.002 * rng.standard_normal()))
    with open(OUT / "ladder.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ticker", "obs_date", "expiry", "strike", "parity",
                    "bid", "ask", "iv", "spot"])
        w.writerows(rows)
    return len(rows)


def make_sectors():
    with open(OUT / "sectors.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ticker", "sector", "is_etf"])
        for t, (sector, is_etf, *_rest) in TICKERS.items():
            w.writerow([t, sector, int(is_etf)])


def make_earnings():
    with open(OUT / "earnings.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ticker", "earnings_date"])
        for t, dates in EARNINGS.items():
            for d in dates:
                w.writerow([t, d])


def make_hmm_and_returns():
    params = jumphmm.reference_params()
    params.to_json(OUT / "hmm_reference.json")
    rng = np.random.default_rng(SEED + 1)
    rows = [["date", "ticker", "growth"]]
    for ticker in ("GS", "LLY"):
        states = jumphmm.simulate_states(params, 1200, rng)
        growth = jumphmm.simulate_returns(params, states, rng)
        day = np.datetime64("2021-01-04")
        for g in growth:
            rows.append([str(day), ticker, f"{g:.8f}"])
            day = np.busday_offset(day, 1, roll="forward")
    with open(OUT / "returns.csv", "w", newline="") as f:
        csv.writer(f).writerows(rows)


def make_configs():
    scenario_config = {
        "schema_version": 1,
        "ticker": "GS",
        "model": "out/calibrate/model.json",
        "hmm": "fixtures/hmm_reference.json",
        "heston": {"kappa": 2.0, "sigma_v": 0.5, "rho": -0.6},
        "s0": 926.0,
        "horizon": 31,
        "n_paths": 1000,
        "lr_steps": 201,
        "rate": 0.04,
        "contracts": [
            {"strike": 890.0, "parity": "put", "entry_mid": 16.51,
             "market_delta": -0.295},
            {"strike": 970.0, "parity": "call", "entry_mid": 16.09,
             "market_delta": 0.328},
        ],
        "seed": 7,
    }
    with open(OUT / "scenario_config.json", "w") as f:
        json.dump(scenario_config, f, indent=2)
        f.write("\n")

    simulate_config = {
        "schema_version": 1,
        "tickers": ["GS", "LLY"],
        "hmm": "fixtures/hmm_reference.json",
        "copula": {"corr": [[1.0, 0.6], [0.6, 1.0]], "nu_c": 6.0},
        "steps": 252,
        "s0": [926.0, 874.0],
        "seed": 7,
    }
    with open(OUT / "simulate_config.json", "w") as f:
        json.dump(simulate_config, f, indent=2)
        f.write("\n")

    holdout_config = {
        "schema_version": 1,
        "ladder": "fixtures/ladder.csv",
        "sectors": "fixtures/sectors.csv",
        "earnings": "fixtures/earnings.csv",
        "train_dates": CAPTURE_DATES[:6],
        "test_dates": CAPTURE_DATES[6:],
        "configurations": ["A", "B", "C"],
        "seed": 7,
    }
    with open(OUT / "holdout_config.json", "w") as f:
        json.dump(holdout_config, f, indent=2)
        f.write("\n")

    loo_config = {
        "schema_version": 1,
        "ladder": "fixtures/ladder.csv",
        "sectors": "fixtures/sectors.csv",
        "earnings": "fixtures/earnings.csv",
        "held_out_date": CAPTURE_DATES[-1],
        "seed": 7,
    }
    with open(OUT / "loo_config.json", "w") as f:
        json.dump(loo_config, f, indent=2)
        f.write("\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    make_sectors()
    make_earnings()
    n = make_ladder()
    make_hmm_and_returns()
    make_configs()
    print(f"wrote fixtures to {OUT} ({n} ladder rows)")


if __name__ == "__main__":
    main()

"""Option-ladder ingestion, filtering, tiered calibration, and reporting.

CSV interfaces (ISO dates, decimal prices):
  ladder:   ticker,obs_date,expiry,strike,parity,bid,ask,iv,spot
  earnings: ticker,earnings_date
  sectors:  ticker,sector,is_etf
  returns:  date,ticker,growth

The calibration hierarchy fits one shape per group (global, per-sector, or
per-ticker with sector fallback) jointly with per-ticker variance levels, and
routes every observation to exactly one fitted model.
"""

import csv
import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import lattice, surface

TRADING_DAYS = 252.0

LADDER_COLUMNS = ("ticker", "obs_date", "expiry", "strike", "parity",
                  "bid", "ask", "iv", "spot")

PER_TICKER_MIN_OBS = 2000   # qualification threshold for a per-ticker shape
WIDE_ARCH_MIN_OBS = 5000    # at or above: 16-wide hidden layers, else 8
EVENT_WINDOW_DAYS = 3.0     # exclusion half-width for the non-earnings split


@dataclass
class LadderObservation:
    ticker: str
    obs_date: dt.date
    expiry_date: dt.date
    dte: int
    strike: float
    spot: float
    bid: float
    ask: float
    mid: float
    market_iv: float
    parity: str
    sector: str = None
    is_etf: bool = False
    e: float = 0.0
    e_peer: float = 0.0

    @property
    def moneyness(self):
        return self.strike / self.spot


@dataclass(frozen=True)
class FilterSpec:
    moneyness_lo: float = 0.80
    moneyness_hi: float = 1.20
    iv_lo: float = 0.01
    iv_hi: float = 2.0


@dataclass(frozen=True)
class HoldoutConfig:
    """Temporal-holdout run: train/test date blocks and configuration.

    A: pooled 2-input; B: 2-input with rows within +/-3 days of an own-or-peer
    print excluded from both splits; C: 4-input on the same rows as A.
    """

    train_dates: tuple
    test_dates: tuple
    configuration: str = "A"

    def __post_init__(self):
        if self.configuration not in ("A", "B", "C"):
            raise ValueError("configuration must be 'A', 'B', or 'C'")
        if set(self.train_dates) & set(self.test_dates):
            raise ValueError("train and test dates overlap")


def _parse_date(s):
    return dt.date.fromisoformat(s.strip())


def ingest_sectors(path):
    """ticker -> (sector, is_etf)."""
    out = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"ticker", "sector", "is_etf"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"sector CSV missing columns: {sorted(missing)}")
        for row in reader:
            out[row["ticker"].strip()] = (
                row["sector"].strip(),
                row["is_etf"].strip().lower() in ("1", "true", "yes"),
            )
    return out


def ingest_earnings(path):
    """ticker -> sorted list of earnings dates."""
    out = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"ticker", "earnings_date"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"earnings CSV missing columns: {sorted(missing)}")
        for row in reader:
            out.setdefault(row["ticker"].strip(), []).append(
                _parse_date(row["earnings_date"])
            )
    return {t: sorted(ds) for t, ds in out.items()}


def ingest_returns(path):
    """ticker -> growth-rate series ordered by date."""
    rows = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"date", "ticker", "growth"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"returns CSV missing columns: {sorted(missing)}")
        for row in reader:
            rows.setdefault(row["ticker"].strip(), []).append(
                (_parse_date(row["date"]), float(row["growth"]))
            )
    return {
        t: np.array([g for _, g in sorted(pairs)], dtype=np.float64)
        for t, pairs in rows.items()
    }


def trading_day_dte(obs_date, expiry_date):
    """Weekday count between the dates; exchange holidays are out of scope
    and the tau = max(DTE, 1) floor absorbs the residual edge cases."""
    return int(np.busday_count(obs_date, expiry_date))


def ingest_ladder(path, sectors=None):
    """Parse the ladder CSV. Malformed rows are skipped and counted; missing
    required columns abort. Returns (observations, skipped_count)."""
    observations = []
    skipped = 0
    sectors = sectors or {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(LADDER_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"ladder CSV missing required columns: {sorted(missing)}")
        for row in reader:
            try:
                ticker = row["ticker"].strip()
                obs_date = _parse_date(row["obs_date"])
                expiry = _parse_date(row["expiry"])
                strike = float(row["strike"])
                spot = float(row["spot"])
                bid = float(row["bid"])
                ask = float(row["ask"])
                iv = float(row["iv"])
                parity = row["parity"].strip().lower()
                if parity not in ("call", "put"):
                    raise ValueError(f"bad parity {parity!r}")
                if strike <= 0 or spot <= 0 or bid < 0 or ask < bid:
                    raise ValueError("bad quote fields")
                dte = trading_day_dte(obs_date, expiry)
                if dte < 0:
                    raise ValueError("negative DTE")
            except (ValueError, KeyError, AttributeError):
                skipped += 1
                continue
            sector, is_etf = sectors.get(ticker, (None, False))
            observations.append(LadderObservation(
                ticker=ticker, obs_date=obs_date, expiry_date=expiry, dte=dte,
                strike=strike, spot=spot, bid=bid, ask=ask,
                mid=0.5 * (bid + ask), market_iv=iv, parity=parity,
                sector=sector, is_etf=is_etf,
            ))
    return observations, skipped


def filter_observations(obs, spec=FilterSpec()):
    """Apply the quote filters; returns (kept, rejection tally by reason)."""
    kept = []
    tally = {"zero_bid": 0, "moneyness": 0, "iv_range": 0}
    for o in obs:
        if o.bid <= 0:
            tally["zero_bid"] += 1
        elif not (spec.moneyness_lo <= o.moneyness <= spec.moneyness_hi):
            tally["moneyness"] += 1
        elif not (spec.iv_lo < o.market_iv < spec.iv_hi):
            tally["iv_range"] += 1
        else:
            kept.append(o)
    return kept, tally


def attach_earnings_features(obs, calendar, sectors):
    """Fill e / e_peer on every observation, grouped by (ticker, date)."""
    cache = {}
    for o in obs:
        key = (o.ticker, o.obs_date)
        if key not in cache:
            cache[key] = surface.earnings_features(o.ticker, o.obs_date,
                                                   calendar, sectors)
        feat = cache[key]
        o.e = feat.e
        o.e_peer = feat.e_peer
    return obs


def _columns(obs):
    return {
        "ticker": np.array([o.ticker for o in obs]),
        "sector": np.array([o.sector if o.sector is not None else "" for o in obs]),
        "tau": np.array([max(o.dte, 1) for o in obs], dtype=np.float64),
        "m": np.array([o.moneyness for o in obs], dtype=np.float64),
        "iv": np.array([o.market_iv for o in obs], dtype=np.float64),
        "e": np.array([o.e for o in obs], dtype=np.float64),
        "e_peer": np.array([o.e_peer for o in obs], dtype=np.float64),
    }


TIERS = ("parametric", "global-nn", "sector-nn", "per-ticker-nn")


@dataclass
class TierModel:
    """Fitted calibration tier: named groups plus a ticker -> group router."""

    tier: str
    groups: dict            # name -> surface.FittedGroup
    routing: dict           # ticker -> group name
    four_input: bool = False
    seed: int = 0

    def group_for(self, ticker):
        name = self.routing.get(ticker)
        if name is None:
            if "global" in self.groups:
                return self.groups["global"]
            raise KeyError(f"no fitted model routes ticker {ticker!r}")
        return self.groups[name]

    def model_iv(self, ticker, tau_days, m, e=0.0, e_peer=0.0):
        return self.group_for(ticker).model_iv(ticker, tau_days, m, e, e_peer)

    def model_iv_rows(self, obs):
        """Vectorized model IV for a list of observations."""
        cols = _columns(obs)
        out = np.empty(len(obs), dtype=np.float64)
        names = np.array([self.routing.get(t, "global") for t in cols["ticker"]])
        for name in np.unique(names):
            if name not in self.groups:
                raise KeyError(f"no fitted model for group {name!r}")
            group = self.groups[name]
            mask = names == name
            theta = np.array([group.theta[t] for t in cols["ticker"][mask]])
            psi = np.asarray(group.shape.value(
                cols["tau"][mask], cols["m"][mask],
                cols["e"][mask], cols["e_peer"][mask],
            ))
            out[mask] = np.sqrt(theta * psi)
        return out

    def to_dict(self):
        return {
            "schema_version": 1,
            "tier": self.tier,
            "four_input": self.four_input,
            "seed": self.seed,
            "groups": {
                name: {
                    "shape": g.shape.to_dict(),
                    "theta": g.theta,
                    "train_rmse_pct": g.train_rmse_pct,
                    "n_obs": g.n_obs,
                    "best_epoch": g.best_epoch,
                }
                for name, g in self.groups.items()
            },
            "routing": self.routing,
        }

    @classmethod
    def from_dict(cls, d):
        groups = {}
        for name, gd in d["groups"].items():
            groups[name] = surface.FittedGroup(
                shape=surface.shape_from_dict(gd["shape"]),
                theta={t: float(v) for t, v in gd["theta"].items()},
                loss_history=np.array([]),
                best_epoch=gd.get("best_epoch", -1),
                best_loss=float("nan"),
                train_rmse_pct=gd.get("train_rmse_pct", float("nan")),
                n_obs=gd.get("n_obs", 0),
                seed=d.get("seed", 0),
            )
        return cls(
            tier=d["tier"], groups=groups,
            routing={t: g for t, g in d["routing"].items()},
            four_input=d.get("four_input", False), seed=d.get("seed", 0),
        )


def _arch_for(n_obs, four_input, parametric=False):
    if parametric:
        return "parametric"
    n_in = 4 if four_input else 2
    return (n_in, 16 if n_obs >= PER_TICKER_MIN_OBS else 8)


def _fit_group(args):
    name, idx, cols, arch, config = args
    return name, surface.train_surface(
        cols["ticker"][idx], cols["tau"][idx], cols["m"][idx], cols["iv"][idx],
        arch, config, e=cols["e"][idx], e_peer=cols["e_peer"][idx],
    )


def fit_tier(obs, tier, seed=0, four_input=False, config=None, threads=1):
    """Fit one calibration tier over the corpus and build the routed model.

    per-ticker-nn applies the qualification thresholds (>= 2000 observations
    for an own shape, >= 5000 for the wide architecture) and falls back to the
    ticker's sector model so every observation stays priced.
    """
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}, got {tier!r}")
    if not obs:
        raise ValueError("empty corpus")
    config = config or surface.TrainConfig(seed=seed)
    if config.seed != seed:
        config = replace(config, seed=seed)
    cols = _columns(obs)
    n = len(obs)

    jobs = []
    routing = {}
    if tier in ("parametric", "global-nn"):
        arch = _arch_for(n, four_input, parametric=(tier == "parametric"))
        jobs.append(("global", np.arange(n), cols, arch, config))
        routing = {t: "global" for t in np.unique(cols["ticker"])}
    elif tier == "sector-nn":
        for sector in np.unique(cols["sector"]):
            idx = np.flatnonzero(cols["sector"] == sector)
            if sector == "":
                raise ValueError(
                    "sector-nn tier requires a sector for every observation"
                )
            jobs.append((f"sector:{sector}", idx, cols,
                         _arch_for(idx.size, four_input), config))
            for t in np.unique(cols["ticker"][idx]):
                routing[t] = f"sector:{sector}"
    else:  # per-ticker-nn
        counts = {t: int((cols["ticker"] == t).sum())
                  for t in np.unique(cols["ticker"])}
        fallback_sectors = set()
        for t, c in counts.items():
            if c >= PER_TICKER_MIN_OBS:
                idx = np.flatnonzero(cols["ticker"] == t)
                n_in = 4 if four_input else 2
                hidden = 16 if c >= WIDE_ARCH_MIN_OBS else 8
                jobs.append((f"ticker:{t}", idx, cols, (n_in, hidden), config))
                routing[t] = f"ticker:{t}"
            else:
                sector = cols["sector"][cols["ticker"] == t][0]
                if sector == "":
                    raise ValueError(
                        f"unqualified ticker {t!r} needs a sector for fallback"
                    )
                fallback_sectors.add(sector)
                routing[t] = f"sector:{sector}"
        for sector in sorted(fallback_sectors):
            idx = np.flatnonzero(cols["sector"] == sector)
            jobs.append((f"sector:{sector}", idx, cols,
                         _arch_for(idx.size, four_input), config))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = dict(pool.map(_fit_group, jobs))
    else:
        fitted = dict(map(_fit_group, jobs))
    empty = [name for name, g in fitted.items() if g.n_obs == 0]
    if empty:
        raise ValueError(f"groups with zero observations: {empty}")
    return TierModel(tier=tier, groups=fitted, routing=routing,
                     four_input=four_input, seed=seed)


def rmse_pct(model_iv, market_iv):
    model_iv = np.asarray(model_iv, dtype=np.float64)
    market_iv = np.asarray(market_iv, dtype=np.float64)
    return float(np.sqrt(np.mean((model_iv - market_iv) ** 2)) * 100.0)


def rmse_report(model, obs, group_by="overall"):
    """RMSE (% IV) and counts, overall or decomposed by sector / ticker."""
    if group_by not in ("overall", "sector", "ticker"):
        raise ValueError("group_by must be overall|sector|ticker")
    pred = model.model_iv_rows(obs)
    cols = _columns(obs)
    rows = []
    if group_by != "overall":
        keys = cols[group_by]
        for key in np.unique(keys):
            mask = keys == key
            rows.append({
                "group": str(key),
                "rmse_pct": rmse_pct(pred[mask], cols["iv"][mask]),
                "count": int(mask.sum()),
            })
    overall = {"group": "overall", "rmse_pct": rmse_pct(pred, cols["iv"]),
               "count": len(obs)}
    return {"groups": rows, "overall": overall}


def _event_window_mask(obs):
    return np.array([
        abs(o.e) <= EVENT_WINDOW_DAYS or o.e_peer <= EVENT_WINDOW_DAYS
        for o in obs
    ])


def temporal_holdout(obs, config, seed=0, threads=1, train_config=None):
    """Train on the training block only, evaluate both splits.

    Standardization, per-ticker level initialization, and the fit itself see
    only training rows; configuration B removes earnings-window rows from
    both splits; configuration C switches the sector networks to four inputs
    on the identical rows as A.
    """
    train = [o for o in obs if o.obs_date in set(config.train_dates)]
    test = [o for o in obs if o.obs_date in set(config.test_dates)]
    if not train or not test:
        raise ValueError("both train and test splits must be non-empty")
    if config.configuration == "B":
        train = [o for o, drop in zip(train, _event_window_mask(train)) if not drop]
        test = [o for o, drop in zip(test, _event_window_mask(test)) if not drop]
        if not train or not test:
            raise ValueError("event-window exclusion emptied a split")
    four_input = config.configuration == "C"
    model = fit_tier(train, "sector-nn", seed=seed, four_input=four_input,
                     config=train_config, threads=threads)
    train_rmse = rmse_report(model, train)["overall"]["rmse_pct"]
    test_rmse = rmse_report(model, test)["overall"]["rmse_pct"]
    return {
        "configuration": config.configuration,
        "n_train": len(train),
        "n_test": len(test),
        "train_rmse_pct": train_rmse,
        "test_rmse_pct": test_rmse,
        "gap_pct": test_rmse - train_rmse,
        "model": model,
    }


def loo_date(obs, held_out_date, seed=0, threads=1, train_config=None):
    """Leave-one-date-out: train the sector tier on every other capture date."""
    dates = sorted({o.obs_date for o in obs})
    if held_out_date not in dates:
        raise ValueError(f"held-out date {held_out_date} not present in corpus")
    if len(dates) < 2:
        raise ValueError("leave-one-date-out needs at least two capture dates")
    train = [o for o in obs if o.obs_date != held_out_date]
    test = [o for o in obs if o.obs_date == held_out_date]
    model = fit_tier(train, "sector-nn", seed=seed, config=train_config,
                     threads=threads)
    report_train = rmse_report(model, train, group_by="sector")
    report_test = rmse_report(model, test, group_by="sector")
    per_sector = []
    test_by = {r["group"]: r for r in report_test["groups"]}
    for r in report_train["groups"]:
        t = test_by.get(r["group"])
        per_sector.append({
            "sector": r["group"],
            "train_rmse_pct": r["rmse_pct"],
            "test_rmse_pct": t["rmse_pct"] if t else float("nan"),
            "gap_pct": (t["rmse_pct"] - r["rmse_pct"]) if t else float("nan"),
        })
    pooled_train = report_train["overall"]["rmse_pct"]
    pooled_test = report_test["overall"]["rmse_pct"]
    return {
        "held_out_date": held_out_date,
        "per_sector": per_sector,
        "pooled": {
            "train_rmse_pct": pooled_train,
            "test_rmse_pct": pooled_test,
            "gap_pct": pooled_test - pooled_train,
        },
        "model": model,
    }


N_RIBBON_BINS = 12


def _halfspread_ribbon(ms, half_spreads, grid):
    """Median half-spread in 12 equal-width moneyness bins, linearly
    interpolated onto the grid."""
    lo, hi = float(ms.min()), float(ms.max())
    if hi <= lo:
        return np.full_like(grid, float(np.median(half_spreads)))
    edges = np.linspace(lo, hi, N_RIBBON_BINS + 1)
    centers, medians = [], []
    for b in range(N_RIBBON_BINS):
        mask = (ms >= edges[b]) & (ms <= edges[b + 1] if b == N_RIBBON_BINS - 1
                                   else ms < edges[b + 1])
        if mask.any():
            centers.append(0.5 * (edges[b] + edges[b + 1]))
            medians.append(float(np.median(half_spreads[mask])))
    return np.interp(grid, np.array(centers), np.array(medians))


def price_error_report(model, obs, lattice_spec=None, rate=lattice.DEFAULT_RATE,
                       dividend=0.0, n_grid=121):
    """Dollar pricing errors on one capture date plus bid-ask ribbons.

    Each contract is repriced American through the configured tree (200-step
    CRR by default) at the model IV; error = model price - market mid. The
    same repricing at the quoted market IV is reported as the near-zero
    reference. One panel per (ticker, expiry): a 12-bin median half-spread
    ribbon interpolated onto a fine moneyness grid.
    """
    dates = {o.obs_date for o in obs}
    if len(dates) != 1:
        raise ValueError(f"price_error_report expects one capture date, got {sorted(dates)}")
    lattice_spec = lattice_spec or lattice.LatticeSpec(kind="CRR", steps=200)

    model_ivs = model.model_iv_rows(obs)
    S = np.array([o.spot for o in obs])
    K = np.array([o.strike for o in obs])
    tau = np.array([max(o.dte, 1) for o in obs]) / TRADING_DAYS
    phi = np.array([1.0 if o.parity == "call" else -1.0 for o in obs])
    market_ivs = np.array([o.market_iv for o in obs])

    model_prices = lattice.price_batch(S, K, tau, model_ivs, rate, dividend,
                                       phi, True, lattice_spec)
    ref_prices = lattice.price_batch(S, K, tau, market_ivs, rate, dividend,
                                     phi, True, lattice_spec)

    contracts = []
    for i, o in enumerate(obs):
        contracts.append({
            "ticker": o.ticker,
            "expiry": o.expiry_date.isoformat(),
            "parity": o.parity,
            "strike": o.strike,
            "moneyness": o.moneyness,
            "mid": o.mid,
            "model_iv": float(model_ivs[i]),
            "model_price": float(model_prices[i]),
            "dollar_error": float(model_prices[i] - o.mid),
            "market_iv_price": float(ref_prices[i]),
            "market_iv_error": float(ref_prices[i] - o.mid),
            "half_spread": 0.5 * (o.ask - o.bid),
        })

    panels = {}
    keys = sorted({(c["ticker"], c["expiry"]) for c in contracts})
    for key in keys:
        rows = [c for c in contracts if (c["ticker"], c["expiry"]) == key]
        ms = np.array([c["moneyness"] for c in rows])
        hs = np.array([c["half_spread"] for c in rows])
        grid = np.linspace(float(ms.min()), float(ms.max()), n_grid)
        panels["{}|{}".format(*key)] = {
            "ticker": key[0],
            "expiry": key[1],
            "moneyness_grid": grid.tolist(),
            "ribbon_half_spread": _halfspread_ribbon(ms, hs, grid).tolist(),
        }
    return {"contracts": contracts, "panels": panels}

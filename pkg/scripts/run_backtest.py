"""Rolling weekly GAM backtest on a price CSV, or on the synthetic benchmark series when no CSV is given."""
import argparse
from pathlib import Path

import numpy as np

from nordbess.forecaster import BUCKET_LABELS, backtest, write_backtest
from nordbess.market_data import load_hourly_csv, series_from_arrays, to_log_revenue
from nordbess.synthetic import EPOCH, gam_benchmark_series


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", nargs="?", help="hourly price CSV (timestamp, price, volume)")
    ap.add_argument("--zone", default="DK1")
    ap.add_argument("--market", default="SPOT")
    ap.add_argument("--weeks", type=int, default=8, help="length of the synthetic series")
    ap.add_argument("--train-hours", type=int, default=336)
    ap.add_argument("--scale", choices=["level", "log"], default="level")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/backtest")
    args = ap.parse_args()

    if args.csv:
        series = to_log_revenue(load_hourly_csv(args.csv, zone=args.zone, market=args.market))
    else:
        _, _, y = gam_benchmark_series(np.random.default_rng(args.seed), weeks=args.weeks)
        series = to_log_revenue(series_from_arrays(args.zone, args.market, EPOCH, np.exp(y), np.ones(y.size)),
                                utc_offset_hours=0)
    res = backtest(series, args.train_hours, scale=args.scale, workers=args.workers)
    for path in write_backtest(res, Path(args.out), args.zone, args.market):
        print(path)
    for wk, fit in zip(res.weeks, res.fits):
        print(f"{wk.week_start:%Y-%m-%d}  MAPE {wk.mape:7.4f}  adj R2 {fit.adj_r2:6.3f}")
    print("MAPE buckets", dict(zip(BUCKET_LABELS, res.distribution.counts)))


if __name__ == "__main__":
    main()

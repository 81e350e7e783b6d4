"""Study runs on the synthetic regimes: fixed vs flexible SOC, single vs multi bids, original vs GAM prices.

Writes one report per run plus comparisons.json into --out. Expect roughly 10 s per
2019-regime day and 1 s per 2021-regime day on one core.
"""
import argparse
import json
from pathlib import Path

from nordbess.experiments import ExperimentSpec, compare, run_experiment

DESIGNS = {
    "fixed": dict(soc_mode="fixed"),
    "flexible": dict(soc_mode="flexible"),
    "multi": dict(structure="multi"),
    "gam": dict(source="gam"),
}
PAIRS = [("flexible", "fixed"), ("multi", "fixed"), ("gam", "fixed")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--regimes", nargs="+", default=["2019", "2021"])
    ap.add_argument("--designs", nargs="+", default=list(DESIGNS), choices=list(DESIGNS))
    ap.add_argument("--weeks", type=int, default=1)
    ap.add_argument("--days-per-week", type=int, default=3)
    ap.add_argument("--scenarios", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/experiments")
    args = ap.parse_args()

    out = Path(args.out)
    deltas = []
    for regime in args.regimes:
        reports = {}
        for name in args.designs:
            spec = ExperimentSpec(name=f"{regime}_{name}", regime=regime, weeks=args.weeks,
                                  days_per_week=args.days_per_week, n_scenarios=args.scenarios,
                                  seed=args.seed, workers=args.workers, **DESIGNS[name])
            rep = run_experiment(spec)
            rep.write(out)
            reports[name] = rep
            print(f"{spec.name:>14}: profit {rep.profit:10.2f}  cost {rep.cost:9.2f}  "
                  f"accepted h {rep.acceptance_hours:7.2f}  shares "
                  + " ".join(f"{k}={v:.1f}%" for k, v in rep.shares.items()))
        for a, b in PAIRS:
            if a in reports and b in reports:
                d = compare(reports[a], reports[b])
                deltas.append(d)
                pct = d["profit"]["delta_pct"]
                print(f"{regime} {a} vs {b}: profit {'n/a' if pct is None else f'{pct:+.2f}%'}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparisons.json").write_text(json.dumps(deltas, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()

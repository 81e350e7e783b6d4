"""Regenerate the bundled toy fixtures under configs/toy/."""
import argparse
from pathlib import Path

from nordbess.synthetic import write_toy_data

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs" / "toy"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for p in write_toy_data(args.out, args.seed):
        print(p)

"""Render a desk-scale synthetic dataset into a target directory.

Equivalent to `hakws synth` with a config file; kept as a script so the
knobs most worth touching are visible flags.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hakws.dataset import DatasetConfig  # noqa: E402
from hakws.experiments import build_synthetic_dataset  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-per-class", type=int, default=4)
    parser.add_argument("--val-per-class", type=int, default=2)
    parser.add_argument("--test-per-class", type=int, default=4)
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()

    config = DatasetConfig(
        seed=args.seed, train_per_class=args.train_per_class,
        val_per_class=args.val_per_class,
        test_per_class=args.test_per_class, workers=args.workers)
    records = build_synthetic_dataset(config, args.out)
    by_set = {}
    for record in records:
        by_set[record.set_name] = by_set.get(record.set_name, 0) + 1
    for name in ("train", "val", "test"):
        print(f"{name}: {by_set.get(name, 0)} records")
    print(f"dataset ready under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

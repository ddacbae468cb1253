"""Memorization sanity run: a small model must nail a tiny clean set.

Builds a 200-utterance, 3-class dataset at high SNR, trains one seed of
the narrowest model, and reports training accuracy. Anything below 99%
points at a broken gradient path, scheduler, or data pipeline.
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hakws.experiments import overfit_toy  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", default=None,
                        help="defaults to a fresh temp directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=60)
    args = parser.parse_args()

    work_dir = args.work_dir or tempfile.mkdtemp(prefix="overfit_")
    result, accuracy = overfit_toy(work_dir, seed=args.seed,
                                   epochs=args.epochs)
    print(f"checkpoint: {result.final_path}")
    print(f"final epoch loss: {result.epoch_losses[-1]:.4f}")
    print(f"training accuracy: {accuracy:.2f}%")
    ok = accuracy >= 99.0
    print("verdict:", "pass" if ok else "FAIL (expected >= 99%)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

"""Microphone-input comparison at low SNR.

The in-ear path hears the wearer's own voice band-limited but with the
ambient noise strongly attenuated; the behind-the-ear front mic hears
full-band voice in full-strength noise. Models trained on each input
(and on both) are compared at the lowest test SNR: in-ear should win,
and adding the front mic should not hurt.
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hakws.experiments import mic_trend  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", default=None,
                        help="defaults to a fresh temp directory")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=80)
    args = parser.parse_args()

    work_dir = args.work_dir or tempfile.mkdtemp(prefix="mictrend_")
    outcome = mic_trend(work_dir, seeds=tuple(args.seeds),
                        epochs=args.epochs)
    print(f"accuracy at {outcome['lowest_snr_db']:g} dB, "
          f"averaged over {len(args.seeds)} seeds:")
    for name, stats in outcome["accuracies"].items():
        per_seed = ", ".join(f"{a:.1f}" for a in stats["per_seed"])
        print(f"  {name:10s} mean {stats['mean']:6.2f}  ({per_seed})")
    checks = (("in-ear beats front mic", outcome["iec_beats_front"]),
              ("both mics >= in-ear", outcome["both_at_least_iec"]))
    ok = True
    for label, passed in checks:
        print(f"{label}: {'pass' if passed else 'FAIL'}")
        ok = ok and passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

"""Train the three continual modes on the synthetic stream and print their metrics.

    python demos/compare_modes.py [output_dir]

Each mode writes its own run directory (accuracy matrix, metrics, SVG plots,
checkpoints). Expect a few minutes on one CPU.
"""

import sys
from pathlib import Path

from cssl_har import config as cfgmod
from cssl_har import runner

HERE = Path(__file__).parent


def main(out: str) -> None:
    base = cfgmod.load(HERE / "synthetic.ini")
    print(f"{'mode':<12}{'FA':>8}{'CA':>8}{'F':>8}")
    for mode in ("kaizen", "cassle", "no_distill"):
        run_dir = runner.run_experiment(cfgmod.override(base, {"train.mode": mode}), out)
        m = runner.read_metrics(run_dir)
        print(f"{mode:<12}{m['fa']:8.3f}{m['ca']:8.3f}{m['forgetting']:8.3f}  {run_dir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo-out")

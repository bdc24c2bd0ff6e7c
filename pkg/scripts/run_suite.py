"""Run a batch config through the experiment runner and print one line per check.

    python3 scripts/run_suite.py [configs/suite.json] [--out suite-out]
"""

import argparse
import json
from pathlib import Path

from fblab import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", nargs="?", default=Path(__file__).resolve().parents[1] / "configs" / "suite.json",
                    type=Path)
    ap.add_argument("--out", default=Path("suite-out"), type=Path)
    args = ap.parse_args()
    exps = cli.parse_config(json.loads(args.config.read_text()))
    for m in cli.run_batch(exps, args.out):
        print(f"{m['name']:<22} {m['status']:<15} {m['wall_time_s']:8.1f} s")
        for name, ok in m["checks"].items():
            print(f"    {'ok  ' if ok else 'FAIL'} {name}")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()

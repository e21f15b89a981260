#!/usr/bin/env python3
"""Run every example config under scripts/configs and summarize the results.

Each experiment writes its artifacts to out/<config-name>/ (override with
SEMIFLOW_OUT or --out).  Exit code is nonzero if any asserted check failed.
"""

import argparse
import os
import sys
from pathlib import Path

from semiflow.cli import parse_config, run_experiment

CONFIG_DIR = Path(__file__).parent / "configs"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.environ.get("SEMIFLOW_OUT", "out"))
    ap.add_argument("--only", nargs="*", help="config stems to run")
    args = ap.parse_args()

    failures = 0
    for cfg_path in sorted(CONFIG_DIR.glob("*.json")):
        if args.only and cfg_path.stem not in args.only:
            continue
        spec = parse_config(cfg_path)
        manifest = run_experiment(spec, out_dir=Path(args.out) / cfg_path.stem)
        status = "PASS" if manifest["passed"] else "FAIL"
        tasks = ", ".join(f"{t}={'ok' if ok else 'FAIL'}"
                          for t, ok in manifest["tasks"].items())
        print(f"{cfg_path.stem:<18} {status}  [{tasks}]")
        failures += 0 if manifest["passed"] else 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())

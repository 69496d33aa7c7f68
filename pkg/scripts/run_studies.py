"""Run the Monte Carlo studies in scripts/configs and write JSON reports and CSV summaries.

    python scripts/run_studies.py                 # every config
    python scripts/run_studies.py clt cox         # selected configs by stem
    python scripts/run_studies.py --out results   # output directory (default results/)
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from cpsurv.cli import run

CONFIGS = Path(__file__).resolve().parent / "configs"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("names", nargs="*", help="config stems to run (default: all)")
    parser.add_argument("--out", default="results", help="output directory")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = sorted(CONFIGS.glob("*.yaml"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    status = 0
    for path in paths:
        start = time.perf_counter()
        code = run(["study", "--config", str(path), "--output", str(out / f"{path.stem}.json"),
                    "--summary", str(out / f"{path.stem}.csv")])
        print(f"{path.stem:32s} exit={code} {time.perf_counter() - start:7.1f}s")
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())

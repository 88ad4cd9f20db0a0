"""Reference pipeline of example 3; writes CSV tables and a pass/fail summary."""
import argparse
import logging
import sys

from kcm.experiments import run_example

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output-dir", default="results/example3")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    report = run_example(3, outdir=args.output_dir)
    print(report.text())
    sys.exit(0 if report.passed else 1)

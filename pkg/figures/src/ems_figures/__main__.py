"""Manifest driver: ``python -m ems_figures build manifest.json``."""

import argparse
import sys

from .jobs import ManifestError, load_manifest
from .render import ColumnError, EmptyInputError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ems-figures")
    sub = parser.add_subparsers(dest="command", required=True)
    build = sub.add_parser("build")
    build.add_argument("manifest")
    args = parser.parse_args(argv)
    try:
        jobs = load_manifest(args.manifest)
        for job in jobs:
            out = render(job)
            print(f"rendered {job.kind} -> {out}")
    except (ManifestError, ColumnError, EmptyInputError, FileNotFoundError) as exc:
        print(f"ems-figures: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

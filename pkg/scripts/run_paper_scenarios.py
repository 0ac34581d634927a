#!/usr/bin/env python3
"""Regenerate every shipped example scenario into results/<name>/.

Equivalent to running the CLI by hand on each config in configs/; the
outputs are the inputs the figure package consumes.
"""

import sys
from pathlib import Path

from ems_forge.cli import main

ROOT = Path(__file__).resolve().parent.parent
RUNS = [
    ("synthesize", "fig4_5.json", ["--compare-ideal", "--uv"]),
    ("sweep", "fig6_sweep.json", []),
    ("sweep", "fig7_incidence.json", []),
    ("sweep", "fig8_scan.json", []),
    ("design-atom", "design_atom.json", []),
]


def run(out_root: Path) -> int:
    for command, config, flags in RUNS:
        name = config.removesuffix(".json")
        out = out_root / name
        argv = [command, "--config", str(ROOT / "configs" / config),
                "--out", str(out), *flags]
        print("ems-forge", " ".join(argv))
        code = main(argv)
        if code != 0:
            print(f"failed with exit code {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "results"
    sys.exit(run(target))

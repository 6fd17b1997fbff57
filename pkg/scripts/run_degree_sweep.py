#!/usr/bin/env python3
"""Sweep the ring degree and record consensus rounds / traffic per degree.

Defaults to 20 workers over all degrees 1..10 on the desk-scale synthetic
data; extra arguments are forwarded to the CLI.

Example:
    python3 scripts/run_degree_sweep.py --output runs/sweep --seeds 0,1,2
"""

import sys

from dssfn.cli import main

if __name__ == "__main__":
    argv = [
        "sweep-degree",
        "--config", "configs/desk_synthetic.cfg",
        "--degrees", "1,2,3,4,5,6,7,8,9,10",
        "--set", "workers=20",
        *sys.argv[1:],
    ]
    raise SystemExit(main(argv))

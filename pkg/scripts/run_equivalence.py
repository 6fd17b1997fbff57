#!/usr/bin/env python3
"""Compare decentralized layer solutions against the centralized oracle on
the desk-scale synthetic config; extra arguments are forwarded to the CLI.

Example:
    python3 scripts/run_equivalence.py --output runs/eq --set workers=8
"""

import sys

from dssfn.cli import main

if __name__ == "__main__":
    argv = ["equivalence", "--config", "configs/desk_synthetic.cfg", *sys.argv[1:]]
    raise SystemExit(main(argv))

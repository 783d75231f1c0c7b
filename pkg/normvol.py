"""Entry script for normvol.

Responsibility:
- Run the command-line front end and hand its exit code to the shell.

Usage:
    python normvol.py price --config configs/heston.cfg --benchmark
    python normvol.py nstar --config configs/heston.cfg --seed 7 --out out/heston

Design note:
- All work happens in the packages: pricing/ holds the closed forms and the
  series, simulator/ the Monte Carlo engine, interface/ the config, reports and
  CLI. This script only wires the process to :func:`interface.cli.main`.
"""

import sys

from interface.cli import main


if __name__ == "__main__":
    sys.exit(main())

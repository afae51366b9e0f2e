"""Laser-driven walkers (correlated and mean-field) against the grid solver.

Thin wrapper over ``tdqmc --mode realtime``; the default pulse is 0.15 a.u.
peak field, 0.153 a.u. carrier, 6 cycles.  Extra ``--key value`` pairs are
passed through to the command line.
"""

import sys

from tdqmc.cli import main

DEFAULTS = ["--mode", "realtime", "--alpha", "7", "--walkers", "2000",
            "--exact-realtime-points", "512", "--plots", "--out", "runs/strong_field"]

if __name__ == "__main__":
    if any(a in ("-h", "--help") for a in sys.argv[1:]):
        print(__doc__)
        sys.exit(0)
    sys.exit(main(["-v"] + DEFAULTS + sys.argv[1:]))

"""Energy and MISE of the walker ground state versus correlation length.

Thin wrapper over ``tdqmc --mode alpha_scan`` with scan-friendly defaults;
extra ``--key value`` pairs are passed through to the command line.
"""

import sys

from tdqmc.cli import main

DEFAULTS = ["--mode", "alpha_scan", "--alphas", "0,2,4,6,8,12,mean_field", "--replicates", "3",
            "--walkers", "4000", "--exact-points", "256", "--plots", "--out", "runs/alpha_scan"]

if __name__ == "__main__":
    if any(a in ("-h", "--help") for a in sys.argv[1:]):
        print(__doc__)
        sys.exit(0)
    sys.exit(main(["-v"] + DEFAULTS + sys.argv[1:]))

"""Populate the acceptance cache and print the per-criterion verdicts.

Equivalent to ``pytest tests/test_acceptance.py -s -rA``; takes hours on
one core the first time, seconds afterwards.
"""

import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    root = Path(__file__).resolve().parent.parent
    sys.exit(pytest.main([str(root / "tests" / "test_acceptance.py"), "-s", "-rA"] + sys.argv[1:]))

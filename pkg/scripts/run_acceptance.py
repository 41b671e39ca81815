"""Print one PASS/FAIL line per acceptance criterion; exit 1 if any fails."""

import runpy
import sys
from pathlib import Path

if __name__ == "__main__":
    suite = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    sys.argv = [str(suite)]
    runpy.run_path(str(suite), run_name="__main__")

"""Run the acceptance gate and print only the per-criterion verdicts."""

import subprocess
import sys
from pathlib import Path

root = Path(__file__).resolve().parents[1]
proc = subprocess.run(
    [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(root / "tests" / "test_acceptance.py")],
    capture_output=True,
    text=True,
)
lines = proc.stdout.splitlines()
start = next((i for i, s in enumerate(lines) if "acceptance criteria" in s), None)
if start is None:
    print(proc.stdout)
else:
    for line in lines[start + 1:]:
        if not line.startswith(("PASS", "FAIL")):
            break
        print(line)
sys.exit(proc.returncode)

"""Run the acceptance criteria and print one PASS/FAIL line per criterion.

Usage: python3 scripts/run_acceptance.py
"""
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(ROOT / "tests" / "test_acceptance.py")], capture_output=True, text=True, cwd=ROOT)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith("criterion ")]
    seen = {}
    for ln in lines:
        seen.setdefault(ln.split(":")[0], ln)
    for ln in sorted(seen.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
        print(ln)
    if proc.returncode:
        print(proc.stdout[-2000:], file=sys.stderr)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())

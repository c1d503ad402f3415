"""Print finite-n pressures and the pressure curve for the shipped example configurations.

Usage: python3 scripts/pressure_curves.py [config.json ...]
"""
import sys
from pathlib import Path

import numpy as np

from randpress import fiber_pressure, parse_config, pressure_curve

ROOT = Path(__file__).resolve().parent.parent


def show(path):
    cfg = parse_config(path.read_text())
    print(f"== {path.name}")
    e = fiber_pressure(cfg.system, cfg.potential, cfg.estimator)
    for n, v in zip(e.xs, e.averaged):
        print(f"  n={int(n):4d}  (1/n) log Z_n = {v:.10f}")
    print(f"  point estimate ({e.diagnostics['extrapolation']}): {e.point:.10f}, spread {e.spread:.2e}")
    if cfg.scaling is not None:
        betas = np.linspace(0.0, 1.0, 11)
        c = pressure_curve(cfg.system, cfg.potential, cfg.scaling, betas, cfg.estimator)
        print(f"  curve at n={c.n}:")
        for b, v in c:
            print(f"    beta={b:.2f}  {v:+.10f}")


def main(argv):
    paths = [Path(a) for a in argv] or sorted((ROOT / "configs").glob("*.json"))
    for p in paths:
        cfg = parse_config(p.read_text())
        if cfg.potential is not None and cfg.command.name in ("pressure", "solve", "induced"):
            show(p)


if __name__ == "__main__":
    main(sys.argv[1:])

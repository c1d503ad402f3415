"""Recompute the reference values used by the tests from scratch.

Usage: python3 scripts/oracles.py
"""
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar


def bernoulli_objective(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p) + (2 * p - 1) ** 2


def main():
    p = np.arange(1, 10000) / 10000
    grid = -p * np.log(p) - (1 - p) * np.log(1 - p) + (2 * p - 1) ** 2
    i = int(np.argmax(grid))
    res = minimize_scalar(lambda q: -bernoulli_objective(q), bounds=(0.9, 0.9999), method="bounded",
                          options={"xatol": 1e-14})
    print(f"square nonlinearity, grid 1e-4      : {grid[i]:.13f} at p = {p[i]:.4f}")
    print(f"square nonlinearity, continuous max : {-res.fun:.13f} at p = {res.x:.8f}")
    x = brentq(lambda x: 1 - x - x ** 3, 0.0, 1.0, xtol=1e-15)
    print(f"golden mean with clock (1, 2)       : {-math.log(x):.16f}")
    print(f"one-step (0.3, -0.5) closed form    : {math.log(math.exp(0.3) + math.exp(-0.5)):.13f}")
    A0, A1 = np.ones((2, 2)), np.array([[1.0, 1.0], [1.0, 0.0]])
    rho = max(abs(np.linalg.eigvals(A0 @ A1)))
    print(f"periodic full/golden, log(rho)/2    : {0.5 * math.log(rho):.13f} (rho = {rho:.12g})")
    tail = math.exp(-3) / (1 - math.exp(-1))
    print(f"tail sum, sum_(n>=3) e^-n           : {tail:.13f}")


if __name__ == "__main__":
    main()

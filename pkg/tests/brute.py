"""Independent brute-force oracles: enumerate every word over the alphabet and filter."""
import math

import numpy as np


def all_words(k, L):
    return np.indices((k,) * L).reshape(L, -1).T


def admissible(sft, traj, L):
    W = all_words(sft.k, L)
    ok = np.ones(len(W), dtype=bool)
    for i in range(L - 1):
        ok &= sft.matrices[traj[i] % len(sft.matrices), W[:, i], W[:, i + 1]] == 1
    return W[ok]


def sums(pot, traj, W, n):
    S, k, r = pot.tables.shape[0], pot.k, pot.memory
    out = np.zeros(len(W))
    for i in range(n):
        idx = np.zeros(len(W), dtype=np.int64)
        for j in range(r):
            idx = idx * k + W[:, i + j]
        out += pot.tables[traj[i] % S, idx]
    return out


def depth(m, r, n):
    return n + max(m, r) - 1


def linear(sft, traj, pot, n, m=1):
    W = admissible(sft, traj, depth(m, pot.memory, n))
    return float(np.sum(np.exp(sums(pot, traj, W, n))))


def nonlinear(sft, traj, comps, F, n, m=1):
    r = max(c.memory for c in comps)
    W = admissible(sft, traj, depth(m, r, n))
    X = np.stack([sums(c, traj, W, n) for c in comps], axis=1)
    return float(np.sum(np.exp(n * F(X / n))))


def induced(sft, traj, pot, psi, T, m=1):
    """Qualifying depth-D prefixes for every time class; returns (value, {n: count})."""
    r = max(pot.memory, psi.memory)
    total, classes = 0.0, {}
    for n in range(1, int(math.floor(T / psi.inf)) + 2):
        D = depth(m, r, n)
        W = admissible(sft, traj, max(D, n + psi.memory))
        s_n = sums(psi, traj, W, n)
        s_n1 = sums(psi, traj, W, n + 1)
        Q = W[(s_n <= T) & (s_n1 > T)][:, :D]
        if len(Q):
            Q = np.unique(Q, axis=0)
            classes[n] = len(Q)
            total += float(np.sum(np.exp(sums(pot, traj, Q, n))))
    return total, classes


def tail(sft, traj, pot, psi, beta, T, N_max, m=1):
    r = max(pot.memory, psi.memory)
    total = 0.0
    for n in range(1, N_max + 1):
        W = admissible(sft, traj, depth(m, r, n))
        s = sums(psi, traj, W, n)
        sel = s > T
        total += float(np.sum(np.exp(sums(pot, traj, W[sel], n) - beta * s[sel])))
    return total

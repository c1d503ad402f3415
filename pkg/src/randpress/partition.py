"""Exact partition functions of a random SFT along one base trajectory.

Every sum runs over cylinders of depth ``separation_depth(m, r)``: one
representative per cylinder is simultaneously a maximal separated set and a
minimal spanning set at ``epsilon = 2**-m``, so the separated and spanning
versions of each partition function are the same number.

Enumeration is organised as a layered walk over words.  A layer for orbit
length ``n`` holds every admissible word of length ``n + r - 1`` collapsed to
rows of identical (last ``r - 1`` letters, Birkhoff sums) together with a
multiplicity.  Collapsing only merges rows whose sums are bitwise equal, so no
value is ever rounded; it just keeps structured instances (integer-valued
potentials, constant clocks) cheap at large ``n``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import EnumerationLimit, InsufficientTrajectory, InvalidArgument
from .model import (
    BaseTrajectory,
    Nonlinearity,
    Potential,
    RandomSFT,
    ScalingPotential,
    VectorPotential,
    admissible_words,
    as_vector,
    birkhoff_sum,
    separation_depth,
)

MAX_ROWS = 1 << 22
_OVERFLOW = 700.0


@dataclass
class Layer:
    n: int
    tail: np.ndarray  # code of the last max(r - 1, 1) letters
    sums: np.ndarray  # (rows, components) Birkhoff sums S_n
    mult: np.ndarray  # number of words collapsed into each row
    k: int
    memory: int

    @property
    def last(self):
        return self.tail % self.k

    @property
    def rows(self):
        return len(self.tail)


def _tables(sft: RandomSFT, potentials: Sequence[Potential]):
    if not potentials:
        raise InvalidArgument("need at least one potential")
    if any(p.k != sft.k for p in potentials):
        raise InvalidArgument("potential alphabet does not match the SFT")
    r = max(p.memory for p in potentials)
    S = sft.base_symbols
    tabs = np.stack([p.lift(r).with_base_symbols(S).tables for p in potentials], axis=-1)
    return r, tabs


def _need(traj, idx):
    if idx >= len(traj):
        raise InsufficientTrajectory(
            f"trajectory of length {len(traj)} does not reach index {idx}")


def _merge(tail, sums, mult):
    key = np.concatenate([tail[:, None], (sums + 0.0).view(np.int64)], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    mult = np.bincount(inv.reshape(-1), weights=mult, minlength=len(uniq))
    return uniq[:, 0].copy(), np.ascontiguousarray(uniq[:, 1:]).view(np.float64), mult


def iter_layers(sft: RandomSFT, traj: BaseTrajectory, potentials: Sequence[Potential],
                n_max: int, max_rows: int = MAX_ROWS) -> Iterator[Layer]:
    """Yield the layers ``n = 1, ..., n_max`` for the given potential components."""
    r, tabs = _tables(sft, potentials)
    k = sft.k
    A = sft.matrices
    w = max(r - 1, 1)
    _need(traj, w - 1)
    words = np.array(list(itertools.product(range(k), repeat=w)), dtype=np.int64)
    ok = np.ones(len(words), dtype=bool)
    for i in range(w - 1):
        ok &= A[traj[i], words[:, i], words[:, i + 1]] == 1
    words = words[ok]
    tail = words @ (k ** np.arange(w - 1, -1, -1))
    mult = np.ones(len(tail))
    if r == 1:
        sums = tabs[traj[0], tail].astype(float)
        n = 1
        tail, sums, mult = _merge(tail, sums, mult)
        yield Layer(1, tail, sums, mult, k, r)
    else:
        sums = np.zeros((len(tail), tabs.shape[-1]))
        n = 0
    low = k ** (r - 1)
    while n < n_max:
        ell = n + r - 1
        _need(traj, max(ell - 1, n))
        allowed = A[traj[ell - 1]][tail % k]
        rows, c = np.nonzero(allowed)
        if len(rows) > max_rows:
            raise EnumerationLimit(
                f"{len(rows)} cylinder rows at n={n + 1} exceed the limit {max_rows}")
        if r == 1:
            window = c.astype(np.int64)
            new_tail = window
        else:
            window = tail[rows] * k + c
            new_tail = window % low
        sums = sums[rows] + tabs[traj[n], window]
        tail, sums, mult = _merge(new_tail, sums, mult[rows])
        n += 1
        yield Layer(n, tail, sums, mult, k, r)


def collect_layers(sft, traj, potentials, ns: Iterable[int], max_rows: int = MAX_ROWS) -> dict:
    """Layers for each requested ``n`` from a single walk."""
    wanted = sorted(set(int(n) for n in ns))
    if not wanted:
        return {}
    if wanted[0] < 1:
        raise InvalidArgument("orbit length n must be >= 1")
    out = {}
    for layer in iter_layers(sft, traj, potentials, wanted[-1], max_rows):
        if layer.n in wanted:
            out[layer.n] = layer
    return out


def extension_counts(sft: RandomSFT, traj: BaseTrajectory, index: int, extra: int) -> np.ndarray:
    """Number of admissible ways to append ``extra`` letters after a letter at ``index``."""
    v = np.ones(sft.k)
    if extra <= 0:
        return v
    _need(traj, index + extra - 1)
    for j in range(index + extra - 1, index - 1, -1):
        v = sft.matrices[traj[j]] @ v
    return v


def log_sum_exp(x, c):
    """``log(sum(c * exp(x)))``, summed directly when no overflow is possible."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    keep = c > 0
    x, c = x[keep], c[keep]
    if len(x) == 0:
        return -math.inf
    hi = float(np.max(x))
    if hi < _OVERFLOW and float(np.min(x)) > -_OVERFLOW:
        return math.log(float(np.sum(c * np.exp(x))))
    return hi + math.log(float(np.sum(c * np.exp(x - hi))))


def sum_exp(x, c):
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if len(x) == 0:
        return 0.0
    if float(np.max(x)) < _OVERFLOW:
        return float(np.sum(c * np.exp(x)))
    return math.exp(log_sum_exp(x, c))


# ---------------------------------------------------------------------------
# exponents and per-layer weights
# ---------------------------------------------------------------------------


def _depth_factor(layer: Layer, sft, traj, m):
    extra = max(m - layer.memory, 0)
    if extra == 0:
        return layer.mult
    ext = extension_counts(sft, traj, layer.n + layer.memory - 2, extra)
    return layer.mult * ext[layer.last]


def exponent(layer: Layer, F: Nonlinearity | None = None, d: int = 1,
             beta: float = 0.0, clock: int | None = None):
    """Exponent of each row: ``S_n phi`` or ``n F(S_n Phi / n)``, minus ``beta S_n psi``."""
    if F is None:
        x = layer.sums[:, 0]
    else:
        x = F.scaled(layer.sums[:, :d], layer.n)
    if beta != 0.0:
        x = x - beta * layer.sums[:, clock]
    return x


def _check_arity(Phi: VectorPotential, F: Nonlinearity):
    if F.d != Phi.d:
        raise InvalidArgument(f"nonlinearity arity {F.d} does not match {Phi.d} potential components")


# ---------------------------------------------------------------------------
# linear and nonlinear sums at fixed n
# ---------------------------------------------------------------------------


def log_linear_partition(sft, traj, potential: Potential, n: int, m: int = 1) -> float:
    layer = collect_layers(sft, traj, [potential], [n])[n]
    return log_sum_exp(layer.sums[:, 0], _depth_factor(layer, sft, traj, m))


def linear_partition(sft, traj, potential: Potential, n: int, m: int = 1) -> float:
    """Weighted cylinder sum ``sum exp(S_n phi_omega)`` at depth ``separation_depth(m, r)``."""
    layer = collect_layers(sft, traj, [potential], [n])[n]
    return sum_exp(layer.sums[:, 0], _depth_factor(layer, sft, traj, m))


def _nonlinear_terms(sft, traj, Phi, F, n, m, scaling, beta):
    Phi = as_vector(Phi)
    _check_arity(Phi, F)
    comps = list(Phi.components) + ([scaling] if scaling is not None else [])
    layer = collect_layers(sft, traj, comps, [n])[n]
    x = exponent(layer, F, Phi.d, beta, Phi.d if scaling is not None else None)
    return x, _depth_factor(layer, sft, traj, m)


def log_nonlinear_partition(sft, traj, Phi, F: Nonlinearity, n: int, m: int = 1,
                            scaling: ScalingPotential | None = None, beta: float = 0.0) -> float:
    return log_sum_exp(*_nonlinear_terms(sft, traj, Phi, F, n, m, scaling, beta))


def nonlinear_partition(sft, traj, Phi, F: Nonlinearity, n: int, m: int = 1,
                        scaling: ScalingPotential | None = None, beta: float = 0.0) -> float:
    """``sum exp(n F(S_n Phi_omega / n) - beta S_n psi_omega)`` over depth-``m`` cylinders."""
    return sum_exp(*_nonlinear_terms(sft, traj, Phi, F, n, m, scaling, beta))


# ---------------------------------------------------------------------------
# transfer matrices
# ---------------------------------------------------------------------------


def _symbol_period(symbols, max_period=64):
    L = len(symbols)
    for p in range(1, min(max_period, L - 1) + 1):
        if np.array_equal(symbols[p:], symbols[:L - p]):
            return p
    return None


class _Scaled:
    """Matrix with a separate log scale, so long products neither overflow nor underflow."""

    def __init__(self, M, log_scale=0.0):
        top = float(np.max(M))
        self.M = M / top
        self.log_scale = log_scale + math.log(top)

    def __matmul__(self, other):
        return _Scaled(self.M @ other.M, self.log_scale + other.log_scale)

    def power(self, q):
        out, base = None, self
        while q:
            if q & 1:
                out = base if out is None else out @ base
            q >>= 1
            if q:
                base = base @ base
        return out


def log_transfer_partition(sft, traj, potential: Potential, n: int, m: int | None = None) -> float:
    """Same sum as :func:`log_linear_partition`, via products of weighted block matrices.

    States are admissible ``r``-blocks.  Step ``i`` moves the window from
    positions ``i-1 .. i+r-2`` to ``i .. i+r-1``; its matrix depends on the base
    symbols at ``i+r-2`` (transition) and ``i`` (weight) only.  On a periodic
    base sequence the product over one period is raised to a power by
    repeated squaring.
    """
    if n < 1:
        raise InvalidArgument("orbit length n must be >= 1")
    r = potential.memory
    m = r if m is None else m
    k = sft.k
    A = sft.matrices
    tab = potential.with_base_symbols(sft.base_symbols).tables
    _need(traj, max(n - 1, n + r - 3))
    words = np.array(list(itertools.product(range(k), repeat=r)), dtype=np.int64)
    ok = np.ones(len(words), dtype=bool)
    for t in range(r - 1):
        ok &= A[traj[t], words[:, t], words[:, t + 1]] == 1
    logv = np.where(ok, tab[traj[0]], -np.inf)
    scale = float(np.max(logv))
    v = np.exp(logv - scale)
    last = words[:, -1]
    if r == 1:
        shift_ok = np.ones((k, k), dtype=bool)
    else:
        shift_ok = np.all(words[:, None, 1:] == words[None, :, :-1], axis=2)
    cache = {}

    def step(i):
        key = (traj[i + r - 2], traj[i])
        if key not in cache:
            trans = A[key[0]][last[:, None], last[None, :]] * shift_ok
            cache[key] = trans * np.exp(tab[key[1]])[None, :]
        return cache[key]

    steps = n - 1
    syms = np.asarray(traj.symbols[:n + r - 1])
    p = _symbol_period(syms) if steps > 8 else None
    if p is not None and steps >= 4 * p:
        cycle = _Scaled(np.eye(len(words)))
        for i in range(1, p + 1):
            cycle = cycle @ _Scaled(step(i))
        q, rem = divmod(steps, p)
        prod = cycle.power(q)
        for i in range(1, rem + 1):
            prod = prod @ _Scaled(step(i))
        v = v @ prod.M
        scale += prod.log_scale
    else:
        for i in range(1, n):
            v = v @ step(i)
            top = float(np.max(v))
            v /= top
            scale += math.log(top)
    extra = max(m - r, 0)
    ext = extension_counts(sft, traj, n + r - 2, extra)
    return scale + math.log(float(np.sum(v * ext[last])))


def transfer_partition(sft, traj, potential: Potential, n: int, m: int | None = None) -> float:
    return math.exp(log_transfer_partition(sft, traj, potential, n, m))


# ---------------------------------------------------------------------------
# induced time classes
# ---------------------------------------------------------------------------


@dataclass
class InducedEntry:
    n: int
    cylinders: float  # qualifying cylinders at separation depth
    prefixes: int  # qualifying rows (collapsed n-prefix classes)
    words: tuple | None = None


@dataclass
class InducedTimeData:
    T: float
    entries: list
    depth: str = "n + max(m, r) - 1"

    @property
    def times(self):
        return [e.n for e in self.entries]


def max_class(T, scaling: ScalingPotential):
    """Largest orbit length that can belong to the induced time set at time ``T``."""
    return int(math.floor(T / scaling.inf)) + 1


def _qualifying(layer: Layer, sft, traj, scaling_tab, clock, T, m):
    """Per-row weight factor for membership in ``X_{omega, n}`` at depth ``m``.

    Membership needs the ``(n+1)``-th clock term, which reads one letter past the
    ``n``-window; a row qualifies if some admissible next letter pushes the clock
    beyond ``T``.
    """
    n, r, k = layer.n, layer.memory, layer.k
    s_psi = layer.sums[:, clock]
    _need(traj, max(n + r - 2, n))
    allowed = sft.matrices[traj[n + r - 2]][layer.last]  # (rows, k)
    if r == 1:
        window = np.broadcast_to(np.arange(k), allowed.shape)
    else:
        window = (layer.tail % k ** (r - 1))[:, None] * k + np.arange(k)
    nxt = s_psi[:, None] + scaling_tab[traj[n]][window]
    cond = (allowed == 1) & (s_psi[:, None] <= T) & (nxt > T)
    if m <= r:
        return layer.mult * cond.any(axis=1)
    ext = extension_counts(sft, traj, n + r - 1, m - r - 1)
    return layer.mult * (cond @ ext)


def _induced_layers(sft, traj, comps, scaling, T):
    if T <= 0:
        raise InvalidArgument("T must be positive")
    n_hi = max_class(T, scaling)
    r, _ = _tables(sft, comps + [scaling])
    tab = scaling.lift(r).with_base_symbols(sft.base_symbols).tables
    return collect_layers(sft, traj, comps + [scaling], range(1, n_hi + 1)), tab


def induced_time_set(sft, traj, scaling: ScalingPotential, T: float, m: int = 1,
                     collect_words: bool = False) -> InducedTimeData:
    """Induced time classes ``S_{omega,T}`` and the qualifying cylinders of each ``X_{omega,n}``.

    With ``collect_words`` the qualifying cylinder words are listed by brute-force
    enumeration (small cases only).
    """
    layers, tab = _induced_layers(sft, traj, [], scaling, T)
    entries = []
    for n, layer in sorted(layers.items()):
        q = _qualifying(layer, sft, traj, tab, 0, T, m)
        if np.any(q > 0):
            words = _qualifying_words(sft, traj, scaling, T, n, m) if collect_words else None
            entries.append(InducedEntry(n, float(q.sum()), int(np.count_nonzero(q)), words))
    return InducedTimeData(T, entries, f"n + {separation_depth(m, scaling.memory, 1) - 1}")


def _qualifying_words(sft, traj, scaling, T, n, m):
    r = scaling.memory
    D = separation_depth(m, r, n)
    L = max(D, n + r)
    found = set()
    for w in admissible_words(sft, traj, L):
        if birkhoff_sum(scaling, traj, w, n) <= T < birkhoff_sum(scaling, traj, w, n + 1):
            found.add(w[:D])
    return tuple(sorted(found))


def _induced_terms(sft, traj, potential, scaling, T, m, F, layers=None, tab=None):
    Phi = as_vector(potential)
    if F is not None:
        _check_arity(Phi, F)
    if layers is None:
        layers, tab = _induced_layers(sft, traj, list(Phi.components), scaling, T)
    xs, ws = [np.empty(0)], [np.empty(0)]
    for n in range(1, max_class(T, scaling) + 1):
        layer = layers[n]
        q = _qualifying(layer, sft, traj, tab, Phi.d, T, m)
        if np.any(q > 0):
            xs.append(exponent(layer, F, Phi.d))
            ws.append(q)
    return np.concatenate(xs), np.concatenate(ws)


def induced_log_partitions(sft, traj, potential, scaling, Ts: Sequence[float], m: int = 1,
                           F: Nonlinearity | None = None) -> np.ndarray:
    """Log induced partition values for several ``T`` from a single layer walk."""
    Phi = as_vector(potential)
    if not len(Ts):
        return np.empty(0)
    layers, tab = _induced_layers(sft, traj, list(Phi.components), scaling, max(Ts))
    return np.array([log_sum_exp(*_induced_terms(sft, traj, Phi, scaling, T, m, F, layers, tab))
                     for T in Ts])


def log_induced_partition(sft, traj, potential, scaling, T, m=1, F=None) -> float:
    """Log of the induced partition function; ``-inf`` when no time class is populated."""
    return log_sum_exp(*_induced_terms(sft, traj, potential, scaling, T, m, F))


def induced_partition(sft, traj, potential: Potential, scaling: ScalingPotential,
                      T: float, m: int = 1) -> float:
    """``sum_{n in S_{omega,T}} sum_{cylinders meeting X_{omega,n}} exp(S_n phi)``; 0 if empty."""
    return sum_exp(*_induced_terms(sft, traj, potential, scaling, T, m, None))


def nonlinear_induced_partition(sft, traj, Phi, scaling, F: Nonlinearity, T: float, m: int = 1) -> float:
    """``sum_{n in S_{omega,T}} sum exp(n F(S_n Phi / n))`` over qualifying cylinders."""
    return sum_exp(*_induced_terms(sft, traj, Phi, scaling, T, m, F))


# ---------------------------------------------------------------------------
# tail sums (critical exponent)
# ---------------------------------------------------------------------------


@dataclass
class TailTimeData:
    T: float
    beta: float
    n_min: int
    n_max: int
    counts: dict = field(default_factory=dict)  # n -> qualifying cylinder count
    log_value: float = -math.inf
    truncated: bool = False

    @property
    def value(self):
        return math.exp(self.log_value) if self.log_value > -math.inf else 0.0


def tail_partition(sft, traj, potential, scaling: ScalingPotential, beta: float, T: float,
                   N_max: int, m: int = 1, F: Nonlinearity | None = None) -> TailTimeData:
    """Truncated ``R_{psi,T}``: cylinders of ``Y_{omega,n} = {S_n psi > T}``, ``n <= N_max``.

    Weighted by ``exp(S_n phi - beta S_n psi)`` (or ``n F(S_n Phi / n)`` in place of
    ``S_n phi``).  ``truncated`` flags a last layer carrying more than ``1e-9`` of
    the mass.
    """
    if T <= 0:
        raise InvalidArgument("T must be positive")
    n_min = int(math.floor(T / scaling.sup))
    if N_max < n_min:
        raise InvalidArgument(f"N_max={N_max} is below floor(T / sup psi) = {n_min}")
    Phi = as_vector(potential)
    if F is not None:
        _check_arity(Phi, F)
    d = Phi.d
    layers = collect_layers(sft, traj, list(Phi.components) + [scaling], range(1, N_max + 1)) \
        if N_max >= 1 else {}
    data = TailTimeData(T, beta, max(n_min, 1), N_max)
    logs = []
    for n, layer in sorted(layers.items()):
        sel = layer.sums[:, d] > T
        if not np.any(sel):
            continue
        w = _depth_factor(layer, sft, traj, m) * sel
        data.counts[n] = float(w.sum())
        logs.append((n, log_sum_exp(exponent(layer, F, d, beta, d), w)))
    if logs:
        vals = np.array([v for _, v in logs])
        data.log_value = log_sum_exp(vals, np.ones(len(vals)))
        last_n, last_v = logs[-1]
        data.truncated = last_n == N_max and last_v - data.log_value > math.log(1e-9)
    return data


def tail_log_table(sft, traj, potential, scaling: ScalingPotential, betas: Sequence[float],
                   Ts: Sequence[float], caps: Sequence[int], m: int = 1,
                   F: Nonlinearity | None = None) -> np.ndarray:
    """``log R_T(beta)`` truncated at ``caps[j]`` for every ``(beta, T_j)``, sharing one walk.

    Returns an array of shape ``(len(betas), len(Ts))``.
    """
    Phi = as_vector(potential)
    if F is not None:
        _check_arity(Phi, F)
    d = Phi.d
    for T, cap in zip(Ts, caps):
        if T <= 0:
            raise InvalidArgument("T must be positive")
        if cap < math.floor(T / scaling.sup):
            raise InvalidArgument(f"N_max={cap} is below floor(T / sup psi) for T={T}")
    layers = collect_layers(sft, traj, list(Phi.components) + [scaling], range(1, max(caps) + 1))
    out = np.full((len(betas), len(Ts)), -math.inf)
    for n, layer in sorted(layers.items()):
        fac = _depth_factor(layer, sft, traj, m)
        for i, beta in enumerate(betas):
            x = exponent(layer, F, d, beta, d)
            for j, (T, cap) in enumerate(zip(Ts, caps)):
                if n > cap:
                    continue
                v = log_sum_exp(x, fac * (layer.sums[:, d] > T))
                if v > -math.inf:
                    out[i, j] = np.logaddexp(out[i, j], v)
    return out


def trajectory_length(n_max: int, r: int, m: int) -> int:
    """Trajectory length sufficient for every sum up to orbit length ``n_max``."""
    return n_max + max(m, r) + 1

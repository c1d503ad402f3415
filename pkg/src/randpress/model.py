"""Random subshifts of finite type over symbolic base systems.

The fiber space is the one-sided symbolic space over ``k`` letters with the
metric ``d(x, y) = 2**-j`` where ``j`` is the first index at which ``x`` and
``y`` differ.  The fiber map at base state ``omega`` is the left shift, and the
transition allowed between coordinates ``i`` and ``i + 1`` is governed by the
0/1 matrix attached to the base symbol ``s(theta^i omega)``.

Potentials are locally constant: a potential of memory ``r`` reads the base
symbol at time ``i`` and the fiber window ``x[i:i + r]``.  Tables are stored
as arrays of shape ``(base_symbols, k**r)`` with windows encoded in base ``k``,
first letter most significant.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InsufficientTrajectory, InsufficientWord, InvalidArgument

BASE_KINDS = ("trivial", "periodic", "iid")


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Base system
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BaseSystem:
    """Driving system: a one-point base, a rotation on a finite cycle, or an i.i.d. shift."""

    kind: str
    symbols: int = 1
    cycle: tuple = ()
    weights: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise InvalidArgument(f"unknown base kind {self.kind!r}")
        if self.symbols < 1:
            raise InvalidArgument("base symbol count must be >= 1")
        if self.kind == "trivial" and self.symbols != 1:
            raise InvalidArgument("trivial base has exactly one symbol")
        if self.kind == "periodic":
            if len(self.cycle) < 1:
                raise InvalidArgument("periodic base needs a nonempty cycle")
            if any(not (0 <= int(c) < self.symbols) for c in self.cycle):
                raise InvalidArgument("cycle entries must lie in [0, symbols)")
            object.__setattr__(self, "cycle", tuple(int(c) for c in self.cycle))
        if self.kind == "iid":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.symbols,):
                raise InvalidArgument("iid weights must have one entry per base symbol")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidArgument("iid weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def trivial(cls):
        return cls("trivial")

    @classmethod
    def periodic(cls, cycle, symbols=None):
        cycle = tuple(int(c) for c in cycle)
        return cls("periodic", symbols=symbols or max(cycle) + 1, cycle=cycle)

    @classmethod
    def iid(cls, weights, seed=0):
        weights = tuple(float(w) for w in weights)
        return cls("iid", symbols=len(weights), weights=weights, seed=int(seed))

    @property
    def period(self):
        """Cycle length for deterministic bases, ``None`` for i.i.d."""
        if self.kind == "trivial":
            return 1
        if self.kind == "periodic":
            return len(self.cycle)
        return None

    @property
    def deterministic(self):
        return self.kind != "iid"

    def symbol_weights(self):
        """Stationary frequency of each base symbol under the base measure."""
        if self.kind == "trivial":
            return np.ones(1)
        if self.kind == "periodic":
            return np.bincount(self.cycle, minlength=self.symbols) / len(self.cycle)
        return np.asarray(self.weights)

    def successor_symbol(self, s):
        """Base symbol following ``s``; only defined when it is a function of ``s``."""
        if self.kind == "trivial":
            return 0
        if self.kind == "periodic":
            nxt = {self.cycle[(i + 1) % len(self.cycle)]
                   for i, c in enumerate(self.cycle) if c == s}
            if len(nxt) == 1:
                return nxt.pop()
        raise InvalidArgument(
            "successor of a base symbol is not determined by the symbol for this base")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "periodic":
            d.update(symbols=self.symbols, cycle=list(self.cycle))
        elif self.kind == "iid":
            d.update(symbols=self.symbols, weights=list(self.weights), seed=self.seed)
        return d


@dataclass(frozen=True, eq=False)
class BaseTrajectory:
    symbols: np.ndarray
    provenance: tuple

    def __len__(self):
        return len(self.symbols)

    def __getitem__(self, i):
        return int(self.symbols[i])


def base_trajectory(base: BaseSystem, length: int, start_or_seed: int | None = None) -> BaseTrajectory:
    """Realize ``length`` base symbols ``s(theta^i omega)``.

    ``start_or_seed`` is the cycle start index for periodic bases and the RNG
    seed for i.i.d. bases (defaulting to ``base.seed``); it is ignored for the
    trivial base.
    """
    if length < 1:
        raise InvalidArgument("trajectory length must be >= 1")
    if base.kind == "trivial":
        syms = np.zeros(length, dtype=np.int64)
        prov = ("trivial", 0)
    elif base.kind == "periodic":
        start = int(start_or_seed or 0)
        cyc = np.asarray(base.cycle, dtype=np.int64)
        syms = cyc[(start + np.arange(length)) % len(cyc)]
        prov = ("periodic", start)
    else:
        seed = base.seed if start_or_seed is None else int(start_or_seed)
        rng = np.random.default_rng(seed)
        syms = rng.choice(base.symbols, size=length, p=np.asarray(base.weights)).astype(np.int64)
        prov = ("iid", seed)
    return BaseTrajectory(_frozen(syms, np.int64), prov)


# ---------------------------------------------------------------------------
# Fiber dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RandomSFT:
    """Alphabet size ``k`` and one 0/1 transition matrix per base symbol."""

    k: int
    matrices: np.ndarray  # (base_symbols, k, k)

    def __post_init__(self):
        A = np.asarray(self.matrices)
        if A.ndim == 2:
            A = A[None]
        if self.k < 2:
            raise InvalidArgument("alphabet size must be >= 2")
        if A.ndim != 3 or A.shape[1:] != (self.k, self.k):
            raise InvalidArgument(f"transition matrices must have shape (S, {self.k}, {self.k})")
        if not np.all((A == 0) | (A == 1)):
            raise InvalidArgument("transition matrix entries must be 0 or 1")
        for s, M in enumerate(A):
            bad = np.where(M.sum(axis=1) == 0)[0]
            if len(bad):
                raise InvalidArgument(f"matrix for base symbol {s} has an empty row {int(bad[0])}")
        object.__setattr__(self, "matrices", _frozen(A, np.int64))

    @classmethod
    def full_shift(cls, k=2, base_symbols=1):
        return cls(k, np.ones((base_symbols, k, k), dtype=np.int64))

    @classmethod
    def golden_mean(cls, base_symbols=1):
        return cls(2, np.array([[[1, 1], [1, 0]]] * base_symbols))

    @property
    def base_symbols(self):
        return self.matrices.shape[0]

    def matrix(self, s):
        return self.matrices[s]

    def to_dict(self):
        return {"alphabet": self.k, "matrices": self.matrices.tolist()}


@dataclass(frozen=True, eq=False)
class Potential:
    """Locally constant potential ``phi(s, x[i:i+memory])``."""

    tables: np.ndarray  # (base_symbols, k**memory)
    k: int
    memory: int = 1

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=float)
        if t.ndim == 1:
            t = t[None]
        if self.memory < 1:
            raise InvalidArgument("memory must be >= 1")
        if t.ndim != 2 or t.shape[1] != self.k ** self.memory:
            raise InvalidArgument(
                f"potential tables must have k**memory = {self.k ** self.memory} columns")
        if not np.all(np.isfinite(t)):
            raise InvalidArgument("potential table values must be finite")
        # normalise -0.0 so bit patterns are canonical
        object.__setattr__(self, "tables", _frozen(t + 0.0))
        self._validate()

    def _validate(self):
        pass

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c, k=2, base_symbols=1, memory=1):
        return cls(np.full((base_symbols, k ** memory), float(c)), k, memory)

    @classmethod
    def one_step(cls, values, base_symbols=1):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = np.tile(v, (base_symbols, 1))
        return cls(v, v.shape[1], 1)

    @classmethod
    def from_function(cls, fn, k, memory=1, base_symbols=1):
        """Tabulate ``fn(s, word)`` over every base symbol and window."""
        words = list(itertools.product(range(k), repeat=memory))
        t = [[fn(s, w) for w in words] for s in range(base_symbols)]
        return cls(np.array(t, dtype=float), k, memory)

    # structure ----------------------------------------------------------
    @property
    def base_symbols(self):
        return self.tables.shape[0]

    def value(self, s, word):
        return float(self.tables[s, encode_word(word, self.k)])

    def lift(self, memory):
        """Same function, read through a longer window (extra letters ignored)."""
        if memory == self.memory:
            return self
        if memory < self.memory:
            raise InvalidArgument("cannot lower the memory of a potential")
        idx = np.arange(self.k ** memory) // self.k ** (memory - self.memory)
        return type(self)(self.tables[:, idx], self.k, memory)

    def _aligned(self, other):
        if self.k != other.k:
            raise InvalidArgument("potentials live on different alphabets")
        r = max(self.memory, other.memory)
        a, b = self.lift(r), other.lift(r)
        ta, tb = a.tables, b.tables
        if ta.shape[0] != tb.shape[0]:
            if ta.shape[0] == 1:
                ta = np.repeat(ta, tb.shape[0], axis=0)
            elif tb.shape[0] == 1:
                tb = np.repeat(tb, ta.shape[0], axis=0)
            else:
                raise InvalidArgument("potentials have different base symbol counts")
        return ta, tb, r

    def __add__(self, other):
        if isinstance(other, Potential):
            ta, tb, r = self._aligned(other)
            return Potential(ta + tb, self.k, r)
        return Potential(self.tables + float(other), self.k, self.memory)

    __radd__ = __add__

    def __neg__(self):
        return Potential(-self.tables, self.k, self.memory)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return Potential(self.tables * float(c), self.k, self.memory)

    __rmul__ = __mul__

    def with_base_symbols(self, count):
        if self.base_symbols == count:
            return self
        if self.base_symbols != 1:
            raise InvalidArgument("potential base-symbol count does not match the system")
        return type(self)(np.repeat(self.tables, count, axis=0), self.k, self.memory)

    # norms --------------------------------------------------------------
    def sup_norm(self):
        return float(np.max(np.abs(self.tables)))

    def l1_norm(self, base: BaseSystem):
        """``integral over the base of sup_x |phi_omega(x)|``."""
        row_max = np.max(np.abs(self.tables), axis=1)
        w = base.symbol_weights()
        if len(row_max) == 1:
            return float(row_max[0])
        return float(np.dot(w, row_max))

    def shift_ahead(self, base: BaseSystem):
        """The potential ``phi o Theta`` with memory ``memory + 1``.

        Reads the table of the successor base symbol on the window shifted by one
        letter.  Only available when the successor is a function of the symbol.
        """
        k, r = self.k, self.memory
        S = self.base_symbols
        idx = np.arange(k ** (r + 1)) % k ** r
        t = np.empty((S, k ** (r + 1)))
        for s in range(S):
            t[s] = self.tables[base.successor_symbol(s) if S > 1 else 0, idx]
        return Potential(t, k, r + 1)

    def to_dict(self):
        return {"memory": self.memory, "tables": self.tables.tolist()}


@dataclass(frozen=True, eq=False)
class ScalingPotential(Potential):
    """Strictly positive potential used as a reparametrised clock."""

    def _validate(self):
        if np.min(self.tables) <= 0:
            raise InvalidArgument("scaling must be strictly positive")

    @classmethod
    def from_potential(cls, p: Potential):
        return cls(p.tables, p.k, p.memory)

    @property
    def inf(self):
        return float(np.min(self.tables))

    @property
    def sup(self):
        return float(np.max(self.tables))


@dataclass(frozen=True, eq=False)
class VectorPotential:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise InvalidArgument("a vector potential needs at least one component")
        if len({c.k for c in comps}) != 1:
            raise InvalidArgument("components must share one alphabet")
        r = max(c.memory for c in comps)
        S = max(c.base_symbols for c in comps)
        comps = tuple(c.lift(r).with_base_symbols(S) for c in comps)
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, *components):
        return cls(tuple(components))

    @property
    def d(self):
        return len(self.components)

    @property
    def memory(self):
        return self.components[0].memory

    @property
    def k(self):
        return self.components[0].k

    def to_dict(self):
        return [c.to_dict() for c in self.components]


def as_vector(phi) -> VectorPotential:
    return phi if isinstance(phi, VectorPotential) else VectorPotential((phi,))


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

NONLINEAR_FORMS = ("identity", "constant", "affine", "square", "linear", "quadratic", "max")


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Continuous map ``F: R^d -> R`` entering as ``n * F(S_n Phi / n)``."""

    form: str
    d: int = 1
    c: tuple = ()
    a: float = 1.0
    b: float = 0.0
    Q: tuple = ()

    def __post_init__(self):
        if self.form not in NONLINEAR_FORMS:
            raise InvalidArgument(f"unknown nonlinearity {self.form!r}")
        if self.d < 1:
            raise InvalidArgument("arity must be >= 1")
        if self.form in ("identity", "affine", "square") and self.d != 1:
            raise InvalidArgument(f"{self.form} nonlinearity has arity 1")
        if self.form == "constant" and len(self.c) != 1:
            raise InvalidArgument("constant nonlinearity takes a single value")
        if self.form == "linear" and len(self.c) != self.d:
            raise InvalidArgument("linear nonlinearity needs a coefficient per coordinate")
        if self.form == "quadratic":
            Q = np.asarray(self.Q, dtype=float)
            if Q.shape != (self.d, self.d) or len(self.c) != self.d:
                raise InvalidArgument("quadratic nonlinearity needs a d x d matrix and a d-vector")
            Qs = 0.5 * (Q + Q.T)
            if np.min(np.linalg.eigvalsh(Qs)) < -1e-12:
                raise InvalidArgument("quadratic nonlinearity requires a positive semidefinite matrix")

    # every built-in form is convex
    @property
    def convex(self):
        return True

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def constant(cls, value, d=1):
        return cls("constant", d=d, c=(float(value),))

    @classmethod
    def affine(cls, a, b):
        return cls("affine", a=float(a), b=float(b))

    @classmethod
    def square(cls):
        return cls("square")

    @classmethod
    def linear(cls, coeffs):
        coeffs = tuple(float(x) for x in coeffs)
        return cls("linear", d=len(coeffs), c=coeffs)

    @classmethod
    def mean(cls, d):
        return cls.linear([1.0 / d] * d)

    @classmethod
    def quadratic(cls, Q, c):
        Q = tuple(tuple(float(x) for x in row) for row in Q)
        return cls("quadratic", d=len(Q), Q=Q, c=tuple(float(x) for x in c))

    @classmethod
    def max_coordinate(cls, d):
        return cls("max", d=d)

    def __call__(self, t):
        """Evaluate on points of shape ``(..., d)`` (or scalars when ``d == 1``)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        if scalar:
            t = t[None]
        if self.d == 1 and (t.ndim == 1 or t.shape[-1] != 1):
            t = t[..., None]
        if t.shape[-1] != self.d:
            raise InvalidArgument(f"expected points of dimension {self.d}")
        f = self.form
        if f == "identity":
            out = t[..., 0]
        elif f == "constant":
            out = np.full(t.shape[:-1], self.c[0])
        elif f == "affine":
            out = self.a * t[..., 0] + self.b
        elif f == "square":
            out = t[..., 0] ** 2
        elif f == "linear":
            out = t @ np.asarray(self.c)
        elif f == "quadratic":
            Q = np.asarray(self.Q)
            out = np.einsum("...i,ij,...j->...", t, Q, t) + t @ np.asarray(self.c)
        else:
            out = np.max(t, axis=-1)
        return float(out.reshape(-1)[0]) if scalar else out

    def scaled(self, sums, n):
        """``n * F(sums / n)`` for a ``(rows, d)`` array of Birkhoff sums.

        Forms that are positively homogeneous are evaluated on the sums directly,
        so the identity returns the linear exponent bit for bit.
        """
        sums = np.asarray(sums, dtype=float)
        f = self.form
        if f == "identity":
            return sums[:, 0]
        if f == "linear":
            return sums @ np.asarray(self.c)
        if f == "max":
            return np.max(sums, axis=1)
        if f == "constant":
            return np.full(sums.shape[0], n * self.c[0])
        if f == "affine":
            return self.a * sums[:, 0] + n * self.b
        return n * self(sums / n)

    def lipschitz(self, bound):
        """Lipschitz constant (sup-norm on the input) over the cube ``[-bound, bound]^d``."""
        f = self.form
        if f in ("identity", "max"):
            return 1.0
        if f == "constant":
            return 0.0
        if f == "affine":
            return abs(self.a)
        if f == "square":
            return 2.0 * bound
        if f == "linear":
            return float(np.sum(np.abs(self.c)))
        Q = np.asarray(self.Q)
        return float(np.sum(np.abs(Q + Q.T)) * bound + np.sum(np.abs(self.c)))

    def to_dict(self):
        d = {"form": self.form}
        if self.form in ("linear", "quadratic"):
            d["c"] = list(self.c)
        if self.form == "constant":
            d["c"] = self.c[0]
            d["d"] = self.d
        if self.form == "affine":
            d.update(a=self.a, b=self.b)
        if self.form == "quadratic":
            d["Q"] = [list(r) for r in self.Q]
        if self.form == "max":
            d["d"] = self.d
        return d


# ---------------------------------------------------------------------------
# Systems, words and sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RandomSystem:
    base: BaseSystem
    sft: RandomSFT
    abundance_of_ergodic_measures: bool = field(default=False)

    def __post_init__(self):
        if self.sft.base_symbols == 1 and self.base.symbols > 1:
            A = np.repeat(self.sft.matrices, self.base.symbols, axis=0)
            object.__setattr__(self, "sft", RandomSFT(self.sft.k, A))
        if self.sft.base_symbols != self.base.symbols:
            raise InvalidArgument("need one transition matrix per base symbol")

    @property
    def k(self):
        return self.sft.k

    def trajectory(self, length, start_or_seed=None):
        return base_trajectory(self.base, length, start_or_seed)

    def to_dict(self):
        return {"base": self.base.to_dict(), "sft": self.sft.to_dict()}


def encode_word(word, k):
    code = 0
    for a in word:
        code = code * k + int(a)
    return code


def _check_traj(traj, needed):
    if len(traj) < needed:
        raise InsufficientTrajectory(
            f"trajectory of length {len(traj)} is shorter than the required {needed}")


def admissible_words(sft: RandomSFT, traj: BaseTrajectory, n: int) -> Iterator[tuple]:
    """Yield every admissible fiber word of length ``n`` in lexicographic order."""
    if n > len(traj):
        raise InsufficientTrajectory(f"n={n} exceeds trajectory length {len(traj)}")
    if n < 1:
        return
    A = sft.matrices
    k = sft.k
    syms = traj.symbols

    def rec(prefix):
        i = len(prefix)
        if i == n:
            yield tuple(prefix)
            return
        row = A[syms[i - 1], prefix[-1]] if i else None
        for a in range(k):
            if row is None or row[a]:
                prefix.append(a)
                yield from rec(prefix)
                prefix.pop()

    yield from rec([])


def count_admissible(sft: RandomSFT, traj: BaseTrajectory, n: int) -> int:
    """Exact integer count of admissible words of length ``n``."""
    if n > len(traj):
        raise InsufficientTrajectory(f"n={n} exceeds trajectory length {len(traj)}")
    if n < 1:
        return 0
    v = [1] * sft.k
    A = sft.matrices.tolist()
    for i in range(n - 1):
        M = A[traj[i]]
        v = [sum(v[a] for a in range(sft.k) if M[a][b]) for b in range(sft.k)]
    return sum(v)


def is_admissible(sft, traj, word):
    return all(sft.matrices[traj[i], word[i], word[i + 1]] for i in range(len(word) - 1))


def birkhoff_sum(potential: Potential, traj: BaseTrajectory, word: Sequence[int], n: int) -> float:
    """``sum_{i<n} phi(traj[i], word[i:i+r])`` accumulated left to right."""
    r = potential.memory
    if len(word) < n + r - 1:
        raise InsufficientWord(f"word of length {len(word)} too short for n={n}, memory={r}")
    _check_traj(traj, n)
    k = potential.k
    t = potential.tables
    multi = t.shape[0] > 1
    s = 0.0
    for i in range(n):
        s += t[traj[i] if multi else 0, encode_word(word[i:i + r], k)]
    return float(s)


def separation_depth(m: int, r: int, n: int | None = None):
    """Cylinder length at which maximal separated and minimal spanning sets coincide.

    With ``epsilon = 2**-m`` two points are ``(omega, n, epsilon)``-separated
    exactly when they differ among the first ``n + m - 1`` coordinates; using
    ``max(m, r)`` also makes the ``n``-th Birkhoff sum constant per cylinder.
    Returns the depth for ``n`` if given, otherwise the map ``n -> depth``.
    """
    if m < 1 or r < 1:
        raise InvalidArgument("m and r must be >= 1")
    extra = max(m, r) - 1
    if n is None:
        return lambda n: n + extra
    return n + extra


def bowen_distance(x, y, n):
    """Bowen distance of order ``n`` for the first-difference metric on finite words."""
    j = next((i for i, (a, b) in enumerate(zip(x, y)) if a != b), None)
    if j is None:
        return 0.0
    if j < n - 1:
        return 1.0
    return 2.0 ** -(j - (n - 1))


def log_k(k):
    return math.log(k)

"""Random Markov measures, their entropy and integrals, and variational objectives.

A random Markov measure assigns a row-stochastic matrix ``Q_s`` to each base
symbol ``s``.  On a trivial or periodic base the fiber marginals ``p_j`` at
cycle position ``j`` satisfy ``p_{j+1} = p_j Q_{s_j}``, which pins them down
from the stationary vector of the cycle product.  Entropy and integrals are
then closed-form cycle averages.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidArgument
from .model import (
    BaseSystem,
    Nonlinearity,
    Potential,
    RandomSystem,
    ScalingPotential,
    as_vector,
)

FLAVORS = ("linear", "induced", "nonlinear", "nonlinear-induced")


class NonUniqueStationary(UserWarning):
    pass


def _cycle(base: BaseSystem):
    if base.kind == "trivial":
        return (0,)
    if base.kind == "periodic":
        return base.cycle
    raise InvalidArgument("Markov measures are only available over trivial or periodic bases")


def stationary_fibers(Q, base: BaseSystem) -> np.ndarray:
    """Fiber marginals ``p_j`` for every cycle position, shape ``(period, k)``.

    The marginal at position 0 is the stationary vector of the cycle product
    ``Q_{s_0} ... Q_{s_{p-1}}``.  When that vector is not unique a warning is
    issued and the Cesaro limit of power iteration from the uniform vector is
    returned (computed by repeated squaring of the lazy chain ``(I + P) / 2``).
    """
    Q = np.asarray(Q, dtype=float)
    cyc = _cycle(base)
    k = Q.shape[-1]
    P = np.eye(k)
    for s in cyc:
        P = P @ Q[s]
    M = P.T - np.eye(k)
    if np.linalg.matrix_rank(M, tol=1e-10) < k - 1:
        warnings.warn("stationary vector is not unique; using the power-iteration limit",
                      NonUniqueStationary, stacklevel=2)
        # powers of the lazy chain converge to the Cesaro limit of the powers of P
        lazy = 0.5 * (np.eye(k) + P)
        for _ in range(64):
            lazy = lazy @ lazy
            lazy /= lazy.sum(axis=1, keepdims=True)
        p0 = np.full(k, 1.0 / k) @ lazy
    else:
        A = np.vstack([M, np.ones(k)])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        p0 = np.linalg.lstsq(A, b, rcond=None)[0]
    p0 = np.clip(p0, 0.0, None)
    p0 /= p0.sum()
    out = [p0]
    for s in cyc[:-1]:
        out.append(out[-1] @ Q[s])
    return np.array(out)


def _row_entropy(Q):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(Q > 0, -Q * np.log(np.where(Q > 0, Q, 1.0)), 0.0)
    return t.sum(axis=-1)


@dataclass(frozen=True, eq=False)
class RandomMarkovMeasure:
    """Markov fiber measures ``mu_omega`` over a trivial or periodic base."""

    Q: np.ndarray  # (base symbols, k, k)
    base: BaseSystem
    marginals: np.ndarray = field(default=None)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim == 2:
            Q = np.repeat(Q[None], self.base.symbols, axis=0)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2] or Q.shape[0] != self.base.symbols:
            raise InvalidArgument("Q must hold one k x k matrix per base symbol")
        if np.any(Q < 0):
            raise InvalidArgument("transition probabilities must be nonnegative")
        sums = Q.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > 1e-12)
        if len(bad):
            s, i = bad[0]
            raise InvalidArgument(f"row {i} of Q[{s}] sums to {sums[s, i]:.12g}, not 1")
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        if self.marginals is None:
            p = stationary_fibers(Q, self.base)
            p.flags.writeable = False
            object.__setattr__(self, "marginals", p)

    @classmethod
    def on(cls, system: RandomSystem, Q):
        """Measure on ``system``; transitions must respect the SFT support."""
        mu = cls(Q, system.base)
        if np.any((mu.Q > 0) & (system.sft.matrices == 0)):
            raise InvalidArgument("Q puts mass on a forbidden transition")
        return mu

    @classmethod
    def bernoulli(cls, system: RandomSystem, p):
        p = np.asarray(p, dtype=float)
        k = system.k
        Q = np.broadcast_to(p, (system.base.symbols, k, k))
        return cls.on(system, Q)

    @classmethod
    def parry(cls, system: RandomSystem):
        """Maximal-entropy Markov measure of a single transition matrix (trivial base)."""
        if system.base.kind != "trivial":
            raise InvalidArgument("the Parry measure is built for a trivial base")
        A = system.sft.matrices[0].astype(float)
        w, V = np.linalg.eig(A)
        i = int(np.argmax(w.real))
        lam = float(w[i].real)
        v = np.abs(V[:, i].real)
        Q = A * v[None, :] / (lam * v[:, None])
        Q /= Q.sum(axis=1, keepdims=True)
        return cls.on(system, Q)

    @property
    def k(self):
        return self.Q.shape[-1]

    @property
    def residual(self):
        """``max_j ||p_{j+1} - p_j Q_{s_j}||_inf`` around the cycle."""
        cyc = _cycle(self.base)
        p = self.marginals
        nxt = np.array([p[j] @ self.Q[s] for j, s in enumerate(cyc)])
        return float(np.max(np.abs(np.roll(p, -1, axis=0) - nxt)))

    def entropy(self):
        cyc = _cycle(self.base)
        h = [float(self.marginals[j] @ _row_entropy(self.Q[s])) for j, s in enumerate(cyc)]
        return float(np.mean(h))

    def integrate(self, potential: Potential):
        cyc = _cycle(self.base)
        if potential.k != self.k:
            raise InvalidArgument("potential alphabet does not match the measure")
        r = potential.memory
        tab = potential.with_base_symbols(self.base.symbols).tables
        L = len(cyc)
        vals = []
        for j, s in enumerate(cyc):
            probs = self.marginals[j]
            for t in range(1, r):
                Qs = self.Q[cyc[(j + t - 1) % L]]
                probs = (probs[:, None] * Qs[np.arange(len(probs)) % self.k]).reshape(-1)
            vals.append(float(probs @ tab[s]))
        return float(np.mean(vals))

    def to_dict(self):
        return {"Q": self.Q.tolist(), "base": self.base.to_dict()}


@dataclass(frozen=True, eq=False)
class MixtureMeasure:
    """Convex combination of Markov measures; entropy and integrals are affine."""

    components: tuple
    weights: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.asarray(self.weights, dtype=float)
        if len(comps) == 0 or w.shape != (len(comps),):
            raise InvalidArgument("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgument("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def entropy(self):
        return float(sum(w * c.entropy() for w, c in zip(self.weights, self.components)))

    def integrate(self, potential):
        return float(sum(w * c.integrate(potential) for w, c in zip(self.weights, self.components)))

    def to_dict(self):
        return {"weights": list(self.weights), "components": [c.to_dict() for c in self.components]}


def fiber_entropy(measure, base: BaseSystem | None = None) -> float:
    """Cycle average of ``sum_i p_j(i) H(Q_{s_j}[i, :])``."""
    return measure.entropy()


def integrate(measure, potential: Potential, base: BaseSystem | None = None) -> float:
    """Cycle average of the expected table value over length-``r`` windows."""
    return measure.integrate(potential)


def variational_objective(measure, flavor: str, potential, scaling: ScalingPotential | None = None,
                          F: Nonlinearity | None = None) -> float:
    """Entropy plus integral, optionally through ``F`` and divided by ``integral psi``."""
    if flavor not in FLAVORS:
        raise InvalidArgument(f"flavor must be one of {', '.join(FLAVORS)}")
    if flavor in ("induced", "nonlinear-induced") and scaling is None:
        raise InvalidArgument(f"{flavor} objective needs a scaling potential")
    if flavor in ("nonlinear", "nonlinear-induced") and F is None:
        raise InvalidArgument(f"{flavor} objective needs a nonlinearity")
    h = measure.entropy()
    Phi = as_vector(potential)
    if flavor in ("linear", "induced"):
        if Phi.d != 1:
            raise InvalidArgument("linear objectives take a single potential")
        top = h + measure.integrate(Phi.components[0])
    else:
        if F.d != Phi.d:
            raise InvalidArgument(f"nonlinearity arity {F.d} does not match {Phi.d} components")
        t = np.array([measure.integrate(c) for c in Phi.components])
        top = h + float(F(t[None, :])[0])
    if flavor in ("induced", "nonlinear-induced"):
        return top / measure.integrate(scaling)
    return top


# ---------------------------------------------------------------------------
# optimisation over Markov families
# ---------------------------------------------------------------------------


@dataclass
class VariationalResult:
    flavor: str
    measure: RandomMarkovMeasure
    value: float
    evaluations: int
    restarts: int
    method: str
    budget_exhausted: bool = False

    def to_dict(self):
        return {
            "flavor": self.flavor,
            "value": self.value,
            "evaluations": self.evaluations,
            "restarts": self.restarts,
            "method": self.method,
            "budget_exhausted": self.budget_exhausted,
            "measure": self.measure.to_dict(),
        }


@dataclass
class OptimizerBudget:
    """Evaluation cap, restart count and seed for the derivative-free search."""

    evaluations: int = 40000
    restarts: int = 8
    seed: int = 0
    grid: int = 64
    polish: bool = True


class _Family:
    """Markov matrices on the SFT support, parameterised row by row."""

    def __init__(self, system: RandomSystem):
        self.system = system
        A = system.sft.matrices
        self.symbols = sorted(set(_cycle(system.base)))
        self.rows = []  # (symbol, row, allowed columns)
        for s in self.symbols:
            for i in range(system.k):
                self.rows.append((s, i, np.nonzero(A[s, i])[0]))
        self.free = sum(len(c) - 1 for _, _, c in self.rows)
        base_Q = A.astype(float)
        self.base_Q = base_Q / base_Q.sum(axis=2, keepdims=True)

    def matrices(self, row_probs):
        Q = self.base_Q.copy()
        for (s, i, cols), p in zip(self.rows, row_probs):
            Q[s, i] = 0.0
            Q[s, i, cols] = p
        return Q

    def from_logits(self, x):
        out, pos = [], 0
        for _, _, cols in self.rows:
            z = np.concatenate([[0.0], x[pos:pos + len(cols) - 1]])
            pos += len(cols) - 1
            e = np.exp(z - z.max())
            out.append(e / e.sum())
        return self.matrices(out)

    def from_simplex(self, y):
        """Free coordinates are the leading probabilities of each row; ``None`` if infeasible."""
        out, pos = [], 0
        for _, _, cols in self.rows:
            head = np.asarray(y[pos:pos + len(cols) - 1], dtype=float)
            pos += len(cols) - 1
            last = 1.0 - head.sum()
            if np.any(head < 0) or last < -1e-15:
                return None
            out.append(np.concatenate([head, [max(last, 0.0)]]))
        return self.matrices(out)

    def simplex_coords(self, Q):
        return np.concatenate([Q[s, i, cols[:-1]] for s, i, cols in self.rows]) if self.free else np.empty(0)

    def grid(self, res):
        per_row = []
        for _, _, cols in self.rows:
            j = len(cols)
            comps = [np.array(c, dtype=float) / res
                     for c in itertools.product(range(res + 1), repeat=j - 1) if sum(c) <= res]
            per_row.append(comps)
        for combo in itertools.product(*per_row):
            yield np.concatenate(combo) if combo else np.empty(0)


def optimize_objective(system: RandomSystem, flavor: str, potential, scaling: ScalingPotential | None = None,
                       F: Nonlinearity | None = None, budget: OptimizerBudget | None = None) -> VariationalResult:
    """Maximise a variational objective over random Markov measures on the SFT support.

    With at most two free transition parameters an exhaustive grid at spacing
    ``1/budget.grid`` is scanned and the best point is polished by Nelder-Mead.
    Otherwise Nelder-Mead runs on per-row softmax logits from ``budget.restarts``
    seeded random starts.  The value returned is the objective of the returned
    measure, hence a lower bound for the matching pressure.
    """
    budget = budget or OptimizerBudget()
    fam = _Family(system)
    count = [0]
    best = [-math.inf, None]

    def value(Q):
        count[0] += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonUniqueStationary)
            mu = RandomMarkovMeasure(Q, system.base)
        v = variational_objective(mu, flavor, potential, scaling, F)
        if v > best[0]:
            best[0], best[1] = v, Q
        return v

    exhausted = False
    if fam.free <= 2:
        method, restarts = "grid", 0
        for y in fam.grid(budget.grid):
            if count[0] >= budget.evaluations:
                exhausted = True
                break
            value(fam.from_simplex(y))
        if budget.polish and fam.free and not exhausted:
            method = "grid+nelder-mead"

            def neg(y):
                Q = fam.from_simplex(y)
                return math.inf if Q is None else -value(Q)

            left = budget.evaluations - count[0]
            if left > 0:
                minimize(neg, fam.simplex_coords(best[1]), method="Nelder-Mead",
                         options={"maxfev": left, "xatol": 1e-10, "fatol": 1e-14,
                                  "initial_simplex": _small_simplex(fam.simplex_coords(best[1]), 1.0 / budget.grid)})
    else:
        method = "nelder-mead"
        rng = np.random.default_rng(budget.seed)
        restarts = max(budget.restarts, 8)
        per = max(budget.evaluations // restarts, 1)
        for j in range(restarts):
            if count[0] >= budget.evaluations:
                exhausted = True
                break
            x0 = np.zeros(fam.free) if j == 0 else rng.normal(scale=1.5, size=fam.free)
            minimize(lambda x: -value(fam.from_logits(x)), x0, method="Nelder-Mead",
                     options={"maxfev": min(per, budget.evaluations - count[0]),
                              "xatol": 1e-9, "fatol": 1e-13, "adaptive": True})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonUniqueStationary)
        mu = RandomMarkovMeasure(best[1], system.base)
    val = variational_objective(mu, flavor, potential, scaling, F)
    return VariationalResult(flavor, mu, val, count[0], restarts, method, exhausted)


def _small_simplex(y0, h):
    n = len(y0)
    pts = [np.array(y0, dtype=float)]
    for i in range(n):
        p = np.array(y0, dtype=float)
        p[i] += h if p[i] + h <= 1 else -h
        pts.append(p)
    return np.array(pts)


def equilibrium_gap(system: RandomSystem, flavor: str, potential, estimate, scaling=None, F=None,
                    budget: OptimizerBudget | None = None) -> float:
    """``estimate - sup objective``; near zero certifies the maximiser as an equilibrium candidate.

    ``estimate`` may be a number, a :class:`PressureEstimate` or a :class:`RootSolveResult`.
    """
    est = getattr(estimate, "point", None)
    if est is None:
        est = getattr(estimate, "beta_star", estimate)
    res = optimize_objective(system, flavor, potential, scaling, F, budget)
    return float(est) - res.value

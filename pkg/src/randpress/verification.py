"""Batch checks that compare estimators against each other and against exact identities.

Every check stores both compared quantities, the tolerance and the relation,
so a report can be read without rerunning anything.  Tolerance layers:

* ``exact``: bitwise equality or ``1e-12`` / ``1e-9`` for algebraic identities;
* ``limit``: ``2e-2`` / ``3e-2`` for finite-size estimates of limits;
* ``heuristic``: ``0.1`` for the critical-exponent scan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import RandpressError, ScanInconclusive
from .estimators import (
    EstimatorConfig,
    critical_exponent_scan,
    fiber_pressure,
    induced_pressure_direct,
    nonlinear_pressure,
    pseudo_inverse_solve,
)
from .measures import MixtureMeasure, OptimizerBudget, RandomMarkovMeasure, optimize_objective, variational_objective
from .model import (
    BaseSystem,
    Nonlinearity,
    Potential,
    RandomSFT,
    RandomSystem,
    ScalingPotential,
    VectorPotential,
    as_vector,
)
from .partition import (
    induced_partition,
    log_linear_partition,
    log_nonlinear_partition,
    nonlinear_induced_partition,
)

RELATIONS = ("eq", "le", "bitwise")


@dataclass
class Check:
    name: str
    instance: str
    lhs: float
    rhs: float
    tolerance: float
    relation: str = "eq"
    layer: str = "limit"
    note: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        if self.relation == "bitwise":
            self.passed = self.lhs == self.rhs or (math.isnan(self.lhs) and math.isnan(self.rhs))
        elif self.relation == "le":
            self.passed = self.lhs <= self.rhs + self.tolerance
        else:
            self.passed = abs(self.lhs - self.rhs) <= self.tolerance
        if self.note.startswith("error:"):
            self.passed = False

    @property
    def margin(self):
        """Slack left before the check would fail (negative when failing)."""
        if self.relation == "le":
            return self.rhs + self.tolerance - self.lhs
        if self.relation == "bitwise":
            return 0.0 if self.passed else -abs(self.lhs - self.rhs)
        return self.tolerance - abs(self.lhs - self.rhs)

    def to_dict(self):
        return {
            "name": self.name, "instance": self.instance, "lhs": _num(self.lhs), "rhs": _num(self.rhs),
            "tolerance": self.tolerance, "relation": self.relation, "layer": self.layer,
            "passed": self.passed, "margin": _num(self.margin), "note": self.note,
        }


def _num(x):
    return None if not math.isfinite(x) else float(x)


@dataclass
class SuiteReport:
    suite: str
    instances: list
    checks: list
    seeds: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "suite": self.suite,
            "passed": self.passed,
            "seeds": list(self.seeds),
            "instances": self.instances,
            "checks": [c.to_dict() for c in self.checks],
        }

    def summary(self):
        bad = self.failures()
        return f"{self.suite}: {len(self.checks) - len(bad)}/{len(self.checks)} checks passed"


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------


@dataclass
class Instance:
    """A system with potentials and an estimator configuration tuned for it."""

    name: str
    system: RandomSystem
    phi: object  # Potential or VectorPotential
    psi: ScalingPotential
    cfg: EstimatorConfig
    F: Nonlinearity | None = None
    sup_achieving: bool = False
    reference: float | None = None  # closed-form or oracle induced pressure
    scan_cfg: EstimatorConfig | None = None

    def to_dict(self):
        Phi = as_vector(self.phi)
        return {
            "name": self.name,
            "system": self.system.to_dict(),
            "phi": Phi.to_dict(),
            "psi": self.psi.to_dict(),
            "F": self.F.to_dict() if self.F is not None else None,
            "cfg": self.cfg.to_dict(),
            "reference": self.reference,
        }


def _primitive(M):
    k = len(M)
    P = (M > 0).astype(float)
    acc = np.eye(k)
    for _ in range((k - 1) ** 2 + 1):  # Wielandt bound
        acc = np.minimum(acc @ P, 1.0)
    return bool(np.all(acc > 0))


def random_instance(rng: np.random.Generator, index: int = 0) -> Instance:
    """Draw ``k in {2,3}``, memory ``r in {1,2}``, tables ``U[-1,1]``, clock ``U[0.5,2.5]``.

    The base is trivial or periodic with period 2 or 3 (distinct symbols), and
    the transition matrices are redrawn until the product around the cycle is
    primitive.
    """
    k = int(rng.integers(2, 4))
    r = int(rng.integers(1, 3))
    p = int(rng.choice([1, 2, 3]))
    base = BaseSystem.trivial() if p == 1 else BaseSystem.periodic(list(range(p)))
    S = base.symbols
    while True:
        A = (rng.random((S, k, k)) < 0.7).astype(np.int64)
        empty = A.sum(axis=2) == 0
        A[empty, 0] = 1
        prod = np.eye(k)
        for s in range(S):
            prod = prod @ A[s]
        if _primitive(prod):
            break
    system = RandomSystem(base, RandomSFT(k, A))
    phi = Potential(rng.uniform(-1, 1, (S, k ** r)), k, r)
    rpsi = int(rng.integers(1, 3))
    psi = ScalingPotential(rng.uniform(0.5, 2.5, (S, k ** rpsi)), k, rpsi)
    top = 14 if k == 2 else 9
    ns = tuple(n for n in range(top // 2, top + 1) if n % p == top % p) or (top,)
    cfg = EstimatorConfig(n_schedule=ns, T_schedule=tuple(n + 0.5 for n in ns),
                          extrapolation="affine-fit-in-1/n", tail_points=3, samples=1)
    return Instance(f"random-{index}", system, phi, psi, cfg)


def random_instances(seed: int, count: int) -> list:
    rng = np.random.default_rng(seed)
    return [random_instance(rng, i) for i in range(count)]


def acceptance_instances() -> list:
    """Reference instances with closed-form or oracle induced pressures."""
    full = RandomSystem(BaseSystem.trivial(), RandomSFT.full_shift(2))
    golden = RandomSystem(BaseSystem.trivial(), RandomSFT.golden_mean())
    zero = Potential.constant(0.0)
    scan_cfg = EstimatorConfig(T_schedule=(4, 6, 8, 10, 12, 14, 16))
    # the golden-mean clock (1, 2) root solves 1 - x - x**3 = 0 with x = exp(-beta)
    x = _golden_clock_root()
    out = [
        Instance("full2-clock2", full, zero, ScalingPotential.constant(2.0),
                 EstimatorConfig(n_schedule=(32, 64, 128), T_schedule=(64.5, 128.5, 256.5)),
                 sup_achieving=True, reference=math.log(2) / 2, scan_cfg=scan_cfg),
        Instance("golden-clock12", golden, zero, ScalingPotential.one_step([1.0, 2.0]),
                 EstimatorConfig(n_schedule=(50, 100, 200), T_schedule=(50.5, 100.5, 200.5)),
                 sup_achieving=True, reference=-math.log(x), scan_cfg=scan_cfg),
        Instance("square-clock2", full, Potential.one_step([-1.0, 1.0]), ScalingPotential.constant(2.0),
                 EstimatorConfig(n_schedule=(64, 128, 256), T_schedule=(128.5, 256.5, 512.5)),
                 F=Nonlinearity.square(), sup_achieving=True,
                 reference=bernoulli_square_oracle() / 2, scan_cfg=scan_cfg),
    ]
    return out


def _golden_clock_root():
    from scipy.optimize import brentq
    return brentq(lambda x: 1 - x - x ** 3, 0.0, 1.0, xtol=1e-15)


def bernoulli_square_oracle(step: float = 1e-4) -> float:
    """``max_p H(p) + (2p - 1)**2`` on the grid ``p in {0, step, ..., 1}``."""
    p = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(p < 1, (1 - p) * np.log1p(-p), 0.0))
    return float(np.max(H + (2 * p - 1) ** 2))


def _guard(checks, name, inst, fn: Callable[[], Check | list]):
    try:
        out = fn()
    except RandpressError as exc:
        checks.append(Check(name, inst, math.nan, math.nan, 0.0, note=f"error: {type(exc).__name__}: {exc}"))
        return
    checks.extend(out if isinstance(out, list) else [out])


# ---------------------------------------------------------------------------
# reduction suite
# ---------------------------------------------------------------------------


def _reduction_checks(inst: Instance):
    sys_, phi, cfg = inst.system, inst.phi, inst.cfg
    name = inst.name
    one = ScalingPotential.constant(1.0, k=sys_.k)
    checks = []

    def unit_clock():
        plain = fiber_pressure(sys_, phi, cfg)
        ind = induced_pressure_direct(sys_, phi, one, cfg)
        return Check("induced-unit-clock", name, ind.point, plain.point, 2e-2)

    def identity():
        n = cfg.n_schedule[-1]
        traj = sys_.trajectory(n + phi.memory + cfg.m + 1)
        lin = log_linear_partition(sys_.sft, traj, phi, n, cfg.m)
        nl = log_nonlinear_partition(sys_.sft, traj, phi, Nonlinearity.identity(), n, cfg.m)
        diag = log_nonlinear_partition(sys_.sft, traj, VectorPotential.of(phi, phi),
                                       Nonlinearity.mean(2), n, cfg.m)
        T = cfg.T_schedule[-1] / 2
        traj2 = sys_.trajectory(int(T / inst.psi.inf) + 4 + max(phi.memory, inst.psi.memory))
        ind = induced_partition(sys_.sft, traj2, phi, inst.psi, T, cfg.m)
        nind = nonlinear_induced_partition(sys_.sft, traj2, phi, inst.psi, Nonlinearity.identity(), T, cfg.m)
        return [
            Check("nonlinear-identity-partition", name, nl, lin, 0.0, "bitwise", "exact"),
            Check("diagonal-mean-partition", name, diag, lin, 0.0, "bitwise", "exact"),
            Check("nonlinear-induced-identity-partition", name, nind, ind, 0.0, "bitwise", "exact"),
        ]

    def identity_estimate():
        a = fiber_pressure(sys_, phi, cfg).point
        b = nonlinear_pressure(sys_, phi, Nonlinearity.identity(), cfg).point
        return Check("nonlinear-identity-estimate", name, b, a, 0.0, "bitwise", "exact")

    _guard(checks, "induced-unit-clock", name, unit_clock)
    _guard(checks, "identity-partitions", name, identity)
    _guard(checks, "nonlinear-identity-estimate", name, identity_estimate)
    return checks


def run_reduction_suite(seed: int = 0, count: int = 20) -> SuiteReport:
    """Unit-clock and identity-nonlinearity reductions on random instances."""
    insts = random_instances(seed, count)
    checks = []
    for inst in insts:
        checks.extend(_reduction_checks(inst))
    return SuiteReport("reduction", [i.to_dict() for i in insts], checks, [seed])


# ---------------------------------------------------------------------------
# property suite
# ---------------------------------------------------------------------------

PROPERTY_N = 720  # multiple of every period used by the generator


def _property_checks(inst: Instance, rng: np.random.Generator):
    sys_, phi, psi = inst.system, inst.phi, inst.psi
    name = inst.name
    k, S, r = sys_.k, sys_.base.symbols, phi.memory
    exact = EstimatorConfig(n_schedule=(PROPERTY_N,), engine="transfer", bisection_tol=1e-11, samples=1)
    checks = []

    def P(p):
        return fiber_pressure(sys_, p, exact).point

    def Pind(p):
        return pseudo_inverse_solve(sys_, p, psi, exact).beta_star

    def fiber_props():
        base = P(phi)
        out = []
        shifted = P(phi + Potential.constant(0.1, k, S, r))
        out.append(Check("constant-shift-monotone", name, base, shifted, 1e-9, "le", "exact"))
        out.append(Check("constant-shift-lipschitz", name, shifted - base, 0.1, 1e-9, "le", "exact"))
        delta = float(rng.uniform(0.01, 0.3))
        pert = Potential(phi.tables + delta * rng.uniform(-1, 1, phi.tables.shape), k, r)
        l1 = (pert - phi).l1_norm(sys_.base)
        out.append(Check("l1-lipschitz", name, abs(P(pert) - base), l1, 1e-9, "le", "exact"))
        return out

    def induced_props():
        out = []
        base = Pind(phi)
        bump = Potential(phi.tables + rng.uniform(0, 0.3, phi.tables.shape), k, r)
        out.append(Check("induced-monotone", name, base, Pind(bump), 1e-9, "le", "exact"))
        phi2 = Potential(rng.uniform(-1, 1, phi.tables.shape), k, r)
        out.append(Check("induced-subadditive", name, Pind(phi + phi2), base + Pind(phi2), 2e-2, "le"))
        cob = phi2.shift_ahead(sys_.base) - phi2
        out.append(Check("induced-cocycle", name, Pind(phi + cob), base, 2e-2, "eq"))
        return out

    def nonlinear_props():
        F, Phi = _random_convex(rng, phi)
        delta = float(rng.uniform(0.01, 0.2))
        Phi2 = VectorPotential(tuple(Potential(c.tables + delta * rng.uniform(-1, 1, c.tables.shape), k, c.memory)
                                     for c in Phi.components))
        dsup = max((a - b).sup_norm() for a, b in zip(Phi.components, Phi2.components))
        bound = max(c.sup_norm() for c in Phi.components + Phi2.components)
        lam = F.lipschitz(bound)
        n = 14 if k == 2 else 8
        n -= n % sys_.base.period
        cfg = EstimatorConfig(n_schedule=(n,), samples=1)
        a = nonlinear_pressure(sys_, Phi, F, cfg).point
        b = nonlinear_pressure(sys_, Phi2, F, cfg).point
        return Check("nonlinear-sup-continuity", name, abs(a - b), lam * dsup, 1e-9, "le", "exact",
                     note=f"F={F.form}")

    def measure_props():
        out = []
        mus = [_random_markov(rng, sys_) for _ in range(2)]
        w = float(rng.uniform(0.05, 0.95))
        mix = MixtureMeasure(tuple(mus), (w, 1 - w))
        F, Phi = _random_convex(rng, phi)
        lhs = variational_objective(mix, "nonlinear", Phi, F=F)
        rhs = sum(wi * variational_objective(m, "nonlinear", Phi, F=F) for wi, m in zip(mix.weights, mus))
        out.append(Check("convex-mixture-jensen", name, lhs, rhs, 1e-12, "le", "exact", note=f"F={F.form}"))
        hs = [m.entropy() for m in mus]
        out.append(Check("mixture-entropy-affine", name, mix.entropy(), w * hs[0] + (1 - w) * hs[1], 1e-12,
                         "eq", "exact"))
        ints = [m.integrate(phi) for m in mus]
        out.append(Check("mixture-integral-affine", name, mix.integrate(phi), w * ints[0] + (1 - w) * ints[1],
                         1e-12, "eq", "exact"))
        for j, h in enumerate(hs):
            out.append(Check(f"entropy-nonnegative-{j}", name, 0.0, h, 1e-12, "le", "exact"))
            out.append(Check(f"entropy-below-log-k-{j}", name, h, math.log(k), 1e-12, "le", "exact"))
        full = RandomSystem(sys_.base, RandomSFT.full_shift(k))
        uni = RandomMarkovMeasure.bernoulli(full, np.full(k, 1.0 / k))
        out.append(Check("uniform-entropy-log-k", name, uni.entropy(), math.log(k), 1e-9, "eq", "exact"))
        return out

    for label, fn in (("fiber", fiber_props), ("induced", induced_props),
                      ("nonlinear", nonlinear_props), ("measures", measure_props)):
        _guard(checks, label, name, fn)
    return checks


def _random_convex(rng, phi: Potential):
    """A convex nonlinearity and a matching vector potential built around ``phi``."""
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return Nonlinearity.square(), VectorPotential.of(phi)
    other = Potential(rng.uniform(-1, 1, phi.tables.shape), phi.k, phi.memory)
    Phi = VectorPotential.of(phi, other)
    if kind == 1:
        B = rng.normal(size=(2, 2))
        return Nonlinearity.quadratic(B @ B.T, rng.normal(size=2)), Phi
    return Nonlinearity.max_coordinate(2), Phi


def _random_markov(rng, system: RandomSystem):
    A = system.sft.matrices.astype(float)
    Q = A * rng.uniform(0.05, 1.0, A.shape)
    Q /= Q.sum(axis=2, keepdims=True)
    return RandomMarkovMeasure.on(system, Q)


def run_property_suite(seed: int = 0, count: int = 50) -> SuiteReport:
    """Monotonicity, Lipschitz bounds, subadditivity, cocycle invariance and measure identities."""
    insts = random_instances(seed, count)
    rng = np.random.default_rng([seed, 1])
    checks = []
    for inst in insts:
        checks.extend(_property_checks(inst, rng))
    return SuiteReport("property", [i.to_dict() for i in insts], checks, [seed])


# ---------------------------------------------------------------------------
# consistency suite
# ---------------------------------------------------------------------------


def _consistency_checks(inst: Instance, budget: OptimizerBudget | None = None):
    sys_, phi, psi, cfg, F = inst.system, inst.phi, inst.psi, inst.cfg, inst.F
    name = inst.name
    checks = []
    root = []

    def solve():
        res = pseudo_inverse_solve(sys_, phi, psi, cfg, F)
        root.append(res)
        out = [Check("root-residual", name, abs(res.residual), 0.0, 1e-6, "le", "exact")]
        direct = induced_pressure_direct(sys_, phi, psi, cfg, F)
        out.append(Check("direct-vs-root", name, direct.point, res.beta_star, 3e-2))
        if inst.reference is not None:
            out.append(Check("root-vs-reference", name, res.beta_star, inst.reference, 3e-2))
        return out

    _guard(checks, "root", name, solve)
    if not root:
        return checks
    beta = root[0].beta_star

    def scan():
        lo, hi = root[0].brackets[0]
        grid = np.arange(min(lo, beta - 0.5), max(hi, beta + 0.5) + 1e-9, 0.05)
        try:
            res = critical_exponent_scan(sys_, phi, psi, inst.scan_cfg or cfg, grid, F)
        except ScanInconclusive as exc:
            return Check("scan-vs-root", name, math.nan, beta, 0.1, "eq", "heuristic",
                         note=f"error: scan-inconclusive: {exc}")
        return Check("scan-vs-root", name, res.beta_hat, beta, 0.1, "eq", "heuristic")

    def lower_bound():
        flavor = "induced" if F is None else "nonlinear-induced"
        res = optimize_objective(sys_, flavor, phi, psi, F, budget)
        out = [Check("variational-lower-bound", name, res.value, beta, 3e-2, "le")]
        if inst.sup_achieving:
            out.append(Check("variational-attained", name, beta, res.value, 3e-2, "le"))
        return out

    _guard(checks, "scan", name, scan)
    if sys_.base.deterministic:
        _guard(checks, "variational", name, lower_bound)
    return checks


def run_consistency_suite(instances: list | None = None, budget: OptimizerBudget | None = None) -> SuiteReport:
    """Direct induced estimate, pseudo-inverse root, scan and variational bound on each instance."""
    insts = acceptance_instances() if instances is None else instances
    checks = []
    for inst in insts:
        checks.extend(_consistency_checks(inst, budget))
    return SuiteReport("consistency", [i.to_dict() for i in insts], checks, [])


SUITES = {
    "reduction": run_reduction_suite,
    "property": run_property_suite,
    "consistency": run_consistency_suite,
}

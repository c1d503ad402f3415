import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LOG2, systems
from randpress import (
    EstimatorConfig,
    InvalidArgument,
    MixtureMeasure,
    Nonlinearity,
    Potential,
    RandomMarkovMeasure,
    ScalingPotential,
    VectorPotential,
    equilibrium_gap,
    fiber_entropy,
    fiber_pressure,
    integrate,
    optimize_objective,
    pseudo_inverse_solve,
    stationary_fibers,
    variational_objective,
)
from randpress.measures import NonUniqueStationary, OptimizerBudget

GOLDEN_Q = [[0.5, 0.5], [1.0, 0.0]]
LOG_PHI = math.log((1 + math.sqrt(5)) / 2)
PHI1 = Potential.one_step([0.3, -0.5])
GIBBS = math.log(math.exp(0.3) + math.exp(-0.5))
SQUARE_ORACLE = 1.0196710679869


def H(p):
    return -sum(x * math.log(x) for x in p if x > 0)


@st.composite
def markov(draw, system):
    S, k = system.base.symbols, system.k
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=S * k * k, max_size=S * k * k))).reshape(S, k, k)
    w = w * system.sft.matrices
    return RandomMarkovMeasure.on(system, w / w.sum(axis=2, keepdims=True))


def block_probs(mu, cyc, start, L):
    """Probabilities of every length-L word starting at cycle position ``start``."""
    out = {}
    for w in itertools.product(range(mu.k), repeat=L):
        p = mu.marginals[start][w[0]]
        for i in range(L - 1):
            p *= mu.Q[cyc[(start + i) % len(cyc)], w[i], w[i + 1]]
        if p > 0:
            out[w] = p
    return out


# ---------------------------------------------------------------- stationary marginals

def test_stationary_examples(full2, golden, periodic_golden):
    assert np.allclose(stationary_fibers(np.full((1, 2, 2), 0.5), full2.base), [[0.5, 0.5]])
    assert np.allclose(stationary_fibers(np.array([GOLDEN_Q]), golden.base), [[2 / 3, 1 / 3]])
    Q0 = np.array([[0.3, 0.7], [0.6, 0.4]])
    Q1 = np.array([[0.2, 0.8], [1.0, 0.0]])
    mu = RandomMarkovMeasure.on(periodic_golden, np.stack([Q0, Q1]))
    p0 = mu.marginals[0]
    assert np.max(np.abs(p0 @ Q0 @ Q1 - p0)) <= 1e-12
    assert np.allclose(mu.marginals[1], p0 @ Q0)
    assert mu.residual <= 1e-12


def test_non_unique_stationary_warns(full2):
    with pytest.warns(NonUniqueStationary):
        mu = RandomMarkovMeasure(np.eye(2)[None], full2.base)
    assert np.allclose(mu.marginals, [[0.5, 0.5]])
    # transient state 0 feeds the closed class {1, 2}; the uniform start lands on (0, 4/9, 5/9)
    Q = np.array([[[1 / 3, 1 / 3, 1 / 3], [0, 0, 1], [0, 0.5, 0.5]]])
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonUniqueStationary)
        mu = RandomMarkovMeasure(Q, full2.base)
    assert np.allclose(mu.marginals, [[0, 1 / 3, 2 / 3]], atol=1e-12)
    Q = np.array([[[1, 0, 0], [0, 0, 1], [0, 0.5, 0.5]]])
    with pytest.warns(NonUniqueStationary):
        mu = RandomMarkovMeasure(Q, full2.base)
    assert np.allclose(mu.marginals, [[1 / 3, 2 / 9, 4 / 9]], atol=1e-12)
    assert mu.residual <= 1e-12


def test_row_sum_error_names_row(full2):
    with pytest.raises(InvalidArgument, match=r"row 1 of Q\[0\] sums to 0.9"):
        RandomMarkovMeasure([[[0.5, 0.5], [0.5, 0.4]]], full2.base)


def test_forbidden_transition(golden):
    with pytest.raises(InvalidArgument, match="forbidden"):
        RandomMarkovMeasure.on(golden, [[0.5, 0.5], [0.5, 0.5]])


# ---------------------------------------------------------------- entropy

def test_entropy_examples(full2, golden):
    assert fiber_entropy(RandomMarkovMeasure.bernoulli(full2, [0.5, 0.5])) == pytest.approx(LOG2, rel=1e-15)
    assert fiber_entropy(RandomMarkovMeasure.on(golden, GOLDEN_Q)) == pytest.approx(2 / 3 * LOG2, rel=1e-14)
    parry = RandomMarkovMeasure.parry(golden)
    assert fiber_entropy(parry) == pytest.approx(LOG_PHI, rel=1e-12)
    est = fiber_pressure(golden, Potential.constant(0.0), EstimatorConfig(extrapolation="affine-fit-in-1/n"))
    assert abs(fiber_entropy(parry) - est.point) <= 5e-3


@given(st.data())
def test_entropy_matches_block_entropy_increments(data):
    system = data.draw(systems(allow_iid=False))
    mu = data.draw(markov(system))
    cyc = system.base.cycle or (0,)
    p = len(cyc)
    L = 3
    diff = H(block_probs(mu, cyc, 0, L + p).values()) - H(block_probs(mu, cyc, 0, L).values())
    assert fiber_entropy(mu) == pytest.approx(diff / p, abs=1e-10)


@given(st.data())
def test_entropy_bounds(data):
    system = data.draw(systems(allow_iid=False))
    mu = data.draw(markov(system))
    h = fiber_entropy(mu)
    assert -1e-15 <= h <= math.log(system.k) + 1e-12
    if system.base.kind == "trivial":
        rho = max(abs(np.linalg.eigvals(system.sft.matrices[0])))
        assert h <= math.log(rho) + 1e-12


# ---------------------------------------------------------------- integrals

def test_integrate_examples(full2, golden):
    mu = RandomMarkovMeasure.bernoulli(full2, [0.3, 0.7])
    assert integrate(mu, Potential.constant(1.7)) == pytest.approx(1.7)
    assert integrate(mu, Potential.one_step([2.0, -1.0])) == pytest.approx(0.3 * 2.0 - 0.7)
    ind01 = Potential.from_function(lambda s, w: float(tuple(w) == (0, 1)), 2, memory=2)
    assert integrate(RandomMarkovMeasure.on(golden, GOLDEN_Q), ind01) == pytest.approx(1 / 3, rel=1e-14)


@given(st.data())
def test_integral_matches_word_probabilities(data):
    system = data.draw(systems(allow_iid=False))
    mu = data.draw(markov(system))
    r = data.draw(st.integers(1, 2))
    S, k = system.base.symbols, system.k
    tab = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=S * k ** r, max_size=S * k ** r))).reshape(S, -1)
    phi = Potential(tab, k, r)
    cyc = system.base.cycle or (0,)
    vals = []
    for j, s in enumerate(cyc):
        probs = block_probs(mu, cyc, j, r)
        vals.append(sum(p * tab[s, sum(a * k ** (r - 1 - i) for i, a in enumerate(w))] for w, p in probs.items()))
    assert integrate(mu, phi) == pytest.approx(float(np.mean(vals)), abs=1e-12)


@given(st.data())
def test_mixture_affine_and_jensen(data):
    system = data.draw(systems(allow_iid=False, k=2))
    a, b = data.draw(markov(system)), data.draw(markov(system))
    t = data.draw(st.floats(0, 1))
    mix = MixtureMeasure((a, b), (t, 1 - t))
    phi = Potential.one_step([0.4, -1.1], system.base.symbols)
    assert mix.integrate(phi) == pytest.approx(t * a.integrate(phi) + (1 - t) * b.integrate(phi), abs=1e-12)
    assert mix.entropy() == pytest.approx(t * a.entropy() + (1 - t) * b.entropy(), abs=1e-12)
    F = Nonlinearity.square()
    Phi = VectorPotential.of(phi)
    lhs = variational_objective(mix, "nonlinear", Phi, F=F)
    rhs = t * variational_objective(a, "nonlinear", Phi, F=F) + (1 - t) * variational_objective(b, "nonlinear", Phi, F=F)
    assert lhs <= rhs + 1e-12


def test_mixture_weights_validated(full2):
    mu = RandomMarkovMeasure.bernoulli(full2, [0.5, 0.5])
    with pytest.raises(InvalidArgument):
        MixtureMeasure((mu, mu), (0.7, 0.7))


# ---------------------------------------------------------------- objectives

def test_objective_examples(full2):
    mu = RandomMarkovMeasure.bernoulli(full2, [0.5, 0.5])
    zero = Potential.constant(0.0)
    assert variational_objective(mu, "linear", zero) == pytest.approx(LOG2)
    assert variational_objective(mu, "induced", zero, ScalingPotential.constant(2.0)) == pytest.approx(LOG2 / 2)
    Phi = VectorPotential.of(Potential.one_step([-1.0, 1.0]))
    for p in (0.1, 0.5, 0.93):
        mu = RandomMarkovMeasure.bernoulli(full2, [p, 1 - p])
        v = variational_objective(mu, "nonlinear", Phi, F=Nonlinearity.square())
        assert v == pytest.approx(H([p, 1 - p]) + (1 - 2 * p) ** 2, abs=1e-13)


def test_objective_needs_inputs(full2):
    mu = RandomMarkovMeasure.bernoulli(full2, [0.5, 0.5])
    with pytest.raises(InvalidArgument):
        variational_objective(mu, "induced", PHI1)
    with pytest.raises(InvalidArgument):
        variational_objective(mu, "nonlinear", PHI1)
    with pytest.raises(InvalidArgument):
        variational_objective(mu, "bogus", PHI1)


# ---------------------------------------------------------------- optimizer

def test_optimizer_gibbs(full2):
    res = optimize_objective(full2, "linear", PHI1)
    gibbs_p = math.exp(0.3) / (math.exp(0.3) + math.exp(-0.5))
    assert res.value == pytest.approx(GIBBS, abs=1e-9)
    assert abs(res.measure.marginals[0][0] - gibbs_p) <= 1 / 64


def test_optimizer_parry(golden):
    res = optimize_objective(golden, "linear", Potential.constant(0.0))
    assert res.value == pytest.approx(LOG_PHI, abs=1e-9)
    assert np.allclose(res.measure.Q, RandomMarkovMeasure.parry(golden).Q, atol=1e-4)


def test_optimizer_nonlinear_square(full2):
    Phi = VectorPotential.of(Potential.one_step([-1.0, 1.0]))
    res = optimize_objective(full2, "nonlinear", Phi, F=Nonlinearity.square())
    assert res.value == pytest.approx(SQUARE_ORACLE, abs=1e-8)
    p = res.measure.marginals[0][0]
    assert min(abs(p - 0.97875), abs(p - 0.02125)) <= 1e-3


def test_optimizer_many_parameters():
    from randpress import BaseSystem, RandomSFT, RandomSystem
    system = RandomSystem(BaseSystem.trivial(), RandomSFT.full_shift(3))
    phi = Potential.one_step([0.2, -0.4, 0.1])
    res = optimize_objective(system, "linear", phi, budget=OptimizerBudget(evaluations=20000))
    assert res.method == "nelder-mead" and res.restarts >= 8
    assert res.value == pytest.approx(math.log(sum(math.exp(v) for v in (0.2, -0.4, 0.1))), abs=1e-6)


def test_optimizer_budget_flag(full2):
    res = optimize_objective(full2, "linear", PHI1, budget=OptimizerBudget(evaluations=5))
    assert res.budget_exhausted and res.evaluations == 5


# ---------------------------------------------------------------- gap

def test_gap_examples(full2, golden):
    assert abs(equilibrium_gap(full2, "linear", PHI1, GIBBS)) <= 1e-6
    est = fiber_pressure(golden, Potential.constant(0.0), EstimatorConfig(extrapolation="affine-fit-in-1/n"))
    assert abs(equilibrium_gap(golden, "linear", Potential.constant(0.0), est)) <= 5e-3
    psi = ScalingPotential.one_step([1.0, 2.0])
    root = pseudo_inverse_solve(golden, Potential.constant(0.0), psi, EstimatorConfig())
    assert equilibrium_gap(golden, "induced", Potential.constant(0.0), root, psi) >= -3e-2


@settings(max_examples=15)
@given(st.data())
def test_gap_lower_bound_random(data):
    system = data.draw(systems(allow_iid=False, k=2))
    S = system.base.symbols
    phi = Potential(np.array(data.draw(st.lists(st.floats(-1, 1), min_size=2 * S, max_size=2 * S))).reshape(S, 2), 2, 1)
    # orbit lengths divisible by every cycle length, so the fit sees one residue class
    cfg = EstimatorConfig(n_schedule=(120, 240, 480), engine="transfer", extrapolation="affine-fit-in-1/n")
    est = fiber_pressure(system, phi, cfg)
    budget = OptimizerBudget(evaluations=2000)
    assert equilibrium_gap(system, "linear", phi, est, budget=budget) >= -3e-2

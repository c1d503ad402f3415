import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import brute
from conftest import potentials, scalings, systems
from randpress import (
    BaseSystem,
    InsufficientTrajectory,
    InvalidArgument,
    Nonlinearity,
    Potential,
    RandomSFT,
    RandomSystem,
    ScalingPotential,
    VectorPotential,
    induced_partition,
    induced_time_set,
    linear_partition,
    nonlinear_induced_partition,
    nonlinear_partition,
    tail_partition,
    transfer_partition,
)
from randpress.partition import (
    induced_log_partitions,
    log_induced_partition,
    log_linear_partition,
    log_transfer_partition,
    tail_log_table,
)

PHI1 = Potential.one_step([0.3, -0.5])
GIBBS_SUM = math.exp(0.3) + math.exp(-0.5)


def fiber(system, n):
    return system.sft, system.trajectory(n)


# ---------------------------------------------------------------- examples

def test_linear_examples(full2, golden):
    sft, tr = fiber(full2, 20)
    assert linear_partition(sft, tr, Potential.constant(0.0), 5) == 32
    assert linear_partition(sft, tr, PHI1, 2) == pytest.approx(GIBBS_SUM ** 2, rel=1e-14)
    assert linear_partition(sft, tr, PHI1, 2) == pytest.approx(3.8275, abs=1e-4)
    assert linear_partition(golden.sft, golden.trajectory(20), Potential.constant(0.0), 3) == 5


def test_transfer_examples(full2, golden):
    zero = Potential.constant(0.0)
    assert transfer_partition(full2.sft, full2.trajectory(20), zero, 10) == pytest.approx(1024, rel=1e-14)
    assert transfer_partition(golden.sft, golden.trajectory(20), zero, 10) == pytest.approx(144, rel=1e-14)


def test_linear_needs_trajectory(full2):
    with pytest.raises(InsufficientTrajectory):
        linear_partition(full2.sft, full2.trajectory(3), PHI1, 6)


def test_induced_time_set_examples(full2):
    sft, tr = fiber(full2, 20)
    data = induced_time_set(sft, tr, ScalingPotential.constant(1.0), 3.5)
    assert data.times == [3] and data.entries[0].cylinders == 8
    data = induced_time_set(sft, tr, ScalingPotential.one_step([1.0, 2.0]), 2.5, collect_words=True)
    assert data.times == [1, 2]
    assert data.entries[0].words == ((0,), (1,))
    assert data.entries[1].words == ((0, 0),)
    assert induced_time_set(sft, tr, ScalingPotential.constant(1.0), 0.5).entries == []


def test_induced_partition_examples(full2):
    sft, tr = fiber(full2, 20)
    zero, one = Potential.constant(0.0), ScalingPotential.constant(1.0)
    for n0 in range(1, 7):
        assert induced_partition(sft, tr, zero, one, n0 + 0.5) == 2 ** n0
    assert induced_partition(sft, tr, zero, ScalingPotential.one_step([1.0, 2.0]), 2.5) == 3
    assert induced_partition(sft, tr, PHI1, one, 2.5) == pytest.approx(GIBBS_SUM ** 2, rel=1e-14)
    assert induced_partition(sft, tr, zero, one, 0.5) == 0.0
    assert log_induced_partition(sft, tr, zero, one, 0.5) == -math.inf


def test_induced_rejects_nonpositive_T(full2):
    with pytest.raises(InvalidArgument):
        induced_partition(full2.sft, full2.trajectory(5), PHI1, ScalingPotential.constant(1.0), 0.0)


def test_tail_examples(full2):
    sft, tr = fiber(full2, 40)
    zero, one = Potential.constant(0.0), ScalingPotential.constant(1.0)
    geometric = math.exp(-3) / (1 - math.exp(-1))
    d = tail_partition(sft, tr, zero, one, math.log(2) + 1, 2.0, 30)
    assert d.value == pytest.approx(geometric - math.exp(-31) / (1 - math.exp(-1)), rel=1e-12)
    assert d.value == pytest.approx(0.07876, abs=1e-5)
    assert not d.truncated
    d = tail_partition(sft, tr, zero, one, 0.0, 2.0, 10)
    assert d.value == pytest.approx(2040, rel=1e-14)
    assert d.truncated
    assert sorted(d.counts) == list(range(3, 11))


def test_tail_cap_below_floor(full2):
    with pytest.raises(InvalidArgument):
        tail_partition(full2.sft, full2.trajectory(20), PHI1, ScalingPotential.constant(1.0), 0.0, 5.0, 4)


def test_nonlinear_examples(full2):
    sft, tr = fiber(full2, 20)
    for c in (-0.7, 0.0, 0.5):
        v = nonlinear_partition(sft, tr, VectorPotential.of(PHI1), Nonlinearity.constant(c), 4)
        assert v == pytest.approx(16 * math.exp(4 * c), rel=1e-14)
    with pytest.raises(InvalidArgument):
        nonlinear_partition(sft, tr, VectorPotential.of(PHI1, PHI1), Nonlinearity.square(), 4)


def test_nonlinear_induced_examples(full2):
    sft, tr = fiber(full2, 20)
    psi = ScalingPotential.one_step([1.0, 2.0])
    v = nonlinear_induced_partition(sft, tr, VectorPotential.of(Potential.constant(0.0)), psi,
                                    Nonlinearity.square(), 2.5)
    assert v == 3
    one = ScalingPotential.constant(1.0)
    for n0, c in [(3, 0.2), (4, -0.3)]:
        v = nonlinear_induced_partition(sft, tr, VectorPotential.of(PHI1), one, Nonlinearity.constant(c), n0 + 0.5)
        assert v == pytest.approx(2 ** n0 * math.exp(n0 * c), rel=1e-14)


# ---------------------------------------------------------------- brute-force oracles

@given(st.data())
def test_linear_matches_enumeration(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    n = data.draw(st.integers(1, 5))
    m = data.draw(st.integers(1, 3))
    sft, tr = fiber(system, n + 4)
    assert linear_partition(sft, tr, phi, n, m) == pytest.approx(brute.linear(sft, tr, phi, n, m), rel=1e-12)


@given(st.data())
def test_transfer_matches_linear(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    n = data.draw(st.integers(1, 12 if system.k == 2 else 8))
    m = data.draw(st.integers(1, 3))
    sft, tr = fiber(system, n + 4)
    a = log_transfer_partition(sft, tr, phi, n, m)
    b = log_linear_partition(sft, tr, phi, n, m)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


def _sequential_log_partition(sft, traj, values, n):
    """Row-vector product with per-step rescaling, one-step potentials only."""
    S = values.shape[0]
    v = np.exp(values[traj[0] % S])
    scale = 0.0
    for i in range(1, n):
        v = (v @ sft.matrices[traj[i - 1]]) * np.exp(values[traj[i] % S])
        top = v.max()
        v, scale = v / top, scale + math.log(top)
    return scale + math.log(v.sum())


@pytest.mark.parametrize("n", [64, 257, 1000])
def test_periodic_power_path_matches_sequential(n):
    A = np.array([np.ones((3, 3)), [[1, 1, 0], [0, 1, 1], [1, 0, 1]], [[1, 0, 1], [1, 1, 1], [0, 1, 0]]], dtype=int)
    system = RandomSystem(BaseSystem.periodic([0, 1, 2]), RandomSFT(3, A))
    rng = np.random.default_rng(1)
    values = rng.uniform(-1, 1, (3, 3))
    phi = Potential(values, 3, 1)
    tr = system.trajectory(n + 3)
    a = log_transfer_partition(system.sft, tr, phi, n)
    b = _sequential_log_partition(system.sft, tr, values, n)
    assert abs(a - b) <= 1e-10 * abs(b)


@given(st.data())
def test_nonlinear_matches_enumeration(data):
    system = data.draw(systems())
    p1 = data.draw(potentials(system))
    p2 = data.draw(potentials(system))
    n = data.draw(st.integers(1, 5))
    sft, tr = fiber(system, n + 4)
    F = Nonlinearity.quadratic([[1.0, 0.3], [0.3, 0.5]], [0.2, -0.1])
    v = nonlinear_partition(sft, tr, VectorPotential.of(p1, p2), F, n)
    assert v == pytest.approx(brute.nonlinear(sft, tr, [p1, p2], F, n), rel=1e-12)


@given(st.data())
def test_induced_matches_enumeration(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    psi = data.draw(scalings(system))
    T = data.draw(st.floats(0.6, 3.0))
    m = data.draw(st.integers(1, 2))
    sft, tr = fiber(system, 20)
    value, _ = brute.induced(sft, tr, phi, psi, T, m)
    assert induced_partition(sft, tr, phi, psi, T, m) == pytest.approx(value, rel=1e-12)
    # the time set alone is reported at the depth of the clock
    _, classes = brute.induced(sft, tr, Potential.constant(0.0, system.k), psi, T, m)
    data_ = induced_time_set(sft, tr, psi, T, m)
    assert {e.n: e.cylinders for e in data_.entries} == classes


@given(st.data())
def test_tail_matches_enumeration(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    psi = data.draw(scalings(system))
    T = data.draw(st.floats(0.5, 3.0))
    beta = data.draw(st.floats(-1.0, 2.0))
    N = data.draw(st.integers(max(1, int(T / psi.sup)), 5))
    sft, tr = fiber(system, 20)
    d = tail_partition(sft, tr, phi, psi, beta, T, N)
    assert d.value == pytest.approx(brute.tail(sft, tr, phi, psi, beta, T, N), rel=1e-12, abs=1e-300)
    table = tail_log_table(sft, tr, phi, psi, [beta], [T], [N])
    assert table[0, 0] == d.log_value or abs(table[0, 0] - d.log_value) <= 1e-12 * max(1, abs(d.log_value))


# ---------------------------------------------------------------- invariants

@given(st.data())
def test_identity_and_diagonal_reductions_bitwise(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    n = data.draw(st.integers(1, 7))
    sft, tr = fiber(system, 20)
    lin = linear_partition(sft, tr, phi, n)
    assert nonlinear_partition(sft, tr, VectorPotential.of(phi), Nonlinearity.identity(), n) == lin
    psi = data.draw(scalings(system))
    T = data.draw(st.floats(0.6, 4.0))
    ind = induced_partition(sft, tr, phi, psi, T)
    assert nonlinear_induced_partition(sft, tr, VectorPotential.of(phi), psi, Nonlinearity.identity(), T) == ind


@given(st.data())
def test_diagonal_mean_reduction(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    n = data.draw(st.integers(1, 7))
    sft, tr = fiber(system, n + 4)
    v = nonlinear_partition(sft, tr, VectorPotential.of(phi, phi), Nonlinearity.mean(2), n)
    assert v == pytest.approx(linear_partition(sft, tr, phi, n), rel=1e-14)


@given(st.data())
def test_induced_classes_bounded_and_disjoint(data):
    system = data.draw(systems())
    psi = data.draw(scalings(system))
    T = data.draw(st.floats(0.6, 3.0))
    sft, tr = fiber(system, 20)
    d = induced_time_set(sft, tr, psi, T, collect_words=True)
    lo, hi = math.floor(T / psi.sup), math.floor(T / psi.inf)
    for e in d.entries:
        assert lo <= e.n <= hi
        assert len(e.words) == e.cylinders
    # every admissible path leaves [0, T] at exactly one n; classes of a path are disjoint
    L = hi + 2
    for w in brute.admissible(sft, tr, L)[:50]:
        s = np.cumsum([brute.sums(psi, tr, w[None, :], n)[0] - brute.sums(psi, tr, w[None, :], n - 1)[0]
                       for n in range(1, L)])
        hits = [n for n in range(1, L - 1) if s[n - 1] <= T < s[n]]
        assert len(hits) <= 1


@given(st.data())
def test_monotone_in_beta(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    psi = data.draw(scalings(system))
    n = data.draw(st.integers(1, 6))
    b1 = data.draw(st.floats(-2, 2))
    b2 = data.draw(st.floats(-2, 2))
    lo, hi = sorted((b1, b2))
    sft, tr = fiber(system, n + 4)
    Phi, F = VectorPotential.of(phi), Nonlinearity.identity()
    z_lo = nonlinear_partition(sft, tr, Phi, F, n, scaling=psi, beta=lo)
    z_hi = nonlinear_partition(sft, tr, Phi, F, n, scaling=psi, beta=hi)
    assert z_hi <= z_lo * (1 + 1e-12)


@given(st.data())
def test_shared_walk_matches_single_T(data):
    system = data.draw(systems())
    phi = data.draw(potentials(system))
    psi = data.draw(scalings(system))
    Ts = sorted(data.draw(st.lists(st.floats(0.6, 3.0), min_size=1, max_size=4)))
    sft, tr = fiber(system, 20)
    many = induced_log_partitions(sft, tr, phi, psi, Ts)
    for T, v in zip(Ts, many):
        assert v == log_induced_partition(sft, tr, phi, psi, T)


def test_structured_instance_stays_cheap_at_large_n(full2):
    sft, tr = fiber(full2, 600)
    assert linear_partition(sft, tr, Potential.constant(0.0), 512) == pytest.approx(2.0 ** 512, rel=1e-12)
    # integer values keep Birkhoff sums exact, so rows merge to about n per layer
    phi = Potential.one_step([1.0, -2.0])
    assert log_linear_partition(sft, tr, phi, 500) == pytest.approx(500 * math.log(math.e + math.exp(-2)), rel=1e-12)

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from randpress import BaseSystem, Potential, RandomSFT, RandomSystem, ScalingPotential

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

LOG2 = math.log(2)


@pytest.fixture
def full2():
    return RandomSystem(BaseSystem.trivial(), RandomSFT.full_shift(2))


@pytest.fixture
def golden():
    return RandomSystem(BaseSystem.trivial(), RandomSFT.golden_mean())


@pytest.fixture
def periodic_golden():
    A0 = np.ones((2, 2), dtype=int)
    A1 = np.array([[1, 1], [1, 0]])
    return RandomSystem(BaseSystem.periodic([0, 1]), RandomSFT(2, np.stack([A0, A1])))


@st.composite
def bases(draw, allow_iid=True):
    kinds = ["trivial", "periodic"] + (["iid"] if allow_iid else [])
    kind = draw(st.sampled_from(kinds))
    if kind == "trivial":
        return BaseSystem.trivial()
    if kind == "periodic":
        p = draw(st.integers(2, 3))
        return BaseSystem.periodic(list(range(p)))
    S = draw(st.integers(2, 3))
    w = np.array(draw(st.lists(st.integers(1, 5), min_size=S, max_size=S)), dtype=float)
    return BaseSystem.iid(w / w.sum(), draw(st.integers(0, 2 ** 32)))


@st.composite
def systems(draw, k=None, allow_iid=True):
    base = draw(bases(allow_iid))
    k = k or draw(st.integers(2, 3))
    S = base.symbols
    bits = draw(st.lists(st.booleans(), min_size=S * k * k, max_size=S * k * k))
    A = np.array(bits, dtype=int).reshape(S, k, k)
    for s in range(S):
        for i in range(k):
            if not A[s, i].any():
                A[s, i, draw(st.integers(0, k - 1))] = 1
    return RandomSystem(base, RandomSFT(k, A))


def tables(draw, S, k, r, lo=-1.0, hi=1.0):
    vals = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=S * k ** r, max_size=S * k ** r))
    return np.array(vals).reshape(S, k ** r)


@st.composite
def potentials(draw, system, max_memory=2):
    r = draw(st.integers(1, max_memory))
    return Potential(tables(draw, system.base.symbols, system.k, r), system.k, r)


@st.composite
def scalings(draw, system, max_memory=2):
    r = draw(st.integers(1, max_memory))
    return ScalingPotential(tables(draw, system.base.symbols, system.k, r, 0.5, 2.5), system.k, r)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

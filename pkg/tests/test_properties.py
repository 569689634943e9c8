"""Property-based invariants that complement the example-driven suites."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from extrace.kappa import theta
from extrace.linalg import (
    adjoint,
    matrix_from_literal,
    matrix_to_literal,
    operator_norm,
    random_contraction,
    two_block,
)
from extrace.lsi import Signal, parseval_norm
from extrace.trace import ex, halmos_dilation

finite = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


@st.composite
def complex_matrices(draw, max_dim=4):
    rows = draw(st.integers(1, max_dim))
    cols = draw(st.integers(1, max_dim))
    flat = draw(
        st.lists(
            st.tuples(finite, finite), min_size=rows * cols, max_size=rows * cols
        )
    )
    return np.array([complex(a, b) for a, b in flat]).reshape(rows, cols)


@given(complex_matrices())
def test_literal_round_trip_is_exact(m):
    assert np.array_equal(matrix_from_literal(matrix_to_literal(m)), m)


@given(complex_matrices())
@settings(deadline=None)
def test_halmos_dilation_always_unitary_after_scaling(m):
    # scale strictly inside the unit ball: exactly on the boundary the
    # defect square roots amplify machine epsilon to ~1e-8
    norm = operator_norm(m)
    f = m / (norm * (1.0 + 1e-6)) if norm > 0 else m
    g = halmos_dilation(f)
    n = sum(f.shape)
    assert operator_norm(adjoint(g) @ g - np.eye(n)) < 1e-9


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
@settings(deadline=None, max_examples=40)
def test_trace_never_expands_contractions(seed, dim):
    rng = np.random.default_rng(seed)
    u = int(rng.integers(1, dim))
    value = ex(two_block(random_contraction(dim, dim, rng), u), "U").value
    assert operator_norm(value) <= 1.0 + 1e-7


@given(
    st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
)
def test_theta_within_arcsin_kappa(a, kappa):
    assert abs(theta(a, kappa)) <= math.asin(kappa) + 1e-10


@given(
    st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
)
def test_theta_is_two_pi_periodic(a, kappa):
    assert math.isclose(
        theta(a, kappa), theta(a + 2 * math.pi, kappa), abs_tol=1e-9
    )


@given(
    st.dictionaries(
        st.integers(-10, 10),
        st.tuples(finite, finite),
        min_size=1,
        max_size=6,
    )
)
def test_parseval_equals_time_domain(taps):
    s = Signal(("a",), {t: [complex(re, im)] for t, (re, im) in taps.items()})
    got = parseval_norm(s, 64)
    want = s.norm_squared()
    assert abs(got - want) <= 1e-9 * max(1.0, want)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plapinv.oracle import (EigenOracle1D, counterexample_sequence, lambda_k_1d, shoot_1d,
                            square_eigs_p2)

PI2 = math.pi ** 2


def test_square_spectrum_head():
    eigs = square_eigs_p2(4)
    assert [c for _, c in eigs[:4]] == [1, 2, 1, 2]
    assert [v for v, _ in eigs[:4]] == pytest.approx([2 * PI2, 5 * PI2, 8 * PI2, 10 * PI2])
    assert eigs[1][0] == pytest.approx(49.35, abs=5e-3)
    assert eigs[2][0] == pytest.approx(78.96, abs=5e-3)
    assert eigs[3][0] == pytest.approx(98.70, abs=5e-3)


@given(m=st.integers(1, 15))
@settings(max_examples=15, deadline=None)
def test_square_spectrum_sorted_positive(m):
    eigs = square_eigs_p2(m)
    vals = [v for v, _ in eigs]
    assert vals == sorted(vals) and vals[0] > 0
    assert sum(c for _, c in eigs) == m * m


def test_square_rejects_zero():
    with pytest.raises(ValueError):
        square_eigs_p2(0)


def test_pi_p():
    assert EigenOracle1D(2.0).pi_p == pytest.approx(math.pi, rel=1e-15)
    assert EigenOracle1D(3.0).pi_p == pytest.approx(2 * math.pi / (3 * math.sin(math.pi / 3)))
    with pytest.raises(ValueError):
        EigenOracle1D(1.0)


def test_lambda_closed_form_p2():
    o = EigenOracle1D(2.0)
    assert lambda_k_1d(1, o) == pytest.approx(PI2)
    assert lambda_k_1d(2, o) == pytest.approx(4 * PI2)
    assert lambda_k_1d(1, EigenOracle1D(2.0, 2.0)) == pytest.approx(PI2 / 4)
    with pytest.raises(ValueError):
        lambda_k_1d(0, o)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_shooting_agrees_with_closed_form(p, k):
    assert shoot_1d(k, p) / lambda_k_1d(k, EigenOracle1D(p)) == pytest.approx(1.0, abs=1e-6)


def test_shooting_p2_values():
    assert shoot_1d(1, 2.0) == pytest.approx(PI2, rel=1e-9)
    assert shoot_1d(3, 2.0) == pytest.approx(9 * PI2, rel=1e-9)
    assert shoot_1d(2, 2.5, length=3.0) == pytest.approx(
        lambda_k_1d(2, EigenOracle1D(2.5, 3.0)), rel=1e-6)


def test_shooting_rejects_bad_input():
    with pytest.raises(ValueError):
        shoot_1d(0, 2.0)
    with pytest.raises(ValueError):
        shoot_1d(1, 2.0, tol=0.0)


def test_counterexample_head():
    xs = counterexample_sequence(4)
    assert xs == pytest.approx([0.0, 1.0, 1.5, 1.5 - 1 / 3])
    with pytest.raises(ValueError):
        counterexample_sequence(0)


def test_counterexample_does_not_converge():
    xs = np.array(counterexample_sequence(10_000))
    assert xs.min() >= -1 and xs.max() <= 2
    tail = xs[-5000:]
    assert tail.max() - tail.min() > 0.5
    seven = np.array(counterexample_sequence(7501))
    above = np.flatnonzero(np.diff((seven > 1).astype(int)) == 1)
    below = np.flatnonzero(np.diff((seven < 0).astype(int)) == 1)
    assert len(above) >= 2 and len(below) >= 2

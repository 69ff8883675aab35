import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msstab.errors import ContractViolation, InvariantViolation
from msstab.recursion import (RecursionState, SecondMoment, ms_norm, propagate_second_moment,
                              step, validate_f_compatibility)
from msstab.tensor_ops import KroneckerSumOperator

LAM, SIGMA, DT = -2.0, 0.8, 0.1


def gbm_sampler(milstein):
    def draw(j, rng):
        db = np.sqrt(DT) * rng.standard_normal()
        d = SIGMA * db
        if milstein:
            d += 0.5 * SIGMA ** 2 * (db * db - DT)
        return np.array([[d]])
    return draw


def scalar_S(milstein):
    noise = SIGMA ** 2 * DT * (1 + 0.5 * SIGMA ** 2 * DT if milstein else 1.0)
    return (1 + LAM * DT) ** 2 + noise


def test_step():
    s = step(RecursionState(0, [1.0, 2.0]), np.eye(2), np.diag([0.5, 0.0]))
    assert s.j == 1 and np.allclose(s.coeffs, [1.5, 2.0])
    with pytest.raises(ContractViolation):
        step(s, np.eye(3), np.eye(3))
    with pytest.raises(ContractViolation):
        RecursionState(0, [np.nan])


@pytest.mark.parametrize("milstein", [False, True])
def test_scalar_gbm_covariance(milstein):
    rep = validate_f_compatibility(gbm_sampler(milstein), 40_000, seed=11)
    expected = scalar_S(milstein) - (1 + LAM * DT) ** 2
    se = rep.second_moment_stderr[0, 0]
    assert abs(rep.second_moment[0, 0] - expected) <= 4 * se
    assert rep.passed()


def test_scalar_gbm_propagation():
    for milstein in (False, True):
        S = KroneckerSumOperator.from_terms([(1.0, np.array([[1 + LAM * DT]]), np.array([[1 + LAM * DT]])),
                                             (scalar_S(milstein) - (1 + LAM * DT) ** 2,
                                              np.eye(1), np.eye(1))])
        ms = [ms_norm(m) for m in propagate_second_moment(S, np.array([[4.0]]), 5)]
        assert np.allclose(ms, 4.0 * scalar_S(milstein) ** np.arange(6), rtol=1e-14)


def test_compatibility_detects_mean_and_drift():
    def biased(j, rng):
        return np.array([[0.5 + 0.01 * rng.standard_normal()]])
    assert not validate_f_compatibility(biased, 2000).passed()

    def nonstationary(j, rng):
        return np.array([[(1 + j) * rng.standard_normal()]])
    assert not validate_f_compatibility(nonstationary, 2000).passed()
    with pytest.raises(ContractViolation):
        validate_f_compatibility(biased, 10)


def test_second_moment_checks():
    SecondMoment.outer([1.0, -2.0]).check()
    with pytest.raises(InvariantViolation):
        SecondMoment(np.array([[1.0, 2.0], [0.0, 1.0]])).check()
    with pytest.raises(InvariantViolation):
        SecondMoment(np.array([[1.0, 2.0], [2.0, 1.0]])).check()
    with pytest.raises(ContractViolation):
        SecondMoment(np.ones((2, 3)))
    with pytest.raises(ContractViolation):
        propagate_second_moment(KroneckerSumOperator.identity(2), np.eye(2), -1)


def test_ms_norm_with_gram():
    m = np.outer([1.0, 2.0], [1.0, 2.0])
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert ms_norm(m) == pytest.approx(5.0)
    assert ms_norm(m, G) == pytest.approx(np.array([1.0, 2.0]) @ G @ np.array([1.0, 2.0]))
    with pytest.raises(InvariantViolation):
        ms_norm(-np.eye(2))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2 ** 32 - 1), steps=st.integers(0, 6))
def test_propagation_preserves_psd_and_matches_powers(n, seed, steps):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((n, n)) / np.sqrt(n)
    C = rng.standard_normal((n, n)) / np.sqrt(n)
    S = KroneckerSumOperator.from_terms([(1.0, D, D), (0.3, C, C)])
    x0 = rng.standard_normal(n)
    out = propagate_second_moment(S, SecondMoment.outer(x0), steps)
    dense = np.kron(D, D) + 0.3 * np.kron(C, C)
    ref = np.linalg.matrix_power(dense, steps) @ np.outer(x0, x0).ravel()
    assert len(out) == steps + 1
    assert np.allclose(out[-1].moment.ravel(), ref, rtol=1e-9, atol=1e-12)
    for m in out:
        m.check()

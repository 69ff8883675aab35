import json

import numpy as np
import pytest
import scipy.special
from hypothesis import assume, given, settings, strategies as st

from msstab.discretization import FemSpace, SpectralSpace
from msstab.noise import NoiseModel
from msstab.schemes import (DiffusionOperator, RationalKind, SchemeConfig, as_integrator, as_rational,
                            build_step_operators, h_operator_norm)
from msstab.stability import (Classification, _table1_from, analytic_heat_classification,
                              analyze, assemble_S, classify, exact_ms_reference, simultaneous_condition,
                              simultaneous_condition_milstein, sufficient_general,
                              sufficient_milstein_be, table1_condition, table1_lambda,
                              table1_threshold, table2_rho)
from msstab.tensor_ops import dense_spectral_radius

ZETA3 = scipy.special.zeta(3.0)
SCHEMES = [("BE", "EM"), ("BE", "Milstein"), ("CN", "EM"), ("FE", "EM")]


def test_classify():
    assert classify(0.5) is Classification.STABLE
    assert classify(1.5) is Classification.UNSTABLE
    assert classify(1.0 + 1e-11) is Classification.MARGINAL
    assert classify(1.0 - 1e-3, band=1e-2) is Classification.MARGINAL


def test_table1_closed_forms_by_hand():
    lam, mu, dt = np.pi ** 2, 1.0, 0.04
    assert table1_lambda("BE", "EM", 1.0, 1.0, 3.0, dt, 1) == pytest.approx(
        (1 + dt * mu) / (1 + dt * lam) ** 2)
    assert table1_lambda("FE", "EM", 1.0, 1.0, 3.0, dt, 1) == pytest.approx(
        (1 - dt * lam) ** 2 + dt * mu)
    # mode 2 carries mu = 1/8 and lambda = 4 pi^2
    assert table1_lambda("CN", "EM", 1.0, 1.0, 3.0, dt, 2) == pytest.approx(
        ((1 - 2 * dt * lam) ** 2 + dt / 8) / (1 + 2 * dt * lam) ** 2)


@pytest.mark.parametrize("kind,integ", SCHEMES)
def test_assembled_spectral_operator_entries(kind, integ):
    space = SpectralSpace(1.0, 4)
    noise = NoiseModel(1.0, 3.0, 4)
    dt = 0.01
    S = assemble_S(build_step_operators(SchemeConfig(kind, integ, dt), space,
                                        DiffusionOperator("G1"), noise))
    Lam = S.diagonal_entries()
    r = RationalKind(kind).R(-dt * space.lambdas)
    expected = np.outer(r, r)
    for k in range(4):
        expected[k, k] = table1_lambda(kind, integ, 1.0, 1.0, 3.0, dt, k + 1)
    assert np.allclose(Lam, expected, rtol=1e-13)


def test_scalar_milstein_mode_matches_gbm_formula():
    # one spectral mode is a scalar geometric Brownian motion
    lam, mu, dt = np.pi ** 2, 0.7, 0.3
    space = SpectralSpace(1.0, 1)
    S = assemble_S(build_step_operators(SchemeConfig("BE", "Milstein", dt), space,
                                        DiffusionOperator("G1"), NoiseModel(0.7, 2.0, 1)))
    r = 1 / (1 + dt * lam)
    assert S.diagonal_entries()[0, 0] == pytest.approx(r * r * (1 + mu * dt * (1 + mu * dt / 2)))


def test_simultaneous_values():
    assert simultaneous_condition(0.0, np.pi ** 2, ZETA3, 1.0) == pytest.approx(-18.537, abs=5e-4)
    assert simultaneous_condition_milstein(np.pi ** 2, ZETA3, 1.0) == pytest.approx(-12.756, abs=5e-4)


@pytest.mark.parametrize("C_mu,expected", [(1.0, "Stable"), (19.0, "Stable"),
                                           (20.0, "Unstable"), (25.0, "Unstable")])
def test_analytic_heat_classification(C_mu, expected):
    assert analytic_heat_classification(1.0, C_mu).value == expected


def test_analytic_boundary_is_marginal_only_in_band():
    b = 2 * np.pi ** 2
    assert analytic_heat_classification(1.0, b) is Classification.MARGINAL
    assert analytic_heat_classification(1.0, b * (1 + 1e-9)) is Classification.UNSTABLE
    assert analytic_heat_classification(1.0, b * (1 - 1e-9)) is Classification.STABLE


def test_table2_rho_values():
    lam = FemSpace(1.0, 15).discrete_lambdas
    ghat2 = 1 / 3
    assert table2_rho("BE", lam, 0.15, ZETA3, np.sqrt(ghat2)) == pytest.approx(-5.11613, rel=1e-5)
    assert table2_rho("FE", lam, 0.00067, ZETA3, np.sqrt(ghat2)) == pytest.approx(3.39709e-4, rel=1e-4)


def test_exact_reference():
    space = SpectralSpace(1.0, 3)
    b = np.array([1.0, 0.5, 0.0])
    mus = np.array([1.0, 0.125, 1 / 27])
    t = np.array([0.0, 0.1])
    ref = exact_ms_reference(space, b, mus, t)
    assert ref[0] == pytest.approx(1.25)
    assert ref[1] == pytest.approx(np.exp(0.1 * (1 - 2 * np.pi ** 2))
                                   + 0.25 * np.exp(0.1 * (0.125 - 8 * np.pi ** 2)))


def test_analyze_report_fields():
    rep = analyze(SpectralSpace(1.0, 6), DiffusionOperator("G1"), NoiseModel(1.0, 3.0, 6),
                  SchemeConfig("BE", "EM", 0.04))
    assert rep.classification is Classification.STABLE
    assert rep.dominant_mode == (1, 1)
    assert rep.rho == pytest.approx(table1_lambda("BE", "EM", 1, 1, 3, 0.04, 1), rel=1e-12)
    assert rep.analytic_solution_classification is Classification.STABLE
    assert len(rep.mode_thresholds) == 6
    assert {"general", "BE", "simultaneous", "table1_max_lambda"} <= set(rep.conditions)
    json.dumps(rep.to_dict())


def test_analyze_fem_and_milstein_notes():
    space = FemSpace(1.0, 7)
    rep = analyze(space, DiffusionOperator("G2"), NoiseModel(1.0, 3.0, 7, carrier="H1"),
                  SchemeConfig("CN", "Milstein", 0.01))
    assert any("only rho(S)" in n for n in rep.notes)
    rep = analyze(space, DiffusionOperator("G2"), NoiseModel(1.0, 3.0, 7, carrier="H1"),
                  SchemeConfig("FE", "EM", 0.01))
    assert rep.classification is Classification.UNSTABLE
    assert "table2_rho_FE" in rep.conditions
    rep = analyze(space, DiffusionOperator("G2"), NoiseModel(1.0, 3.0, 7, carrier="H1"),
                  SchemeConfig("BE", "EM", 0.01, F=0.5 * np.eye(7)), validate=True)
    assert rep.conditions["general"] < 0 and rep.rho < 1


def test_zero_noise_radius_is_deterministic():
    space = SpectralSpace(1.0, 4)
    rep = analyze(space, DiffusionOperator("zero"), NoiseModel(1.0, 3.0, 4),
                  SchemeConfig("FE", "EM", 0.05))
    assert rep.rho == pytest.approx((1 - 0.05 * 16 * np.pi ** 2) ** 2, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(scheme=st.sampled_from([("BE", "EM"), ("BE", "Milstein"), ("FE", "EM")]),
       lam=st.floats(0.1, 100.0), mu=st.floats(0.01, 50.0))
def test_threshold_is_where_lambda_crosses_one(scheme, lam, mu):
    dt_star, side = table1_threshold(*scheme, lam, mu)
    assume(dt_star is not None and 1e-6 < dt_star < 1e6)
    f = lambda dt: _table1_from(as_rational(scheme[0]), as_integrator(scheme[1]), lam, mu, dt)  # noqa: E731
    assert f(dt_star) == pytest.approx(1.0, rel=1e-9)
    below, above = f(dt_star * 0.9), f(dt_star * 1.1)
    assert (below < 1) == (side == "below") and (above < 1) == (side == "above")


@settings(max_examples=80, deadline=None)
@given(scheme=st.sampled_from(SCHEMES), lam=st.floats(0.1, 100.0), mu=st.floats(0.0, 50.0),
       dt=st.floats(1e-4, 2.0))
def test_condition_sign_matches_lambda(scheme, lam, mu, dt):
    L = _table1_from(as_rational(scheme[0]), as_integrator(scheme[1]), lam, mu, dt)
    c = table1_condition(*scheme, lam, mu, dt)
    assume(abs(L - 1) > 1e-9 and abs(c) > 1e-9 * max(lam, mu, 1))
    assert (c < 0) == (L < 1)


@settings(max_examples=25, deadline=None)
@given(basis=st.sampled_from(["spectral", "fem"]), n=st.integers(1, 6),
       kind=st.sampled_from(["BE", "CN", "FE"]), dt=st.floats(1e-4, 0.5),
       C_mu=st.floats(0.05, 30.0), f=st.floats(-3.0, 3.0))
def test_sufficient_condition_implies_stability(basis, n, kind, dt, C_mu, f):
    if basis == "spectral":
        space, diff = SpectralSpace(1.0, n), DiffusionOperator("G1")
        noise = NoiseModel(C_mu, 3.0, n)
    else:
        space, diff = FemSpace(1.0, n), DiffusionOperator("G2")
        noise = NoiseModel(C_mu, 3.0, n, carrier="H1")
    cfg = SchemeConfig(kind, "EM", dt, F=f * np.eye(n))
    ops = build_step_operators(cfg, space, diff, noise)
    cond = sufficient_general(kind, space.discrete_lambdas, dt, h_operator_norm(space, cfg.F),
                              noise.trace_q, diff.norm_bound(1.0))
    assume(cond < -1e-9)
    assert dense_spectral_radius(assemble_S(ops)) < 1


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), dt=st.floats(1e-3, 1.0), C_mu=st.floats(0.05, 30.0))
def test_milstein_sufficient_condition_implies_stability(n, dt, C_mu):
    space = FemSpace(1.0, n)
    noise = NoiseModel(C_mu, 3.0, n, carrier="H1")
    ops = build_step_operators(SchemeConfig("BE", "Milstein", dt), space, DiffusionOperator("G2"), noise)
    cond = sufficient_milstein_be(space.discrete_lambdas.min(), dt, 0.0, noise.trace_q,
                                  DiffusionOperator("G2").norm_bound(1.0))
    assume(cond < -1e-9)
    assert dense_spectral_radius(assemble_S(ops)) < 1


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 5), kind=st.sampled_from(["BE", "CN", "FE"]), dt=st.floats(1e-3, 0.2),
       c1=st.floats(0.05, 20.0), factor=st.floats(1.0, 5.0))
def test_radius_monotone_in_noise_intensity(n, kind, dt, c1, factor):
    space = FemSpace(1.0, n)

    def rho(C):
        ops = build_step_operators(SchemeConfig(kind, "EM", dt), space, DiffusionOperator("G2"),
                                   NoiseModel(C, 3.0, n, carrier="H1"))
        return dense_spectral_radius(assemble_S(ops))

    assert rho(c1 * factor) >= rho(c1) * (1 - 1e-10)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msstab.discretization import FemSpace, SpectralSpace, mode_nodal
from msstab.errors import ContractViolation, UnsupportedConfiguration
from msstab.noise import IncrementBatch, NoiseModel, double_increments
from msstab.schemes import (DiffusionOperator, Integrator, RationalKind, SchemeConfig,
                            apply_rational_solve, as_integrator, build_d_det, build_step_operators,
                            h_operator_norm, one_step, tridiagonal_bands)


def test_rational_functions():
    z = np.array([-0.5, -2.0])
    assert np.allclose(RationalKind.BE.R(z), 1 / (1 - z))
    assert np.allclose(RationalKind.CN.R(z), (1 + z / 2) / (1 - z / 2))
    assert np.allclose(RationalKind.FE.R(z), 1 + z)
    assert np.allclose(RationalKind.CN.rd_inv(z), 1 / (1 - z / 2))
    assert np.allclose(RationalKind.FE.rd_inv(z), 1.0)
    assert RationalKind.CN.order == 2 and RationalKind.BE.order == 1


def test_integrator_parsing():
    assert as_integrator("milstein") is Integrator.MILSTEIN
    assert as_integrator("EM") is Integrator.EM
    with pytest.raises(ContractViolation):
        as_integrator("RK4")


def test_scheme_config_validation():
    with pytest.raises(ContractViolation):
        SchemeConfig("BE", "EM", 0.0)
    with pytest.raises(ContractViolation):
        SchemeConfig("BE", "EM", 0.1, F=np.ones((2, 3)))
    cfg = SchemeConfig("be", "Milstein", 0.1)
    assert cfg.rational is RationalKind.BE and cfg.integrator is Integrator.MILSTEIN
    with pytest.raises(ContractViolation):
        build_d_det(SchemeConfig("BE", "EM", 0.1, F=np.eye(2)), SpectralSpace(1.0, 3))


@pytest.mark.parametrize("kind", ["BE", "CN", "FE"])
def test_spectral_d_det_is_diagonal_rational(kind):
    space = SpectralSpace(1.0, 5)
    D = build_d_det(SchemeConfig(kind, "EM", 0.01), space)
    assert np.allclose(D, np.diag(RationalKind(kind).R(-0.01 * space.lambdas)))


@pytest.mark.parametrize("kind", ["BE", "CN", "FE"])
@pytest.mark.parametrize("which", ["R", "rd"])
def test_fem_eigen_route_matches_banded_solves(kind, which):
    space = FemSpace(1.0, 9)
    dt = 0.002
    c = np.random.default_rng(0).standard_normal(9)
    if which == "R":
        D = build_d_det(SchemeConfig(kind, "EM", dt), space)
    else:
        ops = build_step_operators(SchemeConfig(kind, "EM", dt), space, DiffusionOperator("G2"),
                                   NoiseModel(1.0, 3.0, 2))
        D = ops.prefix @ space.mass
    assert np.allclose(D @ c, apply_rational_solve(kind, space, dt, c, which), rtol=1e-10, atol=1e-12)


def test_d_det_with_drift():
    space = SpectralSpace(1.0, 3)
    F = np.diag([0.5, -1.0, 2.0])
    dt = 0.1
    D = build_d_det(SchemeConfig("BE", "EM", dt, F=F), space)
    r = 1 / (1 + dt * space.lambdas)
    assert np.allclose(D, np.diag(r + dt * r * np.diag(F)))


def test_h_operator_norm():
    fem = FemSpace(1.0, 6)
    assert h_operator_norm(fem, np.eye(6)) == pytest.approx(1.0)
    assert h_operator_norm(fem, 3 * np.eye(6)) == pytest.approx(3.0)
    assert h_operator_norm(SpectralSpace(1.0, 2), np.array([[0, 2.0], [0, 0]])) == pytest.approx(2.0)
    assert h_operator_norm(fem, None) == 0.0


def test_unsupported_combinations():
    noise = NoiseModel(1.0, 3.0, 2)
    with pytest.raises(UnsupportedConfiguration):
        build_step_operators(SchemeConfig("BE", "EM", 0.1), FemSpace(1.0, 3), DiffusionOperator("G1"), noise)
    with pytest.raises(UnsupportedConfiguration):
        build_step_operators(SchemeConfig("BE", "EM", 0.1), SpectralSpace(1.0, 3), DiffusionOperator("G2"), noise)
    with pytest.raises(UnsupportedConfiguration):
        build_step_operators(SchemeConfig("BE", "Milstein", 0.1), SpectralSpace(1.0, 3),
                             DiffusionOperator("G1", commutative=False), noise)
    with pytest.raises(ContractViolation):
        DiffusionOperator("G3")


def test_g1_modes_beyond_space_are_dropped():
    ops = build_step_operators(SchemeConfig("BE", "Milstein", 0.1), SpectralSpace(1.0, 2),
                               DiffusionOperator("G1"), NoiseModel(1.0, 3.0, 4))
    assert ops.kappa == 4
    assert not np.any(ops.mode_mats[2:])
    assert ops.pair_index.tolist() == [[0, 0], [1, 1]]
    assert ops.is_diagonal


def test_g2_mode_matrices():
    space = FemSpace(1.0, 7)
    ops = build_step_operators(SchemeConfig("CN", "Milstein", 0.01), space,
                               DiffusionOperator("G2"), NoiseModel(1.0, 3.0, 3))
    for k in range(3):
        assert np.allclose(ops.mode_mats[k], space.weighted_mass(mode_nodal(space, k + 1)))
    assert ops.pair_index.shape == (6, 2)
    assert np.allclose(ops.pair_mult, [1, 2, 2, 1, 2, 1])
    assert not ops.is_diagonal
    bands = tridiagonal_bands(ops.mode_mats[0])
    assert np.allclose(bands[1], np.diag(ops.mode_mats[0]))
    assert np.allclose(bands[2, :-1], np.diag(ops.mode_mats[0], 1))


def test_milstein_step_matches_ordered_pair_sum():
    space = FemSpace(1.0, 5)
    noise = NoiseModel(1.0, 3.0, 3)
    dt = 0.02
    ops = build_step_operators(SchemeConfig("BE", "Milstein", dt), space, DiffusionOperator("G2"), noise)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(5)
    db = np.sqrt(dt) * rng.standard_normal(3)
    dd = double_increments(db, dt)
    modes = [mode_nodal(space, k) for k in range(1, 4)]
    a = noise.amplitudes
    inner = sum(a[k] * db[k] * space.weighted_mass(modes[k]) @ x for k in range(3))
    inner += sum(a[k] * a[l] * dd[k, l] * space.weighted_mass(modes[k] * modes[l]) @ x
                 for k in range(3) for l in range(3))
    expected = ops.d_det @ x + ops.prefix @ inner
    assert np.allclose(one_step(ops, x, IncrementBatch(dt, db)), expected, rtol=1e-12)


def test_em_step_spectral_g1():
    space = SpectralSpace(1.0, 3)
    noise = NoiseModel(0.5, 2.0, 3)
    dt = 0.1
    ops = build_step_operators(SchemeConfig("FE", "EM", dt), space, DiffusionOperator("G1"), noise)
    x = np.array([1.0, -2.0, 0.5])
    db = np.array([0.1, 0.2, -0.3])
    expected = (1 - dt * space.lambdas) * x + np.sqrt(noise.mus) * db * x
    assert np.allclose(one_step(ops, x, IncrementBatch(dt, db)), expected)


def test_zero_diffusion():
    ops = build_step_operators(SchemeConfig("BE", "EM", 0.1), SpectralSpace(1.0, 3),
                               DiffusionOperator("zero"), NoiseModel(1.0, 3.0, 3))
    assert not np.any(ops.mode_mats)
    assert DiffusionOperator("zero").norm_bound(1.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(z=st.floats(-1e6, -1e-8))
def test_implicit_schemes_are_a_stable(z):
    assert abs(float(RationalKind.BE.R(z))) < 1
    assert abs(float(RationalKind.CN.R(z))) <= 1
    assert 0 < float(RationalKind.CN.rd_inv(z)) <= 1

import math

import numpy as np
import pytest

from cnls import grid
from cnls.errors import ContractError, ParameterError, ResolutionError
from cnls.functionals import compute_functionals
from cnls.params import scalar_params
from cnls.sphere import (SphereField, antisymmetric_mask, check_poincare_antisymmetric,
                         check_sobolev_sphere, check_sphere_weights, hemispheric_weight,
                         is_antisymmetric, project_antisymmetric, quadrature, random_field,
                         rho_pm, sphere_state)

from conftest import coupled

LMAX = 12


def test_synthesis_analysis_roundtrip(rng):
    f = random_field(LMAX, rng)
    q = quadrature(LMAX)
    back = q.analyze(q.synthesize(f.coeffs))
    np.testing.assert_allclose(back, f.coeffs, atol=1e-12)


def test_low_degree_harmonics_closed_form():
    q = quadrature(4)
    ct = np.cos(q.theta)[:, None]
    y10 = q.synthesize(SphereField.single(4, 1, 0).coeffs)
    np.testing.assert_allclose(y10, math.sqrt(3 / (4 * math.pi)) * ct * np.ones((1, q.nphi)),
                               atol=1e-13)
    y00 = q.synthesize(SphereField.single(4, 0, 0).coeffs)
    np.testing.assert_allclose(y00, 1 / math.sqrt(4 * math.pi), atol=1e-14)


def test_orthonormality_by_quadrature(rng):
    f, g = random_field(LMAX, rng), random_field(LMAX, rng)
    q = quadrature(LMAX)
    inner = q.integrate(q.synthesize(f.coeffs) * np.conj(q.synthesize(g.coeffs)))
    assert inner == pytest.approx(np.sum(f.coeffs * np.conj(g.coeffs)), abs=1e-10)


def test_antisymmetric_fields_are_odd(rng):
    f = random_field(LMAX, rng, antisymmetric=True)
    vals = quadrature(LMAX).synthesize(f.coeffs)
    # Gauss-Legendre latitudes are symmetric, so reversing theta is the reflection
    np.testing.assert_allclose(vals[::-1], -vals, atol=1e-12)
    assert is_antisymmetric(f.coeffs, LMAX)
    assert not is_antisymmetric(random_field(LMAX, rng).coeffs, LMAX)


def test_projection_and_mask(rng):
    f = project_antisymmetric(random_field(LMAX, rng))
    assert np.all(f.coeffs[~antisymmetric_mask(LMAX)] == 0)
    with pytest.raises(ParameterError):
        SphereField(2, np.ones((3, 5)), antisymmetric=True)


def test_gradient_norm_by_quadrature(rng):
    """sum l(l+1)|a_lm|^2 against int |d_theta f|^2 + |d_phi f|^2 / sin^2 theta."""
    f = random_field(LMAX, rng)
    q = quadrature(LMAX, 0, 4.0)
    m = np.arange(-LMAX, LMAX + 1)[None, :]
    dth = q.synthesize(f.coeffs, derivative=True)
    dph = q.synthesize(1j * m * f.coeffs) / np.sin(q.theta)[:, None]
    quad = q.integrate(np.abs(dth) ** 2 + np.abs(dph) ** 2)
    assert f.grad_norm2() == pytest.approx(float(quad), rel=1e-10)


def test_poincare_ratio(rng):
    ratios = [check_poincare_antisymmetric(random_field(LMAX, rng, antisymmetric=True))
              for _ in range(100)]
    assert max(ratios) <= 4.0
    # the odd class starts at degree 1 where l(l+1) = 2
    assert max(ratios) <= 1 / math.sqrt(2) + 1e-14
    assert check_poincare_antisymmetric(SphereField.single(LMAX, 1, 0)) == pytest.approx(
        1 / math.sqrt(2), rel=1e-14)
    with pytest.raises(ContractError):
        check_poincare_antisymmetric(SphereField.single(LMAX, 2, 0))


@pytest.mark.parametrize("p", [4.0, 8.0])
def test_sobolev_slack_nonnegative(rng, p):
    slacks = [check_sobolev_sphere(random_field(LMAX, rng), p).slack for _ in range(100)]
    assert min(slacks) >= 0


@pytest.mark.parametrize("p", [4.0, 8.0])
def test_sobolev_equality_for_constants(p):
    rep = check_sobolev_sphere(SphereField.single(LMAX, 0, 0, 2.0), p)
    assert rep.slack == pytest.approx(0.0, abs=1e-12 * rep.rhs)


def test_hemispheric_weight_identities():
    rep = check_sphere_weights()
    assert rep.ok
    assert rep.max_lap_error <= 1e-8


def test_hemispheric_weight_closed_forms():
    w = hemispheric_weight(grid.sphere(LMAX))
    np.testing.assert_allclose(w.rho, -2 * np.log(np.cos(w.r / 2)))
    assert np.all(w.drho <= 1.0)
    assert np.all(w.d2rho <= 1.0 + 1e-15)
    assert rho_pm(0.0) == 0.0


def test_sphere_functionals():
    p = 4.0
    y00 = SphereField.single(LMAX, 0, 0)
    rep = compute_functionals(sphere_state([y00]), scalar_params(2, p))
    assert rep.M == pytest.approx(1.0)
    assert rep.K == 0.0
    assert rep.P == pytest.approx(4 * math.pi * (4 * math.pi) ** (-(p + 1) / 2), rel=1e-12)
    y31 = SphereField.single(LMAX, 3, 1)
    rep = compute_functionals(sphere_state([y31]), scalar_params(2, p))
    assert rep.K == pytest.approx(6.0)
    assert rep.Q_dstar == pytest.approx(rep.K - (p - 1) / (4 * (p + 1)) * rep.P)


def test_sphere_functionals_reject(rng):
    f = random_field(4, rng)
    with pytest.raises(ParameterError):
        compute_functionals(sphere_state([f]), coupled(n=2))
    with pytest.raises(ContractError):
        sphere_state([f, random_field(5, rng)])


def test_quadrature_resolution_error():
    with pytest.raises(ResolutionError):
        quadrature(LMAX, 4, 2.0)

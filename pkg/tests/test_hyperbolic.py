import math

import numpy as np
import pytest

from cnls import grid, records
from cnls.errors import ContractError
from cnls.functionals import compute_functionals
from cnls.hyperbolic import (check_weight_inequalities, evolve_radial, radial_laplacian_apply,
                             radial_tail_fraction, radial_virial_identity)
from cnls.params import linear_params, scalar_params
from cnls.records import SolverConfig
from cnls.state import Gaussian, build_state
from cnls.virial import check_virial_consistency
from cnls.weights import HYPERBOLIC_SQUARE, HYPERBOLIC_STAR, virial_weights

from conftest import coupled


def _spec(n, points=1000, R=10.0):
    return grid.hyperbolic(n, points, R)


@pytest.mark.parametrize("n", [2, 3])
def test_star_weight_laplacian_is_one(n):
    w = virial_weights(_spec(n), HYPERBOLIC_STAR)
    lap = radial_laplacian_apply(w.rho, w.grid, order=4)
    assert np.max(np.abs(lap - 1.0)) <= 1e-8


def test_star_derivative_n2_is_tanh_half():
    w = virial_weights(_spec(2), HYPERBOLIC_STAR)
    assert np.max(np.abs(w.drho - np.tanh(0.5 * w.r))) <= 1e-10


def test_star_derivative_n3_closed_form():
    """int_0^r sinh^2 = (sinh r cosh r - r)/2, so rho*' = (sinh r cosh r - r) / (2 sinh^2 r)."""
    w = virial_weights(_spec(3, R=5.0), HYPERBOLIC_STAR)
    r = w.r
    exact = (np.sinh(r) * np.cosh(r) - r) / (2 * np.sinh(r) ** 2)
    np.testing.assert_allclose(w.drho, exact, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("kind", [HYPERBOLIC_STAR, HYPERBOLIC_SQUARE])
def test_weight_inequalities(n, kind):
    spec = _spec(n)
    fields = [build_state(spec, [Gaussian(1.0, s)]).components for s in (0.5, 1.0, 2.0)]
    rep = check_weight_inequalities(virial_weights(spec, kind), fields)
    assert rep.ok, rep.checks


def test_square_weight_laplacian_cell_average():
    """The order-4 operator returns cell averages: exact flux of grad r^2 = 2r through the faces."""
    w = virial_weights(_spec(3, R=4.0, points=800), HYPERBOLIC_SQUARE)
    rg = grid.radial_grid(w.grid)
    flux = rg.face_area * 2.0 * rg.faces
    exact = (flux[1:] - flux[:-1]) / rg.volume
    lap = radial_laplacian_apply(w.rho, w.grid, order=4)
    np.testing.assert_allclose(lap, exact, rtol=1e-9)


@pytest.mark.parametrize("n", [2, 3])
def test_second_order_laplacian_converges(n):
    """Delta exp(-r^2) = (4r^2 - 2) e^{-r^2} - 2 (n-1) r coth(r) e^{-r^2}."""
    errs = []
    for pts in (200, 400):
        rg = grid.radial_grid(_spec(n, pts, 6.0))
        r = rg.r
        f = np.exp(-r * r)
        exact = (4 * r * r - 2) * f - 2 * (n - 1) * r / np.tanh(r) * f
        lap = radial_laplacian_apply(f, rg)
        inner = r < 4.0
        errs.append(np.max(np.abs(lap - exact)[inner]))
    assert errs[1] < 2e-3
    assert errs[0] / errs[1] > 3.5


@pytest.mark.parametrize("n", [2, 3])
def test_crank_nicolson_conserves_mass(n):
    spec = _spec(n, 500, 10.0)
    s0 = build_state(spec, [Gaussian(1.0)])
    rec = evolve_radial(s0, linear_params(n), SolverConfig(dt0=1e-2, t_max=1.0,
                                                            sample_interval=0.1))
    assert rec.mass_drift < 1e-13
    assert rec.energy_drift < 1e-12
    assert rec.classification == records.GLOBAL


def test_radial_nonlinear_run_and_virial_bound():
    spec = _spec(3)
    params = scalar_params(3, 3.0)
    s0 = build_state(spec, [Gaussian(1.0)])
    rec = evolve_radial(s0, params, SolverConfig(dt0=1e-3, t_max=1.0, sample_interval=0.01,
                                                 dt_min=1e-6))
    assert rec.classification == records.GLOBAL
    assert rec.mass_drift < 1e-12
    rep = check_virial_consistency(rec, params)
    assert rep.relation == "<="
    assert rep.max_violation == 0.0


def test_star_weight_bound_on_radial_run():
    spec = _spec(3)
    params = coupled(n=3, p=2.5, beta=0.5)
    s0 = build_state(spec, [Gaussian(1.0)] * 2)
    weight = virial_weights(spec, HYPERBOLIC_STAR)
    rec = evolve_radial(s0, params, SolverConfig(dt0=1e-3, t_max=0.5, sample_interval=0.01,
                                                 dt_min=1e-6), virial_weight=weight)
    rep = check_virial_consistency(rec, params)
    assert rec.weight_kind == HYPERBOLIC_STAR
    assert rep.max_violation == 0.0


def test_four_term_identity_below_square_bound():
    """The full J'' expression for the square weight never exceeds 16 Q."""
    spec = _spec(3)
    params = scalar_params(3, 3.0)
    w = virial_weights(spec, HYPERBOLIC_SQUARE)
    for sigma in (0.5, 1.0, 2.0):
        s = build_state(spec, [Gaussian(1.2, sigma)])
        q = compute_functionals(s, params).Q
        assert radial_virial_identity(s, params, w) <= 16 * q + 1e-10


def test_radial_tail_fraction():
    spec = _spec(2, 256, 10.0)
    smooth = build_state(spec, [Gaussian(1.0, 2.0)])
    assert radial_tail_fraction(smooth) < 1e-6
    rg = grid.radial_grid(spec)
    rough = np.cos(math.pi * (np.arange(rg.K) + 0.5) * 0.9)[None, :]
    assert radial_tail_fraction(smooth.with_components(rough)) > 0.5


def test_evolve_radial_needs_radial_state():
    s0 = build_state(grid.euclidean(1, 256, 20.0), [Gaussian(1.0)])
    with pytest.raises(ContractError):
        evolve_radial(s0, scalar_params(1, 3.0), SolverConfig())

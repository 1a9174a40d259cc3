import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnls import grid
from cnls.errors import ConstructionError, EvaluationError, ParameterError
from cnls.functionals import compute_functionals, h_lambda, pohozaev
from cnls.params import (SystemParams, critical_power, energy_critical_power, linear_params,
                         reduce_to_scalar, scalar_params)
from cnls.state import (DomainTruncationWarning, Gaussian, Sampled, Sech, StateVector,
                        build_state)

from conftest import coupled


# ---------------------------------------------------------------- params

def test_critical_powers():
    assert critical_power(1) == 5.0
    assert critical_power(2) == 3.0
    assert energy_critical_power(2) == math.inf
    assert energy_critical_power(3) == 5.0


@pytest.mark.parametrize("kwargs, match", [
    (dict(n=0, N=1, p=3.0, mu=[1.0], beta=[[0.0]]), "dimension"),
    (dict(n=1, N=0, p=3.0, mu=[], beta=None), "component count"),
    (dict(n=3, N=1, p=5.0, mu=[1.0], beta=[[0.0]]), "p must satisfy"),
    (dict(n=1, N=1, p=0.5, mu=[1.0], beta=[[0.0]]), "p must satisfy"),
    (dict(n=1, N=2, p=3.0, mu=[1.0], beta=np.zeros((2, 2))), "mu must have length"),
    (dict(n=1, N=1, p=3.0, mu=[-1.0], beta=[[0.0]]), "positive"),
    (dict(n=1, N=2, p=3.0, mu=[1.0, 1.0], beta=[[0.0, 0.5], [0.4, 0.0]]), "symmetric"),
    (dict(n=1, N=2, p=3.0, mu=[1.0, 1.0], beta=[[1.0, 0.5], [0.5, 0.0]]), "zero diagonal"),
    (dict(n=1, N=1, p=3.0, mu=[1.0], beta=[[0.0]], lam=[0.0]), "lam"),
    (dict(n=1, N=1, p=3.0, mu=[1.0], beta=[[0.0]], gamma=0.0), "gamma"),
])
def test_params_rejects(kwargs, match):
    with pytest.raises(ParameterError, match=match):
        SystemParams(**kwargs)


def test_asymmetry_message_names_entries():
    with pytest.raises(ParameterError, match=r"beta\[1\]\[2\]=0.5 != beta\[2\]\[1\]=0.4"):
        SystemParams(n=1, N=2, p=3.0, mu=[1.0, 1.0], beta=[[0.0, 0.5], [0.4, 0.0]])


def test_params_readonly_and_derived():
    params = coupled(n=2, p=4.0)
    with pytest.raises(ValueError):
        params.mu[0] = 2.0
    assert params.mass_exponent == pytest.approx(4.0 + 1.0 - 2.0 * 3.0 / 2.0)
    assert params.virial_coefficient == pytest.approx(2.0 * 3.0 / 20.0)
    assert reduce_to_scalar(params).N == 1
    d = params.to_dict()
    assert d["beta"] == [[0.0, 0.5], [0.5, 0.0]]


def test_linear_params_only_zero_coefficients():
    assert linear_params(1, 2).linear
    with pytest.raises(ParameterError):
        SystemParams(n=1, N=1, p=3.0, mu=[0.0], beta=[[0.0]])


def test_permuted_params():
    params = SystemParams(n=1, N=3, p=3.0, mu=[1.0, 2.0, 3.0],
                          beta=[[0, 0.1, 0.2], [0.1, 0, 0.3], [0.2, 0.3, 0]])
    perm = params.permuted([2, 0, 1])
    assert perm.mu.tolist() == [3.0, 1.0, 2.0]
    assert perm.beta[0, 1] == 0.2 and perm.beta[1, 2] == 0.1


# ---------------------------------------------------------------- grids

@pytest.mark.parametrize("factory, args", [
    (grid.euclidean, (1, 100, 10.0)),   # not a power of two
    (grid.euclidean, (4, 64, 10.0)),
    (grid.euclidean, (1, 64, -1.0)),
    (grid.hyperbolic, (1, 100, 10.0)),  # H^1 has no radial reduction here
    (grid.hyperbolic, (2, 100, 800.0)),
    (grid.sphere, (-1,)),
])
def test_grid_rejects(factory, args):
    with pytest.raises(ParameterError):
        factory(*args)


def test_euclidean_grid_layout():
    g = grid.euclidean_grid(grid.euclidean(2, 16, 4.0))
    assert g.shape == (16, 16)
    assert g.dx == pytest.approx(0.5)
    assert g.axis[0] == -4.0
    assert g.knyq == pytest.approx(math.pi / 0.5)
    # dealias mask keeps |k| <= 2/3 k_nyq on every axis
    assert g.dealias_mask.sum() < g.dealias_mask.size


@pytest.mark.parametrize("n", [2, 3])
def test_radial_volume_matches_ball(n):
    R = 3.0
    rg = grid.radial_grid(grid.hyperbolic(n, 400, R))
    if n == 2:
        exact = 2.0 * math.pi * (math.cosh(R) - 1.0)
    else:
        exact = 4.0 * math.pi * (0.25 * math.sinh(2 * R) - 0.5 * R)
    assert rg.total_volume == pytest.approx(exact, rel=1e-12)


# ---------------------------------------------------------------- states

def test_state_shape_and_readonly():
    spec = grid.euclidean(1, 64, 10.0)
    s = build_state(spec, [Gaussian(1.0)])
    assert s.components.shape == (1, 64)
    with pytest.raises(ValueError):
        s.components[0, 0] = 3.0
    with pytest.raises(ParameterError):
        StateVector(spec, 0.0, np.zeros((1, 32)))


def test_build_state_phases_and_centers():
    spec = grid.euclidean(1, 512, 64.0)
    s = build_state(spec, [Gaussian(1.0, 1.0, (2.0,)), Sech(0.5)], phases=[math.pi / 2, 0.0])
    x = grid.euclidean_grid(spec).axis
    assert np.allclose(s.components[0], 1j * np.exp(-0.5 * (x - 2.0) ** 2), atol=1e-15)
    assert np.allclose(s.components[1].real, 0.5 / np.cosh(x))


def test_build_state_errors():
    spec = grid.euclidean(1, 64, 10.0)
    with pytest.raises(ParameterError):
        build_state(spec, [])
    with pytest.raises(ParameterError):
        build_state(spec, [Gaussian(1.0)], phases=[0.0, 1.0])
    with pytest.raises(ConstructionError):
        build_state(spec, [Sampled(np.full(64, np.nan))])
    with pytest.raises(ParameterError):
        build_state(grid.sphere(4), [Gaussian(1.0)])


def test_truncation_warning():
    with pytest.warns(DomainTruncationWarning):
        build_state(grid.euclidean(1, 64, 3.0), [Gaussian(1.0)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_state(grid.euclidean(1, 256, 20.0), [Gaussian(1.0)])


# ---------------------------------------------------------------- functionals

def _gaussian_closed_form(n, A, sigma, p, mu):
    m2 = A ** 2 * (math.pi * sigma ** 2) ** (n / 2)
    K = 0.5 * m2 * n / (2 * sigma ** 2)
    # int exp(-(p+1) r^2 / (2 sigma^2)) = (2 pi sigma^2 / (p+1))^{n/2}
    P = mu * A ** (p + 1) * (2 * math.pi * sigma ** 2 / (p + 1)) ** (n / 2)
    return m2, K, P


@pytest.mark.parametrize("n, pts, L", [(1, 512, 20.0), (2, 128, 12.0), (3, 64, 12.0)])
@pytest.mark.parametrize("p", [3.0, 4.0])
def test_gaussian_functionals_closed_form(n, pts, L, p):
    A, sigma, mu = 1.3, 1.1, 0.7
    if p >= energy_critical_power(n):
        pytest.skip("outside the admissible range")
    params = scalar_params(n, p, mu=mu, lam=2.0)
    s = build_state(grid.euclidean(n, pts, L), [Gaussian(A, sigma)])
    rep = compute_functionals(s, params)
    m2, K, P = _gaussian_closed_form(n, A, sigma, p, mu)
    assert rep.M == pytest.approx(math.sqrt(m2), rel=1e-12)
    assert rep.K == pytest.approx(K, rel=1e-10)
    assert rep.P == pytest.approx(P, rel=1e-12)
    assert rep.M_lambda ** 2 == pytest.approx(0.5 * 2.0 * m2, rel=1e-12)
    assert rep.E == pytest.approx(K - P / (p + 1), rel=1e-10)
    c = n * (p - 1) / (4 * (p + 1))
    assert rep.Q == pytest.approx(K - c * P, rel=1e-9, abs=1e-12)


def test_cross_term_counted_twice():
    """Equal components with coupling beta: P = 2 int (mu + beta)|phi|^{p+1}."""
    spec = grid.euclidean(1, 512, 20.0)
    params = coupled(p=3.0, beta=0.5)
    s = build_state(spec, [Gaussian(1.0)] * 2)
    scalar = compute_functionals(build_state(spec, [Gaussian(1.0)]), scalar_params(1, 3.0))
    rep = compute_functionals(s, params)
    assert rep.P == pytest.approx(2 * 1.5 * scalar.P, rel=1e-13)


def test_radial_functionals_gaussian():
    """Radial mass quadrature converges at second order to an independent quad."""
    from scipy import integrate
    n, R = 3, 10.0
    exact, _ = integrate.quad(lambda r: 4 * math.pi * np.exp(-r * r) * np.sinh(r) ** 2, 0, R)
    errs = []
    for pts in (1000, 2000):
        s = build_state(grid.hyperbolic(n, pts, R), [Gaussian(1.0)])
        errs.append(abs(compute_functionals(s, scalar_params(n, 3.0)).M ** 2 - exact) / exact)
    assert errs[1] < 1e-5
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_nonfinite_state_rejected():
    spec = grid.euclidean(1, 64, 10.0)
    comps = np.zeros((1, 64), dtype=complex)
    comps[0, 3] = np.inf
    with pytest.raises(EvaluationError):
        compute_functionals(StateVector(spec, 0.0, comps), scalar_params(1, 3.0))


def test_n_mismatch_rejected():
    spec = grid.euclidean(1, 256, 20.0)
    with pytest.raises(ParameterError):
        compute_functionals(build_state(spec, [Gaussian(1.0)]), coupled())


@pytest.mark.filterwarnings("ignore::cnls.state.DomainTruncationWarning")
@settings(max_examples=40, deadline=None)
@given(A=st.floats(0.2, 2.0), B=st.floats(0.2, 2.0), sigma=st.floats(0.6, 2.0),
       p=st.sampled_from([3.0, 5.0, 7.0]), beta=st.floats(-0.5, 2.0))
def test_q_from_s_and_pohozaev(A, B, sigma, p, beta):
    """Q = (n S / 2 - Pohozaev) / 2 holds for any field, not only solitary waves."""
    spec = grid.euclidean(1, 512, 25.0)
    params = coupled(p=p, beta=beta, lam=1.7)
    s = build_state(spec, [Gaussian(A, sigma), Sech(B, sigma)])
    rep = compute_functionals(s, params)
    poh = pohozaev(rep, 1, p)
    scale = rep.K + abs(rep.P) + rep.M_lambda ** 2
    assert 0.5 * (0.5 * rep.S - poh) == pytest.approx(rep.Q, abs=1e-12 * scale)


# ---------------------------------------------------------------- h(lambda)

LAMS = np.linspace(0.01, 0.99, 99)


@pytest.mark.parametrize("n, p", [(1, 7.0), (2, 4.0), (3, 3.0), (1, 9.0), (2, 3.5)])
def test_h_negative_supercritical(n, p):
    assert max(h_lambda(l, n, p) for l in LAMS) < 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_h_zero_at_critical(n):
    assert max(abs(h_lambda(l, n, 1 + 4 / n)) for l in LAMS) <= 1e-12


def test_h_matches_direct_formula():
    a = 3.0
    for l in (0.1, 0.5, 0.9):
        direct = l ** (-a) / (1 - l * l) * (1 - l ** a - 0.5 * a * (1 - l * l))
        assert h_lambda(l, 1, 7.0) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("lam, n, p", [(0.0, 1, 7.0), (1.0, 1, 7.0), (0.5, 1, 3.0)])
def test_h_rejects(lam, n, p):
    with pytest.raises(ParameterError):
        h_lambda(lam, n, p)

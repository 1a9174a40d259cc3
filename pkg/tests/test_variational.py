import math
import warnings

import numpy as np
import pytest
from scipy import integrate, optimize

from cnls import grid
from cnls.errors import ContractError, NoScalingError, ParameterError
from cnls.functionals import compute_functionals
from cnls.params import scalar_params
from cnls.state import Gaussian, Sech, StateVector, build_state
from cnls.variational import (action_profile, check_range, constraint_value,
                              estimate_threshold, gaussian_family, ground_state_solve,
                              scale_to_constraint, stationarity_residual, verify_stationarity)

from conftest import coupled

EUC = grid.euclidean(1, 1024, 20.0)


def _estimate(kind, params, spec=EUC, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return estimate_threshold(kind, params, spec, **kw)


def _sech_profile(p, lam=1.0):
    """Positive solution of w'' - lam w + w^p = 0 on the line."""
    amp = ((p + 1) * lam / 2) ** (1 / (p - 1))
    rate = (p - 1) * math.sqrt(lam) / 2

    def w(x):
        return amp / np.cosh(rate * x) ** (2 / (p - 1))

    def dw(x):
        return -amp * (2 / (p - 1)) * rate * np.tanh(rate * x) / np.cosh(rate * x) ** (2 / (p - 1))

    return w, dw


def _profile_integrals(p, lam=1.0):
    w, dw = _sech_profile(p, lam)
    m2 = integrate.quad(lambda x: 2 * w(x) ** 2, 0, 60, limit=200)[0]
    k = integrate.quad(lambda x: dw(x) ** 2, 0, 60, limit=200)[0]  # half of int over R, doubled
    P = integrate.quad(lambda x: 2 * w(x) ** (p + 1), 0, 60, limit=200)[0]
    return m2, k, P


def _d_two_oracle(p, gamma):
    """inf of M^gamma + E over Q = 0 for n = 1: dilate and rescale the sech profile.

    w(s x) has M^2 = m2/s, K = k s, P = P/s; the amplitude a puts it on Q = 0.
    """
    m2, k, P = _profile_integrals(p)
    c = (p - 1) / (4 * (p + 1))
    theta = 1 - 1 / (c * (p + 1))

    def value(logs):
        s = math.exp(logs)
        ks, Ps, ms = k * s, P / s, m2 / s
        a = (ks / (c * Ps)) ** (1 / (p - 1))
        return (a * a * ms) ** (gamma / 2) + theta * a * a * ks

    res = optimize.minimize_scalar(value, bracket=(-2.0, 0.0, 2.0), tol=1e-12)
    return res.fun


# ---------------------------------------------------------------- oracles

def test_d_one_quintic_oracle():
    """At p = 5, n = 1: d_I = 6 inf M^4 K / P.

    The infimum is attained by 3^{1/4} sech(2x)^{1/2} and equals 3 pi^2/4.
    """
    m2, k, P = _profile_integrals(5.0)
    oracle = 6 * m2 ** 2 * k / P
    assert oracle == pytest.approx(3 * math.pi ** 2 / 4, rel=1e-12)
    est = _estimate("d_I", scalar_params(1, 5.0))
    assert est.value == pytest.approx(oracle, rel=1e-8)
    assert est.converged


def test_d_two_septic_oracle():
    oracle = _d_two_oracle(7.0, 2.0)
    assert oracle == pytest.approx(2.37958194032, rel=1e-10)
    est = _estimate("d_II", scalar_params(1, 7.0))
    assert est.value == pytest.approx(oracle, rel=1e-8)
    assert est.constraint_residual < 1e-10


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_d_two_gamma_family(gamma):
    # small gamma favours wide minimizers whose sech^{1/3} tails need the larger box
    est = _estimate("d_II", scalar_params(1, 7.0, gamma=gamma), grid.euclidean(1, 4096, 40.0))
    vals = list(est.family_values.values())
    assert est.value > 0
    assert (max(vals) - min(vals)) / min(vals) < 0.01
    assert est.value == pytest.approx(_d_two_oracle(7.0, gamma), rel=1e-7)


def test_d_two_lambda_mass_is_ground_state_action():
    """With M_lambda^2 = lam M^2 / 2 the objective on Q = 0 is the action, minimized by w."""
    m2, k, P = _profile_integrals(7.0)
    action = 0.5 * m2 + k - P / 8
    assert action == pytest.approx(1.33549520943, rel=1e-10)
    est = _estimate("d_II", scalar_params(1, 7.0), mass="M_lambda")
    assert est.value == pytest.approx(action, rel=1e-8)


def test_symmetric_coupling_equal_components():
    """1 + beta > 2^{(p-1)/2}: equal components win and d_I = 4/(1+beta) times the scalar value."""
    scalar = 3 * math.pi ** 2 / 4
    est = _estimate("d_I", coupled(p=5.0, beta=4.0))
    assert est.value == pytest.approx(4 / 5 * scalar, rel=1e-8)
    assert est.value == pytest.approx(5.92176264065, rel=1e-10)


def test_weak_coupling_semi_trivial():
    """1 + beta < 2^{(p-1)/2}: a single component does better, giving the scalar threshold."""
    est = _estimate("d_I", coupled(p=5.0, beta=1.0))
    assert est.value == pytest.approx(3 * math.pi ** 2 / 4, rel=1e-7)


def test_family_agreement_and_positivity():
    for kind, p in (("d_I", 5.0), ("d_II", 7.0)):
        est = _estimate(kind, scalar_params(1, p))
        vals = list(est.family_values.values())
        assert len(vals) == 2
        assert min(vals) > 0
        assert (max(vals) - min(vals)) / min(vals) < 0.01


@pytest.mark.parametrize("kind, n, p, spec", [
    ("d_HnI", 3, 4.0, grid.hyperbolic(3, 500, 10.0)),
    ("d_HnII", 3, 3.0, grid.hyperbolic(3, 500, 10.0)),
    ("d_HnII_star", 3, 4.0, grid.hyperbolic(3, 500, 10.0)),
    ("d_S2", 2, 6.0, grid.sphere(16)),
])
def test_curved_estimates_positive(kind, n, p, spec):
    est = _estimate(kind, scalar_params(n, p), spec)
    assert est.value > 0
    assert est.band < 0.01
    assert est.upper_bound


# ---------------------------------------------------------------- scaling

def _random_state(rng, spec):
    comps = [Gaussian(rng.uniform(0.3, 2.0), rng.uniform(0.5, 2.0), (rng.uniform(-3, 3),)),
             Sech(rng.uniform(0.3, 2.0), rng.uniform(0.5, 2.0), (rng.uniform(-3, 3),))]
    phases = rng.uniform(0, 2 * math.pi, 2)
    return build_state(spec, comps, phases)


@pytest.mark.filterwarnings("ignore::cnls.state.DomainTruncationWarning")
@pytest.mark.parametrize("constraint, p", [("Q", 7.0), ("G", 5.0), ("G", 7.0)])
def test_scale_to_constraint_against_bisection(rng, constraint, p):
    spec = grid.euclidean(1, 256, 40.0)
    params = coupled(p=p, beta=rng.uniform(0.1, 2.0))
    for _ in range(100):
        u = _random_state(rng, spec)
        k = scale_to_constraint(u, params, constraint)

        def f(t):
            return constraint_value(compute_functionals(u.scaled(t), params), constraint, params)

        root = optimize.brentq(f, 1e-3, 1e3, xtol=1e-14, rtol=1e-13)
        assert k == pytest.approx(root, rel=1e-10)
        c = rng.uniform(0.2, 5.0)
        assert scale_to_constraint(u.scaled(c), params, constraint) == pytest.approx(k / c,
                                                                                     rel=1e-12)


def test_scale_needs_positive_potential():
    spec = grid.euclidean(1, 256, 40.0)
    params = coupled(p=7.0, beta=-3.0)
    # equal components with strong repulsion: P = 2(1 + beta) int |u|^8 < 0
    u = build_state(spec, [Gaussian(1.0)] * 2)
    with pytest.raises(NoScalingError):
        scale_to_constraint(u, params, "Q")
    with pytest.raises(ParameterError):
        scale_to_constraint(u, params, "nope")


@pytest.mark.parametrize("kind, n, p", [("d_I", 1, 4.9), ("d_II", 1, 5.0), ("d_S2", 2, 5.0),
                                        ("d_HnII_star", 3, 3.0), ("zzz", 1, 7.0)])
def test_range_checks(kind, n, p):
    with pytest.raises(ParameterError):
        check_range(kind, n, p)


def test_estimate_contracts():
    with pytest.raises(ContractError):
        _estimate("d_II", scalar_params(1, 7.0), grid.hyperbolic(2, 100, 10.0))
    with pytest.raises(ParameterError):
        _estimate("d_I", scalar_params(1, 7.0), mass="M_lambda")


def test_custom_family_is_an_upper_bound():
    full = _estimate("d_II", scalar_params(1, 7.0))
    gauss = _estimate("d_II", scalar_params(1, 7.0), families=[gaussian_family(1, EUC)])
    assert gauss.value >= full.value * (1 - 1e-12)


# ---------------------------------------------------------------- ground states

GS_SPEC = grid.euclidean(1, 2048, 28.0)


@pytest.fixture(scope="module")
def septic_ground_state():
    params = scalar_params(1, 7.0)
    return params, ground_state_solve(params, GS_SPEC)


def test_ground_state_closed_form(septic_ground_state):
    params, gs = septic_ground_state
    w, _ = _sech_profile(7.0)
    x = grid.euclidean_grid(GS_SPEC).axis
    assert gs.accepted
    assert np.max(np.abs(gs.w.components[0].real - w(x))) < 1e-8


def test_ground_state_identities(septic_ground_state):
    params, gs = septic_ground_state
    rep = verify_stationarity(gs, params)
    assert gs.residual <= 1e-8
    assert rep.ok
    assert max(rep.S_rel, rep.pohozaev_rel, rep.Q_rel) <= 1e-6
    assert rep.Q_from_identities == pytest.approx(rep.Q, abs=1e-10)


def test_action_profile_decreasing(septic_ground_state):
    params, gs = septic_ground_state
    ks = np.linspace(1.0, 2.0, 21)[1:]
    value, S, Q = action_profile(gs, params, ks)
    assert np.all(np.diff(value) < 0)
    assert np.all(S < 0) and np.all(Q < 0)
    direct = [compute_functionals(gs.w.scaled(k), params.with_(lam=gs.lam)) for k in ks[:3]]
    for v, rep in zip(value, direct):
        assert v == pytest.approx(rep.M_lambda ** 2 + rep.E, rel=1e-12)


def test_coupled_ground_state_equal_components():
    """Equal lambdas and beta: w_j = (1 + beta)^{-1/(p-1)} times the scalar profile."""
    params = coupled(p=3.0, beta=0.5)
    spec = grid.euclidean(1, 512, 20.0)
    gs = ground_state_solve(params, spec)
    w, _ = _sech_profile(3.0)
    x = grid.euclidean_grid(spec).axis
    expect = 1.5 ** (-0.5) * w(x)
    assert gs.accepted
    for j in range(2):
        assert np.max(np.abs(gs.w.components[j].real - expect)) < 1e-8
    assert stationarity_residual(gs.w, params, gs.lam) <= 1e-8


def test_ground_state_rejects_curved_grid():
    with pytest.raises(ContractError):
        ground_state_solve(scalar_params(2, 3.0), grid.hyperbolic(2, 100, 10.0))


def test_stationarity_residual_detects_wrong_profile():
    spec = grid.euclidean(1, 512, 20.0)
    s = StateVector(spec, 0.0, build_state(spec, [Gaussian(1.0)]).components)
    assert stationarity_residual(s, scalar_params(1, 3.0), [1.0]) > 1e-2

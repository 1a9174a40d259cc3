import math

import numpy as np
import pytest

from cnls import grid, records
from cnls.errors import ContractError, ParameterError
from cnls.functionals import compute_functionals
from cnls.params import linear_params, scalar_params
from cnls.records import RunRecord, SolverConfig
from cnls.spectral import (Propagator, detect_blowup, evolve, spectral_tail_fraction, step)
from cnls.state import Gaussian, Sech, StateVector, build_state
from cnls.virial import VirialSample

from conftest import coupled


def test_free_gaussian_matches_closed_form():
    """phi_t = i phi_xx from exp(-x^2/(2 s^2)): s / sqrt(s^2 + 2it) exp(-x^2 / (2(s^2 + 2it)))."""
    spec = grid.euclidean(1, 1024, 40.0)
    s0 = build_state(spec, [Gaussian(1.0, 1.0)])
    rec = evolve(s0, linear_params(1), SolverConfig(dt0=0.05, t_max=2.0, sample_interval=0.5))
    x = grid.euclidean_grid(spec).axis
    t = rec.final_state.t
    z = 1.0 + 2j * t
    exact = np.exp(-x ** 2 / (2 * z)) / np.sqrt(z)
    assert t == pytest.approx(2.0)
    assert np.max(np.abs(rec.final_state.components[0] - exact)) < 1e-12


def test_step_matches_evolve():
    spec = grid.euclidean(1, 256, 20.0)
    params = scalar_params(1, 3.0)
    s = build_state(spec, [Gaussian(1.0)])
    a = s
    for _ in range(10):
        a = step(a, params, 1e-3)
    rec = evolve(s, params, SolverConfig(dt0=1e-3, t_max=0.01, adaptive=False,
                                         sample_interval=0.01))
    np.testing.assert_allclose(rec.final_state.components, a.components, atol=1e-13)


def test_soliton_stays_put():
    spec = grid.euclidean(1, 1024, 32.0)
    x = grid.euclidean_grid(spec).axis
    w = math.sqrt(2.0) / np.cosh(x)
    s0 = StateVector(spec, 0.0, w[None, :])
    rec = evolve(s0, scalar_params(1, 3.0),
                 SolverConfig(dt0=2.5e-4, t_max=1.0, adaptive=False, sample_interval=0.5))
    exact = np.exp(1j * rec.final_state.t) * w
    err = math.sqrt(np.sum(np.abs(rec.final_state.components[0] - exact) ** 2) / np.sum(w * w))
    assert err < 1e-6
    assert rec.classification == records.GLOBAL


def test_coupled_conservation_short():
    spec = grid.euclidean(1, 1024, 40.0)
    params = coupled(p=3.0, beta=0.5)
    s0 = build_state(spec, [Gaussian(1.0), Gaussian(0.8, 1.5, (2.0,))])
    rec = evolve(s0, params, SolverConfig(dt0=1e-3, t_max=1.0, adaptive=False,
                                          sample_interval=0.1))
    assert rec.mass_drift < 1e-11
    assert rec.energy_drift < 1e-6
    assert len(rec.times) == 11
    assert rec.times[-1] == pytest.approx(1.0)


def test_adaptive_step_stays_at_or_below_dt0():
    spec = grid.euclidean(1, 256, 20.0)
    s0 = build_state(spec, [Gaussian(5.0, 2.0)])
    # the nonlinear phase 25 dt exceeds 0.05 pi at dt = 1e-2, so steps get rejected
    rec = evolve(s0, scalar_params(1, 3.0), SolverConfig(dt0=1e-2, t_max=0.1, cfl_safety=0.05))
    assert max(rec.dts) <= 1e-2
    assert rec.diagnostics["rejected"] > 0
    assert min(rec.dts) < 1e-2


def test_dealias_removes_top_third():
    spec = grid.euclidean(1, 64, 10.0)
    g = grid.euclidean_grid(spec)
    comps = np.exp(1j * g.kaxis.max() * g.axis)[None, :]
    out, _ = Propagator(spec).advance(comps, scalar_params(1, 3.0), 1e-3)
    assert np.max(np.abs(out)) < 1e-12


def test_tail_fraction_extremes():
    spec = grid.euclidean(1, 256, 20.0)
    smooth = build_state(spec, [Gaussian(1.0, 2.0)])
    assert spectral_tail_fraction(smooth, spec) < 1e-12
    g = grid.euclidean_grid(spec)
    k = 0.5 * (2.0 / 3.0) * g.knyq + 0.4 * (2.0 / 3.0) * g.knyq
    rough = np.cos(k * g.axis)[None, :]
    assert spectral_tail_fraction(rough, spec) > 0.9


def _history():
    rec = RunRecord()
    rep = compute_functionals(build_state(grid.euclidean(1, 256, 20.0), [Gaussian(1.0)]),
                              scalar_params(1, 3.0))
    rec.append(0.0, rep, VirialSample(0.0, 0.0, 0.0, "="), 1e-3)
    return rec, rep.K


def test_detection_predicate_needs_all_three():
    spec = grid.euclidean(1, 256, 20.0)
    rec, K0 = _history()
    cfg = SolverConfig(dt_min=1e-6, blowup_gradnorm_factor=10.0)
    state = build_state(spec, [Gaussian(1.0)])
    big, small = 100 * K0, 2 * K0
    assert detect_blowup(rec, state, cfg, dt=5e-6, K=big, tail=0.5)
    assert not detect_blowup(rec, state, cfg, dt=1e-4, K=big, tail=0.5)     # dt not collapsed
    assert not detect_blowup(rec, state, cfg, dt=5e-6, K=small, tail=0.5)   # no growth
    assert not detect_blowup(rec, state, cfg, dt=5e-6, K=big, tail=0.05)    # resolved spectrum
    with pytest.raises(ContractError):
        detect_blowup(RunRecord(), state, cfg)


def test_supercritical_collapse_detected():
    spec = grid.euclidean(1, 4096, 28.0)
    s0 = build_state(spec, [Gaussian(1.8)])
    dx = grid.euclidean_grid(spec).dx
    cfg = SolverConfig(dt0=1e-3, t_max=2.0, cfl_safety=0.05, dispersion_cfl=1.0,
                       dt_min=0.01 * dx * dx, blowup_gradnorm_factor=1e3, sample_interval=0.01)
    rec = evolve(s0, scalar_params(1, 7.0), cfg)
    assert rec.classification == records.BLOWUP
    assert rec.t_star is not None and rec.t_star < 1.0
    assert rec.diagnostics["stop_reason"] in ("blow-up predicate", "dt underflow")


def test_solver_config_validation():
    with pytest.raises(ParameterError):
        SolverConfig(dt0=1e-9, dt_min=1e-8)
    with pytest.raises(ParameterError):
        SolverConfig(cfl_safety=2.0)
    with pytest.raises(ParameterError):
        SolverConfig(dispersion_cfl=0.0)


def test_evolve_contracts():
    spec = grid.euclidean(1, 256, 20.0)
    s0 = build_state(spec, [Gaussian(1.0)])
    with pytest.raises(ContractError):
        evolve(StateVector(spec, 1.0, s0.components), scalar_params(1, 3.0), SolverConfig())
    with pytest.raises(ContractError):
        evolve(s0, coupled(), SolverConfig())
    with pytest.raises(ContractError):
        evolve(build_state(grid.hyperbolic(2, 100, 10.0), [Gaussian(1.0)]),
               scalar_params(2, 3.0), SolverConfig())


def test_sech_data_below_critical_is_global():
    """Mass-subcritical cubic NLS in 1D is globally well posed."""
    spec = grid.euclidean(1, 1024, 40.0)
    s0 = build_state(spec, [Sech(2.0)])
    rec = evolve(s0, scalar_params(1, 3.0), SolverConfig(dt0=1e-3, t_max=1.0, cfl_safety=0.1))
    assert rec.classification == records.GLOBAL
    assert rec.mass_drift < 1e-10

"""Strang split-step pseudospectral integration on the periodic box.

One step: half free step exp(-i k^2 dt/2) in Fourier space, exact
pointwise phase rotation by the (real) nonlinear multiplier, 2/3-rule
mask, second half free step.  Mass is conserved by every substep up to
the energy removed by the mask.
"""
import math
import warnings

import numpy as np
from scipy import fft as sfft

from . import grid as grids
from . import kernels
from . import records
from .errors import ContractError, SolverOverflow
from .functionals import compute_functionals
from .params import SystemParams
from .records import RunRecord, SolverConfig
from .state import DomainTruncationWarning, StateVector, boundary_fraction
from .virial import virial_quantities
from .weights import WeightSpec, default_weight


class Propagator:
    """Cached free half-step multipliers and the dealias mask for one grid."""

    def __init__(self, spec: grids.GridSpec, dealias=True):
        if spec.manifold != grids.EUCLIDEAN:
            raise ContractError("the spectral solver needs a euclidean grid")
        self.spec = spec
        self.grid = grids.euclidean_grid(spec)
        self.axes = tuple(range(-spec.n, 0))
        self.mask = self.grid.dealias_mask if dealias else None
        self._half = {}

    def half(self, dt):
        mult = self._half.get(dt)
        if mult is None:
            if len(self._half) > 8:
                self._half.clear()
            mult = np.exp(-0.5j * dt * self.grid.k2)
            self._half[dt] = mult
        return mult

    def advance(self, phi, params: SystemParams, dt):
        """Return (new array, max nonlinear phase applied).  ``phi`` is untouched."""
        half = self.half(dt)
        hat = sfft.fftn(phi, axes=self.axes)
        hat *= half
        mid = sfft.ifftn(hat, axes=self.axes)
        flat = mid.reshape(mid.shape[0], -1)
        with np.errstate(all="ignore"):
            phase = kernels.rotate_phase(flat, params.mu, params.beta, params.p, dt)
        hat = sfft.fftn(mid, axes=self.axes)
        if self.mask is not None:
            hat *= self.mask
        hat *= half
        return sfft.ifftn(hat, axes=self.axes), phase


def step(state: StateVector, params: SystemParams, dt: float, dealias=True) -> StateVector:
    """One Strang step of size dt."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    prop = Propagator(state.grid, dealias)
    out, _ = prop.advance(np.array(state.components), params, dt)
    if not np.all(np.isfinite(out)):
        raise SolverOverflow(f"non-finite field after step at t={state.t}", state)
    return StateVector(state.grid, state.t + dt, out)


def spectral_tail_fraction(state_or_array, spec: grids.GridSpec, dealias=True) -> float:
    """Share of k^2 |phi_hat|^2 in the top third of the retained band."""
    comps = getattr(state_or_array, "components", state_or_array)
    g = grids.euclidean_grid(spec)
    hat = sfft.fftn(comps, axes=tuple(range(-spec.n, 0)))
    dens = g.k2 * np.sum(np.abs(hat) ** 2, axis=0)
    total = dens.sum()
    if total == 0:
        return 0.0
    return float(dens[g.tail_mask(dealias)].sum() / total)


def detect_blowup(history: RunRecord, state: StateVector, config: SolverConfig, dt=None,
                  K=None, tail=None) -> bool:
    """The three-part blow-up predicate (gradient growth, tail saturation, dt collapse)."""
    if not history.reports:
        raise ContractError("blow-up detection needs at least one prior sample")
    if dt is None:
        dt = history.dts[-1]
    if not dt < 10.0 * config.dt_min:
        return False
    K0 = history.reports[0].K
    if K is None:
        K = _kinetic(state)
    if not K > config.blowup_gradnorm_factor * K0:
        return False
    if tail is None:
        tail = tail_fraction(state, config.dealias)
    return tail > config.blowup_tail_fraction


def tail_fraction(state: StateVector, dealias=True) -> float:
    if state.grid.manifold == grids.EUCLIDEAN:
        return spectral_tail_fraction(state, state.grid, dealias)
    from .hyperbolic import radial_tail_fraction
    return radial_tail_fraction(state)


def _kinetic(state: StateVector) -> float:
    comps = state.components
    if state.grid.manifold == grids.EUCLIDEAN:
        g = grids.euclidean_grid(state.grid)
        hat = sfft.fftn(comps, axes=tuple(range(-state.grid.n, 0)))
        return 0.5 * float(np.sum(g.k2 * np.abs(hat) ** 2)) * g.dV / np.prod(g.shape)
    from .functionals import radial_gradient_energy
    return 0.5 * float(np.sum(radial_gradient_energy(comps, grids.radial_grid(state.grid))))


class _Sampler:
    """Records functionals and virial data; tracks drifts and truncation."""

    def __init__(self, record, params, weight, config):
        self.record = record
        self.params = params
        self.weight = weight
        self.config = config
        self.M0 = None
        self.E0 = None
        self.warned = False
        self.observer = None

    def __call__(self, state, dt):
        report = compute_functionals(state, self.params)
        if self.observer is not None:
            self.observer(state, report)
        vq = virial_quantities(state, self.weight, self.params, report)
        self.record.append(state.t, report, vq, dt)
        if self.M0 is None:
            self.M0, self.E0 = report.M, report.E
        else:
            if self.M0 > 0:
                drift = abs(report.M - self.M0) / self.M0
                self.record.mass_drift = max(self.record.mass_drift, drift)
            escale = abs(self.E0) if self.E0 != 0 else max(report.K, 1e-300)
            if report.K > 0 or self.E0 != 0:
                edrift = abs(report.E - self.E0) / escale
                self.record.energy_drift = max(self.record.energy_drift, edrift)
        frac = boundary_fraction(state.grid, state.components)
        diag = self.record.diagnostics
        diag["max_boundary_fraction"] = max(diag.get("max_boundary_fraction", 0.0), frac)
        if frac > self.config.boundary_guard and not self.warned:
            self.warned = True
            warnings.warn(
                f"boundary mass fraction {frac:.2e} exceeds {self.config.boundary_guard:.0e} "
                f"at t={state.t:.6g}", DomainTruncationWarning, stacklevel=3)
        return report


def run_loop(state0, params, config: SolverConfig, weight, advance, mass_of, dt_cap=math.inf,
             on_sample=None):
    """Adaptive Strang loop shared by the euclidean and radial solvers.

    ``advance(phi, dt) -> (new_phi, max_phase)``; ``mass_of(phi)`` gives M^2.
    ``on_sample(state, report)`` is called at every recorded sample.
    """
    if state0.t != 0:
        raise ContractError("evolution starts from a state at t = 0")
    if params.N != state0.N:
        raise ContractError(f"params describe N={params.N}, state has {state0.N} components")
    record = RunRecord(weight_kind=weight.kind)
    sample = _Sampler(record, params, weight, config)
    spec = state0.grid
    phi = np.array(state0.components)
    dt_ceiling = min(config.dt0, dt_cap)
    if dt_ceiling < config.dt_min:
        raise ContractError(f"step cap {dt_ceiling:.3e} is below dt_min={config.dt_min:.3e}")
    t, dt = 0.0, dt_ceiling
    sample.observer = on_sample
    sample(state0, dt)
    m2_0 = mass_of(phi)
    interval = config.sample_interval
    n_sample = 1
    next_t = min(interval, config.t_max)
    steps = rejected = 0
    max_tail = 0.0
    limit = config.phase_limit
    classification = None
    diag = record.diagnostics
    while classification is None:
        h = dt
        landing = t + h >= next_t - 1e-9 * dt
        if landing:
            h = next_t - t
        trial, phase = advance(phi, h)
        finite = bool(np.all(np.isfinite(trial)))
        if not finite or (config.adaptive and phase > limit):
            rejected += 1
            if dt / 2.0 < config.dt_min:
                current = StateVector(spec, t, phi)
                tail = tail_fraction(current, config.dealias)
                max_tail = max(max_tail, tail)
                fired = detect_blowup(record, current, config, dt=config.dt_min, tail=tail)
                classification = records.BLOWUP if fired else records.INCONCLUSIVE
                diag["stop_reason"] = "dt underflow"
                break
            dt /= 2.0
            continue
        phi = trial
        steps += 1
        t = next_t if landing else t + h
        if config.adaptive and phase < 0.1 * limit and not landing:
            dt = min(dt * 1.2, dt_ceiling)
        if steps % config.conservation_check_interval == 0 and m2_0 > 0:
            diag["mass_check_drift"] = max(diag.get("mass_check_drift", 0.0),
                                           abs(math.sqrt(mass_of(phi) / m2_0) - 1.0))
        current = None
        if landing:
            current = StateVector(spec, t, phi)
            sample(current, dt)
            n_sample += 1
            if t >= config.t_max:
                classification = records.GLOBAL
                break
            next_t = min(n_sample * interval, config.t_max)
        if dt < 10.0 * config.dt_min:
            current = current or StateVector(spec, t, phi)
            K = _kinetic(current)
            if K > config.blowup_gradnorm_factor * record.reports[0].K:
                tail = tail_fraction(current, config.dealias)
                max_tail = max(max_tail, tail)
                if detect_blowup(record, current, config, dt=dt, K=K, tail=tail):
                    if not landing:
                        sample(current, dt)
                    classification = records.BLOWUP
                    diag["stop_reason"] = "blow-up predicate"
                    break
        if steps >= config.max_steps:
            classification = records.INCONCLUSIVE
            diag["stop_reason"] = "step budget exhausted"
            break
    final = StateVector(spec, t, phi)
    if classification == records.BLOWUP:
        record.t_star = t
    elif classification == records.GLOBAL:
        # a run that lost resolution is not evidence of global existence
        tail = tail_fraction(final, config.dealias)
        max_tail = max(max_tail, tail)
        if tail > config.blowup_tail_fraction:
            classification = records.INCONCLUSIVE
            diag["stop_reason"] = "spectral tail saturated at horizon"
    record.classification = classification
    record.final_state = final
    diag.update(steps=steps, rejected=rejected, final_dt=dt, max_tail_fraction=max_tail)
    return record


def evolve(state0: StateVector, params: SystemParams, config: SolverConfig,
           virial_weight: WeightSpec = None, on_sample=None) -> RunRecord:
    """Integrate to ``config.t_max`` or until the blow-up predicate fires."""
    spec = state0.grid
    if spec.manifold != grids.EUCLIDEAN:
        raise ContractError("evolve integrates on the periodic box; use evolve_radial on H^n")
    weight = virial_weight or default_weight(spec)
    prop = Propagator(spec, config.dealias)
    dV = grids.euclidean_grid(spec).dV

    def advance(phi, h):
        return prop.advance(phi, params, h)

    def mass_of(phi):
        return float(np.sum(np.abs(phi) ** 2) * dV)

    cap = math.inf
    if config.dispersion_cfl is not None:
        kret = (2.0 / 3.0 if config.dealias else 1.0) * grids.euclidean_grid(spec).knyq
        cap = config.dispersion_cfl * math.pi / kret ** 2
    return run_loop(state0, params, config, weight, advance, mass_of, cap, on_sample)

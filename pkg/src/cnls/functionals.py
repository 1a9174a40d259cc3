"""Scalar functionals of a state: mass, energy, virial functionals.

Conventions follow the coupled system

    -i d_t phi_j = lap phi_j + mu_j |phi_j|^{p-1} phi_j
                   + sum_{i != j} beta_ij |phi_i|^{(p+1)/2} |phi_j|^{(p-3)/2} phi_j

with M = ||Phi||_2 (the norm, not its square), K = ||grad Phi||^2 / 2 and
P the testing functional (self terms plus both orders of every cross term).
"""
from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import fft as sfft

from . import grid as grids
from . import kernels
from .errors import EvaluationError, NumericalIntegrityError, ParameterError
from .params import SystemParams, critical_power
from .state import StateVector

# relative slack before a nonnegative quadrature is declared broken
_ROUNDOFF = 1e-12


@dataclass(frozen=True)
class FunctionalReport:
    M: float
    M_lambda: float
    K: float
    P: float
    E: float
    Q: float
    G: float
    S: float
    Q_star: float = None
    Q_dstar: float = None

    @classmethod
    def from_parts(cls, M, M_lambda, K, P, params: SystemParams, manifold=grids.EUCLIDEAN):
        """Assemble every derived functional from (M, M_lambda, K, P)."""
        p, n = params.p, params.n
        E = K - P / (p + 1.0)
        Q = K - params.virial_coefficient * P
        G = mass_power(M, params.mass_exponent) - P / (p + 1.0)
        S = 2.0 * K + 2.0 * M_lambda ** 2 - P
        Q_star = Q_dstar = None
        if manifold == grids.HYPERBOLIC:
            Q_star = K - (n - 1) * (p - 1.0) / (4.0 * (p + 1.0)) * P
        elif manifold == grids.SPHERE:
            Q_dstar = K - (p - 1.0) / (4.0 * (p + 1.0)) * P
        return cls(M=M, M_lambda=M_lambda, K=K, P=P, E=E, Q=Q, G=G, S=S,
                   Q_star=Q_star, Q_dstar=Q_dstar)

    def as_dict(self):
        return asdict(self)


def mass_power(M, exponent):
    """M**exponent with 0**e = 0 (G is continuous at the zero state)."""
    return 0.0 if M == 0 else M ** exponent


def pohozaev(report: FunctionalReport, n: int, p: float) -> float:
    """(n/2 - 1)||grad w||^2 + n M_lambda^2 - n P/(p+1)."""
    return (n / 2.0 - 1.0) * 2.0 * report.K + n * report.M_lambda ** 2 - n / (p + 1.0) * report.P


def flat(state: StateVector):
    return np.ascontiguousarray(state.components.reshape(state.N, -1))


def _check(state, params):
    if params.N != state.N:
        raise ParameterError(f"params describe N={params.N} components, state has {state.N}")
    if not state.is_finite():
        raise EvaluationError("state contains NaN or Inf")


def _nonneg(name, value, scale):
    if value < -_ROUNDOFF * max(scale, 1.0):
        raise NumericalIntegrityError(f"{name} = {value} < 0 beyond round-off")
    return max(value, 0.0)


def spectral(state_or_array, spec: grids.GridSpec):
    comps = getattr(state_or_array, "components", state_or_array)
    axes = tuple(range(-spec.n, 0))
    return sfft.fftn(comps, axes=axes)


def euclidean_parts(comps, params: SystemParams, spec: grids.GridSpec):
    g = grids.euclidean_grid(spec)
    dens = np.abs(comps) ** 2
    m2_j = dens.reshape(comps.shape[0], -1).sum(axis=1) * g.dV
    hat = sfft.fftn(comps, axes=tuple(range(-spec.n, 0)))
    npts = np.prod(g.shape)
    kin = 0.5 * float(np.sum(g.k2 * np.abs(hat) ** 2)) * g.dV / npts
    flatc = np.ascontiguousarray(comps.reshape(comps.shape[0], -1))
    P = float(kernels.potential_density(flatc, params.mu, params.beta, params.p).sum() * g.dV)
    return m2_j, kin, P


def radial_parts(comps, params: SystemParams, spec: grids.GridSpec):
    rg = grids.radial_grid(spec)
    m2_j = (np.abs(comps) ** 2 * rg.volume).sum(axis=1)
    kin = 0.5 * float(np.sum(radial_gradient_energy(comps, rg)))
    P = float((kernels.potential_density(np.ascontiguousarray(comps), params.mu, params.beta,
                                         params.p) * rg.volume).sum())
    return m2_j, kin, P


def radial_gradient_energy(comps, rg: grids.RadialGrid):
    """||grad phi_j||^2 per component from the face differences (Dirichlet at R)."""
    diff = comps[:, 1:] - comps[:, :-1]
    interior = (rg.face_area[1:-1] * np.abs(diff) ** 2).sum(axis=1) / rg.h
    edge = 2.0 * rg.face_area[-1] * np.abs(comps[:, -1]) ** 2 / rg.h
    return interior + edge


def compute_functionals(state: StateVector, params: SystemParams) -> FunctionalReport:
    """All scalar functionals of one snapshot, evaluated by grid quadrature."""
    spec = state.grid
    if spec.manifold == grids.SPHERE:
        from .sphere import compute_sphere_functionals
        return compute_sphere_functionals(state, params)
    _check(state, params)
    if spec.manifold == grids.EUCLIDEAN:
        m2_j, K, P = euclidean_parts(state.components, params, spec)
    else:
        m2_j, K, P = radial_parts(state.components, params, spec)
    m2 = _nonneg("M^2", float(m2_j.sum()), 1.0)
    K = _nonneg("K", K, 1.0)
    ml2 = _nonneg("M_lambda^2", float(0.5 * np.dot(params.lam, m2_j)), 1.0)
    return FunctionalReport.from_parts(math.sqrt(m2), math.sqrt(ml2), K, P, params, spec.manifold)


def h_lambda(lam: float, n: int, p: float) -> float:
    """The auxiliary function h from the threshold-I blow-up argument.

    h(l) = l^{-a} / (1 - l^2) * (1 - l^a - (a/2)(1 - l^2)),  a = n(p-1)/2.
    Strictly negative on (0, 1) for p > 1 + 4/n, identically zero at
    p = 1 + 4/n.
    """
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"lambda must lie in (0, 1), got {lam}")
    pc = critical_power(n)
    if p < pc and not math.isclose(p, pc, rel_tol=1e-14):
        raise ParameterError(f"h is only used for p >= 1+4/n = {pc}, got {p}")
    a = 2.0 if math.isclose(p, pc, rel_tol=1e-14) else n * (p - 1.0) / 2.0
    log_l = math.log(lam)
    one_minus_la = -math.expm1(a * log_l)
    one_minus_l2 = -math.expm1(2.0 * log_l)
    bracket = one_minus_la - 0.5 * a * one_minus_l2
    return math.exp(-a * log_l) / one_minus_l2 * bracket

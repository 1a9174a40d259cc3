"""Constrained variational thresholds and ground solitary waves.

Every threshold is the infimum of an objective over a constraint set
{C = 0} that the ray k -> k u crosses exactly once when P(u) > 0.  The
crossing amplitude k*(u) is closed form, so each threshold is the
unconstrained minimum of the reduced objective F(k*(u) u).  That reduced
objective depends on u only through (M^2, M_lambda^2, K, P), and its
gradient is assembled by hand from the gradients of those functionals.

On R^n the reduced objective is further minimized over the L^2 dilation
u -> s^{n/2} u(s x) in closed form, which makes it depend on the shape of u
only.  Curved manifolds have no dilations; the family widths carry that
degree of freedom instead.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import fft as sfft
from scipy import optimize

from . import grid as grids
from . import kernels
from .errors import (ContractError, InfeasibleError, NoGroundStateError, NoScalingError,
                     ParameterError)
from .functionals import FunctionalReport, compute_functionals, mass_power, pohozaev
from .params import SystemParams, critical_power
from .state import StateVector

D_I = "d_I"
D_II = "d_II"
D_HN_I = "d_HnI"
D_HN_II = "d_HnII"
D_HN_II_STAR = "d_HnII_star"
D_S2 = "d_S2"
KINDS = (D_I, D_II, D_HN_I, D_HN_II, D_HN_II_STAR, D_S2)

G_CON, Q_CON, QSTAR_CON, QDSTAR_CON = "G", "Q", "Q*", "Q**"
CONSTRAINTS = (G_CON, Q_CON, QSTAR_CON, QDSTAR_CON)

_KIND_SETUP = {
    D_I: (grids.EUCLIDEAN, G_CON),
    D_II: (grids.EUCLIDEAN, Q_CON),
    D_HN_I: (grids.HYPERBOLIC, G_CON),
    D_HN_II: (grids.HYPERBOLIC, Q_CON),
    D_HN_II_STAR: (grids.HYPERBOLIC, QSTAR_CON),
    D_S2: (grids.SPHERE, QDSTAR_CON),
}

MASS_PLAIN = "M"
MASS_LAMBDA = "M_lambda"


def kind_manifold(kind):
    return _KIND_SETUP[kind][0]


def kind_constraint(kind):
    return _KIND_SETUP[kind][1]


def check_range(kind: str, n: int, p: float):
    """Raise ParameterError when p is outside the admissible range of the threshold."""
    if kind not in KINDS:
        raise ParameterError(f"unknown threshold kind {kind!r}; expected one of {KINDS}")
    pc = critical_power(n)
    if kind in (D_I, D_HN_I):
        if p < pc:
            raise ParameterError(f"{kind} needs p >= 1+4/n = {pc:g}, got p={p:g}")
    elif kind in (D_II, D_HN_II):
        if not p > pc:
            raise ParameterError(
                f"{kind} needs p > 1+4/n = {pc:g} (strict: the second-type threshold "
                f"excludes the critical power), got p={p:g}")
    elif kind == D_HN_II_STAR:
        if n < 2 or not p > 1.0 + 4.0 / (n - 1):
            bound = "inf" if n < 2 else f"{1.0 + 4.0 / (n - 1):g}"
            raise ParameterError(f"{kind} needs n >= 2 and p > 1+4/(n-1) = {bound}, got n={n}, "
                                 f"p={p:g}")
    else:
        if n != 2 or not p > 5.0:
            raise ParameterError(f"{kind} needs n = 2 and p > 5, got n={n}, p={p:g}")


def constraint_coefficient(constraint: str, n: int, p: float) -> float:
    """c in C = K - c P for the Q-type constraints."""
    base = (p - 1.0) / (4.0 * (p + 1.0))
    if constraint == Q_CON:
        return n * base
    if constraint == QSTAR_CON:
        return (n - 1) * base
    if constraint == QDSTAR_CON:
        return base
    raise ParameterError(f"{constraint} is not a Q-type constraint")


def constraint_value(report: FunctionalReport, constraint: str, params: SystemParams) -> float:
    if constraint == G_CON:
        return report.G
    if constraint == Q_CON:
        return report.Q
    if constraint == QSTAR_CON:
        if report.Q_star is None:
            raise ContractError("Q* is defined on hyperbolic grids only")
        return report.Q_star
    if constraint == QDSTAR_CON:
        if report.Q_dstar is None:
            raise ContractError("Q** is defined on sphere grids only")
        return report.Q_dstar
    raise ParameterError(f"unknown constraint {constraint!r}")


def constraint_scale(report: FunctionalReport, constraint: str, params: SystemParams) -> float:
    """Size of the two cancelling terms; relative constraint residuals use it."""
    if constraint == G_CON:
        return mass_power(report.M, params.mass_exponent) + abs(report.P) / (params.p + 1.0)
    c = constraint_coefficient(constraint, params.n, params.p)
    return report.K + c * abs(report.P)


def scale_to_constraint(u: StateVector, params: SystemParams, constraint: str) -> float:
    """Amplitude k* > 0 with constraint(k* u) = 0."""
    if constraint not in CONSTRAINTS:
        raise ParameterError(f"unknown constraint {constraint!r}")
    report = compute_functionals(u, params)
    return _scale(report.M ** 2, report.K, report.P, constraint, params)


def _scale(m2, K, P, constraint, params):
    p, n = params.p, params.n
    if not P > 0:
        raise NoScalingError(f"P(u) = {P:.3e} <= 0: the constraint is unreachable by scaling")
    if constraint == G_CON:
        if not m2 > 0:
            raise NoScalingError("zero field")
        e = params.mass_exponent
        return ((p + 1.0) * m2 ** (0.5 * e) / P) ** (2.0 / (n * (p - 1.0)))
    if not K > 0:
        raise NoScalingError("K(u) = 0: the constraint is unreachable by scaling")
    c = constraint_coefficient(constraint, n, p)
    return (K / (c * P)) ** (1.0 / (p - 1.0))


def threshold_objective(report: FunctionalReport, kind: str, params: SystemParams,
                        mass: str = MASS_PLAIN) -> float:
    """K for the first-type thresholds; M^gamma + E (or M_lambda^gamma + E) otherwise."""
    if kind_constraint(kind) == G_CON:
        return report.K
    Mx = report.M_lambda if mass == MASS_LAMBDA else report.M
    return Mx ** params.gamma + report.E


# ----------------------------------------------------------------------------
# reduced objective F(k*(u) u) and its partial derivatives


@dataclass(frozen=True)
class _Reduced:
    kind: str
    params: SystemParams
    mass: str
    dilate: bool

    @property
    def constraint(self):
        return kind_constraint(self.kind)

    def evaluate(self, m2, m2l, K, P):
        """(F, dF/dm2, dF/dm2l, dF/dK, dF/dP, s*) with s* the optimal dilation (1 if none)."""
        params = self.params
        _scale(m2, K, P, self.constraint, params)  # raises when infeasible
        if self.constraint == G_CON:
            F, dm2, dK, dP = _g_parts(m2, K, P, params)
            return F, dm2, 0.0, dK, dP, 1.0
        m2o = m2l if self.mass == MASS_LAMBDA else m2
        c = constraint_coefficient(self.constraint, params.n, params.p)
        s = 1.0
        if self.dilate:
            p, n, gam = params.p, params.n, params.gamma
            alpha = 0.5 * n * (p - 1.0)
            A1, B1 = _q_terms(m2o, K, P, c, params)
            u_exp = gam * (alpha - 2.0) / (p - 1.0)
            v_exp = 2.0 * (p + 1.0 - alpha) / (p - 1.0)
            s = (u_exp * A1 / (v_exp * B1)) ** (1.0 / (u_exp + v_exp))
            F, dm2o, dK, dP = _q_parts(m2o, s * s * K, s ** alpha * P, c, params)
            dK *= s * s
            dP *= s ** alpha
        else:
            F, dm2o, dK, dP = _q_parts(m2o, K, P, c, params)
        if self.mass == MASS_LAMBDA:
            return F, 0.0, dm2o, dK, dP, s
        return F, dm2o, 0.0, dK, dP, s


def _g_parts(m2, K, P, params):
    p, n = params.p, params.n
    e = params.mass_exponent
    b = 2.0 / (n * (p - 1.0))
    k = ((p + 1.0) * m2 ** (0.5 * e) / P) ** b
    F = k * k * K
    return F, F * b * e / m2, k * k, -2.0 * b * F / P


def _q_terms(m2o, K, P, c, params):
    p, gam = params.p, params.gamma
    theta = 1.0 - 1.0 / (c * (p + 1.0))
    k = (K / (c * P)) ** (1.0 / (p - 1.0))
    return k ** gam * m2o ** (0.5 * gam), theta * k * k * K


def _q_parts(m2o, K, P, c, params):
    """On C = 0: F = k^gamma m^gamma + theta k^2 K, theta = 1 - 1/(c(p+1))."""
    p, gam = params.p, params.gamma
    A, B = _q_terms(m2o, K, P, c, params)
    dm2o = A * gam / (2.0 * m2o) if m2o > 0 else 0.0
    dK = (A * gam + B * (p + 1.0)) / ((p - 1.0) * K)
    dP = -(A * gam + 2.0 * B) / ((p - 1.0) * P)
    return A + B, dm2o, dK, dP


# ----------------------------------------------------------------------------
# discrete spaces: functionals, Riesz gradients, H^1 preconditioner


class _EuclideanSpace:
    def __init__(self, spec, params):
        self.spec, self.params = spec, params
        self.g = grids.euclidean_grid(spec)
        self.axes = tuple(range(-spec.n, 0))

    def _hat(self, u):
        return sfft.fftn(u, axes=self.axes)

    def _ihat(self, h, like):
        out = sfft.ifftn(h, axes=self.axes)
        return out.real if np.isrealobj(like) else out

    def parts(self, u):
        dV = self.g.dV
        m2_j = np.sum(np.abs(u.reshape(u.shape[0], -1)) ** 2, axis=1) * dV
        hat = self._hat(u)
        K = 0.5 * float(np.sum(self.g.k2 * np.abs(hat) ** 2)) * dV / hat[0].size
        flat = np.ascontiguousarray(u.reshape(u.shape[0], -1), dtype=np.complex128)
        prm = self.params
        P = float(kernels.potential_density(flat, prm.mu, prm.beta, prm.p).sum() * dV)
        return float(m2_j.sum()), 0.5 * float(np.dot(prm.lam, m2_j)), K, P

    def grad_parts(self, u):
        prm = self.params
        lam = prm.lam.reshape((-1,) + (1,) * self.spec.n)
        gK = self._ihat(self.g.k2 * self._hat(u), u)
        gP = (prm.p + 1.0) * _force(u, prm)
        return 2.0 * u, lam * u, gK, gP

    def precond(self, g):
        return self._ihat(self._hat(g) / (1.0 + self.g.k2), g)

    def inner(self, a, b):
        return float(np.real(np.vdot(a, b))) * self.g.dV

    def to_state(self, u):
        return StateVector(self.spec, 0.0, u)

    def dilate(self, u, s):
        """s^{n/2} u(s x) by evaluation of the trigonometric interpolant inside the box."""
        g = self.g
        npts = g.shape[0]
        kk = g.kaxis.copy()
        hat = self._hat(u)
        nyq = npts // 2
        idx = [slice(None)] * hat.ndim
        for ax in self.axes:
            sl = list(idx)
            sl[ax] = nyq
            hat[tuple(sl)] = 0.0
        y = s * g.axis
        # points mapped outside the box see the field's (zero) tail, not a periodic copy
        E = np.exp(1j * np.outer(y + self.spec.extent, kk)) / npts
        E[np.abs(y) >= self.spec.extent] = 0.0
        out = hat
        for ax in self.axes:
            out = np.moveaxis(np.tensordot(out, E, axes=([ax], [1])), -1, ax)
        out = out * s ** (0.5 * self.spec.n)
        return out.real if np.isrealobj(u) else out


class _RadialSpace:
    def __init__(self, spec, params):
        self.spec, self.params = spec, params
        self.rg = grids.radial_grid(spec)
        rg = self.rg
        lower = np.zeros(rg.K, dtype=np.complex128)
        upper = np.zeros(rg.K, dtype=np.complex128)
        lower[1:] = -rg.coupling
        upper[:-1] = -rg.coupling
        self._sys = (lower, rg.volume - rg.stiff_diag + 0j, upper)

    def parts(self, u):
        from .functionals import radial_gradient_energy
        rg, prm = self.rg, self.params
        m2_j = (np.abs(u) ** 2 * rg.volume).sum(axis=1)
        K = 0.5 * float(np.sum(radial_gradient_energy(u, rg)))
        dens = kernels.potential_density(np.ascontiguousarray(u, dtype=np.complex128), prm.mu,
                                         prm.beta, prm.p)
        return (float(m2_j.sum()), 0.5 * float(np.dot(prm.lam, m2_j)), K,
                float((dens * rg.volume).sum()))

    def grad_parts(self, u):
        from .hyperbolic import stiffness_apply
        prm = self.params
        gK = -stiffness_apply(u, self.rg) / self.rg.volume
        return 2.0 * u, prm.lam[:, None] * u, gK, (prm.p + 1.0) * _force(u, prm)

    def precond(self, g):
        lower, diag, upper = self._sys
        out = np.empty(g.shape, dtype=np.complex128)
        for j in range(g.shape[0]):
            out[j] = kernels.tridiag_solve(lower, diag, upper,
                                           np.asarray(self.rg.volume * g[j], dtype=np.complex128))
        return out.real if np.isrealobj(g) else out

    def inner(self, a, b):
        return float(np.real(np.sum(np.conj(a) * b * self.rg.volume)))

    def to_state(self, u):
        return StateVector(self.spec, 0.0, u)


class _SphereSpace:
    def __init__(self, spec, params):
        from . import sphere
        self.spec, self.params = spec, params
        self.lmax = int(spec.extent)
        self.quad = sphere.quadrature(self.lmax, int(spec.points), params.p + 1.0)
        self.lw = sphere.degree_weights(self.lmax)
        self.mask = sphere.antisymmetric_mask(self.lmax)

    def parts(self, u):
        prm = self.params
        m2_j = np.sum(np.abs(u) ** 2, axis=(1, 2))
        K = 0.5 * float(np.sum(self.lw * np.abs(u) ** 2))
        vals = self.quad.synthesize(u)
        flat = np.ascontiguousarray(vals.reshape(vals.shape[0], -1))
        dens = kernels.potential_density(flat, prm.mu, prm.beta, prm.p).reshape(vals.shape[1:])
        P = float(np.sum(dens * self.quad.weights))
        return float(m2_j.sum()), 0.5 * float(np.dot(prm.lam, m2_j)), K, P

    def grad_parts(self, u):
        prm = self.params
        vals = self.quad.synthesize(u)
        gP = (prm.p + 1.0) * self.quad.analyze(_force(vals, prm))
        return 2.0 * u, prm.lam[:, None, None] * u, self.lw * u, gP

    def precond(self, g):
        return g * self.mask / (1.0 + self.lw)

    def inner(self, a, b):
        return float(np.real(np.vdot(a, b)))

    def to_state(self, u):
        return StateVector(self.spec, 0.0, u)


def _force(u, params):
    """f_j(u) = N_j(u) u_j, the derivative of the P density divided by p+1."""
    shape = u.shape
    flat = np.ascontiguousarray(u.reshape(shape[0], -1), dtype=np.complex128)
    mult = kernels.multiplier(flat, params.mu, params.beta, params.p).reshape(shape)
    out = mult * u
    return out.real if np.isrealobj(u) else out


def _space(spec, params):
    if spec.manifold == grids.EUCLIDEAN:
        return _EuclideanSpace(spec, params)
    if spec.manifold == grids.HYPERBOLIC:
        return _RadialSpace(spec, params)
    return _SphereSpace(spec, params)


class _Problem:
    """Reduced objective of one threshold on one discrete space."""

    def __init__(self, kind, params, spec, mass):
        self.kind = kind
        self.params = params
        self.space = _space(spec, params)
        self.reduced = _Reduced(kind, params, mass, dilate=spec.manifold == grids.EUCLIDEAN)

    def value(self, u):
        try:
            return self.reduced.evaluate(*self.space.parts(u))[0]
        except NoScalingError:
            return math.inf

    def value_grad(self, u):
        parts = self.space.parts(u)
        F, dm2, dm2l, dK, dP, s = self.reduced.evaluate(*parts)
        gm2, gm2l, gK, gP = self.space.grad_parts(u)
        g = dm2 * gm2 + dK * gK + dP * gP
        if dm2l:
            g = g + dm2l * gm2l
        return F, g, s

    def project(self, u):
        m2, _, K, P = self.space.parts(u)
        return _scale(m2, K, P, kind_constraint(self.kind), self.params) * u

    def dilation(self, u):
        return self.reduced.evaluate(*self.space.parts(u))[5]


# ----------------------------------------------------------------------------
# candidate families


@dataclass(frozen=True)
class CandidateFamily:
    """A parametrized set of trial fields.

    ``build(x, spec, N)`` returns an ``(N, *grid_shape)`` array for the
    parameter vector x (unconstrained reals); the overall amplitude is
    irrelevant because every candidate is projected onto the constraint.
    """

    name: str
    x0: tuple
    build: object

    @property
    def dim(self):
        return len(self.x0)


_LOG_CLIP = 30.0


def _ratios(x, N):
    return np.concatenate([[1.0], np.exp(np.clip(np.asarray(x[:N - 1]), -_LOG_CLIP, 5.0))])


def _reference_width(spec):
    if spec.manifold == grids.EUCLIDEAN:
        return spec.extent / 32.0
    return 1.0


def _radial_r2(spec):
    if spec.manifold == grids.EUCLIDEAN:
        return grids.euclidean_grid(spec).r2
    return grids.radial_grid(spec).r ** 2


def _widths(x, N, spec):
    """Per-component widths: relative on R^n (dilation is optimized separately)."""
    ref = _reference_width(spec)
    if spec.manifold == grids.EUCLIDEAN:
        rel = np.concatenate([[0.0], np.asarray(x[:N - 1])])
    else:
        rel = np.asarray(x[:N])
    if spec.manifold == grids.HYPERBOLIC:
        rg = grids.radial_grid(spec)
        lo, hi = math.log(3.0 * rg.h / ref), math.log(rg.R / (4.0 * ref))
        rel = np.clip(rel, lo, hi)
    else:
        rel = np.clip(rel, -4.0, 2.0)
    return ref * np.exp(rel)


def _width_dim(N, spec):
    return N - 1 if spec.manifold == grids.EUCLIDEAN else N


def gaussian_family(N: int, spec: grids.GridSpec) -> CandidateFamily:
    """phi_j = r_j exp(-r^2 / (2 sigma_j^2)); x = (log widths, log amplitude ratios)."""
    wd = _width_dim(N, spec)

    def build(x, spec_, N_):
        widths = _widths(x[:wd], N_, spec_)
        amps = _ratios(x[wd:], N_)
        r2 = _radial_r2(spec_)
        return np.stack([a * np.exp(-0.5 * r2 / w ** 2) for a, w in zip(amps, widths)])

    return CandidateFamily("gaussian", (0.0,) * (wd + N - 1), build)


def sech_family(N: int, spec: grids.GridSpec) -> CandidateFamily:
    """phi_j = r_j sech(r / w_j)^q; x = (log widths, log ratios, log q)."""
    wd = _width_dim(N, spec)

    def build(x, spec_, N_):
        widths = _widths(x[:wd], N_, spec_)
        amps = _ratios(x[wd:wd + N_ - 1], N_)
        q = math.exp(float(np.clip(x[-1], -4.0, 3.0)))
        r = np.sqrt(_radial_r2(spec_))
        out = []
        for a, w in zip(amps, widths):
            t = r / w
            out.append(a * (2.0 * np.exp(-t) / (1.0 + np.exp(-2.0 * t))) ** q)
        return np.stack(out)

    return CandidateFamily("sech-power", (0.0,) * (wd + N - 1) + (0.0,), build)


def ground_state_family(gs: "GroundState") -> CandidateFamily:
    """The computed ground state as a single candidate."""
    comps = np.array(gs.w.components)

    def build(x, spec_, N_):
        if spec_ != gs.w.grid or N_ != comps.shape[0]:
            raise ContractError("ground-state candidate lives on a different grid")
        return comps.real.copy()

    return CandidateFamily("ground-state", (), build)


def polar_pair_family(N: int, spec: grids.GridSpec) -> CandidateFamily:
    """Opposite-sign bumps at the two poles: exp(-(1-cos t)/s^2) - exp(-(1+cos t)/s^2)."""
    from . import sphere
    lmax = int(spec.extent)

    def build(x, spec_, N_):
        q = sphere.quadrature(lmax, 0, 4.0)
        ct = np.cos(q.theta)[:, None] * np.ones((1, q.nphi))
        widths = np.exp(np.clip(np.asarray(x[:N_]), math.log(2.0 / max(lmax, 1)), 1.0))
        amps = _ratios(x[N_:], N_)
        vals = np.stack([a * (np.exp(-(1.0 - ct) / w ** 2) - np.exp(-(1.0 + ct) / w ** 2))
                         for a, w in zip(amps, widths)])
        return q.analyze(vals) * sphere.antisymmetric_mask(lmax)

    return CandidateFamily("polar-pair", (math.log(0.5),) * N + (0.0,) * (N - 1), build)


def odd_zonal_family(N: int, spec: grids.GridSpec, degrees=(1, 3, 5)) -> CandidateFamily:
    """sum_l c_l Y_l0 over odd l, one shared profile, per-component amplitude ratios."""
    lmax = int(spec.extent)
    degrees = tuple(l for l in degrees if l <= lmax)
    if not degrees:
        raise ParameterError("odd-zonal family needs lmax >= 1")

    def build(x, spec_, N_):
        c = np.zeros((lmax + 1, 2 * lmax + 1))
        c[degrees[0], lmax] = 1.0
        for l, v in zip(degrees[1:], x[:len(degrees) - 1]):
            c[l, lmax] = v
        amps = _ratios(x[len(degrees) - 1:], N_)
        return np.stack([a * c for a in amps]).astype(np.complex128)

    return CandidateFamily("odd-zonal", (0.0,) * (len(degrees) - 1 + N - 1), build)


def default_families(kind: str, N: int, spec: grids.GridSpec):
    """The two independent families searched for each threshold kind."""
    if kind == D_S2:
        return [polar_pair_family(N, spec), odd_zonal_family(N, spec)]
    return [gaussian_family(N, spec), sech_family(N, spec)]


# ----------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class OptimizerConfig:
    simplex_maxiter: int = 400
    simplex_xatol: float = 1e-5
    simplex_fatol: float = 1e-12
    refine: bool = True
    flow_maxiter: int = 3000
    flow_tol: float = 1e-6
    flow_step: float = 0.2
    armijo: float = 1e-4
    agreement_tol: float = 0.01

    def __post_init__(self):
        if self.simplex_maxiter < 1 or self.flow_maxiter < 0:
            raise ParameterError("iteration limits must be positive")
        if not (self.flow_tol > 0 and self.flow_step > 0 and 0 < self.armijo < 0.5):
            raise ParameterError("flow tolerance/step must be positive, armijo in (0, 1/2)")


@dataclass
class FamilyResult:
    family: str
    params: tuple
    raw_value: float
    value: float
    iterations: int
    residual: float
    converged: bool
    field: np.ndarray = field(repr=False, default=None)


@dataclass(eq=False)
class ThresholdEstimate:
    """An upper bound on a constrained infimum, with the search diagnostics."""

    kind: str
    value: float
    gamma: float
    mass: str
    minimizer: StateVector
    family: str
    trace: list
    converged: bool
    band: float
    constraint_residual: float
    upper_bound: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ContractError(f"threshold estimate must be positive and finite, got {self.value}")

    @property
    def family_values(self):
        return {r.family: r.value for r in self.trace}

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "gamma": self.gamma,
            "mass": self.mass,
            "family": self.family,
            "converged": self.converged,
            "band": self.band,
            "constraint_residual": self.constraint_residual,
            "upper_bound": self.upper_bound,
            "families": {r.family: {"raw": r.raw_value, "refined": r.value,
                                    "iterations": r.iterations, "residual": r.residual,
                                    "converged": r.converged} for r in self.trace},
        }


def _simplex(problem, family, spec, N, cfg):
    def fun(x):
        try:
            u = family.build(np.asarray(x), spec, N)
        except (FloatingPointError, ValueError):
            return math.inf
        return problem.value(u)

    x0 = np.asarray(family.x0, dtype=float)
    if x0.size == 0:
        return x0, fun(x0)
    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(x0.size)[i] for i in range(x0.size)])
    with np.errstate(all="ignore"):
        res = optimize.minimize(fun, x0, method="Nelder-Mead",
                                options={"maxiter": cfg.simplex_maxiter, "xatol": cfg.simplex_xatol,
                                         "fatol": cfg.simplex_fatol, "initial_simplex": simplex})
    return res.x, float(res.fun)


def _recentre(problem, u):
    """Dilate on R^n so that the optimal dilation of the current field is 1."""
    if problem.space.spec.manifold != grids.EUCLIDEAN:
        return u
    s = problem.dilation(u)
    if abs(math.log(s)) < 0.05:
        return u
    return problem.space.dilate(u, s)


def constrained_flow(problem: _Problem, u0, cfg: OptimizerConfig):
    """Preconditioned steepest descent on the reduced objective with Armijo backtracking.

    The descent direction is -(1 - lap)^{-1} grad F.  Since the reduced
    objective is invariant under u -> k u, this gradient is tangent to the
    constraint set after projection; each accepted iterate is projected
    back onto the constraint.  Returns (u, F, iterations, residual, converged)
    where the residual is the dimensionless first-order measure
    ||grad F||_{H^-1} ||u||_{H^1} / F.
    """
    space = problem.space
    u = problem.project(_recentre(problem, u0))
    F, g, _ = problem.value_grad(u)
    tau = cfg.flow_step
    history = [F]
    residual = math.inf
    for it in range(cfg.flow_maxiter + 1):
        d = -space.precond(g)
        slope = space.inner(g, d)
        h1 = space.inner(u, u) + space.inner(u, space.grad_parts(u)[2])
        residual = math.sqrt(max(-slope, 0.0) * h1) / F
        if residual < cfg.flow_tol:
            return u, F, it, residual, True
        if it == cfg.flow_maxiter:
            break
        while True:
            trial = u + tau * d
            Ft = problem.value(trial)
            if Ft <= F + cfg.armijo * tau * slope:
                break
            tau *= 0.5
            if tau < 1e-14:
                return u, F, it, residual, False
        u = problem.project(trial)
        if it % 50 == 49:
            u = problem.project(_recentre(problem, u))
        F, g, _ = problem.value_grad(u)
        tau = min(2.0 * tau, 10.0)
        history.append(F)
        if len(history) > 40 and history[-41] - F <= 1e-15 * abs(F):
            return u, F, it + 1, residual, False
    return u, F, cfg.flow_maxiter, residual, False


def _snapshot(problem: _Problem, u):
    """The projected (and on R^n optimally dilated) field as a grid state."""
    space = problem.space
    if space.spec.manifold == grids.EUCLIDEAN:
        s = problem.dilation(u)
        if abs(s - 1.0) > 1e-12:
            u = space.dilate(u, s)
    return space.to_state(problem.project(u))


def estimate_threshold(kind: str, params: SystemParams, spec: grids.GridSpec, families=None,
                       config: OptimizerConfig = None, mass: str = MASS_PLAIN,
                       ground_state=None) -> ThresholdEstimate:
    """Upper-bound estimate of a constrained infimum by family search plus flow refinement.

    Each family is searched with a Nelder-Mead simplex over its parameters
    (every candidate projected onto the constraint), then its best member is
    refined on the grid by ``constrained_flow``.  The estimate is the
    smallest refined value; ``band`` is the relative spread between the
    families' refined values.
    """
    config = config or OptimizerConfig()
    check_range(kind, params.n, params.p)
    manifold = kind_manifold(kind)
    if spec.manifold != manifold:
        raise ContractError(f"{kind} is estimated on a {manifold} grid, got {spec.manifold}")
    if spec.n != params.n:
        raise ContractError(f"grid dimension {spec.n} != params dimension {params.n}")
    if mass not in (MASS_PLAIN, MASS_LAMBDA):
        raise ParameterError(f"mass must be {MASS_PLAIN!r} or {MASS_LAMBDA!r}")
    if mass == MASS_LAMBDA and kind_constraint(kind) == G_CON:
        raise ParameterError("the lambda-weighted mass applies to the second-type thresholds")
    N = params.N
    if families is None:
        families = default_families(kind, N, spec)
        if ground_state is not None:
            families = families + [ground_state_family(ground_state)]
    families = list(families)
    if not families:
        raise InfeasibleError("no candidate family given")
    problem = _Problem(kind, params, spec, mass)
    results = []
    for fam in families:
        x, raw = _simplex(problem, fam, spec, N, config)
        if not math.isfinite(raw):
            continue
        u = fam.build(np.asarray(x), spec, N)
        if config.refine:
            u, val, its, res, conv = constrained_flow(problem, u, config)
        else:
            val, its, conv = raw, 0, True
            F, g, _ = problem.value_grad(problem.project(u))
            d = -problem.space.precond(g)
            h1 = problem.space.inner(u, u)
            res = math.sqrt(max(-problem.space.inner(g, d), 0.0) * h1) / F
        results.append(FamilyResult(fam.name, tuple(np.asarray(x).tolist()), raw, val, its, res,
                                    conv, u))
    if not results:
        raise InfeasibleError(f"every candidate in {[f.name for f in families]} has P <= 0")
    best = min(results, key=lambda r: r.value)
    state = _snapshot(problem, best.field)
    report = compute_functionals(state, params)
    value = threshold_objective(report, kind, params, mass)
    con = kind_constraint(kind)
    resid = abs(constraint_value(report, con, params)) / max(constraint_scale(report, con, params),
                                                            1e-300)
    vals = [r.value for r in results]
    band = (max(vals) - min(vals)) / min(vals) if len(vals) > 1 else 0.0
    converged = all(r.converged for r in results)
    if not converged:
        warnings.warn(f"{kind}: refinement did not reach the first-order tolerance in every "
                      "family; estimate flagged non-converged", RuntimeWarning, stacklevel=2)
    for r in results:
        r.field = None
    return ThresholdEstimate(kind=kind, value=value, gamma=params.gamma, mass=mass,
                             minimizer=state, family=best.family, trace=results,
                             converged=converged, band=band, constraint_residual=resid)


# ----------------------------------------------------------------------------
# ground solitary waves


@dataclass(frozen=True)
class GroundStateConfig:
    flow_maxiter: int = 5000
    flow_tol: float = 1e-6
    flow_step: float = 0.5
    newton_maxiter: int = 50
    tol: float = 1e-8
    # keep iterates even in every axis: removes the translation zero mode
    even: bool = True


def _even(u, n):
    """Average u(x) and u(-x); on the node set -L + j dx the reflection is j -> -j mod npts."""
    ref = u
    for ax in range(-n, 0):
        ref = np.roll(np.flip(ref, axis=ax), 1, axis=ax)
    return 0.5 * (u + ref)


@dataclass(eq=False)
class GroundState:
    w: StateVector
    lam: np.ndarray
    residual: float
    converged: bool
    iterations: int = 0

    @property
    def accepted(self):
        return self.converged and self.residual <= 1e-8


def stationarity_residual(w, params: SystemParams, lam) -> float:
    """max_j ||lap w_j - lam_j w_j + f_j(w)||_2 / ||w_j||_2."""
    space = _EuclideanSpace(w.grid, params)
    u = np.array(w.components).real
    lam = np.asarray(lam, dtype=float)
    res = _stationary_map(space, u, params, lam)
    out = 0.0
    for j in range(u.shape[0]):
        den = math.sqrt(space.inner(u[j], u[j]))
        if den > 0:
            out = max(out, math.sqrt(space.inner(res[j], res[j])) / den)
    return out


def _stationary_map(space, u, params, lam):
    lap = -space.grad_parts(u)[2]
    return lap - lam.reshape((-1,) + (1,) * (u.ndim - 1)) * u + _force(u, params)


def _nehari(space, u, params, lam):
    """Per-component amplitudes s_j with <E'_lam(s u), (s u)_j> = 0 for every j."""
    N = u.shape[0]
    gK = space.grad_parts(u)[2]
    a = np.array([space.inner(u[j], gK[j]) + lam[j] * space.inner(u[j], u[j]) for j in range(N)])
    if np.any(a <= 0):
        raise NoGroundStateError("a component vanished during the flow")

    def residual(logs):
        s = np.exp(logs).reshape((-1,) + (1,) * (u.ndim - 1))
        v = s * u
        f = _force(v, params)
        return np.array([(a[j] * np.exp(2 * logs[j]) - space.inner(v[j], f[j])) / a[j]
                         for j in range(N)])

    def total():
        P = space.parts(u)[3]
        if not P > 0:
            raise NoGroundStateError(f"P = {P:.3e} <= 0: no focusing ground state")
        return np.full(N, math.log(a.sum() / P) / (params.p - 1.0))

    start = total()
    if N == 1:
        return np.exp(start)
    sol, info, ier, _ = optimize.fsolve(residual, start, full_output=True)
    if ier != 1 or not np.all(np.isfinite(sol)):
        return np.exp(start)
    return np.exp(sol)


def ground_state_solve(params: SystemParams, spec: grids.GridSpec, lam=None, init=None,
                       config: GroundStateConfig = None) -> GroundState:
    """Positive solution of lap w_j - lam_j w_j + f_j(w) = 0 on the periodic box.

    Stage one is a normalized gradient flow: preconditioned descent on the
    action K + M_lam^2 - P/(p+1) with every component rescaled after each
    step onto its own Nehari constraint (the action is unbounded below
    without it for p > 1 + 4/n).  Stage two is a Newton-Krylov polish of
    w = (lam - lap)^{-1} f(w) with lam fixed.
    """
    config = config or GroundStateConfig()
    if spec.manifold != grids.EUCLIDEAN:
        raise ContractError("ground states are computed on the euclidean box")
    lam = np.asarray(params.lam if lam is None else lam, dtype=float).reshape(-1)
    if lam.shape != (params.N,) or np.any(lam <= 0):
        raise ParameterError("lambda must be N positive reals")
    if not params.p > 1.0:
        raise ParameterError("ground states need p > 1")
    space = _EuclideanSpace(spec, params)
    g = space.g
    if init is None:
        u = np.stack([np.exp(-0.5 * g.r2 * l) for l in lam])
    else:
        u = np.array(getattr(init, "components", init)).real.copy()
    if u.shape[0] != params.N:
        raise ContractError(f"init has {u.shape[0]} components, params describe {params.N}")
    lam_b = lam.reshape((-1,) + (1,) * spec.n)
    shift = lam_b + g.k2

    def resolvent(v):
        return sfft.ifftn(sfft.fftn(v, axes=space.axes) / shift, axes=space.axes).real

    its = 0
    for its in range(1, config.flow_maxiter + 1):
        u = u * _nehari(space, u, params, lam).reshape((-1,) + (1,) * spec.n)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) < 1e-12:
            raise NoGroundStateError("normalized gradient flow collapsed to zero")
        r = _stationary_map(space, u, params, lam)
        scale = math.sqrt(space.inner(u, u))
        if math.sqrt(space.inner(r, r)) / scale < config.flow_tol:
            break
        u = np.abs(u + config.flow_step * resolvent(r))
        if config.even:
            u = _even(u, spec.n)

    def fixed_point(v):
        return v - resolvent(_force(v, params))

    converged = True
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            u = optimize.newton_krylov(fixed_point, u, f_tol=1e-13 * np.max(np.abs(u)),
                                       maxiter=config.newton_maxiter, method="lgmres")
    except optimize.NoConvergence as exc:
        u = np.asarray(exc.args[0])
        converged = False
    if np.max(np.abs(u)) < 1e-8:
        raise NoGroundStateError("polish converged to the zero solution")
    if config.even:
        u = _even(u, spec.n)
    w = StateVector(spec, 0.0, u)
    res = stationarity_residual(w, params, lam)
    converged = converged and res <= config.tol
    return GroundState(w=w, lam=lam, residual=res, converged=converged, iterations=its)


@dataclass(frozen=True)
class StationarityReport:
    S: float
    pohozaev: float
    Q: float
    S_rel: float
    pohozaev_rel: float
    Q_rel: float
    Q_from_identities: float

    @property
    def ok(self):
        return max(self.S_rel, self.pohozaev_rel, self.Q_rel) <= 1e-6


def _rel(value, scale):
    return abs(value) / scale if scale > 0 else abs(value)


def verify_stationarity(gs: GroundState, params: SystemParams) -> StationarityReport:
    """S(w), the Pohozaev combination and Q(w), each relative to its term sizes.

    Q also follows from the other two: Q = (n S / 2 - Pohozaev) / 2.
    """
    lam_params = params.with_(lam=gs.lam)
    rep = compute_functionals(gs.w, lam_params)
    n, p = params.n, params.p
    poh = pohozaev(rep, n, p)
    S = rep.S
    grad2 = 2.0 * rep.K
    s_scale = grad2 + 2.0 * rep.M_lambda ** 2 + abs(rep.P)
    p_scale = abs(n / 2.0 - 1.0) * grad2 + n * rep.M_lambda ** 2 + n * abs(rep.P) / (p + 1.0)
    q_scale = rep.K + params.virial_coefficient * abs(rep.P)
    return StationarityReport(S=S, pohozaev=poh, Q=rep.Q, S_rel=_rel(S, s_scale),
                              pohozaev_rel=_rel(poh, p_scale), Q_rel=_rel(rep.Q, q_scale),
                              Q_from_identities=0.5 * (0.5 * n * S - poh))


def action_profile(gs: GroundState, params: SystemParams, ks):
    """(M_lam(k w))^2 + E(k w), S(k w) and Q(k w) along the amplitude ray."""
    lam_params = params.with_(lam=gs.lam)
    base = compute_functionals(gs.w, lam_params)
    ks = np.asarray(ks, dtype=float)
    p = params.p
    ml2 = base.M_lambda ** 2 * ks ** 2
    K = base.K * ks ** 2
    P = base.P * ks ** (p + 1.0)
    value = ml2 + K - P / (p + 1.0)
    S = 2.0 * K + 2.0 * ml2 - P
    Q = K - params.virial_coefficient * P
    return value, S, Q


__all__ = [
    "KINDS", "CONSTRAINTS", "ThresholdEstimate", "GroundState", "CandidateFamily",
    "OptimizerConfig", "GroundStateConfig", "StationarityReport", "scale_to_constraint",
    "estimate_threshold", "ground_state_solve", "verify_stationarity", "check_range",
    "constraint_value", "threshold_objective", "gaussian_family", "sech_family",
    "ground_state_family", "polar_pair_family", "odd_zonal_family", "default_families",
    "constrained_flow", "action_profile", "stationarity_residual",
]

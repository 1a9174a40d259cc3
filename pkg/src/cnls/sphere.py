"""Fields on S^2 in spherical harmonics: functionals, the antisymmetric class,
and the inequality / weight checks used by the S^2 threshold.

Coefficients a_lm of orthonormal Y_lm are stored packed as ``(lmax+1,
2 lmax+1)`` tables with column ``m + lmax``; entries with |m| > l are zero.
Nonlinear integrals are done by synthesis onto a Gauss-Legendre (in cos
theta) times uniform-longitude grid.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import special

from . import grid as grids
from . import kernels
from .errors import ContractError, EvaluationError, ParameterError, ResolutionError
from .functionals import FunctionalReport
from .params import SystemParams
from .state import StateVector
from .weights import SPHERE_HEMISPHERIC, WeightSpec

SPHERE_AREA = 4.0 * math.pi


@dataclass(frozen=True, eq=False)
class SphereField:
    lmax: int
    coeffs: np.ndarray
    antisymmetric: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.lmax + 1, 2 * self.lmax + 1):
            raise ParameterError(
                f"coefficient table must be {(self.lmax + 1, 2 * self.lmax + 1)}, got {c.shape}")
        c[~valid_mask(self.lmax)] = 0.0
        if self.antisymmetric and np.any(c[~antisymmetric_mask(self.lmax)] != 0):
            raise ParameterError("antisymmetric field has coefficients with l+m even")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def single(cls, lmax, l, m, amplitude=1.0):
        c = np.zeros((lmax + 1, 2 * lmax + 1), dtype=np.complex128)
        c[l, m + lmax] = amplitude
        return cls(lmax, c, antisymmetric=bool((l + m) % 2))

    def norm2(self):
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def grad_norm2(self):
        return float(np.sum(degree_weights(self.lmax) * np.abs(self.coeffs) ** 2))


@lru_cache(maxsize=16)
def valid_mask(lmax):
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None, :]
    mask = np.abs(m) <= l
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=16)
def antisymmetric_mask(lmax):
    """Y_lm(pi - theta, phi) = (-1)^{l+m} Y_lm, so l+m odd is the odd class."""
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None, :]
    mask = valid_mask(lmax) & ((l + m) % 2 == 1)
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=16)
def degree_weights(lmax):
    l = np.arange(lmax + 1, dtype=float)[:, None]
    w = np.broadcast_to(l * (l + 1), (lmax + 1, 2 * lmax + 1)) * valid_mask(lmax)
    w = np.array(w)
    w.setflags(write=False)
    return w


def project_antisymmetric(field: SphereField) -> SphereField:
    c = np.where(antisymmetric_mask(field.lmax), field.coeffs, 0.0)
    return SphereField(field.lmax, c, antisymmetric=True)


def is_antisymmetric(coeffs, lmax, rtol=1e-14) -> bool:
    c = np.asarray(coeffs)
    scale = np.abs(c).max(initial=0.0)
    return bool(np.all(np.abs(c[..., ~antisymmetric_mask(lmax)]) <= rtol * scale))


class Quadrature:
    """Gauss-Legendre latitudes x uniform longitudes with the Y_lm tables."""

    def __init__(self, lmax, ntheta, nphi):
        self.lmax, self.ntheta, self.nphi = lmax, ntheta, nphi
        x, w = np.polynomial.legendre.leggauss(ntheta)
        self.theta = np.arccos(x)
        self.wtheta = w
        self.phi = 2.0 * np.pi * np.arange(nphi) / nphi
        self.weights = np.outer(w, np.full(nphi, 2.0 * np.pi / nphi))
        L = np.arange(lmax + 1)
        table = np.zeros((lmax + 1, 2 * lmax + 1, ntheta))
        dtable = np.zeros_like(table)
        cot = np.cos(self.theta) / np.sin(self.theta)
        for m in range(-lmax, lmax + 1):
            ls = L[L >= abs(m)]
            if ls.size == 0:
                continue
            vals = special.sph_harm_y(ls[:, None], m, self.theta[None, :], 0.0).real
            table[ls, m + lmax] = vals
        for m in range(-lmax, lmax + 1):
            for l in range(abs(m), lmax + 1):
                d = m * cot * table[l, m + lmax]
                if m + 1 <= l:
                    d = d + math.sqrt((l - m) * (l + m + 1)) * table[l, m + 1 + lmax]
                dtable[l, m + lmax] = d
        self.table = table
        self.dtable = dtable

    def synthesize(self, coeffs, derivative=False):
        """Field values on (ntheta, nphi) for tables of shape (..., lmax+1, 2lmax+1).

        ``derivative=True`` returns d/dtheta of the field.
        """
        coeffs = np.asarray(coeffs)
        lead = coeffs.shape[:-2]
        table = self.dtable if derivative else self.table
        # F_m(theta) = sum_l a_lm P_lm(theta)
        F = np.einsum("...lm,lmt->...mt", coeffs, table)
        spec = np.zeros(lead + (self.ntheta, self.nphi), dtype=np.complex128)
        for m in range(-self.lmax, self.lmax + 1):
            spec[..., m % self.nphi] += F[..., m + self.lmax, :]
        return np.fft.ifft(spec, axis=-1) * self.nphi

    def integrate(self, values):
        return np.sum(values * self.weights, axis=(-2, -1))

    def analyze(self, values):
        """Coefficients int f conj(Y_lm) by this quadrature; inverse of ``synthesize``
        for band-limited fields when the quadrature is exact at degree 2 lmax."""
        values = np.asarray(values)
        lead = values.shape[:-2]
        F = np.fft.fft(values, axis=-1) * (2.0 * np.pi / self.nphi)
        Fm = np.zeros(lead + (2 * self.lmax + 1, self.ntheta), dtype=np.complex128)
        for m in range(-self.lmax, self.lmax + 1):
            Fm[..., m + self.lmax, :] = F[..., :, m % self.nphi]
        out = np.einsum("...mt,lmt,t->...lm", Fm, self.table, self.wtheta)
        return out * valid_mask(self.lmax)


def required_degree(lmax, power):
    """Polynomial degree of |f|^power for band limit lmax (rounded up for non-integers)."""
    return int(math.ceil(power - 1e-12)) * lmax


@lru_cache(maxsize=16)
def quadrature(lmax, ntheta=0, power=2.0) -> Quadrature:
    """Grid exact for |f|^power at band limit lmax; explicit ntheta is checked."""
    deg = max(required_degree(lmax, power), 2 * lmax)
    need = deg // 2 + 1
    if ntheta == 0:
        ntheta = need
    elif ntheta < need:
        raise ResolutionError(
            f"{ntheta} latitudes integrate degree {2 * ntheta - 1} < {deg} needed for "
            f"|phi|^{power:g} at lmax={lmax}; use at least {need}")
    return Quadrature(lmax, ntheta, deg + 1)


def _coeff_tables(state_or_fields):
    if isinstance(state_or_fields, StateVector):
        if state_or_fields.grid.manifold != grids.SPHERE:
            raise ContractError("not a sphere state")
        return state_or_fields.grid, state_or_fields.components
    fields = list(state_or_fields)
    lmaxes = {f.lmax for f in fields}
    if len(lmaxes) != 1:
        raise ContractError(f"components must share lmax, got {sorted(lmaxes)}")
    lmax = lmaxes.pop()
    return grids.sphere(lmax), np.stack([f.coeffs for f in fields])


def sphere_state(fields, ntheta=0) -> StateVector:
    spec, comps = _coeff_tables(fields)
    return StateVector(grids.sphere(spec.extent, ntheta), 0.0, comps)


def compute_sphere_functionals(state, params: SystemParams) -> FunctionalReport:
    """M, K from the coefficients; P by quadrature after synthesis."""
    spec, comps = _coeff_tables(state)
    if params.n != 2:
        raise ParameterError("sphere functionals need n = 2")
    if comps.shape[0] != params.N:
        raise ParameterError(f"params describe N={params.N}, got {comps.shape[0]} fields")
    if not np.all(np.isfinite(comps)):
        raise EvaluationError("coefficients contain NaN or Inf")
    lmax = int(spec.extent)
    m2_j = np.sum(np.abs(comps) ** 2, axis=(1, 2))
    K = 0.5 * float(np.sum(degree_weights(lmax) * np.abs(comps) ** 2))
    q = quadrature(lmax, int(spec.points), params.p + 1.0)
    vals = q.synthesize(comps)
    dens = kernels.potential_density(
        np.ascontiguousarray(vals.reshape(vals.shape[0], -1)), params.mu, params.beta, params.p)
    P = float(np.sum(dens.reshape(vals.shape[1:]) * q.weights))
    ml2 = float(0.5 * np.dot(params.lam, m2_j))
    return FunctionalReport.from_parts(math.sqrt(float(m2_j.sum())), math.sqrt(ml2), K, P, params,
                                       grids.SPHERE)


def lp_norm_power(field: SphereField, power, ntheta=0):
    q = quadrature(field.lmax, ntheta, power)
    vals = q.synthesize(field.coeffs)
    return float(q.integrate(np.abs(vals) ** power))


def check_poincare_antisymmetric(field: SphereField) -> float:
    """||phi||_2 / ||grad phi||_2 for an antisymmetric field."""
    if not is_antisymmetric(field.coeffs, field.lmax):
        raise ContractError("Poincare ratio is checked on antisymmetric fields only")
    g2 = field.grad_norm2()
    if field.norm2() == 0 or g2 == 0:
        raise EvaluationError("ratio undefined for the zero field")
    return math.sqrt(field.norm2() / g2)


@dataclass(frozen=True)
class SobolevReport:
    p: float
    lhs: float
    gradient_term: float
    mass_term: float

    @property
    def rhs(self):
        return self.gradient_term + self.mass_term

    @property
    def slack(self):
        return self.rhs - self.lhs


def check_sobolev_sphere(field: SphereField, p, omega=SPHERE_AREA, n=2) -> SobolevReport:
    """(int |phi|^p)^{2/p} against (p-2)/(n w^{1-2/p}) int|grad|^2 + w^{-(1-2/p)} int|phi|^2."""
    if p < 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    lp = lp_norm_power(field, p)
    lhs = lp ** (2.0 / p) if lp > 0 else 0.0
    e = 1.0 - 2.0 / p
    grad = (p - 2.0) / (n * omega ** e) * field.grad_norm2()
    mass = omega ** (-e) * field.norm2()
    return SobolevReport(p, lhs, grad, mass)


def sobolev_ratio(fields, p) -> float:
    """||Phi||_{p+1}^{p+1} / ||grad Phi||_2^{p+1} for an antisymmetric state."""
    fields = list(fields)
    grad = sum(f.grad_norm2() for f in fields)
    if grad == 0:
        raise EvaluationError("ratio undefined for the zero state")
    spec, comps = _coeff_tables(fields)
    q = quadrature(int(spec.extent), 0, p + 1.0)
    dens = np.sum(np.abs(q.synthesize(comps)) ** 2, axis=0)
    return float(q.integrate(dens ** ((p + 1.0) / 2.0))) / grad ** ((p + 1.0) / 2.0)


def random_field(lmax, rng, antisymmetric=False, decay=1.0) -> SphereField:
    """Complex gaussian coefficients with variance (1 + l)^{-2 decay}."""
    shape = (lmax + 1, 2 * lmax + 1)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    l = np.arange(lmax + 1)[:, None]
    c = c * (1.0 + l) ** (-decay) * valid_mask(lmax)
    if antisymmetric:
        c = np.where(antisymmetric_mask(lmax), c, 0.0)
    return SphereField(lmax, c, antisymmetric=antisymmetric)


# hemispheric weights rho(r) = -2 log cos(r/2), r the distance to the nearer pole

def rho_pm(r):
    return -2.0 * np.log(np.cos(0.5 * np.asarray(r, dtype=float)))


def hemispheric_weight(spec: grids.GridSpec) -> WeightSpec:
    if spec.manifold != grids.SPHERE:
        raise ContractError("hemispheric weights live on a sphere grid")
    lmax = int(spec.extent)
    q = quadrature(lmax, int(spec.points), 2.0)
    theta = q.theta
    r = np.minimum(theta, np.pi - theta)
    half = 0.5 * r
    drho = np.tan(half)
    d2rho = 0.5 / np.cos(half) ** 2
    ang = np.cos(r) / (1.0 + np.cos(r))
    return WeightSpec(SPHERE_HEMISPHERIC, spec, r, rho_pm(r), drho, d2rho, ang,
                      np.ones_like(r), np.zeros_like(r))


def sphere_virial(state: StateVector, weight: WeightSpec):
    """J = int rho_pm |Phi|^2 and J' = 2 Im int (d_theta phi)(d_theta rho) conj(phi)."""
    lmax = int(state.grid.extent)
    q = quadrature(lmax, int(state.grid.points), 2.0)
    vals = q.synthesize(state.components)
    dvals = q.synthesize(state.components, derivative=True)
    north = q.theta < 0.5 * np.pi
    dtheta_rho = np.where(north, weight.drho, -weight.drho)[:, None]
    J = float(q.integrate(weight.rho[:, None] * np.sum(np.abs(vals) ** 2, axis=0)))
    Jp = 2.0 * float(q.integrate(np.sum(np.imag(dvals * np.conj(vals)), axis=0) * dtheta_rho))
    return J, Jp


@dataclass
class SphereWeightReport:
    max_lap_error: float
    max_grad: float
    max_d2rho: float
    max_angular: float
    nodes: int

    tol: float = 1e-8

    @property
    def ok(self):
        # rho'' = 1 and |grad rho| = 1 exactly at the equator, so the bounds
        # are checked to the same difference-quotient tolerance as lap rho
        return (self.max_lap_error <= self.tol and self.max_grad <= 1.0 + self.tol
                and self.max_d2rho <= 1.0 + self.tol and self.max_angular <= 1.0 + self.tol)


def check_sphere_weights(resolution=2000) -> SphereWeightReport:
    """Finite-difference check of lap rho = 1, |grad rho| <= 1, rho'' <= 1 on a hemisphere.

    Derivatives come from fourth-order central differences of tabulated rho
    (even reflection through the pole), not from the closed forms.  The two
    hemispheres are mirror images in r, so one latitude grid covers both.
    """
    h = 0.5 * np.pi / resolution
    k = np.arange(-2, resolution + 3)
    r_ext = k * h
    rho = rho_pm(np.abs(r_ext))
    c = slice(2, -2)
    d1 = (rho[:-4] - 8 * rho[1:-3] + 8 * rho[3:-1] - rho[4:]) / (12 * h)
    d2 = (-rho[:-4] + 16 * rho[1:-3] - 30 * rho[2:-2] + 16 * rho[3:-1] - rho[4:]) / (12 * h * h)
    r = r_ext[c]
    interior = (r > 0) & (r <= 0.5 * np.pi + 1e-15)
    r, d1, d2 = r[interior], d1[interior], d2[interior]
    lap = d2 + d1 / np.tan(r)
    ang = d1 / np.tan(r)
    return SphereWeightReport(
        max_lap_error=float(np.abs(lap - 1.0).max()),
        max_grad=float(np.abs(d1).max()),
        max_d2rho=float(d2.max()),
        max_angular=float(ang.max()),
        nodes=int(r.size),
    )

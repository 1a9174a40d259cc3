"""Virial weights rho and their derivatives on each manifold.

Tabulated radial data: rho, rho' (drho), rho'' (d2rho, the radial
Hessian component), the angular Hessian component rho' * (metric factor)
and the Laplace-Beltrami lap_rho.
"""
from dataclasses import dataclass

import numpy as np

from . import grid as grids
from .errors import ContractError, ParameterError

EUCLIDEAN_SQUARE = "euclidean-square"
HYPERBOLIC_SQUARE = "hyperbolic-square"
HYPERBOLIC_STAR = "hyperbolic-star"
SPHERE_HEMISPHERIC = "sphere-hemispheric"
KINDS = (EUCLIDEAN_SQUARE, HYPERBOLIC_SQUARE, HYPERBOLIC_STAR, SPHERE_HEMISPHERIC)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True, eq=False)
class WeightSpec:
    kind: str
    grid: grids.GridSpec
    r: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    d2rho: np.ndarray
    angular_hess: np.ndarray
    lap_rho: np.ndarray
    bilap_rho: np.ndarray = None

    @property
    def manifold(self):
        return self.grid.manifold


def _coth(r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, 1.0 / np.tanh(np.where(r > 0, r, 1.0)), np.inf)


def _gl_nodes(a, b):
    """12-point Gauss-Legendre nodes/weights on each [a_i, b_i]."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


def _log_segment(a, b, n):
    """log int_a^b sinh^{n-1}, evaluated relative to sinh(b) to avoid overflow."""
    x, w = _gl_nodes(a, b)
    lb = grids.log_sinh(np.maximum(b, 1e-300))[..., None]
    with np.errstate(divide="ignore"):
        vals = np.exp((n - 1) * (grids.log_sinh(np.maximum(x, 1e-300)) - lb))
    with np.errstate(divide="ignore"):
        return (n - 1) * lb[..., 0] + np.log((vals * w).sum(axis=-1))


def star_derivative(x, n, faces=None, log_cum=None):
    """rho*'(x) = int_0^x sinh^{n-1} / sinh^{n-1}(x), inner integral in log space.

    ``faces``/``log_cum`` are the precomputed cumulative inner integrals at
    the cell faces; each x is completed from the nearest face below it.
    """
    x = np.asarray(x, dtype=float)
    if faces is None:
        lo = np.zeros_like(x)
        base = np.full_like(x, -np.inf)
    else:
        idx = np.clip(np.searchsorted(faces, x, side="right") - 1, 0, len(faces) - 1)
        lo = faces[idx]
        base = log_cum[idx]
    seg = np.where(x > lo, _log_segment(lo, np.maximum(x, lo + 1e-300), n), -np.inf)
    log_inner = np.logaddexp(base, seg)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(log_inner - (n - 1) * grids.log_sinh(np.maximum(x, 1e-300)))
    return np.where(x > 0, out, 0.0)


def _star_tables(rg: grids.RadialGrid):
    n = rg.n
    faces = rg.faces
    seg = _log_segment(faces[:-1], faces[1:], n)
    log_cum = np.concatenate([[-np.inf], np.logaddexp.accumulate(seg)])
    # outer integral: [0, r_0] then node-to-node increments, summed in extended
    # precision so the second differences used by the Laplacian see only the
    # final rounding of each stored value
    starts = np.concatenate([[0.0], rg.r[:-1]])
    xq, wq = _gl_nodes(starts, rg.r)
    dq = star_derivative(xq.ravel(), n, faces, log_cum).reshape(xq.shape)
    inc = (dq * wq).sum(axis=1).astype(np.longdouble)
    rho = np.cumsum(inc).astype(float)
    drho = star_derivative(rg.r, n, faces, log_cum)
    return rho, drho


def virial_weights(grid: grids.GridSpec, kind: str) -> WeightSpec:
    """Tabulate rho and its derivatives on the grid nodes."""
    if kind not in KINDS:
        raise ParameterError(f"unknown weight kind {kind!r}")
    if kind == EUCLIDEAN_SQUARE:
        if grid.manifold != grids.EUCLIDEAN:
            raise ContractError("euclidean-square weight needs a euclidean grid")
        g = grids.euclidean_grid(grid)
        r = np.sqrt(g.r2)
        two = np.full(g.shape, 2.0)
        return WeightSpec(kind, grid, r, g.r2.copy(), 2.0 * r, two, two.copy(),
                          np.full(g.shape, 2.0 * grid.n), np.zeros(g.shape))
    if kind == SPHERE_HEMISPHERIC:
        from .sphere import hemispheric_weight
        return hemispheric_weight(grid)
    if grid.manifold != grids.HYPERBOLIC:
        raise ContractError(f"{kind} weight needs a hyperbolic-radial grid")
    if grid.extent > grids.MAX_RADIUS:
        raise ParameterError(f"R={grid.extent} > {grids.MAX_RADIUS}")
    rg = grids.radial_grid(grid)
    n, r = rg.n, rg.r
    coth = _coth(r)
    if kind == HYPERBOLIC_SQUARE:
        rho = r * r
        drho = 2.0 * r
        d2rho = np.full_like(r, 2.0)
        f1 = coth - r / np.sinh(r) ** 2
        f2 = 2.0 / np.sinh(r) ** 2 * (r * coth - 1.0)
        lap = 2.0 + 2.0 * (n - 1) * r * coth
        bilap = 2.0 * (n - 1) * (f2 + (n - 1) * coth * f1)
        return WeightSpec(kind, grid, r, rho, drho, d2rho, drho * coth, lap, bilap)
    rho, drho = _star_tables(rg)
    d2rho = 1.0 - (n - 1) * coth * drho
    lap = d2rho + (n - 1) * coth * drho
    return WeightSpec(kind, grid, r, rho, drho, d2rho, drho * coth, lap, np.zeros_like(r))


def default_weight(grid: grids.GridSpec) -> WeightSpec:
    if grid.manifold == grids.EUCLIDEAN:
        return virial_weights(grid, EUCLIDEAN_SQUARE)
    if grid.manifold == grids.HYPERBOLIC:
        return virial_weights(grid, HYPERBOLIC_SQUARE)
    return virial_weights(grid, SPHERE_HEMISPHERIC)


def star_derivative_closed_form_n2(r):
    """rho*' for n = 2: (cosh r - 1)/sinh r = tanh(r/2)."""
    return np.tanh(0.5 * np.asarray(r, dtype=float))


def sphere_area_constant(n):
    return grids.unit_sphere_area(n)


__all__ = ["WeightSpec", "virial_weights", "default_weight", "KINDS"]

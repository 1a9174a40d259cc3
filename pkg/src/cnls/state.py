"""Field snapshots and analytic initial profiles."""
from dataclasses import dataclass
import warnings

import numpy as np

from . import grid as grids
from .errors import ConstructionError, ParameterError


class DomainTruncationWarning(UserWarning):
    """Field mass is not negligible at the edge of the computational domain."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """N complex fields on one grid at time t.

    ``components`` has shape ``(N, *grid_shape)``; for sphere grids the
    trailing shape is the packed harmonic-coefficient table
    ``(lmax + 1, 2 lmax + 1)``.  The array is read-only.
    """

    grid: grids.GridSpec
    t: float
    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=np.complex128)
        if comps.ndim < 2:
            raise ParameterError("components must be an (N, *grid_shape) array")
        expected = grid_shape(self.grid)
        if comps.shape[1:] != expected:
            raise ParameterError(
                f"component shape {comps.shape[1:]} does not match grid shape {expected}"
            )
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return self.components.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.components)))

    def scaled(self, k: float) -> "StateVector":
        return StateVector(self.grid, self.t, k * self.components)

    def with_components(self, comps, t=None) -> "StateVector":
        return StateVector(self.grid, self.t if t is None else t, comps)


def grid_shape(spec: grids.GridSpec):
    if spec.manifold == grids.EUCLIDEAN:
        return (spec.points,) * spec.n
    if spec.manifold == grids.HYPERBOLIC:
        return (int(spec.points),)
    lmax = int(spec.extent)
    return (lmax + 1, 2 * lmax + 1)


@dataclass(frozen=True)
class Gaussian:
    """A exp(-|x - c|^2 / (2 sigma^2))."""

    A: float
    sigma: float = 1.0
    center: tuple = ()

    def __call__(self, r2):
        return self.A * np.exp(-0.5 * r2 / self.sigma ** 2)


@dataclass(frozen=True)
class Sech:
    """A sech(|x - c| / width)^power."""

    A: float
    width: float = 1.0
    center: tuple = ()
    power: float = 1.0

    def __call__(self, r2):
        r = np.sqrt(r2) / self.width
        # sech r = 2 e^{-r} / (1 + e^{-2r}), stable for large r
        sech = 2.0 * np.exp(-r) / (1.0 + np.exp(-2.0 * r))
        return self.A * sech ** self.power


@dataclass(frozen=True, eq=False)
class Sampled:
    """Explicit samples on the grid nodes."""

    data: np.ndarray

    def __call__(self, r2):
        data = np.asarray(self.data)
        if data.shape != np.shape(r2):
            raise ParameterError(f"sampled data shape {data.shape} != grid shape {np.shape(r2)}")
        return data


def squared_distance(spec: grids.GridSpec, center=()):
    """|x - c|^2 on the nodes (geodesic r^2 on the radial grid)."""
    if spec.manifold == grids.EUCLIDEAN:
        g = grids.euclidean_grid(spec)
        if not center:
            return g.r2
        c = np.broadcast_to(np.asarray(center, dtype=float), (spec.n,))
        if np.all(c == 0):
            return g.r2
        L = spec.extent
        out = np.zeros(g.shape)
        for x, ci in zip(g.coords, c):
            d = np.mod(x - ci + L, 2.0 * L) - L  # periodic distance
            out += d * d
        return out
    if spec.manifold == grids.HYPERBOLIC:
        if center and np.any(np.asarray(center) != 0):
            raise ParameterError("radial profiles must be centred at the origin")
        return grids.radial_grid(spec).r ** 2
    raise ParameterError("analytic profiles are not defined on sphere grids; use cnls.sphere")


def build_state(spec: grids.GridSpec, component_specs, phases=None, t=0.0) -> StateVector:
    """Sample phi_j = exp(i theta_j) profile_j on the grid."""
    component_specs = list(component_specs)
    N = len(component_specs)
    if N == 0:
        raise ParameterError("at least one component is required")
    if phases is None:
        phases = np.zeros(N)
    phases = np.asarray(phases, dtype=float).reshape(-1)
    if phases.shape[0] != N:
        raise ParameterError(f"{N} profiles but {phases.shape[0]} phases")
    shape = grid_shape(spec)
    comps = np.empty((N,) + shape, dtype=np.complex128)
    for j, (prof, theta) in enumerate(zip(component_specs, phases)):
        r2 = squared_distance(spec, getattr(prof, "center", ()))
        with np.errstate(all="ignore"):
            vals = np.asarray(prof(r2), dtype=np.complex128)
        if vals.shape != shape:
            vals = np.broadcast_to(vals, shape)
        if not np.all(np.isfinite(vals)):
            raise ConstructionError(f"profile {j + 1} is undefined at some grid node")
        comps[j] = np.exp(1j * theta) * vals
    _check_truncation(spec, comps)
    return StateVector(spec, t, comps)


def boundary_fraction(spec: grids.GridSpec, comps) -> float:
    """Share of |phi|^2 sitting at the domain edge (euclidean and radial grids)."""
    dens = np.sum(np.abs(comps) ** 2, axis=0)
    total = dens.sum()
    if total == 0:
        return 0.0
    if spec.manifold == grids.EUCLIDEAN:
        mask = grids.euclidean_grid(spec).boundary_mask()
        return float(dens[mask].sum() / total)
    if spec.manifold == grids.HYPERBOLIC:
        rg = grids.radial_grid(spec)
        w = dens * rg.volume
        return float(w[-2:].sum() / w.sum())
    return 0.0


def _check_truncation(spec, comps):
    if spec.manifold != grids.EUCLIDEAN:
        return
    peak = np.abs(comps).max()
    if peak == 0:
        return
    mask = grids.euclidean_grid(spec).boundary_mask()
    edge = np.abs(comps)[:, mask].max()
    if edge > 1e-12 * peak:
        warnings.warn(
            f"field at the box boundary is {edge / peak:.2e} of its peak (> 1e-12); enlarge L",
            DomainTruncationWarning,
            stacklevel=3,
        )

"""Discretizations of R^n (periodic box), radial H^n and S^2.

``GridSpec`` is the hashable description; the derived arrays live in
``EuclideanGrid`` / ``RadialGrid`` objects obtained through cached
factories, so every state on the same spec shares one set of arrays.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import ParameterError

EUCLIDEAN = "euclidean-periodic-box"
HYPERBOLIC = "hyperbolic-radial"
SPHERE = "sphere-harmonic"
MANIFOLDS = (EUCLIDEAN, HYPERBOLIC, SPHERE)

# sinh^{n-1}(R) is only representable in float64 below this radius
MAX_RADIUS = 700.0


@dataclass(frozen=True)
class GridSpec:
    """Grid description.

    ``extent`` is the half-length L of the box (euclidean), the radial
    extent R (hyperbolic) or the maximal harmonic degree (sphere).  For the
    sphere ``points`` is the number of Gauss-Legendre latitudes, 0 meaning
    "choose automatically".
    """

    manifold: str
    n: int
    points: int
    extent: float

    def __post_init__(self):
        if self.manifold not in MANIFOLDS:
            raise ParameterError(f"unknown manifold {self.manifold!r}")
        if self.n not in (1, 2, 3):
            raise ParameterError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if self.manifold == EUCLIDEAN:
            pts = int(self.points)
            if pts < 4 or pts & (pts - 1):
                raise ParameterError(f"points per axis must be a power of two, got {self.points}")
        elif self.manifold == HYPERBOLIC:
            if self.n < 2:
                raise ParameterError("hyperbolic-radial grids need n >= 2")
            if int(self.points) < 4:
                raise ParameterError("radial grid needs at least 4 points")
            if self.extent > MAX_RADIUS:
                raise ParameterError(f"radial extent R={self.extent} exceeds {MAX_RADIUS}")
        else:
            if self.n != 2:
                raise ParameterError("sphere grids are two-dimensional (S^2)")
            if int(self.extent) != self.extent or self.extent < 0:
                raise ParameterError("sphere extent is the max degree, a nonnegative integer")
            if int(self.points) < 0:
                raise ParameterError("latitude count must be >= 0")
        if self.manifold != SPHERE and not self.extent > 0:
            raise ParameterError(f"extent must be positive, got {self.extent}")


def euclidean(n, points, L) -> GridSpec:
    return GridSpec(EUCLIDEAN, n, int(points), float(L))


def hyperbolic(n, points, R) -> GridSpec:
    return GridSpec(HYPERBOLIC, n, int(points), float(R))


def sphere(lmax, ntheta=0) -> GridSpec:
    return GridSpec(SPHERE, 2, int(ntheta), int(lmax))


class EuclideanGrid:
    """Periodic box [-L, L)^n with spectral wavenumbers."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        n, pts, L = spec.n, spec.points, spec.extent
        self.n = n
        self.shape = (pts,) * n
        self.dx = 2.0 * L / pts
        self.dV = self.dx ** n
        axis = -L + self.dx * np.arange(pts)
        kaxis = 2.0 * np.pi * np.fft.fftfreq(pts, d=self.dx)
        self.axis = axis
        self.kaxis = kaxis
        self.coords = np.meshgrid(*([axis] * n), indexing="ij")
        self.kvec = np.meshgrid(*([kaxis] * n), indexing="ij")
        self.r2 = sum(c * c for c in self.coords)
        self.k2 = sum(k * k for k in self.kvec)
        self.knyq = np.pi / self.dx
        kabs = np.max(np.abs(np.stack(self.kvec)), axis=0)
        # 2/3 rule per axis
        self.dealias_mask = kabs <= (2.0 / 3.0) * self.knyq
        self.kabs_max = kabs
        self.volume = (2.0 * L) ** n
        for arr in (self.r2, self.k2, self.dealias_mask, self.kabs_max):
            arr.setflags(write=False)

    def tail_mask(self, dealias: bool):
        """Top third of the retained band (by max-norm wavenumber)."""
        kkeep = (2.0 / 3.0) * self.knyq if dealias else self.knyq
        return (self.kabs_max > (2.0 / 3.0) * kkeep) & (self.kabs_max <= kkeep)

    def boundary_mask(self):
        """Nodes within one cell of the box faces."""
        mask = np.zeros(self.shape, dtype=bool)
        for c in self.coords:
            mask |= np.abs(c) >= self.spec.extent - 1.5 * self.dx
        return mask


def unit_sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def log_sinh(r):
    """log(sinh r) for r > 0 without overflow."""
    r = np.asarray(r, dtype=float)
    return r + np.log1p(-np.exp(-2.0 * r)) - math.log(2.0)


class RadialGrid:
    """Cell-centred radial grid on the geodesic ball B_R in H^n.

    Nodes r_k = (k + 1/2) h; faces at k h.  ``volume`` holds the exact
    cell volumes |S^{n-1}| int sinh^{n-1} over each cell, so the metric
    weight sinh^{n-1}(r_k) h is integrated exactly rather than sampled.
    The r=0 face has zero area (regularity); the r=R face carries a
    homogeneous Dirichlet condition through an odd ghost node.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        n, K, R = spec.n, int(spec.points), float(spec.extent)
        self.n = n
        self.K = K
        self.R = R
        self.h = h = R / K
        self.shape = (K,)
        self.r = (np.arange(K) + 0.5) * h
        self.faces = np.arange(K + 1) * h
        self.omega = unit_sphere_area(n)
        with np.errstate(divide="ignore"):
            face_area = self.omega * np.exp((n - 1) * log_sinh(self.faces))
        face_area[0] = 0.0
        self.face_area = face_area
        xg, wg = np.polynomial.legendre.leggauss(8)
        lo = self.faces[:-1, None]
        nodes = lo + 0.5 * h * (xg[None, :] + 1.0)
        vals = np.exp((n - 1) * log_sinh(nodes))
        self.volume = self.omega * 0.5 * h * (vals * wg[None, :]).sum(axis=1)
        if not (np.all(np.isfinite(self.volume)) and np.all(np.isfinite(self.face_area))):
            raise ParameterError(f"R={R} overflows the metric weight for n={n}")
        # symmetric stiffness S (V dphi/dt = i S phi); lower/upper couplings
        self.coupling = self.face_area[1:-1] / h
        diag = -(self.face_area[:-1] + self.face_area[1:]) / h
        diag[-1] -= self.face_area[-1] / h  # odd ghost: phi_K = -phi_{K-1}
        self.stiff_diag = diag
        for arr in (self.r, self.faces, self.face_area, self.volume, self.coupling,
                    self.stiff_diag):
            arr.setflags(write=False)

    @property
    def total_volume(self):
        return float(self.volume.sum())


@lru_cache(maxsize=32)
def euclidean_grid(spec: GridSpec) -> EuclideanGrid:
    if spec.manifold != EUCLIDEAN:
        raise ParameterError(f"not a euclidean grid: {spec.manifold}")
    return EuclideanGrid(spec)


@lru_cache(maxsize=32)
def radial_grid(spec: GridSpec) -> RadialGrid:
    if spec.manifold != HYPERBOLIC:
        raise ParameterError(f"not a hyperbolic grid: {spec.manifold}")
    return RadialGrid(spec)

"""Solver configuration and run records shared by the euclidean and radial solvers."""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import ParameterError

GLOBAL = "global-to-horizon"
BLOWUP = "blowup"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping and blow-up detection settings.

    ``dt0`` is also the ceiling for adaptive growth.  The blow-up
    predicate needs all three of: K above ``blowup_gradnorm_factor`` times
    K(0), spectral tail share above ``blowup_tail_fraction``, and dt below
    ``10 * dt_min``.

    ``dispersion_cfl`` optionally caps dt at ``dispersion_cfl * pi / k^2``
    for the largest retained wavenumber k.  Split-step schemes with
    dt k^2 beyond pi amplify round-off at those wavenumbers once the field
    is large, which fakes spectral-tail growth during a collapse.
    """

    dt0: float = 1e-3
    t_max: float = 1.0
    dealias: bool = True
    cfl_safety: float = 0.5
    blowup_gradnorm_factor: float = 1e6
    blowup_tail_fraction: float = 0.1
    dt_min: float = 1e-9
    conservation_check_interval: int = 100
    sample_interval: float = 0.01
    adaptive: bool = True
    boundary_guard: float = 1e-8
    max_steps: int = 10_000_000
    dispersion_cfl: float = None

    def __post_init__(self):
        if not self.dt_min > 0:
            raise ParameterError("dt_min must be positive")
        if not self.dt0 > self.dt_min:
            raise ParameterError(f"dt0={self.dt0} must exceed dt_min={self.dt_min}")
        if not self.t_max > 0:
            raise ParameterError("t_max must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ParameterError("cfl_safety must lie in (0, 1]")
        if not self.sample_interval > 0:
            raise ParameterError("sample_interval must be positive")
        if self.dispersion_cfl is not None and not self.dispersion_cfl > 0:
            raise ParameterError("dispersion_cfl must be positive when given")
        if self.conservation_check_interval < 1:
            raise ParameterError("conservation_check_interval must be >= 1 step")

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def phase_limit(self):
        return self.cfl_safety * math.pi


@dataclass
class RunRecord:
    """Sampled history of one run plus its final classification."""

    times: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    J: list = field(default_factory=list)
    Jprime: list = field(default_factory=list)
    Jpp: list = field(default_factory=list)
    relation: str = "="
    dts: list = field(default_factory=list)
    classification: str = INCONCLUSIVE
    t_star: float = None
    mass_drift: float = 0.0
    energy_drift: float = 0.0
    final_state: object = None
    weight_kind: str = None
    diagnostics: dict = field(default_factory=dict)

    def append(self, t, report, virial, dt):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample times must increase: {t} after {self.times[-1]}")
        self.times.append(float(t))
        self.reports.append(report)
        self.J.append(virial.J)
        self.Jprime.append(virial.Jprime)
        self.Jpp.append(virial.Jpp)
        self.relation = virial.relation
        self.dts.append(float(dt))

    def series(self, name):
        """Array of one functional across samples, e.g. ``series("K")``."""
        if name in ("J", "Jprime", "Jpp", "dts", "times"):
            return np.asarray(getattr(self, name), dtype=float)
        return np.array([getattr(r, name) for r in self.reports], dtype=float)

    @property
    def blew_up(self):
        return self.classification == BLOWUP

    def sup_K(self):
        return float(max(r.K for r in self.reports)) if self.reports else 0.0

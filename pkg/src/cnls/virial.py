"""Virial quantities J, J', the J'' relation per manifold, and run cross-checks."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import fft as sfft

from . import grid as grids
from . import weights as wts
from .errors import ContractError
from .functionals import FunctionalReport, compute_functionals
from .params import SystemParams, critical_power
from .state import StateVector


@dataclass(frozen=True)
class VirialSample:
    """J, J' and the third slot: the value of J'' ("=") or an upper bound ("<=")."""

    J: float
    Jprime: float
    Jpp: float
    relation: str


def _euclidean_jprime(comps, spec):
    g = grids.euclidean_grid(spec)
    hat = sfft.fftn(comps, axes=tuple(range(-spec.n, 0)))
    total = 0.0
    for x, k in zip(g.coords, g.kvec):
        dphi = sfft.ifftn(1j * k * hat, axes=tuple(range(-spec.n, 0)))
        total += float(np.sum(np.imag(x * dphi * np.conj(comps))))
    return 4.0 * total * g.dV


def radial_jprime(comps, weight: wts.WeightSpec):
    """2 Im sum int phi_r rho' conj(phi) on the radial grid.

    Written with face differences of rho so that it is exactly dJ/dt of
    the semi-discrete linear flow: 2 sum_f A_f (rho_{k+1}-rho_k)/h Im(phi_{k+1} conj(phi_k)).
    """
    rg = grids.radial_grid(weight.grid)
    drho = np.diff(weight.rho) / rg.h
    cross = np.imag(comps[:, 1:] * np.conj(comps[:, :-1])).sum(axis=0)
    return 2.0 * float(np.sum(rg.face_area[1:-1] * drho * cross))


def _third_slot(report: FunctionalReport, weight: wts.WeightSpec, n):
    if weight.kind == wts.EUCLIDEAN_SQUARE:
        return 16.0 * report.Q, "="
    if weight.kind == wts.HYPERBOLIC_SQUARE:
        return 16.0 * report.Q, "<="
    if weight.kind == wts.HYPERBOLIC_STAR:
        return 8.0 / (n - 1) * report.Q_star, "<="
    return 8.0 * report.Q_dstar, "<="


def virial_quantities(state: StateVector, weight: wts.WeightSpec, params: SystemParams,
                      report: FunctionalReport = None) -> VirialSample:
    """J = sum int rho |phi_j|^2, J' and the J'' value/bound for this weight."""
    if weight.manifold != state.grid.manifold or weight.grid != state.grid:
        raise ContractError(
            f"weight on {weight.manifold} grid {weight.grid} does not match state grid {state.grid}"
        )
    if report is None:
        report = compute_functionals(state, params)
    comps = state.components
    spec = state.grid
    if spec.manifold == grids.EUCLIDEAN:
        g = grids.euclidean_grid(spec)
        J = float(np.sum(weight.rho * np.abs(comps) ** 2) * g.dV)
        Jp = _euclidean_jprime(comps, spec)
    elif spec.manifold == grids.HYPERBOLIC:
        rg = grids.radial_grid(spec)
        J = float(np.sum(weight.rho * rg.volume * np.abs(comps) ** 2))
        Jp = radial_jprime(comps, weight)
    else:
        from .sphere import sphere_virial
        J, Jp = sphere_virial(state, weight)
    Jpp, rel = _third_slot(report, weight, spec.n)
    return VirialSample(J, Jp, Jpp, rel)


def _term_scale(report, params):
    """Size of the terms that cancel in 16Q; relative errors are measured against it."""
    return 16.0 * (abs(report.K) + params.virial_coefficient * abs(report.P))


@dataclass
class ConsistencyReport:
    ok: bool
    max_rel_jprime: float
    max_rel_jpp: float
    max_violation: float
    relation: str
    samples_checked: int
    details: dict = field(default_factory=dict)


def check_virial_consistency(record, params: SystemParams, jprime_tol=1e-4, jpp_tol=1e-3,
                             skip_last=1) -> ConsistencyReport:
    """Finite-difference J against J' and J' against the J'' value or bound.

    Interior samples only (central differences need neighbours).  On R^n
    the J'' comparison is an equality measured relative to the size of the
    cancelling terms 16(K + c|P|); on the curved manifolds it is the
    one-sided bound with tolerance 1e-3 |bound| + 1e-8.
    """
    t = np.asarray(record.times, dtype=float)
    if t.size < 5:
        raise ContractError(f"need at least 5 samples, record has {t.size}")
    J = np.asarray(record.J)
    Jp = np.asarray(record.Jprime)
    Jpp = np.asarray(record.Jpp)
    stop = t.size - max(skip_last, 1)
    idx = np.arange(1, stop)
    dJ = np.gradient(J, t)
    dJp = np.gradient(Jp, t)
    # regular spacing not assumed; np.gradient is second order on uneven grids
    jscale = np.array([math.sqrt(abs(r.K) * max(J[i], 0.0)) * 4.0 + 1e-300
                       for i, r in enumerate(record.reports)])
    rel_jp = np.abs(dJ[idx] - Jp[idx]) / (np.abs(Jp[idx]) + jscale[idx])
    scales = np.array([_term_scale(r, params) for r in record.reports])
    if record.relation == "=":
        rel_jpp = np.abs(dJp[idx] - Jpp[idx]) / (scales[idx] + 1e-12)
        violation = 0.0
        ok = bool(np.all(rel_jp <= jprime_tol) and np.all(rel_jpp <= jpp_tol))
    else:
        tol = 1e-3 * np.abs(Jpp[idx]) + 1e-8
        excess = dJp[idx] - Jpp[idx] - tol
        violation = float(max(excess.max(initial=-np.inf), 0.0))
        rel_jpp = np.maximum(dJp[idx] - Jpp[idx], 0.0) / (scales[idx] + 1e-12)
        ok = bool(np.all(rel_jp <= jprime_tol) and violation == 0.0)
    return ConsistencyReport(
        ok=ok,
        max_rel_jprime=float(rel_jp.max(initial=0.0)),
        max_rel_jpp=float(rel_jpp.max(initial=0.0)),
        max_violation=violation,
        relation=record.relation,
        samples_checked=int(idx.size),
        details={"dJpp_dt": dJp[idx].tolist(), "Jpp": Jpp[idx].tolist()},
    )


# ----------------------------------------------------------------------------
# classification of initial data against the threshold theorems

GLOBAL = "global"
BLOWUP = "blowup"
INAPPLICABLE = "inapplicable"
CERTIFIED = "certified"
HEURISTIC = "heuristic"

# J'(0) <= 0 is a non-strict hypothesis; values within this absolute slack count as <= 0
JPRIME_SLACK = 1e-12
# discretization allowance added to the family-agreement band before a
# sub-threshold margin counts as certified
CERTIFY_FLOOR = 1e-6

# theorem -> (manifold, threshold kind, sign functional, small-data corollary?)
_THEOREMS = {
    "T1": (grids.EUCLIDEAN, "d_I", "G", False),
    "T2": (grids.EUCLIDEAN, "d_II", "Q", False),
    "T4": (grids.HYPERBOLIC, "d_HnI", "G", False),
    "T5-radial": (grids.HYPERBOLIC, "d_HnII", "Q", False),
    "T5-nonradial": (grids.HYPERBOLIC, "d_HnII_star", "Q*", False),
    "T7": (grids.SPHERE, "d_S2", "Q**", False),
    "C1": (grids.EUCLIDEAN, "d_I", None, True),
    "C2": (grids.EUCLIDEAN, "d_II", None, True),
    "C4": (grids.HYPERBOLIC, "d_HnI", None, True),
    "C5": (grids.HYPERBOLIC, "d_HnII", None, True),
    "C7": (grids.SPHERE, "d_S2", None, True),
}
THEOREMS = tuple(_THEOREMS)


def theorem_threshold(theorem: str) -> str:
    """Threshold kind the theorem's hypotheses are measured against."""
    return _THEOREMS[theorem][1]


def theorem_sign_functional(theorem: str):
    """Functional whose sign splits the theorem's alternatives (None for corollaries)."""
    return _THEOREMS[theorem][2]


def theorem_manifold(theorem: str) -> str:
    return _THEOREMS[theorem][0]


@dataclass(frozen=True)
class HypothesisCheck:
    """One hypothesis ``lhs relation rhs`` with both sides evaluated.

    ``margin`` is positive exactly when the hypothesis holds (strictly for
    '<' and '>', up to the stated slack for '<=').
    """

    name: str
    lhs: float
    relation: str
    rhs: float
    margin: float

    @property
    def holds(self):
        return self.margin > 0 if self.relation in ("<", ">") else self.margin >= 0


def _less(name, lhs, rhs):
    return HypothesisCheck(name, float(lhs), "<", float(rhs), float(rhs - lhs))


def _greater(name, lhs, rhs):
    return HypothesisCheck(name, float(lhs), ">", float(rhs), float(lhs - rhs))


@dataclass
class TheoremVerdict:
    theorem: str
    predicted: str
    hypotheses: list
    threshold_used: object = None
    tag: str = None
    range_violation: str = None
    notes: list = field(default_factory=list)

    def hypothesis(self, name):
        for h in self.hypotheses:
            if h.name == name:
                return h
        raise KeyError(name)

    @property
    def certified(self):
        return self.tag == CERTIFIED

    def summary(self) -> dict:
        return {
            "theorem": self.theorem,
            "predicted": self.predicted,
            "tag": self.tag,
            "range_violation": self.range_violation,
            "threshold": None if self.threshold_used is None else self.threshold_used.value,
            "hypotheses": [{"name": h.name, "lhs": h.lhs, "relation": h.relation, "rhs": h.rhs,
                            "margin": h.margin, "holds": h.holds} for h in self.hypotheses],
            "notes": list(self.notes),
        }


def theorem_range(theorem: str, n: int, p: float):
    """None if p is admissible for the theorem, else a description of the violated range."""
    from .variational import check_range
    from .errors import ParameterError
    kind = _THEOREMS[theorem][1]
    if theorem in ("C2", "C5"):
        kind = "d_II"
    try:
        check_range(kind, n, p)
    except ParameterError as exc:
        return str(exc)
    return None


def _pick_estimate(estimates, kind, params):
    if estimates is None:
        raise ContractError(f"a {kind} estimate is required")
    if not isinstance(estimates, dict):
        estimates = {estimates.kind: estimates}
    est = estimates.get(kind)
    if est is None:
        raise ContractError(f"no {kind} estimate among {sorted(estimates)}")
    if est.kind != kind:
        raise ContractError(f"estimate filed under {kind} is a {est.kind} estimate")
    if kind_uses_gamma(kind) and not math.isclose(est.gamma, params.gamma, rel_tol=1e-14):
        raise ContractError(f"{kind} estimate used gamma={est.gamma}, params have {params.gamma}")
    return est


def kind_uses_gamma(kind):
    return kind not in ("d_I", "d_HnI")


def weighted_mass(state: StateVector) -> float:
    """int |x|^2 |Phi|^2 (geodesic r^2 on the radial grid); finite on every grid."""
    comps = state.components
    if state.grid.manifold == grids.EUCLIDEAN:
        g = grids.euclidean_grid(state.grid)
        return float(np.sum(g.r2 * np.sum(np.abs(comps) ** 2, axis=0)) * g.dV)
    rg = grids.radial_grid(state.grid)
    return float(np.sum(rg.r ** 2 * rg.volume * np.sum(np.abs(comps) ** 2, axis=0)))


def _sign_value(report, functional):
    return {"G": report.G, "Q": report.Q, "Q*": report.Q_star, "Q**": report.Q_dstar}[functional]


def classify_initial_data(state0: StateVector, params: SystemParams, estimates,
                          theorem: str) -> TheoremVerdict:
    """Evaluate the hypotheses of a threshold theorem (or small-data corollary) at t = 0.

    Thresholds are upper-bound estimates, so a prediction that rests on
    f(M, E) < d is tagged certified only when the margin exceeds the
    estimate's family band plus a discretization floor; otherwise heuristic.
    """
    if theorem not in _THEOREMS:
        raise ContractError(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if state0.t != 0:
        raise ContractError("initial data must be at t = 0")
    manifold, kind, sign_name, corollary = _THEOREMS[theorem]
    if state0.grid.manifold != manifold:
        raise ContractError(f"{theorem} concerns {manifold} data, "
                            f"got a {state0.grid.manifold} state")
    n, p = params.n, params.p
    violation = theorem_range(theorem, n, p)
    if violation is not None:
        return TheoremVerdict(theorem, INAPPLICABLE, [], None, None, violation)
    est = _pick_estimate(estimates, kind, params)
    report = compute_functionals(state0, params)
    d = est.value
    checks = []
    notes = []
    if kind_uses_gamma(kind):
        Mx = report.M_lambda if getattr(est, "mass", "M") == "M_lambda" else report.M
        mass_term = Mx ** params.gamma
        mass_label = "M_lambda^gamma" if getattr(est, "mass", "M") == "M_lambda" else "M^gamma"
    else:
        mass_term = report.M ** params.mass_exponent if report.M > 0 else 0.0
        mass_label = "M^(p+1-n(p-1)/2)"
    if theorem == "T7" or theorem == "C7":
        from .sphere import is_antisymmetric
        lmax = int(state0.grid.extent)
        anti = all(is_antisymmetric(c, lmax) for c in state0.components)
        if not anti:
            notes.append("data is not antisymmetric about the equator")
            return TheoremVerdict(theorem, INAPPLICABLE, checks, est, None,
                                  "initial data outside the antisymmetric class", notes)
    if corollary:
        main = _less(f"K + {mass_label} < {kind}", report.K + mass_term, d)
        checks.append(main)
        predicted = GLOBAL if main.holds else INAPPLICABLE
    else:
        main = _less(f"{mass_label} + E < {kind}", mass_term + report.E, d)
        checks.append(main)
        s = _sign_value(report, sign_name)
        predicted = INAPPLICABLE
        if main.holds and s > 0:
            checks.append(_greater(f"{sign_name} > 0", s, 0.0))
            predicted = GLOBAL
        elif main.holds and s < 0:
            checks.append(_less(f"{sign_name} < 0", s, 0.0))
            predicted = BLOWUP
            if manifold != grids.SPHERE:
                wm = weighted_mass(state0)
                checks.append(_less("int |x|^2 |Phi_0|^2 < inf", wm, math.inf))
                if not math.isfinite(wm):
                    predicted = INAPPLICABLE
            if theorem in ("T1", "T4"):
                if p > critical_power(n):
                    jp = _initial_jprime(state0, params)
                    check = HypothesisCheck("Im sum int (grad phi . grad rho) conj(phi) <= 0", jp,
                                            "<=", 0.0, JPRIME_SLACK - jp)
                    checks.append(check)
                    if not check.holds:
                        predicted = INAPPLICABLE
                else:
                    notes.append("no sign condition on J'(0) at the critical power")
        else:
            checks.append(HypothesisCheck(f"{sign_name} != 0", s, "!=", 0.0, abs(s)))
            if s == 0:
                notes.append(f"{sign_name}(Phi_0) = 0: neither alternative applies")
        if not main.holds:
            notes.append("data is not below the threshold")
    tag = None
    if predicted != INAPPLICABLE:
        allowance = (est.band + CERTIFY_FLOOR) * d
        tag = CERTIFIED if main.margin > allowance and est.converged else HEURISTIC
        if theorem == "T5-nonradial":
            notes.append("sign taken from Q*, the functional bounding J'' for the flat-Laplacian "
                         "weight")
    if theorem in ("T4", "T5-radial", "C4", "C5"):
        notes.append("radial data on a radial grid")
    return TheoremVerdict(theorem, predicted, checks, est, tag, None, notes)


def _initial_jprime(state0, params):
    """Im sum int (grad phi . grad rho) conj(phi) with rho = |x|^2 (geodesic r^2 on H^n)."""
    weight = wts.default_weight(state0.grid)
    sample = virial_quantities(state0, weight, params)
    # J' = 2 Im sum int (grad phi . grad rho) conj(phi)
    return 0.5 * sample.Jprime


@dataclass
class PersistenceReport:
    functional: str
    initial_sign: int
    persistent: bool
    values: list
    first_change: float = None


def sign_persistence(record, functional: str) -> PersistenceReport:
    """Whether G, Q, Q* or Q** keeps the sign of its initial value along a run."""
    if functional not in ("G", "Q", "Q*", "Q**"):
        raise ContractError(f"unknown sign functional {functional!r}")
    vals = [_sign_value(r, functional) for r in record.reports]
    if not vals:
        raise ContractError("record has no samples")
    s0 = int(np.sign(vals[0]))
    first = None
    for t, v in zip(record.times, vals):
        if np.sign(v) != s0:
            first = t
            break
    return PersistenceReport(functional, s0, first is None, vals, first)

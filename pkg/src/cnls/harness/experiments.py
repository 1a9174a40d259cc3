"""Experiment orchestration: single runs, amplitude sweeps, bisection, instability, estimates."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np

from .. import grid as grids
from .. import records
from ..errors import CNLSError, ConfigError
from ..functionals import compute_functionals, h_lambda
from ..hyperbolic import check_weight_inequalities, evolve_radial
from ..params import SystemParams
from ..spectral import evolve
from ..state import build_state
from ..variational import (action_profile, estimate_threshold, ground_state_solve,
                           verify_stationarity)
from ..virial import (classify_initial_data, sign_persistence,
                      theorem_sign_functional, theorem_threshold)
from .config import ExperimentConfig

OK = "ok"
FAILED = "numerical-failure"


class ExperimentAborted(CNLSError, RuntimeError):
    """A sub-run left the experiment without a usable answer; ``partial`` holds what was found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class RunOutcome:
    label: str
    c: float
    record: records.RunRecord
    verdict: dict = None
    persistence: dict = None

    def summary(self) -> dict:
        rec = self.record
        out = {
            "label": self.label,
            "c": self.c,
            "classification": rec.classification,
            "t_final": rec.times[-1] if rec.times else 0.0,
            "t_star": rec.t_star,
            "samples": len(rec.times),
            "sup_K": rec.sup_K(),
            "mass_drift": _mass_drift(rec),
            "stop_reason": rec.diagnostics.get("stop_reason"),
        }
        if self.verdict is not None:
            out["verdict"] = self.verdict
        if self.persistence is not None:
            out["sign_persistence"] = self.persistence
        return out


@dataclass
class ExperimentResult:
    experiment: str
    runs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    status: str = OK


def _mass_drift(rec):
    if len(rec.reports) < 2 or rec.reports[0].M == 0:
        return 0.0
    m0 = rec.reports[0].M
    return max(abs(r.M - m0) for r in rec.reports) / m0


def initial_state(cfg: ExperimentConfig, c: float = 1.0):
    """c times the configured profile superposition."""
    return build_state(cfg.grid, cfg.profiles, cfg.phases).scaled(c)


def integrate(state0, params: SystemParams, solver):
    """Dispatch to the solver for the grid's manifold."""
    if state0.grid.manifold == grids.EUCLIDEAN:
        return evolve(state0, params, solver)
    if state0.grid.manifold == grids.HYPERBOLIC:
        return evolve_radial(state0, params, solver)
    raise ConfigError("no time integrator on sphere grids")


def threshold_estimates(cfg: ExperimentConfig):
    """Estimate the threshold the configured theorem needs (None without a theorem)."""
    if cfg.theorem is None:
        return None
    kind = theorem_threshold(cfg.theorem)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = estimate_threshold(kind, cfg.params, cfg.grid, mass=cfg.threshold_mass)
    return {kind: est}


def _verdict_and_persistence(cfg, state0, record, estimates):
    if cfg.theorem is None:
        return None, None
    verdict = classify_initial_data(state0, cfg.params, estimates, cfg.theorem)
    persistence = None
    sign = theorem_sign_functional(cfg.theorem)
    resolved = record.classification != records.INCONCLUSIVE
    if sign is not None and verdict.predicted != "inapplicable" and resolved:
        rep = sign_persistence(record, sign)
        persistence = {"functional": sign, "initial_sign": rep.initial_sign,
                       "persistent": rep.persistent, "first_change": rep.first_change}
    return verdict.summary(), persistence


def run_amplitude(cfg: ExperimentConfig, c: float, estimates=None, label=None) -> RunOutcome:
    """Evolve c times the configured data and classify it against the configured theorem."""
    state0 = initial_state(cfg, c)
    record = integrate(state0, cfg.params, cfg.solver)
    verdict, persistence = _verdict_and_persistence(cfg, state0, record, estimates)
    return RunOutcome(label or f"c={c!r}", float(c), record, verdict, persistence)


def _run_state(args):
    label, c, state0, params, solver = args
    return RunOutcome(label, float(c), integrate(state0, params, solver))


def _run_amplitude_args(args):
    cfg, c, estimates = args
    return run_amplitude(cfg, c, estimates)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _estimate_summary(estimates):
    if not estimates:
        return None
    return {k: v.summary() for k, v in sorted(estimates.items())}


def _persistence_failures(runs):
    return [r.label for r in runs if r.persistence is not None and not r.persistence["persistent"]]


# ----------------------------------------------------------------------------
# experiments


def single_run(cfg: ExperimentConfig) -> ExperimentResult:
    c = cfg.sweep[0] if cfg.sweep else 1.0
    estimates = threshold_estimates(cfg)
    run = run_amplitude(cfg, c, estimates, label="run")
    status = OK if run.record.classification != records.INCONCLUSIVE else FAILED
    summary = {"thresholds": _estimate_summary(estimates),
               "sign_changes": _persistence_failures([run])}
    return ExperimentResult("single-run", [run], summary, status)


def monotone_report(cs, outcomes):
    """Check that resolved verdicts switch from global to blowup at most once in c.

    Returns (monotone, first blowup c, last global c, inconclusive cs).
    """
    seen_blowup = False
    monotone = True
    last_global = first_blowup = None
    inconclusive = []
    for c, o in zip(cs, outcomes):
        if o == records.BLOWUP:
            seen_blowup = True
            first_blowup = c if first_blowup is None else first_blowup
        elif o == records.GLOBAL:
            if seen_blowup:
                monotone = False
            last_global = c
        else:
            inconclusive.append(c)
    return monotone, first_blowup, last_global, inconclusive


def amplitude_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    estimates = threshold_estimates(cfg)
    cs = sorted(cfg.sweep)
    runs = _map(_run_amplitude_args, [(cfg, c, estimates) for c in cs], cfg.workers)
    runs.sort(key=lambda r: r.c)
    outcomes = [r.record.classification for r in runs]
    monotone, first_blowup, last_global, inconclusive = monotone_report(cs, outcomes)
    if not monotone:
        warnings.warn("NON-MONOTONE sweep: a global run follows a blow-up run in c "
                      "(possible under-resolution)", RuntimeWarning, stacklevel=2)
    certified_global = [r.c for r in runs if r.verdict and r.verdict["predicted"] == "global"
                        and r.verdict["tag"] == "certified"]
    largest_certified = max(certified_global) if certified_global else None
    ordering_ok = None
    if largest_certified is not None and first_blowup is not None:
        # a sufficient condition for global existence cannot hold past the observed boundary
        ordering_ok = first_blowup > largest_certified
    summary = {
        "c": cs,
        "outcomes": outcomes,
        "monotone": monotone,
        "warning": None if monotone else "non-monotone verdict sequence; check resolution",
        "last_global_c": last_global,
        "first_blowup_c": first_blowup,
        "inconclusive_c": inconclusive,
        "largest_certified_global_c": largest_certified,
        "ordering_consistent": ordering_ok,
        "thresholds": _estimate_summary(estimates),
        "sign_changes": _persistence_failures(runs),
    }
    status = OK if monotone and not inconclusive else FAILED
    return ExperimentResult("amplitude-sweep", runs, summary, status)


def threshold_bisect(cfg: ExperimentConfig) -> ExperimentResult:
    """Bisect c between a global and a blow-up amplitude until the bracket is within tolerance."""
    b = cfg.bisect
    runs = _map(_run_amplitude_args, [(cfg, b.c_lo, None), (cfg, b.c_hi, None)], cfg.workers)
    lo_run, hi_run = runs
    lo, hi = b.c_lo, b.c_hi

    def partial(reason):
        summary = {"bracket": [lo, hi], "tolerance": b.tolerance, "c_star": None,
                   "aborted": reason}
        return ExperimentResult("threshold-bisect", sorted(runs, key=lambda r: r.c), summary,
                                FAILED)

    if lo_run.record.classification != records.GLOBAL:
        raise ExperimentAborted(f"lower endpoint c={lo!r} is {lo_run.record.classification}, "
                                "not global-to-horizon", partial("lower endpoint not global"))
    if hi_run.record.classification != records.BLOWUP:
        raise ExperimentAborted(f"upper endpoint c={hi!r} is {hi_run.record.classification}, "
                                "not blowup", partial("upper endpoint not blowup"))
    while hi - lo > b.tolerance:
        mid = 0.5 * (lo + hi)
        run = run_amplitude(cfg, mid)
        runs.append(run)
        outcome = run.record.classification
        if outcome == records.GLOBAL:
            lo = mid
        elif outcome == records.BLOWUP:
            hi = mid
        else:
            raise ExperimentAborted(f"run at c={mid!r} is inconclusive; bracket [{lo!r}, {hi!r}]",
                                    partial(f"inconclusive at c={mid!r}"))
    summary = {"bracket": [lo, hi], "tolerance": b.tolerance, "c_star": 0.5 * (lo + hi),
               "aborted": None}
    return ExperimentResult("threshold-bisect", sorted(runs, key=lambda r: r.c), summary, OK)


def instability(cfg: ExperimentConfig) -> ExperimentResult:
    """Ground state w, its identities, the action along k w, and runs from k w."""
    params = cfg.params
    gs = ground_state_solve(params, cfg.grid)
    rep = verify_stationarity(gs, params)
    ks_check = np.linspace(1.0, 2.0, cfg.check_grid + 1)[1:]
    value, S, Q = action_profile(gs, params, ks_check)
    decreasing = bool(np.all(np.diff(value) < 0))
    lam_params = params.with_(lam=gs.lam)
    jobs = [(f"k={k!r}", k, gs.w.scaled(k), lam_params, cfg.solver) for k in sorted(cfg.ks)]
    runs = _map(_run_state, jobs, cfg.workers)
    runs.sort(key=lambda r: r.c)
    for r in runs:
        state0 = gs.w.scaled(r.c)
        rep0 = compute_functionals(state0, lam_params)
        r.persistence = {"functional": "Q", "initial_sign": int(np.sign(rep0.Q))}
        if r.record.classification != records.INCONCLUSIVE:
            r.persistence["persistent"] = sign_persistence(r.record, "Q").persistent
    base = compute_functionals(gs.w, lam_params)
    summary = {
        "ground_state": {"residual": gs.residual, "converged": gs.converged,
                         "iterations": gs.iterations, "lambda": gs.lam.tolist(),
                         "M": base.M, "K": base.K, "P": base.P},
        "identities": {"S": rep.S, "pohozaev": rep.pohozaev, "Q": rep.Q, "S_rel": rep.S_rel,
                       "pohozaev_rel": rep.pohozaev_rel, "Q_rel": rep.Q_rel, "ok": rep.ok},
        "action_profile": {"k": ks_check.tolist(), "value": value.tolist(), "S": S.tolist(),
                           "Q": Q.tolist(), "strictly_decreasing": decreasing},
        "outcomes": {r.label: r.record.classification for r in runs},
    }
    status = OK if gs.accepted and rep.ok else FAILED
    return ExperimentResult("instability", runs, summary, status)


def threshold_estimate(cfg: ExperimentConfig) -> ExperimentResult:
    gammas = cfg.gamma_values or (cfg.params.gamma,)
    out = {}
    converged = True
    for g in gammas:
        params = cfg.params.with_(gamma=float(g))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est = estimate_threshold(cfg.threshold_kind, params, cfg.grid,
                                     mass=cfg.threshold_mass)
        out[repr(float(g))] = est.summary()
        converged = converged and est.converged
    summary = {"kind": cfg.threshold_kind, "estimates": out, "converged": converged}
    return ExperimentResult("threshold-estimate", [], summary, OK if converged else FAILED)


def _check(name, value, tol, passed):
    return {"name": name, "value": float(value), "tol": tol, "pass": bool(passed)}


def identity_suite(cfg: ExperimentConfig) -> ExperimentResult:
    """Static identity and inequality checks across the manifolds, aggregated."""
    from ..sphere import (check_poincare_antisymmetric, check_sobolev_sphere,
                          check_sphere_weights, random_field)
    from ..weights import (HYPERBOLIC_SQUARE, HYPERBOLIC_STAR, star_derivative_closed_form_n2,
                           virial_weights)
    checks = []
    lams = np.linspace(0.01, 0.99, 99)
    for n, p in ((1, 7.0), (2, 4.0), (3, 3.0)):
        hmax = max(h_lambda(l, n, p) for l in lams)
        checks.append(_check(f"h < 0 (n={n}, p={p:g})", hmax, 0.0, hmax < 0))
    for n in (1, 2, 3):
        hcrit = max(abs(h_lambda(l, n, 1.0 + 4.0 / n)) for l in lams)
        checks.append(_check(f"h = 0 at the critical power (n={n})", hcrit, 1e-12, hcrit <= 1e-12))
    for n in (2, 3):
        spec = grids.hyperbolic(n, 1000, 10.0)
        star = check_weight_inequalities(virial_weights(spec, HYPERBOLIC_STAR))
        checks.append(_check(f"star weight inequalities (n={n})", star.max_violation, 1e-10,
                             star.ok))
        sq = check_weight_inequalities(virial_weights(spec, HYPERBOLIC_SQUARE))
        checks.append(_check(f"square weight inequalities (n={n})", sq.max_violation, 1e-10,
                             sq.ok))
        if n == 2:
            w = virial_weights(spec, HYPERBOLIC_STAR)
            err = float(np.max(np.abs(w.drho - star_derivative_closed_form_n2(w.r))))
            checks.append(_check("rho*' = tanh(r/2) (n=2)", err, 1e-10, err <= 1e-10))
    sw = check_sphere_weights()
    checks.append(_check("hemispheric weight identities", sw.max_lap_error, sw.tol, sw.ok))
    rng = np.random.default_rng(cfg.seed)
    ratio = max(check_poincare_antisymmetric(random_field(12, rng, antisymmetric=True))
                for _ in range(100))
    checks.append(_check("Poincare ratio on antisymmetric fields <= 4", ratio, 4.0, ratio <= 4.0))
    for p in (4.0, 8.0):
        slack = min(check_sobolev_sphere(random_field(12, rng), p).slack for _ in range(100))
        checks.append(_check(f"sphere Sobolev slack >= 0 (p={p:g})", slack, 0.0, slack >= 0))
    passed = all(c["pass"] for c in checks)
    summary = {"checks": checks, "passed": sum(c["pass"] for c in checks), "total": len(checks),
               "all_pass": passed}
    return ExperimentResult("identity-suite", [], summary, OK if passed else FAILED)


_DISPATCH = {
    "single-run": single_run,
    "amplitude-sweep": amplitude_sweep,
    "threshold-bisect": threshold_bisect,
    "instability": instability,
    "threshold-estimate": threshold_estimate,
    "identity-suite": identity_suite,
}


def _finish(cfg, result):
    result.summary = {"experiment": cfg.experiment, "params": cfg.params.to_dict(),
                      "grid": {"manifold": cfg.grid.manifold, "n": cfg.grid.n,
                               "points": cfg.grid.points, "extent": cfg.grid.extent},
                      "theorem": cfg.theorem, "seed": cfg.seed, "status": result.status,
                      "runs": [r.summary() for r in result.runs], **result.summary}
    return result


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    try:
        result = _DISPATCH[cfg.experiment](cfg)
    except ExperimentAborted as exc:
        if exc.result is not None:
            _finish(cfg, exc.result)
        raise
    return _finish(cfg, result)


__all__ = ["ExperimentResult", "RunOutcome", "ExperimentAborted", "run_experiment",
           "run_amplitude", "initial_state", "integrate", "monotone_report"]

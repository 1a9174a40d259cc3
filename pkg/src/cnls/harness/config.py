"""Experiment configuration: a YAML document validated into an ExperimentConfig.

Grammar (every section optional except ``experiment`` and ``system``)::

    experiment: single-run | amplitude-sweep | threshold-bisect | instability
                | threshold-estimate | identity-suite
    theorem: T1 | T2 | T4 | T5-radial | T5-nonradial | T7 | C1 | C2 | C4 | C5 | C7
    seed: 0
    workers: 1
    system:   {n, N, p, mu, beta, lambda, gamma}
    grid:     {manifold: euclidean | hyperbolic | sphere, points, extent}
    solver:   {any SolverConfig field, e.g. dt0, t_max, cfl_safety, dt_min}
    initial:
      components:
        - {shape: gaussian, amplitude, width, center}
        - {shape: sech, amplitude, width, power, center}
      phases: [theta_1, ...]
    sweep:     {c: [..]} or {c_min, c_max, count}
    bisect:    {c_lo, c_hi, tolerance}
    instability: {k: [..], check_grid: 20}
    threshold: {kind, mass: M | M_lambda, gamma_values: [..]}
    output:    {directory}

Validation errors carry the line of the offending entry.
"""
import re
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from .. import grid as grids
from ..errors import ConfigError, ParameterError
from ..params import SystemParams
from ..records import SolverConfig
from ..state import Gaussian, Sech
from ..variational import KINDS as THRESHOLD_KINDS
from ..virial import THEOREMS, theorem_manifold, theorem_range, theorem_threshold

EXPERIMENTS = ("single-run", "amplitude-sweep", "threshold-bisect", "instability",
               "threshold-estimate", "identity-suite")
MANIFOLD_NAMES = {"euclidean": grids.EUCLIDEAN, "hyperbolic": grids.HYPERBOLIC,
                  "sphere": grids.SPHERE}
_TOP_KEYS = {"experiment", "theorem", "seed", "workers", "system", "grid", "solver", "initial",
             "sweep", "bisect", "instability", "threshold", "output"}


@dataclass(frozen=True)
class Bisection:
    c_lo: float
    c_hi: float
    tolerance: float


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: SystemParams
    grid: grids.GridSpec
    solver: SolverConfig
    profiles: tuple = ()
    phases: tuple = None
    theorem: str = None
    sweep: tuple = ()
    bisect: Bisection = None
    ks: tuple = ()
    check_grid: int = 20
    threshold_kind: str = None
    threshold_mass: str = "M"
    gamma_values: tuple = ()
    output_dir: str = "cnls-output"
    seed: int = 0
    workers: int = 1

    def with_(self, **changes):
        return replace(self, **changes)


class _Doc:
    """Plain python values plus the source line of every key path."""

    def __init__(self, text):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                              None if mark is None else mark.line + 1) from None
        self.lines = {}
        if node is None:
            raise ConfigError("empty configuration document", 1)
        self.data = self._build(node, ())
        if not isinstance(self.data, dict):
            raise ConfigError("configuration must be a mapping of sections",
                              node.start_mark.line + 1)

    def _build(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = knode.value
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", knode.start_mark.line + 1)
                out[key] = self._build(vnode, path + (key,))
                self.lines[path + (key,)] = knode.start_mark.line + 1
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._build(v, path + (i,)) for i, v in enumerate(node.value)]
        return _scalar(node)

    def line(self, *path):
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _section(doc, name):
    sec = doc.data.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping", doc.line(name))
    return sec


def _number(doc, path, value, kind=float, positive=False):
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a sign (1.0e3) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{'.'.join(map(str, path))} must be a number, got {value!r}",
                          doc.line(*path))
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"{'.'.join(map(str, path))} must be positive, got {value}",
                          doc.line(*path))
    return value


def _system(doc):
    sec = _section(doc, "system")
    if not sec:
        raise ConfigError("missing section 'system'", doc.line())
    for key in ("n", "p"):
        if key not in sec:
            raise ConfigError(f"system.{key} is required", doc.line("system"))
    n = _number(doc, ("system", "n"), sec["n"], int)
    N = _number(doc, ("system", "N"), sec.get("N", 1), int)
    p = _number(doc, ("system", "p"), sec["p"])
    mu = sec.get("mu", [1.0] * N)
    beta = sec.get("beta", [[0.0] * N for _ in range(N)])
    lam = sec.get("lambda")
    gamma = sec.get("gamma", 2.0)
    unknown = set(sec) - {"n", "N", "p", "mu", "beta", "lambda", "gamma"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key system.{key}", doc.line("system", key))
    try:
        return SystemParams(n=n, N=N, p=p, mu=np.asarray(mu, dtype=float),
                            beta=np.asarray(beta, dtype=float),
                            lam=None if lam is None else np.asarray(lam, dtype=float),
                            gamma=float(gamma))
    except (ParameterError, ValueError, TypeError) as exc:
        msg = str(exc)
        for key in ("beta", "mu", "lambda", "gamma", "p", "N", "n"):
            word = "lam(bda)?" if key == "lambda" else key
            if re.search(rf"\b{word}\b", msg):
                raise ConfigError(msg, doc.line("system", key)) from None
        raise ConfigError(msg, doc.line("system")) from None


def _grid(doc, n):
    sec = _section(doc, "grid")
    name = sec.get("manifold", "euclidean")
    if name not in MANIFOLD_NAMES:
        raise ConfigError(f"grid.manifold must be one of {sorted(MANIFOLD_NAMES)}, got {name!r}",
                          doc.line("grid", "manifold"))
    manifold = MANIFOLD_NAMES[name]
    defaults = {grids.EUCLIDEAN: (1024, 20.0), grids.HYPERBOLIC: (1000, 10.0),
                grids.SPHERE: (0, 32)}[manifold]
    points = _number(doc, ("grid", "points"), sec.get("points", defaults[0]), int)
    extent = _number(doc, ("grid", "extent"), sec.get("extent", defaults[1]))
    try:
        return grids.GridSpec(manifold, n, points, extent)
    except ParameterError as exc:
        raise ConfigError(str(exc), doc.line("grid")) from None


_SOLVER_TYPES = {f.name: {bool: bool, int: int}.get(f.type, float)
                 for f in fields(SolverConfig)}


def _solver(doc):
    sec = _section(doc, "solver")
    names = {f.name for f in fields(SolverConfig)}
    kwargs = {}
    for key, value in sec.items():
        if key not in names:
            raise ConfigError(f"unknown solver option {key!r}", doc.line("solver", key))
        kind = _SOLVER_TYPES[key]
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"solver.{key} must be true or false, got {value!r}",
                                  doc.line("solver", key))
        elif value is not None:
            value = _number(doc, ("solver", key), value, kind)
        kwargs[key] = value
    try:
        return SolverConfig(**kwargs)
    except (ParameterError, TypeError) as exc:
        raise ConfigError(str(exc), doc.line("solver")) from None


def _profiles(doc, N):
    sec = _section(doc, "initial")
    comps = sec.get("components")
    if comps is None:
        return tuple(Gaussian(1.0) for _ in range(N)), None
    if not isinstance(comps, list) or len(comps) != N:
        raise ConfigError(f"initial.components must list N={N} profiles", doc.line("initial",
                                                                                    "components"))
    out = []
    for i, c in enumerate(comps):
        path = ("initial", "components", i)
        if not isinstance(c, dict):
            raise ConfigError("each component must be a mapping", doc.line(*path))
        shape = c.get("shape", "gaussian")
        amp = _number(doc, path + ("amplitude",), c.get("amplitude", 1.0))
        width = _number(doc, path + ("width",), c.get("width", 1.0), positive=True)
        center = tuple(float(x) for x in c.get("center", ()))
        if shape == "gaussian":
            out.append(Gaussian(amp, width, center))
        elif shape == "sech":
            power = _number(doc, path + ("power",), c.get("power", 1.0), positive=True)
            out.append(Sech(amp, width, center, power))
        else:
            raise ConfigError(f"unknown profile shape {shape!r} (gaussian or sech)",
                              doc.line(*path, "shape"))
    phases = sec.get("phases")
    if phases is not None:
        if not isinstance(phases, list) or len(phases) != N:
            raise ConfigError(f"initial.phases must list N={N} numbers", doc.line("initial",
                                                                               "phases"))
        phases = tuple(float(x) for x in phases)
    return tuple(out), phases


def _sweep(doc):
    sec = _section(doc, "sweep")
    if not sec:
        return ()
    if "c" in sec:
        cs = sec["c"]
        if not isinstance(cs, list):
            raise ConfigError("sweep.c must be a list", doc.line("sweep", "c"))
        cs = [_number(doc, ("sweep", "c", i), v, positive=True) for i, v in enumerate(cs)]
    else:
        lo = _number(doc, ("sweep", "c_min"), sec.get("c_min", 0.0), positive=True)
        hi = _number(doc, ("sweep", "c_max"), sec.get("c_max", 0.0), positive=True)
        count = _number(doc, ("sweep", "count"), sec.get("count", 0), int, positive=True)
        if hi < lo:
            raise ConfigError("sweep.c_max must be >= sweep.c_min", doc.line("sweep", "c_max"))
        cs = [float(f"{c:.12g}") for c in np.linspace(lo, hi, count)]
    if not cs:
        raise ConfigError("sweep range is empty", doc.line("sweep"))
    return tuple(sorted(cs))


def _bisect(doc):
    sec = _section(doc, "bisect")
    if not sec:
        return None
    lo = _number(doc, ("bisect", "c_lo"), sec.get("c_lo"), positive=True)
    hi = _number(doc, ("bisect", "c_hi"), sec.get("c_hi"), positive=True)
    tol = _number(doc, ("bisect", "tolerance"), sec.get("tolerance", 1e-2))
    if not tol > 0:
        raise ConfigError(f"bisection tolerance must be positive, got {tol}",
                          doc.line("bisect", "tolerance"))
    if not hi > lo:
        raise ConfigError("bisect.c_hi must exceed bisect.c_lo", doc.line("bisect", "c_hi"))
    return Bisection(lo, hi, tol)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a configuration document; errors name the line of the offending entry."""
    doc = _Doc(text)
    unknown = set(doc.data) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown section {key!r}", doc.line(key))
    exp = doc.data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}",
                          doc.line("experiment"))
    params = _system(doc)
    spec = _grid(doc, params.n)
    solver = _solver(doc)
    profiles, phases = _profiles(doc, params.N)
    theorem = doc.data.get("theorem")
    if theorem is not None:
        if theorem not in THEOREMS:
            raise ConfigError(f"theorem must be one of {THEOREMS}, got {theorem!r}",
                              doc.line("theorem"))
        if theorem_manifold(theorem) != spec.manifold:
            raise ConfigError(f"{theorem} concerns {theorem_manifold(theorem)} data, the grid is "
                              f"{spec.manifold}", doc.line("theorem"))
        violation = theorem_range(theorem, params.n, params.p)
        if violation is not None:
            raise ConfigError(f"p out of range for {theorem}: {violation}", doc.line("system", "p"))
    inst = _section(doc, "instability")
    ks = inst.get("k", [])
    if not isinstance(ks, list):
        raise ConfigError("instability.k must be a list", doc.line("instability", "k"))
    ks = tuple(_number(doc, ("instability", "k", i), v, positive=True) for i, v in enumerate(ks))
    check_grid = _number(doc, ("instability", "check_grid"), inst.get("check_grid", 20), int,
                         positive=True)
    thr = _section(doc, "threshold")
    kind = thr.get("kind", None if theorem is None else theorem_threshold(theorem))
    if kind is not None and kind not in THRESHOLD_KINDS:
        raise ConfigError(f"threshold.kind must be one of {THRESHOLD_KINDS}, got {kind!r}",
                          doc.line("threshold", "kind"))
    mass = thr.get("mass", "M")
    if mass not in ("M", "M_lambda"):
        raise ConfigError("threshold.mass must be M or M_lambda", doc.line("threshold", "mass"))
    gammas = thr.get("gamma_values", [])
    gammas = tuple(_number(doc, ("threshold", "gamma_values", i), g, positive=True)
                   for i, g in enumerate(gammas))
    seed = _number(doc, ("seed",), doc.data.get("seed", 0), int)
    workers = _number(doc, ("workers",), doc.data.get("workers", 1), int, positive=True)
    out_dir = _section(doc, "output").get("directory", "cnls-output")
    cfg = ExperimentConfig(experiment=exp, params=params, grid=spec, solver=solver,
                           profiles=profiles, phases=phases, theorem=theorem, sweep=_sweep(doc),
                           bisect=_bisect(doc), ks=ks, check_grid=check_grid,
                           threshold_kind=kind, threshold_mass=mass, gamma_values=gammas,
                           output_dir=str(out_dir), seed=seed, workers=workers)
    _require(cfg, doc)
    return cfg


def _require(cfg, doc):
    """Per-experiment required sections."""
    if cfg.experiment == "amplitude-sweep" and not cfg.sweep:
        raise ConfigError("amplitude-sweep needs a nonempty 'sweep' section", doc.line())
    if cfg.experiment == "threshold-bisect" and cfg.bisect is None:
        raise ConfigError("threshold-bisect needs a 'bisect' section", doc.line())
    if cfg.experiment == "instability":
        if not cfg.ks:
            raise ConfigError("instability needs instability.k values", doc.line("instability"))
        if cfg.grid.manifold != grids.EUCLIDEAN:
            raise ConfigError("the instability experiment runs on the euclidean box",
                              doc.line("grid", "manifold"))
    if cfg.experiment == "threshold-estimate" and cfg.threshold_kind is None:
        raise ConfigError("threshold-estimate needs threshold.kind", doc.line())
    if cfg.experiment in ("single-run", "amplitude-sweep", "threshold-bisect") \
            and cfg.grid.manifold == grids.SPHERE:
        raise ConfigError("time evolution is available on euclidean and hyperbolic grids",
                          doc.line("grid", "manifold"))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg: ExperimentConfig, p=None, c=None, k=None, t_max=None,
                    resolution=None) -> ExperimentConfig:
    """CLI overrides of the most-touched scalars, revalidated."""
    changes = {}
    if p is not None:
        try:
            changes["params"] = cfg.params.with_(p=float(p))
        except ParameterError as exc:
            raise ConfigError(f"--p: {exc}") from None
        if cfg.theorem is not None:
            violation = theorem_range(cfg.theorem, cfg.params.n, float(p))
            if violation is not None:
                raise ConfigError(f"--p out of range for {cfg.theorem}: {violation}")
    if c is not None:
        if not c > 0:
            raise ConfigError("--c must be positive")
        changes["sweep"] = (float(c),)
    if k is not None:
        if not k > 0:
            raise ConfigError("--k must be positive")
        changes["ks"] = (float(k),)
    if t_max is not None:
        try:
            changes["solver"] = cfg.solver.with_(t_max=float(t_max))
        except ParameterError as exc:
            raise ConfigError(f"--t-max: {exc}") from None
    if resolution is not None:
        g = cfg.grid
        try:
            changes["grid"] = grids.GridSpec(g.manifold, g.n, int(resolution), g.extent)
        except ParameterError as exc:
            raise ConfigError(f"--resolution: {exc}") from None
    return cfg.with_(**changes)


__all__ = ["ExperimentConfig", "Bisection", "parse_config", "load_config", "apply_overrides",
           "EXPERIMENTS"]

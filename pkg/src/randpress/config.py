"""JSON run configurations: parsing, validation and override handling.

A configuration has five top-level keys::

    {"version": 1,
     "system": {"base": ..., "sft": ..., "potential": ..., "vector_potential": ...,
                "scaling": ..., "nonlinearity": ..., "measure": ...,
                "abundance_of_ergodic_measures": false},
     "estimator": {<EstimatorConfig fields>},
     "command": {"name": ..., "beta_grid": ..., "method": ..., "flavor": ...,
                 "suite": ..., "seed": ..., "count": ..., "budget": {...}},
     "output": {"dir": ..., "csv": true, "prefix": ""}}

Unknown keys are rejected and every problem is reported, not only the first.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, InvalidArgument
from .estimators import EstimatorConfig
from .measures import FLAVORS, OptimizerBudget, RandomMarkovMeasure
from .model import (
    BaseSystem,
    Nonlinearity,
    Potential,
    RandomSFT,
    RandomSystem,
    ScalingPotential,
    VectorPotential,
)

VERSION = 1
COMMANDS = ("pressure", "induced", "nonlinear", "nonlinear-induced", "curve", "solve", "scan",
            "variational", "gap", "verify")
SUITE_NAMES = ("reduction", "property", "consistency")

_TOP = {"version", "system", "estimator", "command", "output"}
_SYSTEM = {"base", "sft", "potential", "vector_potential", "scaling", "nonlinearity", "measure",
           "abundance_of_ergodic_measures"}
_BASE = {"kind", "symbols", "cycle", "weights", "seed"}
_SFT = {"k", "matrices", "preset"}
_POT = {"memory", "tables"}
_NONLIN = {"form", "d", "c", "a", "b", "Q"}
_MEASURE = {"Q"}
_COMMAND = {"name", "beta_grid", "method", "flavor", "suite", "seed", "count", "budget"}
_BUDGET = {f.name for f in fields(OptimizerBudget)}
_OUTPUT = {"dir", "csv", "prefix"}
_ESTIMATOR = {f.name for f in fields(EstimatorConfig)}


@dataclass
class CommandSpec:
    name: str | None = None
    beta_grid: tuple = ()
    method: str = "direct"
    flavor: str = "linear"
    suite: str | None = None
    seed: int = 0
    count: int | None = None
    budget: OptimizerBudget = field(default_factory=OptimizerBudget)


@dataclass
class OutputSpec:
    dir: str | None = None
    csv: bool = True
    prefix: str = ""


@dataclass
class RunConfig:
    """A fully validated run: model objects plus the resolved document they came from."""

    version: int
    system: RandomSystem | None
    potential: Potential | None
    vector_potential: VectorPotential | None
    scaling: ScalingPotential | None
    nonlinearity: Nonlinearity | None
    measure: RandomMarkovMeasure | None
    estimator: EstimatorConfig
    command: CommandSpec
    output: OutputSpec
    document: dict

    @property
    def digest(self):
        return config_digest(self.document)

    @property
    def Phi(self):
        """The vector potential if given, else the scalar potential."""
        return self.vector_potential if self.vector_potential is not None else self.potential


def config_digest(document: dict) -> str:
    canon = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class _Errors:
    def __init__(self):
        self.items = []

    def add(self, path, msg):
        self.items.append(f"{path}: {msg}" if path else msg)

    def keys(self, path, d, allowed):
        if not isinstance(d, dict):
            self.add(path, "must be an object")
            return False
        for key in sorted(set(d) - allowed):
            self.add(f"{path}.{key}" if path else key, "unknown key")
        return True

    def attempt(self, path, fn):
        try:
            return fn()
        except (InvalidArgument, ValueError, TypeError) as exc:
            self.add(path, str(exc))
            return None


def _build_base(err, d):
    if not err.keys("system.base", d, _BASE):
        return None
    kind = d.get("kind")
    if kind == "trivial":
        return err.attempt("system.base", BaseSystem.trivial)
    if kind == "periodic":
        return err.attempt("system.base", lambda: BaseSystem.periodic(d.get("cycle", []), d.get("symbols")))
    if kind == "iid":
        return err.attempt("system.base", lambda: BaseSystem.iid(d["weights"], d.get("seed", 0)))
    err.add("system.base.kind", f"must be one of trivial, periodic, iid (got {kind!r})")
    return None


def _build_sft(err, d, base_symbols):
    if not err.keys("system.sft", d, _SFT):
        return None
    preset = d.get("preset")
    k = d.get("k", 2)
    if preset is not None:
        if "matrices" in d:
            err.add("system.sft", "give either preset or matrices, not both")
            return None
        if preset == "full":
            return err.attempt("system.sft", lambda: RandomSFT.full_shift(k))
        if preset == "golden-mean":
            return err.attempt("system.sft", RandomSFT.golden_mean)
        err.add("system.sft.preset", f"must be full or golden-mean (got {preset!r})")
        return None
    if "matrices" not in d:
        err.add("system.sft", "needs matrices or a preset")
        return None

    def make():
        A = np.asarray(d["matrices"])
        if A.ndim == 2:
            A = A[None]
        if A.shape[0] not in (1, base_symbols):
            raise InvalidArgument(f"expected 1 or {base_symbols} matrices, got {A.shape[0]}")
        return RandomSFT(int(d.get("k", A.shape[-1])), A)

    return err.attempt("system.sft.matrices", make)


def _build_potential(err, path, d, k, S, cls=Potential):
    if not err.keys(path, d, _POT):
        return None

    def make():
        r = int(d.get("memory", 1))
        t = np.asarray(d["tables"], dtype=float)
        if t.ndim == 1:
            t = t[None]
        if t.shape[1] != k ** r:
            raise InvalidArgument(f"tables need {k ** r} entries per base symbol for k={k}, memory={r}")
        if t.shape[0] not in (1, S):
            raise InvalidArgument(f"tables need 1 or {S} rows")
        return cls(t, k, r)

    return err.attempt(path, make)


def _build_nonlinearity(err, d):
    if not err.keys("system.nonlinearity", d, _NONLIN):
        return None
    form = d.get("form")

    def make():
        if form == "identity":
            return Nonlinearity.identity()
        if form == "constant":
            return Nonlinearity.constant(d["c"], d.get("d", 1))
        if form == "affine":
            return Nonlinearity.affine(d.get("a", 1.0), d.get("b", 0.0))
        if form == "square":
            return Nonlinearity.square()
        if form == "linear":
            return Nonlinearity.linear(d["c"])
        if form == "mean":
            return Nonlinearity.mean(int(d["d"]))
        if form == "quadratic":
            return Nonlinearity.quadratic(d["Q"], d["c"])
        if form == "max":
            return Nonlinearity.max_coordinate(int(d["d"]))
        raise InvalidArgument(f"unknown form {form!r}")

    try:
        return make()
    except KeyError as exc:
        err.add("system.nonlinearity", f"form {form!r} needs field {exc.args[0]!r}")
    except (InvalidArgument, ValueError, TypeError) as exc:
        err.add("system.nonlinearity", str(exc))
    return None


def _build_measure(err, d, system):
    if not err.keys("system.measure", d, _MEASURE):
        return None
    Q = np.asarray(d.get("Q"), dtype=float)
    if Q.ndim == 2:
        Q = Q[None]
    if Q.ndim != 3:
        err.add("system.measure.Q", "must be a k x k matrix or one per base symbol")
        return None
    ok = True
    for s in range(Q.shape[0]):
        for i, row in enumerate(Q[s]):
            if abs(row.sum() - 1.0) > 1e-12:
                err.add(f"system.measure.Q[{s}][{i}]", f"stochastic row sums to {row.sum():.12g}, not 1")
                ok = False
    if not ok:
        return None
    return err.attempt("system.measure", lambda: RandomMarkovMeasure.on(system, Q))


def _grid(err, g):
    if isinstance(g, dict):
        if set(g) - {"start", "stop", "step"} or not {"start", "stop", "step"} <= set(g):
            err.add("command.beta_grid", "range form needs exactly start, stop, step")
            return ()
        if not g["step"] > 0:
            err.add("command.beta_grid.step", "must be positive")
            return ()
        return tuple(float(x) for x in np.arange(g["start"], g["stop"] + 0.5 * g["step"], g["step"]))
    try:
        grid = tuple(float(x) for x in g)
    except (TypeError, ValueError):
        err.add("command.beta_grid", "must be a list of numbers or a start/stop/step object")
        return ()
    if any(b <= a for a, b in zip(grid, grid[1:])):
        err.add("command.beta_grid", "must be strictly increasing")
    return grid


def validate(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded document, collecting every error."""
    err = _Errors()
    if not err.keys("", doc, _TOP):
        raise ConfigError("configuration must be a JSON object", err.items)
    if "version" not in doc:
        err.add("version", "required")
    elif doc["version"] != VERSION:
        err.add("version", f"unsupported version {doc['version']!r} (expected {VERSION})")

    sysd = doc.get("system", {})
    system = potential = vec = scaling = F = measure = None
    if err.keys("system", sysd, _SYSTEM):
        base = _build_base(err, sysd.get("base", {"kind": "trivial"}))
        S = base.symbols if base is not None else 1
        sft = _build_sft(err, sysd["sft"], S) if "sft" in sysd else None
        if "sft" not in sysd and doc.get("command", {}).get("name") != "verify":
            err.add("system.sft", "required")
        if base is not None and sft is not None:
            abundance = sysd.get("abundance_of_ergodic_measures", False)
            if not isinstance(abundance, bool):
                err.add("system.abundance_of_ergodic_measures", "must be true or false")
                abundance = False
            system = err.attempt("system", lambda: RandomSystem(base, sft, abundance))
        if system is not None:
            k = system.k
            if "potential" in sysd:
                potential = _build_potential(err, "system.potential", sysd["potential"], k, S)
            if "vector_potential" in sysd:
                vp = sysd["vector_potential"]
                if not isinstance(vp, list) or not vp:
                    err.add("system.vector_potential", "must be a nonempty list of potentials")
                else:
                    comps = [_build_potential(err, f"system.vector_potential[{i}]", c, k, S)
                             for i, c in enumerate(vp)]
                    if all(c is not None for c in comps):
                        vec = err.attempt("system.vector_potential", lambda: VectorPotential(tuple(comps)))
            if "scaling" in sysd:
                scaling = _build_potential(err, "system.scaling", sysd["scaling"], k, S, ScalingPotential)
            if "measure" in sysd:
                measure = _build_measure(err, sysd["measure"], system)
        if "nonlinearity" in sysd:
            F = _build_nonlinearity(err, sysd["nonlinearity"])

    estd = doc.get("estimator", {})
    estimator = None
    if err.keys("estimator", estd, _ESTIMATOR):
        try:
            estimator = EstimatorConfig(**estd)
        except InvalidArgument as exc:
            for msg in str(exc).split("; "):
                err.add("estimator", msg)
        except (TypeError, ValueError) as exc:
            err.add("estimator", str(exc))

    cmd = CommandSpec()
    cmdd = doc.get("command", {})
    if err.keys("command", cmdd, _COMMAND):
        cmd.name = cmdd.get("name")
        if cmd.name is not None and cmd.name not in COMMANDS:
            err.add("command.name", f"unknown command {cmd.name!r}")
        if "beta_grid" in cmdd:
            cmd.beta_grid = _grid(err, cmdd["beta_grid"])
        cmd.method = cmdd.get("method", "direct")
        if cmd.method not in ("direct", "pseudo-inverse"):
            err.add("command.method", "must be direct or pseudo-inverse")
        cmd.flavor = cmdd.get("flavor", "linear")
        if cmd.flavor not in FLAVORS:
            err.add("command.flavor", f"must be one of {', '.join(FLAVORS)}")
        cmd.suite = cmdd.get("suite")
        if cmd.suite is not None and cmd.suite not in SUITE_NAMES:
            err.add("command.suite", f"must be one of {', '.join(SUITE_NAMES)}")
        cmd.seed = cmdd.get("seed", 0)
        if not isinstance(cmd.seed, int):
            err.add("command.seed", "must be an integer")
        cmd.count = cmdd.get("count")
        if cmd.count is not None and (not isinstance(cmd.count, int) or cmd.count < 1):
            err.add("command.count", "must be a positive integer")
        bd = cmdd.get("budget", {})
        if err.keys("command.budget", bd, _BUDGET):
            b = err.attempt("command.budget", lambda: OptimizerBudget(**bd))
            if b is not None:
                cmd.budget = b

    out = OutputSpec()
    outd = doc.get("output", {})
    if err.keys("output", outd, _OUTPUT):
        out = OutputSpec(outd.get("dir"), bool(outd.get("csv", True)), str(outd.get("prefix", "")))

    if cmd.name is not None and not err.items:
        _requirements(err, cmd, potential, vec, scaling, F)
    if err.items:
        raise ConfigError(f"{len(err.items)} configuration error(s): " + "; ".join(err.items), err.items)
    return RunConfig(doc["version"], system, potential, vec, scaling, F, measure, estimator, cmd, out,
                     copy.deepcopy(doc))


def _requirements(err, cmd, potential, vec, scaling, F):
    name = cmd.name
    phi = vec if vec is not None else potential
    if name == "verify":
        if cmd.suite is None:
            err.add("command.suite", "required for verify")
        return
    if phi is None:
        err.add("system.potential", f"required for {name}")
    needs_scaling = name in ("induced", "nonlinear-induced", "curve", "solve", "scan") or \
        (name in ("variational", "gap") and "induced" in cmd.flavor)
    needs_F = name in ("nonlinear", "nonlinear-induced") or \
        (name in ("variational", "gap") and cmd.flavor.startswith("nonlinear"))
    if needs_scaling and scaling is None:
        err.add("system.scaling", f"required for {name}")
    if needs_F and F is None:
        err.add("system.nonlinearity", f"required for {name}")
    if name in ("pressure", "induced") and vec is not None and potential is None:
        err.add("system.potential", f"{name} takes a scalar potential")
    if name in ("curve", "scan") and not cmd.beta_grid:
        err.add("command.beta_grid", f"required for {name}")
    if name == "scan" and len(cmd.beta_grid) < 2:
        err.add("command.beta_grid", "needs at least two points")


def parse_config(document) -> RunConfig:
    """Parse a JSON string (or an already-decoded dict) into a validated :class:`RunConfig`."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            msg = f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            raise ConfigError(msg, [msg], kind="parse") from None
    else:
        doc = document
    return validate(doc)


def apply_overrides(doc: dict, assignments, seed: int | None = None) -> dict:
    """Apply ``key.path=value`` overrides (values parsed as JSON when possible) and a global seed."""
    doc = copy.deepcopy(doc)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", kind="parse")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} runs through a non-object", kind="validation")
        node[parts[-1]] = value
    if seed is not None:
        base = doc.get("system", {}).get("base")
        if isinstance(base, dict) and base.get("kind") == "iid":
            base["seed"] = seed
        est = doc.setdefault("estimator", {})
        if est.get("seeds"):
            est["seeds"] = [seed + i for i in range(len(est["seeds"]))]
        doc.setdefault("command", {})["seed"] = seed
    return doc

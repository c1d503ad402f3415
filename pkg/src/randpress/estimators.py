"""Pressure estimates from finite partition sums.

Each estimator evaluates ``(1/n) log Z_n`` (or ``(1/T) log Z_T``) on one or
more base trajectories, averages the log-values over samples, and condenses
the averaged curve into a point estimate according to the configured
extrapolation.  Root solves and critical-exponent scans work on the curve
``beta -> P(phi - beta psi)`` evaluated at the largest orbit length of the
schedule, so every value they see is exact for that ``n``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BracketFailure, EstimationFailed, InvalidArgument, ScanInconclusive
from .model import (
    Nonlinearity,
    Potential,
    RandomSystem,
    ScalingPotential,
    VectorPotential,
    as_vector,
)
from .partition import (
    _check_arity,
    _depth_factor,
    collect_layers,
    exponent,
    induced_log_partitions,
    log_sum_exp,
    log_transfer_partition,
    max_class,
    tail_log_table,
    trajectory_length,
)

EXTRAPOLATIONS = ("last-value", "cesaro-tail", "affine-fit-in-1/n")
ENGINES = ("enumerate", "transfer")


@dataclass
class EstimatorConfig:
    """Schedules, sampling and numerical settings shared by every estimator.

    Parameters
    ----------
    n_schedule : increasing orbit lengths for fiber and nonlinear pressure.
    T_schedule : increasing clock times for induced estimates and scans.
    m : depth exponent, the separation scale is ``2**-m``.
    samples : number of base trajectories; forced to 1 for deterministic bases.
    seeds : trajectory seeds for i.i.d. bases; defaults to ``base.seed + i``.
    extrapolation : one of ``last-value``, ``cesaro-tail``, ``affine-fit-in-1/n``.
    bisection_tol : bracket width at which the root solve stops.
    bracket_factor : geometric factor for bracket expansion.
    n_max : orbit length for pressure-curve evaluations; defaults to the last
        entry of ``n_schedule``.
    tail_points : number of trailing schedule points used by the extrapolation
        and the spread diagnostic.
    slope_threshold : growth rate of ``log R_T`` per unit ``T`` above which a
        scan point counts as divergent.
    tail_factor : the tail sum ``R_T`` is truncated at
        ``ceil(tail_factor * T / inf psi)``.
    engine : ``enumerate`` (exact layered sums) or ``transfer`` (matrix
        products, linear potentials only).
    threads : worker cap for per-sample evaluation, ``None`` for all cores.
    """

    n_schedule: tuple = (8, 12, 16, 20, 24)
    T_schedule: tuple = (8.5, 12.5, 16.5, 20.5, 24.5)
    m: int = 1
    samples: int = 8
    seeds: tuple = ()
    extrapolation: str = "last-value"
    bisection_tol: float = 1e-6
    bracket_factor: float = 2.0
    n_max: int | None = None
    tail_points: int = 3
    slope_threshold: float = 0.05
    tail_factor: float = 2.0
    engine: str = "enumerate"
    threads: int | None = None

    def __post_init__(self):
        self.n_schedule = tuple(int(n) for n in self.n_schedule)
        self.T_schedule = tuple(float(t) for t in self.T_schedule)
        self.seeds = tuple(int(s) for s in self.seeds)
        errors = self.problems()
        if errors:
            raise InvalidArgument("; ".join(errors))

    def problems(self):
        errs = []
        for name in ("n_schedule", "T_schedule"):
            sched = getattr(self, name)
            if len(sched) == 0:
                errs.append(f"{name} must be nonempty")
            elif any(b <= a for a, b in zip(sched, sched[1:])):
                errs.append(f"{name} must be strictly increasing")
        if self.n_schedule and self.n_schedule[0] < 1:
            errs.append("n_schedule entries must be >= 1")
        if self.T_schedule and self.T_schedule[0] <= 0:
            errs.append("T_schedule entries must be positive")
        if self.m < 1:
            errs.append("m must be >= 1")
        if self.samples < 1:
            errs.append("samples must be >= 1")
        if self.extrapolation not in EXTRAPOLATIONS:
            errs.append(f"extrapolation must be one of {', '.join(EXTRAPOLATIONS)}")
        if not self.bisection_tol > 0:
            errs.append("bisection_tol must be positive")
        if not self.bracket_factor > 1:
            errs.append("bracket_factor must exceed 1")
        if self.n_max is not None and self.n_max < 1:
            errs.append("n_max must be >= 1")
        if self.tail_points < 1:
            errs.append("tail_points must be >= 1")
        if not self.tail_factor >= 1:
            errs.append("tail_factor must be >= 1")
        if self.engine not in ENGINES:
            errs.append(f"engine must be one of {', '.join(ENGINES)}")
        if self.threads is not None and self.threads < 1:
            errs.append("threads must be >= 1")
        return errs

    @property
    def curve_n(self):
        return self.n_max if self.n_max is not None else self.n_schedule[-1]

    def to_dict(self):
        d = asdict(self)
        d["n_schedule"] = list(self.n_schedule)
        d["T_schedule"] = list(self.T_schedule)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class PressureEstimate:
    """Finite-``n`` (or finite-``T``) values and the condensed point estimate.

    ``raw[j, i]`` is the value for sample ``j`` at ``xs[i]``; skipped cells are
    NaN.  ``spread`` is ``max - min`` of ``averaged`` over the tail points.
    """

    method: str
    xs: np.ndarray
    raw: np.ndarray
    averaged: np.ndarray
    point: float
    spread: float
    seeds: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "xs": [float(x) for x in self.xs],
            "raw": [[None if math.isnan(v) else float(v) for v in row] for row in self.raw],
            "averaged": [float(v) for v in self.averaged],
            "point": self.point,
            "spread": self.spread,
            "seeds": list(self.seeds),
            "diagnostics": self.diagnostics,
        }


@dataclass
class RootSolveResult:
    beta_star: float
    brackets: list
    residual: float
    iterations: int
    expansions: int = 0
    n: int = 0

    def to_dict(self):
        return {
            "beta_star": self.beta_star,
            "brackets": [list(b) for b in self.brackets],
            "residual": self.residual,
            "iterations": self.iterations,
            "expansions": self.expansions,
            "n": self.n,
        }


@dataclass
class ScanResult:
    beta_hat: float
    betas: np.ndarray
    slopes: np.ndarray
    divergent: np.ndarray
    Ts: tuple
    caps: tuple
    log_values: np.ndarray  # (betas, Ts), averaged over samples
    monotone: bool = True

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat,
            "betas": [float(b) for b in self.betas],
            "slopes": [float(s) for s in self.slopes],
            "divergent": [bool(x) for x in self.divergent],
            "T_schedule": list(self.Ts),
            "caps": list(self.caps),
            "monotone": self.monotone,
        }


@dataclass
class PressureCurve:
    betas: np.ndarray
    values: np.ndarray
    n: int
    raw: np.ndarray  # (samples, betas)

    def __iter__(self):
        return iter(zip(self.betas.tolist(), self.values.tolist()))

    def to_dict(self):
        return {"betas": self.betas.tolist(), "values": self.values.tolist(), "n": self.n}


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def sample_seeds(system: RandomSystem, cfg: EstimatorConfig) -> tuple:
    """Trajectory seeds (i.i.d.) or start indices (deterministic bases) in sample order."""
    if system.base.deterministic:
        return (0,)
    if cfg.seeds:
        if len(cfg.seeds) < cfg.samples:
            raise InvalidArgument(f"{cfg.samples} samples requested but only {len(cfg.seeds)} seeds given")
        return cfg.seeds[:cfg.samples]
    return tuple(system.base.seed + i for i in range(cfg.samples))


def _map(fn, items, threads):
    items = list(items)
    workers = min(threads or os.cpu_count() or 1, len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _tail(cfg: EstimatorConfig, xs, period=None, residue=False):
    idx = list(range(len(xs)))
    if residue and period and period > 1:
        last = int(xs[-1])
        idx = [i for i in idx if int(xs[i]) % period == last % period]
    return idx[-cfg.tail_points:]


def condense(xs, averaged, cfg: EstimatorConfig, period=None):
    """Point estimate and diagnostics for an averaged finite-size curve.

    ``affine-fit-in-1/n`` fits ``a + b/x`` by least squares on the tail points
    and returns ``a``; on a periodic base only schedule points in the residue
    class of the last one (mod the period) enter the fit.
    """
    xs = np.asarray(xs, dtype=float)
    averaged = np.asarray(averaged, dtype=float)
    tail = _tail(cfg, xs)
    spread = float(np.max(averaged[tail]) - np.min(averaged[tail]))
    diag = {"extrapolation": cfg.extrapolation, "tail": [float(xs[i]) for i in tail]}
    if cfg.extrapolation == "last-value":
        point = float(averaged[-1])
    elif cfg.extrapolation == "cesaro-tail":
        point = float(np.mean(averaged[tail]))
    else:
        fit = _tail(cfg, xs, period, residue=True)
        diag["fit_points"] = [float(xs[i]) for i in fit]
        if len(fit) < 2:
            diag["fallback"] = "last-value"
            point = float(averaged[-1])
        else:
            X = np.column_stack([np.ones(len(fit)), 1.0 / xs[fit]])
            coef, *_ = np.linalg.lstsq(X, averaged[fit], rcond=None)
            point = float(coef[0])
            diag["slope_in_1/x"] = float(coef[1])
    return point, spread, diag


def _trajectories(system, cfg, n_top, r):
    seeds = sample_seeds(system, cfg)
    L = trajectory_length(n_top, r, cfg.m)
    return seeds, [system.trajectory(L, s) for s in seeds]


def _check_potential(system, phi):
    if phi.k != system.k:
        raise InvalidArgument("potential alphabet does not match the system")
    if phi.base_symbols not in (1, system.sft.base_symbols):
        raise InvalidArgument("potential base-symbol count does not match the system")


# ---------------------------------------------------------------------------
# n-indexed estimators
# ---------------------------------------------------------------------------


def _log_partitions(system, traj, Phi: VectorPotential, F, ns, m, engine):
    sft = system.sft
    if engine == "transfer":
        if F is not None and F.form != "identity":
            raise InvalidArgument("the transfer engine handles linear sums only")
        phi = Phi.components[0]
        return [log_transfer_partition(sft, traj, phi, n, max(m, phi.memory)) for n in ns]
    layers = collect_layers(sft, traj, list(Phi.components), ns)
    out = []
    for n in ns:
        layer = layers[n]
        x = layer.sums[:, 0] if F is None else exponent(layer, F, Phi.d)
        out.append(log_sum_exp(x, _depth_factor(layer, sft, traj, m)))
    return out


def _n_estimate(system, Phi, F, cfg, method):
    for c in Phi.components:
        _check_potential(system, c)
    ns = cfg.n_schedule
    seeds, trajs = _trajectories(system, cfg, ns[-1], Phi.memory)
    rows = _map(lambda t: _log_partitions(system, t, Phi, F, ns, cfg.m, cfg.engine), trajs, cfg.threads)
    raw = np.array(rows, dtype=float) / np.asarray(ns, dtype=float)
    averaged = raw.mean(axis=0) if len(raw) > 1 else raw[0].copy()
    point, spread, diag = condense(ns, averaged, cfg, system.base.period)
    diag["engine"] = cfg.engine
    diag["m"] = cfg.m
    return PressureEstimate(method, np.asarray(ns, dtype=float), raw, averaged, point, spread, seeds, diag)


def fiber_pressure(system: RandomSystem, potential: Potential, cfg: EstimatorConfig) -> PressureEstimate:
    """Estimate ``P(f, phi)`` from ``(1/n) log Z_n`` averaged over trajectories."""
    return _n_estimate(system, as_vector(potential), None, cfg, "fiber")


def nonlinear_pressure(system: RandomSystem, Phi, F: Nonlinearity, cfg: EstimatorConfig) -> PressureEstimate:
    """Estimate ``P^F(f, Phi)`` from ``(1/n) log sum exp(n F(S_n Phi / n))``."""
    Phi = as_vector(Phi)
    _check_arity(Phi, F)
    if cfg.engine == "transfer":
        raise InvalidArgument("nonlinear sums need the enumerate engine")
    return _n_estimate(system, Phi, F, cfg, "nonlinear")


def m_stability(system: RandomSystem, potential: Potential, cfg: EstimatorConfig, ms=(1, 2, 3)) -> dict:
    """Point estimates at several depth exponents, with the largest pairwise gap."""
    vals = {}
    for m in ms:
        c = EstimatorConfig(**{**cfg.to_dict(), "m": m})
        vals[m] = fiber_pressure(system, potential, c).point
    return {"estimates": vals, "gap": max(vals.values()) - min(vals.values())}


# ---------------------------------------------------------------------------
# induced estimates
# ---------------------------------------------------------------------------


def induced_pressure_direct(system: RandomSystem, potential, scaling: ScalingPotential,
                            cfg: EstimatorConfig, F: Nonlinearity | None = None) -> PressureEstimate:
    """Estimate the induced pressure from ``(1/T) log Z_T`` over the T-schedule.

    Cells whose partition sum is empty are skipped and counted; the estimate
    is flagged unreliable when more than 20% of the cells are skipped.
    """
    Phi = as_vector(potential)
    if F is not None:
        _check_arity(Phi, F)
    for c in list(Phi.components) + [scaling]:
        _check_potential(system, c)
    Ts = cfg.T_schedule
    r = max(Phi.memory, scaling.memory)
    seeds, trajs = _trajectories(system, cfg, max_class(Ts[-1], scaling) + 1, r)
    rows = _map(lambda t: induced_log_partitions(system.sft, t, Phi, scaling, Ts, cfg.m, F),
                trajs, cfg.threads)
    logs = np.array(rows, dtype=float)
    raw = np.where(np.isfinite(logs), logs / np.asarray(Ts), np.nan)
    skipped = int(np.isnan(raw).sum())
    if skipped == raw.size:
        raise EstimationFailed("every (sample, T) cell has an empty induced time set")
    keep = ~np.all(np.isnan(raw), axis=0)
    xs = np.asarray(Ts)[keep]
    averaged = np.nanmean(raw[:, keep], axis=0)
    point, spread, diag = condense(xs, averaged, cfg)
    diag.update(skipped_cells=skipped, total_cells=int(raw.size),
                unreliable=skipped > 0.2 * raw.size, m=cfg.m)
    method = "induced-direct" if F is None else "nonlinear-induced-direct"
    return PressureEstimate(method, np.asarray(Ts, dtype=float), raw, _fill(raw, keep, averaged),
                            point, spread, seeds, diag)


def _fill(raw, keep, averaged):
    out = np.full(raw.shape[1], np.nan)
    out[keep] = averaged
    return out


# ---------------------------------------------------------------------------
# pressure curve and root solve
# ---------------------------------------------------------------------------


class _Curve:
    """``beta -> (1/n) log sum exp(n F(S_n Phi/n) - beta S_n psi)`` with layers cached per sample."""

    def __init__(self, system, potential, scaling, cfg, F=None):
        Phi = as_vector(potential)
        if F is not None:
            _check_arity(Phi, F)
        for c in list(Phi.components) + [scaling]:
            _check_potential(system, c)
        self.system, self.Phi, self.scaling, self.F, self.cfg = system, Phi, scaling, F, cfg
        self.n = cfg.curve_n
        r = max(Phi.memory, scaling.memory)
        self.seeds, self.trajs = _trajectories(system, cfg, self.n, r)
        self.transfer = cfg.engine == "transfer" and (F is None or F.form == "identity")
        self.layers = None
        if not self.transfer:
            comps = list(Phi.components) + [scaling]
            self.layers = _map(lambda t: (collect_layers(system.sft, t, comps, [self.n])[self.n], t),
                               self.trajs, cfg.threads)
            self.factors = [_depth_factor(L, system.sft, t, cfg.m) for L, t in self.layers]

    def samples(self, beta):
        beta = float(beta)
        if self.transfer:
            phi = self.Phi.components[0] - self.scaling * beta
            m = max(self.cfg.m, phi.memory)
            vals = [log_transfer_partition(self.system.sft, t, phi, self.n, m) for t in self.trajs]
        else:
            d = self.Phi.d
            vals = [log_sum_exp(exponent(L, self.F, d, beta, d), fac)
                    for (L, _), fac in zip(self.layers, self.factors)]
        return np.asarray(vals) / self.n

    def __call__(self, beta):
        v = self.samples(beta)
        return float(v.mean()) if len(v) > 1 else float(v[0])


def pressure_curve(system: RandomSystem, potential, scaling: ScalingPotential, betas: Sequence[float],
                   cfg: EstimatorConfig, F: Nonlinearity | None = None) -> PressureCurve:
    """Values of ``beta -> P^F(f, Phi - beta psi)`` at orbit length ``cfg.curve_n``."""
    betas = np.asarray(betas, dtype=float)
    if len(betas) == 0 or np.any(np.diff(betas) <= 0):
        raise InvalidArgument("beta grid must be nonempty and strictly increasing")
    curve = _Curve(system, potential, scaling, cfg, F)
    raw = np.array([curve.samples(b) for b in betas]).T
    values = raw.mean(axis=0) if len(raw) > 1 else raw[0].copy()
    return PressureCurve(betas, values, curve.n, raw)


def bisect_root(f: Callable[[float], float], beta0: float, tol: float, factor: float,
                slope_bound: float = 1.0, max_expansions: int = 60) -> RootSolveResult:
    """Root of a nonincreasing function by bracket expansion from ``beta0`` then bisection.

    Bisection continues until the bracket is narrower than ``tol / max(1, slope_bound)``,
    which also bounds the residual by ``tol / 2`` when ``f`` is ``slope_bound``-Lipschitz.
    """
    f0 = f(0.0)
    if f0 == 0.0:
        return RootSolveResult(0.0, [(0.0, 0.0)], 0.0, 0)
    expansions = 0
    if f0 > 0:
        lo, hi = 0.0, max(beta0, tol)
        while f(hi) > 0:
            expansions += 1
            if expansions > max_expansions:
                raise BracketFailure(f"no sign change up to beta={hi:.6g}")
            lo, hi = hi, hi * factor
    else:
        lo, hi = min(beta0, -tol), 0.0
        while f(lo) < 0:
            expansions += 1
            if expansions > max_expansions:
                raise BracketFailure(f"no sign change down to beta={lo:.6g}")
            lo, hi = lo * factor, lo
    width = tol / max(1.0, slope_bound)
    brackets = [(lo, hi)]
    it = 0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
        it += 1
        brackets.append((lo, hi))
    beta = 0.5 * (lo + hi)
    return RootSolveResult(beta, brackets, f(beta), it, expansions)


def pseudo_inverse_solve(system: RandomSystem, potential, scaling: ScalingPotential,
                         cfg: EstimatorConfig, F: Nonlinearity | None = None) -> RootSolveResult:
    """Zero of ``beta -> P^F(f, Phi - beta psi)``, the induced pressure."""
    curve = _Curve(system, potential, scaling, cfg, F)
    f0 = curve(0.0)
    res = bisect_root(curve, f0 / scaling.inf, cfg.bisection_tol, cfg.bracket_factor, scaling.sup)
    res.n = curve.n
    return res


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------


def tail_caps(Ts, scaling: ScalingPotential, factor: float):
    """Truncation orders ``N(T) = ceil(factor * T / inf psi)``."""
    return tuple(int(math.ceil(factor * T / scaling.inf)) for T in Ts)


def critical_exponent_scan(system: RandomSystem, potential, scaling: ScalingPotential,
                           cfg: EstimatorConfig, betas: Sequence[float],
                           F: Nonlinearity | None = None) -> ScanResult:
    """Locate the threshold where ``log R_T(beta)`` stops growing in ``T``.

    For each ``beta`` the slope of the sample-averaged ``log R_T`` against ``T``
    is fitted over the T-schedule; slopes above ``cfg.slope_threshold`` count as
    divergent.  The truncation order grows with ``T`` so that a divergent
    series shows up as growth.
    """
    betas = np.asarray(betas, dtype=float)
    if len(betas) < 2 or np.any(np.diff(betas) <= 0):
        raise InvalidArgument("beta grid must have at least two increasing points")
    Ts = cfg.T_schedule
    if len(Ts) < 2:
        raise InvalidArgument("the scan needs at least two T values")
    Phi = as_vector(potential)
    for c in list(Phi.components) + [scaling]:
        _check_potential(system, c)
    caps = tail_caps(Ts, scaling, cfg.tail_factor)
    seeds, trajs = _trajectories(system, cfg, max(caps), max(Phi.memory, scaling.memory))
    tables = _map(lambda t: tail_log_table(system.sft, t, Phi, scaling, betas, Ts, caps, cfg.m, F),
                  trajs, cfg.threads)
    logs = np.mean(tables, axis=0) if len(tables) > 1 else tables[0]
    slopes = np.array([np.polyfit(np.asarray(Ts), row, 1)[0] for row in logs])
    divergent = slopes > cfg.slope_threshold
    if divergent.all() or not divergent.any():
        raise ScanInconclusive(
            "every grid point classified " + ("divergent" if divergent.all() else "bounded"))
    last = int(np.nonzero(divergent)[0][-1])
    if last == len(betas) - 1:
        raise ScanInconclusive("the largest grid point is classified divergent")
    monotone = bool(np.all(divergent[:last + 1]))
    beta_hat = 0.5 * (betas[last] + betas[last + 1])
    return ScanResult(float(beta_hat), betas, slopes, divergent, Ts, caps, logs, monotone)


# ---------------------------------------------------------------------------
# nonlinear induced
# ---------------------------------------------------------------------------


def nonlinear_induced_pressure(system: RandomSystem, Phi, scaling: ScalingPotential, F: Nonlinearity,
                               cfg: EstimatorConfig, method: str = "direct"):
    """Nonlinear induced pressure by the direct T-sum or by the pseudo-inverse root."""
    if method == "direct":
        return induced_pressure_direct(system, Phi, scaling, cfg, F)
    if method == "pseudo-inverse":
        return pseudo_inverse_solve(system, Phi, scaling, cfg, F)
    raise InvalidArgument("method must be 'direct' or 'pseudo-inverse'")

"""Least-squares calibration of model parameters against measured dB values."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .config import CalibrationTarget, SweepConfig, Target
from .errors import NopaCascadeError
from .network import correlation_report, evaluate

PENALTY = 1e6
GRID_LEVELS = (0.2, 0.5, 0.8)


@dataclass(frozen=True)
class CalibrationResult:
    parameters: dict  # path -> value
    residuals: dict  # target name -> model minus target, dB
    converged: bool
    objective: float
    n_evaluations: int
    message: str

    def overrides(self) -> dict:
        return dict(self.parameters)


def target_value(cfg: SweepConfig, target: Target, parameters: Optional[dict] = None) -> float:
    """Model prediction for one target under the given parameter overrides."""
    overrides = {**(parameters or {}), **target.overrides}
    chain = cfg.build_chain(overrides)
    detuning = None if target.detuning is None else {target.element: target.detuning}
    w = cfg.analysis_frequency if target.analysis_frequency is None else target.analysis_frequency
    return correlation_report(evaluate(chain, detuning, w)).observable(target.observable)


def _residuals(cfg, targets, parameters):
    return {t.name: target_value(cfg, t, parameters) - t.value for t in targets.targets}


def calibrate(targets: CalibrationTarget, cfg: SweepConfig, seed: Optional[int] = None) -> CalibrationResult:
    """Fit the free parameters by bounded Nelder-Mead from several starts.

    Starts are the best points of a coarse grid over the bounds (plus any
    configured start values) and one uniformly random point drawn from
    ``seed``. ``converged`` requires both a successful simplex termination and
    every residual within its target tolerance; otherwise the best point found
    is still returned.
    """
    free = targets.free
    paths = [p.path for p in free]
    lower = np.array([p.lower for p in free])
    upper = np.array([p.upper for p in free])
    n_eval = 0

    def params_of(x):
        return dict(zip(paths, (float(v) for v in x)))

    def objective(x):
        nonlocal n_eval
        n_eval += 1
        if np.any(x < lower) or np.any(x > upper):
            return PENALTY
        try:
            r = _residuals(cfg, targets, params_of(x))
        except NopaCascadeError:
            return PENALTY
        return float(sum(v * v for v in r.values()))

    if not free:
        r = _residuals(cfg, targets, {})
        ok = all(abs(r[t.name]) <= t.tolerance for t in targets.targets)
        return CalibrationResult({}, r, ok, float(sum(v * v for v in r.values())), 1, "nothing to fit")

    candidates = [lower + np.array(levels) * (upper - lower)
                  for levels in itertools.product(GRID_LEVELS, repeat=len(free))]
    configured = [p.start if p.start is not None else None for p in free]
    if any(v is not None for v in configured):
        candidates.append(np.array([v if v is not None else 0.5 * (lo + hi)
                                    for v, lo, hi in zip(configured, lower, upper)]))
    candidates.sort(key=objective)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    starts = candidates[: max(targets.starts - 1, 1)] + [rng.uniform(lower, upper)]

    best = None
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(lower, upper)),
            options={"maxiter": targets.max_iterations, "maxfev": 4 * targets.max_iterations,
                     "xatol": 1e-10, "fatol": 1e-14},
        )
        if best is None or res.fun < best.fun:
            best = res
    parameters = params_of(best.x)
    residuals = _residuals(cfg, targets, parameters)
    within = all(abs(residuals[t.name]) <= t.tolerance for t in targets.targets)
    converged = bool(best.success) and within
    if not best.success:
        message = f"simplex did not converge: {best.message}"
    elif not within:
        worst = max(targets.targets, key=lambda t: abs(residuals[t.name]) / t.tolerance)
        message = f"best fit leaves target {worst.name!r} off by {residuals[worst.name]:+.3f} dB (tolerance {worst.tolerance})"
    else:
        message = "converged"
    return CalibrationResult(parameters, residuals, converged, float(best.fun), n_eval, message)

"""Time-domain Monte Carlo cross-check of the frequency-domain engine.

The linear Langevin equations of every NOPA in a chain are integrated with
Euler-Maruyama using symmetrized (classical) white noise, so vacuum inputs are
unit-intensity white noise. Output samples are bin-normalized field
quadratures: for vacuum they are i.i.d. with unit variance, which fixes the
spectral normalization (vacuum -> 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import get_window

from .errors import SimulationConfigError, ValidationError
from .network import Loss, NetworkChain, Nopa, PhaseShift, Vacuum, evaluate
from .nopa import DEAMPLIFICATION, DecayRates, NopaParams, drift_matrix, to_angular, to_lab
from .quad import X_DIFF, X_SUM, QuadCombination, combination_variance, rotation_matrix

MAX_RATE_STEP = 0.02
MIN_RATE_DURATION = 200.0
DEFAULT_RATE_STEP = 0.005
DEFAULT_TRAJECTORIES = 100
DEFAULT_SEGMENTS_PER_TRAJECTORY = 4
CHUNK = 2048


def _angular_per_second(rate_mhz):
    return to_angular(rate_mhz) * 1e6


def _active_nopas(chain: NetworkChain):
    return [e.params for e in chain.elements if isinstance(e, Nopa) and math.isfinite(e.params.detuning)]


def _slowest_decay(p: NopaParams) -> float:
    """Smallest |Re(eigenvalue)| of the drift, rad/s."""
    return float(np.min(-np.linalg.eigvals(drift_matrix(p)).real)) * 1e6


@dataclass(frozen=True)
class SimulationRun:
    """One Monte Carlo experiment on ``chain``.

    Times are in seconds. ``time_step`` must resolve the fastest cavity
    (``time_step * gamma_max <= 0.02`` with angular rates) and ``duration``
    must span ``200 / gamma_min``.
    """

    chain: NetworkChain
    time_step: float
    duration: float
    rng_seed: int = 0
    n_trajectories: int = DEFAULT_TRAJECTORIES
    burn_in: Optional[float] = None

    def __post_init__(self):
        nopas = _active_nopas(self.chain)
        if not nopas:
            raise SimulationConfigError("chain has no NOPA near resonance; nothing to simulate")
        if not isinstance(self.chain.source, Vacuum):
            raise SimulationConfigError("the stochastic oracle only supports a vacuum source")
        if self.n_trajectories < 1:
            raise SimulationConfigError("need at least one trajectory")
        if not self.time_step > 0:
            raise SimulationConfigError("time step must be positive")
        if self.time_step * self.gamma_max > MAX_RATE_STEP * (1 + 1e-9):
            raise SimulationConfigError(
                f"time step {self.time_step:.3g} s does not resolve the fastest rate "
                f"(need <= {MAX_RATE_STEP / self.gamma_max:.3g} s)"
            )
        if self.duration * self.gamma_min < MIN_RATE_DURATION * (1 - 1e-9):
            raise SimulationConfigError(
                f"duration {self.duration:.3g} s is too short (need >= {MIN_RATE_DURATION / self.gamma_min:.3g} s)"
            )
        dt_us = self.time_step * 1e6
        for p in nopas:
            lam = np.linalg.eigvals(drift_matrix(p))
            if np.any(np.abs(1 + lam * dt_us) >= 1):
                raise SimulationConfigError("Euler-Maruyama step is unstable for this drift matrix")

    @property
    def gamma_max(self) -> float:
        return max(_angular_per_second(p.rates.gamma_total) for p in _active_nopas(self.chain))

    @property
    def gamma_min(self) -> float:
        return min(_angular_per_second(p.rates.gamma_total) for p in _active_nopas(self.chain))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.time_step))

    @property
    def n_burn(self) -> int:
        burn = self.burn_in
        if burn is None:
            burn = 10.0 / min(_slowest_decay(p) for p in _active_nopas(self.chain))
        return int(math.ceil(burn / self.time_step))

    @classmethod
    def with_defaults(cls, chain: NetworkChain, rng_seed: int = 0, **kwargs) -> "SimulationRun":
        """Default step ``0.005 / gamma_max`` and duration ``200 / gamma_min``."""
        nopas = _active_nopas(chain)
        if not nopas:
            raise SimulationConfigError("chain has no NOPA near resonance; nothing to simulate")
        g_max = max(_angular_per_second(p.rates.gamma_total) for p in nopas)
        g_min = min(_angular_per_second(p.rates.gamma_total) for p in nopas)
        kwargs.setdefault("time_step", DEFAULT_RATE_STEP / g_max)
        kwargs.setdefault("duration", MIN_RATE_DURATION / g_min)
        return cls(chain=chain, rng_seed=rng_seed, **kwargs)


@dataclass
class OutputSeries:
    """Bin-normalized detector quadratures, shape ``(n_trajectories, n_steps, 4)``."""

    data: np.ndarray
    time_step: float
    rng_seed: int
    metadata: dict = field(default_factory=dict)

    def combination(self, c: QuadCombination) -> np.ndarray:
        """Series of ``c . q / sqrt(snl)`` so that vacuum has unit spectrum."""
        return self.data @ c.vector / math.sqrt(c.snl)

    def dump_csv(self, path, trajectory: int = 0) -> None:
        """Write one trajectory as ``t, X1, Y1, X2, Y2`` with a commented header."""
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(f"# rng_seed={self.rng_seed} time_step={self.time_step!r} trajectory={trajectory}\n")
            for key, value in self.metadata.items():
                fh.write(f"# {key}={value}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "X1", "Y1", "X2", "Y2"])
            for k, row in enumerate(self.data[trajectory]):
                w.writerow([f"{k * self.time_step:.9e}"] + [f"{x:.9e}" for x in row])


class _NopaStage:
    def __init__(self, p: NopaParams, dt_us: float, n_traj: int):
        m = to_lab(drift_matrix(p))
        self.step = np.eye(4) + m * dt_us
        self.b_in = math.sqrt(2 * to_angular(p.rates.gamma_coupler) * dt_us)
        self.b_loss = math.sqrt(2 * to_angular(p.rates.gamma_loss) * dt_us)
        self.v = np.zeros((n_traj, 4))

    def __call__(self, x, z_loss):
        # the detector sample is the bin average, so the intracavity field enters
        # at the step midpoint; this keeps a passive lossless cavity exactly
        # all-pass for vacuum, which a left-point read-out misses by 2 gamma dt
        v_next = self.v @ self.step.T + self.b_in * x + self.b_loss * z_loss
        out = 0.5 * self.b_in * (self.v + v_next) - x
        self.v = v_next
        return out


def _noise_layout(chain: NetworkChain):
    """Column count of fresh vacuum noise consumed per step: source + each port."""
    n = 4
    for e in chain.elements:
        if isinstance(e, (Nopa, Loss)):
            n += 4
    if chain.detection_efficiency < 1:
        n += 4
    if chain.electronic_noise_db is not None:
        n += 4
    return n


def simulate(run: SimulationRun, noise_substeps: int = 1) -> OutputSeries:
    """Integrate the chain and sample the detector-plane quadratures.

    Each trajectory draws from its own child of ``SeedSequence(rng_seed)``, so
    results do not depend on how trajectories are batched. With
    ``noise_substeps = s`` the Brownian increments are drawn on a grid ``s``
    times finer and summed; a run at ``time_step / s`` with ``s = 1`` then sees
    the same Brownian path, which isolates the discretization error.
    """
    chain = run.chain
    dt_us = run.time_step * 1e6
    n_traj = run.n_trajectories
    n_burn, n_keep = run.n_burn, run.n_steps
    total = n_burn + n_keep
    n_noise = _noise_layout(chain)
    gens = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(run.rng_seed).spawn(n_traj)]

    stages = []
    for e in chain.elements:
        if isinstance(e, Nopa):
            if math.isfinite(e.params.detuning):
                stages.append(("nopa", _NopaStage(e.params, dt_us, n_traj)))
            else:
                stages.append(("flip", None))
        elif isinstance(e, Loss):
            a = np.sqrt(np.repeat(e.efficiency, 2))
            stages.append(("loss", (a, np.sqrt(1 - a**2))))
        elif isinstance(e, PhaseShift):
            r = rotation_matrix(1, e.angle[0]) @ rotation_matrix(2, e.angle[1])
            stages.append(("phase", r.T))
    det = math.sqrt(chain.detection_efficiency)
    floor = None if chain.electronic_noise_db is None else math.sqrt(10 ** (chain.electronic_noise_db / 10))

    out = np.empty((n_traj, n_keep, 4))
    s = noise_substeps
    for start in range(0, total, CHUNK):
        length = min(CHUNK, total - start)
        fine = np.stack([g.standard_normal((length * s, n_noise)) for g in gens])
        z = fine.reshape(n_traj, length, s, n_noise).sum(axis=2) / math.sqrt(s)
        for j in range(length):
            zj = z[:, j, :]
            col = 4
            x = zj[:, :4]
            for kind, stage in stages:
                if kind == "nopa":
                    x = stage(x, zj[:, col : col + 4])
                    col += 4
                elif kind == "loss":
                    a, b = stage
                    x = a * x + b * zj[:, col : col + 4]
                    col += 4
                elif kind == "phase":
                    x = x @ stage
                else:
                    x = -x
            if det < 1:
                x = det * x + math.sqrt(1 - det**2) * zj[:, col : col + 4]
                col += 4
            if floor is not None:
                x = x + floor * zj[:, col : col + 4]
            k = start + j - n_burn
            if k >= 0:
                out[:, k, :] = x
    meta = {
        "n_trajectories": n_traj,
        "duration": run.duration,
        "burn_in_steps": n_burn,
        "noise_substeps": s,
        "elements": ";".join(type(e).__name__ + (f"[{e.name}]" if e.name else "") for e in chain.elements),
    }
    return OutputSeries(out, run.time_step, run.rng_seed, meta)


@dataclass(frozen=True)
class SpectrumEstimate:
    value: float
    stderr: float
    n_segments: int


def estimate_spectrum(
    series,
    analysis_frequency: float,
    segment_length: int,
    window: str = "hann",
    combination: QuadCombination = X_SUM,
    time_step: Optional[float] = None,
) -> SpectrumEstimate:
    """Averaged windowed periodogram at one frequency, with segment-scatter error.

    Args:
        series: an :class:`OutputSeries`, or a raw array of already-combined
            samples shaped ``(n_samples,)`` or ``(n_trajectories, n_samples)``;
            raw input needs ``time_step`` and is normalized so that unit-variance
            white samples give 1.
        analysis_frequency: MHz.
        segment_length: samples per non-overlapping segment.
        window: ``"rect"`` or ``"hann"``.
    """
    if isinstance(series, OutputSeries):
        x = series.combination(combination)
        dt = series.time_step
    else:
        if time_step is None:
            raise ValidationError("raw series need an explicit time_step")
        x = np.atleast_2d(np.asarray(series, dtype=float))
        dt = time_step
    if window not in ("rect", "hann"):
        raise ValidationError(f"unknown window {window!r}")
    f_cycles = analysis_frequency * 1e6 * dt
    if not 0 <= f_cycles < 0.5:
        raise ValidationError("analysis frequency is above the Nyquist frequency of the series")
    L = int(segment_length)
    per_traj = x.shape[1] // L if L > 0 else 0
    n_seg = per_traj * x.shape[0]
    if n_seg < 4:
        raise ValidationError(f"series too short: {n_seg} segment(s) of length {L}, need at least 4")
    segs = x[:, : per_traj * L].reshape(n_seg, L)
    w = np.ones(L) if window == "rect" else get_window("hann", L)
    kernel = w * np.exp(-2j * np.pi * f_cycles * np.arange(L))
    power = np.abs(segs @ kernel) ** 2 / np.sum(w**2)
    return SpectrumEstimate(float(power.mean()), float(power.std(ddof=1) / math.sqrt(n_seg)), n_seg)


def default_segment_length(run: SimulationRun) -> int:
    return max(run.n_steps // DEFAULT_SEGMENTS_PER_TRAJECTORY, 1)


@dataclass(frozen=True)
class OracleComparison:
    label: str
    combination: str
    analysis_frequency: float
    monte_carlo: float
    stderr: float
    engine: float

    @property
    def z_score(self) -> float:
        return (self.monte_carlo - self.engine) / self.stderr

    @property
    def agrees(self) -> bool:
        return abs(self.z_score) <= 3.0


def compare_with_engine(
    run: SimulationRun,
    analysis_frequencies: Sequence[float],
    combinations: Sequence[QuadCombination] = (X_SUM,),
    label: str = "",
    series: Optional[OutputSeries] = None,
) -> list:
    """Monte Carlo versus frequency-domain spectra (both normalized to SNL = 1)."""
    if series is None:
        series = simulate(run)
    seg = default_segment_length(run)
    rows = []
    for w in analysis_frequencies:
        s = evaluate(run.chain, analysis_frequency=w)
        for c in combinations:
            est = estimate_spectrum(series, w, seg, "hann", c)
            exact = combination_variance(s, c) / c.snl
            rows.append(OracleComparison(label, c.name, w, est.value, est.stderr, exact))
    return rows


def validation_grid(rates_lossy: DecayRates, loss_efficiency: float = 0.8):
    """Single-NOPA chains spanning pump, detuning, phase and loss.

    Yields ``(label, chain, combination, analysis_frequencies)``. The compared
    combination is the amplitude combination the pump phase squeezes.
    """
    gamma = rates_lossy.gamma_total
    lossless = DecayRates.from_linewidth(gamma, 1.0, rates_lossy.fsr)
    freqs = (0.5 * gamma, gamma, 2 * gamma)
    for sigma in (0.0, 0.5, 0.7746):
        for delta in (0.0, gamma, -gamma):
            for theta in (0.0, DEAMPLIFICATION):
                for lossy in (False, True):
                    rates = rates_lossy if lossy else lossless
                    p = NopaParams(rates, sigma, theta, delta)
                    elements = [Nopa(p, "nopa")]
                    if lossy:
                        elements.append(Loss(loss_efficiency, "loss"))
                    chain = NetworkChain(elements=elements)
                    label = f"sigma={sigma} delta={delta:+.3f} theta={theta:.3f} loss={'yes' if lossy else 'no'}"
                    c = X_SUM if theta == DEAMPLIFICATION else X_DIFF
                    yield label, chain, c, freqs

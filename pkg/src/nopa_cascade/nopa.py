"""Single detuned, sub-threshold type-II NOPA in the linearized input-output picture.

Public quantities are in ordinary frequency (MHz). The drift and transfer
matrices work in angular units (rad/us); :func:`to_angular` is the only place
the conversion happens.

The dynamics are block-diagonal in the superposition modes
``d_pm = (a1 +- a2)/sqrt(2)``, ordered ``(X+, Y+, X-, Y-)``. Transfer matrices
are returned in the lab order ``(X1, Y1, X2, Y2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import AboveThresholdError, InconsistentGeometryError, ValidationError
from .quad import SpectralCovariance, apply_transfer

KTP_INDEX = 1.83
MAX_CONDITION = 1e12

# lab (X1, Y1, X2, Y2) <-> (X+, Y+, X-, Y-); symmetric and its own inverse
PM_BASIS = np.array(
    [
        [1, 0, 1, 0],
        [0, 1, 0, 1],
        [1, 0, -1, 0],
        [0, 1, 0, -1],
    ]
) / math.sqrt(2)


def to_angular(frequency_mhz):
    """MHz -> rad/us."""
    return 2 * np.pi * frequency_mhz


class Topology(str, enum.Enum):
    LINEAR = "linear"
    RING = "ring"


@dataclass(frozen=True)
class CavityGeometry:
    """Physical description of one NOPA cavity.

    ``geometric_length`` is the one-way length for a linear (standing-wave)
    cavity and the round-trip perimeter for a ring. Transmission is the power
    transmission of the output coupler at the subharmonic.
    """

    topology: Topology
    geometric_length: float
    crystal_length: float
    coupler_transmission: float
    finesse: float
    crystal_index: float = KTP_INDEX

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if not 0 < self.coupler_transmission < 1:
            raise ValidationError(f"coupler transmission must lie in (0, 1), got {self.coupler_transmission}")
        if not self.finesse > 1:
            raise ValidationError(f"finesse must exceed 1, got {self.finesse}")
        if not (self.geometric_length > 0 and self.crystal_length > 0):
            raise ValidationError("cavity and crystal lengths must be positive")
        if self.crystal_length >= self.geometric_length:
            raise ValidationError("crystal cannot be longer than the cavity")
        if not self.crystal_index >= 1:
            raise ValidationError(f"crystal index must be >= 1, got {self.crystal_index}")

    @property
    def optical_round_trip_length(self) -> float:
        k = 2 if self.topology is Topology.LINEAR else 1
        air = self.geometric_length - self.crystal_length
        return k * air + k * self.crystal_length * self.crystal_index


@dataclass(frozen=True)
class DecayRates:
    """Cavity timescales; rates are amplitude half-widths in MHz."""

    fsr: float
    round_trip_time: float
    gamma_total: float
    gamma_coupler: float
    gamma_loss: float

    def __post_init__(self):
        if not self.gamma_total > 0:
            raise ValidationError("total decay rate must be positive")
        if self.gamma_coupler <= 0 or self.gamma_loss < 0:
            raise ValidationError("coupler rate must be positive and loss rate non-negative")
        if abs(self.gamma_coupler + self.gamma_loss - self.gamma_total) > 1e-12 * self.gamma_total:
            raise ValidationError("gamma_coupler + gamma_loss must equal gamma_total")

    @property
    def escape_efficiency(self) -> float:
        return self.gamma_coupler / self.gamma_total

    @property
    def linewidth_fwhm(self) -> float:
        return 2 * self.gamma_total

    @classmethod
    def from_linewidth(cls, gamma_total: float, escape_efficiency: float = 1.0, fsr: float = math.inf) -> "DecayRates":
        """Rates from a half-width and escape efficiency, bypassing geometry."""
        if not 0 < escape_efficiency <= 1:
            raise ValidationError(f"escape efficiency must lie in (0, 1], got {escape_efficiency}")
        gc = gamma_total * escape_efficiency
        return cls(
            fsr=fsr,
            round_trip_time=1e-6 / fsr,
            gamma_total=gamma_total,
            gamma_coupler=gc,
            gamma_loss=gamma_total - gc,
        )


def derive_rates(g: CavityGeometry) -> DecayRates:
    """Free spectral range, decay rates and escape efficiency of a cavity.

    The total round-trip loss is ``2 pi / finesse``, of which the coupler
    transmission is the useful part, so ``escape = T * finesse / (2 pi)``.

    Raises:
        InconsistentGeometryError: if the finesse implies less total loss than
            the coupler transmission alone.
    """
    fsr = SPEED_OF_LIGHT / g.optical_round_trip_length / 1e6
    escape = g.coupler_transmission * g.finesse / (2 * np.pi)
    if escape > 1:
        raise InconsistentGeometryError(
            f"finesse {g.finesse} implies round-trip loss {2 * np.pi / g.finesse:.4g} "
            f"below the coupler transmission {g.coupler_transmission}"
        )
    gamma_total = fsr / (2 * g.finesse)
    gamma_coupler = g.coupler_transmission * fsr / (4 * np.pi)
    return DecayRates(
        fsr=fsr,
        round_trip_time=1e-6 / fsr,
        gamma_total=gamma_total,
        gamma_coupler=gamma_coupler,
        gamma_loss=gamma_total - gamma_coupler,
    )


def pump_amplitude(pump_power: float, threshold_power: float) -> float:
    """Normalized pump amplitude ``sqrt(P / P_threshold)``."""
    if not threshold_power > 0:
        raise ValidationError(f"threshold power must be positive, got {threshold_power}")
    if pump_power < 0:
        raise ValidationError(f"pump power must be non-negative, got {pump_power}")
    if pump_power >= threshold_power:
        raise AboveThresholdError(
            f"pump power {pump_power} mW is not below the oscillation threshold {threshold_power} mW"
        )
    return math.sqrt(pump_power / threshold_power)


DEAMPLIFICATION = math.pi
AMPLIFICATION = 0.0


@dataclass(frozen=True)
class NopaParams:
    """Operating point of a NOPA.

    Args:
        rates: cavity decay rates.
        sigma: pump amplitude normalized to threshold, in [0, 1).
        pump_phase: radians; 0 amplifies, pi de-amplifies the injected field.
        detuning: common signal/idler detuning from resonance in MHz.
            ``+-inf`` is accepted and means the field never enters the cavity.
    """

    rates: DecayRates
    sigma: float = 0.0
    pump_phase: float = DEAMPLIFICATION
    detuning: float = 0.0

    def __post_init__(self):
        if not 0 <= self.sigma < 1:
            raise AboveThresholdError(f"below threshold required: sigma must lie in [0, 1), got {self.sigma}")
        if math.isnan(self.detuning):
            raise ValidationError("detuning is NaN")

    def with_detuning(self, detuning: float) -> "NopaParams":
        return replace(self, detuning=detuning)


def _drift_block(gamma, eps, theta, delta, sign):
    return np.array(
        [
            [-gamma + sign * eps * math.cos(theta), delta + sign * eps * math.sin(theta)],
            [-delta + sign * eps * math.sin(theta), -gamma - sign * eps * math.cos(theta)],
        ]
    )


def drift_matrix(p: NopaParams) -> np.ndarray:
    """Drift matrix in the ``(X+, Y+, X-, Y-)`` basis, rad/us."""
    if math.isinf(p.detuning):
        raise ValidationError("drift matrix is undefined at infinite detuning")
    gamma = to_angular(p.rates.gamma_total)
    delta = to_angular(p.detuning)
    eps = p.sigma * gamma
    m = np.zeros((4, 4))
    m[:2, :2] = _drift_block(gamma, eps, p.pump_phase, delta, +1)
    m[2:, 2:] = _drift_block(gamma, eps, p.pump_phase, delta, -1)
    return m


def to_lab(matrix_pm: np.ndarray) -> np.ndarray:
    return PM_BASIS @ matrix_pm @ PM_BASIS


def transfer_matrices(p: NopaParams, analysis_frequency: float) -> tuple[np.ndarray, np.ndarray]:
    """Input and intracavity-loss transfer matrices at sideband ``analysis_frequency``.

    With ``A = (-i W - M)^-1``: ``t_in = 2 g_c A - I`` and
    ``t_loss = 2 sqrt(g_c g_l) A``.
    """
    if math.isinf(p.detuning):
        # far off resonance the coupler reflects everything with a pi phase flip
        return -np.eye(4, dtype=complex), np.zeros((4, 4), dtype=complex)
    m = drift_matrix(p)
    w = to_angular(analysis_frequency)
    kernel = -1j * w * np.eye(4) - m
    if np.linalg.cond(kernel) > MAX_CONDITION:
        raise ValidationError("cavity response is singular at this operating point")
    a = np.linalg.inv(kernel)
    gc = to_angular(p.rates.gamma_coupler)
    gl = to_angular(p.rates.gamma_loss)
    t_in = 2 * gc * a - np.eye(4)
    t_loss = 2 * math.sqrt(gc * gl) * a
    return to_lab(t_in), to_lab(t_loss)


def output_spectrum(p: NopaParams, s_in: SpectralCovariance) -> SpectralCovariance:
    t_in, t_loss = transfer_matrices(p, s_in.analysis_frequency)
    return apply_transfer(t_in, s_in, [t_loss])


def resonant_closed_form(rates: DecayRates, sigma: float, analysis_frequency: float) -> tuple[float, float]:
    """Textbook on-resonance squeezed and anti-squeezed spectra (vacuum = 1)."""
    eta = rates.escape_efficiency
    w = analysis_frequency / rates.gamma_total
    v_sq = 1 - eta * 4 * sigma / ((1 + sigma) ** 2 + w**2)
    v_anti = 1 + eta * 4 * sigma / ((1 - sigma) ** 2 + w**2)
    return v_sq, v_anti

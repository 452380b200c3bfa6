"""Optical chains: a source followed by NOPAs, losses and phase shifts, then detection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .errors import ValidationError
from .nopa import NopaParams, output_spectrum
from .quad import (
    X_DIFF,
    X_SUM,
    Y_DIFF,
    Y_SUM,
    SpectralCovariance,
    apply_transfer,
    combination_variance,
    rotation_matrix,
    to_db_rel_snl,
    vacuum_spectrum,
)


def _per_mode(value, what):
    if np.ndim(value) == 0:
        pair = (float(value), float(value))
    else:
        pair = tuple(float(v) for v in value)
        if len(pair) != 2:
            raise ValidationError(f"{what} needs one value or one per mode")
    return pair


@dataclass(frozen=True)
class Nopa:
    params: NopaParams
    name: str = ""


@dataclass(frozen=True)
class Loss:
    """Beamsplitter loss; ``efficiency`` is a scalar or a (signal, idler) pair."""

    efficiency: Union[float, tuple] = 1.0
    name: str = ""

    def __post_init__(self):
        pair = _per_mode(self.efficiency, "efficiency")
        if not all(0 <= e <= 1 for e in pair):
            raise ValidationError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        object.__setattr__(self, "efficiency", pair)


@dataclass(frozen=True)
class PhaseShift:
    """Local quadrature rotation of each mode, radians."""

    angle: Union[float, tuple] = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "angle", _per_mode(self.angle, "angle"))


Element = Union[Nopa, Loss, PhaseShift]


class Vacuum:
    """Vacuum source."""

    def __call__(self, analysis_frequency: float) -> SpectralCovariance:
        return vacuum_spectrum(analysis_frequency)

    def __repr__(self):
        return "Vacuum()"

    def __eq__(self, other):
        return isinstance(other, Vacuum)

    def __hash__(self):
        return hash(Vacuum)


@dataclass(frozen=True)
class ExternalSpectrum:
    """Source given by a callable ``analysis_frequency -> SpectralCovariance``."""

    provider: Callable[[float], SpectralCovariance]

    def __call__(self, analysis_frequency: float) -> SpectralCovariance:
        s = self.provider(analysis_frequency)
        return SpectralCovariance(s.matrix, analysis_frequency)


@dataclass(frozen=True)
class NetworkChain:
    source: Union[Vacuum, ExternalSpectrum] = field(default_factory=Vacuum)
    elements: tuple = ()
    detection_efficiency: float = 1.0
    # additive detector noise relative to the SNL of one quadrature, dB; None = off
    electronic_noise_db: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not 0 < self.detection_efficiency <= 1:
            raise ValidationError(f"detection efficiency must lie in (0, 1], got {self.detection_efficiency}")
        for e in self.elements:
            if not isinstance(e, (Nopa, Loss, PhaseShift)):
                raise ValidationError(f"unknown element {e!r}")
        names = [e.name for e in self.elements if e.name]
        if len(names) != len(set(names)):
            raise ValidationError("element names must be unique")

    def index_of(self, key: Union[int, str]) -> int:
        if isinstance(key, int):
            if not 0 <= key < len(self.elements):
                raise ValidationError(f"no element at index {key}")
            return key
        for i, e in enumerate(self.elements):
            if e.name == key:
                return i
        raise ValidationError(f"no element named {key!r}")

    @property
    def nopas(self):
        return [e for e in self.elements if isinstance(e, Nopa)]


def loss_channel(s: SpectralCovariance, efficiency) -> SpectralCovariance:
    """``eta S + (1 - eta) I``, per mode if a (signal, idler) pair is given."""
    e1, e2 = Loss(efficiency).efficiency
    root = np.sqrt([e1, e1, e2, e2])
    t = np.diag(root)
    l = np.diag(np.sqrt(1 - root**2))
    return apply_transfer(t, s, [l])


def _apply(element: Element, s: SpectralCovariance, detuning=None) -> SpectralCovariance:
    if isinstance(element, Nopa):
        p = element.params if detuning is None else element.params.with_detuning(detuning)
        return output_spectrum(p, s)
    if isinstance(element, Loss):
        return loss_channel(s, element.efficiency)
    a1, a2 = element.angle
    return apply_transfer(rotation_matrix(1, a1) @ rotation_matrix(2, a2), s)


def evaluate(
    chain: NetworkChain,
    detuning_of: Optional[Mapping[Union[int, str], float]] = None,
    analysis_frequency: float = 3.0,
) -> SpectralCovariance:
    """Detector-plane spectrum of ``chain`` at ``analysis_frequency`` (MHz).

    ``detuning_of`` overrides the detuning of NOPA elements, keyed by element
    name or index.
    """
    overrides = {}
    for key, value in (detuning_of or {}).items():
        i = chain.index_of(key)
        if not isinstance(chain.elements[i], Nopa):
            raise ValidationError(f"element {key!r} is not a NOPA and has no detuning")
        overrides[i] = value
    s = chain.source(analysis_frequency)
    for i, element in enumerate(chain.elements):
        s = _apply(element, s, overrides.get(i))
    if chain.detection_efficiency < 1:
        s = loss_channel(s, chain.detection_efficiency)
    if chain.electronic_noise_db is not None:
        floor = 10 ** (chain.electronic_noise_db / 10)
        s = SpectralCovariance(s.matrix + floor * np.eye(4), s.analysis_frequency)
    return s


@dataclass(frozen=True)
class CorrelationReport:
    v_xsum_db: float
    v_ydiff_db: float
    v_xdiff_db: float
    v_ysum_db: float
    duan_minus: float
    duan_plus: float

    def observable(self, name: str) -> float:
        if name not in OBSERVABLES:
            raise ValidationError(f"unknown observable {name!r}; choose from {', '.join(OBSERVABLES)}")
        return getattr(self, name)


OBSERVABLES = ("v_xsum_db", "v_ydiff_db", "v_xdiff_db", "v_ysum_db", "duan_plus", "duan_minus")


def correlation_report(s: SpectralCovariance) -> CorrelationReport:
    """All four measured combinations in dB rel. SNL plus both Duan sums.

    ``duan_plus`` pairs ``X1+X2`` with ``Y1-Y2``; ``duan_minus`` pairs
    ``X1-X2`` with ``Y1+Y2``.
    """
    v = {c.name: combination_variance(s, c) for c in (X_SUM, Y_DIFF, X_DIFF, Y_SUM)}
    return CorrelationReport(
        v_xsum_db=to_db_rel_snl(v["x_sum"], X_SUM.snl),
        v_ydiff_db=to_db_rel_snl(v["y_diff"], Y_DIFF.snl),
        v_xdiff_db=to_db_rel_snl(v["x_diff"], X_DIFF.snl),
        v_ysum_db=to_db_rel_snl(v["y_sum"], Y_SUM.snl),
        duan_minus=v["x_diff"] + v["y_sum"],
        duan_plus=v["x_sum"] + v["y_diff"],
    )

"""Sweep configuration files.

Line-oriented ``key = value`` pairs under ``[section]`` headers; ``#`` and
``;`` start comments. Sections:

``[source]``
    ``kind`` = ``vacuum`` (default) or ``epr``; ``epr`` takes ``squeezed_db`` and
    ``antisqueezed_db`` for a frequency-flat two-mode squeezed input whose
    amplitude-sum/phase-difference pair is squeezed.
``[element.<name>]`` (order of appearance = beam order)
    ``kind`` = ``nopa`` | ``loss`` | ``phase``.
    nopa: cavity given either by geometry (``topology``, ``geometric_length``,
    ``crystal_length``, ``coupler_transmission``, ``finesse``, optional
    ``crystal_index``) or directly by ``gamma_total`` (MHz half-width) and
    ``escape_efficiency``; pump by ``sigma`` or ``pump_power`` +
    ``threshold_power`` (mW); ``pump_phase`` (radians, ``pi`` forms accepted;
    default ``pi``); ``detuning`` (MHz or ``far``; default 0).
    loss: ``efficiency`` or ``efficiency_signal`` + ``efficiency_idler``.
    phase: ``angle_signal``, ``angle_idler`` (radians).
``[detection]``
    ``efficiency`` (default 1), ``electronic_noise_db`` (default off).
``[sweep]``
    ``kind`` = ``detuning`` | ``frequency``; ``element`` (detuning sweeps);
    ``start``, ``stop`` (MHz), ``points``; ``analysis_frequency`` (MHz, default 3.0).
``[output]``
    ``path``, ``oracle`` (yes/no), ``seed``.
``[metadata]``
    free-form; recorded, never interpreted.
``[calibration]``
    ``max_iterations``, ``starts``.
``[free.<name>]``
    ``path`` (e.g. ``element.nopa2.sigma``), ``lower``, ``upper``, optional ``start``.
``[target.<name>]``
    ``observable`` (a report column), ``value`` (dB), ``tolerance`` (dB),
    optional ``detuning``, ``element``, ``analysis_frequency`` and any number of
    ``override.<path> = value`` entries.

Unknown sections and keys are rejected.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError, NopaCascadeError
from .network import OBSERVABLES, ExternalSpectrum, Loss, NetworkChain, Nopa, PhaseShift, Vacuum
from .nopa import PM_BASIS, CavityGeometry, DecayRates, NopaParams, derive_rates, pump_amplitude
from .quad import SpectralCovariance

DEFAULT_ANALYSIS_FREQUENCY = 3.0
DEFAULT_SWEEP = (-15.0, 15.0, 601)

_GEOMETRY_KEYS = {"topology", "geometric_length", "crystal_length", "crystal_index", "coupler_transmission", "finesse"}
_DIRECT_RATE_KEYS = {"gamma_total", "escape_efficiency"}
_PUMP_KEYS = {"sigma", "pump_power", "threshold_power", "pump_phase"}
ELEMENT_KEYS = {
    "nopa": {"kind", "detuning"} | _GEOMETRY_KEYS | _DIRECT_RATE_KEYS | _PUMP_KEYS,
    "loss": {"kind", "efficiency", "efficiency_signal", "efficiency_idler"},
    "phase": {"kind", "angle_signal", "angle_idler"},
}
SOURCE_KEYS = {"kind", "squeezed_db", "antisqueezed_db"}
DETECTION_KEYS = {"efficiency", "electronic_noise_db"}
SWEEP_KEYS = {"kind", "element", "start", "stop", "points", "analysis_frequency"}
OUTPUT_KEYS = {"path", "oracle", "seed"}
CALIBRATION_KEYS = {"max_iterations", "starts"}
FREE_KEYS = {"path", "lower", "upper", "start"}
TARGET_KEYS = {"observable", "value", "tolerance", "detuning", "element", "analysis_frequency"}

_PI_FORM = re.compile(r"^\s*([+-]?\d*\.?\d*(?:e[+-]?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$")


def parse_float(raw, path: str) -> float:
    if isinstance(raw, (int, float)):
        return float(raw)
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key_path=path) from None
    if math.isnan(value):
        raise ConfigError("NaN is not allowed", key_path=path)
    return value


def parse_angle(raw, path: str) -> float:
    """Radians; accepts plain numbers and forms like ``pi``, ``-pi/2``, ``0.5*pi``."""
    if isinstance(raw, (int, float)):
        return float(raw)
    m = _PI_FORM.match(raw.lower())
    if m:
        coef, denom = m.groups()
        k = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
        return k * math.pi / (float(denom) if denom else 1.0)
    return parse_float(raw, path)


def parse_detuning(raw, path: str) -> float:
    if isinstance(raw, str) and raw.strip().lower() in ("far", "inf", "+inf", "infinity"):
        return math.inf
    value = parse_float(raw, path)
    if not math.isfinite(value) and not math.isinf(value):
        raise ConfigError("detuning must be a number or 'far'", key_path=path)
    return value


def parse_bool(raw: str, path: str) -> bool:
    v = raw.strip().lower()
    if v in ("yes", "true", "on", "1"):
        return True
    if v in ("no", "false", "off", "0"):
        return False
    raise ConfigError(f"expected yes/no, got {raw!r}", key_path=path)


def parse_int(raw: str, path: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", key_path=path) from None


def _check_keys(section: str, keys, allowed) -> None:
    for k in keys:
        if k not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", key_path=f"{section}.{k}")


def _finite(value: float, path: str) -> float:
    if not math.isfinite(value):
        raise ConfigError("value must be finite", key_path=path)
    return value


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    start: float
    stop: float
    points: int
    element: Optional[str] = None

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class FreeParameter:
    name: str
    path: str
    lower: float
    upper: float
    start: Optional[float] = None


@dataclass(frozen=True)
class Target:
    name: str
    observable: str
    value: float
    tolerance: float = 0.1
    detuning: Optional[float] = None
    element: Optional[str] = None
    analysis_frequency: Optional[float] = None
    overrides: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CalibrationTarget:
    """Measured values to reproduce and the parameters allowed to move."""

    targets: tuple
    free: tuple
    max_iterations: int = 4000
    starts: int = 4

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "free", tuple(self.free))
        if not self.targets:
            raise ConfigError("calibration needs at least one target", key_path="target")
        if len(self.free) > len(self.targets):
            raise ConfigError(
                f"{len(self.free)} free parameters but only {len(self.targets)} targets", key_path="free"
            )
        for p in self.free:
            if not p.lower < p.upper:
                raise ConfigError("lower bound must be below upper bound", key_path=f"free.{p.name}")


@dataclass(frozen=True)
class SweepConfig:
    """A validated configuration; the chain is rebuilt on demand with overrides."""

    source: Mapping[str, str]
    elements: tuple  # of (name, {key: raw})
    detection: Mapping[str, str]
    sweep: SweepSpec
    analysis_frequency: float = DEFAULT_ANALYSIS_FREQUENCY
    output_path: Optional[str] = None
    oracle: bool = False
    seed: int = 0
    calibration: Optional[CalibrationTarget] = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    @property
    def element_names(self):
        return [name for name, _ in self.elements]

    def raw_value(self, path: str):
        section, key = _split_path(path)
        return self._section(section).get(key)

    def _section(self, section):
        if section == "source":
            return self.source
        if section == "detection":
            return self.detection
        for name, raw in self.elements:
            if section == f"element.{name}":
                return raw
        raise ConfigError("no such section", key_path=section)

    def with_overrides(self, overrides: Mapping[str, object]) -> "SweepConfig":
        """Copy with ``{"element.<name>.<key>": value}`` entries written into the raw sections."""
        by_section = {}
        for path, value in overrides.items():
            section, key = _split_path(path)
            self._section(section)
            by_section.setdefault(section, {})[key] = value if isinstance(value, str) else repr(value)
        cfg = replace(
            self,
            source={**self.source, **by_section.get("source", {})},
            detection={**self.detection, **by_section.get("detection", {})},
            elements=tuple((n, {**raw, **by_section.get(f"element.{n}", {})}) for n, raw in self.elements),
        )
        cfg.build_chain()
        return cfg

    def build_chain(self, overrides: Optional[Mapping[str, object]] = None) -> NetworkChain:
        """Construct the chain, applying ``{"element.<name>.<key>": value}`` overrides."""
        by_section = {}
        for path, value in (overrides or {}).items():
            section, key = _split_path(path)
            self._section(section)
            by_section.setdefault(section, {})[key] = value
        source = _build_source({**self.source, **by_section.get("source", {})})
        elements = []
        for name, raw in self.elements:
            merged = {**raw, **by_section.get(f"element.{name}", {})}
            elements.append(_build_element(name, merged))
        det = {**self.detection, **by_section.get("detection", {})}
        _check_keys("detection", det, DETECTION_KEYS)
        eff = parse_float(det.get("efficiency", 1.0), "detection.efficiency")
        noise = det.get("electronic_noise_db")
        noise_db = None
        if noise is not None and not (isinstance(noise, str) and noise.strip().lower() in ("off", "none", "")):
            noise_db = _finite(parse_float(noise, "detection.electronic_noise_db"), "detection.electronic_noise_db")
        try:
            return NetworkChain(source, tuple(elements), eff, noise_db)
        except NopaCascadeError as exc:
            raise ConfigError(str(exc), key_path="detection.efficiency") from exc


def _split_path(path: str):
    parts = path.split(".")
    if parts[0] in ("source", "detection") and len(parts) == 2:
        return parts[0], parts[1]
    if parts[0] == "element" and len(parts) == 3:
        return f"element.{parts[1]}", parts[2]
    raise ConfigError("parameter paths look like element.<name>.<key>, source.<key> or detection.<key>", key_path=path)


def _epr_provider(squeezed_db: float, antisqueezed_db: float):
    sq, anti = 10 ** (squeezed_db / 10), 10 ** (antisqueezed_db / 10)
    m = PM_BASIS @ np.diag([sq, anti, anti, sq]) @ PM_BASIS

    def provider(analysis_frequency):
        return SpectralCovariance.from_unchecked(m, analysis_frequency)

    return provider


def _build_source(raw):
    _check_keys("source", raw, SOURCE_KEYS)
    kind = str(raw.get("kind", "vacuum")).strip().lower()
    if kind == "vacuum":
        extra = set(raw) - {"kind"}
        if extra:
            raise ConfigError("vacuum source takes no parameters", key_path=f"source.{sorted(extra)[0]}")
        return Vacuum()
    if kind == "epr":
        for k in ("squeezed_db", "antisqueezed_db"):
            if k not in raw:
                raise ConfigError("required for an epr source", key_path=f"source.{k}")
        sq = _finite(parse_float(raw["squeezed_db"], "source.squeezed_db"), "source.squeezed_db")
        anti = _finite(parse_float(raw["antisqueezed_db"], "source.antisqueezed_db"), "source.antisqueezed_db")
        if sq + anti < -1e-9:
            raise ConfigError("squeezing beyond the uncertainty bound (squeezed_db + antisqueezed_db < 0)",
                              key_path="source.antisqueezed_db")
        return ExternalSpectrum(_epr_provider(sq, anti))
    raise ConfigError(f"unknown source kind {kind!r} (vacuum, epr)", key_path="source.kind")


def _build_rates(name, raw) -> DecayRates:
    prefix = f"element.{name}"
    geo = _GEOMETRY_KEYS & set(raw)
    direct = _DIRECT_RATE_KEYS & set(raw)
    if geo and direct:
        raise ConfigError("give either cavity geometry or gamma_total/escape_efficiency, not both",
                          key_path=f"{prefix}.{sorted(direct)[0]}")
    try:
        if direct:
            if "gamma_total" not in raw:
                raise ConfigError("required with escape_efficiency", key_path=f"{prefix}.gamma_total")
            return DecayRates.from_linewidth(
                parse_float(raw["gamma_total"], f"{prefix}.gamma_total"),
                parse_float(raw.get("escape_efficiency", 1.0), f"{prefix}.escape_efficiency"),
            )
        missing = sorted(_GEOMETRY_KEYS - {"crystal_index"} - geo)
        if missing:
            raise ConfigError("required cavity geometry key is missing", key_path=f"{prefix}.{missing[0]}")
        topology = str(raw["topology"]).strip().lower()
        if topology not in ("linear", "ring"):
            raise ConfigError(f"topology must be linear or ring, got {topology!r}", key_path=f"{prefix}.topology")
        g = CavityGeometry(
            topology=topology,
            geometric_length=parse_float(raw["geometric_length"], f"{prefix}.geometric_length"),
            crystal_length=parse_float(raw["crystal_length"], f"{prefix}.crystal_length"),
            coupler_transmission=parse_float(raw["coupler_transmission"], f"{prefix}.coupler_transmission"),
            finesse=parse_float(raw["finesse"], f"{prefix}.finesse"),
            crystal_index=parse_float(raw.get("crystal_index", 1.83), f"{prefix}.crystal_index"),
        )
        return derive_rates(g)
    except ConfigError:
        raise
    except NopaCascadeError as exc:
        key = "finesse" if geo else "gamma_total"
        raise ConfigError(str(exc), key_path=f"{prefix}.{key}") from exc


def _build_nopa(name, raw) -> Nopa:
    prefix = f"element.{name}"
    rates = _build_rates(name, raw)
    try:
        if "sigma" in raw:
            if "pump_power" in raw or "threshold_power" in raw:
                raise ConfigError("give sigma or pump_power/threshold_power, not both", key_path=f"{prefix}.sigma")
            sigma = parse_float(raw["sigma"], f"{prefix}.sigma")
            path = f"{prefix}.sigma"
        elif "pump_power" in raw:
            if "threshold_power" not in raw:
                raise ConfigError("required with pump_power", key_path=f"{prefix}.threshold_power")
            path = f"{prefix}.pump_power"
            sigma = pump_amplitude(
                parse_float(raw["pump_power"], path), parse_float(raw["threshold_power"], f"{prefix}.threshold_power")
            )
        else:
            sigma, path = 0.0, f"{prefix}.sigma"
        params = NopaParams(
            rates=rates,
            sigma=sigma,
            pump_phase=parse_angle(raw.get("pump_phase", "pi"), f"{prefix}.pump_phase"),
            detuning=parse_detuning(raw.get("detuning", 0.0), f"{prefix}.detuning"),
        )
    except ConfigError:
        raise
    except NopaCascadeError as exc:
        raise ConfigError(f"{exc}", key_path=path) from exc
    return Nopa(params, name)


def _build_element(name, raw):
    prefix = f"element.{name}"
    kind = str(raw.get("kind", "")).strip().lower()
    if kind not in ELEMENT_KEYS:
        raise ConfigError(f"kind must be one of {', '.join(ELEMENT_KEYS)}", key_path=f"{prefix}.kind")
    _check_keys(prefix, raw, ELEMENT_KEYS[kind])
    if kind == "nopa":
        return _build_nopa(name, raw)
    try:
        if kind == "loss":
            if "efficiency" in raw:
                if "efficiency_signal" in raw or "efficiency_idler" in raw:
                    raise ConfigError("give efficiency or the per-mode pair, not both", key_path=f"{prefix}.efficiency")
                eff = parse_float(raw["efficiency"], f"{prefix}.efficiency")
            else:
                eff = (
                    parse_float(raw.get("efficiency_signal", 1.0), f"{prefix}.efficiency_signal"),
                    parse_float(raw.get("efficiency_idler", 1.0), f"{prefix}.efficiency_idler"),
                )
            return Loss(eff, name)
        return PhaseShift(
            (
                parse_angle(raw.get("angle_signal", 0.0), f"{prefix}.angle_signal"),
                parse_angle(raw.get("angle_idler", 0.0), f"{prefix}.angle_idler"),
            ),
            name,
        )
    except ConfigError:
        raise
    except NopaCascadeError as exc:
        raise ConfigError(str(exc), key_path=f"{prefix}.efficiency") from exc


def _read(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=("#", ";"),
        comment_prefixes=("#", ";"),
        strict=True,
        default_section="\0defaults",
    )
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", line=exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse {line.strip()!r}", line=lineno) from None
    return cp


def parse_config(text: str, source: str = "<config>") -> SweepConfig:
    """Parse and fully validate configuration text.

    Raises:
        ConfigError: with a line number for syntax errors and a key path for
            semantic ones.
    """
    cp = _read(text, source)
    source_raw, detection, sweep_raw, output_raw, calib_raw, metadata = {}, {}, None, {}, {}, {}
    elements, free, targets = [], [], []
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "source":
            source_raw = items
        elif section == "detection":
            detection = items
        elif section == "sweep":
            sweep_raw = items
        elif section == "output":
            _check_keys("output", items, OUTPUT_KEYS)
            output_raw = items
        elif section == "metadata":
            metadata = items
        elif section == "calibration":
            _check_keys("calibration", items, CALIBRATION_KEYS)
            calib_raw = items
        elif section.startswith("element.") and len(section) > len("element."):
            name = section[len("element."):]
            if "." in name:
                raise ConfigError("element names may not contain '.'", key_path=section)
            elements.append((name, items))
        elif section.startswith("free.") and len(section) > len("free."):
            free.append(_parse_free(section[len("free."):], items))
        elif section.startswith("target.") and len(section) > len("target."):
            targets.append((section[len("target."):], items))
        else:
            raise ConfigError("unknown section", key_path=section)

    if sweep_raw is None:
        raise ConfigError("a [sweep] section is required", key_path="sweep")
    names = [n for n, _ in elements]
    sweep, analysis_frequency = _parse_sweep(sweep_raw, names)

    cfg = SweepConfig(
        source=source_raw,
        elements=tuple(elements),
        detection=detection,
        sweep=sweep,
        analysis_frequency=analysis_frequency,
        output_path=output_raw.get("path"),
        oracle=parse_bool(output_raw.get("oracle", "no"), "output.oracle"),
        seed=parse_int(output_raw.get("seed", "0"), "output.seed"),
        metadata=metadata,
    )
    chain = cfg.build_chain()
    if sweep.kind == "detuning":
        idx = chain.index_of(sweep.element)
        if not isinstance(chain.elements[idx], Nopa):
            raise ConfigError("detuning sweeps need a NOPA element", key_path="sweep.element")

    if targets or free or calib_raw:
        parsed = [_parse_target(name, items, cfg) for name, items in targets]
        for p in free:
            cfg.build_chain({p.path: p.lower})
        calibration = CalibrationTarget(
            targets=parsed,
            free=free,
            max_iterations=parse_int(calib_raw.get("max_iterations", "4000"), "calibration.max_iterations"),
            starts=parse_int(calib_raw.get("starts", "4"), "calibration.starts"),
        )
        cfg = replace(cfg, calibration=calibration)
    return cfg


def load_config(path) -> SweepConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror}") from exc
    return parse_config(text, source=str(p))


def _parse_sweep(raw, element_names):
    _check_keys("sweep", raw, SWEEP_KEYS)
    kind = raw.get("kind", "detuning").strip().lower()
    if kind not in ("detuning", "frequency"):
        raise ConfigError("kind must be detuning or frequency", key_path="sweep.kind")
    if kind == "detuning":
        default = DEFAULT_SWEEP
        element = raw.get("element")
        if element is None:
            raise ConfigError("detuning sweeps must name an element", key_path="sweep.element")
        if element not in element_names:
            raise ConfigError(f"no element named {element!r}", key_path="sweep.element")
    else:
        default = (0.1, 30.0, 300)
        element = None
        if "element" in raw:
            raise ConfigError("frequency sweeps do not take an element", key_path="sweep.element")
    start = _finite(parse_float(raw.get("start", default[0]), "sweep.start"), "sweep.start")
    stop = _finite(parse_float(raw.get("stop", default[1]), "sweep.stop"), "sweep.stop")
    points = parse_int(raw.get("points", str(default[2])), "sweep.points")
    if points < 2:
        raise ConfigError("need at least 2 points", key_path="sweep.points")
    if not start < stop:
        raise ConfigError("start must be below stop", key_path="sweep.stop")
    if kind == "frequency" and start < 0:
        raise ConfigError("analysis frequencies must be non-negative", key_path="sweep.start")
    w = _finite(parse_float(raw.get("analysis_frequency", DEFAULT_ANALYSIS_FREQUENCY), "sweep.analysis_frequency"),
                "sweep.analysis_frequency")
    if w < 0:
        raise ConfigError("analysis frequency must be non-negative", key_path="sweep.analysis_frequency")
    return SweepSpec(kind, start, stop, points, element), w


def _parse_free(name, raw):
    prefix = f"free.{name}"
    _check_keys(prefix, raw, FREE_KEYS)
    for k in ("path", "lower", "upper"):
        if k not in raw:
            raise ConfigError("required", key_path=f"{prefix}.{k}")
    _split_path(raw["path"])
    start = raw.get("start")
    return FreeParameter(
        name=name,
        path=raw["path"],
        lower=_finite(parse_float(raw["lower"], f"{prefix}.lower"), f"{prefix}.lower"),
        upper=_finite(parse_float(raw["upper"], f"{prefix}.upper"), f"{prefix}.upper"),
        start=None if start is None else parse_float(start, f"{prefix}.start"),
    )


def _parse_target(name, raw, cfg: SweepConfig) -> Target:
    prefix = f"target.{name}"
    overrides = {k[len("override."):]: v for k, v in raw.items() if k.startswith("override.")}
    _check_keys(prefix, [k for k in raw if not k.startswith("override.")], TARGET_KEYS)
    for k in ("observable", "value"):
        if k not in raw:
            raise ConfigError("required", key_path=f"{prefix}.{k}")
    if raw["observable"] not in OBSERVABLES:
        raise ConfigError(f"observable must be one of {', '.join(OBSERVABLES)}", key_path=f"{prefix}.observable")
    element = raw.get("element", cfg.sweep.element)
    detuning = None
    if "detuning" in raw:
        if element is None:
            raise ConfigError("detuning needs an element", key_path=f"{prefix}.element")
        if element not in cfg.element_names:
            raise ConfigError(f"no element named {element!r}", key_path=f"{prefix}.element")
        detuning = parse_detuning(raw["detuning"], f"{prefix}.detuning")
    tol = parse_float(raw.get("tolerance", 0.1), f"{prefix}.tolerance")
    if not tol > 0:
        raise ConfigError("tolerance must be positive", key_path=f"{prefix}.tolerance")
    w = raw.get("analysis_frequency")
    try:
        cfg.build_chain(overrides)
    except ConfigError as exc:
        raise ConfigError(str(exc), key_path=prefix) from exc
    return Target(
        name=name,
        observable=raw["observable"],
        value=_finite(parse_float(raw["value"], f"{prefix}.value"), f"{prefix}.value"),
        tolerance=tol,
        detuning=detuning,
        element=element if detuning is not None else None,
        analysis_frequency=None if w is None else parse_float(w, f"{prefix}.analysis_frequency"),
        overrides=overrides,
    )


CONFIG_HELP = __doc__

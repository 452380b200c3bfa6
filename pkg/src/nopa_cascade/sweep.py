"""Detuning and frequency sweeps, and their CSV output."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SweepConfig
from .errors import OutputError, ValidationError
from .network import CorrelationReport, correlation_report, evaluate

CSV_COLUMNS = ("sweep_var", "v_xsum_db", "v_ydiff_db", "v_xdiff_db", "v_ysum_db", "duan_plus", "duan_minus")


@dataclass
class SweepResult:
    """Rows of correlation reports, sorted by the sweep variable.

    All dB columns are relative to the shot-noise limit, which is the 0 dB
    reference (``snl_db``).
    """

    variable: str
    values: np.ndarray
    reports: list
    snl_db: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.reports)

    def column(self, name: str) -> np.ndarray:
        if name == "sweep_var":
            return np.asarray(self.values, dtype=float)
        return np.array([getattr(r, name) for r in self.reports])


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_detuning_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Correlation report at each detuning of the swept NOPA."""
    if cfg.sweep.kind != "detuning":
        raise ValidationError("configuration does not describe a detuning sweep")
    chain = cfg.build_chain()
    deltas = np.sort(cfg.sweep.values())
    element = cfg.sweep.element

    def point(delta) -> CorrelationReport:
        return correlation_report(evaluate(chain, {element: float(delta)}, cfg.analysis_frequency))

    reports = _map(point, deltas, workers)
    return SweepResult("detuning_mhz", deltas, reports,
                       metadata={"element": element, "analysis_frequency_mhz": cfg.analysis_frequency})


def run_frequency_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Correlation report versus analysis frequency at the configured detunings."""
    if cfg.sweep.kind != "frequency":
        raise ValidationError("configuration does not describe a frequency sweep")
    chain = cfg.build_chain()
    freqs = np.sort(cfg.sweep.values())
    reports = _map(lambda w: correlation_report(evaluate(chain, None, float(w))), freqs, workers)
    return SweepResult("analysis_frequency_mhz", freqs, reports)


def run_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    if cfg.sweep.kind == "detuning":
        return run_detuning_sweep(cfg, workers)
    return run_frequency_sweep(cfg, workers)


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for value, r in zip(result.values, result.reports):
        row = [value, r.v_xsum_db, r.v_ydiff_db, r.v_xdiff_db, r.v_ysum_db, r.duan_plus, r.duan_minus]
        w.writerow([f"{x:.6f}" for x in row])
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> None:
    """Write ``result`` as UTF-8 CSV with LF line endings and 6-decimal values."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(result))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> dict:
    """Columns of an emitted CSV file as float arrays, keyed by header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}

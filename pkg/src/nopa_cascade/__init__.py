"""Linearized quantum-noise simulator for cascaded non-degenerate optical parametric amplifiers.

Spectra are 4x4 quadrature covariance matrices in the order (X1, Y1, X2, Y2),
normalized so that vacuum is the identity. Frequencies and rates are in MHz.
"""

from .errors import (
    AboveThresholdError,
    ConfigError,
    InconsistentGeometryError,
    NopaCascadeError,
    OutputError,
    SimulationConfigError,
    ValidationError,
)
from .quad import (
    X_DIFF,
    X_SUM,
    Y_DIFF,
    Y_SUM,
    QuadCombination,
    SpectralCovariance,
    combination_variance,
    duan_value,
    to_db_rel_snl,
    vacuum_spectrum,
)
from .nopa import (
    AMPLIFICATION,
    DEAMPLIFICATION,
    CavityGeometry,
    DecayRates,
    NopaParams,
    Topology,
    derive_rates,
    drift_matrix,
    output_spectrum,
    pump_amplitude,
    resonant_closed_form,
    transfer_matrices,
)
from .network import (
    CorrelationReport,
    ExternalSpectrum,
    Loss,
    NetworkChain,
    Nopa,
    PhaseShift,
    Vacuum,
    correlation_report,
    evaluate,
)
from .config import SweepConfig, load_config, parse_config
from .sweep import SweepResult, emit_csv, run_detuning_sweep, run_frequency_sweep, run_sweep
from .calibrate import CalibrationResult, calibrate
from .langevin import OutputSeries, SimulationRun, estimate_spectrum, simulate

__version__ = "0.1.0"

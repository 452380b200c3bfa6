"""Two-mode quadrature algebra.

Spectral covariance matrices are stored in the lab quadrature order
``(X1, Y1, X2, Y2)`` (mode 1 = signal, mode 2 = idler) and normalized so that
vacuum is the identity: every single quadrature of a vacuum mode has variance 1,
and the shot-noise limit (SNL) of a combination ``sum_i c_i q_i`` is
``sum_i c_i**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10
IMAG_ATOL = 1e-12
DB_FLOOR = -99.0


def _as_matrix(matrix) -> np.ndarray:
    m = np.array(matrix, dtype=complex)
    if m.shape != (4, 4):
        raise ValidationError(f"spectral matrix must be 4x4, got shape {m.shape}")
    return m


def _check_covariance(m: np.ndarray) -> None:
    if not np.all(np.isfinite(m)):
        raise ValidationError("spectral matrix contains non-finite entries")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_ATOL * max(1.0, np.max(np.abs(m))):
        raise ValidationError("spectral matrix is not Hermitian")
    diag = np.diag(m)
    if np.any(np.abs(diag.imag) > HERMITIAN_ATOL) or np.any(diag.real < 0):
        raise ValidationError("spectral matrix diagonal must be real and non-negative")
    scale = max(1.0, float(np.max(np.abs(diag))))
    lowest = np.linalg.eigvalsh(m)[0]
    if lowest < -PSD_ATOL * scale:
        raise ValidationError(f"spectral matrix is not positive semidefinite (eigenvalue {lowest:.3e})")


@dataclass(frozen=True)
class SpectralCovariance:
    """Hermitian 4x4 spectral covariance of two modes at one sideband frequency.

    Args:
        matrix: 4x4 complex Hermitian PSD matrix, vacuum = identity.
        analysis_frequency: sideband frequency in MHz.
    """

    matrix: np.ndarray
    analysis_frequency: float = 0.0

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        _check_covariance(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "analysis_frequency", float(self.analysis_frequency))

    @classmethod
    def from_unchecked(cls, matrix, analysis_frequency: float) -> "SpectralCovariance":
        """Build from a numerically computed matrix, removing rounding-level anti-Hermitian parts."""
        m = _as_matrix(matrix)
        return cls(0.5 * (m + m.conj().T), analysis_frequency)

    def block(self, mode_index: int) -> np.ndarray:
        i = _mode_slice(mode_index)
        return np.array(self.matrix[i, i])


@dataclass(frozen=True)
class QuadCombination:
    """Real linear combination of ``(X1, Y1, X2, Y2)``."""

    coefficients: tuple
    name: str = field(default="", compare=False)

    def __post_init__(self):
        c = tuple(float(x) for x in self.coefficients)
        if len(c) != 4:
            raise ValidationError("a quadrature combination needs exactly 4 coefficients")
        object.__setattr__(self, "coefficients", c)

    @property
    def snl(self) -> float:
        return float(sum(x * x for x in self.coefficients))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.coefficients)

    def __mul__(self, k: float) -> "QuadCombination":
        return QuadCombination(tuple(k * x for x in self.coefficients), self.name)

    __rmul__ = __mul__


X_SUM = QuadCombination((1, 0, 1, 0), "x_sum")
Y_DIFF = QuadCombination((0, 1, 0, -1), "y_diff")
X_DIFF = QuadCombination((1, 0, -1, 0), "x_diff")
Y_SUM = QuadCombination((0, 1, 0, 1), "y_sum")


def vacuum_spectrum(analysis_frequency: float = 0.0) -> SpectralCovariance:
    """Two vacuum modes; the SNL reference."""
    return SpectralCovariance(np.eye(4), analysis_frequency)


def _coerce(s) -> SpectralCovariance:
    if isinstance(s, SpectralCovariance):
        return s
    return SpectralCovariance(s)


def combination_variance(s, c: QuadCombination) -> float:
    """Variance ``c^T S c`` of a quadrature combination.

    ``s`` may be a raw 4x4 array, in which case it is validated first.
    """
    s = _coerce(s)
    v = c.vector
    value = v @ s.matrix @ v
    if abs(value.imag) > IMAG_ATOL * max(1.0, abs(value.real)):
        raise ValidationError(f"quadratic form has imaginary residue {value.imag:.3e}")
    # PSD tolerance can leave a rounding-level negative value
    return max(float(value.real), 0.0)


def to_db_rel_snl(variance: float, snl: float) -> float:
    """``10 log10(variance / snl)``; zero variance maps to the -99 dB floor."""
    if not snl > 0:
        raise ValidationError(f"shot-noise reference must be positive, got {snl}")
    if variance < 0:
        raise ValidationError(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return DB_FLOOR
    return max(10.0 * np.log10(variance / snl), DB_FLOOR)


def duan_value(s) -> float:
    """Sum of the amplitude-sum and phase-difference variances.

    Values below 4 (twice the per-combination SNL of 2) certify inseparability.
    """
    s = _coerce(s)
    return combination_variance(s, X_SUM) + combination_variance(s, Y_DIFF)


def apply_transfer(
    t_signal,
    s_in: SpectralCovariance,
    noise_couplings: Sequence = (),
) -> SpectralCovariance:
    """Propagate a spectrum through a linear map with vacuum auxiliary ports.

    Returns ``T S T^dagger + sum_k L_k L_k^dagger``.
    """
    t = np.asarray(t_signal, dtype=complex)
    if t.shape != (4, 4):
        raise ValidationError(f"transfer matrix must be 4x4, got {t.shape}")
    out = t @ s_in.matrix @ t.conj().T
    for k, l in enumerate(noise_couplings):
        l = np.asarray(l, dtype=complex)
        if l.shape != (4, 4):
            raise ValidationError(f"noise coupling {k} must be 4x4, got {l.shape}")
        out = out + l @ l.conj().T
    return SpectralCovariance.from_unchecked(out, s_in.analysis_frequency)


def _mode_slice(mode_index: int) -> slice:
    if mode_index == 1:
        return slice(0, 2)
    if mode_index == 2:
        return slice(2, 4)
    raise ValidationError(f"mode index must be 1 or 2, got {mode_index!r}")


def rotation_matrix(mode_index: int, angle: float) -> np.ndarray:
    """4x4 map applying ``X -> X cos(a) + Y sin(a)``, ``Y -> -X sin(a) + Y cos(a)`` to one mode."""
    i = _mode_slice(mode_index)
    r = np.eye(4)
    c, s = np.cos(angle), np.sin(angle)
    r[i, i] = [[c, s], [-s, c]]
    return r


def rotate_mode(s: SpectralCovariance, mode_index: int, angle: float) -> SpectralCovariance:
    return apply_transfer(rotation_matrix(mode_index, angle), s)

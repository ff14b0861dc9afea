"""
Force-history post-processing: shedding frequency and force coefficients.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from exceptions import (
    DivisionDomainError,
    InsufficientDataError,
    NormalizationError,
    SamplingError,
)
from solver import ForceHistory

logger = logging.getLogger(__name__)

MIN_TRIMMED_SAMPLES = 16
SILENT_PEAK_RATIO = 1e-9


@dataclass(frozen=True)
class CoefficientSummary:
    """One row of the results table."""

    design: str
    U: float
    frequency_hz: float
    cl: float
    cd: float
    strouhal: float
    reynolds: float
    transient_fraction: float = 0.5
    oscillating: bool = False

    @property
    def drift(self) -> float:
        return drift_coefficient(self.cl, self.cd)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "design": self.design,
            "U_mps": self.U,
            "frequency_hz": self.frequency_hz,
            "CL": self.cl,
            "CD": self.cd,
            "drift": self.drift,
            "strouhal": self.strouhal,
            "reynolds": self.reynolds,
            "transient_fraction": self.transient_fraction,
            "oscillating": self.oscillating,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CoefficientSummary":
        # drift is always recomputed from CL and CD
        return cls(
            design=str(data["design"]),
            U=float(data["U_mps"]),
            frequency_hz=float(data["frequency_hz"]),
            cl=float(data["CL"]),
            cd=float(data["CD"]),
            strouhal=float(data["strouhal"]),
            reynolds=float(data["reynolds"]),
            transient_fraction=float(data.get("transient_fraction", 0.5)),
            oscillating=bool(data.get("oscillating", False)),
        )


def trim_transient(history: ForceHistory, fraction: float = 0.5) -> ForceHistory:
    """Drop the first ceil(fraction * N) samples."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Transient fraction must lie in [0, 1), got {fraction}")
    n = len(history)
    if n < 2:
        raise InsufficientDataError(f"Force history has {n} samples, at least 2 are needed")
    trimmed = history.tail(int(math.ceil(fraction * n)))
    if len(trimmed) < MIN_TRIMMED_SAMPLES:
        raise InsufficientDataError(
            f"Only {len(trimmed)} samples left after trimming {fraction:.0%} of {n}; "
            f"at least {MIN_TRIMMED_SAMPLES} are needed"
        )
    return trimmed


def _check_spacing(times: np.ndarray, dt_sample: float) -> None:
    steps = np.diff(np.asarray(times, dtype=float))
    if np.any(np.abs(steps - dt_sample) > 1e-6 * dt_sample):
        raise SamplingError(
            f"Samples are not uniformly spaced at {dt_sample:.6g} s "
            f"(spacing ranges {steps.min():.6g}..{steps.max():.6g} s)"
        )


def dominant_frequency(series, dt_sample: float, times: Optional[np.ndarray] = None) -> float:
    """
    Frequency of the strongest spectral peak of a uniformly sampled signal.

    The mean is removed and a Hann window applied before the real FFT. The
    peak bin is refined by a parabola through the log magnitudes of the bin
    and its neighbours.

    Args:
        series: Signal values
        dt_sample: Sampling interval in seconds
        times: Optional sample times, checked for uniform spacing

    Returns:
        Frequency in Hz, or 0.0 when the signal carries no fluctuation
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < MIN_TRIMMED_SAMPLES:
        raise InsufficientDataError(f"Need at least {MIN_TRIMMED_SAMPLES} samples, got {n}")
    if not dt_sample > 0:
        raise SamplingError(f"Sampling interval must be positive, got {dt_sample}")
    if times is not None:
        _check_spacing(times, dt_sample)

    scale = math.sqrt(float(np.mean(x ** 2))) * n
    spectrum = np.abs(np.fft.rfft((x - x.mean()) * np.hanning(n)))
    k = int(np.argmax(spectrum[1:])) + 1
    if spectrum[k] <= SILENT_PEAK_RATIO * scale:
        return 0.0

    offset = 0.0
    # the DC bin carries no tone and cannot anchor the parabola
    if 1 < k and k + 1 < len(spectrum):
        floor = np.finfo(float).tiny
        a, b, c = np.log(np.maximum(spectrum[k - 1:k + 2], floor))
        denominator = a - 2.0 * b + c
        if denominator < 0:
            offset = 0.5 * (a - c) / denominator
    return (k + offset) / (n * dt_sample)


def count_zero_crossings(series) -> int:
    """Sign changes of the mean-removed signal."""
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        return 0
    positive = (x - x.mean()) >= 0
    return int(np.count_nonzero(positive[1:] != positive[:-1]))


def zero_crossing_frequency(series, dt_sample: float) -> float:
    """
    Frequency from the spacing of mean crossings.

    Crossing instants are located by linear interpolation; the estimate is
    (crossings - 1) half-periods over the time between the first and last one.
    """
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    positive = x >= 0
    idx = np.nonzero(positive[1:] != positive[:-1])[0]
    if len(idx) < 2:
        return 0.0
    instants = (idx + x[idx] / (x[idx] - x[idx + 1])) * dt_sample
    return (len(idx) - 1) / (2.0 * (instants[-1] - instants[0]))


def dynamic_pressure_force(U: float, D: float, rho: float = 1.0) -> float:
    """0.5 * rho * U^2 * D, the force scale per unit span."""
    if not (U > 0 and D > 0 and rho > 0):
        raise NormalizationError(f"Cannot normalize with U={U}, D={D}, rho={rho}")
    return 0.5 * rho * U ** 2 * D


def drag_coefficient(history: ForceHistory, U: float, D: float, rho: float = 1.0) -> float:
    q = dynamic_pressure_force(U, D, rho)
    if len(history) == 0:
        raise InsufficientDataError("Empty force history")
    return float(np.mean(history.fx)) / q


def lift_coefficient(history: ForceHistory, U: float, D: float, rho: float = 1.0) -> float:
    """Lift amplitude: sqrt(2) times the RMS fluctuation, normalized."""
    q = dynamic_pressure_force(U, D, rho)
    if len(history) == 0:
        raise InsufficientDataError("Empty force history")
    return math.sqrt(2.0) * float(np.std(history.fy)) / q


def drift_coefficient(cl: float, cd: float) -> float:
    if not cd > 0:
        raise DivisionDomainError(f"Drift coefficient needs a positive drag coefficient, got {cd}")
    return cl / cd


def strouhal(frequency_hz: float, D: float, U: float) -> float:
    if not (U > 0 and D > 0):
        raise NormalizationError(f"Strouhal number needs U > 0 and D > 0, got U={U}, D={D}")
    return frequency_hz * D / U


def reynolds(U: float, D: float, nu: float) -> float:
    if not (U > 0 and D > 0 and nu > 0):
        raise NormalizationError(f"Reynolds number needs positive U, D, nu; got {U}, {D}, {nu}")
    return U * D / nu


def is_oscillating(history: ForceHistory, min_zero_crossings: int = 6,
                   min_amplitude_ratio: float = 0.01) -> bool:
    """Lift crosses its mean often enough with a swing that is not negligible against drag."""
    if len(history) == 0:
        raise InsufficientDataError("Empty force history")
    crossings = count_zero_crossings(history.fy)
    swing = float(np.ptp(history.fy))
    return crossings >= min_zero_crossings and swing >= min_amplitude_ratio * abs(float(np.mean(history.fx)))


def summarize(history: ForceHistory, design: str, U: float, D: float, nu: float,
              rho: float = 1.0, fraction: float = 0.5, min_zero_crossings: int = 6,
              min_amplitude_ratio: float = 0.01) -> CoefficientSummary:
    """
    Assemble one results row from a raw force history.

    Args:
        history: Untrimmed force history of the case
        design: Design tag
        U: Reference speed in m/s
        D: Frontal width in m
        nu: Kinematic viscosity in effect
        rho: Density used for normalization
        fraction: Leading share of samples discarded as transient

    Returns:
        CoefficientSummary of the trimmed history
    """
    trimmed = trim_transient(history, fraction)
    frequency = dominant_frequency(trimmed.fy, trimmed.dt_sample, trimmed.t)
    cl = lift_coefficient(trimmed, U, D, rho)
    cd = drag_coefficient(trimmed, U, D, rho)
    drift = drift_coefficient(cl, cd)
    summary = CoefficientSummary(
        design=design,
        U=float(U),
        frequency_hz=frequency,
        cl=cl,
        cd=cd,
        strouhal=strouhal(frequency, D, U),
        reynolds=reynolds(U, D, nu),
        transient_fraction=fraction,
        oscillating=is_oscillating(trimmed, min_zero_crossings, min_amplitude_ratio),
    )
    logger.info(f"{design} U={U:g}: f={frequency:.4g} Hz, CL={cl:.4g}, CD={cd:.4g}, "
                f"drift={drift:.4g}, St={summary.strouhal:.4g}")
    return summary

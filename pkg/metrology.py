"""
Metrología del sistema: resolución axial vs profundidad, caída de
sensibilidad y estadística de repetibilidad de los coeficientes calibrados.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from models import (
    DepthMeasurement,
    KGrid,
    PhaseCorrection,
    ReferenceSpectrum,
    RepeatabilityStats,
    SimScenario,
    SpectralFringe,
    TooFewValuesError,
)
from reconstruction import DEFAULT_PAD_FACTOR, measure_psf, reconstruct
from simulator import generate_fringe


@dataclass(frozen=True, eq=False)
class DepthSample:
    """Interferograma de un espejo; depth=None si la profundidad nominal no se conoce"""
    fringe: SpectralFringe
    ref: ReferenceSpectrum
    grid: KGrid
    depth: Optional[float] = None


DepthInput = Union[SimScenario, DepthSample]


def _as_sample(item: DepthInput, seed: int) -> DepthSample:
    if isinstance(item, DepthSample):
        return item
    fringe, ref, grid = generate_fringe(item, seed)
    return DepthSample(fringe=fringe, ref=ref, grid=grid, depth=item.reflectors.reflectors[0].depth)


def _measure(items: Sequence[DepthInput], phase: Optional[PhaseCorrection], seed: int, pad_factor: int) -> List[DepthMeasurement]:
    rows = []
    for item in items:
        sample = _as_sample(item, seed)
        metrics = measure_psf(reconstruct(sample.fringe, sample.ref, sample.grid, phase, pad_factor=pad_factor))
        depth = sample.depth if sample.depth is not None else metrics.peak_depth
        rows.append(DepthMeasurement(
            depth=depth,
            fwhm=metrics.fwhm,
            peak_db=metrics.peak_db,
            peak_depth=metrics.peak_depth,
        ))
    return rows


def resolution_vs_depth(
    scenarios: Sequence[DepthInput],
    phase: Optional[PhaseCorrection] = None,
    seed: int = 0,
    pad_factor: int = DEFAULT_PAD_FACTOR,
) -> List[DepthMeasurement]:
    """FWHM de la PSF para cada profundidad (reconstruct + measure_psf)"""
    return _measure(scenarios, phase, seed, pad_factor)


def sensitivity_rolloff(
    scenarios: Sequence[DepthInput],
    phase: Optional[PhaseCorrection] = None,
    seed: int = 0,
    pad_factor: int = DEFAULT_PAD_FACTOR,
) -> List[DepthMeasurement]:
    """Altura del pico por profundidad, en dB respecto de la profundidad más somera"""
    rows = _measure(scenarios, phase, seed, pad_factor)
    if not rows:
        return rows
    reference = min(rows, key=lambda r: abs(r.depth)).peak_db
    return [r.model_copy(update={"peak_db": r.peak_db - reference}) for r in rows]


def expected_rolloff_db(depth: float, z_max: float) -> float:
    """20·log10|sinc((π/2)·z/z_max)| de la integración finita del píxel"""
    x = 0.5 * math.pi * depth / z_max
    value = 1.0 if x == 0 else math.sin(x) / x
    return 20.0 * math.log10(abs(value))


def repeatability_stats(values: Sequence[float]) -> RepeatabilityStats:
    """Media, desviación estándar muestral y coeficiente de variación con signo"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise TooFewValuesError(f"Se requieren al menos 2 valores (hay {values.size})")

    mean = float(np.mean(values))
    if np.all(values == values[0]):
        return RepeatabilityStats(mean=float(values[0]), stddev=0.0, cv=0.0, count=int(values.size))

    stddev = float(np.std(values, ddof=1))
    cv = stddev / mean if mean != 0 else math.nan
    return RepeatabilityStats(mean=mean, stddev=stddev, cv=cv, count=int(values.size))

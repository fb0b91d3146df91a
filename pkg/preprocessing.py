"""
Cadena determinista de preprocesamiento del interferograma espectral.

Etapas (en orden estricto):
  RAW → BACKGROUND_SUBTRACTED → NORMALIZED → RESAMPLED → WINDOWED

Cada operación valida la etapa de entrada y emite la siguiente; todas son
funciones puras sobre arreglos inmutables.
"""

from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import get_window, hilbert

from models import (
    ComplexFringe,
    DegenerateReferenceError,
    KGrid,
    LengthMismatchError,
    ReferenceSpectrum,
    SpectralFringe,
    Stage,
    StageError,
    WindowKind,
)


# Piso relativo de S(k) antes de dividir
DEFAULT_CLAMP_EPSILON = 1e-3


def _require_stage(fringe: SpectralFringe, allowed, operation: str) -> None:
    allowed = tuple(allowed) if isinstance(allowed, (tuple, list, set)) else (allowed,)
    if fringe.stage not in allowed:
        names = ", ".join(Stage(s).name for s in allowed)
        raise StageError(f"{operation} requiere etapa {names} (recibido {fringe.stage.name})")


def _require_same_length(fringe: SpectralFringe, ref: ReferenceSpectrum) -> None:
    if ref.n != fringe.n:
        raise LengthMismatchError(
            f"Interferograma ({fringe.n}) y referencia ({ref.n}) con largos distintos"
        )


def window_vector(kind: WindowKind, n: int, periodic: bool = False) -> np.ndarray:
    """Muestras de la ventana; `periodic` elige la convención de la DFT"""
    kind = WindowKind(kind)
    if kind is WindowKind.RECTANGULAR:
        return np.ones(n)
    return get_window("hann", n, fftbins=periodic)


def subtract_background(fringe: SpectralFringe, ref: ReferenceSpectrum) -> SpectralFringe:
    """(a) Resta del espectro de fondo del brazo de referencia"""
    _require_stage(fringe, Stage.RAW, "subtract_background")
    _require_same_length(fringe, ref)
    return fringe.advance(fringe.samples - ref.background, Stage.BACKGROUND_SUBTRACTED)


def normalize_to_reference(
    fringe: SpectralFringe,
    ref: ReferenceSpectrum,
    clamp_epsilon: float = DEFAULT_CLAMP_EPSILON,
) -> SpectralFringe:
    """
    (b) Divide por la potencia de la fuente S(k).

    El divisor se acota inferiormente a `clamp_epsilon · max S` para que las
    colas del espectro no amplifiquen el ruido.
    """
    _require_stage(fringe, Stage.BACKGROUND_SUBTRACTED, "normalize_to_reference")
    _require_same_length(fringe, ref)

    peak = float(np.max(ref.source_power))
    if not np.isfinite(peak) or peak <= 0:
        raise DegenerateReferenceError("La potencia de la fuente no tiene valores positivos")

    divisor = np.maximum(ref.source_power, clamp_epsilon * peak)
    return fringe.advance(fringe.samples / divisor, Stage.NORMALIZED)


def resample_to_linear_k(
    fringe: SpectralFringe,
    grid: Optional[KGrid] = None,
) -> Tuple[SpectralFringe, KGrid]:
    """
    (c) Interpola sobre una grilla equiespaciada en k, creciente, con el
    mismo número de muestras y el mismo rango [min k, max k].

    Spline cúbico con borde natural. Grillas ya lineales se copian sin
    interpolar (una grilla decreciente solo se invierte).
    """
    _require_stage(fringe, Stage.NORMALIZED, "resample_to_linear_k")
    grid = grid if grid is not None else fringe.grid
    if grid.n != fringe.n:
        raise LengthMismatchError(
            f"Interferograma ({fringe.n}) y grilla ({grid.n}) con largos distintos"
        )

    k = grid.k
    samples = fringe.samples
    if not grid.ascending:
        k = k[::-1]
        samples = samples[::-1]

    linear = KGrid.linear(float(k[0]), float(k[-1]), grid.n)
    if grid.is_linear:
        resampled = np.array(samples, copy=True)
    else:
        resampled = CubicSpline(k, samples, bc_type="natural")(linear.k)

    return fringe.advance(resampled, Stage.RESAMPLED, grid=linear), linear


def apply_window(fringe: SpectralFringe, kind: WindowKind = WindowKind.HANN) -> SpectralFringe:
    """(d) Apodización; Hann simétrica (extremos exactamente cero)"""
    _require_stage(fringe, Stage.RESAMPLED, "apply_window")
    w = window_vector(kind, fringe.n, periodic=False)
    return fringe.advance(fringe.samples * w, Stage.WINDOWED)


def to_analytic(fringe: SpectralFringe) -> ComplexFringe:
    """Señal analítica: FFT, se anulan las frecuencias negativas, FFT inversa"""
    _require_stage(fringe, (Stage.RESAMPLED, Stage.WINDOWED), "to_analytic")
    return ComplexFringe(samples=hilbert(fringe.samples), grid=fringe.grid)


def preprocess(
    fringe: SpectralFringe,
    ref: ReferenceSpectrum,
    grid: Optional[KGrid] = None,
    window: WindowKind = WindowKind.HANN,
    clamp_epsilon: float = DEFAULT_CLAMP_EPSILON,
) -> SpectralFringe:
    """Etapas (a)–(d) en una sola llamada; devuelve el interferograma en WINDOWED"""
    subtracted = subtract_background(fringe, ref)
    normalized = normalize_to_reference(subtracted, ref, clamp_epsilon)
    resampled, _ = resample_to_linear_k(normalized, grid)
    return apply_window(resampled, window)

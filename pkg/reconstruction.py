"""
Reconstrucción de A-scans y B-scans con compensación opcional de dispersión,
medición de la PSF y promedio de cuadros.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sp_fft
from scipy.signal import find_peaks, hilbert, peak_widths

from models import (
    AScan,
    BScan,
    DimensionMismatchError,
    KGrid,
    NoDominantPeakError,
    NonLinearGridError,
    PhaseCorrection,
    PsfMetrics,
    ReferenceSpectrum,
    SpectralFringe,
    WindowKind,
)
from optimizer import apply_correction
from preprocessing import (
    DEFAULT_CLAMP_EPSILON,
    normalize_to_reference,
    preprocess,
    subtract_background,
    to_analytic,
    window_vector,
)


DEFAULT_PAD_FACTOR = 4


def _pixel_analytic(
    fringe: SpectralFringe,
    ref: ReferenceSpectrum,
    grid: Optional[KGrid],
    window: WindowKind,
    clamp_epsilon: float,
) -> Tuple[np.ndarray, float]:
    """Señal analítica sobre el índice de píxel, sin remuestrear a k lineal"""
    normalized = normalize_to_reference(subtract_background(fringe, ref), ref, clamp_epsilon)
    axis = grid if grid is not None else normalized.grid
    pixels = normalized.samples if axis.ascending else normalized.samples[::-1]
    return hilbert(pixels * window_vector(window, normalized.n)), axis.dk


def reconstruct(
    fringe: SpectralFringe,
    ref: ReferenceSpectrum,
    grid: Optional[KGrid] = None,
    phase: Optional[PhaseCorrection] = None,
    *,
    pad_factor: int = DEFAULT_PAD_FACTOR,
    window: WindowKind = WindowKind.HANN,
    normalize: bool = True,
    resample: bool = True,
    clamp_epsilon: float = DEFAULT_CLAMP_EPSILON,
) -> AScan:
    """
    Cadena completa: fondo → normalización → remuestreo → ventana →
    señal analítica → e^{−iΔΦ} → FFT con relleno ×pad_factor.

    Se conserva la mitad de frecuencias positivas. Un vector de fase nulo se
    trata igual que `phase=None`. Con `resample=False` la FFT se toma sobre
    el índice de píxel (sin compensación posible), para comparar con la
    cadena completa.
    """
    if not normalize:
        ref = ReferenceSpectrum(background=ref.background, source_power=np.ones(ref.n))

    if resample:
        windowed = preprocess(fringe, ref, grid, window, clamp_epsilon)
        analytic = to_analytic(windowed)
        if phase is not None and np.any(phase.dphi != 0.0):
            analytic = apply_correction(analytic, phase)
        samples, dk = analytic.samples, windowed.grid.dk
    else:
        if phase is not None:
            raise NonLinearGridError("La compensación de fase requiere remuestrear a k lineal")
        samples, dk = _pixel_analytic(fringe, ref, grid, window, clamp_epsilon)

    n_fft = pad_factor * fringe.n
    spectrum = sp_fft.fft(samples, n=n_fft)[: n_fft // 2]
    depth_step = np.pi / (n_fft * dk)
    return AScan(profile=spectrum, depth_step=float(depth_step))


def measure_psf(
    a: AScan,
    reference_level: float = 1.0,
    min_prominence_db: float = 20.0,
) -> PsfMetrics:
    """
    FWHM a media amplitud (lineal) con `peak_widths`, que interpola
    linealmente los cruces.

    `rel_height` se ajusta con la prominencia del pico para que la altura
    de medición sea exactamente la mitad del máximo. Si el máximo es una
    meseta, peak_bin es el centro de la meseta.
    """
    mag = a.magnitude
    if mag.size < 3:
        raise NoDominantPeakError("Perfil demasiado corto")
    peak = float(mag.max())
    if peak <= 0:
        raise NoDominantPeakError("Perfil nulo")

    median = float(np.median(mag))
    if median > 0 and 20.0 * np.log10(peak / median) < min_prominence_db:
        raise NoDominantPeakError(
            f"El pico está solo {20.0 * np.log10(peak / median):.1f} dB sobre la mediana"
        )

    peaks, properties = find_peaks(mag, prominence=0, plateau_size=1)
    if peaks.size == 0 or mag[peaks].max() < peak:
        raise NoDominantPeakError("El máximo del perfil está en un borde")
    idx = int(np.argmax(mag[peaks]))
    prominence = float(properties["prominences"][idx])
    if prominence < 0.5 * peak:
        raise NoDominantPeakError("El pico no cruza la mitad del máximo dentro del perfil")

    sel = slice(idx, idx + 1)
    _, _, left_ips, right_ips = peak_widths(
        mag,
        peaks[sel],
        rel_height=0.5 * peak / prominence,
        prominence_data=(properties["prominences"][sel], properties["left_bases"][sel], properties["right_bases"][sel]),
    )
    peak_bin = 0.5 * float(properties["left_edges"][idx] + properties["right_edges"][idx])

    return PsfMetrics(
        peak_bin=peak_bin,
        peak_depth=peak_bin * a.depth_step,
        fwhm=float(right_ips[0] - left_ips[0]) * a.depth_step,
        peak_db=float(20.0 * np.log10(peak / reference_level)),
    )


def reconstruct_bscan(
    fringes: Sequence[SpectralFringe],
    ref: ReferenceSpectrum,
    grid: Optional[KGrid] = None,
    phase: Optional[PhaseCorrection] = None,
    *,
    pad_factor: int = 1,
    workers: int = 4,
) -> BScan:
    """A-scans en paralelo; las filas de la imagen respetan el orden de entrada"""
    if not fringes:
        raise DimensionMismatchError("Se requiere al menos un A-scan")

    def one(fringe: SpectralFringe) -> AScan:
        return reconstruct(fringe, ref, grid, phase, pad_factor=pad_factor)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        ascans = list(pool.map(one, fringes))

    return BScan(image=np.vstack([a.magnitude for a in ascans]), depth_step=ascans[0].depth_step)


def average_frames(frames: Sequence[BScan]) -> BScan:
    """Promedio por píxel de magnitudes lineales"""
    if not frames:
        raise DimensionMismatchError("Se requiere al menos un cuadro")
    shape = frames[0].shape
    for frame in frames[1:]:
        if frame.shape != shape:
            raise DimensionMismatchError(f"Cuadros con dimensiones distintas: {shape} vs {frame.shape}")
    if len(frames) == 1:
        return frames[0]

    stack = np.stack([f.image for f in frames])
    return BScan(
        image=stack.mean(axis=0),
        depth_step=frames[0].depth_step,
        scan_axis=frames[0].scan_axis,
        averaging_count=sum(f.averaging_count for f in frames),
    )


def bscan_to_image(bscan: BScan, db_floor: float = -60.0, db_ceiling: float = 0.0) -> np.ndarray:
    """Imagen de 8 bits en escala logarítmica: filas = profundidad, columnas = A-scans"""
    if db_ceiling <= db_floor:
        raise ValueError("db_ceiling debe ser mayor que db_floor")
    image = bscan.image
    peak = float(image.max())
    if peak <= 0:
        return np.zeros(image.T.shape, dtype=np.uint8)
    db = 20.0 * np.log10(np.maximum(image / peak, np.finfo(float).tiny))
    scaled = (np.clip(db, db_floor, db_ceiling) - db_floor) / (db_ceiling - db_floor)
    return np.round(scaled.T * 255.0).astype(np.uint8)

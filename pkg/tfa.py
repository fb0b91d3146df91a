"""
Análisis tiempo-frecuencia del interferograma: STFT deslizante sobre k,
extracción de la cresta (profundidad de máxima energía por número de onda)
y varianza de la cresta, el objetivo que minimiza la calibración.
"""

from typing import Optional

import numpy as np
import scipy.fft as sp_fft
from numpy.lib.stride_tricks import sliding_window_view

from models import (
    EmptyMapError,
    InvalidWindowParamsError,
    Ridge,
    SpectralFringe,
    Stage,
    StageError,
    StftConfig,
    TfaMap,
    TooFewValidColumnsError,
)
from preprocessing import window_vector


def k_eval_count(n: int, m: int, l: int) -> int:
    """Número de ventanas evaluadas: ⌊(n − l)/(m − l)⌋"""
    if not (0 <= l < m <= n):
        raise InvalidWindowParamsError(f"Se requiere 0 ≤ L < M ≤ N (N={n}, M={m}, L={l})")
    return (n - l) // (m - l)


def _segments(samples: np.ndarray, starts: np.ndarray, cfg: StftConfig) -> np.ndarray:
    m = cfg.window_len
    return sliding_window_view(samples, m)[starts] * window_vector(cfg.window, m, periodic=True)


def spectrogram(samples: np.ndarray, k: np.ndarray, cfg: StftConfig) -> TfaMap:
    """
    Núcleo de la STFT, sin validación de etapa.

    Acepta muestras reales o complejas (señal analítica). Cada columna es
    una ventana de M muestras con salto M − L, multiplicada por Hann
    periódica; se conserva la magnitud de las primeras fft_len/2 filas
    menos las filas cercanas a DC.
    """
    samples = np.asarray(samples)
    k = np.asarray(k, dtype=float)
    n = samples.size
    m = cfg.window_len
    count = k_eval_count(n, m, cfg.overlap_len)
    if k.size != n:
        raise InvalidWindowParamsError("La grilla k no coincide con el número de muestras")

    starts = np.arange(count) * cfg.hop
    segments = _segments(samples, starts, cfg)

    n_fft = cfg.n_fft
    half = n_fft // 2
    if np.iscomplexobj(segments):
        spectra = sp_fft.fft(segments, n=n_fft, axis=-1, workers=cfg.workers)[:, :half]
    else:
        spectra = sp_fft.rfft(segments, n=n_fft, axis=-1, workers=cfg.workers)[:, :half]

    rows = np.arange(cfg.dc_exclusion_rows, half)
    energy = np.ascontiguousarray(np.abs(spectra[:, cfg.dc_exclusion_rows:]).T)

    dk = abs(float(k[-1] - k[0])) / (n - 1)
    depth_bins = rows * np.pi / (n_fft * dk)
    return TfaMap(
        energy=energy,
        k_centers=k[starts + m // 2].copy(),
        depth_bins=depth_bins,
        dc_rows=cfg.dc_exclusion_rows,
    )


def stft(fringe: SpectralFringe, cfg: Optional[StftConfig] = None) -> TfaMap:
    """Mapa de energía de un interferograma ya remuestreado (o ventaneado)"""
    if fringe.stage < Stage.RESAMPLED:
        raise StageError(f"stft requiere etapa ≥ RESAMPLED (recibido {fringe.stage.name})")
    return spectrogram(fringe.samples, fringe.grid.k, cfg or StftConfig())


def extract_ridge(tfa_map: TfaMap, refine: bool = False, mask_factor: float = 10.0) -> Ridge:
    """
    Fila de máxima energía por columna.

    Empates se resuelven hacia la fila menor (np.argmax). Una columna es
    válida si su pico supera `mask_factor` veces su mediana. Con `refine`
    el máximo se ajusta con una parábola sobre el logaritmo de la energía.
    """
    energy = np.asarray(tfa_map.energy, dtype=float)
    if energy.ndim != 2 or energy.size == 0:
        raise EmptyMapError("El mapa tiempo-frecuencia está vacío")

    n_rows, n_cols = energy.shape
    rows = np.argmax(energy, axis=0)
    cols = np.arange(n_cols)
    peak = energy[rows, cols]
    validity = peak > mask_factor * np.median(energy, axis=0)

    depth = rows.astype(float)
    if refine and n_rows >= 3:
        interior = (rows > 0) & (rows < n_rows - 1)
        r, c = rows[interior], cols[interior]
        floor = np.finfo(float).tiny
        y_minus = np.log(np.maximum(energy[r - 1, c], floor))
        y_zero = np.log(np.maximum(energy[r, c], floor))
        y_plus = np.log(np.maximum(energy[r + 1, c], floor))
        curvature = y_minus - 2.0 * y_zero + y_plus
        offset = np.zeros_like(curvature)
        np.divide(0.5 * (y_minus - y_plus), curvature, out=offset, where=curvature < 0)
        depth[interior] += np.clip(offset, -0.5, 0.5)

    return Ridge(depth_at_k=depth, validity_mask=validity)


def refine_ridge(ridge: Ridge, samples: np.ndarray, cfg: StftConfig, steps: Optional[int] = None) -> Ridge:
    """
    Lleva cada fila de la cresta al máximo de |X(ω)|², la DTFT continua del
    segmento ventaneado, con pasos de Newton desde la estimación discreta.

    Con una ventana real el lóbulo principal es simétrico alrededor de la
    frecuencia del tono, de modo que el máximo no arrastra el sesgo de la
    parábola cuando la ventana efectiva cambia de forma entre columnas.
    Cada paso se limita a medio bin y el resultado a ±1 bin del inicial.
    """
    steps = cfg.ridge_newton_steps if steps is None else steps
    samples = np.asarray(samples)
    depth = np.asarray(ridge.depth_at_k, dtype=float)
    count = k_eval_count(samples.size, cfg.window_len, cfg.overlap_len)
    if depth.size != count:
        raise InvalidWindowParamsError(f"La cresta tiene {depth.size} columnas y la señal {count} ventanas")
    if steps == 0:
        return ridge

    segments = _segments(samples, np.arange(count) * cfg.hop, cfg)
    n = np.arange(cfg.window_len) - 0.5 * (cfg.window_len - 1)
    bin_width = 2.0 * np.pi / cfg.n_fft
    start = (depth + cfg.dc_exclusion_rows) * bin_width
    omega = start.copy()
    for _ in range(steps):
        terms = segments * np.exp(-1j * np.outer(omega, n))
        x0 = terms.sum(axis=1)
        x1 = (terms * (-1j * n)).sum(axis=1)
        x2 = (terms * -(n ** 2)).sum(axis=1)
        slope = 2.0 * np.real(np.conj(x0) * x1)
        curvature = 2.0 * (np.abs(x1) ** 2 + np.real(np.conj(x0) * x2))
        step = np.zeros_like(omega)
        np.divide(-slope, curvature, out=step, where=curvature < 0)
        omega = omega + np.clip(step, -0.5 * bin_width, 0.5 * bin_width)
        omega = np.clip(omega, start - bin_width, start + bin_width)

    return Ridge(depth_at_k=omega / bin_width - cfg.dc_exclusion_rows, validity_mask=ridge.validity_mask)


def configured_ridge(tfa_map: TfaMap, samples: np.ndarray, cfg: StftConfig) -> Ridge:
    """Cresta del mapa con los refinamientos que pide `cfg`"""
    ridge = extract_ridge(tfa_map, refine=cfg.subbin_ridge, mask_factor=cfg.ridge_mask_factor)
    return refine_ridge(ridge, samples, cfg)


def ridge_variance(ridge: Ridge) -> float:
    """Varianza muestral (divisor n − 1) de la cresta en columnas válidas, en bins²"""
    values = np.asarray(ridge.depth_at_k)[np.asarray(ridge.validity_mask, dtype=bool)]
    if values.size < 2:
        raise TooFewValidColumnsError(
            f"Se requieren al menos 2 columnas válidas (hay {values.size})"
        )
    return float(np.var(values, ddof=1))

"""
Simulador del interferograma espectral SD-OCT.

Modelo directo:
    I(k) = S(k) · Σ √(R_R·R_Sn) · cos(2k·z_n + ΔΦ(k)) + fondo + ruido

con constantes del detector iguales a 1. ΔΦ(k) es la dispersión inyectada,
con el mismo signo que usa la corrección, de modo que corregir con el mismo
modelo la cancela. Sirve como oráculo para toda la cadena.
"""

import math
from typing import List, Sequence, Tuple, Union

import numpy as np

from models import (
    DepthOutOfRangeError,
    DispersionModel,
    GridWarp,
    KGrid,
    Reflector,
    ReflectorSet,
    ReferenceSpectrum,
    SimScenario,
    SourceSpec,
    SpectralFringe,
    Stage,
)

Seed = Union[int, Sequence[int]]


def transform_limited_fwhm(source: SourceSpec) -> float:
    """Longitud de coherencia de una fuente gaussiana: (2 ln2/π)·λ0²/Δλ"""
    return (2.0 * math.log(2.0) / math.pi) * source.center_wavelength ** 2 / source.bandwidth_fwhm


def source_spectrum(source: SourceSpec, k: np.ndarray) -> np.ndarray:
    """S(k) gaussiana; vale 1/2 en k = 2π/(λ0 ± Δλ/2)"""
    k = np.asarray(k, dtype=float)
    return np.exp(-4.0 * math.log(2.0) * ((k - source.k_center) / source.k_fwhm) ** 2)


def spectrometer_grid(
    source: SourceSpec,
    n: int = 2048,
    span_factor: float = 1.0,
    warp: GridWarp = GridWarp(),
    descending: bool = False,
) -> KGrid:
    """Mapa píxel → k del espectrómetro simulado, opcionalmente deformado"""
    span = span_factor * source.k_fwhm
    k_min = source.k_center - span / 2.0
    u = np.linspace(0.0, 1.0, n)
    if warp.kind == "quadratic":
        u = u + warp.strength * u * (1.0 - u)
    k = k_min + span * u
    if descending:
        k = k[::-1]
    return KGrid.from_wavenumbers(k)


def scenario_grid(s: SimScenario) -> KGrid:
    return spectrometer_grid(s.source, s.n, s.span_factor, s.grid_warp, s.descending_k)


def max_depth(s: SimScenario) -> float:
    """Rango sin ambigüedad N·π/(2·Δk_total) del escenario"""
    return spectrometer_grid(s.source, s.n, s.span_factor).max_depth


def with_depth(s: SimScenario, depth: float, reflectivity: float = 1.0) -> SimScenario:
    """Copia del escenario con un único reflector (espejo) en `depth`"""
    reflectors = ReflectorSet(
        reflectors=[Reflector(depth=depth, reflectivity=reflectivity)],
        reference_reflectivity=s.reflectors.reference_reflectivity,
    )
    return s.model_copy(update={"reflectors": reflectors})


def noise_sigma_for_snr(s: SimScenario, snr_db: float) -> float:
    """σ tal que la amplitud pico del término de interferencia quede snr_db sobre el ruido"""
    r_ref = s.reflectors.reference_reflectivity
    amplitude = max(math.sqrt(r_ref * r.reflectivity) for r in s.reflectors.reflectors)
    return amplitude / 10.0 ** (snr_db / 20.0)


def generate_fringe(s: SimScenario, seed: Seed = 0) -> Tuple[SpectralFringe, ReferenceSpectrum, KGrid]:
    """
    Genera el interferograma crudo, el espectro de referencia y el mapa k.

    El ruido se extrae de `np.random.default_rng(seed)`, por lo que el
    mismo (escenario, semilla) produce exactamente el mismo resultado.
    """
    grid = scenario_grid(s)
    z_max = grid.max_depth
    for reflector in s.reflectors.reflectors:
        if abs(reflector.depth) > z_max:
            raise DepthOutOfRangeError(
                f"Profundidad {reflector.depth * 1e3:.3f} mm fuera del rango ±{z_max * 1e3:.3f} mm"
            )

    k = grid.k
    power = source_spectrum(s.source, k)
    injected = DispersionModel(a2=s.injected.a2, a3=s.injected.a3, k0=grid.k0)
    kappa = k - injected.k0
    dphi = -injected.a2 * kappa ** 2 - injected.a3 * kappa ** 3

    r_ref = s.reflectors.reference_reflectivity
    interference = np.zeros(s.n)
    for reflector in s.reflectors.reflectors:
        term = math.sqrt(r_ref * reflector.reflectivity) * np.cos(2.0 * k * reflector.depth + dphi)
        if s.pixel_integration:
            term = term * np.sinc(reflector.depth * grid.dk / np.pi)
        interference += term

    total_reflectivity = r_ref + sum(r.reflectivity for r in s.reflectors.reflectors)
    background = power * total_reflectivity / 2.0 if s.dc_background else np.zeros(s.n)

    samples = power * interference + background
    if s.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.normal(0.0, s.noise_sigma, s.n)

    fringe = SpectralFringe(samples=samples, stage=Stage.RAW, grid=grid)
    return fringe, ReferenceSpectrum(background=background, source_power=power), grid


def layered_phantom(base: SimScenario, n_ascans: int = 64) -> List[SimScenario]:
    """
    Escenarios de un B-scan sintético: tres capas paralelas levemente
    curvadas, con reflectividades fijas para que el fondo sea común.
    """
    z_max = max_depth(base)
    x = np.linspace(-1.0, 1.0, n_ascans)
    sag = 0.05 * z_max * x ** 2
    layers = [(0.25 * z_max, 0.20), (0.40 * z_max, 0.05), (0.60 * z_max, 0.10)]

    scenarios = []
    for offset in sag:
        reflectors = [Reflector(depth=float(depth + offset), reflectivity=r) for depth, r in layers]
        scenarios.append(base.model_copy(update={
            "reflectors": ReflectorSet(
                reflectors=reflectors,
                reference_reflectivity=base.reflectors.reference_reflectivity,
            )
        }))
    return scenarios


def generate_bscan_fringes(
    scenarios: Sequence[SimScenario],
    seed: int = 0,
    frame: int = 0,
) -> Tuple[List[SpectralFringe], ReferenceSpectrum, KGrid]:
    """Un interferograma por A-scan; semilla derivada de (seed, frame, índice)"""
    fringes = []
    ref, grid = None, None
    for index, scenario in enumerate(scenarios):
        fringe, ref_i, grid_i = generate_fringe(scenario, seed=[seed, frame, index])
        if ref is None:
            ref, grid = ref_i, grid_i
        fringes.append(fringe)
    return fringes, ref, grid

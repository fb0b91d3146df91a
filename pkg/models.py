from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import List, Optional, Tuple, Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator


# Tolerancia relativa para considerar una grilla k equiespaciada
LINEAR_GRID_RTOL = 1e-9
MIN_SAMPLES = 64


# ---------------------------------------------------------------------------
# Errores
# ---------------------------------------------------------------------------

class OctDispError(ValueError):
    """Error base del procesamiento de interferogramas"""


class LengthMismatchError(OctDispError):
    pass


class NonFiniteInputError(OctDispError):
    pass


class DegenerateReferenceError(OctDispError):
    pass


class NonMonotoneGridError(OctDispError):
    pass


class StageError(OctDispError):
    """La etapa del interferograma no corresponde a la operación"""


class InvalidWindowParamsError(OctDispError):
    pass


class EmptyMapError(OctDispError):
    pass


class TooFewValidColumnsError(OctDispError):
    pass


class NonLinearGridError(OctDispError):
    pass


class GridMismatchError(OctDispError):
    pass


class NoDominantPeakError(OctDispError):
    pass


class DepthOutOfRangeError(OctDispError):
    pass


class DimensionMismatchError(OctDispError):
    pass


class TooFewValuesError(OctDispError):
    pass


class FormatError(OctDispError):
    """Archivo binario o JSON con formato inválido"""


# ---------------------------------------------------------------------------
# Enumeraciones
# ---------------------------------------------------------------------------

class Stage(IntEnum):
    """Etapas del pipeline; el valor es el código que se guarda en OCTF"""
    RAW = 0
    BACKGROUND_SUBTRACTED = 1
    NORMALIZED = 2
    RESAMPLED = 3
    WINDOWED = 4


class WindowKind(str, Enum):
    HANN = "hann"
    RECTANGULAR = "rectangular"


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Tipos de señal (arreglos inmutables)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KGrid:
    """Mapa píxel → número de onda angular (rad/m)"""
    k: np.ndarray
    k0: float
    is_linear: bool

    @classmethod
    def from_wavenumbers(cls, k) -> "KGrid":
        k = _frozen(k)
        if k.ndim != 1 or k.size < 2:
            raise NonMonotoneGridError("La grilla k debe ser un vector de al menos 2 muestras")
        if not np.all(np.isfinite(k)):
            raise NonFiniteInputError("La grilla k contiene valores no finitos")
        steps = np.diff(k)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise NonMonotoneGridError("La grilla k no es estrictamente monótona")

        mean_step = (k[-1] - k[0]) / (k.size - 1)
        is_linear = bool(np.all(np.abs(steps - mean_step) <= LINEAR_GRID_RTOL * abs(mean_step)))
        # k0: muestra N/2 de la grilla linealizada
        k0 = float(np.linspace(k.min(), k.max(), k.size)[k.size // 2])
        return cls(k=k, k0=k0, is_linear=is_linear)

    @classmethod
    def linear(cls, k_min: float, k_max: float, n: int) -> "KGrid":
        return cls.from_wavenumbers(np.linspace(k_min, k_max, n))

    @property
    def n(self) -> int:
        return int(self.k.size)

    @property
    def ascending(self) -> bool:
        return bool(self.k[-1] > self.k[0])

    @property
    def dk(self) -> float:
        """Paso medio de la grilla linealizada"""
        return float((self.k.max() - self.k.min()) / (self.n - 1))

    @property
    def bandwidth(self) -> float:
        """Δk_total = N·δk"""
        return self.n * self.dk

    @property
    def depth_step(self) -> float:
        """δz = π/Δk_total por bin de FFT (sin relleno)"""
        return float(np.pi / self.bandwidth)

    @property
    def max_depth(self) -> float:
        """Rango sin ambigüedad N·π/(2·Δk_total)"""
        return float(self.n * np.pi / (2.0 * self.bandwidth))

    def same_as(self, other: "KGrid") -> bool:
        return self.n == other.n and bool(np.array_equal(self.k, other.k))


@dataclass(frozen=True, eq=False)
class SpectralFringe:
    """Interferograma espectral real I(k) con su grilla y etapa"""
    samples: np.ndarray
    stage: Stage
    grid: KGrid

    def __post_init__(self):
        samples = _frozen(self.samples)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "stage", Stage(self.stage))
        if samples.ndim != 1 or samples.size < MIN_SAMPLES:
            raise LengthMismatchError(f"Se requieren al menos {MIN_SAMPLES} muestras (hay {samples.size})")
        if samples.size != self.grid.n:
            raise LengthMismatchError(
                f"Muestras ({samples.size}) y grilla ({self.grid.n}) con largos distintos"
            )
        if not np.all(np.isfinite(samples)):
            raise NonFiniteInputError("El interferograma contiene valores no finitos")

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def advance(self, samples, stage: Stage, grid: Optional[KGrid] = None) -> "SpectralFringe":
        """Nueva instancia en la etapa siguiente (nunca retrocede)"""
        if stage <= self.stage:
            raise StageError(f"Transición inválida {self.stage.name} → {Stage(stage).name}")
        return SpectralFringe(samples=samples, stage=stage, grid=grid or self.grid)


@dataclass(frozen=True, eq=False)
class ReferenceSpectrum:
    """Fondo (brazo de referencia) y potencia espectral de la fuente S(k)"""
    background: np.ndarray
    source_power: np.ndarray

    def __post_init__(self):
        background = _frozen(self.background)
        source_power = _frozen(self.source_power)
        if background.shape != source_power.shape:
            raise LengthMismatchError("Fondo y potencia de fuente con largos distintos")
        if not (np.all(np.isfinite(background)) and np.all(np.isfinite(source_power))):
            raise NonFiniteInputError("El espectro de referencia contiene valores no finitos")
        object.__setattr__(self, "background", background)
        object.__setattr__(self, "source_power", source_power)

    @property
    def n(self) -> int:
        return int(self.background.size)


@dataclass(frozen=True, eq=False)
class ComplexFringe:
    """Señal analítica sobre la que se aplica e^{-iΔΦ(k)}"""
    samples: np.ndarray
    grid: KGrid

    def __post_init__(self):
        samples = _frozen(self.samples, dtype=complex)
        if samples.size != self.grid.n:
            raise LengthMismatchError("Señal compleja y grilla con largos distintos")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteInputError("La señal compleja contiene valores no finitos")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True, eq=False)
class TfaMap:
    """Distribución de energía STFT: filas = bins de profundidad, columnas = k evaluados"""
    energy: np.ndarray
    k_centers: np.ndarray
    depth_bins: np.ndarray  # metros
    dc_rows: int = 0

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.energy.shape)

    @property
    def k_eval(self) -> int:
        return int(self.energy.shape[1]) if self.energy.ndim == 2 else 0


@dataclass(frozen=True, eq=False)
class Ridge:
    """Fila de máxima energía por columna (unidades de bin, puede ser fraccional)"""
    depth_at_k: np.ndarray
    validity_mask: np.ndarray

    @property
    def coverage(self) -> float:
        if self.validity_mask.size == 0:
            return 0.0
        return float(np.mean(self.validity_mask))


@dataclass(frozen=True)
class DispersionModel:
    """Coeficientes a2 (m²/rad) y a3 (m³/rad²) alrededor de k0 (rad/m)"""
    a2: float
    a3: float
    k0: float

    def __post_init__(self):
        if not all(np.isfinite([self.a2, self.a3, self.k0])):
            raise NonFiniteInputError("Coeficientes de dispersión no finitos")
        if self.k0 <= 0:
            raise OctDispError("k0 debe ser positivo")


@dataclass(frozen=True, eq=False)
class PhaseCorrection:
    """Vector ΔΦ(k) de N píxeles (radianes)"""
    dphi: np.ndarray
    grid: KGrid

    def __post_init__(self):
        dphi = _frozen(self.dphi)
        if dphi.size != self.grid.n:
            raise LengthMismatchError("Vector de fase y grilla con largos distintos")
        if not np.all(np.isfinite(dphi)):
            raise NonFiniteInputError("Vector de fase con valores no finitos")
        object.__setattr__(self, "dphi", dphi)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Salida del lazo iterativo: coeficientes óptimos, ΔΦ y traza del objetivo"""
    model: DispersionModel
    phase: PhaseCorrection
    objective_trace: List[Tuple[int, float]]
    v_initial: float
    v_final: float
    evaluations: int
    iterations: int = 0
    converged: bool = True
    order: int = 2


@dataclass(frozen=True, eq=False)
class AScan:
    """Perfil en profundidad (mitad de frecuencias positivas)"""
    profile: np.ndarray
    depth_step: float  # metros por bin (ya con relleno)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.profile)

    @property
    def magnitude_db(self) -> np.ndarray:
        mag = self.magnitude
        peak = mag.max() if mag.size else 0.0
        if peak <= 0:
            return np.full(mag.shape, 20.0 * np.log10(np.finfo(float).tiny))
        return 20.0 * np.log10(np.maximum(mag / peak, np.finfo(float).tiny))

    @property
    def depth_axis(self) -> np.ndarray:
        return np.arange(self.profile.size) * self.depth_step


@dataclass(frozen=True)
class PsfMetrics:
    peak_bin: float
    peak_depth: float
    fwhm: float
    peak_db: float


@dataclass(frozen=True, eq=False)
class BScan:
    """Imagen de magnitud lineal: A-scans × profundidad"""
    image: np.ndarray
    depth_step: float
    scan_axis: str = "x"
    averaging_count: int = 1

    def __post_init__(self):
        image = _frozen(self.image)
        if image.ndim != 2:
            raise DimensionMismatchError("Un B-scan debe ser una matriz 2-D")
        if not np.all(np.isfinite(image)):
            raise NonFiniteInputError("El B-scan contiene valores no finitos")
        object.__setattr__(self, "image", image)

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.image.shape)


# ---------------------------------------------------------------------------
# Configuración (pydantic)
# ---------------------------------------------------------------------------

class StftConfig(BaseModel):
    """Parámetros de la STFT: M, L, ventana, largo de FFT y filas DC excluidas"""
    window_len: int = Field(default=1024, description="M: largo de la ventana deslizante (muestras)")
    overlap_len: int = Field(default=1013, description="L: solapamiento entre ventanas consecutivas")
    window: WindowKind = Field(default=WindowKind.HANN)
    fft_len: Optional[int] = Field(default=None, description="Largo de FFT por segmento (None = M)")
    dc_exclusion_rows: int = Field(default=50, description="Filas de profundidad descartadas junto a DC")
    subbin_ridge: bool = Field(default=False, description="Refinar la cresta con parábola sobre log-magnitud")
    ridge_newton_steps: int = Field(default=0, ge=0, description="Pasos de Newton sobre la DTFT continua de cada segmento (0 = sin refinar)")
    ridge_mask_factor: float = Field(default=10.0, gt=0, description="Umbral pico/mediana para columnas válidas")
    workers: Optional[int] = Field(default=None, description="Hilos para scipy.fft")

    @model_validator(mode="after")
    def _check_window(self):
        if not (0 <= self.overlap_len < self.window_len):
            raise ValueError(f"Se requiere 0 ≤ L < M (L={self.overlap_len}, M={self.window_len})")
        if self.fft_len is not None and self.fft_len < self.window_len:
            raise ValueError("fft_len no puede ser menor que el largo de ventana")
        if not (0 <= self.dc_exclusion_rows < self.n_fft // 2):
            raise ValueError("dc_exclusion_rows debe ser menor que fft_len/2")
        return self

    @property
    def n_fft(self) -> int:
        return self.fft_len or self.window_len

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap_len


class OptimizerOptions(BaseModel):
    """Opciones del simplex de Nelder–Mead"""
    order: Literal[2, 3] = Field(default=2, description="2: solo a2; 3: a2 y a3")
    initial_step_a2: float = Field(default=1e-12, gt=0, description="Paso inicial del simplex en a2 (m²/rad)")
    initial_step_a3: float = Field(default=1e-18, gt=0, description="Paso inicial del simplex en a3 (m³/rad²)")
    xtol_rel: float = Field(default=1e-4, gt=0)
    ftol_rel: float = Field(default=1e-4, gt=0)
    max_iterations: int = Field(default=400, gt=0)
    nonconvergence_diameter: float = Field(default=1e-2, gt=0)
    min_mask_coverage: float = Field(default=0.5, ge=0, le=1)


class SourceSpec(BaseModel):
    """Fuente gaussiana (por defecto 850 nm / 165 nm a 3 dB)"""
    center_wavelength: float = Field(default=850e-9, gt=0, description="λ0 (m)")
    bandwidth_fwhm: float = Field(default=165e-9, gt=0, description="Δλ a media potencia (m)")
    shape: Literal["gaussian"] = "gaussian"

    @model_validator(mode="after")
    def _check_band(self):
        if self.bandwidth_fwhm >= self.center_wavelength:
            raise ValueError("El ancho de banda debe ser menor que la longitud de onda central")
        return self

    @property
    def k_low(self) -> float:
        return 2.0 * np.pi / (self.center_wavelength + self.bandwidth_fwhm / 2.0)

    @property
    def k_high(self) -> float:
        return 2.0 * np.pi / (self.center_wavelength - self.bandwidth_fwhm / 2.0)

    @property
    def k_center(self) -> float:
        return 0.5 * (self.k_low + self.k_high)

    @property
    def k_fwhm(self) -> float:
        return self.k_high - self.k_low


class Reflector(BaseModel):
    depth: float = Field(description="Profundidad z (m); negativa = lado conjugado")
    reflectivity: float = Field(default=1.0, ge=0, le=1, description="R_Sn")


class ReflectorSet(BaseModel):
    reflectors: List[Reflector] = Field(min_length=1)
    reference_reflectivity: float = Field(default=1.0, gt=0, le=1, description="R_R")

    @field_validator("reflectors")
    @classmethod
    def _distinct_depths(cls, value: List[Reflector]) -> List[Reflector]:
        depths = [r.depth for r in value]
        if len(set(depths)) != len(depths):
            raise ValueError("Las profundidades de los reflectores deben ser distintas")
        return value


class GridWarp(BaseModel):
    kind: Literal["none", "quadratic"] = "none"
    strength: float = Field(default=0.0, gt=-1, lt=1)


class DispersionCoefficients(BaseModel):
    a2: float = 0.0
    a3: float = 0.0


class SimScenario(BaseModel):
    """Escenario del simulador (esquema documentado en docs/derivations.md)"""
    source: SourceSpec = Field(default_factory=SourceSpec)
    reflectors: ReflectorSet
    injected: DispersionCoefficients = Field(default_factory=DispersionCoefficients)
    grid_warp: GridWarp = Field(default_factory=GridWarp)
    noise_sigma: float = Field(default=0.0, ge=0, description="σ del ruido blanco aditivo")
    n: int = Field(default=2048, ge=MIN_SAMPLES)
    dc_background: bool = True
    span_factor: float = Field(default=1.0, gt=0, description="Rango espectral en unidades de Δk a media potencia")
    pixel_integration: bool = Field(default=False, description="Caída sinc por integración en el píxel")
    descending_k: bool = Field(default=False, description="k decreciente con el índice de píxel")


class DepthMeasurement(BaseModel):
    """Fila de las tablas de resolución y caída de sensibilidad"""
    depth: float = Field(description="Profundidad nominal del reflector (m)")
    fwhm: float = Field(description="Ancho a media altura de la PSF (m)")
    peak_db: float = Field(description="Altura del pico (dB)")
    peak_depth: float = Field(description="Profundidad medida del pico (m)")


class RepeatabilityStats(BaseModel):
    mean: float
    stddev: float
    cv: float = Field(description="stddev/mean con signo")
    count: int


class ResolutionRow(BaseModel):
    """Resolución axial por profundidad: compensada, sin compensar, manual y referencia sin dispersión"""
    depth: float
    fwhm_compensated: float
    fwhm_uncompensated: float
    fwhm_manual: float
    fwhm_reference: float


class RolloffRow(BaseModel):
    depth: float
    peak_db: float
    expected_db: float


class AcceptanceCheck(BaseModel):
    id: int
    name: str
    passed: bool
    detail: str


class ReproductionReport(BaseModel):
    """Resumen determinista de la reproducción sintética (sin marcas de tiempo)"""
    seed: int
    k_eval: int
    injected_a2: float
    calibrated_a2: float
    calibrated_a3: float
    v_initial: float
    v_final: float
    evaluations: int
    transform_limit: float
    repeatability_values: List[float]
    repeatability: RepeatabilityStats
    resolution: List[ResolutionRow]
    rolloff: List[RolloffRow]
    checks: List[AcceptanceCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# ---------------------------------------------------------------------------
# Registros y configuración de la herramienta
# ---------------------------------------------------------------------------

class CalibrationRecord(BaseModel):
    """Registro JSON de calibración; dphi en base64 float64 little-endian"""
    version: int = 1
    n: int
    k0: float
    a2: float
    a3: float
    dphi: str
    v_initial: float
    v_final: float
    evaluations: int
    created_utc: str
    order: int = 2
    converged: bool = True


class SignalSection(BaseModel):
    n: int = 2048
    clamp_epsilon: float = Field(default=1e-3, gt=0, lt=1)
    window: WindowKind = WindowKind.HANN


class TfaSection(BaseModel):
    window_len: int = 1024
    overlap_len: int = 1013
    fft_len: Optional[int] = 2048
    dc_rows: int = 50
    subbin_ridge: bool = True
    ridge_newton_steps: int = Field(default=3, ge=0)
    ridge_mask_factor: float = 10.0
    workers: Optional[int] = None


class ReconstructionSection(BaseModel):
    pad_factor: int = Field(default=4, ge=1)
    min_peak_prominence_db: float = 20.0
    db_floor: float = -60.0
    db_ceiling: float = 0.0
    workers: int = Field(default=4, ge=1)


class ReproduceSection(BaseModel):
    fringes: int = Field(default=10, ge=2)
    snr_db: float = 40.0
    calibration_depth: float = 200e-6
    injected_a2: float = -4.118e-11
    injected_a3: float = 0.0
    calibration_warp: float = 0.05
    depths: List[float] = Field(default_factory=lambda: [0.3e-3, 0.5e-3, 1.0e-3, 1.5e-3, 2.0e-3])
    bscan_ascans: int = 64
    bscan_frames: int = 11
    manual_detune: float = 0.9


class PathsSection(BaseModel):
    output_dir: str = "output"


class ToolConfig(BaseModel):
    """Configuración del sistema (config.json)"""
    signal: SignalSection = Field(default_factory=SignalSection)
    tfa: TfaSection = Field(default_factory=TfaSection)
    optimizer: OptimizerOptions = Field(default_factory=OptimizerOptions)
    reconstruction: ReconstructionSection = Field(default_factory=ReconstructionSection)
    reproduce: ReproduceSection = Field(default_factory=ReproduceSection)
    paths: PathsSection = Field(default_factory=PathsSection)
    seed: int = 7
    verbose: bool = True

    @model_validator(mode="after")
    def _check_stft(self):
        try:
            cfg = self.stft_config()
        except ValidationError as e:
            raise ValueError(f"Sección tfa inválida: {e.errors()[0]['msg']}") from None
        if cfg.window_len > self.signal.n:
            raise ValueError(f"La ventana ({cfg.window_len}) excede N ({self.signal.n})")
        return self

    def stft_config(self) -> StftConfig:
        return StftConfig(
            window_len=self.tfa.window_len,
            overlap_len=self.tfa.overlap_len,
            fft_len=self.tfa.fft_len,
            dc_exclusion_rows=self.tfa.dc_rows,
            subbin_ridge=self.tfa.subbin_ridge,
            ridge_newton_steps=self.tfa.ridge_newton_steps,
            ridge_mask_factor=self.tfa.ridge_mask_factor,
            workers=self.tfa.workers,
        )


def load_config(config_path: str = "config.json") -> ToolConfig:
    """Carga config.json; si no existe se usan los valores por defecto"""
    path = Path(config_path)
    if not path.exists():
        print(f"  ⚠️  No se encontró {config_path}, usando configuración por defecto")
        return ToolConfig()
    with open(path, 'r', encoding='utf-8') as f:
        config_data = json.load(f)
    return ToolConfig(**config_data)

"""
Modelo de corrección de fase y calibración de dispersión sistemática.

La calibración busca (a2, a3) que minimizan la varianza de la cresta STFT
de un interferograma de espejo, con un simplex de Nelder–Mead que parte de
(0, 0). El vector ΔΦ(k) resultante se guarda y se aplica a cualquier otra
medición del mismo sistema.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from models import (
    CalibrationResult,
    ComplexFringe,
    DispersionModel,
    GridMismatchError,
    KGrid,
    NoDominantPeakError,
    NonLinearGridError,
    OptimizerOptions,
    PhaseCorrection,
    ReferenceSpectrum,
    Ridge,
    SpectralFringe,
    Stage,
    StageError,
    StftConfig,
    TooFewValidColumnsError,
    ToolConfig,
    WindowKind,
    load_config,
)
from preprocessing import (
    apply_window,
    normalize_to_reference,
    resample_to_linear_k,
    subtract_background,
    to_analytic,
)
from tfa import configured_ridge, ridge_variance, stft

# Piso del objetivo (bin²) para la tolerancia relativa del simplex
OBJECTIVE_FLOOR = 1e-12


def phase_correction(model: DispersionModel, grid: KGrid) -> PhaseCorrection:
    """ΔΦ(k) = −a2·(k − k0)² − a3·(k − k0)³ sobre una grilla lineal"""
    if not grid.is_linear:
        raise NonLinearGridError("La corrección de fase requiere una grilla k lineal")
    kappa = grid.k - model.k0
    dphi = -model.a2 * kappa ** 2 - model.a3 * kappa ** 3
    return PhaseCorrection(dphi=dphi, grid=grid)


def apply_correction(fringe: ComplexFringe, phase: PhaseCorrection) -> ComplexFringe:
    """Multiplica la señal analítica por e^{−iΔΦ(k)}"""
    if not fringe.grid.same_as(phase.grid):
        raise GridMismatchError("La corrección fue calculada sobre otra grilla k")
    return ComplexFringe(samples=fringe.samples * np.exp(-1j * phase.dphi), grid=fringe.grid)


class RidgeVarianceObjective:
    """
    V(a2, a3) sobre un interferograma remuestreado.

    La señal analítica ventaneada se calcula una sola vez; cada evaluación
    aplica la corrección, vuelve a la parte real y recorre STFT → cresta →
    varianza, igual que la reconstrucción.
    """

    def __init__(
        self,
        fringe: SpectralFringe,
        cfg: Optional[StftConfig] = None,
        window: WindowKind = WindowKind.HANN,
    ):
        if fringe.stage != Stage.RESAMPLED:
            raise StageError(f"El objetivo requiere etapa RESAMPLED (recibido {fringe.stage.name})")
        self.cfg = cfg or StftConfig()
        self.grid = fringe.grid
        self._analytic = to_analytic(apply_window(fringe, window))
        self.evaluations = 0

    def model(self, a2: float, a3: float = 0.0) -> DispersionModel:
        return DispersionModel(a2=float(a2), a3=float(a3), k0=self.grid.k0)

    def corrected(self, a2: float, a3: float = 0.0) -> SpectralFringe:
        phase = phase_correction(self.model(a2, a3), self.grid)
        analytic = apply_correction(self._analytic, phase)
        return SpectralFringe(samples=analytic.samples.real, stage=Stage.WINDOWED, grid=self.grid)

    def ridge(self, a2: float, a3: float = 0.0) -> Ridge:
        corrected = self.corrected(a2, a3)
        return configured_ridge(stft(corrected, self.cfg), corrected.samples, self.cfg)

    def __call__(self, a2: float, a3: float = 0.0) -> float:
        self.evaluations += 1
        return ridge_variance(self.ridge(a2, a3))


def objective(fringe: SpectralFringe, cfg: StftConfig, a2: float, a3: float = 0.0) -> float:
    return RidgeVarianceObjective(fringe, cfg)(a2, a3)


def calibrate(
    fringe: SpectralFringe,
    cfg: Optional[StftConfig] = None,
    opts: Optional[OptimizerOptions] = None,
) -> CalibrationResult:
    """
    Minimiza la varianza de la cresta con Nelder–Mead desde (0, 0).

    El simplex trabaja en unidades del paso inicial (1e-12 m²/rad para a2,
    1e-18 m³/rad² para a3). Si se alcanza el tope de iteraciones con el
    simplex todavía abierto, el resultado se devuelve con converged=False.
    """
    cfg = cfg or StftConfig()
    opts = opts or OptimizerOptions()
    target = RidgeVarianceObjective(fringe, cfg)

    start_ridge = target.ridge(0.0, 0.0)
    if start_ridge.coverage < opts.min_mask_coverage:
        raise NoDominantPeakError(
            f"Solo {start_ridge.coverage:.0%} de las columnas tienen un pico dominante"
        )
    v_initial = ridge_variance(start_ridge)
    target.evaluations += 1

    dims = 2 if opts.order == 3 else 1
    scales = np.array([opts.initial_step_a2, opts.initial_step_a3])[:dims]
    cache: Dict[Tuple[float, ...], float] = {(0.0,) * dims: v_initial}

    def coefficients(u: np.ndarray) -> Tuple[float, float]:
        values = np.asarray(u, dtype=float) * scales
        return float(values[0]), float(values[1]) if dims == 2 else 0.0

    def evaluate(u: np.ndarray) -> float:
        key = tuple(float(x) for x in u)
        if key not in cache:
            try:
                cache[key] = target(*coefficients(u))
            except TooFewValidColumnsError:
                cache[key] = np.inf
        return cache[key]

    trace: List[Tuple[int, float]] = [(0, v_initial)]

    def record(xk: np.ndarray) -> None:
        trace.append((len(trace), evaluate(xk)))

    # scipy compara la dispersión del simplex con un fatol absoluto: se
    # reanuda desde el simplex final mientras la dispersión supere
    # ftol_rel veces el mejor valor actual.
    start = np.zeros(dims)
    simplex = np.vstack([start, np.eye(dims)])
    best_value = v_initial
    iterations = 0
    while True:
        res = minimize(
            evaluate,
            simplex[0],
            method="Nelder-Mead",
            callback=record,
            options={
                "initial_simplex": simplex,
                "xatol": opts.xtol_rel,
                "fatol": opts.ftol_rel * max(best_value, OBJECTIVE_FLOOR),
                "maxiter": opts.max_iterations - iterations,
            },
        )
        iterations += int(res.nit)
        simplex, values = np.asarray(res.final_simplex[0]), np.asarray(res.final_simplex[1])
        best_value = float(values[0])
        spread = float(np.max(np.abs(values[1:] - values[0])))
        if iterations >= opts.max_iterations or spread <= opts.ftol_rel * max(best_value, OBJECTIVE_FLOOR):
            break

    best = np.asarray(simplex[0], dtype=float)
    v_final = best_value
    if not v_final <= v_initial:
        best, v_final = start, v_initial

    diameter = float(np.max(np.abs(simplex[1:] - simplex[0])))
    hit_cap = iterations >= opts.max_iterations
    converged = not (hit_cap and diameter > opts.nonconvergence_diameter * max(1.0, float(np.max(np.abs(best)))))

    a2, a3 = coefficients(best)
    model = target.model(a2, a3)
    return CalibrationResult(
        model=model,
        phase=phase_correction(model, target.grid),
        objective_trace=trace,
        v_initial=v_initial,
        v_final=v_final,
        evaluations=target.evaluations,
        iterations=iterations,
        converged=converged,
        order=opts.order,
    )


class DispersionCalibrator:
    """
    Orquesta la calibración a partir de un interferograma crudo de espejo:
    preprocesamiento (a)–(c), simplex y reporte por consola.
    """

    def __init__(self, config_path: str = "config.json", config: Optional[ToolConfig] = None):
        self.config = config if config is not None else load_config(config_path)
        self.verbose = self.config.verbose
        self.stft_config = self.config.stft_config()
        self.options = self.config.optimizer

    def prepare(self, fringe: SpectralFringe, ref: ReferenceSpectrum, grid: Optional[KGrid] = None) -> SpectralFringe:
        """Lleva un interferograma RAW a la etapa RESAMPLED"""
        subtracted = subtract_background(fringe, ref)
        normalized = normalize_to_reference(subtracted, ref, self.config.signal.clamp_epsilon)
        resampled, _ = resample_to_linear_k(normalized, grid)
        return resampled

    def calibrate_fringe(
        self,
        fringe: SpectralFringe,
        ref: ReferenceSpectrum,
        grid: Optional[KGrid] = None,
        order: Optional[int] = None,
        label: str = "interferograma",
    ) -> CalibrationResult:
        options = self.options if order is None else self.options.model_copy(update={"order": order})
        if self.verbose:
            print(f"📊 Calibrando {label} (orden {options.order}, "
                  f"M={self.stft_config.window_len}, L={self.stft_config.overlap_len})")

        result = calibrate(self.prepare(fringe, ref, grid), self.stft_config, options)

        if self.verbose:
            print(f"  → a2 = {result.model.a2:.4e} m²/rad, a3 = {result.model.a3:.4e} m³/rad²")
            print(f"  → V: {result.v_initial:.4g} → {result.v_final:.4g} bin² "
                  f"({result.evaluations} evaluaciones)")
            if result.converged:
                print(f"  ✓ Calibración convergida en {result.iterations} iteraciones")
            else:
                print(f"  ⚠️  Sin convergencia tras {result.iterations} iteraciones")
        return result

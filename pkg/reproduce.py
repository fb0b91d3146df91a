"""
Reproducción sintética de extremo a extremo.

Genera con el simulador los análogos de los mapas por etapa, la tabla de
repetibilidad, la resolución axial vs profundidad y la caída de
sensibilidad, y evalúa los criterios de aceptación. El reporte (texto y
JSON) no contiene marcas de tiempo: con la misma semilla es idéntico.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from file_formats import (
    atomic_write,
    save_pgm,
    write_calibration,
    write_ridge_csv,
    write_table_csv,
    write_tfa_csv,
    write_tfa_map,
)
from metrology import expected_rolloff_db, repeatability_stats, sensitivity_rolloff
from models import (
    AcceptanceCheck,
    AScan,
    BScan,
    CalibrationResult,
    DepthMeasurement,
    DispersionCoefficients,
    DispersionModel,
    GridWarp,
    PhaseCorrection,
    Reflector,
    ReflectorSet,
    ReproductionReport,
    ResolutionRow,
    RolloffRow,
    SimScenario,
    load_config,
)
from optimizer import DispersionCalibrator, RidgeVarianceObjective, apply_correction, calibrate, phase_correction
from plotting import plot_phase, plot_psf_db, plot_resolution, plot_rolloff
from preprocessing import apply_window, normalize_to_reference, resample_to_linear_k, subtract_background, to_analytic
from reconstruction import average_frames, bscan_to_image, measure_psf, reconstruct, reconstruct_bscan
from simulator import (
    generate_bscan_fringes,
    generate_fringe,
    layered_phantom,
    max_depth,
    noise_sigma_for_snr,
    transform_limited_fwhm,
    with_depth,
)
from tfa import configured_ridge, k_eval_count, spectrogram

# Repetibilidad publicada de a2 (m²/rad): compensación automática y ajuste manual
AUTO_RUNS_A2 = [-4.098e-11] * 5 + [-4.144e-11, -4.133e-11, -4.121e-11, -4.133e-11, -4.098e-11]
AUTO_RUNS_MEAN, AUTO_RUNS_CV = -4.118e-11, -0.0046
MANUAL_RUNS_A2 = [-4.657e-12] * 5 + [-3.725e-12] * 5
MANUAL_RUNS_MEAN, MANUAL_RUNS_CV = -4.191e-12, -0.1171

# Semiancho del tramo de profundidad graficado alrededor del espejo (m)
PSF_PLOT_HALF_SPAN = 150e-6


class SyntheticReproduction:
    """Orquesta la reproducción sintética completa y escribe el directorio de reporte"""

    def __init__(self, config_path: str = "config.json"):
        self.config = load_config(config_path)
        self.verbose = self.config.verbose
        self.settings = self.config.reproduce
        self.stft_config = self.config.stft_config()
        self.calibrator = DispersionCalibrator(config=self.config)

    def _log(self, message: str) -> None:
        if self.verbose:
            print(message)

    # ------------------------------------------------------------------
    # Escenarios
    # ------------------------------------------------------------------

    def base_scenario(self) -> SimScenario:
        """Espejo en la profundidad de calibración con la dispersión inyectada, sin deformación"""
        s = self.settings
        return SimScenario(
            reflectors=ReflectorSet(reflectors=[Reflector(depth=s.calibration_depth)]),
            injected=DispersionCoefficients(a2=s.injected_a2, a3=s.injected_a3),
            n=self.config.signal.n,
        )

    def calibration_scenario(self) -> SimScenario:
        warp = GridWarp(kind="quadratic", strength=self.settings.calibration_warp)
        return self.base_scenario().model_copy(update={"grid_warp": warp})

    # ------------------------------------------------------------------
    # Ejecución
    # ------------------------------------------------------------------

    def run(
        self,
        out_dir: Path,
        seed: Optional[int] = None,
        depths: Optional[Sequence[float]] = None,
        export_docx: bool = False,
        db_floor: Optional[float] = None,
        db_ceiling: Optional[float] = None,
    ) -> ReproductionReport:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        seed = self.config.seed if seed is None else seed
        depths = list(depths) if depths is not None else list(self.settings.depths)
        db_floor = self.config.reconstruction.db_floor if db_floor is None else db_floor
        db_ceiling = self.config.reconstruction.db_ceiling if db_ceiling is None else db_ceiling
        checks: List[AcceptanceCheck] = []

        self._log(f"🔬 Reproducción sintética (semilla {seed}) → {out_dir}")

        # 1. Número de ventanas
        k_eval = k_eval_count(self.config.signal.n, self.stft_config.window_len, self.stft_config.overlap_len)
        reference_count = k_eval_count(2048, 1024, 1013)
        checks.append(AcceptanceCheck(
            id=1, name="Número de ventanas STFT", passed=reference_count == 94,
            detail=f"K_eval(2048, 1024, 1013) = {reference_count}; configurado = {k_eval}",
        ))

        # 2. Recuperación del coeficiente sobre un espejo sin ruido
        injected = self.settings.injected_a2
        cal_scenario = self.calibration_scenario()
        fringe, ref, grid = generate_fringe(cal_scenario, seed)
        result = self.calibrator.calibrate_fringe(fringe, ref, grid, label="espejo sin ruido")
        write_calibration(out_dir / "calibration.json", result)
        error = abs(result.model.a2 - injected) / abs(injected)
        checks.append(AcceptanceCheck(
            id=2, name="Recuperación de a2", passed=error <= 0.01,
            detail=f"a2 = {result.model.a2:.5e} vs {injected:.5e} (error {error:.3%})",
        ))
        phase = result.phase

        self._render_stage_maps(out_dir / "tfa", fringe, ref, grid, result)
        self._render_compensation(out_dir, fringe, ref, grid, result)

        # 3. Repetibilidad con ruido
        values, collapse = self._repeatability(cal_scenario, seed)
        stats = repeatability_stats(values)
        write_table_csv(
            out_dir / "repeatability.csv",
            [{"measurement": i + 1, "a2": v} for i, v in enumerate(values)],
        )
        checks.append(AcceptanceCheck(
            id=3, name="Repetibilidad (|cv| < 2%)", passed=abs(stats.cv) < 0.02,
            detail=f"media {stats.mean:.5e}, desv. {stats.stddev:.3e}, cv {stats.cv:.5f}",
        ))

        # 4-5. Resolución vs profundidad
        resolution, series = self._resolution_sweep(depths, phase, result.model, seed)
        write_table_csv(out_dir / "resolution.csv", resolution)
        limit = transform_limited_fwhm(self.base_scenario().source)
        plot_resolution(out_dir / "resolution.svg", series, transform_limit=limit)

        compensated = [r.fwhm_compensated for r in resolution]
        within = all(r.fwhm_compensated <= 1.10 * r.fwhm_reference for r in resolution)
        spread = max(compensated) / min(compensated)
        checks.append(AcceptanceCheck(
            id=4, name="Independencia de la profundidad", passed=within and spread <= 1.5,
            detail=f"máx/mín = {spread:.3f}; compensada ≤ 1.10 × referencia: {'sí' if within else 'no'}",
        ))
        ratios = [r.fwhm_uncompensated / r.fwhm_reference for r in resolution]
        checks.append(AcceptanceCheck(
            id=5, name="Ensanchamiento sin compensar (> 3×)", passed=min(ratios) > 3.0,
            detail=(f"razón mínima {min(ratios):.2f} vs referencia, "
                    f"{min(r.fwhm_uncompensated for r in resolution) / limit:.2f} vs límite de transformada"),
        ))

        # 6. Colapso de la varianza
        collapse.insert(0, result.v_final / result.v_initial)
        checks.append(AcceptanceCheck(
            id=6, name="Colapso de la varianza (≤ 1%)", passed=max(collapse) <= 0.01,
            detail=f"máx V_final/V_inicial = {max(collapse):.2e}",
        ))

        # 7. Unitariedad e ida y vuelta
        checks.append(self._round_trip_check(fringe, ref, grid, phase, seed))

        # 8. Oráculos de metrología
        bscan_noise = self._render_bscan(out_dir, phase, seed, db_floor, db_ceiling)
        checks.append(self._metrology_check(bscan_noise, seed))

        # 9. Estadística de la repetibilidad publicada
        checks.append(self._table_check())

        # 10. Determinismo
        repeat_fringe, repeat_ref, repeat_grid = generate_fringe(self._noisy_scenario(cal_scenario), [seed, 0])
        repeat = calibrate(self.calibrator.prepare(repeat_fringe, repeat_ref, repeat_grid),
                           self.stft_config, self.config.optimizer)
        checks.append(AcceptanceCheck(
            id=10, name="Determinismo", passed=repeat.model.a2 == values[0],
            detail=f"recalibración de la medición 1: {repeat.model.a2!r} vs {values[0]!r}",
        ))

        # Caída de sensibilidad (informativa)
        rolloff = self._rolloff(depths, seed)
        write_table_csv(out_dir / "rolloff.csv", rolloff)
        plot_rolloff(
            out_dir / "rolloff.svg",
            [DepthMeasurement(depth=r.depth, fwhm=0.0, peak_db=r.peak_db, peak_depth=r.depth) for r in rolloff],
            [r.expected_db for r in rolloff],
        )

        report = ReproductionReport(
            seed=seed,
            k_eval=k_eval,
            injected_a2=injected,
            calibrated_a2=result.model.a2,
            calibrated_a3=result.model.a3,
            v_initial=result.v_initial,
            v_final=result.v_final,
            evaluations=result.evaluations,
            transform_limit=limit,
            repeatability_values=values,
            repeatability=stats,
            resolution=resolution,
            rolloff=rolloff,
            checks=checks,
        )
        atomic_write(out_dir / "report.json", report.model_dump_json(indent=2) + "\n")
        atomic_write(out_dir / "report.txt", format_report(report))
        self._log(f"💾 Reporte guardado en: {out_dir / 'report.txt'}")

        if export_docx:
            try:
                from docx_exporter import export_report_to_docx
                docx_path = export_report_to_docx(report, out_dir / "report.docx")
                self._log(f"📄 DOCX generado: {docx_path}")
            except ImportError as e:
                print(f"⚠️  No se pudo exportar a DOCX: {e}")

        status = "✓ Todas las verificaciones aprobadas" if report.passed else "❌ Hay verificaciones fallidas"
        self._log(status)
        return report

    # ------------------------------------------------------------------
    # Etapas
    # ------------------------------------------------------------------

    def _noisy_scenario(self, scenario: SimScenario) -> SimScenario:
        sigma = noise_sigma_for_snr(scenario, self.settings.snr_db)
        return scenario.model_copy(update={"noise_sigma": sigma})

    def _repeatability(self, scenario: SimScenario, seed: int):
        noisy = self._noisy_scenario(scenario)
        self._log(f"📊 Repetibilidad: {self.settings.fringes} mediciones con SNR {self.settings.snr_db:g} dB")
        values, collapse = [], []
        verbose = self.calibrator.verbose
        self.calibrator.verbose = False
        try:
            for i in range(self.settings.fringes):
                fringe, ref, grid = generate_fringe(noisy, [seed, i])
                result = self.calibrator.calibrate_fringe(fringe, ref, grid)
                values.append(result.model.a2)
                collapse.append(result.v_final / result.v_initial)
                self._log(f"  → medición {i + 1}: a2 = {result.model.a2:.5e}")
        finally:
            self.calibrator.verbose = verbose
        return values, collapse

    def _resolution_sweep(self, depths: Sequence[float], phase: PhaseCorrection, model: DispersionModel, seed: int):
        pad = self.config.reconstruction.pad_factor
        manual = phase_correction(
            DispersionModel(a2=model.a2 * self.settings.manual_detune, a3=model.a3, k0=model.k0),
            phase.grid,
        )
        base = self.base_scenario()
        clean = base.model_copy(update={"injected": DispersionCoefficients()})
        self._log(f"📏 Resolución axial en {len(depths)} profundidades")

        rows: List[ResolutionRow] = []
        series: Dict[str, List[DepthMeasurement]] = {
            "compensada": [], "sin compensar": [], "manual": [], "sin dispersión": [],
        }
        for depth in depths:
            fringe, ref, grid = generate_fringe(with_depth(base, depth), seed)
            clean_fringe, clean_ref, clean_grid = generate_fringe(with_depth(clean, depth), seed)
            metrics = {
                "compensada": measure_psf(reconstruct(fringe, ref, grid, phase, pad_factor=pad)),
                "sin compensar": measure_psf(reconstruct(fringe, ref, grid, pad_factor=pad)),
                "manual": measure_psf(reconstruct(fringe, ref, grid, manual, pad_factor=pad)),
                "sin dispersión": measure_psf(reconstruct(clean_fringe, clean_ref, clean_grid, pad_factor=pad)),
            }
            for label, m in metrics.items():
                series[label].append(DepthMeasurement(depth=depth, fwhm=m.fwhm, peak_db=m.peak_db, peak_depth=m.peak_depth))
            rows.append(ResolutionRow(
                depth=depth,
                fwhm_compensated=metrics["compensada"].fwhm,
                fwhm_uncompensated=metrics["sin compensar"].fwhm,
                fwhm_manual=metrics["manual"].fwhm,
                fwhm_reference=metrics["sin dispersión"].fwhm,
            ))
            self._log(f"  → {depth * 1e3:.2f} mm: {metrics['compensada'].fwhm * 1e6:.2f} µm compensada, "
                      f"{metrics['sin compensar'].fwhm * 1e6:.2f} µm sin compensar")
        return rows, series

    def _round_trip_check(self, fringe, ref, grid, phase: PhaseCorrection, seed: int) -> AcceptanceCheck:
        analytic = to_analytic(apply_window(self.calibrator.prepare(fringe, ref, grid)))
        inverse = PhaseCorrection(dphi=-phase.dphi, grid=phase.grid)
        restored = apply_correction(apply_correction(analytic, phase), inverse)
        unitarity = float(np.max(np.abs(restored.samples - analytic.samples)) / np.max(np.abs(analytic.samples)))

        base = self.base_scenario()
        dispersed, d_ref, d_grid = generate_fringe(base, seed)
        clean = base.model_copy(update={"injected": DispersionCoefficients()})
        clean_fringe, c_ref, c_grid = generate_fringe(clean, seed)
        injected_phase = phase_correction(
            DispersionModel(a2=base.injected.a2, a3=base.injected.a3, k0=phase.grid.k0), phase.grid
        )
        pad = self.config.reconstruction.pad_factor
        corrected = measure_psf(reconstruct(dispersed, d_ref, d_grid, injected_phase, pad_factor=pad)).fwhm
        reference = measure_psf(reconstruct(clean_fringe, c_ref, c_grid, pad_factor=pad)).fwhm
        deviation = abs(corrected - reference) / reference
        return AcceptanceCheck(
            id=7, name="Unitariedad e ida y vuelta",
            passed=unitarity <= 1e-12 and deviation <= 0.05,
            detail=f"error relativo {unitarity:.1e}; FWHM corregida/referencia − 1 = {deviation:.2%}",
        )

    def _metrology_check(self, bscan: BScan, seed: int) -> AcceptanceCheck:
        sigma_bins = 7.3
        x = np.arange(256, dtype=float)
        gaussian = AScan(profile=np.exp(-0.5 * ((x - 100.4) / sigma_bins) ** 2), depth_step=1.0)
        expected = 2.0 * math.sqrt(2.0 * math.log(2.0)) * sigma_bins
        fwhm_error = abs(measure_psf(gaussian).fwhm - expected) / expected

        rng = np.random.default_rng([seed, 8])
        sigma = 0.05 * float(bscan.image.max())
        frames = [
            BScan(image=bscan.image + rng.normal(0.0, sigma, bscan.shape), depth_step=bscan.depth_step)
            for _ in range(11)
        ]
        residual = float(np.std(average_frames(frames).image - bscan.image))
        noise_ratio = residual / (sigma / math.sqrt(11))
        return AcceptanceCheck(
            id=8, name="Oráculos de metrología",
            passed=fwhm_error <= 0.01 and abs(noise_ratio - 1.0) <= 0.10,
            detail=f"error FWHM gaussiana {fwhm_error:.3%}; ruido promediado / (σ/√11) = {noise_ratio:.3f}",
        )

    def _table_check(self) -> AcceptanceCheck:
        t1 = repeatability_stats(AUTO_RUNS_A2)
        t2 = repeatability_stats(MANUAL_RUNS_A2)
        passed = (
            abs(t1.mean - AUTO_RUNS_MEAN) <= 0.002 * abs(AUTO_RUNS_MEAN)
            and abs(t1.cv - AUTO_RUNS_CV) <= 5e-5
            and abs(t2.mean - MANUAL_RUNS_MEAN) <= 0.001 * abs(MANUAL_RUNS_MEAN)
            and abs(t2.cv - MANUAL_RUNS_CV) <= 2e-4
        )
        return AcceptanceCheck(
            id=9, name="Estadística de la repetibilidad publicada", passed=passed,
            detail=(f"automática: media {t1.mean:.4e}, cv {t1.cv:.4f}; "
                    f"manual: media {t2.mean:.4e}, cv {t2.cv:.4f}"),
        )

    def _rolloff(self, depths: Sequence[float], seed: int) -> List[RolloffRow]:
        base = self.base_scenario().model_copy(update={
            "injected": DispersionCoefficients(), "pixel_integration": True,
        })
        z_max = max_depth(base)
        rows = sensitivity_rolloff([with_depth(base, d) for d in depths], seed=seed,
                                   pad_factor=self.config.reconstruction.pad_factor)
        shallowest = min(depths, key=abs)
        offset = expected_rolloff_db(shallowest, z_max)
        return [
            RolloffRow(depth=r.depth, peak_db=r.peak_db, expected_db=expected_rolloff_db(r.depth, z_max) - offset)
            for r in rows
        ]

    def _render_stage_maps(self, tfa_dir: Path, fringe, ref, grid, result: CalibrationResult) -> None:
        """Mapas STFT de las etapas (a)–(e) con su cresta"""
        cfg = self.stft_config
        subtracted = subtract_background(fringe, ref)
        normalized = normalize_to_reference(subtracted, ref, self.config.signal.clamp_epsilon)
        resampled, _ = resample_to_linear_k(normalized, grid)
        windowed = apply_window(resampled)
        compensated = RidgeVarianceObjective(resampled, cfg).corrected(result.model.a2, result.model.a3)

        stages = {
            "a_background": subtracted,
            "b_normalized": normalized,
            "c_resampled": resampled,
            "d_windowed": windowed,
            "e_compensated": compensated,
        }
        for name, stage_fringe in stages.items():
            tfa_map = spectrogram(stage_fringe.samples, stage_fringe.grid.k, cfg)
            ridge = configured_ridge(tfa_map, stage_fringe.samples, cfg)
            write_tfa_map(tfa_dir / f"stage_{name}.octt", tfa_map)
            write_tfa_csv(tfa_dir / f"stage_{name}.csv", tfa_map)
            write_ridge_csv(tfa_dir / f"stage_{name}_ridge.csv", ridge, tfa_map)
        self._log(f"🗺️  Mapas por etapa guardados en: {tfa_dir}")

    def _render_compensation(self, out_dir: Path, fringe, ref, grid, result: CalibrationResult) -> None:
        """Vector ΔΦ(k) y PSF del espejo sin remuestrear, remuestreada y compensada (dB)"""
        phase = result.phase
        write_table_csv(
            out_dir / "dphi.csv",
            [{"k": float(k), "dphi": float(v)} for k, v in zip(phase.grid.k, phase.dphi)],
        )
        plot_phase(out_dir / "dphi.svg", phase.grid.k, phase.dphi)

        pad = self.config.reconstruction.pad_factor
        window = self.config.signal.window
        stages = [
            ("unresampled_db", "sin remuestrear", reconstruct(fringe, ref, grid, pad_factor=pad, window=window, resample=False)),
            ("resampled_db", "remuestreada", reconstruct(fringe, ref, grid, pad_factor=pad, window=window)),
            ("compensated_db", "compensada", reconstruct(fringe, ref, grid, phase, pad_factor=pad, window=window)),
        ]
        step = stages[-1][2].depth_step
        depth = np.arange(stages[-1][2].profile.size) * step
        keep = np.abs(depth - self.settings.calibration_depth) <= PSF_PLOT_HALF_SPAN
        peak = max(float(ascan.magnitude.max()) for _, _, ascan in stages)
        floor = np.finfo(float).tiny
        curves = {
            column: 20.0 * np.log10(np.maximum(ascan.magnitude[keep] / peak, floor))
            for column, _, ascan in stages
        }

        rows = []
        for i, z in enumerate(depth[keep]):
            row = {"depth_m": float(z)}
            row.update({column: float(values[i]) for column, values in curves.items()})
            rows.append(row)
        write_table_csv(out_dir / "psf_stages.csv", rows)
        labels = {column: label for column, label, _ in stages}
        plot_psf_db(
            out_dir / "psf_stages.svg",
            depth[keep],
            {labels[column]: values for column, values in curves.items()},
            db_floor=self.config.reconstruction.db_floor,
        )
        self._log(f"📈 ΔΦ(k) y PSF por etapa guardados en: {out_dir}")

    def _render_bscan(self, out_dir: Path, phase: PhaseCorrection, seed: int, db_floor: float, db_ceiling: float) -> BScan:
        """Fantoma de capas: sin compensar, compensado y promedio de cuadros, en PGM"""
        s = self.settings
        workers = self.config.reconstruction.workers
        base = self._noisy_scenario(self.base_scenario())
        scenarios = layered_phantom(base, s.bscan_ascans)

        frames = []
        for frame in range(s.bscan_frames):
            fringes, ref, grid = generate_bscan_fringes(scenarios, seed, frame)
            frames.append(reconstruct_bscan(fringes, ref, grid, phase, workers=workers))
            if frame == 0:
                raw = reconstruct_bscan(fringes, ref, grid, None, workers=workers)
                save_pgm(out_dir / "bscan_uncompensated.pgm", bscan_to_image(raw, db_floor, db_ceiling))
                save_pgm(out_dir / "bscan_compensated.pgm", bscan_to_image(frames[0], db_floor, db_ceiling))

        averaged = average_frames(frames)
        save_pgm(out_dir / "bscan_averaged.pgm", bscan_to_image(averaged, db_floor, db_ceiling))
        self._log(f"🖼️  B-scans guardados ({s.bscan_ascans} A-scans, {s.bscan_frames} cuadros)")
        return averaged


def format_report(report: ReproductionReport) -> str:
    """Reporte de texto; solo depende del contenido del reporte"""
    lines = [
        "REPRODUCCIÓN SINTÉTICA: COMPENSACIÓN DE DISPERSIÓN",
        "=" * 60,
        f"Semilla: {report.seed}",
        f"Ventanas STFT evaluadas: {report.k_eval}",
        f"a2 inyectado:  {report.injected_a2:.5e} m²/rad",
        f"a2 calibrado:  {report.calibrated_a2:.5e} m²/rad",
        f"a3 calibrado:  {report.calibrated_a3:.5e} m³/rad²",
        f"V: {report.v_initial:.6g} → {report.v_final:.6g} bin² ({report.evaluations} evaluaciones)",
        f"FWHM límite de transformada: {report.transform_limit * 1e6:.3f} µm",
        "",
        "Repetibilidad de a2",
        "-" * 60,
    ]
    for i, value in enumerate(report.repeatability_values):
        lines.append(f"  {i + 1:2d}  {value:.5e}")
    stats = report.repeatability
    lines += [
        f"  media {stats.mean:.5e}  desv. {stats.stddev:.5e}  cv {stats.cv:.5f}",
        "",
        "Resolución axial (µm)",
        "-" * 60,
        f"  {'z (mm)':>8} {'compensada':>11} {'sin comp.':>10} {'manual':>8} {'referencia':>11}",
    ]
    for r in report.resolution:
        lines.append(
            f"  {r.depth * 1e3:8.3f} {r.fwhm_compensated * 1e6:11.3f} {r.fwhm_uncompensated * 1e6:10.3f} "
            f"{r.fwhm_manual * 1e6:8.3f} {r.fwhm_reference * 1e6:11.3f}"
        )
    lines += ["", "Caída de sensibilidad (dB)", "-" * 60]
    for r in report.rolloff:
        lines.append(f"  {r.depth * 1e3:8.3f} {r.peak_db:8.3f} (esperado {r.expected_db:8.3f})")
    lines += ["", "Criterios de aceptación", "-" * 60]
    for c in report.checks:
        mark = "OK   " if c.passed else "FALLA"
        lines.append(f"  [{mark}] {c.id:2d}. {c.name}: {c.detail}")
    lines += ["", "RESULTADO: " + ("APROBADO" if report.passed else "RECHAZADO"), ""]
    return "\n".join(lines)

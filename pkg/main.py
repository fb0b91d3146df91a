import argparse
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from file_formats import (
    calibration_record,
    phase_from_record,
    read_calibration,
    read_fringe,
    read_grid,
    read_reference,
    write_ascan_csv,
    write_calibration,
    write_fringe,
    write_grid,
    write_reference,
    write_ridge_csv,
    write_table_csv,
    write_tfa_csv,
    write_tfa_map,
)
from metrology import DepthSample, resolution_vs_depth, sensitivity_rolloff
from models import (
    GridMismatchError,
    KGrid,
    OctDispError,
    PhaseCorrection,
    ReferenceSpectrum,
    SimScenario,
    SpectralFringe,
    Stage,
    ToolConfig,
    load_config,
)
from optimizer import DispersionCalibrator, apply_correction, calibrate
from plotting import plot_resolution, plot_rolloff
from preprocessing import apply_window, to_analytic
from reconstruction import measure_psf, reconstruct
from simulator import generate_fringe
from tfa import configured_ridge, stft


# Códigos de salida
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_QUALITY = 2

GRID_HELP = "Mapa píxel→k .octk (default: la grilla guardada en el .octf)"


def _error(message: str) -> int:
    print(f"❌ {message}", file=sys.stderr)
    return EXIT_ERROR


def _with_overrides(config: ToolConfig, args: argparse.Namespace) -> ToolConfig:
    """Los flags de línea de comandos tienen prioridad sobre config.json"""
    tfa = {
        key: value for key, value in (
            ("window_len", getattr(args, "window", None)),
            ("overlap_len", getattr(args, "overlap", None)),
            ("dc_rows", getattr(args, "dc_rows", None)),
        ) if value is not None
    }
    data = config.model_dump()
    data["tfa"].update(tfa)
    if getattr(args, "order", None) is not None:
        data["optimizer"]["order"] = args.order
    if getattr(args, "quiet", False):
        data["verbose"] = False
    return ToolConfig(**data)


def _load_inputs(
    fringe_path: Path,
    ref_path: Optional[str],
    grid_path: Optional[str] = None,
) -> Tuple[SpectralFringe, Optional[ReferenceSpectrum]]:
    """
    Lee el interferograma y su referencia (por defecto, el .octr hermano).
    Con `grid_path` el mapa píxel→k del .octk reemplaza la grilla guardada.
    """
    fringe = read_fringe(fringe_path)
    if grid_path:
        grid = read_grid(grid_path)
        if grid.n != fringe.n:
            raise GridMismatchError(f"{grid_path}: {grid.n} píxeles, el interferograma tiene {fringe.n}")
        fringe = SpectralFringe(samples=fringe.samples, stage=fringe.stage, grid=grid)
    candidate = Path(ref_path) if ref_path else fringe_path.with_suffix(".octr")
    ref = None
    if candidate.exists():
        ref = read_reference(candidate)
    elif ref_path:
        raise OctDispError(f"{candidate}: archivo de referencia no encontrado")
    if fringe.stage == Stage.RAW and ref is None:
        raise OctDispError(f"{fringe_path}: interferograma crudo sin referencia (.octr)")
    return fringe, ref


def _linear_grid(grid: KGrid) -> KGrid:
    return KGrid.linear(float(grid.k.min()), float(grid.k.max()), grid.n)


def _resampled(calibrator: DispersionCalibrator, fringe: SpectralFringe, ref: Optional[ReferenceSpectrum]) -> SpectralFringe:
    if fringe.stage == Stage.RESAMPLED:
        return fringe
    if fringe.stage != Stage.RAW:
        raise OctDispError(f"Se esperaba un interferograma RAW o RESAMPLED (etapa {fringe.stage.name})")
    return calibrator.prepare(fringe, ref)


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    with open(args.scenario, "r", encoding="utf-8") as f:
        scenario = SimScenario.model_validate_json(f.read())
    seed = config.seed if args.seed is None else args.seed

    fringe, ref, grid = generate_fringe(scenario, seed)
    out = Path(args.out)
    write_fringe(out.with_suffix(".octf"), fringe)
    write_reference(out.with_suffix(".octr"), ref)
    write_grid(out.with_suffix(".octk"), grid)
    if config.verbose:
        print(f"✓ Interferograma simulado ({fringe.n} muestras, semilla {seed})")
        print(f"💾 {out.with_suffix('.octf')}, {out.with_suffix('.octr')}, {out.with_suffix('.octk')}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _with_overrides(load_config(args.config), args)
    fringe_path = Path(args.input)
    fringe, ref = _load_inputs(fringe_path, args.ref, args.grid)

    calibrator = DispersionCalibrator(config=config)
    if fringe.stage == Stage.RAW:
        result = calibrator.calibrate_fringe(fringe, ref, label=fringe_path.name)
    else:
        result = calibrate(_resampled(calibrator, fringe, ref), calibrator.stft_config, calibrator.options)

    write_calibration(args.out, calibration_record(result))
    print(f"a2 = {result.model.a2:.6e} m²/rad")
    print(f"a3 = {result.model.a3:.6e} m³/rad²")
    print(f"V: {result.v_initial:.6g} → {result.v_final:.6g} ({result.evaluations} evaluaciones)")
    if config.verbose:
        print(f"💾 Calibración guardada en: {args.out}")
    if not result.converged:
        print(f"⚠️  {fringe_path}: la calibración no convergió", file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def _phase_for(args: argparse.Namespace, grid: KGrid) -> Optional[PhaseCorrection]:
    if getattr(args, "no_compensation", False) or not args.cal:
        return None
    return phase_from_record(read_calibration(args.cal), _linear_grid(grid))


def cmd_reconstruct(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    fringe_path = Path(args.input)
    fringe, ref = _load_inputs(fringe_path, args.ref, args.grid)
    if fringe.stage != Stage.RAW:
        raise OctDispError(f"{fringe_path}: reconstruct requiere un interferograma RAW")

    phase = _phase_for(args, fringe.grid)
    ascan = reconstruct(fringe, ref, fringe.grid, phase, pad_factor=config.reconstruction.pad_factor,
                        window=config.signal.window,
                        clamp_epsilon=config.signal.clamp_epsilon)
    write_ascan_csv(args.out, ascan)
    try:
        psf = measure_psf(ascan, min_prominence_db=config.reconstruction.min_peak_prominence_db)
        print(f"Pico: {psf.peak_depth * 1e6:.2f} µm, FWHM {psf.fwhm * 1e6:.3f} µm, {psf.peak_db:.2f} dB")
    except OctDispError as e:
        print(f"⚠️  {e}")
    if config.verbose:
        print(f"💾 A-scan guardado en: {args.out}")
    return EXIT_OK


def cmd_tfa(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    cfg = config.stft_config()
    fringe_path = Path(args.input)
    fringe, ref = _load_inputs(fringe_path, args.ref, args.grid)
    resampled = _resampled(DispersionCalibrator(config=config), fringe, ref)

    analytic = to_analytic(apply_window(resampled))
    phase = _phase_for(args, fringe.grid)
    if phase is not None:
        analytic = apply_correction(analytic, phase)
    corrected = SpectralFringe(samples=analytic.samples.real, stage=Stage.WINDOWED, grid=resampled.grid)

    tfa_map = stft(corrected, cfg)
    ridge = configured_ridge(tfa_map, corrected.samples, cfg)
    out_dir = Path(args.out_dir)
    stem = fringe_path.stem
    write_tfa_map(out_dir / f"{stem}.octt", tfa_map)
    write_tfa_csv(out_dir / f"{stem}_tfa.csv", tfa_map)
    write_ridge_csv(out_dir / f"{stem}_ridge.csv", ridge, tfa_map)
    if config.verbose:
        print(f"✓ Mapa {tfa_map.shape[0]}×{tfa_map.shape[1]}, {int(ridge.validity_mask.sum())} columnas válidas")
        print(f"💾 Resultados guardados en: {out_dir}")
    return EXIT_OK


def _depth_inputs(directory: Path, seed: int) -> List[DepthSample]:
    """Escenarios JSON (se simulan) y/o interferogramas .octf con su .octr"""
    if not directory.is_dir():
        raise OctDispError(f"{directory}: no es un directorio")
    samples = []
    for path in sorted(directory.glob("*.json")):
        with open(path, "r", encoding="utf-8") as f:
            scenario = SimScenario.model_validate_json(f.read())
        fringe, ref, grid = generate_fringe(scenario, seed)
        samples.append(DepthSample(fringe=fringe, ref=ref, grid=grid, depth=scenario.reflectors.reflectors[0].depth))
    for path in sorted(directory.glob("*.octf")):
        fringe, ref = _load_inputs(path, None)
        samples.append(DepthSample(fringe=fringe, ref=ref, grid=fringe.grid))
    if not samples:
        raise OctDispError(f"{directory}: no contiene escenarios (.json) ni interferogramas (.octf)")
    return sorted(samples, key=lambda s: s.depth if s.depth is not None else np.inf)


def cmd_metrics(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    samples = _depth_inputs(Path(args.scenarios), seed)
    phase = _phase_for(args, samples[0].grid)
    pad = config.reconstruction.pad_factor

    if args.kind == "resolution":
        rows = resolution_vs_depth(samples, phase, seed=seed, pad_factor=pad)
        write_table_csv(args.out, rows, ["depth", "fwhm", "peak_depth", "peak_db"])
        if args.plot:
            label = "compensada" if phase is not None else "sin compensar"
            plot_resolution(args.plot, {label: rows})
    else:
        rows = sensitivity_rolloff(samples, phase, seed=seed, pad_factor=pad)
        write_table_csv(args.out, rows, ["depth", "peak_db", "peak_depth", "fwhm"])
        if args.plot:
            plot_rolloff(args.plot, rows)

    if config.verbose:
        print(f"📊 {len(rows)} profundidades medidas")
        print(f"💾 Tabla guardada en: {args.out}")
    return EXIT_OK


def parse_depths(text: str) -> List[float]:
    """'inicio:fin:paso' en mm (extremos incluidos) o lista separada por comas → metros"""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 9) * 1e-3 for i in range(count)]
        return [float(v) * 1e-3 for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Rango de profundidades inválido: '{text}' (use inicio:fin:paso en mm)")


def cmd_reproduce(args: argparse.Namespace) -> int:
    from reproduce import SyntheticReproduction

    reproduction = SyntheticReproduction(args.config)
    report = reproduction.run(
        Path(args.out_dir or reproduction.config.paths.output_dir),
        seed=args.seed,
        depths=args.depths,
        export_docx=args.export_docx,
        db_floor=args.db_floor,
        db_ceiling=args.db_ceiling,
    )
    if not report.passed:
        failed = [str(c.id) for c in report.checks if not c.passed]
        print(f"❌ Verificaciones fallidas: {', '.join(failed)}", file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="octdisp",
        description="Compensación sistemática de dispersión para SD-OCT por mínima varianza de la cresta STFT",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Códigos de salida:
  0  correcto
  1  error de uso, lectura/escritura o validación
  2  calidad: calibración sin convergencia o verificación fallida

Ejemplos:
  # Simular un espejo a 200 µm con dispersión conocida
  python main.py simulate --scenario docs/scenario_mirror.json --seed 7 --out data/mirror

  # Calibrar y reconstruir
  python main.py calibrate --in data/mirror.octf --out cal.json
  python main.py reconstruct --in data/sample.octf --cal cal.json --out ascan.csv

  # Reproducción completa
  python main.py reproduce --out-dir output --depths 0.2:2.0:0.2 --export-docx
        """,
    )
    parser.add_argument("--config", default="config.json",
                        help="Ruta al archivo de configuración (default: config.json)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Genera interferograma, referencia y grilla k")
    p.add_argument("--scenario", required=True, help="Escenario JSON (ver docs/derivations.md)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="Ruta base; se escriben .octf, .octr y .octk")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="Calibra a2 (y a3) sobre un interferograma de espejo")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", default=None, help="Referencia .octr (default: archivo hermano)")
    p.add_argument("--grid", default=None, help=GRID_HELP)
    p.add_argument("--out", required=True, help="Registro JSON de calibración")
    p.add_argument("--order", type=int, choices=[2, 3], default=None)
    p.add_argument("--window", type=int, default=None, help="M: largo de ventana STFT")
    p.add_argument("--overlap", type=int, default=None, help="L: solapamiento")
    p.add_argument("--dc-rows", dest="dc_rows", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="Reconstruye un A-scan con la calibración")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", default=None)
    p.add_argument("--grid", default=None, help=GRID_HELP)
    p.add_argument("--cal", default=None)
    p.add_argument("--out", required=True, help="CSV del A-scan")
    p.add_argument("--no-compensation", dest="no_compensation", action="store_true")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("tfa", help="Mapa STFT y cresta de un interferograma")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", default=None)
    p.add_argument("--grid", default=None, help=GRID_HELP)
    p.add_argument("--cal", default=None)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_tfa)

    p = sub.add_parser("metrics", help="Resolución axial o caída de sensibilidad vs profundidad")
    p.add_argument("kind", choices=["resolution", "rolloff"])
    p.add_argument("--scenarios", required=True, help="Directorio con escenarios .json o .octf")
    p.add_argument("--cal", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="Gráfico SVG")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("reproduce", help="Reproducción sintética con criterios de aceptación")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--depths", type=parse_depths, default=None, help="inicio:fin:paso en mm")
    p.add_argument("--export-docx", dest="export_docx", action="store_true",
                   help="Exportar también las tablas a Word (.docx)")
    p.add_argument("--db-floor", dest="db_floor", type=float, default=None)
    p.add_argument("--db-ceiling", dest="db_ceiling", type=float, default=None)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OctDispError, ValidationError, OSError) as e:
        return _error(str(e))


if __name__ == "__main__":
    raise SystemExit(main())

"""
Formatos de archivo de la herramienta.

Binarios little-endian:
  OCTF  magic, u16 versión, u32 N, u8 etapa, N f64 muestras, N f64 k (rad/m)
  OCTK  magic, u16 versión, u32 N, N f64 k
  OCTR  magic, u16 versión, u32 N, N f64 fondo, N f64 potencia de la fuente
  OCTT  magic, u16 versión, u32 filas, u32 columnas, filas×columnas f32 energía
        (por filas), columnas f64 k centrales, filas f64 profundidades (m)

Además: registro JSON de calibración, tablas CSV e imágenes PGM. Toda
escritura es atómica (archivo temporal + os.replace).
"""

import base64
import csv
import io
import os
import struct
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ValidationError

from models import (
    AScan,
    CalibrationRecord,
    CalibrationResult,
    FormatError,
    GridMismatchError,
    KGrid,
    OctDispError,
    PhaseCorrection,
    ReferenceSpectrum,
    Ridge,
    SpectralFringe,
    Stage,
    TfaMap,
)

PathLike = Union[str, Path]

FORMAT_VERSION = 1
_FRINGE_HEADER = struct.Struct("<4sHIB")
_GRID_HEADER = struct.Struct("<4sHI")
_MAP_HEADER = struct.Struct("<4sHII")

# Tolerancia relativa al comparar el k0 de una calibración con la medición
CALIBRATION_K0_RTOL = 1e-9


def atomic_write(path: PathLike, data: Union[bytes, str]) -> Path:
    """Escribe en un temporal del mismo directorio y lo renombra sobre `path`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def _f64(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def _read_bytes(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise FormatError(f"{path}: no se pudo leer ({e})") from e


def _unpack_header(path: PathLike, blob: bytes, header: struct.Struct, magic: bytes) -> tuple:
    if len(blob) < header.size:
        raise FormatError(f"{path}: archivo truncado (encabezado incompleto)")
    fields = header.unpack_from(blob)
    if fields[0] != magic:
        raise FormatError(f"{path}: magic inválido {fields[0]!r}, se esperaba {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: versión {fields[1]} no soportada")
    return fields


def _take_f64(path: PathLike, blob: bytes, offset: int, count: int) -> Tuple[np.ndarray, int]:
    end = offset + 8 * count
    if len(blob) < end:
        raise FormatError(f"{path}: archivo truncado ({len(blob)} bytes, se esperaban {end})")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(float), end


def _check_end(path: PathLike, blob: bytes, end: int) -> None:
    if len(blob) != end:
        raise FormatError(f"{path}: {len(blob) - end} bytes sobrantes al final")


# ---------------------------------------------------------------------------
# OCTF / OCTK / OCTR
# ---------------------------------------------------------------------------

def write_fringe(path: PathLike, fringe: SpectralFringe) -> Path:
    header = _FRINGE_HEADER.pack(b"OCTF", FORMAT_VERSION, fringe.n, int(fringe.stage))
    return atomic_write(path, header + _f64(fringe.samples) + _f64(fringe.grid.k))


def read_fringe(path: PathLike) -> SpectralFringe:
    blob = _read_bytes(path)
    _, _, n, stage_code = _unpack_header(path, blob, _FRINGE_HEADER, b"OCTF")
    samples, offset = _take_f64(path, blob, _FRINGE_HEADER.size, n)
    k, offset = _take_f64(path, blob, offset, n)
    _check_end(path, blob, offset)
    try:
        stage = Stage(stage_code)
        return SpectralFringe(samples=samples, stage=stage, grid=KGrid.from_wavenumbers(k))
    except (ValueError, OctDispError) as e:
        raise FormatError(f"{path}: contenido inválido ({e})") from e


def write_grid(path: PathLike, grid: KGrid) -> Path:
    return atomic_write(path, _GRID_HEADER.pack(b"OCTK", FORMAT_VERSION, grid.n) + _f64(grid.k))


def read_grid(path: PathLike) -> KGrid:
    blob = _read_bytes(path)
    _, _, n = _unpack_header(path, blob, _GRID_HEADER, b"OCTK")
    k, offset = _take_f64(path, blob, _GRID_HEADER.size, n)
    _check_end(path, blob, offset)
    try:
        return KGrid.from_wavenumbers(k)
    except OctDispError as e:
        raise FormatError(f"{path}: grilla inválida ({e})") from e


def write_reference(path: PathLike, ref: ReferenceSpectrum) -> Path:
    header = _GRID_HEADER.pack(b"OCTR", FORMAT_VERSION, ref.n)
    return atomic_write(path, header + _f64(ref.background) + _f64(ref.source_power))


def read_reference(path: PathLike) -> ReferenceSpectrum:
    blob = _read_bytes(path)
    _, _, n = _unpack_header(path, blob, _GRID_HEADER, b"OCTR")
    background, offset = _take_f64(path, blob, _GRID_HEADER.size, n)
    power, offset = _take_f64(path, blob, offset, n)
    _check_end(path, blob, offset)
    try:
        return ReferenceSpectrum(background=background, source_power=power)
    except OctDispError as e:
        raise FormatError(f"{path}: referencia inválida ({e})") from e


# ---------------------------------------------------------------------------
# Mapas tiempo-frecuencia
# ---------------------------------------------------------------------------

def write_tfa_map(path: PathLike, tfa_map: TfaMap) -> Path:
    rows, cols = tfa_map.energy.shape
    payload = (
        _MAP_HEADER.pack(b"OCTT", FORMAT_VERSION, rows, cols)
        + np.ascontiguousarray(tfa_map.energy, dtype="<f4").tobytes()
        + _f64(tfa_map.k_centers)
        + _f64(tfa_map.depth_bins)
    )
    return atomic_write(path, payload)


def read_tfa_map(path: PathLike) -> TfaMap:
    blob = _read_bytes(path)
    _, _, rows, cols = _unpack_header(path, blob, _MAP_HEADER, b"OCTT")
    offset = _MAP_HEADER.size
    end = offset + 4 * rows * cols
    if len(blob) < end:
        raise FormatError(f"{path}: archivo truncado")
    energy = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols).astype(np.float32)
    k_centers, offset = _take_f64(path, blob, end, cols)
    depth_bins, offset = _take_f64(path, blob, offset, rows)
    _check_end(path, blob, offset)
    return TfaMap(energy=energy, k_centers=k_centers, depth_bins=depth_bins)


def write_tfa_csv(path: PathLike, tfa_map: TfaMap) -> Path:
    """Formato largo: row, col, energy"""
    rows, cols = tfa_map.energy.shape
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    buffer = io.StringIO()
    buffer.write("row,col,energy\n")
    for row, col, value in zip(r.ravel(), c.ravel(), tfa_map.energy.ravel()):
        buffer.write(f"{row},{col},{value:.9g}\n")
    return atomic_write(path, buffer.getvalue())


def write_ridge_csv(path: PathLike, ridge: Ridge, tfa_map: TfaMap) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["col", "k_center", "depth_row", "valid"])
    for col, (k, depth, valid) in enumerate(zip(tfa_map.k_centers, ridge.depth_at_k, ridge.validity_mask)):
        writer.writerow([col, f"{k:.12g}", f"{depth:.6f}", int(bool(valid))])
    return atomic_write(path, buffer.getvalue())


# ---------------------------------------------------------------------------
# Calibración (JSON)
# ---------------------------------------------------------------------------

def encode_phase(dphi: np.ndarray) -> str:
    return base64.b64encode(_f64(dphi)).decode("ascii")


def decode_phase(text: str) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    if len(raw) % 8:
        raise FormatError("dphi no contiene un número entero de float64")
    return np.frombuffer(raw, dtype="<f8").astype(float)


def calibration_record(result: CalibrationResult, created_utc: Optional[str] = None) -> CalibrationRecord:
    return CalibrationRecord(
        n=result.phase.grid.n,
        k0=result.model.k0,
        a2=result.model.a2,
        a3=result.model.a3,
        dphi=encode_phase(result.phase.dphi),
        v_initial=result.v_initial,
        v_final=result.v_final,
        evaluations=result.evaluations,
        created_utc=created_utc or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        order=result.order,
        converged=result.converged,
    )


def write_calibration(path: PathLike, result: Union[CalibrationResult, CalibrationRecord]) -> Path:
    record = result if isinstance(result, CalibrationRecord) else calibration_record(result)
    return atomic_write(path, record.model_dump_json(indent=2) + "\n")


def read_calibration(path: PathLike) -> CalibrationRecord:
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = CalibrationRecord.model_validate_json(f.read())
    except OSError as e:
        raise FormatError(f"{path}: no se pudo leer ({e})") from e
    except ValidationError as e:
        raise FormatError(f"{path}: registro de calibración inválido ({e.error_count()} errores)") from e
    if decode_phase(record.dphi).size != record.n:
        raise FormatError(f"{path}: dphi no tiene {record.n} muestras")
    return record


def phase_from_record(record: CalibrationRecord, grid: KGrid) -> PhaseCorrection:
    """Vector ΔΦ guardado, asociado a la grilla lineal de la medición (mismos n y k0)"""
    if record.n != grid.n:
        raise GridMismatchError(f"La calibración es de {record.n} píxeles y la medición de {grid.n}")
    if abs(record.k0 - grid.k0) > CALIBRATION_K0_RTOL * abs(grid.k0):
        raise GridMismatchError(
            f"k0 de la calibración ({record.k0:.6f} rad/m) distinto del de la medición ({grid.k0:.6f} rad/m)"
        )
    dphi = decode_phase(record.dphi)
    if dphi.size != grid.n:
        raise FormatError(f"La calibración tiene {dphi.size} muestras y la grilla {grid.n}")
    return PhaseCorrection(dphi=dphi, grid=grid)


# ---------------------------------------------------------------------------
# Tablas e imágenes
# ---------------------------------------------------------------------------

def write_table_csv(path: PathLike, rows: Iterable[Union[BaseModel, dict]], columns: Optional[Sequence[str]] = None) -> Path:
    records = [r.model_dump() if isinstance(r, BaseModel) else dict(r) for r in rows]
    if columns is None:
        columns = list(records[0].keys()) if records else []
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in record.items()})
    return atomic_write(path, buffer.getvalue())


def write_ascan_csv(path: PathLike, ascan: AScan) -> Path:
    rows = (
        {"depth_m": float(z), "magnitude": float(m), "magnitude_db": float(db)}
        for z, m, db in zip(ascan.depth_axis, ascan.magnitude, ascan.magnitude_db)
    )
    return write_table_csv(path, rows, ["depth_m", "magnitude", "magnitude_db"])


def save_pgm(path: PathLike, image: np.ndarray) -> Path:
    """PGM binario de 8 bits (P5) vía Pillow"""
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 2:
        raise FormatError("save_pgm requiere una imagen uint8 2-D")
    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PPM")
    return atomic_write(path, buffer.getvalue())

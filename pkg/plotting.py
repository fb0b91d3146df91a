"""
Gráficos SVG: resolución axial, caída de sensibilidad, vector ΔΦ y PSF en dB.

Se usa el backend Agg y una sal fija para los identificadores del SVG, de
modo que la misma tabla produce el mismo archivo.
"""

import io
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from file_formats import atomic_write  # noqa: E402
from models import DepthMeasurement  # noqa: E402

plt.rcParams["svg.hashsalt"] = "octdisp"

PathLike = Union[str, Path]


def _save_svg(fig, path: PathLike) -> Path:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write(path, buffer.getvalue())


def plot_resolution(
    path: PathLike,
    series: Dict[str, Sequence[DepthMeasurement]],
    transform_limit: Optional[float] = None,
) -> Path:
    """FWHM (µm) vs profundidad (mm), una curva por serie"""
    fig, ax = plt.subplots(figsize=(6, 4))
    markers = ["o", "s", "^", "v", "d"]
    for i, (label, rows) in enumerate(series.items()):
        ax.plot(
            [r.depth * 1e3 for r in rows],
            [r.fwhm * 1e6 for r in rows],
            marker=markers[i % len(markers)],
            label=label,
        )
    if transform_limit is not None:
        ax.axhline(transform_limit * 1e6, color="gray", linestyle="--", label="límite de transformada")
    ax.set_xlabel("Profundidad (mm)")
    ax.set_ylabel("FWHM (µm)")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_rolloff(
    path: PathLike,
    rows: Sequence[DepthMeasurement],
    expected_db: Optional[Sequence[float]] = None,
) -> Path:
    """Altura relativa del pico (dB) vs profundidad (mm)"""
    fig, ax = plt.subplots(figsize=(6, 4))
    depths = [r.depth * 1e3 for r in rows]
    ax.plot(depths, [r.peak_db for r in rows], marker="o", label="medido")
    if expected_db is not None:
        ax.plot(depths, list(expected_db), linestyle="--", color="gray", label="sinc analítica")
    ax.set_xlabel("Profundidad (mm)")
    ax.set_ylabel("Pico relativo (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_phase(path: PathLike, k: Sequence[float], dphi: Sequence[float]) -> Path:
    """Vector de compensación ΔΦ(k) (rad) vs k (rad/µm)"""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([v * 1e-6 for v in k], list(dphi))
    ax.set_xlabel("k (rad/µm)")
    ax.set_ylabel("ΔΦ (rad)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_psf_db(path: PathLike, depth: Sequence[float], curves: Dict[str, Sequence[float]], db_floor: float = -60.0) -> Path:
    """Perfiles axiales en dB (relativos al máximo común) vs profundidad (µm)"""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = [z * 1e6 for z in depth]
    for label, values in curves.items():
        ax.plot(x, list(values), label=label)
    ax.set_ylim(db_floor, 3.0)
    ax.set_xlabel("Profundidad (µm)")
    ax.set_ylabel("Amplitud (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save_svg(fig, path)

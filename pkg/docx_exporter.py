"""
Exportador del reporte de reproducción a documento Word (.docx).

Genera las tablas:
| # | Verificación | Resultado | Detalle |
| Medición | a2 (m²/rad) |
| Profundidad | FWHM compensada | sin compensar | manual | referencia |
| Profundidad | Pico medido | Pico esperado |
"""

from pathlib import Path
from typing import List, Optional, Sequence

from models import ReproductionReport

try:
    from docx import Document
    from docx.shared import Pt, Cm
    from docx.enum.table import WD_TABLE_ALIGNMENT
    from docx.enum.text import WD_ALIGN_PARAGRAPH
    from docx.oxml.ns import nsdecls
    from docx.oxml import parse_xml
    DOCX_AVAILABLE = True
except ImportError:
    DOCX_AVAILABLE = False
    print("⚠️  python-docx no está instalado. Ejecuta: pip install python-docx")


PASS_COLOR = "C6EFCE"  # Verde claro
FAIL_COLOR = "FFC7CE"  # Rojo claro
HEADER_COLOR = "D9D9D9"


def set_cell_shading(cell, color: str):
    """Aplica color de fondo a una celda"""
    shading_elm = parse_xml(f'<w:shd {nsdecls("w")} w:fill="{color}"/>')
    cell._tc.get_or_add_tcPr().append(shading_elm)


def _add_table(doc, headers: Sequence[str], rows: List[Sequence[str]], widths: Optional[Sequence] = None):
    table = doc.add_table(rows=1, cols=len(headers))
    table.style = 'Table Grid'
    table.alignment = WD_TABLE_ALIGNMENT.CENTER

    for cell, header_text in zip(table.rows[0].cells, headers):
        cell.text = header_text
        for paragraph in cell.paragraphs:
            paragraph.alignment = WD_ALIGN_PARAGRAPH.CENTER
            for run in paragraph.runs:
                run.bold = True
                run.font.size = Pt(9)
        set_cell_shading(cell, HEADER_COLOR)

    for values in rows:
        cells = table.add_row().cells
        for cell, value in zip(cells, values):
            cell.text = value
            for paragraph in cell.paragraphs:
                for run in paragraph.runs:
                    run.font.size = Pt(8)

    if widths:
        for row in table.rows:
            for i, cell in enumerate(row.cells):
                cell.width = widths[i]
    return table


def export_report_to_docx(report: ReproductionReport, output_path: Path) -> Path:
    """
    Exporta el reporte de reproducción a Word.

    Args:
        report: Reporte generado por SyntheticReproduction.run
        output_path: Ruta del .docx

    Returns:
        Path al archivo .docx generado
    """
    if not DOCX_AVAILABLE:
        raise ImportError("python-docx no está instalado. Ejecuta: pip install python-docx")

    doc = Document()
    doc.add_heading("Compensación de dispersión: reproducción sintética", level=1)

    subtitle = doc.add_paragraph()
    subtitle.add_run("Semilla: ").bold = True
    subtitle.add_run(str(report.seed))
    subtitle.add_run("\na2 inyectado: ").bold = True
    subtitle.add_run(f"{report.injected_a2:.4e} m²/rad")
    subtitle.add_run("\na2 calibrado: ").bold = True
    subtitle.add_run(f"{report.calibrated_a2:.4e} m²/rad")
    subtitle.add_run("\nVentanas evaluadas: ").bold = True
    subtitle.add_run(str(report.k_eval))

    passed = sum(c.passed for c in report.checks)
    summary_para = doc.add_paragraph()
    summary_para.add_run("Resumen: ").bold = True
    summary_para.add_run(f"{passed} de {len(report.checks)} verificaciones aprobadas")

    # Verificaciones
    doc.add_heading("Criterios de aceptación", level=2)
    table = _add_table(
        doc,
        ["#", "Verificación", "Resultado", "Detalle"],
        [[str(c.id), c.name, "OK" if c.passed else "FALLA", c.detail] for c in report.checks],
        [Cm(0.8), Cm(5.0), Cm(1.8), Cm(9.0)],
    )
    for row, check in zip(table.rows[1:], report.checks):
        set_cell_shading(row.cells[2], PASS_COLOR if check.passed else FAIL_COLOR)

    # Repetibilidad
    doc.add_heading("Repetibilidad de a2", level=2)
    stats = report.repeatability
    rows = [[str(i + 1), f"{value:.4e}"] for i, value in enumerate(report.repeatability_values)]
    rows.append(["media", f"{stats.mean:.4e}"])
    rows.append(["desv. estándar", f"{stats.stddev:.4e}"])
    rows.append(["coef. de variación", f"{stats.cv:.4f}"])
    _add_table(doc, ["Medición", "a2 (m²/rad)"], rows, [Cm(4.0), Cm(5.0)])

    # Resolución
    doc.add_heading("Resolución axial vs profundidad", level=2)
    _add_table(
        doc,
        ["Profundidad (mm)", "Compensada (µm)", "Sin compensar (µm)", "Manual (µm)", "Referencia (µm)"],
        [
            [f"{r.depth * 1e3:.2f}", f"{r.fwhm_compensated * 1e6:.2f}", f"{r.fwhm_uncompensated * 1e6:.2f}",
             f"{r.fwhm_manual * 1e6:.2f}", f"{r.fwhm_reference * 1e6:.2f}"]
            for r in report.resolution
        ],
    )

    # Caída de sensibilidad
    if report.rolloff:
        doc.add_heading("Caída de sensibilidad", level=2)
        _add_table(
            doc,
            ["Profundidad (mm)", "Pico medido (dB)", "Pico esperado (dB)"],
            [[f"{r.depth * 1e3:.2f}", f"{r.peak_db:.2f}", f"{r.expected_db:.2f}"] for r in report.rolloff],
        )

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    doc.save(output_path)
    return output_path

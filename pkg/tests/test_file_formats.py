import json

import numpy as np
import pytest
from PIL import Image

from file_formats import (
    atomic_write,
    calibration_record,
    decode_phase,
    encode_phase,
    phase_from_record,
    read_calibration,
    read_fringe,
    read_grid,
    read_reference,
    read_tfa_map,
    save_pgm,
    write_ascan_csv,
    write_calibration,
    write_fringe,
    write_grid,
    write_reference,
    write_ridge_csv,
    write_table_csv,
    write_tfa_map,
)
from models import AScan, FormatError, GridMismatchError, KGrid, RepeatabilityStats, Stage
from simulator import generate_fringe
from tfa import extract_ridge, stft


def test_fringe_file_preserves_samples_stage_and_grid(tmp_path, mirror_scenario, resampled):
    fringe = resampled(mirror_scenario(a2=-3e-11, warp=0.05))
    path = write_fringe(tmp_path / "mirror.octf", fringe)

    loaded = read_fringe(path)
    assert loaded.stage == Stage.RESAMPLED
    np.testing.assert_array_equal(loaded.samples, fringe.samples)
    np.testing.assert_array_equal(loaded.grid.k, fringe.grid.k)
    assert path.read_bytes()[:4] == b"OCTF"
    assert path.stat().st_size == 11 + 16 * fringe.n


def test_reference_and_grid_files(tmp_path, mirror_scenario):
    _, ref, grid = generate_fringe(mirror_scenario(warp=0.05))
    write_reference(tmp_path / "mirror.octr", ref)
    write_grid(tmp_path / "mirror.octk", grid)

    loaded_ref = read_reference(tmp_path / "mirror.octr")
    loaded_grid = read_grid(tmp_path / "mirror.octk")
    np.testing.assert_array_equal(loaded_ref.source_power, ref.source_power)
    np.testing.assert_array_equal(loaded_ref.background, ref.background)
    assert loaded_grid.same_as(grid)
    assert not loaded_grid.is_linear


@pytest.mark.parametrize("damage", ["truncate", "magic", "trailing", "version"])
def test_damaged_fringe_files_are_rejected(tmp_path, mirror_scenario, damage):
    fringe, _, _ = generate_fringe(mirror_scenario())
    path = write_fringe(tmp_path / "mirror.octf", fringe)
    blob = bytearray(path.read_bytes())
    if damage == "truncate":
        blob = blob[:-8]
    elif damage == "magic":
        blob[:4] = b"XXXX"
    elif damage == "trailing":
        blob += b"\x00"
    else:
        blob[4] = 9
    path.write_bytes(bytes(blob))

    with pytest.raises(FormatError, match="mirror.octf"):
        read_fringe(path)


def test_missing_file_is_a_format_error(tmp_path):
    with pytest.raises(FormatError):
        read_fringe(tmp_path / "missing.octf")


def test_calibration_record_carries_the_phase_vector(tmp_path, mirror_calibration):
    record = calibration_record(mirror_calibration, created_utc="2024-01-01T00:00:00+00:00")
    path = write_calibration(tmp_path / "cal.json", record)

    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["version"] == 1
    assert data["n"] == 2048
    assert data["a2"] == mirror_calibration.model.a2

    loaded = read_calibration(path)
    phase = phase_from_record(loaded, mirror_calibration.phase.grid)
    np.testing.assert_array_equal(phase.dphi, mirror_calibration.phase.dphi)


def test_calibration_must_match_the_measurement_grid(mirror_calibration):
    record = calibration_record(mirror_calibration, created_utc="2024-01-01T00:00:00+00:00")
    grid = mirror_calibration.phase.grid
    shifted = KGrid.linear(grid.k[0] + 100.0, grid.k[-1] + 100.0, grid.n)
    with pytest.raises(GridMismatchError, match="k0"):
        phase_from_record(record, shifted)
    with pytest.raises(GridMismatchError):
        phase_from_record(record, KGrid.linear(grid.k[0], grid.k[-1], grid.n // 2))


def test_calibration_with_wrong_vector_length(tmp_path, mirror_calibration):
    record = calibration_record(mirror_calibration, created_utc="2024-01-01T00:00:00+00:00")
    broken = record.model_copy(update={"dphi": encode_phase(np.zeros(10))})
    path = write_calibration(tmp_path / "cal.json", broken)
    with pytest.raises(FormatError):
        read_calibration(path)


def test_invalid_calibration_json(tmp_path):
    path = tmp_path / "cal.json"
    path.write_text('{"version": 1, "n": "muchos"}', encoding="utf-8")
    with pytest.raises(FormatError):
        read_calibration(path)


def test_phase_encoding_is_little_endian_float64():
    dphi = np.array([0.0, -1.5, 3.25])
    assert decode_phase(encode_phase(dphi)).tolist() == dphi.tolist()
    with pytest.raises(FormatError):
        decode_phase("AAAA")


def test_tfa_map_and_ridge_files(tmp_path, mirror_scenario, resampled, stft_cfg):
    tfa_map = stft(resampled(mirror_scenario()), stft_cfg)
    write_tfa_map(tmp_path / "map.octt", tfa_map)
    loaded = read_tfa_map(tmp_path / "map.octt")

    assert loaded.shape == tfa_map.shape
    assert loaded.energy.dtype == np.float32
    np.testing.assert_allclose(loaded.energy, tfa_map.energy, rtol=1e-6)
    np.testing.assert_array_equal(loaded.depth_bins, tfa_map.depth_bins)

    ridge = extract_ridge(tfa_map, refine=True)
    lines = write_ridge_csv(tmp_path / "ridge.csv", ridge, tfa_map).read_text().splitlines()
    assert lines[0] == "col,k_center,depth_row,valid"
    assert len(lines) == 1 + tfa_map.k_eval


def test_tables_and_ascan_csv(tmp_path):
    rows = [RepeatabilityStats(mean=-4.1e-11, stddev=1.9e-13, cv=-0.0046, count=10)]
    text = write_table_csv(tmp_path / "stats.csv", rows).read_text()
    assert text.splitlines() == ["mean,stddev,cv,count", "-4.1e-11,1.9e-13,-0.0046,10"]

    ascan = AScan(profile=np.array([1.0, 0.5, 0.25]), depth_step=1e-6)
    lines = write_ascan_csv(tmp_path / "ascan.csv", ascan).read_text().splitlines()
    assert lines[0] == "depth_m,magnitude,magnitude_db"
    assert len(lines) == 4


def test_pgm_is_8_bit_binary(tmp_path):
    image = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    path = save_pgm(tmp_path / "bscan.pgm", image)
    assert path.read_bytes()[:2] == b"P5"
    with Image.open(path) as loaded:
        np.testing.assert_array_equal(np.asarray(loaded), image)
    with pytest.raises(FormatError):
        save_pgm(tmp_path / "bad.pgm", image.astype(float))


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "nested" / "report.txt"
    atomic_write(target, "primera")
    atomic_write(target, "segunda")
    assert target.read_text(encoding="utf-8") == "segunda"
    assert [p.name for p in target.parent.iterdir()] == ["report.txt"]

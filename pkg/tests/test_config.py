from pathlib import Path

import pytest
from pydantic import ValidationError

from models import StftConfig, ToolConfig, WindowKind, load_config

REPO_ROOT = Path(__file__).resolve().parent.parent


def test_repository_config_matches_defaults():
    assert load_config(str(REPO_ROOT / "config.json")).model_dump() == ToolConfig().model_dump()


def test_missing_config_falls_back_to_defaults(tmp_path, capsys):
    config = load_config(str(tmp_path / "nope.json"))
    assert config.model_dump() == ToolConfig().model_dump()
    assert "No se encontró" in capsys.readouterr().out


def test_stft_config_is_built_from_the_tfa_section():
    cfg = ToolConfig().stft_config()
    assert (cfg.window_len, cfg.overlap_len, cfg.n_fft, cfg.hop) == (1024, 1013, 2048, 11)
    assert cfg.dc_exclusion_rows == 50
    assert cfg.subbin_ridge
    assert cfg.ridge_newton_steps == 3
    assert StftConfig().ridge_newton_steps == 0
    assert cfg.window is WindowKind.HANN


@pytest.mark.parametrize("tfa", [
    {"window_len": 1024, "overlap_len": 1024},
    {"window_len": 4096, "overlap_len": 100, "fft_len": 4096},
    {"dc_rows": 5000},
])
def test_invalid_tfa_sections(tfa):
    with pytest.raises(ValidationError):
        ToolConfig(tfa=tfa)


def test_optimizer_order_is_restricted():
    with pytest.raises(ValidationError):
        ToolConfig(optimizer={"order": 4})


def test_partial_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"seed": 11, "tfa": {"overlap_len": 1000}}', encoding="utf-8")
    config = load_config(str(path))
    assert config.seed == 11
    assert config.stft_config().hop == 24
    assert config.reconstruction.pad_factor == 4

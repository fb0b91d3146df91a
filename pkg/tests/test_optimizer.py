import numpy as np
import pytest

from models import (
    DispersionModel,
    GridMismatchError,
    KGrid,
    NoDominantPeakError,
    NonLinearGridError,
    OptimizerOptions,
    PhaseCorrection,
    SpectralFringe,
    Stage,
)
from optimizer import RidgeVarianceObjective, apply_correction, calibrate, objective, phase_correction
from preprocessing import apply_window, to_analytic
from simulator import generate_fringe, spectrometer_grid

from conftest import CALIBRATION_DEPTH, INJECTED_A2


def test_phase_correction_polynomial():
    grid = KGrid.linear(6.6e6, 8.2e6, 2048)
    model = DispersionModel(a2=-4e-11, a3=2e-18, k0=grid.k0)
    kappa = grid.k - grid.k0
    phase = phase_correction(model, grid)
    np.testing.assert_allclose(phase.dphi, 4e-11 * kappa ** 2 - 2e-18 * kappa ** 3)
    assert phase.dphi[1024] == 0.0


def test_phase_correction_needs_a_linear_grid(mirror_scenario):
    warped = spectrometer_grid(mirror_scenario().source, warp=mirror_scenario(warp=0.05).grid_warp)
    with pytest.raises(NonLinearGridError):
        phase_correction(DispersionModel(a2=1e-11, a3=0.0, k0=warped.k0), warped)


def test_correction_is_unitary_and_invertible(mirror_scenario, resampled):
    fringe = resampled(mirror_scenario(a2=INJECTED_A2))
    analytic = to_analytic(apply_window(fringe))
    phase = phase_correction(DispersionModel(a2=INJECTED_A2, a3=1e-18, k0=fringe.grid.k0), fringe.grid)
    inverse = PhaseCorrection(dphi=-phase.dphi, grid=phase.grid)

    corrected = apply_correction(analytic, phase)
    restored = apply_correction(corrected, inverse)

    np.testing.assert_allclose(np.abs(corrected.samples), np.abs(analytic.samples), rtol=1e-12, atol=1e-15)
    scale = np.max(np.abs(analytic.samples))
    assert np.max(np.abs(restored.samples - analytic.samples)) <= 1e-12 * scale


def test_correction_rejects_a_foreign_grid(mirror_scenario, resampled):
    fringe = resampled(mirror_scenario())
    analytic = to_analytic(fringe)
    other = KGrid.linear(fringe.grid.k[0], fringe.grid.k[-1] * 1.01, fringe.n)
    with pytest.raises(GridMismatchError):
        apply_correction(analytic, PhaseCorrection(dphi=np.zeros(fringe.n), grid=other))


def test_injected_coefficient_minimizes_the_objective(mirror_scenario, resampled, stft_cfg):
    fringe = resampled(mirror_scenario(a2=INJECTED_A2))
    target = RidgeVarianceObjective(fringe, stft_cfg)
    assert target(INJECTED_A2) < 0.01 * target(0.0)
    assert target(INJECTED_A2) < target(0.8 * INJECTED_A2)
    assert target(INJECTED_A2) < target(1.2 * INJECTED_A2)
    assert target.evaluations == 6


def test_objective_is_unimodal_along_a2(mirror_scenario, resampled, stft_cfg):
    fringe = resampled(mirror_scenario(a2=INJECTED_A2))
    target = RidgeVarianceObjective(fringe, stft_cfg)
    values = np.array([target(a2) for a2 in np.linspace(-8e-11, 0.0, 41)])
    best = int(np.argmin(values))
    slack = 0.02 * values.max()
    assert np.all(np.diff(values[: best + 1]) <= slack)
    assert np.all(np.diff(values[best:]) >= -slack)


def test_objective_helper_matches_the_class(mirror_scenario, resampled, stft_cfg):
    fringe = resampled(mirror_scenario(a2=-2e-11))
    assert objective(fringe, stft_cfg, -1e-11) == RidgeVarianceObjective(fringe, stft_cfg)(-1e-11)


def test_objective_requires_resampled_stage(mirror_scenario, stft_cfg):
    fringe, _, _ = generate_fringe(mirror_scenario())
    with pytest.raises(ValueError):
        RidgeVarianceObjective(fringe, stft_cfg)


def test_calibration_recovers_injected_a2(mirror_calibration):
    result = mirror_calibration
    assert result.converged
    assert result.order == 2
    assert result.model.a3 == 0.0
    assert abs(result.model.a2 - INJECTED_A2) <= 0.01 * abs(INJECTED_A2)
    assert result.v_final <= 0.01 * result.v_initial
    assert result.evaluations > 2


def test_calibration_trace_starts_at_origin_and_never_rises(mirror_calibration):
    trace = mirror_calibration.objective_trace
    assert trace[0] == (0, mirror_calibration.v_initial)
    values = [v for _, v in trace]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(mirror_calibration.v_final)


def test_calibration_phase_matches_the_model(mirror_calibration):
    result = mirror_calibration
    expected = phase_correction(result.model, result.phase.grid)
    np.testing.assert_array_equal(result.phase.dphi, expected.dphi)


def test_calibration_is_deterministic(calibrator, mirror_scenario):
    scenario = mirror_scenario(a2=INJECTED_A2, noise=0.01)
    first = calibrator.calibrate_fringe(*generate_fringe(scenario, 3))
    second = calibrator.calibrate_fringe(*generate_fringe(scenario, 3))
    assert first.model.a2 == second.model.a2
    assert first.objective_trace == second.objective_trace


def test_third_order_fit_leaves_a3_at_zero(mirror_scenario, resampled, stft_cfg):
    fringe = resampled(mirror_scenario(depth=CALIBRATION_DEPTH, a2=INJECTED_A2))
    result = calibrate(fringe, stft_cfg, OptimizerOptions(order=3))

    assert result.order == 3
    assert abs(result.model.a2 - INJECTED_A2) <= 0.01 * abs(INJECTED_A2)
    assert abs(result.model.a3) < 1e-20


def test_calibration_without_a_mirror_fails(stft_cfg, rng):
    grid = KGrid.linear(6.6e6, 8.2e6, 2048)
    noise = SpectralFringe(samples=rng.normal(size=2048), stage=Stage.RESAMPLED, grid=grid)
    with pytest.raises(NoDominantPeakError):
        calibrate(noise, stft_cfg)


def test_calibrator_reports_progress(pipeline_config, mirror_scenario, capsys):
    from optimizer import DispersionCalibrator

    loud = DispersionCalibrator(config=pipeline_config.model_copy(update={"verbose": True}))
    loud.calibrate_fringe(*generate_fringe(mirror_scenario(depth=CALIBRATION_DEPTH, a2=-2e-11)), label="espejo")
    out = capsys.readouterr().out
    assert "Calibrando espejo" in out
    assert "a2 =" in out


def test_objective_is_even_under_mirrored_depth(mirror_scenario, resampled, stft_cfg):
    a2 = -2e-11
    front = RidgeVarianceObjective(resampled(mirror_scenario(depth=200e-6, a2=a2)), stft_cfg)
    back = RidgeVarianceObjective(resampled(mirror_scenario(depth=-200e-6, a2=a2)), stft_cfg)

    scale = front(0.0)
    for t in (0.0, 0.5 * a2, a2, 1.5 * a2):
        assert back(-t) == pytest.approx(front(t), rel=0.02, abs=1e-4 * scale)


def test_dispersion_free_mirror_calibrates_to_zero(mirror_scenario, resampled, stft_cfg):
    result = calibrate(resampled(mirror_scenario(warp=0.05)), stft_cfg)
    assert result.converged
    assert abs(result.model.a2) < 1e-13

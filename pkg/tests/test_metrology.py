import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metrology import (
    DepthSample,
    expected_rolloff_db,
    repeatability_stats,
    resolution_vs_depth,
    sensitivity_rolloff,
)
from models import (
    DispersionCoefficients,
    DispersionModel,
    KGrid,
    Reflector,
    ReflectorSet,
    SimScenario,
    TooFewValuesError,
)
from optimizer import phase_correction
from reproduce import AUTO_RUNS_A2, AUTO_RUNS_CV, AUTO_RUNS_MEAN, MANUAL_RUNS_A2, MANUAL_RUNS_CV, MANUAL_RUNS_MEAN
from simulator import generate_fringe, max_depth, noise_sigma_for_snr

from conftest import INJECTED_A2


def test_first_repeatability_table():
    stats = repeatability_stats(AUTO_RUNS_A2)
    assert stats.count == 10
    assert stats.mean == pytest.approx(AUTO_RUNS_MEAN, rel=0.002)
    assert stats.cv == pytest.approx(AUTO_RUNS_CV, abs=5e-5)
    assert stats.cv < 0


def test_second_repeatability_table():
    stats = repeatability_stats(MANUAL_RUNS_A2)
    assert stats.mean == pytest.approx(MANUAL_RUNS_MEAN, rel=1e-3)
    assert stats.cv == pytest.approx(MANUAL_RUNS_CV, abs=2e-4)


def test_identical_values_have_zero_spread():
    stats = repeatability_stats([-4.098e-11] * 5)
    assert stats.stddev == 0.0
    assert stats.cv == 0.0
    assert stats.mean == -4.098e-11


def test_zero_mean_gives_nan_cv():
    assert math.isnan(repeatability_stats([-1.0, 1.0]).cv)


def test_single_value_is_not_enough():
    with pytest.raises(TooFewValuesError):
        repeatability_stats([1.0])


@settings(max_examples=50)
@given(
    values=st.lists(st.integers(min_value=1, max_value=1000), min_size=2, max_size=20),
    exponent=st.integers(min_value=-40, max_value=10),
)
def test_cv_is_scale_invariant(values, exponent):
    values = [float(v) for v in values]
    scale = 2.0 ** exponent
    base = repeatability_stats(values)
    scaled = repeatability_stats([v * scale for v in values])
    assert scaled.mean == pytest.approx(base.mean * scale, rel=1e-12)
    assert scaled.cv == pytest.approx(base.cv, rel=1e-12, abs=1e-15)


def test_expected_rolloff_curve():
    assert expected_rolloff_db(0.0, 2e-3) == 0.0
    assert expected_rolloff_db(2e-3, 2e-3) == pytest.approx(20.0 * math.log10(2.0 / math.pi))


def test_resolution_is_depth_independent_after_compensation(mirror_scenario, mirror_calibration):
    depths = [0.3e-3, 1.0e-3, 2.0e-3]
    scenarios = [mirror_scenario(depth=d, a2=INJECTED_A2, warp=0.05) for d in depths]

    compensated = resolution_vs_depth(scenarios, mirror_calibration.phase)
    uncompensated = resolution_vs_depth(scenarios)

    widths = [row.fwhm for row in compensated]
    assert [row.depth for row in compensated] == depths
    assert max(widths) / min(widths) <= 1.5
    for fixed, raw in zip(compensated, uncompensated):
        assert raw.fwhm > 3.0 * fixed.fwhm
        assert fixed.peak_depth == pytest.approx(fixed.depth, abs=2e-6)


def test_measured_samples_without_nominal_depth(mirror_scenario):
    fringe, ref, grid = generate_fringe(mirror_scenario(depth=0.8e-3))
    row = resolution_vs_depth([DepthSample(fringe=fringe, ref=ref, grid=grid)])[0]
    assert row.depth == row.peak_depth
    assert row.depth == pytest.approx(0.8e-3, abs=1e-6)


def test_rolloff_follows_pixel_integration(mirror_scenario):
    base = mirror_scenario(pixel_integration=True)
    z_max = max_depth(base)
    depths = [0.3e-3, 1.0e-3, 2.0e-3]
    rows = sensitivity_rolloff([mirror_scenario(depth=d, pixel_integration=True) for d in depths])

    assert rows[0].peak_db == 0.0
    for row in rows:
        expected = expected_rolloff_db(row.depth, z_max) - expected_rolloff_db(depths[0], z_max)
        assert row.peak_db == pytest.approx(expected, abs=0.3)
    assert rows[-1].peak_db < -2.5


@settings(max_examples=20, deadline=None)
@given(a2=st.floats(min_value=-6e-11, max_value=-1.5e-11), depth=st.floats(min_value=0.2e-3, max_value=1.8e-3))
def test_compensation_never_broadens_the_psf(a2, depth):
    scenario = SimScenario(
        reflectors=ReflectorSet(reflectors=[Reflector(depth=depth)]),
        injected=DispersionCoefficients(a2=a2),
    )
    _, _, grid = generate_fringe(scenario)
    linear = KGrid.linear(float(grid.k.min()), float(grid.k.max()), grid.n)
    phase = phase_correction(DispersionModel(a2=a2, a3=0.0, k0=linear.k0), linear)

    raw = resolution_vs_depth([scenario])[0].fwhm
    fixed = resolution_vs_depth([scenario], phase)[0].fwhm
    assert fixed <= raw
    assert np.isfinite(fixed)


def test_repeated_calibrations_at_40_db_snr_agree(calibrator, mirror_scenario):
    base = mirror_scenario(a2=INJECTED_A2, warp=0.05)
    scenario = base.model_copy(update={"noise_sigma": noise_sigma_for_snr(base, 40.0)})

    values = []
    for run in range(10):
        fringe, ref, grid = generate_fringe(scenario, seed=[7, run])
        values.append(calibrator.calibrate_fringe(fringe, ref, grid).model.a2)

    stats = repeatability_stats(values)
    assert stats.count == 10
    assert abs(stats.cv) < 0.02
    assert stats.mean == pytest.approx(INJECTED_A2, rel=0.01)

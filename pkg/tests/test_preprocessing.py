import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models import (
    DegenerateReferenceError,
    KGrid,
    LengthMismatchError,
    ReferenceSpectrum,
    SpectralFringe,
    Stage,
    StageError,
    WindowKind,
)
from preprocessing import (
    apply_window,
    normalize_to_reference,
    preprocess,
    resample_to_linear_k,
    subtract_background,
    to_analytic,
)
from simulator import generate_fringe


def _normalized(scenario, seed=0):
    fringe, ref, grid = generate_fringe(scenario, seed)
    return normalize_to_reference(subtract_background(fringe, ref), ref), ref, grid


def test_stages_cannot_be_skipped(mirror_scenario):
    fringe, ref, _ = generate_fringe(mirror_scenario())
    with pytest.raises(StageError):
        normalize_to_reference(fringe, ref)
    with pytest.raises(StageError):
        apply_window(fringe)
    subtracted = subtract_background(fringe, ref)
    with pytest.raises(StageError):
        subtract_background(subtracted, ref)


def test_advance_never_goes_back(mirror_scenario):
    normalized, _, _ = _normalized(mirror_scenario())
    with pytest.raises(StageError):
        normalized.advance(normalized.samples, Stage.BACKGROUND_SUBTRACTED)


def test_reference_length_must_match(mirror_scenario):
    fringe, _, _ = generate_fringe(mirror_scenario())
    short = ReferenceSpectrum(background=np.zeros(100), source_power=np.ones(100))
    with pytest.raises(LengthMismatchError):
        subtract_background(fringe, short)


def test_normalization_recovers_pure_cosine(mirror_scenario):
    scenario = mirror_scenario()
    normalized, _, grid = _normalized(scenario)
    depth = scenario.reflectors.reflectors[0].depth
    np.testing.assert_allclose(normalized.samples, np.cos(2.0 * grid.k * depth), atol=1e-12)


def test_normalization_clamps_small_source_power():
    grid = KGrid.linear(7.0e6, 8.0e6, 256)
    power = np.ones(256)
    power[:10] = 0.0
    ref = ReferenceSpectrum(background=np.zeros(256), source_power=power)
    fringe = SpectralFringe(samples=np.ones(256), stage=Stage.RAW, grid=grid)

    normalized = normalize_to_reference(subtract_background(fringe, ref), ref, clamp_epsilon=1e-3)

    assert np.all(np.isfinite(normalized.samples))
    assert normalized.samples[0] == pytest.approx(1e3)
    assert normalized.samples[100] == pytest.approx(1.0)


def test_degenerate_reference_is_rejected():
    grid = KGrid.linear(7.0e6, 8.0e6, 128)
    ref = ReferenceSpectrum(background=np.zeros(128), source_power=np.zeros(128))
    fringe = SpectralFringe(samples=np.ones(128), stage=Stage.RAW, grid=grid)
    with pytest.raises(DegenerateReferenceError):
        normalize_to_reference(subtract_background(fringe, ref), ref)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(min_value=1e-3, max_value=1e3))
def test_normalization_is_scale_invariant(scale):
    grid = KGrid.linear(7.0e6, 8.0e6, 128)
    k = grid.k
    power = np.exp(-((k - 7.5e6) / 3e5) ** 2)
    background = 0.5 * power
    samples = background + power * np.cos(2.0 * k * 1e-4)

    def run(c):
        ref = ReferenceSpectrum(background=c * background, source_power=c * power)
        fringe = SpectralFringe(samples=c * samples, stage=Stage.RAW, grid=grid)
        return normalize_to_reference(subtract_background(fringe, ref), ref).samples

    np.testing.assert_allclose(run(scale), run(1.0), rtol=1e-9, atol=1e-12)


def test_linear_grid_is_copied_without_interpolation(mirror_scenario):
    normalized, _, grid = _normalized(mirror_scenario())
    resampled, linear = resample_to_linear_k(normalized, grid)
    assert resampled.stage == Stage.RESAMPLED
    np.testing.assert_array_equal(resampled.samples, normalized.samples)
    assert linear.is_linear


def test_descending_grid_is_reversed(mirror_scenario):
    normalized, _, grid = _normalized(mirror_scenario(descending_k=True))
    assert not grid.ascending
    resampled, linear = resample_to_linear_k(normalized, grid)
    assert linear.ascending
    np.testing.assert_allclose(resampled.samples, normalized.samples[::-1], atol=1e-9)


def test_warped_grid_resamples_to_the_analytic_fringe(mirror_scenario):
    scenario = mirror_scenario(warp=0.05)
    normalized, _, grid = _normalized(scenario)
    assert not grid.is_linear

    resampled, linear = resample_to_linear_k(normalized, grid)
    depth = scenario.reflectors.reflectors[0].depth
    expected = np.cos(2.0 * linear.k * depth)

    assert linear.k[0] == pytest.approx(grid.k.min())
    assert linear.k[-1] == pytest.approx(grid.k.max())
    np.testing.assert_allclose(resampled.samples[50:-50], expected[50:-50], atol=1e-3)


def test_hann_window_zeroes_the_edges(mirror_scenario):
    normalized, _, grid = _normalized(mirror_scenario())
    resampled, _ = resample_to_linear_k(normalized, grid)
    windowed = apply_window(resampled)
    assert windowed.stage == Stage.WINDOWED
    assert windowed.samples[0] == pytest.approx(0.0, abs=1e-15)
    assert windowed.samples[-1] == pytest.approx(0.0, abs=1e-15)

    flat = apply_window(resampled, WindowKind.RECTANGULAR)
    np.testing.assert_array_equal(flat.samples, resampled.samples)


def test_analytic_signal_keeps_the_real_part(mirror_scenario):
    windowed = preprocess(*generate_fringe(mirror_scenario()))
    analytic = to_analytic(windowed)
    scale = np.max(np.abs(windowed.samples))
    np.testing.assert_allclose(analytic.samples.real, windowed.samples, atol=1e-9 * scale)


def test_analytic_magnitude_is_the_envelope():
    n = 2048
    grid = KGrid.linear(7.0e6, 8.0e6, n)
    samples = np.cos(2.0 * np.pi * 100.3 * np.arange(n) / n)
    fringe = SpectralFringe(samples=samples, stage=Stage.RESAMPLED, grid=grid)

    envelope = np.abs(to_analytic(fringe).samples)[n // 4: 3 * n // 4]
    np.testing.assert_allclose(envelope, 1.0, atol=0.02)


def test_analytic_spectrum_has_no_negative_frequencies(mirror_scenario):
    windowed = preprocess(*generate_fringe(mirror_scenario(depth=700e-6)))
    spectrum = np.abs(np.fft.fft(to_analytic(windowed).samples))
    n = spectrum.size
    assert np.max(spectrum[n // 2 + 1:]) <= 1e-10 * np.max(spectrum)


_SMALL_GRID = KGrid.linear(7.0e6, 8.0e6, 64)
_SMALL_REF = ReferenceSpectrum(background=np.zeros(64), source_power=np.ones(64))
_STAGE_OPERATIONS = {
    "subtract_background": (lambda f: subtract_background(f, _SMALL_REF), {Stage.RAW}),
    "normalize_to_reference": (lambda f: normalize_to_reference(f, _SMALL_REF), {Stage.BACKGROUND_SUBTRACTED}),
    "resample_to_linear_k": (lambda f: resample_to_linear_k(f), {Stage.NORMALIZED}),
    "apply_window": (lambda f: apply_window(f), {Stage.RESAMPLED}),
    "to_analytic": (lambda f: to_analytic(f), {Stage.RESAMPLED, Stage.WINDOWED}),
}


@pytest.mark.parametrize("stage", list(Stage), ids=lambda s: s.name)
@pytest.mark.parametrize("operation", sorted(_STAGE_OPERATIONS))
def test_each_operation_accepts_only_its_stages(operation, stage):
    run, allowed = _STAGE_OPERATIONS[operation]
    fringe = SpectralFringe(samples=np.cos(0.3 * np.arange(64)), stage=stage, grid=_SMALL_GRID)
    if stage in allowed:
        run(fringe)
    else:
        with pytest.raises(StageError):
            run(fringe)


def test_background_subtraction_removes_the_dc_term(mirror_scenario):
    fringe, ref, _ = generate_fringe(mirror_scenario(depth=1e-3))
    raw = np.abs(np.fft.rfft(fringe.samples))
    assert np.argmax(raw) == 0

    subtracted = np.abs(np.fft.rfft(subtract_background(fringe, ref).samples))
    assert 20.0 * np.log10(subtracted[0] / subtracted.max()) < -40.0

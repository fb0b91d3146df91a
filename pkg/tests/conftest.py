"""Fixtures compartidas: configuración de la cadena y escenarios de espejo."""

import numpy as np
import pytest

from models import (
    DispersionCoefficients,
    GridWarp,
    Reflector,
    ReflectorSet,
    SimScenario,
    ToolConfig,
)
from optimizer import DispersionCalibrator
from simulator import generate_fringe

CALIBRATION_DEPTH = 200e-6
INJECTED_A2 = -4.118e-11


@pytest.fixture(scope="session")
def pipeline_config() -> ToolConfig:
    return ToolConfig(verbose=False)


@pytest.fixture(scope="session")
def stft_cfg(pipeline_config):
    return pipeline_config.stft_config()


@pytest.fixture(scope="session")
def mirror_scenario():
    """Fábrica de escenarios de un solo espejo"""

    def make(depth=CALIBRATION_DEPTH, a2=0.0, a3=0.0, warp=0.0, noise=0.0, **extra) -> SimScenario:
        return SimScenario(
            reflectors=ReflectorSet(reflectors=[Reflector(depth=depth)]),
            injected=DispersionCoefficients(a2=a2, a3=a3),
            grid_warp=GridWarp(kind="quadratic" if warp else "none", strength=warp),
            noise_sigma=noise,
            **extra,
        )

    return make


@pytest.fixture(scope="session")
def calibrator(pipeline_config) -> DispersionCalibrator:
    return DispersionCalibrator(config=pipeline_config)


@pytest.fixture(scope="session")
def resampled(calibrator):
    """Escenario → interferograma en etapa RESAMPLED"""

    def make(scenario: SimScenario, seed=0):
        fringe, ref, grid = generate_fringe(scenario, seed)
        return calibrator.prepare(fringe, ref, grid)

    return make


@pytest.fixture(scope="session")
def mirror_calibration(calibrator, mirror_scenario):
    """Calibración del espejo a 200 µm con dispersión inyectada y grilla deformada"""
    scenario = mirror_scenario(a2=INJECTED_A2, warp=0.05)
    fringe, ref, grid = generate_fringe(scenario, 7)
    return calibrator.calibrate_fringe(fringe, ref, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

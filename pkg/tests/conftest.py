import os

# keep test runs from writing the rotating log file
os.environ["PSM_LOG_FILE"] = ""

import numpy as np
import pytest

from app.models.models import FrameSequence, PressureSeries


def sinusoid(freq_hz, duration_s=60.0, fs=20.0, amplitude=1.0, offset=0.0, phase=0.0):
    t = np.arange(int(round(duration_s * fs))) / fs
    return offset + amplitude * np.sin(2 * np.pi * freq_hz * t + phase)


@pytest.fixture
def make_series():
    def factory(values, fs=20.0):
        return PressureSeries(np.asarray(values, dtype=float), fs)
    return factory


@pytest.fixture
def sine_series():
    def factory(freq_hz, duration_s=60.0, fs=20.0, amplitude=1.0, offset=0.0, phase=0.0):
        return PressureSeries(sinusoid(freq_hz, duration_s, fs, amplitude, offset, phase), fs)
    return factory


@pytest.fixture
def breathing_frames():
    """Frames whose thorax rows (4-5) breathe at `freq_hz` over a 0.2 psi load."""
    def factory(freq_hz=1.0, duration_s=60.0, fs=20.0, rows=8, cols=6):
        wave = sinusoid(freq_hz, duration_s, fs, amplitude=0.02, offset=0.2)
        data = np.zeros((wave.size, rows, cols))
        data[:, 4:6, :] = wave[:, None, None]
        data[:, 2:4, :] = 0.15
        return FrameSequence.from_array(data, fs)
    return factory

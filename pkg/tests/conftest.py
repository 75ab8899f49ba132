import numpy as np
import pytest


def sine(freq_hz: float, sample_rate_hz: float, n_cycles: float, amplitude: float = 1.0, phase: float = 0.0):
    """Sampled amplitude*sin(2*pi*freq*t + phase) over n_cycles periods."""
    n = int(round(n_cycles * sample_rate_hz / freq_hz))
    t = np.arange(n) / sample_rate_hz
    return amplitude * np.sin(2.0 * np.pi * freq_hz * t + phase)


@pytest.fixture
def grid():
    """Default 60 Hz grid sampled at 10 kHz."""
    return 60.0, 10_000.0

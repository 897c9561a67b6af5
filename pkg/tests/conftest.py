import numpy as np
import pytest
from scipy import ndimage


def synth_natural(size: int = 128, seed: int = 7, channels: int = 3) -> np.ndarray:
    """Smoothed multi-scale noise; stands in for a natural photograph."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size, channels))
    for sigma, amp in ((1, 0.2), (4, 0.4), (16, 0.4)):
        layer = rng.random((size, size, channels))
        acc += amp * ndimage.gaussian_filter(layer, sigma=(sigma, sigma, 0), mode="wrap")
    acc -= acc.min()
    acc /= acc.max()
    return acc.astype(np.float32)


@pytest.fixture
def natural_image():
    return synth_natural()


@pytest.fixture
def natural_gray():
    return synth_natural(channels=1)

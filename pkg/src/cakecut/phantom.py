"""Modified Shepp-Logan head phantom on the 0-255 scale."""
from __future__ import annotations

import numpy as np

# (intensity, semi-axis x, semi-axis y, centre x, centre y, rotation in degrees)
_MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def head_phantom(size: int = 128) -> np.ndarray:
    """Square ``size x size`` phantom, normalized to span 0..255."""
    coords = (np.arange(size) + 0.5) * (2.0 / size) - 1.0
    xx, yy = np.meshgrid(coords, -coords)
    img = np.zeros((size, size))
    for value, ax, ay, cx, cy, deg in _MODIFIED_SHEPP_LOGAN:
        th = np.deg2rad(deg)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        img[(u / ax) ** 2 + (v / ay) ** 2 <= 1.0] += value
    img -= img.min()
    return img * (255.0 / img.max())

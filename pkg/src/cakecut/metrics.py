"""Image quality figures of merit: relative error, PSNR, MSE, normalization."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

PEAK = 255.0


@dataclass(frozen=True)
class QualityReport:
    re_percent: float
    psnr_db: float
    mse: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(recon, original):
    recon = np.asarray(recon, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if recon.shape != original.shape:
        raise ValueError(f"shape mismatch: {recon.shape} vs {original.shape}")
    return recon, original


def frobenius_norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(np.abs(x) ** 2)))


def relative_error(recon, original) -> float:
    """``||recon - original||_F / ||original||_F`` in percent."""
    recon, original = _pair(recon, original)
    ref = frobenius_norm(original)
    if ref == 0:
        raise ZeroDivisionError("relative error is undefined for an all-zero reference")
    return 100.0 * frobenius_norm(recon - original) / ref


def mse(recon, original) -> float:
    recon, original = _pair(recon, original)
    return float(np.mean((original - recon) ** 2))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return float("inf")
    return float(10.0 * np.log10(PEAK**2 / value))


def psnr(recon, original) -> float:
    """PSNR in dB for images on the 0-255 scale; identical images give ``inf``."""
    return psnr_from_mse(mse(recon, original))


def normalize(x, target: str = "byte") -> np.ndarray:
    """Affinely map ``[min, max]`` onto ``[0, 1]`` (``unit``) or ``[0, 255]`` (``byte``).

    A constant image maps to all zeros.
    """
    scale = {"unit": 1.0, "byte": PEAK}[target]
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) * (scale / (hi - lo))


def quality_report(recon, original) -> QualityReport:
    value = mse(recon, original)
    return QualityReport(relative_error(recon, original), psnr_from_mse(value), value)

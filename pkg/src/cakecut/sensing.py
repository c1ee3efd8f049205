"""Matrix-free single-pixel measurement simulation.

The sensing operator ``A`` holds the first ``m`` sequency-ordered Hadamard
patterns of an order sequence (optionally after a pixel scramble), applied
to the row-major flattened image.  ``A`` is never stored.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hadamard import TransformOrdering, fwht
from .ordering import OrderSequence, PatternShape


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"  # none | awgn | poisson
    awgn_mean_fraction: float = 0.01
    awgn_variance: float = 1.0
    poisson_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "awgn", "poisson"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.awgn_variance < 0:
            raise ValueError("awgn_variance must be nonnegative")
        if self.kind == "poisson" and not self.poisson_scale > 0:
            raise ValueError("poisson_scale must be positive")

    @classmethod
    def default_awgn(cls) -> "NoiseModel":
        """Gaussian noise with mean 1% of the measured values mean and unit variance."""
        return cls(kind="awgn")


@dataclass
class SensingPlan:
    shape: PatternShape
    order: OrderSequence
    m: int
    modulation: str = "direct_pm1"  # direct_pm1 | complementary_pair
    noise: NoiseModel = field(default_factory=NoiseModel)
    pixel_permutation: np.ndarray | None = None

    def __post_init__(self):
        if self.order.shape != self.shape:
            raise ValueError("order shape does not match plan shape")
        if not 1 <= self.m <= self.shape.n:
            raise ValueError(f"measurement count must be in [1, {self.shape.n}], got {self.m}")
        if self.modulation not in ("direct_pm1", "complementary_pair"):
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.pixel_permutation is None and self.order.pixel_permutation is not None:
            self.pixel_permutation = self.order.pixel_permutation
        if self.pixel_permutation is not None:
            perm = np.asarray(self.pixel_permutation, dtype=np.int64)
            if not np.array_equal(np.sort(perm), np.arange(self.shape.n)):
                raise ValueError("pixel permutation is not a bijection")
            self.pixel_permutation = perm

    @property
    def n(self) -> int:
        return self.shape.n

    @property
    def sampling_ratio(self) -> float:
        return self.m / self.shape.n

    @property
    def selected(self) -> np.ndarray:
        return self.order.indices[: self.m]

    def to_dict(self) -> dict:
        return {
            "shape": str(self.shape),
            "method": self.order.method,
            "m": self.m,
            "modulation": self.modulation,
            "noise": asdict(self.noise),
            "order_sha256": hashlib.sha256(self.order.indices.tobytes()).hexdigest(),
            "pixel_permutation_sha256": (
                None if self.pixel_permutation is None
                else hashlib.sha256(self.pixel_permutation.tobytes()).hexdigest()
            ),
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _flatten(x, plan: SensingPlan) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (plan.shape.p, plan.shape.q):
        raise ValueError(f"image shape {x.shape} does not match plan shape {plan.shape}")
    v = x.reshape(-1)
    if plan.pixel_permutation is not None:
        v = v[plan.pixel_permutation]
    return v


def apply_sensing(x, plan: SensingPlan) -> np.ndarray:
    """Noise-free bucket values ``A x`` for the first ``m`` scheduled patterns."""
    spectrum = fwht(_flatten(x, plan), TransformOrdering.SEQUENCY)
    return spectrum[plan.selected]


def apply_adjoint(y_partial, plan: SensingPlan) -> np.ndarray:
    """``A^T y`` as a ``p x q`` image."""
    y_partial = np.asarray(y_partial, dtype=np.float64)
    if y_partial.shape != (plan.m,):
        raise ValueError(f"expected {plan.m} measurements, got {y_partial.shape}")
    full = np.zeros(plan.n)
    full[plan.selected] = y_partial
    u = fwht(full, TransformOrdering.SEQUENCY)
    if plan.pixel_permutation is not None:
        out = np.empty_like(u)
        out[plan.pixel_permutation] = u
        u = out
    return u.reshape(plan.shape.p, plan.shape.q)


@dataclass
class MeasurementSet:
    y: np.ndarray
    seed: int
    plan: SensingPlan
    y_plus: np.ndarray | None = None
    y_minus: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "y", "y_plus", "y_minus"])
        for t, value in enumerate(self.y):
            plus = "" if self.y_plus is None else repr(float(self.y_plus[t]))
            minus = "" if self.y_minus is None else repr(float(self.y_minus[t]))
            writer.writerow([t, repr(float(value)), plus, minus])
        return buf.getvalue()

    @staticmethod
    def columns_from_csv(text: str) -> dict[str, np.ndarray | None]:
        rows = list(csv.DictReader(io.StringIO(text)))
        cols: dict[str, np.ndarray | None] = {}
        for name in ("y", "y_plus", "y_minus"):
            values = [row[name] for row in rows]
            cols[name] = None if any(v == "" for v in values) else np.array([float(v) for v in values])
        return cols


def _awgn(rng: np.random.Generator, clean: np.ndarray, noise: NoiseModel) -> np.ndarray:
    mean = noise.awgn_mean_fraction * float(np.mean(clean))
    return clean + rng.normal(mean, np.sqrt(noise.awgn_variance), size=clean.shape)


def _poisson(rng: np.random.Generator, clean: np.ndarray, noise: NoiseModel) -> np.ndarray:
    rate = noise.poisson_scale * clean
    if np.any(rate < 0):
        raise ValueError("Poisson noise needs nonnegative bucket values; use complementary_pair modulation")
    return rng.poisson(rate).astype(np.float64) / noise.poisson_scale


def _add_noise(rng: np.random.Generator, clean: np.ndarray, noise: NoiseModel) -> np.ndarray:
    if noise.kind == "awgn":
        return _awgn(rng, clean, noise)
    if noise.kind == "poisson":
        return _poisson(rng, clean, noise)
    return clean.copy()


def measure(x, plan: SensingPlan, seed: int = 0) -> MeasurementSet:
    """Simulate the bucket record, with noise, for ``plan``.

    ``complementary_pair`` displays ``(A + 1)/2`` then its inverse and keeps
    the difference; each exposure gets its own noise draw.
    """
    x = np.asarray(x, dtype=np.float64)
    clean = apply_sensing(x, plan)
    rng_direct, rng_plus, rng_minus = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    if plan.modulation == "direct_pm1":
        return MeasurementSet(_add_noise(rng_direct, clean, plan.noise), seed, plan)
    total = float(x.sum())
    plus_clean = (clean + total) / 2
    minus_clean = total - plus_clean
    y_plus = _add_noise(rng_plus, plus_clean, plan.noise)
    y_minus = _add_noise(rng_minus, minus_clean, plan.noise)
    return MeasurementSet(y_plus - y_minus, seed, plan, y_plus=y_plus, y_minus=y_minus)


def complementary_rows(r: int, plan: SensingPlan) -> tuple[np.ndarray, np.ndarray]:
    """The 0/1 patterns displayed for scheduled measurement ``r`` (positive, inverse)."""
    y = np.zeros(plan.m)
    y[r] = 1.0
    row = apply_adjoint(y, plan)
    plus = (row + 1) / 2
    return plus, 1 - plus


def save_measurements(meas: MeasurementSet, csv_path, extra: dict | None = None) -> Path:
    """Write the bucket CSV and its JSON plan sidecar (``<csv>.json``)."""
    csv_path = Path(csv_path)
    _atomic_write(csv_path, meas.to_csv())
    sidecar = {"plan": meas.plan.to_dict(), "plan_digest": meas.plan.digest(), "seed": meas.seed}
    if extra:
        sidecar.update(extra)
    json_path = csv_path.with_suffix(csv_path.suffix + ".json")
    _atomic_write(json_path, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return json_path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)

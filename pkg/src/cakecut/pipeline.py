"""Experiment configuration and the order / simulate / reconstruct / sweep commands."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .imageio import ImageFormatError, conform, read_image, split_channels, to_gray, write_image
from .metrics import QualityReport, normalize, quality_report
from .ordering import METHODS, PatternShape, make_order
from .phantom import head_phantom
from .reconstruction import ReconstructionResult, SolverConfig, reconstruct_tv, reconstruct_zero_fill
from .sensing import MeasurementSet, NoiseModel, SensingPlan, _atomic_write, apply_sensing, measure, save_measurements

PHANTOM = "phantom"


class PlanMismatchError(ValueError):
    """Measurement files were produced under a different sensing plan."""


class NumericalFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Flat, JSON-serializable experiment description.

    ``input`` is an image path, or ``phantom`` for the built-in head phantom
    (sized by ``shape``, default 128x128).
    """

    input: str = PHANTOM
    shape: str | None = None
    resize: bool = False
    color_mode: str = "gray"  # gray | rgb_split
    methods: list[str] = field(default_factory=lambda: ["cc_ascending"])
    counter: str = "rule"
    criterion: str = "abs_descending"
    ratios: list[float] = field(default_factory=lambda: [0.0625])
    modulation: str = "direct_pm1"
    noise: str = "awgn"
    awgn_mean_fraction: float = 0.01
    awgn_variance: float = 1.0
    poisson_scale: float = 1.0
    solver: str = "tv"  # tv | zero_fill
    mu: float = 2.0**8
    beta: float = 2.0**5
    tv_flavor: str = "anisotropic_p1"
    outer_tol: float = 1e-4
    max_outer: int = 300
    max_inner: int = 10
    nonneg: bool = True
    fidelity_multiplier: bool = True
    seed: int = 0
    output_dir: str = "out"
    image_format: str = "png"  # png | pgm
    jobs: int = 1

    def __post_init__(self):
        self.methods = list(self.methods)
        self.ratios = [float(r) for r in self.ratios]
        if not self.methods or not self.ratios:
            raise ValueError("methods and ratios must be non-empty")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        for ratio in self.ratios:
            if not 0 < ratio <= 1:
                raise ValueError(f"sampling ratio {ratio} outside (0, 1]")
        if self.color_mode not in ("gray", "rgb_split"):
            raise ValueError(f"unknown color_mode {self.color_mode!r}")
        if self.solver not in ("tv", "zero_fill"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.image_format not in ("png", "pgm"):
            raise ValueError(f"unknown image_format {self.image_format!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        self.noise_model()
        self.solver_config()

    # serialization

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """Hash of the settings that affect results (``output_dir`` and ``jobs`` excluded)."""
        data = self.to_dict()
        data.pop("output_dir")
        data.pop("jobs")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]

    # derived objects

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise, self.awgn_mean_fraction, self.awgn_variance, self.poisson_scale)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            mu=self.mu, beta=self.beta, tv_flavor=self.tv_flavor, outer_tol=self.outer_tol,
            max_outer=self.max_outer, max_inner=self.max_inner, nonneg=self.nonneg,
            fidelity_multiplier=self.fidelity_multiplier,
        )

    def pattern_shape(self) -> PatternShape | None:
        return None if self.shape is None else PatternShape.parse(self.shape)


def measurement_count(n: int, ratio: float) -> int:
    """``max(1, floor(n * ratio))``, robust to ratios like 0.07 that are inexact in binary."""
    return max(1, min(n, math.floor(n * ratio + 1e-9)))


def provenance(config: ExperimentConfig) -> dict:
    return {"config_sha256": config.digest(), "seed": config.seed, "version": __version__}


# --- inputs ---------------------------------------------------------------


def load_channels(config: ExperimentConfig) -> tuple[PatternShape, list[tuple[str, np.ndarray]]]:
    """The reference image(s), each normalized to 0-255."""
    shape = config.pattern_shape()
    if config.input == PHANTOM:
        shape = shape or PatternShape(128, 128)
        if not shape.is_square:
            raise ValueError("the phantom is square; pick a square shape")
        return shape, [("gray", head_phantom(shape.p))]
    img = read_image(config.input)
    img = conform(img, None if shape is None else (shape.p, shape.q), config.resize)
    shape = PatternShape(img.shape[0], img.shape[1])
    if img.ndim == 3 and config.color_mode == "rgb_split":
        return shape, list(zip("rgb", split_channels(normalize(img))))
    return shape, [("gray", normalize(to_gray(img)))]


def build_plan(config: ExperimentConfig, shape: PatternShape, method: str, ratio: float,
               image: np.ndarray | None = None) -> SensingPlan:
    y_full = None
    if method == "oracle_sorted":
        if image is None:
            raise ValueError("oracle_sorted needs the reference image")
        y_full = apply_sensing(image, SensingPlan(shape, make_order(shape, "natural"), shape.n))
    order = make_order(shape, method, counter=config.counter, seed=config.seed,
                       y_full=y_full, criterion=config.criterion)
    return SensingPlan(shape, order, measurement_count(shape.n, ratio), config.modulation, config.noise_model())


def run_key(method: str, ratio: float) -> str:
    return f"{method}_r{ratio:.6g}"


def _reconstruct(meas: MeasurementSet, plan: SensingPlan, config: ExperimentConfig) -> ReconstructionResult:
    if config.solver == "zero_fill":
        t0 = time.perf_counter()
        img = reconstruct_zero_fill(meas, plan)
        result = ReconstructionResult(img, 0, wall_seconds=time.perf_counter() - t0)
    else:
        result = reconstruct_tv(meas, plan, config.solver_config())
    if not np.all(np.isfinite(result.image)):
        raise NumericalFailure("reconstruction produced non-finite pixels")
    return result


# --- commands ------------------------------------------------------------


def cmd_order(shape: PatternShape, method: str, out, *, counter: str = "rule", seed: int = 0) -> float:
    """Write the order CSV; return the generation time in seconds."""
    if method == "oracle_sorted":
        raise ValueError("oracle_sorted orders depend on an image; use simulate")
    t0 = time.perf_counter()
    order = make_order(shape, method, counter=counter, seed=seed)
    seconds = time.perf_counter() - t0
    _atomic_write(Path(out), order.to_csv())
    return seconds


def _meas_path(out: Path, key: str, channel: str) -> Path:
    return out / f"meas_{key}_{channel}.csv"


def cmd_simulate(config: ExperimentConfig) -> list[Path]:
    """Bucket CSV + JSON sidecar for every (method, ratio, channel)."""
    shape, channels = load_channels(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for method in config.methods:
        for ratio in config.ratios:
            key = run_key(method, ratio)
            for c, (name, img) in enumerate(channels):
                plan = build_plan(config, shape, method, ratio, img)
                meas = measure(img, plan, seed=config.seed + c)
                extra = {"channel": name, "ratio": ratio, "method": method, **provenance(config)}
                path = _meas_path(out, key, name)
                save_measurements(meas, path, extra)
                written.append(path)
    return written


def load_measurements(path, plan: SensingPlan) -> MeasurementSet:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if sidecar.get("plan_digest") != plan.digest():
        raise PlanMismatchError(f"{path.name}: measurements were taken under a different sensing plan")
    cols = MeasurementSet.columns_from_csv(path.read_text())
    if cols["y"] is None or len(cols["y"]) != plan.m:
        raise PlanMismatchError(f"{path.name}: expected {plan.m} measurements")
    return MeasurementSet(cols["y"], int(sidecar.get("seed", 0)), plan, cols["y_plus"], cols["y_minus"])


def merge_channels(images: list[np.ndarray]) -> np.ndarray:
    """Stack per-channel reconstructions and normalize them jointly to 0-255."""
    return normalize(images[0] if len(images) == 1 else np.stack(images, axis=-1))


def cmd_reconstruct(config: ExperimentConfig, measurements_dir=None) -> list[dict]:
    """Reconstruct every (method, ratio) found in ``measurements_dir``.

    Writes the normalized image, and a JSON report with quality figures and
    solver diagnostics.
    """
    shape, channels = load_channels(config)
    src = Path(measurements_dir or config.output_dir)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for method in config.methods:
        for ratio in config.ratios:
            key = run_key(method, ratio)
            recons, diagnostics, timing = [], {}, {}
            for name, img in channels:
                plan = build_plan(config, shape, method, ratio, img)
                result = _reconstruct(load_measurements(_meas_path(src, key, name), plan), plan, config)
                recons.append(result.image)
                diagnostics[name] = result.diagnostics()
                # wall time is the one nondeterministic output; it lives in its own file
                timing[name] = diagnostics[name].pop("wall_seconds")
            image = merge_channels(recons)
            reference = merge_channels([img for _, img in channels])
            quality: QualityReport = quality_report(image, reference)
            image_path = out / f"recon_{key}.{config.image_format}"
            write_image(image_path, image)
            report = {
                "key": key, "method": method, "ratio": ratio, "image": image_path.name,
                "quality": quality.to_dict(), "diagnostics": diagnostics, **provenance(config),
                # min == max: normalization mapped the reconstruction to all zeros
                "constant_image": bool(np.ptp(np.stack(recons)) == 0),
            }
            _atomic_write(out / f"recon_{key}.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
            _atomic_write(out / f"recon_{key}_timing.json", json.dumps(timing, sort_keys=True) + "\n")
            reports.append(report)
    return reports


# --- sweep ---------------------------------------------------------------


@dataclass
class SweepRecord:
    ratio: float
    method: str
    seed: int
    re_percent: float | None = None
    psnr_db: float | None = None
    wall_seconds: float | None = None
    error: str = ""

    @property
    def key(self) -> tuple[str, str, int]:
        return (f"{self.ratio:.6g}", self.method, self.seed)


SWEEP_FIELDS = ("ratio", "method", "seed", "m", "re_percent", "psnr_db", "outer_iterations", "error")
TIMING_FIELDS = ("ratio", "method", "seed", "wall_seconds")


def _sweep_job(args) -> tuple[SweepRecord, dict]:
    config, shape, image, method, ratio = args
    record = SweepRecord(ratio, method, config.seed)
    extra = {"m": measurement_count(shape.n, ratio), "outer_iterations": ""}
    try:
        plan = build_plan(config, shape, method, ratio, image)
        result = _reconstruct(measure(image, plan, seed=config.seed), plan, config)
        quality = quality_report(normalize(result.image), image)
        record.re_percent, record.psnr_db = quality.re_percent, quality.psnr_db
        record.wall_seconds = result.wall_seconds
        extra["outer_iterations"] = result.outer_iterations
    except (ValueError, ArithmeticError, NumericalFailure) as exc:
        record.error = f"{type(exc).__name__}: {exc}"
    return record, extra


def _read_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path: Path, fields, rows) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def cmd_sweep(config: ExperimentConfig, csv_name: str = "sweep.csv") -> Path:
    """One record per (ratio, method, seed); completed records are skipped on rerun.

    ``sweep.csv`` holds only deterministic columns, so identical configs give
    byte-identical files; wall-clock times go to ``sweep_timing.csv``.
    Failed records are kept as rows with the ``error`` column set.
    """
    shape, channels = load_channels(config)
    image = channels[0][1] if len(channels) == 1 else normalize(np.mean([c for _, c in channels], axis=0))
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / csv_name
    timing_path = out / (Path(csv_name).stem + "_timing.csv")

    rank = {(f"{r:.6g}", m): (i, j) for j, m in enumerate(config.methods) for i, r in enumerate(config.ratios)}
    rows = {(r["ratio"], r["method"], r["seed"]): r for r in _read_rows(path)}
    timings = {(r["ratio"], r["method"], r["seed"]): r for r in _read_rows(timing_path)}
    wanted = [(m, r) for r in config.ratios for m in config.methods]
    todo = [(m, r) for m, r in wanted if (f"{r:.6g}", m, str(config.seed)) not in rows]

    def sort_key(k):
        return rank.get((k[0], k[1]), (len(rank), 0)), k

    def flush():
        ordered = sorted(rows, key=sort_key)
        _write_rows(path, SWEEP_FIELDS, [rows[k] for k in ordered])
        _write_rows(timing_path, TIMING_FIELDS, [timings[k] for k in sorted(timings, key=sort_key)])

    def store(record: SweepRecord, extra: dict):
        key = (record.key[0], record.key[1], str(record.key[2]))
        rows[key] = {
            "ratio": key[0], "method": record.method, "seed": key[2], "m": _fmt(extra["m"]),
            "re_percent": _fmt(record.re_percent), "psnr_db": _fmt(record.psnr_db),
            "outer_iterations": _fmt(extra["outer_iterations"]), "error": record.error,
        }
        timings[key] = {"ratio": key[0], "method": record.method, "seed": key[2],
                        "wall_seconds": _fmt(record.wall_seconds)}
        flush()

    jobs = [(config, shape, image, m, r) for m, r in todo]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for record, extra in pool.map(_sweep_job, jobs):
                store(record, extra)
    else:
        for job in jobs:
            store(*_sweep_job(job))
    if not todo:
        flush()
    meta = {"records": len(rows), "computed": len(todo), **provenance(config)}
    _atomic_write(out / (Path(csv_name).stem + ".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path

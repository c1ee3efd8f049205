"""Total-variation reconstruction from partial Hadamard measurements.

The solver minimizes

    TV(x) + (mu / 2) * || A_n x - y_n ||^2

where ``A_n = A / sqrt(N)`` has orthonormal rows and ``y_n = y / sqrt(N)``.
The gradient is split off as ``w = D x`` and handled with an augmented
Lagrangian: a closed-form shrink for ``w``, a few Barzilai-Borwein gradient
steps with nonmonotone backtracking for ``x``, then multiplier ascent.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .sensing import MeasurementSet, SensingPlan, apply_adjoint, apply_sensing


class EmptyMeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 2.0**8
    beta: float = 2.0**5
    tv_flavor: str = "anisotropic_p1"  # anisotropic_p1 | isotropic_p2
    outer_tol: float = 1e-4
    max_outer: int = 300
    max_inner: int = 10
    nonneg: bool = True
    # Ascent on the Ax = y multiplier drives the iterates to exact data
    # consistency; without it the solver minimizes the penalized objective
    # and reports the best objective seen so far.
    fidelity_multiplier: bool = True

    def __post_init__(self):
        if not (self.mu > 0 and self.beta > 0):
            raise ValueError("mu and beta must be positive")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.tv_flavor not in ("anisotropic_p1", "isotropic_p2"):
            raise ValueError(f"unknown tv_flavor {self.tv_flavor!r}")


@dataclass
class ReconstructionResult:
    image: np.ndarray
    outer_iterations: int
    residual_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    config: SolverConfig | None = None

    def diagnostics(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "residual_history": self.residual_history,
            "objective_history": self.objective_history,
            "wall_seconds": self.wall_seconds,
            "config": None if self.config is None else asdict(self.config),
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True) + "\n"


# --- gradient and shrinkage ---------------------------------------------


def discrete_gradient(x) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences ``(horizontal, vertical)``; the last column/row difference is 0."""
    x = np.asarray(x, dtype=np.float64)
    gh = np.zeros_like(x)
    gv = np.zeros_like(x)
    gh[:, :-1] = x[:, 1:] - x[:, :-1]
    gv[:-1, :] = x[1:, :] - x[:-1, :]
    return gh, gv


def gradient_adjoint(gh, gv) -> np.ndarray:
    """``D^T (gh, gv)``, the negative divergence matching :func:`discrete_gradient`."""
    gh = np.asarray(gh, dtype=np.float64)
    gv = np.asarray(gv, dtype=np.float64)
    out = np.zeros_like(gh)
    out[:, :-1] -= gh[:, :-1]
    out[:, 1:] += gh[:, :-1]
    out[:-1, :] -= gv[:-1, :]
    out[1:, :] += gv[:-1, :]
    return out


def shrink(v, tau: float):
    """Soft threshold of a scalar/array."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def shrink_isotropic(vh, vv, tau: float):
    """Shrink 2-vectors ``(vh, vv)`` toward zero by ``tau`` in Euclidean length."""
    vh = np.asarray(vh, dtype=np.float64)
    vv = np.asarray(vv, dtype=np.float64)
    norm = np.hypot(vh, vv)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norm > 0, np.maximum(norm - tau, 0.0) / norm, 0.0)
    return vh * scale, vv * scale


def total_variation(x, flavor: str = "anisotropic_p1") -> float:
    gh, gv = discrete_gradient(x)
    if flavor == "anisotropic_p1":
        return float(np.abs(gh).sum() + np.abs(gv).sum())
    return float(np.hypot(gh, gv).sum())


# --- operator -----------------------------------------------------------


class NormalizedOperator:
    """``A / sqrt(N)`` and its adjoint for a sensing plan."""

    def __init__(self, plan: SensingPlan):
        self.plan = plan
        self.scale = 1.0 / np.sqrt(plan.n)

    def forward(self, x) -> np.ndarray:
        return apply_sensing(x, self.plan) * self.scale

    def adjoint(self, y) -> np.ndarray:
        return apply_adjoint(y, self.plan) * self.scale


def fidelity(op: NormalizedOperator, x, y_n, mu: float) -> float:
    r = op.forward(x) - y_n
    return 0.5 * mu * float(r @ r)


def fidelity_gradient(op: NormalizedOperator, x, y_n, mu: float) -> np.ndarray:
    return mu * op.adjoint(op.forward(x) - y_n)


def objective(op: NormalizedOperator, x, y_n, config: SolverConfig) -> float:
    return total_variation(x, config.tv_flavor) + fidelity(op, x, y_n, config.mu)


# --- solvers ------------------------------------------------------------


def _check_measurements(meas: MeasurementSet, plan: SensingPlan) -> np.ndarray:
    y = np.asarray(meas.y, dtype=np.float64)
    if y.size == 0 or plan.m == 0:
        raise EmptyMeasurementError("no measurements to reconstruct from")
    if y.shape != (plan.m,):
        raise ValueError(f"measurement length {y.shape} does not match plan m={plan.m}")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurements contain non-finite values")
    return y


def reconstruct_zero_fill(meas: MeasurementSet, plan: SensingPlan) -> np.ndarray:
    """Back-projection ``A^T y / N``; exact when every pattern was measured."""
    y = _check_measurements(meas, plan)
    return apply_adjoint(y, plan) / plan.n


class _AugmentedLagrangian:
    """The augmented Lagrangian with ``w`` minimized out, as a smooth function of ``x``.

    For fixed multipliers ``nu`` (on ``D x = w``) and ``lam`` (on ``A_n x = y_n``)::

        phi(x) = min_w sum|w| - nu.(Dx - w) + beta/2 |Dx - w|^2
                 + mu/2 |A_n x - y_n|^2 - lam.(A_n x - y_n)
    """

    def __init__(self, op, y_n, config: SolverConfig):
        self.op = op
        self.y_n = y_n
        self.mu = config.mu
        self.beta = config.beta
        self.iso = config.tv_flavor == "isotropic_p2"

    def set_multipliers(self, nu_h, nu_v, lam):
        self.nu_h, self.nu_v = nu_h, nu_v
        self.target = self.y_n + lam / self.mu

    def shrink_w(self, dh, dv):
        beta = self.beta
        vh, vv = dh - self.nu_h / beta, dv - self.nu_v / beta
        if self.iso:
            return shrink_isotropic(vh, vv, 1.0 / beta)
        return shrink(vh, 1.0 / beta), shrink(vv, 1.0 / beta)

    def evaluate(self, x):
        """Value, gradient and the pieces reused by the caller."""
        beta, mu = self.beta, self.mu
        dh, dv = discrete_gradient(x)
        wh, wv = self.shrink_w(dh, dv)
        eh = dh - self.nu_h / beta - wh
        ev = dv - self.nu_v / beta - wv
        ax = self.op.forward(x)
        r = ax - self.target
        w_norm = np.hypot(wh, wv).sum() if self.iso else np.abs(wh).sum() + np.abs(wv).sum()
        value = float(w_norm) + 0.5 * beta * float(np.sum(eh * eh) + np.sum(ev * ev)) + 0.5 * mu * float(r @ r)
        grad = beta * gradient_adjoint(eh, ev) + mu * self.op.adjoint(r)
        return value, grad, (dh, dv, wh, wv, ax)


def reconstruct_tv(meas: MeasurementSet, plan: SensingPlan, config: SolverConfig | None = None) -> ReconstructionResult:
    """TV reconstruction, started from the zero-fill image.

    Intensities are divided by the peak of the zero-fill image before solving
    (and multiplied back afterwards) so the default ``mu``/``beta`` act on
    unit-range data.  ``objective_history`` holds the objective in those
    units; ``residual_history`` holds ``||A x - y||`` in the input units.

    With ``fidelity_multiplier`` off, the returned image and both histories
    follow the best-objective iterate, so the objective never increases.
    """
    config = config or SolverConfig()
    y = _check_measurements(meas, plan)
    t0 = time.perf_counter()
    op = NormalizedOperator(plan)
    x = apply_adjoint(y, plan) / plan.n
    scale = float(np.max(np.abs(x))) or 1.0
    y_n = y * (op.scale / scale)
    x = x / scale
    if config.nonneg:
        np.maximum(x, 0.0, out=x)
    mu, beta = config.mu, config.beta
    lipschitz = mu + 8.0 * beta

    al = _AugmentedLagrangian(op, y_n, config)
    nu_h = np.zeros_like(x)
    nu_v = np.zeros_like(x)
    lam = np.zeros_like(y_n)
    step = 1.0 / lipschitz
    reported, reported_ax = x, op.forward(x)

    residuals: list[float] = []
    objectives: list[float] = []
    outer = 0
    for outer in range(1, config.max_outer + 1):
        x_prev = x
        al.set_multipliers(nu_h, nu_v, lam)
        value, grad, parts = al.evaluate(x)
        recent = [value]
        best = (value, x, grad, parts)
        for _ in range(config.max_inner):
            if not np.any(grad):
                break
            ref = max(recent[-5:])
            while True:
                cand = x - step * grad
                if config.nonneg:
                    np.maximum(cand, 0.0, out=cand)
                c_value, c_grad, c_parts = al.evaluate(cand)
                moved = float(np.sum((cand - x) ** 2))
                if c_value <= ref - 1e-4 * moved / step or step <= 1e-3 / lipschitz:
                    break
                step *= 0.5
            s = (cand - x).ravel()
            d = (c_grad - grad).ravel()
            sd = float(s @ d)
            step = float(s @ s) / sd if sd > 0 else 1.0 / lipschitz
            x, value, grad, parts = cand, c_value, c_grad, c_parts
            recent.append(value)
            if value < best[0]:
                best = (value, x, grad, parts)
            if moved == 0:
                break
        # nonmonotone steps may end above the best point seen; restart from it
        value, x, grad, parts = best
        dh, dv, wh, wv, ax = parts
        nu_h = nu_h - beta * (dh - wh)
        nu_v = nu_v - beta * (dv - wv)
        if config.fidelity_multiplier:
            lam = lam - mu * (ax - y_n)

        f_value = total_variation(x, config.tv_flavor) + 0.5 * mu * float(np.sum((ax - y_n) ** 2))
        if config.fidelity_multiplier or not objectives or f_value <= objectives[-1]:
            reported, reported_ax = x, ax
        else:
            f_value = objectives[-1]
        residuals.append(float(np.linalg.norm(reported_ax - y_n)) * scale / op.scale)
        objectives.append(f_value)
        change = np.linalg.norm(x - x_prev) / max(np.linalg.norm(x_prev), 1e-300)
        if change < config.outer_tol:
            break

    return ReconstructionResult(
        image=reported * scale,
        outer_iterations=outer,
        residual_history=residuals,
        objective_history=objectives,
        wall_seconds=time.perf_counter() - t0,
        config=config,
    )

"""Simultaneous perturbation stochastic approximation (SPSA).

The optimizer runs any number of independent trajectories in lock-step so
that a batched objective can evaluate all of them in one call. Each
trajectory owns its random stream, so its iterates do not depend on which
other trajectories share the batch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

# a0 used when the calibration sees no gradient at all
MAX_A0 = 10.0
FLAT_GRADIENT = 1e-12

Objective = Callable[[np.ndarray], float]
BatchObjective = Callable[[np.ndarray], np.ndarray]
Observer = Callable[[int, np.ndarray, np.ndarray], None]


@dataclass(frozen=True)
class SpsaConfig:
    """Gain schedule ``a_k = a0/(k+1+A)**alpha``, ``c_k = c0/(k+1)**gamma``.

    ``a0=None`` means "calibrate before the first update". With
    ``iteration_mode="evaluation"`` each of the two perturbed evaluations
    counts towards ``max_iterations``, halving the number of updates.
    """

    alpha: float = 0.602
    gamma: float = 0.101
    c0: float = 0.01
    a0: Optional[float] = None
    stability_A: float = 0.0
    max_iterations: int = 1000
    calibration_steps: int = 100
    seed: int = 0
    target_first_step: float = 0.1
    iteration_mode: str = "update"

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if self.stability_A < 0:
            raise ValueError("stability_A must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.a0 is None and self.calibration_steps < 1:
            raise ValueError("calibration needs calibration_steps >= 1")
        if self.a0 is not None and self.a0 < 0:
            raise ValueError("a0 must be non-negative")
        if self.iteration_mode not in ("update", "evaluation"):
            raise ValueError("iteration_mode must be 'update' or 'evaluation'")

    @property
    def n_updates(self) -> int:
        if self.iteration_mode == "evaluation":
            return max(self.max_iterations // 2, 1)
        return self.max_iterations

    def a(self, k) -> np.ndarray:
        return 1.0 / (np.asarray(k) + 1.0 + self.stability_A) ** self.alpha

    def c(self, k) -> np.ndarray:
        return self.c0 / (np.asarray(k) + 1.0) ** self.gamma


@dataclass
class SpsaResult:
    theta: np.ndarray
    values: np.ndarray
    a0: float


@dataclass
class SpsaBatchResult:
    theta: np.ndarray  # (R, P)
    values: np.ndarray  # (R, n_updates)
    a0: np.ndarray  # (R,)


def rademacher(rng: np.random.Generator, size: int) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=size) - 1.0


def _deltas(rngs: Sequence[np.random.Generator], p: int) -> np.ndarray:
    return np.stack([rademacher(r, p) for r in rngs])


def gradient_estimate_batch(
    f: BatchObjective, theta: np.ndarray, ck: float, rngs: Sequence[np.random.Generator]
) -> np.ndarray:
    """Two-point estimate for every row of ``theta`` from one batched objective call."""
    if ck <= 0:
        raise ValueError("perturbation size must be positive")
    theta = np.atleast_2d(theta)
    delta = _deltas(rngs, theta.shape[1])
    vals = np.asarray(f(np.concatenate([theta + ck * delta, theta - ck * delta])), dtype=float)
    r = theta.shape[0]
    return (vals[:r] - vals[r:])[:, None] / (2.0 * ck * delta)


def gradient_estimate(f: Objective, theta: np.ndarray, ck: float, rng: np.random.Generator) -> np.ndarray:
    """``[f(theta + ck D) - f(theta - ck D)] / (2 ck D_m)`` with Rademacher ``D``."""
    theta = np.asarray(theta, dtype=float)
    g = gradient_estimate_batch(_batched(f), theta[None, :], ck, [rng])
    return g[0]


def _batched(f: Objective) -> BatchObjective:
    return lambda th: np.array([f(t) for t in th], dtype=float)


def calibrate_batch(
    f: BatchObjective, theta0: np.ndarray, cfg: SpsaConfig, rngs: Sequence[np.random.Generator]
) -> np.ndarray:
    theta0 = np.atleast_2d(np.asarray(theta0, dtype=float))
    total = np.zeros(theta0.shape[0])
    for _ in range(cfg.calibration_steps):
        g = gradient_estimate_batch(f, theta0, cfg.c0, rngs)
        total += np.mean(np.abs(g), axis=1)
    mean = total / cfg.calibration_steps
    flat = mean < FLAT_GRADIENT
    if np.any(flat):
        warnings.warn(
            f"flat objective at the start point of {int(flat.sum())} run(s); a0 capped at {MAX_A0}",
            RuntimeWarning,
            stacklevel=2,
        )
    safe = np.where(flat, 1.0, mean)
    a0 = cfg.target_first_step * (1.0 + cfg.stability_A) ** cfg.alpha / safe
    return np.where(flat, MAX_A0, np.minimum(a0, MAX_A0))


def calibrate(f: Objective, theta0: np.ndarray, cfg: SpsaConfig, rng: np.random.Generator | None = None) -> float:
    """Pick ``a0`` so the first update moves each angle by ``target_first_step`` on average."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return float(calibrate_batch(_batched(f), theta0, cfg, [rng])[0])


def minimize_batch(
    f: BatchObjective,
    theta0: np.ndarray,
    cfg: SpsaConfig,
    rngs: Sequence[np.random.Generator],
    on_iteration: Observer | None = None,
) -> SpsaBatchResult:
    """Run ``len(rngs)`` independent SPSA trajectories side by side.

    ``f`` maps an ``(M, P)`` array of parameter rows to ``M`` values. Each
    update costs one call on ``2R`` rows plus one call on ``R`` rows for
    the traced value at the new iterate.
    """
    theta = np.array(np.atleast_2d(theta0), dtype=float)
    r = theta.shape[0]
    if len(rngs) != r:
        raise ValueError(f"need one random stream per trajectory ({r}), got {len(rngs)}")
    if cfg.a0 is None:
        a0 = calibrate_batch(f, theta, cfg, rngs)
    else:
        a0 = np.full(r, float(cfg.a0))
    n = cfg.n_updates
    values = np.empty((r, n))
    for k in range(n):
        ck = float(cfg.c(k))
        g = gradient_estimate_batch(f, theta, ck, rngs)
        theta = theta - (a0 * cfg.a(k))[:, None] * g
        values[:, k] = f(theta)
        if on_iteration is not None:
            on_iteration(k, theta, values[:, k])
    return SpsaBatchResult(theta, values, a0)


@dataclass
class SpsaState:
    """Iterate, update counter and the run's own random stream, for stepping by hand."""

    theta: np.ndarray
    iteration: int
    rng: np.random.Generator


def step(f: Objective, state: SpsaState, cfg: SpsaConfig, a0: float) -> SpsaState:
    k = state.iteration
    g = gradient_estimate(f, state.theta, float(cfg.c(k)), state.rng)
    return SpsaState(state.theta - a0 * float(cfg.a(k)) * g, k + 1, state.rng)


def minimize(
    f: Objective,
    theta0: np.ndarray,
    cfg: SpsaConfig,
    on_iteration: Callable[[int, np.ndarray, float], None] | None = None,
) -> SpsaResult:
    """Minimize a scalar objective; the random stream is seeded from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    observer = None
    if on_iteration is not None:
        def observer(k, th, vals):
            on_iteration(k, th[0].copy(), float(vals[0]))
    res = minimize_batch(_batched(f), np.asarray(theta0, dtype=float)[None, :], cfg, [rng], observer)
    return SpsaResult(res.theta[0], res.values[0], float(res.a0[0]))


__all__ = [
    "SpsaConfig",
    "SpsaResult",
    "SpsaBatchResult",
    "SpsaState",
    "step",
    "gradient_estimate",
    "gradient_estimate_batch",
    "calibrate",
    "calibrate_batch",
    "minimize",
    "minimize_batch",
]

"""The VQE loop: exact energies of the trial state, SPSA updates, traces and
convergence statistics over seeded ensembles."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .ansatz import DEFAULT_REGISTRY, Ansatz, EntanglerRegistry, ParameterVector
from .entanglement import integrate_entanglement, snapshot_arrays
from .models import ModelId, hamiltonian, reference_ground_energy
from .spsa import SpsaConfig, minimize_batch
from .state_core import PauliSum, eigenvalues_hermitian, expectation, to_dense

# (iterations, calibration steps, repetitions, blocks) per model
DEFAULT_BUDGETS = {
    ModelId.Delta1: (1000, 100, 1000, 3),
    ModelId.Separable: (1000, 100, 1000, 3),
    ModelId.Delta2: (2000, 200, 500, 5),
    ModelId.Delta3: (4000, 250, 100, 8),
    ModelId.Delta4S: (6000, 300, 100, 12),
    ModelId.Delta4L: (6000, 300, 100, 12),
    ModelId.Delta4P: (6000, 300, 100, 12),
}

CONVERGENCE_THRESHOLD = 0.02
BIN_WIDTH = 200
# SPSA calibration target: mean first-step change of each angle, radians
DEFAULT_FIRST_STEP = 2 * math.pi / 10
# runs evaluated together in one batched objective call
CHUNK = 256


@dataclass(frozen=True)
class RunConfig:
    """One VQE setting. ``None`` budgets are filled from the per-model defaults."""

    model: "ModelId | str | PauliSum" = ModelId.Delta1
    entangler: str = "Ent1"
    d_blocks: Optional[int] = None
    iterations: Optional[int] = None
    calibration_steps: Optional[int] = None
    repetitions: Optional[int] = None
    base_seed: int = 0
    track_entanglement: bool = False
    fixed_theta0: bool = False
    threshold: float = CONVERGENCE_THRESHOLD
    alpha: float = 0.602
    gamma: float = 0.101
    c0: float = 0.01
    stability_A: float = 0.0
    target_first_step: float = DEFAULT_FIRST_STEP
    iteration_mode: str = "update"

    def __post_init__(self):
        if not isinstance(self.model, PauliSum):
            object.__setattr__(self, "model", ModelId.parse(self.model))
        defaults = DEFAULT_BUDGETS.get(self.model, (1000, 100, 100, 3))
        for name, value in zip(("iterations", "calibration_steps", "repetitions", "d_blocks"), defaults):
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.d_blocks < 1 or self.iterations < 1 or self.repetitions < 1:
            raise ValueError("d_blocks, iterations and repetitions must be positive")
        if self.track_entanglement and self.n_qubits != 3:
            raise ValueError("entanglement tracking is defined for 3-qubit models only")

    @property
    def n_qubits(self) -> int:
        return self.hamiltonian().n_qubits

    @property
    def model_name(self) -> str:
        return "custom" if isinstance(self.model, PauliSum) else self.model.value

    def hamiltonian(self) -> PauliSum:
        return self.model if isinstance(self.model, PauliSum) else hamiltonian(self.model)

    def ground_energy(self) -> float:
        if isinstance(self.model, PauliSum):
            return float(eigenvalues_hermitian(to_dense(self.model))[0])
        return reference_ground_energy(self.model)

    def spsa_config(self) -> SpsaConfig:
        return SpsaConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            c0=self.c0,
            stability_A=self.stability_A,
            max_iterations=self.iterations,
            calibration_steps=self.calibration_steps,
            target_first_step=self.target_first_step,
            iteration_mode=self.iteration_mode,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model_name if not isinstance(self.model, PauliSum) else self.model.to_text()
        return d


@dataclass
class RunTrace:
    energies: np.ndarray
    final_theta: ParameterVector
    seed: int
    ground_energy: float
    a0: float
    snapshots: Optional[np.ndarray] = None  # (iterations, 4): c01, c02, c12, tau3

    def first_hit(self, threshold: float = CONVERGENCE_THRESHOLD) -> Optional[int]:
        return first_convergence_iteration(self, self.ground_energy, threshold)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["iteration", "energy"]
        if self.snapshots is not None:
            header += ["c01", "c02", "c12", "tau3"]
        w.writerow(header)
        for k, e in enumerate(self.energies):
            row = [k, f"{e:.17g}"]
            if self.snapshots is not None:
                row += [f"{x:.17g}" for x in self.snapshots[k]]
            w.writerow(row)
        return buf.getvalue()


def first_convergence_iteration(trace, eg: float, threshold: float = CONVERGENCE_THRESHOLD) -> Optional[int]:
    """Index of the first energy within ``threshold * |eg|`` of ``eg``, or ``None``."""
    if eg == 0:
        raise ValueError("relative convergence is undefined for a zero ground energy")
    energies = trace.energies if isinstance(trace, RunTrace) else np.asarray(trace, dtype=float)
    hits = np.flatnonzero(np.abs(energies - eg) <= threshold * abs(eg))
    return int(hits[0]) if hits.size else None


def _streams(seed: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    init, opt = np.random.SeedSequence(seed).spawn(2)
    return init, opt


def initial_angles(seed: int, n_params: int) -> np.ndarray:
    """Uniform angles in ``[0, 2pi)`` drawn from the run's initialization stream."""
    return np.random.default_rng(_streams(seed)[0]).uniform(0.0, 2 * math.pi, n_params)


def run_batch(cfg: RunConfig, seeds: Sequence[int],
              registry: EntanglerRegistry = DEFAULT_REGISTRY) -> list[RunTrace]:
    """Run one VQE optimization per seed, all in a single lock-step batch."""
    h = cfg.hamiltonian()
    eg = cfg.ground_energy()
    ansatz = Ansatz(h.n_qubits, cfg.d_blocks, cfg.entangler, registry)
    spsa_cfg = cfg.spsa_config()
    seeds = [int(s) for s in seeds]
    if cfg.fixed_theta0:
        theta0 = np.tile(initial_angles(cfg.base_seed, ansatz.n_params), (len(seeds), 1))
    else:
        theta0 = np.stack([initial_angles(s, ansatz.n_params) for s in seeds])
    rngs = [np.random.default_rng(_streams(s)[1]) for s in seeds]

    def objective(theta: np.ndarray) -> np.ndarray:
        return expectation(ansatz.state(theta), h)

    snaps = None
    observer = None
    if cfg.track_entanglement:
        snaps = np.empty((len(seeds), spsa_cfg.n_updates, 4))

        def observer(k, theta, _values):
            snaps[:, k, :] = snapshot_arrays(ansatz.state(theta))

    res = minimize_batch(objective, theta0, spsa_cfg, rngs, observer)
    if np.min(res.values) < eg - 1e-9:
        raise ArithmeticError("traced energy fell below the exact ground energy")
    return [
        RunTrace(
            energies=res.values[r],
            final_theta=ParameterVector(cfg.d_blocks, h.n_qubits, res.theta[r]),
            seed=s,
            ground_energy=eg,
            a0=float(res.a0[r]),
            snapshots=None if snaps is None else snaps[r],
        )
        for r, s in enumerate(seeds)
    ]


def run_vqe(cfg: RunConfig, seed: int, registry: EntanglerRegistry = DEFAULT_REGISTRY) -> RunTrace:
    return run_batch(cfg, [seed], registry)[0]


@dataclass
class ConvergenceReport:
    n_runs: int
    first_hits: list  # per run, None when never converged
    iterations: int
    threshold: float = CONVERGENCE_THRESHOLD
    entanglement: Optional[dict] = None  # integrated-entanglement mean/std

    @property
    def converged(self) -> list[bool]:
        return [h is not None for h in self.first_hits]

    @property
    def fraction_converged(self) -> float:
        return sum(self.converged) / self.n_runs

    @property
    def bin_200(self) -> list[int]:
        """Converged-run counts per window of 200 iterations (1-200, 201-400, ...)."""
        counts = [0] * math.ceil(self.iterations / BIN_WIDTH)
        for h in self.first_hits:
            if h is not None:
                counts[h // BIN_WIDTH] += 1
        return counts

    @property
    def bin_fractions(self) -> list[float]:
        return [c / self.n_runs for c in self.bin_200]

    def median_first_hit(self) -> Optional[float]:
        hits = [h for h in self.first_hits if h is not None]
        return float(np.median(hits)) if hits else None

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "iterations": self.iterations,
            "threshold": self.threshold,
            "fraction_converged": self.fraction_converged,
            "bin_200": self.bin_200,
            "bin_fractions": self.bin_fractions,
            "median_first_hit": self.median_first_hit(),
            "first_hits": self.first_hits,
            "entanglement": self.entanglement,
        }


@dataclass
class EnsembleResult:
    config: RunConfig
    report: ConvergenceReport
    traces: list[RunTrace] = field(repr=False)

    def snapshots(self) -> np.ndarray:
        """Stacked ``(runs, iterations, 4)`` entanglement traces."""
        return np.stack([t.snapshots for t in self.traces])


def integrated_statistics(traces: Sequence[RunTrace]) -> dict:
    """Ensemble mean and standard deviation of each run's integrated entanglement."""
    per_run = np.array([integrate_entanglement(t.snapshots).as_tuple() for t in traces])
    names = ("c01", "c02", "c12", "tau3")
    return {
        n: {"mean": float(per_run[:, i].mean()), "std": float(per_run[:, i].std())}
        for i, n in enumerate(names)
    }


def run_ensemble(cfg: RunConfig, registry: EntanglerRegistry = DEFAULT_REGISTRY) -> EnsembleResult:
    """``cfg.repetitions`` runs with seeds ``base_seed, base_seed+1, ...``."""
    seeds = [cfg.base_seed + r for r in range(cfg.repetitions)]
    traces: list[RunTrace] = []
    for start in range(0, len(seeds), CHUNK):
        traces.extend(run_batch(cfg, seeds[start:start + CHUNK], registry))
    report = ConvergenceReport(
        n_runs=len(traces),
        first_hits=[t.first_hit(cfg.threshold) for t in traces],
        iterations=len(traces[0].energies),
        threshold=cfg.threshold,
        entanglement=integrated_statistics(traces) if cfg.track_entanglement else None,
    )
    return EnsembleResult(cfg, report, traces)


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    return replace(cfg, **kwargs)

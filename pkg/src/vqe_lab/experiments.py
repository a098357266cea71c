"""Declarative experiment harness: benchmark tables, block sweeps,
entanglement profiles, depth-vs-accuracy scaling and angle rounding.

Every study fans out over independent (model, entangler, D) ensembles.
Each ensemble's seeds are fixed by the experiment description alone, so
results do not depend on how many workers run them or in which order they
finish.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .ansatz import Ansatz
from .models import ModelId, n_qubits
from .state_core import expectation
from .vqe import RunConfig, RunTrace, run_batch, run_ensemble

WORKERS_ENV = "VQE_LAB_WORKERS"
PLATEAU_THRESHOLD = 5.0e-2
SK_FULL_BUDGET = 30_000
SK_BUDGET_DIVISOR = 10


class ExperimentKind(str, enum.Enum):
    EntanglerBenchmark = "EntanglerBenchmark"
    BlockSweep = "BlockSweep"
    EntanglementProfile = "EntanglementProfile"
    SkScaling = "SkScaling"
    AnglePrecision = "AnglePrecision"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    models: tuple[str, ...] = ()
    entanglers: tuple[str, ...] = ()
    d_values: tuple[int, ...] = ()
    iterations: Optional[int] = None
    calibration_steps: Optional[int] = None
    repetitions: Optional[int] = None
    seed: int = 0
    output: Optional[str] = None
    dp_values: tuple[int, ...] = tuple(range(1, 9))
    plateau_threshold: float = PLATEAU_THRESHOLD
    aggregate: str = "best"
    full_budget: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        models = tuple(ModelId.parse(m).value for m in self.models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "entanglers", tuple(str(e) for e in self.entanglers))
        object.__setattr__(self, "d_values", tuple(int(d) for d in self.d_values))
        object.__setattr__(self, "dp_values", tuple(int(d) for d in self.dp_values))
        if self.aggregate not in ("best", "median"):
            raise ValueError("aggregate must be 'best' or 'median'")
        self._validate()

    def _validate(self) -> None:
        k = ExperimentKind
        need = {
            k.EntanglerBenchmark: ("models", "entanglers"),
            k.BlockSweep: ("models", "entanglers", "d_values"),
            k.EntanglementProfile: ("models", "entanglers"),
            k.SkScaling: ("models", "entanglers", "d_values"),
            k.AnglePrecision: ("models", "entanglers", "d_values", "dp_values"),
        }[self.kind]
        missing = [f for f in need if not getattr(self, f)]
        if missing:
            raise ValueError(f"{self.kind.value} spec is missing {', '.join(missing)}")
        single = {k.BlockSweep, k.SkScaling, k.AnglePrecision}
        if self.kind in single and (len(self.models) != 1 or len(self.entanglers) != 1):
            raise ValueError(f"{self.kind.value} takes exactly one model and one entangler")
        if self.kind is k.AnglePrecision and len(self.d_values) != 1:
            raise ValueError("AnglePrecision takes a single D")
        if self.kind is k.SkScaling and list(self.d_values) != sorted(set(self.d_values)):
            raise ValueError("d_values must be strictly ascending")
        if self.kind is k.EntanglementProfile:
            bad = [m for m in self.models if n_qubits(m) != 3]
            if bad:
                raise ValueError(f"entanglement profiles need 3-qubit models, got {bad}")
        if any(d < 1 for d in self.d_values):
            raise ValueError("d_values must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        for key in ("models", "entanglers", "d_values", "dp_values"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if "kind" not in d:
            raise ValueError("experiment spec needs a 'kind'")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("models", "entanglers", "d_values", "dp_values"):
            if key in d and isinstance(d[key], (str, int)):
                d[key] = [d[key]]
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; the output path does not contribute."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- worker pool

def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def fan_out(fn: Callable, jobs: Sequence, workers: Optional[int] = None) -> list:
    """``[fn(j) for j in jobs]``, on a process pool when more than one worker is configured.

    Results come back in job order whatever the completion order.
    """
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ----------------------------------------------------------------- studies

def _row(model: str, ent: str, d: int, report: dict) -> dict:
    return {
        "model": model,
        "entangler": ent,
        "d_blocks": d,
        "n_runs": report["n_runs"],
        "fraction_converged": report["fraction_converged"],
        "bin_200": report["bin_200"],
        "median_first_hit": report["median_first_hit"],
    }


def entangler_benchmark(models: Iterable, entanglers: Iterable, *, d_blocks: Optional[int] = None,
                        iterations=None, calibration_steps=None, repetitions=None, seed: int = 0,
                        workers: Optional[int] = None) -> list[dict]:
    """Convergence fraction and 200-iteration bins for every (model, entangler) pair."""
    cfgs = [
        RunConfig(m, e, d_blocks, iterations, calibration_steps, repetitions, base_seed=seed)
        for m in models for e in entanglers
    ]
    reports = fan_out(_report_only, cfgs, workers)
    return [_row(c.model_name, c.entangler, c.d_blocks, r) for c, r in zip(cfgs, reports)]


def _report_only(cfg: RunConfig) -> dict:
    return run_ensemble(cfg).report.to_dict()


def block_sweep(model, entangler: str, d_values: Sequence[int], *, iterations=None,
                calibration_steps=None, repetitions=None, seed: int = 0,
                workers: Optional[int] = None) -> list[dict]:
    """One convergence histogram per block count."""
    if not d_values:
        raise ValueError("d_values must not be empty")
    cfgs = [RunConfig(model, entangler, d, iterations, calibration_steps, repetitions, base_seed=seed)
            for d in d_values]
    reports = fan_out(_report_only, cfgs, workers)
    return [_row(c.model_name, c.entangler, c.d_blocks, r) for c, r in zip(cfgs, reports)]


@dataclass
class EntanglementProfile:
    model: str
    entangler: str
    mean: np.ndarray  # (iterations, 4) columns c01, c02, c12, tau3
    min: np.ndarray
    max: np.ndarray
    integrated: dict  # measure -> {"mean", "std"}
    report: dict

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = ("c01", "c02", "c12", "tau3")
        w.writerow(["iteration"] + [f"{n}_{s}" for n in names for s in ("mean", "min", "max")])
        for k in range(self.mean.shape[0]):
            vals = []
            for j in range(4):
                vals += [self.mean[k, j], self.min[k, j], self.max[k, j]]
            w.writerow([k] + [f"{v:.17g}" for v in vals])
        return buf.getvalue()


def _profile_job(cfg: RunConfig) -> EntanglementProfile:
    res = run_ensemble(cfg)
    snaps = res.snapshots()
    return EntanglementProfile(
        cfg.model_name, cfg.entangler, snaps.mean(axis=0), snaps.min(axis=0), snaps.max(axis=0),
        res.report.entanglement, res.report.to_dict(),
    )


def entanglement_profile(model, entanglers: Iterable[str], *, d_blocks: Optional[int] = None,
                         iterations=None, calibration_steps=None, repetitions: int = 100,
                         seed: int = 0, fixed_theta0: bool = False,
                         workers: Optional[int] = None) -> list[EntanglementProfile]:
    """Per-iteration mean/min/max of each measure plus integrated statistics, per entangler."""
    if n_qubits(model) != 3:
        raise ValueError("entanglement profiles are defined for 3-qubit models only")
    cfgs = [
        RunConfig(model, e, d_blocks, iterations, calibration_steps, repetitions, base_seed=seed,
                  track_entanglement=True, fixed_theta0=fixed_theta0)
        for e in entanglers
    ]
    return fan_out(_profile_job, cfgs, workers)


# ------------------------------------------------------ depth/accuracy scaling

class SkFitError(ValueError):
    pass


@dataclass(frozen=True)
class SkFit:
    """``D = b * log10(1/eps)**c`` fitted by least squares in log-log space."""

    c: float
    c_stderr: float
    b: float
    points_used: tuple[tuple[float, float], ...]
    threshold: Optional[float] = None

    def predict_d(self, eps) -> np.ndarray:
        return self.b * np.log10(1.0 / np.asarray(eps, dtype=float)) ** self.c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points_used"] = [list(p) for p in self.points_used]
        return d


def fit_sk_exponent(points: Iterable[tuple[float, float]], threshold: Optional[float] = None) -> SkFit:
    """Regress ``ln D`` on ``ln log10(1/eps)``; the slope is ``c`` and the intercept ``ln b``."""
    pts = [(float(d), float(e)) for d, e in points]
    if len(pts) < 3:
        raise SkFitError(f"need at least 3 (D, eps) points, got {len(pts)}")
    d = np.array([p[0] for p in pts])
    eps = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise SkFitError("every eps must lie strictly between 0 and 1")
    if np.any(d <= 0):
        raise SkFitError("every D must be positive")
    x = np.log(np.log10(1.0 / eps))
    y = np.log(d)
    if np.ptp(x) == 0:
        raise SkFitError("all eps values coincide; the exponent is undetermined")
    (slope, intercept), cov = _ols(x, y)
    stderr = float(np.sqrt(cov[0, 0]))
    return SkFit(float(slope), stderr, float(np.exp(intercept)), tuple(pts), threshold)


def _ols(x: np.ndarray, y: np.ndarray):
    a = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    dof = len(x) - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return coef, cov


def pre_plateau(points: Iterable[tuple[float, float]], threshold: float = PLATEAU_THRESHOLD):
    """Points whose error is above the plateau cutoff and below 1."""
    return [(d, e) for d, e in points if threshold < e < 1.0]


def fit_pre_plateau(points, threshold: float = PLATEAU_THRESHOLD) -> SkFit:
    pts = list(points)
    used = pre_plateau(pts, threshold)
    if len(used) < 3:
        raise SkFitError(
            f"only {len(used)} of {len(pts)} points lie in ({threshold:g}, 1); the fit needs 3. "
            f"errors: {[round(e, 4) for _, e in pts]}"
        )
    return fit_sk_exponent(used, threshold)


@dataclass
class SkScalingResult:
    table: list[dict]  # d_blocks, eps, eps_median, n_runs
    fit: Optional[SkFit]
    diagnostic: Optional[str] = None


def _final_errors(cfg: RunConfig) -> list[float]:
    seeds = [cfg.base_seed + r for r in range(cfg.repetitions)]
    return [abs(float(t.energies[-1]) - t.ground_energy) for t in run_batch(cfg, seeds)]


def sk_budget(full_budget: bool = False) -> int:
    return SK_FULL_BUDGET if full_budget else SK_FULL_BUDGET // SK_BUDGET_DIVISOR


def sk_scaling(model="Delta4L", entangler: str = "Ent1", d_values: Sequence[int] = tuple(range(1, 13)),
               *, iterations: Optional[int] = None, full_budget: bool = False,
               calibration_steps=None, repetitions: int = 20, seed: int = 0,
               threshold: float = PLATEAU_THRESHOLD, aggregate: str = "best",
               workers: Optional[int] = None) -> SkScalingResult:
    """Energy error against block count, and the exponent fitted to the pre-plateau part."""
    if list(d_values) != sorted(set(d_values)):
        raise ValueError("d_values must be strictly ascending")
    iterations = iterations or sk_budget(full_budget)
    cfgs = [RunConfig(model, entangler, d, iterations, calibration_steps, repetitions, base_seed=seed)
            for d in d_values]
    errors = fan_out(_final_errors, cfgs, workers)
    table = []
    for d, errs in zip(d_values, errors):
        best, med = float(np.min(errs)), float(np.median(errs))
        table.append({"d_blocks": d, "eps": best if aggregate == "best" else med,
                      "eps_best": best, "eps_median": med, "n_runs": len(errs)})
    try:
        fit = fit_pre_plateau([(r["d_blocks"], r["eps"]) for r in table], threshold)
        return SkScalingResult(table, fit)
    except SkFitError as exc:
        return SkScalingResult(table, None, str(exc))


# --------------------------------------------------------------- angle rounding

def round_angles(theta: np.ndarray, dp: int) -> np.ndarray:
    """Round every angle to ``dp`` decimals, ties to even."""
    return np.round(np.asarray(theta, dtype=float), dp)


def rounding_errors(trace_or_theta, ansatz: Ansatz, hamiltonian, dp_values: Sequence[int]) -> np.ndarray:
    """``|E(theta*) - E(round(theta*, dp))|`` for each ``dp``."""
    theta = trace_or_theta.final_theta.angles if isinstance(trace_or_theta, RunTrace) else trace_or_theta
    theta = np.asarray(theta, dtype=float)
    batch = np.stack([theta] + [round_angles(theta, dp) for dp in dp_values])
    e = expectation(ansatz.state(batch), hamiltonian)
    return np.abs(e[1:] - e[0])


@dataclass
class AnglePrecisionResult:
    dp_values: tuple[int, ...]
    seeds: list[int]  # converged runs only
    errors: np.ndarray  # (runs, len(dp_values))
    n_runs: int

    @property
    def median(self) -> np.ndarray:
        return np.median(self.errors, axis=0) if len(self.seeds) else np.full(len(self.dp_values), np.nan)

    def shrinkage(self, floor: float = 1e-12) -> np.ndarray:
        """Ratios ``eps(dp+1)/eps(dp)`` over consecutive DPs where both exceed ``floor``."""
        a, b = self.errors[:, :-1], self.errors[:, 1:]
        ok = (a > floor) & (b > floor)
        return (b[ok] / a[ok])


def angle_precision(model="Delta1", entangler: str = "Ent1", d_blocks: int = 3,
                    dp_values: Sequence[int] = tuple(range(1, 9)), *, iterations=None,
                    calibration_steps=None, repetitions: int = 20, seed: int = 0) -> AnglePrecisionResult:
    """Rounding study on the optima of the converged runs of one ensemble."""
    cfg = RunConfig(model, entangler, d_blocks, iterations, calibration_steps, repetitions, base_seed=seed)
    traces = run_batch(cfg, [seed + r for r in range(repetitions)])
    converged = [t for t in traces if t.first_hit(cfg.threshold) is not None]
    ansatz = Ansatz(cfg.n_qubits, d_blocks, entangler)
    h = cfg.hamiltonian()
    rows = [rounding_errors(t, ansatz, h, dp_values) for t in converged]
    errors = np.array(rows).reshape(len(rows), len(dp_values))
    return AnglePrecisionResult(tuple(dp_values), [t.seed for t in converged], errors, len(traces))


# ------------------------------------------------------------------ outputs

def _provenance(spec: ExperimentSpec) -> dict:
    return {"spec_sha256": spec.digest(), "seed": spec.seed}


def _csv(rows: list[dict], spec: ExperimentSpec) -> str:
    buf = io.StringIO()
    prov = _provenance(spec)
    buf.write(f"# spec_sha256={prov['spec_sha256']} seed={prov['seed']}\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return v


def _json(payload: dict, spec: ExperimentSpec) -> str:
    return json.dumps({"provenance": _provenance(spec), "spec": spec.to_dict(), **payload},
                      indent=2, sort_keys=True) + "\n"


def run_experiment(spec: ExperimentSpec, output: Optional[str | Path] = None) -> dict[str, str]:
    """Execute a spec and return ``{file name: contents}``; files are written when an output directory is known."""
    k = ExperimentKind
    files: dict[str, str] = {}
    common = dict(iterations=spec.iterations, calibration_steps=spec.calibration_steps, seed=spec.seed)
    if spec.kind is k.EntanglerBenchmark:
        d = spec.d_values[0] if spec.d_values else None
        rows = entangler_benchmark(spec.models, spec.entanglers, d_blocks=d,
                                   repetitions=spec.repetitions, **common)
        files["benchmark.csv"] = _csv(rows, spec)
        files["report.json"] = _json({"rows": rows}, spec)
    elif spec.kind is k.BlockSweep:
        rows = block_sweep(spec.models[0], spec.entanglers[0], spec.d_values,
                           repetitions=spec.repetitions, **common)
        files["block_sweep.csv"] = _csv(rows, spec)
        files["report.json"] = _json({"rows": rows}, spec)
    elif spec.kind is k.EntanglementProfile:
        d = spec.d_values[0] if spec.d_values else None
        table = []
        for model in spec.models:
            profiles = entanglement_profile(model, spec.entanglers, d_blocks=d,
                                            repetitions=spec.repetitions or 100, **common)
            for p in profiles:
                files[f"curves_{p.model}_{p.entangler}.csv"] = (
                    _csv([], spec) + p.curves_csv()
                )
                row = {"model": p.model, "entangler": p.entangler,
                       "fraction_converged": p.report["fraction_converged"]}
                for name, stats in p.integrated.items():
                    row[f"{name}_mean"] = stats["mean"]
                    row[f"{name}_std"] = stats["std"]
                table.append(row)
        files["integrated.csv"] = _csv(table, spec)
        files["report.json"] = _json({"rows": table}, spec)
    elif spec.kind is k.SkScaling:
        res = sk_scaling(spec.models[0], spec.entanglers[0], spec.d_values,
                         iterations=spec.iterations, full_budget=spec.full_budget,
                         calibration_steps=spec.calibration_steps,
                         repetitions=spec.repetitions or 20, seed=spec.seed,
                         threshold=spec.plateau_threshold, aggregate=spec.aggregate)
        files["sk_points.csv"] = _csv(res.table, spec)
        files["sk_fit.json"] = _json(
            {"table": res.table, "fit": res.fit.to_dict() if res.fit else None,
             "diagnostic": res.diagnostic}, spec)
    elif spec.kind is k.AnglePrecision:
        res = angle_precision(spec.models[0], spec.entanglers[0], spec.d_values[0], spec.dp_values,
                              iterations=spec.iterations, calibration_steps=spec.calibration_steps,
                              repetitions=spec.repetitions or 20, seed=spec.seed)
        rows = [{"seed": s, "dp": dp, "eps_e": float(res.errors[i, j])}
                for i, s in enumerate(res.seeds) for j, dp in enumerate(res.dp_values)]
        files["angle_precision.csv"] = _csv(rows, spec)
        shrink = res.shrinkage()
        files["report.json"] = _json({
            "dp_values": list(res.dp_values),
            "median_eps_e": [float(x) for x in res.median],
            "median_shrinkage": float(np.median(shrink)) if shrink.size else None,
            "converged_runs": len(res.seeds),
            "n_runs": res.n_runs,
        }, spec)
    out = output if output is not None else spec.output
    if out is not None:
        write_outputs(files, out)
    return files


def write_outputs(files: dict[str, str], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        (directory / name).write_text(text)

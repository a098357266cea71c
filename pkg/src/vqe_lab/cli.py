"""Command-line entry point: ``vqe-lab run | models | fit-sk``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import ExperimentSpec, SkFitError, fit_pre_plateau, run_experiment
from .models import ModelId, hamiltonian, n_qubits, reference_ground_energy
from .state_core import spectrum


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    out = args.output or spec.output or Path(args.spec).with_suffix("")
    files = run_experiment(spec, out)
    for name in sorted(files):
        print(Path(out) / name)
    return 0


def _cmd_models(args) -> int:
    for m in ModelId:
        h = hamiltonian(m)
        levels = np.round(spectrum(h), 10) + 0.0
        shown = " ".join(f"{x:g}" for x in levels[: args.levels])
        more = " ..." if len(levels) > args.levels else ""
        print(f"{m.value:10s} qubits={n_qubits(m)} terms={len(h):3d} "
              f"E_g={reference_ground_energy(m):.10f}  spectrum: {shown}{more}")
    return 0


def _read_points(path: str) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    cols = {c.lower(): c for c in reader.fieldnames or ()}
    d_col = cols.get("d") or cols.get("d_blocks")
    e_col = cols.get("eps") or cols.get("epsilon")
    if d_col is None or e_col is None:
        raise SystemExit("CSV needs a D (or d_blocks) column and an eps column")
    return [(float(r[d_col]), float(r[e_col])) for r in reader]


def _cmd_fit_sk(args) -> int:
    try:
        fit = fit_pre_plateau(_read_points(args.csv), args.threshold)
    except SkFitError as exc:
        print(f"fit refused: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(fit.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vqe-lab", description="Statevector VQE experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment spec (JSON)")
    run.add_argument("spec")
    run.add_argument("-o", "--output", help="output directory (default: the file's own output field, else next to it)")
    run.set_defaults(func=_cmd_run)

    models = sub.add_parser("models", help="list preset Hamiltonians and their spectra")
    models.add_argument("--levels", type=int, default=8)
    models.set_defaults(func=_cmd_models)

    fit = sub.add_parser("fit-sk", help="fit D = b*log10(1/eps)**c to a (D, eps) CSV")
    fit.add_argument("csv")
    fit.add_argument("--threshold", type=float, default=5.0e-2)
    fit.set_defaults(func=_cmd_fit_sk)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

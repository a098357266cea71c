import json

import numpy as np
import pytest

from vqe_lab.ansatz import Ansatz
from vqe_lab.experiments import (
    ExperimentSpec,
    SkFitError,
    angle_precision,
    block_sweep,
    entangler_benchmark,
    entanglement_profile,
    fan_out,
    fit_pre_plateau,
    fit_sk_exponent,
    rounding_errors,
    round_angles,
    run_experiment,
    sk_scaling,
    worker_count,
)
from vqe_lab.models import hamiltonian

TINY = dict(iterations=60, calibration_steps=5, repetitions=4)


def synthetic_points(c0, b=1.0, d_values=range(1, 6)):
    # eps(D) = 10**(-(D/b)**(1/c0)) so that D = b * log10(1/eps)**c0 exactly
    return [(d, 10.0 ** (-((d / b) ** (1.0 / c0)))) for d in d_values]


def test_fit_recovers_exact_model():
    pts = [(2 * L**1.31, 10.0**-L) for L in (0.2, 0.5, 0.9, 1.4, 2.5)]
    fit = fit_sk_exponent(pts)
    assert fit.c == pytest.approx(1.31, abs=1e-9)
    assert fit.b == pytest.approx(2.0, abs=1e-9)
    assert fit.c_stderr < 1e-9


@pytest.mark.parametrize("c0", [1.0, 1.31, 1.5, 2.0])
def test_fit_round_trip_on_synthetic_curve(c0):
    pts = [(d, e) for d, e in synthetic_points(c0, b=0.5, d_values=np.arange(1, 12)) if e < 1]
    assert fit_sk_exponent(pts).c == pytest.approx(c0, abs=1e-9)


def test_fit_under_multiplicative_noise():
    rng = np.random.default_rng(0)
    ls = np.array([0.15, 0.3, 0.5, 0.8, 1.2])
    for c0 in (1.0, 1.31, 2.0):
        errs = []
        for _ in range(100):
            d = 3.0 * ls**c0 * (1 + 0.05 * rng.normal(size=ls.size))
            errs.append(fit_sk_exponent(zip(d, 10.0**-ls)).c - c0)
        assert np.max(np.abs(errs)) <= 0.15


def test_fit_preconditions():
    with pytest.raises(SkFitError):
        fit_sk_exponent([(1, 0.5), (2, 0.1)])
    with pytest.raises(SkFitError):
        fit_sk_exponent([(1, 0.5), (2, 0.1), (3, 1.0)])
    with pytest.raises(SkFitError):
        fit_sk_exponent([(1, 0.5), (2, 0.1), (3, 0.0)])


def test_plateau_points_do_not_move_the_fit():
    pts = [(1, 0.8), (2, 0.4), (3, 0.2), (4, 0.09)]
    base = fit_pre_plateau(pts)
    extended = fit_pre_plateau(pts + [(6, 0.03), (8, 0.031), (10, 0.02), (0.5, 1.3)])
    assert extended.c == base.c and extended.points_used == base.points_used
    with pytest.raises(SkFitError, match="needs 3"):
        fit_pre_plateau([(1, 0.5), (2, 0.3), (3, 0.01)])


def test_round_angles_half_even():
    np.testing.assert_array_equal(round_angles(np.array([0.125, 0.135, -0.125]), 2), [0.12, 0.14, -0.12])


def test_rounding_errors_trivial_cases():
    a = Ansatz(3, 2, "Ent1")
    h = hamiltonian("Delta1")
    theta = np.random.default_rng(1).uniform(0, 2 * np.pi, a.n_params)
    assert rounding_errors(theta, a, h, [15])[0] < 1e-12
    on_grid = np.round(theta, 3)
    assert rounding_errors(on_grid, a, h, [3])[0] == 0.0


def test_angle_precision_small():
    res = angle_precision("Delta1", "Ent1", 3, (2, 4, 6), iterations=400, calibration_steps=20, repetitions=6)
    assert res.errors.shape == (len(res.seeds), 3)
    if res.seeds:
        assert np.all(res.median[1:] <= res.median[:-1] + 1e-15)


def test_spec_validation():
    with pytest.raises(ValueError, match="missing"):
        ExperimentSpec("BlockSweep", models=("Delta1",), entanglers=("Ent1",))
    with pytest.raises(ValueError, match="3-qubit"):
        ExperimentSpec("EntanglementProfile", models=("Delta2",), entanglers=("Ent1",))
    with pytest.raises(ValueError, match="ascending"):
        ExperimentSpec("SkScaling", models=("Delta4L",), entanglers=("Ent1",), d_values=(3, 2))
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"kind": "BlockSweep", "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"models": ["Delta1"]})


def test_spec_file_round_trip(tmp_path):
    spec = ExperimentSpec("EntanglerBenchmark", models=("Delta1",), entanglers=("Ent0", "Ent1"), seed=3)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert ExperimentSpec.load(path) == spec
    assert ExperimentSpec.from_dict({**spec.to_dict(), "output": "elsewhere"}).digest() == spec.digest()
    assert ExperimentSpec.from_dict({**spec.to_dict(), "seed": 4}).digest() != spec.digest()


def test_benchmark_and_sweep_agree_at_same_depth():
    bench = entangler_benchmark(["Delta1"], ["Ent0", "Ent1"], d_blocks=3, **TINY)
    assert bench[0]["fraction_converged"] == 0
    sweep = block_sweep("Delta1", "Ent1", [2, 3], **TINY)
    assert sweep[1]["fraction_converged"] == bench[1]["fraction_converged"]
    assert sweep[1]["bin_200"] == bench[1]["bin_200"]
    with pytest.raises(ValueError):
        block_sweep("Delta1", "Ent1", [])


def test_profile_shapes_and_rejection():
    (p,) = entanglement_profile("Separable", ["Ent1"], **TINY)
    assert p.mean.shape == (60, 4)
    assert np.all(p.min <= p.mean + 1e-15) and np.all(p.mean <= p.max + 1e-15)
    assert set(p.integrated) == {"c01", "c02", "c12", "tau3"}
    assert p.curves_csv().splitlines()[0].startswith("iteration,c01_mean,c01_min,c01_max")
    with pytest.raises(ValueError):
        entanglement_profile("Delta3", ["Ent1"], **TINY)


def test_sk_scaling_refuses_without_enough_points():
    res = sk_scaling("Delta1", "Ent1", [1, 2], iterations=50, calibration_steps=5, repetitions=2)
    assert res.fit is None and "needs 3" in res.diagnostic
    assert [r["d_blocks"] for r in res.table] == [1, 2]


def test_worker_env(monkeypatch):
    monkeypatch.setenv("VQE_LAB_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("VQE_LAB_WORKERS", "x")
    with pytest.raises(ValueError):
        worker_count()


def _square(x):
    return x * x


def test_fan_out_keeps_job_order():
    assert fan_out(_square, [3, 1, 2], workers=2) == [9, 1, 4]


def test_parallel_and_serial_outputs_identical(tmp_path, monkeypatch):
    spec = ExperimentSpec("BlockSweep", models=("Delta1",), entanglers=("Ent1",), d_values=(1, 2, 3),
                          iterations=40, calibration_steps=4, repetitions=3, seed=11)
    monkeypatch.setenv("VQE_LAB_WORKERS", "1")
    serial = run_experiment(spec)
    monkeypatch.setenv("VQE_LAB_WORKERS", "3")
    parallel = run_experiment(spec)
    assert serial == parallel


@pytest.mark.parametrize("kind,extra", [
    ("EntanglerBenchmark", {"entanglers": ["Ent0", "Ent2"]}),
    ("EntanglementProfile", {"entanglers": ["Ent1"], "models": ["Separable"]}),
    ("AnglePrecision", {"d_values": [3], "dp_values": [2, 4]}),
    ("SkScaling", {"d_values": [1, 2, 3]}),
])
def test_outputs_are_byte_identical_and_carry_provenance(tmp_path, kind, extra):
    d = {"kind": kind, "models": ["Delta1"], "entanglers": ["Ent1"], "iterations": 40,
         "calibration_steps": 4, "repetitions": 3, "seed": 5, **extra}
    spec = ExperimentSpec.from_dict(d)
    run_experiment(spec, tmp_path / "a")
    run_experiment(spec, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert spec.digest().encode() in a

import json

import numpy as np
import pytest

from vqe_lab.models import hamiltonian
from vqe_lab.state_core import PauliSum, PauliTerm, expectation
from vqe_lab.vqe import (
    ConvergenceReport,
    RunConfig,
    first_convergence_iteration,
    initial_angles,
    run_batch,
    run_ensemble,
    run_vqe,
)

SMALL = dict(iterations=120, calibration_steps=10)


def product_state_floor(h: PauliSum, restarts=300, steps=400, seed=0):
    """Minimum of <H> over product states, by projected gradient descent on Bloch vectors.

    <P> on a product state is the product of the single-qubit Bloch components.
    """
    rng = np.random.default_rng(seed)
    idx = {"X": 0, "Y": 1, "Z": 2}
    terms = [(t.coefficient, [(q, idx[p]) for q, p in enumerate(t.letters) if p != "I"]) for t in h.terms]
    n = h.n_qubits
    r = rng.normal(size=(restarts, n, 3))
    r /= np.linalg.norm(r, axis=-1, keepdims=True)

    def energy_and_grad(r):
        e = np.zeros(restarts)
        g = np.zeros_like(r)
        for c, ops in terms:
            comps = [r[:, q, a] for q, a in ops]
            e += c * np.prod(comps, axis=0)
            for k, (q, a) in enumerate(ops):
                others = np.prod([comps[j] for j in range(len(ops)) if j != k], axis=0) if len(ops) > 1 else 1.0
                g[:, q, a] += c * others
        return e, g

    for _ in range(steps):
        _, g = energy_and_grad(r)
        r = r - 0.1 * g
        r /= np.linalg.norm(r, axis=-1, keepdims=True)
    return float(energy_and_grad(r)[0].min())


def test_first_convergence_examples():
    assert first_convergence_iteration([-1.5, -1.97, -1.99], -2) == 1
    assert first_convergence_iteration([0.0, 0.0], -2) is None
    assert first_convergence_iteration([-2.0, -1.0], -2) == 0
    with pytest.raises(ValueError):
        first_convergence_iteration([1.0], 0.0)


def test_table_defaults():
    assert (RunConfig("Delta1").iterations, RunConfig("Delta1").calibration_steps,
            RunConfig("Delta1").repetitions, RunConfig("Delta1").d_blocks) == (1000, 100, 1000, 3)
    c2 = RunConfig("Delta2")
    assert (c2.iterations, c2.calibration_steps, c2.repetitions, c2.d_blocks) == (2000, 200, 500, 5)
    c3 = RunConfig("Delta3")
    assert (c3.iterations, c3.calibration_steps, c3.repetitions, c3.d_blocks) == (4000, 250, 100, 8)
    for m in ("Delta4S", "Delta4L", "Delta4P"):
        c = RunConfig(m)
        assert (c.iterations, c.calibration_steps, c.repetitions, c.d_blocks) == (6000, 300, 100, 12)


def test_tracking_needs_three_qubits():
    with pytest.raises(ValueError):
        RunConfig("Delta2", track_entanglement=True)


def test_initial_angles_uniform_in_period():
    a = initial_angles(3, 10_000)
    assert a.min() >= 0 and a.max() < 2 * np.pi
    assert abs(a.mean() - np.pi) < 0.1
    np.testing.assert_array_equal(a, initial_angles(3, 10_000))


def test_trace_shape_and_variational_floor():
    cfg = RunConfig("Delta1", "Ent2", **SMALL, track_entanglement=True)
    tr = run_vqe(cfg, 5)
    assert tr.energies.shape == (120,) and tr.snapshots.shape == (120, 4)
    assert np.all(tr.energies >= -2 - 1e-9)
    assert tr.final_theta.angles.shape == (27,)
    assert np.all((tr.snapshots >= 0) & (tr.snapshots <= 1))


def test_last_energy_belongs_to_final_theta():
    from vqe_lab.ansatz import Ansatz

    cfg = RunConfig("Delta2", "Ent1", **SMALL)
    tr = run_vqe(cfg, 1)
    psi = Ansatz(4, cfg.d_blocks, "Ent1").state(tr.final_theta.angles)
    assert tr.energies[-1] == expectation(psi, hamiltonian("Delta2"))


def test_ensemble_rows_equal_single_runs():
    cfg = RunConfig("Delta1", "Ent1", **SMALL, repetitions=5, base_seed=40, track_entanglement=True)
    ens = run_ensemble(cfg)
    assert [t.seed for t in ens.traces] == [40, 41, 42, 43, 44]
    for t in ens.traces[::2]:
        single = run_vqe(cfg, t.seed)
        np.testing.assert_array_equal(single.energies, t.energies)
        np.testing.assert_array_equal(single.snapshots, t.snapshots)


def test_ensemble_is_reproducible():
    cfg = RunConfig("Delta1", "Ent3", **SMALL, repetitions=6, base_seed=2)
    a, b = run_ensemble(cfg).report.to_dict(), run_ensemble(cfg).report.to_dict()
    assert json.dumps(a) == json.dumps(b)


def test_single_run_report():
    cfg = RunConfig("Delta1", "Ent1", iterations=400, calibration_steps=20, repetitions=1)
    ens = run_ensemble(cfg)
    hit = ens.traces[0].first_hit()
    assert ens.report.converged == [hit is not None]
    assert ens.report.fraction_converged == float(hit is not None)


def test_report_bins():
    r = ConvergenceReport(n_runs=5, first_hits=[0, 199, 200, None, 999], iterations=1000)
    assert r.bin_200 == [2, 1, 0, 0, 1]
    assert sum(r.bin_200) == sum(r.converged) == 4
    assert r.fraction_converged == pytest.approx(0.8)
    assert r.median_first_hit() == pytest.approx(199.5)


def test_custom_pauli_sum_model():
    h = PauliSum(2, (PauliTerm(1.0, "ZI"), PauliTerm(0.5, "XX")))
    cfg = RunConfig(h, "Ent1", d_blocks=2, iterations=300, calibration_steps=10, repetitions=3)
    assert cfg.ground_energy() == pytest.approx(-np.sqrt(1.25), abs=1e-12)
    ens = run_ensemble(cfg)
    assert all(np.all(t.energies >= cfg.ground_energy() - 1e-9) for t in ens.traces)


def test_trace_csv():
    cfg = RunConfig("Delta1", "Ent1", iterations=3, calibration_steps=2, track_entanglement=True)
    text = run_vqe(cfg, 0).to_csv()
    lines = text.splitlines()
    assert lines[0] == "iteration,energy,c01,c02,c12,tau3"
    assert len(lines) == 4 and lines[1].startswith("0,")


def test_fixed_theta0_shares_start_but_not_streams(monkeypatch):
    import vqe_lab.vqe as vqe_mod

    starts = []
    real = vqe_mod.minimize_batch

    def spy(f, theta0, *args, **kwargs):
        starts.append(np.array(theta0))
        return real(f, theta0, *args, **kwargs)

    monkeypatch.setattr(vqe_mod, "minimize_batch", spy)
    cfg = RunConfig("Delta1", "Ent1", iterations=5, calibration_steps=2, fixed_theta0=True, base_seed=7)
    a, b = run_batch(cfg, [7, 8])
    np.testing.assert_array_equal(starts[0][0], starts[0][1])
    assert not np.array_equal(a.energies, b.energies)
    run_batch(RunConfig("Delta1", "Ent1", iterations=5, calibration_steps=2), [7, 8])
    assert not np.array_equal(starts[1][0], starts[1][1])


def test_product_state_floor_excludes_two_percent_window():
    floor = product_state_floor(hamiltonian("Delta1"))
    assert floor == pytest.approx(-np.sqrt(5) / 2, abs=1e-6)
    assert floor > 0.98 * -2


def test_identity_entangler_never_converges_on_plaquette():
    cfg = RunConfig("Delta1", "Ent0", iterations=300, calibration_steps=20, repetitions=20,
                    track_entanglement=True)
    ens = run_ensemble(cfg)
    assert ens.report.fraction_converged == 0
    assert np.max(ens.snapshots()[..., :3]) < 1e-10
    floor = product_state_floor(hamiltonian("Delta1"))
    assert min(t.energies.min() for t in ens.traces) >= floor - 1e-9

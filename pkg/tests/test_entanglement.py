import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vqe_lab.entanglement import (
    EntanglementSnapshot,
    check_density,
    concurrence_mixed,
    concurrence_pure,
    concurrence_wootters_eig,
    ghz_state,
    integrate_entanglement,
    pair_tangle_T,
    reduced_density,
    snapshot,
    snapshot_arrays,
    three_tangle,
    w_state,
)
from vqe_lab.state_core import basis_state, random_state

BELL = np.array([1, 0, 0, 1]) / np.sqrt(2)
PAIRS = ((0, 1), (0, 2), (1, 2))


def haar_unitary(rng):
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def local_rotate(psi, us):
    t = psi.reshape(2, 2, 2)  # axes: qubit 2, 1, 0
    t = np.einsum("ai,bj,ck,ijk->abc", us[2], us[1], us[0], t)
    return t.reshape(8)


def partial_trace_oracle(psi, keep):
    """Explicit sum over the traced-out basis states (keep = qubit pair, first = more significant)."""
    n = int(np.log2(len(psi)))
    rho = np.zeros((4, 4), dtype=complex)
    others = [q for q in range(n) if q not in keep]
    for a in range(2**n):
        for b in range(2**n):
            if all(((a >> q) & 1) == ((b >> q) & 1) for q in others):
                ia = ((a >> keep[0]) & 1) * 2 + ((a >> keep[1]) & 1)
                ib = ((b >> keep[0]) & 1) * 2 + ((b >> keep[1]) & 1)
                rho[ia, ib] += psi[a] * np.conj(psi[b])
    return rho


def test_reduced_density_examples():
    np.testing.assert_allclose(reduced_density(basis_state("00"), (0, 1)), np.diag([1, 0, 0, 0]))
    np.testing.assert_allclose(reduced_density(BELL, (0,)), np.eye(2) / 2, atol=1e-15)
    psi_plus = np.array([0, 1, 1, 0]) / np.sqrt(2)
    expected = np.diag([1 / 3, 0, 0, 0]) + (2 / 3) * np.outer(psi_plus, psi_plus)
    np.testing.assert_allclose(reduced_density(w_state(), (1, 2)), expected, atol=1e-15)


def test_reduced_density_matches_explicit_sum():
    rng = np.random.default_rng(0)
    for n in (3, 4):
        psi = random_state(n, rng)
        for keep in ((0, 1), (2, 0), (1, n - 1)):
            np.testing.assert_allclose(reduced_density(psi, keep), partial_trace_oracle(psi, keep), atol=1e-14)


@pytest.mark.parametrize("keep", [(0, 0), (0, 3), ()])
def test_reduced_density_rejects_bad_indices(keep):
    with pytest.raises(ValueError):
        reduced_density(w_state(), keep)


def test_pure_concurrence_examples():
    assert concurrence_pure(BELL) == pytest.approx(1, abs=1e-15)
    assert concurrence_pure(basis_state("01")) == 0
    assert concurrence_pure(np.full(4, 0.5)) == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        concurrence_pure(np.array([1, 0, 0, 1.0]))


def test_mixed_concurrence_examples():
    assert concurrence_mixed(np.diag([1.0, 0, 0, 0])) == 0
    assert concurrence_mixed(np.outer(BELL, BELL)) == pytest.approx(1, abs=1e-12)
    for pair in PAIRS:
        rho = reduced_density(w_state(), pair)
        assert concurrence_mixed(rho) == pytest.approx(2 / 3, abs=1e-12)
        assert concurrence_wootters_eig(rho) == pytest.approx(2 / 3, abs=1e-7)


def test_werner_state_closed_form():
    # C(p |Bell><Bell| + (1-p) I/4) = max(0, (3p - 1)/2)
    for p in np.linspace(0, 1, 21):
        rho = p * np.outer(BELL, BELL) + (1 - p) * np.eye(4) / 4
        assert concurrence_mixed(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-12)


def test_mixed_matches_textbook_route_on_full_rank_states():
    rng = np.random.default_rng(1)
    for _ in range(100):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        assert concurrence_mixed(rho) == pytest.approx(concurrence_wootters_eig(rho), abs=1e-9)


def test_density_validation():
    with pytest.raises(ValueError):
        check_density(np.diag([0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        check_density(np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(ValueError):
        check_density(np.eye(3) / 3)


def test_pair_tangle_examples():
    assert pair_tangle_T(np.outer(BELL, BELL)) == pytest.approx(0, abs=1e-7)
    assert pair_tangle_T(np.eye(4) / 4) == pytest.approx(np.sqrt(1.5))
    assert pair_tangle_T(reduced_density(ghz_state(), (1, 2))) == pytest.approx(1, abs=1e-12)


def test_three_tangle_examples():
    assert three_tangle(ghz_state(), 0) == pytest.approx(1, abs=1e-9)
    assert three_tangle(w_state(), 0) == pytest.approx(0, abs=1e-9)
    assert three_tangle(basis_state("010"), 1) == 0
    with pytest.raises(ValueError):
        three_tangle(ghz_state(4), 0)


def test_pure_mixed_agreement():
    psis = random_state(2, np.random.default_rng(2), size=500)
    for psi in psis:
        assert concurrence_mixed(np.outer(psi, psi.conj())) == pytest.approx(concurrence_pure(psi), abs=1e-10)


def test_three_tangle_invariants_on_random_states():
    psis = random_state(3, np.random.default_rng(3), size=500)
    for psi in psis:
        taus = [three_tangle(psi, i) for i in range(3)]
        assert max(taus) - min(taus) < 1e-8
        t2 = pair_tangle_T(reduced_density(psi, (1, 2))) ** 2
        c01 = concurrence_mixed(reduced_density(psi, (0, 1)))
        c02 = concurrence_mixed(reduced_density(psi, (0, 2)))
        assert t2 >= c01**2 + c02**2 - 1e-9
        assert 0 <= taus[0] <= 1 + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(3, rng)
    rotated = local_rotate(psi, [haar_unitary(rng) for _ in range(3)])
    np.testing.assert_allclose(snapshot_arrays(rotated), snapshot_arrays(psi), atol=1e-9)


def test_batched_snapshot_matches_scalar_routes():
    psis = random_state(3, np.random.default_rng(4), size=(4, 25))
    batch = snapshot_arrays(psis)
    assert batch.shape == (4, 25, 4)
    for idx in np.ndindex(4, 25):
        psi = psis[idx]
        ref = [concurrence_mixed(reduced_density(psi, p)) for p in PAIRS] + [three_tangle(psi, 0)]
        np.testing.assert_allclose(batch[idx], ref, atol=1e-12)


def test_snapshot_record():
    s = snapshot(w_state(), iteration=4)
    assert s.iteration == 4
    assert s.c01 == pytest.approx(2 / 3) and s.tau3 == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        EntanglementSnapshot(1.2, 0, 0, 0)
    assert EntanglementSnapshot(-1e-12, 0, 0, 0).c01 == 0.0


def test_integration():
    const = [EntanglementSnapshot(0.5, 0.5, 0.5, 0.1, k) for k in range(10)]
    assert integrate_entanglement(const).as_tuple() == pytest.approx((0.5, 0.5, 0.5, 0.1))
    one = EntanglementSnapshot(0.1, 0.2, 0.3, 0.4)
    assert integrate_entanglement([one]).as_tuple() == one.as_tuple()
    pair = [EntanglementSnapshot(0, 0, 0, 0), EntanglementSnapshot(0, 0, 1, 0)]
    assert integrate_entanglement(pair).c12 == 0.5
    assert integrate_entanglement(np.array([[0, 0, 0, 0], [0, 0, 1, 0.0]])).c12 == 0.5
    with pytest.raises(ValueError):
        integrate_entanglement([])

"""Reduced density matrices, two-qubit concurrence, and the three-tangle.

Mixed-state concurrence uses Wootters' closed form. The numbers
``lambda_i`` (square roots of the eigenvalues of ``rho * rho_tilde``) are
computed as singular values of ``W^T (Y(x)Y) W`` for any factor
``rho = W W^dag``. That avoids square roots of round-off-sized eigenvalues
and keeps rank-deficient inputs accurate to ~1e-15.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .state_core import n_qubits_of

SIGMA_YY = np.array(
    [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
)

DENSITY_TOL = 1e-12
# eigenvalues of rho below this are treated as exact zeros when factoring
RANK_TOL = 1e-13


def _keep_tuple(keep: Sequence[int], n: int) -> tuple[int, ...]:
    keep = tuple(int(k) for k in keep)
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate qubit indices in {keep}")
    if not keep or any(not 0 <= k < n for k in keep):
        raise ValueError(f"qubit indices {keep} outside register of size {n}")
    return keep


def state_factor(state: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Matrix ``M`` with ``rho_keep = M M^dag``; rows ordered with the first kept qubit most significant."""
    n = n_qubits_of(state)
    keep = _keep_tuple(keep, n)
    batch = state.shape[:-1]
    nb = len(batch)
    t = np.asarray(state).reshape(batch + (2,) * n)
    axes = [nb + n - 1 - q for q in keep]
    rest = [nb + n - 1 - q for q in range(n - 1, -1, -1) if q not in keep]
    t = np.transpose(t, list(range(nb)) + axes + rest)
    return t.reshape(batch + (2 ** len(keep), 2 ** (n - len(keep))))


def reduced_density(state: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Partial trace of ``|psi><psi|`` over every qubit not in ``keep``."""
    m = state_factor(state, keep)
    return m @ np.swapaxes(m, -1, -2).conj()


def check_density(rho: np.ndarray, tol: float = DENSITY_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise ValueError(f"expected a 4x4 two-qubit density matrix, got {rho.shape}")
    if np.max(np.abs(rho - np.swapaxes(rho, -1, -2).conj())) > tol:
        raise ValueError("density matrix is not Hermitian")
    if np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1)) > tol:
        raise ValueError("density matrix does not have unit trace")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def _concurrence_from_factor(w: np.ndarray) -> np.ndarray:
    t = np.swapaxes(w, -1, -2) @ SIGMA_YY @ w
    sv = np.linalg.svd(t, compute_uv=False)  # descending
    c = sv[..., 0] - np.sum(sv[..., 1:4], axis=-1)
    return np.clip(c, 0.0, 1.0)


def concurrence_pure(psi: np.ndarray) -> float:
    """``|psi^T (Y(x)Y) psi| = 2|a00 a11 - a01 a10|`` for a normalized two-qubit state."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (4,):
        raise ValueError("expected four amplitudes")
    if abs(np.linalg.norm(psi) - 1) > 1e-8:
        raise ValueError("state is not normalized")
    return float(min(abs(psi @ SIGMA_YY @ psi), 1.0))


def concurrence_mixed(rho: np.ndarray) -> float:
    """Wootters concurrence ``max(0, l1 - l2 - l3 - l4)`` of a two-qubit density matrix."""
    rho = check_density(rho)
    p, v = np.linalg.eigh(rho)
    keep = p > RANK_TOL
    w = v[:, keep] * np.sqrt(p[keep])
    return float(_concurrence_from_factor(w))


def concurrence_wootters_eig(rho: np.ndarray) -> float:
    """Textbook route through ``eig(rho * rho_tilde)``; kept as an independent cross-check."""
    rho = check_density(rho)
    rho_tilde = SIGMA_YY @ rho.conj() @ SIGMA_YY
    ev = np.linalg.eigvals(rho @ rho_tilde).real
    lam = np.sort(np.sqrt(np.clip(ev, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def pair_tangle_T(rho_jk: np.ndarray) -> float:
    """``sqrt(2 - 2 Tr rho^2)`` for a two-qubit density matrix."""
    rho_jk = check_density(rho_jk)
    purity = np.real(np.trace(rho_jk @ rho_jk))
    return float(np.sqrt(max(2.0 - 2.0 * purity, 0.0)))


def _complement(i: int) -> tuple[int, int]:
    if i not in (0, 1, 2):
        raise ValueError(f"qubit index {i} outside 0..2")
    j, k = (q for q in range(3) if q != i)
    return j, k


def three_tangle(state: np.ndarray, i: int = 0) -> float:
    """``T_jk^2 - C_ij^2 - C_ik^2`` for a pure three-qubit state, clamped to [0, 1]."""
    state = np.asarray(state, dtype=complex)
    if state.shape != (8,):
        raise ValueError("three_tangle needs a single 3-qubit state")
    if abs(np.linalg.norm(state) - 1) > 1e-8:
        raise ValueError("state is not normalized")
    j, k = _complement(i)
    t_jk = pair_tangle_T(reduced_density(state, (j, k)))
    c_ij = concurrence_mixed(reduced_density(state, (i, j)))
    c_ik = concurrence_mixed(reduced_density(state, (i, k)))
    return float(np.clip(t_jk**2 - c_ij**2 - c_ik**2, 0.0, 1.0))


@dataclass(frozen=True)
class EntanglementSnapshot:
    c01: float
    c02: float
    c12: float
    tau3: float
    iteration: int = 0

    def __post_init__(self):
        for name in ("c01", "c02", "c12", "tau3"):
            v = getattr(self, name)
            if not -1e-10 <= v <= 1 + 1e-10:
                raise ValueError(f"{name}={v} outside [0, 1]")
            object.__setattr__(self, name, float(min(max(v, 0.0), 1.0)))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.c01, self.c02, self.c12, self.tau3


def snapshot_arrays(states: np.ndarray) -> np.ndarray:
    """Vectorized ``(c01, c02, c12, tau3)`` for a batch of 3-qubit states, shape ``(..., 4)``.

    Works from the pure-state factors directly; agrees with
    :func:`concurrence_mixed` / :func:`three_tangle` to round-off.
    """
    states = np.asarray(states)
    if n_qubits_of(states) != 3:
        raise ValueError("entanglement snapshots are defined for 3 qubits")
    out = np.empty(states.shape[:-1] + (4,))
    c = {}
    for col, pair in enumerate(((0, 1), (0, 2), (1, 2))):
        c[pair] = _concurrence_from_factor(state_factor(states, pair))
        out[..., col] = c[pair]
    # T_12^2 = 2(1 - Tr rho_12^2), with Tr rho^2 = ||M^dag M||_F^2
    m = state_factor(states, (1, 2))
    g = np.swapaxes(m, -1, -2).conj() @ m
    purity = np.sum(np.abs(g) ** 2, axis=(-2, -1))
    tau = 2.0 * (1.0 - purity) - c[(0, 1)] ** 2 - c[(0, 2)] ** 2
    out[..., 3] = np.clip(tau, 0.0, 1.0)
    return out


def snapshot(state: np.ndarray, iteration: int = 0) -> EntanglementSnapshot:
    c01, c02, c12, tau3 = snapshot_arrays(np.asarray(state))
    return EntanglementSnapshot(c01, c02, c12, tau3, iteration)


@dataclass(frozen=True)
class IntegratedEntanglement:
    c01: float
    c02: float
    c12: float
    tau3: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.c01, self.c02, self.c12, self.tau3


def integrate_entanglement(snapshots) -> IntegratedEntanglement:
    """Mean of each measure over the iterations of one run.

    Accepts a sequence of :class:`EntanglementSnapshot` or an ``(I, 4)`` array.
    """
    if isinstance(snapshots, np.ndarray):
        arr = snapshots
    else:
        arr = np.array([s.as_tuple() for s in snapshots], dtype=float).reshape(-1, 4)
    if arr.shape[0] == 0:
        raise ValueError("cannot integrate an empty snapshot sequence")
    return IntegratedEntanglement(*(float(x) for x in arr.mean(axis=0)))


def w_state() -> np.ndarray:
    psi = np.zeros(8, dtype=complex)
    psi[[1, 2, 4]] = 1 / np.sqrt(3)
    return psi


def ghz_state(n: int = 3) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi

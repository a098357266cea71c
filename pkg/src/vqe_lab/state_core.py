"""Statevector primitives, Pauli-string algebra and a dense Hermitian eigensolver.

Bit convention: qubit 0 is the least-significant bit of a basis index, so the
basis label ``|q_{N-1} ... q_1 q_0>`` reads most-significant qubit first.

States are plain ``complex128`` numpy arrays of shape ``(..., 2**n)``; any
leading axes are treated as a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 12
PAULI_LETTERS = "IXYZ"

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# coefficients smaller than this are dropped during canonicalization
DROP_TOL = 1e-14


def zero_state(n_qubits: int) -> np.ndarray:
    """Return ``|0...0>`` on ``n_qubits`` qubits."""
    _check_register(n_qubits)
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(label: str) -> np.ndarray:
    """Computational basis state from a label such as ``"001"`` (qubit 0 rightmost)."""
    if not label or set(label) - {"0", "1"}:
        raise ValueError(f"invalid basis label {label!r}")
    psi = np.zeros(2 ** len(label), dtype=complex)
    psi[int(label, 2)] = 1.0
    return psi


def n_qubits_of(state: np.ndarray) -> int:
    dim = np.shape(state)[-1]
    n = int(dim).bit_length() - 1
    if dim < 2 or 2**n != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def _check_register(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"register size must be in 1..{MAX_QUBITS}, got {n_qubits}")


@dataclass(frozen=True)
class PauliTerm:
    """A real coefficient times a tensor product of Pauli letters.

    ``letters[k]`` acts on qubit ``k``. The text form used by :meth:`__str__`
    writes letters most-significant qubit first, so ``PauliTerm(0.5, "XXI")``
    prints as ``0.5 IXX``.
    """

    coefficient: float
    letters: str

    def __post_init__(self):
        letters = "".join(self.letters).upper()
        if not letters or set(letters) - set(PAULI_LETTERS):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @classmethod
    def from_ops(cls, coefficient: float, ops: dict[int, str], n_qubits: int) -> "PauliTerm":
        """Build a term from a sparse ``{qubit: letter}`` mapping."""
        letters = ["I"] * n_qubits
        for q, p in ops.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} outside register of size {n_qubits}")
            letters[q] = p
        return cls(coefficient, "".join(letters))

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def label(self) -> str:
        """Letters most-significant qubit first."""
        return self.letters[::-1]

    @cached_property
    def masks(self) -> tuple[int, int, int]:
        """``(flip_mask, sign_mask, n_y)``: bits flipped, bits whose value sets a sign, count of Y."""
        x = z = 0
        ny = 0
        for q, p in enumerate(self.letters):
            if p in "XY":
                x |= 1 << q
            if p in "ZY":
                z |= 1 << q
            ny += p == "Y"
        return x, z, ny

    def matrix(self) -> np.ndarray:
        out = np.array([[self.coefficient]], dtype=complex)
        for p in self.label:
            out = np.kron(out, _PAULI_MATRICES[p])
        return out

    def __str__(self) -> str:
        return f"{self.coefficient:.17g} {self.label}"


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    count = np.zeros_like(a)
    while np.any(a):
        count += a & np.uint64(1)
        a = a >> np.uint64(1)
    return count


@dataclass(frozen=True)
class PauliSum:
    """Hermitian operator stored as a canonical sum of Pauli strings.

    Construction merges equal strings, drops coefficients below ``1e-14`` and
    sorts terms by their text label, so equal operators compare equal.
    """

    n_qubits: int
    terms: tuple[PauliTerm, ...] = field(default=())

    def __post_init__(self):
        _check_register(self.n_qubits)
        merged: dict[str, float] = {}
        for t in self.terms:
            if t.n_qubits != self.n_qubits:
                raise ValueError(
                    f"term {t} acts on {t.n_qubits} qubits, expected {self.n_qubits}"
                )
            merged[t.letters] = merged.get(t.letters, 0.0) + t.coefficient
        terms = tuple(
            PauliTerm(c, letters)
            for letters, c in sorted(merged.items(), key=lambda kv: kv[0][::-1])
            if abs(c) >= DROP_TOL
        )
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_terms(cls, terms: Iterable[PauliTerm], n_qubits: int | None = None) -> "PauliSum":
        terms = tuple(terms)
        if n_qubits is None:
            if not terms:
                raise ValueError("n_qubits is required for an empty PauliSum")
            n_qubits = terms[0].n_qubits
        return cls(n_qubits, terms)

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        """Parse lines of ``<coeff> <letters>`` (letters most-significant qubit first)."""
        terms = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed Pauli line {raw!r}")
            terms.append(PauliTerm(float(parts[0]), parts[1][::-1]))
        return cls.from_terms(terms)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PauliSum":
        """Decompose a Hermitian matrix as ``sum_P Tr(P m) / 2**n * P``."""
        m = np.asarray(m, dtype=complex)
        n = n_qubits_of(m)
        check_hermitian(m)
        terms = []
        for idx in np.ndindex(*(4,) * n):
            letters = "".join(PAULI_LETTERS[i] for i in idx)
            p = PauliTerm(1.0, letters)
            c = np.trace(p.matrix() @ m) / 2**n
            terms.append(PauliTerm(c.real, letters))
        return cls(n, tuple(terms))

    def to_text(self) -> str:
        return "".join(f"{t}\n" for t in self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise ValueError("register sizes differ")
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(
            self.n_qubits, tuple(PauliTerm(scalar * t.coefficient, t.letters) for t in self.terms)
        )

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)

    @cached_property
    def _kernel(self) -> list[tuple[np.ndarray, np.ndarray]]:
        # Terms sharing a flip mask share a gather index; their sign patterns
        # fold into one complex weight vector per mask.
        idx = np.arange(2**self.n_qubits, dtype=np.int64)
        groups: dict[int, np.ndarray] = {}
        for t in self.terms:
            x, z, ny = t.masks
            src = idx ^ x
            sign = 1.0 - 2.0 * (_popcount(src & z) & np.uint64(1)).astype(float)
            w = t.coefficient * (1j**ny) * sign
            groups[x] = groups.get(x, 0.0) + w
        return [(idx ^ x, w) for x, w in sorted(groups.items())]

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``H|psi>`` using the bitwise gather kernel."""
        state = np.asarray(state)
        _check_size(state, self.n_qubits)
        out = np.zeros(state.shape, dtype=complex)
        for src, w in self._kernel:
            out += w * state[..., src]
        return out


def _check_size(state: np.ndarray, n_qubits: int) -> None:
    if np.shape(state)[-1] != 2**n_qubits:
        raise ValueError(
            f"state of dimension {np.shape(state)[-1]} does not match {n_qubits} qubits"
        )


def apply_pauli_string(state: np.ndarray, term: PauliTerm) -> np.ndarray:
    """Return ``coefficient * P|psi>`` without building a matrix.

    X flips bit k, Z negates amplitudes with bit k set, and Y = iXZ does both
    with an extra factor of i.
    """
    state = np.asarray(state, dtype=complex)
    _check_size(state, term.n_qubits)
    x, z, ny = term.masks
    idx = np.arange(state.shape[-1], dtype=np.int64)
    src = idx ^ x
    sign = 1.0 - 2.0 * (_popcount(src & z) & np.uint64(1)).astype(float)
    return term.coefficient * (1j**ny) * sign * state[..., src]


def expectation(state: np.ndarray, h: PauliSum, *, imag_tol: float = 1e-10) -> np.ndarray | float:
    """Exact ``<psi|H|psi>``; batched over leading axes of ``state``."""
    state = np.asarray(state)
    _check_size(state, h.n_qubits)
    raw = np.sum(state.conj() * h.apply(state), axis=-1)
    if np.any(np.abs(raw.imag) > imag_tol):
        raise ArithmeticError(f"expectation has imaginary residue {np.max(np.abs(raw.imag)):.3e}")
    val = raw.real
    return float(val) if val.ndim == 0 else val


def to_dense(h: PauliSum) -> np.ndarray:
    """Kronecker-product expansion of ``h`` as a ``2**n x 2**n`` matrix."""
    _check_register(h.n_qubits)
    dim = 2**h.n_qubits
    m = np.zeros((dim, dim), dtype=complex)
    for src, w in h._kernel:
        # row j picks up w[j] * psi[src[j]]
        m[np.arange(dim), src] += w
    return m


def check_hermitian(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol * max(1.0, np.max(np.abs(m))):
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return m


def _round_robin(n: int) -> list[list[tuple[int, int]]]:
    # Each round is a set of disjoint (p, q) pairs; together the rounds cover
    # every pair exactly once.
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a >= 0 and b >= 0:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(
    m: np.ndarray, *, tol: float = 1e-14, max_sweeps: int = 60
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic complex Jacobi diagonalization of a Hermitian matrix.

    Each round annihilates a set of disjoint off-diagonal entries at once
    (round-robin ordering), which keeps every round a handful of vectorized
    row/column updates. Returns ascending eigenvalues and the unitary whose
    columns are the matching eigenvectors.
    """
    a = np.array(check_hermitian(m), dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n < 2:
        return a.diagonal().real.copy(), v
    scale = max(np.linalg.norm(a), 1e-300)
    rounds = [tuple(np.array(x) for x in zip(*r)) for r in _round_robin(n)]
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.linalg.norm(a[offdiag]) <= tol * scale:
            break
        for p, q in rounds:
            b = a[p, q]
            mag = np.abs(b)
            active = mag > 1e-300
            safe = np.where(active, mag, 1.0)
            phase = np.where(active, b / safe, 1.0)
            app = a[p, p].real
            aqq = a[q, q].real
            zeta = (aqq - app) / (2.0 * safe)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t**2)
            s = t * c
            # G = diag(1, conj(phase)) @ [[c, s], [-s, c]] on the (p, q) plane
            g_pp = c
            g_pq = s
            g_qp = -s * phase.conj()
            g_qq = c * phase.conj()
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = g_pp[:, None] * rp + np.conj(g_qp)[:, None] * rq
            a[q, :] = g_pq[:, None] * rp + np.conj(g_qq)[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * g_pp + cq * g_qp
            a[:, q] = cp * g_pq + cq * g_qq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * g_pp + vq * g_qp
            v[:, q] = vp * g_pq + vq * g_qq
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    w = a.diagonal().real
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigenvalues_hermitian(
    m: np.ndarray, *, vectors: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues (and optionally eigenvectors) of a Hermitian matrix."""
    w, v = jacobi_eigh(m)
    return (w, v) if vectors else w


def spectrum(h: PauliSum) -> np.ndarray:
    return eigenvalues_hermitian(to_dense(h))


def random_state(n_qubits: int, rng: np.random.Generator, size: Sequence[int] | int = ()) -> np.ndarray:
    """Haar-random pure state(s)."""
    shape = (size,) if isinstance(size, int) else tuple(size)
    psi = rng.normal(size=shape + (2**n_qubits,)) + 1j * rng.normal(size=shape + (2**n_qubits,))
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)

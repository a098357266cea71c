"""Triangular-lattice hopping models, their Jordan-Wigner images, and the
separable isospectral three-qubit Hamiltonian."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .state_core import PauliSum, PauliTerm, eigenvalues_hermitian, to_dense


class ModelId(str, enum.Enum):
    Delta1 = "Delta1"
    Delta2 = "Delta2"
    Delta3 = "Delta3"
    Delta4L = "Delta4L"
    Delta4P = "Delta4P"
    Delta4S = "Delta4S"
    Separable = "Separable"

    @classmethod
    def parse(cls, value: "str | ModelId") -> "ModelId":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        if key in {"sep", "hsep"}:
            return cls.Separable
        raise ValueError(f"unknown model {value!r}")


LATTICE_MODELS = tuple(m for m in ModelId if m is not ModelId.Separable)


def _edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class LatticeSpec:
    """Sites ``0..n_sites-1`` joined by undirected nearest-neighbour edges.

    ``periodic_edges`` is the subset of ``edges`` that closes the lattice
    through the boundary; it is bookkeeping only and enters the Hamiltonian
    like any other edge.
    """

    name: str
    n_sites: int
    edges: tuple[tuple[int, int], ...]
    periodic_edges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        edges = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on site {i}")
            if not (0 <= i < self.n_sites and 0 <= j < self.n_sites):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.n_sites - 1}")
            edges.append(_edge(i, j))
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        periodic = tuple(_edge(int(i), int(j)) for i, j in self.periodic_edges)
        if set(periodic) - set(edges):
            raise ValueError("periodic_edges must be a subset of edges")
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "periodic_edges", periodic)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_sites, self.n_sites))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def triangles(self) -> int:
        """Number of 3-cycles in the edge graph."""
        a = self.adjacency()
        return int(round(np.trace(a @ a @ a) / 6))

    def relabel(self, perm) -> "LatticeSpec":
        """Lattice with site ``k`` renamed to ``perm[k]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n_sites)):
            raise ValueError("perm must be a permutation of the sites")
        return LatticeSpec(
            self.name,
            self.n_sites,
            tuple((perm[i], perm[j]) for i, j in self.edges),
            tuple((perm[i], perm[j]) for i, j in self.periodic_edges),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_sites": self.n_sites,
            "edges": [list(e) for e in self.edges],
            "periodic_edges": [list(e) for e in self.periodic_edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        missing = {"name", "n_sites", "edges"} - set(d)
        if missing:
            raise ValueError(f"lattice config missing fields: {sorted(missing)}")
        return cls(
            str(d["name"]),
            int(d["n_sites"]),
            tuple(tuple(e) for e in d["edges"]),
            tuple(tuple(e) for e in d.get("periodic_edges", ())),
        )


def load_lattice(path: str | Path) -> LatticeSpec:
    return LatticeSpec.from_dict(json.loads(Path(path).read_text()))


def _strip(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)] + [(i, i + 2) for i in range(n - 2)]


_N_SITES = {
    ModelId.Delta1: 3,
    ModelId.Delta2: 4,
    ModelId.Delta3: 5,
    ModelId.Delta4L: 6,
    ModelId.Delta4P: 6,
    ModelId.Delta4S: 6,
}

# Boundary edges of the periodic preset and the stacked layout are
# conjectural; load_lattice() accepts alternatives.
_PERIODIC_EDGES = ((0, 4), (0, 5), (1, 5))
_STACKED_EDGES = ((0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 3), (1, 4), (2, 4), (2, 5))


def canonical_lattice(model: ModelId | str) -> LatticeSpec:
    """Preset lattice for a hopping model.

    ``Delta1``..``Delta4L`` are zigzag strips with edges ``(i, i+1)`` and
    ``(i, i+2)``; ``Delta4P`` closes the six-site strip, ``Delta4S`` stacks
    two rows of three sites.
    """
    model = ModelId.parse(model)
    if model is ModelId.Separable:
        raise ValueError("the separable model has no lattice")
    n = _N_SITES[model]
    if model is ModelId.Delta4S:
        return LatticeSpec(model.value, n, _STACKED_EDGES)
    edges = _strip(n)
    periodic: tuple = ()
    if model is ModelId.Delta4P:
        periodic = _PERIODIC_EDGES
        edges = edges + list(periodic)
    return LatticeSpec(model.value, n, tuple(edges), periodic)


def jw_hopping_term(i: int, j: int, n: int) -> PauliSum:
    """Qubit image of ``c_i^dag c_j + c_j^dag c_i`` on ``n`` modes.

    Returns ``(X_i Z...Z X_j + Y_i Z...Z Y_j) / 2`` with the Z string on the
    modes strictly between ``i`` and ``j``.
    """
    if i == j:
        raise ValueError("hopping needs two distinct sites")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"sites ({i}, {j}) outside register of size {n}")
    i, j = _edge(i, j)
    zs = {k: "Z" for k in range(i + 1, j)}
    return PauliSum(
        n,
        (
            PauliTerm.from_ops(0.5, {i: "X", j: "X", **zs}, n),
            PauliTerm.from_ops(0.5, {i: "Y", j: "Y", **zs}, n),
        ),
    )


def build_hopping_hamiltonian(lattice: LatticeSpec) -> PauliSum:
    """Sum of hopping terms over all edges, with the +1/2 sign of the plaquette form."""
    n = lattice.n_sites
    terms: list[PauliTerm] = []
    for i, j in lattice.edges:
        terms.extend(jw_hopping_term(i, j, n).terms)
    return PauliSum(n, tuple(terms))


def single_particle_matrix(lattice: LatticeSpec) -> np.ndarray:
    """One-body matrix ``h`` with ``H = sum_ij h_ij c_i^dag c_j`` for the mapped Hamiltonian.

    With the +1/2 coefficients used here ``h`` is the adjacency matrix itself.
    """
    return lattice.adjacency()


def one_body_ground_energy(lattice: LatticeSpec) -> float:
    """Many-body ground energy of free fermions: fill every negative one-body level."""
    eps = np.linalg.eigvalsh(single_particle_matrix(lattice))
    return float(np.sum(eps[eps < 0]))


H1_DIAGONAL = np.array([-2.0, -1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 2.0])


def separable_rotation() -> np.ndarray:
    """``Z (x) (Z - X)/sqrt2 (x) X``; the leftmost factor acts on qubit 2."""
    z = np.diag([1.0, -1.0])
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    return np.kron(np.kron(z, (z - x) / np.sqrt(2.0)), x).astype(complex)


def separable_matrix() -> np.ndarray:
    v = separable_rotation()
    return v @ np.diag(H1_DIAGONAL).astype(complex) @ v


def build_separable_hamiltonian() -> PauliSum:
    return PauliSum.from_matrix(separable_matrix())


def hamiltonian(model: ModelId | str | LatticeSpec) -> PauliSum:
    if isinstance(model, LatticeSpec):
        return build_hopping_hamiltonian(model)
    model = ModelId.parse(model)
    if model is ModelId.Separable:
        return build_separable_hamiltonian()
    return build_hopping_hamiltonian(canonical_lattice(model))


def n_qubits(model: ModelId | str) -> int:
    model = ModelId.parse(model)
    return 3 if model is ModelId.Separable else _N_SITES[model]


def reference_ground_energy(model: ModelId | str | LatticeSpec, *, check: bool = True) -> float:
    """Exact ground energy from dense diagonalization.

    For hopping models the result is cross-checked against the one-body
    filling energy to 1e-10.
    """
    h = hamiltonian(model)
    eg = float(eigenvalues_hermitian(to_dense(h))[0])
    lattice = model if isinstance(model, LatticeSpec) else None
    if lattice is None and ModelId.parse(model) is not ModelId.Separable:
        lattice = canonical_lattice(model)
    if check and lattice is not None:
        ref = one_body_ground_energy(lattice)
        if abs(eg - ref) > 1e-10:
            raise ArithmeticError(f"dense ground energy {eg} disagrees with one-body value {ref}")
    return eg

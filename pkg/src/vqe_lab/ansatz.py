"""Block-structured trial states: Rz-Rx-Rz rotation layers interleaved with
fixed entangler blocks, plus the entangler catalog and its scaling rules."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .state_core import n_qubits_of, zero_state


class Gate(str, enum.Enum):
    CX = "CX"
    CZ = "CZ"
    SWAP = "SWAP"
    iSWAP = "iSWAP"
    Toffoli = "Toffoli"
    QFT3 = "QFT3"
    Identity = "Identity"

    @classmethod
    def parse(cls, value: "str | Gate") -> "Gate":
        if isinstance(value, cls):
            return value
        for g in cls:
            if g.value.lower() == str(value).lower():
                return g
        aliases = {"cnot": cls.CX, "ccx": cls.Toffoli, "qft": cls.QFT3, "i": cls.Identity, "id": cls.Identity}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown gate {value!r}") from None


ARITY = {
    Gate.CX: 2,
    Gate.CZ: 2,
    Gate.SWAP: 2,
    Gate.iSWAP: 2,
    Gate.Toffoli: 3,
    Gate.QFT3: 3,
    Gate.Identity: 0,
}


def gate_unitary(gate: Gate | str) -> np.ndarray:
    """Dense matrix of a fixed gate.

    Row/column index bits run over the gate's qubits in the order they are
    listed, first listed qubit most significant; for CX that makes the first
    qubit the control.
    """
    gate = Gate.parse(gate)
    if gate is Gate.CX:
        u = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    elif gate is Gate.CZ:
        u = np.diag([1, 1, 1, -1]).astype(complex)
    elif gate is Gate.SWAP:
        u = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
    elif gate is Gate.iSWAP:
        u = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
    elif gate is Gate.Toffoli:
        u = np.eye(8, dtype=complex)[[0, 1, 2, 3, 4, 5, 7, 6]]
    elif gate is Gate.QFT3:
        k = np.arange(8)
        u = np.exp(2j * np.pi * np.outer(k, k) / 8) / np.sqrt(8)
    else:
        u = np.eye(1, dtype=complex)
    return u


@dataclass(frozen=True)
class GatePlacement:
    gate: Gate
    qubits: tuple[int, ...] = ()

    def __post_init__(self):
        gate = Gate.parse(self.gate)
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != ARITY[gate]:
            raise ValueError(f"{gate.value} acts on {ARITY[gate]} qubits, got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"repeated qubit in {gate.value}{qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError("qubit indices must be non-negative")
        object.__setattr__(self, "gate", gate)
        object.__setattr__(self, "qubits", qubits)

    def __str__(self) -> str:
        return f"{self.gate.value}({','.join(map(str, self.qubits))})"


class ScalingRule(str, enum.Enum):
    ChainExtend = "ChainExtend"
    RingExtend = "RingExtend"
    Literal = "Literal"


@dataclass(frozen=True)
class EntanglerSpec:
    """A named, parameter-free gate block defined on the 3-qubit base register.

    Chain and ring rules lay two-qubit gates on neighbouring qubits of a
    larger register, cycling through the gate types of the base placements.
    """

    id: str
    placements: tuple[GatePlacement, ...] = ()
    scaling_rule: ScalingRule = ScalingRule.Literal

    def __post_init__(self):
        placements = tuple(
            p if isinstance(p, GatePlacement) else GatePlacement(*p) for p in self.placements
        )
        placements = tuple(p for p in placements if p.gate is not Gate.Identity)
        rule = ScalingRule(self.scaling_rule)
        if rule is not ScalingRule.Literal and any(len(p.qubits) != 2 for p in placements):
            raise ValueError(f"{rule.value} needs two-qubit base placements")
        object.__setattr__(self, "placements", placements)
        object.__setattr__(self, "scaling_rule", rule)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "placements": [{"gate": p.gate.value, "qubits": list(p.qubits)} for p in self.placements],
            "scaling_rule": self.scaling_rule.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntanglerSpec":
        if "id" not in d:
            raise ValueError("entangler config needs an 'id'")
        placements = tuple(
            GatePlacement(Gate.parse(p["gate"]), tuple(p.get("qubits", ())))
            for p in d.get("placements", ())
        )
        return cls(str(d["id"]), placements, ScalingRule(d.get("scaling_rule", "Literal")))


def _p(gate: Gate, *qubits: int) -> GatePlacement:
    return GatePlacement(gate, qubits)


CANONICAL_ENTANGLERS: dict[str, EntanglerSpec] = {
    e.id: e
    for e in (
        EntanglerSpec("Ent0", (), ScalingRule.Literal),
        EntanglerSpec("Ent1", (_p(Gate.CX, 0, 1), _p(Gate.CX, 1, 2)), ScalingRule.ChainExtend),
        EntanglerSpec(
            "Ent2", (_p(Gate.CX, 0, 1), _p(Gate.CX, 1, 2), _p(Gate.CX, 2, 0)), ScalingRule.RingExtend
        ),
        EntanglerSpec("Ent3", (_p(Gate.CZ, 0, 1), _p(Gate.CZ, 1, 2)), ScalingRule.ChainExtend),
        EntanglerSpec("Ent4", (_p(Gate.iSWAP, 0, 1), _p(Gate.iSWAP, 1, 2)), ScalingRule.ChainExtend),
        EntanglerSpec("Ent5", (_p(Gate.SWAP, 0, 1), _p(Gate.CX, 1, 2)), ScalingRule.ChainExtend),
    )
}


class EntanglerRegistry:
    """Canonical entanglers plus any user catalogs loaded on top."""

    def __init__(self, specs: Iterable[EntanglerSpec] = ()):
        self._specs = dict(CANONICAL_ENTANGLERS)
        for s in specs:
            self.add(s)

    def add(self, spec: EntanglerSpec) -> None:
        self._specs[spec.id] = spec

    def load(self, path: str | Path) -> list[str]:
        data = json.loads(Path(path).read_text())
        items = data if isinstance(data, list) else data.get("entanglers", [data])
        ids = []
        for d in items:
            spec = EntanglerSpec.from_dict(d)
            self.add(spec)
            ids.append(spec.id)
        return ids

    def __getitem__(self, key: "str | EntanglerSpec") -> EntanglerSpec:
        if isinstance(key, EntanglerSpec):
            return key
        try:
            return self._specs[key]
        except KeyError:
            raise KeyError(f"unknown entangler {key!r}; known: {sorted(self._specs)}") from None

    def __contains__(self, key: str) -> bool:
        return key in self._specs

    def ids(self) -> list[str]:
        return list(self._specs)


DEFAULT_REGISTRY = EntanglerRegistry()


def scale_entangler(spec: EntanglerSpec, n: int) -> list[GatePlacement]:
    if n < 2:
        raise ValueError("an entangler needs at least two qubits")
    base = spec.placements
    if not base:
        return []
    rule = spec.scaling_rule
    if rule is ScalingRule.Literal:
        for p in base:
            if max(p.qubits) >= n:
                raise ValueError(f"placement {p} does not fit a register of {n} qubits")
        return list(base)
    links = [(q, q + 1) for q in range(n - 1)]
    out = [GatePlacement(base[k % len(base)].gate, link) for k, link in enumerate(links)]
    if rule is ScalingRule.RingExtend:
        if n < 3:
            raise ValueError("a ring needs at least three qubits")
        out.append(GatePlacement(base[-1].gate, (n - 1, 0)))
    return out


# --- gate application ---------------------------------------------------------


def rotation_unitary(alpha, beta, gamma) -> np.ndarray:
    """``Rz(alpha) Rx(beta) Rz(gamma)`` with half-angle conventions; broadcasts over inputs."""
    alpha, beta, gamma = np.broadcast_arrays(
        np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float)
    )
    c = np.cos(beta / 2)
    s = np.sin(beta / 2)
    ep = np.exp(-0.5j * (alpha + gamma))
    em = np.exp(-0.5j * (alpha - gamma))
    u = np.empty(alpha.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = ep * c
    u[..., 0, 1] = -1j * em * s
    u[..., 1, 0] = -1j * em.conj() * s
    u[..., 1, 1] = ep.conj() * c
    return u


def apply_single_qubit(state: np.ndarray, u: np.ndarray, q: int) -> np.ndarray:
    """Apply a 2x2 unitary (optionally batched like ``state``) to qubit ``q``."""
    n = n_qubits_of(state)
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} outside register of size {n}")
    batch = state.shape[:-1]
    s = state.reshape(batch + (2 ** (n - 1 - q), 2, 2**q))
    a0 = s[..., 0, :]
    a1 = s[..., 1, :]
    u = np.asarray(u)
    u00, u01 = u[..., 0, 0, None, None], u[..., 0, 1, None, None]
    u10, u11 = u[..., 1, 0, None, None], u[..., 1, 1, None, None]
    out = np.empty_like(s)
    out[..., 0, :] = u00 * a0 + u01 * a1
    out[..., 1, :] = u10 * a0 + u11 * a1
    return out.reshape(state.shape)


def apply_gate(state: np.ndarray, u: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a ``2**k x 2**k`` matrix to the listed qubits (first listed = most significant)."""
    n = n_qubits_of(state)
    k = len(qubits)
    if k == 0:
        return state
    if u.shape != (2**k, 2**k):
        raise ValueError(f"matrix shape {u.shape} does not match {k} qubits")
    if len(set(qubits)) != k or not all(0 <= q < n for q in qubits):
        raise ValueError(f"invalid target qubits {tuple(qubits)} for {n} qubits")
    batch = state.shape[:-1]
    nb = len(batch)
    t = state.reshape(batch + (2,) * n)
    axes = [nb + n - 1 - q for q in qubits]
    t = np.moveaxis(t, axes, range(nb + n - k, nb + n))
    shp = t.shape
    t = (t.reshape(shp[: nb + n - k] + (2**k,)) @ u.T).reshape(shp)
    t = np.moveaxis(t, range(nb + n - k, nb + n), axes)
    return np.ascontiguousarray(t).reshape(state.shape)


def _monomial(u: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    # (row_of_col, value) if every column has exactly one nonzero
    nz = np.abs(u) > 1e-15
    if not np.all(nz.sum(axis=0) == 1):
        return None
    rows = np.argmax(nz, axis=0)
    return rows, u[rows, np.arange(u.shape[1])]


class CompiledEntangler:
    """Entangler placements bound to a register size.

    Blocks made only of permutation-with-phase gates (everything but QFT3)
    collapse into a single gather ``out[i] = phase[i] * psi[src[i]]``.
    """

    def __init__(self, placements: Sequence[GatePlacement], n_qubits: int):
        self.placements = tuple(placements)
        self.n_qubits = n_qubits
        for p in self.placements:
            if max(p.qubits, default=-1) >= n_qubits:
                raise ValueError(f"placement {p} does not fit {n_qubits} qubits")
        self._gather = self._compile()

    def _compile(self):
        dim = 2**self.n_qubits
        src = np.arange(dim)
        phase = np.ones(dim, dtype=complex)
        for p in self.placements:
            mono = _monomial(gate_unitary(p.gate))
            if mono is None:
                return None
            rows, vals = mono
            k = len(p.qubits)
            inv = np.empty_like(rows)
            inv[rows] = np.arange(len(rows))
            idx = np.arange(dim)
            local = np.zeros(dim, dtype=np.int64)
            for pos, q in enumerate(p.qubits):
                local |= ((idx >> q) & 1) << (k - 1 - pos)
            col = inv[local]
            g_src = idx.copy()
            for pos, q in enumerate(p.qubits):
                bit = (col >> (k - 1 - pos)) & 1
                g_src = (g_src & ~(1 << q)) | (bit << q)
            g_phase = vals[col]
            # this gate acts after everything compiled so far
            phase = g_phase * phase[g_src]
            src = src[g_src]
        return src, phase

    @property
    def is_identity(self) -> bool:
        return not self.placements

    def apply(self, state: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return state
        if self._gather is not None:
            src, phase = self._gather
            return phase * state[..., src]
        for p in self.placements:
            state = apply_gate(state, gate_unitary(p.gate), p.qubits)
        return state

    def matrix(self) -> np.ndarray:
        dim = 2**self.n_qubits
        return self.apply(np.eye(dim, dtype=complex)).T


def n_parameters(n_qubits: int, d_blocks: int) -> int:
    return 3 * n_qubits * d_blocks


@dataclass(frozen=True)
class ParameterVector:
    """Flat angle vector of length ``3*N*D``, laid out block, then qubit, then (alpha, beta, gamma)."""

    d_blocks: int
    n_qubits: int
    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).ravel()
        if self.d_blocks < 1 or self.n_qubits < 1:
            raise ValueError("d_blocks and n_qubits must be positive")
        expected = n_parameters(self.n_qubits, self.d_blocks)
        if a.size != expected:
            raise ValueError(f"expected {expected} angles for N={self.n_qubits}, D={self.d_blocks}; got {a.size}")
        object.__setattr__(self, "angles", a)

    def blocks(self) -> np.ndarray:
        """Angles reshaped to ``(D, N, 3)``."""
        return self.angles.reshape(self.d_blocks, self.n_qubits, 3)


def apply_rotation_layer(state: np.ndarray, block_angles: np.ndarray) -> np.ndarray:
    """Apply ``R(alpha, beta, gamma)`` independently to every qubit.

    ``block_angles`` has shape ``(..., N, 3)``; leading axes batch alongside ``state``.
    """
    n = n_qubits_of(state)
    block_angles = np.asarray(block_angles, dtype=float)
    if block_angles.shape[-2:] != (n, 3):
        raise ValueError(f"expected angles of shape (..., {n}, 3), got {block_angles.shape}")
    us = rotation_unitary(block_angles[..., 0], block_angles[..., 1], block_angles[..., 2])
    for q in range(n):
        state = apply_single_qubit(state, us[..., q, :, :], q)
    return state


class Ansatz:
    """``D`` repetitions of (rotation layer, entangler) acting on ``|0...0>``."""

    def __init__(self, n_qubits: int, d_blocks: int, entangler: EntanglerSpec | str = "Ent1",
                 registry: EntanglerRegistry = DEFAULT_REGISTRY):
        if d_blocks < 1:
            raise ValueError("d_blocks must be at least 1")
        self.n_qubits = n_qubits
        self.d_blocks = d_blocks
        self.entangler = registry[entangler]
        self.compiled = CompiledEntangler(scale_entangler(self.entangler, n_qubits), n_qubits)

    @cached_property
    def n_params(self) -> int:
        return n_parameters(self.n_qubits, self.d_blocks)

    def state(self, theta: np.ndarray) -> np.ndarray:
        """Trial state(s) for angle vector(s) of shape ``(..., 3*N*D)``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise ValueError(
                f"expected {self.n_params} angles (3*N*D with N={self.n_qubits}, D={self.d_blocks}), "
                f"got {theta.shape[-1]}"
            )
        batch = theta.shape[:-1]
        blocks = theta.reshape(batch + (self.d_blocks, self.n_qubits, 3))
        psi = np.broadcast_to(zero_state(self.n_qubits), batch + (2**self.n_qubits,)).copy()
        for k in range(self.d_blocks):
            psi = apply_rotation_layer(psi, blocks[..., k, :, :])
            psi = self.compiled.apply(psi)
        return psi


def prepare_trial_state(params: ParameterVector, entangler: EntanglerSpec | str,
                        registry: EntanglerRegistry = DEFAULT_REGISTRY) -> np.ndarray:
    return Ansatz(params.n_qubits, params.d_blocks, entangler, registry).state(params.angles)

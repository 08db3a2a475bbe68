"""Small gate-level simulator of randomized benchmarking on one or two qubits.

Channels are real Pauli-transfer matrices in the normalized Pauli basis
``P / sqrt(d)``.  An ideal Clifford permutes the Pauli operators up to sign,
so the group is stored as signed permutations: 24 elements for one qubit and
11520 for two, generated by closure and indexed by a hash table.  Dense
transfer matrices are only built on request.
"""

from __future__ import annotations

import functools
import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

_PAULI_1Q = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI_LABELS = ("I", "X", "Y", "Z")


@functools.lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> np.ndarray:
    """Unnormalized n-qubit Paulis, shape ``(4**n, 2**n, 2**n)``; qubit 0 is the left factor."""
    mats = []
    for labels in itertools.product(range(4), repeat=n_qubits):
        op = np.eye(1, dtype=complex)
        for a in labels:
            op = np.kron(op, _PAULI_1Q[a])
        mats.append(op)
    return np.array(mats)


def pauli_labels(n_qubits: int) -> list[str]:
    return ["".join(t) for t in itertools.product(PAULI_LABELS, repeat=n_qubits)]


def to_pauli_vector(M: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian operator in the normalized Pauli basis."""
    d = M.shape[0]
    n = int(round(math.log2(d)))
    P = pauli_basis(n)
    return np.real(np.einsum("kij,ji->k", P, M)) / math.sqrt(d)


def from_pauli_vector(v: np.ndarray) -> np.ndarray:
    n = int(round(math.log(v.shape[0], 4)))
    d = 2**n
    return np.einsum("k,kij->ij", v, pauli_basis(n)) / math.sqrt(d)


def ptm_from_unitary(U: np.ndarray) -> np.ndarray:
    d = U.shape[0]
    n = int(round(math.log2(d)))
    P = pauli_basis(n)
    conj = np.einsum("ab,kbc,dc->kad", U, P, U.conj())
    return np.real(np.einsum("iab,jba->ij", P, conj)) / d


def choi_matrix(ptm: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) L(|i><j|)`` of a channel given by its transfer matrix."""
    d = int(round(math.sqrt(ptm.shape[0])))
    n = int(round(math.log2(d)))
    P = pauli_basis(n) / math.sqrt(d)
    J = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            Eij = np.zeros((d, d), dtype=complex)
            Eij[i, j] = 1.0
            # complex coordinates, the map is linear so this is exact
            coords = np.einsum("kab,ba->k", P, Eij)
            out = np.einsum("k,kab->ab", ptm.astype(complex) @ coords, P)
            J += np.kron(Eij, out)
    return J


def is_cptp(ptm: np.ndarray, atol: float = 1e-10) -> bool:
    tp = np.allclose(ptm[0], np.eye(ptm.shape[0])[0], atol=atol)
    eig = np.linalg.eigvalsh(choi_matrix(ptm))
    return bool(tp and eig.min() > -atol)


def decay_parameter(ptm: np.ndarray) -> float:
    """Twirled depolarizing parameter ``(tr R - 1) / (d^2 - 1)`` of a trace-preserving channel."""
    D = ptm.shape[0]
    return float((np.trace(ptm) - 1.0) / (D - 1))


def unitarity(ptm: np.ndarray) -> float:
    """Unitarity ``tr(R_u^T R_u) / (d^2 - 1)`` with ``R_u`` the unital block."""
    D = ptm.shape[0]
    Ru = ptm[1:, 1:]
    return float(np.sum(Ru * Ru) / (D - 1))


# ----------------------------------------------------------------------------
# noise models


@dataclass(frozen=True)
class Depolarizing:
    strength: float

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"depolarizing strength must lie in [0, 1], got {self.strength}")

    def ptm(self, n_qubits: int) -> np.ndarray:
        D = 4**n_qubits
        R = np.eye(D) * (1.0 - self.strength)
        R[0, 0] = 1.0
        return R

    def to_string(self) -> str:
        return f"depolarizing:{self.strength!r}"


@dataclass(frozen=True)
class UnitaryRotation:
    """Over-rotation ``exp(-i angle/2 axis.sigma)`` applied to every qubit."""

    axis: tuple[float, float, float]
    angle: float

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3 or np.linalg.norm(axis) == 0:
            raise ValueError("rotation axis must be a non-zero 3-vector")
        object.__setattr__(self, "axis", axis)

    def unitary(self, n_qubits: int) -> np.ndarray:
        a = np.asarray(self.axis) / np.linalg.norm(self.axis)
        H = sum(c * s for c, s in zip(a, _PAULI_1Q[1:]))
        u = expm(-0.5j * self.angle * H)
        U = np.eye(1, dtype=complex)
        for _ in range(n_qubits):
            U = np.kron(U, u)
        return U

    def ptm(self, n_qubits: int) -> np.ndarray:
        return ptm_from_unitary(self.unitary(n_qubits))

    def to_string(self) -> str:
        ax = ",".join(repr(a) for a in self.axis)
        return f"rotation:{ax}:{self.angle!r}"


@dataclass(frozen=True)
class Composed:
    """Channels applied left to right."""

    parts: tuple = field(default_factory=tuple)

    def ptm(self, n_qubits: int) -> np.ndarray:
        R = np.eye(4**n_qubits)
        for part in self.parts:
            R = part.ptm(n_qubits) @ R
        return R

    def to_string(self) -> str:
        return "+".join(p.to_string() for p in self.parts) or "none"


NoiseSpec = Depolarizing | UnitaryRotation | Composed

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def parse_noise(text: str) -> NoiseSpec:
    """Parse ``depolarizing:0.02``, ``rotation:z:0.05``, ``rotation:1,0,1:0.1`` joined by ``+``."""
    parts = []
    for chunk in text.split("+"):
        chunk = chunk.strip()
        if chunk in ("", "none"):
            continue
        kind, _, rest = chunk.partition(":")
        try:
            if kind in ("depolarizing", "depol"):
                parts.append(Depolarizing(float(rest)))
            elif kind in ("rotation", "rot"):
                ax, _, ang = rest.rpartition(":")
                axis = _AXES.get(ax.lower()) or tuple(float(c) for c in ax.split(","))
                parts.append(UnitaryRotation(axis, float(ang)))
            else:
                raise ValueError(f"unknown noise kind {kind!r}")
        except (TypeError, ValueError) as exc:
            raise ValueError(f"cannot parse noise term {chunk!r}: {exc}") from None
    if len(parts) == 1:
        return parts[0]
    return Composed(tuple(parts))


# ----------------------------------------------------------------------------
# Clifford group


def _signed_perm(ptm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    perm = np.argmax(np.abs(ptm), axis=0)
    sign = np.sign(ptm[perm, np.arange(ptm.shape[1])]).astype(np.int8)
    if not np.allclose(np.abs(ptm).sum(axis=0), 1.0, atol=1e-9):
        raise ValueError("not a Clifford transfer matrix")
    return perm.astype(np.int16), sign


def _key(perm: np.ndarray, sign: np.ndarray) -> bytes:
    return perm.astype(np.int16).tobytes() + sign.astype(np.int8).tobytes()


_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j])
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def _generators(n_qubits: int) -> list[np.ndarray]:
    if n_qubits == 1:
        return [_H, _S]
    I2 = np.eye(2)
    return [np.kron(_H, I2), np.kron(I2, _H), np.kron(_S, I2), np.kron(I2, _S), _CNOT]


class CliffordGroup(Sequence):
    """The n-qubit Clifford group modulo phases.

    Behaves as a read-only sequence of transfer matrices.  Element 0 is the
    identity.  Composition ``compose(a, b)`` means "apply ``b`` then ``a``".
    """

    def __init__(self, n_qubits: int):
        if n_qubits not in (1, 2):
            raise ValueError(f"only 1 or 2 qubits are supported, got {n_qubits}")
        self.n_qubits = n_qubits
        self.dim = 4**n_qubits
        gens = [_signed_perm(ptm_from_unitary(U)) for U in _generators(n_qubits)]
        ident = (np.arange(self.dim, dtype=np.int16), np.ones(self.dim, dtype=np.int8))
        perms, signs = [ident[0]], [ident[1]]
        index = {_key(*ident): 0}
        frontier = [0]
        while frontier:
            nxt = []
            for e in frontier:
                for gp, gs in gens:
                    p, s = gp[perms[e]], signs[e] * gs[perms[e]]
                    k = _key(p, s)
                    if k not in index:
                        index[k] = len(perms)
                        perms.append(p)
                        signs.append(s)
                        nxt.append(index[k])
            frontier = nxt
        self.perms = np.array(perms)
        self.signs = np.array(signs)
        self.perms.setflags(write=False)
        self.signs.setflags(write=False)
        self._index = index
        self._inverse = None
        xs = ptm_from_unitary(functools.reduce(np.kron, [_PAULI_1Q[1]] * n_qubits))
        self.flip_index = self.index_of(*_signed_perm(xs))

    def __len__(self) -> int:
        return len(self.perms)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return self.ptm(i)

    def ptm(self, i: int) -> np.ndarray:
        R = np.zeros((self.dim, self.dim))
        R[self.perms[i], np.arange(self.dim)] = self.signs[i]
        return R

    def index_of(self, perm: np.ndarray, sign: np.ndarray) -> int:
        return self._index[_key(perm, sign)]

    def compose(self, a: int, b: int) -> int:
        pb = self.perms[b]
        return self.index_of(self.perms[a][pb], self.signs[b] * self.signs[a][pb])

    def inverse(self, i: int) -> int:
        p, s = self.perms[i], self.signs[i]
        ip = np.empty_like(p)
        ip[p] = np.arange(self.dim, dtype=p.dtype)
        isg = np.empty_like(s)
        isg[p] = s
        return self.index_of(ip, isg)

    def composite(self, gate_ids) -> int:
        """Index of the product of ``gate_ids`` applied first to last."""
        out = 0
        for g in gate_ids:
            out = self.compose(int(g), out)
        return out

    def apply(self, ids: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        """Apply ideal elements ``ids`` (shape ``(k,)``) to Pauli vectors ``vecs`` (``(k, D)``)."""
        out = np.empty_like(vecs)
        np.put_along_axis(out, self.perms[ids].astype(np.intp), self.signs[ids] * vecs, axis=1)
        return out


@functools.lru_cache(maxsize=None)
def clifford_group(n_qubits: int) -> CliffordGroup:
    return CliffordGroup(n_qubits)


# ----------------------------------------------------------------------------
# sequences and execution


@dataclass(frozen=True)
class SequenceRecord:
    n_qubits: int
    m: int
    gate_ids: tuple[int, ...]
    inversion_id: int
    b: int

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "m": self.m,
            "gate_ids": list(self.gate_ids),
            "inversion_id": self.inversion_id,
            "b": self.b,
        }


def inversion_for(group: CliffordGroup, gate_ids, b: int) -> int:
    """Element that makes the whole sequence equal to the flip raised to ``b``."""
    inv = group.inverse(group.composite(gate_ids))
    return group.compose(group.flip_index, inv) if b else inv


def sample_sequence(n_qubits: int, m: int, b: int, rng: np.random.Generator) -> SequenceRecord:
    if m < 1:
        raise ValueError("sequence length must be at least 1")
    if b not in (0, 1):
        raise ValueError("compiled bit must be 0 or 1")
    group = clifford_group(n_qubits)
    gates = rng.integers(len(group), size=m)
    return SequenceRecord(n_qubits, m, tuple(int(g) for g in gates), inversion_for(group, gates, b), b)


def sample_sequences(n_qubits: int, m: int, b: int, k: int, rng: np.random.Generator):
    """Vectorized sampling of ``k`` sequences; returns ``(gate_ids (k, m), inversion_ids (k,))``."""
    if m < 1:
        raise ValueError("sequence length must be at least 1")
    group = clifford_group(n_qubits)
    gates = rng.integers(len(group), size=(k, m))
    perm = np.tile(np.arange(group.dim, dtype=np.intp), (k, 1))
    sign = np.ones((k, group.dim), dtype=np.int8)
    for j in range(m):
        gp = group.perms[gates[:, j]].astype(np.intp)
        gs = group.signs[gates[:, j]]
        sign = sign * np.take_along_axis(gs, perm, axis=1)
        perm = np.take_along_axis(gp, perm, axis=1)
    # inverse of each composite, then the optional flip
    inv_perm = np.empty_like(perm)
    np.put_along_axis(inv_perm, perm, np.arange(group.dim)[None, :].repeat(k, 0), axis=1)
    inv_sign = np.empty_like(sign)
    np.put_along_axis(inv_sign, perm, sign, axis=1)
    if b:
        fp = group.perms[group.flip_index].astype(np.intp)
        fs = group.signs[group.flip_index]
        inv_sign = inv_sign * fs[inv_perm]
        inv_perm = fp[inv_perm]
    inv_ids = np.array([group.index_of(p, s) for p, s in zip(inv_perm, inv_sign)], dtype=np.int64)
    return gates, inv_ids


def ground_state(n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def state_vector(rho: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise ValueError("state is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError("state does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("state is not positive semidefinite")
    return to_pauli_vector(rho)


def effect_vector(E: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    E = np.asarray(E, dtype=complex)
    if not np.allclose(E, E.conj().T, atol=atol):
        raise ValueError("effect is not Hermitian")
    ev = np.linalg.eigvalsh(E)
    if ev.min() < -atol or ev.max() > 1 + atol:
        raise ValueError("effect must satisfy 0 <= E <= 1")
    return to_pauli_vector(E)


def _noise_ptm(noise, n_qubits: int) -> np.ndarray:
    if noise is None:
        return np.eye(4**n_qubits)
    if isinstance(noise, np.ndarray):
        return noise
    return noise.ptm(n_qubits)


def evolve(group: CliffordGroup, ids: np.ndarray, vec: np.ndarray, noise_ptm: np.ndarray) -> np.ndarray:
    """Run a batch of gate columns ``ids`` (``(k, L)``) on ``vec``; noise follows every gate."""
    k = ids.shape[0]
    v = np.tile(vec, (k, 1)) if vec.ndim == 1 else vec.copy()
    NT = noise_ptm.T
    for j in range(ids.shape[1]):
        v = group.apply(ids[:, j], v) @ NT
    return v


def survival_probabilities(n_qubits, gate_ids, inversion_ids, noise=None, rho=None, E=None) -> np.ndarray:
    """Exact survival probabilities for a batch of sequences."""
    group = clifford_group(n_qubits)
    rv = state_vector(ground_state(n_qubits) if rho is None else rho)
    ev = effect_vector(ground_state(n_qubits) if E is None else E)
    ids = np.column_stack([np.asarray(gate_ids), np.asarray(inversion_ids)])
    v = evolve(group, ids, rv, _noise_ptm(noise, n_qubits))
    return v @ ev


def run_sequence(seq: SequenceRecord, noise=None, rho=None, E=None) -> float:
    """Exact survival probability ``q(m, s)`` of one noisy sequence."""
    q = survival_probabilities(seq.n_qubits, [seq.gate_ids], [seq.inversion_id], noise, rho, E)
    return float(q[0])


def pauli_expectations_batch(n_qubits, gate_ids, noise=None, rho=None) -> np.ndarray:
    group = clifford_group(n_qubits)
    rv = state_vector(ground_state(n_qubits) if rho is None else rho)
    v = evolve(group, np.asarray(gate_ids), rv, _noise_ptm(noise, n_qubits))
    d = 2**n_qubits
    return math.sqrt(d) * v[:, 1:]


def trace_batch(n_qubits, gate_ids, noise=None, rho=None) -> np.ndarray:
    """Trace of the output state; stays at 1 for trace-preserving noise."""
    group = clifford_group(n_qubits)
    rv = state_vector(ground_state(n_qubits) if rho is None else rho)
    v = evolve(group, np.asarray(gate_ids), rv, _noise_ptm(noise, n_qubits))
    return math.sqrt(2**n_qubits) * v[:, 0]


def pauli_expectations(seq: SequenceRecord, noise=None, rho=None) -> np.ndarray:
    """Expectations of every non-identity Pauli after the random gates of ``seq``.

    The inversion gate is ignored; the unitarity protocol uses raw sequences.
    """
    return pauli_expectations_batch(seq.n_qubits, [seq.gate_ids], noise, rho)[0]

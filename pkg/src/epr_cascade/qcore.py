"""
Dense pure-state and density-operator kernel.

Bit ordering: qubit 0 is the most significant bit of the basis index, so the
amplitude of |q0 q1 ... q(n-1)> lives at index sum(q_i * 2**(n-1-i)).
Every helper in the package uses this convention.

States are immutable values. Gates and measurements return new objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantViolation

VALIDATION_TOL = 1e-9
COLLAPSE_FLOOR = 1e-15


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over ``num_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise ValueError(f"amplitude vector length {amps.size} is not 2**n with n >= 1")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > VALIDATION_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def _trusted(cls, amps: np.ndarray) -> "PureState":
        # outputs of unitaries and renormalized projections skip re-validation
        obj = object.__new__(cls)
        amps.setflags(write=False)
        object.__setattr__(obj, "amplitudes", amps)
        return obj

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def from_amplitudes(cls, amps: Iterable[complex], normalize: bool = False) -> "PureState":
        vec = np.asarray(list(amps), dtype=complex)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(vec)

    def __getitem__(self, index: int) -> complex:
        return complex(self.amplitudes[index])

    def __len__(self) -> int:
        return self.amplitudes.size

    def isclose(self, other: "PureState", atol: float = 1e-12, up_to_phase: bool = False) -> bool:
        if other.num_qubits != self.num_qubits:
            return False
        if up_to_phase:
            return abs(abs(np.vdot(self.amplitudes, other.amplitudes)) - 1.0) <= atol
        return bool(np.allclose(self.amplitudes, other.amplitudes, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, trace-one, positive semidefinite matrix over ``num_qubits`` qubits."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density operator must be a square matrix")
        dim = rho.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise ValueError(f"dimension {dim} is not 2**n with n >= 1")
        if not np.all(np.isfinite(rho)):
            raise ValueError("entries must be finite")
        if not np.allclose(rho, rho.conj().T, rtol=0, atol=VALIDATION_TOL):
            raise ValueError("density operator is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > VALIDATION_TOL:
            raise ValueError(f"trace {np.trace(rho).real!r} != 1")
        if np.linalg.eigvalsh(rho).min() < -VALIDATION_TOL:
            raise ValueError("density operator has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(rho))

    @property
    def num_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOperator":
        v = state.amplitudes
        return cls(np.outer(v, v.conj()))

    def mix(self, other: "DensityOperator", weight: float) -> "DensityOperator":
        """Return ``weight * self + (1 - weight) * other``."""
        if not 0.0 <= weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        return DensityOperator(weight * self.matrix + (1.0 - weight) * other.matrix)


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """Unitary acting on one (2x2) or two (4x4) qubits."""

    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.shape not in ((2, 2), (4, 4)):
            raise ValueError(f"gate must be 2x2 or 4x4, got {u.shape}")
        if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), rtol=0, atol=VALIDATION_TOL):
            raise ValueError(f"gate {self.name or '<unnamed>'} is not unitary")
        object.__setattr__(self, "matrix", _frozen(u))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MeasurementRecord:
    qubit_index: int
    outcome: int
    probability: float


_S = 1 / sqrt(2)
I = GateMatrix(np.eye(2), "I")
X = GateMatrix([[0, 1], [1, 0]], "X")
Y = GateMatrix([[0, -1j], [1j, 0]], "Y")
Z = GateMatrix([[1, 0], [0, -1]], "Z")
H = GateMatrix(np.array([[1, 1], [1, -1]]) * _S, "H")
CNOT = GateMatrix([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "CNOT")

ZERO = PureState([1, 0])
ONE = PureState([0, 1])
PLUS = PureState([_S, _S])
MINUS = PureState([_S, -_S])


def basis_state(bits: str) -> PureState:
    """Computational basis state from a bitstring, e.g. ``basis_state("01")``."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid bitstring {bits!r}")
    vec = np.zeros(1 << len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return PureState(vec)


def _check_index(state: PureState, idx: int) -> None:
    if not 0 <= idx < state.num_qubits:
        raise IndexError(f"qubit index {idx} out of range for {state.num_qubits} qubits")


def epr_pair() -> PureState:
    """(|00> + |11>)/sqrt(2)."""
    return PureState([_S, 0, 0, _S])


def tensor_with(left: PureState, right: PureState) -> PureState:
    """Product state with ``left`` occupying the leading (most significant) qubits."""
    return PureState._trusted(np.outer(left.amplitudes, right.amplitudes).reshape(-1))


@lru_cache(maxsize=None)
def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    cbit, tbit = 1 << (n - 1 - control), 1 << (n - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


def apply_cnot(state: PureState, control: int, target: int) -> PureState:
    _check_index(state, control)
    _check_index(state, target)
    if control == target:
        raise ValueError("control and target must differ")
    perm = _cnot_permutation(state.num_qubits, control, target)
    return PureState._trusted(state.amplitudes[perm])


def apply_single_qubit(state: PureState, gate: GateMatrix, idx: int) -> PureState:
    if gate.dimension != 2:
        raise ValueError("apply_single_qubit needs a 2x2 gate")
    _check_index(state, idx)
    n = state.num_qubits
    t = state.amplitudes.reshape(1 << idx, 2, 1 << (n - 1 - idx))
    out = np.einsum("ij,ajb->aib", gate.matrix, t)
    return PureState._trusted(out.reshape(-1))


def _split(amplitudes: np.ndarray, n: int, idx: int) -> np.ndarray:
    """View with qubit ``idx`` as the middle axis of length 2."""
    return amplitudes.reshape(1 << idx, 2, 1 << (n - 1 - idx))


def _qubit_probs(amplitudes: np.ndarray, n: int, idx: int) -> np.ndarray:
    t = _split(amplitudes, n, idx)
    return (t.real**2 + t.imag**2).sum(axis=(0, 2))


def outcome_probability(state: PureState, idx: int) -> tuple[float, float]:
    """Born probabilities (p0, p1) for a computational-basis measurement of qubit ``idx``."""
    _check_index(state, idx)
    p0, p1 = _qubit_probs(state.amplitudes, state.num_qubits, idx)
    total = p0 + p1
    return float(p0 / total), float(p1 / total)


def project(state: PureState, idx: int, outcome: int) -> tuple[float, PureState]:
    """Collapse qubit ``idx`` onto ``outcome``; return (Born probability, renormalized state)."""
    _check_index(state, idx)
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    n = state.num_qubits
    t = _split(state.amplitudes, n, idx).copy()
    t[:, 1 - outcome, :] = 0.0
    vec = t.reshape(-1)
    prob = float(np.vdot(vec, vec).real)
    if prob < COLLAPSE_FLOOR:
        raise InvariantViolation(
            f"collapse of qubit {idx} onto outcome {outcome} with probability {prob:.3g}"
        )
    return prob, PureState._trusted(vec / sqrt(prob))


def measure_qubit(state: PureState, idx: int, rng: np.random.Generator) -> tuple[MeasurementRecord, PureState]:
    """Projective computational-basis measurement with collapse.

    One uniform draw is consumed; outcome 1 is chosen when the draw falls
    below p1.
    """
    _, p1 = outcome_probability(state, idx)
    outcome = 1 if rng.random() < p1 else 0
    prob, post = project(state, idx, outcome)
    return MeasurementRecord(idx, outcome, prob), post


def reduced_density(state: PureState, idx: int) -> DensityOperator:
    """Single-qubit reduced density operator of qubit ``idx`` (trace over all others)."""
    _check_index(state, idx)
    t = _split(state.amplitudes, state.num_qubits, idx)
    return DensityOperator(np.einsum("aib,ajb->ij", t, t.conj()))


def density_from_ensemble(parts: Sequence[tuple[float, PureState]]) -> DensityOperator:
    """sum_i w_i |s_i><s_i| for a weighted ensemble of pure states."""
    if not parts:
        raise ValueError("empty ensemble")
    weights = [float(w) for w, _ in parts]
    if min(weights) < 0:
        raise ValueError("ensemble weights must be non-negative")
    if abs(sum(weights) - 1.0) > VALIDATION_TOL:
        raise ValueError(f"ensemble weights sum to {sum(weights)!r}, expected 1")
    dim = len(parts[0][1])
    rho = np.zeros((dim, dim), dtype=complex)
    for w, s in parts:
        if len(s) != dim:
            raise ValueError("ensemble members must have equal dimension")
        rho += w * np.outer(s.amplitudes, s.amplitudes.conj())
    return DensityOperator(rho)

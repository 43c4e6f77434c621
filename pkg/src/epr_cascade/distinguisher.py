"""
Bob's CNOT ancilla cascade.

Each round attaches a fresh ancilla a|0> + b|1> as the target of a CNOT
whose control is Bob's qubit, measures the ancilla in the computational
basis and discards it. The observable is the number of rounds whose
ancilla reads 0 (the zero-count).

Two routes to the zero-count law are provided:

* ``run_cascade`` simulates one run on the dense state vector;
* ``exact_count_distribution`` enumerates every outcome branch, carrying the
  unnormalized conditional density operator of the control qubit.

``sample_zero_counts`` is a vectorized trajectory sampler for large Monte
Carlo batches; it tracks the control amplitudes directly instead of going
through the state-vector kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, sqrt
from typing import Sequence

import numpy as np

from . import qcore
from .errors import BranchBudgetExceeded, InvariantViolation
from .qcore import DensityOperator, PureState

DEFAULT_BRANCH_BUDGET = 2**20


@dataclass(frozen=True)
class AncillaSpec:
    """Target-qubit preparation a|0> + b|1>; defaults to (|0> + 2|1>)/sqrt(5)."""

    a: complex = 1 / sqrt(5)
    b: complex = 2 / sqrt(5)

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("ancilla amplitudes must be finite")
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > qcore.VALIDATION_TOL:
            raise ValueError(f"ancilla |a|^2 + |b|^2 = {abs(a)**2 + abs(b)**2!r}, expected 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def normalized(cls, a: complex, b: complex) -> "AncillaSpec":
        norm = sqrt(abs(a) ** 2 + abs(b) ** 2)
        if norm == 0:
            raise ValueError("ancilla amplitudes cannot both be zero")
        return cls(a / norm, b / norm)

    @cached_property
    def state(self) -> PureState:
        return PureState([self.a, self.b])


@dataclass(frozen=True)
class CascadeConfig:
    rounds: int = 5
    ancilla: AncillaSpec = field(default_factory=AncillaSpec)

    def __post_init__(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be an integer >= 1, got {self.rounds!r}")


@dataclass(frozen=True)
class CascadeResult:
    outcomes: tuple[int, ...]
    zero_count: int
    step_probabilities: tuple[float, ...]
    final_control: PureState


@dataclass(frozen=True, eq=False)
class CountDistribution:
    """Probability mass over zero-counts 0..rounds."""

    rounds: int
    mass: np.ndarray

    def __post_init__(self):
        m = np.array(self.mass, dtype=float).reshape(-1)
        if self.rounds < 1 or m.size != self.rounds + 1:
            raise ValueError(f"need {self.rounds + 1} mass entries for rounds={self.rounds}")
        if not np.all(np.isfinite(m)) or m.min() < -1e-12:
            raise ValueError("mass entries must be finite and non-negative")
        if abs(m.sum() - 1.0) > qcore.VALIDATION_TOL:
            raise ValueError(f"mass sums to {m.sum()!r}, expected 1")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    def __getitem__(self, count: int) -> float:
        return float(self.mass[count])

    def __len__(self) -> int:
        return self.mass.size

    def tolist(self) -> list[float]:
        return [float(x) for x in self.mass]

    def mean(self) -> float:
        return float(np.dot(np.arange(self.mass.size), self.mass))

    def allclose(self, other: "CountDistribution", atol: float = 1e-12) -> bool:
        return self.rounds == other.rounds and bool(np.allclose(self.mass, other.mass, rtol=0, atol=atol))


def _require_single(state: PureState) -> None:
    if state.num_qubits != 1:
        raise ValueError("control must be a single-qubit state")


def cascade_step(control: PureState, ancilla: AncillaSpec) -> PureState:
    """CNOT(control -> ancilla) on control (x) ancilla; qubit 0 is the control."""
    _require_single(control)
    return qcore.apply_cnot(qcore.tensor_with(control, ancilla.state), 0, 1)


def step_zero_probability(control: PureState, ancilla: AncillaSpec) -> float:
    """Probability that the ancilla reads 0 after one cascade step."""
    return qcore.outcome_probability(cascade_step(control, ancilla), 1)[0]


def run_cascade(control: PureState, cfg: CascadeConfig, rng: np.random.Generator) -> CascadeResult:
    """One stochastic run of the k-round cascade on the dense state vector."""
    _require_single(control)
    outcomes, probs = [], []
    for _ in range(cfg.rounds):
        joint = cascade_step(control, cfg.ancilla)
        rec, post = qcore.measure_qubit(joint, 1, rng)
        outcomes.append(rec.outcome)
        probs.append(rec.probability)
        # target is now a basis state, so the control factors out exactly
        control = PureState._trusted(post.amplitudes.reshape(2, 2)[:, rec.outcome].copy())
    return CascadeResult(
        outcomes=tuple(outcomes),
        zero_count=outcomes.count(0),
        step_probabilities=tuple(probs),
        final_control=control,
    )


def _branch_operator(rho: np.ndarray, ancilla: AncillaSpec, outcome: int) -> np.ndarray:
    """Unnormalized control operator after CNOT and projecting the target onto ``outcome``."""
    anc = ancilla.state.amplitudes
    joint = np.kron(rho, np.outer(anc, anc.conj()))
    u = qcore.CNOT.matrix
    joint = u @ joint @ u.conj().T
    # <outcome|_target joint |outcome>_target, indices (c, t, c', t')
    return joint.reshape(2, 2, 2, 2)[:, outcome, :, outcome]


def _check_budget(rounds: int, budget: int) -> None:
    if 2**rounds > budget:
        raise BranchBudgetExceeded(
            f"{rounds} rounds need 2**{rounds} branches, above the budget of {budget}"
        )


def exact_sequence_distribution(
    rho: DensityOperator, cfg: CascadeConfig, budget: int = DEFAULT_BRANCH_BUDGET
) -> np.ndarray:
    """Exact probability of every outcome sequence.

    Entry ``i`` is the probability of the sequence whose bits, first round
    as the most significant bit, spell ``i``.
    """
    if rho.num_qubits != 1:
        raise ValueError("cascade input must be a single-qubit density operator")
    _check_budget(cfg.rounds, budget)
    k = cfg.rounds
    out = np.zeros(2**k)
    stack = [(rho.matrix, 0, 0)]
    while stack:
        op, depth, prefix = stack.pop()
        if depth == k:
            out[prefix] = np.trace(op).real
            continue
        for outcome in (0, 1):
            stack.append((_branch_operator(op, cfg.ancilla, outcome), depth + 1, (prefix << 1) | outcome))
    return out


def zero_counts_of_sequences(rounds: int) -> np.ndarray:
    """Zero-count of every outcome sequence index (see exact_sequence_distribution)."""
    idx = np.arange(2**rounds)
    ones = np.array([int(i).bit_count() for i in idx])
    return rounds - ones


def exact_count_distribution(
    rho: DensityOperator, cfg: CascadeConfig, budget: int = DEFAULT_BRANCH_BUDGET
) -> CountDistribution:
    """Exact law of the zero-count by full branch enumeration."""
    seq = exact_sequence_distribution(rho, cfg, budget)
    mass = np.bincount(zero_counts_of_sequences(cfg.rounds), weights=seq, minlength=cfg.rounds + 1)
    return CountDistribution(cfg.rounds, np.clip(mass, 0.0, None))


def binomial_distribution(k: int, p: float) -> CountDistribution:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    return CountDistribution(k, [comb(k, c) * p**c * (1 - p) ** (k - c) for c in range(k + 1)])


def sample_zero_counts(
    control: PureState,
    cfg: CascadeConfig,
    trials: int,
    rng: np.random.Generator,
    return_outcomes: bool = False,
):
    """Vectorized trajectory sampling of ``trials`` independent cascade runs.

    Returns the zero-counts (and the ``trials x rounds`` outcome matrix when
    ``return_outcomes`` is set). Uses one uniform draw per round per trial,
    with the same outcome convention as ``qcore.measure_qubit``.
    """
    _require_single(control)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    a2, b2 = abs(cfg.ancilla.a) ** 2, abs(cfg.ancilla.b) ** 2
    w0 = np.full(trials, abs(control[0]) ** 2)
    w1 = np.full(trials, abs(control[1]) ** 2)
    outcomes = np.empty((trials, cfg.rounds), dtype=np.int8)
    for r in range(cfg.rounds):
        p1 = w0 * b2 + w1 * a2
        bit = rng.random(trials) < p1
        outcomes[:, r] = bit
        # only the control's populations matter for later target statistics
        n0 = np.where(bit, w0 * b2, w0 * a2)
        n1 = np.where(bit, w1 * a2, w1 * b2)
        norm = n0 + n1
        if np.any(norm < qcore.COLLAPSE_FLOOR):
            raise InvariantViolation("trajectory collapsed onto a zero-probability outcome")
        w0, w1 = n0 / norm, n1 / norm
    counts = cfg.rounds - outcomes.sum(axis=1, dtype=np.int64)
    if return_outcomes:
        return counts, outcomes
    return counts


__all__ = [
    "AncillaSpec",
    "CascadeConfig",
    "CascadeResult",
    "CountDistribution",
    "DEFAULT_BRANCH_BUDGET",
    "binomial_distribution",
    "cascade_step",
    "exact_count_distribution",
    "exact_sequence_distribution",
    "run_cascade",
    "sample_zero_counts",
    "step_zero_probability",
    "zero_counts_of_sequences",
]

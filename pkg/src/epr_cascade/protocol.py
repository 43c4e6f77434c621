"""
End-to-end Alice -> Bob experiments over shared EPR pairs.

Alice encodes one bit per group of EPR pairs by her choice of measurement
basis (bit 0 -> computational, bit 1 -> diagonal). Bob runs the CNOT
cascade on each of his halves and classifies the group from its
zero-counts. Group boundaries are assumed to be a schedule agreed in
advance; nothing here models how Bob would learn them.

Randomness: every trial draws from its own generator, derived from the
master seed and the trial's ordinal (see ``trial_rng``), so results do not
depend on execution order.
"""
from __future__ import annotations

import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import qcore
from .distinguisher import (
    CascadeConfig,
    CountDistribution,
    DEFAULT_BRANCH_BUDGET,
    exact_count_distribution,
    exact_sequence_distribution,
    run_cascade,
)
from .qcore import DensityOperator, PureState
from .stats import SecondLevelSummary, empirical_distribution, second_level_summary, wilson_interval

THREADS_ENV = "EPR_CASCADE_THREADS"
# |LLR| at or below this, per trial, counts as a tie
TIE_TOLERANCE = 1e-9


class BasisChoice(enum.Enum):
    COMPUTATIONAL = "computational"
    DIAGONAL = "diagonal"

    @classmethod
    def from_bit(cls, bit: int) -> "BasisChoice":
        return (cls.COMPUTATIONAL, cls.DIAGONAL)[bit]

    @property
    def bit(self) -> int:
        return 0 if self is BasisChoice.COMPUTATIONAL else 1


@dataclass(frozen=True)
class TrialRecord:
    alice_basis: BasisChoice
    alice_outcome: int
    bob_zero_count: int
    bob_outcomes: tuple[int, ...]

    def __post_init__(self):
        if self.bob_zero_count != self.bob_outcomes.count(0):
            raise ValueError("zero-count does not match the outcome sequence")


@dataclass(frozen=True)
class GroupRecord:
    basis: BasisChoice
    trials: tuple[TrialRecord, ...]

    def __post_init__(self):
        if not self.trials:
            raise ValueError("a group needs at least one trial")
        if any(t.alice_basis is not self.basis for t in self.trials):
            raise ValueError("all trials in a group must share its basis")

    @property
    def zero_counts(self) -> list[int]:
        return [t.bob_zero_count for t in self.trials]


@dataclass(frozen=True)
class Verdict:
    guessed_basis: BasisChoice
    log_likelihood_ratio: float
    summary: SecondLevelSummary
    tie: bool = False


@dataclass(frozen=True)
class AuditReport:
    d_computational: CountDistribution
    d_diagonal: CountDistribution
    max_abs_difference: float
    sequence_distribution_difference: float
    # same laws, rebuilt by averaging the per-member branch trees
    d_computational_by_members: CountDistribution | None = None
    d_diagonal_by_members: CountDistribution | None = None
    cross_check_difference: float = 0.0


@dataclass(frozen=True)
class TransmissionReport:
    num_bits: int
    group_size: int
    errors: int
    bit_error_rate: float
    ci_low: float
    ci_high: float
    sent_bits: tuple[int, ...] = ()
    decoded_bits: tuple[int, ...] = ()
    ties: int = 0
    groups: tuple[GroupRecord, ...] = field(default=(), repr=False)


def trial_rng(seed: int, *ordinal: int) -> np.random.Generator:
    """PCG64 stream for the trial identified by ``ordinal`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(ordinal))))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def map_ordered(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes; order is preserved."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# -- Alice ------------------------------------------------------------------------

def alice_prepare_and_measure(basis: BasisChoice, rng: np.random.Generator) -> tuple[int, PureState]:
    """Measure Alice's half of a fresh EPR pair; return her outcome and Bob's collapsed qubit.

    The diagonal basis is realized as a Hadamard on Alice's qubit followed by a
    computational measurement.
    """
    state = qcore.epr_pair()
    if basis is BasisChoice.DIAGONAL:
        state = qcore.apply_single_qubit(state, qcore.H, 0)
    rec, post = qcore.measure_qubit(state, 0, rng)
    bob = post.amplitudes.reshape(2, 2)[rec.outcome, :].copy()
    return rec.outcome, PureState(bob)


def bob_ensemble(basis: BasisChoice) -> DensityOperator:
    """Bob's state averaged over Alice's (unknown to him) outcome."""
    if basis is BasisChoice.COMPUTATIONAL:
        parts = [(0.5, qcore.ZERO), (0.5, qcore.ONE)]
    else:
        parts = [(0.5, qcore.PLUS), (0.5, qcore.MINUS)]
    return qcore.density_from_ensemble(parts)


def _ensemble_members(basis: BasisChoice) -> tuple[PureState, PureState]:
    if basis is BasisChoice.COMPUTATIONAL:
        return qcore.ZERO, qcore.ONE
    return qcore.PLUS, qcore.MINUS


def run_trial(basis: BasisChoice, cfg: CascadeConfig, rng: np.random.Generator) -> TrialRecord:
    outcome, bob = alice_prepare_and_measure(basis, rng)
    res = run_cascade(bob, cfg, rng)
    return TrialRecord(basis, outcome, res.zero_count, res.outcomes)


def _seeded_trial(ordinal: tuple[int, ...], basis: BasisChoice, cfg: CascadeConfig, seed: int) -> TrialRecord:
    return run_trial(basis, cfg, trial_rng(seed, *ordinal))


def transmit_group(
    basis: BasisChoice, n: int, cfg: CascadeConfig, seed: int, group_index: int = 0
) -> GroupRecord:
    """``n`` EPR trials with Alice fixed to ``basis``.

    Trial ``t`` uses the stream ``trial_rng(seed, group_index, t)``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"group size must be an integer >= 1, got {n!r}")
    fn = partial(_seeded_trial, basis=basis, cfg=cfg, seed=seed)
    trials = map_ordered(fn, [(group_index, t) for t in range(n)])
    return GroupRecord(basis, tuple(trials))


# -- Bob's decision -------------------------------------------------------------------

def _llr_allowing_infinite(counts: Sequence[int], d_comp: CountDistribution, d_diag: CountDistribution) -> float:
    total = 0.0
    for c in counts:
        pc, pd = d_comp[c], d_diag[c]
        if pc <= 0 and pd <= 0:
            raise ValueError(f"zero-count {c} has no mass under either reference")
        if pc <= 0:
            return float("-inf")
        if pd <= 0:
            return float("inf")
        total += np.log(pc) - np.log(pd)
    return float(total)


def classify_group(
    group: GroupRecord,
    d_comp: CountDistribution,
    d_diag: CountDistribution,
    rng: np.random.Generator | None = None,
) -> Verdict:
    """Likelihood-ratio guess of Alice's basis from a group's zero-counts.

    Positive LLR -> computational, negative -> diagonal. A tie (|LLR| within
    ``TIE_TOLERANCE`` per trial) is broken by one uniform draw from ``rng``,
    or resolved to computational when no stream is given.
    """
    if d_comp.rounds != d_diag.rounds:
        raise ValueError("reference distributions have different rounds")
    counts = group.zero_counts
    if max(counts) > d_comp.rounds:
        raise ValueError("group was recorded with more rounds than the references")
    llr = _llr_allowing_infinite(counts, d_comp, d_diag)
    summary = second_level_summary(empirical_distribution(counts, d_comp.rounds))
    if abs(llr) <= TIE_TOLERANCE * len(counts):
        if rng is None:
            guess = BasisChoice.COMPUTATIONAL
        else:
            guess = BasisChoice.COMPUTATIONAL if rng.random() < 0.5 else BasisChoice.DIAGONAL
        return Verdict(guess, llr, summary, tie=True)
    guess = BasisChoice.COMPUTATIONAL if llr > 0 else BasisChoice.DIAGONAL
    return Verdict(guess, llr, summary)


def reference_distributions(cfg: CascadeConfig, budget: int = DEFAULT_BRANCH_BUDGET):
    """Exact zero-count laws Bob expects under each of Alice's bases."""
    return (
        exact_count_distribution(bob_ensemble(BasisChoice.COMPUTATIONAL), cfg, budget),
        exact_count_distribution(bob_ensemble(BasisChoice.DIAGONAL), cfg, budget),
    )


def run_transmission_experiment(
    num_bits: int,
    n: int,
    cfg: CascadeConfig,
    seed: int,
    keep_groups: bool = False,
) -> TransmissionReport:
    """Send ``num_bits`` random bits, one group of ``n`` EPR pairs per bit.

    The message bits come from ``trial_rng(seed)``; group ``g`` uses trial
    streams ``(g, 0..n-1)`` and its tie-break stream is ``(g, n)``.
    """
    if int(num_bits) != num_bits or num_bits < 1:
        raise ValueError(f"num_bits must be an integer >= 1, got {num_bits!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"group size must be an integer >= 1, got {n!r}")
    d_comp, d_diag = reference_distributions(cfg)
    message = trial_rng(seed).integers(0, 2, size=num_bits)

    jobs = [(g, t, BasisChoice.from_bit(int(message[g]))) for g in range(num_bits) for t in range(n)]
    records = map_ordered(partial(_job_trial, cfg=cfg, seed=seed), jobs)

    decoded, groups, ties = [], [], 0
    for g in range(num_bits):
        group = GroupRecord(BasisChoice.from_bit(int(message[g])), tuple(records[g * n:(g + 1) * n]))
        verdict = classify_group(group, d_comp, d_diag, trial_rng(seed, g, n))
        decoded.append(verdict.guessed_basis.bit)
        ties += verdict.tie
        if keep_groups:
            groups.append(group)

    sent = tuple(int(b) for b in message)
    errors = sum(s != d for s, d in zip(sent, decoded))
    lo, hi = wilson_interval(errors, num_bits)
    return TransmissionReport(
        num_bits=num_bits,
        group_size=n,
        errors=errors,
        bit_error_rate=errors / num_bits,
        ci_low=lo,
        ci_high=hi,
        sent_bits=sent,
        decoded_bits=tuple(decoded),
        ties=ties,
        groups=tuple(groups),
    )


def _job_trial(job: tuple[int, int, BasisChoice], cfg: CascadeConfig, seed: int) -> TrialRecord:
    g, t, basis = job
    return run_trial(basis, cfg, trial_rng(seed, g, t))


# -- audit -----------------------------------------------------------------------------

def no_signaling_audit(cfg: CascadeConfig, budget: int = DEFAULT_BRANCH_BUDGET) -> AuditReport:
    """Compare Bob's exact statistics under Alice's two basis choices.

    Each ensemble law is computed twice: once from the mixed operator directly
    and once by averaging the branch trees of the two pure members.
    """
    laws, by_members, seqs = {}, {}, {}
    for basis in BasisChoice:
        rho = bob_ensemble(basis)
        laws[basis] = exact_count_distribution(rho, cfg, budget)
        seqs[basis] = exact_sequence_distribution(rho, cfg, budget)
        m0, m1 = (DensityOperator.from_pure(s) for s in _ensemble_members(basis))
        avg = 0.5 * exact_count_distribution(m0, cfg, budget).mass + 0.5 * exact_count_distribution(m1, cfg, budget).mass
        by_members[basis] = CountDistribution(cfg.rounds, avg)

    comp, diag = BasisChoice.COMPUTATIONAL, BasisChoice.DIAGONAL
    cross = max(
        float(np.abs(laws[b].mass - by_members[b].mass).max()) for b in BasisChoice
    )
    return AuditReport(
        d_computational=laws[comp],
        d_diagonal=laws[diag],
        max_abs_difference=float(np.abs(laws[comp].mass - laws[diag].mass).max()),
        sequence_distribution_difference=float(np.abs(seqs[comp] - seqs[diag]).max()),
        d_computational_by_members=by_members[comp],
        d_diagonal_by_members=by_members[diag],
        cross_check_difference=cross,
    )


# -- teleportation baseline -----------------------------------------------------------

def _bob_after_bell(state: PureState, m0: int, m1: int) -> PureState:
    vec = state.amplitudes.reshape(2, 2, 2)[m0, m1, :].copy()
    return PureState(vec / np.linalg.norm(vec))


def _teleport_prepare(psi: PureState) -> PureState:
    # qubit 0: input, qubit 1: Alice's EPR half, qubit 2: Bob's EPR half
    state = qcore.tensor_with(psi, qcore.epr_pair())
    state = qcore.apply_cnot(state, 0, 1)
    return qcore.apply_single_qubit(state, qcore.H, 0)


def _correct(bob: PureState, m0: int, m1: int) -> PureState:
    if m1:
        bob = qcore.apply_single_qubit(bob, qcore.X, 0)
    if m0:
        bob = qcore.apply_single_qubit(bob, qcore.Z, 0)
    return bob


def _fidelity(a: PureState, b: PureState) -> float:
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def teleport_with_ccc(psi: PureState, rng: np.random.Generator, correct: bool = True) -> float:
    """Teleport ``psi`` with Alice's two bits sent classically; return the fidelity."""
    if psi.num_qubits != 1:
        raise ValueError("teleportation input must be a single qubit")
    state = _teleport_prepare(psi)
    r0, state = qcore.measure_qubit(state, 0, rng)
    r1, state = qcore.measure_qubit(state, 1, rng)
    bob = _bob_after_bell(state, r0.outcome, r1.outcome)
    if correct:
        bob = _correct(bob, r0.outcome, r1.outcome)
    return _fidelity(psi, bob)


def teleport_branches(psi: PureState, correct: bool = True) -> list[tuple[int, int, float, float]]:
    """Every Bell outcome as ``(m0, m1, probability, fidelity)``."""
    state = _teleport_prepare(psi)
    out = []
    for m0 in (0, 1):
        p0, s0 = qcore.project(state, 0, m0)
        for m1 in (0, 1):
            p1, s1 = qcore.project(s0, 1, m1)
            bob = _bob_after_bell(s1, m0, m1)
            if correct:
                bob = _correct(bob, m0, m1)
            out.append((m0, m1, p0 * p1, _fidelity(psi, bob)))
    return out


def random_qubit(rng: np.random.Generator) -> PureState:
    """Haar-random single-qubit pure state."""
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return PureState(v / np.linalg.norm(v))

"""
Command-line front end.

    epr-cascade exact    --state + --rounds 5
    epr-cascade simulate --state 0 --trials 100000 --seed 7
    epr-cascade audit    --rounds 5
    epr-cascade transmit --bits 1000 --group-size 10 --format csv --out trials.csv
    epr-cascade teleport --trials 100

Exit codes: 0 success, 1 usage/configuration/I-O error, 2 internal invariant
violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from functools import partial
from importlib import metadata
from typing import Any, Sequence

import numpy as np

from . import __version__, qcore
from .distinguisher import AncillaSpec, CascadeConfig, exact_count_distribution, run_cascade
from .errors import BranchBudgetExceeded, InvariantViolation
from .protocol import (
    BasisChoice,
    map_ordered,
    no_signaling_audit,
    random_qubit,
    run_transmission_experiment,
    teleport_branches,
    teleport_with_ccc,
    trial_rng,
)
from .qcore import DensityOperator, PureState
from .stats import chi_square_gof, empirical_distribution, second_level_summary, total_variation

COMMANDS = ("exact", "simulate", "audit", "transmit", "teleport")
NAMED_STATES = {"0": qcore.ZERO, "1": qcore.ONE, "+": qcore.PLUS, "-": qcore.MINUS}
CSV_HEADER = ["trial_index", "alice_basis", "alice_outcome", "outcomes", "zero_count"]
CSV_COMMANDS = ("simulate", "transmit")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    rounds: int = 5
    ancilla_input: tuple[float, ...] = (1.0, 2.0)
    state: str = "+"
    amp: tuple[float, ...] | None = None
    trials: int = 10_000
    group_size: int = 10
    num_bits: int = 1000
    seed: int = 0
    output_format: str = "json"
    output_path: str | None = None
    ancilla: AncillaSpec = field(default_factory=AncillaSpec, compare=False)

    @property
    def cascade(self) -> CascadeConfig:
        return CascadeConfig(self.rounds, self.ancilla)

    def input_state(self) -> PureState:
        if self.amp is not None:
            a0r, a0i, a1r, a1i = self.amp
            return PureState.from_amplitudes([complex(a0r, a0i), complex(a1r, a1i)], normalize=True)
        return NAMED_STATES[self.state]

    def echo(self) -> dict[str, Any]:
        a, b = self.ancilla.a, self.ancilla.b
        out: dict[str, Any] = {
            "rounds": self.rounds,
            "ancilla": list(self.ancilla_input),
            "ancilla_normalized": [a.real, a.imag, b.real, b.imag],
            "seed": self.seed,
            "format": self.output_format,
        }
        if self.command in ("exact", "simulate"):
            if self.amp is not None:
                out["amp"] = list(self.amp)
            else:
                out["state"] = self.state
        if self.command in ("simulate", "teleport"):
            out["trials"] = self.trials
        if self.command == "transmit":
            out["bits"] = self.num_bits
            out["group_size"] = self.group_size
        return out


@dataclass
class Report:
    command: str
    config: dict[str, Any]
    results: dict[str, Any]
    seed: int
    tool_version: str
    rows: list[list[Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "seed": self.seed,
            "tool_version": self.tool_version,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str, allowed: tuple[int, ...], what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if len(vals) not in allowed:
        raise UsageError(f"{what}: expected {' or '.join(map(str, allowed))} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what}: values must be finite")
    return vals


def _build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--rounds", type=int, default=5, help="cascade rounds k (default 5)")
    shared.add_argument("--ancilla", default="1,2",
                        help="ancilla amplitudes 'a,b' or 'a_re,a_im,b_re,b_im', normalized (default 1,2)")
    shared.add_argument("--seed", type=int, default=0, help="unsigned 64-bit master seed")
    shared.add_argument("--format", dest="output_format", choices=("json", "csv"), default="json")
    shared.add_argument("--out", dest="output_path", default=None, help="output file (default stdout)")

    parser = _Parser(prog="epr-cascade", description="EPR-pair CNOT cascade simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_tool_version()}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def state_flags(p):
        p.add_argument("--state", choices=sorted(NAMED_STATES), default="+", help="named input state")
        p.add_argument("--amp", default=None, help="explicit input 'a0r,a0i,a1r,a1i' (normalized)")

    p = sub.add_parser("exact", parents=[shared], help="exact zero-count distribution")
    state_flags(p)
    p = sub.add_parser("simulate", parents=[shared], help="Monte Carlo cascade runs vs the exact law")
    state_flags(p)
    p.add_argument("--trials", type=int, default=10_000)
    sub.add_parser("audit", parents=[shared], help="compare Bob's statistics under both of Alice's bases")
    p = sub.add_parser("transmit", parents=[shared], help="end-to-end bit transmission experiment")
    p.add_argument("--bits", dest="num_bits", type=int, default=1000)
    p.add_argument("--group-size", type=int, default=10)
    p = sub.add_parser("teleport", parents=[shared], help="teleportation baseline with classical bits")
    p.add_argument("--trials", type=int, default=100)
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Validate ``argv`` into a RunConfig; raises UsageError on bad input."""
    ns = _build_parser().parse_args(list(argv))
    if ns.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    if not 0 <= ns.seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    anc_in = _floats(ns.ancilla, (2, 4), "--ancilla")
    if len(anc_in) == 2:
        a, b = complex(anc_in[0]), complex(anc_in[1])
    else:
        a, b = complex(anc_in[0], anc_in[1]), complex(anc_in[2], anc_in[3])
    try:
        ancilla = AncillaSpec.normalized(a, b)
    except ValueError as exc:
        raise UsageError(f"--ancilla: {exc}") from None
    kwargs: dict[str, Any] = dict(
        command=ns.command,
        rounds=ns.rounds,
        ancilla_input=anc_in,
        ancilla=ancilla,
        seed=ns.seed,
        output_format=ns.output_format,
        output_path=ns.output_path,
    )
    if ns.command in ("exact", "simulate"):
        kwargs["state"] = ns.state
        if ns.amp is not None:
            amp = _floats(ns.amp, (4,), "--amp")
            if not any(amp):
                raise UsageError("--amp: amplitudes cannot all be zero")
            kwargs["amp"] = amp
    if ns.command in ("simulate", "teleport"):
        if ns.trials < 1:
            raise UsageError("--trials must be >= 1")
        kwargs["trials"] = ns.trials
    if ns.command == "transmit":
        if ns.num_bits < 1:
            raise UsageError("--bits must be >= 1")
        if ns.group_size < 1:
            raise UsageError("--group-size must be >= 1")
        kwargs["num_bits"] = ns.num_bits
        kwargs["group_size"] = ns.group_size
    if ns.output_format == "csv" and ns.command not in CSV_COMMANDS:
        raise UsageError(f"csv output is only available for {', '.join(CSV_COMMANDS)}")
    return RunConfig(**kwargs)


def config_argv(command: str, echo: dict[str, Any]) -> list[str]:
    """Rebuild an argument vector from a report's config echo."""
    argv = [command, "--rounds", str(echo["rounds"]),
            "--ancilla", ",".join(repr(float(x)) for x in echo["ancilla"]),
            "--seed", str(echo["seed"]), "--format", echo["format"]]
    if "amp" in echo:
        argv += ["--amp", ",".join(repr(float(x)) for x in echo["amp"])]
    if "state" in echo:
        argv += ["--state", echo["state"]]
    if "trials" in echo:
        argv += ["--trials", str(echo["trials"])]
    if "bits" in echo:
        argv += ["--bits", str(echo["bits"]), "--group-size", str(echo["group_size"])]
    return argv


def _tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return __version__


def _summary_dict(summary) -> dict[str, Any]:
    return {
        "mode_set": sorted(summary.mode_set),
        "mass_at_1_and_4": summary.mass_at_1_and_4,
        "mass_elsewhere": summary.mass_elsewhere,
        "sample_mean": summary.sample_mean,
        "sample_variance": summary.sample_variance,
    }


def _simulate_trial(t: int, state: PureState, cascade: CascadeConfig, seed: int):
    return run_cascade(state, cascade, trial_rng(seed, t))


def _run_exact(cfg: RunConfig) -> dict[str, Any]:
    rho = DensityOperator.from_pure(cfg.input_state())
    dist = exact_count_distribution(rho, cfg.cascade)
    return {"input_amplitudes": _amps(cfg.input_state()), "mass": dist.tolist(), "mean": dist.mean()}


def _amps(state: PureState) -> list[float]:
    return [x for z in state.amplitudes for x in (float(z.real), float(z.imag))]


def _run_simulate(cfg: RunConfig, rows: list) -> dict[str, Any]:
    state = cfg.input_state()
    exact = exact_count_distribution(DensityOperator.from_pure(state), cfg.cascade)
    results = map_ordered(partial(_simulate_trial, state=state, cascade=cfg.cascade, seed=cfg.seed),
                          list(range(cfg.trials)))
    counts = [r.zero_count for r in results]
    emp = empirical_distribution(counts, cfg.rounds)
    try:
        gof = chi_square_gof(emp, exact)
        chi2: dict[str, Any] | None = {"statistic": gof.statistic, "degrees_of_freedom": gof.degrees_of_freedom,
                                       "p_value": gof.p_value}
    except ValueError:
        # too few trials for any bin to reach the pooling threshold
        chi2 = None
    for t, r in enumerate(results):
        rows.append([t, "", "", "".join(map(str, r.outcomes)), r.zero_count])
    return {
        "input_amplitudes": _amps(state),
        "trials": cfg.trials,
        "counts": emp.counts.tolist(),
        "frequencies": emp.frequencies().tolist(),
        "exact_mass": exact.tolist(),
        "total_variation": total_variation(emp.normalized(), exact),
        "chi_square": chi2,
        "summary": _summary_dict(second_level_summary(emp)),
    }


def _run_audit(cfg: RunConfig) -> dict[str, Any]:
    rep = no_signaling_audit(cfg.cascade)
    return {
        "d_computational": rep.d_computational.tolist(),
        "d_diagonal": rep.d_diagonal.tolist(),
        "max_abs_difference": rep.max_abs_difference,
        "sequence_distribution_difference": rep.sequence_distribution_difference,
        "member_average_cross_check": rep.cross_check_difference,
    }


def _run_transmit(cfg: RunConfig, rows: list) -> dict[str, Any]:
    rep = run_transmission_experiment(cfg.num_bits, cfg.group_size, cfg.cascade, cfg.seed, keep_groups=True)
    n = cfg.group_size
    for g, group in enumerate(rep.groups):
        for t, tr in enumerate(group.trials):
            rows.append([g * n + t, tr.alice_basis.value, tr.alice_outcome,
                         "".join(map(str, tr.bob_outcomes)), tr.bob_zero_count])
    return {
        "num_bits": rep.num_bits,
        "group_size": rep.group_size,
        "errors": rep.errors,
        "bit_error_rate": rep.bit_error_rate,
        "ber_ci95": [rep.ci_low, rep.ci_high],
        "ties": rep.ties,
        "bit_mapping": {"0": BasisChoice.COMPUTATIONAL.value, "1": BasisChoice.DIAGONAL.value},
        "sent_bits": "".join(map(str, rep.sent_bits)),
        "decoded_bits": "".join(map(str, rep.decoded_bits)),
    }


def _run_teleport(cfg: RunConfig) -> dict[str, Any]:
    fids, branch_min, uncorrected = [], 1.0, []
    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, t)
        psi = random_qubit(rng)
        fids.append(teleport_with_ccc(psi, rng))
        branch_min = min(branch_min, min(f for *_, f in teleport_branches(psi)))
        uncorrected.append(sum(p * f for _, _, p, f in teleport_branches(psi, correct=False)))
    return {
        "trials": cfg.trials,
        "min_fidelity": min(fids),
        "mean_fidelity": float(np.mean(fids)),
        "min_branch_fidelity": branch_min,
        "mean_uncorrected_fidelity": float(np.mean(uncorrected)),
    }


def run_command(cfg: RunConfig) -> Report:
    rows: list[list[Any]] = []
    if cfg.command == "exact":
        results = _run_exact(cfg)
    elif cfg.command == "simulate":
        results = _run_simulate(cfg, rows)
    elif cfg.command == "audit":
        results = _run_audit(cfg)
    elif cfg.command == "transmit":
        results = _run_transmit(cfg, rows)
    elif cfg.command == "teleport":
        results = _run_teleport(cfg)
    else:
        raise UsageError(f"unknown command {cfg.command!r}")
    return Report(cfg.command, cfg.echo(), results, cfg.seed, _tool_version(), rows)


def _encode(obj: Any) -> str:
    """JSON with insertion-ordered keys and floats at 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot encode non-finite number {x!r} as JSON")
        text = format(x, ".17g")
        # keep floats recognizable as floats after a round trip
        return text if any(ch in text for ch in ".e") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        return _encode(report.to_dict()) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(report.rows)
        return buf.getvalue()
    raise UsageError(f"unknown format {fmt!r}")


def emit_report(report: Report, fmt: str, path: str | None) -> None:
    text = render(report, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        report = run_command(cfg)
        emit_report(report, cfg.output_format, cfg.output_path)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except InvariantViolation as exc:
        print(f"epr-cascade: internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (UsageError, BranchBudgetExceeded, ValueError, OSError) as exc:
        print(f"epr-cascade: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

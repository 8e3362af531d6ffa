"""Trace-driven replay of speculative decoding under proposed-length policies.

Replay uses a positional-skip approximation: after a step generates g tokens
the cursor jumps to position i + g and reads the recorded acceptance value
there, even though traces are measured by advancing one position at a time.
This is the only consistent way to replay per-position maximum-acceptance
traces; a consequence is that oracle policies dominate fixed-k ones
statistically (on i.i.d.-style traces) but not pathwise — an adversarial
trace can place a long acceptable span exactly where only the fixed-k walk
lands. See README for details.

End clamping: the final step's generated count is truncated to the remaining
positions. Oracle policies are not charged for drafts beyond the end (the
oracle knows the end); fixed-k policies pay the full k drafted / k+1
verified cost every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ._kernels import combine_walk, fixed_k_walk, oracle_walk
from .cost import CostModel
from .errors import TraceAlignmentError
from .trace import AcceptanceTrace, TraceSet


@dataclass(frozen=True)
class NoSD:
    """Plain decoding: one token per step, nothing drafted."""

    @property
    def label(self) -> str:
        return "nosd"


@dataclass(frozen=True)
class FixedK:
    """Always propose k tokens per step."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def label(self) -> str:
        return f"fixed:{self.k}"


@dataclass(frozen=True)
class OracleK:
    """Propose exactly the acceptable length recorded at each position."""

    @property
    def label(self) -> str:
        return "oracle"


@dataclass(frozen=True)
class OracleCombine:
    """Per step, take whichever of two aligned traces accepts more tokens.

    Ties go to the primary trace. The winner's draft-time ratio is charged
    (primary: the cost model's c; secondary: ``c_secondary``); switching adds
    no cost.
    """

    secondary: AcceptanceTrace
    c_secondary: float = 0.0

    @property
    def label(self) -> str:
        return "combine"


Policy = Union[NoSD, FixedK, OracleK, OracleCombine]


@dataclass(frozen=True)
class PairedOracleCombine:
    """Sweep-level combine spec, resolved per request against the trace set.

    Runs on each trace with method ``method_a`` whose request also has a
    ``method_b`` trace of equal length; unpaired requests are skipped with a
    warning.
    """

    method_a: str
    method_b: str
    c_secondary: float = 0.0

    @property
    def label(self) -> str:
        return f"combine:{self.method_a}+{self.method_b}"


SweepPolicy = Union[Policy, PairedOracleCombine]


@dataclass(frozen=True)
class SimReport:
    steps: int
    generated_tokens: int
    drafted_tokens: int
    accepted_tokens: int
    wall_time: float
    throughput: float
    speedup_vs_baseline: float
    acceptance_ratio: float


def _walk(
    trace: AcceptanceTrace,
    policy: Policy,
    cost: CostModel,
    batch: int,
    charge_oracle_drafts: bool,
) -> tuple[int, int, int, float, float]:
    """Run the policy walk; returns (steps, drafted, accepted, raw_wall, raw_baseline).

    Raw values exclude the overhead factor, which scales every step (baseline
    included) equally and therefore cancels out of speedups exactly.
    """
    m = np.ascontiguousarray(trace.positions, dtype=np.int64)
    length = m.shape[0]
    t_s, t_pt = cost.verify_coeffs(batch)
    t_unit = t_s + t_pt
    raw_baseline = length * t_unit

    if isinstance(policy, NoSD):
        return length, 0, 0, raw_baseline, raw_baseline
    if isinstance(policy, FixedK):
        steps, drafted, accepted, raw = fixed_k_walk(m, policy.k, cost.c, t_unit, t_s, t_pt)
    elif isinstance(policy, OracleK):
        c = cost.c if charge_oracle_drafts else 0.0
        steps, drafted, accepted, raw = oracle_walk(m, c, t_unit, t_s, t_pt)
    elif isinstance(policy, OracleCombine):
        mb = np.ascontiguousarray(policy.secondary.positions, dtype=np.int64)
        if mb.shape[0] != length:
            raise TraceAlignmentError(
                f"combine traces must align position-for-position: primary has "
                f"{length} positions, secondary has {mb.shape[0]}"
            )
        c_a = cost.c if charge_oracle_drafts else 0.0
        c_b = policy.c_secondary if charge_oracle_drafts else 0.0
        steps, drafted, accepted, raw = combine_walk(m, mb, c_a, c_b, t_unit, t_s, t_pt)
    else:
        raise TypeError(f"unsupported policy {policy!r}")
    return int(steps), int(drafted), int(accepted), float(raw), raw_baseline


def _report(length: int, walk: tuple[int, int, int, float, float], overhead: float) -> SimReport:
    steps, drafted, accepted, raw_wall, raw_baseline = walk
    wall = (1.0 + overhead) * raw_wall
    return SimReport(
        steps=steps,
        generated_tokens=length,
        drafted_tokens=drafted,
        accepted_tokens=accepted,
        wall_time=wall,
        throughput=length / wall,
        speedup_vs_baseline=raw_baseline / raw_wall,
        acceptance_ratio=accepted / drafted if drafted else 0.0,
    )


def simulate(
    trace: AcceptanceTrace,
    policy: Policy,
    cost: CostModel,
    batch: int = 1,
    charge_oracle_drafts: bool = True,
) -> SimReport:
    """Replay one trace under one policy and report totals.

    ``charge_oracle_drafts=False`` zeroes the drafting cost during OracleK /
    OracleCombine steps, for sensitivity checks of the oracle upper bound.
    """
    walk = _walk(trace, policy, cost, batch, charge_oracle_drafts)
    return _report(len(trace), walk, cost.overhead_fraction)


@dataclass(frozen=True)
class SweepCell:
    policy: str
    batch: int
    request_id: str
    method: str
    dataset: str
    report: SimReport


@dataclass(frozen=True)
class SweepAggregate:
    """Per-(policy, batch) totals across traces.

    throughput = sum(generated) / sum(wall); speedup = sum(baseline wall) /
    sum(wall); acceptance_ratio = sum(accepted) / sum(drafted).
    """

    policy: str
    batch: int
    traces: int
    throughput: float
    speedup: float
    acceptance_ratio: float


@dataclass(frozen=True)
class SweepResult:
    cells: tuple[SweepCell, ...]
    aggregates: tuple[SweepAggregate, ...]
    warnings: tuple[str, ...]


def _resolve_pairs(
    traceset: TraceSet, spec: PairedOracleCombine, warnings: list[str]
) -> list[tuple[AcceptanceTrace, OracleCombine]]:
    pairs = []
    for trace in traceset.by_method(spec.method_a):
        partner = traceset.get(trace.request_id, spec.method_b)
        if partner is None:
            warnings.append(
                f"{spec.label}: request {trace.request_id!r} has no {spec.method_b!r} trace; skipped"
            )
            continue
        if len(partner) != len(trace):
            warnings.append(
                f"{spec.label}: request {trace.request_id!r} traces differ in length "
                f"({len(trace)} vs {len(partner)}); skipped"
            )
            continue
        pairs.append((trace, OracleCombine(secondary=partner, c_secondary=spec.c_secondary)))
    return pairs


def sweep(
    traceset: TraceSet,
    policies: Sequence[SweepPolicy],
    cost: CostModel,
    batches: Sequence[int],
    charge_oracle_drafts: bool = True,
) -> SweepResult:
    """Simulate every (trace, policy, batch) cell and aggregate per policy/batch.

    Cells are evaluated independently and merged in input order, so results
    are deterministic (and the evaluation is embarrassingly parallel).
    """
    if len(traceset) == 0:
        raise ValueError("trace set is empty")
    if not policies:
        raise ValueError("no policies given")
    if not batches:
        raise ValueError("no batch sizes given")

    warnings: list[str] = []
    cells: list[SweepCell] = []
    aggregates: list[SweepAggregate] = []

    for policy in policies:
        if isinstance(policy, PairedOracleCombine):
            runs = _resolve_pairs(traceset, policy, warnings)
            label = policy.label
        else:
            runs = [(trace, policy) for trace in traceset]
            label = policy.label
        for batch in batches:
            tot_gen = 0
            tot_drafted = 0
            tot_accepted = 0
            tot_raw_wall = 0.0
            tot_raw_base = 0.0
            n = 0
            for trace, concrete in runs:
                walk = _walk(trace, concrete, cost, batch, charge_oracle_drafts)
                cells.append(
                    SweepCell(
                        policy=label,
                        batch=batch,
                        request_id=trace.request_id,
                        method=trace.method,
                        dataset=trace.dataset,
                        report=_report(len(trace), walk, cost.overhead_fraction),
                    )
                )
                tot_gen += len(trace)
                tot_drafted += walk[1]
                tot_accepted += walk[2]
                tot_raw_wall += walk[3]
                tot_raw_base += walk[4]
                n += 1
            if n == 0:
                continue
            overhead_wall = (1.0 + cost.overhead_fraction) * tot_raw_wall
            aggregates.append(
                SweepAggregate(
                    policy=label,
                    batch=batch,
                    traces=n,
                    throughput=tot_gen / overhead_wall,
                    speedup=tot_raw_base / tot_raw_wall,
                    acceptance_ratio=tot_accepted / tot_drafted if tot_drafted else 0.0,
                )
            )
    return SweepResult(cells=tuple(cells), aggregates=tuple(aggregates), warnings=tuple(warnings))


def parse_policy(text: str) -> SweepPolicy:
    """Parse a CLI policy token: nosd | fixed:K | oracle | combine:A+B[:C2]."""
    token = text.strip().lower()
    if token == "nosd":
        return NoSD()
    if token == "oracle":
        return OracleK()
    if token.startswith("fixed:"):
        try:
            k = int(token.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad fixed-k policy {text!r}; expected fixed:<int>") from None
        return FixedK(k)
    if token.startswith("combine:"):
        body = token.split(":", 1)[1]
        c_secondary = 0.0
        if ":" in body:
            body, c_text = body.split(":", 1)
            c_secondary = float(c_text)
        if "+" not in body:
            raise ValueError(f"bad combine policy {text!r}; expected combine:<methodA>+<methodB>[:<c2>]")
        method_a, method_b = body.split("+", 1)
        return PairedOracleCombine(method_a=method_a, method_b=method_b, c_secondary=c_secondary)
    raise ValueError(f"unknown policy {text!r}")

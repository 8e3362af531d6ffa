"""Acceptance traces: data model, JSONL serialization, synthetic generators,
and position/request/dataset statistics.

A trace records, for one request, the maximum number of drafted tokens the
target model would accept at each output position (the bonus token is not
included; the generated count at a position is m + 1). Trace files are UTF-8
JSON Lines with fields exactly ``request_id``, ``dataset``, ``method``,
``model``, ``positions``, optionally preceded by a header line
``{"proposal_cap": N}`` (default cap 20). Serialization is canonical: header
first, records sorted by (request_id, method), fixed key order, compact
separators — so ``serialize(load(x))`` is idempotent byte-for-byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import TraceParseError, TraceValidationError

DEFAULT_PROPOSAL_CAP = 20

_RECORD_FIELDS = ("request_id", "dataset", "method", "model", "positions")
_CI_Z = 1.96  # normal-approximation 95% confidence interval


@dataclass(frozen=True)
class AcceptanceTrace:
    """Per-request sequence of maximum acceptable draft lengths.

    ``positions[i]`` is the number of drafted tokens acceptable at output
    position i, bonus token excluded. The array is treated as immutable.
    """

    request_id: str
    dataset: str
    method: str
    model: str
    positions: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.positions, dtype=np.int64)
        object.__setattr__(self, "positions", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise TraceValidationError(
                "positions must be a non-empty 1-d integer sequence",
                request_id=self.request_id,
            )
        neg = np.nonzero(arr < 0)[0]
        if neg.size:
            raise TraceValidationError(
                f"acceptance length {int(arr[neg[0]])} is negative",
                request_id=self.request_id,
                position=int(neg[0]),
            )

    def __len__(self) -> int:
        return int(self.positions.size)

    def generated_lengths(self) -> np.ndarray:
        """Per-position generated token counts g = m + 1 (bonus included)."""
        return self.positions + 1

    def check_cap(self, cap: int) -> None:
        over = np.nonzero(self.positions > cap)[0]
        if over.size:
            raise TraceValidationError(
                f"acceptance length {int(self.positions[over[0]])} exceeds proposal_cap {cap}",
                request_id=self.request_id,
                position=int(over[0]),
            )


@dataclass(frozen=True)
class TraceSet:
    """A validated collection of traces sharing one proposal cap."""

    traces: tuple[AcceptanceTrace, ...]
    proposal_cap: int = DEFAULT_PROPOSAL_CAP
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if self.proposal_cap < 1:
            raise TraceValidationError(f"proposal_cap must be >= 1, got {self.proposal_cap}")
        index: dict[tuple[str, str], AcceptanceTrace] = {}
        for trace in self.traces:
            trace.check_cap(self.proposal_cap)
            key = (trace.request_id, trace.method)
            if key in index:
                raise TraceValidationError(
                    f"duplicate (request_id, method) pair {key}", request_id=trace.request_id
                )
            index[key] = trace
        object.__setattr__(self, "_index", index)

    def __iter__(self) -> Iterator[AcceptanceTrace]:
        return iter(self.traces)

    def __len__(self) -> int:
        return len(self.traces)

    def methods(self) -> list[str]:
        return sorted({t.method for t in self.traces})

    def by_method(self, method: str) -> list[AcceptanceTrace]:
        return [t for t in self.traces if t.method == method]

    def get(self, request_id: str, method: str) -> AcceptanceTrace | None:
        return self._index.get((request_id, method))


def load_traces(path) -> TraceSet:
    """Load and validate a JSONL trace file.

    Raises TraceParseError (with the offending line number) on malformed
    lines and TraceValidationError (naming request_id and position) on
    invariant violations.
    """
    traces: list[AcceptanceTrace] = []
    cap = DEFAULT_PROPOSAL_CAP
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"invalid JSON: {exc.msg}", line_number=lineno) from exc
            if not isinstance(obj, dict):
                raise TraceParseError("record must be a JSON object", line_number=lineno)
            if lineno == 1 and set(obj) == {"proposal_cap"}:
                cap_val = obj["proposal_cap"]
                if not isinstance(cap_val, int) or isinstance(cap_val, bool) or cap_val < 1:
                    raise TraceParseError(
                        f"proposal_cap must be a positive integer, got {cap_val!r}",
                        line_number=lineno,
                    )
                cap = cap_val
                continue
            traces.append(_parse_record(obj, lineno))
    return TraceSet(tuple(traces), proposal_cap=cap)


def _parse_record(obj: Mapping, lineno: int) -> AcceptanceTrace:
    missing = [f for f in _RECORD_FIELDS if f not in obj]
    if missing:
        raise TraceParseError(f"missing fields {missing}", line_number=lineno)
    unknown = sorted(set(obj) - set(_RECORD_FIELDS))
    if unknown:
        raise TraceParseError(f"unknown fields {unknown}", line_number=lineno)
    for name in ("request_id", "dataset", "method", "model"):
        if not isinstance(obj[name], str):
            raise TraceParseError(f"field {name!r} must be a string", line_number=lineno)
    positions = obj["positions"]
    if not isinstance(positions, list) or any(
        not isinstance(v, int) or isinstance(v, bool) for v in positions
    ):
        raise TraceParseError("field 'positions' must be an array of integers", line_number=lineno)
    return AcceptanceTrace(
        request_id=obj["request_id"],
        dataset=obj["dataset"],
        method=obj["method"],
        model=obj["model"],
        positions=np.asarray(positions, dtype=np.int64),
    )


def serialize_traces(traceset: TraceSet) -> str:
    """Render a TraceSet in canonical JSONL form (idempotent round-trip)."""
    lines = [json.dumps({"proposal_cap": traceset.proposal_cap}, separators=(",", ":"))]
    for trace in sorted(traceset.traces, key=lambda t: (t.request_id, t.method)):
        record = {
            "request_id": trace.request_id,
            "dataset": trace.dataset,
            "method": trace.method,
            "model": trace.model,
            "positions": [int(v) for v in trace.positions],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_traces(traceset: TraceSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_traces(traceset))


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for i.i.d. truncated-geometric acceptance traces.

    Each position draws the number of consecutive successes of independent
    Bernoulli(alpha) trials, truncated at cap — the step-level consequence
    of a constant per-token acceptance rate.
    """

    alpha: float
    cap: int = DEFAULT_PROPOSAL_CAP
    length: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.cap < 1:
            raise ValueError(f"cap must be >= 1, got {self.cap}")
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")


def generate_synthetic(
    spec: SyntheticSpec,
    request_id: str = "synthetic",
    dataset: str = "synthetic",
    method: str = "synthetic",
    model: str = "synthetic",
) -> AcceptanceTrace:
    """Draw a truncated-geometric trace; deterministic for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.alpha == 0.0:
        m = np.zeros(spec.length, dtype=np.int64)
    else:
        # rng.geometric counts trials to the first failure, so successes = draw - 1
        m = rng.geometric(1.0 - spec.alpha, size=spec.length).astype(np.int64) - 1
        np.minimum(m, spec.cap, out=m)
    return AcceptanceTrace(request_id, dataset, method, model, m)


@dataclass(frozen=True)
class BurstySpec:
    """Heavy-tailed acceptance: mostly-quiet positions with rare long bursts.

    Quiet positions draw truncated-geometric(base_alpha); with probability
    burst_prob a position instead draws uniformly from [burst_min, burst_max].
    Mimics the bursty accepted spans of lookup-based drafting on repetitive
    inputs.
    """

    burst_prob: float
    burst_min: int
    burst_max: int
    base_alpha: float = 0.0
    cap: int = DEFAULT_PROPOSAL_CAP
    length: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.burst_prob <= 1.0:
            raise ValueError(f"burst_prob must be in [0, 1], got {self.burst_prob}")
        if not 1 <= self.burst_min <= self.burst_max <= self.cap:
            raise ValueError(
                f"need 1 <= burst_min <= burst_max <= cap, got "
                f"({self.burst_min}, {self.burst_max}, cap={self.cap})"
            )
        if not 0.0 <= self.base_alpha < 1.0:
            raise ValueError(f"base_alpha must be in [0, 1), got {self.base_alpha}")
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")


def generate_bursty(
    spec: BurstySpec,
    request_id: str = "bursty",
    dataset: str = "synthetic",
    method: str = "bursty",
    model: str = "synthetic",
) -> AcceptanceTrace:
    rng = np.random.default_rng(spec.seed)
    if spec.base_alpha == 0.0:
        quiet = np.zeros(spec.length, dtype=np.int64)
    else:
        quiet = rng.geometric(1.0 - spec.base_alpha, size=spec.length).astype(np.int64) - 1
        np.minimum(quiet, spec.cap, out=quiet)
    bursts = rng.integers(spec.burst_min, spec.burst_max + 1, size=spec.length)
    is_burst = rng.random(spec.length) < spec.burst_prob
    m = np.where(is_burst, bursts, quiet).astype(np.int64)
    return AcceptanceTrace(request_id, dataset, method, model, m)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinStat:
    bin: int
    count: int
    mean: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class DatasetStat:
    dataset: str
    requests: int
    mean: float
    median: float
    std: float


@dataclass(frozen=True)
class MethodStats:
    method: str
    bins: tuple[BinStat, ...]
    request_means: tuple[float, ...]
    request_percentiles: dict[int, float]
    datasets: tuple[DatasetStat, ...]


@dataclass(frozen=True)
class TraceStatsReport:
    position_bins: int
    relative: bool
    methods: dict[str, MethodStats]
    warnings: tuple[str, ...]


PERCENTILES = (5, 25, 50, 75, 95)


def trace_stats(
    traceset: TraceSet,
    position_bins: int,
    relative: bool = True,
    methods: Sequence[str] | None = None,
) -> TraceStatsReport:
    """Aggregate generated lengths g = m + 1 per method.

    Positions are pooled across requests into ``position_bins`` bins — by
    default relative bins (position i of an L-long trace lands in bin
    i*B // L), or equal-width absolute-position bins when ``relative`` is
    False. Per bin: mean of g and a normal-approximation 95% CI of that
    mean. Per request: mean g, summarized by the 5/25/50/75/95 percentiles
    across requests; per dataset: mean/median/sample-std of the per-request
    means.
    """
    if len(traceset) == 0:
        raise TraceValidationError("trace set is empty")
    if position_bins < 1:
        raise ValueError(f"position_bins must be >= 1, got {position_bins}")

    warnings: list[str] = []
    if methods is None:
        selected = traceset.methods()
    else:
        selected = []
        for name in methods:
            if traceset.by_method(name):
                selected.append(name)
            else:
                warnings.append(f"method {name!r} has no traces; omitted")

    out: dict[str, MethodStats] = {}
    for method in selected:
        group = traceset.by_method(method)
        out[method] = _method_stats(method, group, position_bins, relative)
    return TraceStatsReport(
        position_bins=position_bins,
        relative=relative,
        methods=out,
        warnings=tuple(warnings),
    )


def _bin_indices(length: int, bins: int, relative: bool, max_length: int) -> np.ndarray:
    idx = np.arange(length, dtype=np.int64)
    if relative:
        return (idx * bins) // length
    width = max(1, math.ceil(max_length / bins))
    return np.minimum(idx // width, bins - 1)


def _method_stats(
    method: str, group: list[AcceptanceTrace], bins: int, relative: bool
) -> MethodStats:
    max_length = max(len(t) for t in group)
    counts = np.zeros(bins, dtype=np.int64)
    sums = np.zeros(bins)
    sumsq = np.zeros(bins)
    request_means: list[float] = []
    by_dataset: dict[str, list[float]] = {}

    for trace in group:
        g = trace.generated_lengths().astype(np.float64)
        idx = _bin_indices(len(trace), bins, relative, max_length)
        counts += np.bincount(idx, minlength=bins)
        sums += np.bincount(idx, weights=g, minlength=bins)
        sumsq += np.bincount(idx, weights=g * g, minlength=bins)
        mean_g = float(g.mean())
        request_means.append(mean_g)
        by_dataset.setdefault(trace.dataset, []).append(mean_g)

    bin_stats = []
    for b in range(bins):
        n = int(counts[b])
        if n == 0:
            bin_stats.append(BinStat(b, 0, math.nan, math.nan, math.nan))
            continue
        mean = sums[b] / n
        if n >= 2:
            var = max(0.0, (sumsq[b] - n * mean * mean) / (n - 1))
            sem = math.sqrt(var / n)
        else:
            sem = 0.0
        bin_stats.append(BinStat(b, n, mean, mean - _CI_Z * sem, mean + _CI_Z * sem))

    means_arr = np.asarray(request_means)
    pct_values = np.percentile(means_arr, PERCENTILES)
    percentiles = {p: float(v) for p, v in zip(PERCENTILES, pct_values)}

    dataset_stats = []
    for dataset in sorted(by_dataset):
        vals = np.asarray(by_dataset[dataset])
        std = float(vals.std(ddof=1)) if vals.size >= 2 else 0.0
        dataset_stats.append(
            DatasetStat(
                dataset=dataset,
                requests=int(vals.size),
                mean=float(vals.mean()),
                median=float(np.median(vals)),
                std=std,
            )
        )

    return MethodStats(
        method=method,
        bins=tuple(bin_stats),
        request_means=tuple(request_means),
        request_percentiles=percentiles,
        datasets=tuple(dataset_stats),
    )

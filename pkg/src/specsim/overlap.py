"""Clipped n-gram overlap (BLEU) between prompt and output token ids, and
the bucketed relative-speedup aggregation built on top of it.

Overlap is computed between the complete prompt (reference) and the
complete generated output (candidate), over integer token ids — no
detokenization. Requests are grouped into five score buckets
[0,0.2), [0.2,0.4), [0.4,0.6), [0.6,0.8), [0.8,1.0] (half-open, closed at
1.0) and each (bucket, batch) cell reports the mean relative speedup of
method A over method B.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

BUCKET_EDGES = (0.2, 0.4, 0.6, 0.8)
BUCKET_LABELS = ("0.0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1.0")


def bucket_index(score: float) -> int:
    """Bucket of a BLEU score; 0.2 falls in the second bucket, 1.0 in the last."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {score}")
    return bisect_right(BUCKET_EDGES, score)


def _gram_counts(seq: Sequence[int], order: int) -> Counter:
    return Counter(tuple(seq[j : j + order]) for j in range(len(seq) - order + 1))


def bleu_n(
    reference: Sequence[int],
    candidate: Sequence[int],
    n: int = 4,
    precision_only: bool = False,
) -> float:
    """BLEU-n of a candidate against a single reference.

    Geometric mean of the modified (clipped) i-gram precisions for
    i = 1..n, times the brevity penalty min(1, exp(1 - |ref|/|cand|)).
    Returns 0 when either sequence is empty, the candidate is shorter than
    n, or any i-gram precision is zero. ``precision_only=True`` instead
    returns just the clipped order-n overlap fraction (no lower orders, no
    brevity penalty) for sensitivity checks.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ref = list(reference)
    cand = list(candidate)
    if not ref or not cand or len(cand) < n:
        return 0.0

    def clipped_precision(order: int) -> float:
        cand_counts = _gram_counts(cand, order)
        ref_counts = _gram_counts(ref, order)
        total = len(cand) - order + 1
        clipped = sum(min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items())
        return clipped / total

    if precision_only:
        return clipped_precision(n)

    log_sum = 0.0
    for order in range(1, n + 1):
        p = clipped_precision(order)
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    brevity = min(1.0, math.exp(1.0 - len(ref) / len(cand)))
    return brevity * math.exp(log_sum / n)


@dataclass(frozen=True)
class OverlapRecord:
    request_id: str
    bleu: float
    n: int = 4
    bucket: int = -1

    def __post_init__(self):
        if not 0.0 <= self.bleu <= 1.0:
            raise ValueError(f"bleu must be in [0, 1], got {self.bleu}")
        expected = bucket_index(self.bleu)
        if self.bucket == -1:
            object.__setattr__(self, "bucket", expected)
        elif self.bucket != expected:
            raise ValueError(
                f"bucket {self.bucket} inconsistent with bleu {self.bleu} (expected {expected})"
            )


def overlap_record(
    request_id: str,
    prompt: Sequence[int],
    output: Sequence[int],
    n: int = 4,
    precision_only: bool = False,
) -> OverlapRecord:
    return OverlapRecord(
        request_id=request_id,
        bleu=bleu_n(prompt, output, n=n, precision_only=precision_only),
        n=n,
    )


@dataclass(frozen=True)
class HeatmapCell:
    bucket: int
    bucket_label: str
    batch: int
    count: int
    rel_speedup_pct: float | None


def bucketed_speedup(
    records: Sequence[OverlapRecord],
    reports_a: Mapping[str, Mapping[int, float]],
    reports_b: Mapping[str, Mapping[int, float]],
) -> tuple[HeatmapCell, ...]:
    """Per (bucket, batch): mean of 100*(S_a/S_b - 1) across the bucket's
    requests, plus the request count. Empty cells carry count 0 and a None
    value. Speedup maps are request_id -> batch -> speedup and must cover
    exactly the recorded requests with identical batch grids.
    """
    ids = {r.request_id for r in records}
    if len(ids) != len(records):
        raise ValueError("duplicate request_id in overlap records")
    for name, reports in (("reports_a", reports_a), ("reports_b", reports_b)):
        if set(reports) != ids:
            missing = sorted(ids - set(reports))
            extra = sorted(set(reports) - ids)
            raise ValueError(f"{name} keys misaligned: missing {missing}, unexpected {extra}")
    batches: set[int] = set()
    for rid in ids:
        grid_a = set(reports_a[rid])
        grid_b = set(reports_b[rid])
        if grid_a != grid_b:
            raise ValueError(f"batch grids differ for request {rid!r}: {sorted(grid_a)} vs {sorted(grid_b)}")
        batches.update(grid_a)

    cells = []
    for bucket in range(len(BUCKET_LABELS)):
        members = [r for r in records if r.bucket == bucket]
        for batch in sorted(batches):
            values = [
                100.0 * (reports_a[r.request_id][batch] / reports_b[r.request_id][batch] - 1.0)
                for r in members
                if batch in reports_a[r.request_id]
            ]
            cells.append(
                HeatmapCell(
                    bucket=bucket,
                    bucket_label=BUCKET_LABELS[bucket],
                    batch=batch,
                    count=len(values),
                    rel_speedup_pct=sum(values) / len(values) if values else None,
                )
            )
    return tuple(cells)

"""Step-time economics of speculative decoding.

Two pieces: the analytic expected wall-time speedup for a fixed proposed
length under a constant per-token acceptance rate, and a table-driven step
cost used by the trace replay simulator. The verify-time table maps batch
size to a fixed component (``time_s``) and a per-verified-token component
(``time_per_token_s``):

    T_verify(batch, v) = time_s(batch) + time_per_token_s(batch) * v

``memory_bound`` mode requires the per-token component to be zero
(verifying k+1 tokens costs the same as one); ``compute_bound`` mode
requires it to be positive (verify time grows linearly with the tokens
verified). Batch sizes between table rows are linearly interpolated and
clamped at the ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import CostConfigError

MEMORY_BOUND = "memory_bound"
COMPUTE_BOUND = "compute_bound"


@dataclass(frozen=True)
class AnalyticParams:
    """Inputs of the analytic speedup: acceptance rate alpha, proposed
    length k, and the draft-to-target single-forward-pass time ratio c."""

    alpha: float
    k: int
    c: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.c < 0.0:
            raise ValueError(f"c must be >= 0, got {self.c}")


def expected_speedup(params: AnalyticParams) -> float:
    """Expected wall-time speedup of drafting k tokens per step.

    Computed as (sum_{i=0}^{k} alpha^i) / (k*c + 1) via Horner accumulation;
    the geometric-sum form is identical to the closed form
    (1 - alpha^(k+1)) / ((1 - alpha)(k*c + 1)) for alpha < 1 and stays
    well-defined at alpha = 1, where the closed form degenerates to 0/0.
    """
    s = 1.0
    for _ in range(params.k):
        s = s * params.alpha + 1.0
    return s / (params.k * params.c + 1.0)


@dataclass(frozen=True)
class CostTableRow:
    batch: int
    time_s: float = 0.0
    time_per_token_s: float = 0.0

    def __post_init__(self):
        if self.batch < 1:
            raise CostConfigError(f"batch must be >= 1, got {self.batch}")
        if self.time_s < 0.0 or self.time_per_token_s < 0.0:
            raise CostConfigError("table times must be non-negative")
        if self.time_s + self.time_per_token_s <= 0.0:
            raise CostConfigError(f"step time at batch {self.batch} must be strictly positive")


@dataclass(frozen=True)
class CostModel:
    """Parameterized step-time model for the replay simulator.

    ``c`` is the per-forward-pass draft-to-target time ratio (a k-token
    autoregressive draft costs k draft passes); ``overhead_fraction`` is a
    single multiplicative factor covering rejection sampling and engine
    overheads, applied on top of drafting + verification.
    """

    mode: str = MEMORY_BOUND
    table: tuple[CostTableRow, ...] = (CostTableRow(batch=1, time_s=1.0),)
    c: float = 0.0
    overhead_fraction: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(self.table))
        if self.mode not in (MEMORY_BOUND, COMPUTE_BOUND):
            raise CostConfigError(f"mode must be {MEMORY_BOUND!r} or {COMPUTE_BOUND!r}, got {self.mode!r}")
        if not self.table:
            raise CostConfigError("cost table is empty")
        if self.c < 0.0:
            raise CostConfigError(f"c must be >= 0, got {self.c}")
        if self.overhead_fraction < 0.0:
            raise CostConfigError(f"overhead_fraction must be >= 0, got {self.overhead_fraction}")
        batches = [row.batch for row in self.table]
        if any(b2 <= b1 for b1, b2 in zip(batches, batches[1:])):
            raise CostConfigError(f"table batch sizes must be strictly increasing, got {batches}")
        if self.mode == MEMORY_BOUND:
            if any(row.time_per_token_s != 0.0 for row in self.table):
                raise CostConfigError("memory_bound tables must not have a per-token verify component")
        else:
            if any(row.time_per_token_s <= 0.0 for row in self.table):
                raise CostConfigError("compute_bound tables need a positive per-token verify component")

    def verify_coeffs(self, batch: int | float) -> tuple[float, float]:
        """(time_s, time_per_token_s) at this batch size, interpolated."""
        if batch < 1:
            raise ValueError(f"batch must be >= 1, got {batch}")
        batches = np.asarray([row.batch for row in self.table], dtype=np.float64)
        t_s = float(np.interp(batch, batches, [row.time_s for row in self.table]))
        t_pt = float(np.interp(batch, batches, [row.time_per_token_s for row in self.table]))
        return t_s, t_pt

    def unit_time(self, batch: int | float) -> float:
        """Target time for a plain single-token decode step at this batch."""
        t_s, t_pt = self.verify_coeffs(batch)
        return t_s + t_pt


def step_time(
    model: CostModel,
    batch: int,
    drafted: int,
    verified: int,
    c: float | None = None,
) -> float:
    """Wall time of one speculative step.

    (1 + overhead) * [drafted * c * T_unit(batch) + T_verify(batch, verified)]
    where T_unit is the single-token target step time. The target always
    verifies at least the bonus-token forward pass, so ``verified >= 1``.
    """
    if verified < 1:
        raise ValueError(f"verified must be >= 1, got {verified}")
    if drafted < 0:
        raise ValueError(f"drafted must be >= 0, got {drafted}")
    t_s, t_pt = model.verify_coeffs(batch)
    t_unit = t_s + t_pt
    ratio = model.c if c is None else c
    raw = drafted * ratio * t_unit + t_s + t_pt * verified
    return (1.0 + model.overhead_fraction) * raw


def cost_model_from_dict(obj: Mapping) -> CostModel:
    """Build a CostModel from the JSON config schema (docs/formats.md)."""
    if not isinstance(obj, Mapping):
        raise CostConfigError("cost config must be a JSON object")
    allowed = {"mode", "c", "overhead_fraction", "table"}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise CostConfigError(f"unknown cost config keys {unknown}")
    rows = []
    for entry in obj.get("table", []):
        if not isinstance(entry, Mapping) or "batch" not in entry:
            raise CostConfigError(f"table rows need a 'batch' key, got {entry!r}")
        extra = sorted(set(entry) - {"batch", "time_s", "time_per_token_s"})
        if extra:
            raise CostConfigError(f"unknown table row keys {extra}")
        rows.append(
            CostTableRow(
                batch=int(entry["batch"]),
                time_s=float(entry.get("time_s", 0.0)),
                time_per_token_s=float(entry.get("time_per_token_s", 0.0)),
            )
        )
    kwargs = {}
    if rows:
        kwargs["table"] = tuple(rows)
    if "mode" in obj:
        kwargs["mode"] = obj["mode"]
    if "c" in obj:
        kwargs["c"] = float(obj["c"])
    if "overhead_fraction" in obj:
        kwargs["overhead_fraction"] = float(obj["overhead_fraction"])
    return CostModel(**kwargs)


def cost_model_to_dict(model: CostModel) -> dict:
    return {
        "mode": model.mode,
        "c": model.c,
        "overhead_fraction": model.overhead_fraction,
        "table": [
            {"batch": row.batch, "time_s": row.time_s, "time_per_token_s": row.time_per_token_s}
            for row in model.table
        ],
    }


def load_cost_model(path) -> CostModel:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CostConfigError(f"invalid cost config JSON: {exc}") from exc
    return cost_model_from_dict(obj)

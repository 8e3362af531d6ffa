"""Static-weight and per-token KV-cache accounting for SD deployments.

Static memory assumes weights at ``bytes_per_param`` bytes each (FP16 by
default):

    static_gib = (P_target + P_draft) * 1e9 * bytes_per_param / 2**30

Per-token KV cache sums, over target and (if present) drafter, the grouped
key/value tensors of every hidden layer:

    kv_kib = hidden_layers * 2 * kv_heads * head_dim * bytes_per_element / 2**10

Lookup-based drafting has no drafter model, so its overhead is exactly zero;
auxiliary-head drafters are one-layer ModelSpecs. A registry of common model
specs ships with the package (``builtin_model_specs``); intermediate
activation memory is out of scope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .errors import UnknownModelError

GIB = 2**30
KIB = 2**10

_VALID_BYTES = (1, 2, 4)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture numbers needed for memory accounting.

    ``params_billion`` counts the weights actually loaded (auxiliary-head
    drafters exclude remap tables and shared embeddings). ``tied_lm_head``
    records embedding/LM-head weight tying; the parameter counts here
    already account for it, so it carries no numeric effect.
    """

    name: str
    params_billion: float
    hidden_layers: int
    kv_heads: int
    head_dim: int
    tied_lm_head: bool = False

    def __post_init__(self):
        if self.params_billion <= 0:
            raise ValueError(f"params_billion must be positive, got {self.params_billion}")
        for field_name in ("hidden_layers", "kv_heads", "head_dim"):
            value = getattr(self, field_name)
            if value <= 0:
                raise ValueError(f"{field_name} must be positive, got {value}")


@dataclass(frozen=True)
class DeploymentSpec:
    """A target model plus an optional drafter model (absent for no-SD and
    lookup-based drafting)."""

    target: ModelSpec
    drafter: ModelSpec | None = None
    bytes_per_param: int = 2
    bytes_per_element: int = 2

    def __post_init__(self):
        if self.bytes_per_param not in _VALID_BYTES:
            raise ValueError(f"bytes_per_param must be one of {_VALID_BYTES}")
        if self.bytes_per_element not in _VALID_BYTES:
            raise ValueError(f"bytes_per_element must be one of {_VALID_BYTES}")

    @property
    def label(self) -> str:
        if self.drafter is None:
            return self.target.name
        return f"{self.target.name}+{self.drafter.name}"


def static_memory_gib(deployment: DeploymentSpec) -> float:
    """Weight memory in GiB for target plus drafter."""
    params = deployment.target.params_billion
    if deployment.drafter is not None:
        params += deployment.drafter.params_billion
    return params * 1e9 * deployment.bytes_per_param / GIB


def _kv_kib_one(spec: ModelSpec, bytes_per_element: int) -> float:
    return spec.hidden_layers * 2 * spec.kv_heads * spec.head_dim * bytes_per_element / KIB


def per_token_kv_kib(deployment: DeploymentSpec) -> float:
    """KV-cache KiB per generated token, summed over target and drafter."""
    total = _kv_kib_one(deployment.target, deployment.bytes_per_element)
    if deployment.drafter is not None:
        total += _kv_kib_one(deployment.drafter, deployment.bytes_per_element)
    return total


def load_model_specs(path) -> dict[str, ModelSpec]:
    """Load a registry file: a JSON array of ModelSpec objects."""
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    return _specs_from_entries(entries)


def builtin_model_specs() -> dict[str, ModelSpec]:
    """The registry shipped with the package."""
    text = resources.files("specsim").joinpath("data/model_specs.json").read_text("utf-8")
    return _specs_from_entries(json.loads(text))


def _specs_from_entries(entries) -> dict[str, ModelSpec]:
    registry: dict[str, ModelSpec] = {}
    for entry in entries:
        spec = ModelSpec(
            name=entry["name"],
            params_billion=float(entry["params_billion"]),
            hidden_layers=int(entry["hidden_layers"]),
            kv_heads=int(entry["kv_heads"]),
            head_dim=int(entry["head_dim"]),
            tied_lm_head=bool(entry.get("tied_lm_head", False)),
        )
        registry[spec.name] = spec
    return registry


def resolve_deployment(
    registry: Mapping[str, ModelSpec],
    target: str,
    drafter: str | None = None,
    bytes_per_param: int = 2,
    bytes_per_element: int = 2,
) -> DeploymentSpec:
    if target not in registry:
        raise UnknownModelError(f"unknown model spec {target!r}; known: {sorted(registry)}")
    drafter_spec = None
    if drafter is not None:
        if drafter not in registry:
            raise UnknownModelError(f"unknown model spec {drafter!r}; known: {sorted(registry)}")
        drafter_spec = registry[drafter]
    return DeploymentSpec(
        target=registry[target],
        drafter=drafter_spec,
        bytes_per_param=bytes_per_param,
        bytes_per_element=bytes_per_element,
    )


@dataclass(frozen=True)
class MemoryRow:
    label: str
    target: str
    drafter: str | None
    static_gib: float
    per_token_kib: float
    static_overhead_pct: float
    per_token_ratio: float


# (target, drafter) name pairs mirroring the shipped registry's pairings.
DEFAULT_DEPLOYMENTS: tuple[tuple[str, str | None], ...] = (
    ("llama3.1-8b-instruct", None),
    ("llama3.1-8b-instruct", "eagle-llama3.1-8b"),
    ("llama3.1-8b-instruct", "eagle3-llama3.1-8b"),
    ("llama3-70b-instruct", None),
    ("llama3-70b-instruct", "eagle-llama3-70b"),
    ("llama3-70b-instruct", "llama3.2-1b-instruct"),
    ("qwen3-8b", None),
    ("qwen3-8b", "eagle3-qwen3-8b"),
    ("qwen3-8b", "qwen3-0.6b"),
)


def memory_report(
    registry: Mapping[str, ModelSpec],
    deployments: Sequence[DeploymentSpec],
) -> tuple[MemoryRow, ...]:
    """Static + per-token table with relative overhead vs the no-SD target."""
    rows = []
    for deployment in deployments:
        base = DeploymentSpec(
            target=deployment.target,
            drafter=None,
            bytes_per_param=deployment.bytes_per_param,
            bytes_per_element=deployment.bytes_per_element,
        )
        static = static_memory_gib(deployment)
        static_base = static_memory_gib(base)
        kv = per_token_kv_kib(deployment)
        kv_base = per_token_kv_kib(base)
        rows.append(
            MemoryRow(
                label=deployment.label,
                target=deployment.target.name,
                drafter=deployment.drafter.name if deployment.drafter else None,
                static_gib=static,
                per_token_kib=kv,
                static_overhead_pct=100.0 * (static / static_base - 1.0),
                per_token_ratio=kv / kv_base,
            )
        )
    return tuple(rows)


def format_memory_table(rows: Sequence[MemoryRow]) -> str:
    """Aligned text rendering of a memory report."""
    header = ("deployment", "static_gib", "static_overhead", "per_token_kib", "per_token_ratio")
    body = [
        (
            row.label,
            f"{row.static_gib:.4g}",
            f"{row.static_overhead_pct:+.1f}%",
            f"{row.per_token_kib:.4g}",
            f"{row.per_token_ratio:.2f}x",
        )
        for row in rows
    ]
    widths = [max(len(header[i]), *(len(line[i]) for line in body)) if body else len(header[i]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for line in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
    return "\n".join(lines) + "\n"

"""N-gram prompt-lookup drafting over integer token ids, plus deterministic
toy target models and the SD decode / maximum-acceptance measurement loops.

The drafter proposes by copying: take the length-n suffix of the context
(longest n first), find its most recent earlier occurrence, and propose the
tokens that followed it. Verification is greedy — a proposed token is
accepted iff it equals the target's deterministic next token — so decoding
is lossless by construction and the toy targets make that testable exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._kernels import ngram_match
from .trace import AcceptanceTrace


@dataclass(frozen=True)
class LookupConfig:
    """Suffix-length range, proposal budget, and search scope.

    By default matches are searched over the full context (prompt plus
    generated tokens); ``prompt_only=True`` restricts match positions to the
    prompt.
    """

    n_min: int = 3
    n_max: int = 7
    k: int = 3
    prompt_only: bool = False

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError(f"need 1 <= n_min <= n_max, got ({self.n_min}, {self.n_max})")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class ToyTarget:
    """A total deterministic next-token rule over the full context."""

    next_token: Callable[[Sequence[int]], int]
    eos: int
    name: str = "custom"


def propose(
    context: Sequence[int],
    cfg: LookupConfig,
    prompt_length: int | None = None,
) -> list[int]:
    """Propose up to cfg.k tokens by n-gram lookup; [] when nothing matches.

    Tie-breaking: longest suffix length first, then the most recent earlier
    occurrence (match end strictly before the suffix start). The proposal is
    always a verbatim contiguous span of the context, shorter than k only
    when the context ends.
    """
    ctx = np.ascontiguousarray(context, dtype=np.int64)
    if cfg.prompt_only:
        if prompt_length is None:
            raise ValueError("prompt_only lookup requires prompt_length")
        limit = min(prompt_length, ctx.shape[0])
    else:
        limit = ctx.shape[0]
    start, count = ngram_match(ctx, cfg.n_min, cfg.n_max, cfg.k, limit)
    if count == 0:
        return []
    return [int(v) for v in ctx[start : start + count]]


def greedy_decode(prompt: Sequence[int], target: ToyTarget, max_tokens: int) -> list[int]:
    """Plain one-token-at-a-time decoding; the lossless reference output."""
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    ctx = list(prompt)
    out: list[int] = []
    while len(out) < max_tokens:
        token = target.next_token(ctx)
        ctx.append(token)
        out.append(token)
        if token == target.eos:
            break
    return out


def sd_decode(
    prompt: Sequence[int],
    target: ToyTarget,
    cfg: LookupConfig,
    max_tokens: int,
    request_id: str = "sd",
    dataset: str = "toy",
) -> tuple[list[int], AcceptanceTrace]:
    """Speculative decode: propose, verify, accept the matching prefix, add
    the bonus token. Returns the output (token-identical to greedy_decode)
    and a trace with one accepted-count entry per step.
    """
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    prompt_length = len(prompt)
    ctx = list(prompt)
    out: list[int] = []
    per_step: list[int] = []
    while len(out) < max_tokens and (not out or out[-1] != target.eos):
        proposal = propose(ctx, cfg, prompt_length)
        accepted = 0
        hit_eos = False
        for token in proposal:
            if len(out) >= max_tokens:
                break
            expected = target.next_token(ctx)
            if token != expected:
                break
            ctx.append(expected)
            out.append(expected)
            accepted += 1
            if expected == target.eos:
                hit_eos = True
                break
        if not hit_eos and len(out) < max_tokens:
            bonus = target.next_token(ctx)
            ctx.append(bonus)
            out.append(bonus)
        per_step.append(accepted)
    trace = AcceptanceTrace(
        request_id=request_id,
        dataset=dataset,
        method="ngram",
        model=target.name,
        positions=np.asarray(per_step, dtype=np.int64),
    )
    return out, trace


def max_acceptance_probe(
    prompt: Sequence[int],
    target: ToyTarget,
    cfg: LookupConfig,
    cap: int,
    max_tokens: int = 512,
    request_id: str = "probe",
    dataset: str = "toy",
) -> AcceptanceTrace:
    """Measure the maximum acceptable draft length at every output position.

    At each position: propose up to ``cap`` tokens, record how many the
    target would accept, then advance exactly one position with the greedy
    token. The resulting per-position trace feeds the replay simulator.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    probe_cfg = replace(cfg, k=cap)
    prompt_length = len(prompt)
    ctx = list(prompt)
    out: list[int] = []
    per_position: list[int] = []
    while len(out) < max_tokens and (not out or out[-1] != target.eos):
        proposal = propose(ctx, probe_cfg, prompt_length)
        accepted = 0
        probe_ctx = ctx
        copied = False
        for token in proposal:
            expected = target.next_token(probe_ctx)
            if token != expected:
                break
            if not copied:
                # copy-on-write: the real context advances by one greedy token only
                probe_ctx = list(ctx)
                copied = True
            probe_ctx.append(expected)
            accepted += 1
            if expected == target.eos:
                break
        per_position.append(accepted)
        token = target.next_token(ctx)
        ctx.append(token)
        out.append(token)
    return AcceptanceTrace(
        request_id=request_id,
        dataset=dataset,
        method="ngram",
        model=target.name,
        positions=np.asarray(per_position, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Shipped toy targets
# ---------------------------------------------------------------------------


def copy_target(
    prompt: Sequence[int],
    eos: int,
    edits: dict[int, int] | None = None,
) -> ToyTarget:
    """Reproduce the prompt verbatim (with optional per-position edits),
    then emit eos — the code-editing-style workload where lookup drafting
    shines."""
    reference = tuple(prompt)
    edit_map = dict(edits or {})
    count = len(reference)

    def next_token(ctx: Sequence[int]) -> int:
        j = len(ctx) - count
        if 0 <= j < count:
            return edit_map.get(j, reference[j])
        return eos

    return ToyTarget(next_token=next_token, eos=eos, name="copy-edit")


def periodic_target(pattern: Sequence[int], eos: int) -> ToyTarget:
    """Cycle a fixed pattern, keyed off the absolute context length. The eos
    id must not appear in the pattern; generation runs to max_tokens."""
    cycle = tuple(pattern)
    if not cycle:
        raise ValueError("pattern must be non-empty")
    if eos in cycle:
        raise ValueError("eos must not appear in the pattern")

    def next_token(ctx: Sequence[int]) -> int:
        return cycle[len(ctx) % len(cycle)]

    return ToyTarget(next_token=next_token, eos=eos, name="periodic")


def automaton_target(vocab_size: int, eos: int, seed: int = 0) -> ToyTarget:
    """First-order lookup-table automaton: next token = table[last token].

    The table is a random single-cycle permutation of the vocabulary, so the
    walk visits every token once before repeating; with vocab_size larger
    than the decode budget no n-gram ever recurs.
    """
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(vocab_size)
    table = np.empty(vocab_size, dtype=np.int64)
    for i in range(vocab_size):
        table[order[i]] = order[(i + 1) % vocab_size]

    def next_token(ctx: Sequence[int]) -> int:
        return int(table[ctx[-1] % vocab_size])

    return ToyTarget(next_token=next_token, eos=eos, name="automaton")

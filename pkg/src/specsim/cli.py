"""Command-line entry point wiring all modules together.

Subcommands: ``trace gen``, ``trace stats``, ``sim sweep``, ``mem report``,
``draft trace``, ``overlap analyze``. Every run computes its outputs fully
in memory, then writes them atomically (temp file + rename) into ``--out``
together with a ``manifest.json`` recording the subcommand, flag values,
input-file hashes, seed, and toolkit version — re-running with the same
manifest inputs reproduces every output byte-for-byte (nothing timestamped).

Exit codes: 0 success, 1 validation/input error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cost import CostModel, load_cost_model
from .drafter import LookupConfig, automaton_target, copy_target, max_acceptance_probe, periodic_target
from .errors import SpecsimError
from .memory import (
    DEFAULT_DEPLOYMENTS,
    builtin_model_specs,
    format_memory_table,
    load_model_specs,
    memory_report,
    resolve_deployment,
)
from .overlap import BUCKET_LABELS, bucketed_speedup, overlap_record
from .sim import SweepResult, parse_policy, sweep
from .trace import (
    BurstySpec,
    SyntheticSpec,
    TraceSet,
    generate_bursty,
    generate_synthetic,
    load_traces,
    serialize_traces,
    trace_stats,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default="specsim-out", help="output directory (default: %(default)s)")
    parser.add_argument("--format", choices=("csv", "json", "both"), default="both",
                        help="which report formats to write (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed (default: %(default)s)")
    parser.add_argument("--quiet", action="store_true", help="suppress informational output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"specsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    trace_cmd = sub.add_parser("trace", help="generate or summarize acceptance traces")
    trace_sub = trace_cmd.add_subparsers(dest="subcommand", required=True)

    gen = trace_sub.add_parser("gen", help="generate synthetic acceptance traces")
    _add_common(gen)
    gen.add_argument("--kind", choices=("geometric", "bursty"), default="geometric")
    gen.add_argument("--count", type=int, default=8, help="number of requests (default: %(default)s)")
    gen.add_argument("--length", type=int, default=256, help="positions per request (default: %(default)s)")
    gen.add_argument("--cap", type=int, default=20, help="proposal cap (default: %(default)s)")
    gen.add_argument("--alpha", type=float, default=0.7, help="geometric acceptance rate (default: %(default)s)")
    gen.add_argument("--burst-prob", type=float, default=0.1)
    gen.add_argument("--burst-min", type=int, default=8)
    gen.add_argument("--burst-max", type=int, default=20)
    gen.add_argument("--base-alpha", type=float, default=0.0, help="quiet-position acceptance rate for bursty traces")
    gen.add_argument("--method", default=None, help="method label (default: the kind)")
    gen.add_argument("--dataset", default="synthetic")
    gen.add_argument("--model", default="synthetic")

    stats = trace_sub.add_parser("stats", help="per-method position/request/dataset statistics")
    _add_common(stats)
    stats.add_argument("--traces", required=True, help="input trace JSONL file")
    stats.add_argument("--bins", type=int, default=10, help="position bins (default: %(default)s)")
    stats.add_argument("--absolute", action="store_true", help="bin by absolute position instead of relative")
    stats.add_argument("--methods", default=None, help="comma-separated method filter")

    sim_cmd = sub.add_parser("sim", help="trace replay simulation")
    sim_sub = sim_cmd.add_subparsers(dest="subcommand", required=True)
    sweep_p = sim_sub.add_parser("sweep", help="simulate policies x batches over a trace set")
    _add_common(sweep_p)
    sweep_p.add_argument("--traces", required=True, help="input trace JSONL file")
    sweep_p.add_argument("--cost", default=None, help="cost-model JSON (default: unit memory-bound table)")
    sweep_p.add_argument("--policies", default="nosd,fixed:3,oracle",
                         help="comma-separated: nosd | fixed:K | oracle | combine:A+B[:c2] (default: %(default)s)")
    sweep_p.add_argument("--batches", default="1", help="comma-separated batch sizes (default: %(default)s)")
    sweep_p.add_argument("--free-oracle-drafts", action="store_true",
                         help="do not charge drafting time during oracle steps")

    mem_cmd = sub.add_parser("mem", help="memory accounting")
    mem_sub = mem_cmd.add_subparsers(dest="subcommand", required=True)
    report_p = mem_sub.add_parser("report", help="static + per-token memory table")
    _add_common(report_p)
    report_p.add_argument("--specs", default=None, help="model-spec registry JSON (default: built-in)")
    report_p.add_argument("--deployment", action="append", default=None, metavar="target=NAME[,drafter=NAME]",
                          help="deployment to report; repeatable (default: built-in pairings)")
    report_p.add_argument("--bytes-per-param", type=int, default=2, choices=(1, 2, 4))
    report_p.add_argument("--bytes-per-element", type=int, default=2, choices=(1, 2, 4))

    draft_cmd = sub.add_parser("draft", help="n-gram drafting against toy targets")
    draft_sub = draft_cmd.add_subparsers(dest="subcommand", required=True)
    dtrace = draft_sub.add_parser("trace", help="measure per-position max acceptance and emit a trace file")
    _add_common(dtrace)
    dtrace.add_argument("--target", choices=("copy-edit", "periodic", "automaton"), required=True)
    dtrace.add_argument("--prompt-file", default=None, help="whitespace-separated token ids; random if omitted")
    dtrace.add_argument("--prompt-len", type=int, default=64, help="random prompt length (default: %(default)s)")
    dtrace.add_argument("--vocab", type=int, default=4096, help="token id space (default: %(default)s)")
    dtrace.add_argument("--nmin", type=int, default=3)
    dtrace.add_argument("--nmax", type=int, default=7)
    dtrace.add_argument("--cap", type=int, default=20, help="max tokens probed per position (default: %(default)s)")
    dtrace.add_argument("--max-tokens", type=int, default=256)
    dtrace.add_argument("--count", type=int, default=1, help="number of requests (default: %(default)s)")
    dtrace.add_argument("--edits", type=int, default=2, help="edit count for copy-edit targets")
    dtrace.add_argument("--prompt-only", action="store_true", help="restrict lookup to the prompt")
    dtrace.add_argument("--dataset", default="toy")

    overlap_cmd = sub.add_parser("overlap", help="prompt/output overlap analysis")
    overlap_sub = overlap_cmd.add_subparsers(dest="subcommand", required=True)
    analyze = overlap_sub.add_parser("analyze", help="BLEU buckets x batch relative-speedup heatmap")
    _add_common(analyze)
    analyze.add_argument("--pairs", required=True,
                         help="JSONL with request_id, prompt_tokens, output_tokens")
    analyze.add_argument("--n", type=int, default=4, help="BLEU order (default: %(default)s)")
    analyze.add_argument("--reports-a", required=True, help="sweep JSON (single policy) for method A")
    analyze.add_argument("--reports-b", required=True, help="sweep JSON (single policy) for method B")
    analyze.add_argument("--precision-only", action="store_true",
                         help="raw order-n overlap fraction instead of full BLEU")

    return parser


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_outputs(args, subcommand: str, outputs: dict[str, str], inputs: dict[str, Path]) -> list[Path]:
    """Atomically write all outputs plus the run manifest."""
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("command", "subcommand") and not k.startswith("_")
    }
    manifest = {
        "tool": "specsim",
        "version": __version__,
        "subcommand": subcommand,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": sorted(outputs),
    }
    outputs = dict(outputs)
    outputs["manifest.json"] = _json_text(manifest)
    written = []
    for name, text in outputs.items():
        path = outdir / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        written.append(path)
    if not args.quiet:
        for path in sorted(written):
            print(f"wrote {path}")
    return written


def _select_formats(outputs: dict[str, str], fmt: str) -> dict[str, str]:
    """Keep only the requested report format; non-report files always pass."""
    if fmt == "both":
        return outputs
    drop = ".json" if fmt == "csv" else ".csv"
    return {name: text for name, text in outputs.items() if not name.endswith(drop)}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_trace_gen(args) -> int:
    method = args.method or args.kind
    traces = []
    for i in range(args.count):
        child_seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        rid = f"r{i:04d}"
        if args.kind == "geometric":
            spec = SyntheticSpec(alpha=args.alpha, cap=args.cap, length=args.length, seed=child_seed)
            traces.append(generate_synthetic(spec, request_id=rid, dataset=args.dataset,
                                             method=method, model=args.model))
        else:
            spec = BurstySpec(
                burst_prob=args.burst_prob, burst_min=args.burst_min, burst_max=args.burst_max,
                base_alpha=args.base_alpha, cap=args.cap, length=args.length, seed=child_seed,
            )
            traces.append(generate_bursty(spec, request_id=rid, dataset=args.dataset,
                                          method=method, model=args.model))
    traceset = TraceSet(tuple(traces), proposal_cap=args.cap)
    _write_outputs(args, "trace gen", {"traces.jsonl": serialize_traces(traceset)}, {})
    return 0


def _cmd_trace_stats(args) -> int:
    path = Path(args.traces)
    traceset = load_traces(path)
    methods = args.methods.split(",") if args.methods else None
    report = trace_stats(traceset, args.bins, relative=not args.absolute, methods=methods)

    rows = []
    for method in sorted(report.methods):
        for b in report.methods[method].bins:
            rows.append([method, b.bin,
                         "" if b.count == 0 else repr(b.mean),
                         "" if b.count == 0 else repr(b.ci_low),
                         "" if b.count == 0 else repr(b.ci_high)])
    summary = {
        "position_bins": report.position_bins,
        "relative": report.relative,
        "warnings": list(report.warnings),
        "methods": {
            method: {
                "requests": len(stats.request_means),
                "request_percentiles": {str(p): v for p, v in stats.request_percentiles.items()},
                "datasets": [
                    {"dataset": d.dataset, "requests": d.requests, "mean": d.mean,
                     "median": d.median, "std": d.std}
                    for d in stats.datasets
                ],
            }
            for method, stats in report.methods.items()
        },
    }
    outputs = {
        "stats_bins.csv": _csv_text(["method", "bin", "mean", "ci_low", "ci_high"], rows),
        "stats_summary.json": _json_text(summary),
    }
    _write_outputs(args, "trace stats", _select_formats(outputs, args.format), {"traces": path})
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def emit_plotdata(result: SweepResult) -> dict[str, str]:
    """Long-format CSVs behind the sweep: aggregate matrix, per-request rows,
    and (when an oracle policy ran) the oracle-vs-fixed gap table."""
    agg_rows = [
        [a.policy, a.batch, repr(a.throughput), repr(a.speedup), repr(a.acceptance_ratio)]
        for a in result.aggregates
    ]
    request_rows = [
        [c.request_id, c.method, c.dataset, c.policy, c.batch, c.report.steps,
         c.report.generated_tokens, c.report.drafted_tokens, c.report.accepted_tokens,
         repr(c.report.wall_time), repr(c.report.throughput),
         repr(c.report.speedup_vs_baseline), repr(c.report.acceptance_ratio)]
        for c in result.cells
    ]
    outputs = {
        "sweep.csv": _csv_text(["policy", "batch", "throughput", "speedup", "acceptance_ratio"], agg_rows),
        "sweep_requests.csv": _csv_text(
            ["request_id", "method", "dataset", "policy", "batch", "steps", "generated_tokens",
             "drafted_tokens", "accepted_tokens", "wall_time", "throughput", "speedup", "acceptance_ratio"],
            request_rows,
        ),
    }

    oracle = {a.batch: a.speedup for a in result.aggregates if a.policy == "oracle"}
    if oracle:
        gap_rows = []
        for a in result.aggregates:
            if not a.policy.startswith("fixed:") or a.batch not in oracle:
                continue
            gap = oracle[a.batch] - a.speedup
            gap_rows.append([a.batch, a.policy, repr(a.speedup), repr(oracle[a.batch]),
                             repr(gap), repr(100.0 * (oracle[a.batch] / a.speedup - 1.0))])
        if gap_rows:
            outputs["oracle_gap.csv"] = _csv_text(
                ["batch", "fixed_policy", "fixed_speedup", "oracle_speedup", "gap_abs", "gap_pct"],
                gap_rows,
            )
    return outputs


def _cmd_sim_sweep(args) -> int:
    trace_path = Path(args.traces)
    traceset = load_traces(trace_path)
    inputs = {"traces": trace_path}
    if args.cost:
        cost_path = Path(args.cost)
        cost = load_cost_model(cost_path)
        inputs["cost"] = cost_path
    else:
        cost = CostModel()
    policies = [parse_policy(tok) for tok in args.policies.split(",") if tok.strip()]
    batches = [int(tok) for tok in args.batches.split(",") if tok.strip()]
    result = sweep(traceset, policies, cost, batches,
                   charge_oracle_drafts=not args.free_oracle_drafts)

    outputs = emit_plotdata(result)
    outputs["sweep.json"] = _json_text({
        "aggregates": [vars(a) for a in result.aggregates],
        "cells": [
            {"request_id": c.request_id, "method": c.method, "dataset": c.dataset,
             "policy": c.policy, "batch": c.batch, "report": vars(c.report)}
            for c in result.cells
        ],
        "warnings": list(result.warnings),
    })
    _write_outputs(args, "sim sweep", _select_formats(outputs, args.format), inputs)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _parse_deployment_arg(text: str) -> tuple[str, str | None]:
    target = None
    drafter = None
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise SpecsimError(f"bad --deployment {text!r}; expected target=NAME[,drafter=NAME]")
        key, value = part.split("=", 1)
        if key == "target":
            target = value
        elif key == "drafter":
            drafter = value
        else:
            raise SpecsimError(f"bad --deployment key {key!r}")
    if target is None:
        raise SpecsimError(f"--deployment {text!r} is missing target=NAME")
    return target, drafter


def _cmd_mem_report(args) -> int:
    inputs: dict[str, Path] = {}
    if args.specs:
        specs_path = Path(args.specs)
        registry = load_model_specs(specs_path)
        inputs["specs"] = specs_path
    else:
        registry = builtin_model_specs()
    if args.deployment:
        pairs = [_parse_deployment_arg(text) for text in args.deployment]
    else:
        pairs = list(DEFAULT_DEPLOYMENTS)
    deployments = [
        resolve_deployment(registry, target, drafter,
                           bytes_per_param=args.bytes_per_param,
                           bytes_per_element=args.bytes_per_element)
        for target, drafter in pairs
    ]
    rows = memory_report(registry, deployments)
    table = format_memory_table(rows)
    csv_rows = [
        [r.label, r.target, r.drafter or "", repr(r.static_gib), repr(r.per_token_kib),
         repr(r.static_overhead_pct), repr(r.per_token_ratio)]
        for r in rows
    ]
    outputs = {
        "memory.csv": _csv_text(
            ["deployment", "target", "drafter", "static_gib", "per_token_kib",
             "static_overhead_pct", "per_token_ratio"],
            csv_rows,
        ),
        "memory.txt": table,
    }
    if args.format == "json":
        outputs = {"memory.json": _json_text([vars(r) for r in rows]), "memory.txt": table}
    elif args.format == "both":
        outputs["memory.json"] = _json_text([vars(r) for r in rows])
    _write_outputs(args, "mem report", outputs, inputs)
    if not args.quiet:
        print(table, end="")
    return 0


def _load_prompt_file(path: Path) -> list[int]:
    tokens = []
    for tok in path.read_text(encoding="utf-8").split():
        tokens.append(int(tok))
    if not tokens:
        raise SpecsimError(f"prompt file {path} contains no tokens")
    return tokens


def _build_target(args, prompt: list[int], rng: np.random.Generator):
    eos = args.vocab  # reserved id outside the generated alphabet
    if args.target == "copy-edit":
        positions = rng.choice(len(prompt), size=min(args.edits, len(prompt)), replace=False)
        edits = {int(p): int(rng.integers(0, args.vocab)) for p in positions}
        return copy_target(prompt, eos=eos, edits=edits)
    if args.target == "periodic":
        period = int(rng.integers(3, 12))
        pattern = [int(v) for v in rng.integers(0, args.vocab, size=period)]
        return periodic_target(pattern, eos=eos)
    return automaton_target(vocab_size=args.vocab, eos=eos, seed=int(rng.integers(0, 2**31)))


def _cmd_draft_trace(args) -> int:
    inputs: dict[str, Path] = {}
    cfg = LookupConfig(n_min=args.nmin, n_max=args.nmax, k=args.cap, prompt_only=args.prompt_only)
    traces = []
    for i in range(args.count):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, i]))
        if args.prompt_file:
            prompt_path = Path(args.prompt_file)
            prompt = _load_prompt_file(prompt_path)
            inputs["prompt"] = prompt_path
        else:
            prompt = [int(v) for v in rng.integers(0, args.vocab, size=args.prompt_len)]
        target = _build_target(args, prompt, rng)
        traces.append(
            max_acceptance_probe(
                prompt, target, cfg, cap=args.cap, max_tokens=args.max_tokens,
                request_id=f"r{i:04d}", dataset=args.dataset,
            )
        )
    traceset = TraceSet(tuple(traces), proposal_cap=args.cap)
    _write_outputs(args, "draft trace", {"traces.jsonl": serialize_traces(traceset)}, inputs)
    return 0


def _load_pairs(path: Path) -> list[tuple[str, list[int], list[int]]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SpecsimError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            try:
                pairs.append((obj["request_id"], list(obj["prompt_tokens"]), list(obj["output_tokens"])))
            except (KeyError, TypeError) as exc:
                raise SpecsimError(
                    f"{path}:{lineno}: need request_id, prompt_tokens, output_tokens"
                ) from exc
    if not pairs:
        raise SpecsimError(f"pairs file {path} is empty")
    return pairs


def _load_speedups(path: Path) -> dict[str, dict[int, float]]:
    """Read per-request speedups from a sweep JSON (single policy) or a flat
    [{request_id, batch, speedup}] array."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if isinstance(obj, dict) and "cells" in obj:
        policies = {c["policy"] for c in obj["cells"]}
        if len(policies) != 1:
            raise SpecsimError(
                f"{path} holds {len(policies)} policies {sorted(policies)}; "
                "run the sweep with a single policy per reports file"
            )
        rows = [(c["request_id"], int(c["batch"]), float(c["report"]["speedup_vs_baseline"]))
                for c in obj["cells"]]
    elif isinstance(obj, list):
        rows = [(r["request_id"], int(r["batch"]), float(r["speedup"])) for r in obj]
    else:
        raise SpecsimError(f"{path}: unrecognized reports schema")
    out: dict[str, dict[int, float]] = {}
    for rid, batch, speedup in rows:
        out.setdefault(rid, {})[batch] = speedup
    return out


def _cmd_overlap_analyze(args) -> int:
    pairs_path = Path(args.pairs)
    a_path = Path(args.reports_a)
    b_path = Path(args.reports_b)
    pairs = _load_pairs(pairs_path)
    records = [
        overlap_record(rid, prompt, output, n=args.n, precision_only=args.precision_only)
        for rid, prompt, output in pairs
    ]
    reports_a = _load_speedups(a_path)
    reports_b = _load_speedups(b_path)
    try:
        cells = bucketed_speedup(records, reports_a, reports_b)
    except ValueError as exc:
        raise SpecsimError(str(exc)) from exc

    rows = [
        [c.bucket_label, c.batch, c.count, "" if c.rel_speedup_pct is None else repr(c.rel_speedup_pct)]
        for c in cells
    ]
    outputs = {
        "overlap_heatmap.csv": _csv_text(["bucket", "batch", "count", "rel_speedup_pct"], rows),
        "overlap.json": _json_text({
            "n": args.n,
            "precision_only": args.precision_only,
            "records": [{"request_id": r.request_id, "bleu": r.bleu,
                         "bucket": BUCKET_LABELS[r.bucket]} for r in records],
            "cells": [vars(c) for c in cells],
        }),
    }
    _write_outputs(args, "overlap analyze",
                   _select_formats(outputs, args.format),
                   {"pairs": pairs_path, "reports_a": a_path, "reports_b": b_path})
    return 0


_DISPATCH = {
    ("trace", "gen"): _cmd_trace_gen,
    ("trace", "stats"): _cmd_trace_stats,
    ("sim", "sweep"): _cmd_sim_sweep,
    ("mem", "report"): _cmd_mem_report,
    ("draft", "trace"): _cmd_draft_trace,
    ("overlap", "analyze"): _cmd_overlap_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _DISPATCH[(args.command, args.subcommand)]
    try:
        return handler(args)
    except (SpecsimError, ValueError, OSError) as exc:
        print(f"specsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

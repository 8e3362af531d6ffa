"""Replay simulator vs a brute-force step walker built on the public cost op."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specsim import (
    AcceptanceTrace,
    AnalyticParams,
    CostModel,
    CostTableRow,
    FixedK,
    NoSD,
    OracleCombine,
    OracleK,
    PairedOracleCombine,
    SyntheticSpec,
    TraceAlignmentError,
    TraceSet,
    expected_speedup,
    generate_synthetic,
    simulate,
    step_time,
    sweep,
)

UNIT = CostModel(c=0.0, overhead_fraction=0.0)


def make_trace(positions, request_id="r1", method="m"):
    return AcceptanceTrace(request_id, "d", method, "mod", np.asarray(positions))


def brute_force_walk(m, policy, cost, batch=1, secondary=None, c_secondary=0.0):
    """Literal per-step replay accumulating step_time() calls; the oracle for
    simulate(). Returns (steps, drafted, accepted, wall, baseline)."""
    length = len(m)
    i = 0
    steps = drafted = accepted = 0
    wall = 0.0
    while i < length:
        remaining = length - i
        if policy == "nosd":
            proposed, charge_drafted, c = 0, 0, cost.c
        elif isinstance(policy, int):  # fixed-k
            proposed, charge_drafted, c = policy, policy, cost.c
        elif policy == "oracle":
            proposed = min(m[i], remaining - 1)
            charge_drafted, c = proposed, cost.c
        elif policy == "combine":
            if m[i] >= secondary[i]:
                proposed, c = m[i], cost.c
            else:
                proposed, c = secondary[i], c_secondary
            proposed = min(proposed, remaining - 1)
            charge_drafted = proposed
        accept = min(m[i], proposed) if policy != "combine" else proposed
        g = min(accept + 1, remaining)
        steps += 1
        drafted += charge_drafted
        accepted += g - 1
        wall += step_time(cost, batch, charge_drafted, proposed + 1, c=c)
        i += g
    baseline = length * step_time(cost, batch, 0, 1)
    return steps, drafted, accepted, wall, baseline


def test_fixed_k_hand_trace():
    report = simulate(make_trace([3, 0, 2]), FixedK(2), UNIT)
    assert report.steps == 1
    assert report.generated_tokens == 3
    assert report.speedup_vs_baseline == pytest.approx(3.0)
    assert report.accepted_tokens == 2
    assert report.drafted_tokens == 2


def test_nosd_baseline_identity():
    report = simulate(make_trace([3, 0, 2]), NoSD(), UNIT)
    assert report.steps == 3
    assert report.speedup_vs_baseline == 1.0
    assert report.acceptance_ratio == 0.0


def test_combine_hand_trace():
    primary = make_trace([1, 0], method="A")
    secondary = make_trace([0, 2], method="B")
    report = simulate(primary, OracleCombine(secondary, c_secondary=0.0), UNIT)
    assert report.steps == 1
    assert report.speedup_vs_baseline == pytest.approx(2.0)


def test_combine_misaligned_raises():
    primary = make_trace([1, 0, 2], method="A")
    secondary = make_trace([0, 2], method="B")
    with pytest.raises(TraceAlignmentError):
        simulate(primary, OracleCombine(secondary), UNIT)


def test_oracle_acceptance_ratio_is_one():
    trace = generate_synthetic(SyntheticSpec(alpha=0.8, cap=20, length=5000, seed=6))
    report = simulate(trace, OracleK(), CostModel(c=0.1, overhead_fraction=0.0))
    assert report.acceptance_ratio == 1.0
    assert report.accepted_tokens == report.drafted_tokens


@pytest.mark.parametrize("policy_kind", ["nosd", 1, 3, 7, "oracle", "combine"])
def test_simulate_matches_brute_force_walker(policy_kind):
    rng = np.random.default_rng(21)
    cost = CostModel(
        mode="compute_bound",
        table=(CostTableRow(1, time_s=0.4, time_per_token_s=0.2),
               CostTableRow(16, time_s=0.1, time_per_token_s=0.3)),
        c=0.07,
        overhead_fraction=0.08,
    )
    for _ in range(30):
        length = int(rng.integers(1, 200))
        m = rng.integers(0, 21, size=length)
        mb = rng.integers(0, 21, size=length)
        for batch in (1, 4, 16):
            if policy_kind == "nosd":
                policy = NoSD()
            elif policy_kind == "oracle":
                policy = OracleK()
            elif policy_kind == "combine":
                policy = OracleCombine(make_trace(mb, method="B"), c_secondary=0.02)
            else:
                policy = FixedK(policy_kind)
            report = simulate(make_trace(m), policy, cost, batch=batch)
            steps, drafted, accepted, wall, baseline = brute_force_walk(
                list(m), policy_kind, cost, batch=batch, secondary=list(mb), c_secondary=0.02
            )
            assert report.steps == steps
            assert report.drafted_tokens == drafted
            assert report.accepted_tokens == accepted
            assert report.generated_tokens == length
            assert report.wall_time == pytest.approx(wall, rel=1e-9)
            assert report.speedup_vs_baseline == pytest.approx(baseline / wall, rel=1e-9)


def test_fixed_k_tracks_analytic_speedup():
    trace = generate_synthetic(SyntheticSpec(alpha=0.8, cap=20, length=10**6, seed=77))
    cost = CostModel(c=0.05, overhead_fraction=0.0)
    for k in range(1, 9):
        report = simulate(trace, FixedK(k), cost)
        analytic = expected_speedup(AnalyticParams(0.8, k, 0.05))
        assert report.speedup_vs_baseline == pytest.approx(analytic, rel=0.02)


@given(
    st.lists(st.integers(0, 20), min_size=1, max_size=150),
    st.sampled_from(["nosd", "fixed", "oracle"]),
    st.integers(1, 12),
)
@settings(max_examples=150)
def test_token_conservation(positions, kind, k):
    trace = make_trace(positions)
    policy = {"nosd": NoSD(), "fixed": FixedK(k), "oracle": OracleK()}[kind]
    report = simulate(trace, policy, UNIT)
    assert report.generated_tokens == len(positions)
    assert report.accepted_tokens + report.steps == len(positions)
    assert report.accepted_tokens <= report.drafted_tokens or kind == "nosd"
    assert report.steps >= math.ceil(len(positions) / 21)


@given(
    st.lists(st.integers(0, 20), min_size=1, max_size=120),
    st.floats(0.0, 0.5),
    st.floats(0.0, 0.5),
)
@settings(max_examples=100)
def test_overhead_fraction_never_changes_speedup(positions, oh1, oh2):
    trace = make_trace(positions)
    for policy in (FixedK(3), OracleK(), NoSD()):
        a = simulate(trace, policy, CostModel(c=0.1, overhead_fraction=oh1))
        b = simulate(trace, policy, CostModel(c=0.1, overhead_fraction=oh2))
        assert a.speedup_vs_baseline == b.speedup_vs_baseline  # exact equality


@given(st.lists(st.integers(0, 6), min_size=1, max_size=120), st.integers(6, 12), st.floats(0.0, 0.9))
@settings(max_examples=100)
def test_oracle_dominates_fixed_pathwise_when_k_covers_trace(positions, k, c):
    # With every m <= k the two walks take identical paths, so fixed-k can
    # only pay extra draft cost; dominance is exact here (not just statistical).
    trace = make_trace(positions)
    cost = CostModel(c=c, overhead_fraction=0.0)
    fixed = simulate(trace, FixedK(k), cost)
    oracle = simulate(trace, OracleK(), cost)
    assert fixed.steps == oracle.steps
    assert oracle.speedup_vs_baseline >= fixed.speedup_vs_baseline - 1e-12


def test_combine_step_count_beats_both_singles_on_complementary_traces():
    # stable method A, bursty method B: combining exploits both, so its step
    # count lands below either single-method oracle (deterministic corpus)
    rng = np.random.default_rng(33)
    for _ in range(25):
        length = 3000
        ma = np.minimum(rng.geometric(0.4, size=length) - 1, 20)
        mb = np.where(rng.random(length) < 0.12, rng.integers(10, 21, size=length), 0)
        ta, tb = make_trace(ma, method="A"), make_trace(mb, method="B")
        combine = simulate(ta, OracleCombine(tb), UNIT)
        assert combine.steps <= simulate(ta, OracleK(), UNIT).steps
        assert combine.steps <= simulate(tb, OracleK(), UNIT).steps


def test_free_oracle_drafts_flag():
    trace = generate_synthetic(SyntheticSpec(alpha=0.7, cap=20, length=2000, seed=8))
    cost = CostModel(c=0.2, overhead_fraction=0.0)
    charged = simulate(trace, OracleK(), cost)
    free = simulate(trace, OracleK(), cost, charge_oracle_drafts=False)
    assert free.speedup_vs_baseline > charged.speedup_vs_baseline
    baseline_free = simulate(trace, OracleK(), CostModel(c=0.0, overhead_fraction=0.0))
    assert free.speedup_vs_baseline == pytest.approx(baseline_free.speedup_vs_baseline)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def test_sweep_shapes_and_nosd_identity():
    trace = make_trace([2, 0, 4, 1], request_id="r1")
    result = sweep(TraceSet((trace,)), [NoSD(), FixedK(3)], UNIT, [1])
    assert len(result.cells) == 2
    assert len(result.aggregates) == 2
    nosd = [a for a in result.aggregates if a.policy == "nosd"][0]
    assert nosd.speedup == 1.0


def test_sweep_aggregate_throughput_definition():
    traces = TraceSet((
        make_trace([2, 0, 4, 1, 0, 0], request_id="r1"),
        make_trace([5, 5, 5, 5], request_id="r2"),
    ))
    cost = CostModel(c=0.1, overhead_fraction=0.05)
    result = sweep(traces, [FixedK(2)], cost, [1, 4])
    for agg in result.aggregates:
        cells = [c for c in result.cells if c.batch == agg.batch]
        total_gen = sum(c.report.generated_tokens for c in cells)
        total_wall = sum(c.report.wall_time for c in cells)
        assert agg.throughput == pytest.approx(total_gen / total_wall, rel=1e-12)
        assert agg.traces == 2


def test_sweep_paired_combine_resolution():
    ta1 = make_trace([1, 0, 3], request_id="r1", method="ngram")
    tb1 = make_trace([0, 2, 0], request_id="r1", method="eagle")
    ta2 = make_trace([4, 4], request_id="r2", method="ngram")  # no eagle partner
    traces = TraceSet((ta1, tb1, ta2))
    result = sweep(traces, [PairedOracleCombine("ngram", "eagle")], UNIT, [1])
    assert len(result.cells) == 1
    assert result.cells[0].request_id == "r1"
    assert any("r2" in w for w in result.warnings)


def test_sweep_rejects_empty_inputs():
    trace = make_trace([1])
    with pytest.raises(ValueError):
        sweep(TraceSet((trace,)), [], UNIT, [1])
    with pytest.raises(ValueError):
        sweep(TraceSet((trace,)), [NoSD()], UNIT, [])

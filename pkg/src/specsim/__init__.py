"""Performance-modeling toolkit for speculative decoding.

Pieces: the analytic expected-speedup formula, a trace-driven replay
simulator with fixed-k and oracle proposed-length policies, weight and
KV-cache memory accounting, an n-gram prompt-lookup drafter with
deterministic toy targets for producing real acceptance traces, and
prompt/output overlap analysis. Everything runs on the CPU at desk scale.
"""

from .cost import (
    AnalyticParams,
    CostModel,
    CostTableRow,
    cost_model_from_dict,
    cost_model_to_dict,
    expected_speedup,
    load_cost_model,
    step_time,
)
from .drafter import (
    LookupConfig,
    ToyTarget,
    automaton_target,
    copy_target,
    greedy_decode,
    max_acceptance_probe,
    periodic_target,
    propose,
    sd_decode,
)
from .errors import (
    CostConfigError,
    SpecsimError,
    TraceAlignmentError,
    TraceParseError,
    TraceValidationError,
    UnknownModelError,
)
from .memory import (
    DeploymentSpec,
    ModelSpec,
    builtin_model_specs,
    load_model_specs,
    memory_report,
    per_token_kv_kib,
    resolve_deployment,
    static_memory_gib,
)
from .overlap import OverlapRecord, bleu_n, bucket_index, bucketed_speedup, overlap_record
from .sim import (
    FixedK,
    NoSD,
    OracleCombine,
    OracleK,
    PairedOracleCombine,
    SimReport,
    parse_policy,
    simulate,
    sweep,
)
from .trace import (
    AcceptanceTrace,
    BurstySpec,
    SyntheticSpec,
    TraceSet,
    generate_bursty,
    generate_synthetic,
    load_traces,
    save_traces,
    serialize_traces,
    trace_stats,
)

__version__ = "0.1.0"

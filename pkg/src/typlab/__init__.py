"""typlab: log-perplexity typicality statistics over token-probability traces.

Core pieces: per-distribution information measures (`core_stats`), the
NDJSON trace format and prefix series (`trace`), seeded toy sources and DFA
grammars (`sources`), exact brute-force verification (`oracle`), variable
threshold classification (`typicality`), and a CLI (`cli`).
"""

from .core_stats import (
    DistStats,
    Distribution,
    cross_entropy,
    dist_stats,
    empirical_distribution,
    entropy,
    log_deviation,
    second_log_moment,
    validate_distribution,
)
from .oracle import (
    EnumerationReport,
    StringRecord,
    VarianceReport,
    build_sets,
    count_dfa_strings,
    enumerate_strings,
    variance_decomposition,
    verify_bounds,
)
from .sources import (
    ContextTreeSource,
    Dfa,
    GrammarFilteredSource,
    GrammarSpec,
    IIDSource,
    IndependentSeqSource,
    Source,
    accept_all_grammar,
    auxiliary_from_trace,
    grammar_filtered_sample,
    no_repeat_grammar,
    random_context_tree,
    sample_ids,
    sample_trace,
    source_from_json,
    source_to_json,
    uniform_no_repeat_tree,
)
from .trace import (
    PrefixStats,
    TraceHeader,
    TraceStep,
    prefix_stats,
    prefix_stats_to_csv,
    read_trace,
    write_trace,
)
from .typicality import (
    TypicalityReport,
    classify,
    classify_values,
    false_negative_bound,
    score_under_model,
)

__version__ = "0.1.0"

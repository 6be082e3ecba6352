"""Container-terminal truck dispatch: simulator, GP heuristics, neural seeding."""

from .dispatchers import (
    Dispatcher,
    FifoDispatcher,
    ManualDispatcher,
    ManualParams,
    MtrDispatcher,
    NonFiniteScoreError,
    RandomDispatcher,
    ScriptDispatcher,
    SttDispatcher,
    TreeDispatcher,
    baseline_dispatchers,
    manual_heuristic,
    rank_candidates,
    rank_from_scores,
)
from .engine import (
    CraneVisit,
    DecisionRecord,
    EngineError,
    SimResult,
    compute_teu_per_hour,
    qc_swap_reorder,
    run_simulation,
    validate_schedule,
)
from .expressions import (
    ExprNode,
    ExprTree,
    PrefixParseError,
    Token,
    canonical_key,
    eval_expr,
    eval_expr_columns,
    format_heuristic_line,
    from_polish,
    leaf,
    load_heuristics,
    parse_heuristic_line,
    parse_token,
    save_heuristics,
    to_polish,
    token_count,
    tree_depth,
    validate_prefix,
)
from .features import FEATURE_ALIASES, FEATURE_INDEX, FEATURE_NAMES
from .generate import gen_instance
from .gp import (
    FitnessEvaluator,
    GenerationStats,
    GpConfig,
    Individual,
    evaluate_population,
    evolve,
    init_population,
    random_tree,
    subtree_crossover,
    subtree_mutation,
)
from .hybrid import (
    HybridConfig,
    HybridHistoryRow,
    HybridRun,
    predicted_requests,
    report_token_counts,
    run_hybrid,
    run_lgp,
)
from .instance import InstanceError, TaskSpec, TerminalInstance, load_instance, save_instance
from .timing import TimingError, compute_times, enumerate_dispatch_optimum, realized_crane_orders

__version__ = "0.1.0"

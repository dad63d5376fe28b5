"""fscsynth: learn finite-state controllers for partially observable
systems with probabilistic safety guarantees.

The package combines an action oracle (exact belief lookahead, sparse
scenario sampling, or a reference controller), an automaton learner over
oracle answers, and a Markov-chain model checker that verifies each
learned controller and feeds counterexamples back into the learner.
"""

from .checker import (
    CheckResult,
    Counterexample,
    InfeasibleCounterexample,
    check_threshold,
    enumerate_counterexample,
    reach_probability,
    safety_probability,
    serialize_counterexample,
)
from .driver import SynthesisReport, gen_cards, gen_grid_world, synthesize
from .fsc import (
    DisabledActionError,
    Fsc,
    bad_product_states,
    batch_bad_frequency,
    build_product,
    export_dot,
    make_fsc,
    parse_dot,
    parse_fsc,
    run_fsc,
    serialize_fsc,
)
from .learner import (
    ClosednessError,
    ObservationTable,
    build_hypothesis,
    close_table,
    fill_entry,
    init_table,
    process_counterexample,
)
from .model import (
    BOUNDED_REACH_AVOID,
    History,
    InconsistentObservation,
    MarkovChain,
    ModelError,
    ObjectiveSpec,
    Pomdp,
    SAFETY,
    absorb_bad_states,
    belief_of_history,
    belief_update,
    format_history,
    initial_belief,
    initial_history,
    parse_history,
    parse_model,
    path_probability,
    serialize_model,
    support_after,
    validate_history,
)
from .oracles import (
    BeliefViOracle,
    CompositeOracle,
    FscOracle,
    QueryCache,
    SparseSamplerOracle,
    answer_action_query,
    belief_vi_query,
    fsc_oracle_query,
    sparse_sampler_query,
)
from .report import render_figures, render_json_lines, render_text
from .transform import (
    RewardPomdp,
    discounted_value,
    extend_fsc_to,
    make_reward_pomdp,
    path_reward,
    unroll_reach_avoid,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDED_REACH_AVOID",
    "BeliefViOracle",
    "CheckResult",
    "ClosednessError",
    "CompositeOracle",
    "Counterexample",
    "DisabledActionError",
    "Fsc",
    "FscOracle",
    "History",
    "InconsistentObservation",
    "InfeasibleCounterexample",
    "MarkovChain",
    "ModelError",
    "ObjectiveSpec",
    "ObservationTable",
    "Pomdp",
    "QueryCache",
    "RewardPomdp",
    "SAFETY",
    "SparseSamplerOracle",
    "SynthesisReport",
    "absorb_bad_states",
    "answer_action_query",
    "bad_product_states",
    "batch_bad_frequency",
    "belief_of_history",
    "belief_update",
    "belief_vi_query",
    "build_hypothesis",
    "build_product",
    "check_threshold",
    "close_table",
    "discounted_value",
    "enumerate_counterexample",
    "export_dot",
    "extend_fsc_to",
    "fill_entry",
    "format_history",
    "fsc_oracle_query",
    "gen_cards",
    "gen_grid_world",
    "init_table",
    "initial_belief",
    "initial_history",
    "make_fsc",
    "make_reward_pomdp",
    "parse_dot",
    "parse_fsc",
    "parse_history",
    "parse_model",
    "path_probability",
    "path_reward",
    "process_counterexample",
    "reach_probability",
    "render_figures",
    "render_json_lines",
    "render_text",
    "run_fsc",
    "safety_probability",
    "serialize_counterexample",
    "serialize_fsc",
    "serialize_model",
    "sparse_sampler_query",
    "synthesize",
    "unroll_reach_avoid",
    "validate_history",
]

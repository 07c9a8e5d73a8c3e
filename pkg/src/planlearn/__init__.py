"""Learn a decision model from a single worked example, then act on it.

The pipeline proves why a logged decision worked, generalizes the proof into
an influence diagram, solves the diagram by rollback, prices its information
sources, and simulates the decide-observe-update loop with odds-form belief
revision.
"""

from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    parse_scenario,
    save_scenario,
    validate_scenario,
)
from .explain import (
    ExplanationGraph,
    GeneralizationError,
    NoProofError,
    ProofError,
    ProofNode,
    answer_why,
    check_subsumption,
    default_goal,
    format_graph,
    format_proof,
    generalize,
    prove,
    prove_all,
    to_influence_diagram,
)
from .diagram import (
    DiagramError,
    InfluenceDiagram,
    conditional,
    drop_measurement,
    expected_utility,
    force_decision,
    is_cond_independent,
    joint_distribution,
    observe_everywhere,
    reverse_arc,
    scale_utility,
    to_dot,
    with_measurement_cost,
    with_prior,
)
from .policy import (
    DecisionTree,
    Policy,
    compile_tree,
    evpi,
    evsi,
    format_policy,
    optimal_policy,
    rollback,
    solve,
)
from .learn import (
    BeliefState,
    average_likelihood_ratio,
    likelihood_ratio,
    posterior_odds_exact,
    predict_switch,
    switch_threshold,
    update,
)
from .sim import (
    ReplicationStats,
    RunSummary,
    TraceRecord,
    WorldState,
    replicate,
    run,
    simulator_for,
    step,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "DecisionTree",
    "DiagramError",
    "ExplanationGraph",
    "GeneralizationError",
    "InfluenceDiagram",
    "NoProofError",
    "Policy",
    "ProofError",
    "ProofNode",
    "ReplicationStats",
    "RunSummary",
    "Scenario",
    "ScenarioError",
    "TraceRecord",
    "WorldState",
    "answer_why",
    "average_likelihood_ratio",
    "check_subsumption",
    "compile_tree",
    "conditional",
    "default_goal",
    "drop_measurement",
    "evpi",
    "evsi",
    "expected_utility",
    "force_decision",
    "format_graph",
    "format_policy",
    "format_proof",
    "generalize",
    "is_cond_independent",
    "joint_distribution",
    "likelihood_ratio",
    "load_scenario",
    "observe_everywhere",
    "optimal_policy",
    "parse_scenario",
    "posterior_odds_exact",
    "predict_switch",
    "prove",
    "prove_all",
    "replicate",
    "reverse_arc",
    "rollback",
    "run",
    "save_scenario",
    "scale_utility",
    "simulator_for",
    "solve",
    "step",
    "switch_threshold",
    "to_dot",
    "to_influence_diagram",
    "update",
    "validate_scenario",
    "with_measurement_cost",
    "with_prior",
    "write_trace",
]

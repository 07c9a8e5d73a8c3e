from fractions import Fraction

import pytest

from planlearn import diagram as dg
from planlearn import explain as ex
from planlearn.logic import parse_atom


# ---- proving --------------------------------------------------------

def test_training_example_has_a_unique_proof(scenario):
    proofs = ex.prove_all(ex.default_goal(scenario), scenario)
    assert len(proofs) == 1


def test_proof_shape(proof):
    assert proof.kind == ex.CLAUSE
    assert proof.conclusion.pred == "StageUtility"
    assert proof.size() == 15
    kinds = {leaf.kind for leaf in proof.leaves()}
    assert kinds == {ex.PROB_FACT, ex.EXAMPLE, ex.BUILTIN}


def test_proof_is_operational(proof, scenario):
    assert ex.operational_diagnostics(proof, scenario) == []


def test_proof_respects_example_outcome(proof):
    # the logged run survived; no sub-proof may conclude a collapse
    text = ex.format_proof(proof)
    assert "Breaks" not in text
    assert "Resists" in text


def test_depth_bound_raises(scenario):
    with pytest.raises(ex.DepthBoundError):
        ex.prove(ex.default_goal(scenario), scenario, depth_bound=3)


def test_unprovable_goal_raises(scenario):
    with pytest.raises(ex.NoProofError):
        ex.prove(parse_atom("(StageUtility ?u S99)"), scenario)


def test_prob_fact_leaf_records_outcome(proof):
    densities = [
        leaf for leaf in proof.leaves()
        if leaf.kind == ex.PROB_FACT and leaf.ref == "BoxDensity"
    ]
    assert len(densities) == 1
    assert densities[0].outcome == Fraction(2, 5)


# ---- generalization -------------------------------------------------

EXPECTED_NODES = {
    "Value", "PathDecision", "Outcome", "TableStrength", "WeightClass",
    "BoxWeight", "BoxDensity", "BoxVolume", "TableWeight",
    "MeasureDensity", "DensimeterError", "MeasuredDensity",
}


def test_graph_nodes_and_kinds(graph):
    assert set(graph.nodes) == EXPECTED_NODES
    kinds = {nid: n.kind for nid, n in graph.nodes.items()}
    assert kinds["Value"] == "utility"
    assert kinds["PathDecision"] == "decision"
    assert kinds["MeasureDensity"] == "decision"
    assert kinds["TableStrength"] == "chance"
    assert kinds["BoxDensity"] == "chance"
    assert kinds["DensimeterError"] == "chance"
    assert kinds["WeightClass"] == "deterministic"
    assert kinds["BoxWeight"] == "deterministic"
    assert kinds["MeasuredDensity"] == "deterministic"


def test_graph_edges(graph):
    assert ("TableStrength", "Outcome") in graph.edges
    assert ("WeightClass", "Outcome") in graph.edges
    assert ("BoxDensity", "BoxWeight") in graph.edges
    assert ("BoxDensity", "MeasuredDensity") in graph.edges
    assert ("DensimeterError", "MeasuredDensity") in graph.edges
    assert graph.informational_edges == [
        ("MeasuredDensity", "PathDecision"),
    ]


def test_generalization_keeps_distributions(graph):
    dist = graph.node("BoxDensity").dist
    assert dist.marginal() == {
        Fraction(3, 10): Fraction(1, 2), Fraction(2, 5): Fraction(1, 2),
    }


def test_relaxation_drops_example_constants(graph):
    dropped = {str(v): t for v, t in graph.bindings.items()}
    assert any("Box-0" in str(t) for t in dropped.values())
    assert any(str(t) == "0.4" for t in dropped.values())


def test_subsumption_holds(graph):
    assert ex.check_subsumption(graph)


def test_context_retains_type_facts_once(graph):
    preds = [a.pred for a in graph.context]
    assert preds.count("IsA") == len(preds) == 2


def test_answer_why_decision(graph):
    names = [n.id for n in ex.answer_why(graph, "PathDecision")]
    assert names == ["TableStrength", "WeightClass", "MeasuredDensity",
                     "Value"]


def test_answer_why_chance(graph):
    names = [n.id for n in ex.answer_why(graph, "Outcome")]
    assert names == ["TableStrength", "WeightClass"]


def test_answer_why_unknown_event(graph):
    with pytest.raises(ex.UnknownEventError):
        ex.answer_why(graph, "Weather")


# ---- compilation to an influence diagram ----------------------------

def test_diagram_validates(diagram):
    assert dg.validate(diagram) == []


def test_diagram_node_kinds(diagram):
    assert diagram.node("TableStrength").kind == dg.CHANCE
    assert diagram.node("WeightClass").kind == dg.CHANCE
    assert diagram.node("PathDecision").kind == dg.DECISION
    assert diagram.value_node.id == "Value"
    assert diagram.decision_order == ("MeasureDensity", "PathDecision")


def test_outcome_cpt_includes_pass_through(diagram):
    node = diagram.node("Outcome")
    assert node.outcomes == ("Resists", "Breaks", "LongPath")
    cpt = diagram.cpts["Outcome"]
    row = cpt.rows[_key(cpt, {
        "TableStrength": "Fragile", "WeightClass": "Same",
        "PathDecision": "ShortPath",
    })]
    assert row == (Fraction(2, 5), Fraction(3, 5), Fraction(0))
    long_row = cpt.rows[_key(cpt, {
        "TableStrength": "Fragile", "WeightClass": "Same",
        "PathDecision": "LongPath",
    })]
    assert long_row == (Fraction(0), Fraction(0), Fraction(1))


def _key(cpt, assignment):
    return tuple(assignment[p] for p in cpt.parents)


def test_weight_class_cpt_is_deterministic(diagram):
    cpt = diagram.cpts["WeightClass"]
    node = diagram.node("WeightClass")
    for row in cpt.rows.values():
        assert sorted(row, reverse=True)[0] == 1
    light = cpt.rows[_key(cpt, {
        "BoxWeight": Fraction(3), "TableWeight": Fraction(4),
    })]
    assert dict(zip(node.outcomes, light))["Lighter"] == 1


def test_measured_reading_is_sum_of_value_and_error(diagram):
    cpt = diagram.cpts["MeasuredDensity"]
    node = diagram.node("MeasuredDensity")
    row = cpt.rows[_key(cpt, {
        "MeasureDensity": "Measure", "BoxDensity": Fraction(3, 10),
        "DensimeterError": Fraction(1, 10),
    })]
    assert dict(zip(node.outcomes, row))[Fraction(2, 5)] == 1
    no_row = cpt.rows[_key(cpt, {
        "MeasureDensity": "NoMeasure", "BoxDensity": Fraction(3, 10),
        "DensimeterError": Fraction(1, 10),
    })]
    assert dict(zip(node.outcomes, no_row))["NoReading"] == 1


def test_informational_arc_and_no_forgetting(diagram):
    assert diagram.has_arc("MeasuredDensity", "PathDecision")
    assert diagram.has_arc("MeasureDensity", "PathDecision")
    assert diagram.arc_kind(
        dg.Arc("MeasuredDensity", "PathDecision")
    ) == "informational"


def test_hypothesis_and_measurement_registration(diagram):
    hyp = diagram.hypothesis
    assert hyp.node == "TableStrength"
    assert hyp.favored == "Fragile" and hyp.alternative == "Sturdy"
    m = diagram.measurements[0]
    assert (m.instrument, m.variable) == ("Densimeter", "BoxDensity")
    assert (m.decision, m.error, m.measured) == (
        "MeasureDensity", "DensimeterError", "MeasuredDensity",
    )


def test_utility_table_covers_all_cells(diagram):
    table = diagram.utility
    assert set(table.parents) == {"PathDecision", "Outcome"}
    cell = {p: None for p in table.parents}
    cell.update({"PathDecision": "ShortPath", "Outcome": "Breaks"})
    assert table.cells[tuple(cell[p] for p in table.parents)] == (
        Fraction(-100)
    )
    cell.update({"PathDecision": "LongPath", "Outcome": "LongPath"})
    assert table.cells[tuple(cell[p] for p in table.parents)] == Fraction(10)


def test_joint_probability_of_survival(diagram):
    # under never-measure-and-stack, survival carries 18/25 of the mass
    actions = {"MeasureDensity": "NoMeasure", "PathDecision": "ShortPath"}
    marg = dg.conditional(diagram, ["Outcome"], {}, actions)
    assert marg[("Resists",)] == Fraction(18, 25)

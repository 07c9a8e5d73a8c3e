import itertools
from fractions import Fraction

import pytest

from planlearn import diagram as dg

F = Fraction


def _chain(rows_b=None):
    """A -> B with optional extra structure, all binary chance."""
    nodes = {
        "A": dg.Node("A", dg.CHANCE, ("a0", "a1")),
        "B": dg.Node("B", dg.CHANCE, ("b0", "b1")),
        "V": dg.Node("V", dg.VALUE, ()),
    }
    arcs = [dg.Arc("A", "B"), dg.Arc("B", "V")]
    cpts = {
        "A": dg.Cpt(parents=(), rows={(): (F(1, 4), F(3, 4))}),
        "B": dg.Cpt(parents=("A",), rows=rows_b or {
            ("a0",): (F(1, 2), F(1, 2)),
            ("a1",): (F(1, 10), F(9, 10)),
        }),
    }
    utility = dg.UtilityTable(parents=("B",),
                              cells={("b0",): F(0), ("b1",): F(5)})
    return dg.InfluenceDiagram(nodes=nodes, arcs=arcs, cpts=cpts,
                               utility=utility, decision_order=())


def test_validate_accepts_chain():
    assert dg.validate(_chain()) == []


def test_validate_catches_missing_row():
    broken = _chain(rows_b={("a0",): (F(1, 2), F(1, 2))})
    diags = dg.validate(broken)
    assert any("B" in x for x in diags)
    with pytest.raises(dg.DiagramError):
        dg.check(broken)


def test_joint_distribution_sums_to_one():
    joint = dg.joint_distribution(_chain(), {})
    assert sum(joint.values(), F(0)) == 1
    assert len(joint) == 4


def test_expected_utility_exact():
    d = _chain()
    # P(b1) = 1/4 * 1/2 + 3/4 * 9/10 = 1/8 + 27/40 = 4/5
    assert dg.expected_utility(d, {}) == F(4)


def test_conditional_and_zero_evidence():
    d = _chain()
    post = dg.conditional(d, ["A"], {"B": "b0"}, {})
    assert post[("a0",)] == F(1, 8) / F(1, 5)
    impossible = _chain(rows_b={
        ("a0",): (F(1), F(0)), ("a1",): (F(1), F(0)),
    })
    assert dg.conditional(impossible, ["A"], {"B": "b1"}, {}) is None


def test_reverse_arc_bayes_rows():
    d = _chain()
    flipped = dg.reverse_arc(d, "A", "B")
    assert dg.validate(flipped) == []
    assert flipped.has_arc("B", "A") and not flipped.has_arc("A", "B")
    # P(B) must now live on B's prior row: P(b0) = 1/5
    assert flipped.cpts["B"].rows[()] == (F(1, 5), F(4, 5))
    assert dg.joint_distribution(flipped, {}) == pytest.approx(
        dg.joint_distribution(d, {})
    ) or dg.joint_distribution(flipped, {}) == dg.joint_distribution(d, {})


def test_reverse_arc_rejects_second_path():
    nodes = {
        "A": dg.Node("A", dg.CHANCE, ("a0", "a1")),
        "C": dg.Node("C", dg.CHANCE, ("c0", "c1")),
        "B": dg.Node("B", dg.CHANCE, ("b0", "b1")),
        "V": dg.Node("V", dg.VALUE, ()),
    }
    arcs = [dg.Arc("A", "C"), dg.Arc("A", "B"), dg.Arc("C", "B"),
            dg.Arc("B", "V")]
    half = {(): (F(1, 2), F(1, 2))}
    rows_c = {("a0",): (F(1, 2), F(1, 2)), ("a1",): (F(1, 3), F(2, 3))}
    rows_b = {}
    for combo in itertools.product(("a0", "a1"), ("c0", "c1")):
        rows_b[combo] = (F(1, 2), F(1, 2))
    d = dg.InfluenceDiagram(
        nodes=nodes, arcs=arcs,
        cpts={
            "A": dg.Cpt((), half),
            "C": dg.Cpt(("A",), rows_c),
            "B": dg.Cpt(("A", "C"), rows_b),
        },
        utility=dg.UtilityTable(("B",), {("b0",): F(0), ("b1",): F(1)}),
        decision_order=(),
    )
    with pytest.raises(dg.ArcReversalError):
        dg.reverse_arc(d, "A", "B")


def test_reverse_arc_rejects_non_chance(diagram):
    with pytest.raises(dg.ArcReversalError):
        dg.reverse_arc(diagram, "MeasuredDensity", "PathDecision")


def test_with_prior_swaps_root_distribution(diagram):
    shifted = dg.with_prior(diagram, "TableStrength", {
        "Fragile": F(1, 4), "Sturdy": F(3, 4),
    })
    assert shifted.cpts["TableStrength"].rows[()] == (F(1, 4), F(3, 4))
    with pytest.raises(dg.DiagramError):
        dg.with_prior(diagram, "WeightClass", {"Lighter": F(1), "Same": F(0)})
    with pytest.raises(dg.DiagramError):
        dg.with_prior(diagram, "TableStrength", {
            "Fragile": F(1, 4), "Sturdy": F(1, 2),
        })


def test_observe_everywhere_adds_informational_arcs(diagram):
    informed = dg.observe_everywhere(diagram, "TableStrength")
    for dec in informed.decision_order:
        assert informed.has_arc("TableStrength", dec)
    assert dg.validate(informed) == []


def test_observe_everywhere_rejects_cycles(diagram):
    with pytest.raises(dg.DiagramError):
        dg.observe_everywhere(diagram, "Outcome")


def test_force_decision_restricts_actions(diagram):
    forced = dg.force_decision(diagram, "MeasureDensity", "NoMeasure")
    assert forced.node("MeasureDensity").outcomes == ("NoMeasure",)
    assert dg.validate(forced) == []
    with pytest.raises(dg.DiagramError):
        dg.force_decision(diagram, "MeasureDensity", "Sometimes")


def test_drop_measurement_removes_triple(diagram):
    slim = dg.drop_measurement(diagram, "BoxDensity")
    for nid in ("MeasureDensity", "DensimeterError", "MeasuredDensity"):
        assert nid not in slim.nodes
    assert slim.decision_order == ("PathDecision",)
    assert slim.measurements == ()
    assert dg.validate(slim) == []
    assert dg.drop_measurement(diagram, "Densimeter").nodes.keys() == (
        slim.nodes.keys()
    )


def test_measurement_cost_folds_into_utility(diagram):
    priced = dg.with_measurement_cost(diagram, "Densimeter", F(2))
    assert priced.measurements[0].cost == F(2)
    assert "MeasureDensity" in priced.utility.parents
    free = dg.with_measurement_cost(diagram, "Densimeter", 0)
    assert free.utility.parents == diagram.utility.parents


def test_scale_utility_requires_positive_slope(diagram):
    scaled = dg.scale_utility(diagram, F(2), F(-3))
    key = next(iter(diagram.utility.cells))
    assert scaled.utility.cells[key] == 2 * diagram.utility.cells[key] - 3
    with pytest.raises(dg.DiagramError):
        dg.scale_utility(diagram, F(0), F(1))
    with pytest.raises(dg.DiagramError):
        dg.scale_utility(diagram, F(-1), F(0))


def test_enumeration_bound_guard():
    with pytest.raises(dg.StateSpaceError):
        dg.joint_distribution(_chain(), {}, bound=2)


def test_topo_order_is_stable_and_respects_arcs(diagram):
    order = diagram.topo_order()
    assert order == diagram.topo_order()
    pos = {nid: i for i, nid in enumerate(order)}
    for arc in diagram.arcs:
        assert pos[arc.src] < pos[arc.dst]


def test_conditional_independence_queries(diagram, solved):
    _, policy = solved
    assert dg.is_cond_independent(
        diagram, "TableStrength", "MeasuredDensity", [], policy.actions
    )
    assert not dg.is_cond_independent(
        diagram, "TableStrength", "Outcome", [], policy.actions
    )


def test_info_key_sorts_parents():
    key = dg.info_key("D", {"b": 1, "a": 2}, ["b", "a"])
    assert key == ("D", (("a", 2), ("b", 1)))


def test_to_dot_shapes(diagram):
    dot = dg.to_dot(diagram)
    assert "ellipse" in dot and "box" in dot and "diamond" in dot
    assert "dashed" in dot
    assert dot.strip().startswith("digraph")

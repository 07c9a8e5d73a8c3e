from fractions import Fraction

import pytest

from planlearn import diagram as dg
from planlearn import policy as pl

F = Fraction


def test_tree_root_is_first_decision(tree):
    assert isinstance(tree.root, pl.DecisionTreeNode)
    assert tree.root.node_id == "MeasureDensity"
    assert [a for a, _ in tree.root.actions] == ["NoMeasure", "Measure"]


def test_measure_branch_reveals_reading_before_choice(tree):
    measure = pl.subtree(tree, "Measure").root
    assert isinstance(measure, pl.ChanceTreeNode)
    assert measure.node_id == "MeasuredDensity"
    readings = [b.outcome for b in measure.branches]
    assert readings == [F(1, 5), F(3, 10), F(2, 5), F(1, 2)]
    for b in measure.branches:
        assert isinstance(b.child, pl.DecisionTreeNode)
        assert b.child.node_id == "PathDecision"


def test_no_measure_branch_counts(tree):
    sub = pl.subtree(tree, "NoMeasure")
    assert pl.count_terminals(sub) == 9
    assert pl.count_zero_branches(sub) == 2
    assert pl.count_positive_terminals(sub) == 7


def test_full_tree_counts(tree, solved):
    assert pl.count_terminals(tree) == 45
    _, policy = solved
    assert pl.count_reachable_positive_terminals(tree, policy) == 15


def test_rollback_headline_values(tree, solved):
    eu, policy = solved
    assert eu == F(143, 3)
    assert policy.attained_eu == F(143, 3)
    no_measure_eu, _ = pl.rollback(pl.subtree(tree, "NoMeasure"))
    assert no_measure_eu == F(44)
    measure_eu, _ = pl.rollback(pl.subtree(tree, "Measure"))
    assert measure_eu == F(143, 3)


def test_optimal_policy_actions(solved):
    _, policy = solved
    assert policy.action("MeasureDensity", ()) == "Measure"
    by_reading = {
        info[1][1]: action
        for (dec, info), action in policy.actions.items()
        if dec == "PathDecision" and info[0][1] == "Measure"
    }
    assert by_reading == {
        F(1, 5): "ShortPath", F(3, 10): "ShortPath",
        F(2, 5): "ShortPath", F(1, 2): "LongPath",
    }
    assert policy.tie_breaks == ()


def test_terminal_probabilities_sum_along_policy(tree, solved):
    _, policy = solved

    def mass(node, taken):
        if isinstance(node, pl.Terminal):
            return node.probability if taken else F(0)
        if isinstance(node, pl.ChanceTreeNode):
            return sum(mass(b.child, taken) for b in node.branches)
        chosen = policy.action(node.node_id, node.info_state)
        return sum(mass(child, taken and a == chosen)
                   for a, child in node.actions)

    assert mass(tree.root, True) == 1


def test_evpi_nonchance_rejected(diagram):
    with pytest.raises(dg.DiagramError):
        pl.evpi(diagram, "PathDecision")


def test_evsi_by_instrument_or_variable(diagram):
    assert pl.evsi(diagram, "Densimeter") == F(11, 3)
    assert pl.evsi(diagram, "BoxDensity") == F(11, 3)
    assert pl.evsi(diagram, diagram.measurements[0]) == F(11, 3)
    with pytest.raises(dg.DiagramError):
        pl.evsi(diagram, "Barometer")


def test_evsi_nets_out_cost(diagram):
    assert pl.evsi(diagram, "Densimeter", F(2)) == F(5, 3)
    assert pl.evsi(diagram, "Densimeter", F(4)) == F(-1, 3)


def test_costly_reading_breaks_tie_toward_not_measuring(diagram):
    priced = dg.with_measurement_cost(diagram, "Densimeter", F(11, 3))
    eu, policy = pl.solve(priced)
    assert eu == F(44)
    assert policy.action("MeasureDensity", ()) == "NoMeasure"
    assert ("MeasureDensity", ()) in policy.tie_breaks


def test_perfect_instrument_matches_clairvoyance(diagram):
    sharp = dg.with_prior(diagram, "DensimeterError", {
        F(-1, 10): F(0), F(0): F(1), F(1, 10): F(0),
    })
    eu, _ = pl.solve(sharp)
    assert eu == F(55)
    base = dg.drop_measurement(diagram, "BoxDensity")
    assert eu - pl.solve(base)[0] == pl.evpi(base, "BoxDensity") == F(11)


def test_rollback_accepts_bare_nodes():
    leaf = pl.Terminal(utility=F(7), probability=F(1), assignment=())
    eu, policy = pl.rollback(leaf)
    assert eu == F(7) and policy.actions == {}


def test_subtree_demands_decision_root(tree):
    measure = pl.subtree(tree, "Measure")
    with pytest.raises(dg.DiagramError):
        pl.subtree(measure, "ShortPath")
    with pytest.raises(dg.DiagramError):
        pl.subtree(tree, "Sometimes")


def test_format_helpers(tree, solved):
    _, policy = solved
    text = pl.format_tree(tree)
    assert "(MeasuredDensity)" in text and "* U=" in text
    ptext = pl.format_policy(policy)
    assert "MeasureDensity[-] -> Measure" in ptext

import json
from fractions import Fraction

import pytest

from planlearn.scenario import (
    ScenarioError,
    outcome_str,
    parse_scenario,
    print_scenario,
    save_scenario,
    validate_scenario,
)
from conftest import FIXTURE


@pytest.fixture()
def raw():
    with open(FIXTURE) as fh:
        return json.load(fh)


def test_fixture_parses_clean(scenario):
    assert scenario.name == "robot-choice-of-path"
    assert len(scenario.clauses) == 4
    assert {pf.name for pf in scenario.prob_facts} == {
        "BoxDensity", "BoxVolume", "TableWeight", "TableStrength", "Support",
    }
    assert [d.name for d in scenario.problem.decisions] == [
        "MeasureDensity", "PathDecision",
    ]


def test_probabilities_are_exact_fractions(scenario):
    density = scenario.prob_fact("BoxDensity")
    assert density.outcomes == (Fraction(3, 10), Fraction(2, 5))
    assert density.dist == (Fraction(1, 2), Fraction(1, 2))


def test_error_distribution_renormalized_within_band(scenario):
    m = scenario.measurements[0]
    assert m.error_dist == (Fraction(1, 3),) * 3
    assert any("Densimeter" in where for where in scenario.normalized)


def test_row_sums_outside_band_rejected(raw):
    for pf in raw["theory"]["prob_facts"]:
        if pf["name"] == "BoxDensity":
            pf["probs"] = [0.5, 0.3]
    with pytest.raises(ScenarioError, match="band"):
        parse_scenario(raw)


def test_conditional_rows_cover_given_combinations(scenario):
    support = scenario.prob_fact("Support")
    assert support.is_conditional
    assert support.given == ("TableStrength", "WeightClass")
    rows = support.row_map()
    assert rows[("Fragile", "Same")] == (Fraction(2, 5), Fraction(3, 5))
    assert rows[("Sturdy", "Lighter")] == (Fraction(1), Fraction(0))


def test_utility_clauses_come_first(scenario):
    clauses = scenario.all_clauses()
    assert clauses[0].clause_id.startswith("utility:")
    assert clauses[0].head.pred == "StageUtility"
    assert len(clauses) == len(scenario.clauses) + len(
        scenario.problem.utilities
    )


def test_measurement_lookup_by_variable_and_instrument(scenario):
    by_var = scenario.measurement_for("BoxDensity")
    by_inst = scenario.measurement_for("Densimeter")
    assert by_var is by_inst
    assert by_var.measured_node == "MeasuredDensity"
    assert by_var.error_node == "DensimeterError"
    with pytest.raises(KeyError):
        scenario.measurement_for("Thermometer")


def test_example_atoms_must_be_ground(raw):
    raw["training_example"]["atoms"].append("(Density ?b 0.4 S0)")
    with pytest.raises(ScenarioError, match="ground"):
        parse_scenario(raw)


def test_duplicate_example_atoms_rejected(raw):
    raw["training_example"]["atoms"].append(
        raw["training_example"]["atoms"][0]
    )
    with pytest.raises(ScenarioError):
        parse_scenario(raw)


def test_validation_flags_unknown_utility_symbol(raw):
    raw["decision_problem"]["utilities"].append(
        {"when": ["Teleport"], "value": 5}
    )
    diags = validate_scenario(parse_scenario(raw))
    assert any("Teleport" in d for d in diags)


def test_validation_flags_bad_information_order(raw):
    raw["decision_problem"]["information_order"] = ["PathDecision"]
    diags = validate_scenario(parse_scenario(raw))
    assert any("information_order" in d for d in diags)


def test_validation_flags_horizon(raw):
    raw["decision_problem"]["horizon"] = 0
    diags = validate_scenario(parse_scenario(raw))
    assert any("horizon" in d for d in diags)


def test_print_parse_round_trip(scenario, tmp_path):
    path = tmp_path / "round.json"
    save_scenario(scenario, path)
    again = parse_scenario(json.loads(path.read_text()))
    assert again.name == scenario.name
    assert again.prob_fact("Support").rows == scenario.prob_fact(
        "Support"
    ).rows
    assert again.problem == scenario.problem
    assert again.example == scenario.example
    assert [c.head for c in again.clauses] == [
        c.head for c in scenario.clauses
    ]


def test_print_scenario_is_plain_json(scenario):
    blob = print_scenario(scenario)
    json.dumps(blob)  # must serialize without custom encoders
    assert blob["name"] == scenario.name


def test_outcome_str_formats():
    assert outcome_str(Fraction(2, 5)) == "0.4"
    assert outcome_str("Resists") == "Resists"

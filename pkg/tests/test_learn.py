import math
from fractions import Fraction

import pytest

from planlearn import diagram as dg
from planlearn import learn
from planlearn import policy as pl

F = Fraction


def test_belief_state_round_trips():
    b = learn.BeliefState.from_odds("F", "S", F(4))
    assert b.probability == pytest.approx(0.8)
    assert b.probability_alternative == pytest.approx(0.2)
    assert b.odds == pytest.approx(4.0)
    again = learn.BeliefState.from_probability("F", "S", 0.8)
    assert again.log_odds == pytest.approx(b.log_odds)


def test_update_multiplies_odds_and_counts():
    b = learn.BeliefState.from_odds("F", "S", F(4))
    b1 = learn.update(b, F(19, 21))
    assert b1.odds == pytest.approx(4 * 19 / 21)
    assert b1.update_count == 1
    b2 = learn.update(b1, F(3, 2))
    assert b2.update_count == 2
    assert b2.odds == pytest.approx(4 * 19 / 21 * 1.5)


def test_update_rejects_nonpositive_ratio():
    b = learn.BeliefState.from_odds("F", "S", F(4))
    with pytest.raises(learn.LikelihoodError):
        learn.update(b, 0)
    with pytest.raises(learn.LikelihoodError):
        learn.update(b, -2)


def test_posterior_odds_exact_values():
    assert learn.posterior_odds_exact(F(4), F(19, 21)) == F(76, 21)
    assert learn.posterior_odds_exact(F(4), F(3, 2)) == F(6)
    with pytest.raises(learn.LikelihoodError):
        learn.posterior_odds_exact(F(4), F(0))


def test_aggregate_ratio_depends_on_the_policy(diagram, solved):
    _, policy = solved
    assert learn.likelihood_ratio(diagram, policy, "Resists") == F(19, 21)
    # a robot that never measures stacks every box, so survival speaks
    # about both densities at once
    blind = dg.force_decision(diagram, "MeasureDensity", "NoMeasure")
    _, blind_policy = pl.solve(blind)
    assert learn.likelihood_ratio(blind, blind_policy, "Resists") == F(7, 8)


def test_exact_ratios_per_information_state(diagram, solved):
    _, policy = solved
    cases = {
        F(1, 5): F(1),
        F(3, 10): F(7, 8),
        F(2, 5): F(7, 8),
    }
    for md, expected in cases.items():
        got = learn.likelihood_ratio(
            diagram, policy, "Resists", mode="exact",
            info_state={"MeasuredDensity": md},
        )
        assert got == expected


def test_exact_mode_requires_information(diagram, solved):
    _, policy = solved
    with pytest.raises(learn.LikelihoodError):
        learn.likelihood_ratio(diagram, policy, "Resists", mode="exact")


def test_impossible_observation_rejected(diagram, solved):
    _, policy = solved
    with pytest.raises(learn.LikelihoodError):
        learn.likelihood_ratio(
            diagram, policy, "Resists", mode="exact",
            info_state={"MeasuredDensity": F(1, 2)},
        )


def test_unknown_observation_rejected(diagram, solved):
    _, policy = solved
    with pytest.raises(learn.LikelihoodError):
        learn.likelihood_ratio(diagram, policy, "Shatters")


def test_resolve_actions_follows_policy(diagram, solved):
    _, policy = solved
    taken = learn.resolve_actions(
        diagram, policy, {"MeasuredDensity": F(1, 2)}
    )
    assert taken == {"MeasureDensity": "Measure",
                     "PathDecision": "LongPath"}


def test_average_ratio_drifts_toward_truth(diagram, solved):
    _, policy = solved
    avg_s = learn.average_likelihood_ratio(diagram, policy, "Sturdy")
    avg_f = learn.average_likelihood_ratio(diagram, policy, "Fragile")
    # weights: P(outcome | class, box actually stacked)
    expect_s = math.exp(0.84 * math.log(19 / 21) + 0.16 * math.log(1.5))
    expect_f = math.exp(0.76 * math.log(19 / 21) + 0.24 * math.log(1.5))
    assert avg_s == pytest.approx(expect_s, abs=1e-12)
    assert avg_f == pytest.approx(expect_f, abs=1e-12)
    assert avg_s < 1 < avg_f


def test_predict_switch_count():
    b = learn.BeliefState.from_odds("F", "S", F(4))
    steps = learn.predict_switch(b, 0.9812, F(1, 3))
    assert steps == pytest.approx(math.log(12) / -math.log(0.9812))
    assert learn.predict_switch(b, 0.5, F(4)) == 0.0


def test_predict_switch_refuses_wrong_direction():
    b = learn.BeliefState.from_odds("F", "S", F(4))
    with pytest.raises(learn.NeverReachesError):
        learn.predict_switch(b, 1.0, F(1, 3))
    with pytest.raises(learn.NeverReachesError):
        learn.predict_switch(b, 1.1, F(1, 3))


def test_hypothesis_action_values_at_borderline(diagram):
    ctx = {"MeasureDensity": "Measure", "MeasuredDensity": F(1, 2)}
    values = learn.hypothesis_action_values(diagram, "PathDecision", ctx)
    assert values[("ShortPath", "Fragile")] == F(-20)
    assert values[("ShortPath", "Sturdy")] == F(20)
    assert values[("LongPath", "Fragile")] == F(10)
    assert values[("LongPath", "Sturdy")] == F(10)


def test_switch_threshold_at_borderline(diagram):
    ctx = {"MeasureDensity": "Measure", "MeasuredDensity": F(1, 2)}
    assert learn.switch_threshold(diagram, "PathDecision", ctx) == F(1, 4)


def test_no_threshold_when_one_action_dominates(diagram):
    for md in (F(1, 5), F(3, 10), F(2, 5)):
        ctx = {"MeasureDensity": "Measure", "MeasuredDensity": md}
        with pytest.raises(learn.NoThresholdError):
            learn.switch_threshold(diagram, "PathDecision", ctx)


def test_observation_node_lookup(diagram):
    assert learn.observation_node(diagram, "Resists") == "Outcome"
    with pytest.raises(learn.LikelihoodError):
        learn.observation_node(diagram, "Shatters")

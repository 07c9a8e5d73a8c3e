import csv
import random
from fractions import Fraction

import pytest

from planlearn import sim

F = Fraction


@pytest.fixture(scope="module")
def simulator(scenario):
    return sim.simulator_for(scenario)


def test_regions_split_at_quarter(simulator):
    assert simulator.boundaries == [F(1, 4)]
    low, high = simulator.regions
    assert low.policy.actions[("MeasureDensity", ())] == "NoMeasure"
    assert high.policy.actions[("MeasureDensity", ())] == "Measure"


def test_boundary_belongs_to_lower_region(simulator):
    assert simulator.region_for(0.25).index == 0
    assert simulator.region_for(0.2500001).index == 1
    assert simulator.region_for(0.8).index == 1


def test_initial_belief_matches_prior(simulator):
    b = simulator.initial_belief()
    assert b.favored == "Fragile"
    assert b.probability == pytest.approx(0.8)


def test_simulator_cache_reuses_instance(scenario):
    assert sim.simulator_for(scenario) is sim.simulator_for(scenario)


def test_runs_are_deterministic(scenario):
    a = sim.run(scenario, seed=5, n_stages=60, true_class="Sturdy")
    b = sim.run(scenario, seed=5, n_stages=60, true_class="Sturdy")
    c = sim.run(scenario, seed=6, n_stages=60, true_class="Sturdy")
    assert a == b
    assert a[0] != c[0]


def test_step_advances_world_and_belief(scenario, simulator):
    world = sim.WorldState(true_class="Sturdy", rng=random.Random(3))
    belief = simulator.initial_belief()
    record, after, world = sim.step(world, belief, scenario)
    assert world.stage == 1 and record.stage == 1
    assert record.policy_id == 1
    if record.action == "ShortPath":
        assert after.update_count == 1
        assert record.likelihood_ratio in (19 / 21, 1.5)
    else:
        assert after is belief


def test_long_path_stages_leave_belief_untouched(scenario):
    trace, _ = sim.run(scenario, seed=2, n_stages=300, true_class="Sturdy",
                       freeze_policy=True)
    previous = None
    seen_long = 0
    for rec in trace:
        if rec.action == "LongPath":
            seen_long += 1
            assert rec.likelihood_ratio == 1.0
            assert rec.utility == F(10)
            if previous is not None:
                assert rec.posterior_fragile == previous
        previous = rec.posterior_fragile
    assert seen_long > 0


def test_frozen_policy_still_reports_switch(scenario):
    trace, summary = sim.run(scenario, seed=11, n_stages=1000,
                             true_class="Sturdy", freeze_policy=True)
    assert summary.switch_stage is not None
    # frozen: the acting policy id never changes even after the switch
    assert {rec.policy_id for rec in trace} == {1}
    crossing = trace[summary.switch_stage - 1]
    assert crossing.posterior_fragile <= 0.25
    assert trace[summary.switch_stage - 2].posterior_fragile > 0.25


def test_adaptive_run_changes_policy_at_switch(scenario):
    trace, summary = sim.run(scenario, seed=11, n_stages=1000,
                             true_class="Sturdy")
    assert summary.switch_stage is not None
    ids = [rec.policy_id for rec in trace]
    assert set(ids[: summary.switch_stage]) == {1}
    assert 0 in set(ids[summary.switch_stage:])
    # once convinced the table is sturdy, the robot stops paying for
    # readings and stacks every box
    for rec in trace:
        if rec.policy_id == 0:
            assert rec.measured_density is None
            assert rec.action == "ShortPath"
            assert rec.likelihood_ratio in (7 / 8, 1.5)


def test_summary_aggregates(scenario):
    trace, summary = sim.run(scenario, seed=9, n_stages=100,
                             true_class="Sturdy", freeze_policy=True)
    assert summary.total_utility == sum(
        (rec.utility for rec in trace), F(0)
    )
    assert summary.stacked_count == sum(
        1 for rec in trace if rec.action == "ShortPath"
    )
    assert summary.final_probability == trace[-1].posterior_fragile


def test_sampled_true_class_follows_prior(scenario):
    picks = [sim.run(scenario, seed=s, n_stages=0)[1].true_class
             for s in range(200)]
    fraction_fragile = picks.count("Fragile") / len(picks)
    assert 0.7 < fraction_fragile < 0.9


def test_replicate_orders_and_pools(scenario):
    stats = sim.replicate(scenario, seeds=[3, 1, 2], n_stages=40,
                          true_class="Sturdy")
    assert [s.seed for s in stats.summaries] == [3, 1, 2]
    assert stats.pooled_stacked_count == sum(
        s.stacked_count for s in stats.summaries
    )
    with pytest.raises(ValueError):
        sim.replicate(scenario, seeds=[], n_stages=10)


def test_exact_mode_uses_reading_specific_ratios(scenario):
    trace, _ = sim.run(scenario, seed=4, n_stages=80, true_class="Sturdy",
                       freeze_policy=True, mode="exact")
    ratios = {round(rec.likelihood_ratio, 6) for rec in trace
              if rec.action == "ShortPath"}
    assert ratios <= {1.0, 0.875, 1.5}
    assert 0.875 in ratios


def test_trace_csv_header_and_rows(scenario, tmp_path):
    trace, _ = sim.run(scenario, seed=1, n_stages=25, true_class="Sturdy")
    path = tmp_path / "trace.csv"
    sim.write_trace(trace, str(path))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == sim.TRACE_HEADER.split(",")
    assert len(rows) == 26
    assert rows[1][0] == "1"
    by_col = dict(zip(rows[0], rows[1]))
    assert by_col["action"] in ("ShortPath", "LongPath")
    assert by_col["policy_id"] == "1"


def test_reading_counts_tally_every_reading(scenario, simulator):
    trace, _ = sim.run(scenario, seed=2, n_stages=60, true_class="Sturdy",
                       freeze_policy=True)
    counts = simulator.reading_counts(trace)
    assert set(counts) == {F(1, 5), F(3, 10), F(2, 5), F(1, 2)}
    assert sum(counts.values()) == 60          # frozen policy always measures
    assert counts == {
        o: sum(1 for r in trace if r.measured_density == o) for o in counts
    }


def test_estimated_prior_recovers_density_split(scenario, simulator):
    trace, _ = sim.run(scenario, seed=3, n_stages=400, true_class="Sturdy",
                       freeze_policy=True)
    est = simulator.estimate_measured_prior(trace)
    assert set(est) == {F(3, 10), F(2, 5)}
    assert sum(est.values()) == 1
    assert 0.4 <= float(est[F(2, 5)]) <= 0.6   # true split is 1/2 : 1/2


def test_estimated_prior_needs_readings(simulator):
    with pytest.raises(ValueError):
        simulator.estimate_measured_prior([])


def test_invalid_inputs_rejected(scenario):
    with pytest.raises(ValueError):
        sim.run(scenario, seed=0, n_stages=-1)
    with pytest.raises(ValueError):
        sim.simulator_for(scenario, mode="fuzzy")

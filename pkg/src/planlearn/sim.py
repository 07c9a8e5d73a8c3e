"""Sequential simulation: decide, observe, update.

Each stage forward-samples the influence diagram with the latent hypothesis
clamped to the world's true class, takes actions from the policy for the
current belief region, realizes a utility, and revises the belief by the
policy-conditional likelihood ratio of what was observed.

Policies are not re-solved every stage.  The prior-belief axis is cut into
regions at the thresholds where the optimal action map changes; a stage only
looks up its region.  Region boundaries belong to the lower region, matching
the solver's first-declared-action tie-break at the boundary itself.
"""

from __future__ import annotations

import bisect
import csv
import math
import random
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import diagram as dg
from . import learn
from . import policy as pl
from .diagram import InfluenceDiagram, Outcome
from .explain import default_goal, generalize, prove, to_influence_diagram
from .learn import BeliefState
from .scenario import Scenario

TRACE_HEADER = (
    "stage,measured_density,action,outcome,utility,"
    "posterior_fragile,likelihood_ratio,policy_id"
)

_REGION_PROBE_DEPTH = 8


@dataclass
class WorldState:
    true_class: Outcome
    rng: random.Random
    stage: int = 0


@dataclass(frozen=True)
class TraceRecord:
    stage: int
    measured_density: Optional[Outcome]
    action: Outcome
    outcome: Outcome
    utility: Fraction
    posterior_fragile: float
    likelihood_ratio: float
    policy_id: int


@dataclass(frozen=True)
class RunSummary:
    seed: int
    n_stages: int
    true_class: Outcome
    total_utility: Fraction
    switch_stage: Optional[int]
    final_log_odds: float
    final_probability: float
    mean_log_likelihood: Optional[float]   # per stacked (updated) stage
    stacked_count: int

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "n_stages": self.n_stages,
            "true_class": str(self.true_class),
            "total_utility": float(self.total_utility),
            "total_utility_rational": str(self.total_utility),
            "switch_stage": self.switch_stage,
            "final_log_odds": self.final_log_odds,
            "final_probability_favored": self.final_probability,
            "mean_log_likelihood": self.mean_log_likelihood,
            "stacked_count": self.stacked_count,
        }


@dataclass(frozen=True)
class ReplicationStats:
    summaries: Tuple[RunSummary, ...]
    mean_total_utility: float
    mean_switch_stage: Optional[float]
    median_switch_stage: Optional[float]
    switched_count: int
    pooled_mean_log_likelihood: Optional[float]
    pooled_stacked_count: int

    def to_json(self) -> dict:
        return {
            "replications": len(self.summaries),
            "mean_total_utility": self.mean_total_utility,
            "mean_switch_stage": self.mean_switch_stage,
            "median_switch_stage": self.median_switch_stage,
            "switched_count": self.switched_count,
            "pooled_mean_log_likelihood": self.pooled_mean_log_likelihood,
            "pooled_stacked_count": self.pooled_stacked_count,
            "summaries": [s.to_json() for s in self.summaries],
        }


@dataclass
class Region:
    index: int
    low: Fraction
    high: Fraction
    policy: pl.Policy


class Simulator:
    """Compiled artifacts for a scenario: the diagram, the belief-region
    policy table, and cached likelihood ratios."""

    def __init__(self, scenario: Scenario, mode: str = "aggregate"):
        if mode not in ("aggregate", "exact"):
            raise ValueError(f"unknown likelihood mode {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.diagram = to_influence_diagram(
            generalize(prove(default_goal(scenario), scenario), scenario),
            scenario,
        )
        if self.diagram.hypothesis is None:
            raise dg.DiagramError("scenario tracks no latent hypothesis")
        self.hypothesis = self.diagram.hypothesis
        hyp_cpt = self.diagram.cpts[self.hypothesis.node]
        prior = dict(zip(self.diagram.nodes[self.hypothesis.node].outcomes,
                         hyp_cpt.rows[()]))
        self.prior_favored: Fraction = prior[self.hypothesis.favored]
        self.regions, self.boundaries = _policy_regions(self.diagram)
        self._sample_rows: Dict[Tuple[str, Tuple[Outcome, ...]],
                                Tuple[Tuple[Outcome, ...], List[float]]] = {}
        self._ratio_cache: Dict[Tuple, Fraction] = {}
        self._order = [
            nid for nid in self.diagram.topo_order()
            if self.diagram.nodes[nid].kind != dg.VALUE
        ]
        self._decision_info = {
            nid: tuple(sorted(self.diagram.informational_parents(nid)))
            for nid in self.diagram.decision_ids()
        }
        self.obs_node = learn._observation_node_for_hypothesis(self.diagram)
        self.informative_combos = {
            tuple(c) for c in learn._informative_combos(
                self.diagram, self.obs_node
            )
        }
        self.gating = learn._gating_decisions(self.diagram, self.obs_node)
        self.measurement = (
            self.diagram.measurements[0] if self.diagram.measurements
            else None
        )

    # ---- belief regions ----------------------------------------------

    def region_for(self, p_favored: float) -> Region:
        idx = bisect.bisect_left(self.boundaries, p_favored)
        return self.regions[idx]

    def initial_belief(self) -> BeliefState:
        return BeliefState.from_probability(
            self.hypothesis.favored, self.hypothesis.alternative,
            self.prior_favored,
        )

    # ---- sampling ----------------------------------------------------

    def _row(self, nid: str, key: Tuple[Outcome, ...]
             ) -> Tuple[Tuple[Outcome, ...], List[float]]:
        cache_key = (nid, key)
        hit = self._sample_rows.get(cache_key)
        if hit is not None:
            return hit
        node = self.diagram.nodes[nid]
        row = self.diagram.cpts[nid].rows[key]
        cum: List[float] = []
        total = 0.0
        for p in row:
            total += float(p)
            cum.append(total)
        entry = (node.outcomes, cum)
        self._sample_rows[cache_key] = entry
        return entry

    def sample_stage(self, world: WorldState, policy: pl.Policy
                     ) -> Dict[str, Outcome]:
        """One forward pass through the diagram: hypothesis clamped to the
        true class, decisions from the policy, chance nodes sampled."""
        d = self.diagram
        assignment: Dict[str, Outcome] = {}
        for nid in self._order:
            node = d.nodes[nid]
            if node.kind == dg.DECISION:
                key = (nid, tuple(
                    (p, assignment[p]) for p in self._decision_info[nid]
                ))
                try:
                    assignment[nid] = policy.actions[key]
                except KeyError:
                    raise dg.DiagramError(
                        f"policy has no action for {nid} at {key[1]}"
                    ) from None
                continue
            if nid == self.hypothesis.node:
                assignment[nid] = world.true_class
                continue
            cpt = d.cpts[nid]
            parent_key = tuple(assignment[p] for p in cpt.parents)
            outcomes, cum = self._row(nid, parent_key)
            r = world.rng.random()
            pick = bisect.bisect_left(cum, r)
            if pick >= len(outcomes):
                pick = len(outcomes) - 1
            assignment[nid] = outcomes[pick]
        return assignment

    # ---- likelihoods -------------------------------------------------

    def stage_likelihood(self, policy_id: int, policy: pl.Policy,
                         assignment: Dict[str, Outcome]) -> Optional[Fraction]:
        """The likelihood ratio the stage's observation carries, or None for
        an uninformative stage (belief left untouched)."""
        combo = tuple(assignment[g] for g in self.gating)
        if combo not in self.informative_combos:
            return None
        obs = assignment[self.obs_node]
        if self.mode == "aggregate":
            key = (policy_id, "aggregate", obs)
            if key not in self._ratio_cache:
                self._ratio_cache[key] = learn.likelihood_ratio(
                    self.diagram, policy, obs, mode="aggregate"
                )
            return self._ratio_cache[key]
        info = self._chance_info_state(assignment)
        key = (policy_id, "exact", obs, tuple(sorted(info.items(), key=str)))
        if key not in self._ratio_cache:
            self._ratio_cache[key] = learn.likelihood_ratio(
                self.diagram, policy, obs, mode="exact", info_state=info
            )
        return self._ratio_cache[key]

    def _chance_info_state(self, assignment: Dict[str, Outcome]
                           ) -> Dict[str, Outcome]:
        info: Dict[str, Outcome] = {}
        for dec in self.diagram.decision_order:
            for p in self.diagram.informational_parents(dec):
                if self.diagram.nodes[p].kind == dg.CHANCE:
                    info[p] = assignment[p]
        return info

    # ---- prior re-estimation from readings ---------------------------

    def reading_counts(self, trace: Sequence[TraceRecord]
                       ) -> Dict[Outcome, int]:
        """Tally the instrument readings recorded in a trace, zero-filled
        over every reading the instrument can produce."""
        if self.measurement is None:
            return {}
        node = self.diagram.nodes[self.measurement.measured]
        counts = {o: 0 for o in node.outcomes
                  if o != self.measurement.none_value}
        for rec in trace:
            if rec.measured_density is not None:
                counts[rec.measured_density] += 1
        return counts

    def estimate_measured_prior(self, trace: Sequence[TraceRecord]
                                ) -> Dict[Outcome, Fraction]:
        """Re-estimate the measured variable's two-outcome prior from the
        readings in a trace by matching means.

        With a mean-zero instrument error, the average reading estimates the
        variable's own mean, which pins down a binary split exactly.  The
        estimate is clamped to [0, 1] and returned as exact rationals.  This
        is a standalone helper: runs never rewrite the declared prior.
        """
        m = self.measurement
        if m is None:
            raise dg.DiagramError("scenario declares no instrument")
        vals: List[Tuple[Fraction, Outcome]] = []
        for o in self.diagram.nodes[m.variable].outcomes:
            try:
                vals.append((Fraction(o), o))
            except (TypeError, ValueError):
                raise dg.DiagramError(
                    f"{m.variable} outcomes are not numeric; cannot "
                    "mean-match"
                ) from None
        if len(vals) != 2:
            raise dg.DiagramError(
                f"{m.variable} has {len(vals)} outcomes; the mean-matching "
                "estimate needs exactly two"
            )
        err_outcomes = self.diagram.nodes[m.error].outcomes
        err_row = self.diagram.cpts[m.error].rows[()]
        err_mean = sum(
            (Fraction(o) * p for o, p in zip(err_outcomes, err_row)),
            Fraction(0),
        )
        if err_mean != 0:
            raise dg.DiagramError(
                "instrument error is biased; the mean-matching estimate "
                "would be off by the bias"
            )
        readings = [Fraction(rec.measured_density) for rec in trace
                    if rec.measured_density is not None]
        if not readings:
            raise ValueError("trace contains no readings")
        vals.sort()
        (lo, lo_out), (hi, hi_out) = vals
        mean = sum(readings, Fraction(0)) / len(readings)
        p_hi = (mean - lo) / (hi - lo)
        p_hi = min(max(p_hi, Fraction(0)), Fraction(1))
        return {lo_out: 1 - p_hi, hi_out: p_hi}


_SIM_CACHE: Dict[int, Tuple[Scenario, str, Simulator]] = {}


def simulator_for(s: Scenario, mode: str = "aggregate") -> Simulator:
    hit = _SIM_CACHE.get(id(s))
    if hit is not None and hit[0] is s and hit[1] == mode:
        return hit[2]
    sim = Simulator(s, mode=mode)
    _SIM_CACHE[id(s)] = (s, mode, sim)
    return sim


# ============================================================
# Region discovery
# ============================================================

def _policy_regions(d: InfluenceDiagram
                    ) -> Tuple[List[Region], List[Fraction]]:
    assert d.hypothesis is not None
    hyp = d.hypothesis
    tree = pl.compile_tree(d)
    contexts = _decision_contexts(tree)
    candidates = {Fraction(0), Fraction(1)}
    for dec_id, info_state in contexts:
        if len(d.nodes[dec_id].outcomes) != 2:
            continue
        try:
            t = learn.switch_threshold(d, dec_id, dict(info_state))
        except (learn.NoThresholdError, dg.DiagramError):
            continue
        if 0 < t < 1:
            candidates.add(t)
    cuts = sorted(candidates)
    cuts = _refine_cuts(d, hyp, cuts, _REGION_PROBE_DEPTH)
    regions: List[Region] = []
    for i in range(len(cuts) - 1):
        lo, hi = cuts[i], cuts[i + 1]
        probe = lo + (hi - lo) / 2
        pol = _solve_at(d, hyp, probe)
        regions.append(Region(index=i, low=lo, high=hi, policy=pol))
    boundaries = cuts[1:-1]
    return regions, boundaries


def _decision_contexts(tree: pl.DecisionTree
                       ) -> List[Tuple[str, pl.InfoState]]:
    out: List[Tuple[str, pl.InfoState]] = []

    def walk(node: pl.TreeNode) -> None:
        if isinstance(node, pl.Terminal):
            return
        if isinstance(node, pl.ChanceTreeNode):
            for b in node.branches:
                walk(b.child)
            return
        item = (node.node_id, node.info_state)
        if item not in out:
            out.append(item)
        for _, child in node.actions:
            walk(child)

    walk(tree.root)
    return out


def _solve_at(d: InfluenceDiagram, hyp: dg.HypothesisInfo,
              p_favored: Fraction) -> pl.Policy:
    prior = {hyp.favored: p_favored, hyp.alternative: 1 - p_favored}
    eu, pol = pl.solve(dg.with_prior(d, hyp.node, prior))
    return pol


def _refine_cuts(d: InfluenceDiagram, hyp: dg.HypothesisInfo,
                 cuts: List[Fraction], depth: int) -> List[Fraction]:
    """Between adjacent candidate thresholds every policy EU is linear in the
    prior, so differing probe policies pinpoint a missed boundary at the
    crossing of two lines."""
    out = [cuts[0]]
    for i in range(len(cuts) - 1):
        lo, hi = cuts[i], cuts[i + 1]
        out.extend(_region_boundaries(d, hyp, lo, hi, depth))
        out.append(hi)
    return sorted(set(out))


def _region_boundaries(d: InfluenceDiagram, hyp: dg.HypothesisInfo,
                       lo: Fraction, hi: Fraction,
                       depth: int) -> List[Fraction]:
    if depth <= 0:
        return []
    p1 = lo + (hi - lo) / 3
    p2 = lo + 2 * (hi - lo) / 3
    pol1 = _solve_at(d, hyp, p1)
    pol2 = _solve_at(d, hyp, p2)
    if pol1.actions == pol2.actions:
        return []
    # EU of each fixed action map is linear in the prior: two evaluations
    # give the line, the crossing gives the boundary
    def eu_of(pol: pl.Policy, p: Fraction) -> Fraction:
        prior = {hyp.favored: p, hyp.alternative: 1 - p}
        return dg.expected_utility(dg.with_prior(d, hyp.node, prior),
                                   pol.actions)

    a1, a2 = eu_of(pol1, p1), eu_of(pol1, p2)
    b1, b2 = eu_of(pol2, p1), eu_of(pol2, p2)
    da = a2 - a1
    db = b2 - b1
    if da == db:
        cross = None
    else:
        cross = p1 + (b1 - a1) * (p2 - p1) / (da - db)
    if cross is None or not (lo < cross < hi):
        mid = (p1 + p2) / 2
        return (_region_boundaries(d, hyp, lo, mid, depth - 1)
                + _region_boundaries(d, hyp, mid, hi, depth - 1))
    return (_region_boundaries(d, hyp, lo, cross, depth - 1)
            + [cross]
            + _region_boundaries(d, hyp, cross, hi, depth - 1))


# ============================================================
# Stepping
# ============================================================

def _step_with_policy(
    sim: Simulator, world: WorldState, b: BeliefState, region: Region
) -> Tuple[TraceRecord, BeliefState, WorldState]:
    assignment = sim.sample_stage(world, region.policy)
    world.stage += 1
    d = sim.diagram
    cell = tuple(assignment[p] for p in d.utility.parents)
    utility = d.utility.cells[cell]
    if sim.measurement is not None:
        reading = assignment[sim.measurement.measured]
        md = None if reading == sim.measurement.none_value else reading
    else:
        md = None
    ratio = sim.stage_likelihood(region.index, region.policy, assignment)
    if ratio is None:
        new_b = b
        applied = 1.0
    else:
        new_b = learn.update(b, ratio)
        applied = float(ratio)
    final_decision = d.decision_order[-1]
    record = TraceRecord(
        stage=world.stage,
        measured_density=md,
        action=assignment[final_decision],
        outcome=assignment[sim.obs_node],
        utility=utility,
        posterior_fragile=new_b.probability,
        likelihood_ratio=applied,
        policy_id=region.index,
    )
    return record, new_b, world


def step(world: WorldState, b: BeliefState, s: Scenario,
         mode: str = "aggregate"
         ) -> Tuple[TraceRecord, BeliefState, WorldState]:
    """One decide–observe–update stage under the belief's own region
    policy."""
    sim = simulator_for(s, mode)
    region = sim.region_for(b.probability)
    return _step_with_policy(sim, world, b, region)


def run(
    s: Scenario,
    seed: int,
    n_stages: int,
    mode: str = "aggregate",
    true_class: Optional[Outcome] = None,
    freeze_policy: bool = False,
) -> Tuple[List[TraceRecord], RunSummary]:
    """Simulate n_stages stages from the scenario's prior belief.

    With freeze_policy the acting policy stays the initial region's for the
    whole run (the switch stage is still detected from the belief); without
    it the policy follows the belief region."""
    if n_stages < 0:
        raise ValueError("n_stages must be >= 0")
    sim = simulator_for(s, mode)
    rng = random.Random(seed)
    if true_class is None:
        tc_outcomes, tc_cum = sim._row(sim.hypothesis.node, ())
        true = tc_outcomes[bisect.bisect_left(tc_cum, rng.random())]
    else:
        true = true_class
    world = WorldState(true_class=true, rng=rng)
    b = sim.initial_belief()
    start_region = sim.region_for(b.probability)
    frozen = start_region if freeze_policy else None

    trace: List[TraceRecord] = []
    total = Fraction(0)
    switch_stage: Optional[int] = None
    log_sum = 0.0
    stacked = 0
    for _ in range(n_stages):
        region = frozen if frozen is not None else sim.region_for(
            b.probability
        )
        record, b, world = _step_with_policy(sim, world, b, region)
        trace.append(record)
        total += record.utility
        if b.update_count > stacked:
            log_sum += math.log(record.likelihood_ratio)
            stacked = b.update_count
        if switch_stage is None and sim.region_for(
            b.probability
        ).index != start_region.index:
            switch_stage = record.stage
    summary = RunSummary(
        seed=seed,
        n_stages=n_stages,
        true_class=true,
        total_utility=total,
        switch_stage=switch_stage,
        final_log_odds=b.log_odds,
        final_probability=b.probability,
        mean_log_likelihood=(log_sum / stacked) if stacked else None,
        stacked_count=stacked,
    )
    return trace, summary


def replicate(
    s: Scenario,
    seeds: Sequence[int],
    n_stages: int,
    mode: str = "aggregate",
    true_class: Optional[Outcome] = None,
    freeze_policy: bool = False,
) -> ReplicationStats:
    """Independent seeded runs folded into aggregate statistics, in seed
    order."""
    if not seeds:
        raise ValueError("replicate needs at least one seed")
    summaries = []
    pooled_log = 0.0
    pooled_n = 0
    for seed in seeds:
        _, summary = run(s, seed, n_stages, mode=mode,
                         true_class=true_class, freeze_policy=freeze_policy)
        summaries.append(summary)
        if summary.stacked_count:
            pooled_log += summary.mean_log_likelihood * summary.stacked_count
            pooled_n += summary.stacked_count
    switched = [x.switch_stage for x in summaries
                if x.switch_stage is not None]
    return ReplicationStats(
        summaries=tuple(summaries),
        mean_total_utility=statistics.fmean(
            float(x.total_utility) for x in summaries
        ),
        mean_switch_stage=statistics.fmean(switched) if switched else None,
        median_switch_stage=(
            float(statistics.median(switched)) if switched else None
        ),
        switched_count=len(switched),
        pooled_mean_log_likelihood=(
            pooled_log / pooled_n if pooled_n else None
        ),
        pooled_stacked_count=pooled_n,
    )


# ============================================================
# Trace output
# ============================================================

def _fmt_outcome(o: Optional[Outcome]) -> str:
    if o is None:
        return ""
    if isinstance(o, Fraction):
        return f"{float(o):.10g}"
    return str(o)


def write_trace(trace: Sequence[TraceRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER.split(","))
        for r in trace:
            writer.writerow([
                r.stage,
                _fmt_outcome(r.measured_density),
                _fmt_outcome(r.action),
                _fmt_outcome(r.outcome),
                _fmt_outcome(r.utility),
                f"{r.posterior_fragile:.10g}",
                f"{r.likelihood_ratio:.10g}",
                r.policy_id,
            ])

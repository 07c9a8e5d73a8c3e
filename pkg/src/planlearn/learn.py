"""Odds-form belief revision driven by the influence diagram.

Belief about the latent two-way hypothesis is kept as log-odds, so hundreds
of multiplicative updates stay numerically stable.  Likelihood ratios come
from the diagram itself, conditioned on how the current policy behaves:
`aggregate` mode pools every information state in which the valued action is
taken (the population view), `exact` mode conditions on the specific
information state in hand.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import diagram as dg
from .diagram import InfluenceDiagram, Outcome
from .policy import Policy


class LikelihoodError(ValueError):
    pass


class NeverReachesError(ValueError):
    pass


class NoThresholdError(ValueError):
    pass


@dataclass(frozen=True)
class BeliefState:
    """Log-odds belief in `favored` against `alternative`."""

    favored: Outcome
    alternative: Outcome
    log_odds: float
    update_count: int = 0

    @property
    def odds(self) -> float:
        return math.exp(self.log_odds)

    @property
    def probability(self) -> float:
        """P(favored)."""
        o = self.odds
        return o / (1.0 + o)

    @property
    def probability_alternative(self) -> float:
        return 1.0 - self.probability

    @classmethod
    def from_odds(cls, favored: Outcome, alternative: Outcome,
                  odds: Union[float, Fraction]) -> "BeliefState":
        if odds <= 0:
            raise ValueError(f"odds must be positive, got {odds}")
        return cls(favored, alternative, math.log(odds))

    @classmethod
    def from_probability(cls, favored: Outcome, alternative: Outcome,
                         p: Union[float, Fraction]) -> "BeliefState":
        if not 0 < p < 1:
            raise ValueError(f"probability must lie in (0,1), got {p}")
        return cls(favored, alternative, math.log(p) - math.log1p(-p))


def update(b: BeliefState, likelihood: Union[float, Fraction]) -> BeliefState:
    """Posterior odds are prior odds times the likelihood ratio."""
    if likelihood <= 0:
        raise LikelihoodError(
            f"likelihood ratio must be positive, got {likelihood}"
        )
    return replace(
        b,
        log_odds=b.log_odds + math.log(likelihood),
        update_count=b.update_count + 1,
    )


def posterior_odds_exact(prior_odds: Fraction,
                         likelihood: Fraction) -> Fraction:
    """The same update in exact arithmetic, for agreement checks against
    direct conditioning."""
    if likelihood <= 0:
        raise LikelihoodError(
            f"likelihood ratio must be positive, got {likelihood}"
        )
    return prior_odds * likelihood


# ============================================================
# Likelihood ratios from the diagram
# ============================================================

def _hypothesis(d: InfluenceDiagram) -> dg.HypothesisInfo:
    if d.hypothesis is None:
        raise LikelihoodError("diagram declares no latent hypothesis")
    return d.hypothesis


def observation_node(d: InfluenceDiagram, obs: Outcome) -> str:
    """The unique chance node that can take this outcome and descends from
    the hypothesis."""
    hyp = _hypothesis(d)
    owners = [
        n.id for n in d.nodes.values()
        if n.kind == dg.CHANCE and obs in n.outcomes
        and d.reaches(hyp.node, n.id)
    ]
    if not owners:
        raise LikelihoodError(
            f"no hypothesis-dependent chance node has outcome {obs!r}"
        )
    if len(owners) > 1:
        raise LikelihoodError(
            f"observation {obs!r} is ambiguous between nodes {owners}"
        )
    return owners[0]


def _gating_decisions(d: InfluenceDiagram, obs_id: str) -> List[str]:
    return [
        p for p in d.cpts[obs_id].parents
        if d.nodes[p].kind == dg.DECISION
    ]


def _possible_combos(d: InfluenceDiagram, obs_id: str,
                     obs: Outcome) -> List[Tuple[Outcome, ...]]:
    """Gating-action combinations under which the observation can occur."""
    gating = _gating_decisions(d, obs_id)
    cpt = d.cpts[obs_id]
    o_idx = d.nodes[obs_id].outcomes.index(obs)
    combos = []
    for combo in itertools.product(*(d.nodes[g].outcomes for g in gating)):
        ctx = dict(zip(gating, combo))
        possible = any(
            row[o_idx] > 0
            for key, row in cpt.rows.items()
            if all(
                key[cpt.parents.index(g)] == ctx[g] for g in gating
            )
        )
        if possible:
            combos.append(combo)
    return combos


def _event_conditional(
    d: InfluenceDiagram,
    policy: Policy,
    obs_id: str,
    obs: Outcome,
    hyp_value: Outcome,
    combos: Sequence[Tuple[Outcome, ...]],
) -> Optional[Fraction]:
    """P(observation | hypothesis value, gating actions taken) under the
    policy's behavior, from the exact joint.  None when the conditioning
    event has probability zero."""
    hyp = _hypothesis(d)
    gating = _gating_decisions(d, obs_id)
    joint = dg.joint_distribution(d, policy.as_map())
    allowed = {tuple(c) for c in combos}
    num = Fraction(0)
    den = Fraction(0)
    for key, p in joint.items():
        a = dict(key)
        if a[hyp.node] != hyp_value:
            continue
        if tuple(a[g] for g in gating) not in allowed:
            continue
        den += p
        if a[obs_id] == obs:
            num += p
    if den == 0:
        return None
    return num / den


def likelihood_ratio(
    d: InfluenceDiagram,
    p: Policy,
    obs: Outcome,
    mode: str = "aggregate",
    info_state: Optional[Mapping[str, Outcome]] = None,
) -> Fraction:
    """L = P(obs | favored, ...) / P(obs | alternative, ...).

    Aggregate mode conditions on the event that the policy took an action
    under which the observation was possible at all, pooling across
    information states; exact mode conditions on the given information state
    and the actions the policy takes there."""
    hyp = _hypothesis(d)
    obs_id = observation_node(d, obs)
    if mode == "aggregate":
        combos = _possible_combos(d, obs_id, obs)
        num = _event_conditional(d, p, obs_id, obs, hyp.favored, combos)
        den = _event_conditional(d, p, obs_id, obs, hyp.alternative, combos)
    elif mode == "exact":
        if info_state is None:
            raise LikelihoodError("exact mode needs the information state")
        actions = resolve_actions(d, p, info_state)
        num_d = dg.conditional(
            d, [obs_id], {**dict(info_state), hyp.node: hyp.favored}, actions
        )
        den_d = dg.conditional(
            d, [obs_id], {**dict(info_state), hyp.node: hyp.alternative},
            actions,
        )
        num = None if num_d is None else num_d.get((obs,), Fraction(0))
        den = None if den_d is None else den_d.get((obs,), Fraction(0))
    else:
        raise LikelihoodError(f"unknown likelihood mode {mode!r}")
    if (num is None or num == 0) and (den is None or den == 0):
        raise LikelihoodError(
            f"observation {obs!r} is impossible under both hypotheses"
        )
    if num is None or den is None or den == 0 or num == 0:
        raise LikelihoodError(
            f"observation {obs!r} is impossible under one hypothesis; "
            f"the likelihood ratio is unbounded or zero"
        )
    return num / den


def resolve_actions(
    d: InfluenceDiagram, p: Policy, info_state: Mapping[str, Outcome]
) -> Dict[str, Outcome]:
    """Actions the policy takes when the chance information is as given."""
    actions: Dict[str, Outcome] = {}
    assignment: Dict[str, Outcome] = dict(info_state)
    for dec in d.decision_order:
        parents = d.informational_parents(dec)
        missing = [q for q in parents if q not in assignment]
        if missing:
            raise LikelihoodError(
                f"information state lacks {missing} observed at {dec}"
            )
        key = dg.info_key(dec, assignment, parents)
        try:
            action = p.actions[key]
        except KeyError:
            raise LikelihoodError(
                f"policy has no action for {dec} at {key[1]}"
            ) from None
        actions[dec] = action
        assignment[dec] = action
    return actions


def average_likelihood_ratio(
    d: InfluenceDiagram,
    p: Policy,
    true_hypothesis: Outcome,
    mode: str = "aggregate",
) -> float:
    """Geometric mean of the per-observation likelihood ratios, weighted by
    how often each observation arrives when the true hypothesis holds and
    the policy's informative action is taken."""
    hyp = _hypothesis(d)
    if true_hypothesis not in (hyp.favored, hyp.alternative):
        raise LikelihoodError(
            f"{true_hypothesis!r} is not one of the tracked hypotheses"
        )
    obs_id = _observation_node_for_hypothesis(d)
    combos = _informative_combos(d, obs_id)
    if not combos:
        return 1.0
    log_sum = 0.0
    total_weight = Fraction(0)
    for obs in d.nodes[obs_id].outcomes:
        weight = _event_conditional(d, p, obs_id, obs, true_hypothesis,
                                    combos)
        if weight is None or weight == 0:
            continue
        ratio = likelihood_ratio(d, p, obs, mode="aggregate")
        log_sum += float(weight) * math.log(float(ratio))
        total_weight += weight
    if total_weight == 0:
        raise LikelihoodError(
            f"no observation is possible under {true_hypothesis!r}"
        )
    return math.exp(log_sum / float(total_weight))


def _observation_node_for_hypothesis(d: InfluenceDiagram) -> str:
    """The hypothesis-dependent chance node the value table reads."""
    hyp = _hypothesis(d)
    for pid in d.utility.parents:
        if d.nodes[pid].kind == dg.CHANCE and d.reaches(hyp.node, pid):
            return pid
    raise LikelihoodError(
        "no hypothesis-dependent chance node feeds the value table"
    )


def _informative_combos(d: InfluenceDiagram,
                        obs_id: str) -> List[Tuple[Outcome, ...]]:
    """Gating-action combinations under which the observation distribution
    depends on the hypothesis at all (stages that teach nothing are left
    out of the average)."""
    hyp = _hypothesis(d)
    gating = _gating_decisions(d, obs_id)
    first = {dec: d.nodes[dec].outcomes[0] for dec in d.decision_ids()}
    out = []
    for combo in itertools.product(*(d.nodes[g].outcomes for g in gating)):
        clamp = dict(first)
        clamp.update(zip(gating, combo))
        dists = []
        for h in d.nodes[hyp.node].outcomes:
            dist = dg.conditional(d, [obs_id], {hyp.node: h}, clamp)
            dists.append(dist)
        if any(x != dists[0] for x in dists[1:]):
            out.append(combo)
    return out


# ============================================================
# Switch prediction
# ============================================================

def predict_switch(
    b: BeliefState,
    avg_likelihood: float,
    target_odds: Union[float, Fraction],
) -> float:
    """Expected number of observations until odds drift from current to
    target at the average multiplier: log(target/current) / log(avgL)."""
    target = float(target_odds)
    if target <= 0:
        raise ValueError(f"target odds must be positive, got {target_odds}")
    current = b.odds
    gap = math.log(target) - math.log(current)
    if gap == 0:
        return 0.0
    if avg_likelihood <= 0:
        raise LikelihoodError(
            f"average likelihood ratio must be positive, got {avg_likelihood}"
        )
    drift = math.log(avg_likelihood)
    if drift == 0 or (gap > 0) != (drift > 0):
        raise NeverReachesError(
            f"odds drift by x{avg_likelihood:.6g} per observation and never "
            f"reach {target:.6g} from {current:.6g}"
        )
    return gap / drift


def hypothesis_action_values(
    d: InfluenceDiagram,
    decision_id: str,
    context: Mapping[str, Outcome],
) -> Dict[Tuple[Outcome, Outcome], Fraction]:
    """E[utility | action, context, hypothesis value] for every action of
    the decision, keyed by (action, hypothesis value)."""
    hyp = _hypothesis(d)
    node = d.node(decision_id)
    if node.kind != dg.DECISION:
        raise dg.DiagramError(f"{decision_id} is not a decision node")
    evidence = {
        k: v for k, v in context.items() if d.nodes[k].kind == dg.CHANCE
    }
    fixed = {
        k: v for k, v in context.items() if d.nodes[k].kind == dg.DECISION
    }
    out: Dict[Tuple[Outcome, Outcome], Fraction] = {}
    for h in d.nodes[hyp.node].outcomes:
        base = _infer_other_decisions(d, decision_id, evidence, fixed, h)
        for action in node.outcomes:
            decisions = dict(base)
            decisions[decision_id] = action
            value = _expected_cell_value(d, evidence, {hyp.node: h},
                                         decisions)
            if value is None:
                raise NoThresholdError(
                    f"context has probability zero under hypothesis {h!r}"
                )
            out[(action, h)] = value
    return out


def _infer_other_decisions(
    d: InfluenceDiagram,
    decision_id: str,
    evidence: Mapping[str, Outcome],
    fixed: Mapping[str, Outcome],
    hyp_value: Outcome,
) -> Dict[str, Outcome]:
    """Choose actions for the other decisions: fixed ones as given, the rest
    the first combination (declaration order) that leaves the evidence
    possible."""
    hyp = _hypothesis(d)
    others = [
        dec for dec in d.decision_order
        if dec != decision_id and dec not in fixed
    ]
    base = dict(fixed)
    if not others:
        return base
    for combo in itertools.product(
        *(d.nodes[dec].outcomes for dec in others)
    ):
        trial = dict(base)
        trial.update(zip(others, combo))
        trial[decision_id] = d.nodes[decision_id].outcomes[0]
        dist = dg.conditional(d, [hyp.node], dict(evidence), trial)
        if dist is not None and any(
            dist.get((h,), Fraction(0)) > 0
            for h in d.nodes[hyp.node].outcomes
        ):
            del trial[decision_id]
            return trial
    raise NoThresholdError(
        "no action combination makes the given context possible"
    )


def _expected_cell_value(
    d: InfluenceDiagram,
    evidence: Mapping[str, Outcome],
    extra_evidence: Mapping[str, Outcome],
    decisions: Mapping[str, Outcome],
) -> Optional[Fraction]:
    chance_parents = [
        pid for pid in d.utility.parents if d.nodes[pid].kind == dg.CHANCE
    ]
    ev = {**evidence, **extra_evidence}
    dist = dg.conditional(d, chance_parents, ev, dict(decisions))
    if dist is None:
        return None
    total = Fraction(0)
    for combo, prob in dist.items():
        assign = dict(zip(chance_parents, combo))
        assign.update(decisions)
        cell = tuple(assign[pid] for pid in d.utility.parents)
        total += prob * d.utility.cells[cell]
    return total


def switch_threshold(
    d: InfluenceDiagram,
    decision_id: str,
    context: Mapping[str, Outcome],
) -> Fraction:
    """The belief P(favored hypothesis) at which the decision's two actions
    have equal expected utility in this context."""
    node = d.node(decision_id)
    if len(node.outcomes) != 2:
        raise NoThresholdError(
            f"{decision_id} has {len(node.outcomes)} actions; thresholds are "
            f"defined between exactly two"
        )
    hyp = _hypothesis(d)
    values = hypothesis_action_values(d, decision_id, context)
    a, b = node.outcomes
    fav, alt = hyp.favored, hyp.alternative
    # p*v(fav) + (1-p)*v(alt) equal for both actions
    d_alt = values[(a, alt)] - values[(b, alt)]
    d_fav = values[(a, fav)] - values[(b, fav)]
    slope = d_fav - d_alt
    if slope == 0:
        raise NoThresholdError(
            "the actions' expected utilities never cross: "
            + ("they tie at every belief" if d_alt == 0
               else "one action dominates at every belief")
        )
    p_star = -d_alt / slope
    if not 0 <= p_star <= 1:
        raise NoThresholdError(
            f"the crossing belief {p_star} lies outside [0, 1]; one action "
            f"dominates"
        )
    return p_star

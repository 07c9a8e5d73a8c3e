"""Decision trees: compilation from influence diagrams, rollback, and value
of information.

The tree layout follows the informational structure of the diagram: decisions
appear in decision order, a chance node is expanded before a decision exactly
when an informational arc makes it observed there, and the remaining
outcome-relevant chance nodes fan out after the last decision.  Chance branch
probabilities are conditionals given the path so far, computed from the exact
joint.  Zero-probability branches are kept but flagged; rollback ignores
them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import diagram as dg
from .diagram import InfluenceDiagram, Outcome

InfoState = Tuple[Tuple[str, Outcome], ...]
PolicyKey = Tuple[str, InfoState]


@dataclass(frozen=True)
class Terminal:
    utility: Fraction
    probability: Fraction          # chance-path probability to this leaf
    assignment: InfoState


@dataclass(frozen=True)
class ChanceBranch:
    outcome: Outcome
    probability: Fraction
    zero: bool
    child: "TreeNode"


@dataclass(frozen=True)
class ChanceTreeNode:
    node_id: str
    branches: Tuple[ChanceBranch, ...]


@dataclass(frozen=True)
class DecisionTreeNode:
    node_id: str
    info_state: InfoState
    actions: Tuple[Tuple[Outcome, "TreeNode"], ...]


TreeNode = Union[Terminal, ChanceTreeNode, DecisionTreeNode]


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    diagram: InfluenceDiagram


@dataclass
class Policy:
    """An action for every information state met during rollback, plus the
    expected utility the policy attains at the root."""

    actions: Dict[PolicyKey, Outcome]
    attained_eu: Optional[Fraction] = None
    tie_breaks: Tuple[PolicyKey, ...] = ()

    def action(self, decision_id: str, info_state: InfoState) -> Outcome:
        return self.actions[(decision_id, info_state)]

    def as_map(self) -> Dict[PolicyKey, Outcome]:
        return self.actions


# ============================================================
# Compilation
# ============================================================

def compile_tree(d: InfluenceDiagram,
                 bound: int = dg.ENUMERATION_BOUND) -> DecisionTree:
    dg.check(d)
    if dg._chance_space_size(d) > bound:
        raise dg.StateSpaceError(
            f"tree compilation enumerates {dg._chance_space_size(d)} chance "
            f"assignments, bound is {bound}"
        )

    first_action = {
        dec: d.nodes[dec].outcomes[0] for dec in d.decision_ids()
    }
    fan_ids = _fan_ids(d)

    def clamp_all(made: Dict[str, Outcome]) -> Dict[str, Outcome]:
        out = dict(first_action)
        out.update(made)
        return out

    def build(stage: int, branched: Dict[str, Outcome],
              made: Dict[str, Outcome], prob: Fraction) -> TreeNode:
        if stage < len(d.decision_order):
            dec = d.decision_order[stage]
            pending = [
                p for p in d.informational_parents(dec)
                if d.nodes[p].kind == dg.CHANCE and p not in branched
            ]
            if pending:
                return _chance_node(pending[0], stage, branched, made, prob)
            assignment = {**branched, **made}
            key = dg.info_key(dec, assignment,
                              d.informational_parents(dec))
            children = []
            for action in d.nodes[dec].outcomes:
                made[dec] = action
                children.append(
                    (action, build(stage + 1, branched, made, prob))
                )
                del made[dec]
            return DecisionTreeNode(
                node_id=dec, info_state=key[1], actions=tuple(children)
            )
        remaining = [
            nid for nid in fan_ids
            if nid not in branched and _fan_relevant(d, nid, made, fan_ids)
        ]
        if remaining:
            return _fan_node(remaining[0], stage, branched, made, prob)
        assignment = {**branched, **made}
        cell = tuple(assignment[p] for p in d.utility.parents)
        return Terminal(
            utility=d.utility.cells[cell],
            probability=prob,
            assignment=tuple(sorted(assignment.items())),
        )

    def _chance_node(nid: str, stage: int, branched: Dict[str, Outcome],
                     made: Dict[str, Outcome],
                     prob: Fraction) -> ChanceTreeNode:
        """Observed-before-a-decision chance node: branch over its support
        given the path (so an unread instrument is a single branch)."""
        dist = dg.conditional(d, [nid], dict(branched), clamp_all(made),
                              bound)
        if dist is None:
            raise dg.DiagramError(
                f"information state at {nid} has probability zero"
            )
        branches = []
        for outcome in d.nodes[nid].outcomes:
            p = dist.get((outcome,), Fraction(0))
            if p == 0:
                continue
            branched[nid] = outcome
            child = build(stage, branched, made, prob * p)
            del branched[nid]
            branches.append(ChanceBranch(outcome, p, False, child))
        return ChanceTreeNode(node_id=nid, branches=tuple(branches))

    def _fan_node(nid: str, stage: int, branched: Dict[str, Outcome],
                  made: Dict[str, Outcome],
                  prob: Fraction) -> ChanceTreeNode:
        """Post-decision chance node: branch over the outcomes possible under
        these actions, keeping (and flagging) branches the particular path
        rules out."""
        support = _decision_support(d, nid, made, bound)
        dist = dg.conditional(d, [nid], dict(branched), clamp_all(made),
                              bound)
        if dist is None:
            dist = _impossible_context_dist(d, nid, branched, made, support)
        branches = []
        for outcome in d.nodes[nid].outcomes:
            if outcome not in support:
                continue
            p = dist.get((outcome,), Fraction(0))
            branched[nid] = outcome
            child = build(stage, branched, made, prob * p)
            del branched[nid]
            branches.append(ChanceBranch(outcome, p, p == 0, child))
        return ChanceTreeNode(node_id=nid, branches=tuple(branches))

    root = build(0, {}, {}, Fraction(1))
    return DecisionTree(root=root, diagram=d)


def _fan_ids(d: InfluenceDiagram) -> List[str]:
    """Chance parents of the value node plus their chance parents, in
    topological order."""
    direct = [
        p for p in d.utility.parents if d.nodes[p].kind == dg.CHANCE
    ]
    wanted = set(direct)
    for a in direct:
        for p in d.cpts[a].parents:
            if d.nodes[p].kind == dg.CHANCE:
                wanted.add(p)
    return [nid for nid in d.topo_order() if nid in wanted]


def _fan_relevant(d: InfluenceDiagram, nid: str, made: Dict[str, Outcome],
                  fan_ids: Sequence[str]) -> bool:
    """A supporting chance node is expanded only when some value-parent's
    rows actually vary with it under the chosen actions."""
    if nid in d.utility.parents:
        return True
    for a in d.utility.parents:
        if d.nodes[a].kind != dg.CHANCE:
            continue
        cpt = d.cpts[a]
        if nid not in cpt.parents:
            continue
        if _rows_vary_with(d, cpt, nid, made):
            return True
    return False


def _rows_vary_with(d: InfluenceDiagram, cpt: dg.Cpt, b_id: str,
                    made: Dict[str, Outcome]) -> bool:
    b_idx = cpt.parents.index(b_id)
    other_spaces = []
    for p in cpt.parents:
        if p == b_id:
            continue
        if p in made:
            other_spaces.append((p, (made[p],)))
        else:
            other_spaces.append((p, d.nodes[p].outcomes))
    b_space = d.nodes[b_id].outcomes
    for combo in itertools.product(*(sp for _, sp in other_spaces)):
        ctx = dict(zip((p for p, _ in other_spaces), combo))
        rows = []
        for b in b_space:
            ctx[b_id] = b
            rows.append(cpt.rows[tuple(ctx[p] for p in cpt.parents)])
        if any(r != rows[0] for r in rows[1:]):
            return True
    return False


def _decision_support(d: InfluenceDiagram, nid: str,
                      made: Dict[str, Outcome], bound: int) -> List[Outcome]:
    """Outcomes of nid with positive probability given the actions alone."""
    clamp = {dec: d.nodes[dec].outcomes[0] for dec in d.decision_ids()}
    clamp.update(made)
    dist = dg.conditional(d, [nid], {}, clamp, bound)
    if dist is None:
        return list(d.nodes[nid].outcomes)
    return [
        o for o in d.nodes[nid].outcomes
        if dist.get((o,), Fraction(0)) > 0
    ]


def _impossible_context_dist(d: InfluenceDiagram, nid: str,
                             branched: Dict[str, Outcome],
                             made: Dict[str, Outcome],
                             support: Sequence[Outcome]
                             ) -> Dict[Tuple[Outcome], Fraction]:
    """Continuation below a zero-probability branch: fall back to the node's
    own CPT row if the path pins all its parents, else spread uniformly."""
    cpt = d.cpts[nid]
    full = {**branched, **made}
    if all(p in full for p in cpt.parents):
        row = cpt.rows[tuple(full[p] for p in cpt.parents)]
        return {
            (o,): p for o, p in zip(d.nodes[nid].outcomes, row)
        }
    n = len(support) or 1
    return {(o,): Fraction(1, n) for o in support}


# ============================================================
# Rollback
# ============================================================

def rollback(t: Union[DecisionTree, TreeNode]) -> Tuple[Fraction, Policy]:
    """Expectation at chance nodes, maximum at decisions.  Exact ties go to
    the action declared first; every tie is recorded on the policy."""
    root = t.root if isinstance(t, DecisionTree) else t
    actions: Dict[PolicyKey, Outcome] = {}
    ties: List[PolicyKey] = []

    def go(node: TreeNode) -> Fraction:
        if isinstance(node, Terminal):
            return node.utility
        if isinstance(node, ChanceTreeNode):
            return sum(
                (b.probability * go(b.child) for b in node.branches),
                Fraction(0),
            )
        values = [(action, go(child)) for action, child in node.actions]
        best = max(v for _, v in values)
        winners = [a for a, v in values if v == best]
        key = (node.node_id, node.info_state)
        actions[key] = winners[0]
        if len(winners) > 1:
            ties.append(key)
        return best

    eu = go(root)
    return eu, Policy(actions=actions, attained_eu=eu,
                      tie_breaks=tuple(ties))


def optimal_policy(d: InfluenceDiagram) -> Policy:
    return rollback(compile_tree(d))[1]


def solve(d: InfluenceDiagram) -> Tuple[Fraction, Policy]:
    return rollback(compile_tree(d))


def subtree(t: DecisionTree, action: Outcome) -> DecisionTree:
    """The branch of the root decision taken by `action`."""
    root = t.root
    if not isinstance(root, DecisionTreeNode):
        raise dg.DiagramError("tree root is not a decision node")
    for a, child in root.actions:
        if a == action:
            return DecisionTree(root=child, diagram=t.diagram)
    raise dg.DiagramError(f"root decision has no action {action!r}")


# ============================================================
# Value of information
# ============================================================

def evpi(d: InfluenceDiagram, v: str) -> Fraction:
    """How much knowing v before every decision is worth: the informed
    optimum minus the plain optimum."""
    if d.node(v).kind != dg.CHANCE:
        raise dg.DiagramError(f"{v} is not a chance node")
    base_eu, _ = solve(d)
    informed_eu, _ = solve(dg.observe_everywhere(d, v))
    return informed_eu - base_eu


def evsi(d: InfluenceDiagram, m: Union[str, dg.MeasurementNodes],
         cost: Union[int, Fraction] = 0) -> Fraction:
    """Value of the instrument's imperfect reading: expected utility with
    the measurement forced on, minus forced off, minus the reading cost."""
    if isinstance(m, dg.MeasurementNodes):
        triple = m
    else:
        match = [
            x for x in d.measurements if m in (x.instrument, x.variable)
        ]
        if not match:
            raise dg.DiagramError(f"no measurement named {m!r}")
        triple = match[0]
    if triple.decision not in d.nodes:
        raise dg.DiagramError(
            f"measurement decision {triple.decision} is not in the diagram"
        )
    on_eu, _ = solve(dg.force_decision(d, triple.decision,
                                       triple.measure_action))
    off_eu, _ = solve(dg.force_decision(d, triple.decision,
                                        triple.no_measure_action))
    return on_eu - off_eu - Fraction(cost)


# ============================================================
# Tree inspection
# ============================================================

def count_terminals(t: Union[DecisionTree, TreeNode]) -> int:
    node = t.root if isinstance(t, DecisionTree) else t
    if isinstance(node, Terminal):
        return 1
    if isinstance(node, ChanceTreeNode):
        return sum(count_terminals(b.child) for b in node.branches)
    return sum(count_terminals(child) for _, child in node.actions)


def count_zero_branches(t: Union[DecisionTree, TreeNode]) -> int:
    node = t.root if isinstance(t, DecisionTree) else t
    if isinstance(node, Terminal):
        return 0
    if isinstance(node, ChanceTreeNode):
        return sum(
            (1 if b.zero else 0) + count_zero_branches(b.child)
            for b in node.branches
        )
    return sum(count_zero_branches(child) for _, child in node.actions)


def count_positive_terminals(t: Union[DecisionTree, TreeNode]) -> int:
    node = t.root if isinstance(t, DecisionTree) else t
    if isinstance(node, Terminal):
        return 1 if node.probability > 0 else 0
    if isinstance(node, ChanceTreeNode):
        return sum(count_positive_terminals(b.child) for b in node.branches)
    return sum(count_positive_terminals(child) for _, child in node.actions)


def count_reachable_positive_terminals(
    t: Union[DecisionTree, TreeNode], policy: Policy
) -> int:
    """Terminals with positive path probability along the policy's actions."""
    node = t.root if isinstance(t, DecisionTree) else t
    if isinstance(node, Terminal):
        return 1 if node.probability > 0 else 0
    if isinstance(node, ChanceTreeNode):
        return sum(
            count_reachable_positive_terminals(b.child, policy)
            for b in node.branches
        )
    chosen = policy.action(node.node_id, node.info_state)
    for action, child in node.actions:
        if action == chosen:
            return count_reachable_positive_terminals(child, policy)
    return 0


def format_tree(t: Union[DecisionTree, TreeNode], indent: int = 0) -> str:
    node = t.root if isinstance(t, DecisionTree) else t
    pad = "  " * indent
    if isinstance(node, Terminal):
        return (f"{pad}* U={_frac(node.utility)} "
                f"p={_frac(node.probability)}")
    lines: List[str] = []
    if isinstance(node, ChanceTreeNode):
        lines.append(f"{pad}({node.node_id})")
        for b in node.branches:
            flag = "  [zero]" if b.zero else ""
            lines.append(
                f"{pad}  = {_out(b.outcome)} p={_frac(b.probability)}{flag}"
            )
            lines.append(format_tree(b.child, indent + 2))
    else:
        lines.append(f"{pad}[{node.node_id}]")
        for action, child in node.actions:
            lines.append(f"{pad}  > {_out(action)}")
            lines.append(format_tree(child, indent + 2))
    return "\n".join(lines)


def format_policy(p: Policy) -> str:
    lines = []
    for (dec, state), action in sorted(p.actions.items(), key=str):
        ctx = ", ".join(f"{k}={_out(v)}" for k, v in state)
        lines.append(f"{dec}[{ctx or '-'}] -> {_out(action)}")
    if p.tie_breaks:
        lines.append(f"ties broken by declaration order: {len(p.tie_breaks)}")
    return "\n".join(lines)


def _out(o: Outcome) -> str:
    return _frac(o) if isinstance(o, Fraction) else str(o)


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x}"

"""Influence diagrams with exact-rational CPTs.

Nodes are chance, decision, or value; arcs into chance/value nodes condition,
arcs into decision nodes are informational (they say what is observed before
acting).  All probabilities and utilities are Fractions, so enumeration and
arc reversal are exact; float tolerances only matter where callers compare
against float expectations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .scenario import Outcome, outcome_str

CHANCE = "chance"
DECISION = "decision"
VALUE = "value"

ENUMERATION_BOUND = 10 ** 6
TOL = Fraction(1, 10 ** 9)


class DiagramError(ValueError):
    pass


class StateSpaceError(DiagramError):
    """Joint enumeration would exceed the configured bound."""


class ArcReversalError(DiagramError):
    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason  # "not-a-chance-arc" | "would-create-cycle"


# ============================================================
# Structure
# ============================================================

@dataclass(frozen=True)
class Node:
    id: str
    kind: str                      # chance | decision | value
    outcomes: Tuple[Outcome, ...]  # actions for decisions, () for value
    label: str = ""

    def display(self) -> str:
        return self.label or self.id


@dataclass(frozen=True)
class Arc:
    src: str
    dst: str


@dataclass(frozen=True)
class Cpt:
    """Rows keyed by parent-outcome tuples (in `parents` order); each row is
    a distribution over the owner's outcomes."""

    parents: Tuple[str, ...]
    rows: Mapping[Tuple[Outcome, ...], Tuple[Fraction, ...]]


@dataclass(frozen=True)
class UtilityTable:
    parents: Tuple[str, ...]
    cells: Mapping[Tuple[Outcome, ...], Fraction]


@dataclass(frozen=True)
class MeasurementNodes:
    """Bookkeeping for an inserted measurement triple."""

    instrument: str
    variable: str              # measured chance node id
    decision: str              # measure/no-measure decision node id
    error: str                 # error chance node id
    measured: str              # measured-value chance node id
    measure_action: Outcome
    no_measure_action: Outcome
    none_value: Outcome
    cost: Fraction = Fraction(0)


@dataclass(frozen=True)
class HypothesisInfo:
    """The latent two-way hypothesis tracked by belief revision."""

    node: str
    favored: Outcome           # H   (odds numerator)
    alternative: Outcome       # ~H


@dataclass
class InfluenceDiagram:
    nodes: Dict[str, Node]
    arcs: List[Arc]
    cpts: Dict[str, Cpt]
    utility: UtilityTable
    decision_order: Tuple[str, ...]
    measurements: Tuple[MeasurementNodes, ...] = ()
    hypothesis: Optional[HypothesisInfo] = None

    # ---- structure queries -------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise DiagramError(f"unknown node {node_id!r}") from None

    @property
    def value_node(self) -> Node:
        vals = [n for n in self.nodes.values() if n.kind == VALUE]
        if len(vals) != 1:
            raise DiagramError(f"expected exactly one value node, got {len(vals)}")
        return vals[0]

    def chance_ids(self) -> List[str]:
        return [n.id for n in self.nodes.values() if n.kind == CHANCE]

    def decision_ids(self) -> List[str]:
        return [n.id for n in self.nodes.values() if n.kind == DECISION]

    def parents(self, node_id: str) -> List[str]:
        return [a.src for a in self.arcs if a.dst == node_id]

    def children(self, node_id: str) -> List[str]:
        return [a.dst for a in self.arcs if a.src == node_id]

    def arc_kind(self, arc: Arc) -> str:
        """Derived from the target: informational into decisions, else
        conditioning."""
        return "informational" if self.node(arc.dst).kind == DECISION else "conditioning"

    def informational_parents(self, decision_id: str) -> List[str]:
        return self.parents(decision_id)

    def has_arc(self, src: str, dst: str) -> bool:
        return any(a.src == src and a.dst == dst for a in self.arcs)

    def copy(self) -> "InfluenceDiagram":
        return InfluenceDiagram(
            nodes=dict(self.nodes),
            arcs=list(self.arcs),
            cpts=dict(self.cpts),
            utility=self.utility,
            decision_order=self.decision_order,
            measurements=self.measurements,
            hypothesis=self.hypothesis,
        )

    def topo_order(self) -> List[str]:
        indeg = {nid: 0 for nid in self.nodes}
        for a in self.arcs:
            indeg[a.dst] += 1
        frontier = sorted(nid for nid, d in indeg.items() if d == 0)
        out: List[str] = []
        while frontier:
            nid = frontier.pop(0)
            out.append(nid)
            for c in sorted(self.children(nid)):
                indeg[c] -= 1
                if indeg[c] == 0:
                    frontier.append(c)
            frontier.sort()
        if len(out) != len(self.nodes):
            raise DiagramError("diagram contains a directed cycle")
        return out

    def reaches(self, src: str, dst: str, skip_arc: Optional[Arc] = None) -> bool:
        """Directed reachability src -> ... -> dst."""
        stack, seen = [src], set()
        while stack:
            cur = stack.pop()
            if cur == dst:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            for a in self.arcs:
                if a.src == cur and a != skip_arc:
                    stack.append(a.dst)
        return False


# ============================================================
# Validation
# ============================================================

def validate(d: InfluenceDiagram) -> List[str]:
    """Structural diagnostics; empty list means the diagram is well formed."""
    diags: List[str] = []
    values = [n for n in d.nodes.values() if n.kind == VALUE]
    if len(values) != 1:
        diags.append(f"diagram must have exactly one value node, found {len(values)}")
    for n in d.nodes.values():
        if n.kind not in (CHANCE, DECISION, VALUE):
            diags.append(f"node {n.id}: unknown kind {n.kind!r}")
        if n.kind != VALUE and not n.outcomes:
            diags.append(f"node {n.id}: empty outcome space")
        if len(set(n.outcomes)) != len(n.outcomes):
            diags.append(f"node {n.id}: duplicate outcomes")
    for a in d.arcs:
        if a.src not in d.nodes or a.dst not in d.nodes:
            diags.append(f"arc {a.src}->{a.dst} references unknown node")
        elif a.src == a.dst:
            diags.append(f"self arc on {a.src}")
        elif d.nodes[a.src].kind == VALUE:
            diags.append(f"value node has outgoing arc {a.src}->{a.dst}")
    try:
        d.topo_order()
    except DiagramError as exc:
        diags.append(str(exc))

    # CPTs: one per chance node, parents match conditioning arcs, complete
    # row set, each row a distribution.
    for n in d.nodes.values():
        if n.kind != CHANCE:
            continue
        cpt = d.cpts.get(n.id)
        if cpt is None:
            diags.append(f"chance node {n.id}: missing CPT")
            continue
        if sorted(cpt.parents) != sorted(d.parents(n.id)):
            diags.append(
                f"chance node {n.id}: CPT parents {list(cpt.parents)} != "
                f"arc parents {sorted(d.parents(n.id))}"
            )
            continue
        expected = _combos([d.node(p).outcomes for p in cpt.parents])
        seen = set(cpt.rows.keys())
        # extra rows are tolerated: restricting a decision's actions leaves
        # unreachable rows behind
        if not set(expected) <= seen:
            diags.append(f"chance node {n.id}: CPT rows do not cover the parent space")
        for key, row in cpt.rows.items():
            if len(row) != len(n.outcomes):
                diags.append(f"chance node {n.id}: row {key} has wrong width")
            elif abs(sum(row, Fraction(0)) - 1) > TOL:
                diags.append(
                    f"chance node {n.id}: row {key} sums to "
                    f"{float(sum(row, Fraction(0))):.12g}"
                )
            if any(p < 0 for p in row):
                diags.append(f"chance node {n.id}: row {key} has a negative entry")

    if len(values) == 1:
        vid = values[0].id
        if sorted(d.utility.parents) != sorted(d.parents(vid)):
            diags.append(
                f"value node {vid}: utility parents {list(d.utility.parents)} "
                f"!= arc parents {sorted(d.parents(vid))}"
            )
        else:
            expected = set(_combos([d.node(p).outcomes for p in d.utility.parents]))
            if not expected <= set(d.utility.cells.keys()):
                diags.append(f"value node {vid}: utility cells do not cover the parent space")

    # decision order + no-forgetting
    decl = set(d.decision_ids())
    if sorted(d.decision_order) != sorted(decl):
        diags.append("decision_order is not a permutation of the decision nodes")
    else:
        prev: set = set()
        prev_decisions: List[str] = []
        for dec in d.decision_order:
            info = set(d.informational_parents(dec))
            missing = (prev | set(prev_decisions)) - info
            if missing:
                diags.append(
                    f"no-forgetting violated at {dec}: earlier information "
                    f"{sorted(missing)} is not observed"
                )
            prev |= info
            prev_decisions.append(dec)
    return diags


def check(d: InfluenceDiagram) -> None:
    diags = validate(d)
    if diags:
        raise DiagramError("; ".join(diags))


def _combos(spaces: Sequence[Tuple[Outcome, ...]]) -> List[Tuple[Outcome, ...]]:
    return list(itertools.product(*spaces)) if spaces else [()]


# ============================================================
# Exact enumeration
# ============================================================

PolicyMap = Mapping[Tuple[str, Tuple[Tuple[str, Outcome], ...]], Outcome]


def info_key(decision_id: str, assignment: Mapping[str, Outcome],
             info_parents: Iterable[str]) -> Tuple[str, Tuple[Tuple[str, Outcome], ...]]:
    state = tuple(sorted((p, assignment[p]) for p in info_parents))
    return (decision_id, state)


def _chance_space_size(d: InfluenceDiagram) -> int:
    size = 1
    for n in d.nodes.values():
        if n.kind == CHANCE:
            size *= len(n.outcomes)
    return size


def joint_distribution(
    d: InfluenceDiagram,
    policy: PolicyMap,
    bound: int = ENUMERATION_BOUND,
) -> Dict[Tuple[Tuple[str, Outcome], ...], Fraction]:
    """Exact joint over all chance and decision nodes under a policy.

    The policy maps (decision id, observed informational state) to an action;
    it must cover every information state reachable with positive probability.
    Assignments are returned as sorted (node id, outcome) tuples.
    """
    if _chance_space_size(d) > bound:
        raise StateSpaceError(
            f"joint enumeration needs {_chance_space_size(d)} assignments, "
            f"bound is {bound}"
        )
    order = [nid for nid in d.topo_order() if d.nodes[nid].kind != VALUE]
    out: Dict[Tuple[Tuple[str, Outcome], ...], Fraction] = {}

    def expand(i: int, assignment: Dict[str, Outcome], prob: Fraction) -> None:
        if prob == 0:
            return
        if i == len(order):
            key = tuple(sorted(assignment.items()))
            out[key] = out.get(key, Fraction(0)) + prob
            return
        nid = order[i]
        node = d.nodes[nid]
        if node.kind == DECISION:
            key = info_key(nid, assignment, d.informational_parents(nid))
            try:
                action = policy[key]
            except KeyError:
                raise DiagramError(
                    f"policy has no action for {nid} in state {key[1]}"
                ) from None
            if action not in node.outcomes:
                raise DiagramError(f"policy action {action!r} not an action of {nid}")
            assignment[nid] = action
            expand(i + 1, assignment, prob)
            del assignment[nid]
        else:
            cpt = d.cpts[nid]
            row = cpt.rows[tuple(assignment[p] for p in cpt.parents)]
            for outcome, p in zip(node.outcomes, row):
                if p == 0:
                    continue
                assignment[nid] = outcome
                expand(i + 1, assignment, prob * p)
                del assignment[nid]

    expand(0, {}, Fraction(1))
    return out


def expected_utility(
    d: InfluenceDiagram, policy: PolicyMap, bound: int = ENUMERATION_BOUND
) -> Fraction:
    """Oracle expected utility: sum of P(omega) * U(omega) over the joint."""
    total = Fraction(0)
    for key, p in joint_distribution(d, policy, bound).items():
        assignment = dict(key)
        cell = tuple(assignment[pid] for pid in d.utility.parents)
        total += p * d.utility.cells[cell]
    return total


def conditional(
    d: InfluenceDiagram,
    query: Sequence[str],
    evidence: Mapping[str, Outcome],
    decisions: Mapping[str, Outcome],
    bound: int = ENUMERATION_BOUND,
) -> Optional[Dict[Tuple[Outcome, ...], Fraction]]:
    """P(query | evidence, do(decisions)) by chance-only enumeration.

    Decisions are interventions: they are clamped, contribute no probability,
    and every decision node must be clamped.  Returns None when the evidence
    has probability zero.
    """
    if _chance_space_size(d) > bound:
        raise StateSpaceError("conditional enumeration exceeds bound")
    for dec in d.decision_ids():
        if dec not in decisions:
            raise DiagramError(f"conditional: decision {dec} not clamped")
    order = [nid for nid in d.topo_order() if d.nodes[nid].kind != VALUE]
    totals: Dict[Tuple[Outcome, ...], Fraction] = {}
    norm = Fraction(0)

    def expand(i: int, assignment: Dict[str, Outcome], prob: Fraction) -> None:
        nonlocal norm
        if prob == 0:
            return
        if i == len(order):
            key = tuple(assignment[q] for q in query)
            totals[key] = totals.get(key, Fraction(0)) + prob
            norm += prob
            return
        nid = order[i]
        node = d.nodes[nid]
        if node.kind == DECISION:
            assignment[nid] = decisions[nid]
            expand(i + 1, assignment, prob)
            del assignment[nid]
            return
        cpt = d.cpts[nid]
        row = cpt.rows[tuple(assignment[p] for p in cpt.parents)]
        want = evidence.get(nid)
        for outcome, p in zip(node.outcomes, row):
            if p == 0 or (want is not None and outcome != want):
                continue
            assignment[nid] = outcome
            expand(i + 1, assignment, prob * p)
            del assignment[nid]

    expand(0, {}, Fraction(1))
    if norm == 0:
        return None
    return {k: v / norm for k, v in totals.items()}


def is_cond_independent(
    d: InfluenceDiagram,
    x: str,
    y: str,
    given: Sequence[str],
    policy: PolicyMap,
    tol: float = 1e-9,
) -> bool:
    """Numeric conditional independence X _||_ Y | given under a reference
    policy, checked on the enumerated joint."""
    joint = joint_distribution(d, policy)
    ids = [x, y, *given]
    table: Dict[Tuple[Outcome, ...], Fraction] = {}
    for key, p in joint.items():
        assignment = dict(key)
        table_key = tuple(assignment[i] for i in ids)
        table[table_key] = table.get(table_key, Fraction(0)) + p
    g_space = sorted({k[2:] for k in table})
    for g in g_space:
        pg = sum((p for k, p in table.items() if k[2:] == g), Fraction(0))
        if pg == 0:
            continue
        for xo in d.node(x).outcomes:
            px = sum(
                (p for k, p in table.items() if k[0] == xo and k[2:] == g),
                Fraction(0),
            ) / pg
            for yo in d.node(y).outcomes:
                py = sum(
                    (p for k, p in table.items() if k[1] == yo and k[2:] == g),
                    Fraction(0),
                ) / pg
                pxy = table.get((xo, yo, *g), Fraction(0)) / pg
                if abs(float(pxy - px * py)) > tol:
                    return False
    return True


# ============================================================
# Arc reversal
# ============================================================

def reverse_arc(d: InfluenceDiagram, src: str, dst: str) -> InfluenceDiagram:
    """Reverse a chance-to-chance arc by Bayes, preserving the joint.

    Both endpoints inherit the union of each other's former conditioning
    parents, per the standard construction.
    """
    if not d.has_arc(src, dst):
        raise DiagramError(f"no arc {src}->{dst}")
    if d.nodes[src].kind != CHANCE or d.nodes[dst].kind != CHANCE:
        raise ArcReversalError(
            "not-a-chance-arc", f"arc {src}->{dst} is not between chance nodes"
        )
    the_arc = Arc(src, dst)
    if d.reaches(src, dst, skip_arc=the_arc):
        raise ArcReversalError(
            "would-create-cycle",
            f"reversing {src}->{dst} would create a cycle (another directed "
            f"path exists)",
        )

    a_parents = tuple(d.cpts[src].parents)
    b_parents = tuple(p for p in d.cpts[dst].parents if p != src)
    shared = tuple(dict.fromkeys(a_parents + b_parents))  # stable union
    src_out = d.nodes[src].outcomes
    dst_out = d.nodes[dst].outcomes
    a_cpt, b_cpt = d.cpts[src], d.cpts[dst]

    def a_prob(ctx: Mapping[str, Outcome], ao: Outcome) -> Fraction:
        row = a_cpt.rows[tuple(ctx[p] for p in a_cpt.parents)]
        return row[src_out.index(ao)]

    def b_prob(ctx: Mapping[str, Outcome], ao: Outcome, bo: Outcome) -> Fraction:
        full = dict(ctx)
        full[src] = ao
        row = b_cpt.rows[tuple(full[p] for p in b_cpt.parents)]
        return row[dst_out.index(bo)]

    new_b_rows: Dict[Tuple[Outcome, ...], Tuple[Fraction, ...]] = {}
    new_a_rows: Dict[Tuple[Outcome, ...], Tuple[Fraction, ...]] = {}
    for combo in _combos([d.node(p).outcomes for p in shared]):
        ctx = dict(zip(shared, combo))
        marg = [
            sum((a_prob(ctx, ao) * b_prob(ctx, ao, bo) for ao in src_out), Fraction(0))
            for bo in dst_out
        ]
        new_b_rows[combo] = tuple(marg)
        for bo, pb in zip(dst_out, marg):
            if pb == 0:
                # unreachable context: any distribution preserves the joint
                row = tuple(Fraction(1, len(src_out)) for _ in src_out)
            else:
                row = tuple(
                    a_prob(ctx, ao) * b_prob(ctx, ao, bo) / pb for ao in src_out
                )
            new_a_rows[combo + (bo,)] = row

    out = d.copy()
    out.arcs = [a for a in d.arcs if not (a.src == src and a.dst == dst)]
    for p in shared:
        if not out.has_arc(p, src):
            out.arcs.append(Arc(p, src))
        if not out.has_arc(p, dst):
            out.arcs.append(Arc(p, dst))
    out.arcs.append(Arc(dst, src))
    out.cpts = dict(d.cpts)
    out.cpts[dst] = Cpt(parents=shared, rows=new_b_rows)
    out.cpts[src] = Cpt(parents=shared + (dst,), rows=new_a_rows)
    return out


# ============================================================
# Surgery helpers
# ============================================================

def with_prior(d: InfluenceDiagram, node_id: str, dist: Mapping[Outcome, Fraction]) -> InfluenceDiagram:
    """Replace the marginal of a parentless chance node."""
    node = d.node(node_id)
    if node.kind != CHANCE or d.parents(node_id):
        raise DiagramError(f"{node_id} is not a root chance node")
    row = tuple(Fraction(dist[o]) for o in node.outcomes)
    if sum(row, Fraction(0)) != 1:
        raise DiagramError(f"new prior for {node_id} does not sum to 1")
    out = d.copy()
    out.cpts = dict(d.cpts)
    out.cpts[node_id] = Cpt(parents=(), rows={(): row})
    return out


def observe_everywhere(d: InfluenceDiagram, node_id: str) -> InfluenceDiagram:
    """Add informational arcs from node_id into every decision (the perfect
    information transformation)."""
    if d.node(node_id).kind != CHANCE:
        raise DiagramError(f"{node_id} is not a chance node")
    out = d.copy()
    for dec in d.decision_ids():
        if not out.has_arc(node_id, dec):
            if out.reaches(dec, node_id):
                raise DiagramError(
                    f"cannot observe {node_id} before {dec}: it depends on "
                    f"the decision"
                )
            out.arcs = out.arcs + [Arc(node_id, dec)]
    return out


def force_decision(d: InfluenceDiagram, decision_id: str, action: Outcome) -> InfluenceDiagram:
    """Restrict a decision node to a single action."""
    node = d.node(decision_id)
    if node.kind != DECISION:
        raise DiagramError(f"{decision_id} is not a decision node")
    if action not in node.outcomes:
        raise DiagramError(f"{action!r} is not an action of {decision_id}")
    out = d.copy()
    out.nodes = dict(d.nodes)
    out.nodes[decision_id] = replace(node, outcomes=(action,))
    return out


def drop_measurement(d: InfluenceDiagram, key: str) -> InfluenceDiagram:
    """Remove a measurement triple (decision, error, measured value) by
    instrument or variable name, giving the plain no-instrument problem."""
    match = [m for m in d.measurements if key in (m.instrument, m.variable)]
    if not match:
        raise DiagramError(f"no measurement named {key!r}")
    m = match[0]
    gone = {m.decision, m.error, m.measured}
    out = d.copy()
    out.nodes = {k: v for k, v in d.nodes.items() if k not in gone}
    out.arcs = [a for a in d.arcs if a.src not in gone and a.dst not in gone]
    out.cpts = {k: v for k, v in d.cpts.items() if k not in gone}
    out.decision_order = tuple(x for x in d.decision_order if x not in gone)
    out.measurements = tuple(x for x in d.measurements if x is not m)
    if any(pid in gone for pid in d.utility.parents):
        raise DiagramError(
            f"cannot drop measurement {key!r}: the value node depends on it"
        )
    return out


def with_measurement_cost(d: InfluenceDiagram, key: str, cost: Fraction) -> InfluenceDiagram:
    """Charge `cost` utils whenever the measure action is taken, by folding
    the measure decision into the value table."""
    m = None
    for cand in d.measurements:
        if key in (cand.instrument, cand.variable):
            m = cand
            break
    if m is None:
        raise DiagramError(f"no measurement named {key!r}")
    cost = Fraction(cost)
    out = d.copy()
    out.measurements = tuple(
        replace(x, cost=cost) if x is m else x for x in d.measurements
    )
    if cost == 0:
        return out
    vid = d.value_node.id
    if m.decision in d.utility.parents:
        parents = d.utility.parents
        cells = {
            k: v - (cost if k[parents.index(m.decision)] == m.measure_action else 0)
            for k, v in d.utility.cells.items()
        }
    else:
        parents = d.utility.parents + (m.decision,)
        cells = {}
        for k, v in d.utility.cells.items():
            for action in d.node(m.decision).outcomes:
                charge = cost if action == m.measure_action else Fraction(0)
                cells[k + (action,)] = v - charge
        out.arcs = out.arcs + [Arc(m.decision, vid)]
    out.utility = UtilityTable(parents=parents, cells=cells)
    return out


def scale_utility(d: InfluenceDiagram, a: Fraction, b: Fraction) -> InfluenceDiagram:
    """Positive affine transform a*U + b of the utility table."""
    if a <= 0:
        raise DiagramError("affine transform needs a positive scale")
    out = d.copy()
    out.utility = UtilityTable(
        parents=d.utility.parents,
        cells={k: a * v + b for k, v in d.utility.cells.items()},
    )
    return out


# ============================================================
# DOT export
# ============================================================

def to_dot(d: InfluenceDiagram) -> str:
    """Graphviz rendering: circles for chance, boxes for decisions, a diamond
    for the value node, dashed informational arcs."""
    shapes = {CHANCE: "ellipse", DECISION: "box", VALUE: "diamond"}
    lines = ["digraph influence {", "  rankdir=LR;"]
    for n in d.nodes.values():
        lines.append(
            f'  "{n.id}" [shape={shapes[n.kind]} label="{n.display()}"];'
        )
    for a in d.arcs:
        style = ' [style=dashed]' if d.arc_kind(a) == "informational" else ""
        lines.append(f'  "{a.src}" -> "{a.dst}"{style};')
    lines.append("}")
    return "\n".join(lines) + "\n"

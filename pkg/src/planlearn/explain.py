"""Explanation construction and generalization.

The pipeline here turns one worked example into a reusable decision model:

1. ``prove`` builds the specific explanation — a backward-chaining proof that
   the example's recorded actions attained the recorded utility.
2. ``generalize`` replays the proof symbolically, dropping constants the
   example introduced while keeping constants the theory requires, and folds
   the result into a graph of chance / decision / deterministic / utility
   nodes with distributions attached.
3. ``to_influence_diagram`` emits that graph as a solvable influence diagram,
   inserting measurement instruments (measure-decision, error, reading) for
   every measurable chance variable.
4. ``answer_why`` reads direct antecedents off the graph.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

from .logic import (
    Atom,
    HornClause,
    Num,
    Subst,
    Sym,
    Term,
    Var,
    apply_subst,
    eval_builtin,
    is_builtin,
    rename_clause,
    unify,
    unify_terms,
    walk,
)
from .scenario import (
    DecisionVar,
    MeasurementSpec,
    Outcome,
    ProbFact,
    Scenario,
    outcome_str,
    outcome_term,
    term_outcome,
)
from . import diagram as dg

DEFAULT_DEPTH_BOUND = 32


class ProofError(ValueError):
    pass


class NoProofError(ProofError):
    pass


class DepthBoundError(ProofError):
    pass


class GeneralizationError(ValueError):
    pass


class UnknownEventError(KeyError):
    pass


# ============================================================
# Specific proofs
# ============================================================

FACT = "fact"
CLAUSE = "clause-application"
PROB_FACT = "prob-fact"
EXAMPLE = "example-given"
BUILTIN = "builtin-arithmetic"


@dataclass
class ProofNode:
    """One step of the specific explanation.

    `kind` says how the conclusion was justified; `ref` names the clause or
    probability fact used; `outcome` carries the resolved outcome for
    prob-fact steps (None marks an unobserved hypothesis leaf)."""

    conclusion: Atom
    kind: str
    ref: str = ""
    outcome: Optional[Outcome] = None
    children: Tuple["ProofNode", ...] = ()

    def leaves(self) -> List["ProofNode"]:
        if not self.children:
            return [self]
        out: List[ProofNode] = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


def default_goal(s: Scenario) -> Atom:
    """Prove that the training episode attained some stage utility."""
    return Atom("StageUtility", (Var("u"), Sym(s.example.state)))


class _ProverContext:
    def __init__(self, s: Scenario):
        self.scenario = s
        self.clauses_by_pred: Dict[str, List[HornClause]] = {}
        for c in s.all_clauses():
            self.clauses_by_pred.setdefault(c.head.pred, []).append(c)
        self.pf_by_pred: Dict[str, List[ProbFact]] = {}
        for pf in s.prob_facts:
            if pf.pattern is not None:
                self.pf_by_pred.setdefault(pf.pattern.pred, []).append(pf)
        self.example_by_pred: Dict[str, List[Atom]] = {}
        for a in s.example.atoms:
            self.example_by_pred.setdefault(a.pred, []).append(a)
        self.counter = itertools.count()
        self.hit_bound = False

    def fresh(self) -> str:
        return str(next(self.counter))

    def example_consistent(self, concl: Atom) -> bool:
        """A derived conclusion about an example-recorded predicate must
        match what the example recorded; this is what rejects explanations
        of outcomes that did not happen."""
        if concl.pred not in self.example_by_pred or not concl.is_ground():
            return True
        return concl in self.example_by_pred[concl.pred]


def _solve(goal: Atom, s0: Subst, depth: int, ctx: _ProverContext
           ) -> Iterator[Tuple[ProofNode, Subst]]:
    g = apply_subst(goal, s0)

    if is_builtin(g.pred):
        s1 = eval_builtin(g, s0)
        if s1 is not None:
            yield ProofNode(conclusion=goal, kind=BUILTIN), s1
        return

    if depth <= 0:
        ctx.hit_bound = True
        return

    for clause in ctx.clauses_by_pred.get(g.pred, ()):
        rc = rename_clause(clause, ctx.fresh())
        s1 = unify(g, rc.head, s0)
        if s1 is None:
            continue
        for children, s2 in _solve_seq(rc.body, s1, depth - 1, ctx):
            concl = apply_subst(rc.head, s2)
            if not ctx.example_consistent(concl):
                continue
            kind = CLAUSE if rc.body else FACT
            yield ProofNode(conclusion=rc.head, kind=kind,
                            ref=clause.clause_id, children=children), s2

    for pf in ctx.pf_by_pred.get(g.pred, ()):
        assert pf.pattern is not None
        patt_clause = rename_clause(HornClause(pf.pattern), ctx.fresh())
        patt = patt_clause.head
        s1 = unify(g, patt, s0)
        if s1 is None:
            continue
        value_var = _value_var(patt)
        matched_example = False
        for ex in ctx.example_by_pred.get(g.pred, ()):
            s2 = unify(g, ex, s1)
            if s2 is None:
                continue
            matched_example = True
            outcome = None
            if value_var is not None:
                outcome = term_outcome(walk(value_var, s2))
                if outcome not in pf.outcomes:
                    continue  # recorded a value outside the declared space
            yield ProofNode(conclusion=goal, kind=PROB_FACT, ref=pf.name,
                            outcome=outcome), s2
        if matched_example:
            continue
        if value_var is None:
            # unobserved hypothesis: accept the (ground) proposition as a
            # leaf carrying the declared distribution
            if apply_subst(g, s1).is_ground():
                yield ProofNode(conclusion=goal, kind=PROB_FACT, ref=pf.name,
                                outcome=None), s1
            continue
        bound = walk(value_var, s1)
        if isinstance(bound, Var):
            for o in pf.outcomes:
                s2 = unify_terms(bound, outcome_term(o), s1)
                if s2 is not None:
                    yield ProofNode(conclusion=goal, kind=PROB_FACT,
                                    ref=pf.name, outcome=o), s2
        else:
            o = term_outcome(bound)
            if o in pf.outcomes:
                yield ProofNode(conclusion=goal, kind=PROB_FACT, ref=pf.name,
                                outcome=o), s1

    # Example atoms ground only predicates the theory cannot derive; derivable
    # predicates must be explained, not assumed.
    if g.pred not in ctx.clauses_by_pred and g.pred not in ctx.pf_by_pred:
        for ex in ctx.example_by_pred.get(g.pred, ()):
            s1 = unify(g, ex, s0)
            if s1 is not None:
                yield ProofNode(conclusion=goal, kind=EXAMPLE), s1


def _solve_seq(goals: Sequence[Atom], s0: Subst, depth: int,
               ctx: _ProverContext
               ) -> Iterator[Tuple[Tuple[ProofNode, ...], Subst]]:
    if not goals:
        yield (), s0
        return
    head, rest = goals[0], goals[1:]
    for node, s1 in _solve(head, s0, depth, ctx):
        for tail, s2 in _solve_seq(rest, s1, depth, ctx):
            yield (node,) + tail, s2


def _value_var(patt: Atom) -> Optional[Var]:
    for a in patt.args:
        if isinstance(a, Var) and a.name.split("#")[0] == "VALUE":
            return a
    return None


def _finalize(node: ProofNode, s: Subst) -> ProofNode:
    return ProofNode(
        conclusion=apply_subst(node.conclusion, s),
        kind=node.kind,
        ref=node.ref,
        outcome=node.outcome,
        children=tuple(_finalize(c, s) for c in node.children),
    )


def prove(goal: Atom, s: Scenario,
          depth_bound: int = DEFAULT_DEPTH_BOUND) -> ProofNode:
    """Backward-chain from the goal through clauses, probability facts, and
    example givens; first proof in declaration order wins."""
    ctx = _ProverContext(s)
    for node, subst in _solve(goal, {}, depth_bound, ctx):
        return _finalize(node, subst)
    if ctx.hit_bound:
        raise DepthBoundError(
            f"no proof of {goal!r} within depth {depth_bound}"
        )
    raise NoProofError(f"goal {goal!r} is not entailed by theory + example")


def prove_all(goal: Atom, s: Scenario,
              depth_bound: int = DEFAULT_DEPTH_BOUND) -> List[ProofNode]:
    """Every proof reachable within the depth bound, in search order."""
    ctx = _ProverContext(s)
    return [_finalize(n, sub) for n, sub in _solve(goal, {}, depth_bound, ctx)]


def operational_diagnostics(p: ProofNode, s: Scenario) -> List[str]:
    """An explanation is operational when its leaves bottom out in declared
    observable or distribution-backed terms."""
    obs = set(s.observables)
    diags = []
    for leaf in p.leaves():
        if leaf.kind == EXAMPLE and leaf.conclusion.pred not in obs:
            diags.append(
                f"leaf {leaf.conclusion!r} is an example given outside the "
                f"declared observables"
            )
        if leaf.kind == FACT and leaf.conclusion.pred not in obs:
            diags.append(
                f"leaf {leaf.conclusion!r} is a theory fact outside the "
                f"declared observables"
            )
    return diags


def format_proof(p: ProofNode, indent: int = 0) -> str:
    pad = "  " * indent
    if p.kind == PROB_FACT:
        if p.outcome is None:
            note = f"[{p.kind} {p.ref}: hypothesis]"
        else:
            note = f"[{p.kind} {p.ref} = {outcome_str(p.outcome)}]"
    elif p.kind in (CLAUSE, FACT):
        note = f"[{p.kind} {p.ref}]"
    else:
        note = f"[{p.kind}]"
    lines = [f"{pad}{p.conclusion!r}  {note}"]
    for c in p.children:
        lines.append(format_proof(c, indent + 1))
    return "\n".join(lines)


# ============================================================
# Generalization
# ============================================================

@dataclass
class ExplanationNode:
    """A node of the generalized explanation.

    `proposition` is the generalized atom; `query` is the same atom with the
    outcome slot opened to a fresh variable, used when the node's behavior is
    re-derived from the theory; `slot` is the outcome argument position."""

    id: str
    kind: str                      # chance | decision | deterministic | utility
    proposition: Atom
    query: Optional[Atom] = None
    slot: Optional[int] = None
    dist: Optional[ProbFact] = None
    decision: Optional[DecisionVar] = None
    measurement: Optional[MeasurementSpec] = None
    clause_ids: Tuple[str, ...] = ()


@dataclass
class ExplanationGraph:
    nodes: Dict[str, ExplanationNode]
    edges: List[Tuple[str, str]]                 # antecedent -> consequent
    informational_edges: List[Tuple[str, str]]
    bindings: Subst                              # generalized var -> dropped constant
    context: Tuple[Atom, ...]                    # static facts kept aside
    proof: ProofNode
    pairs: Dict[str, Tuple[Atom, Atom]]          # id -> (generalized, specific)

    def node(self, node_id: str) -> ExplanationNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownEventError(node_id) from None

    def parents(self, node_id: str) -> List[str]:
        ordered = []
        for src, dst in self.edges + self.informational_edges:
            if dst == node_id and src not in ordered:
                ordered.append(src)
        return [nid for nid in self.nodes if nid in ordered]


@dataclass
class _GenNode:
    proof: ProofNode
    goal: Atom                       # generalized goal atom (pre-walk)
    clause: Optional[HornClause]     # renamed instance, for clause nodes
    children: List["_GenNode"] = field(default_factory=list)

    def conclusion(self, s: Subst) -> Atom:
        base = self.clause.head if self.clause is not None else self.goal
        return apply_subst(base, s)


def _regress(p: ProofNode, goal: Atom, s0: Subst, ctx: _ProverContext
             ) -> Tuple[_GenNode, Subst]:
    """Replay the proof skeleton symbolically: same clauses, same structure,
    but never consulting the example, so its constants fall away."""
    if p.kind in (CLAUSE, FACT):
        clause = _clause_by_id(ctx.scenario, p.ref)
        rc = rename_clause(clause, "g" + ctx.fresh())
        s1 = unify(goal, rc.head, s0)
        if s1 is None:
            raise GeneralizationError(
                f"clause {p.ref} no longer unifies with {goal!r}"
            )
        node = _GenNode(proof=p, goal=goal, clause=rc)
        for child, body_atom in zip(p.children, rc.body):
            gen_child, s1 = _regress(child, body_atom, s1, ctx)
            node.children.append(gen_child)
        return node, s1
    if p.kind == PROB_FACT:
        pf = ctx.scenario.prob_fact(p.ref)
        assert pf.pattern is not None
        patt = rename_clause(HornClause(pf.pattern), "g" + ctx.fresh()).head
        s1 = unify(goal, patt, s0)
        if s1 is None:
            raise GeneralizationError(
                f"pattern of {p.ref} no longer unifies with {goal!r}"
            )
        return _GenNode(proof=p, goal=goal, clause=None), s1
    # example givens and builtins stay as their (generalized) goal atom
    return _GenNode(proof=p, goal=goal, clause=None), s0


def _clause_by_id(s: Scenario, clause_id: str) -> HornClause:
    for c in s.all_clauses():
        if c.clause_id == clause_id:
            return c
    raise GeneralizationError(f"unknown clause id {clause_id!r}")


def generalize(p: ProofNode, s: Scenario) -> ExplanationGraph:
    """Goal-regress the specific proof into a generalized explanation graph.

    Constants that entered only through the training example become
    variables; outcomes of declared probability facts become
    distribution-bearing chance nodes; builtin steps and conditional-fact
    rows fold into the node they determine."""
    ctx = _ProverContext(s)
    root_goal = Atom(p.conclusion.pred,
                     tuple(Var(f"root{i}") for i in range(p.conclusion.arity)))
    gen_root, sigma = _regress(p, root_goal, {}, ctx)

    bindings: Subst = {}
    pairs: List[Tuple[_GenNode, Atom, Atom]] = []

    def collect(gn: _GenNode) -> None:
        gen_c = gn.conclusion(sigma)
        spec_c = gn.proof.conclusion
        s2 = unify(gen_c, spec_c, bindings)
        if s2 is None:
            raise GeneralizationError(
                f"generalized {gen_c!r} does not subsume specific {spec_c!r}"
            )
        bindings.clear()
        bindings.update(s2)
        pairs.append((gn, gen_c, spec_c))
        for c in gn.children:
            collect(c)

    collect(gen_root)

    state_sym = Sym(s.example.state)
    decision_preds = {d.predicate: d for d in s.problem.decisions}
    graph = ExplanationGraph(
        nodes={}, edges=[], informational_edges=[], bindings=dict(bindings),
        context=(), proof=p, pairs={},
    )
    context_atoms: List[Atom] = []
    fresh_counter = itertools.count()

    def fresh_var() -> Var:
        return Var(f"o{next(fresh_counter)}")

    def relax(atom: Atom, pos: int, node_id: str) -> Atom:
        """Open one argument position to a fresh variable, remembering the
        constant it replaced (part of what generalization drops)."""
        args = list(atom.args)
        old = args[pos]
        if isinstance(old, Var):
            return atom
        v = fresh_var()
        args[pos] = v
        graph.bindings[v] = old
        return Atom(atom.pred, tuple(args))

    def add_node(node: ExplanationNode, gen_c: Atom, spec_c: Atom) -> None:
        if node.id in graph.nodes:
            existing = graph.nodes[node.id]
            if unify(existing.proposition, node.proposition) is None:
                raise GeneralizationError(
                    f"node {node.id} arises twice with incompatible "
                    f"propositions"
                )
            return
        graph.nodes[node.id] = node
        graph.pairs[node.id] = (gen_c, spec_c)

    def add_edge(src: str, dst: str) -> None:
        if (src, dst) not in graph.edges:
            graph.edges.append((src, dst))

    # Walk the generalized tree, classifying nodes and wiring child -> parent
    # edges between the kept ones.
    def build(gn: _GenNode, gen_c: Atom, spec_c: Atom,
              kept_parent: Optional[str], parent_clause: Optional[HornClause],
              body_index: Optional[int], is_root: bool) -> None:
        p_node = gn.proof
        node_id: Optional[str] = None

        if is_root:
            prop = gen_c
            if prop.args and isinstance(walk(prop.args[0], sigma), Num):
                prop = relax(apply_subst(prop, sigma), 0, "Value")
            node = ExplanationNode(
                id="Value", kind="utility", proposition=prop,
                clause_ids=(p_node.ref,),
            )
            add_node(node, gen_c, spec_c)
            node_id = "Value"
        elif p_node.kind in (CLAUSE, FACT):
            folded = [c for c in gn.children
                      if c.proof.kind == PROB_FACT
                      and ctx.scenario.prob_fact(c.proof.ref).is_conditional]
            pred = gen_c.pred
            prop = apply_subst(gen_c, sigma)
            if pred == s.problem.outcome_predicate:
                slot = _pattern_slot(s.problem.outcome_pattern)
                prop = relax(prop, slot, pred)
            else:
                slot = _flow_slot(parent_clause, body_index, spec_c, state_sym)
                prop = relax(prop, slot, pred)
            query = _open_query(prop, slot, fresh_var)
            if folded:
                pf = ctx.scenario.prob_fact(folded[0].proof.ref)
                node = ExplanationNode(
                    id=pred, kind="chance", proposition=prop, query=query,
                    slot=slot, dist=pf, clause_ids=(p_node.ref,),
                )
            else:
                node = ExplanationNode(
                    id=pred, kind="deterministic", proposition=prop,
                    query=query, slot=slot, clause_ids=(p_node.ref,),
                )
            add_node(node, gen_c, spec_c)
            node_id = pred
        elif p_node.kind == PROB_FACT:
            pf = ctx.scenario.prob_fact(p_node.ref)
            if pf.is_conditional:
                node_id = None      # folded into the consuming clause node
            else:
                prop = apply_subst(gen_c, sigma)
                slot = _maybe_slot(pf.pattern)
                query = _open_query(prop, slot, fresh_var)
                node = ExplanationNode(
                    id=pf.name, kind="chance", proposition=prop, query=query,
                    slot=slot, dist=pf,
                )
                add_node(node, gen_c, spec_c)
                node_id = pf.name
        elif p_node.kind == EXAMPLE:
            pred = gen_c.pred
            if pred in decision_preds:
                dec = decision_preds[pred]
                prop = apply_subst(gen_c, sigma)
                slot = _action_slot(prop, dec)
                prop = relax(prop, slot, dec.name)
                node = ExplanationNode(
                    id=dec.name, kind="decision", proposition=prop,
                    query=prop, slot=slot, decision=dec,
                )
                add_node(node, gen_c, spec_c)
                node_id = dec.name
            else:
                atom = apply_subst(gen_c, sigma)
                if _alpha_key(atom) not in {
                    _alpha_key(a) for a in context_atoms
                }:
                    context_atoms.append(atom)
        # builtins fold silently into their clause node

        if node_id is not None and kept_parent is not None:
            add_edge(node_id, kept_parent)
        attach_to = node_id if node_id is not None else kept_parent
        for i, child in enumerate(gn.children):
            child_gen = child.conclusion(sigma)
            build(child, child_gen, child.proof.conclusion, attach_to,
                  gn.clause, i, False)

    build(gen_root, gen_root.conclusion(sigma), p.conclusion, None, None,
          None, True)
    graph.context = tuple(context_atoms)

    _insert_measurements(graph, s, fresh_var)
    _check_acyclic(graph)
    return graph


def _pattern_slot(pattern: Optional[Atom]) -> int:
    slot = _maybe_slot(pattern)
    if slot is None:
        raise GeneralizationError(f"pattern {pattern!r} has no ?VALUE slot")
    return slot


def _maybe_slot(pattern: Optional[Atom]) -> Optional[int]:
    if pattern is None:
        return None
    for i, a in enumerate(pattern.args):
        if isinstance(a, Var) and a.name.split("#")[0] == "VALUE":
            return i
    return None


def _action_slot(prop: Atom, dec: DecisionVar) -> int:
    for i, a in enumerate(prop.args):
        if isinstance(a, Sym) and a.name in dec.actions:
            return i
    for i, a in enumerate(prop.args):
        if isinstance(a, Var):
            return i
    raise GeneralizationError(f"no action slot in {prop!r}")


def _alpha_key(atom: Atom) -> Tuple:
    """Variable names do not distinguish context facts; two atoms that match
    the same goals are one constraint."""
    names: Dict[Var, int] = {}
    key: List = [atom.pred]
    for a in atom.args:
        if isinstance(a, Var):
            key.append(("var", names.setdefault(a, len(names))))
        else:
            key.append(a)
    return tuple(key)


def _flow_slot(parent_clause: Optional[HornClause], body_index: Optional[int],
               spec_c: Atom, state_sym: Sym) -> int:
    """The outcome argument of a derived node: the variable its consumer
    actually uses elsewhere (head or sibling atoms), state symbol excluded."""
    if parent_clause is None or body_index is None:
        raise GeneralizationError(f"derived node {spec_c!r} has no consumer")
    body_atom = parent_clause.body[body_index]
    others = [parent_clause.head] + [
        b for j, b in enumerate(parent_clause.body) if j != body_index
    ]
    used: Set[Var] = set()
    for a in others:
        used.update(a.variables())
    candidates = [
        i for i, t in enumerate(body_atom.args)
        if isinstance(t, Var) and t in used
        and not (i < spec_c.arity and spec_c.args[i] == state_sym)
    ]
    if len(candidates) != 1:
        raise GeneralizationError(
            f"cannot identify the outcome slot of {body_atom!r}: "
            f"candidates {candidates}"
        )
    return candidates[0]


def _open_query(prop: Atom, slot: Optional[int], fresh_var) -> Atom:
    if slot is None:
        return prop
    args = list(prop.args)
    args[slot] = fresh_var()
    return Atom(prop.pred, tuple(args))


def _insert_measurements(graph: ExplanationGraph, s: Scenario,
                         fresh_var) -> None:
    """Graft instrument knowledge onto the generalized graph: a measure
    decision, an error variable, and a reading that is a deterministic
    combination of true value and error, feeding later decisions."""
    order = list(s.problem.information_order)
    for m in s.measurements:
        if m.variable not in graph.nodes:
            continue
        dec = s.problem.decision(m.decision)
        state_var = fresh_var()
        if dec.name not in graph.nodes:
            graph.nodes[dec.name] = ExplanationNode(
                id=dec.name, kind="decision",
                proposition=Atom(dec.predicate, (fresh_var(), state_var)),
                slot=0, decision=dec,
            )
        err_pf = ProbFact(
            name=m.error_node, outcomes=m.error_outcomes, tag="definition",
            pattern=None, dist=m.error_dist,
        )
        graph.nodes[m.error_node] = ExplanationNode(
            id=m.error_node, kind="chance",
            proposition=Atom(m.error_node, (fresh_var(), state_var)),
            slot=0, dist=err_pf,
        )
        graph.nodes[m.measured_node] = ExplanationNode(
            id=m.measured_node, kind="deterministic",
            proposition=Atom(m.measured_node, (fresh_var(), state_var)),
            slot=0, measurement=m,
        )
        for src in (m.variable, dec.name, m.error_node):
            graph.edges.append((src, m.measured_node))
        if dec.name in order:
            for later in order[order.index(dec.name) + 1:]:
                if later in graph.nodes:
                    graph.informational_edges.append(
                        (m.measured_node, later)
                    )


def _check_acyclic(graph: ExplanationGraph) -> None:
    indeg = {nid: 0 for nid in graph.nodes}
    alledges = graph.edges + graph.informational_edges
    for src, dst in alledges:
        indeg[dst] += 1
    frontier = [nid for nid, d in indeg.items() if d == 0]
    seen = 0
    while frontier:
        nid = frontier.pop()
        seen += 1
        for src, dst in alledges:
            if src == nid:
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    frontier.append(dst)
    if seen != len(graph.nodes):
        raise GeneralizationError("generalized explanation graph is cyclic")


def check_subsumption(g: ExplanationGraph) -> bool:
    """Substituting the recorded bindings into every generalized node must
    reproduce the specific proof's ground propositions."""
    for node_id, (gen_c, spec_c) in g.pairs.items():
        if unify(apply_subst(gen_c, g.bindings), spec_c) is None:
            return False
    return True


def format_graph(g: ExplanationGraph) -> str:
    lines = ["nodes:"]
    for n in g.nodes.values():
        extra = ""
        if n.dist is not None:
            dist = n.dist
            if dist.is_conditional:
                extra = f"  dist={dist.name}(given {', '.join(dist.given)})"
            else:
                probs = ", ".join(
                    f"{outcome_str(o)}:{p}" for o, p in dist.marginal().items()
                )
                extra = f"  dist={{{probs}}}"
        lines.append(f"  {n.id} [{n.kind}] {n.proposition!r}{extra}")
    lines.append("influences:")
    for src, dst in g.edges:
        lines.append(f"  {src} -> {dst}")
    for src, dst in g.informational_edges:
        lines.append(f"  {src} -> {dst} (informational)")
    if g.context:
        lines.append("context: " + " ".join(repr(a) for a in g.context))
    if g.bindings:
        drops = ", ".join(
            f"{v!r}={t!r}" for v, t in sorted(
                g.bindings.items(), key=lambda kv: kv[0].name
            )
        )
        lines.append(f"dropped bindings: {drops}")
    return "\n".join(lines)


# ============================================================
# Why-questions
# ============================================================

def answer_why(g: ExplanationGraph, event: str) -> List[ExplanationNode]:
    """Direct antecedents of an event in the generalized explanation.

    For chance, deterministic, and utility nodes these are the graph
    parents.  For a decision the relevant antecedents are what the choice is
    weighed on: the determinants of the valued outcome, the information in
    hand, and the utility assignment itself."""
    name = event.split("=", 1)[0].strip()
    node = g.node(name)
    if node.kind != "decision":
        return [g.nodes[pid] for pid in g.parents(node.id)]
    value_nodes = [n for n in g.nodes.values() if n.kind == "utility"]
    out: Set[str] = set()
    for vn in value_nodes:
        for chance_parent in g.parents(vn.id):
            if g.nodes[chance_parent].kind == "chance":
                for gp in g.parents(chance_parent):
                    if g.nodes[gp].kind in ("chance", "deterministic") \
                            and gp != node.id:
                        out.add(gp)
    for pid in g.parents(node.id):
        if g.nodes[pid].kind in ("chance", "deterministic"):
            out.add(pid)
    ordered = [nid for nid in g.nodes
               if nid in out and g.nodes[nid].kind != "utility"]
    ordered.extend(vn.id for vn in value_nodes)
    return [g.nodes[nid] for nid in ordered]


# ============================================================
# Diagram synthesis
# ============================================================

class _Evaluator:
    """Derive a node's outcome distribution from the theory with its graph
    parents clamped; conditional facts contribute their row probabilities,
    builtins are evaluated, context facts match freely."""

    def __init__(self, g: ExplanationGraph, s: Scenario,
                 clamped: Dict[str, Outcome]):
        self.g = g
        self.s = s
        self.clamped = clamped          # node id -> outcome
        self.by_query_pred: Dict[str, List[ExplanationNode]] = {}
        for nid, val in clamped.items():
            n = g.nodes[nid]
            if n.query is not None:
                self.by_query_pred.setdefault(n.query.pred, []).append(n)
        self.clauses_by_pred: Dict[str, List[HornClause]] = {}
        for c in s.clauses:
            self.clauses_by_pred.setdefault(c.head.pred, []).append(c)
        self.pf_by_pred = {
            pf.pattern.pred: pf for pf in s.prob_facts
            if pf.pattern is not None and pf.is_conditional
        }
        self.counter = itertools.count()

    def dist(self, query: Atom, slot: int, depth: int = DEFAULT_DEPTH_BOUND
             ) -> Dict[Outcome, Fraction]:
        out: Dict[Outcome, Fraction] = {}
        for sub, prob in self._solve(query, {}, depth):
            val = walk(query.args[slot], sub)
            o = term_outcome(val)
            out[o] = out.get(o, Fraction(0)) + prob
        return out

    def _solve(self, goal: Atom, s0: Subst, depth: int
               ) -> Iterator[Tuple[Subst, Fraction]]:
        g = apply_subst(goal, s0)
        if is_builtin(g.pred):
            s1 = eval_builtin(g, s0)
            if s1 is not None:
                yield s1, Fraction(1)
            return
        if depth <= 0:
            raise DepthBoundError(f"derivation too deep at {g!r}")
        for node in self.by_query_pred.get(g.pred, ()):
            assert node.query is not None
            patt = rename_clause(
                HornClause(node.query), f"e{next(self.counter)}"
            ).head
            s1 = unify(g, patt, s0)
            if s1 is None:
                continue
            if node.slot is not None:
                s2 = unify_terms(
                    patt.args[node.slot],
                    outcome_term(self.clamped[node.id]), s1,
                )
                if s2 is None:
                    continue
                yield s2, Fraction(1)
            else:
                yield s1, Fraction(1)
            return
        if g.pred in self.pf_by_pred:
            pf = self.pf_by_pred[g.pred]
            assert pf.pattern is not None
            patt = rename_clause(
                HornClause(pf.pattern), f"e{next(self.counter)}"
            ).head
            s1 = unify(g, patt, s0)
            if s1 is None:
                return
            key = tuple(self.clamped[parent] for parent in pf.given)
            row = pf.row_map().get(key)
            if row is None:
                raise dg.DiagramError(
                    f"{pf.name}: no row for parents {key!r}"
                )
            vv = _value_var(patt)
            assert vv is not None
            for o, prob in zip(pf.outcomes, row):
                if prob == 0:
                    continue
                s2 = unify_terms(walk(vv, s1), outcome_term(o), s1)
                if s2 is not None:
                    yield s2, prob
            return
        for clause in self.clauses_by_pred.get(g.pred, ()):
            rc = rename_clause(clause, f"e{next(self.counter)}")
            s1 = unify(g, rc.head, s0)
            if s1 is None:
                continue
            yield from self._solve_seq(rc.body, s1, depth - 1)
        for atom in self.g.context:
            if atom.pred != g.pred:
                continue
            patt = rename_clause(
                HornClause(atom), f"e{next(self.counter)}"
            ).head
            s1 = unify(g, patt, s0)
            if s1 is not None:
                yield s1, Fraction(1)

    def _solve_seq(self, goals: Sequence[Atom], s0: Subst, depth: int
                   ) -> Iterator[Tuple[Subst, Fraction]]:
        if not goals:
            yield s0, Fraction(1)
            return
        head, rest = goals[0], goals[1:]
        for s1, p1 in self._solve(head, s0, depth):
            for s2, p2 in self._solve_seq(rest, s1, depth):
                yield s2, p1 * p2


def _topo_ids(g: ExplanationGraph) -> List[str]:
    alledges = g.edges + g.informational_edges
    indeg = {nid: 0 for nid in g.nodes}
    for src, dst in alledges:
        indeg[dst] += 1
    order: List[str] = []
    frontier = [nid for nid in g.nodes if indeg[nid] == 0]
    while frontier:
        nid = frontier.pop(0)
        order.append(nid)
        for src, dst in alledges:
            if src == nid:
                indeg[dst] -= 1
                if indeg[dst] == 0 and dst not in frontier:
                    frontier.append(dst)
        frontier.sort(key=list(g.nodes).index)
    return order


def to_influence_diagram(g: ExplanationGraph, s: Scenario) -> dg.InfluenceDiagram:
    """Emit the generalized explanation as an influence diagram.

    Chance nodes carry their declared distributions; deterministic nodes get
    0/1 rows derived from the theory; the outcome node is conditioned on the
    decisions named in the utility table; the value node and its cells come
    from the utility table; measurement triples and no-forgetting arcs
    complete the structure."""
    nodes: Dict[str, dg.Node] = {}
    arcs: List[dg.Arc] = []
    cpts: Dict[str, dg.Cpt] = {}

    chance_parents: Dict[str, List[str]] = {
        nid: [src for src, dst in g.edges if dst == nid] for nid in g.nodes
    }
    outcome_nodes = [
        n for n in g.nodes.values()
        if n.kind == "chance" and n.proposition.pred == s.problem.outcome_predicate
    ]
    value_nodes = [n for n in g.nodes.values() if n.kind == "utility"]
    if len(value_nodes) != 1 or len(outcome_nodes) > 1:
        raise GeneralizationError(
            "expected exactly one utility node and at most one outcome node"
        )
    value_id = value_nodes[0].id

    action_syms = {a: d for d in s.problem.decisions for a in d.actions}
    gating: List[str] = []
    for entry in s.problem.utilities:
        for sym in entry.when:
            if sym in action_syms and action_syms[sym].name not in gating:
                gating.append(action_syms[sym].name)

    order = [nid for nid in _topo_ids(g) if nid != value_id]
    # make sure gating decisions precede the outcome node they condition
    if outcome_nodes:
        oid = outcome_nodes[0].id
        for dec in gating:
            if order.index(dec) > order.index(oid):
                order.remove(dec)
                order.insert(order.index(oid), dec)

    for nid in order:
        n = g.nodes[nid]
        if n.kind == "decision":
            assert n.decision is not None
            nodes[nid] = dg.Node(nid, dg.DECISION,
                                 tuple(n.decision.actions), label=nid)
        elif n.kind == "chance" and n.dist is not None and not n.dist.is_conditional:
            nodes[nid] = dg.Node(nid, dg.CHANCE, tuple(n.dist.outcomes),
                                 label=nid)
            assert n.dist.dist is not None
            cpts[nid] = dg.Cpt(parents=(), rows={(): tuple(n.dist.dist)})
        elif n.kind == "chance":
            _outcome_node_cpt(n, g, s, gating, nodes, cpts, arcs)
        elif n.kind == "deterministic" and n.measurement is not None:
            _measured_node_cpt(n, g, s, nodes, cpts)
        elif n.kind == "deterministic":
            _derived_node_cpt(n, g, s, chance_parents[nid], nodes, cpts)
        else:
            raise GeneralizationError(f"unexpected node {nid} ({n.kind})")

    for src, dst in g.edges:
        if dst == value_id:
            continue
        arcs.append(dg.Arc(src, dst))
    for src, dst in g.informational_edges:
        arcs.append(dg.Arc(src, dst))

    # no-forgetting: each decision and its information feed all later ones
    decision_order = tuple(
        d for d in s.problem.information_order if d in nodes
    )
    known: List[str] = []
    for dec in decision_order:
        for src in known:
            if not any(a.src == src and a.dst == dec for a in arcs):
                arcs.append(dg.Arc(src, dec))
        known.append(dec)
        for a in list(arcs):
            if a.dst == dec and a.src not in known:
                known.append(a.src)

    utility = _utility_table(s, outcome_nodes[0].id if outcome_nodes else None,
                             gating, nodes)
    nodes[value_id] = dg.Node(value_id, dg.VALUE, (), label=value_id)
    for pid in utility.parents:
        arcs.append(dg.Arc(pid, value_id))

    measurements = tuple(
        dg.MeasurementNodes(
            instrument=m.instrument, variable=m.variable, decision=m.decision,
            error=m.error_node, measured=m.measured_node,
            measure_action=m.measure_action,
            no_measure_action=m.no_measure_action,
            none_value=m.none_value, cost=m.cost,
        )
        for m in s.measurements if m.measured_node in nodes
    )
    hypothesis = None
    for pf in s.prob_facts:
        if pf.tag == "prior-belief" and len(pf.outcomes) == 2 and pf.name in nodes:
            hypothesis = dg.HypothesisInfo(
                node=pf.name, favored=pf.outcomes[0],
                alternative=pf.outcomes[1],
            )
            break

    d = dg.InfluenceDiagram(
        nodes=nodes, arcs=arcs, cpts=cpts, utility=utility,
        decision_order=decision_order, measurements=measurements,
        hypothesis=hypothesis,
    )
    diags = dg.validate(d)
    if diags:
        raise dg.DiagramError("; ".join(diags))
    return d


def _combo_iter(parent_ids: Sequence[str], nodes: Dict[str, dg.Node]):
    spaces = [nodes[pid].outcomes for pid in parent_ids]
    return itertools.product(*spaces) if spaces else [()]


def _derived_node_cpt(n: ExplanationNode, g: ExplanationGraph, s: Scenario,
                      parent_ids: List[str], nodes: Dict[str, dg.Node],
                      cpts: Dict[str, dg.Cpt]) -> None:
    assert n.query is not None and n.slot is not None
    parents = tuple(parent_ids)
    rows: Dict[Tuple[Outcome, ...], Dict[Outcome, Fraction]] = {}
    space: List[Outcome] = []
    for combo in _combo_iter(parents, nodes):
        clamped = dict(zip(parents, combo))
        ev = _Evaluator(g, s, clamped)
        dist = ev.dist(n.query, n.slot)
        if not dist:
            raise dg.DiagramError(
                f"{n.id}: theory derives no outcome for parents {clamped!r}"
            )
        total = sum(dist.values(), Fraction(0))
        if total != 1:
            raise dg.DiagramError(
                f"{n.id}: derivation for {clamped!r} has total mass {total}"
            )
        rows[combo] = dist
        for o in dist:
            if o not in space:
                space.append(o)
    nodes[n.id] = dg.Node(n.id, dg.CHANCE, tuple(space), label=n.id)
    cpts[n.id] = dg.Cpt(
        parents=parents,
        rows={
            combo: tuple(dist.get(o, Fraction(0)) for o in space)
            for combo, dist in rows.items()
        },
    )


def _outcome_node_cpt(n: ExplanationNode, g: ExplanationGraph, s: Scenario,
                      gating: List[str], nodes: Dict[str, dg.Node],
                      cpts: Dict[str, dg.Cpt], arcs: List[dg.Arc]) -> None:
    """The valued outcome: derived from the theory under outcome-bearing
    action combinations, a synthetic pass-through outcome otherwise."""
    assert n.query is not None and n.slot is not None
    chance_parents = tuple(
        src for src, dst in g.edges if dst == n.id
    )
    parents = chance_parents + tuple(gating)
    action_syms = {a: d.name for d in s.problem.decisions for a in d.actions}

    def entry_for(actions: Dict[str, Outcome]):
        for entry in s.problem.utilities:
            need = [w for w in entry.when if w in action_syms]
            if all(actions.get(action_syms[w]) == w for w in need):
                return entry
        return None

    rows: Dict[Tuple[Outcome, ...], Dict[Outcome, Fraction]] = {}
    # theory-declared outcomes first, synthetic pass-through outcomes after
    space: List[Outcome] = list(n.dist.outcomes) if n.dist is not None else []
    for combo in _combo_iter(parents, nodes):
        clamped = dict(zip(parents, combo))
        actions = {dec: clamped[dec] for dec in gating}
        entry = entry_for(actions)
        if entry is None:
            raise dg.DiagramError(
                f"{n.id}: no utility entry covers actions {actions!r}"
            )
        has_outcome_sym = any(w not in action_syms for w in entry.when)
        if has_outcome_sym:
            ev = _Evaluator(g, s,
                            {k: v for k, v in clamped.items()
                             if k in chance_parents})
            dist = ev.dist(n.query, n.slot)
            total = sum(dist.values(), Fraction(0))
            if total != 1:
                raise dg.DiagramError(
                    f"{n.id}: outcome derivation for {clamped!r} has mass "
                    f"{total}"
                )
        else:
            synth = next(w for w in entry.when if w in action_syms)
            dist = {synth: Fraction(1)}
        rows[combo] = dist
        for o in dist:
            if o not in space:
                space.append(o)
    nodes[n.id] = dg.Node(n.id, dg.CHANCE, tuple(space), label=n.id)
    cpts[n.id] = dg.Cpt(
        parents=parents,
        rows={
            combo: tuple(dist.get(o, Fraction(0)) for o in space)
            for combo, dist in rows.items()
        },
    )
    for dec in gating:
        arcs.append(dg.Arc(dec, n.id))


def _measured_node_cpt(n: ExplanationNode, g: ExplanationGraph, s: Scenario,
                       nodes: Dict[str, dg.Node],
                       cpts: Dict[str, dg.Cpt]) -> None:
    m = n.measurement
    assert m is not None
    dec = s.problem.decision(m.decision)
    parents = (dec.name, m.variable, m.error_node)
    var_space = nodes[m.variable].outcomes
    err_space = nodes[m.error_node].outcomes

    def combined(v: Outcome, e: Outcome) -> Outcome:
        if not isinstance(v, Fraction) or not isinstance(e, Fraction):
            raise dg.DiagramError(
                f"measurement of {m.variable}: non-numeric outcomes"
            )
        return v * e if m.combine == "product" else v + e

    space: List[Outcome] = [m.none_value]
    for v in var_space:
        for e in err_space:
            c = combined(v, e)
            if c not in space:
                space.append(c)
    rows: Dict[Tuple[Outcome, ...], Tuple[Fraction, ...]] = {}
    for action in dec.actions:
        for v in var_space:
            for e in err_space:
                val = m.none_value if action != m.measure_action else combined(v, e)
                rows[(action, v, e)] = tuple(
                    Fraction(1) if o == val else Fraction(0) for o in space
                )
    nodes[n.id] = dg.Node(n.id, dg.CHANCE, tuple(space), label=n.id)
    cpts[n.id] = dg.Cpt(parents=parents, rows=rows)


def _utility_table(s: Scenario, outcome_id: Optional[str], gating: List[str],
                   nodes: Dict[str, dg.Node]) -> dg.UtilityTable:
    action_syms = {a: d.name for d in s.problem.decisions for a in d.actions}
    parents: Tuple[str, ...] = ()
    if outcome_id is not None:
        parents += (outcome_id,)
    parents += tuple(gating)

    def cell(assign: Dict[str, Outcome]) -> Fraction:
        for entry in s.problem.utilities:
            ok = True
            for w in entry.when:
                if w in action_syms:
                    if assign.get(action_syms[w]) != w:
                        ok = False
                        break
                else:
                    if outcome_id is None or assign.get(outcome_id) != w:
                        ok = False
                        break
            if ok:
                return entry.value
        return Fraction(0)

    cells = {
        combo: cell(dict(zip(parents, combo)))
        for combo in _combo_iter(parents, nodes)
    }
    return dg.UtilityTable(parents=parents, cells=cells)

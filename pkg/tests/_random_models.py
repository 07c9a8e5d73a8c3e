"""Random influence-diagram generator for invariant checks.

Diagrams have up to five binary chance nodes and up to two binary decisions.
Every probability is strictly positive so each information state met during
enumeration also appears in the compiled tree.
"""

import itertools
import random
from fractions import Fraction
from typing import List, Tuple

from planlearn import diagram as dg


def _random_row(rng: random.Random) -> Tuple[Fraction, Fraction]:
    a = rng.randint(1, 9)
    b = rng.randint(1, 9)
    t = a + b
    return (Fraction(a, t), Fraction(b, t))


def random_diagram(rng: random.Random,
                   with_decisions: bool = True) -> dg.InfluenceDiagram:
    n_chance = rng.randint(1, 5)
    n_dec = rng.randint(0, 2) if with_decisions else 0

    # interleave decisions into the chance sequence; anything earlier in the
    # sequence may feed anything later
    sequence: List[Tuple[str, str]] = [
        ("chance", f"C{i}") for i in range(n_chance)
    ]
    for j in range(n_dec):
        pos = rng.randint(0, len(sequence))
        sequence.insert(pos, ("decision", f"D{j}"))

    nodes = {}
    arcs = []
    cpts = {}
    decision_order = []
    seen: List[Tuple[str, str]] = []
    info_so_far: List[str] = []

    for kind, nid in sequence:
        if kind == "decision":
            outcomes = ("act", "wait")
            nodes[nid] = dg.Node(id=nid, kind=dg.DECISION, outcomes=outcomes)
            decision_order.append(nid)
            # no-forgetting: everything an earlier decision knew, plus that
            # decision itself, plus a fresh sample of earlier chance nodes
            parents = list(info_so_far)
            for pk, pid in seen:
                if pk == "chance" and pid not in parents and rng.random() < 0.5:
                    parents.append(pid)
            for p in parents:
                arcs.append(dg.Arc(p, nid))
            info_so_far = parents + [nid]
        else:
            outcomes = ("lo", "hi")
            candidates = [pid for _, pid in seen]
            rng.shuffle(candidates)
            parents = tuple(sorted(candidates[: rng.randint(0, 2)]))
            nodes[nid] = dg.Node(id=nid, kind=dg.CHANCE, outcomes=outcomes)
            for p in parents:
                arcs.append(dg.Arc(p, nid))
            rows = {}
            spaces = [nodes[p].outcomes for p in parents]
            for combo in itertools.product(*spaces):
                rows[combo] = _random_row(rng)
            cpts[nid] = dg.Cpt(parents=parents, rows=rows)
        seen.append((kind, nid))

    all_ids = [nid for _, nid in sequence]
    k = rng.randint(1, min(4, len(all_ids)))
    rng.shuffle(all_ids)
    uparents = tuple(sorted(all_ids[:k]))
    cells = {}
    for combo in itertools.product(*[nodes[p].outcomes for p in uparents]):
        cells[combo] = Fraction(rng.randint(-10, 10))
    nodes["V"] = dg.Node(id="V", kind=dg.VALUE, outcomes=())
    for p in uparents:
        arcs.append(dg.Arc(p, "V"))

    d = dg.InfluenceDiagram(
        nodes=nodes,
        arcs=arcs,
        cpts=cpts,
        utility=dg.UtilityTable(parents=uparents, cells=cells),
        decision_order=tuple(decision_order),
    )
    dg.check(d)
    return d


def random_policy(rng: random.Random, tree) -> dict:
    """A uniformly random action map over the tree's information states."""
    from planlearn import policy as pl

    actions = {}

    def walk(node):
        if isinstance(node, pl.Terminal):
            return
        if isinstance(node, pl.ChanceTreeNode):
            for b in node.branches:
                walk(b.child)
            return
        key = (node.node_id, node.info_state)
        if key not in actions:
            actions[key] = rng.choice([a for a, _ in node.actions])
        for _, child in node.actions:
            walk(child)

    walk(tree.root)
    return actions

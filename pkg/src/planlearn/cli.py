"""Command-line interface.

Subcommands mirror the library layers: explain a scenario's training example,
solve the compiled decision model, price information sources, revise beliefs,
and drive the sequential simulation.  Exit status 0 on success, 1 when a
scenario fails validation or a domain computation cannot be carried out, 2
for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from . import diagram as dg
from . import explain as ex
from . import figures
from . import learn
from . import policy as pl
from . import sim
from .scenario import (
    Scenario,
    ScenarioError,
    as_outcome,
    load_scenario,
    outcome_str,
    validate_scenario,
)

_DOMAIN_ERRORS = (
    ScenarioError,
    dg.DiagramError,
    dg.StateSpaceError,
    dg.ArcReversalError,
    ex.ProofError,
    ex.GeneralizationError,
    ex.UnknownEventError,
    learn.LikelihoodError,
    learn.NeverReachesError,
    learn.NoThresholdError,
    OSError,
)


def _fmt(x) -> str:
    """At least six significant digits, with the exact rational alongside
    whenever the float hides one."""
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return f"{float(x):.6g} (= {x.numerator}/{x.denominator})"
    return f"{float(x):.6g}"


def _rational(x) -> Optional[str]:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return None


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _write_json(path: str, payload: dict) -> None:
    _ensure_parent(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _figure_path(trace_path: str) -> str:
    return os.path.splitext(trace_path)[0] + ".png"


def _scenario_path(args: argparse.Namespace) -> Optional[str]:
    return args.scenario_opt or args.scenario


def _load(args: argparse.Namespace) -> Scenario:
    path = _scenario_path(args)
    if path is None:
        raise _Usage("a scenario file is required (positional or --scenario)")
    s = load_scenario(path)
    diags = validate_scenario(s)
    if diags:
        raise ScenarioError("; ".join(diags))
    return s


class _Usage(Exception):
    pass


def _pipeline(s: Scenario):
    proof = ex.prove(ex.default_goal(s), s)
    graph = ex.generalize(proof, s)
    d = ex.to_influence_diagram(graph, s)
    return proof, graph, d


def _policy_json(policy: pl.Policy) -> List[dict]:
    out = []
    for (dec, info), action in policy.actions.items():
        out.append({
            "decision": dec,
            "information": {k: outcome_str(v) for k, v in info},
            "action": outcome_str(action),
        })
    return out


# ============================================================
# Subcommands
# ============================================================

def cmd_explain(args: argparse.Namespace) -> int:
    s = _load(args)
    proof, graph, d = _pipeline(s)
    print("operational proof of the training example:")
    print(ex.format_proof(proof))
    print()
    print("generalized dependency structure:")
    print(ex.format_graph(graph))
    ok = ex.check_subsumption(graph)
    print()
    print(f"nodes: {len(graph.nodes)}  edges: {len(graph.edges)}  "
          f"informational: {len(graph.informational_edges)}")
    print("subsumption check:",
          "specific case is an instance of the generalization"
          if ok else "FAILED")
    if args.why:
        try:
            ants = ex.answer_why(graph, args.why)
        except ex.UnknownEventError as exc:
            raise dg.DiagramError(str(exc)) from None
        print(f"why {args.why}:")
        for n in ants:
            print(f"  {n.id} [{n.kind}]")
    if args.dot:
        _ensure_parent(args.dot)
        with open(args.dot, "w") as fh:
            fh.write(dg.to_dot(d))
        print(f"wrote {args.dot}")
    if args.json:
        _write_json(args.json, {
            "proof_size": proof.size(),
            "proof_leaves": len(proof.leaves()),
            "graph_nodes": len(graph.nodes),
            "graph_edges": len(graph.edges),
            "informational_edges": len(graph.informational_edges),
            "subsumption_ok": ok,
            "diagram_nodes": len(d.nodes),
        })
    return 0 if ok else 1


def cmd_solve(args: argparse.Namespace) -> int:
    s = _load(args)
    _, _, d = _pipeline(s)
    eu, policy = pl.solve(d)
    print(f"expected utility = {_fmt(eu)}")
    print(pl.format_policy(policy))
    if policy.tie_breaks:
        print("ties broken toward the first declared action at:")
        for dec, info in policy.tie_breaks:
            ctx = ", ".join(f"{k}={outcome_str(v)}" for k, v in info)
            print(f"  {dec} [{ctx or 'initial state'}]")
    if args.dot:
        _ensure_parent(args.dot)
        with open(args.dot, "w") as fh:
            fh.write(dg.to_dot(d))
        print(f"wrote {args.dot}")
    if args.json:
        _write_json(args.json, {
            "eu": float(eu),
            "eu_rational": _rational(eu) or str(eu),
            "policy": _policy_json(policy),
            "tie_breaks": [
                {"decision": dec,
                 "information": {k: outcome_str(v) for k, v in info}}
                for dec, info in policy.tie_breaks
            ],
        })
    return 0


def cmd_voi(args: argparse.Namespace) -> int:
    s = _load(args)
    _, _, d = _pipeline(s)
    if (args.perfect is None) == (args.instrument is None):
        raise _Usage("choose exactly one of --perfect NODE or "
                     "--instrument NAME")
    if args.perfect is not None:
        node = args.perfect
        base = d
        for m in d.measurements:
            if m.variable == node:
                # value perfect knowledge against the diagram without the
                # instrument: clairvoyance makes sampling it redundant
                base = dg.drop_measurement(d, node)
                break
        baseline_eu, _ = pl.solve(base)
        informed_eu, _ = pl.solve(dg.observe_everywhere(base, node))
        value = informed_eu - baseline_eu
        print(f"expected value of perfect information about {node} "
              f"= {_fmt(value)}")
        print(f"  baseline expected utility = {_fmt(baseline_eu)}")
        print(f"  informed expected utility = {_fmt(informed_eu)}")
        if args.json:
            _write_json(args.json, {
                "evpi": float(value),
                "evpi_rational": _rational(value) or str(value),
                "node": node,
                "baseline_eu": float(baseline_eu),
                "informed_eu": float(informed_eu),
            })
        return 0
    key = args.instrument
    m = None
    for cand in d.measurements:
        if key in (cand.instrument, cand.variable):
            m = cand
            break
    if m is None:
        raise dg.DiagramError(f"no measurement named {key!r}")
    cost = Fraction(str(args.cost))
    eu_off, _ = pl.solve(dg.force_decision(d, m.decision,
                                           m.no_measure_action))
    eu_on, _ = pl.solve(dg.force_decision(d, m.decision, m.measure_action))
    informed = eu_on - cost
    value = informed - eu_off
    print(f"expected value of sampling {m.instrument} at cost "
          f"{_fmt(cost)} = {_fmt(value)}")
    print(f"  baseline expected utility = {_fmt(eu_off)}")
    print(f"  informed expected utility = {_fmt(informed)}")
    if value < 0:
        print("  sampling is not worth its cost here")
    if args.json:
        _write_json(args.json, {
            "evsi": float(value),
            "evsi_rational": _rational(value) or str(value),
            "instrument": m.instrument,
            "cost": float(cost),
            "baseline_eu": float(eu_off),
            "informed_eu": float(informed),
        })
    return 0


def cmd_update(args: argparse.Namespace) -> int:
    s = _load(args)
    _, _, d = _pipeline(s)
    if d.hypothesis is None:
        raise dg.DiagramError("scenario tracks no latent hypothesis")
    hyp = d.hypothesis
    if args.odds is not None:
        prior_odds = Fraction(args.odds)
    else:
        row = dict(zip(d.nodes[hyp.node].outcomes,
                       d.cpts[hyp.node].rows[()]))
        prior_odds = row[hyp.favored] / row[hyp.alternative]
    obs = as_outcome(args.observation)
    info: Dict[str, object] = {}
    for item in args.at or ():
        if "=" not in item:
            raise _Usage(f"--at expects NODE=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        info[k] = as_outcome(v)
    _, policy = pl.solve(d)
    ratio = learn.likelihood_ratio(
        d, policy, obs, mode=args.mode, info_state=info or None
    )
    post = learn.posterior_odds_exact(prior_odds, ratio)
    p_fav = post / (1 + post)
    print(f"likelihood ratio          = {_fmt(ratio)}")
    print(f"prior odds ({hyp.favored}:{hyp.alternative})  = "
          f"{_fmt(prior_odds)}")
    print(f"posterior odds            = {_fmt(post)}")
    print(f"P({hyp.favored})       = {_fmt(p_fav)}")
    print(f"P({hyp.alternative})        = {_fmt(1 - p_fav)}")
    if args.json:
        _write_json(args.json, {
            "observation": outcome_str(obs),
            "mode": args.mode,
            "likelihood_ratio": float(ratio),
            "likelihood_ratio_rational": _rational(ratio) or str(ratio),
            "prior_odds": float(prior_odds),
            "posterior_odds": float(post),
            "posterior_odds_rational": _rational(post) or str(post),
            "posterior_favored": float(p_fav),
            "posterior_alternative": float(1 - p_fav),
        })
    return 0


def _resolve_true_class(sm: sim.Simulator, name: Optional[str]):
    if name is None:
        return None
    hyp = sm.hypothesis
    for o in sm.diagram.nodes[hyp.node].outcomes:
        if str(o) == name:
            return o
    raise dg.DiagramError(
        f"unknown hypothesis class {name!r}; choose from "
        f"{[str(o) for o in sm.diagram.nodes[hyp.node].outcomes]}"
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    s = _load(args)
    sm = sim.simulator_for(s, args.mode)
    true = _resolve_true_class(sm, args.true_class)
    trace, summary = sim.run(
        s, seed=args.seed, n_stages=args.stages, mode=args.mode,
        true_class=true, freeze_policy=args.freeze_policy,
    )
    print(f"simulated {summary.n_stages} stages "
          f"(seed {summary.seed}, true class {summary.true_class})")
    print(f"  total utility        = {_fmt(summary.total_utility)}")
    print(f"  stacked stages       = {summary.stacked_count}")
    print(f"  switch stage         = "
          f"{summary.switch_stage if summary.switch_stage else 'never'}")
    print(f"  final P({sm.hypothesis.favored})     = "
          f"{summary.final_probability:.6g}")
    if summary.mean_log_likelihood is not None:
        print(f"  mean log-likelihood  = "
              f"{summary.mean_log_likelihood:.6g} per stacked stage")
    if args.trace:
        _ensure_parent(args.trace)
        sim.write_trace(trace, args.trace)
        fig = figures.belief_trajectory(
            trace, _figure_path(args.trace), boundaries=sm.boundaries,
        )
        print(f"wrote {args.trace} and {fig}")
    if args.json:
        _write_json(args.json, summary.to_json())
    return 0


def cmd_replicate(args: argparse.Namespace) -> int:
    s = _load(args)
    sm = sim.simulator_for(s, args.mode)
    true = _resolve_true_class(sm, args.true_class)
    seeds = range(args.seed, args.seed + args.replications)
    stats = sim.replicate(
        s, seeds=seeds, n_stages=args.stages, mode=args.mode,
        true_class=true, freeze_policy=args.freeze_policy,
    )
    print(f"{args.replications} replications of {args.stages} stages "
          f"(seeds {args.seed}..{args.seed + args.replications - 1})")
    print(f"  mean total utility   = {stats.mean_total_utility:.6g}")
    print(f"  switched runs        = {stats.switched_count}")
    if stats.median_switch_stage is not None:
        print(f"  median switch stage  = {stats.median_switch_stage:.6g}")
        print(f"  mean switch stage    = {stats.mean_switch_stage:.6g}")
    if stats.pooled_mean_log_likelihood is not None:
        print(f"  pooled mean log-LR   = "
              f"{stats.pooled_mean_log_likelihood:.6g} over "
              f"{stats.pooled_stacked_count} stacked stages")
    if args.trace:
        _ensure_parent(args.trace)
        _write_summaries(stats.summaries, args.trace)
        fig = figures.switch_histogram(stats.summaries,
                                       _figure_path(args.trace))
        print(f"wrote {args.trace} and {fig}")
    if args.json:
        _write_json(args.json, stats.to_json())
    return 0


def _write_summaries(summaries: Sequence[sim.RunSummary],
                     path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "seed", "n_stages", "true_class", "total_utility",
            "switch_stage", "final_probability", "mean_log_likelihood",
            "stacked_count",
        ])
        for r in summaries:
            w.writerow([
                r.seed, r.n_stages, r.true_class,
                f"{float(r.total_utility):.10g}",
                r.switch_stage if r.switch_stage is not None else "",
                f"{r.final_probability:.10g}",
                f"{r.mean_log_likelihood:.10g}"
                if r.mean_log_likelihood is not None else "",
                r.stacked_count,
            ])


def cmd_predict_switch(args: argparse.Namespace) -> int:
    s = _load(args)
    sm = sim.simulator_for(s, args.mode)
    hyp = sm.hypothesis
    if args.odds is not None:
        prior_odds = Fraction(args.odds)
        belief = learn.BeliefState.from_odds(
            hyp.favored, hyp.alternative, prior_odds
        )
    else:
        belief = sm.initial_belief()
    true = _resolve_true_class(sm, args.true_class)
    if true is None:
        true = hyp.alternative
    region = sm.region_for(belief.probability)
    avg = learn.average_likelihood_ratio(
        sm.diagram, region.policy, true, mode=args.mode
    )
    if args.target_odds is not None:
        target = Fraction(args.target_odds)
        threshold_belief = target / (1 + target)
    else:
        threshold_belief = _boundary_toward(sm, belief.probability, avg)
        target = threshold_belief / (1 - threshold_belief)
    steps = learn.predict_switch(belief, avg, target)
    print(f"assumed true class        = {true}")
    print(f"average likelihood ratio  = {avg:.6g}")
    print(f"threshold belief          = {_fmt(threshold_belief)}")
    print(f"expected observations     = {steps:.6g}")
    if args.json:
        _write_json(args.json, {
            "threshold_belief": float(threshold_belief),
            "avg_likelihood_ratio": avg,
            "expected_steps": steps,
        })
    return 0


def _boundary_toward(sm: sim.Simulator, p: float, avg: float) -> Fraction:
    if avg < 1:
        below = [b for b in sm.boundaries if float(b) < p]
        if below:
            return below[-1]
    elif avg > 1:
        above = [b for b in sm.boundaries if float(b) >= p]
        if above:
            return above[0]
    raise learn.NeverReachesError(
        "no policy boundary lies in the direction the belief drifts; "
        "give --target-odds explicitly"
    )


# ============================================================
# Parser
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planlearn",
        description=(
            "Learn a decision model from one worked example, solve it, "
            "price its information sources, and simulate acting on it."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, trace: bool = False) -> None:
        p.add_argument("scenario", nargs="?", default=None,
                       help="scenario JSON file")
        p.add_argument("--scenario", dest="scenario_opt", metavar="PATH",
                       default=None, help="scenario JSON file")
        p.add_argument("--json", metavar="PATH", default=None,
                       help="also write results as JSON")
        if trace:
            p.add_argument("--trace", metavar="PATH", default=None,
                           help="write delimited output here (a rendered "
                                "figure lands beside it)")

    p = sub.add_parser("explain",
                       help="prove the training example and generalize it")
    common(p)
    p.add_argument("--why", metavar="EVENT", default=None,
                   help="list the antecedents of one event")
    p.add_argument("--dot", metavar="PATH", default=None,
                   help="write the compiled diagram in DOT form")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("solve", help="roll back the compiled decision model")
    common(p)
    p.add_argument("--dot", metavar="PATH", default=None,
                   help="write the compiled diagram in DOT form")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("voi", help="price an information source")
    common(p)
    p.add_argument("--perfect", metavar="NODE", default=None,
                   help="value of perfect information about a chance node")
    p.add_argument("--instrument", metavar="NAME", default=None,
                   help="value of sampling a declared instrument")
    p.add_argument("--cost", type=float, default=0.0,
                   help="per-use cost charged against the instrument")
    p.set_defaults(func=cmd_voi)

    p = sub.add_parser("update", help="revise belief after an observation")
    common(p)
    p.add_argument("observation", help="observed outcome, e.g. Resists")
    p.add_argument("--odds", default=None,
                   help="prior odds favored:alternative (default: scenario "
                        "prior)")
    p.add_argument("--mode", choices=("aggregate", "exact"),
                   default="aggregate")
    p.add_argument("--at", action="append", metavar="NODE=VALUE",
                   help="observed information state for exact mode")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("simulate", help="run one decide-observe-update trace")
    common(p, trace=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stages", type=int, default=50)
    p.add_argument("--mode", choices=("aggregate", "exact"),
                   default="aggregate")
    p.add_argument("--true-class", metavar="CLASS", default=None,
                   help="pin the latent class (default: sample it)")
    p.add_argument("--freeze-policy", action="store_true",
                   help="keep the initial region's policy for the whole run")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate", help="aggregate many seeded runs")
    common(p, trace=True)
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--seed", type=int, default=0,
                   help="first seed; replications use consecutive seeds")
    p.add_argument("--stages", type=int, default=200)
    p.add_argument("--mode", choices=("aggregate", "exact"),
                   default="aggregate")
    p.add_argument("--true-class", metavar="CLASS", default=None)
    p.add_argument("--freeze-policy", action="store_true")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("predict-switch",
                       help="expected observations until the policy flips")
    common(p)
    p.add_argument("--odds", default=None,
                   help="prior odds (default: scenario prior)")
    p.add_argument("--target-odds", default=None,
                   help="odds at the switch threshold (default: nearest "
                        "policy boundary)")
    p.add_argument("--true-class", metavar="CLASS", default=None,
                   help="class generating the observations (default: the "
                        "alternative)")
    p.add_argument("--mode", choices=("aggregate", "exact"),
                   default="aggregate")
    p.set_defaults(func=cmd_predict_switch)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

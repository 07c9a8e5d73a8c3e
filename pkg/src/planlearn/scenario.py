"""Scenario files: a domain theory, a decision problem, and one worked example.

A scenario bundles everything the pipeline needs: Horn clauses and
probability-bearing facts (the theory), the decision problem (actions,
utilities, information order), a single training example of ground atoms,
and optional measurement instruments.  Probabilities are exact Fractions
throughout; "0.33" style rows are renormalized to exact rationals when the
row sum is within [0.95, 1.05] and rejected otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .logic import (
    Atom,
    ClauseSyntaxError,
    HornClause,
    Num,
    Sym,
    Term,
    Var,
    format_fraction,
    is_builtin,
    parse_atom,
    parse_clause,
)

Outcome = Union[str, Fraction]

PROB_FACT_TAGS = ("prior-belief", "objective-frequency", "definition")

ROW_SUM_LO = Fraction(19, 20)   # 0.95
ROW_SUM_HI = Fraction(21, 20)   # 1.05

VALUE_SLOT = Var("VALUE")


class ScenarioError(ValueError):
    """Hard error in a scenario file: syntax, arity conflict, bad row, ..."""


# ============================================================
# Value conversion helpers
# ============================================================

def as_fraction(x: Union[int, float, str, Fraction]) -> Fraction:
    """Exact Fraction from JSON-ish input.  Floats go through their shortest
    decimal repr so 0.33 means 33/100, not the binary float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise ScenarioError(f"expected a number, got {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    try:
        return Fraction(str(x).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ScenarioError(f"bad number {x!r}: {exc}") from None


def as_outcome(x: Union[int, float, str, Fraction]) -> Outcome:
    """Numbers become Fractions, everything else a symbol string."""
    if isinstance(x, (int, float, Fraction)) and not isinstance(x, bool):
        return as_fraction(x)
    s = str(x).strip()
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return s


def outcome_str(o: Outcome) -> str:
    return format_fraction(o) if isinstance(o, Fraction) else o


def outcome_term(o: Outcome) -> Term:
    return Num(o) if isinstance(o, Fraction) else Sym(o)


def term_outcome(t: Term) -> Outcome:
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Sym):
        return t.name
    raise ScenarioError(f"variable {t!r} is not an outcome")


def _normalize_row(
    probs: Sequence[Fraction], where: str, record: List[str]
) -> Tuple[Fraction, ...]:
    total = sum(probs, Fraction(0))
    if total == 1:
        return tuple(probs)
    if ROW_SUM_LO <= total <= ROW_SUM_HI:
        record.append(where)
        return tuple(p / total for p in probs)
    raise ScenarioError(
        f"{where}: probabilities sum to {format_fraction(total)}, "
        f"outside the renormalization band [0.95, 1.05]"
    )


# ============================================================
# Scenario component types
# ============================================================

@dataclass(frozen=True)
class ProbFact:
    """A probability-bearing fact: an outcome space with a distribution.

    `pattern` is the atom shape that resolves against this fact during
    proving; its ?VALUE argument (if present) is the outcome slot.  A fact
    with `given` parents carries one distribution row per parent-outcome
    combination instead of a single marginal.
    """

    name: str
    outcomes: Tuple[Outcome, ...]
    tag: str
    pattern: Optional[Atom] = None
    dist: Optional[Tuple[Fraction, ...]] = None
    given: Tuple[str, ...] = ()
    rows: Tuple[Tuple[Tuple[Outcome, ...], Tuple[Fraction, ...]], ...] = ()

    @property
    def is_conditional(self) -> bool:
        return bool(self.given)

    def row_map(self) -> Dict[Tuple[Outcome, ...], Tuple[Fraction, ...]]:
        return dict(self.rows)

    def marginal(self) -> Dict[Outcome, Fraction]:
        assert self.dist is not None
        return dict(zip(self.outcomes, self.dist))


@dataclass(frozen=True)
class DecisionVar:
    name: str
    predicate: str
    actions: Tuple[str, ...]


@dataclass(frozen=True)
class UtilityEntry:
    when: Tuple[str, ...]          # conjunction of action/outcome symbols
    value: Fraction


@dataclass(frozen=True)
class DecisionProblemSpec:
    decisions: Tuple[DecisionVar, ...]
    outcome_pattern: Atom          # e.g. (Outcome ?t ?VALUE ?s)
    utilities: Tuple[UtilityEntry, ...]
    horizon: int
    information_order: Tuple[str, ...]

    def decision(self, name: str) -> DecisionVar:
        for d in self.decisions:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def outcome_predicate(self) -> str:
        return self.outcome_pattern.pred


@dataclass(frozen=True)
class MeasurementSpec:
    variable: str                  # name of the measured ProbFact
    instrument: str
    decision: str                  # name of the measure/no-measure decision
    error_outcomes: Tuple[Outcome, ...]
    error_dist: Tuple[Fraction, ...]
    combine: str = "total"         # builtin joining true value and error
    none_value: Outcome = "NoReading"
    cost: Fraction = Fraction(0)
    measure_action: str = "Measure"
    no_measure_action: str = "NoMeasure"
    measured_name: str = ""        # node name for the reading; default Measured<variable>
    error_name: str = ""           # node name for the noise; default <instrument>Error

    @property
    def measured_node(self) -> str:
        return self.measured_name or f"Measured{self.variable}"

    @property
    def error_node(self) -> str:
        return self.error_name or f"{self.instrument}Error"


@dataclass(frozen=True)
class TrainingExample:
    state: str
    atoms: Tuple[Atom, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    clauses: Tuple[HornClause, ...]
    prob_facts: Tuple[ProbFact, ...]
    problem: DecisionProblemSpec
    example: TrainingExample
    measurements: Tuple[MeasurementSpec, ...] = ()
    observables: Tuple[str, ...] = ()
    normalized: Tuple[str, ...] = field(default=(), compare=False)

    def prob_fact(self, name: str) -> ProbFact:
        for pf in self.prob_facts:
            if pf.name == name:
                return pf
        raise KeyError(name)

    def utility_clauses(self) -> Tuple[HornClause, ...]:
        """Clauses derived from the utility table, one per entry: the stage
        attains utility u when the entry's action and outcome atoms hold."""
        out = []
        action_syms = {
            a: d for d in self.problem.decisions for a in d.actions
        }
        for i, entry in enumerate(self.problem.utilities):
            body: List[Atom] = []
            for sym in entry.when:
                if sym in action_syms:
                    dec = action_syms[sym]
                    body.append(Atom(dec.predicate, (Sym(sym), Var("s"))))
                else:
                    patt = self.problem.outcome_pattern
                    args = tuple(
                        Sym(sym) if a == VALUE_SLOT else a for a in patt.args
                    )
                    body.append(Atom(patt.pred, args))
            head = Atom("StageUtility", (Num(entry.value), Var("s")))
            out.append(HornClause(head, tuple(body), clause_id=f"utility:{i}"))
        return tuple(out)

    def all_clauses(self) -> Tuple[HornClause, ...]:
        return self.utility_clauses() + self.clauses

    def measurement_for(self, key: str) -> MeasurementSpec:
        """Look up a measurement by instrument or measured-variable name."""
        for m in self.measurements:
            if key in (m.instrument, m.variable):
                return m
        raise KeyError(key)


# ============================================================
# Parsing
# ============================================================

def parse_scenario(source: Union[str, Path, dict]) -> Scenario:
    """Parse a scenario from a JSON file path or an already-loaded dict."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"{source}: invalid JSON at line {exc.lineno} col {exc.colno}: "
                f"{exc.msg}"
            ) from None
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ScenarioError("scenario root must be a JSON object")

    normalized: List[str] = []
    name = str(raw.get("name", "unnamed"))

    theory = raw.get("theory", {})
    clauses = _parse_clauses(theory.get("clauses", []))
    prob_facts = _parse_prob_facts(theory.get("prob_facts", []), normalized)

    problem = _parse_problem(raw.get("decision_problem"))
    example = _parse_example(raw.get("training_example"))
    measurements = _parse_measurements(
        raw.get("measurement", []), normalized
    )
    observables = tuple(str(p) for p in raw.get("observables", []))

    scenario = Scenario(
        name=name,
        clauses=clauses,
        prob_facts=prob_facts,
        problem=problem,
        example=example,
        measurements=measurements,
        observables=observables,
        normalized=tuple(normalized),
    )
    _check_hard_constraints(scenario)
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    return parse_scenario(path)


def _parse_clauses(items: Sequence) -> Tuple[HornClause, ...]:
    out = []
    for i, text in enumerate(items):
        try:
            out.append(parse_clause(str(text), clause_id=f"c{i}"))
        except ClauseSyntaxError as exc:
            raise ScenarioError(f"clause {i}: {exc}") from None
    return tuple(out)


def _parse_prob_facts(items: Sequence, normalized: List[str]) -> Tuple[ProbFact, ...]:
    out: List[ProbFact] = []
    seen = set()
    for item in items:
        name = str(item.get("name", ""))
        if not name:
            raise ScenarioError("prob_fact missing a name")
        if name in seen:
            raise ScenarioError(f"duplicate prob_fact declaration: {name}")
        seen.add(name)
        tag = item.get("tag", "")
        if tag not in PROB_FACT_TAGS:
            raise ScenarioError(
                f"prob_fact {name}: tag {tag!r} not one of {PROB_FACT_TAGS}"
            )
        outcomes = tuple(as_outcome(o) for o in item.get("outcomes", []))
        if not outcomes:
            raise ScenarioError(f"prob_fact {name}: empty outcome space")
        if len(set(outcomes)) != len(outcomes):
            raise ScenarioError(f"prob_fact {name}: duplicate outcomes")
        pattern = None
        if "pattern" in item:
            pattern = parse_atom(str(item["pattern"]))
        given = tuple(str(g) for g in item.get("given", ()))
        dist: Optional[Tuple[Fraction, ...]] = None
        rows: List[Tuple[Tuple[Outcome, ...], Tuple[Fraction, ...]]] = []
        if given:
            for key, probs in item.get("rows", {}).items():
                key_outcomes = tuple(
                    as_outcome(k.strip()) for k in str(key).split(",")
                )
                if len(key_outcomes) != len(given):
                    raise ScenarioError(
                        f"prob_fact {name}: row key {key!r} has "
                        f"{len(key_outcomes)} parts, expected {len(given)}"
                    )
                ps = [as_fraction(p) for p in probs]
                if len(ps) != len(outcomes):
                    raise ScenarioError(
                        f"prob_fact {name}: row {key!r} has {len(ps)} "
                        f"probabilities for {len(outcomes)} outcomes"
                    )
                rows.append(
                    (key_outcomes,
                     _normalize_row(ps, f"{name}[{key}]", normalized))
                )
        else:
            ps = [as_fraction(p) for p in item.get("probs", [])]
            if len(ps) != len(outcomes):
                raise ScenarioError(
                    f"prob_fact {name}: {len(ps)} probabilities for "
                    f"{len(outcomes)} outcomes"
                )
            dist = _normalize_row(ps, name, normalized)
        out.append(
            ProbFact(
                name=name,
                outcomes=outcomes,
                tag=tag,
                pattern=pattern,
                dist=dist,
                given=given,
                rows=tuple(rows),
            )
        )
    return tuple(out)


def _parse_problem(raw) -> DecisionProblemSpec:
    if not isinstance(raw, dict):
        raise ScenarioError("missing decision_problem block")
    decisions = []
    seen = set()
    for item in raw.get("decisions", []):
        dname = str(item.get("name", ""))
        if not dname or dname in seen:
            raise ScenarioError(f"bad or duplicate decision name {dname!r}")
        seen.add(dname)
        actions = tuple(str(a) for a in item.get("actions", []))
        if len(actions) < 1 or len(set(actions)) != len(actions):
            raise ScenarioError(f"decision {dname}: bad action list {actions}")
        decisions.append(
            DecisionVar(dname, str(item.get("predicate", dname)), actions)
        )
    if not decisions:
        raise ScenarioError("decision_problem declares no decisions")

    outcome_pattern = parse_atom(str(raw.get("outcome", "(Outcome ?VALUE ?s)")))
    utilities = []
    for item in raw.get("utilities", []):
        when = tuple(str(w) for w in item.get("when", []))
        if not when:
            raise ScenarioError("utility entry with empty 'when'")
        utilities.append(UtilityEntry(when, as_fraction(item.get("value", 0))))
    horizon = int(raw.get("horizon", 1))
    info = raw.get("information_order")
    order = tuple(str(d) for d in info) if info else tuple(
        d.name for d in decisions
    )
    return DecisionProblemSpec(
        decisions=tuple(decisions),
        outcome_pattern=outcome_pattern,
        utilities=tuple(utilities),
        horizon=horizon,
        information_order=order,
    )


def _parse_example(raw) -> TrainingExample:
    if not isinstance(raw, dict):
        raise ScenarioError("missing training_example block")
    state = str(raw.get("state", "S0"))
    atoms = []
    for i, text in enumerate(raw.get("atoms", [])):
        try:
            atoms.append(parse_atom(str(text)))
        except ClauseSyntaxError as exc:
            raise ScenarioError(f"training atom {i}: {exc}") from None
    return TrainingExample(state=state, atoms=tuple(atoms))


def _parse_measurements(items: Sequence, normalized: List[str]) -> Tuple[MeasurementSpec, ...]:
    out = []
    for item in items:
        err = item.get("error", {})
        outcomes = tuple(as_outcome(o) for o in err.get("outcomes", []))
        probs = [as_fraction(p) for p in err.get("probs", [])]
        if not outcomes or len(probs) != len(outcomes):
            raise ScenarioError(
                f"measurement {item.get('instrument')}: bad error distribution"
            )
        dist = _normalize_row(
            probs, f"{item.get('instrument', '?')}.error", normalized
        )
        out.append(
            MeasurementSpec(
                variable=str(item.get("variable", "")),
                instrument=str(item.get("instrument", "")),
                decision=str(item.get("decision", "")),
                error_outcomes=outcomes,
                error_dist=dist,
                combine=str(item.get("combine", "total")),
                none_value=as_outcome(item.get("none_value", "NoReading")),
                cost=as_fraction(item.get("cost", 0)),
                measure_action=str(item.get("measure_action", "Measure")),
                no_measure_action=str(item.get("no_measure_action", "NoMeasure")),
                measured_name=str(item.get("measured_name", "")),
                error_name=str(item.get("error_name", "")),
            )
        )
    return tuple(out)


def _check_hard_constraints(s: Scenario) -> None:
    """Arity conflicts and duplicate declarations are errors, not warnings."""
    arity: Dict[str, int] = {}

    def check(atom: Atom, where: str) -> None:
        prev = arity.get(atom.pred)
        if prev is not None and prev != atom.arity:
            raise ScenarioError(
                f"{where}: predicate {atom.pred} used with arity "
                f"{atom.arity}, elsewhere {prev}"
            )
        arity[atom.pred] = atom.arity

    for clause in s.all_clauses():
        for atom in (clause.head, *clause.body):
            if not is_builtin(atom.pred):
                check(atom, f"clause {clause.clause_id}")
        if is_builtin(clause.head.pred):
            raise ScenarioError(
                f"clause {clause.clause_id}: head redefines builtin "
                f"{clause.head.pred}"
            )
    for pf in s.prob_facts:
        if pf.pattern is not None:
            check(pf.pattern, f"prob_fact {pf.name}")
    for atom in s.example.atoms:
        check(atom, "training example")
        if not atom.is_ground():
            raise ScenarioError(f"training atom {atom!r} is not ground")
    seen_atoms = set()
    for atom in s.example.atoms:
        if atom in seen_atoms:
            raise ScenarioError(f"duplicate training atom {atom!r}")
        seen_atoms.add(atom)


# ============================================================
# Validation diagnostics (soft checks -- returns a list, never raises)
# ============================================================

def validate_scenario(s: Scenario) -> List[str]:
    diags: List[str] = []

    for pf in s.prob_facts:
        if not pf.outcomes:
            diags.append(f"prob_fact {pf.name}: empty outcome space")
        if pf.is_conditional:
            for key, probs in pf.rows:
                if sum(probs, Fraction(0)) != 1:
                    diags.append(
                        f"prob_fact {pf.name}[{','.join(map(outcome_str, key))}]: "
                        f"row sums to {format_fraction(sum(probs, Fraction(0)))}"
                    )
            for g in pf.given:
                if g not in {p.name for p in s.prob_facts} and not any(
                    c.head.pred == g for c in s.clauses
                ):
                    diags.append(
                        f"prob_fact {pf.name}: parent {g!r} is neither a "
                        f"prob_fact nor a clause-defined predicate"
                    )
        else:
            if pf.dist is None:
                diags.append(f"prob_fact {pf.name}: missing distribution")
            elif sum(pf.dist, Fraction(0)) != 1:
                diags.append(
                    f"prob_fact {pf.name}: distribution sums to "
                    f"{format_fraction(sum(pf.dist, Fraction(0)))}"
                )
        if any(p < 0 for p in (pf.dist or ()) ):
            diags.append(f"prob_fact {pf.name}: negative probability")

    known_symbols = {
        a for d in s.problem.decisions for a in d.actions
    }
    for pf in s.prob_facts:
        known_symbols |= {o for o in pf.outcomes if isinstance(o, str)}
    for entry in s.problem.utilities:
        for sym in entry.when:
            if sym not in known_symbols:
                diags.append(
                    f"utility entry {list(entry.when)}: symbol {sym!r} names "
                    f"no declared action or outcome"
                )

    if s.problem.horizon < 1:
        diags.append(f"horizon must be >= 1, got {s.problem.horizon}")
    if sorted(s.problem.information_order) != sorted(
        d.name for d in s.problem.decisions
    ):
        diags.append(
            "information_order is not a permutation of the declared decisions"
        )

    action_preds = {d.predicate: d for d in s.problem.decisions}
    n_action_atoms = 0
    n_outcome_atoms = 0
    for atom in s.example.atoms:
        if atom.pred in action_preds:
            n_action_atoms += 1
            dec = action_preds[atom.pred]
            named = [
                a.name for a in atom.args
                if isinstance(a, Sym) and a.name in dec.actions
            ]
            if not named:
                diags.append(
                    f"example atom {atom!r} names no declared action of "
                    f"{dec.name}"
                )
        if atom.pred == s.problem.outcome_predicate:
            n_outcome_atoms += 1
    if n_action_atoms == 0:
        diags.append("training example contains no action atom")
    if n_outcome_atoms == 0:
        diags.append("training example contains no outcome atom")

    pf_names = {pf.name for pf in s.prob_facts}
    dec_names = {d.name for d in s.problem.decisions}
    for m in s.measurements:
        if m.variable not in pf_names:
            diags.append(
                f"measurement {m.instrument}: variable {m.variable!r} is not "
                f"a declared prob_fact"
            )
        if m.decision not in dec_names:
            diags.append(
                f"measurement {m.instrument}: decision {m.decision!r} is not "
                f"declared"
            )
        elif set((m.measure_action, m.no_measure_action)) != set(
            s.problem.decision(m.decision).actions
        ):
            diags.append(
                f"measurement {m.instrument}: actions do not match decision "
                f"{m.decision}"
            )
        if m.combine not in ("total", "product"):
            diags.append(
                f"measurement {m.instrument}: unknown combine {m.combine!r}"
            )
        if sum(m.error_dist, Fraction(0)) != 1:
            diags.append(
                f"measurement {m.instrument}: error distribution sums to "
                f"{format_fraction(sum(m.error_dist, Fraction(0)))}"
            )
        if m.cost < 0:
            diags.append(f"measurement {m.instrument}: negative cost")
    return diags


# ============================================================
# Printing (round-trips through parse_scenario)
# ============================================================

def print_scenario(s: Scenario) -> dict:
    theory_facts = []
    for pf in s.prob_facts:
        item: dict = {
            "name": pf.name,
            "outcomes": [outcome_str(o) for o in pf.outcomes],
            "tag": pf.tag,
        }
        if pf.pattern is not None:
            item["pattern"] = repr(pf.pattern)
        if pf.is_conditional:
            item["given"] = list(pf.given)
            item["rows"] = {
                ",".join(outcome_str(k) for k in key): [
                    format_fraction(p) for p in probs
                ]
                for key, probs in pf.rows
            }
        else:
            item["probs"] = [format_fraction(p) for p in pf.dist or ()]
        theory_facts.append(item)

    doc = {
        "name": s.name,
        "observables": list(s.observables),
        "theory": {
            "clauses": [repr(c) for c in s.clauses],
            "prob_facts": theory_facts,
        },
        "decision_problem": {
            "decisions": [
                {
                    "name": d.name,
                    "predicate": d.predicate,
                    "actions": list(d.actions),
                }
                for d in s.problem.decisions
            ],
            "outcome": repr(s.problem.outcome_pattern),
            "utilities": [
                {"when": list(e.when), "value": format_fraction(e.value)}
                for e in s.problem.utilities
            ],
            "horizon": s.problem.horizon,
            "information_order": list(s.problem.information_order),
        },
        "training_example": {
            "state": s.example.state,
            "atoms": [repr(a) for a in s.example.atoms],
        },
        "measurement": [
            {
                "variable": m.variable,
                "instrument": m.instrument,
                "decision": m.decision,
                "error": {
                    "outcomes": [outcome_str(o) for o in m.error_outcomes],
                    "probs": [format_fraction(p) for p in m.error_dist],
                },
                "combine": m.combine,
                "none_value": outcome_str(m.none_value),
                "cost": format_fraction(m.cost),
                "measure_action": m.measure_action,
                "no_measure_action": m.no_measure_action,
                "measured_name": m.measured_node,
                "error_name": m.error_node,
            }
            for m in s.measurements
        ],
    }
    return doc


def save_scenario(s: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(print_scenario(s), indent=2) + "\n")

"""Plan-level checking: compile, build the environment model, model check."""
from __future__ import annotations

from dataclasses import dataclass

from .automata import AtomicPropositionSet, Fsa, ProductAutomaton, TransitionSystem, product, universal_ts
from .formula import Formula, atoms
from .l2a import PropositionMapping, l2a
from .ltl import Verdict, check_product, verdict_to_doc
from .plan_lang import PlanAst, parse_plan


@dataclass(frozen=True)
class CheckResult:
    verdict: Verdict
    fsa: Fsa
    product: ProductAutomaton
    env_props: tuple[str, ...]

    @property
    def holds(self) -> bool:
        return self.verdict.holds

    def to_doc(self) -> dict:
        doc = verdict_to_doc(self.verdict, self.product)
        doc["environment"] = list(self.env_props)
        doc["product_states"] = len(self.product.states)
        return doc


def environment_props(fsa: Fsa, phi: Formula, mapping: PropositionMapping) -> tuple[str, ...]:
    """Propositions the environment controls.

    Sensor propositions used by the plan's guards or the specification, plus
    any specification atom the mapping does not know at all (left
    unconstrained rather than assumed false).
    """
    sensors = mapping.sensor_props()
    known = sensors | mapping.action_props()
    used = atoms(phi) | fsa.guard_atoms()
    env = {p for p in used if p in sensors}
    env |= {p for p in atoms(phi) if p not in known and p not in fsa.label_atoms()}
    return tuple(sorted(env))


def check_plan(plan: PlanAst | str, mapping: PropositionMapping, phi: Formula,
               ts: TransitionSystem | None = None, permissive: bool = False) -> CheckResult:
    """Compile ``plan`` and decide whether it satisfies ``phi``.

    Without ``ts`` the environment is the universal transition system over
    :func:`environment_props`.
    """
    ast = parse_plan(plan) if isinstance(plan, str) else plan
    fsa = l2a(ast, mapping, permissive=permissive)
    if ts is None:
        env = environment_props(fsa, phi, mapping)
        ap = AtomicPropositionSet.of(set(fsa.ap) | atoms(phi) | set(env))
        ts = universal_ts(ap, env)
    else:
        env = tuple(sorted({p for q in ts.states for p in ts.label(q)}))
        ap = AtomicPropositionSet.of(set(fsa.ap) | atoms(phi) | set(ts.ap))
        ts = TransitionSystem(ap, ts.states, ts.transitions, ts.labels)
    fsa = fsa.with_ap(ap)
    pa = product(fsa, ts)
    return CheckResult(check_product(pa, phi), fsa, pa, env)

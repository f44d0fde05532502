"""Counterexample-guided instantiation loop over the translated formula.

The solver keeps a growing set of quantifier-free formulas.  Each round:

1. ask the backend for a model of the set; none means unsat;
2. for every quantified formula whose guard holds in the model (checked
   innermost-first), test whether the set plus the guard entails the
   Skolemized body; if all checks pass the input is satisfiable;
3. otherwise take the countermodel of the first failing check, read off a
   concrete instance (a union of bound terms matching the Skolem set, an
   explicit map matching the Skolem function) and add its purified
   instance formula, then repeat.

Instances are logged and may never repeat; iteration count is capped by a
cubic function of the input size, which the theory guarantees and the
implementation asserts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .heaps import EMPTY_HEAP, FiniteFunc, Heap, Interpretation, eval_term
from .purify import GuardRegistry, QEntry, guards_in, purify, purify_rec
from .slformula import SL, sl_size
from .sorts import Sort
from .terms import (
    FreshNames,
    FunBound,
    SetBound,
    Term,
    conj,
    implies,
    neg,
    set_subset,
    substitute,
    substitute_fun,
    union_of,
)
from .translate import Translation, simplify, translate
from .backend.query import QFQuery, Verdict


class SolverBug(Exception):
    """An internal invariant failed (duplicate instance, cap violation...)."""


@dataclass
class SolveConfig:
    max_instances: int = 10_000
    trace: bool = False
    check_witness: bool = True
    deadline: Optional[float] = None


@dataclass
class SolveStats:
    sat_calls: int = 0
    entailment_checks: int = 0
    instances: int = 0
    iterations: int = 0


@dataclass
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Interpretation] = None
    heap: Optional[Heap] = None
    reason: str = ""
    stats: SolveStats = field(default_factory=SolveStats)
    instance_log: list = field(default_factory=list)
    translation: Optional[Translation] = None

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


class SolverState:
    """The evolving formula set, registry, and instance log of one query."""

    def __init__(self, translation: Translation, registry: GuardRegistry, backend):
        self.translation = translation
        self.registry = registry
        self.backend = backend
        self.gamma: list[Term] = []
        self._gamma_seen: set[Term] = set()
        self.present_guards: set[int] = set()
        self.instance_log: list[tuple[int, tuple]] = []
        self._instance_keys: set[tuple[int, tuple]] = set()
        self.stats = SolveStats()

    def add_formulas(self, formulas) -> None:
        for f in formulas:
            if f not in self._gamma_seen:
                self._gamma_seen.add(f)
                self.gamma.append(f)
                self.present_guards |= guards_in(f, self.registry)

    def log_instance(self, entry: QEntry, key: tuple) -> None:
        k = (entry.index, key)
        if k in self._instance_keys:
            raise SolverBug("duplicate instance for guard %s: %r" % (entry.guard.data, key))
        self._instance_keys.add(k)
        self.instance_log.append(k)
        self.stats.instances += 1

    def query(self, extra: tuple[Term, ...] = ()) -> QFQuery:
        tr = self.translation
        universes = {tr.ell0.name: tr.consts + tr.terms}
        for e in self.registry.entries:
            for b, k in zip(e.binders, e.skolems):
                if isinstance(b.bound, SetBound):
                    universes[k.name] = b.bound.terms
        return QFQuery(
            assertions=tuple(self.gamma) + extra,
            set_universes=universes,
            loc_sort=tr.loc_sort,
            data_sort=tr.data_sort,
        )


def _candidate_order(state: SolverState, model: Interpretation) -> list[QEntry]:
    """Guard-true quantified formulas, innermost (descendants) first."""
    cands = [
        idx
        for idx in sorted(state.present_guards)
        if model.assign.get(state.registry.entries[idx].guard.data) is True
    ]
    return _entries_topo(state, cands)


def select_instance(
    model: Interpretation, entry: QEntry
) -> tuple[dict[Term, Term], list[tuple[Term, tuple[tuple[Term, Term], ...]]], tuple]:
    """Choose instance terms matching the Skolem values in a countermodel.

    Returns the substitution for set binders, the explicit maps for
    function binders, and a canonical key identifying the instance.
    """
    set_subst: dict[Term, Term] = {}
    fun_insts: list[tuple[Term, tuple[tuple[Term, Term], ...]]] = []
    key_parts: list[tuple] = []
    for b, k in zip(entry.binders, entry.skolems):
        if isinstance(b.bound, SetBound):
            # Unconstrained Skolems (simplified out of the check) are free
            # choices; the empty set is in every bound.
            kval = model.assign.get(k.name, frozenset())
            elem = b.var.sort.elem
            chosen: list[Term] = []
            chosen_vals: list = []
            for g in b.bound.terms:
                if g.sort != elem:
                    continue
                gv = eval_term(model, g)
                if gv in kval and gv not in chosen_vals:
                    chosen.append(g)
                    chosen_vals.append(gv)
            if set(chosen_vals) != set(kval):
                raise SolverBug(
                    "Skolem set value escapes its bound: %r vs %r" % (kval, chosen_vals)
                )
            set_subst[b.var] = union_of(chosen, elem)
            key_parts.append(("set", tuple(t.data if t.op == "sym" else repr(t) for t in chosen)))
        else:
            kfun = model.assign.get(k.name)
            dom_sort = b.var.sort.dom
            rng_sort = b.var.sort.rng
            dom = [t for t in b.bound.dom if t.sort == dom_sort]
            rng = [t for t in b.bound.rng if t.sort == rng_sort]
            entries: list[tuple[Term, Term]] = []
            for c in dom:
                pick = None
                if isinstance(kfun, FiniteFunc):
                    cv = eval_term(model, c)
                    if any(cv == arg for arg, _ in kfun.entries):
                        target = kfun.apply(cv)
                        for w in rng:
                            if eval_term(model, w) == target:
                                pick = w
                                break
                        if pick is None:
                            raise SolverBug(
                                "no bound term matches %r(%r) = %r" % (k.data, c, target)
                            )
                if pick is None:
                    # The model never constrained the Skolem here.
                    if not rng:
                        raise SolverBug("empty range bound for %r" % (k.data,))
                    pick = rng[0]
                entries.append((c, pick))
            fun_insts.append((b.var, tuple(entries)))
            key_parts.append(
                ("fun", tuple((repr(c), repr(w)) for c, w in entries))
            )
    return set_subst, fun_insts, tuple(key_parts)


def _instance_formula(entry: QEntry, set_subst, fun_insts, names: FreshNames) -> Term:
    """``guard => (instantiated bound constraints => instantiated matrix)``."""
    matrix = substitute(entry.body, set_subst)
    for fvar, entries in fun_insts:
        matrix = substitute_fun(matrix, fvar, entries)
    antes = []
    for b in entry.binders:
        if isinstance(b.bound, SetBound):
            elem = b.var.sort.elem
            cands = [t for t in b.bound.terms if t.sort == elem]
            antes.append(set_subset(set_subst[b.var], union_of(cands, elem)))
        # Function instances satisfy their product bound by construction.
    body = implies(conj(*antes), matrix)
    return simplify(implies(entry.guard, body))


def _check_entailed(state: SolverState, entry: QEntry):
    """Test whether the current set plus the guard entails the Skolemized
    body.  None: entailed.  Interpretation: the countermodel.  SolveResult:
    the backend gave up."""
    reg = state.registry
    state.stats.entailment_checks += 1
    check = neg(purify(reg.skolem_body(entry), reg))
    sub = state.backend.check_sat(state.query(extra=(entry.guard, check)))
    if sub.status == "unsat":
        return None
    if sub.status == "unknown":
        return SolveResult("unknown", reason=sub.reason, stats=state.stats)
    return sub.model


def _descend(state: SolverState, failing: tuple[QEntry, Interpretation]):
    """Move the failing pair to an innermost failing quantified formula.

    A countermodel may set guards of nested quantified formulas that the
    main model left false; instantiating the outer formula against such a
    model makes no progress (the nested guard keeps absorbing the
    refutation).  Walk down: while some descendant's guard holds in the
    countermodel and its own entailment check fails, refute that one
    instead.  Nesting depth strictly decreases, so the walk terminates.
    """
    reg = state.registry
    entry, counter = failing
    while True:
        moved = False
        desc = reg.descendants(entry)
        for sub in _entries_topo(state, sorted(desc)):
            if counter.assign.get(sub.guard.data) is not True:
                continue
            res = _check_entailed(state, sub)
            if res is None:
                continue
            if isinstance(res, SolveResult):
                return res
            entry, counter = sub, res
            moved = True
            break
        if not moved:
            return entry, counter


def _entries_topo(state: SolverState, indices) -> list[QEntry]:
    reg = state.registry
    deps = {i: reg.descendants(reg.entries[i]) & set(indices) for i in indices}
    ordered: list[int] = []
    placed: set[int] = set()
    remaining = dict(deps)
    while remaining:
        ready = sorted(i for i, d in remaining.items() if d <= placed)
        if not ready:
            ready = sorted(remaining)
        for i in ready:
            ordered.append(i)
            placed.add(i)
            del remaining[i]
    return [reg.entries[i] for i in ordered]


def solve_slt(state: SolverState, config: SolveConfig, size_cap: int) -> SolveResult:
    """The refinement loop; precondition: state.gamma is quantifier-free."""
    reg = state.registry
    while True:
        state.stats.iterations += 1
        if state.stats.iterations > size_cap:
            raise SolverBug("iteration cap exceeded (%d)" % size_cap)
        if config.deadline is not None and time.monotonic() > config.deadline:
            return SolveResult("unknown", reason="timeout", stats=state.stats)
        state.stats.sat_calls += 1
        verdict = state.backend.check_sat(state.query())
        if verdict.status == "unsat":
            return SolveResult(
                "unsat",
                stats=state.stats,
                instance_log=list(state.instance_log),
                translation=state.translation,
            )
        if verdict.status == "unknown":
            return SolveResult("unknown", reason=verdict.reason, stats=state.stats)
        model = verdict.model
        failing: Optional[tuple[QEntry, Interpretation]] = None
        for entry in _candidate_order(state, model):
            res = _check_entailed(state, entry)
            if res is None:
                continue  # entailed
            if isinstance(res, SolveResult):
                return res
            failing = (entry, res)
            break
        if failing is None:
            return SolveResult(
                "sat",
                model=model,
                stats=state.stats,
                instance_log=list(state.instance_log),
                translation=state.translation,
            )
        failing = _descend(state, failing)
        if isinstance(failing, SolveResult):
            return failing
        entry, counter = failing
        if state.stats.instances >= config.max_instances:
            return SolveResult(
                "unknown", reason="instance cap reached", stats=state.stats
            )
        set_subst, fun_insts, key = select_instance(counter, entry)
        state.log_instance(entry, key)
        inst = _instance_formula(entry, set_subst, fun_insts, reg.names)
        if config.trace:
            print("instantiate %s with %r" % (entry.guard.data, key))
        from .purify import purify_tracking

        _, found = purify_tracking(inst, reg)
        reg.note_children(entry, found)
        state.add_formulas(purify_rec(inst, reg))


def solve_sl(
    phi: SL,
    backend=None,
    config: Optional[SolveConfig] = None,
    names: Optional[FreshNames] = None,
    loc_sort: Optional[Sort] = None,
    data_sort: Optional[Sort] = None,
) -> SolveResult:
    """Decide satisfiability of a spatial formula.

    Allocates the fresh-constant pool sized by the formula's measure,
    translates, purifies, and runs the refinement loop.  On sat, a heap is
    read off the model's footprint set and points-to function and the
    verdict is re-checked against the direct evaluator.
    """
    from .backend import EmbeddedBackend

    backend = backend or EmbeddedBackend()
    config = config or SolveConfig()
    names = names or FreshNames()
    loc_sort, data_sort = _infer_sorts(phi, loc_sort, data_sort)
    tr = translate(phi, names, loc_sort, data_sort)
    reg = GuardRegistry(names)
    state = SolverState(tr, reg, backend)
    state.add_formulas(purify_rec(tr.formula, reg))
    size_cap = (sl_size(tr.phi) + 4) ** 3
    result = solve_slt(state, config, size_cap)
    if result.is_sat:
        result.heap = extract_heap(result.model, tr)
        if config.check_witness:
            from .heaps import eval_sl

            if not eval_sl(result.model, result.heap, phi):
                raise SolverBug("extracted witness fails the direct evaluator")
    return result


def _infer_sorts(phi: SL, loc_sort, data_sort) -> tuple[Sort, Sort]:
    from .slformula import walk_sl
    from .sorts import INT, uninterpreted

    if loc_sort is None or data_sort is None:
        for node in walk_sl(phi):
            if node.op == "pto":
                return node.terms[0].sort, node.terms[1].sort
    return loc_sort or uninterpreted("Loc"), data_sort or INT


def extract_heap(model: Interpretation, tr: Translation) -> Heap:
    """The heap named by the footprint set and points-to function."""
    footprint = model.assign.get(tr.ell0.name, frozenset())
    if not footprint:
        return EMPTY_HEAP
    ptf = model.assign.get(tr.pt0.name)
    if not isinstance(ptf, FiniteFunc):
        ptf = FiniteFunc((), model.fresh_data(7))
    return Heap((loc, ptf.apply(loc)) for loc in footprint)

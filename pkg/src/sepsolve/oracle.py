"""Brute-force satisfiability oracle over the small-model space.

A formula with measure ``m`` and points-to terms ``T`` that is satisfiable
at all is satisfiable by a heap whose domain lies inside ``m`` fresh
locations plus the values of ``T``, with cell values drawn from the values
of ``T`` plus one fresh datum.  The oracle enumerates interpretations of
the free symbols (location symbols up to renaming of fresh values, data
symbols over a small literal-derived pool) and every heap in that space,
deciding each candidate with the reference evaluator.  Intended for
desk-scale inputs only; the search space is estimated up front and a
:class:`BudgetExceeded` is raised when it is out of reach.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional

from .heaps import (
    BudgetExceeded,
    EMPTY_HEAP,
    Evaluator,
    Heap,
    Interpretation,
    NIL_NAME,
    UVal,
    value_key,
)
from .sorts import BOOL, INT, Sort
from .slformula import SL, free_syms_sl, walk_sl
from .terms import Term, walk
from .translate import measure, pt_terms


@dataclass
class OracleResult:
    status: str  # "sat" | "unsat"
    interp: Optional[Interpretation] = None
    heap: Optional[Heap] = None

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"


def _int_pool(phi: SL, extra: Optional[list[int]]) -> list[int]:
    lits = set()
    for node in walk_sl(phi):
        for t in node.terms:
            for s in walk(t):
                if s.op == "int":
                    lits.add(s.data)
    pool = sorted(lits)
    if extra:
        for v in extra:
            if v not in pool:
                pool.append(v)
    if not pool:
        pool = [0]
    pool.append(max(pool) + 1)  # one value outside the literals
    return pool


def _heap_signature(phi: SL) -> tuple[Optional[Sort], Optional[Sort]]:
    for node in walk_sl(phi):
        if node.op == "pto":
            return node.terms[0].sort, node.terms[1].sort
    return None, None


def _loc_assignments(symbols: list[Term], nil: UVal, sort_name: str) -> Iterator[dict[str, UVal]]:
    """All assignments up to renaming of non-nil values.

    Each symbol takes nil or one of the values already used, or the next
    unused fresh value (restricted-growth enumeration), which covers every
    equality pattern exactly once.
    """

    def go(i: int, used: int, acc: dict[str, UVal]):
        if i == len(symbols):
            yield dict(acc)
            return
        name = symbols[i].data
        choices = [nil] + [UVal(sort_name, k) for k in range(used + 1)]
        for v in choices:
            acc[name] = v
            nxt = used + 1 if isinstance(v, UVal) and v.sort_name == sort_name and v.index == used else used
            yield from go(i + 1, nxt, acc)
        del acc[name]

    yield from go(0, 0, {})


def _data_assignments(symbols: list[Term], pools: dict[Sort, list]) -> Iterator[dict[str, object]]:
    if not symbols:
        yield {}
        return
    spaces = [pools[s.sort] for s in symbols]
    for combo in itertools.product(*spaces):
        yield {s.data: v for s, v in zip(symbols, combo)}


def oracle_sat(
    phi: SL,
    data_pool: Optional[list] = None,
    budget: int = 60_000_000,
) -> OracleResult:
    """Enumerate bounded interpretations and heaps; decide satisfiability.

    Returns a checked witness on sat.  Raises :class:`BudgetExceeded` when
    the estimated enumeration space exceeds ``budget`` evaluation steps.
    """
    loc_sort, data_sort = _heap_signature(phi)
    m = measure(phi)
    terms = pt_terms(phi)
    syms = sorted(free_syms_sl(phi), key=lambda t: t.data)
    if loc_sort is None:
        # No points-to atom: treat the sort of sep.nil (if present) as the
        # location sort so its aliasing patterns are still enumerated.
        for s in syms:
            if s.data == NIL_NAME:
                loc_sort = s.sort
                break

    wand_need = max(
        [0]
        + [max(measure(n.kids[0]), measure(n.kids[1])) for n in walk_sl(phi) if n.op == "wand"]
    )
    loc_syms = [s for s in syms if loc_sort is not None and s.sort == loc_sort and s.data != NIL_NAME]
    int_syms = [s for s in syms if s.sort == INT]
    other_syms = [
        s
        for s in syms
        if s not in loc_syms
        and s not in int_syms
        and s.data != NIL_NAME
        and not s.sort.is_fun
        and not s.sort.is_set
        and s.sort != BOOL
    ]
    bool_syms = [s for s in syms if s.sort == BOOL]

    sort_name = loc_sort.name if loc_sort is not None else "Loc"
    nil = UVal(sort_name, 10_000)

    int_pool = _int_pool(phi, data_pool if data_pool and all(isinstance(v, int) for v in data_pool) else None)
    pools: dict[Sort, list] = {INT: int_pool}
    for s in other_syms:
        pools.setdefault(s.sort, _uninterpreted_pool(s.sort, len(other_syms) + 1))

    # Estimated search-space size; refuse clearly hopeless instances.
    est = _estimate(phi, loc_syms, int_syms, other_syms, bool_syms, m, terms, int_pool, wand_need)
    if est > budget:
        raise BudgetExceeded("oracle space ~%d steps exceeds budget %d" % (est, budget))

    eval_budget = budget

    for loc_assign in _loc_assignments(loc_syms, nil, sort_name):
        for data_assign in _data_assignments(int_syms + other_syms, pools):
            for bool_combo in itertools.product([False, True], repeat=len(bool_syms)):
                assign: dict[str, object] = {NIL_NAME: nil}
                assign.update(loc_assign)
                assign.update(data_assign)
                assign.update({s.data: v for s, v in zip(bool_syms, bool_combo)})
                interp = Interpretation(assign, loc_sort, data_sort, 20_000)
                res = _search_heaps(phi, interp, m, terms, wand_need, eval_budget)
                if res is not None:
                    return res
    return OracleResult("unsat")


def _uninterpreted_pool(sort: Sort, n: int) -> list:
    if sort == INT:
        return [0, 1]
    if sort.is_tuple:
        parts = [_uninterpreted_pool(p, n) for p in sort.params]
        return [tuple(c) for c in itertools.product(*parts)]
    return [UVal(sort.name, 30_000 + i) for i in range(n)]


def _estimate(phi, loc_syms, int_syms, other_syms, bool_syms, m, terms, int_pool, wand_need):
    interp_count = 1
    for i in range(len(loc_syms)):
        interp_count *= i + 2
    interp_count *= len(int_pool) ** len(int_syms) or 1
    interp_count *= 2 ** len(bool_syms)
    for s in other_syms:
        interp_count *= max(len(_uninterpreted_pool(s.sort, len(other_syms) + 1)), 1)
    n_loc_terms = len({t for t in terms if loc_syms and t.sort == loc_syms[0].sort} | set())
    dom = m + max(n_loc_terms, 1)
    vals = len({t for t in terms}) + 1
    heap_count = (1 + min(vals, 6)) ** min(dom + wand_need, 14)
    nodes = sum(1 for _ in walk_sl(phi))
    return interp_count * heap_count * max(nodes // 4, 1)


def _search_heaps(
    phi: SL,
    interp: Interpretation,
    m: int,
    terms: tuple[Term, ...],
    wand_need: int,
    budget: int,
) -> Optional[OracleResult]:
    """Scan every bounded heap under one interpretation; sat result or None."""
    from .heaps import eval_term

    loc_sort, data_sort = interp.loc_sort, interp.data_sort
    fresh = [UVal(loc_sort.name if loc_sort else "Loc", 40_000 + i) for i in range(m)]
    dom_vals = list(fresh)
    val_vals = []
    for t in terms:
        v = eval_term(interp, t)
        if loc_sort is None or t.sort == loc_sort:
            if v not in dom_vals:
                dom_vals.append(v)
        if data_sort is None or t.sort == data_sort:
            if v not in val_vals:
                val_vals.append(v)
    dom_vals = sorted(set(dom_vals), key=value_key)
    datum = interp.fresh_data()
    val_vals = sorted(set(val_vals) | {datum}, key=value_key)

    pool = [UVal(loc_sort.name if loc_sort else "Loc", 50_000 + i) for i in range(wand_need)]
    ev = Evaluator(interp, pool, interp.fresh_data(1), budget=budget)
    for n in range(len(dom_vals) + 1):
        for dom in itertools.combinations(dom_vals, n):
            for assignment in itertools.product(val_vals, repeat=n):
                heap = Heap(zip(dom, assignment))
                if ev.sat(phi, heap):
                    return OracleResult("sat", interp, heap)
    return None

"""Heaps, interpretations, and the satisfaction relation.

The semantic objects: values of uninterpreted sorts are opaque indexed
tokens, integers are Python ints, data tuples are Python tuples, sets are
frozensets, and functions are finite maps with a default.  A heap is a
finite partial map from location values to data values.

``eval_sl`` decides ``I,h |= phi`` directly from the semantic clauses.
Separating conjunction enumerates disjoint splits of the heap; the wand
quantifies over disjoint extension heaps drawn from a finite candidate
space (fresh locations plus the points-to terms of the wand, values from
the points-to terms plus one fresh datum), which is sufficient on the
bounded instances this evaluator is meant for.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .sorts import BOOL, INT, Sort
from .terms import FunBound, SetBound, Term
from .slformula import SL


class EvalError(Exception):
    """An interpretation is missing a symbol or a construct is unsupported."""


class BudgetExceeded(Exception):
    """The enumeration space of a brute-force evaluation is too large."""


@dataclass(frozen=True, order=True)
class UVal:
    """A value of an uninterpreted sort, distinct per (sort, index)."""

    sort_name: str
    index: int

    def __repr__(self) -> str:
        return "%s!%d" % (self.sort_name, self.index)


@dataclass(frozen=True)
class FiniteFunc:
    """A total function given by finitely many entries and a default."""

    entries: tuple[tuple[object, object], ...]
    default: object

    def apply(self, arg: object):
        for k, v in self.entries:
            if k == arg:
                return v
        return self.default

    def updated(self, arg: object, val: object) -> "FiniteFunc":
        kept = tuple((k, v) for k, v in self.entries if k != arg)
        return FiniteFunc(kept + ((arg, val),), self.default)


def value_key(v: object):
    """A total order on semantic values, for deterministic iteration."""
    if isinstance(v, bool):
        return (0, v)
    if isinstance(v, int):
        return (1, v)
    if isinstance(v, UVal):
        return (2, v.sort_name, v.index)
    if isinstance(v, tuple):
        return (3, tuple(value_key(x) for x in v))
    if isinstance(v, frozenset):
        return (4, tuple(sorted(value_key(x) for x in v)))
    return (5, repr(v))


class Heap:
    """An immutable finite partial map from locations to data values."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, items: Iterable[tuple[object, object]] = ()):
        m = dict(items)
        self._map = m
        self._items = tuple(sorted(m.items(), key=lambda kv: value_key(kv[0])))
        self._hash = hash(self._items)

    @property
    def items(self) -> tuple[tuple[object, object], ...]:
        return self._items

    def dom(self) -> frozenset:
        return frozenset(self._map)

    def get(self, loc):
        return self._map.get(loc)

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, loc) -> bool:
        return loc in self._map

    def __eq__(self, other) -> bool:
        return isinstance(other, Heap) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        cells = ", ".join("%r->%r" % kv for kv in self._items)
        return "Heap{%s}" % cells

    def disjoint(self, other: "Heap") -> bool:
        small, large = (self, other) if len(self) <= len(other) else (other, self)
        return not any(loc in large._map for loc in small._map)

    def union(self, other: "Heap") -> "Heap":
        assert self.disjoint(other)
        items = dict(self._map)
        items.update(other._map)
        return Heap(items.items())

    def restrict(self, locs: frozenset) -> "Heap":
        return Heap((k, v) for k, v in self._items if k in locs)


EMPTY_HEAP = Heap()

NIL_NAME = "sep.nil"


@dataclass
class Interpretation:
    """Assignment of values to the free symbols of a formula.

    ``assign`` maps symbol names to values (functions map to
    :class:`FiniteFunc`).  The location carrier is conceptually infinite:
    fresh values beyond ``loc_watermark`` are always available.
    """

    assign: dict[str, object] = field(default_factory=dict)
    loc_sort: Optional[Sort] = None
    data_sort: Optional[Sort] = None
    loc_watermark: int = 0

    def value(self, name: str):
        try:
            return self.assign[name]
        except KeyError:
            raise EvalError("unassigned symbol: %s" % name) from None

    def nil_value(self):
        return self.value(NIL_NAME)

    def extended(self, extra: dict[str, object]) -> "Interpretation":
        merged = dict(self.assign)
        merged.update(extra)
        return Interpretation(merged, self.loc_sort, self.data_sort, self.loc_watermark)

    def fresh_locs(self, n: int) -> list[UVal]:
        name = self.loc_sort.name if self.loc_sort else "Loc"
        return [UVal(name, self.loc_watermark + i) for i in range(n)]

    def fresh_data(self, offset: int = 0):
        """A data value outside everything this interpretation mentions."""
        return fresh_value_of_sort(self.data_sort or INT, self.loc_watermark + 64 + offset)


def fresh_value_of_sort(sort: Sort, index: int):
    if sort == INT:
        return 10_000_019 + index
    if sort.is_tuple:
        return tuple(fresh_value_of_sort(p, index + i) for i, p in enumerate(sort.params))
    return UVal(sort.name, index)


# ---------------------------------------------------------------------------
# term evaluation


def eval_term(interp: Interpretation, t: Term):
    op = t.op
    if op == "sym":
        return interp.value(t.data)
    if op == "int":
        return t.data
    if op == "bool":
        return t.data
    if op == "eq":
        return eval_term(interp, t.args[0]) == eval_term(interp, t.args[1])
    if op == "not":
        return not eval_term(interp, t.args[0])
    if op == "and":
        return all(eval_term(interp, a) for a in t.args)
    if op == "or":
        return any(eval_term(interp, a) for a in t.args)
    if op == "implies":
        return (not eval_term(interp, t.args[0])) or eval_term(interp, t.args[1])
    if op == "iff":
        return eval_term(interp, t.args[0]) == eval_term(interp, t.args[1])
    if op == "ite":
        c = eval_term(interp, t.args[0])
        return eval_term(interp, t.args[1] if c else t.args[2])
    if op == "add":
        return eval_term(interp, t.args[0]) + eval_term(interp, t.args[1])
    if op == "sub":
        return eval_term(interp, t.args[0]) - eval_term(interp, t.args[1])
    if op == "le":
        return eval_term(interp, t.args[0]) <= eval_term(interp, t.args[1])
    if op == "lt":
        return eval_term(interp, t.args[0]) < eval_term(interp, t.args[1])
    if op == "tuple":
        return tuple(eval_term(interp, a) for a in t.args)
    if op == "set.empty":
        return frozenset()
    if op == "set.singleton":
        return frozenset((eval_term(interp, t.args[0]),))
    if op == "set.union":
        return eval_term(interp, t.args[0]) | eval_term(interp, t.args[1])
    if op == "set.inter":
        return eval_term(interp, t.args[0]) & eval_term(interp, t.args[1])
    if op == "set.subset":
        return eval_term(interp, t.args[0]) <= eval_term(interp, t.args[1])
    if op == "set.member":
        return eval_term(interp, t.args[0]) in eval_term(interp, t.args[1])
    if op == "app":
        fn = eval_term(interp, t.args[0])
        if not isinstance(fn, FiniteFunc):
            raise EvalError("application of non-function value %r" % (fn,))
        return fn.apply(eval_term(interp, t.args[1]))
    if op == "forall":
        return _eval_forall(interp, t)
    raise EvalError("cannot evaluate %r" % op)


def _eval_forall(interp: Interpretation, t: Term) -> bool:
    """Expand a bounded quantifier over its finite candidate space."""
    choices: list[list[tuple[str, object]]] = []
    for b in t.binders:
        if isinstance(b.bound, SetBound):
            elems = _sorted_values(
                eval_term(interp, u) for u in b.bound.terms if u.sort == b.var.sort.elem
            )
            subsets = [
                frozenset(c)
                for n in range(len(elems) + 1)
                for c in itertools.combinations(elems, n)
            ]
            choices.append([(b.var.data, s) for s in subsets])
        else:
            dom = _sorted_values(
                eval_term(interp, u) for u in b.bound.dom if u.sort == b.var.sort.dom
            )
            rng = _sorted_values(
                eval_term(interp, u) for u in b.bound.rng if u.sort == b.var.sort.rng
            )
            if not rng:
                choices.append([(b.var.data, FiniteFunc((), None))])
                continue
            funcs = [
                FiniteFunc(tuple(zip(dom, vals)), rng[0])
                for vals in itertools.product(rng, repeat=len(dom))
            ]
            choices.append([(b.var.data, f) for f in funcs])
    for combo in itertools.product(*choices):
        ext = interp.extended(dict(combo))
        if not eval_term(ext, t.args[0]):
            return False
    return True


def _sorted_values(vals: Iterable[object]) -> list[object]:
    seen = []
    for v in vals:
        if v not in seen:
            seen.append(v)
    return sorted(seen, key=value_key)


# ---------------------------------------------------------------------------
# spatial satisfaction


class Evaluator:
    """Memoizing evaluator for ``I,h |= phi`` over one interpretation.

    ``loc_pool`` supplies the fresh locations that wand extensions may
    allocate; it must be disjoint from the values of the formula's
    points-to terms under ``interp``.
    """

    def __init__(
        self,
        interp: Interpretation,
        loc_pool: list,
        fresh_datum,
        budget: int = 2_000_000,
    ) -> None:
        self.interp = interp
        self.loc_pool = loc_pool
        self.fresh_datum = fresh_datum
        self.budget = budget
        self.steps = 0
        self._memo: dict[tuple[int, Heap], bool] = {}
        self._node_info: dict[int, tuple] = {}

    def _spend(self, n: int = 1) -> None:
        self.steps += n
        if self.steps > self.budget:
            raise BudgetExceeded("evaluation budget exceeded (%d steps)" % self.steps)

    def sat(self, phi: SL, heap: Heap) -> bool:
        key = (id(phi), heap)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self._spend()
        res = self._sat(phi, heap)
        self._memo[key] = res
        return res

    def _sat(self, phi: SL, heap: Heap) -> bool:
        op = phi.op
        if op == "emp":
            return len(heap) == 0
        if op == "pure":
            return bool(eval_term(self.interp, phi.terms[0]))
        if op == "and":
            return all(self.sat(k, heap) for k in phi.kids)
        if op == "not":
            return not self.sat(phi.kids[0], heap)
        if op == "pto":
            addr = eval_term(self.interp, phi.terms[0])
            val = eval_term(self.interp, phi.terms[1])
            return (
                len(heap) == 1
                and heap.get(addr) == val
                and addr != self.interp.nil_value()
            )
        if op == "star":
            return self._sat_star(phi, heap)
        if op == "wand":
            return self._sat_wand(phi, heap)
        raise EvalError("cannot evaluate spatial node %r" % op)

    def _sat_star(self, phi: SL, heap: Heap) -> bool:
        # Existence of a disjoint split h = h1 U ... U hn with hi |= phi_i.
        # Assign each cell to one operand; iterate splits of the first
        # operand and recurse on the remainder.
        def split(kids: tuple[SL, ...], h: Heap) -> bool:
            if len(kids) == 1:
                return self.sat(kids[0], h)
            items = h.items
            for r in range(len(items) + 1):
                for chosen in itertools.combinations(items, r):
                    self._spend()
                    part = Heap(chosen)
                    if not self.sat(kids[0], part):
                        continue
                    rest = Heap(tuple(kv for kv in items if kv not in chosen))
                    if split(kids[1:], rest):
                        return True
            return False

        return split(phi.kids, heap)

    def _sat_wand(self, phi: SL, heap: Heap) -> bool:
        lhs, rhs = phi.kids
        locs, vals = self._wand_space(phi)
        free_locs = [l for l in locs if l not in heap]
        for n in range(len(free_locs) + 1):
            for dom in itertools.combinations(free_locs, n):
                for assignment in itertools.product(vals, repeat=n):
                    self._spend()
                    ext = Heap(zip(dom, assignment))
                    if not self.sat(lhs, ext):
                        continue
                    if not self.sat(rhs, heap.union(ext)):
                        return False
        return True

    def _wand_space(self, phi: SL) -> tuple[list, list]:
        info = self._node_info.get(id(phi))
        if info is not None:
            return info
        from .translate import measure, pt_terms

        lhs, rhs = phi.kids
        need = max(measure(lhs), measure(rhs))
        if need > len(self.loc_pool):
            raise BudgetExceeded(
                "wand evaluation needs %d fresh locations, pool has %d"
                % (need, len(self.loc_pool))
            )
        loc_sort = self.interp.loc_sort
        data_sort = self.interp.data_sort
        locs = set(self.loc_pool[:need])
        vals = {self.fresh_datum}
        for t in pt_terms(phi):
            v = eval_term(self.interp, t)
            if loc_sort is None or t.sort == loc_sort:
                locs.add(v)
            if data_sort is None or t.sort == data_sort:
                vals.add(v)
        info = (sorted(locs, key=value_key), sorted(vals, key=value_key))
        self._node_info[id(phi)] = info
        return info


def eval_sl(interp: Interpretation, heap: Heap, phi: SL, budget: int = 2_000_000) -> bool:
    """Decide ``I,h |= phi``.

    The interpretation must assign every free symbol of ``phi`` (including
    ``sep.nil``).  Wands are evaluated over the bounded extension space, so
    the result is total only on desk-scale formulas; a blow-up raises
    :class:`BudgetExceeded`.
    """
    from .translate import measure
    from .slformula import walk_sl

    if interp.loc_sort is None or interp.data_sort is None:
        for node in walk_sl(phi):
            if node.op == "pto":
                interp = Interpretation(
                    interp.assign,
                    node.terms[0].sort,
                    node.terms[1].sort,
                    interp.loc_watermark,
                )
                break
    need = max(
        [1]
        + [
            max(measure(n.kids[0]), measure(n.kids[1]))
            for n in walk_sl(phi)
            if n.op == "wand"
        ]
    )
    used = _used_indices(interp, heap)
    base = max(used, default=-1) + 1
    loc_name = interp.loc_sort.name if interp.loc_sort else "Loc"
    pool = [UVal(loc_name, base + i) for i in range(need)]
    datum = _fresh_datum(interp, heap, phi, base + need)
    ev = Evaluator(interp, pool, datum, budget=budget)
    return ev.sat(phi, heap)


def _used_indices(interp: Interpretation, heap: Heap) -> set[int]:
    out: set[int] = set()

    def scan(v):
        if isinstance(v, UVal):
            out.add(v.index)
        elif isinstance(v, tuple):
            for x in v:
                scan(x)
        elif isinstance(v, frozenset):
            for x in v:
                scan(x)
        elif isinstance(v, FiniteFunc):
            for k, w in v.entries:
                scan(k)
                scan(w)
            scan(v.default)

    for v in interp.assign.values():
        scan(v)
    for k, v in heap.items:
        scan(k)
        scan(v)
    out.add(interp.loc_watermark)
    return out


def _fresh_datum(interp: Interpretation, heap: Heap, phi: SL, index: int):
    data_sort = interp.data_sort
    if data_sort is None:
        for node in _walk_pto(phi):
            data_sort = node.terms[1].sort
            break
    if data_sort is None:
        data_sort = INT
    if data_sort == INT:
        ints = {v for _, v in heap.items if isinstance(v, int)}
        ints |= {v for v in interp.assign.values() if isinstance(v, int) and not isinstance(v, bool)}
        return max([abs(i) for i in ints] + [0]) + 1 + index
    return fresh_value_of_sort(data_sort, index)


def _walk_pto(phi: SL):
    from .slformula import walk_sl

    return (n for n in walk_sl(phi) if n.op == "pto")

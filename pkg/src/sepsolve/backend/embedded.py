"""Self-contained decision procedure for the lowered query fragment.

A small CDCL SAT core over three atom families:

* boolean symbols (guards, membership flags, boolean applications),
* equalities between terms of uninterpreted sorts, closed eagerly under
  transitivity and function congruence,
* integer difference constraints ``x - y <= c`` (integer equalities are
  split into two inequalities; strict negations shift the constant).

Difference constraints are checked on full assignments by negative-cycle
detection; conflicts come back as blocking clauses.  Models assign each
equality class of an uninterpreted sort a distinct opaque value, read
integers off shortest-path potentials, and rebuild sets, tuples and
finite functions from the atom tables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from ..heaps import FiniteFunc, Interpretation, UVal, fresh_value_of_sort
from ..sorts import BOOL, INT, Sort
from ..terms import Term, free_syms
from .encode import EncodedQuery, encode_sets
from .query import BackendError, QFQuery, UnsupportedTheory, Verdict, check_model


# ---------------------------------------------------------------------------
# linear forms


def _linear(t: Term) -> tuple[dict[Term, int], int]:
    """Coefficient map + constant of an Int term; nodes are syms/apps."""
    if t.op == "int":
        return {}, t.data
    if t.op in ("sym", "app"):
        return {t: 1}, 0
    if t.op == "add":
        m1, c1 = _linear(t.args[0])
        m2, c2 = _linear(t.args[1])
        return _merge_lin(m1, m2, 1), c1 + c2
    if t.op == "sub":
        m1, c1 = _linear(t.args[0])
        m2, c2 = _linear(t.args[1])
        return _merge_lin(m1, m2, -1), c1 - c2
    raise UnsupportedTheory("non-linear or unsupported Int term %r" % t.op)


def _merge_lin(m1: dict, m2: dict, sign: int) -> dict:
    out = dict(m1)
    for k, v in m2.items():
        out[k] = out.get(k, 0) + sign * v
        if out[k] == 0:
            del out[k]
    return out


@dataclass(frozen=True)
class _DLAtom:
    """pos - neg <= bound (either side may be absent)."""

    pos: Optional[Term]
    neg: Optional[Term]
    bound: int


def _difference_atom(a: Term, b: Term, bound_shift: int):
    """Normalize ``a <= b + shift`` to a difference atom or a constant."""
    m, c = _linear(Term("sub", INT, (a, b)))
    bound = bound_shift - c
    if not m:
        return 0 <= bound
    pos = [t for t, k in m.items() if k == 1]
    neg = [t for t, k in m.items() if k == -1]
    if len(pos) + len(neg) != len(m) or len(pos) > 1 or len(neg) > 1:
        raise UnsupportedTheory("integer atom is not a difference constraint")
    return _DLAtom(pos[0] if pos else None, neg[0] if neg else None, bound)


# ---------------------------------------------------------------------------
# SAT core


class _Sat:
    """CDCL with two-literal watching, 1UIP learning and activity decisions."""

    def __init__(self) -> None:
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.watches: dict[int, list[int]] = {}
        self.units: list[tuple[int, int]] = []  # (lit, clause index)
        self.assign: list[int] = []  # var-1 -> 0 / 1 / -1
        self.level: list[int] = []
        self.reason: list[int] = []
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.activity: list[float] = []
        self.act_inc = 1.0
        self.phase: list[bool] = []
        self.unsat = False

    def new_var(self) -> int:
        self.nvars += 1
        self.assign.append(0)
        self.level.append(-1)
        self.reason.append(-1)
        self.activity.append(0.0)
        self.phase.append(False)
        return self.nvars  # 1-based

    def value(self, lit: int) -> int:
        v = self.assign[abs(lit) - 1]
        return v if lit > 0 else -v

    def _lit_rank(self, lit: int) -> tuple[int, int]:
        # Watch preference: true/unassigned first, then recently falsified.
        val = self.value(lit)
        if val > 0:
            return (0, -self.level[abs(lit) - 1])
        if val == 0:
            return (1, 0)
        return (2, -self.level[abs(lit) - 1])

    def add_clause(self, lits: list[int]) -> Optional[int]:
        out: list[int] = []
        for l in lits:
            if -l in out:
                return None  # tautology
            if l not in out:
                out.append(l)
        if not out:
            self.unsat = True
            return None
        out.sort(key=self._lit_rank)
        idx = len(self.clauses)
        self.clauses.append(out)
        if len(out) == 1:
            self.units.append((out[0], idx))
        else:
            self.watches.setdefault(out[0], []).append(idx)
            self.watches.setdefault(out[1], []).append(idx)
        return idx

    def _enqueue(self, lit: int, reason: int) -> bool:
        v = abs(lit) - 1
        if self.assign[v] != 0:
            return self.value(lit) > 0
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)
        return True

    def _attach_units(self) -> bool:
        """Assert all unit clauses at the root level.  False on conflict."""
        assert not self.trail_lim
        for lit, ci in self.units:
            if self.value(lit) < 0:
                return False
            self._enqueue(lit, ci)
        return True

    def _propagate(self) -> int:
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            falsified = -lit
            watching = self.watches.get(falsified, [])
            i = 0
            while i < len(watching):
                ci = watching[i]
                clause = self.clauses[ci]
                if clause[0] == falsified:
                    clause[0], clause[1] = clause[1], clause[0]
                other = clause[0]
                if self.value(other) > 0:
                    i += 1
                    continue
                moved = False
                for j in range(2, len(clause)):
                    if self.value(clause[j]) >= 0:
                        clause[1], clause[j] = clause[j], clause[1]
                        self.watches.setdefault(clause[1], []).append(ci)
                        watching[i] = watching[-1]
                        watching.pop()
                        moved = True
                        break
                if moved:
                    continue
                if self.value(other) < 0:
                    return ci
                self._enqueue(other, ci)
                i += 1
        return -1

    def _bump(self, var: int) -> None:
        self.activity[var] += self.act_inc
        if self.activity[var] > 1e100:
            for k in range(self.nvars):
                self.activity[k] *= 1e-100
            self.act_inc *= 1e-100

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learnt: list[int] = []
        seen = [False] * self.nvars
        counter = 0
        lit = 0
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        clause = self.clauses[confl]
        while True:
            for q in clause:
                if q == -lit:  # the literal being resolved on
                    continue
                v = abs(q) - 1
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[idx]) - 1]:
                idx -= 1
            lit = -self.trail[idx]
            v = abs(lit) - 1
            seen[v] = False
            counter -= 1
            idx -= 1
            if counter == 0:
                break
            clause = self.clauses[self.reason[v]]
        learnt.insert(0, lit)
        if len(learnt) == 1:
            blevel = 0
        else:
            blevel = max(self.level[abs(q) - 1] for q in learnt[1:])
        self.act_inc *= 1.052
        return learnt, blevel

    def _backtrack(self, blevel: int) -> None:
        if blevel >= len(self.trail_lim):
            return
        limit = self.trail_lim[blevel]
        for lit in reversed(self.trail[limit:]):
            v = abs(lit) - 1
            self.phase[v] = self.assign[v] > 0
            self.assign[v] = 0
            self.reason[v] = -1
            self.level[v] = -1
        del self.trail[limit:]
        del self.trail_lim[blevel:]
        self.qhead = limit

    def _decide(self) -> bool:
        best = -1
        best_act = -1.0
        for v in range(self.nvars):
            if self.assign[v] == 0 and self.activity[v] > best_act:
                best = v
                best_act = self.activity[v]
        if best < 0:
            return False
        self.trail_lim.append(len(self.trail))
        self._enqueue(best + 1 if self.phase[best] else -(best + 1), -1)
        return True

    def solve(self, theory_check) -> Optional[list[int]]:
        """Search for a theory-consistent model; ``None`` means unsat.

        ``theory_check(assign)`` returns ``None`` to accept the full
        propositional model, or a blocking clause refuting it.
        """
        if self.unsat or not self._attach_units():
            return None
        while True:
            confl = self._propagate()
            if confl >= 0:
                if not self.trail_lim:
                    return None
                learnt, blevel = self._analyze(confl)
                self._backtrack(blevel)
                ci = self.add_clause(learnt)
                assert ci is not None
                self._enqueue(learnt[0], ci)
                continue
            if self._decide():
                continue
            clause = theory_check(self.assign)
            if clause is None:
                return list(self.assign)
            self._backtrack(0)
            self.qhead = 0
            if self.add_clause(clause) is None and not clause:
                return None
            if self.unsat or not self._attach_units():
                return None


# ---------------------------------------------------------------------------
# clausifier + theory glue


class _Problem:
    def __init__(self, enc: EncodedQuery):
        self.enc = enc
        self.sat = _Sat()
        self.bool_vars: dict[str, int] = {}
        self.app_atoms: dict[Term, int] = {}
        self.eq_atoms: dict[tuple[Term, Term], int] = {}
        self.dl_atoms: dict[_DLAtom, int] = {}
        self.defs: dict[Term, int] = {}
        self.sort_terms: dict[Sort, list[Term]] = {}
        self.int_terms: list[Term] = []
        self.apps: dict[Term, list[Term]] = {}

    # -- atom variables ------------------------------------------------

    def _var_for_bool_sym(self, name: str) -> int:
        v = self.bool_vars.get(name)
        if v is None:
            v = self.sat.new_var()
            self.bool_vars[name] = v
        return v

    def _note_term(self, t: Term) -> None:
        if t.sort == INT:
            if t.op in ("sym", "app") and t not in self.int_terms:
                self.int_terms.append(t)
        elif t.sort != BOOL and not (t.sort.is_set or t.sort.is_fun or t.sort.is_tuple):
            lst = self.sort_terms.setdefault(t.sort, [])
            if t not in lst:
                lst.append(t)
        if t.op == "app":
            self._note_app(t)

    def _note_app(self, t: Term) -> None:
        fn = t.args[0]
        lst = self.apps.setdefault(fn, [])
        if t not in lst:
            lst.append(t)
        self._note_term(t.args[1])

    def _var_for_eq(self, a: Term, b: Term) -> int:
        if (b, a) in self.eq_atoms:
            a, b = b, a
        key = (a, b)
        v = self.eq_atoms.get(key)
        if v is None:
            v = self.sat.new_var()
            self.eq_atoms[key] = v
        return v

    def _int_le(self, a: Term, b: Term, shift: int = 0) -> int:
        atom = _difference_atom(a, b, shift)
        if atom is True:
            return self._const(True)
        if atom is False:
            return self._const(False)
        for side in (atom.pos, atom.neg):
            if side is not None:
                self._note_term(side)
        v = self.dl_atoms.get(atom)
        if v is None:
            v = self.sat.new_var()
            self.dl_atoms[atom] = v
        return v

    def _const(self, val: bool) -> int:
        v = self.bool_vars.get("__true")
        if v is None:
            v = self.sat.new_var()
            self.bool_vars["__true"] = v
            self.sat.add_clause([v])
        return v if val else -v

    # -- Tseitin -------------------------------------------------------

    def literal(self, t: Term) -> int:
        hit = self.defs.get(t)
        if hit is not None:
            return hit
        lit = self._literal(t)
        self.defs[t] = lit
        return lit

    def _define(self, sub_lits: list[int], kind: str) -> int:
        v = self.sat.new_var()
        if kind == "and":
            for l in sub_lits:
                self.sat.add_clause([-v, l])
            self.sat.add_clause([v] + [-l for l in sub_lits])
        else:
            for l in sub_lits:
                self.sat.add_clause([v, -l])
            self.sat.add_clause([-v] + sub_lits)
        return v

    def _literal(self, t: Term) -> int:
        op = t.op
        if op == "bool":
            c = self._const(True)
            return c if t.data else -c
        if op == "sym":
            return self._var_for_bool_sym(t.data)
        if op == "not":
            return -self.literal(t.args[0])
        if op == "and":
            return self._define([self.literal(a) for a in t.args], "and")
        if op == "or":
            return self._define([self.literal(a) for a in t.args], "or")
        if op == "implies":
            return self._define(
                [-self.literal(t.args[0]), self.literal(t.args[1])], "or"
            )
        if op == "iff":
            a, b = self.literal(t.args[0]), self.literal(t.args[1])
            v = self.sat.new_var()
            self.sat.add_clause([-v, -a, b])
            self.sat.add_clause([-v, a, -b])
            self.sat.add_clause([v, a, b])
            self.sat.add_clause([v, -a, -b])
            return v
        if op == "ite":  # boolean-sorted
            c, a, b = (self.literal(x) for x in t.args)
            return self._define(
                [self._define([c, a], "and"), self._define([-c, b], "and")], "or"
            )
        if op == "app":  # boolean-valued application
            self._note_app(t)
            v = self.app_atoms.get(t)
            if v is None:
                v = self.sat.new_var()
                self.app_atoms[t] = v
            return v
        if op == "eq":
            a, b = t.args
            if a.sort == INT:
                return self._define([self._int_le(a, b), self._int_le(b, a)], "and")
            if a.sort == BOOL or a.sort.is_set or a.sort.is_tuple or a.sort.is_fun:
                raise BackendError("unlowered equality over %r" % (a.sort,))
            self._note_term(a)
            self._note_term(b)
            if a is b:
                return self._const(True)
            return self._var_for_eq(a, b)
        if op == "le":
            return self._int_le(t.args[0], t.args[1])
        if op == "lt":
            return self._int_le(t.args[0], t.args[1], -1)
        if op == "forall":
            raise BackendError("quantifier reached the backend")
        raise UnsupportedTheory("cannot clausify %r" % op)

    # -- eager equality axioms -------------------------------------------

    def add_equality_axioms(self) -> None:
        for sort in list(self.sort_terms):
            terms = self.sort_terms[sort]
            n = len(terms)
            evar = {}
            for i in range(n):
                for j in range(i + 1, n):
                    evar[(i, j)] = self._var_for_eq(terms[i], terms[j])
            for i in range(n):
                for j in range(i + 1, n):
                    eij = evar[(i, j)]
                    for k in range(j + 1, n):
                        ejk = evar[(j, k)]
                        eik = evar[(i, k)]
                        self.sat.add_clause([-eij, -ejk, eik])
                        self.sat.add_clause([-eij, -eik, ejk])
                        self.sat.add_clause([-eik, -ejk, eij])
        for fn in list(self.apps):
            apps = self.apps[fn]
            rng = fn.sort.rng
            for a, b in itertools.combinations(apps, 2):
                if a.args[1] is b.args[1]:
                    continue  # identical arguments: same term
                arg_lit = self._var_for_eq(a.args[1], b.args[1])
                if rng == INT:
                    self.sat.add_clause([-arg_lit, self._int_le(a, b)])
                    self.sat.add_clause([-arg_lit, self._int_le(b, a)])
                elif rng == BOOL:
                    va, vb = self.app_atoms[a], self.app_atoms[b]
                    self.sat.add_clause([-arg_lit, -va, vb])
                    self.sat.add_clause([-arg_lit, va, -vb])
                else:
                    self.sat.add_clause([-arg_lit, self._var_for_eq(a, b)])

    # -- difference-logic check ------------------------------------------

    def _dl_edges(self, assign: list[int], with_lits: bool):
        nodes: dict[Optional[Term], int] = {None: 0}
        for t in self.int_terms:
            nodes.setdefault(t, len(nodes))
        edges = []
        for atom, var in self.dl_atoms.items():
            val = assign[var - 1]
            if val == 0:
                continue
            u = nodes.setdefault(atom.pos, len(nodes))
            v = nodes.setdefault(atom.neg, len(nodes))
            if val > 0:
                edges.append((v, u, atom.bound, var))
            else:
                edges.append((u, v, -atom.bound - 1, -var))
        return nodes, edges

    def dl_check(self, assign: list[int]) -> Optional[list[int]]:
        """None if the asserted difference constraints are feasible, else a
        blocking clause built from a negative cycle."""
        nodes, edges = self._dl_edges(assign, True)
        n = len(nodes)
        dist = [0] * n
        pred: list[Optional[tuple[int, int]]] = [None] * n
        bad = -1
        for it in range(n + 1):
            changed = False
            for (u, v, w, lit) in edges:
                if dist[u] + w < dist[v]:
                    dist[v] = dist[u] + w
                    pred[v] = (u, lit)
                    changed = True
                    if it == n:
                        bad = v
            if not changed:
                return None
        if bad < 0:
            return None
        seen = set()
        v = bad
        while v not in seen and pred[v] is not None:
            seen.add(v)
            v = pred[v][0]
        if pred[v] is None:
            # Could not localize the cycle; block the whole asserted set.
            return [-lit for (_, _, _, lit) in edges]
        cycle_lits = []
        start = v
        while True:
            u, lit = pred[v]
            if lit not in cycle_lits:
                cycle_lits.append(lit)
            v = u
            if v == start:
                break
        return [-l for l in cycle_lits]

    # -- model -------------------------------------------------------------

    def build_model(self, assign: list[int], query: QFQuery) -> Interpretation:
        values: dict[str, object] = {}
        term_value: dict[Term, object] = {}
        max_classes = 0
        for sort, terms in self.sort_terms.items():
            parent = list(range(len(terms)))

            def find(i: int) -> int:
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            idx = {t: i for i, t in enumerate(terms)}
            for (a, b), var in self.eq_atoms.items():
                if a.sort == sort and assign[var - 1] > 0:
                    ra, rb = find(idx[a]), find(idx[b])
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
            rep_val: dict[int, UVal] = {}
            for i, t in enumerate(terms):
                r = find(i)
                if r not in rep_val:
                    rep_val[r] = UVal(sort.name, len(rep_val))
                term_value[t] = rep_val[r]
            max_classes = max(max_classes, len(rep_val))
        term_value.update(self._int_model(assign))
        for terms in list(self.sort_terms.values()) + [self.int_terms]:
            for t in terms:
                if t.op == "sym":
                    values[t.data] = term_value[t]
        for name, var in self.bool_vars.items():
            if name not in ("__true", "__false"):
                values[name] = assign[var - 1] > 0
        set_syms = {
            s.data
            for a in query.assertions
            for s in free_syms(a)
            if s.sort.is_set
        }
        for set_name in sorted(set_syms | {n for (n, _) in self.enc.member_vars}):
            uni = self.enc.universes.get(set_name, ())
            members = set()
            for i, g in enumerate(uni):
                mv = self.enc.member_vars.get((set_name, i))
                if mv is None:
                    continue
                var = self.bool_vars.get(mv.data)
                if var is not None and assign[var - 1] > 0:
                    members.add(self._term_value(g, term_value))
            values[set_name] = frozenset(members)
        fresh_idx = 1000 + max_classes
        for fn, apps in self.apps.items():
            entries: dict[object, object] = {}
            for a in apps:
                argv = self._term_value(a.args[1], term_value)
                if fn.sort.rng == BOOL:
                    resv = assign[self.app_atoms[a] - 1] > 0
                else:
                    resv = self._term_value(a, term_value)
                entries.setdefault(argv, resv)
            default = (
                False if fn.sort.rng == BOOL else fresh_value_of_sort(fn.sort.rng, fresh_idx)
            )
            fresh_idx += 1
            values[fn.data] = FiniteFunc(tuple(entries.items()), default)
        model = Interpretation(values, query.loc_sort, query.data_sort, 2000 + fresh_idx)
        _reassemble_composites(model, query, fresh_idx)
        _complete_model(model, query, fresh_idx + 200)
        return model

    def _term_value(self, t: Term, term_value: dict[Term, object]):
        if t in term_value:
            return term_value[t]
        if t.op in ("int", "bool"):
            return t.data
        raise BackendError("no model value for term %r" % (t,))

    def _int_model(self, assign: list[int]) -> dict[Term, int]:
        nodes, edges = self._dl_edges(assign, False)
        n = len(nodes)
        dist = [0] * n
        for _ in range(n):
            changed = False
            for (u, v, w, _lit) in edges:
                if dist[u] + w < dist[v]:
                    dist[v] = dist[u] + w
                    changed = True
            if not changed:
                break
        zero = dist[0]
        return {t: dist[i] - zero for t, i in nodes.items() if t is not None}


def _reassemble_composites(model: Interpretation, query: QFQuery, fresh_idx: int) -> None:
    """Give tuple-sorted symbols/functions values built from their components."""
    syms: set[Term] = set()
    for a in query.assertions:
        syms |= free_syms(a)
    counter = itertools.count(fresh_idx + 500)

    def comp_value(base: str, i: int, sort: Sort):
        name = "%s#%d" % (base, i)
        if name in model.assign:
            return model.assign[name]
        v = fresh_value_of_sort(sort, next(counter))
        model.assign[name] = v
        return v

    for s in sorted(syms, key=lambda t: t.data):
        if s.sort.is_tuple and s.data not in model.assign:
            model.assign[s.data] = tuple(
                comp_value(s.data, i, p) for i, p in enumerate(s.sort.params)
            )
        elif s.sort.is_fun and s.sort.rng.is_tuple and s.data not in model.assign:
            comps: list[FiniteFunc] = []
            for i, p in enumerate(s.sort.rng.params):
                name = "%s#%d" % (s.data, i)
                f = model.assign.get(name)
                if not isinstance(f, FiniteFunc):
                    f = FiniteFunc((), fresh_value_of_sort(p, next(counter)))
                    model.assign[name] = f
                comps.append(f)
            args: list[object] = []
            for f in comps:
                for k, _ in f.entries:
                    if k not in args:
                        args.append(k)
            entries = tuple((arg, tuple(f.apply(arg) for f in comps)) for arg in args)
            default = tuple(f.default for f in comps)
            model.assign[s.data] = FiniteFunc(entries, default)


def _complete_model(model: Interpretation, query: QFQuery, fresh_idx: int) -> None:
    """Default values for free symbols no atom ever constrained."""
    counter = itertools.count(fresh_idx)
    for a in query.assertions:
        for s in sorted(free_syms(a), key=lambda t: t.data):
            if s.data in model.assign:
                continue
            if s.sort == BOOL:
                model.assign[s.data] = False
            elif s.sort == INT:
                model.assign[s.data] = 0
            elif s.sort.is_set:
                model.assign[s.data] = frozenset()
            elif s.sort.is_fun:
                rng = s.sort.rng
                default = False if rng == BOOL else fresh_value_of_sort(rng, next(counter))
                model.assign[s.data] = FiniteFunc((), default)
            else:
                model.assign[s.data] = fresh_value_of_sort(s.sort, next(counter))


class EmbeddedBackend:
    """Reference backend: eager equality encoding + CDCL + difference logic."""

    name = "embedded"

    def __init__(self, self_check: bool = True):
        self.self_check = self_check
        self.stats = {"queries": 0, "sat": 0, "unsat": 0}

    def check_sat(self, query: QFQuery) -> Verdict:
        self.stats["queries"] += 1
        try:
            enc = encode_sets(query)
            prob = _Problem(enc)
            for a in enc.assertions:
                prob.sat.add_clause([prob.literal(a)])
            for (name, i) in enc.member_vars:
                prob._note_term(enc.universes[name][i])
            prob.add_equality_axioms()
            assign = prob.sat.solve(prob.dl_check)
        except UnsupportedTheory as e:
            return Verdict("unknown", reason=str(e))
        if assign is None:
            self.stats["unsat"] += 1
            return Verdict("unsat")
        model = prob.build_model(assign, query)
        if self.self_check:
            check_model(query, model)
        self.stats["sat"] += 1
        return Verdict("sat", model=model)

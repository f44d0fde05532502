"""Concrete syntax: an SMT-LIB-style s-expression surface for heap problems.

``(declare-heap (<LocSort> <DataSort>))`` fixes the heap signature and
brings ``pto``, ``sep``, ``wand``, ``sep.emp`` and ``sep.nil`` into scope.
Data sorts may be ``Int``, a location sort, or ``(Tuple s1 ... sn)`` with
the literal ``(tuple t1 ... tn)``.  Assertions mixing spatial and pure
structure are parsed into spatial formula trees; everything else stays a
base-theory term.  ``print_sl``/``print_term`` invert the parse: reading a
printed formula yields a structurally identical tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .sorts import BOOL, INT, Sort, fun_sort, set_of, tuple_of, uninterpreted
from .slformula import (
    SL,
    EMP,
    pto,
    pure,
    sl_and,
    sl_implies,
    sl_not,
    sl_or,
    star,
    wand,
)
from .terms import (
    SortError,
    Term,
    add,
    app,
    boollit,
    conj,
    disj,
    eq,
    iff,
    implies,
    intlit,
    ite,
    le,
    lt,
    neg,
    set_empty,
    set_inter,
    set_member,
    set_singleton,
    set_subset,
    set_union,
    sub,
    sym,
    tup,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__("%d:%d: %s" % (line, col, msg))
        self.line = line
        self.col = col


@dataclass
class _Node:
    """An atom or a parenthesized list, with its source position."""

    value: Union[str, list]
    line: int
    col: int

    @property
    def is_atom(self) -> bool:
        return isinstance(self.value, str)


def _tokenize(text: str):
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield (c, line, col)
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            yield (text[start:i], line, start_col)


def read_sexprs(text: str) -> list[_Node]:
    """Parse a byte/str stream into a list of s-expression nodes."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    stack: list[_Node] = []
    out: list[_Node] = []
    for tok, line, col in _tokenize(text):
        if tok == "(":
            stack.append(_Node([], line, col))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            node = stack.pop()
            (stack[-1].value if stack else out).append(node)
        else:
            (stack[-1].value if stack else out).append(_Node(tok, line, col))
    if stack:
        raise ParseError("unbalanced '('", stack[-1].line, stack[-1].col)
    return out


@dataclass
class Problem:
    """A parsed input: sorts, heap signature, declarations, assertions."""

    sorts: dict[str, Sort] = field(default_factory=dict)
    loc_sort: Optional[Sort] = None
    data_sort: Optional[Sort] = None
    decls: dict[str, Sort] = field(default_factory=dict)
    assertions: list[SL] = field(default_factory=list)
    options: dict[str, str] = field(default_factory=dict)
    check_sat_requested: bool = False

    def goal(self) -> SL:
        if not self.assertions:
            return pure(boollit(True))
        return sl_and(*self.assertions)


_SPATIAL_HEADS = {"pto", "sep", "wand"}
_RESERVED = {"sep.emp", "sep.nil", "pto", "sep", "wand", "tuple", "true", "false"}


class _Parser:
    def __init__(self) -> None:
        self.problem = Problem()

    def run(self, nodes: list[_Node]) -> Problem:
        for node in nodes:
            self.command(node)
        return self.problem

    def err(self, node: _Node, msg: str):
        raise ParseError(msg, node.line, node.col)

    def command(self, node: _Node) -> None:
        if node.is_atom:
            self.err(node, "expected a command, got %r" % node.value)
        if not node.value or not node.value[0].is_atom:
            self.err(node, "malformed command")
        head = node.value[0].value
        args = node.value[1:]
        p = self.problem
        if head in ("set-logic", "set-info", "exit"):
            return
        if head == "set-option":
            if len(args) == 2 and args[0].is_atom and args[1].is_atom:
                p.options[args[0].value.lstrip(":")] = args[1].value
            return
        if head == "declare-sort":
            if not args or not args[0].is_atom:
                self.err(node, "declare-sort needs a name")
            p.sorts[args[0].value] = uninterpreted(args[0].value)
            return
        if head == "declare-heap":
            if p.loc_sort is not None:
                self.err(node, "duplicate declare-heap")
            if len(args) != 1 or args[0].is_atom or len(args[0].value) != 2:
                self.err(node, "expected (declare-heap (<LocSort> <DataSort>))")
            loc_node, data_node = args[0].value
            if not loc_node.is_atom:
                self.err(loc_node, "location sort must be a plain sort name")
            if loc_node.value in ("Int", "Bool"):
                self.err(loc_node, "location sort must be uninterpreted")
            p.sorts.setdefault(loc_node.value, uninterpreted(loc_node.value))
            p.loc_sort = p.sorts[loc_node.value]
            p.data_sort = self.sort(data_node)
            p.decls["sep.nil"] = p.loc_sort
            return
        if head == "declare-const":
            if len(args) != 2 or not args[0].is_atom:
                self.err(node, "expected (declare-const <name> <Sort>)")
            name = args[0].value
            if name in _RESERVED:
                self.err(args[0], "reserved name %r" % name)
            p.decls[name] = self.sort(args[1])
            return
        if head == "declare-fun":
            if len(args) != 3 or not args[0].is_atom or args[1].is_atom:
                self.err(node, "expected (declare-fun <name> (<Sorts>) <Sort>)")
            name = args[0].value
            params = [self.sort(s) for s in args[1].value]
            rng = self.sort(args[2])
            if not params:
                p.decls[name] = rng
            elif len(params) == 1:
                p.decls[name] = fun_sort(params[0], rng)
            else:
                self.err(node, "only unary functions are supported")
            return
        if head == "assert":
            if len(args) != 1:
                self.err(node, "assert takes one formula")
            phi = self.formula(args[0])
            p.assertions.append(phi)
            return
        if head == "check-sat":
            p.check_sat_requested = True
            return
        self.err(node, "unknown command %r" % head)

    def sort(self, node: _Node) -> Sort:
        if node.is_atom:
            name = node.value
            if name == "Int":
                return INT
            if name == "Bool":
                return BOOL
            if name in self.problem.sorts:
                return self.problem.sorts[name]
            self.err(node, "unknown sort %r" % name)
        if not node.value or not node.value[0].is_atom:
            self.err(node, "malformed sort")
        head = node.value[0].value
        if head == "Tuple":
            return tuple_of(*(self.sort(s) for s in node.value[1:]))
        if head == "Set":
            if len(node.value) != 2:
                self.err(node, "Set takes one sort")
            return set_of(self.sort(node.value[1]))
        self.err(node, "unknown sort constructor %r" % head)

    # -- formulas ---------------------------------------------------------
    #
    # Boolean structure in formula position always becomes spatial-level
    # connectives; pure leaves are atoms.  This keeps parse(print(.)) the
    # identity on formula trees.

    def formula(self, node: _Node) -> SL:
        if node.is_atom and node.value == "sep.emp":
            return EMP
        heads = _SPATIAL_HEADS | {"and", "or", "not", "=>"}
        if (
            node.is_atom
            or not node.value
            or not node.value[0].is_atom
            or node.value[0].value not in heads
        ):
            t = self.term(node)
            if t.sort != BOOL:
                self.err(node, "assertion of sort %r, expected Bool" % (t.sort,))
            return pure(t)
        head = node.value[0].value
        args = node.value[1:]
        if head == "pto":
            if self.problem.loc_sort is None:
                self.err(node, "pto before declare-heap")
            if len(args) != 2:
                self.err(node, "pto takes two terms")
            t = self.term(args[0])
            u = self.term(args[1])
            if t.sort != self.problem.loc_sort:
                self.err(
                    args[0],
                    "pto address has sort %r, expected %r"
                    % (t.sort, self.problem.loc_sort),
                )
            if u.sort != self.problem.data_sort:
                self.err(
                    args[1],
                    "pto value has sort %r, expected %r"
                    % (u.sort, self.problem.data_sort),
                )
            return pto(t, u)
        if head == "sep":
            if len(args) < 2:
                self.err(node, "sep takes at least two formulas")
            return star(*(self.formula(a) for a in args))
        if head == "wand":
            if len(args) != 2:
                self.err(node, "wand takes two formulas")
            return wand(self.formula(args[0]), self.formula(args[1]))
        if head == "and":
            return sl_and(*(self.formula(a) for a in args))
        if head == "or":
            return sl_or(*(self.formula(a) for a in args))
        if head == "not":
            if len(args) != 1:
                self.err(node, "not takes one formula")
            return sl_not(self.formula(args[0]))
        if head == "=>":
            if len(args) != 2:
                self.err(node, "=> takes two formulas")
            return sl_implies(self.formula(args[0]), self.formula(args[1]))
        self.err(node, "unsupported spatial connective %r" % head)

    # -- terms --------------------------------------------------------------

    def term(self, node: _Node) -> Term:
        if node.is_atom:
            name = node.value
            if name == "true":
                return boollit(True)
            if name == "false":
                return boollit(False)
            if name.lstrip("-").isdigit():
                return intlit(int(name))
            decl = self.problem.decls.get(name)
            if decl is None:
                self.err(node, "undeclared symbol %r" % name)
            return sym(name, decl)
        if not node.value or not node.value[0].is_atom:
            self.err(node, "malformed term")
        head = node.value[0].value
        args = node.value[1:]
        try:
            return self._compound_term(node, head, args)
        except SortError as e:
            raise ParseError(str(e), node.line, node.col) from None

    def _compound_term(self, node: _Node, head: str, args: list[_Node]) -> Term:
        p = self.problem
        if head == "=":
            ts = [self.term(a) for a in args]
            if len(ts) < 2:
                self.err(node, "= takes at least two terms")
            if ts[0].sort == BOOL:
                return conj(*(iff(ts[i], ts[i + 1]) for i in range(len(ts) - 1)))
            return conj(*(eq(ts[i], ts[i + 1]) for i in range(len(ts) - 1)))
        if head == "distinct":
            ts = [self.term(a) for a in args]
            outs = []
            for i in range(len(ts)):
                for j in range(i + 1, len(ts)):
                    outs.append(neg(eq(ts[i], ts[j])))
            return conj(*outs)
        if head == "and":
            return conj(*(self.term(a) for a in args))
        if head == "or":
            return disj(*(self.term(a) for a in args))
        if head == "not":
            return neg(self.term(args[0]))
        if head == "=>":
            return implies(self.term(args[0]), self.term(args[1]))
        if head == "ite":
            return ite(self.term(args[0]), self.term(args[1]), self.term(args[2]))
        if head == "+":
            ts = [self.term(a) for a in args]
            acc = ts[0]
            for t in ts[1:]:
                acc = add(acc, t)
            return acc
        if head == "-":
            ts = [self.term(a) for a in args]
            if len(ts) == 1:
                return sub(intlit(0), ts[0])
            acc = ts[0]
            for t in ts[1:]:
                acc = sub(acc, t)
            return acc
        if head == "<=":
            return le(self.term(args[0]), self.term(args[1]))
        if head == "<":
            return lt(self.term(args[0]), self.term(args[1]))
        if head == ">=":
            return le(self.term(args[1]), self.term(args[0]))
        if head == ">":
            return lt(self.term(args[1]), self.term(args[0]))
        if head == "tuple":
            return tup(*(self.term(a) for a in args))
        if head == "set.union":
            return set_union(self.term(args[0]), self.term(args[1]))
        if head == "set.inter":
            return set_inter(self.term(args[0]), self.term(args[1]))
        if head == "set.singleton":
            return set_singleton(self.term(args[0]))
        if head == "set.subset":
            return set_subset(self.term(args[0]), self.term(args[1]))
        if head == "set.member":
            return set_member(self.term(args[0]), self.term(args[1]))
        if head == "as" and len(args) == 2 and args[0].is_atom and args[0].value == "set.empty":
            s = self.sort(args[1])
            return set_empty(s.elem)
        decl = p.decls.get(head)
        if decl is not None and decl.is_fun and len(args) == 1:
            return app(sym(head, decl), self.term(args[0]))
        self.err(node, "unsupported term head %r" % head)


def parse(text: Union[str, bytes]) -> Problem:
    """Parse a problem file; raises ParseError with line/column on failure."""
    return _Parser().run(read_sexprs(text))


def parse_formula(text: str, problem: Problem) -> SL:
    """Parse a single formula in the scope of an existing problem."""
    nodes = read_sexprs(text)
    if len(nodes) != 1:
        raise ParseError("expected exactly one formula")
    parser = _Parser()
    parser.problem = problem
    return parser.formula(nodes[0])


# ---------------------------------------------------------------------------
# printing


def print_term(t: Term) -> str:
    op = t.op
    if op == "sym":
        return t.data
    if op == "int":
        return str(t.data) if t.data >= 0 else "(- %d)" % -t.data
    if op == "bool":
        return "true" if t.data else "false"
    if op == "eq":
        return "(= %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op in ("not", "and", "or", "ite", "tuple"):
        return "(%s %s)" % (op, " ".join(print_term(a) for a in t.args))
    if op == "implies":
        return "(=> %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "iff":
        return "(= %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "add":
        return "(+ %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "sub":
        return "(- %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "le":
        return "(<= %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "lt":
        return "(< %s %s)" % (print_term(t.args[0]), print_term(t.args[1]))
    if op == "app":
        return "(%s %s)" % (t.args[0].data, print_term(t.args[1]))
    if op == "set.empty":
        return "(as set.empty %r)" % (t.sort,)
    if op in ("set.singleton", "set.union", "set.inter", "set.subset", "set.member"):
        return "(%s %s)" % (op, " ".join(print_term(a) for a in t.args))
    if op == "forall":
        return _print_forall(t)
    raise ValueError("cannot print %r" % op)


def _print_forall(t: Term) -> str:
    from .terms import FunBound

    parts = []
    for b in t.binders:
        if isinstance(b.bound, FunBound):
            parts.append(
                "(%s (-> %s) (<- %s))"
                % (
                    b.var.data,
                    " ".join(print_term(x) for x in b.bound.dom),
                    " ".join(print_term(x) for x in b.bound.rng),
                )
            )
        else:
            parts.append(
                "(%s (<= %s))"
                % (b.var.data, " ".join(print_term(x) for x in b.bound.terms))
            )
    return "(forall (%s) %s)" % (" ".join(parts), print_term(t.args[0]))


def print_sl(phi: SL) -> str:
    op = phi.op
    if op == "emp":
        return "sep.emp"
    if op == "pto":
        return "(pto %s %s)" % (print_term(phi.terms[0]), print_term(phi.terms[1]))
    if op == "star":
        return "(sep %s)" % " ".join(print_sl(k) for k in phi.kids)
    if op == "wand":
        return "(wand %s %s)" % (print_sl(phi.kids[0]), print_sl(phi.kids[1]))
    if op == "and":
        return "(and %s)" % " ".join(print_sl(k) for k in phi.kids)
    if op == "not":
        return "(not %s)" % print_sl(phi.kids[0])
    if op == "pure":
        return print_term(phi.terms[0])
    if op == "pred":
        return "(%s %s)" % (phi.data, " ".join(print_term(a) for a in phi.terms))
    raise ValueError("cannot print %r" % op)

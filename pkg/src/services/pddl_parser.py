"""
PDDL front end for the typed STRIPS fragment plus PDDL3 simple preferences.

Text is first read into located s-expressions with pyparsing, then walked into
the model of `pddl_types`. Identifiers are case-insensitive; everything is
canonicalised to lower case. The accepted grammar is documented in
PDDL_GRAMMAR.md.
"""
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

import pyparsing as pp
from apify import Actor

from ..exceptions import PDDLSemanticError, PDDLSyntaxError
from .pddl_types import (
    OBJECT,
    ActionSchema,
    Domain,
    GroundAtom,
    LiftedAtom,
    Metric,
    PredicateSchema,
    Problem,
    SoftGoal,
    TypedParam,
    check_action_schema,
    check_atom,
)

SUPPORTED_REQUIREMENTS = {":strips", ":typing", ":preferences"}


class Token(str):
    """A lower-cased identifier remembering where it started in the source."""
    loc: int = 0

    @classmethod
    def at(cls, text: str, loc: int) -> "Token":
        tok = cls(text.lower())
        tok.loc = loc
        return tok


class SExpr:
    __slots__ = ("items", "loc")

    def __init__(self, items: List[Union["SExpr", Token]], loc: int):
        self.items = items
        self.loc = loc

    @property
    def head(self) -> Optional[str]:
        if self.items and isinstance(self.items[0], Token):
            return self.items[0]
        return None

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Union["SExpr", Token]]:
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]


def _build_grammar() -> pp.ParserElement:
    token = pp.Regex(r"[^\s();]+").set_parse_action(lambda s, loc, toks: Token.at(toks[0], loc))
    nested = pp.Forward()
    nested <<= (pp.Suppress("(") + pp.ZeroOrMore(token | nested) + pp.Suppress(")")).set_parse_action(
        lambda s, loc, toks: SExpr(list(toks), loc)
    )
    document = pp.ZeroOrMore(nested) + pp.StringEnd()
    document.ignore(";" + pp.rest_of_line)
    return document


_GRAMMAR = _build_grammar()


class _Reader:
    """Carries the source text so errors can report line and column."""

    def __init__(self, text: str):
        self.text = text
        try:
            self.forms: List[SExpr] = list(_GRAMMAR.parse_string(text, parse_all=True))
        except pp.ParseBaseException as e:
            raise PDDLSyntaxError(f"malformed s-expression: {e.msg}", e.lineno, e.col) from e

    def where(self, node) -> Tuple[int, int]:
        loc = getattr(node, "loc", 0)
        return pp.lineno(loc, self.text), pp.col(loc, self.text)

    def semantic(self, message: str, node=None) -> PDDLSemanticError:
        if node is None:
            return PDDLSemanticError(message)
        return PDDLSemanticError(message, *self.where(node))

    def syntax(self, message: str, node=None) -> PDDLSyntaxError:
        if node is None:
            return PDDLSyntaxError(message)
        return PDDLSyntaxError(message, *self.where(node))

    def single_form(self, what: str) -> SExpr:
        if len(self.forms) != 1:
            raise PDDLSyntaxError(f"expected exactly one ({what} ...) form, found {len(self.forms)}")
        return self.forms[0]

    def expect_list(self, node, what: str) -> SExpr:
        if not isinstance(node, SExpr):
            raise self.syntax(f"expected {what}", node)
        return node

    def expect_token(self, node, what: str) -> Token:
        if not isinstance(node, Token):
            raise self.syntax(f"expected {what}", node)
        return node

    def typed_list(self, items, variables: bool) -> List[Tuple[Token, str]]:
        """`a b - t c` -> [(a, t), (b, t), (c, object)]."""
        out: List[Tuple[Token, str]] = []
        pending: List[Token] = []
        it = iter(items)
        for node in it:
            tok = self.expect_token(node, "a name")
            if tok == "-":
                type_tok = self.expect_token(next(it, None), "a type after '-'")
                if not pending:
                    raise self.syntax("type annotation without names", tok)
                out.extend((p, str(type_tok)) for p in pending)
                pending = []
                continue
            if variables and not tok.startswith("?"):
                raise self.syntax(f"expected a variable, got '{tok}'", tok)
            if not variables and tok.startswith("?"):
                raise self.syntax(f"unexpected variable '{tok}'", tok)
            pending.append(tok)
        out.extend((p, OBJECT) for p in pending)
        return out

    def literal(self, node) -> Tuple[SExpr, bool]:
        lst = self.expect_list(node, "a literal")
        if lst.head == "not":
            if len(lst) != 2:
                raise self.syntax("(not ...) takes one literal", lst)
            inner = self.expect_list(lst[1], "a literal")
            return inner, False
        return lst, True

    def conjunction(self, node) -> List:
        lst = self.expect_list(node, "a condition")
        if len(lst) == 0:
            return []
        if lst.head == "and":
            return list(lst.items[1:])
        return [lst]

    def atom_tokens(self, lst: SExpr) -> Tuple[str, Tuple[str, ...]]:
        if not lst.items:
            raise self.syntax("empty atom", lst)
        parts = [self.expect_token(n, "an atom argument") for n in lst]
        return str(parts[0]), tuple(str(p) for p in parts[1:])


# --- Domain ---

def parse_domain(text: str) -> Domain:
    reader = _Reader(text)
    root = reader.single_form("define")
    if root.head != "define" or len(root) < 2:
        raise reader.syntax("expected (define (domain ...) ...)", root)
    header = reader.expect_list(root[1], "(domain <name>)")
    if header.head != "domain" or len(header) != 2:
        raise reader.syntax("expected (domain <name>)", header)
    name = str(reader.expect_token(header[1], "a domain name"))

    requirements: Tuple[str, ...] = (":strips",)
    types: Dict[str, str] = {}
    predicates: Dict[str, PredicateSchema] = {}
    actions: Dict[str, ActionSchema] = {}
    action_nodes: List[SExpr] = []

    for node in root.items[2:]:
        section = reader.expect_list(node, "a domain section")
        key = section.head
        if key == ":requirements":
            reqs = [str(reader.expect_token(r, "a requirement")) for r in section.items[1:]]
            for r, n in zip(reqs, section.items[1:]):
                if r not in SUPPORTED_REQUIREMENTS:
                    raise reader.semantic(f"unsupported requirement '{r}'", n)
            requirements = tuple(reqs)
        elif key == ":types":
            for tname, parent in reader.typed_list(section.items[1:], variables=False):
                if tname in types or tname == OBJECT:
                    raise reader.semantic(f"duplicate type '{tname}'", tname)
                types[str(tname)] = parent
        elif key == ":predicates":
            for pnode in section.items[1:]:
                plist = reader.expect_list(pnode, "a predicate declaration")
                pname = reader.expect_token(plist[0] if plist.items else None, "a predicate name")
                if pname in predicates:
                    raise reader.semantic(f"duplicate predicate '{pname}'", pname)
                params = reader.typed_list(plist.items[1:], variables=True)
                _check_unique_params(reader, params, f"predicate '{pname}'")
                predicates[str(pname)] = PredicateSchema(
                    str(pname), tuple(TypedParam(str(p), t) for p, t in params))
        elif key == ":action":
            action_nodes.append(section)
        else:
            raise reader.semantic(f"unsupported domain section '{key}'", section)

    domain = Domain(name=name, types=types, predicates=predicates, actions=actions,
                    requirements=requirements)
    for tname, parent in types.items():
        if not domain.has_type(parent):
            raise PDDLSemanticError(f"unknown parent type '{parent}' of '{tname}'")
        domain.ancestors(tname)
    for pred in predicates.values():
        for p in pred.params:
            if not domain.has_type(p.type):
                raise PDDLSemanticError(f"unknown type '{p.type}' in predicate '{pred.name}'")

    for node in action_nodes:
        schema = _parse_action(reader, node)
        if schema.name in actions:
            raise reader.semantic(f"duplicate action '{schema.name}'", node)
        check_action_schema(domain, schema, *reader.where(node))
        actions[schema.name] = schema
    return domain


def _check_unique_params(reader: _Reader, params, what: str) -> None:
    seen: Set[str] = set()
    for p, _ in params:
        if p in seen:
            raise reader.semantic(f"duplicate parameter '{p}' in {what}", p)
        seen.add(p)


def _parse_action(reader: _Reader, node: SExpr) -> ActionSchema:
    if len(node) < 2:
        raise reader.syntax("expected (:action <name> ...)", node)
    name = str(reader.expect_token(node[1], "an action name"))
    params: List[Tuple[Token, str]] = []
    precond: Set[LiftedAtom] = set()
    add: Set[LiftedAtom] = set()
    delete: Set[LiftedAtom] = set()
    rest = iter(node.items[2:])
    for key in rest:
        key = reader.expect_token(key, "an action keyword")
        value = next(rest, None)
        if value is None:
            raise reader.syntax(f"missing value after '{key}'", key)
        if key == ":parameters":
            params = reader.typed_list(reader.expect_list(value, "a parameter list"), variables=True)
            _check_unique_params(reader, params, f"action '{name}'")
        elif key == ":precondition":
            for lit in reader.conjunction(value):
                lst, positive = reader.literal(lit)
                if not positive:
                    raise reader.semantic(f"negative precondition in action '{name}' is not supported", lit)
                precond.add(LiftedAtom(*reader.atom_tokens(lst)))
        elif key == ":effect":
            for lit in reader.conjunction(value):
                lst, positive = reader.literal(lit)
                (add if positive else delete).add(LiftedAtom(*reader.atom_tokens(lst)))
        else:
            raise reader.semantic(f"unsupported action keyword '{key}'", key)
    return ActionSchema(
        name=name,
        params=tuple(TypedParam(str(p), t) for p, t in params),
        precond=frozenset(precond),
        add=frozenset(add),
        delete=frozenset(delete),
    )


# --- Problem ---

def parse_problem(text: str, dom: Domain) -> Problem:
    reader = _Reader(text)
    root = reader.single_form("define")
    if root.head != "define" or len(root) < 2:
        raise reader.syntax("expected (define (problem ...) ...)", root)
    header = reader.expect_list(root[1], "(problem <name>)")
    if header.head != "problem" or len(header) != 2:
        raise reader.syntax("expected (problem <name>)", header)
    name = str(reader.expect_token(header[1], "a problem name"))

    objects: Dict[str, str] = {}
    init_nodes: List[SExpr] = []
    goal_node: Optional[SExpr] = None
    metric_node: Optional[SExpr] = None

    for node in root.items[2:]:
        section = reader.expect_list(node, "a problem section")
        key = section.head
        if key == ":domain":
            dname = str(reader.expect_token(section[1] if len(section) > 1 else None, "a domain name"))
            if dname != dom.name:
                Actor.log.warning(f"⚠️ Problem '{name}' names domain '{dname}', parsing against '{dom.name}'.")
        elif key == ":requirements":
            continue
        elif key == ":objects":
            for oname, otype in reader.typed_list(section.items[1:], variables=False):
                if oname in objects:
                    raise reader.semantic(f"duplicate object '{oname}'", oname)
                if not dom.has_type(otype):
                    raise reader.semantic(f"unknown type '{otype}' for object '{oname}'", oname)
                objects[str(oname)] = otype
        elif key == ":init":
            init_nodes.extend(reader.expect_list(n, "an atom") for n in section.items[1:])
        elif key == ":goal":
            if len(section) != 2:
                raise reader.syntax("(:goal ...) takes one condition", section)
            goal_node = section[1]
        elif key == ":metric":
            metric_node = section
        else:
            raise reader.semantic(f"unsupported problem section '{key}'", section)

    init = frozenset(_ground_atom(reader, dom, objects, n) for n in init_nodes)

    hard: Set[GroundAtom] = set()
    prefs: Dict[str, Tuple[GroundAtom, SExpr]] = {}
    if goal_node is not None:
        for g in reader.conjunction(goal_node):
            lst = reader.expect_list(g, "a goal")
            if lst.head == "preference":
                if len(lst) != 3:
                    raise reader.syntax("expected (preference <name> <atom>)", lst)
                pname = str(reader.expect_token(lst[1], "a preference name"))
                if pname in prefs:
                    raise reader.semantic(f"duplicate preference '{pname}'", lst)
                body = reader.expect_list(lst[2], "a preference atom")
                if body.head == "and" and len(body) == 2:
                    body = reader.expect_list(body[1], "a preference atom")
                prefs[pname] = (_ground_atom(reader, dom, objects, body), lst)
            else:
                _, positive = reader.literal(lst)
                if not positive:
                    raise reader.semantic("negative goals are not supported", lst)
                hard.add(_ground_atom(reader, dom, objects, lst))

    metric, weights = _parse_metric(reader, metric_node)
    if prefs and metric_node is None:
        Actor.log.warning(f"⚠️ Problem '{name}' has preferences but no metric; using unit penalties.")
        metric = Metric.penalty_sum()
        weights = {p: Fraction(1) for p in prefs}
    for pname in weights:
        if pname not in prefs:
            raise reader.semantic(f"metric references undeclared preference '{pname}'", metric_node)

    soft: Dict[GroundAtom, SoftGoal] = {}
    for pname, (a, node) in prefs.items():
        if a in soft:
            raise reader.semantic(f"two preferences on the same atom {a}", node)
        soft[a] = SoftGoal(a, weights.get(pname, Fraction(0)))

    return Problem(
        name=name,
        domain=dom,
        objects=objects,
        init=init,
        hard_goals=frozenset(hard),
        soft_goals=frozenset(soft.values()),
        metric=metric,
    )


def _ground_atom(reader: _Reader, dom: Domain, objects: Dict[str, str], node) -> GroundAtom:
    lst = reader.expect_list(node, "an atom")
    if lst.head == "not":
        raise reader.semantic("negative literals are not allowed here", lst)
    pred, args = reader.atom_tokens(lst)
    for a, n in zip(args, lst.items[1:]):
        if a.startswith("?"):
            raise reader.semantic(f"variable '{a}' in a ground atom", n)
    ga = GroundAtom(pred, args)
    check_atom(dom, objects, ga, *reader.where(lst))
    return ga


def parse_atoms(text: str, prob: Problem) -> frozenset:
    """Reads a bare sequence of ground atoms, e.g. a perturbed-state file."""
    reader = _Reader(text)
    forms = reader.forms
    if len(forms) == 1 and forms[0].head in (":init", ":state"):
        forms = list(forms[0].items[1:])
    return frozenset(_ground_atom(reader, prob.domain, prob.objects, n) for n in forms)


# --- Metric ---

def _number(reader: _Reader, node) -> Fraction:
    if isinstance(node, Token):
        try:
            return Fraction(str(node))
        except ValueError:
            raise reader.syntax(f"expected a number, got '{node}'", node)
    lst = reader.expect_list(node, "a number")
    if lst.head == "/" and len(lst) == 3:
        return _number(reader, lst[1]) / _number(reader, lst[2])
    raise reader.syntax("expected a number", lst)


def _is_number(node) -> bool:
    if isinstance(node, Token):
        try:
            Fraction(str(node))
            return True
        except ValueError:
            return False
    return isinstance(node, SExpr) and node.head == "/"


def _linear(reader: _Reader, node, scale: Fraction, acc: Dict[str, Fraction]) -> Fraction:
    """Accumulates is-violated coefficients into `acc`; returns the total-time coefficient."""
    lst = reader.expect_list(node, "a metric expression")
    head = lst.head
    if head == "is-violated" and len(lst) == 2:
        pname = str(reader.expect_token(lst[1], "a preference name"))
        acc[pname] = acc.get(pname, Fraction(0)) + scale
        return Fraction(0)
    if head == "total-time" and len(lst) == 1:
        return scale
    if head == "+":
        return sum((_linear(reader, n, scale, acc) for n in lst.items[1:]), Fraction(0))
    if head == "*" and len(lst) == 3:
        if _is_number(lst[1]):
            return _linear(reader, lst[2], scale * _number(reader, lst[1]), acc)
        if _is_number(lst[2]):
            return _linear(reader, lst[1], scale * _number(reader, lst[2]), acc)
    raise reader.semantic("unsupported metric expression", lst)


def _parse_metric(reader: _Reader, node: Optional[SExpr]) -> Tuple[Metric, Dict[str, Fraction]]:
    if node is None:
        return Metric.plan_length(), {}
    if len(node) != 3 or reader.expect_token(node[1], "minimize") != "minimize":
        raise reader.semantic("only (:metric minimize <expr>) is supported", node)
    expr = reader.expect_list(node[2], "a metric expression")

    # (+ (* w_len (total-time)) (* w_pen (+ ...)))
    if expr.head == "+" and len(expr) == 3:
        acc: Dict[str, Fraction] = {}
        first = expr[1]
        second = expr[2]
        if (isinstance(second, SExpr) and second.head == "*" and len(second) == 3
                and _is_number(second[1])):
            w_len = _linear(reader, first, Fraction(1), acc)
            if w_len and not acc:
                inner: Dict[str, Fraction] = {}
                if _linear(reader, second[2], Fraction(1), inner) == 0:
                    return Metric.weighted_sum(w_len, _number(reader, second[1])), inner

    weights: Dict[str, Fraction] = {}
    w_len = _linear(reader, expr, Fraction(1), weights)
    if w_len and weights:
        return Metric.weighted_sum(w_len, 1), weights
    if weights:
        return Metric.penalty_sum(), weights
    return Metric.plan_length(), weights

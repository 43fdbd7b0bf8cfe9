"""
PDDL parsing for the supported 2.1 subset.

Text is first read into located s-expressions with pyparsing, then
interpreted into the immutable model in ``app.models.pddl``. Every error
carries the line and column of the offending element.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import pyparsing
from pyparsing import Forward, Group, Literal, Regex, StringEnd, Suppress, ZeroOrMore, col, lineno

from app.models.pddl import (
    ARITHMETIC_OPS,
    COMPARISON_OPS,
    NUMERIC_EFFECT_OPS,
    ROOT_TYPE,
    SUPPORTED_REQUIREMENTS,
    Atom,
    BinaryExpr,
    Comparison,
    Condition,
    Domain,
    DurativeAction,
    Effect,
    FluentTerm,
    FluentValue,
    FunctionDef,
    Instance,
    Literal as CondLiteral,
    NegatedAtom,
    Number,
    NumericEffect,
    NumericExpr,
    PredicateDef,
    ProblemDefinition,
    TypedParam,
    is_variable,
    normalize_name,
)

logger = logging.getLogger(__name__)


class PddlError(Exception):
    """Base class for PDDL modelling errors."""
    pass


class PddlParseError(PddlError):
    """Raised when PDDL text cannot be read into a valid model."""

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None):
        self.message = message
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    value: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: Tuple[Union[Token, "SList"], ...]
    line: int
    col: int

    def head(self) -> Optional[str]:
        if self.items and isinstance(self.items[0], Token):
            return self.items[0].value.lower()
        return None


SExpr = Union[Token, SList]


def _make_token(s: str, loc: int, toks: pyparsing.ParseResults) -> Token:
    return Token(toks[0], lineno(loc, s), col(loc, s))


def _make_list(s: str, loc: int, toks: pyparsing.ParseResults) -> SList:
    group = toks[0]
    opener = group[0]
    return SList(tuple(group[1:]), opener.line, opener.col)


def _build_grammar() -> pyparsing.ParserElement:
    comment = Regex(r";[^\n]*")
    token = Regex(r"[^\s();]+").set_parse_action(_make_token)
    lpar = Literal("(").set_parse_action(_make_token)
    nested = Forward()
    group = Group(lpar + ZeroOrMore(token | nested) + Suppress(")")).set_parse_action(_make_list)
    nested <<= group
    document = nested + StringEnd()
    document.ignore(comment)
    return document


_GRAMMAR = _build_grammar()


def read_sexpr(text: str) -> SList:
    """
    Read one parenthesized expression from text.

    Raises:
        PddlParseError: On unbalanced parentheses or trailing content.
    """
    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pyparsing.ParseBaseException as e:
        raise PddlParseError(f"Lexical error: {e.msg}", e.lineno, e.col) from e
    return result[0]


def _fail(message: str, where: Optional[SExpr]) -> PddlParseError:
    if where is None:
        return PddlParseError(message)
    return PddlParseError(message, where.line, where.col)


def _name(expr: SExpr, what: str = "identifier") -> str:
    if not isinstance(expr, Token):
        raise _fail(f"Expected {what}, found a list", expr)
    try:
        return normalize_name(expr.value)
    except ValueError as e:
        raise _fail(str(e), expr) from e


def _expect_list(expr: SExpr, what: str) -> SList:
    if not isinstance(expr, SList):
        raise _fail(f"Expected {what}, found '{expr.value}'", expr)
    return expr


def _typed_list(items: Sequence[SExpr], variables: bool) -> List[Tuple[str, str, SExpr]]:
    """Read ``a b - t c - u d`` into [(a, t), (b, t), (c, u), (d, object)]."""
    result: List[Tuple[str, str, SExpr]] = []
    pending: List[Tuple[str, SExpr]] = []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, Token) and item.value == "-":
            if i + 1 >= len(items) or not pending:
                raise _fail("Dangling '-' in typed list", item)
            type_expr = items[i + 1]
            if isinstance(type_expr, SList):
                raise _fail("'either' types are not supported", type_expr)
            type_name = _name(type_expr, "type name")
            result.extend((n, type_name, e) for n, e in pending)
            pending = []
            i += 2
            continue
        name = _name(item)
        if variables and not is_variable(name):
            raise _fail(f"Expected a variable, found '{name}'", item)
        if not variables and is_variable(name):
            raise _fail(f"Unexpected variable '{name}'", item)
        pending.append((name, item))
        i += 1
    result.extend((n, ROOT_TYPE, e) for n, e in pending)
    return result


def _parse_number(token: Token) -> Optional[float]:
    try:
        return float(token.value)
    except ValueError:
        return None


class _Scope:
    """Name resolution for one action schema or one problem."""

    def __init__(self, domain: Domain, variables: Mapping[str, str],
                 objects: Mapping[str, str], allow_variables: bool):
        self.domain = domain
        self.variables = variables
        self.objects = objects
        self.allow_variables = allow_variables

    def term_type(self, term: str, where: SExpr) -> str:
        if is_variable(term):
            if not self.allow_variables:
                raise _fail(f"Unexpected variable '{term}' in ground context", where)
            if term not in self.variables:
                raise _fail(f"Unbound variable '{term}'", where)
            return self.variables[term]
        if term in self.objects:
            return self.objects[term]
        if term in self.domain.constant_map:
            return self.domain.constant_map[term]
        raise _fail(f"Undeclared object '{term}'", where)

    def compatible(self, actual: str, declared: str) -> bool:
        if self.allow_variables:
            return self.domain.is_subtype(actual, declared) or self.domain.is_subtype(declared, actual)
        return self.domain.is_subtype(actual, declared)


def _read_atom(expr: SList, scope: _Scope) -> Atom:
    name = _name(expr.items[0], "predicate name") if expr.items else None
    if name is None:
        raise _fail("Empty atom", expr)
    pred = scope.domain.get_predicate(name)
    if pred is None:
        raise _fail(f"Undeclared predicate '{name}'", expr)
    args = tuple(_name(a, "term") for a in expr.items[1:])
    if len(args) != pred.arity:
        raise _fail(
            f"Arity mismatch for '{name}': expected {pred.arity}, got {len(args)}", expr)
    for arg, param, where in zip(args, pred.params, expr.items[1:]):
        actual = scope.term_type(arg, where)
        if not scope.compatible(actual, param.type):
            raise _fail(f"Type mismatch: '{arg}' is '{actual}', '{name}' expects '{param.type}'",
                        where)
    return Atom(name, args)


def _read_fluent(expr: SList, scope: _Scope) -> FluentTerm:
    name = _name(expr.items[0], "function name") if expr.items else None
    if name is None:
        raise _fail("Empty fluent term", expr)
    fdef = scope.domain.get_function(name)
    if fdef is None:
        raise _fail(f"Undeclared function '{name}'", expr)
    args = tuple(_name(a, "term") for a in expr.items[1:])
    if len(args) != fdef.arity:
        raise _fail(
            f"Arity mismatch for '{name}': expected {fdef.arity}, got {len(args)}", expr)
    for arg, param, where in zip(args, fdef.params, expr.items[1:]):
        actual = scope.term_type(arg, where)
        if not scope.compatible(actual, param.type):
            raise _fail(f"Type mismatch: '{arg}' is '{actual}', '{name}' expects '{param.type}'",
                        where)
    return FluentTerm(name, args)


def _read_expr(expr: SExpr, scope: _Scope) -> NumericExpr:
    if isinstance(expr, Token):
        value = _parse_number(expr)
        if value is None:
            raise _fail(f"Expected a number or fluent term, found '{expr.value}'", expr)
        return Number(value)
    head = expr.head()
    if head in ARITHMETIC_OPS:
        if len(expr.items) != 3:
            raise _fail(f"Operator '{head}' takes two operands", expr)
        return BinaryExpr(head, _read_expr(expr.items[1], scope), _read_expr(expr.items[2], scope))
    return _read_fluent(expr, scope)


def _read_literals(expr: SExpr, scope: _Scope) -> List[CondLiteral]:
    """Read a goal description into a flat list of literals."""
    expr = _expect_list(expr, "condition")
    if not expr.items:
        return []
    head = expr.head()
    if head == "and":
        literals: List[CondLiteral] = []
        for child in expr.items[1:]:
            literals.extend(_read_literals(child, scope))
        return literals
    if head == "not":
        if len(expr.items) != 2:
            raise _fail("'not' takes exactly one argument", expr)
        inner = _expect_list(expr.items[1], "negated atom")
        inner_head = inner.head()
        if inner_head in COMPARISON_OPS:
            try:
                return [_read_comparison(inner, scope).negated()]
            except ValueError as e:
                raise _fail(str(e), inner) from e
        if inner_head in ("and", "not", "or", "imply", "forall", "exists", "when"):
            raise _fail("'not' may only be applied to atoms", inner)
        return [NegatedAtom(_read_atom(inner, scope))]
    if head in ("or", "imply", "forall", "exists", "when", "preference"):
        raise _fail(f"Unsupported condition '{head}'", expr)
    if head in COMPARISON_OPS:
        return [_read_comparison(expr, scope)]
    return [_read_atom(expr, scope)]


def _read_comparison(expr: SList, scope: _Scope) -> Comparison:
    if len(expr.items) != 3:
        raise _fail(f"Comparison '{expr.head()}' takes two operands", expr)
    return Comparison(expr.head() or "", _read_expr(expr.items[1], scope),
                      _read_expr(expr.items[2], scope))


_TIME_SPECS = {("at", "start"): "start", ("over", "all"): "overall", ("at", "end"): "end"}


def _timed_parts(expr: SExpr, what: str) -> List[Tuple[str, SExpr, SList]]:
    """Split ``(and (at start X) (over all Y) ...)`` into (when, body) pairs."""
    expr = _expect_list(expr, what)
    if not expr.items:
        return []
    if expr.head() == "and":
        parts: List[Tuple[str, SExpr, SList]] = []
        for child in expr.items[1:]:
            parts.extend(_timed_parts(child, what))
        return parts
    if len(expr.items) == 3 and all(isinstance(t, Token) for t in expr.items[:2]):
        key = (expr.items[0].value.lower(), expr.items[1].value.lower())  # type: ignore[union-attr]
        if key in _TIME_SPECS:
            return [(_TIME_SPECS[key], expr.items[2], expr)]
    raise _fail(f"Durative {what} must be wrapped in 'at start', 'over all' or 'at end'", expr)


def _read_effect_parts(expr: SExpr, scope: _Scope, adds: List[Atom], dels: List[Atom],
                       numeric: List[NumericEffect]) -> None:
    expr = _expect_list(expr, "effect")
    if not expr.items:
        return
    head = expr.head()
    if head == "and":
        for child in expr.items[1:]:
            _read_effect_parts(child, scope, adds, dels, numeric)
    elif head == "not":
        if len(expr.items) != 2:
            raise _fail("'not' takes exactly one argument", expr)
        dels.append(_read_atom(_expect_list(expr.items[1], "atom"), scope))
    elif head in NUMERIC_EFFECT_OPS:
        if len(expr.items) != 3:
            raise _fail(f"'{head}' takes a fluent and an expression", expr)
        fluent = _read_fluent(_expect_list(expr.items[1], "fluent term"), scope)
        numeric.append(NumericEffect(head or "", fluent, _read_expr(expr.items[2], scope)))
    elif head in ("forall", "when", "scale-up", "scale-down"):
        raise _fail(f"Unsupported effect '{head}'", expr)
    else:
        adds.append(_read_atom(expr, scope))


def _make_effect(adds: List[Atom], dels: List[Atom], numeric: List[NumericEffect],
                 where: SExpr) -> Effect:
    clash = set(adds) & set(dels)
    if clash:
        atom = sorted(clash)[0]
        raise _fail(f"Atom {atom} is both added and deleted in one effect", where)
    return Effect(tuple(adds), tuple(dels), tuple(numeric))


def _keyword_pairs(items: Sequence[SExpr], owner: SList) -> Dict[str, SExpr]:
    pairs: Dict[str, SExpr] = {}
    i = 0
    while i < len(items):
        key = items[i]
        if not isinstance(key, Token) or not key.value.startswith(":"):
            raise _fail("Expected a keyword", key)
        if i + 1 >= len(items):
            raise _fail(f"Missing value for '{key.value}'", key)
        pairs[key.value.lower()] = items[i + 1]
        i += 2
    return pairs


def _read_params(expr: SExpr) -> Tuple[TypedParam, ...]:
    plist = _expect_list(expr, "parameter list")
    params: List[TypedParam] = []
    seen: Set[str] = set()
    for name, type_name, where in _typed_list(plist.items, variables=True):
        if name in seen:
            raise _fail(f"Duplicate parameter '{name}'", where)
        seen.add(name)
        params.append(TypedParam(name, type_name))
    return tuple(params)


def _read_durative_action(expr: SList, domain: Domain) -> DurativeAction:
    if len(expr.items) < 2:
        raise _fail("Durative action without a name", expr)
    name = _name(expr.items[1], "action name")
    pairs = _keyword_pairs(expr.items[2:], expr)
    if ":parameters" not in pairs:
        raise _fail(f"Action '{name}' has no :parameters", expr)
    params = _read_params(pairs[":parameters"])
    for p in params:
        if not domain.has_type(p.type):
            raise _fail(f"Undeclared type '{p.type}'", pairs[":parameters"])
    scope = _Scope(domain, {p.name: p.type for p in params}, {}, allow_variables=True)

    if ":duration" not in pairs:
        raise _fail(f"Action '{name}' has no :duration", expr)
    dur = _expect_list(pairs[":duration"], "duration constraint")
    if (len(dur.items) != 3 or dur.head() != "="
            or not isinstance(dur.items[1], Token) or dur.items[1].value.lower() != "?duration"):
        raise _fail("Duration must have the form (= ?duration <value>)", dur)
    duration = _read_expr(dur.items[2], scope)

    conditions: Dict[str, List[CondLiteral]] = {"start": [], "overall": [], "end": []}
    if ":condition" in pairs:
        for when, body, _ in _timed_parts(pairs[":condition"], "condition"):
            conditions[when].extend(_read_literals(body, scope))

    effects: Dict[str, Tuple[List[Atom], List[Atom], List[NumericEffect]]] = {
        "start": ([], [], []), "end": ([], [], [])}
    if ":effect" in pairs:
        for when, body, where in _timed_parts(pairs[":effect"], "effect"):
            if when == "overall":
                raise _fail("Effects cannot be 'over all'", where)
            _read_effect_parts(body, scope, *effects[when])

    return DurativeAction(
        name=name,
        params=params,
        duration=duration,
        cond_start=Condition(tuple(conditions["start"])),
        cond_overall=Condition(tuple(conditions["overall"])),
        cond_end=Condition(tuple(conditions["end"])),
        eff_start=_make_effect(*effects["start"], where=expr),
        eff_end=_make_effect(*effects["end"], where=expr),
    )


def _check_type_hierarchy(types: Sequence[Tuple[str, str, SExpr]]) -> None:
    declared = {ROOT_TYPE} | {child for child, _, _ in types}
    parents: Dict[str, str] = {}
    for child, parent, where in types:
        if parent not in declared:
            raise _fail(f"Undeclared type '{parent}'", where)
        if child in parents and parents[child] != parent:
            raise _fail(f"Type '{child}' declared with two parents", where)
        parents[child] = parent
    for start, _, where in types:
        seen = {start}
        current = parents.get(start)
        while current is not None and current != ROOT_TYPE:
            if current in seen:
                raise _fail(f"Cyclic type hierarchy through '{current}'", where)
            seen.add(current)
            current = parents.get(current)


def _read_signature_defs(section: SList, kind: str, domain_types: Set[str]
                         ) -> List[Tuple[str, Tuple[TypedParam, ...], SList]]:
    defs: List[Tuple[str, Tuple[TypedParam, ...], SList]] = []
    items = list(section.items[1:])
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, Token):
            # ":functions" entries may carry a "- number" return type
            if kind == "function" and item.value == "-" and i + 1 < len(items):
                i += 2
                continue
            raise _fail(f"Expected a {kind} declaration", item)
        if not item.items:
            raise _fail(f"Empty {kind} declaration", item)
        name = _name(item.items[0], f"{kind} name")
        params = _read_params(SList(item.items[1:], item.line, item.col))
        for p in params:
            if p.type not in domain_types:
                raise _fail(f"Undeclared type '{p.type}'", item)
        defs.append((name, params, item))
        i += 1
    return defs


def parse_domain(text: str) -> Domain:
    """
    Parse a PDDL domain in the supported subset.

    Args:
        text: The PDDL source.

    Returns:
        The parsed Domain.

    Raises:
        PddlParseError: With line/column of the offending element.
    """
    root = read_sexpr(text)
    if root.head() != "define" or len(root.items) < 2:
        raise _fail("Expected (define (domain <name>) ...)", root)
    header = _expect_list(root.items[1], "domain header")
    if header.head() != "domain" or len(header.items) != 2:
        raise _fail("Expected (domain <name>)", header)
    name = _name(header.items[1], "domain name")

    requirements: List[str] = []
    types: List[Tuple[str, str, SExpr]] = []
    constants: List[Tuple[str, str, SExpr]] = []
    predicate_sections: List[SList] = []
    function_sections: List[SList] = []
    action_exprs: List[SList] = []

    for section in root.items[2:]:
        section = _expect_list(section, "domain section")
        head = section.head()
        if head == ":requirements":
            for req in section.items[1:]:
                if not isinstance(req, Token):
                    raise _fail("Expected a requirement keyword", req)
                value = req.value.lower()
                if value not in SUPPORTED_REQUIREMENTS:
                    raise _fail(f"Unknown requirement '{value}'", req)
                if value not in requirements:
                    requirements.append(value)
        elif head == ":types":
            types.extend(_typed_list(section.items[1:], variables=False))
        elif head == ":constants":
            constants.extend(_typed_list(section.items[1:], variables=False))
        elif head == ":predicates":
            predicate_sections.append(section)
        elif head == ":functions":
            function_sections.append(section)
        elif head == ":durative-action":
            action_exprs.append(section)
        elif head == ":action":
            raise _fail("Only durative actions are supported", section)
        else:
            raise _fail(f"Unsupported domain section '{head}'", section)

    _check_type_hierarchy(types)
    type_pairs: List[Tuple[str, str]] = []
    for child, parent, _ in types:
        if child == ROOT_TYPE:
            continue
        if (child, parent) not in type_pairs:
            type_pairs.append((child, parent))
    domain_types = {ROOT_TYPE} | {c for c, _ in type_pairs}

    const_pairs: List[Tuple[str, str]] = []
    for cname, ctype, where in constants:
        if ctype not in domain_types:
            raise _fail(f"Undeclared type '{ctype}'", where)
        const_pairs.append((cname, ctype))

    predicates: List[PredicateDef] = []
    for section in predicate_sections:
        for pname, params, where in _read_signature_defs(section, "predicate", domain_types):
            if any(p.name == pname for p in predicates):
                raise _fail(f"Duplicate predicate '{pname}'", where)
            predicates.append(PredicateDef(pname, params))

    functions: List[FunctionDef] = []
    for section in function_sections:
        for fname, params, where in _read_signature_defs(section, "function", domain_types):
            if any(f.name == fname for f in functions):
                raise _fail(f"Duplicate function '{fname}'", where)
            functions.append(FunctionDef(fname, params))

    domain = Domain(
        name=name,
        requirements=tuple(requirements),
        types=tuple(type_pairs),
        constants=tuple(const_pairs),
        predicates=tuple(predicates),
        functions=tuple(functions),
    )

    actions: List[DurativeAction] = []
    for expr in action_exprs:
        action = _read_durative_action(expr, domain)
        if any(a.name == action.name for a in actions):
            raise _fail(f"Duplicate action '{action.name}'", expr)
        actions.append(action)

    logger.debug(f"Parsed domain '{name}' with {len(actions)} actions")
    return Domain(
        name=domain.name,
        requirements=domain.requirements,
        types=domain.types,
        constants=domain.constants,
        predicates=domain.predicates,
        functions=domain.functions,
        actions=tuple(actions),
    )


def parse_problem(text: str, domain: Domain) -> ProblemDefinition:
    """
    Parse a PDDL problem and validate it against a domain.

    Args:
        text: The PDDL source.
        domain: The (possibly merged) domain the problem refers to.

    Returns:
        The parsed ProblemDefinition.

    Raises:
        PddlParseError: On unknown types, predicates, objects or arity errors.
    """
    root = read_sexpr(text)
    if root.head() != "define" or len(root.items) < 2:
        raise _fail("Expected (define (problem <name>) ...)", root)
    header = _expect_list(root.items[1], "problem header")
    if header.head() != "problem" or len(header.items) != 2:
        raise _fail("Expected (problem <name>)", header)
    name = _name(header.items[1], "problem name")

    domain_name = domain.name
    instances: List[Instance] = []
    objects: Dict[str, str] = {}
    init_exprs: List[SExpr] = []
    goal_expr: Optional[SExpr] = None

    for section in root.items[2:]:
        section = _expect_list(section, "problem section")
        head = section.head()
        if head == ":domain":
            if len(section.items) != 2:
                raise _fail("Expected (:domain <name>)", section)
            domain_name = _name(section.items[1], "domain name")
            if domain_name != domain.name:
                logger.warning(
                    f"Problem '{name}' names domain '{domain_name}', using '{domain.name}'")
        elif head == ":objects":
            for oname, otype, where in _typed_list(section.items[1:], variables=False):
                if not domain.has_type(otype):
                    raise _fail(f"Unknown object type '{otype}'", where)
                if oname in objects and objects[oname] != otype:
                    raise _fail(f"Object '{oname}' declared with two types", where)
                if oname not in objects:
                    objects[oname] = otype
                    instances.append(Instance(oname, otype))
        elif head == ":init":
            init_exprs.extend(section.items[1:])
        elif head == ":goal":
            if len(section.items) != 2:
                raise _fail("Expected (:goal <condition>)", section)
            goal_expr = section.items[1]
        elif head == ":metric":
            logger.info(f"Ignoring :metric in problem '{name}'")
        else:
            raise _fail(f"Unsupported problem section '{head}'", section)

    scope = _Scope(domain, {}, objects, allow_variables=False)
    atoms: List[Atom] = []
    fluents: List[FluentValue] = []
    for expr in init_exprs:
        expr = _expect_list(expr, "initial fact")
        if expr.head() == "=":
            if len(expr.items) != 3 or not isinstance(expr.items[2], Token):
                raise _fail("Expected (= (<function> <args>) <number>)", expr)
            term = _read_fluent(_expect_list(expr.items[1], "fluent term"), scope)
            value = _parse_number(expr.items[2])
            if value is None:
                raise _fail("Fluent value must be a number", expr.items[2])
            fluents = [f for f in fluents if f.term != term]
            fluents.append(FluentValue(term.function, term.args, value))
        elif expr.head() == "not":
            raise _fail("Negative facts are implicit in the initial state", expr)
        else:
            atom = _read_atom(expr, scope)
            if atom not in atoms:
                atoms.append(atom)

    goal = Condition(tuple(_read_literals(goal_expr, scope))) if goal_expr is not None else Condition()
    return ProblemDefinition(
        name=name,
        domain_name=domain_name,
        instances=tuple(instances),
        init_atoms=tuple(atoms),
        init_fluents=tuple(fluents),
        goal=goal,
    )


def parse_condition(text: str, domain: Domain, objects: Mapping[str, str]) -> Condition:
    """Parse a ground goal description such as ``(and (robot_at rb1 kitchen))``."""
    expr = read_sexpr(text)
    scope = _Scope(domain, {}, objects, allow_variables=False)
    return Condition(tuple(_read_literals(expr, scope)))


def parse_fact(text: str, domain: Domain, objects: Mapping[str, str]
               ) -> Union[Atom, FluentValue]:
    """Parse one ground fact: an atom, or ``(= (<f> <args>) <value>)``."""
    expr = read_sexpr(text)
    scope = _Scope(domain, {}, objects, allow_variables=False)
    if expr.head() == "=":
        if len(expr.items) != 3 or not isinstance(expr.items[2], Token):
            raise _fail("Expected (= (<function> <args>) <number>)", expr)
        term = _read_fluent(_expect_list(expr.items[1], "fluent term"), scope)
        value = _parse_number(expr.items[2])
        if value is None:
            raise _fail("Fluent value must be a number", expr.items[2])
        return FluentValue(term.function, term.args, value)
    return _read_atom(expr, scope)

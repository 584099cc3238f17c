"""Query evaluation: BGP joins with subclass-aware rdf:type matching,
property paths, three-valued filters, optional left joins, VALUES, SERVICE
dispatch, grouping/aggregation, ordering and projection.

Evaluation is deterministic for a fixed (ast, data, now): NOW() is an
injected parameter, never a clock read.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from decimal import Decimal
from typing import Callable, Dict, FrozenSet, List, Optional, Set, Tuple

from ..ontology import OntologyRegistry, UnknownTerm
from ..terms import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DATE,
    XSD_DATETIME,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_DURATION,
    XSD_INTEGER,
    XSD_STRING,
    BlankNode,
    Iri,
    Literal,
    Term,
    boolean,
    datetime_literal,
    format_datetime,
    literal_value,
    parse_datetime,
    parse_duration_seconds,
)
from .ast import (
    Aggregate,
    Arith,
    Bind,
    BoolOp,
    Compare,
    Constant,
    Exists,
    Expr,
    Filter,
    FuncCall,
    GroupPattern,
    InList,
    Not,
    OptionalGroup,
    PathAlt,
    PathExpr,
    PathPred,
    PathSeq,
    PathStar,
    Query,
    ServiceClause,
    TriplePattern,
    ValuesClause,
    Var,
    VarRef,
    has_aggregate,
    walk_expr,
)

LOCAL_SOURCE = "local"

Binding = Dict[str, Term]
Row = Tuple[Binding, FrozenSet[str]]

# resolver(endpoint, query_text) -> ResultSet
ServiceResolver = Callable[[str, str], "ResultSet"]


class ServiceUnreachable(Exception):
    def __init__(self, endpoint: str, reason: str = "") -> None:
        super().__init__(f"service {endpoint} unreachable: {reason}")
        self.endpoint = endpoint
        self.reason = reason


class EvalError(Exception):
    """Expression error; filters treat it as false, BIND as unbound."""


@dataclass
class ResultSet:
    variables: List[str]
    rows: List[Binding] = field(default_factory=list)
    provenance: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def row_multiset(self) -> Dict[tuple, int]:
        counts: Dict[tuple, int] = {}
        for row in self.rows:
            key = tuple(row.get(v) for v in sorted(self.variables))
            counts[key] = counts.get(key, 0) + 1
        return counts


def pattern_variables(group: GroupPattern) -> List[str]:
    """All variables mentioned anywhere in a group, in first-seen order."""
    seen: Dict[str, None] = {}

    def visit_expr(expr: Expr) -> None:
        for node in walk_expr(expr):
            if isinstance(node, VarRef):
                seen.setdefault(node.var.name)
            elif isinstance(node, Exists):
                visit_group(node.group)

    def visit_group(g: GroupPattern) -> None:
        for el in g.elements:
            if isinstance(el, TriplePattern):
                for pos in (el.subject, el.predicate, el.object):
                    if isinstance(pos, Var):
                        seen.setdefault(pos.name)
            elif isinstance(el, Filter):
                visit_expr(el.expr)
            elif isinstance(el, OptionalGroup):
                visit_group(el.group)
            elif isinstance(el, Bind):
                visit_expr(el.expr)
                seen.setdefault(el.var.name)
            elif isinstance(el, ValuesClause):
                for v in el.vars:
                    seen.setdefault(v.name)
            elif isinstance(el, ServiceClause):
                visit_group(el.group)

    visit_group(group)
    return list(seen)


class _Context:
    def __init__(
        self,
        view,
        registry: Optional[OntologyRegistry],
        resolver: Optional[ServiceResolver],
        now: datetime,
        prefixes: Dict[str, str],
    ) -> None:
        self.view = view
        self.registry = registry
        self.resolver = resolver
        self.now = now
        self.prefixes = prefixes
        self.notes: List[str] = []
        self.source_tag = LOCAL_SOURCE


# -- path evaluation -----------------------------------------------------------


def _path_pairs(view, path: PathExpr, subject: Optional[Term]) -> Set[Tuple[Term, Term]]:
    """(start, end) pairs for a path, optionally anchored at `subject`."""
    if isinstance(path, PathPred):
        return {(t.subject, t.object) for t in view.match(subject, Iri(path.iri), None)}
    if isinstance(path, PathAlt):
        out: Set[Tuple[Term, Term]] = set()
        for part in path.parts:
            out |= _path_pairs(view, part, subject)
        return out
    if isinstance(path, PathSeq):
        pairs = _path_pairs(view, path.parts[0], subject)
        for part in path.parts[1:]:
            by_mid: Dict[Term, Set[Term]] = {}
            for s, m in pairs:
                by_mid.setdefault(m, set()).add(s)
            nxt: Set[Tuple[Term, Term]] = set()
            for mid, starts in by_mid.items():
                if isinstance(mid, Literal):
                    continue
                for _, end in _path_pairs(view, part, mid):
                    for s in starts:
                        nxt.add((s, end))
            pairs = nxt
        return pairs
    if isinstance(path, PathStar):
        starts: List[Term]
        if subject is not None:
            starts = [subject]
        else:
            starts = view.terms()
        out = set()
        for start in starts:
            frontier = [start]
            reached = {start}
            while frontier:
                node = frontier.pop()
                if isinstance(node, Literal):
                    continue
                for _, end in _path_pairs(view, path.inner, node):
                    if end not in reached:
                        reached.add(end)
                        frontier.append(end)
            out |= {(start, r) for r in reached}
        return out
    raise TypeError(f"unknown path node {path!r}")


def evaluate_path(
    view,
    subject: Optional[Term],
    path: PathExpr,
    object: Optional[Term],
) -> Set[Tuple[Term, Term]]:
    """seq/alt/star path semantics; star is BFS with a visited set, so it
    terminates on cycles and includes the zero-step (x, x) pairs."""
    pairs = _path_pairs(view, path, subject)
    if object is not None:
        pairs = {p for p in pairs if p[1] == object}
    return pairs


# -- pattern matching ------------------------------------------------------------


def _type_candidates(ctx: _Context, class_iri: str) -> List[str]:
    if ctx.registry is None:
        return [class_iri]
    try:
        return sorted(ctx.registry.subclasses_of(class_iri))
    except UnknownTerm:
        return [class_iri]


def _match_triple(ctx: _Context, pattern: TriplePattern, binding: Binding) -> List[Binding]:
    def resolve(pos) -> Optional[Term]:
        if isinstance(pos, Var):
            return binding.get(pos.name)
        return pos

    s_val = resolve(pattern.subject)
    o_val = resolve(pattern.object)
    out: Dict[tuple, Binding] = {}

    def emit(s: Term, p: Optional[Term], o: Term) -> None:
        new = dict(binding)
        if isinstance(pattern.subject, Var):
            new[pattern.subject.name] = s
        if p is not None and isinstance(pattern.predicate, Var):
            new[pattern.predicate.name] = p
        if isinstance(pattern.object, Var):
            new[pattern.object.name] = o
        key = tuple(sorted((k, repr(v)) for k, v in new.items()))
        out.setdefault(key, new)

    predicate = pattern.predicate
    if isinstance(predicate, (PathSeq, PathAlt, PathStar)):
        for s, o in sorted(
            evaluate_path(ctx.view, s_val, predicate, o_val),
            key=lambda pair: (repr(pair[0]), repr(pair[1])),
        ):
            emit(s, None, o)
        return list(out.values())
    if isinstance(predicate, Var):
        p_val = binding.get(predicate.name)
        for t in ctx.view.match(s_val, p_val, o_val):
            emit(t.subject, t.predicate, t.object)
        return list(out.values())

    assert isinstance(predicate, Iri)
    if predicate.value == RDF_TYPE:
        # Type patterns match the entailed graph: a node typed C is also
        # typed with every registered superclass of C, independent of the
        # join order that bound (or left unbound) the object.
        if isinstance(o_val, Iri):
            for cls in _type_candidates(ctx, o_val.value):
                for t in ctx.view.match(s_val, predicate, Iri(cls)):
                    emit(t.subject, None, o_val)
        else:
            for t in ctx.view.match(s_val, predicate, None):
                emit(t.subject, None, t.object)
                if ctx.registry is not None and isinstance(t.object, Iri):
                    try:
                        supers = ctx.registry.subclass_closure(t.object.value)
                    except UnknownTerm:
                        supers = ()
                    for sup in supers:
                        emit(t.subject, None, Iri(sup))
        return list(out.values())
    for t in ctx.view.match(s_val, predicate, o_val):
        emit(t.subject, None, t.object)
    return list(out.values())


# -- expression evaluation ---------------------------------------------------------

_NUMERIC = (int, Decimal, float)


def _term_to_value(term: Term):
    if isinstance(term, Literal):
        try:
            return literal_value(term)
        except ValueError:
            return term
    return term


def _value_to_term(value) -> Term:
    if isinstance(value, (Iri, BlankNode, Literal)):
        return value
    if isinstance(value, bool):
        return boolean(value)
    if isinstance(value, int):
        return Literal(str(value), XSD_INTEGER)
    if isinstance(value, Decimal):
        return Literal(str(value), XSD_DECIMAL)
    if isinstance(value, float):
        return Literal(repr(value), XSD_DOUBLE)
    if isinstance(value, datetime):
        return datetime_literal(value)
    if isinstance(value, str):
        return Literal(value)
    raise EvalError(f"cannot convert {value!r} to a term")


def _numeric_pair(lv, rv):
    if isinstance(lv, float) or isinstance(rv, float):
        return float(lv), float(rv)
    if isinstance(lv, Decimal) or isinstance(rv, Decimal):
        return Decimal(lv) if not isinstance(lv, Decimal) else lv, (
            Decimal(rv) if not isinstance(rv, Decimal) else rv
        )
    return lv, rv


def _compare(op: str, lv, rv) -> bool:
    if isinstance(lv, Term) or isinstance(rv, Term):
        # Terms without a value space (IRIs, blank nodes, unknown datatypes)
        # support only identity comparison.
        if op == "=":
            return lv == rv
        if op == "!=":
            return lv != rv
        raise EvalError(f"cannot order {lv!r} and {rv!r}")
    if isinstance(lv, bool) != isinstance(rv, bool):
        raise EvalError("boolean compared to non-boolean")
    if isinstance(lv, _NUMERIC) and isinstance(rv, _NUMERIC):
        lv, rv = _numeric_pair(lv, rv)
    elif type(lv) is not type(rv) and not (isinstance(lv, str) and isinstance(rv, str)):
        if not (isinstance(lv, datetime) and isinstance(rv, datetime)):
            raise EvalError(f"incomparable values {lv!r} and {rv!r}")
    if op == "=":
        return lv == rv
    if op == "!=":
        return lv != rv
    if op == "<":
        return lv < rv
    if op == "<=":
        return lv <= rv
    if op == ">":
        return lv > rv
    if op == ">=":
        return lv >= rv
    raise EvalError(f"unknown comparison {op}")


def _ebv(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, _NUMERIC):
        return value != 0
    if isinstance(value, str):
        return len(value) > 0
    if isinstance(value, Literal):
        return len(value.lexical) > 0
    raise EvalError(f"no boolean value for {value!r}")


def _arith(op: str, lv, rv):
    if isinstance(lv, datetime) and isinstance(rv, datetime):
        if op == "-":
            return Decimal(str((lv - rv).total_seconds()))
        raise EvalError("dateTime values only support subtraction")
    if isinstance(lv, datetime) and isinstance(rv, _NUMERIC) and not isinstance(rv, bool):
        seconds = float(rv)
        if op == "-":
            return lv - timedelta(seconds=seconds)
        if op == "+":
            return lv + timedelta(seconds=seconds)
        raise EvalError("dateTime arithmetic supports only + and -")
    if (
        isinstance(lv, _NUMERIC)
        and isinstance(rv, _NUMERIC)
        and not isinstance(lv, bool)
        and not isinstance(rv, bool)
    ):
        lv, rv = _numeric_pair(lv, rv)
        if op == "+":
            return lv + rv
        if op == "-":
            return lv - rv
        if op == "*":
            return lv * rv
        if op == "/":
            if rv == 0:
                raise EvalError("division by zero")
            if isinstance(lv, int) and isinstance(rv, int):
                return Decimal(lv) / Decimal(rv)
            return lv / rv
    raise EvalError(f"cannot apply {op} to {lv!r} and {rv!r}")


_CASTS = {
    XSD_INTEGER: lambda v: int(v) if not isinstance(v, str) else int(Decimal(v)),
    XSD_DECIMAL: lambda v: Decimal(str(v)),
    XSD_DOUBLE: lambda v: float(v),
    XSD_STRING: lambda v: v if isinstance(v, str) else (format_datetime(v) if isinstance(v, datetime) else str(v)),
    XSD_BOOLEAN: lambda v: _ebv(v),
    XSD_DATETIME: lambda v: v if isinstance(v, datetime) else parse_datetime(str(v)),
    XSD_DATE: lambda v: v if isinstance(v, datetime) else parse_datetime(str(v)),
    XSD_DURATION: lambda v: parse_duration_seconds(str(v)),
}


def _eval_expr(ctx: _Context, expr: Expr, binding: Binding, aggregates: Optional[Dict[Aggregate, object]] = None):
    if isinstance(expr, Constant):
        return _term_to_value(expr.term)
    if isinstance(expr, VarRef):
        term = binding.get(expr.var.name)
        if term is None:
            raise EvalError(f"unbound variable ?{expr.var.name}")
        return _term_to_value(term)
    if isinstance(expr, Compare):
        return _compare(
            expr.op,
            _eval_expr(ctx, expr.left, binding, aggregates),
            _eval_expr(ctx, expr.right, binding, aggregates),
        )
    if isinstance(expr, BoolOp):
        # SPARQL || and && tolerate one erring side when the other decides.
        lv = rv = None
        lerr = rerr = None
        try:
            lv = _ebv(_eval_expr(ctx, expr.left, binding, aggregates))
        except EvalError as exc:
            lerr = exc
        try:
            rv = _ebv(_eval_expr(ctx, expr.right, binding, aggregates))
        except EvalError as exc:
            rerr = exc
        if expr.op == "&&":
            if lv is False or rv is False:
                return False
            if lerr or rerr:
                raise lerr or rerr
            return True
        if lv is True or rv is True:
            return True
        if lerr or rerr:
            raise lerr or rerr
        return False
    if isinstance(expr, Not):
        return not _ebv(_eval_expr(ctx, expr.expr, binding, aggregates))
    if isinstance(expr, Arith):
        if expr.op == "neg":
            value = _eval_expr(ctx, expr.left, binding, aggregates)
            if isinstance(value, _NUMERIC) and not isinstance(value, bool):
                return -value
            raise EvalError("cannot negate non-numeric")
        return _arith(
            expr.op,
            _eval_expr(ctx, expr.left, binding, aggregates),
            _eval_expr(ctx, expr.right, binding, aggregates),
        )
    if isinstance(expr, InList):
        value = _eval_expr(ctx, expr.expr, binding, aggregates)
        hit = False
        for item in expr.items:
            try:
                if _compare("=", value, _eval_expr(ctx, item, binding, aggregates)):
                    hit = True
                    break
            except EvalError:
                continue
        return hit != expr.negated
    if isinstance(expr, Exists):
        rows = _eval_group(ctx, expr.group, [(dict(binding), frozenset())])
        found = bool(rows)
        return found != expr.negated
    if isinstance(expr, Aggregate):
        if aggregates is None or expr not in aggregates:
            raise EvalError("aggregate used outside a grouping context")
        value = aggregates[expr]
        if value is None:
            raise EvalError("aggregate is unbound for this group")
        return value
    if isinstance(expr, FuncCall):
        return _eval_func(ctx, expr, binding, aggregates)
    raise EvalError(f"unknown expression node {expr!r}")


def _eval_func(ctx: _Context, call: FuncCall, binding: Binding, aggregates) -> object:
    name = call.name
    if name == "now":
        return ctx.now
    if name == "if":
        if len(call.args) != 3:
            raise EvalError("IF takes three arguments")
        cond = _ebv(_eval_expr(ctx, call.args[0], binding, aggregates))
        return _eval_expr(ctx, call.args[1] if cond else call.args[2], binding, aggregates)
    if name == "bound":
        arg = call.args[0]
        if not isinstance(arg, VarRef):
            raise EvalError("BOUND takes a variable")
        return arg.var.name in binding
    if name == "str":
        value = _eval_expr(ctx, call.args[0], binding, aggregates)
        if isinstance(value, Iri):
            return value.value
        if isinstance(value, Literal):
            return value.lexical
        return _CASTS[XSD_STRING](value)
    if name in _CASTS:
        value = _eval_expr(ctx, call.args[0], binding, aggregates)
        if isinstance(value, Literal):
            value = value.lexical
        if isinstance(value, (Iri, BlankNode)):
            raise EvalError(f"cannot cast {value!r}")
        try:
            return _CASTS[name](value)
        except Exception as exc:
            raise EvalError(f"cast failed: {exc}")
    raise EvalError(f"unknown function {name}")


# -- group evaluation -----------------------------------------------------------


def _compatible(a: Binding, b: Binding) -> Optional[Binding]:
    merged = dict(a)
    for key, value in b.items():
        if key in merged:
            if merged[key] != value:
                return None
        else:
            merged[key] = value
    return merged


def _join(left: List[Row], right: List[Row]) -> List[Row]:
    out: List[Row] = []
    for lb, lp in left:
        for rb, rp in right:
            merged = _compatible(lb, rb)
            if merged is not None:
                out.append((merged, lp | rp))
    return out


def _eval_group(ctx: _Context, group: GroupPattern, rows: List[Row]) -> List[Row]:
    filters: List[Filter] = []
    for element in group.elements:
        if isinstance(element, Filter):
            filters.append(element)
            continue
        if isinstance(element, TriplePattern):
            nxt: List[Row] = []
            local_tag = frozenset([ctx.source_tag])
            for binding, prov in rows:
                for extended in _match_triple(ctx, element, binding):
                    nxt.append((extended, prov | local_tag))
            rows = nxt
        elif isinstance(element, OptionalGroup):
            nxt = []
            for binding, prov in rows:
                sub = _eval_group(ctx, element.group, [(binding, prov)])
                nxt.extend(sub if sub else [(binding, prov)])
            rows = nxt
        elif isinstance(element, Bind):
            nxt = []
            for binding, prov in rows:
                new = dict(binding)
                if element.var.name not in new:
                    try:
                        new[element.var.name] = _value_to_term(
                            _eval_expr(ctx, element.expr, binding)
                        )
                    except EvalError:
                        pass
                nxt.append((new, prov))
            rows = nxt
        elif isinstance(element, ValuesClause):
            table: List[Row] = []
            for data_row in element.rows:
                binding = {
                    var.name: term
                    for var, term in zip(element.vars, data_row)
                    if term is not None
                }
                table.append((binding, frozenset()))
            rows = _join(rows, table)
        elif isinstance(element, ServiceClause):
            rows = _eval_service(ctx, element, rows)
        else:
            raise TypeError(f"unknown pattern element {element!r}")

    for f in filters:
        kept: List[Row] = []
        for binding, prov in rows:
            try:
                if _ebv(_eval_expr(ctx, f.expr, binding)):
                    kept.append((binding, prov))
            except EvalError:
                continue
        rows = kept
    return rows


def _eval_service(ctx: _Context, service: ServiceClause, rows: List[Row]) -> List[Row]:
    if ctx.resolver is None:
        ctx.notes.append(f"service {service.endpoint} skipped: no resolver configured")
        return []
    text = service_subquery_text(ctx.prefixes, service.group)
    try:
        remote = ctx.resolver(service.endpoint, text)
    except ServiceUnreachable as exc:
        ctx.notes.append(f"service {service.endpoint} unreachable: {exc.reason}")
        return []
    remote_rows: List[Row] = [
        (dict(row), frozenset([service.endpoint])) for row in remote.rows
    ]
    ctx.notes.extend(remote.notes)
    # Deterministic join order regardless of remote arrival order.
    remote_rows.sort(key=lambda r: tuple(sorted((k, repr(v)) for k, v in r[0].items())))
    return _join(rows, remote_rows)


def service_subquery_text(prefixes: Dict[str, str], group: GroupPattern) -> str:
    decls = "\n".join(f"PREFIX {name}: <{ns}>" for name, ns in sorted(prefixes.items()))
    return f"{decls}\nSELECT * WHERE {{ {group.source} }}"


# -- aggregation -------------------------------------------------------------------


def _aggregate_value(ctx: _Context, agg: Aggregate, members: List[Row]) -> Optional[object]:
    if agg.func == "count":
        if agg.arg is None:
            return len(members)
        n = 0
        for binding, _ in members:
            try:
                _eval_expr(ctx, agg.arg, binding)
                n += 1
            except EvalError:
                continue
        return n
    values = []
    for binding, _ in members:
        try:
            values.append(_eval_expr(ctx, agg.arg, binding))
        except EvalError:
            continue
    if not values:
        return None
    kinds = set()
    for v in values:
        if isinstance(v, _NUMERIC) and not isinstance(v, bool):
            kinds.add("number")
        elif isinstance(v, datetime):
            kinds.add("datetime")
        elif isinstance(v, str):
            kinds.add("string")
        else:
            kinds.add("other")
    if len(kinds) != 1 or "other" in kinds:
        return None  # mixed incomparable values: aggregate is unbound
    chosen = min(values) if agg.func == "min" else max(values)
    return chosen


def _group_rows(ctx: _Context, query: Query, rows: List[Row]) -> List[Row]:
    groups: Dict[tuple, List[Row]] = {}
    order: List[tuple] = []
    for binding, prov in rows:
        key = tuple(binding.get(v.name) for v in query.group_by)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((binding, prov))

    agg_nodes: List[Aggregate] = []
    for expr, _ in query.select_items:
        agg_nodes.extend(n for n in walk_expr(expr) if isinstance(n, Aggregate))
    if query.having is not None:
        agg_nodes.extend(n for n in walk_expr(query.having) if isinstance(n, Aggregate))

    out: List[Row] = []
    for key in order:
        members = groups[key]
        agg_values: Dict[Aggregate, object] = {
            node: _aggregate_value(ctx, node, members) for node in agg_nodes
        }
        binding: Binding = {
            v.name: key[i] for i, v in enumerate(query.group_by) if key[i] is not None
        }
        if query.having is not None:
            try:
                if not _ebv(_eval_expr(ctx, query.having, binding, agg_values)):
                    continue
            except EvalError:
                continue
        projected: Binding = dict(binding)
        for expr, name in query.select_items:
            if isinstance(expr, VarRef):
                continue
            try:
                projected[name] = _value_to_term(_eval_expr(ctx, expr, binding, agg_values))
            except EvalError:
                continue
        prov = frozenset().union(*(p for _, p in members)) if members else frozenset()
        out.append((projected, prov))
    return out


# -- ordering and projection ---------------------------------------------------------


def _order_key(value) -> tuple:
    # Total order across heterogeneous values: unbound < bnode < iri < literal.
    if value is None:
        return (0, "")
    if isinstance(value, BlankNode):
        return (1, value.id)
    if isinstance(value, Iri):
        return (2, value.value)
    if isinstance(value, bool):
        return (3, "bool", value)
    if isinstance(value, _NUMERIC):
        return (4, "num", float(value))
    if isinstance(value, datetime):
        return (5, "dt", value.timestamp())
    if isinstance(value, str):
        return (6, "str", value)
    if isinstance(value, Literal):
        return (7, value.datatype, value.lexical)
    return (8, repr(value))


def _apply_order(ctx: _Context, query: Query, rows: List[Row]) -> List[Row]:
    for expr, desc in reversed(query.order_by):
        def key(row: Row):
            try:
                return _order_key(_eval_expr(ctx, expr, row[0]))
            except EvalError:
                return (0, "")

        rows.sort(key=key, reverse=desc)
    return rows


def evaluate(
    ast: Query,
    data,
    registry: Optional[OntologyRegistry] = None,
    service_resolver: Optional[ServiceResolver] = None,
    now: Optional[datetime] = None,
) -> ResultSet:
    """Evaluate a parsed query against anything exposing match()/terms()
    (Graph, Dataset, or a federated view)."""
    if now is None:
        raise ValueError("evaluation time must be injected explicitly")
    ctx = _Context(data, registry, service_resolver, now, ast.prefixes)
    rows = _eval_group(ctx, ast.where, [({}, frozenset())])

    grouping = (
        bool(ast.group_by)
        or any(has_aggregate(e) for e, _ in ast.select_items)
        or (ast.having is not None and has_aggregate(ast.having))
    )
    if grouping:
        rows = _group_rows(ctx, ast, rows)
    elif any(not isinstance(e, VarRef) for e, _ in ast.select_items):
        projected_rows: List[Row] = []
        for binding, prov in rows:
            new = dict(binding)
            for expr, name in ast.select_items:
                if isinstance(expr, VarRef):
                    continue
                try:
                    new[name] = _value_to_term(_eval_expr(ctx, expr, binding))
                except EvalError:
                    continue
            projected_rows.append((new, prov))
        rows = projected_rows

    rows = _apply_order(ctx, ast, rows)

    if ast.star:
        variables = pattern_variables(ast.where)
    else:
        variables = []
        for expr, name in ast.select_items:
            variables.append(expr.var.name if isinstance(expr, VarRef) else name)

    final_rows: List[Binding] = []
    final_prov: List[str] = []
    seen: Dict[tuple, int] = {}
    for binding, prov in rows:
        projected = {v: binding[v] for v in variables if v in binding}
        tag = "+".join(sorted(prov)) or LOCAL_SOURCE
        if ast.distinct:
            key = tuple(projected.get(v) for v in variables)
            if key in seen:
                continue
            seen[key] = 1
        final_rows.append(projected)
        final_prov.append(tag)
    return ResultSet(variables=variables, rows=final_rows, provenance=final_prov, notes=ctx.notes)

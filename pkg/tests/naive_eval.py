"""Independent brute-force query evaluator used as the oracle.

Deliberately naive: full scans over a plain triple list (no indexes), its
own iterate-to-fixpoint type closure and path closure, its own expression
semantics. Shares only the parsed AST and term types with the engine under
test.
"""
from __future__ import annotations

from datetime import datetime, timedelta
from decimal import Decimal
from typing import Dict, List, Optional, Set, Tuple

from agritrust.ontology import OntologyRegistry
from agritrust.query.ast import (
    Aggregate,
    Arith,
    Bind,
    BoolOp,
    Compare,
    Constant,
    Exists,
    Filter,
    FuncCall,
    GroupPattern,
    InList,
    Not,
    OptionalGroup,
    PathAlt,
    PathPred,
    PathSeq,
    PathStar,
    Query,
    ServiceClause,
    TriplePattern,
    ValuesClause,
    Var,
    VarRef,
    walk_expr,
)
from agritrust.terms import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DATE,
    XSD_DATETIME,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_DURATION,
    XSD_INTEGER,
    BlankNode,
    Iri,
    Literal,
    Term,
    Triple,
    parse_datetime,
    parse_duration_seconds,
)


class NaiveError(Exception):
    pass


def type_closure_table(registry: Optional[OntologyRegistry]) -> Dict[str, Set[str]]:
    """class -> all classes whose instances count as it, by fixpoint:
    x is a sub of c if x == c or a direct super of x is already a sub."""
    if registry is None:
        return {}
    edges: Dict[str, Set[str]] = {
        iri: set(cd.direct_superclasses) for iri, cd in registry.classes.items()
    }
    all_classes = set(edges) | {s for supers in edges.values() for s in supers}
    subs: Dict[str, Set[str]] = {}
    for c in all_classes:
        members = {c}
        again = True
        while again:
            again = False
            for x, supers in edges.items():
                if x not in members and supers & members:
                    members.add(x)
                    again = True
        subs[c] = members
    return subs


def naive_value(term: Term):
    if isinstance(term, Literal):
        dt = term.datatype
        if dt == XSD_INTEGER:
            return int(term.lexical)
        if dt == XSD_DECIMAL:
            return Decimal(term.lexical)
        if dt == XSD_DOUBLE:
            return float(term.lexical)
        if dt == XSD_BOOLEAN:
            return term.lexical == "true"
        if dt in (XSD_DATETIME, XSD_DATE):
            return parse_datetime(term.lexical)
        if dt == XSD_DURATION:
            return parse_duration_seconds(term.lexical)
        return term.lexical
    return term


class NaiveEvaluator:
    def __init__(
        self,
        triples: List[Triple],
        registry: Optional[OntologyRegistry],
        now: datetime,
        service_data: Optional[Dict[str, List[Triple]]] = None,
    ) -> None:
        self.triples = list(triples)
        self.subs = type_closure_table(registry)
        self.now = now
        self.service_data = service_data or {}

    # -- patterns ------------------------------------------------------------

    def scan(self, s, p, o, triples=None) -> List[Triple]:
        out = []
        for t in triples if triples is not None else self.triples:
            if s is not None and t.subject != s:
                continue
            if p is not None and t.predicate != p:
                continue
            if o is not None and t.object != o:
                continue
            out.append(t)
        return out

    def entailed_type_triples(self, triples=None) -> List[Triple]:
        """Explicit triples plus (x, rdf:type, C) for every superclass C."""
        source = triples if triples is not None else self.triples
        seen = dict.fromkeys(source)
        for t in source:
            if t.predicate.value == RDF_TYPE and isinstance(t.object, Iri):
                for cls, members in self.subs.items():
                    if t.object.value in members:
                        seen.setdefault(Triple(t.subject, t.predicate, Iri(cls)), None)
        return list(seen)

    def path_pairs(self, path, triples) -> Set[Tuple[Term, Term]]:
        if isinstance(path, PathPred):
            return {
                (t.subject, t.object) for t in triples if t.predicate.value == path.iri
            }
        if isinstance(path, PathAlt):
            out: Set[Tuple[Term, Term]] = set()
            for part in path.parts:
                out |= self.path_pairs(part, triples)
            return out
        if isinstance(path, PathSeq):
            pairs = self.path_pairs(path.parts[0], triples)
            for part in path.parts[1:]:
                step = self.path_pairs(part, triples)
                pairs = {(a, d) for (a, b) in pairs for (c, d) in step if b == c}
            return pairs
        if isinstance(path, PathStar):
            base = self.path_pairs(path.inner, triples)
            nodes = set()
            for t in triples:
                nodes.add(t.subject)
                nodes.add(t.object)
            closure = {(n, n) for n in nodes} | set(base)
            changed = True
            while changed:
                changed = False
                extra = {
                    (a, d)
                    for (a, b) in closure
                    for (c, d) in base
                    if b == c and (a, d) not in closure
                }
                if extra:
                    closure |= extra
                    changed = True
            return closure
        raise NaiveError(f"unknown path {path!r}")

    def match_pattern(self, pattern: TriplePattern, binding: dict, triples) -> List[dict]:
        def resolved(pos):
            if isinstance(pos, Var):
                return binding.get(pos.name)
            return pos

        s, o = resolved(pattern.subject), resolved(pattern.object)
        rows = []
        if isinstance(pattern.predicate, (PathSeq, PathAlt, PathStar)):
            for a, b in self.path_pairs(pattern.predicate, triples):
                if s is not None and a != s:
                    continue
                if o is not None and b != o:
                    continue
                new = dict(binding)
                if isinstance(pattern.subject, Var):
                    new[pattern.subject.name] = a
                if isinstance(pattern.object, Var):
                    new[pattern.object.name] = b
                rows.append(new)
        else:
            p = resolved(pattern.predicate) if isinstance(pattern.predicate, Var) else pattern.predicate
            pool = (
                self.entailed_type_triples(triples)
                if isinstance(p, Iri) and p.value == RDF_TYPE
                else triples
            )
            for t in pool:
                if s is not None and t.subject != s:
                    continue
                if p is not None and t.predicate != p:
                    continue
                if o is not None and t.object != o:
                    continue
                new = dict(binding)
                if isinstance(pattern.subject, Var):
                    new[pattern.subject.name] = t.subject
                if isinstance(pattern.predicate, Var):
                    new[pattern.predicate.name] = t.predicate
                if isinstance(pattern.object, Var):
                    new[pattern.object.name] = t.object
                rows.append(new)
        deduped = []
        for row in rows:
            if row not in deduped:
                deduped.append(row)
        return deduped

    # -- groups ----------------------------------------------------------------

    def eval_group(self, group: GroupPattern, rows: List[dict], triples=None) -> List[dict]:
        triples = triples if triples is not None else self.triples
        filters = []
        for element in group.elements:
            if isinstance(element, Filter):
                filters.append(element.expr)
            elif isinstance(element, TriplePattern):
                rows = [
                    extended
                    for binding in rows
                    for extended in self.match_pattern(element, binding, triples)
                ]
            elif isinstance(element, OptionalGroup):
                nxt = []
                for binding in rows:
                    sub = self.eval_group(element.group, [binding], triples)
                    nxt.extend(sub if sub else [binding])
                rows = nxt
            elif isinstance(element, Bind):
                nxt = []
                for binding in rows:
                    new = dict(binding)
                    try:
                        new[element.var.name] = to_term(self.eval_expr(element.expr, binding, triples))
                    except NaiveError:
                        pass
                    nxt.append(new)
                rows = nxt
            elif isinstance(element, ValuesClause):
                nxt = []
                for binding in rows:
                    for data_row in element.rows:
                        merged = dict(binding)
                        ok = True
                        for var, value in zip(element.vars, data_row):
                            if value is None:
                                continue
                            if var.name in merged and merged[var.name] != value:
                                ok = False
                                break
                            merged[var.name] = value
                        if ok:
                            nxt.append(merged)
                rows = nxt
            elif isinstance(element, ServiceClause):
                remote = self.service_data.get(element.endpoint)
                if remote is None:
                    rows = []
                    continue
                remote_rows = self.eval_group(element.group, [{}], remote)
                nxt = []
                for binding in rows:
                    for rrow in remote_rows:
                        merged = dict(binding)
                        ok = True
                        for k, v in rrow.items():
                            if k in merged and merged[k] != v:
                                ok = False
                                break
                            merged[k] = v
                        if ok:
                            nxt.append(merged)
                rows = nxt
            else:
                raise NaiveError(f"element {element!r}")
        for expr in filters:
            kept = []
            for binding in rows:
                try:
                    if self.truth(self.eval_expr(expr, binding, triples)):
                        kept.append(binding)
                except NaiveError:
                    continue
            rows = kept
        return rows

    # -- expressions --------------------------------------------------------------

    def truth(self, value) -> bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, (int, Decimal, float)):
            return value != 0
        if isinstance(value, str):
            return bool(value)
        if isinstance(value, Literal):
            return bool(value.lexical)
        raise NaiveError("no truth value")

    def eval_expr(self, expr, binding: dict, triples, aggregates=None):
        if isinstance(expr, Constant):
            return naive_value(expr.term)
        if isinstance(expr, VarRef):
            if expr.var.name not in binding:
                raise NaiveError("unbound")
            return naive_value(binding[expr.var.name])
        if isinstance(expr, Compare):
            lv = self.eval_expr(expr.left, binding, triples, aggregates)
            rv = self.eval_expr(expr.right, binding, triples, aggregates)
            return self.compare(expr.op, lv, rv)
        if isinstance(expr, BoolOp):
            lv = rv = None
            lerr = rerr = None
            try:
                lv = self.truth(self.eval_expr(expr.left, binding, triples, aggregates))
            except NaiveError as e:
                lerr = e
            try:
                rv = self.truth(self.eval_expr(expr.right, binding, triples, aggregates))
            except NaiveError as e:
                rerr = e
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
            return not self.truth(self.eval_expr(expr.expr, binding, triples, aggregates))
        if isinstance(expr, Arith):
            if expr.op == "neg":
                v = self.eval_expr(expr.left, binding, triples, aggregates)
                if isinstance(v, (int, Decimal, float)) and not isinstance(v, bool):
                    return -v
                raise NaiveError("neg")
            lv = self.eval_expr(expr.left, binding, triples, aggregates)
            rv = self.eval_expr(expr.right, binding, triples, aggregates)
            return self.arith(expr.op, lv, rv)
        if isinstance(expr, InList):
            value = self.eval_expr(expr.expr, binding, triples, aggregates)
            hit = False
            for item in expr.items:
                try:
                    if self.compare("=", value, self.eval_expr(item, binding, triples, aggregates)):
                        hit = True
                        break
                except NaiveError:
                    continue
            return hit != expr.negated
        if isinstance(expr, Exists):
            found = bool(self.eval_group(expr.group, [dict(binding)], triples))
            return found != expr.negated
        if isinstance(expr, Aggregate):
            if aggregates is None or expr not in aggregates:
                raise NaiveError("aggregate outside grouping")
            value = aggregates[expr]
            if value is None:
                raise NaiveError("unbound aggregate")
            return value
        if isinstance(expr, FuncCall):
            return self.func(expr, binding, triples, aggregates)
        raise NaiveError(f"expr {expr!r}")

    def compare(self, op, lv, rv):
        if isinstance(lv, (Iri, BlankNode, Literal)) or isinstance(rv, (Iri, BlankNode, Literal)):
            if op == "=":
                return lv == rv
            if op == "!=":
                return lv != rv
            raise NaiveError("order on terms")
        if isinstance(lv, bool) != isinstance(rv, bool):
            raise NaiveError("bool vs non-bool")
        numeric = (int, Decimal, float)
        if isinstance(lv, numeric) and isinstance(rv, numeric):
            if isinstance(lv, float) or isinstance(rv, float):
                lv, rv = float(lv), float(rv)
            else:
                lv, rv = Decimal(lv), Decimal(rv)
        elif isinstance(lv, datetime) and isinstance(rv, datetime):
            pass
        elif isinstance(lv, str) and isinstance(rv, str):
            pass
        else:
            raise NaiveError("incomparable")
        return {
            "=": lv == rv,
            "!=": lv != rv,
            "<": lv < rv,
            "<=": lv <= rv,
            ">": lv > rv,
            ">=": lv >= rv,
        }[op]

    def arith(self, op, lv, rv):
        if isinstance(lv, datetime) and isinstance(rv, datetime):
            if op == "-":
                return Decimal(str((lv - rv).total_seconds()))
            raise NaiveError("datetime arith")
        if isinstance(lv, datetime) and isinstance(rv, (int, Decimal, float)):
            delta = timedelta(seconds=float(rv))
            if op == "-":
                return lv - delta
            if op == "+":
                return lv + delta
            raise NaiveError("datetime arith")
        numeric = (int, Decimal, float)
        if not (isinstance(lv, numeric) and isinstance(rv, numeric)):
            raise NaiveError("non numeric")
        if isinstance(lv, bool) or isinstance(rv, bool):
            raise NaiveError("bool arith")
        if isinstance(lv, float) or isinstance(rv, float):
            lv, rv = float(lv), float(rv)
        elif isinstance(lv, Decimal) or isinstance(rv, Decimal):
            lv, rv = Decimal(lv), Decimal(rv)
        if op == "+":
            return lv + rv
        if op == "-":
            return lv - rv
        if op == "*":
            return lv * rv
        if op == "/":
            if rv == 0:
                raise NaiveError("division by zero")
            if isinstance(lv, int) and isinstance(rv, int):
                return Decimal(lv) / Decimal(rv)
            return lv / rv
        raise NaiveError(op)

    def func(self, call: FuncCall, binding, triples, aggregates):
        name = call.name
        if name == "now":
            return self.now
        if name == "if":
            cond = self.truth(self.eval_expr(call.args[0], binding, triples, aggregates))
            chosen = call.args[1] if cond else call.args[2]
            return self.eval_expr(chosen, binding, triples, aggregates)
        if name == "bound":
            return call.args[0].var.name in binding
        casts = {
            XSD_INTEGER: lambda v: int(Decimal(str(v))),
            XSD_DECIMAL: lambda v: Decimal(str(v)),
            XSD_DOUBLE: lambda v: float(v),
            XSD_BOOLEAN: lambda v: self.truth(v),
            XSD_DATETIME: lambda v: v if isinstance(v, datetime) else parse_datetime(str(v)),
            XSD_DURATION: lambda v: parse_duration_seconds(str(v)),
        }
        if name in casts:
            value = self.eval_expr(call.args[0], binding, triples, aggregates)
            if isinstance(value, (Iri, BlankNode)):
                raise NaiveError("cast of non-literal")
            if isinstance(value, Literal):
                value = value.lexical
            try:
                return casts[name](value)
            except Exception as exc:
                raise NaiveError(str(exc))
        if name == "str":
            value = self.eval_expr(call.args[0], binding, triples, aggregates)
            if isinstance(value, Iri):
                return value.value
            if isinstance(value, Literal):
                return value.lexical
            return str(value)
        raise NaiveError(f"func {name}")

    # -- full query -----------------------------------------------------------------

    def run(self, query: Query) -> List[dict]:
        rows = self.eval_group(query.where, [{}])
        has_agg = any(
            isinstance(node, Aggregate)
            for expr, _ in query.select_items
            for node in walk_expr(expr)
        ) or (
            query.having is not None
            and any(isinstance(n, Aggregate) for n in walk_expr(query.having))
        )
        if query.group_by or has_agg:
            rows = self.grouped(query, rows)
        else:
            projected = []
            for binding in rows:
                new = dict(binding)
                for expr, name in query.select_items:
                    if isinstance(expr, VarRef):
                        continue
                    try:
                        new[name] = to_term(self.eval_expr(expr, binding, self.triples))
                    except NaiveError:
                        continue
                projected.append(new)
            rows = projected
        if query.star:
            from agritrust.query.evaluator import pattern_variables

            variables = pattern_variables(query.where)
        else:
            variables = [
                e.var.name if isinstance(e, VarRef) else name for e, name in query.select_items
            ]
        out = [{v: r[v] for v in variables if v in r} for r in rows]
        if query.distinct:
            deduped = []
            for row in out:
                if row not in deduped:
                    deduped.append(row)
            out = deduped
        return out

    def grouped(self, query: Query, rows: List[dict]) -> List[dict]:
        groups: List[Tuple[tuple, List[dict]]] = []
        for binding in rows:
            key = tuple(binding.get(v.name) for v in query.group_by)
            for gk, members in groups:
                if gk == key:
                    members.append(binding)
                    break
            else:
                groups.append((key, [binding]))
        agg_nodes = []
        for expr, _ in query.select_items:
            agg_nodes.extend(n for n in walk_expr(expr) if isinstance(n, Aggregate))
        if query.having is not None:
            agg_nodes.extend(n for n in walk_expr(query.having) if isinstance(n, Aggregate))
        out = []
        for key, members in groups:
            agg_values = {}
            for node in agg_nodes:
                agg_values[node] = self.aggregate(node, members)
            binding = {
                v.name: key[i] for i, v in enumerate(query.group_by) if key[i] is not None
            }
            if query.having is not None:
                try:
                    if not self.truth(
                        self.eval_expr(query.having, binding, self.triples, agg_values)
                    ):
                        continue
                except NaiveError:
                    continue
            projected = dict(binding)
            for expr, name in query.select_items:
                if isinstance(expr, VarRef):
                    continue
                try:
                    projected[name] = to_term(
                        self.eval_expr(expr, binding, self.triples, agg_values)
                    )
                except NaiveError:
                    continue
            out.append(projected)
        return out

    def aggregate(self, node: Aggregate, members: List[dict]):
        if node.func == "count":
            if node.arg is None:
                return len(members)
            n = 0
            for binding in members:
                try:
                    self.eval_expr(node.arg, binding, self.triples)
                    n += 1
                except NaiveError:
                    continue
            return n
        values = []
        for binding in members:
            try:
                values.append(self.eval_expr(node.arg, binding, self.triples))
            except NaiveError:
                continue
        if not values:
            return None
        kinds = set()
        for v in values:
            if isinstance(v, bool):
                kinds.add("other")
            elif isinstance(v, (int, Decimal, float)):
                kinds.add("number")
            elif isinstance(v, datetime):
                kinds.add("datetime")
            elif isinstance(v, str):
                kinds.add("string")
            else:
                kinds.add("other")
        if len(kinds) != 1 or "other" in kinds:
            return None
        return min(values) if node.func == "min" else max(values)


def to_term(value) -> Term:
    from agritrust.terms import boolean, datetime_literal

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
    raise NaiveError(f"to_term {value!r}")


def row_multiset(rows: List[dict], variables: List[str]) -> Dict[tuple, int]:
    counts: Dict[tuple, int] = {}
    for row in rows:
        key = tuple(row.get(v) for v in sorted(variables))
        counts[key] = counts.get(key, 0) + 1
    return counts

"""Recursive-descent parser for the query subset used across the corpus:
prefixed SELECT queries with basic graph patterns, property paths, FILTER
expressions, OPTIONAL, BIND, VALUES, SERVICE, grouping with aggregates,
HAVING, ORDER BY and DISTINCT.
"""
from __future__ import annotations

import re
from typing import List, Optional, Tuple, Union

from ..terms import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    XSD_STRING,
    Iri,
    Literal,
    Term,
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


class QuerySyntaxError(Exception):
    def __init__(self, line: int, col: int, expected: str) -> None:
        super().__init__(f"line {line}, column {col}: {expected}")
        self.line = line
        self.col = col
        self.expected = expected


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>\d+\.\d+[eE][+-]?\d+|\d+\.\d+|\.\d+|\d+[eE][+-]?\d+|\d+)
  | (?P<pname>[A-Za-z_][A-Za-z0-9_\-]*:[A-Za-z0-9_][A-Za-z0-9_\-]*|[A-Za-z_][A-Za-z0-9_\-]*:|:[A-Za-z0-9_][A-Za-z0-9_\-]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>\^\^|&&|\|\||!=|<=|>=|[{}()\[\].,;*/|+\-=<>!@])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind: str, value: str, pos: int) -> None:
        self.kind = kind
        self.value = value
        self.pos = pos

    def __repr__(self) -> str:
        return f"{self.kind}:{self.value}"


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            line = text.count("\n", 0, pos) + 1
            col = pos - text.rfind("\n", 0, pos)
            raise QuerySyntaxError(line, col, f"unexpected character {text[pos]!r}")
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


_KEYWORDS = {
    "PREFIX", "SELECT", "DISTINCT", "WHERE", "FILTER", "OPTIONAL", "BIND",
    "VALUES", "SERVICE", "GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC",
    "AS", "IN", "NOT", "EXISTS", "UNDEF", "TRUE", "FALSE",
}

_AGGREGATES = {"MIN": "min", "MAX": "max", "COUNT": "count"}
_CAST_LOCALS = {"integer", "decimal", "double", "string", "boolean", "dateTime", "date", "duration"}


class _QueryParser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes: dict = {}

    # -- token helpers -----------------------------------------------------

    def peek(self, offset: int = 0) -> _Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, expected: str, tok: Optional[_Token] = None) -> QuerySyntaxError:
        tok = tok or self.peek()
        line = self.text.count("\n", 0, tok.pos) + 1
        col = tok.pos - self.text.rfind("\n", 0, tok.pos)
        return QuerySyntaxError(line, col, expected)

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "name" and tok.value.upper() in words

    def expect_keyword(self, word: str) -> None:
        if not self.at_keyword(word):
            raise self.error(f"expected {word}")
        self.next()

    def expect_punct(self, value: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.value != value:
            raise self.error(f"expected {value!r}")
        return self.next()

    def at_punct(self, *values: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.value in values

    # -- term helpers --------------------------------------------------------

    def resolve_pname(self, token: _Token) -> Iri:
        prefix, _, local = token.value.partition(":")
        if prefix not in self.prefixes:
            raise self.error(f"undeclared prefix '{prefix}:'", token)
        return Iri(self.prefixes[prefix] + local)

    def parse_literal_token(self, token: _Token) -> Literal:
        body = token.value[1:-1]
        body = re.sub(
            r"\\(.)",
            lambda m: {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(m.group(1), m.group(1)),
            body,
        )
        if self.at_punct("^^"):
            self.next()
            dt_tok = self.next()
            if dt_tok.kind == "iri":
                dt = dt_tok.value[1:-1]
            elif dt_tok.kind == "pname":
                dt = self.resolve_pname(dt_tok).value
            else:
                raise self.error("expected datatype IRI", dt_tok)
            return Literal(body, dt)
        if self.at_punct("@"):
            self.next()
            lang_tok = self.next()
            return Literal(body, XSD_STRING, lang_tok.value)
        return Literal(body)

    def parse_number_token(self, token: _Token) -> Literal:
        value = token.value
        if "e" in value or "E" in value:
            return Literal(value, XSD_DOUBLE)
        if "." in value:
            return Literal(value, XSD_DECIMAL)
        return Literal(value, XSD_INTEGER)

    def parse_term_or_var(self) -> Union[Term, Var]:
        tok = self.next()
        if tok.kind == "var":
            return Var(tok.value[1:])
        if tok.kind == "iri":
            return Iri(tok.value[1:-1])
        if tok.kind == "pname":
            return self.resolve_pname(tok)
        if tok.kind == "string":
            return self.parse_literal_token(tok)
        if tok.kind == "number":
            return self.parse_number_token(tok)
        if tok.kind == "name" and tok.value.upper() in ("TRUE", "FALSE"):
            return Literal(tok.value.lower(), XSD_BOOLEAN)
        raise self.error("expected a term or variable", tok)

    # -- query --------------------------------------------------------------

    def parse(self) -> Query:
        while self.at_keyword("PREFIX"):
            self.next()
            name_tok = self.next()
            if name_tok.kind != "pname" or not name_tok.value.endswith(":"):
                raise self.error("expected prefix name ending in ':'", name_tok)
            iri_tok = self.next()
            if iri_tok.kind != "iri":
                raise self.error("expected IRI", iri_tok)
            self.prefixes[name_tok.value[:-1]] = iri_tok.value[1:-1]

        self.expect_keyword("SELECT")
        distinct = False
        if self.at_keyword("DISTINCT"):
            distinct = True
            self.next()
        star = False
        select_items: List[Tuple[Expr, str]] = []
        if self.at_punct("*"):
            star = True
            self.next()
        else:
            while True:
                if self.peek().kind == "var":
                    var = Var(self.next().value[1:])
                    select_items.append((VarRef(var), var.name))
                elif self.at_punct("("):
                    self.next()
                    expr = self.parse_expr()
                    self.expect_keyword("AS")
                    alias_tok = self.next()
                    if alias_tok.kind != "var":
                        raise self.error("expected alias variable", alias_tok)
                    self.expect_punct(")")
                    select_items.append((expr, alias_tok.value[1:]))
                else:
                    break
            if not select_items:
                raise self.error("expected projection")

        if self.at_keyword("WHERE"):
            self.next()
        where = self.parse_group()

        group_by: List[Var] = []
        having: Optional[Expr] = None
        order_by: List[Tuple[Expr, bool]] = []
        while True:
            if self.at_keyword("GROUP"):
                self.next()
                self.expect_keyword("BY")
                while self.peek().kind == "var":
                    group_by.append(Var(self.next().value[1:]))
                if not group_by:
                    raise self.error("expected grouping variables")
            elif self.at_keyword("HAVING"):
                self.next()
                self.expect_punct("(")
                having = self.parse_expr()
                self.expect_punct(")")
            elif self.at_keyword("ORDER"):
                self.next()
                self.expect_keyword("BY")
                while True:
                    desc = False
                    if self.at_keyword("ASC", "DESC"):
                        desc = self.next().value.upper() == "DESC"
                        self.expect_punct("(")
                        expr = self.parse_expr()
                        self.expect_punct(")")
                    elif self.peek().kind == "var":
                        expr = VarRef(Var(self.next().value[1:]))
                    elif self.at_punct("("):
                        self.next()
                        expr = self.parse_expr()
                        self.expect_punct(")")
                    else:
                        break
                    order_by.append((expr, desc))
                if not order_by:
                    raise self.error("expected ordering expression")
            else:
                break

        tok = self.peek()
        if tok.kind != "eof":
            raise self.error(f"unexpected trailing {tok.value!r}", tok)

        query = Query(
            prefixes=dict(self.prefixes),
            select_items=select_items,
            distinct=distinct,
            star=star,
            where=where,
            group_by=group_by,
            having=having,
            order_by=order_by,
        )
        self._check_projection(query)
        return query

    def _check_projection(self, query: Query) -> None:
        aliased = [name for expr, name in query.select_items if not isinstance(expr, VarRef)]
        bare = {n for e, n in query.select_items if isinstance(e, VarRef)}
        if len(set(aliased)) != len(aliased) or any(name in bare for name in aliased):
            raise self.error("duplicate AS alias in projection")
        grouping = (
            bool(query.group_by)
            or any(has_aggregate(e) for e, _ in query.select_items)
            or (query.having is not None and has_aggregate(query.having))
        )
        if grouping:
            allowed = {v.name for v in query.group_by}
            for expr, _ in query.select_items:
                if isinstance(expr, VarRef) and expr.var.name not in allowed:
                    raise self.error(
                        f"variable ?{expr.var.name} projected without aggregation "
                        "must appear in GROUP BY"
                    )

    # -- group patterns -------------------------------------------------------

    def parse_group(self) -> GroupPattern:
        open_tok = self.expect_punct("{")
        group = GroupPattern()
        while not self.at_punct("}"):
            tok = self.peek()
            if tok.kind == "eof":
                raise self.error("unterminated group pattern")
            if self.at_keyword("FILTER"):
                self.next()
                if self.at_keyword("EXISTS", "NOT"):
                    group.elements.append(Filter(self.parse_exists()))
                else:
                    self.expect_punct("(")
                    expr = self.parse_expr()
                    self.expect_punct(")")
                    group.elements.append(Filter(expr))
            elif self.at_keyword("OPTIONAL"):
                self.next()
                group.elements.append(OptionalGroup(self.parse_group()))
            elif self.at_keyword("BIND"):
                self.next()
                self.expect_punct("(")
                expr = self.parse_expr()
                self.expect_keyword("AS")
                var_tok = self.next()
                if var_tok.kind != "var":
                    raise self.error("expected variable after AS", var_tok)
                self.expect_punct(")")
                group.elements.append(Bind(expr, Var(var_tok.value[1:])))
            elif self.at_keyword("VALUES"):
                self.next()
                group.elements.append(self.parse_values())
            elif self.at_keyword("SERVICE"):
                self.next()
                ep_tok = self.next()
                if ep_tok.kind == "iri":
                    endpoint = ep_tok.value[1:-1]
                elif ep_tok.kind == "pname":
                    endpoint = self.resolve_pname(ep_tok).value
                else:
                    raise self.error("expected service endpoint IRI", ep_tok)
                group.elements.append(ServiceClause(endpoint, self.parse_group()))
            else:
                self.parse_triples_block(group)
            if self.at_punct("."):
                self.next()
        close_tok = self.expect_punct("}")
        group.source = self.text[open_tok.pos + 1 : close_tok.pos]
        return group

    def parse_exists(self) -> Exists:
        negated = False
        if self.at_keyword("NOT"):
            self.next()
            negated = True
        self.expect_keyword("EXISTS")
        return Exists(self.parse_group(), negated)

    def parse_values(self) -> ValuesClause:
        vars_: List[Var] = []
        if self.at_punct("("):
            self.next()
            while self.peek().kind == "var":
                vars_.append(Var(self.next().value[1:]))
            self.expect_punct(")")
        elif self.peek().kind == "var":
            vars_.append(Var(self.next().value[1:]))
        else:
            raise self.error("expected VALUES variables")
        rows: List[Tuple[Optional[Term], ...]] = []
        self.expect_punct("{")
        while not self.at_punct("}"):
            if len(vars_) == 1 and not self.at_punct("("):
                rows.append((self.parse_values_term(),))
                continue
            self.expect_punct("(")
            row: List[Optional[Term]] = []
            while not self.at_punct(")"):
                row.append(self.parse_values_term())
            self.expect_punct(")")
            if len(row) != len(vars_):
                raise self.error("VALUES row width mismatch")
            rows.append(tuple(row))
        self.expect_punct("}")
        return ValuesClause(tuple(vars_), tuple(rows))

    def parse_values_term(self) -> Optional[Term]:
        if self.at_keyword("UNDEF"):
            self.next()
            return None
        term = self.parse_term_or_var()
        if isinstance(term, Var):
            raise self.error("variables are not allowed in VALUES data")
        return term

    def parse_triples_block(self, group: GroupPattern) -> None:
        subject = self.parse_term_or_var()
        if isinstance(subject, Literal):
            raise self.error("literal subject")
        while True:
            predicate = self.parse_path_or_var()
            while True:
                obj = self.parse_term_or_var()
                group.elements.append(TriplePattern(subject, predicate, obj))
                if self.at_punct(","):
                    self.next()
                    continue
                break
            if self.at_punct(";"):
                self.next()
                if self.at_punct(".", "}"):
                    return
                continue
            return

    # -- property paths ---------------------------------------------------------

    def parse_path_or_var(self) -> Union[Iri, Var, PathExpr]:
        if self.peek().kind == "var":
            return Var(self.next().value[1:])
        path = self.parse_path_alt()
        if isinstance(path, PathPred):
            return Iri(path.iri)
        return path

    def parse_path_alt(self) -> PathExpr:
        parts = [self.parse_path_seq()]
        while self.at_punct("|"):
            self.next()
            parts.append(self.parse_path_seq())
        return parts[0] if len(parts) == 1 else PathAlt(tuple(parts))

    def parse_path_seq(self) -> PathExpr:
        parts = [self.parse_path_elt()]
        while self.at_punct("/"):
            self.next()
            parts.append(self.parse_path_elt())
        return parts[0] if len(parts) == 1 else PathSeq(tuple(parts))

    def parse_path_elt(self) -> PathExpr:
        if self.at_punct("("):
            self.next()
            path = self.parse_path_alt()
            self.expect_punct(")")
        else:
            tok = self.next()
            if tok.kind == "iri":
                path = PathPred(tok.value[1:-1])
            elif tok.kind == "pname":
                path = PathPred(self.resolve_pname(tok).value)
            elif tok.kind == "name" and tok.value == "a":
                path = PathPred(RDF_TYPE)
            else:
                raise self.error("expected predicate", tok)
        if self.at_punct("*"):
            self.next()
            return PathStar(path)
        return path

    # -- expressions --------------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_punct("||"):
            self.next()
            left = BoolOp("||", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_relational()
        while self.at_punct("&&"):
            self.next()
            left = BoolOp("&&", left, self.parse_relational())
        return left

    def parse_relational(self) -> Expr:
        left = self.parse_additive()
        tok = self.peek()
        if tok.kind == "punct" and tok.value in ("=", "!=", "<", "<=", ">", ">="):
            self.next()
            return Compare(tok.value, left, self.parse_additive())
        if self.at_keyword("IN"):
            self.next()
            return InList(left, self.parse_expr_list(), negated=False)
        if self.at_keyword("NOT") and self.peek(1).kind == "name" and self.peek(1).value.upper() == "IN":
            self.next()
            self.next()
            return InList(left, self.parse_expr_list(), negated=True)
        return left

    def parse_expr_list(self) -> Tuple[Expr, ...]:
        self.expect_punct("(")
        items: List[Expr] = []
        while not self.at_punct(")"):
            items.append(self.parse_expr())
            if self.at_punct(","):
                self.next()
        self.expect_punct(")")
        return tuple(items)

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at_punct("+", "-"):
            op = self.next().value
            left = Arith(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at_punct("*", "/"):
            op = self.next().value
            left = Arith(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_punct("!"):
            self.next()
            return Not(self.parse_unary())
        if self.at_punct("-"):
            self.next()
            return Arith("neg", self.parse_unary())
        if self.at_punct("+"):
            self.next()
            return self.parse_unary()
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == "(":
            self.next()
            expr = self.parse_expr()
            self.expect_punct(")")
            return expr
        if tok.kind == "var":
            self.next()
            return VarRef(Var(tok.value[1:]))
        if tok.kind == "string":
            self.next()
            return Constant(self.parse_literal_token(tok))
        if tok.kind == "number":
            self.next()
            return Constant(self.parse_number_token(tok))
        if tok.kind == "iri":
            self.next()
            return Constant(Iri(tok.value[1:-1]))
        if tok.kind == "pname":
            self.next()
            iri = self.resolve_pname(tok)
            if self.at_punct("("):
                # Datatype cast form, e.g. xsd:integer(expr).
                args = self.parse_call_args()
                return FuncCall(iri.value, args)
            return Constant(iri)
        if tok.kind == "name":
            word = tok.value.upper()
            if word in ("EXISTS", "NOT"):
                return self.parse_exists()
            if word in ("TRUE", "FALSE"):
                self.next()
                return Constant(Literal(word.lower(), XSD_BOOLEAN))
            if word in _AGGREGATES:
                self.next()
                self.expect_punct("(")
                if self.at_punct("*"):
                    self.next()
                    self.expect_punct(")")
                    return Aggregate(_AGGREGATES[word], None)
                arg = self.parse_expr()
                self.expect_punct(")")
                return Aggregate(_AGGREGATES[word], arg)
            self.next()
            args = self.parse_call_args()
            return FuncCall(word.lower(), args)
        raise self.error("expected expression", tok)

    def parse_call_args(self) -> Tuple[Expr, ...]:
        self.expect_punct("(")
        args: List[Expr] = []
        while not self.at_punct(")"):
            args.append(self.parse_expr())
            if self.at_punct(","):
                self.next()
        self.expect_punct(")")
        return tuple(args)


def parse_query(text: str) -> Query:
    """Parse query text; prefixed names are resolved to absolute IRIs."""
    return _QueryParser(text).parse()

"""Turtle subset reader and writer.

Covers the grammar the corpus actually uses: @prefix, prefixed names, the
`a` keyword, `;` and `,` continuation, quoted literals with `^^` datatypes
and language tags, bare integers/decimals/doubles/booleans, blank node
property lists `[ ... ]`, collections `( ... )`, and `#` comments. No @base
re-declaration, no triple-quoted strings.
"""
from __future__ import annotations

import hashlib
import re
from typing import Dict, List, Optional, Tuple
from urllib.parse import urljoin

from .graph import Graph
from .terms import (
    AGT_NS,
    APP_NS,
    DCT_NS,
    GEO_NS,
    OWL_NS,
    PROV_NS,
    QUDT_NS,
    RDF_FIRST,
    RDF_NIL,
    RDF_NS,
    RDF_REST,
    RDF_TYPE,
    RDFS_NS,
    SH_NS,
    SKOS_NS,
    SOSA_NS,
    UNIT_NS,
    XSD,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    XSD_STRING,
    BlankNode,
    Iri,
    Literal,
    Term,
    Triple,
    make_triple,
    term_sort_key,
)

STANDARD_PREFIXES: Dict[str, str] = {
    "rdf": RDF_NS,
    "rdfs": RDFS_NS,
    "owl": OWL_NS,
    "xsd": XSD,
    "prov": PROV_NS,
    "sosa": SOSA_NS,
    "geo": GEO_NS,
    "dct": DCT_NS,
    "skos": SKOS_NS,
    "sh": SH_NS,
    "qudt": QUDT_NS,
    "unit": UNIT_NS,
    "agt": AGT_NS,
    "app": APP_NS,
}


class TurtleSyntaxError(Exception):
    def __init__(self, line: int, column: int, message: str) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class UnknownPrefixError(TurtleSyntaxError):
    def __init__(self, line: int, column: int, prefix: str) -> None:
        super().__init__(line, column, f"unknown prefix '{prefix}:'")
        self.prefix = prefix


_PN_CHARS = re.compile(r"[A-Za-z0-9_\-]")
_INTEGER_RE = re.compile(r"^[+-]?\d+$")
_DECIMAL_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+)$")
_DOUBLE_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+$")

_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", '"': '"', "\\": "\\", "b": "\b", "f": "\f", "'": "'"}


class _Parser:
    def __init__(self, text: str, base: Optional[str]) -> None:
        self.text = text
        self.pos = 0
        self.base = base
        self.prefixes: Dict[str, str] = {}
        self.bnode_labels: Dict[str, BlankNode] = {}
        self.bnode_counter = 0
        self.graph = Graph()

    # -- position helpers -------------------------------------------------

    def _line_col(self, pos: Optional[int] = None) -> Tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        last = self.text.rfind("\n", 0, pos)
        return line, pos - last

    def error(self, message: str, pos: Optional[int] = None) -> TurtleSyntaxError:
        line, col = self._line_col(pos)
        return TurtleSyntaxError(line, col, message)

    def skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "#":
                nl = text.find("\n", self.pos)
                self.pos = n if nl == -1 else nl + 1
            else:
                return

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect(self, token: str) -> None:
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            raise self.error(f"expected {token!r}")
        self.pos += len(token)

    # -- document ----------------------------------------------------------

    def parse(self) -> Graph:
        while not self.at_end():
            if self.text.startswith("@prefix", self.pos):
                self.parse_prefix()
            elif self.text.startswith("@base", self.pos):
                raise self.error("@base is not supported")
            else:
                self.parse_statement()
        return self.graph

    def parse_prefix(self) -> None:
        self.expect("@prefix")
        self.skip_ws()
        start = self.pos
        while self.peek() not in (":", "") and not self.peek().isspace():
            self.pos += 1
        name = self.text[start : self.pos]
        self.expect(":")
        self.skip_ws()
        iri = self.parse_iri_ref()
        self.expect(".")
        self.prefixes[name] = iri.value

    def parse_statement(self) -> None:
        subject = self.parse_subject()
        self.parse_predicate_object_list(subject)
        self.expect(".")

    def parse_predicate_object_list(self, subject: Term) -> None:
        while True:
            predicate = self.parse_predicate()
            while True:
                obj = self.parse_object()
                self.graph.insert(make_triple(subject, predicate, obj))
                self.skip_ws()
                if self.peek() == ",":
                    self.pos += 1
                    continue
                break
            self.skip_ws()
            if self.peek() == ";":
                self.pos += 1
                self.skip_ws()
                # Tolerate trailing ';' before '.' or ']'.
                if self.peek() in (".", "]", ";"):
                    while self.peek() == ";":
                        self.pos += 1
                        self.skip_ws()
                    return
                continue
            return

    # -- terms -------------------------------------------------------------

    def parse_subject(self) -> Term:
        self.skip_ws()
        ch = self.peek()
        if ch == "[":
            return self.parse_bnode_property_list()
        if ch == "(":
            return self.parse_collection()
        term = self.parse_term()
        if isinstance(term, Literal):
            raise self.error("literal may not be a subject")
        return term

    def parse_predicate(self) -> Iri:
        self.skip_ws()
        if self.peek() == "a" and not _PN_CHARS.match(self.text[self.pos + 1 : self.pos + 2] or " "):
            self.pos += 1
            return Iri(RDF_TYPE)
        term = self.parse_term()
        if not isinstance(term, Iri):
            raise self.error("predicate must be an IRI")
        return term

    def parse_object(self) -> Term:
        self.skip_ws()
        ch = self.peek()
        if ch == "[":
            return self.parse_bnode_property_list()
        if ch == "(":
            return self.parse_collection()
        return self.parse_term()

    def fresh_bnode(self) -> BlankNode:
        node = BlankNode(f"b{self.bnode_counter}")
        self.bnode_counter += 1
        return node

    def parse_bnode_property_list(self) -> BlankNode:
        self.expect("[")
        node = self.fresh_bnode()
        self.skip_ws()
        if self.peek() != "]":
            self.parse_predicate_object_list(node)
        self.expect("]")
        return node

    def parse_collection(self) -> Term:
        self.expect("(")
        items: List[Term] = []
        while True:
            self.skip_ws()
            if self.peek() == ")":
                self.pos += 1
                break
            if self.peek() == "":
                raise self.error("unterminated collection")
            items.append(self.parse_object())
        head: Term = Iri(RDF_NIL)
        for item in reversed(items):
            cell = self.fresh_bnode()
            self.graph.insert(make_triple(cell, Iri(RDF_FIRST), item))
            self.graph.insert(make_triple(cell, Iri(RDF_REST), head))
            head = cell
        return head

    def parse_term(self) -> Term:
        self.skip_ws()
        ch = self.peek()
        if ch == "":
            raise self.error("unexpected end of input")
        if ch == "<":
            return self.parse_iri_ref()
        if ch == '"' or ch == "'":
            return self.parse_literal()
        if self.text.startswith("_:", self.pos):
            return self.parse_bnode_label()
        if ch.isdigit() or ch in "+-." and self._looks_numeric():
            return self.parse_numeric()
        if self.text.startswith("true", self.pos) and not self._pn_continues(self.pos + 4):
            self.pos += 4
            return Literal("true", XSD_BOOLEAN)
        if self.text.startswith("false", self.pos) and not self._pn_continues(self.pos + 5):
            self.pos += 5
            return Literal("false", XSD_BOOLEAN)
        return self.parse_prefixed_name()

    def _pn_continues(self, pos: int) -> bool:
        return bool(_PN_CHARS.match(self.text[pos : pos + 1] or " "))

    def _looks_numeric(self) -> bool:
        return bool(re.match(r"[+-]?(\d|\.\d)", self.text[self.pos : self.pos + 3]))

    def parse_iri_ref(self) -> Iri:
        self.expect("<")
        end = self.text.find(">", self.pos)
        if end == -1:
            raise self.error("unterminated IRI")
        value = self.text[self.pos : end]
        self.pos = end + 1
        if self.base and ":" not in value.split("/")[0]:
            value = urljoin(self.base, value)
        try:
            return Iri(value)
        except ValueError as exc:
            raise self.error(str(exc))

    def parse_bnode_label(self) -> BlankNode:
        self.pos += 2
        start = self.pos
        while self._pn_continues(self.pos) or (
            self.peek() == "." and self._pn_continues(self.pos + 1)
        ):
            self.pos += 1
        label = self.text[start : self.pos]
        if not label:
            raise self.error("empty blank node label")
        if label not in self.bnode_labels:
            self.bnode_labels[label] = self.fresh_bnode()
        return self.bnode_labels[label]

    def parse_numeric(self) -> Literal:
        start = self.pos
        while self.peek() and self.peek() in "+-0123456789.eE":
            # A dot not followed by a digit or exponent ends the number
            # (it is the statement terminator).
            if self.peek() == ".":
                nxt = self.text[self.pos + 1 : self.pos + 2]
                if not nxt or nxt not in "0123456789eE":
                    break
            self.pos += 1
        token = self.text[start : self.pos]
        if _INTEGER_RE.match(token):
            return Literal(token, XSD_INTEGER)
        if _DECIMAL_RE.match(token):
            return Literal(token, XSD_DECIMAL)
        if _DOUBLE_RE.match(token):
            return Literal(token, XSD_DOUBLE)
        raise self.error(f"malformed numeric literal {token!r}", start)

    def parse_string(self) -> str:
        quote = self.peek()
        self.pos += 1
        out: List[str] = []
        while True:
            ch = self.peek()
            if ch == "":
                raise self.error("unterminated string")
            if ch == quote:
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                esc = self.text[self.pos + 1 : self.pos + 2]
                if esc in _ESCAPES:
                    out.append(_ESCAPES[esc])
                    self.pos += 2
                    continue
                if esc == "u":
                    hexcode = self.text[self.pos + 2 : self.pos + 6]
                    out.append(chr(int(hexcode, 16)))
                    self.pos += 6
                    continue
                if esc == "U":
                    hexcode = self.text[self.pos + 2 : self.pos + 10]
                    out.append(chr(int(hexcode, 16)))
                    self.pos += 10
                    continue
                raise self.error(f"bad escape \\{esc}")
            if ch == "\n":
                raise self.error("newline in string")
            out.append(ch)
            self.pos += 1

    def parse_literal(self) -> Literal:
        value = self.parse_string()
        if self.text.startswith("^^", self.pos):
            self.pos += 2
            dt = self.parse_term()
            if not isinstance(dt, Iri):
                raise self.error("datatype must be an IRI")
            return Literal(value, dt.value)
        if self.peek() == "@":
            self.pos += 1
            start = self.pos
            while self.peek() and (self.peek().isalnum() or self.peek() == "-"):
                self.pos += 1
            lang = self.text[start : self.pos]
            if not lang:
                raise self.error("empty language tag")
            return Literal(value, XSD_STRING, lang)
        return Literal(value)

    def parse_prefixed_name(self) -> Iri:
        start = self.pos
        while self._pn_continues(self.pos) or (
            self.peek() == "." and self._pn_continues(self.pos + 1)
        ):
            self.pos += 1
        prefix = self.text[start : self.pos]
        if self.peek() != ":":
            raise self.error(f"expected a term, found {self.text[start:start+20]!r}", start)
        self.pos += 1
        local_start = self.pos
        while self._pn_continues(self.pos) or (
            self.peek() == "." and self._pn_continues(self.pos + 1)
        ):
            self.pos += 1
        local = self.text[local_start : self.pos]
        if prefix not in self.prefixes:
            line, col = self._line_col(start)
            raise UnknownPrefixError(line, col, prefix)
        return Iri(self.prefixes[prefix] + local)


def parse_turtle(text: str, base: Optional[str] = None) -> Graph:
    """Parse a Turtle-subset document into a fresh graph.

    Blank nodes receive document-scoped ids. Prefixes must be declared
    before use (UnknownPrefixError otherwise).
    """
    return _Parser(text, base).parse()


# -- serialization ---------------------------------------------------------

# Digit-leading locals stay in <full> form: the reader cannot distinguish
# them from numeric literals.
_LOCAL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape_string(value: str) -> str:
    return "".join(_STRING_ESCAPES.get(ch, ch) for ch in value)


def _abbreviate(iri: str, prefixes: Dict[str, str]) -> Optional[str]:
    best: Optional[Tuple[str, str]] = None
    for name, ns in prefixes.items():
        if iri.startswith(ns):
            local = iri[len(ns) :]
            if _LOCAL_RE.match(local) and (best is None or len(ns) > len(prefixes[best[0]])):
                best = (name, local)
    if best is None:
        return None
    return f"{best[0]}:{best[1]}"


def _term_text(term: Term, prefixes: Dict[str, str]) -> str:
    if isinstance(term, Iri):
        short = _abbreviate(term.value, prefixes)
        return short if short is not None else f"<{term.value}>"
    if isinstance(term, BlankNode):
        return f"_:{term.id}"
    body = f'"{_escape_string(term.lexical)}"'
    if term.lang:
        return f"{body}@{term.lang}"
    if term.datatype != XSD_STRING:
        dt = _abbreviate(term.datatype, prefixes) or f"<{term.datatype}>"
        return f"{body}^^{dt}"
    return body


def serialize_turtle(graph: Graph, prefixes: Optional[Dict[str, str]] = None) -> str:
    """Deterministic one-statement-per-line Turtle.

    Triples are sorted by subject, predicate, object lexical forms so equal
    graphs (with equal blank node ids) produce byte-identical documents.
    """
    table = dict(STANDARD_PREFIXES)
    if prefixes:
        table.update(prefixes)
    lines = [f"@prefix {name}: <{ns}> ." for name, ns in sorted(table.items())]
    lines.append("")
    for t in sorted(graph, key=lambda t: (term_sort_key(t.subject), t.predicate.value, term_sort_key(t.object))):
        lines.append(
            f"{_term_text(t.subject, table)} {_term_text(t.predicate, table)} {_term_text(t.object, table)} ."
        )
    return "\n".join(lines) + "\n"


# -- canonical entity bytes -------------------------------------------------


def entity_subgraph(graph: Graph, root: Term) -> Graph:
    """Triples rooted at `root`, following blank node objects recursively."""
    sub = Graph()
    stack = [root]
    seen = set()
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        for t in graph.match(node, None, None):
            sub.insert(t)
            if isinstance(t.object, BlankNode):
                stack.append(t.object)
    return sub


def _canonical_bnode_order(graph: Graph) -> Dict[BlankNode, BlankNode]:
    from .graph import _bnode_signature

    sig = _bnode_signature(graph)
    ordered = sorted(sig, key=lambda b: (sig[b], b.id))
    return {b: BlankNode(f"c{i}") for i, b in enumerate(ordered)}


def canonical_bytes(graph: Graph, root: Term) -> bytes:
    """Reproducible byte form of an entity: its subgraph, canonically
    relabeled and serialized. Used for ledger hashing and signing."""
    sub = entity_subgraph(graph, root)
    mapping = _canonical_bnode_order(sub)
    if mapping:
        relabeled = Graph()
        for t in sub:
            s = mapping.get(t.subject, t.subject)
            o = mapping.get(t.object, t.object)
            relabeled.insert(Triple(s, t.predicate, o))
        sub = relabeled
    return serialize_turtle(sub).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()

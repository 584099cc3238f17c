"""RDF term model: IRIs, blank nodes, literals, and triples.

Literals always carry a datatype IRI; plain literals default to xsd:string.
Value-space interpretation (numbers, dateTimes, durations) lives here so the
query engine and validator share one conversion path.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import NamedTuple, Optional, Union

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_BOOLEAN = XSD + "boolean"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_DATETIME = XSD + "dateTime"
XSD_DATE = XSD + "date"
XSD_DURATION = XSD + "duration"

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDF_TYPE = RDF_NS + "type"
RDF_FIRST = RDF_NS + "first"
RDF_REST = RDF_NS + "rest"
RDF_NIL = RDF_NS + "nil"

RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
OWL_NS = "http://www.w3.org/2002/07/owl#"
SH_NS = "http://www.w3.org/ns/shacl#"
PROV_NS = "http://www.w3.org/ns/prov#"
SOSA_NS = "http://www.w3.org/ns/sosa/"
GEO_NS = "http://www.opengis.net/ont/geosparql#"
DCT_NS = "http://purl.org/dc/terms/"
SKOS_NS = "http://www.w3.org/2004/02/skos/core#"
QUDT_NS = "http://qudt.org/schema/qudt/"
UNIT_NS = "http://qudt.org/vocab/unit/"

AGT_NS = "http://example.org/ns/agritrustcore#"
APP_NS = "http://example.org/ns/application#"

NUMERIC_DATATYPES = {XSD_INTEGER, XSD_DECIMAL, XSD_DOUBLE}

_WS_RE = re.compile(r"\s")
_DURATION_RE = re.compile(
    r"^(?P<sign>-)?P(?:(?P<weeks>\d+)W)?(?:(?P<days>\d+)D)?"
    r"(?:T(?:(?P<hours>\d+)H)?(?:(?P<minutes>\d+)M)?(?:(?P<seconds>\d+(?:\.\d+)?)S)?)?$"
)


@dataclass(frozen=True, slots=True)
class Iri:
    value: str

    def __post_init__(self) -> None:
        if not self.value or _WS_RE.search(self.value):
            raise ValueError(f"invalid IRI: {self.value!r}")

    def __repr__(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True, slots=True)
class BlankNode:
    id: str

    def __repr__(self) -> str:
        return f"_:{self.id}"


@dataclass(frozen=True, slots=True)
class Literal:
    lexical: str
    datatype: str = XSD_STRING
    lang: Optional[str] = None

    def __repr__(self) -> str:
        if self.lang:
            return f'"{self.lexical}"@{self.lang}'
        if self.datatype != XSD_STRING:
            return f'"{self.lexical}"^^<{self.datatype}>'
        return f'"{self.lexical}"'


Term = Union[Iri, BlankNode, Literal]


class Triple(NamedTuple):
    subject: Term
    predicate: Iri
    object: Term


def make_triple(subject: Term, predicate: Term, object: Term) -> Triple:
    if not isinstance(predicate, Iri):
        raise ValueError(f"triple predicate must be an IRI, got {predicate!r}")
    if isinstance(subject, Literal):
        raise ValueError("triple subject may not be a literal")
    return Triple(subject, predicate, object)


def string(value: str) -> Literal:
    return Literal(value)


def boolean(value: bool) -> Literal:
    return Literal("true" if value else "false", XSD_BOOLEAN)


def integer(value: int) -> Literal:
    return Literal(str(value), XSD_INTEGER)


def decimal(value) -> Literal:
    return Literal(str(value), XSD_DECIMAL)


def datetime_literal(value: datetime) -> Literal:
    return Literal(format_datetime(value), XSD_DATETIME)


def parse_datetime(lexical: str) -> datetime:
    """Parse an xsd:dateTime (or xsd:date) lexical form to an aware datetime."""
    text = lexical.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    value = datetime.fromisoformat(text)
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value


def format_datetime(value: datetime) -> str:
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    value = value.astimezone(timezone.utc)
    if value.microsecond:
        return value.strftime("%Y-%m-%dT%H:%M:%S.%f").rstrip("0") + "Z"
    return value.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_duration_seconds(lexical: str) -> Decimal:
    """Convert a day/time duration (PnW/PnD/TnHnMnS) to seconds.

    Year/month components are rejected: they have no fixed length in seconds.
    """
    m = _DURATION_RE.match(lexical.strip())
    if not m or lexical.strip() in ("P", "-P"):
        raise ValueError(f"unsupported duration: {lexical!r}")
    parts = m.groupdict()
    total = Decimal(0)
    total += Decimal(parts["weeks"] or 0) * 7 * 86400
    total += Decimal(parts["days"] or 0) * 86400
    total += Decimal(parts["hours"] or 0) * 3600
    total += Decimal(parts["minutes"] or 0) * 60
    total += Decimal(parts["seconds"] or 0)
    if parts["sign"]:
        total = -total
    return total


def literal_value(lit: Literal):
    """Map a literal to its value space.

    Returns int/Decimal/float for numerics, bool, aware datetime for
    dateTime/date, Decimal seconds for durations, and the lexical form for
    everything else. Raises ValueError on malformed lexical forms.
    """
    dt = lit.datatype
    try:
        if dt == XSD_INTEGER:
            return int(lit.lexical)
        if dt == XSD_DECIMAL:
            return Decimal(lit.lexical)
        if dt == XSD_DOUBLE:
            return float(lit.lexical)
        if dt == XSD_BOOLEAN:
            if lit.lexical in ("true", "1"):
                return True
            if lit.lexical in ("false", "0"):
                return False
            raise ValueError(lit.lexical)
        if dt == XSD_DATETIME:
            return parse_datetime(lit.lexical)
        if dt == XSD_DATE:
            d = date.fromisoformat(lit.lexical)
            return datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
        if dt == XSD_DURATION:
            return parse_duration_seconds(lit.lexical)
    except (ValueError, InvalidOperation) as exc:
        raise ValueError(f"malformed {dt} literal {lit.lexical!r}") from exc
    return lit.lexical


def term_sort_key(term: Term) -> tuple:
    """Total order over terms used for deterministic serialization."""
    if isinstance(term, Iri):
        return (0, term.value, "", "")
    if isinstance(term, BlankNode):
        return (1, term.id, "", "")
    return (2, term.lexical, term.datatype, term.lang or "")

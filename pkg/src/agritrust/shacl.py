"""SHACL-subset validation: sh:targetClass, sh:path, sh:class, sh:datatype,
sh:minCount, sh:maxCount — exactly the constructs the core shapes use.

sh:class is satisfied by the declared type or any registered subtype, so
platform extensions keep core shape conformance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .graph import Graph
from .ontology import OntologyRegistry, UnknownTerm
from .terms import RDF_TYPE, SH_NS, Iri, Literal, Term

SH_NODE_SHAPE = SH_NS + "NodeShape"
SH_TARGET_CLASS = SH_NS + "targetClass"
SH_PROPERTY = SH_NS + "property"
SH_PATH = SH_NS + "path"
SH_CLASS = SH_NS + "class"
SH_DATATYPE = SH_NS + "datatype"
SH_MIN_COUNT = SH_NS + "minCount"
SH_MAX_COUNT = SH_NS + "maxCount"


class MalformedShape(Exception):
    def __init__(self, iri: str, reason: str) -> None:
        super().__init__(f"{iri}: {reason}")
        self.iri = iri
        self.reason = reason


@dataclass
class PropertyConstraint:
    path: str
    expected_class: Optional[str] = None
    expected_datatype: Optional[str] = None
    min_count: Optional[int] = None
    max_count: Optional[int] = None


@dataclass
class NodeShape:
    iri: str
    target_class: str
    constraints: List[PropertyConstraint] = field(default_factory=list)


@dataclass
class Violation:
    focus_node: Term
    shape_iri: str
    path: str
    constraint_kind: str  # minCount | maxCount | class | datatype
    message: str


@dataclass
class ValidationReport:
    conforms: bool
    violations: List[Violation]

    def lines(self) -> List[str]:
        return [
            f"{v.focus_node!r} {v.shape_iri} {v.path} {v.constraint_kind}"
            for v in self.violations
        ]


def _int_of(term: Optional[Term]) -> Optional[int]:
    if term is None:
        return None
    if isinstance(term, Literal):
        return int(term.lexical)
    raise ValueError(f"expected integer literal, got {term!r}")


def extract_shapes(ontology_graph: Graph) -> List[NodeShape]:
    """Pull every sh:NodeShape with its property constraints."""
    shapes: List[NodeShape] = []
    for node in sorted(
        ontology_graph.subjects(Iri(RDF_TYPE), Iri(SH_NODE_SHAPE)),
        key=lambda t: t.value if isinstance(t, Iri) else "",
    ):
        if not isinstance(node, Iri):
            continue
        target = ontology_graph.object(node, Iri(SH_TARGET_CLASS))
        if not isinstance(target, Iri):
            raise MalformedShape(node.value, "missing sh:targetClass")
        constraints: List[PropertyConstraint] = []
        for prop_node in ontology_graph.objects(node, Iri(SH_PROPERTY)):
            path = ontology_graph.object(prop_node, Iri(SH_PATH))
            if not isinstance(path, Iri):
                raise MalformedShape(node.value, "property constraint without sh:path")
            cls = ontology_graph.object(prop_node, Iri(SH_CLASS))
            dt = ontology_graph.object(prop_node, Iri(SH_DATATYPE))
            try:
                min_count = _int_of(ontology_graph.object(prop_node, Iri(SH_MIN_COUNT)))
                max_count = _int_of(ontology_graph.object(prop_node, Iri(SH_MAX_COUNT)))
            except ValueError as exc:
                raise MalformedShape(node.value, str(exc))
            if min_count is not None and max_count is not None and min_count > max_count:
                raise MalformedShape(node.value, "minCount exceeds maxCount")
            constraints.append(
                PropertyConstraint(
                    path=path.value,
                    expected_class=cls.value if isinstance(cls, Iri) else None,
                    expected_datatype=dt.value if isinstance(dt, Iri) else None,
                    min_count=min_count,
                    max_count=max_count,
                )
            )
        constraints.sort(key=lambda c: c.path)
        shapes.append(NodeShape(iri=node.value, target_class=target.value, constraints=constraints))
    return shapes


def _value_is_class(value: Term, expected: str, data: Graph, registry: OntologyRegistry) -> bool:
    if isinstance(value, Literal):
        return False
    for t in data.match(value, Iri(RDF_TYPE), None):
        if not isinstance(t.object, Iri):
            continue
        declared = t.object.value
        if declared == expected:
            return True
        try:
            if registry.is_subclass(declared, expected):
                return True
        except UnknownTerm:
            continue
    return False


def validate(
    data: Graph,
    shapes: Sequence[NodeShape],
    registry: OntologyRegistry,
) -> ValidationReport:
    """Evaluate every shape against every node typed with (a subtype of) its
    target class. Validation failures are data, never exceptions."""
    violations: List[Violation] = []
    for shape in shapes:
        try:
            targets = registry.instances_of(shape.target_class, data)
        except UnknownTerm:
            targets = {t.subject for t in data.match(None, Iri(RDF_TYPE), Iri(shape.target_class))}
        for focus in sorted(targets, key=repr):
            for c in shape.constraints:
                values = list(dict.fromkeys(data.objects(focus, Iri(c.path))))
                n = len(values)
                if c.min_count is not None and n < c.min_count:
                    violations.append(
                        Violation(focus, shape.iri, c.path, "minCount",
                                  f"found {n} values, need at least {c.min_count}")
                    )
                if c.max_count is not None and n > c.max_count:
                    violations.append(
                        Violation(focus, shape.iri, c.path, "maxCount",
                                  f"found {n} values, allowed at most {c.max_count}")
                    )
                for value in values:
                    if c.expected_class and not _value_is_class(value, c.expected_class, data, registry):
                        violations.append(
                            Violation(focus, shape.iri, c.path, "class",
                                      f"{value!r} is not a {c.expected_class}")
                        )
                    if c.expected_datatype:
                        if not isinstance(value, Literal) or value.datatype != c.expected_datatype:
                            violations.append(
                                Violation(focus, shape.iri, c.path, "datatype",
                                          f"{value!r} is not a {c.expected_datatype} literal")
                            )
    return ValidationReport(conforms=not violations, violations=violations)

"""Ontology registry: loads the core vocabulary, serves class/property
metadata, computes subclass closures, and accepts platform extensions.

Inference is deliberately limited to rdfs:subClassOf closure; every query in
the corpus is answerable with type closure plus explicit triples.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import Dict, List, Optional, Set, Union

from .graph import Graph
from .terms import (
    OWL_NS,
    RDF_FIRST,
    RDF_NIL,
    RDF_REST,
    RDF_TYPE,
    RDFS_NS,
    BlankNode,
    Iri,
    Literal,
    Term,
)
from .turtle import parse_turtle

OWL_ONTOLOGY = OWL_NS + "Ontology"
OWL_CLASS = OWL_NS + "Class"
OWL_OBJECT_PROPERTY = OWL_NS + "ObjectProperty"
OWL_DATATYPE_PROPERTY = OWL_NS + "DatatypeProperty"
OWL_VERSION_INFO = OWL_NS + "versionInfo"
OWL_UNION_OF = OWL_NS + "unionOf"
RDFS_SUBCLASS_OF = RDFS_NS + "subClassOf"
RDFS_LABEL = RDFS_NS + "label"
RDFS_DOMAIN = RDFS_NS + "domain"
RDFS_RANGE = RDFS_NS + "range"

_SEMVER_RE = re.compile(r"^\d+\.\d+\.\d+$")

BUILTIN_EXTENSIONS = ("contract_terms", "traceability_terms")


class OntologyError(Exception):
    pass


class MissingOntologyDeclaration(OntologyError):
    pass


class DuplicateVersion(OntologyError):
    pass


class MigrationError(OntologyError):
    pass


class OrphanClass(OntologyError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"extension class {iri} does not reach a core class")
        self.iri = iri


class CoreRedefinition(OntologyError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"extension redefines core term {iri}")
        self.iri = iri


class UnknownTerm(OntologyError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"unknown term {iri}")
        self.iri = iri


@dataclass
class ClassDef:
    iri: str
    direct_superclasses: Set[str] = field(default_factory=set)
    label: str = ""


@dataclass
class PropertyDef:
    iri: str
    kind: str  # "object" | "datatype"
    domain: Set[str] = field(default_factory=set)
    range: Set[str] = field(default_factory=set)
    label: str = ""


@dataclass
class OntologyVersion:
    version: str
    graph: Graph
    loaded_at: datetime


@dataclass
class ExtensionReport:
    new_classes: List[str]
    new_properties: List[str]


def builtin_text(name: str) -> str:
    """Read one of the packaged .ttl documents by stem name."""
    return resources.files("agritrust.data").joinpath(f"{name}.ttl").read_text("utf-8")


def core_ontology_text() -> str:
    return builtin_text("core_ontology")


def rdf_list(graph: Graph, head: Term) -> List[Term]:
    items: List[Term] = []
    seen = set()
    while isinstance(head, (Iri, BlankNode)) and not (isinstance(head, Iri) and head.value == RDF_NIL):
        if head in seen:
            raise OntologyError("cyclic rdf list")
        seen.add(head)
        first = graph.object(head, Iri(RDF_FIRST))
        if first is None:
            break
        items.append(first)
        head = graph.object(head, Iri(RDF_REST)) or Iri(RDF_NIL)
    return items


def _expand_class_expr(graph: Graph, node: Term) -> Set[str]:
    """An IRI names itself; a blank node with owl:unionOf expands to members."""
    if isinstance(node, Iri):
        return {node.value}
    if isinstance(node, BlankNode):
        union = graph.object(node, Iri(OWL_UNION_OF))
        if union is not None:
            return {m.value for m in rdf_list(graph, union) if isinstance(m, Iri)}
    return set()


def _extract_classes(graph: Graph) -> Dict[str, ClassDef]:
    out: Dict[str, ClassDef] = {}
    for subj in graph.subjects(Iri(RDF_TYPE), Iri(OWL_CLASS)):
        if not isinstance(subj, Iri):
            continue
        supers = {
            o.value
            for o in graph.objects(subj, Iri(RDFS_SUBCLASS_OF))
            if isinstance(o, Iri)
        }
        label = graph.object(subj, Iri(RDFS_LABEL))
        out[subj.value] = ClassDef(
            iri=subj.value,
            direct_superclasses=supers,
            label=label.lexical if isinstance(label, Literal) else "",
        )
    return out


def _extract_properties(graph: Graph) -> Dict[str, PropertyDef]:
    out: Dict[str, PropertyDef] = {}
    for kind_iri, kind in ((OWL_OBJECT_PROPERTY, "object"), (OWL_DATATYPE_PROPERTY, "datatype")):
        for subj in graph.subjects(Iri(RDF_TYPE), Iri(kind_iri)):
            if not isinstance(subj, Iri):
                continue
            domain: Set[str] = set()
            for d in graph.objects(subj, Iri(RDFS_DOMAIN)):
                domain |= _expand_class_expr(graph, d)
            rng: Set[str] = set()
            for r in graph.objects(subj, Iri(RDFS_RANGE)):
                rng |= _expand_class_expr(graph, r)
            label = graph.object(subj, Iri(RDFS_LABEL))
            out[subj.value] = PropertyDef(
                iri=subj.value,
                kind=kind,
                domain=domain,
                range=rng,
                label=label.lexical if isinstance(label, Literal) else "",
            )
    return out


class OntologyRegistry:
    """Read-mostly term registry; registrations serialize through one lock."""

    def __init__(self) -> None:
        self.core: Optional[OntologyVersion] = None
        self.classes: Dict[str, ClassDef] = {}
        self.properties: Dict[str, PropertyDef] = {}
        self.core_terms: Set[str] = set()
        self._extension_graphs: List[Graph] = []
        self._merged = Graph()
        self._write_lock = threading.Lock()

    # -- loading -----------------------------------------------------------

    def load_core(self, source: Union[str, Graph], now: Optional[datetime] = None) -> OntologyVersion:
        graph = parse_turtle(source) if isinstance(source, str) else source
        decls = graph.subjects(Iri(RDF_TYPE), Iri(OWL_ONTOLOGY))
        if not decls:
            raise MissingOntologyDeclaration("document declares no owl:Ontology")
        if len(decls) > 1:
            raise OntologyError("document declares more than one owl:Ontology")
        version_term = graph.object(decls[0], Iri(OWL_VERSION_INFO))
        version = version_term.lexical if isinstance(version_term, Literal) else ""
        if not _SEMVER_RE.match(version):
            raise OntologyError(f"owl:versionInfo {version!r} is not MAJOR.MINOR.PATCH")

        with self._write_lock:
            if self.core is not None and self.core.version == version:
                raise DuplicateVersion(version)
            classes = _extract_classes(graph)
            properties = _extract_properties(graph)
            if self.core is not None:
                new_terms = set(classes) | set(properties)
                missing = sorted(self.core_terms - new_terms)
                if missing:
                    raise MigrationError(
                        f"new core version drops terms still in use: {', '.join(missing)}"
                    )
            self.core = OntologyVersion(version, graph, now or datetime.now(timezone.utc))
            self.core_terms = set(classes) | set(properties)
            self.classes = classes
            self.properties = properties
            self._merged = graph.copy()
            self._check_acyclic()
            extensions = self._extension_graphs
            self._extension_graphs = []
            for ext in extensions:
                self._register_extension_locked(ext)
        return self.core

    def register_extension(self, source: Union[str, Graph]) -> ExtensionReport:
        graph = parse_turtle(source) if isinstance(source, str) else source
        with self._write_lock:
            return self._register_extension_locked(graph)

    def _register_extension_locked(self, graph: Graph) -> ExtensionReport:
        if self.core is None:
            raise OntologyError("no core ontology loaded")
        ext_classes = _extract_classes(graph)
        ext_properties = _extract_properties(graph)

        for iri in list(ext_classes) + list(ext_properties):
            if iri in self.core_terms:
                raise CoreRedefinition(iri)

        # Reachability check runs over the merged edge set so extension
        # classes may subclass one another.
        merged_edges: Dict[str, Set[str]] = {
            iri: set(cd.direct_superclasses) for iri, cd in self.classes.items()
        }
        for iri, cd in ext_classes.items():
            merged_edges.setdefault(iri, set()).update(cd.direct_superclasses)
        core_classes = {iri for iri in self.core_terms if iri in self.classes}
        for iri in ext_classes:
            if not self._reaches(iri, core_classes, merged_edges):
                raise OrphanClass(iri)

        known_classes = set(merged_edges) | {
            sup for supers in merged_edges.values() for sup in supers
        }
        for iri, pd in ext_properties.items():
            for d in pd.domain:
                if d not in known_classes:
                    raise OntologyError(f"property {iri} domain {d} is not a known class")
            if pd.kind == "object":
                for r in pd.range:
                    if r not in known_classes:
                        raise OntologyError(f"property {iri} range {r} is not a known class")

        new_classes = sorted(set(ext_classes) - set(self.classes))
        new_properties = sorted(set(ext_properties) - set(self.properties))
        for iri, cd in ext_classes.items():
            if iri in self.classes:
                self.classes[iri].direct_superclasses |= cd.direct_superclasses
            else:
                self.classes[iri] = cd
        self.properties.update(
            {iri: pd for iri, pd in ext_properties.items() if iri not in self.properties}
        )
        self._merged.update(graph)
        self._extension_graphs.append(graph)
        self._check_acyclic()
        return ExtensionReport(new_classes=new_classes, new_properties=new_properties)

    @staticmethod
    def _reaches(start: str, targets: Set[str], edges: Dict[str, Set[str]]) -> bool:
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            for sup in edges.get(node, ()):
                if sup in targets:
                    return True
                stack.append(sup)
        return False

    def _check_acyclic(self) -> None:
        state: Dict[str, int] = {}

        def visit(node: str, trail: List[str]) -> None:
            state[node] = 1
            for sup in self.classes.get(node, ClassDef(node)).direct_superclasses:
                if sup == node:
                    continue
                if state.get(sup) == 1:
                    raise OntologyError(f"subclass cycle through {sup}: {' -> '.join(trail + [sup])}")
                if sup not in state:
                    visit(sup, trail + [sup])
            state[node] = 2

        for iri in list(self.classes):
            if iri not in state:
                visit(iri, [iri])

    # -- queries -----------------------------------------------------------

    def _known(self, iri: str) -> bool:
        if iri in self.classes:
            return True
        return any(iri in cd.direct_superclasses for cd in self.classes.values())

    def subclass_closure(self, iri: str) -> Set[str]:
        """Reflexive-transitive superclass set of `iri` (BFS over edges)."""
        if not self._known(iri):
            raise UnknownTerm(iri)
        closure = {iri}
        frontier = [iri]
        while frontier:
            node = frontier.pop()
            for sup in self.classes.get(node, ClassDef(node)).direct_superclasses:
                if sup not in closure:
                    closure.add(sup)
                    frontier.append(sup)
        return closure

    def is_subclass(self, a: str, b: str) -> bool:
        if not self._known(b):
            raise UnknownTerm(b)
        return b in self.subclass_closure(a)

    def subclasses_of(self, iri: str) -> Set[str]:
        """All registered classes whose closure contains `iri` (incl. itself)."""
        if not self._known(iri):
            raise UnknownTerm(iri)
        return {c for c in self.classes if iri in self.subclass_closure(c)} | {iri}

    def instances_of(self, class_iri: str, data: Graph) -> Set[Term]:
        nodes: Set[Term] = set()
        for sub in self.subclasses_of(class_iri):
            for t in data.match(None, Iri(RDF_TYPE), Iri(sub)):
                nodes.add(t.subject)
        return nodes

    def ontology_graph(self) -> Graph:
        """Core plus registered extensions, as one graph."""
        return self._merged

    def version(self) -> str:
        return self.core.version if self.core else ""

    def dump_terms(self) -> List[str]:
        """One line per term: iri, kind, supers/domain->range."""
        lines = []
        for iri in sorted(self.classes):
            supers = ",".join(sorted(self.classes[iri].direct_superclasses))
            lines.append(f"{iri}\tclass\t{supers}")
        for iri in sorted(self.properties):
            pd = self.properties[iri]
            detail = ",".join(sorted(pd.domain)) + "->" + ",".join(sorted(pd.range))
            lines.append(f"{iri}\t{pd.kind}-property\t{detail}")
        return lines


def default_registry(extra_extensions: List[str] = ()) -> OntologyRegistry:
    """Registry preloaded with the core ontology and built-in extensions."""
    registry = OntologyRegistry()
    registry.load_core(core_ontology_text())
    for name in BUILTIN_EXTENSIONS:
        registry.register_extension(builtin_text(name))
    for text in extra_extensions:
        registry.register_extension(text)
    return registry

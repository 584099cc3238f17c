"""Federated semantic governance engine for agricultural traceability:
an RDF store with a Turtle-subset reader/writer, a query engine with
property paths and federation, SHACL-subset validation, machine-readable
data contracts with audit logging, simulated dual-layer ledgers, asset
tokenization with offline edge capture, and multi-node platform services.
"""

from .graph import Dataset, Graph, isomorphic
from .ontology import OntologyRegistry, default_registry
from .query import ResultSet, evaluate, parse_query
from .shacl import extract_shapes, validate
from .terms import BlankNode, Iri, Literal, Triple
from .turtle import parse_turtle, serialize_turtle

__version__ = "0.1.0"

__all__ = [
    "BlankNode",
    "Dataset",
    "Graph",
    "Iri",
    "Literal",
    "OntologyRegistry",
    "ResultSet",
    "Triple",
    "default_registry",
    "evaluate",
    "extract_shapes",
    "isomorphic",
    "parse_query",
    "parse_turtle",
    "serialize_turtle",
    "validate",
    "__version__",
]

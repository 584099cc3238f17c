"""Registry behavior: core loading, extensions, closures, instance lookup."""
import numpy as np
import pytest

from agritrust.graph import Graph
from agritrust.ontology import (
    CoreRedefinition,
    DuplicateVersion,
    MigrationError,
    MissingOntologyDeclaration,
    OntologyError,
    OntologyRegistry,
    OrphanClass,
    UnknownTerm,
    builtin_text,
    core_ontology_text,
    default_registry,
)
from agritrust.terms import Iri
from agritrust.turtle import parse_turtle

from conftest import AGT, APP

PROV_ACTIVITY = "http://www.w3.org/ns/prov#Activity"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


def fresh_core() -> OntologyRegistry:
    reg = OntologyRegistry()
    reg.load_core(core_ontology_text())
    return reg


def test_core_load_counts_and_version():
    reg = fresh_core()
    assert reg.version() == "1.0.0"
    assert len(reg.classes) >= 18
    assert len(reg.properties) >= 25


def test_union_domains_expand():
    reg = fresh_core()
    domain = reg.properties[AGT + "registeredOnBlockchain"].domain
    assert domain == {AGT + "Token", AGT + "Certificate", AGT + "DataContract"}


def test_missing_ontology_declaration():
    with pytest.raises(MissingOntologyDeclaration):
        OntologyRegistry().load_core("@prefix ex: <http://e.test/> .\nex:a ex:b ex:c .")


def test_duplicate_version_rejected():
    reg = fresh_core()
    with pytest.raises(DuplicateVersion):
        reg.load_core(core_ontology_text())


def test_version_bump_requires_all_prior_terms():
    reg = fresh_core()
    shrunken = (
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        ':Core a owl:Ontology ; owl:versionInfo "2.0.0" .\n'
        ":Token a owl:Class .\n"
    )
    with pytest.raises(MigrationError):
        reg.load_core(shrunken)


def test_extension_registers_agrochem_subclass():
    reg = default_registry()
    report = reg.register_extension(builtin_text("agrochem_extension"))
    assert APP + "AgrochemicalApplication" in report.new_classes
    assert reg.is_subclass(APP + "AgrochemicalApplication", AGT + "Process")


def test_extension_redefining_core_term_rejected():
    reg = fresh_core()
    bad = (
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        ":Token a owl:Class ; rdfs:subClassOf :Document .\n"
    )
    with pytest.raises(CoreRedefinition):
        reg.register_extension(bad)


def test_orphan_extension_class_rejected():
    reg = fresh_core()
    orphan = (
        "@prefix ex: <http://e.test/> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        "ex:Floating a owl:Class ; rdfs:subClassOf ex:AlsoFloating .\n"
    )
    with pytest.raises(OrphanClass):
        reg.register_extension(orphan)


def test_beef_finishing_operation_extension():
    reg = fresh_core()
    ext = (
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix beef: <http://example.org/ns/beef#> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        "beef:FinishingOperation a owl:Class ; rdfs:subClassOf :Process .\n"
    )
    reg.register_extension(ext)
    assert reg.is_subclass("http://example.org/ns/beef#FinishingOperation", AGT + "Process")


def test_subclass_cycle_rejected():
    reg = fresh_core()
    cyclic = (
        "@prefix ex: <http://e.test/> .\n"
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        "ex:A a owl:Class ; rdfs:subClassOf ex:B , :Process .\n"
        "ex:B a owl:Class ; rdfs:subClassOf ex:A , :Process .\n"
    )
    with pytest.raises(OntologyError):
        reg.register_extension(cyclic)


def test_is_subclass_reflexive_and_transitive():
    reg = fresh_core()
    assert reg.is_subclass(AGT + "Token", AGT + "Token")
    assert reg.is_subclass(AGT + "IndividualAsset", AGT + "Asset")
    assert reg.is_subclass(AGT + "CrossChainToken", "http://www.w3.org/ns/prov#Entity")
    assert not reg.is_subclass(AGT + "Asset", AGT + "IndividualAsset")


def test_unknown_term_raises():
    reg = fresh_core()
    with pytest.raises(UnknownTerm):
        reg.subclass_closure("http://e.test/Nope")
    with pytest.raises(UnknownTerm):
        reg.instances_of("http://e.test/Nope", Graph())


def test_closure_matches_matrix_exponentiation_oracle():
    """Reachability via boolean matrix powers over the direct-edge matrix."""
    reg = default_registry()
    reg.register_extension(builtin_text("agrochem_extension"))
    names = sorted(
        set(reg.classes) | {s for c in reg.classes.values() for s in c.direct_superclasses}
    )
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    adjacency = np.eye(n, dtype=bool)
    for cls, cd in reg.classes.items():
        for sup in cd.direct_superclasses:
            adjacency[index[cls], index[sup]] = True
    reach = adjacency.copy()
    for _ in range(n.bit_length()):
        reach = reach | (reach @ reach)
    for cls in reg.classes:
        expected = {names[j] for j in range(n) if reach[index[cls], j]}
        assert reg.subclass_closure(cls) == expected


def test_agrochem_closure_includes_process_and_prov_activity():
    reg = default_registry()
    reg.register_extension(builtin_text("agrochem_extension"))
    closure = reg.subclass_closure(APP + "AgrochemicalApplication")
    assert AGT + "Process" in closure
    assert PROV_ACTIVITY in closure


def test_instances_of_uses_type_closure(registry):
    data = parse_turtle(
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix ex: <http://e.test/> .\n"
        "ex:cow a :IndividualAsset .\n"
        "ex:silo a :CollectiveAsset .\n"
        "ex:ghost a ex:UnregisteredThing .\n"
    )
    assets = registry.instances_of(AGT + "Asset", data)
    assert Iri("http://e.test/cow") in assets
    assert Iri("http://e.test/silo") in assets
    assert Iri("http://e.test/ghost") not in assets
    assert registry.instances_of(AGT + "Asset", Graph()) == set()


def test_instances_of_equals_brute_force_union(registry):
    data = parse_turtle(
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix app: <http://example.org/ns/application#> .\n"
        "@prefix ex: <http://e.test/> .\n"
        "ex:t1 a :Token . ex:t2 a :CrossChainToken .\n"
        "ex:p1 a :Process . ex:p2 a app:AgrochemicalApplication .\n"
        "ex:d1 a :Certificate . ex:d2 a :DataContract .\n"
    )
    for target in (AGT + "Token", AGT + "Process", AGT + "Document"):
        brute = set()
        for sub in registry.subclasses_of(target):
            for t in data.match(None, Iri(RDF_TYPE), Iri(sub)):
                brute.add(t.subject)
        assert registry.instances_of(target, data) == brute


def test_extension_registration_is_monotone(registry):
    data = parse_turtle(
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix ex: <http://e.test/> .\n"
        "ex:a a :CollectiveAsset . ex:b a ex:CompositeBatch .\n"
    )
    reg = default_registry()
    before = reg.instances_of(AGT + "Asset", data)
    reg.register_extension(
        "@prefix : <http://example.org/ns/agritrustcore#> .\n"
        "@prefix ex: <http://e.test/> .\n"
        "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
        "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
        "ex:CompositeBatch a owl:Class ; rdfs:subClassOf :CollectiveAsset .\n"
    )
    after = reg.instances_of(AGT + "Asset", data)
    assert before <= after
    assert Iri("http://e.test/b") in after - before


def test_dump_terms_one_line_per_term():
    reg = fresh_core()
    lines = reg.dump_terms()
    assert len(lines) == len(reg.classes) + len(reg.properties)
    classes = [l for l in lines if "\tclass\t" in l]
    assert any(l.startswith(AGT + "Token\t") for l in classes)

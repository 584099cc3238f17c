"""Wire handling, enforcement on every path, federation strategies, and
cross-platform verification."""
import random
from datetime import datetime, timezone

import pytest

from agritrust.contracts import DataContract
from agritrust.identity import IdentityDirectory, KeyPair
from agritrust.ledger import LedgerNetwork
from agritrust.node import (
    FederatedGraphView,
    InProcessResolver,
    NodeConfig,
    OntologyLoadError,
    PlatformNode,
)
from agritrust.query import evaluate, parse_query
from agritrust.terms import Iri, Literal, Triple
from agritrust.tokenization import AssetSpec, ObservationSpec
from agritrust.turtle import parse_turtle
from agritrust.wire import WireRequest, canonical_body_bytes, decode_results

from conftest import AGT, NOW, XSD

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
FARM = AGT + "Farm_FazendaBrasil"
CERTIFIER = AGT + "Certifier_EuroSus"
BATCH = AGT + "Batch_A1"


def make_node(name="coffee", directory=None, ledger=None, resolver=None, clock=None):
    config = NodeConfig(
        node_id=f"https://{name}-platform.test/platform",
        base_iri=f"https://{name}-platform.test",
        listen_endpoint=f"https://{name}-platform.test/sparql",
    )
    return PlatformNode(
        config,
        directory=directory or IdentityDirectory(),
        ledger=ledger or LedgerNetwork(),
        clock=clock or (lambda: NOW),
        resolver=resolver,
    )


@pytest.fixture()
def node_setup():
    directory = IdentityDirectory()
    farm_keys = directory.register_keypair(FARM, KeyPair.generate())
    certifier_keys = directory.register_keypair(CERTIFIER, KeyPair.generate())
    node = make_node(directory=directory)
    node.graph.add(Iri(FARM), Iri(RDF_TYPE), Iri(AGT + "DataProducer"))
    node.tokenizer.tokenize_asset(
        AssetSpec(
            iri=BATCH, unique_id="COFFEE-2024-BR-001", owner=FARM,
            types=(AGT + "CollectiveAsset",),
            observations=(ObservationSpec(iri=AGT + "Water_1", value="250",
                                          observed_at=NOW, datatype=XSD + "decimal"),),
        ),
        "BrazilAgriChain",
        NOW,
    )
    terms = {
        "id": "DC-1", "title": "t", "producer": FARM, "consumer": CERTIFIER,
        "purpose": "verification", "validFrom": "2024-06-25T10:00:00Z",
        "validUntil": "2024-12-25T10:00:00Z", "coversAsset": [BATCH],
        "coversObservation": [AGT + "Water_1"],
    }
    contract = node.contracts.create_contract(
        terms, node.graph, farm_keys.sign(DataContract.terms_bytes(terms)), NOW
    )
    return node, contract, certifier_keys


def signed(node, kind, body, requester, keys, contract_id=None):
    return WireRequest(
        kind=kind, body=body, requester_id=requester,
        signature=keys.sign(canonical_body_bytes(body)).hex(), contract_id=contract_id,
    )


QUERY = (
    f"PREFIX agt: <{AGT}>\n"
    'SELECT ?v WHERE { ?b agt:uniqueId "COFFEE-2024-BR-001" ; agt:hasObservation ?o . '
    "?o agt:observationValue ?v }"
)


def test_health_wire_and_body(node_setup):
    node, _, keys = node_setup
    response = node.handle_request(signed(node, "health", {}, CERTIFIER, keys))
    assert response.status == "ok"
    assert response.body["node_id"] == node.node_id
    assert response.body["ontology_version"] == "1.0.0"


def test_query_granted_returns_rows_and_audits(node_setup):
    node, contract, keys = node_setup
    body = {"query": QUERY, "purpose_tag": "verification"}
    response = node.handle_request(signed(node, "query", body, CERTIFIER, keys, contract.id))
    assert response.status == "ok"
    rows = decode_results(response.body).rows
    assert rows[0]["v"].lexical == "250"
    events = node.contracts.audit.events()
    assert len(events) == 1 and events[0].action == "query"


def test_forged_signature_denied_before_evaluation(node_setup):
    node, contract, _ = node_setup
    rogue = KeyPair.generate()
    body = {"query": QUERY, "purpose_tag": "verification"}
    response = node.handle_request(signed(node, "query", body, CERTIFIER, rogue, contract.id))
    assert response.status == "denied" and response.error_reason == "signature_invalid"
    assert node.contracts.audit.events()[-1].decision_reason == "signature_invalid"


def test_query_without_contract_denied_and_audited(node_setup):
    node, _, keys = node_setup
    response = node.handle_request(signed(node, "query", {"query": QUERY}, CERTIFIER, keys))
    assert response.status == "denied" and response.error_reason == "no_contract"
    assert node.contracts.audit.events()[-1].decision_reason == "no_contract"


def test_query_after_expiry_denied(node_setup):
    node, contract, keys = node_setup
    node.clock = lambda: datetime(2025, 1, 1, tzinfo=timezone.utc)
    body = {"query": QUERY, "purpose_tag": "verification"}
    response = node.handle_request(signed(node, "query", body, CERTIFIER, keys, contract.id))
    assert response.status == "denied" and response.error_reason == "expired"
    assert node.contracts.audit.events()[-1].action == "denied"


def test_syntax_error_passes_through_as_error(node_setup):
    node, contract, keys = node_setup
    body = {"query": "SELECT WHERE {", "purpose_tag": "verification"}
    response = node.handle_request(signed(node, "query", body, CERTIFIER, keys, contract.id))
    assert response.status == "error" and "query_syntax" in response.error_reason


def test_token_verify_wire(node_setup):
    node, _, keys = node_setup
    body = {"unique_id": "COFFEE-2024-BR-001"}
    response = node.handle_request(signed(node, "token_verify", body, CERTIFIER, keys))
    assert response.status == "ok" and response.body["verified"] is True
    # tamper with the asset core -> verification fails
    node.graph.remove(Triple(Iri(BATCH), Iri(AGT + "uniqueId"), Literal("COFFEE-2024-BR-001")))
    node.graph.add(Iri(BATCH), Iri(AGT + "uniqueId"), Literal("COFFEE-2024-BR-001x"))
    node.graph.add(Iri(BATCH), Iri(AGT + "uniqueId"), Literal("COFFEE-2024-BR-001"))
    response = node.handle_request(signed(node, "token_verify", body, CERTIFIER, keys))
    assert response.body["verified"] is False


def test_contract_propose_then_sign(node_setup):
    node, _, keys = node_setup
    directory = node.directory
    farm_keys = KeyPair.generate()
    directory.register(FARM, farm_keys.public_bytes())
    terms = {
        "id": "DC-2", "title": "proposal", "producer": FARM, "consumer": CERTIFIER,
        "purpose": "verification", "validFrom": "2024-06-25T10:00:00Z",
        "validUntil": "2024-12-25T10:00:00Z", "coversAsset": [BATCH],
    }
    propose = node.handle_request(signed(node, "contract_propose", {"terms": terms}, CERTIFIER, keys))
    assert propose.status == "ok" and propose.body["proposal_id"] == "DC-2"
    sign_body = {
        "proposal_id": "DC-2",
        "producer_signature": farm_keys.sign(DataContract.terms_bytes(terms)).hex(),
    }
    # producer signs via the wire under its own identity
    sign = node.handle_request(signed(node, "contract_sign", sign_body, FARM, farm_keys))
    assert sign.status == "ok" and sign.body["contract_id"] == "DC-2"
    assert node.ledger.verify_anchor(sign.body["anchor_provider"], sign.body["anchor_tx"])


def test_bad_window_surfaces_as_error(node_setup):
    node, _, keys = node_setup
    farm_keys = KeyPair.generate()
    node.directory.register(FARM, farm_keys.public_bytes())
    terms = {
        "id": "DC-3", "title": "bad", "producer": FARM, "consumer": CERTIFIER,
        "purpose": "x", "validFrom": "2024-12-25T10:00:00Z",
        "validUntil": "2024-06-25T10:00:00Z", "coversAsset": [BATCH],
    }
    body = {"terms": terms,
            "producer_signature": farm_keys.sign(DataContract.terms_bytes(terms)).hex()}
    response = node.handle_request(signed(node, "contract_sign", body, FARM, farm_keys))
    assert response.status == "error" and "InvalidWindow" in response.error_reason


def test_malformed_ontology_raises_load_error():
    config = NodeConfig(node_id="https://x.test/platform", base_iri="https://x.test")
    with pytest.raises(OntologyLoadError):
        PlatformNode(config, ontology_text="@prefix broken <oops .")


# -- federation ---------------------------------------------------------------


def partitioned_nodes(triples, parts=3, seed=0, clock=None):
    rng = random.Random(seed)
    directory = IdentityDirectory()
    ledger = LedgerNetwork()
    resolver = InProcessResolver()
    nodes = []
    for i in range(parts):
        node = make_node(f"part{i}", directory=directory, ledger=ledger,
                         resolver=resolver, clock=clock)
        resolver.add(node.config.listen_endpoint, node)
        nodes.append(node)
    for t in triples:
        rng.choice(nodes).graph.insert(t)
    for node in nodes:
        node.config.peer_endpoints = [
            other.config.listen_endpoint for other in nodes if other is not node
        ]
    return nodes, resolver


FEDERATION_DATA = parse_turtle(
    f"""
@prefix : <{AGT}> .
@prefix ex: <http://e.test/> .
@prefix xsd: <{XSD}> .
ex:batch a :CollectiveAsset ; :uniqueId "COFFEE-2024-BR-001" ;
  :hasProvenance ex:wet ; :hasCertificate ex:cert .
ex:wet a :Processing ; :hasInput ex:cherries ; :hasOutput ex:batch .
ex:cherries a :IndividualAsset ; :hasProvenance ex:harvest .
ex:harvest a :Harvesting ; :hasInput ex:crop ; :hasOutput ex:cherries .
ex:crop a :IndividualAsset .
ex:cert a :Certificate ; :standard "WFD 2000/60/EC" ;
  :creationDate "2024-07-15T00:00:00Z"^^xsd:dateTime ;
  :validUntil "2025-07-15T00:00:00Z"^^xsd:dateTime ;
  :certifiedBy ex:certifier .
ex:certifier a :Certifier .
ex:obs1 a :Observation ; :observationValue "250"^^xsd:decimal ;
  :observationDate "2024-06-01T00:00:00Z"^^xsd:dateTime .
ex:batch :hasObservation ex:obs1 .
"""
)

FEDERATED_QUERIES = [
    f'PREFIX agt: <{AGT}>\nSELECT ?p WHERE {{ ?b agt:uniqueId "COFFEE-2024-BR-001" . '
    "?b (agt:hasProvenance/agt:hasInput)* ?origin . ?origin agt:hasProvenance ?p }",
    f"PREFIX agt: <{AGT}>\nSELECT ?s ?std WHERE {{ ?a agt:hasCertificate ?c . "
    "?c agt:standard ?std . ?c agt:certifiedBy ?s }",
    f"PREFIX agt: <{AGT}>\nSELECT ?x ?t WHERE {{ ?x a ?t . ?x a agt:Asset }}",
    f"PREFIX agt: <{AGT}>\nSELECT ?v WHERE {{ ?b agt:hasObservation ?o . "
    "?o agt:observationValue ?v . FILTER (?v >= 100) }",
]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_federation_equals_centralization_for_random_partitions(seed):
    triples = list(FEDERATION_DATA)
    nodes, _ = partitioned_nodes(triples, seed=seed)
    merged = FEDERATION_DATA
    for query_text in FEDERATED_QUERIES:
        ast = parse_query(query_text)
        expected = evaluate(ast, merged, nodes[0].registry, now=NOW)
        for node in nodes:
            federated = node.federated_query(query_text, now=NOW)
            assert federated.row_multiset() == expected.row_multiset(), query_text


def test_federated_rows_carry_source_tags():
    triples = list(FEDERATION_DATA)
    nodes, _ = partitioned_nodes(triples, seed=0)
    rs = nodes[0].federated_query(FEDERATED_QUERIES[1], now=NOW)
    assert rs.rows and all(tag for tag in rs.provenance)


def test_one_peer_down_keeps_remaining_rows_and_notes():
    triples = list(FEDERATION_DATA)
    nodes, resolver = partitioned_nodes(triples, seed=0)
    resolver.down.add(nodes[2].config.listen_endpoint)
    rs = nodes[0].federated_query(FEDERATED_QUERIES[3], now=NOW)
    assert any("unreachable" in note for note in rs.notes)
    # local + one peer still answer; rows are a subset of the merged result
    merged = evaluate(parse_query(FEDERATED_QUERIES[3]), FEDERATION_DATA,
                      nodes[0].registry, now=NOW)
    assert len(rs.rows) <= len(merged.rows)


def test_zero_peers_equals_local_evaluation(node_setup):
    node, _, _ = node_setup
    local = node.evaluate_raw(QUERY)
    federated = node.federated_query(QUERY, peers=[])
    assert federated.row_multiset() == local.row_multiset()


def test_merged_result_independent_of_peer_order():
    triples = list(FEDERATION_DATA)
    nodes, resolver = partitioned_nodes(triples, seed=1)
    forward = nodes[0].federated_query(FEDERATED_QUERIES[1], now=NOW,
                                       peers=list(nodes[0].config.peer_endpoints))
    backward = nodes[0].federated_query(FEDERATED_QUERIES[1], now=NOW,
                                        peers=list(reversed(nodes[0].config.peer_endpoints)))
    assert forward.row_multiset() == backward.row_multiset()


def build_cert_pair(expiry="2025-07-15T00:00:00Z", link=True, record=True):
    directory = IdentityDirectory()
    ledger = LedgerNetwork()
    resolver = InProcessResolver()
    producer = make_node("producer", directory=directory, ledger=ledger, resolver=resolver)
    certifier = make_node("certifier", directory=directory, ledger=ledger, resolver=resolver)
    resolver.add(producer.config.listen_endpoint, producer)
    resolver.add(certifier.config.listen_endpoint, certifier)
    g = producer.graph
    g.add(Iri(BATCH), Iri(RDF_TYPE), Iri(AGT + "CollectiveAsset"))
    g.add(Iri(BATCH), Iri(AGT + "uniqueId"), Literal("COFFEE-2024-BR-001"))
    if link:
        g.add(Iri(BATCH), Iri(AGT + "hasCertificate"), Iri(AGT + "Cert_1"))
    if record:
        ch = certifier.graph
        ch.add(Iri(AGT + "Cert_1"), Iri(RDF_TYPE), Iri(AGT + "Certificate"))
        ch.add(Iri(AGT + "Cert_1"), Iri(AGT + "certifiedBy"), Iri(CERTIFIER))
        ch.add(Iri(AGT + "Cert_1"), Iri(AGT + "standard"), Literal("WFD 2000/60/EC"))
        ch.add(Iri(AGT + "Cert_1"), Iri(AGT + "creationDate"),
               Literal("2024-07-15T00:00:00Z", XSD + "dateTime"))
        ch.add(Iri(AGT + "Cert_1"), Iri(AGT + "validUntil"), Literal(expiry, XSD + "dateTime"))
    return producer, certifier


def test_cross_platform_verified():
    producer, certifier = build_cert_pair()
    outcome = producer.verify_cross_platform_certificate(
        "COFFEE-2024-BR-001", producer.config.listen_endpoint, certifier.config.listen_endpoint,
        now=NOW,
    )
    assert outcome["verification_status"] == "VERIFIED"


def test_cross_platform_pending_when_producer_empty():
    producer, certifier = build_cert_pair(link=False)
    outcome = producer.verify_cross_platform_certificate(
        "COFFEE-2024-BR-001", producer.config.listen_endpoint, certifier.config.listen_endpoint,
        now=NOW,
    )
    assert outcome["verification_status"] == "PENDING"


def test_cross_platform_mismatch_when_record_absent():
    producer, certifier = build_cert_pair(record=False)
    certifier.graph.add(Iri(AGT + "Cert_Other"), Iri(RDF_TYPE), Iri(AGT + "Certificate"))
    certifier.graph.add(Iri(AGT + "Cert_Other"), Iri(AGT + "certifiedBy"), Iri(CERTIFIER))
    certifier.graph.add(Iri(AGT + "Cert_Other"), Iri(AGT + "standard"), Literal("X"))
    certifier.graph.add(Iri(AGT + "Cert_Other"), Iri(AGT + "creationDate"),
                        Literal("2024-07-15T00:00:00Z", XSD + "dateTime"))
    certifier.graph.add(Iri(AGT + "Cert_Other"), Iri(AGT + "validUntil"),
                        Literal("2025-07-15T00:00:00Z", XSD + "dateTime"))
    outcome = producer.verify_cross_platform_certificate(
        "COFFEE-2024-BR-001", producer.config.listen_endpoint, certifier.config.listen_endpoint,
        now=NOW,
    )
    assert outcome["verification_status"] == "CERTIFICATE_MISMATCH"


def test_cross_platform_expired_is_not_verified():
    producer, certifier = build_cert_pair(expiry="2024-01-01T00:00:00Z")
    outcome = producer.verify_cross_platform_certificate(
        "COFFEE-2024-BR-001", producer.config.listen_endpoint, certifier.config.listen_endpoint,
        now=NOW,
    )
    assert outcome["verification_status"] == "CERTIFICATE_MISMATCH"


def test_health_stats_counts():
    nodes, resolver = partitioned_nodes(list(FEDERATION_DATA), seed=0)
    stats = nodes[0].health_stats(now=NOW)
    assert stats["total_platforms"] == 2 and stats["healthy_platforms"] == 2
    resolver.down.add(nodes[1].config.listen_endpoint)
    stats = nodes[0].health_stats(now=NOW)
    assert stats["healthy_platforms"] == 1
    assert nodes[0].health_stats(peers=[], now=NOW)["total_platforms"] == 0


def test_enforced_service_dispatch_respects_contracts(node_setup):
    node, contract, certifier_keys = node_setup
    analytics = make_node("analytics", directory=node.directory, ledger=node.ledger)
    resolver = InProcessResolver(
        nodes={node.config.listen_endpoint: node},
        sign_as=(CERTIFIER, certifier_keys),
        contract_ids={node.config.listen_endpoint: contract.id},
    )
    analytics.resolver = resolver
    query = (
        f"PREFIX agt: <{AGT}>\n"
        "SELECT ?v WHERE { SERVICE <" + node.config.listen_endpoint + "> { "
        '?b agt:uniqueId "COFFEE-2024-BR-001" ; agt:hasObservation ?o . '
        "?o agt:observationValue ?v } }"
    )
    rs = analytics.federated_query(query)
    assert [r["v"].lexical for r in rs.rows] == ["250"]
    # the producer-side audit saw the remote access
    assert any(e.consumer == CERTIFIER for e in node.contracts.audit.events())
    # with the contract revoked the same dispatch yields nothing but a note
    node.contracts.revoke(contract.id, NOW)
    rs = analytics.federated_query(query)
    assert rs.rows == [] and any("revoked" in n for n in rs.notes)

"""Agrochemical application tracking: ontology extension registration,
offline edge capture with worker signatures, FIFO queue flush to the ledger,
and certifier-side compliance verification including tamper detection."""
from __future__ import annotations

from ..contracts import DataContract
from ..ontology import builtin_text
from ..terms import AGT_NS, APP_NS, PROV_NS, Iri, Literal
from ..tokenization import AssetSpec, EdgeQueue, capture_signed_observation
from ..wire import decode_results
from .coffee import BATCH, BATCH_ID, CROP, build_coffee_fixture
from .ecosystem import Ecosystem
from .report import ScenarioReport

AGT = AGT_NS
APP = APP_NS

CHEMICAL = AGT + "Chemical_CupriFix"

COMPLIANCE_QUERY = f"""
PREFIX agt: <{AGT}>
PREFIX app: <{APP}>
PREFIX prov: <{PROV_NS}>
SELECT ?plot ?applicationDate ?chemical ?worker ?signature
WHERE {{
  ?coffeeBatch agt:uniqueId "{BATCH_ID}" .
  ?coffeeBatch (agt:hasProvenance/agt:hasInput)* ?plot .
  ?application a app:AgrochemicalApplication ;
    agt:hasOutput ?plot ;
    agt:hasInput ?chemical ;
    prov:wasAssociatedWith ?worker ;
    prov:startedAtTime ?applicationDate ;
    app:hasApplicationRecord/app:digitalSignature ?signature .
}}
"""


def application_form(start: str, end: str) -> dict:
    return {
        "product_id": CHEMICAL,
        "plot_id": CROP,
        "dilution": "2.5 mL/L",
        "weather": "clear, wind 6 km/h",
        "start_time": start,
        "end_time": end,
        "gps": "POINT(-47.06 -22.85)",
        "worker_id": AGT + "Worker_Joao",
    }


def run_agrochem_scenario(eco: Ecosystem) -> ScenarioReport:
    report = ScenarioReport("agrochem")
    report.erratum("the compliance query's plot hop uses the declared pattern "
                   "(provenance chain to the harvest input asset) instead of undeclared shortcuts")
    node = eco.coffee
    now = eco.now()

    report.step("register the agrochemical application extension")
    if not node.graph.match(None, Iri(AGT + "uniqueId"), Literal(BATCH_ID)):
        build_coffee_fixture(eco)
    ext_report = node.registry.register_extension(builtin_text("agrochem_extension"))
    report.check(
        "application process subclasses core Process",
        True,
        node.registry.is_subclass(APP + "AgrochemicalApplication", AGT + "Process"),
    )
    report.artifact("extension_classes", ",".join(c.rsplit("#", 1)[-1] for c in ext_report.new_classes))

    report.step("tokenize the agrochemical input asset")
    farm = eco.agent("farm")
    node.tokenizer.tokenize_asset(
        AssetSpec(
            iri=CHEMICAL,
            unique_id="CHEM-2024-CF-01",
            owner=farm,
            types=(AGT + "IndividualAsset",),
        ),
        "BrazilAgriChain",
        now,
    )

    report.step("worker captures and signs two applications offline")
    worker_keys = eco.keys["worker"]
    queue = EdgeQueue()
    observations = []
    for i, (start, end) in enumerate(
        (("2024-06-26T06:30:00Z", "2024-06-26T08:10:00Z"),
         ("2024-06-28T06:45:00Z", "2024-06-28T08:00:00Z"))
    ):
        obs = capture_signed_observation(
            application_form(start, end),
            worker_keys,
            eco.directory,
            now,
            device_meta={"device_id": f"edge-unit-{i}"},
            iri=f"urn:edge:application:{i}",
        )
        observations.append(obs)
        queue.enqueue(obs, now)
    verified = [
        eco.directory.verify(o.signer, o.canonical_payload(), o.signature) for o in observations
    ]
    report.check("captured records verify offline", [True, True], verified)

    report.step("flush while disconnected leaves the queue untouched")
    report.check("no submissions while down", 0, len(queue.flush("down", lambda o: "")))
    report.check("entries still queued", 2, len(queue.pending()))

    report.step("connectivity restored: FIFO flush anchors both applications")

    def submit(payload):
        process_iri = node.tokenizer.record_application_process(
            payload,
            plot=CROP,
            chemical=CHEMICAL,
            worker=payload.signer,
            provider="BrazilAgriChain",
            now=eco.now(),
        )
        tx = node.graph.object(Iri(process_iri), Iri(AGT + "blockchainTransactionId"))
        return tx.lexical

    acked = queue.flush("up", submit)
    report.check("both entries acknowledged in order", 2, len(acked))
    report.check("acknowledgements carry transaction ids", [True, True],
                 [bool(e.tx_id) for e in acked])
    report.check("FIFO order preserved", [e.payload.iri for e in acked],
                 [o.iri for o in observations])
    chain = eco.ledger.provider("BrazilAgriChain").chain
    before = len(chain)
    re_acked = queue.flush("up", submit)
    report.check("duplicate flush creates no duplicate anchors", 0, len(chain) - before)
    report.check("re-flush acknowledges nothing new", 0, len(re_acked))

    report.step("certifier retrieves signed applications under contract")
    contract_terms = {
        "id": "DC-2024-AGRO-001",
        "title": "Agrochemical Compliance Verification Agreement",
        "producer": farm,
        "consumer": eco.agent("certifier"),
        "purpose": "agrochemical_compliance_verification",
        "validFrom": "2024-06-25T10:00:00Z",
        "validUntil": "2024-12-25T10:00:00Z",
        "coversAsset": [BATCH, CROP, CHEMICAL],
        "allowedUsage": ["compliance_audit"],
        "prohibitedUsage": ["commercial_resale"],
    }
    signature = eco.keys["farm"].sign(DataContract.terms_bytes(contract_terms))
    contract = node.contracts.create_contract(contract_terms, node.graph, signature, eco.now())
    body = {"query": COMPLIANCE_QUERY, "purpose_tag": contract.purpose, "usage_tag": "compliance_audit"}
    request = node.signed_request(
        "query", body, contract_id=contract.id,
        requester_id=eco.agent("certifier"), keys=eco.keys["certifier"],
    )
    response = node.handle_request(request)
    rows = decode_results(response.body).rows if response.status == "ok" else []
    report.check("compliance query row count equals applications", 2, len(rows))
    signatures = sorted({r["signature"].lexical for r in rows if "signature" in r})
    report.check("worker signatures retrievable",
                 sorted(o.signature.hex() for o in observations), signatures)

    report.step("tampered record fails verification")
    victim = observations[0]
    flipped = bytearray(victim.canonical_payload())
    flipped[7] ^= 0x01
    report.check("bit-flipped payload rejected", False,
                 eco.directory.verify(victim.signer, bytes(flipped), victim.signature))
    record_nodes = node.graph.subjects(Iri(APP + "digitalSignature"), Literal(victim.signature.hex()))
    record_iri = record_nodes[0]
    process_iri = node.graph.subjects(Iri(APP + "hasApplicationRecord"), record_iri)[0]
    from ..terms import Triple
    node.graph.remove(Triple(record_iri, Iri(APP + "digitalSignature"), Literal(victim.signature.hex())))
    node.graph.insert(Triple(record_iri, Iri(APP + "digitalSignature"), Literal("00" + victim.signature.hex()[2:])))
    anchor_tx = node.graph.object(process_iri, Iri(AGT + "blockchainTransactionId"))
    from ..tokenization import anchor_payload
    tampered_payload = anchor_payload(node.graph, process_iri.value, [record_iri.value])
    check = eco.ledger.verify_anchor("BrazilAgriChain", anchor_tx.lexical, tampered_payload)
    report.check("graph tamper breaks the ledger anchor", "payload_mismatch", check.reason)

    report.step("unauthorized retailer access to application data is denied and audited")
    audit_before = len(node.contracts.audit)
    snoop_body = {"query": COMPLIANCE_QUERY, "purpose_tag": "competitor_analysis"}
    snoop = node.signed_request(
        "query", snoop_body, contract_id=contract.id,
        requester_id=eco.agent("retailer"), keys=eco.keys["retailer"],
    )
    snoop_response = node.handle_request(snoop)
    report.check("wrong consumer denied", "denied:wrong_consumer",
                 f"{snoop_response.status}:{snoop_response.error_reason}")
    report.check("denial audited", audit_before + 1, len(node.contracts.audit))

    report.step("unauthorized worker-impersonation capture is rejected")
    try:
        capture_signed_observation(
            application_form("2024-06-29T06:00:00Z", "2024-06-29T07:00:00Z"),
            eco.keys["retailer"],  # wrong key for the declared worker
            eco.directory,
            eco.now(),
        )
        outcome = "accepted"
    except Exception as exc:
        outcome = type(exc).__name__
    report.check("mismatched signer key rejected", "UnregisteredSigner", outcome)
    return report

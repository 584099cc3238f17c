"""Coffee supply chain: tokenization with a water observation, automated
certification under a data contract, settlement payout, and deforestation-
free verification with both compliance branches."""
from __future__ import annotations

from datetime import datetime, timezone
from decimal import Decimal

from ..contracts import DataContract
from ..terms import AGT_NS, GEO_NS, PROV_NS, RDF_TYPE, XSD_DATETIME, XSD_DECIMAL, Iri, Literal
from ..tokenization import AssetSpec, ObservationSpec
from ..wire import decode_results
from ..shacl import validate
from .ecosystem import Ecosystem, SOY_ENDPOINT
from .report import ScenarioReport

AGT = AGT_NS
COFFEE = "http://example.org/ns/coffee#"

BATCH = AGT + "Batch_A1"
BATCH_ID = "COFFEE-2024-BR-001"
WATER_OBS = AGT + "WaterMeasure_1"
MASS_OBS = AGT + "MassMeasure_1"
PLOT = AGT + "Farm_Plot_A"
CROP = AGT + "StandingCrop_A1"
CHERRIES = AGT + "CherryLot_A1"
CERT = AGT + "Cert_Sustainable_123"
CONTRACT_ID = "DC-2024-ORG-001"

EUDR_CUTOFF = "2020-12-31T00:00:00Z"

EUDR_QUERY = f"""
PREFIX agt: <{AGT}>
PREFIX prov: <{PROV_NS}>
PREFIX xsd: <http://www.w3.org/2001/XMLSchema#>
SELECT ?product ?farm ?geometry ?satelliteImage ?imageDate ?complianceStatus
WHERE {{
  ?product a agt:CollectiveAsset ;
           agt:uniqueId "{BATCH_ID}" .
  ?product (agt:hasProvenance/agt:hasInput)* ?origin .
  ?origin prov:atLocation ?farm .
  ?farm a agt:Location ;
        agt:hasGeometry ?geometry ;
        agt:hasObservation ?locObs .
  ?locObs agt:observationValue ?satelliteImage ;
          agt:observationDate ?imageDate .
  FILTER (?imageDate >= "{EUDR_CUTOFF}"^^xsd:dateTime)
  BIND(IF(NOT EXISTS {{
      ?farm agt:hasObservation ?alertObs .
      ?alertObs agt:observationValue "deforestation_alert" ;
                agt:observationDate ?alertDate .
      FILTER (?alertDate >= "{EUDR_CUTOFF}"^^xsd:dateTime)
  }}, "COMPLIANT", "NON-COMPLIANT") AS ?complianceStatus)
}}
"""


def build_coffee_fixture(eco: Ecosystem) -> None:
    """Farm, plot, provenance chain and tokenized batch on the coffee node;
    satellite monitoring data on the soy node (remote-sensing host)."""
    node = eco.coffee
    now = eco.now()
    farm = eco.declare_agent(node, "farm", AGT + "DataProducer")
    eco.declare_agent(node, "certifier", AGT + "Certifier", AGT + "DataConsumer")

    g = node.graph
    # Plot with geometry; the standing crop is the harvest's input asset so
    # origin processes keep ProcessShape conformance.
    g.add(Iri(PLOT), Iri(RDF_TYPE), Iri(AGT + "Location"))
    g.add(Iri(PLOT), Iri(AGT + "hasGeometry"),
          Literal("POLYGON((-47.1 -22.9, -47.0 -22.9, -47.0 -22.8, -47.1 -22.8, -47.1 -22.9))",
                  GEO_NS + "wktLiteral"))
    for asset, uid in ((CROP, "CROP-2024-A1"), (CHERRIES, "CHERRY-2024-A1")):
        g.add(Iri(asset), Iri(RDF_TYPE), Iri(AGT + "IndividualAsset"))
        g.add(Iri(asset), Iri(AGT + "uniqueId"), Literal(uid))
        g.add(Iri(asset), Iri(AGT + "ownedBy"), Iri(farm))
    g.add(Iri(CROP), Iri(PROV_NS + "atLocation"), Iri(PLOT))

    harvest = AGT + "Harvest_A1"
    wet = AGT + "WetProcessing_A1"
    for process, ptype, inp, outp, start in (
        (harvest, AGT + "Harvesting", CROP, CHERRIES, "2024-05-20T08:00:00Z"),
        (wet, COFFEE + "WetProcessing", CHERRIES, BATCH, "2024-05-25T08:00:00Z"),
    ):
        g.add(Iri(process), Iri(RDF_TYPE), Iri(ptype))
        g.add(Iri(process), Iri(AGT + "hasInput"), Iri(inp))
        g.add(Iri(process), Iri(AGT + "hasOutput"), Iri(outp))
        g.add(Iri(process), Iri(PROV_NS + "startedAtTime"), Literal(start, XSD_DATETIME))
        g.add(Iri(process), Iri(PROV_NS + "wasAssociatedWith"), Iri(farm))
    g.add(Iri(CHERRIES), Iri(AGT + "hasProvenance"), Iri(harvest))

    spec = AssetSpec(
        iri=BATCH,
        unique_id=BATCH_ID,
        owner=farm,
        types=(COFFEE + "CoffeeCherryBatch",),
        observations=(
            ObservationSpec(iri=WATER_OBS, value="250", observed_at=now,
                            datatype=XSD_DECIMAL, unit="http://qudt.org/vocab/unit/L"),
            ObservationSpec(iri=MASS_OBS, value="1000", observed_at=now,
                            datatype=XSD_DECIMAL, unit="http://qudt.org/vocab/unit/KiloGM"),
        ),
    )
    token = node.tokenizer.tokenize_asset(spec, "CoffeeChainLedger", now)
    g.add(Iri(BATCH), Iri(AGT + "hasProvenance"), Iri(wet))

    # Satellite monitoring hosted on the remote-sensing side (soy node).
    sat = eco.soy.graph
    sat_obs = AGT + "SatImage_2023"
    sat.add(Iri(PLOT), Iri(RDF_TYPE), Iri(AGT + "Location"))
    sat.add(Iri(PLOT), Iri(AGT + "hasObservation"), Iri(sat_obs))
    sat.add(Iri(sat_obs), Iri(RDF_TYPE), Iri(AGT + "Observation"))
    sat.add(Iri(sat_obs), Iri(AGT + "observationValue"), Literal("No deforestation since 2020"))
    sat.add(Iri(sat_obs), Iri(AGT + "observationDate"),
            Literal("2024-05-01T00:00:00Z", XSD_DATETIME))
    return token


def certification_terms(eco: Ecosystem) -> dict:
    return {
        "id": CONTRACT_ID,
        "title": "Sustainable Certification Data Sharing Agreement",
        "producer": eco.agent("farm"),
        "consumer": eco.agent("certifier"),
        "purpose": "sustainable_certification_verification",
        "validFrom": "2024-06-25T10:00:00Z",
        "validUntil": "2024-12-25T10:00:00Z",
        "accessLevel": "read_only",
        "coversAsset": [BATCH],
        "coversObservation": [WATER_OBS, MASS_OBS],
        "allowedUsage": ["compliance_verification_against_eu_sustainable_standard"],
        "prohibitedUsage": ["commercial_resale", "ai_training", "marketing_activities"],
        "compensationType": "premium_price_access",
        "compensationValue": "0.15",
        "auditTrailRequired": True,
    }


def run_coffee_scenario(eco: Ecosystem) -> ScenarioReport:
    report = ScenarioReport("coffee")
    report.erratum("invalid BIND(NOT EXISTS ...) compliance binding rewritten as "
                   "BIND(IF(NOT EXISTS {...}, \"COMPLIANT\", \"NON-COMPLIANT\") AS ?complianceStatus)")
    report.erratum("certificate linkage direction corrected: the asset carries "
                   "hasCertificate, not the certificate")
    node = eco.coffee
    now = eco.now()

    report.step("tokenize coffee batch with water and mass observations")
    token = build_coffee_fixture(eco)
    report.artifact("token_tx", token.tx_id)
    ok, reason = node.tokenizer.verify_token(BATCH_ID)
    report.check("token anchor verifies", True, ok)

    report.step("producer signs certification data contract")
    terms = certification_terms(eco)
    signature = eco.keys["farm"].sign(DataContract.terms_bytes(terms))
    contract = node.contracts.create_contract(terms, node.graph, signature, now)
    report.artifact("contract_id", contract.id)
    report.artifact("contract_anchor_tx", contract.anchor_tx[1])
    report.check("contract status at signing", "active", node.contracts.verify_status(contract, now))

    report.step("certifier queries water usage under the contract")
    query = f"""
PREFIX agt: <{AGT}>
SELECT ?value WHERE {{
  ?batch agt:uniqueId "{BATCH_ID}" ; agt:hasObservation ?obs .
  ?obs agt:observationValue ?value ;
       agt:observationUnit <http://qudt.org/vocab/unit/L> .
}}"""
    body = {"query": query, "purpose_tag": contract.purpose,
            "usage_tag": "compliance_verification_against_eu_sustainable_standard"}
    request = node.signed_request(
        "query", body, contract_id=contract.id,
        requester_id=eco.agent("certifier"), keys=eco.keys["certifier"],
    )
    response = node.handle_request(request)
    report.check("certifier query granted", "ok", response.status)
    rows = decode_results(response.body).rows if response.status == "ok" else []
    report.check("water usage value", "250", rows[0]["value"].lexical if rows else "")

    report.step("certifier issues sustainability certificate on its host platform")
    certifier_host = eco.soy
    eco.declare_agent(certifier_host, "certifier", AGT + "Certifier")
    ch = certifier_host.graph
    ch.add(Iri(CERT), Iri(RDF_TYPE), Iri(COFFEE + "SustainableCertificate"))
    ch.add(Iri(CERT), Iri(AGT + "certifiedBy"), Iri(eco.agent("certifier")))
    ch.add(Iri(CERT), Iri(AGT + "standard"), Literal("WFD 2000/60/EC"))
    ch.add(Iri(CERT), Iri(AGT + "creationDate"),
           Literal("2024-07-15T00:00:00Z", XSD_DATETIME))
    ch.add(Iri(CERT), Iri(AGT + "validUntil"),
           Literal("2025-07-15T00:00:00Z", XSD_DATETIME))
    cert_report = validate(ch, certifier_host.shapes, certifier_host.registry)
    cert_violations = [v for v in cert_report.violations if v.focus_node == Iri(CERT)]
    report.check("certificate record conforms to CertificateShape", 0, len(cert_violations))
    node.graph.add(Iri(BATCH), Iri(AGT + "hasCertificate"), Iri(CERT))

    report.step("settlement contract pays the premium on certificate issuance")
    settlement = eco.settlement.deploy(
        contract_id="SETTLE-" + contract.id,
        payer=eco.agent("certifier"),
        payee=eco.agent("farm"),
        rate=Decimal(contract.compensation_value),
        unit="kg",
        provider="EUCertChain",
        linked_data_contract=contract.id,
        trigger_assets=[BATCH],
        trigger_standard="WFD 2000/60/EC",
    )
    eco.settlement.fund(settlement.id, Decimal("200.00"))
    from ..turtle import canonical_bytes

    cert_payload = canonical_bytes(ch, Iri(CERT))
    cert_tx = eco.ledger.register(
        "EUCertChain", cert_payload, "certificate", eco.agent("certifier"), now,
        metadata={"asset": BATCH, "quantity": Decimal("1000"), "standard": "WFD 2000/60/EC"},
    )
    report.artifact("certificate_tx", cert_tx.tx_id)
    payment = settlement.payments.get(cert_tx.tx_id)
    report.check("premium payment amount", "150.00", str(payment.amount) if payment else "none")
    eco.settlement.deliver("EUCertChain", cert_tx,
                           {"asset": BATCH, "quantity": Decimal("1000"), "standard": "WFD 2000/60/EC"})
    report.check("duplicate certificate event pays once", 1, len(settlement.payments))
    report.check("settlement conserves funds", True, eco.settlement.conservation_ok(settlement.id))
    if payment:
        report.artifact("payment_tx", payment.tx_id)

    report.step("cross-chain reference links token and certificate ledgers")
    reference = eco.ledger.link_cross_chain(
        AGT + "Token_Batch_A1",
        [("CoffeeChainLedger", token.tx_id), ("EUCertChain", cert_tx.tx_id)],
    )
    checks = [bool(eco.ledger.verify_anchor(p, t)) for p, t in reference.entries]
    report.check("cross-chain entries verify", [True, True], checks)

    report.step("cross-platform certificate verification")
    outcome = node.verify_cross_platform_certificate(BATCH_ID, node.config.listen_endpoint, SOY_ENDPOINT)
    report.check("verification status", "VERIFIED", outcome["verification_status"])
    report.check("certificate standard literal", "WFD 2000/60/EC", _standard_on(certifier_host))

    report.step("EUDR federated verification, clean farm")
    rs = node.federated_query(EUDR_QUERY)
    statuses = sorted({r["complianceStatus"].lexical for r in rs.rows if "complianceStatus" in r})
    report.check("clean farm compliance", ["COMPLIANT"], statuses)
    report.check("federated query spans multiple nodes", True, len(rs.rows) > 0)

    report.step("EUDR federated verification, injected deforestation alert")
    alert = AGT + "DeforestationAlert_1"
    sat = eco.soy.graph
    sat.add(Iri(alert), Iri(RDF_TYPE), Iri(AGT + "Observation"))
    sat.add(Iri(alert), Iri(AGT + "observationValue"), Literal("deforestation_alert"))
    sat.add(Iri(alert), Iri(AGT + "observationDate"), Literal("2022-03-01T00:00:00Z", XSD_DATETIME))
    sat.add(Iri(PLOT), Iri(AGT + "hasObservation"), Iri(alert))
    rs = node.federated_query(EUDR_QUERY)
    statuses = sorted({r["complianceStatus"].lexical for r in rs.rows if "complianceStatus" in r})
    report.check("alerted farm compliance", ["NON-COMPLIANT"], statuses)

    report.step("unauthorized marketing usage is blocked and audited")
    audit_before = len(node.contracts.audit)
    bad_body = dict(body, usage_tag="marketing")
    bad_request = node.signed_request(
        "query", bad_body, contract_id=contract.id,
        requester_id=eco.agent("certifier"), keys=eco.keys["certifier"],
    )
    bad_response = node.handle_request(bad_request)
    report.check("marketing usage denied", "denied:prohibited_usage",
                 f"{bad_response.status}:{bad_response.error_reason}")
    report.check("denial audited", audit_before + 1, len(node.contracts.audit))

    report.step("access is revoked automatically at contract expiry")
    eco.clock.set(datetime(2024, 12, 25, 10, 0, 1, tzinfo=timezone.utc))
    late_request = node.signed_request(
        "query", body, contract_id=contract.id,
        requester_id=eco.agent("certifier"), keys=eco.keys["certifier"],
    )
    late_response = node.handle_request(late_request)
    report.check("expired query denied", "denied:expired",
                 f"{late_response.status}:{late_response.error_reason}")

    report.step("contract audit report tags accesses against the window")
    audit_rows = node.contracts.audit_report(contract.id, window_days=365, now=eco.now())
    compliant = [r for r in audit_rows if r["compliance"] == "COMPLIANT"]
    non_compliant = [r for r in audit_rows if r["compliance"] == "NON-COMPLIANT"]
    report.check("in-window accesses tagged COMPLIANT", True, len(compliant) >= 2)
    report.check("post-expiry denial tagged NON-COMPLIANT", True, len(non_compliant) >= 1)
    return report


def _standard_on(node) -> str:
    term = node.graph.object(Iri(CERT), Iri(AGT + "standard"))
    return term.lexical if isinstance(term, Literal) else ""

"""Soy supply chain: mass-balance composition of an export batch from two
farm origins, multi-modal transport custody, and a carbon footprint metric
computed by an analytics platform."""
from __future__ import annotations

from decimal import Decimal

from ..terms import AGT_NS, PROV_NS, RDF_TYPE, XSD_DATETIME, XSD_DECIMAL, Iri, Literal
from ..tokenization import AssetSpec, compose_batch
from .ecosystem import Ecosystem
from .report import ScenarioReport

AGT = AGT_NS
SOY = "http://example.org/ns/soy#"

MT1 = AGT + "FarmBatch_MT_001"
MT2 = AGT + "FarmBatch_MT_002"
TRANSIT = AGT + "TransitBatch_Cuiaba"
EXPORT = AGT + "ExportBatch_Santos"
EXPORT_ID = "SOY-2024-WT-001"
METRIC = AGT + "Metric_Carbon_Footprint"

TRACE_QUERY = f"""
PREFIX agt: <{AGT}>
SELECT DISTINCT ?process WHERE {{
  ?batch agt:uniqueId "{EXPORT_ID}" .
  ?batch (agt:hasProvenance/agt:hasInput)*/agt:hasProvenance ?process .
}}
"""

METRIC_QUERY = f"""
PREFIX agt: <{AGT}>
SELECT ?name ?value WHERE {{
  ?batch agt:uniqueId "{EXPORT_ID}" ;
         agt:hasEfficiencyMetric ?metric .
  ?metric agt:metricName ?name ;
          agt:metricValue ?value .
}}
"""


def build_soy_fixture(eco: Ecosystem) -> None:
    node = eco.soy
    now = eco.now()
    g = node.graph
    mt1_farm = eco.declare_agent(node, "soy_farm_mt1", AGT + "DataProducer")
    mt2_farm = eco.declare_agent(node, "soy_farm_mt2", AGT + "DataProducer")
    trader = eco.declare_agent(node, "trader", AGT + "DataProducer", AGT + "DataConsumer")

    for iri, uid, owner in ((MT1, "SOY-2024-MT-001", mt1_farm), (MT2, "SOY-2024-MT-002", mt2_farm)):
        node.tokenizer.tokenize_asset(
            AssetSpec(iri=iri, unique_id=uid, owner=owner, types=(AGT + "CollectiveAsset",)),
            "BrazilAgriChain",
            now,
        )
        harvest = iri + "_harvest"
        crop = iri + "_crop"
        g.add(Iri(crop), Iri(RDF_TYPE), Iri(AGT + "IndividualAsset"))
        g.add(Iri(crop), Iri(AGT + "uniqueId"), Literal(uid + "-CROP"))
        g.add(Iri(crop), Iri(AGT + "ownedBy"), Iri(owner))
        g.add(Iri(harvest), Iri(RDF_TYPE), Iri(AGT + "Harvesting"))
        g.add(Iri(harvest), Iri(AGT + "hasInput"), Iri(crop))
        g.add(Iri(harvest), Iri(AGT + "hasOutput"), Iri(iri))
        g.add(Iri(harvest), Iri(PROV_NS + "startedAtTime"), Literal("2024-03-01T08:00:00Z", XSD_DATETIME))
        g.add(Iri(iri), Iri(AGT + "hasProvenance"), Iri(harvest))

    # Transit batch between road and river legs keeps the chain of custody
    # explicit: farm -> road -> transit -> river -> export.
    g.add(Iri(TRANSIT), Iri(RDF_TYPE), Iri(AGT + "CollectiveAsset"))
    g.add(Iri(TRANSIT), Iri(AGT + "uniqueId"), Literal("SOY-2024-TR-CUIABA"))
    g.add(Iri(TRANSIT), Iri(AGT + "ownedBy"), Iri(trader))
    road = AGT + "RoadTransport_1"
    river = AGT + "RiverTransport_1"
    g.add(Iri(road), Iri(RDF_TYPE), Iri(SOY + "RoadTransport"))
    g.add(Iri(road), Iri(AGT + "hasInput"), Iri(MT1))
    g.add(Iri(road), Iri(AGT + "hasInput"), Iri(MT2))
    g.add(Iri(road), Iri(AGT + "hasOutput"), Iri(TRANSIT))
    g.add(Iri(road), Iri(PROV_NS + "startedAtTime"), Literal("2024-03-20T06:00:00Z", XSD_DATETIME))
    g.add(Iri(TRANSIT), Iri(AGT + "hasProvenance"), Iri(road))
    g.add(Iri(river), Iri(RDF_TYPE), Iri(SOY + "RiverTransport"))
    g.add(Iri(river), Iri(AGT + "hasInput"), Iri(TRANSIT))
    g.add(Iri(river), Iri(AGT + "hasOutput"), Iri(EXPORT))
    g.add(Iri(river), Iri(PROV_NS + "startedAtTime"), Literal("2024-04-02T06:00:00Z", XSD_DATETIME))

    spec = compose_batch(
        components=[(MT1, Decimal("0.40")), (MT2, Decimal("0.60"))],
        unique_id=EXPORT_ID,
        iri=EXPORT,
        owner=trader,
        types=(SOY + "CompositeBatch",),
        node_graph=g,
    )
    node.tokenizer.tokenize_asset(spec, "BrazilAgriChain", now)
    g.add(Iri(EXPORT), Iri(AGT + "hasProvenance"), Iri(river))

    # Carbon analytics hosted on the beef node (analytics provider role).
    an = eco.beef.graph
    eco.declare_agent(eco.beef, "analytics", AGT + "PlatformProvider")
    an.add(Iri(METRIC), Iri(RDF_TYPE), Iri(AGT + "EfficiencyMetric"))
    an.add(Iri(METRIC), Iri(AGT + "metricName"), Literal("Carbon Footprint (Scope 3)"))
    an.add(Iri(METRIC), Iri(AGT + "metricValue"), Literal("1.25"))
    an.add(Iri(METRIC), Iri(AGT + "creationDate"), Literal("2024-04-20T00:00:00Z", XSD_DATETIME))
    for obs, value in ((AGT + "TransportEmissions", "0.45"), (AGT + "FertilizerEmissions", "0.80")):
        an.add(Iri(obs), Iri(RDF_TYPE), Iri(AGT + "Observation"))
        an.add(Iri(obs), Iri(AGT + "observationValue"), Literal(value, XSD_DECIMAL))
        an.add(Iri(obs), Iri(AGT + "observationDate"), Literal("2024-04-15T00:00:00Z", XSD_DATETIME))
        an.add(Iri(METRIC), Iri(AGT + "hasObservation"), Iri(obs))
    an.add(Iri(EXPORT), Iri(AGT + "hasEfficiencyMetric"), Iri(METRIC))


def run_soy_scenario(eco: Ecosystem) -> ScenarioReport:
    report = ScenarioReport("soy")
    report.erratum("paired composition literals (hasCompositionPercentage 0.40, 0.60) reified "
                   "as (componentAsset, componentFraction) shares to keep the pairing explicit")
    node = eco.soy

    report.step("compose export batch from two farm origins with mass balance")
    build_soy_fixture(eco)
    shares = {}
    for share_node in node.graph.objects(Iri(EXPORT), Iri(AGT + "hasComposition")):
        component = node.graph.object(share_node, Iri(AGT + "componentAsset"))
        fraction = node.graph.object(share_node, Iri(AGT + "componentFraction"))
        shares[component.value] = Decimal(fraction.lexical)
    report.check("component fractions", "0.40/0.60",
                 f"{shares.get(MT1)}/{shares.get(MT2)}")
    report.check("mass balance sums to one", "1.00", str(sum(shares.values())))

    report.step("trace custody from farm to port across transport modes")
    rs = node.evaluate_raw(TRACE_QUERY)
    processes = {r["process"].value for r in rs.rows}
    report.check("trace covers at least three process hops", True, len(processes) >= 3)
    report.check("river leg in trace", True, AGT + "RiverTransport_1" in processes)
    report.check("road leg in trace", True, AGT + "RoadTransport_1" in processes)

    report.step("carbon footprint metric retrievable across platforms")
    rs = node.federated_query(METRIC_QUERY)
    values = {r["value"].lexical for r in rs.rows if "value" in r}
    names = {r["name"].lexical for r in rs.rows if "name" in r}
    report.check("carbon metric value", ["1.25"], sorted(values))
    report.check("carbon metric name", ["Carbon Footprint (Scope 3)"], sorted(names))

    report.step("unauthorized retailer query is denied and audited")
    audit_before = len(node.contracts.audit)
    query = f'PREFIX agt: <{AGT}> SELECT ?o WHERE {{ ?s agt:uniqueId "{EXPORT_ID}" ; agt:hasComposition ?o . }}'
    body = {"query": query}
    request = node.signed_request(
        "query", body, contract_id=None,
        requester_id=eco.agent("retailer"), keys=eco.keys["retailer"],
    )
    response = node.handle_request(request)
    report.check("query without contract denied", "denied:no_contract",
                 f"{response.status}:{response.error_reason}")
    report.check("denial audited", audit_before + 1, len(node.contracts.audit))

    report.step("extension classes resolve to core superclasses")
    checks = [
        node.registry.is_subclass(SOY + "CompositeBatch", AGT + "CollectiveAsset"),
        node.registry.is_subclass(SOY + "RoadTransport", AGT + "Process"),
        node.registry.is_subclass(SOY + "RiverTransport", AGT + "Process"),
    ]
    report.check("soy extension subclass closure", [True, True, True], checks)
    return report

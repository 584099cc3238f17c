"""A three-node simulated federation: coffee, soy, and beef platforms over a
shared identity directory, ledger network, and settlement engine.

Everything is deterministic for a fixed seed and start time: agent keys
derive from seeded hashes and the simulation clock only moves when a
scenario advances it.
"""
from __future__ import annotations

import hashlib
from datetime import datetime, timedelta, timezone
from typing import Dict, Optional

from ..identity import IdentityDirectory, KeyPair
from ..ledger import LedgerNetwork, SettlementEngine
from ..node import InProcessResolver, NodeConfig, PlatformNode
from ..terms import AGT_NS, RDF_TYPE, Iri

AGT = AGT_NS

COFFEE_ENDPOINT = "https://coffee-platform.test/sparql"
SOY_ENDPOINT = "https://soy-platform.test/sparql"
BEEF_ENDPOINT = "https://beef-platform.test/sparql"

PROVIDERS = ("BrazilAgriChain", "EUCertChain", "CoffeeChainLedger")

COFFEE_EXTENSION = """
@prefix : <http://example.org/ns/agritrustcore#> .
@prefix coffee: <http://example.org/ns/coffee#> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .

coffee:CoffeeCherryBatch a owl:Class ; rdfs:subClassOf :CollectiveAsset ;
  rdfs:label "Coffee Cherry Batch" .
coffee:WetProcessing a owl:Class ; rdfs:subClassOf :Process ;
  rdfs:label "Wet Processing" .
coffee:SustainableCertificate a owl:Class ; rdfs:subClassOf :Certificate ;
  rdfs:label "Sustainable Certificate" .
"""

SOY_EXTENSION = """
@prefix : <http://example.org/ns/agritrustcore#> .
@prefix soy: <http://example.org/ns/soy#> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .

soy:CompositeBatch a owl:Class ; rdfs:subClassOf :CollectiveAsset ;
  rdfs:label "Composite Batch" .
soy:RoadTransport a owl:Class ; rdfs:subClassOf :Transport ;
  rdfs:label "Road Transport" .
soy:RiverTransport a owl:Class ; rdfs:subClassOf :Transport ;
  rdfs:label "River Transport" .
soy:YieldPerHectare a owl:Class ; rdfs:subClassOf :EfficiencyMetric ;
  rdfs:label "Yield per Hectare" .
"""

BEEF_EXTENSION = """
@prefix : <http://example.org/ns/agritrustcore#> .
@prefix beef: <http://example.org/ns/beef#> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .

beef:CowCalfOperation a owl:Class ; rdfs:subClassOf :Process ;
  rdfs:label "Cow-Calf Operation" .
beef:BackgroundingOperation a owl:Class ; rdfs:subClassOf :Process ;
  rdfs:label "Backgrounding Operation" .
beef:FinishingOperation a owl:Class ; rdfs:subClassOf :Process ;
  rdfs:label "Finishing Operation" .
"""

AGENTS = {
    "farm": AGT + "Farm_FazendaBrasil",
    "certifier": AGT + "Certifier_EuroSus",
    "retailer": AGT + "Retailer_EuropeMart",
    "soy_farm_mt1": AGT + "Farm_MT_001",
    "soy_farm_mt2": AGT + "Farm_MT_002",
    "trader": AGT + "Trader_Santos",
    "rancher": AGT + "Rancher_BoiBom",
    "worker": AGT + "Worker_Joao",
    "analytics": AGT + "Analytics_EcoMetrics",
}


class SimClock:
    def __init__(self, start: datetime) -> None:
        self.now = start

    def __call__(self) -> datetime:
        return self.now

    def advance(self, *, days: float = 0, seconds: float = 0) -> datetime:
        self.now = self.now + timedelta(days=days, seconds=seconds)
        return self.now

    def set(self, value: datetime) -> datetime:
        self.now = value
        return self.now


def seeded_keypair(seed: int, name: str) -> KeyPair:
    return KeyPair.from_seed(hashlib.sha256(f"{seed}:{name}".encode()).digest())


class Ecosystem:
    def __init__(self, seed: int = 0, start: Optional[datetime] = None) -> None:
        self.seed = seed
        self.clock = SimClock(start or datetime(2024, 6, 25, 10, 0, 0, tzinfo=timezone.utc))
        self.directory = IdentityDirectory()
        self.ledger = LedgerNetwork()
        for name in PROVIDERS:
            self.ledger.add_provider(name, consensus_label=f"simulated-{name.lower()}")
        self.settlement = SettlementEngine(self.ledger)

        self.keys: Dict[str, KeyPair] = {}
        for label, iri in AGENTS.items():
            keys = seeded_keypair(seed, iri)
            self.directory.register(iri, keys.public_bytes())
            self.keys[label] = keys

        self.resolver = InProcessResolver()
        self.nodes: Dict[str, PlatformNode] = {}
        for name, endpoint, base, extension, roles in (
            ("coffee", COFFEE_ENDPOINT, "https://coffee-platform.test",
             COFFEE_EXTENSION, ["producer"]),
            ("soy", SOY_ENDPOINT, "https://soy-platform.test",
             SOY_EXTENSION, ["producer", "certifier"]),
            ("beef", BEEF_ENDPOINT, "https://beef-platform.test",
             BEEF_EXTENSION, ["producer", "provider"]),
        ):
            config = NodeConfig(
                node_id=f"{base}/platform",
                base_iri=base,
                listen_endpoint=endpoint,
                peer_endpoints=[e for e in (COFFEE_ENDPOINT, SOY_ENDPOINT, BEEF_ENDPOINT) if e != endpoint],
                ledger_providers=list(PROVIDERS),
                anchor_provider="BrazilAgriChain",
                key_hex=seeded_keypair(seed, base).private_hex(),
                role_labels=roles,
            )
            node = PlatformNode(
                config,
                directory=self.directory,
                ledger=self.ledger,
                clock=self.clock,
                resolver=self.resolver,
                extension_texts=[extension],
            )
            self.resolver.add(endpoint, node)
            self.nodes[name] = node

        # Commodity extensions everywhere: peers must understand each other's
        # terms to answer federated queries (shared registry discipline).
        # Re-registration is additive, so the owning node is unaffected.
        for node in self.nodes.values():
            for ext in (COFFEE_EXTENSION, SOY_EXTENSION, BEEF_EXTENSION):
                node.registry.register_extension(ext)

    @property
    def coffee(self) -> PlatformNode:
        return self.nodes["coffee"]

    @property
    def soy(self) -> PlatformNode:
        return self.nodes["soy"]

    @property
    def beef(self) -> PlatformNode:
        return self.nodes["beef"]

    def agent(self, label: str) -> str:
        return AGENTS[label]

    def declare_agent(self, node: PlatformNode, label: str, *types: str) -> str:
        iri = AGENTS[label]
        for t in types or (AGT + "Agent",):
            node.graph.add(Iri(iri), Iri(RDF_TYPE), Iri(t))
        return iri

    def now(self) -> datetime:
        return self.clock.now

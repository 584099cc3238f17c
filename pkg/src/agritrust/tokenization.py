"""Asset tokenization, signed field observations, and the offline edge
capture queue.

Anchor payloads cover the asset's state at tokenization time: its core
triples plus the observations named in the token record. Linkage added later
(certificates, metrics, further observations, contract references) carries
its own anchors and does not invalidate earlier ones.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Tuple

from .graph import Graph
from .identity import IdentityDirectory, KeyPair
from .ledger import LedgerNetwork
from .ontology import OntologyRegistry
from .shacl import NodeShape, validate
from .terms import (
    AGT_NS,
    APP_NS,
    PROV_NS,
    RDF_TYPE,
    XSD_DATETIME,
    XSD_DECIMAL,
    BlankNode,
    Iri,
    Literal,
    Term,
    Triple,
    format_datetime,
)
from .turtle import entity_subgraph, serialize_turtle

AGT = AGT_NS
APP = APP_NS

FRACTION_TOLERANCE = Decimal("1e-9")

# Linkage that accrues after tokenization; excluded from anchor payloads.
MUTABLE_LINK_PREDICATES = {
    AGT + "hasCertificate",
    AGT + "hasCrossChainReference",
    AGT + "governedBy",
    AGT + "hasEfficiencyMetric",
    AGT + "hasObservation",
    AGT + "blockchainTransactionId",
    AGT + "hasProvenance",
}

APPLICATION_FORM_FIELDS = (
    "product_id",
    "plot_id",
    "dilution",
    "weather",
    "start_time",
    "end_time",
    "gps",
    "worker_id",
)


class TokenizationError(Exception):
    pass


class DuplicateUniqueId(TokenizationError):
    def __init__(self, unique_id: str) -> None:
        super().__init__(f"unique id {unique_id!r} is already tokenized on this node")
        self.unique_id = unique_id


class FractionSumError(TokenizationError):
    def __init__(self, actual: Decimal) -> None:
        super().__init__(f"composition fractions sum to {actual}, expected 1.0")
        self.actual = actual


class UnknownComponent(TokenizationError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"component asset {iri} does not exist")
        self.iri = iri


class IncompleteForm(TokenizationError):
    def __init__(self, missing: Sequence[str]) -> None:
        super().__init__(f"form is missing fields: {', '.join(missing)}")
        self.missing = tuple(missing)


class UnregisteredSigner(TokenizationError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"signer {iri} has no registered key")
        self.iri = iri


class ShapeViolationError(TokenizationError):
    def __init__(self, violations) -> None:
        super().__init__("; ".join(f"{v.shape_iri}:{v.path}:{v.constraint_kind}" for v in violations))
        self.violations = violations


@dataclass
class ObservationSpec:
    iri: str
    value: str
    observed_at: datetime
    datatype: str = "http://www.w3.org/2001/XMLSchema#string"
    unit: Optional[str] = None

    def triples(self, feature: str) -> List[Triple]:
        obs = Iri(self.iri)
        out = [
            Triple(obs, Iri(RDF_TYPE), Iri(AGT + "Observation")),
            Triple(obs, Iri(AGT + "observationValue"), Literal(self.value, self.datatype)),
            Triple(obs, Iri(AGT + "observationDate"),
                   Literal(format_datetime(self.observed_at), XSD_DATETIME)),
            Triple(Iri(feature), Iri(AGT + "hasObservation"), obs),
        ]
        if self.unit:
            out.append(Triple(obs, Iri(AGT + "observationUnit"), Iri(self.unit)))
        return out


@dataclass
class AssetSpec:
    iri: str
    unique_id: str
    owner: str
    types: Tuple[str, ...] = (AGT + "Asset",)
    kind: str = "collective"  # individual | collective | composite
    observations: Tuple[ObservationSpec, ...] = ()
    composition: Tuple[Tuple[str, Decimal], ...] = ()
    extra_triples: Tuple[Triple, ...] = ()

    def triples(self) -> List[Triple]:
        asset = Iri(self.iri)
        out = [Triple(asset, Iri(RDF_TYPE), Iri(t)) for t in self.types]
        out.append(Triple(asset, Iri(AGT + "uniqueId"), Literal(self.unique_id)))
        out.append(Triple(asset, Iri(AGT + "ownedBy"), Iri(self.owner)))
        for i, (component, fraction) in enumerate(self.composition):
            # Shares are IRI nodes so their identity survives distribution
            # across federation peers.
            share = Iri(f"{self.iri}/share{i}")
            out.append(Triple(asset, Iri(AGT + "composedOf"), Iri(component)))
            out.append(Triple(asset, Iri(AGT + "hasComposition"), share))
            out.append(Triple(share, Iri(RDF_TYPE), Iri(AGT + "CompositionShare")))
            out.append(Triple(share, Iri(AGT + "componentAsset"), Iri(component)))
            out.append(Triple(share, Iri(AGT + "componentFraction"), Literal(str(fraction), XSD_DECIMAL)))
        for spec in self.observations:
            out.extend(spec.triples(self.iri))
        out.extend(self.extra_triples)
        return out


@dataclass
class AssetRecord:
    iri: str
    unique_id: str
    kind: str
    owner: str
    observations: Tuple[str, ...] = ()
    composition: Tuple[Tuple[str, Decimal], ...] = ()


@dataclass
class TokenRecord:
    iri: str
    represents: str
    created_at: datetime
    provider: str
    tx_id: str
    issuer_platform: str
    anchored_observations: Tuple[str, ...] = ()


@dataclass
class SignedObservation:
    iri: str
    value: str
    observed_at: datetime
    feature: str
    signer: str
    signature: bytes
    unit: Optional[str] = None
    device_meta: Optional[dict] = None

    def canonical_payload(self) -> bytes:
        body = {
            "iri": self.iri,
            "value": self.value,
            "observed_at": format_datetime(self.observed_at),
            "feature": self.feature,
            "signer": self.signer,
            "unit": self.unit,
            "device": self.device_meta or {},
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def anchor_payload(graph: Graph, root: str, extra_roots: Sequence[str] = ()) -> bytes:
    """Canonical bytes for an entity anchor: the root's subgraph without
    mutable linkage, each extra root's full subgraph, and the hasObservation
    links from the root to anchored observations."""
    combined = Graph()
    for t in entity_subgraph(graph, Iri(root)):
        if t.predicate.value not in MUTABLE_LINK_PREDICATES:
            combined.insert(t)
    for extra in extra_roots:
        combined.insert(Triple(Iri(root), Iri(AGT + "hasObservation"), Iri(extra)))
        for t in entity_subgraph(graph, Iri(extra)):
            combined.insert(t)
    return serialize_turtle(combined).encode("utf-8")


class TokenizationService:
    """Per-node tokenization; writes to the node graph serialize."""

    def __init__(
        self,
        node_graph: Graph,
        registry: OntologyRegistry,
        shapes: Sequence[NodeShape],
        ledger: LedgerNetwork,
        directory: IdentityDirectory,
        base_iri: str,
        platform_iri: str,
        provider_iris: Dict[str, str],
    ) -> None:
        self.graph = node_graph
        self.registry = registry
        self.shapes = list(shapes)
        self.ledger = ledger
        self.directory = directory
        self.base_iri = base_iri.rstrip("/#")
        self.platform_iri = platform_iri
        self.provider_iris = provider_iris
        self.tokens: Dict[str, TokenRecord] = {}
        self._write_lock = threading.Lock()

    def token_iri(self, unique_id: str) -> str:
        return f"{self.base_iri}/token/{unique_id}"

    def tokenize_asset(self, spec: AssetSpec, provider: str, now: datetime) -> TokenRecord:
        with self._write_lock:
            if self.graph.match(None, Iri(AGT + "uniqueId"), Literal(spec.unique_id)):
                raise DuplicateUniqueId(spec.unique_id)
            if spec.kind == "composite" or spec.composition:
                check_fractions(spec.composition)
                for component, _ in spec.composition:
                    if not self.graph.match(Iri(component), None, None):
                        raise UnknownComponent(component)

            candidate = self.graph.copy()
            new_triples = spec.triples()
            for t in new_triples:
                candidate.insert(t)
            new_subjects = {t.subject for t in new_triples}
            report = validate(candidate, self.shapes, self.registry)
            touching = [v for v in report.violations if v.focus_node in new_subjects]
            if touching:
                raise ShapeViolationError(touching)

            for t in new_triples:
                self.graph.insert(t)
            payload = anchor_payload(self.graph, spec.iri, [o.iri for o in spec.observations])
            tx = self.ledger.register(provider, payload, "token", self.platform_iri, now)

            token_iri = self.token_iri(spec.unique_id)
            provider_iri = self.provider_iris.get(provider, f"{self.base_iri}/provider/{provider}")
            for t in (
                Triple(Iri(token_iri), Iri(RDF_TYPE), Iri(AGT + "Token")),
                Triple(Iri(token_iri), Iri(AGT + "represents"), Iri(spec.iri)),
                Triple(Iri(token_iri), Iri(AGT + "creationDate"),
                       Literal(format_datetime(now), XSD_DATETIME)),
                Triple(Iri(token_iri), Iri(AGT + "registeredOnBlockchain"), Iri(provider_iri)),
                Triple(Iri(token_iri), Iri(AGT + "blockchainTransactionId"), Literal(tx.tx_id)),
            ):
                self.graph.insert(t)

            record = TokenRecord(
                iri=token_iri,
                represents=spec.iri,
                created_at=now,
                provider=provider,
                tx_id=tx.tx_id,
                issuer_platform=self.platform_iri,
                anchored_observations=tuple(o.iri for o in spec.observations),
            )
            self.tokens[spec.unique_id] = record
            return record

    def verify_token(self, unique_id: str) -> Tuple[bool, str]:
        record = self.tokens.get(unique_id)
        if record is None:
            return False, "unknown_token"
        payload = anchor_payload(self.graph, record.represents, record.anchored_observations)
        check = self.ledger.verify_anchor(record.provider, record.tx_id, payload)
        return check.ok, check.reason

    def record_application_process(
        self,
        record: SignedObservation,
        plot: str,
        chemical: str,
        worker: str,
        provider: str,
        now: datetime,
    ) -> str:
        """Insert an agrochemical application process with its signed record
        and anchor it. The record must verify before anything is written."""
        if not self.directory.registered(worker):
            raise UnregisteredSigner(worker)
        if not self.directory.verify(worker, record.canonical_payload(), record.signature):
            raise TokenizationError("application record signature does not verify")

        form = json.loads(record.value)
        process_iri = f"{self.base_iri}/process/application_{record.iri.rsplit('/', 1)[-1]}"
        record_iri = f"{self.base_iri}/record/{record.iri.rsplit('/', 1)[-1]}"
        with self._write_lock:
            triples = [
                Triple(Iri(process_iri), Iri(RDF_TYPE), Iri(APP + "AgrochemicalApplication")),
                Triple(Iri(process_iri), Iri(AGT + "hasInput"), Iri(chemical)),
                Triple(Iri(process_iri), Iri(AGT + "hasOutput"), Iri(plot)),
                Triple(Iri(process_iri), Iri(PROV_NS + "wasAssociatedWith"), Iri(worker)),
                Triple(Iri(process_iri), Iri(PROV_NS + "startedAtTime"),
                       Literal(form["start_time"], XSD_DATETIME)),
                Triple(Iri(process_iri), Iri(PROV_NS + "endedAtTime"),
                       Literal(form["end_time"], XSD_DATETIME)),
                Triple(Iri(process_iri), Iri(APP + "hasApplicationRecord"), Iri(record_iri)),
                # The treated asset's state results from the application.
                Triple(Iri(plot), Iri(AGT + "hasProvenance"), Iri(process_iri)),
                Triple(Iri(record_iri), Iri(RDF_TYPE), Iri(APP + "ApplicationRecord")),
                Triple(Iri(record_iri), Iri(APP + "digitalSignature"), Literal(record.signature.hex())),
                Triple(Iri(record_iri), Iri(APP + "product"), Literal(form["product_id"])),
                Triple(Iri(record_iri), Iri(APP + "dilution"), Literal(form["dilution"])),
                Triple(Iri(record_iri), Iri(APP + "weather"), Literal(form["weather"])),
                Triple(Iri(record_iri), Iri(APP + "gps"), Literal(form["gps"])),
            ]
            candidate = self.graph.copy()
            for t in triples:
                candidate.insert(t)
            report = validate(candidate, self.shapes, self.registry)
            touching = [v for v in report.violations if v.focus_node == Iri(process_iri)]
            if touching:
                raise ShapeViolationError(touching)
            for t in triples:
                self.graph.insert(t)
            payload = anchor_payload(self.graph, process_iri, [record_iri])
            tx = self.ledger.register(provider, payload, "token", self.platform_iri, now)
            self.graph.insert(
                Triple(Iri(process_iri), Iri(AGT + "blockchainTransactionId"), Literal(tx.tx_id))
            )
        return process_iri


def check_fractions(composition: Sequence[Tuple[str, Decimal]]) -> None:
    if not composition:
        raise FractionSumError(Decimal("0"))
    total = Decimal("0")
    for _, fraction in composition:
        f = Decimal(fraction)
        if not (Decimal("0") < f <= Decimal("1")):
            raise TokenizationError(f"fraction {f} outside (0, 1]")
        total += f
    if abs(total - Decimal("1")) > FRACTION_TOLERANCE:
        raise FractionSumError(total)


def compose_batch(
    components: Sequence[Tuple[str, Decimal]],
    unique_id: str,
    iri: str,
    owner: str,
    types: Sequence[str] = (AGT + "CollectiveAsset",),
    node_graph: Optional[Graph] = None,
) -> AssetSpec:
    """Composite batch from origin components with reified (component,
    fraction) shares; fractions must sum to 1 within 1e-9."""
    check_fractions(components)
    if node_graph is not None:
        for component, _ in components:
            if not node_graph.match(Iri(component), None, None):
                raise UnknownComponent(component)
    return AssetSpec(
        iri=iri,
        unique_id=unique_id,
        owner=owner,
        types=tuple(types),
        kind="composite",
        composition=tuple((c, Decimal(f)) for c, f in components),
    )


def capture_signed_observation(
    form_data: dict,
    signer_key: KeyPair,
    directory: IdentityDirectory,
    now: datetime,
    device_meta: Optional[dict] = None,
    iri: Optional[str] = None,
) -> SignedObservation:
    """Edge capture: validate the fixed form, embed GPS and timestamp, and
    sign the canonical serialization with the worker's key. Works offline;
    verification needs only the directory's public key."""
    missing = [f for f in APPLICATION_FORM_FIELDS if not form_data.get(f)]
    if missing:
        raise IncompleteForm(missing)
    worker = form_data["worker_id"]
    if not directory.registered(worker):
        raise UnregisteredSigner(worker)
    if directory.public_key(worker) != signer_key.public_bytes():
        raise UnregisteredSigner(worker)
    meta = dict(device_meta or {})
    meta.setdefault("gps", form_data["gps"])
    observation = SignedObservation(
        iri=iri or f"urn:edge:observation:{form_data['plot_id'].rsplit('/', 1)[-1]}:{format_datetime(now)}",
        value=json.dumps({k: form_data[k] for k in APPLICATION_FORM_FIELDS}, sort_keys=True),
        observed_at=now,
        feature=form_data["plot_id"],
        signer=worker,
        signature=b"",
        device_meta=meta,
    )
    observation.signature = signer_key.sign(observation.canonical_payload())
    return observation


@dataclass
class EdgeQueueEntry:
    payload: SignedObservation
    enqueued_at: datetime
    attempts: int = 0
    state: str = "queued"  # queued | submitted | acknowledged
    tx_id: Optional[str] = None
    error: Optional[str] = None


class EdgeQueue:
    """FIFO offline queue: capture accumulates while disconnected; flush
    submits in order with exactly-once semantics keyed by payload + signer."""

    def __init__(self) -> None:
        self.entries: List[EdgeQueueEntry] = []
        self._acked_keys: Dict[Tuple[bytes, str], str] = {}
        self._lock = threading.Lock()

    def enqueue(self, payload: SignedObservation, now: datetime) -> EdgeQueueEntry:
        entry = EdgeQueueEntry(payload=payload, enqueued_at=now)
        with self._lock:
            self.entries.append(entry)
        return entry

    def pending(self) -> List[EdgeQueueEntry]:
        return [e for e in self.entries if e.state != "acknowledged"]

    def flush(self, connectivity: str, submit) -> List[EdgeQueueEntry]:
        """submit(payload) -> tx_id; entries drain in enqueue order, and a
        failed submission halts the drain so order is preserved."""
        if connectivity != "up":
            return []
        acked: List[EdgeQueueEntry] = []
        with self._lock:
            for entry in self.entries:
                if entry.state == "acknowledged":
                    continue
                key = (entry.payload.signature, entry.payload.signer)
                if key in self._acked_keys:
                    entry.state = "acknowledged"
                    entry.tx_id = self._acked_keys[key]
                    acked.append(entry)
                    continue
                entry.attempts += 1
                entry.state = "submitted"
                try:
                    tx_id = submit(entry.payload)
                except Exception as exc:  # recorded on the entry, retried later
                    entry.state = "queued"
                    entry.error = str(exc)
                    break
                entry.state = "acknowledged"
                entry.tx_id = tx_id
                self._acked_keys[key] = tx_id
                acked.append(entry)
        return acked

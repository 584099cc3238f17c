"""Machine-readable data contracts: creation, status, authorization,
coverage scoping, audit logging, and revocation.

Enforcement restricts evaluation to a view graph built from the contract's
covered closure instead of injecting textual filters into queries; path
expressions cannot escape a view that simply does not contain the triples.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from decimal import Decimal, InvalidOperation
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .graph import Graph
from .identity import IdentityDirectory
from .ledger import LedgerNetwork
from .ontology import OntologyRegistry
from .shacl import NodeShape, validate
from .terms import (
    AGT_NS,
    DCT_NS,
    PROV_NS,
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DATETIME,
    Iri,
    Literal,
    Term,
    Triple,
    boolean,
    format_datetime,
    parse_datetime,
)
from .turtle import canonical_bytes

AGT = AGT_NS
ACCESS_LEVELS = ("read_only", "read_only_public")

# Order matters: the first failed check is the reported reason.
REASON_OK = "ok"
REASON_REVOKED = "revoked"
REASON_NOT_YET_VALID = "not_yet_valid"
REASON_EXPIRED = "expired"
REASON_WRONG_CONSUMER = "wrong_consumer"
REASON_PURPOSE_MISMATCH = "purpose_mismatch"
REASON_PROHIBITED_USAGE = "prohibited_usage"
REASON_ASSET_NOT_COVERED = "asset_not_covered"

# Provenance, certificate, observation, contract linkage, plus the signed
# application records that evidence covered processes.
COVERAGE_EDGES = (
    AGT + "hasProvenance",
    AGT + "hasInput",
    AGT + "hasOutput",
    AGT + "hasCertificate",
    AGT + "hasObservation",
    AGT + "governedBy",
    AGT + "coversAsset",
    AGT + "coversObservation",
    "http://example.org/ns/application#hasApplicationRecord",
)
COVERAGE_DEPTH_LIMIT = 16


class ContractError(Exception):
    pass


class InvalidWindow(ContractError):
    pass


class UncoveredAsset(ContractError):
    def __init__(self, iri: str) -> None:
        super().__init__(f"covered asset {iri} does not exist in the producer graph")
        self.iri = iri


class SignatureInvalid(ContractError):
    pass


class ShapeViolation(ContractError):
    def __init__(self, violations) -> None:
        super().__init__("; ".join(f"{v.shape_iri}:{v.path}:{v.constraint_kind}" for v in violations))
        self.violations = violations


class UnknownContract(ContractError):
    def __init__(self, contract_id: str) -> None:
        super().__init__(f"unknown contract {contract_id}")
        self.contract_id = contract_id


class UnregisteredParty(ContractError):
    pass


def normalize_tag(tag: str) -> str:
    return tag.strip().lower().replace(" ", "_")


def tags_match(request_tag: str, listed_tag: str) -> bool:
    """Tags match when equal or when one extends the other at an underscore
    boundary, so "marketing" matches "marketing_activities"."""
    a, b = normalize_tag(request_tag), normalize_tag(listed_tag)
    return a == b or a.startswith(b + "_") or b.startswith(a + "_")


@dataclass
class DataContract:
    id: str
    title: str
    producer: str
    consumer: str
    purpose: str
    valid_from: datetime
    valid_until: datetime
    access_level: str = "read_only"
    covers_assets: Tuple[str, ...] = ()
    covers_observations: Tuple[str, ...] = ()
    allowed_usage: Tuple[str, ...] = ()
    prohibited_usage: Tuple[str, ...] = ()
    compensation_type: Optional[str] = None
    compensation_value: Optional[str] = None
    audit_required: bool = True
    created_at: Optional[datetime] = None
    iri: str = ""
    signature: bytes = b""
    anchor_tx: Optional[Tuple[str, str]] = None  # (provider, tx id)
    revoked_at: Optional[datetime] = None

    def compensation_amount(self) -> Optional[Decimal]:
        if self.compensation_value is None:
            return None
        try:
            return Decimal(self.compensation_value)
        except InvalidOperation:
            return None

    def covered_nodes(self) -> Set[str]:
        return set(self.covers_assets) | set(self.covers_observations)

    # -- interchange -------------------------------------------------------

    def to_json_dict(self) -> dict:
        out = {
            "id": self.id,
            "title": self.title,
            "producer": self.producer,
            "consumer": self.consumer,
            "purpose": self.purpose,
            "validFrom": format_datetime(self.valid_from),
            "validUntil": format_datetime(self.valid_until),
            "accessLevel": self.access_level,
            "coversAsset": list(self.covers_assets),
            "coversObservation": list(self.covers_observations),
            "allowedUsage": list(self.allowed_usage),
            "prohibitedUsage": list(self.prohibited_usage),
            "auditTrailRequired": self.audit_required,
        }
        if self.compensation_type is not None:
            out["compensationType"] = self.compensation_type
        if self.compensation_value is not None:
            out["compensationValue"] = self.compensation_value
        return out

    @staticmethod
    def terms_bytes(terms: dict) -> bytes:
        """Canonical serialization of contract terms, the thing the producer
        signs."""
        return json.dumps(terms, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @staticmethod
    def from_json_dict(terms: dict) -> "DataContract":
        usage = lambda key: tuple(terms.get(key, ()))  # noqa: E731
        return DataContract(
            id=terms["id"],
            title=terms.get("title", ""),
            producer=terms["producer"],
            consumer=terms["consumer"],
            purpose=terms.get("purpose", ""),
            valid_from=parse_datetime(terms["validFrom"]),
            valid_until=parse_datetime(terms["validUntil"]),
            access_level=terms.get("accessLevel", "read_only"),
            covers_assets=usage("coversAsset"),
            covers_observations=usage("coversObservation"),
            allowed_usage=usage("allowedUsage"),
            prohibited_usage=usage("prohibitedUsage"),
            compensation_type=terms.get("compensationType"),
            compensation_value=terms.get("compensationValue"),
            audit_required=bool(terms.get("auditTrailRequired", True)),
        )

    def to_triples(self) -> List[Triple]:
        c = Iri(self.iri)
        triples = [
            Triple(c, Iri(RDF_TYPE), Iri(AGT + "DataContract")),
            Triple(c, Iri(DCT_NS + "identifier"), Literal(self.id)),
            Triple(c, Iri(DCT_NS + "title"), Literal(self.title)),
            Triple(c, Iri(PROV_NS + "wasAttributedTo"), Iri(self.producer)),
            Triple(c, Iri(PROV_NS + "wasGeneratedBy"), Iri(self.consumer)),
            Triple(c, Iri(AGT + "purpose"), Literal(self.purpose)),
            Triple(c, Iri(AGT + "validFrom"), Literal(format_datetime(self.valid_from), XSD_DATETIME)),
            Triple(c, Iri(AGT + "validUntil"), Literal(format_datetime(self.valid_until), XSD_DATETIME)),
            Triple(c, Iri(AGT + "accessLevel"), Literal(self.access_level)),
            Triple(c, Iri(AGT + "auditTrailRequired"), boolean(self.audit_required)),
        ]
        if self.created_at is not None:
            triples.append(
                Triple(c, Iri(AGT + "creationDate"), Literal(format_datetime(self.created_at), XSD_DATETIME))
            )
        for asset in self.covers_assets:
            triples.append(Triple(c, Iri(AGT + "coversAsset"), Iri(asset)))
        for obs in self.covers_observations:
            triples.append(Triple(c, Iri(AGT + "coversObservation"), Iri(obs)))
        for tag in self.allowed_usage:
            triples.append(Triple(c, Iri(AGT + "allowedUsage"), Literal(tag)))
        for tag in self.prohibited_usage:
            triples.append(Triple(c, Iri(AGT + "prohibitedUsage"), Literal(tag)))
        if self.compensation_type is not None:
            triples.append(Triple(c, Iri(AGT + "compensationType"), Literal(self.compensation_type)))
        if self.compensation_value is not None:
            triples.append(Triple(c, Iri(AGT + "compensationValue"), Literal(self.compensation_value)))
        if self.anchor_tx is not None:
            triples.append(Triple(c, Iri(AGT + "blockchainTransactionId"), Literal(self.anchor_tx[1])))
        return triples

    @staticmethod
    def from_graph(graph: Graph, contract_iri: str) -> "DataContract":
        c = Iri(contract_iri)

        def one(pred: str) -> Optional[Term]:
            return graph.object(c, Iri(pred))

        def many(pred: str) -> Tuple[str, ...]:
            # Interchange documents may pack several tags into one
            # comma-separated literal; split them into items.
            values = []
            for term in graph.objects(c, Iri(pred)):
                if isinstance(term, Iri):
                    values.append(term.value)
                else:
                    values.extend(part.strip() for part in term.lexical.split(",") if part.strip())
            return tuple(sorted(values))

        ident = one(DCT_NS + "identifier")
        title = one(DCT_NS + "title")
        producer = one(PROV_NS + "wasAttributedTo")
        consumer = one(PROV_NS + "wasGeneratedBy")
        purpose = one(AGT + "purpose")
        valid_from = one(AGT + "validFrom")
        valid_until = one(AGT + "validUntil")
        if not isinstance(valid_from, Literal) or not isinstance(valid_until, Literal):
            raise ContractError(f"{contract_iri} lacks a validity window")
        access = one(AGT + "accessLevel")
        comp_type = one(AGT + "compensationType")
        comp_value = one(AGT + "compensationValue")
        audit = one(AGT + "auditTrailRequired")
        created = one(AGT + "creationDate")
        contract = DataContract(
            id=ident.lexical if isinstance(ident, Literal) else contract_iri,
            title=title.lexical if isinstance(title, Literal) else "",
            producer=producer.value if isinstance(producer, Iri) else "",
            consumer=consumer.value if isinstance(consumer, Iri) else "",
            purpose=purpose.lexical if isinstance(purpose, Literal) else "",
            valid_from=parse_datetime(valid_from.lexical),
            valid_until=parse_datetime(valid_until.lexical),
            access_level=access.lexical if isinstance(access, Literal) else "read_only",
            covers_assets=many(AGT + "coversAsset"),
            covers_observations=many(AGT + "coversObservation"),
            allowed_usage=many(AGT + "allowedUsage"),
            prohibited_usage=many(AGT + "prohibitedUsage"),
            compensation_type=comp_type.lexical if isinstance(comp_type, Literal) else None,
            compensation_value=comp_value.lexical if isinstance(comp_value, Literal) else None,
            audit_required=(audit.lexical == "true") if isinstance(audit, Literal) else True,
            created_at=parse_datetime(created.lexical) if isinstance(created, Literal) else None,
            iri=contract_iri,
        )
        return contract


@dataclass
class AccessDecision:
    granted: bool
    reason: str
    contract_id: str


@dataclass
class AuditEvent:
    seq: int
    timestamp: datetime
    contract_id: str
    consumer: str
    asset: str
    action: str  # query | export | denied | revoke
    query_hash: str
    decision_reason: str


class AuditLog:
    """Append-only event channel, totally ordered by (timestamp, seq)."""

    def __init__(self) -> None:
        self._events: List[AuditEvent] = []
        self._lock = threading.Lock()

    def append(
        self,
        timestamp: datetime,
        contract_id: str,
        consumer: str,
        asset: str,
        action: str,
        query_text: str = "",
        decision_reason: str = REASON_OK,
    ) -> AuditEvent:
        with self._lock:
            event = AuditEvent(
                seq=len(self._events),
                timestamp=timestamp,
                contract_id=contract_id,
                consumer=consumer,
                asset=asset,
                action=action,
                query_hash=hashlib.sha256(query_text.encode("utf-8")).hexdigest(),
                decision_reason=decision_reason,
            )
            self._events.append(event)
            return event

    def events(self) -> List[AuditEvent]:
        return list(self._events)

    def __len__(self) -> int:
        return len(self._events)


class ContractEngine:
    def __init__(
        self,
        registry: OntologyRegistry,
        shapes: Sequence[NodeShape],
        directory: IdentityDirectory,
        ledger: LedgerNetwork,
        anchor_provider: str,
        base_iri: str = AGT_NS.rstrip("#"),
    ) -> None:
        self.registry = registry
        self.shapes = list(shapes)
        self.directory = directory
        self.ledger = ledger
        self.anchor_provider = anchor_provider
        self.base_iri = base_iri.rstrip("/#")
        self.contracts: Dict[str, DataContract] = {}
        self.audit = AuditLog()

    # -- lifecycle -----------------------------------------------------------

    def create_contract(
        self,
        terms: dict,
        data_graph: Graph,
        signature: bytes,
        now: datetime,
    ) -> DataContract:
        contract = DataContract.from_json_dict(terms)
        if contract.valid_from >= contract.valid_until:
            raise InvalidWindow(
                f"validFrom {terms['validFrom']} is not before validUntil {terms['validUntil']}"
            )
        if not contract.covers_assets:
            raise ContractError("contract covers no assets")
        overlap = {
            normalize_tag(t) for t in contract.allowed_usage
        } & {normalize_tag(t) for t in contract.prohibited_usage}
        if overlap:
            raise ContractError(f"usage tags both allowed and prohibited: {sorted(overlap)}")
        if contract.access_level not in ACCESS_LEVELS:
            raise ContractError(f"unknown access level {contract.access_level!r}")
        for party in (contract.producer, contract.consumer):
            if not self.directory.registered(party):
                raise UnregisteredParty(party)
        if not self.directory.verify(contract.producer, DataContract.terms_bytes(terms), signature):
            raise SignatureInvalid(f"producer signature for {contract.id} does not verify")

        report = validate(data_graph, self.shapes, self.registry)
        for asset in contract.covers_assets:
            if not data_graph.match(Iri(asset), None, None):
                raise UncoveredAsset(asset)
            asset_violations = [v for v in report.violations if v.focus_node == Iri(asset)]
            if asset_violations:
                raise ShapeViolation(asset_violations)

        contract.iri = f"{self.base_iri}/contract/{contract.id}"
        contract.created_at = now
        contract.signature = signature
        for t in contract.to_triples():
            data_graph.insert(t)

        contract_report = validate(data_graph, self.shapes, self.registry)
        own_violations = [v for v in contract_report.violations if v.focus_node == Iri(contract.iri)]
        if own_violations:
            raise ShapeViolation(own_violations)

        payload = canonical_bytes(data_graph, Iri(contract.iri))
        tx = self.ledger.register(self.anchor_provider, payload, "contract", contract.producer, now)
        contract.anchor_tx = (self.anchor_provider, tx.tx_id)
        data_graph.insert(
            Triple(Iri(contract.iri), Iri(AGT + "blockchainTransactionId"), Literal(tx.tx_id))
        )
        self.contracts[contract.id] = contract
        return contract

    def get(self, contract_id: str) -> DataContract:
        if contract_id not in self.contracts:
            raise UnknownContract(contract_id)
        return self.contracts[contract_id]

    @staticmethod
    def verify_status(contract: DataContract, now: datetime) -> str:
        if contract.revoked_at is not None:
            return "revoked"
        if now < contract.valid_from:
            return "pending"
        if now > contract.valid_until:
            return "expired"
        return "active"  # the window is closed at both ends

    def authorize(self, request: dict, contract: DataContract, now: datetime) -> AccessDecision:
        """Checks run in a fixed order; the first failure is reported."""
        public = contract.access_level == "read_only_public"
        if contract.revoked_at is not None:
            return AccessDecision(False, REASON_REVOKED, contract.id)
        if now < contract.valid_from:
            return AccessDecision(False, REASON_NOT_YET_VALID, contract.id)
        if now > contract.valid_until:
            return AccessDecision(False, REASON_EXPIRED, contract.id)
        if not public and request.get("consumer") != contract.consumer:
            return AccessDecision(False, REASON_WRONG_CONSUMER, contract.id)
        purpose = request.get("purpose_tag")
        if purpose is not None:
            if normalize_tag(purpose) != normalize_tag(contract.purpose):
                return AccessDecision(False, REASON_PURPOSE_MISMATCH, contract.id)
        elif not public:
            return AccessDecision(False, REASON_PURPOSE_MISMATCH, contract.id)
        usage = request.get("usage_tag")
        if usage is not None:
            if any(tags_match(usage, listed) for listed in contract.prohibited_usage):
                return AccessDecision(False, REASON_PROHIBITED_USAGE, contract.id)
            if contract.allowed_usage and not any(
                tags_match(usage, listed) for listed in contract.allowed_usage
            ):
                return AccessDecision(False, REASON_PROHIBITED_USAGE, contract.id)
        asset = request.get("asset")
        if asset is not None and asset not in contract.covered_nodes():
            return AccessDecision(False, REASON_ASSET_NOT_COVERED, contract.id)
        return AccessDecision(True, REASON_OK, contract.id)

    # -- coverage scoping -------------------------------------------------------

    def covered_closure(self, contract: DataContract, data_graph: Graph) -> Set[Term]:
        """Covered assets/observations plus provenance, certificate and
        contract nodes reachable from them, depth-limited."""
        direct = {Iri(n) for n in contract.covered_nodes()}
        closure: Set[Term] = set(direct)
        if contract.iri:
            closure.add(Iri(contract.iri))
        # Tokens representing covered assets join the closure.
        for node in direct:
            for t in data_graph.match(None, Iri(AGT + "represents"), node):
                closure.add(t.subject)
        frontier = list(closure)
        depth = 0
        while frontier and depth < COVERAGE_DEPTH_LIMIT:
            nxt: List[Term] = []
            for node in frontier:
                if isinstance(node, Literal):
                    continue
                for edge in COVERAGE_EDGES:
                    for t in data_graph.match(node, Iri(edge), None):
                        if t.object not in closure and not isinstance(t.object, Literal):
                            closure.add(t.object)
                            nxt.append(t.object)
            frontier = nxt
            depth += 1
        return closure

    def scope_view(self, contract: DataContract, data_graph: Graph, ontology_graph: Graph) -> Graph:
        """The evaluation view for a granted request: triples rooted in the
        covered closure, triples pointing at directly covered nodes, and the
        ontology itself."""
        closure = self.covered_closure(contract, data_graph)
        direct = {Iri(n) for n in contract.covered_nodes()}
        view = Graph()
        for t in data_graph:
            if t.subject in closure or t.object in direct:
                view.insert(t)
        view.update(ontology_graph)
        return view

    def scope_query(self, ast, contract: DataContract, data_graph: Graph, ontology_graph: Graph):
        """Scope an already-authorized query: the AST passes through
        untouched and evaluation is restricted by the covered view instead of
        textual filter injection, which path expressions could escape."""
        return ast, self.scope_view(contract, data_graph, ontology_graph)

    # -- audit ---------------------------------------------------------------

    def record_audit(self, **kwargs) -> AuditEvent:
        return self.audit.append(**kwargs)

    def audit_report(self, contract_id: str, window_days: int, now: datetime) -> List[dict]:
        """Events in [now - window, now], newest first, tagged COMPLIANT iff
        the access fell inside the contract validity window."""
        contract = self.get(contract_id)
        cutoff = now - timedelta(days=window_days)
        rows = []
        for event in self.audit.events():
            if event.contract_id != contract_id:
                continue
            if not (cutoff <= event.timestamp <= now):
                continue
            compliant = contract.valid_from <= event.timestamp <= contract.valid_until
            rows.append(
                {
                    "timestamp": format_datetime(event.timestamp),
                    "consumer": event.consumer,
                    "asset": event.asset,
                    "action": event.action,
                    "query_hash": event.query_hash,
                    "decision_reason": event.decision_reason,
                    "compliance": "COMPLIANT" if compliant else "NON-COMPLIANT",
                }
            )
        rows.sort(key=lambda r: r["timestamp"], reverse=True)
        return rows

    def revoke(self, contract_id: str, now: datetime, reason: str = "revoked_by_producer") -> None:
        contract = self.get(contract_id)
        if contract.revoked_at is not None:
            return  # idempotent
        contract.revoked_at = now
        payload = json.dumps(
            {"contract": contract.id, "reason": reason, "at": format_datetime(now)},
            sort_keys=True,
        ).encode("utf-8")
        tx = self.ledger.register(self.anchor_provider, payload, "revocation", contract.producer, now)
        self.audit.append(
            timestamp=now,
            contract_id=contract.id,
            consumer=contract.producer,
            asset="",
            action="revoke",
            query_text=tx.tx_id,
            decision_reason=reason,
        )

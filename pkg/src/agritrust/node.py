"""Platform node: hosts one data graph, answers the signed wire protocol
with contract enforcement, runs federated queries across peers, verifies
cross-platform certification, and reports ecosystem health.

Two federation strategies exist. Queries with explicit SERVICE blocks
dispatch each block to its endpoint and join locally; every dispatched
sub-request passes the peer's own contract enforcement. A trace request
(no SERVICE blocks, peers configured) instead matches every pattern against
the union of the local graph and accredited peers over the loopback
transport, which makes federated evaluation coincide exactly with
evaluation over the merged graph for any partition of the data.
"""
from __future__ import annotations

import threading
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, Field

from .contracts import ContractEngine, ContractError, UnknownContract
from .graph import Dataset, Graph
from .identity import IdentityDirectory, KeyPair
from .ledger import LedgerNetwork
from .ontology import (
    BUILTIN_EXTENSIONS,
    OntologyError,
    OntologyRegistry,
    builtin_text,
    core_ontology_text,
)
from .query import (
    QuerySyntaxError,
    ResultSet,
    ServiceUnreachable,
    evaluate,
    parse_query,
)
from .shacl import extract_shapes
from .terms import AGT_NS, RDF_TYPE, BlankNode, Iri, Literal, Term, Triple, format_datetime, parse_datetime
from .tokenization import TokenizationService
from .turtle import TurtleSyntaxError
from .wire import WireRequest, WireResponse, canonical_body_bytes, encode_results

AGT = AGT_NS


class BindFailure(Exception):
    pass


class OntologyLoadError(Exception):
    pass


class NodeConfig(BaseModel):
    node_id: str
    base_iri: str
    listen_endpoint: str = ""
    peer_endpoints: List[str] = Field(default_factory=list)
    ontology_source: Optional[str] = None  # path to a .ttl; None = packaged core
    extension_sources: List[str] = Field(default_factory=list)
    ledger_providers: List[str] = Field(default_factory=lambda: ["BrazilAgriChain"])
    anchor_provider: str = "BrazilAgriChain"
    key_hex: Optional[str] = None
    role_labels: List[str] = Field(default_factory=lambda: ["producer"])


class PeerResolver:
    """Transport abstraction for peer access; see InProcessResolver and the
    HTTP client in service.py."""

    def query(self, endpoint: str, query_text: str) -> ResultSet:
        raise NotImplementedError

    def health(self, endpoint: str) -> dict:
        raise NotImplementedError

    def match(self, endpoint: str, s, p, o) -> List[Triple]:
        raise NotImplementedError


class PlatformNode:
    def __init__(
        self,
        config: NodeConfig,
        directory: Optional[IdentityDirectory] = None,
        ledger: Optional[LedgerNetwork] = None,
        clock: Optional[Callable[[], datetime]] = None,
        resolver: Optional[PeerResolver] = None,
        ontology_text: Optional[str] = None,
        extension_texts: Sequence[str] = (),
    ) -> None:
        self.config = config
        self.node_id = config.node_id
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.directory = directory if directory is not None else IdentityDirectory()
        self.ledger = ledger if ledger is not None else LedgerNetwork()
        self.resolver = resolver

        try:
            if ontology_text is None and config.ontology_source:
                from pathlib import Path

                ontology_text = Path(config.ontology_source).read_text(encoding="utf-8")
            self.registry = OntologyRegistry()
            self.registry.load_core(ontology_text or core_ontology_text())
            for name in BUILTIN_EXTENSIONS:
                self.registry.register_extension(builtin_text(name))
            for source in config.extension_sources:
                from pathlib import Path

                self.registry.register_extension(Path(source).read_text(encoding="utf-8"))
            for text in extension_texts:
                self.registry.register_extension(text)
        except (TurtleSyntaxError, OntologyError, OSError) as exc:
            raise OntologyLoadError(str(exc)) from exc
        self.shapes = extract_shapes(self.registry.ontology_graph())

        self.dataset = Dataset()
        self.graph = self.dataset.graph(Iri(config.base_iri.rstrip("/#") + "/graph"))

        self.keys = (
            KeyPair.from_private_hex(config.key_hex) if config.key_hex else KeyPair.generate()
        )
        self.directory.register(self.node_id, self.keys.public_bytes())

        for name in config.ledger_providers:
            if name not in self.ledger.providers:
                self.ledger.add_provider(name)
        self.provider_iris: Dict[str, str] = {}
        base = config.base_iri.rstrip("/#")
        for name in config.ledger_providers:
            provider = self.ledger.provider(name)
            iri = f"{AGT}{name}"
            self.provider_iris[name] = iri
            self.graph.add(Iri(iri), Iri(RDF_TYPE), Iri(AGT + "BlockchainProvider"))
            self.graph.add(Iri(iri), Iri(AGT + "blockchainName"), Literal(provider.name))
            self.graph.add(Iri(iri), Iri(AGT + "consensusMechanism"), Literal(provider.consensus_label))

        self.contracts = ContractEngine(
            registry=self.registry,
            shapes=self.shapes,
            directory=self.directory,
            ledger=self.ledger,
            anchor_provider=config.anchor_provider,
            base_iri=base,
        )
        self.tokenizer = TokenizationService(
            node_graph=self.graph,
            registry=self.registry,
            shapes=self.shapes,
            ledger=self.ledger,
            directory=self.directory,
            base_iri=base,
            platform_iri=self.node_id,
            provider_iris=self.provider_iris,
        )
        self._proposals: Dict[str, dict] = {}
        self._proposal_lock = threading.Lock()

    # -- trusted in-process surface (not a wire path) ------------------------

    def graph_match(self, s, p, o) -> List[Triple]:
        return self.graph.match(s, p, o)

    def evaluate_raw(self, query_text: str, now: Optional[datetime] = None) -> ResultSet:
        ast = parse_query(query_text)
        return evaluate(
            ast,
            self.graph,
            self.registry,
            service_resolver=self._service_resolver(None),
            now=now or self.clock(),
        )

    # -- wire handling ---------------------------------------------------------

    def handle_request(self, request: WireRequest) -> WireResponse:
        if not self.directory.verify(
            request.requester_id,
            canonical_body_bytes(request.body),
            bytes.fromhex(request.signature) if request.signature else b"",
        ):
            if request.kind == "query":
                self._audit_denied(request, "signature_invalid")
            return WireResponse(status="denied", error_reason="signature_invalid")
        if request.kind == "health":
            return WireResponse(status="ok", body=self.health_body())
        if request.kind == "query":
            return self.handle_query(request)
        if request.kind == "contract_propose":
            return self.handle_contract_propose(request)
        if request.kind == "contract_sign":
            return self.handle_contract_sign(request)
        if request.kind == "token_verify":
            return self.handle_token_verify(request)
        return WireResponse(status="error", error_reason=f"unknown kind {request.kind}")

    def health_body(self) -> dict:
        return {
            "status": "ok",
            "node_id": self.node_id,
            "ontology_version": self.registry.version(),
        }

    def _audit_denied(self, request: WireRequest, reason: str) -> None:
        """Every query response, granted or denied, leaves one audit event."""
        self.contracts.record_audit(
            timestamp=self.clock(),
            contract_id=request.contract_id or "",
            consumer=request.requester_id,
            asset=request.body.get("asset", "") or "",
            action="denied",
            query_text=request.body.get("query", ""),
            decision_reason=reason,
        )

    def handle_query(self, request: WireRequest) -> WireResponse:
        body = request.body
        query_text = body.get("query", "")
        try:
            ast = parse_query(query_text)
        except QuerySyntaxError as exc:
            return WireResponse(status="error", error_reason=f"query_syntax: {exc}")

        now = self.clock()
        if not request.contract_id:
            self._audit_denied(request, "no_contract")
            return WireResponse(status="denied", error_reason="no_contract")
        try:
            contract = self.contracts.get(request.contract_id)
        except UnknownContract:
            self._audit_denied(request, "unknown_contract")
            return WireResponse(status="denied", error_reason="unknown_contract")

        decision = self.contracts.authorize(
            {
                "consumer": request.requester_id,
                "purpose_tag": body.get("purpose_tag"),
                "usage_tag": body.get("usage_tag"),
                "asset": body.get("asset"),
            },
            contract,
            now,
        )
        if not decision.granted:
            self.contracts.record_audit(
                timestamp=now,
                contract_id=contract.id,
                consumer=request.requester_id,
                asset=body.get("asset", "") or "",
                action="denied",
                query_text=query_text,
                decision_reason=decision.reason,
            )
            return WireResponse(status="denied", error_reason=decision.reason)

        view = self.contracts.scope_view(contract, self.graph, self.registry.ontology_graph())
        results = evaluate(
            ast,
            view,
            self.registry,
            service_resolver=self._service_resolver(request.contract_id),
            now=now,
        )
        self.contracts.record_audit(
            timestamp=now,
            contract_id=contract.id,
            consumer=request.requester_id,
            asset=body.get("asset", "") or "",
            action="query",
            query_text=query_text,
            decision_reason="ok",
        )
        return WireResponse(status="ok", body=encode_results(results))

    def handle_contract_propose(self, request: WireRequest) -> WireResponse:
        terms = request.body.get("terms")
        if not isinstance(terms, dict) or "id" not in terms:
            return WireResponse(status="error", error_reason="malformed_terms")
        with self._proposal_lock:
            self._proposals[terms["id"]] = terms
        return WireResponse(status="ok", body={"proposal_id": terms["id"]})

    def handle_contract_sign(self, request: WireRequest) -> WireResponse:
        body = request.body
        terms = body.get("terms")
        if terms is None and body.get("proposal_id"):
            terms = self._proposals.get(body["proposal_id"])
        if not isinstance(terms, dict):
            return WireResponse(status="error", error_reason="unknown_proposal")
        try:
            signature = bytes.fromhex(body.get("producer_signature", ""))
            contract = self.contracts.create_contract(terms, self.graph, signature, self.clock())
        except ContractError as exc:
            return WireResponse(status="error", error_reason=f"{type(exc).__name__}: {exc}")
        provider, tx_id = contract.anchor_tx
        return WireResponse(
            status="ok",
            body={"contract_id": contract.id, "anchor_provider": provider, "anchor_tx": tx_id},
        )

    def handle_token_verify(self, request: WireRequest) -> WireResponse:
        unique_id = request.body.get("unique_id", "")
        ok, reason = self.tokenizer.verify_token(unique_id)
        record = self.tokenizer.tokens.get(unique_id)
        return WireResponse(
            status="ok",
            body={
                "verified": ok,
                "reason": reason,
                "tx_id": record.tx_id if record else None,
                "provider": record.provider if record else None,
            },
        )

    # -- client-side helpers -----------------------------------------------------

    def signed_request(
        self,
        kind: str,
        body: dict,
        contract_id: Optional[str] = None,
        requester_id: Optional[str] = None,
        keys: Optional[KeyPair] = None,
    ) -> WireRequest:
        signer = keys or self.keys
        return WireRequest(
            kind=kind,
            body=body,
            requester_id=requester_id or self.node_id,
            signature=signer.sign(canonical_body_bytes(body)).hex(),
            contract_id=contract_id,
        )

    def _service_resolver(self, contract_id: Optional[str]):
        resolver = self.resolver
        if resolver is None:
            return None

        def dispatch(endpoint: str, query_text: str) -> ResultSet:
            return resolver.query(endpoint, query_text)

        return dispatch

    # -- federation ---------------------------------------------------------------

    def federated_query(
        self,
        query_text: str,
        now: Optional[datetime] = None,
        peers: Optional[Sequence[str]] = None,
    ) -> ResultSet:
        """SERVICE blocks dispatch to their endpoints; otherwise every
        pattern is matched over local plus peer graphs, so the result equals
        evaluation over the union graph."""
        ast = parse_query(query_text)
        now = now or self.clock()
        has_service = _contains_service(ast.where)
        peer_list = list(peers if peers is not None else self.config.peer_endpoints)
        if has_service or not peer_list or self.resolver is None:
            return evaluate(
                ast,
                self.graph,
                self.registry,
                service_resolver=self._service_resolver(None),
                now=now,
            )
        view = FederatedGraphView(self.graph, peer_list, self.resolver)
        results = evaluate(ast, view, self.registry, service_resolver=None, now=now)
        results.notes.extend(view.notes)
        return results

    def verify_cross_platform_certificate(
        self,
        product_unique_id: str,
        producer_endpoint: str,
        certifier_endpoint: str,
        now: Optional[datetime] = None,
    ) -> dict:
        """Certificate links fetched from the producer side are matched
        against certificate records on the certifier side; VERIFIED needs an
        unexpired record both sides agree on."""
        now = now or self.clock()
        producer_query = f"""
PREFIX agt: <{AGT}>
SELECT ?asset ?certificate WHERE {{
  ?asset a agt:CollectiveAsset ;
         agt:uniqueId "{product_unique_id}" ;
         agt:hasCertificate ?certificate .
}}"""
        certifier_query = f"""
PREFIX agt: <{AGT}>
SELECT ?certificate ?certifier ?standard ?issueDate ?expiryDate WHERE {{
  ?certificate a agt:Certificate ;
               agt:certifiedBy ?certifier ;
               agt:standard ?standard ;
               agt:creationDate ?issueDate ;
               agt:validUntil ?expiryDate .
}}"""
        outcome = {
            "product_id": product_unique_id,
            "producer_rows": 0,
            "certifier_rows": 0,
            "verification_status": "PENDING",
        }
        try:
            producer_rs = self.resolver.query(producer_endpoint, producer_query)
            certifier_rs = self.resolver.query(certifier_endpoint, certifier_query)
        except ServiceUnreachable as exc:
            outcome["error"] = str(exc)
            return outcome
        outcome["producer_rows"] = len(producer_rs.rows)
        outcome["certifier_rows"] = len(certifier_rs.rows)
        if not producer_rs.rows or not certifier_rs.rows:
            return outcome
        producer_certs: Set[Term] = {
            row["certificate"] for row in producer_rs.rows if "certificate" in row
        }
        unexpired: Set[Term] = set()
        for row in certifier_rs.rows:
            cert = row.get("certificate")
            expiry = row.get("expiryDate")
            if cert is None or expiry is None:
                continue
            if isinstance(expiry, Literal) and parse_datetime(expiry.lexical) > now:
                unexpired.add(cert)
        if producer_certs & unexpired:
            outcome["verification_status"] = "VERIFIED"
        else:
            outcome["verification_status"] = "CERTIFICATE_MISMATCH"
        return outcome

    def health_stats(self, peers: Optional[Sequence[str]] = None, now: Optional[datetime] = None) -> dict:
        now = now or self.clock()
        peer_list = list(peers if peers is not None else self.config.peer_endpoints)
        details = []
        healthy = 0
        for endpoint in peer_list:
            try:
                body = self.resolver.health(endpoint)
                ok = body.get("status") == "ok"
            except Exception as exc:
                body, ok = {"status": str(exc)}, False
            if ok:
                healthy += 1
            details.append({"endpoint": endpoint, "healthy": ok, "status": body.get("status")})
        return {
            "total_platforms": len(peer_list),
            "healthy_platforms": healthy,
            "platform_details": details,
            "last_checked": format_datetime(now),
        }


def _contains_service(group) -> bool:
    from .query.ast import OptionalGroup, ServiceClause

    for element in group.elements:
        if isinstance(element, ServiceClause):
            return True
        if isinstance(element, OptionalGroup) and _contains_service(element.group):
            return True
    return False


class FederatedGraphView:
    """Pattern-level union over the local graph and accredited peers.

    Peer blank nodes are renamed with a per-endpoint prefix so identities
    stay distinct; unreachable peers contribute nothing and are noted.
    """

    def __init__(self, local: Graph, peer_endpoints: Sequence[str], resolver: PeerResolver) -> None:
        self.local = local
        self.peer_endpoints = list(peer_endpoints)
        self.resolver = resolver
        self.notes: List[str] = []
        self._down: Set[str] = set()
        self._cache: Dict[tuple, List[Triple]] = {}

    def _prefix(self, index: int) -> str:
        return f"p{index}~"

    def _rename(self, index: int, term: Term) -> Term:
        if isinstance(term, BlankNode):
            return BlankNode(self._prefix(index) + term.id)
        return term

    def _unrename(self, index: int, term: Optional[Term]) -> Tuple[bool, Optional[Term]]:
        """Map a bound term into peer-local space; False means the term
        cannot exist on that peer (a foreign blank node)."""
        if isinstance(term, BlankNode):
            prefix = self._prefix(index)
            if term.id.startswith(prefix):
                return True, BlankNode(term.id[len(prefix):])
            return False, None
        return True, term

    def match(self, s=None, p=None, o=None) -> List[Triple]:
        key = (repr(s), repr(p), repr(o))
        if key in self._cache:
            return self._cache[key]
        out: Dict[Triple, None] = {}
        local_ok = not (isinstance(s, BlankNode) and "~" in s.id) and not (
            isinstance(o, BlankNode) and "~" in o.id
        )
        if local_ok:
            for t in self.local.match(s, p, o):
                out[t] = None
        for index, endpoint in enumerate(self.peer_endpoints):
            if endpoint in self._down:
                continue
            ok_s, ps = self._unrename(index, s)
            ok_o, po = self._unrename(index, o)
            if not (ok_s and ok_o):
                continue
            try:
                fetched = self.resolver.match(endpoint, ps, p, po)
            except ServiceUnreachable as exc:
                self._down.add(endpoint)
                self.notes.append(f"peer {endpoint} unreachable: {exc.reason}")
                continue
            for t in fetched:
                renamed = Triple(
                    self._rename(index, t.subject), t.predicate, self._rename(index, t.object)
                )
                out[renamed] = None
        result = list(out)
        self._cache[key] = result
        return result

    def terms(self) -> List[Term]:
        seen: Dict[Term, None] = {}
        for t in self.match(None, None, None):
            seen[t.subject] = None
            seen[t.object] = None
        return list(seen)


class InProcessResolver(PeerResolver):
    """Loopback transport for deterministic tests and simulations.

    With `sign_as` set, queries go through the peer's wire handler and its
    contract enforcement; otherwise they use the trusted accredited-peer
    surface that bypasses the wire entirely.
    """

    def __init__(
        self,
        nodes: Optional[Dict[str, PlatformNode]] = None,
        sign_as: Optional[Tuple[str, KeyPair]] = None,
        contract_ids: Optional[Dict[str, str]] = None,
    ) -> None:
        self.nodes: Dict[str, PlatformNode] = dict(nodes or {})
        self.down: Set[str] = set()
        self.sign_as = sign_as
        self.contract_ids = dict(contract_ids or {})

    def add(self, endpoint: str, node: PlatformNode) -> None:
        self.nodes[endpoint] = node

    def _node(self, endpoint: str) -> PlatformNode:
        if endpoint in self.down or endpoint not in self.nodes:
            raise ServiceUnreachable(endpoint, "node down" if endpoint in self.down else "unknown endpoint")
        return self.nodes[endpoint]

    def query(self, endpoint: str, query_text: str) -> ResultSet:
        node = self._node(endpoint)
        if self.sign_as is None:
            return node.evaluate_raw(query_text)
        requester_id, keys = self.sign_as
        body = {"query": query_text}
        contract_id = self.contract_ids.get(endpoint)
        if contract_id:
            contract = node.contracts.contracts.get(contract_id)
            if contract is not None:
                body["purpose_tag"] = contract.purpose
        request = WireRequest(
            kind="query",
            body=body,
            requester_id=requester_id,
            signature=keys.sign(canonical_body_bytes(body)).hex(),
            contract_id=contract_id,
        )
        response = node.handle_request(request)
        if response.status != "ok":
            raise ServiceUnreachable(endpoint, response.error_reason or response.status)
        from .wire import decode_results

        return decode_results(response.body)

    def health(self, endpoint: str) -> dict:
        return self._node(endpoint).health_body()

    def match(self, endpoint: str, s, p, o) -> List[Triple]:
        return self._node(endpoint).graph_match(s, p, o)

"""FastAPI surface for a platform node.

POST /wire carries the signed envelope; GET /health answers unauthenticated
liveness probes with the node id and active ontology version, which is what
peer health checks poll.
"""
from __future__ import annotations

import socket
from typing import List, Optional

import httpx
from fastapi import FastAPI
from pydantic import BaseModel

from .node import BindFailure, NodeConfig, PeerResolver, PlatformNode
from .query.evaluator import ResultSet, ServiceUnreachable
from .terms import Iri, Triple
from .wire import WireRequest, WireResponse, decode_results


class HealthResponse(BaseModel):
    status: str
    node_id: str
    ontology_version: str


def create_app(node: PlatformNode) -> FastAPI:
    app = FastAPI(title="agritrust platform node", version="0.1.0")

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(**node.health_body())

    @app.post("/wire", response_model=WireResponse)
    def wire(request: WireRequest) -> WireResponse:
        return node.handle_request(request)

    return app


class HttpResolver(PeerResolver):
    """Peer transport over HTTP. Queries are signed wire requests, so every
    remote evaluation passes the peer's contract enforcement."""

    def __init__(
        self,
        requester_id: str,
        keys,
        contract_ids: Optional[dict] = None,
        timeout: float = 5.0,
    ) -> None:
        self.requester_id = requester_id
        self.keys = keys
        self.contract_ids = dict(contract_ids or {})
        self.timeout = timeout

    def _post(self, endpoint: str, request: WireRequest) -> WireResponse:
        last_error = None
        for _ in range(2):  # one retry per peer
            try:
                response = httpx.post(
                    endpoint.rstrip("/") + "/wire",
                    json=request.model_dump(),
                    timeout=self.timeout,
                )
                response.raise_for_status()
                return WireResponse.model_validate(response.json())
            except httpx.HTTPError as exc:
                last_error = exc
        raise ServiceUnreachable(endpoint, str(last_error))

    def query(self, endpoint: str, query_text: str) -> ResultSet:
        from .wire import canonical_body_bytes

        body = {"query": query_text}
        request = WireRequest(
            kind="query",
            body=body,
            requester_id=self.requester_id,
            signature=self.keys.sign(canonical_body_bytes(body)).hex(),
            contract_id=self.contract_ids.get(endpoint),
        )
        response = self._post(endpoint, request)
        if response.status != "ok":
            raise ServiceUnreachable(endpoint, response.error_reason or response.status)
        return decode_results(response.body)

    def health(self, endpoint: str) -> dict:
        try:
            response = httpx.get(endpoint.rstrip("/") + "/health", timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except httpx.HTTPError as exc:
            raise ServiceUnreachable(endpoint, str(exc))

    def match(self, endpoint: str, s, p, o) -> List[Triple]:
        # Pattern-level federation over HTTP rides on the query surface.
        def text(term, var):
            if term is None:
                return var
            if isinstance(term, Iri):
                return f"<{term.value}>"
            from .terms import Literal

            if isinstance(term, Literal):
                dt = f"^^<{term.datatype}>" if term.datatype else ""
                return f'"{term.lexical}"{dt}'
            raise ServiceUnreachable(endpoint, "blank nodes cannot be addressed remotely")

        query = f"SELECT ?s ?p ?o WHERE {{ {text(s, '?s')} {text(p, '?p')} {text(o, '?o')} . }}"
        results = self.query(endpoint, query)
        out: List[Triple] = []
        for row in results.rows:
            subject = row.get("s", s)
            predicate = row.get("p", p)
            object_ = row.get("o", o)
            if subject is None or predicate is None or object_ is None:
                continue
            out.append(Triple(subject, predicate, object_))
        return out


def _check_bindable(endpoint: str) -> None:
    host, _, port = endpoint.rpartition(":")
    host = host.replace("http://", "").replace("https://", "").strip("/") or "127.0.0.1"
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, int(port)))
        probe.close()
    except OSError as exc:
        raise BindFailure(f"cannot bind {endpoint}: {exc}") from exc


def serve(node: PlatformNode, host: str = "127.0.0.1", port: int = 8151) -> None:
    """Run the node's HTTP service; raises BindFailure when the address is
    already taken."""
    import uvicorn

    _check_bindable(f"{host}:{port}")
    uvicorn.run(create_app(node), host=host, port=port, log_level="warning")


def node_from_config(config: NodeConfig, **kwargs) -> PlatformNode:
    return PlatformNode(config, **kwargs)

"""Wire protocol: signed request/response envelopes and the canonical
result encoding shared by the HTTP service, the in-process loopback
transport, and the CLI client.
"""
from __future__ import annotations

import json
from typing import Dict, List, Literal as TypingLiteral, Optional

from pydantic import BaseModel, Field

from .query.evaluator import ResultSet
from .terms import BlankNode, Iri, Literal, Term

REQUEST_KINDS = ("query", "health", "contract_propose", "contract_sign", "token_verify")


class WireRequest(BaseModel):
    kind: TypingLiteral["query", "health", "contract_propose", "contract_sign", "token_verify"]
    body: dict = Field(default_factory=dict)
    requester_id: str
    signature: str  # hex Ed25519 signature over canonical_body_bytes(body)
    contract_id: Optional[str] = None


class WireResponse(BaseModel):
    status: TypingLiteral["ok", "denied", "error"]
    body: dict = Field(default_factory=dict)
    error_reason: Optional[str] = None


def canonical_body_bytes(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_term(term: Term) -> dict:
    if isinstance(term, Iri):
        return {"kind": "iri", "value": term.value}
    if isinstance(term, BlankNode):
        return {"kind": "bnode", "value": term.id}
    out = {"kind": "literal", "value": term.lexical}
    if term.lang:
        out["lang"] = term.lang
    if term.datatype and term.datatype != "http://www.w3.org/2001/XMLSchema#string":
        out["datatype"] = term.datatype
    return out


def decode_term(data: dict) -> Term:
    kind = data.get("kind")
    if kind == "iri":
        return Iri(data["value"])
    if kind == "bnode":
        return BlankNode(data["value"])
    if kind == "literal":
        return Literal(
            data["value"],
            data.get("datatype", "http://www.w3.org/2001/XMLSchema#string"),
            data.get("lang"),
        )
    raise ValueError(f"unknown term encoding {data!r}")


def encode_results(results: ResultSet) -> dict:
    return {
        "variables": list(results.variables),
        "rows": [
            {name: encode_term(term) for name, term in row.items()} for row in results.rows
        ],
        "provenance": list(results.provenance),
        "notes": list(results.notes),
    }


def decode_results(data: dict) -> ResultSet:
    rows: List[Dict[str, Term]] = [
        {name: decode_term(enc) for name, enc in row.items()} for row in data.get("rows", [])
    ]
    return ResultSet(
        variables=list(data.get("variables", [])),
        rows=rows,
        provenance=list(data.get("provenance", [])) or ["remote"] * len(rows),
        notes=list(data.get("notes", [])),
    )

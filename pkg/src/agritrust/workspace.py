"""File-backed node state for the CLI.

A workspace directory holds one platform node's durable pieces: config,
data graph, ledger chains, contracts, audit log, and the edge queue. CLI
verbs load the workspace, delegate to the core package, and save back.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

from .contracts import DataContract
from .identity import KeyPair
from .ledger import LedgerTransaction
from .node import NodeConfig, PlatformNode
from .terms import format_datetime, parse_datetime
from .tokenization import TokenRecord
from .turtle import parse_turtle, serialize_turtle

CONFIG_FILE = "node.json"
GRAPH_FILE = "data.ttl"
CONTRACTS_FILE = "contracts.json"
TOKENS_FILE = "tokens.json"
AUDIT_FILE = "audit.jsonl"
QUEUE_FILE = "queue.jsonl"
IDENTITIES_FILE = "identities.json"
LEDGER_DIR = "ledger"
KEY_FILE = "node.key"


def _tx_to_dict(tx: LedgerTransaction) -> dict:
    return {
        "seq": tx.seq,
        "tx_id": tx.tx_id,
        "payload_hash": tx.payload_hash.hex(),
        "payload_kind": tx.payload_kind,
        "timestamp": format_datetime(tx.timestamp),
        "submitter": tx.submitter,
        "prev_hash": tx.prev_hash.hex(),
        "tx_hash": tx.tx_hash.hex(),
    }


def _tx_from_dict(data: dict) -> LedgerTransaction:
    return LedgerTransaction(
        seq=data["seq"],
        tx_id=data["tx_id"],
        payload_hash=bytes.fromhex(data["payload_hash"]),
        payload_kind=data["payload_kind"],
        timestamp=parse_datetime(data["timestamp"]),
        submitter=data["submitter"],
        prev_hash=bytes.fromhex(data["prev_hash"]),
        tx_hash=bytes.fromhex(data["tx_hash"]),
    )


class Workspace:
    def __init__(self, path: Path) -> None:
        self.path = Path(path)

    def exists(self) -> bool:
        return (self.path / CONFIG_FILE).exists()

    def init(self, node_id: str, base_iri: str, providers: Optional[List[str]] = None) -> NodeConfig:
        self.path.mkdir(parents=True, exist_ok=True)
        keys = KeyPair.generate()
        keys.save(self.path / KEY_FILE)
        config = NodeConfig(
            node_id=node_id,
            base_iri=base_iri,
            ledger_providers=providers or ["BrazilAgriChain"],
            anchor_provider=(providers or ["BrazilAgriChain"])[0],
            key_hex=keys.private_hex(),
        )
        (self.path / CONFIG_FILE).write_text(
            config.model_dump_json(indent=2) + "\n", encoding="utf-8"
        )
        return config

    def load_config(self) -> NodeConfig:
        raw = (self.path / CONFIG_FILE).read_text(encoding="utf-8")
        return NodeConfig.model_validate_json(raw)

    def load_node(self, clock=None) -> PlatformNode:
        if not self.exists():
            raise FileNotFoundError(
                f"{self.path} is not a workspace (missing {CONFIG_FILE}); "
                "run 'agritrust node init' first"
            )
        config = self.load_config()
        node = PlatformNode(config, clock=clock)
        graph_file = self.path / GRAPH_FILE
        if graph_file.exists():
            node.graph.update(parse_turtle(graph_file.read_text(encoding="utf-8")))
        identities_file = self.path / IDENTITIES_FILE
        if identities_file.exists():
            for iri, pub_hex in json.loads(identities_file.read_text(encoding="utf-8")).items():
                node.directory.register(iri, bytes.fromhex(pub_hex))
        ledger_dir = self.path / LEDGER_DIR
        if ledger_dir.exists():
            for chain_file in sorted(ledger_dir.glob("*.jsonl")):
                if chain_file.stem in node.ledger.providers:
                    provider = node.ledger.providers[chain_file.stem]
                else:
                    provider = node.ledger.add_provider(chain_file.stem)
                provider.chain.clear()
                provider._by_id.clear()
                for line in chain_file.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        tx = _tx_from_dict(json.loads(line))
                        provider.chain.append(tx)
                        provider._by_id[tx.tx_id] = tx
        contracts_file = self.path / CONTRACTS_FILE
        if contracts_file.exists():
            for item in json.loads(contracts_file.read_text(encoding="utf-8")):
                contract = DataContract.from_json_dict(item["terms"])
                contract.iri = item["iri"]
                contract.signature = bytes.fromhex(item.get("signature", ""))
                if item.get("anchor_tx"):
                    contract.anchor_tx = tuple(item["anchor_tx"])
                if item.get("revoked_at"):
                    contract.revoked_at = parse_datetime(item["revoked_at"])
                if item.get("created_at"):
                    contract.created_at = parse_datetime(item["created_at"])
                node.contracts.contracts[contract.id] = contract
        tokens_file = self.path / TOKENS_FILE
        if tokens_file.exists():
            for uid, item in json.loads(tokens_file.read_text(encoding="utf-8")).items():
                node.tokenizer.tokens[uid] = TokenRecord(
                    iri=item["iri"],
                    represents=item["represents"],
                    created_at=parse_datetime(item["created_at"]),
                    provider=item["provider"],
                    tx_id=item["tx_id"],
                    issuer_platform=item["issuer_platform"],
                    anchored_observations=tuple(item.get("anchored_observations", ())),
                )
        return node

    def save_node(self, node: PlatformNode) -> None:
        (self.path / GRAPH_FILE).write_text(serialize_turtle(node.graph), encoding="utf-8")
        identities = {iri: key.hex() for iri, key in sorted(node.directory.entries().items())}
        (self.path / IDENTITIES_FILE).write_text(
            json.dumps(identities, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        ledger_dir = self.path / LEDGER_DIR
        ledger_dir.mkdir(exist_ok=True)
        for name, provider in node.ledger.providers.items():
            lines = [json.dumps(_tx_to_dict(tx), sort_keys=True) for tx in provider.chain]
            (ledger_dir / f"{name}.jsonl").write_text(
                "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
            )
        items = []
        for contract in node.contracts.contracts.values():
            items.append(
                {
                    "iri": contract.iri,
                    "terms": contract.to_json_dict(),
                    "signature": contract.signature.hex(),
                    "anchor_tx": list(contract.anchor_tx) if contract.anchor_tx else None,
                    "revoked_at": format_datetime(contract.revoked_at) if contract.revoked_at else None,
                    "created_at": format_datetime(contract.created_at) if contract.created_at else None,
                }
            )
        (self.path / CONTRACTS_FILE).write_text(
            json.dumps(items, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        tokens = {
            uid: {
                "iri": rec.iri,
                "represents": rec.represents,
                "created_at": format_datetime(rec.created_at),
                "provider": rec.provider,
                "tx_id": rec.tx_id,
                "issuer_platform": rec.issuer_platform,
                "anchored_observations": list(rec.anchored_observations),
            }
            for uid, rec in node.tokenizer.tokens.items()
        }
        (self.path / TOKENS_FILE).write_text(
            json.dumps(tokens, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        audit_lines = [
            json.dumps(
                {
                    "seq": e.seq,
                    "timestamp": format_datetime(e.timestamp),
                    "contract_id": e.contract_id,
                    "consumer": e.consumer,
                    "asset": e.asset,
                    "action": e.action,
                    "query_hash": e.query_hash,
                    "decision_reason": e.decision_reason,
                },
                sort_keys=True,
            )
            for e in node.contracts.audit.events()
        ]
        (self.path / AUDIT_FILE).write_text(
            "\n".join(audit_lines) + ("\n" if audit_lines else ""), encoding="utf-8"
        )

    # -- edge queue (persists independently of the node) ----------------------

    def append_queue_entry(self, payload: dict) -> None:
        with open(self.path / QUEUE_FILE, "a", encoding="utf-8") as f:
            f.write(json.dumps(payload, sort_keys=True) + "\n")

    def read_queue(self) -> List[dict]:
        queue_file = self.path / QUEUE_FILE
        if not queue_file.exists():
            return []
        return [
            json.loads(line)
            for line in queue_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    def write_queue(self, entries: List[dict]) -> None:
        lines = [json.dumps(e, sort_keys=True) for e in entries]
        (self.path / QUEUE_FILE).write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )

"""Simulated blockchain-agnostic ledgers.

Two layers share the same chain machinery: a provenance layer anchoring
SHA-256 hashes of tokens, contracts and certificates, and a settlement layer
that pays compensation when a matching certificate event lands. Providers
differ only in name and consensus label; behavior is identical across them.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .terms import AGT_NS, RDF_TYPE, BlankNode, Iri, Literal, Triple, format_datetime

GENESIS_HASH = b"\x00" * 32

PAYLOAD_KINDS = ("token", "contract", "certificate", "revocation", "payment")


class LedgerError(Exception):
    pass


class UnknownProvider(LedgerError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown ledger provider {name!r}")
        self.name = name


class InsufficientFunds(LedgerError):
    pass


@dataclass
class LedgerTransaction:
    seq: int
    tx_id: str
    payload_hash: bytes
    payload_kind: str
    timestamp: datetime
    submitter: str
    prev_hash: bytes
    tx_hash: bytes


def tx_digest(
    prev_hash: bytes, payload_hash: bytes, timestamp: datetime, submitter: str, kind: str
) -> bytes:
    h = hashlib.sha256()
    h.update(prev_hash)
    h.update(payload_hash)
    h.update(format_datetime(timestamp).encode("utf-8"))
    h.update(b"|")
    h.update(submitter.encode("utf-8"))
    h.update(b"|")
    h.update(kind.encode("utf-8"))
    return h.digest()


@dataclass
class AnchorCheck:
    ok: bool
    reason: str = "ok"

    def __bool__(self) -> bool:
        return self.ok


class LedgerProvider:
    """One append-only hash chain; writes serialize, reads are free."""

    def __init__(self, name: str, consensus_label: str = "simulated") -> None:
        self.name = name
        self.consensus_label = consensus_label
        self.chain: List[LedgerTransaction] = []
        self._lock = threading.Lock()
        self._by_id: Dict[str, LedgerTransaction] = {}

    def register(self, payload_bytes: bytes, kind: str, submitter: str, now: datetime) -> LedgerTransaction:
        if kind not in PAYLOAD_KINDS:
            raise LedgerError(f"unknown payload kind {kind!r}")
        payload_hash = hashlib.sha256(payload_bytes).digest()
        with self._lock:
            prev_hash = self.chain[-1].tx_hash if self.chain else GENESIS_HASH
            tx_hash = tx_digest(prev_hash, payload_hash, now, submitter, kind)
            tx = LedgerTransaction(
                seq=len(self.chain),
                tx_id=tx_hash.hex(),
                payload_hash=payload_hash,
                payload_kind=kind,
                timestamp=now,
                submitter=submitter,
                prev_hash=prev_hash,
                tx_hash=tx_hash,
            )
            self.chain.append(tx)
            self._by_id[tx.tx_id] = tx
            return tx

    def get(self, tx_id: str) -> Optional[LedgerTransaction]:
        return self._by_id.get(tx_id)

    def verify(self, tx_id: str, payload_bytes: Optional[bytes] = None) -> AnchorCheck:
        """True iff the transaction exists, the payload hash matches, and the
        chain from genesis up to it re-hashes consistently."""
        tx = self._by_id.get(tx_id)
        if tx is None:
            return AnchorCheck(False, "unknown_tx")
        running = GENESIS_HASH
        for entry in self.chain[: tx.seq + 1]:
            if entry.prev_hash != running:
                return AnchorCheck(False, "chain_broken")
            expected = tx_digest(
                entry.prev_hash, entry.payload_hash, entry.timestamp, entry.submitter, entry.payload_kind
            )
            if expected != entry.tx_hash or entry.tx_id != entry.tx_hash.hex():
                return AnchorCheck(False, "chain_broken")
            running = entry.tx_hash
        if payload_bytes is not None:
            if hashlib.sha256(payload_bytes).digest() != tx.payload_hash:
                return AnchorCheck(False, "payload_mismatch")
        return AnchorCheck(True)

    def dump_lines(self) -> List[str]:
        return [
            f"{tx.seq} {tx.tx_id} {tx.payload_kind} {tx.payload_hash.hex()} "
            f"{format_datetime(tx.timestamp)} {tx.submitter} {tx.prev_hash.hex()}"
            for tx in self.chain
        ]


@dataclass
class CrossChainReference:
    subject: str
    entries: List[Tuple[str, str]]  # (provider name, tx id)

    def to_triples(self, ref_iri: str) -> List[Triple]:
        triples = [
            Triple(Iri(self.subject), Iri(AGT_NS + "hasCrossChainReference"), Iri(ref_iri)),
            Triple(Iri(ref_iri), Iri(RDF_TYPE), Iri(AGT_NS + "CrossChainReference")),
        ]
        for i, (provider, tx_id) in enumerate(self.entries):
            entry = BlankNode(f"ccr{i}")
            triples.extend(
                [
                    Triple(Iri(ref_iri), Iri(AGT_NS + "referenceEntry"), entry),
                    Triple(entry, Iri(AGT_NS + "blockchainName"), Literal(provider)),
                    Triple(entry, Iri(AGT_NS + "blockchainTransactionId"), Literal(tx_id)),
                ]
            )
        return triples


# Listener signature: (provider_name, transaction, metadata dict)
EventListener = Callable[[str, LedgerTransaction, dict], None]


class LedgerNetwork:
    """All providers visible to an ecosystem, plus the in-process event bus
    that routes registration events to the settlement layer."""

    def __init__(self) -> None:
        self.providers: Dict[str, LedgerProvider] = {}
        self._listeners: List[EventListener] = []

    def add_provider(self, name: str, consensus_label: str = "simulated") -> LedgerProvider:
        provider = LedgerProvider(name, consensus_label)
        self.providers[name] = provider
        return provider

    def provider(self, name: str) -> LedgerProvider:
        if name not in self.providers:
            raise UnknownProvider(name)
        return self.providers[name]

    def subscribe(self, listener: EventListener) -> None:
        self._listeners.append(listener)

    def register(
        self,
        provider_name: str,
        payload_bytes: bytes,
        kind: str,
        submitter: str,
        now: datetime,
        metadata: Optional[dict] = None,
    ) -> LedgerTransaction:
        tx = self.provider(provider_name).register(payload_bytes, kind, submitter, now)
        for listener in self._listeners:
            listener(provider_name, tx, metadata or {})
        return tx

    def verify_anchor(self, provider_name: str, tx_id: str, payload_bytes: Optional[bytes] = None) -> AnchorCheck:
        return self.provider(provider_name).verify(tx_id, payload_bytes)

    def link_cross_chain(self, subject: str, entries: Sequence[Tuple[str, str]]) -> CrossChainReference:
        for provider_name, tx_id in entries:
            provider = self.provider(provider_name)
            if provider.get(tx_id) is None:
                raise LedgerError(f"transaction {tx_id} not found on {provider_name}")
        return CrossChainReference(subject=subject, entries=list(entries))


# -- settlement layer ---------------------------------------------------------


@dataclass
class SettlementTrigger:
    kind: str = "certificate"
    assets: frozenset = frozenset()
    standard: Optional[str] = None

    def matches(self, tx: LedgerTransaction, metadata: dict) -> bool:
        if tx.payload_kind != self.kind:
            return False
        if self.assets and metadata.get("asset") not in self.assets:
            return False
        if self.standard is not None and metadata.get("standard") != self.standard:
            return False
        return True


@dataclass
class Payment:
    tx_id: str
    payer: str
    payee: str
    amount: Decimal
    rate: Decimal
    quantity: Decimal
    triggering_tx_id: str


@dataclass
class SettlementContract:
    id: str
    payer: str
    payee: str
    trigger: SettlementTrigger
    rate: Decimal
    unit: str
    provider: str
    linked_data_contract: str
    funding_balance: Decimal = Decimal("0")
    total_funded: Decimal = Decimal("0")
    payments: Dict[str, Payment] = field(default_factory=dict)  # by triggering tx id
    parked: List[Tuple[LedgerTransaction, dict, str]] = field(default_factory=list)


def _quantize_money(amount: Decimal) -> Decimal:
    return amount.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


class SettlementEngine:
    """Exactly-once automated compensation on certificate events.

    Subscribes to the ledger network; a matching event pays
    rate x quantity from the contract's funded balance. Events without a
    usable quantity or without funds are parked for retry after fund().
    """

    def __init__(self, network: LedgerNetwork) -> None:
        self.network = network
        self.contracts: Dict[str, SettlementContract] = {}
        self._lock = threading.Lock()
        network.subscribe(self._on_ledger_event)

    def deploy(
        self,
        contract_id: str,
        payer: str,
        payee: str,
        rate: Decimal,
        unit: str,
        provider: str,
        linked_data_contract: str,
        trigger_assets: Sequence[str] = (),
        trigger_standard: Optional[str] = None,
    ) -> SettlementContract:
        self.network.provider(provider)  # must exist
        contract = SettlementContract(
            id=contract_id,
            payer=payer,
            payee=payee,
            trigger=SettlementTrigger(assets=frozenset(trigger_assets), standard=trigger_standard),
            rate=Decimal(rate),
            unit=unit,
            provider=provider,
            linked_data_contract=linked_data_contract,
        )
        self.contracts[contract_id] = contract
        return contract

    def fund(self, contract_id: str, amount: Decimal) -> List[Payment]:
        contract = self.contracts[contract_id]
        with self._lock:
            contract.funding_balance += Decimal(amount)
            contract.total_funded += Decimal(amount)
            return self._retry_parked(contract)

    def _on_ledger_event(self, provider_name: str, tx: LedgerTransaction, metadata: dict) -> None:
        if tx.payload_kind != "certificate":
            return
        for contract in self.contracts.values():
            if contract.trigger.matches(tx, metadata):
                with self._lock:
                    self._settle(contract, tx, metadata)

    def deliver(self, provider_name: str, tx: LedgerTransaction, metadata: dict) -> None:
        """Re-deliver an event (duplicate delivery path); settlement stays
        exactly-once per triggering transaction id."""
        self._on_ledger_event(provider_name, tx, metadata)

    def _settle(self, contract: SettlementContract, tx: LedgerTransaction, metadata: dict) -> Optional[Payment]:
        if tx.tx_id in contract.payments:
            return None  # exactly-once per triggering event
        quantity = metadata.get("quantity")
        if quantity is None:
            self._park(contract, tx, metadata, "missing_quantity")
            return None
        amount = _quantize_money(contract.rate * Decimal(quantity))
        if amount > contract.funding_balance:
            self._park(contract, tx, metadata, "insufficient_funds")
            return None
        contract.funding_balance -= amount
        payment_payload = json.dumps(
            {
                "settlement": contract.id,
                "payer": contract.payer,
                "payee": contract.payee,
                "amount": str(amount),
                "rate": str(contract.rate),
                "quantity": str(Decimal(quantity)),
                "trigger": tx.tx_id,
            },
            sort_keys=True,
        ).encode("utf-8")
        payment_tx = self.network.provider(contract.provider).register(
            payment_payload, "payment", contract.payer, tx.timestamp
        )
        payment = Payment(
            tx_id=payment_tx.tx_id,
            payer=contract.payer,
            payee=contract.payee,
            amount=amount,
            rate=contract.rate,
            quantity=Decimal(quantity),
            triggering_tx_id=tx.tx_id,
        )
        contract.payments[tx.tx_id] = payment
        return payment

    def _park(self, contract: SettlementContract, tx: LedgerTransaction, metadata: dict, reason: str) -> None:
        if all(parked_tx.tx_id != tx.tx_id for parked_tx, _, _ in contract.parked):
            contract.parked.append((tx, metadata, reason))

    def _retry_parked(self, contract: SettlementContract) -> List[Payment]:
        paid: List[Payment] = []
        still_parked: List[Tuple[LedgerTransaction, dict, str]] = []
        for tx, metadata, reason in contract.parked:
            payment = self._settle(contract, tx, metadata)
            if payment is not None:
                paid.append(payment)
            elif tx.tx_id not in contract.payments:
                still_parked.append((tx, metadata, reason))
        contract.parked = still_parked
        return paid

    def conservation_ok(self, contract_id: str) -> bool:
        """Sum of executed payments equals total funded minus the balance."""
        contract = self.contracts[contract_id]
        paid = sum((p.amount for p in contract.payments.values()), Decimal("0"))
        return paid == contract.total_funded - contract.funding_balance

"""Hash chains, tamper evidence, cross-chain references, and settlement."""
import random
from datetime import datetime, timedelta
from decimal import Decimal

import pytest

from agritrust.ledger import (
    AnchorCheck,
    CrossChainReference,
    LedgerError,
    LedgerNetwork,
    LedgerProvider,
    SettlementEngine,
    UnknownProvider,
)
from conftest import AGT, NOW

SUBMITTER = "https://coffee-platform.test/platform"


def ts(i: int) -> datetime:
    return NOW + timedelta(seconds=i)


@pytest.fixture()
def network():
    net = LedgerNetwork()
    for name in ("BrazilAgriChain", "EUCertChain", "CoffeeChainLedger"):
        net.add_provider(name)
    return net


def test_register_appends_and_verifies(network):
    tx = network.register("BrazilAgriChain", b"payload", "token", SUBMITTER, NOW)
    assert len(network.provider("BrazilAgriChain").chain) == 1
    assert network.verify_anchor("BrazilAgriChain", tx.tx_id, b"payload")
    assert tx.tx_id == tx.tx_hash.hex()


def test_identical_payloads_get_distinct_tx_ids(network):
    a = network.register("BrazilAgriChain", b"same", "token", SUBMITTER, NOW)
    b = network.register("BrazilAgriChain", b"same", "token", SUBMITTER, NOW)
    assert a.tx_id != b.tx_id


def test_tx_hash_recomputes_from_fields(network):
    from agritrust.ledger import tx_digest

    tx = network.register("EUCertChain", b"data", "certificate", SUBMITTER, NOW)
    assert tx_digest(tx.prev_hash, tx.payload_hash, tx.timestamp, tx.submitter,
                     tx.payload_kind) == tx.tx_hash


def test_unknown_provider_raises(network):
    with pytest.raises(UnknownProvider):
        network.register("GhostChain", b"x", "token", SUBMITTER, NOW)


def test_payload_flip_detected(network):
    tx = network.register("BrazilAgriChain", b"original", "token", SUBMITTER, NOW)
    check = network.verify_anchor("BrazilAgriChain", tx.tx_id, b"originaL")
    assert not check and check.reason == "payload_mismatch"


def test_unknown_tx_reason(network):
    check = network.verify_anchor("BrazilAgriChain", "ff" * 32, b"x")
    assert not check and check.reason == "unknown_tx"


def test_intermediate_tamper_breaks_all_later_tx(network):
    provider = network.provider("BrazilAgriChain")
    payloads = [f"entry {i}".encode() for i in range(10)]
    txs = [provider.register(p, "token", SUBMITTER, ts(i)) for i, p in enumerate(payloads)]
    victim = provider.chain[4]
    victim.payload_hash = bytes(32)  # flip a stored field
    for i, tx in enumerate(txs):
        check = provider.verify(tx.tx_id, payloads[i])
        if i < 4:
            assert check.ok
        else:
            assert not check.ok and check.reason in ("chain_broken", "payload_mismatch")


def test_dump_format(network):
    tx = network.register("BrazilAgriChain", b"x", "token", SUBMITTER, NOW)
    (line,) = network.provider("BrazilAgriChain").dump_lines()
    fields = line.split(" ")
    assert fields[0] == "0"
    assert fields[1] == tx.tx_id
    assert fields[2] == "token"
    assert fields[6] == "00" * 32


def test_providers_behave_identically(network):
    """Agnosticism: only the name/consensus label differ."""
    results = {}
    for name in network.providers:
        tx = network.register(name, b"shared payload", "contract", SUBMITTER, NOW)
        assert network.verify_anchor(name, tx.tx_id, b"shared payload")
        results[name] = (tx.seq, tx.payload_hash, tx.prev_hash)
    assert len(set(results.values())) == 1


def test_cross_chain_reference_requires_existing_tx(network):
    token_tx = network.register("BrazilAgriChain", b"token", "token", SUBMITTER, NOW)
    cert_tx = network.register("EUCertChain", b"cert", "certificate", SUBMITTER, NOW)
    ref = network.link_cross_chain(
        AGT + "Token_Coffee_001",
        [("BrazilAgriChain", token_tx.tx_id), ("EUCertChain", cert_tx.tx_id)],
    )
    assert len(ref.entries) == 2
    for provider, tx_id in ref.entries:
        assert network.verify_anchor(provider, tx_id)
    with pytest.raises(UnknownProvider):
        network.link_cross_chain(AGT + "x", [("GhostChain", token_tx.tx_id)])
    with pytest.raises(LedgerError):
        network.link_cross_chain(AGT + "x", [("EUCertChain", "00" * 32)])


def test_cross_chain_reference_emits_rdf(network):
    token_tx = network.register("BrazilAgriChain", b"token", "token", SUBMITTER, NOW)
    ref = CrossChainReference(AGT + "Token_1", [("BrazilAgriChain", token_tx.tx_id)])
    triples = ref.to_triples(AGT + "Ref_1")
    predicates = {t.predicate.value.rsplit("#", 1)[-1] for t in triples}
    assert {"hasCrossChainReference", "type", "referenceEntry",
            "blockchainName", "blockchainTransactionId"} <= predicates


# -- settlement ------------------------------------------------------------------


def deploy(network, **overrides):
    engine = SettlementEngine(network)
    spec = dict(
        contract_id="SET-1",
        payer=AGT + "Certifier_EuroSus",
        payee=AGT + "Farm_FazendaBrasil",
        rate=Decimal("0.15"),
        unit="kg",
        provider="EUCertChain",
        linked_data_contract="DC-2024-ORG-001",
        trigger_assets=[AGT + "Batch_A1"],
    )
    spec.update(overrides)
    return engine, engine.deploy(**spec)


def certificate_event(network, metadata, i=0):
    return network.register(
        "EUCertChain", f"cert {i}".encode(), "certificate", SUBMITTER, ts(i), metadata
    )


def test_settlement_pays_rate_times_quantity(network):
    engine, contract = deploy(network)
    engine.fund("SET-1", Decimal("200.00"))
    tx = certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("1000")})
    payment = contract.payments[tx.tx_id]
    assert str(payment.amount) == "150.00"
    assert contract.funding_balance == Decimal("50.00")
    payment_txs = [t for t in network.provider("EUCertChain").chain if t.payload_kind == "payment"]
    assert len(payment_txs) == 1


def test_duplicate_event_pays_once(network):
    engine, contract = deploy(network)
    engine.fund("SET-1", Decimal("400.00"))
    tx = certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("1000")})
    engine.deliver("EUCertChain", tx, {"asset": AGT + "Batch_A1", "quantity": Decimal("1000")})
    engine.deliver("EUCertChain", tx, {"asset": AGT + "Batch_A1", "quantity": Decimal("1000")})
    assert len(contract.payments) == 1
    assert contract.funding_balance == Decimal("250.00")


def test_insufficient_funds_parks_until_funded(network):
    engine, contract = deploy(network)
    engine.fund("SET-1", Decimal("100.00"))
    tx = certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("1000")})
    assert tx.tx_id not in contract.payments
    assert len(contract.parked) == 1
    paid = engine.fund("SET-1", Decimal("50.00"))
    assert [p.triggering_tx_id for p in paid] == [tx.tx_id]
    assert contract.funding_balance == Decimal("0.00")
    assert contract.parked == []


def test_missing_quantity_parks_with_reason(network):
    engine, contract = deploy(network)
    engine.fund("SET-1", Decimal("1000.00"))
    certificate_event(network, {"asset": AGT + "Batch_A1"})
    assert contract.parked and contract.parked[0][2] == "missing_quantity"


def test_non_matching_events_ignored(network):
    engine, contract = deploy(network, trigger_standard="WFD 2000/60/EC")
    engine.fund("SET-1", Decimal("1000.00"))
    certificate_event(network, {"asset": AGT + "Other", "quantity": Decimal("5")})
    certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("5"),
                                "standard": "OTHER"}, i=1)
    assert contract.payments == {} and contract.parked == []


def test_payment_conservation_over_random_streams(network):
    rng = random.Random(42)
    engine, contract = deploy(network)
    engine.fund("SET-1", Decimal("500.00"))
    events = []
    for i in range(30):
        if events and rng.random() < 0.3:
            tx = rng.choice(events)  # duplicate delivery
            engine.deliver("EUCertChain", tx,
                           {"asset": AGT + "Batch_A1", "quantity": Decimal(rng.randint(1, 400))})
        else:
            tx = certificate_event(
                network,
                {"asset": AGT + "Batch_A1", "quantity": Decimal(rng.randint(1, 400))},
                i=i,
            )
            events.append(tx)
        if rng.random() < 0.2:
            engine.fund("SET-1", Decimal(rng.randint(0, 100)))
    assert engine.conservation_ok("SET-1")
    # exactly-once: payments keyed by distinct triggering tx ids
    trigger_ids = [p.triggering_tx_id for p in contract.payments.values()]
    assert len(trigger_ids) == len(set(trigger_ids))


def test_rounding_is_half_up_two_digits(network):
    engine, contract = deploy(network, rate=Decimal("0.333"))
    engine.fund("SET-1", Decimal("10.00"))
    tx = certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("10")})
    assert str(contract.payments[tx.tx_id].amount) == "3.33"
    tx2 = certificate_event(network, {"asset": AGT + "Batch_A1", "quantity": Decimal("5")},
                            i=1)
    # 0.333 * 5 = 1.665 -> 1.67 half-up
    assert str(contract.payments[tx2.tx_id].amount) == "1.67"

"""Workspace persistence round trips and the CLI verbs."""
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from agritrust.cli import main
from agritrust.identity import KeyPair
from agritrust.terms import Iri, RDF_TYPE
from agritrust.workspace import Workspace

from conftest import AGT, XSD

FARM = AGT + "DemoFarm"
RUNNER = CliRunner()


@pytest.fixture()
def workspace(tmp_path):
    ws = Workspace(tmp_path / "node")
    ws.init("https://demo.test/platform", "https://demo.test")
    node = ws.load_node()
    node.graph.add(Iri(FARM), Iri(RDF_TYPE), Iri(AGT + "DataProducer"))
    ws.save_node(node)
    return ws


def asset_descriptor(tmp_path) -> Path:
    path = tmp_path / "asset.json"
    path.write_text(json.dumps({
        "iri": AGT + "DemoBatch",
        "unique_id": "DEMO-1",
        "owner": FARM,
        "types": [AGT + "CollectiveAsset"],
        "observations": [{
            "iri": AGT + "DemoObs", "value": "42",
            "observed_at": "2024-06-01T00:00:00Z", "datatype": XSD + "decimal",
        }],
    }))
    return path


def contract_terms(tmp_path) -> Path:
    path = tmp_path / "terms.json"
    path.write_text(json.dumps({
        "id": "DC-DEMO-1", "title": "Demo", "producer": FARM,
        "consumer": AGT + "DemoBuyer", "purpose": "demo_purpose",
        "validFrom": "2024-06-01T00:00:00Z", "validUntil": "2024-12-01T00:00:00Z",
        "coversAsset": [AGT + "DemoBatch"],
    }))
    return path


def test_workspace_round_trip(workspace, tmp_path):
    node = workspace.load_node()
    node.ledger.register("BrazilAgriChain", b"payload", "token",
                         "https://demo.test/platform",
                         __import__("datetime").datetime(2024, 6, 1,
                                                         tzinfo=__import__("datetime").timezone.utc))
    workspace.save_node(node)
    again = workspace.load_node()
    assert len(again.ledger.provider("BrazilAgriChain").chain) == 1
    tx = again.ledger.provider("BrazilAgriChain").chain[0]
    assert again.ledger.verify_anchor("BrazilAgriChain", tx.tx_id, b"payload")
    assert again.graph.match(Iri(FARM), None, None)


def test_cli_tokenize_then_ledger_verify(workspace, tmp_path):
    result = RUNNER.invoke(main, [
        "tokenize", "--node", str(workspace.path), "--asset", str(asset_descriptor(tmp_path)),
        "--now", "2024-06-02T00:00:00Z",
    ])
    assert result.exit_code == 0, result.output
    info = json.loads(result.output)
    assert info["token"].endswith("/token/DEMO-1")

    dump = RUNNER.invoke(main, ["ledger", "dump", "BrazilAgriChain", "--node", str(workspace.path)])
    assert info["tx_id"] in dump.output

    verify = RUNNER.invoke(main, [
        "ledger", "verify", "BrazilAgriChain", info["tx_id"], "--node", str(workspace.path),
    ])
    assert verify.exit_code == 0 and "ok" in verify.output


def test_cli_contract_create_audit_revoke(workspace, tmp_path):
    RUNNER.invoke(main, [
        "tokenize", "--node", str(workspace.path), "--asset", str(asset_descriptor(tmp_path)),
        "--now", "2024-06-02T00:00:00Z",
    ])
    key_file = tmp_path / "farmer.key"
    KeyPair.generate().save(key_file)
    create = RUNNER.invoke(main, [
        "contract", "create", "--terms", str(contract_terms(tmp_path)),
        "--sign-as", str(key_file), "--node", str(workspace.path),
        "--now", "2024-06-02T00:00:00Z",
    ])
    assert create.exit_code == 0, create.output
    contract_id = json.loads("".join(l for l in create.output.splitlines()
                                     if not l.startswith("note:")))["contract_id"]
    assert contract_id == "DC-DEMO-1"

    audit = RUNNER.invoke(main, [
        "contract", "audit", "DC-DEMO-1", "--days", "30",
        "--now", "2024-06-10T00:00:00Z", "--node", str(workspace.path),
    ])
    assert audit.exit_code == 0 and "0 events" in audit.output

    revoke = RUNNER.invoke(main, [
        "contract", "revoke", "DC-DEMO-1", "--node", str(workspace.path),
        "--now", "2024-06-11T00:00:00Z",
    ])
    assert revoke.exit_code == 0
    node = workspace.load_node()
    assert node.contracts.contracts["DC-DEMO-1"].revoked_at is not None


def test_cli_validate_conforming_and_violating(tmp_path):
    good = tmp_path / "good.ttl"
    good.write_text(
        f"@prefix : <{AGT}> .\n"
        ":farm a :DataProducer .\n"
        ':a a :Asset ; :uniqueId "A-1" ; :ownedBy :farm .\n'
    )
    result = RUNNER.invoke(main, ["validate", str(good), "--shapes", "core"])
    assert result.exit_code == 0 and "conforms" in result.output

    bad = tmp_path / "bad.ttl"
    bad.write_text(f"@prefix : <{AGT}> .\n:a a :Asset .\n")
    result = RUNNER.invoke(main, ["validate", str(bad), "--shapes", "core"])
    assert result.exit_code == 1
    assert "AssetShape" in result.output and "minCount" in result.output


def test_cli_query_local_files(tmp_path):
    data = tmp_path / "data.ttl"
    data.write_text(
        f"@prefix : <{AGT}> .\n@prefix xsd: <{XSD}> .\n"
        ':b a :CollectiveAsset ; :uniqueId "B-1" ; :hasObservation :o .\n'
        ':o :observationValue "7"^^xsd:decimal .\n'
    )
    query = tmp_path / "q.rq"
    query.write_text(
        f"PREFIX agt: <{AGT}>\nSELECT ?v WHERE {{ ?b agt:hasObservation ?o . "
        "?o agt:observationValue ?v }"
    )
    result = RUNNER.invoke(main, [
        "query", "--data", str(data), "--file", str(query), "--now", "2024-06-01T00:00:00Z",
    ])
    assert result.exit_code == 0, result.output
    assert '"7"' in result.output


def test_cli_edge_capture_and_flush(workspace, tmp_path):
    # plot and chemical assets must exist for the application process
    node = workspace.load_node()
    from agritrust.terms import Literal

    for iri, uid in ((AGT + "Plot_1", "PLOT-1"), (AGT + "Chem_1", "CHEM-1")):
        node.graph.add(Iri(iri), Iri(RDF_TYPE), Iri(AGT + "IndividualAsset"))
        node.graph.add(Iri(iri), Iri(AGT + "uniqueId"), Literal(uid))
        node.graph.add(Iri(iri), Iri(AGT + "ownedBy"), Iri(FARM))
    workspace.save_node(node)

    key_file = tmp_path / "worker.key"
    KeyPair.generate().save(key_file)
    form_file = tmp_path / "form.json"
    form_file.write_text(json.dumps({
        "product_id": AGT + "Chem_1", "plot_id": AGT + "Plot_1",
        "dilution": "2.5 mL/L", "weather": "clear",
        "start_time": "2024-06-26T06:30:00Z", "end_time": "2024-06-26T08:10:00Z",
        "gps": "POINT(-47 -22)", "worker_id": AGT + "Worker_1",
    }))
    capture = RUNNER.invoke(main, [
        "edge", "capture", "--form", str(form_file), "--key", str(key_file),
        "--node", str(workspace.path), "--now", "2024-06-26T08:15:00Z",
    ])
    assert capture.exit_code == 0, capture.output
    assert "queued" in capture.output

    flush_down = RUNNER.invoke(main, [
        "edge", "flush", "--node", str(workspace.path), "--connectivity", "down",
    ])
    assert "0 submitted" in flush_down.output

    flush = RUNNER.invoke(main, [
        "edge", "flush", "--node", str(workspace.path), "--now", "2024-06-26T09:00:00Z",
    ])
    assert flush.exit_code == 0, flush.output
    assert "1 submitted" in flush.output
    entries = workspace.read_queue()
    assert entries[0]["state"] == "acknowledged" and entries[0]["tx_id"]

    again = RUNNER.invoke(main, ["edge", "flush", "--node", str(workspace.path)])
    assert "0 submitted" in again.output


def test_cli_scenario_single(tmp_path):
    result = RUNNER.invoke(main, [
        "scenario", "run", "soy", "--report", str(tmp_path / "reports"),
    ])
    assert result.exit_code == 0, result.output
    assert "soy: PASS" in result.output
    assert (tmp_path / "reports" / "soy.txt").exists()


def test_cli_ontology_dump_format():
    result = RUNNER.invoke(main, ["ontology", "dump"])
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert all(len(l.split("\t")) == 3 for l in lines)
    assert any("\tclass\t" in l for l in lines)
    assert any("-property\t" in l for l in lines)

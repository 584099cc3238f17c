"""Command-line client.

Local verbs (ontology, validate, query, tokenize, edge, contract, ledger,
scenario) delegate to the core package, with per-node state in a workspace
directory. `node serve` runs the HTTP service; `node query` talks to one.
"""
from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path

import click

from .contracts import ContractError, DataContract
from .graph import Graph
from .identity import KeyPair
from .node import NodeConfig, PlatformNode
from .ontology import BUILTIN_EXTENSIONS, OntologyRegistry, builtin_text, core_ontology_text
from .query import evaluate, parse_query
from .shacl import extract_shapes, validate as shacl_validate
from .terms import Iri, Literal, parse_datetime
from .tokenization import (
    AssetSpec,
    ObservationSpec,
    SignedObservation,
    capture_signed_observation,
)
from .turtle import parse_turtle
from .wire import WireRequest, canonical_body_bytes, decode_results
from .workspace import Workspace


def _parse_now(value: str | None) -> datetime:
    return parse_datetime(value) if value else datetime.now(timezone.utc)


def _default_registry_with(files: tuple[str, ...]) -> OntologyRegistry:
    registry = OntologyRegistry()
    registry.load_core(core_ontology_text())
    for name in BUILTIN_EXTENSIONS + ("agrochem_extension",):
        registry.register_extension(builtin_text(name))
    for path in files:
        registry.register_extension(Path(path).read_text(encoding="utf-8"))
    return registry


@click.group()
def main() -> None:
    """Federated semantic governance engine for agricultural data."""


# -- ontology ------------------------------------------------------------------


@main.group()
def ontology() -> None:
    """Inspect and load ontology documents."""


@ontology.command("load")
@click.argument("path", type=click.Path(exists=True))
def ontology_load(path: str) -> None:
    """Parse an ontology document and report its shape."""
    registry = OntologyRegistry()
    version = registry.load_core(Path(path).read_text(encoding="utf-8"))
    shapes = extract_shapes(version.graph)
    click.echo(f"version {version.version}: {len(registry.classes)} classes, "
               f"{len(registry.properties)} properties, {len(shapes)} shapes")


@ontology.command("dump")
@click.option("--extension", "extensions", multiple=True, type=click.Path(exists=True),
              help="Extra extension .ttl files to register before dumping.")
def ontology_dump(extensions: tuple[str, ...]) -> None:
    """Print the active term set, one term per line: iri, kind, supers."""
    registry = _default_registry_with(extensions)
    for line in registry.dump_terms():
        click.echo(line)


# -- validate ------------------------------------------------------------------


@main.command("validate")
@click.argument("data", type=click.Path(exists=True))
@click.option("--shapes", "shapes_source", default="core", show_default=True,
              help="'core' for the packaged shapes or a path to a shapes .ttl.")
def validate_cmd(data: str, shapes_source: str) -> None:
    """Validate a data graph; exit 0 iff it conforms."""
    registry = _default_registry_with(())
    if shapes_source == "core":
        shapes = extract_shapes(registry.ontology_graph())
    else:
        shapes = extract_shapes(parse_turtle(Path(shapes_source).read_text(encoding="utf-8")))
    graph = parse_turtle(Path(data).read_text(encoding="utf-8"))
    report = shacl_validate(graph, shapes, registry)
    for line in report.lines():
        click.echo(line)
    if not report.conforms:
        sys.exit(1)
    click.echo("conforms")


# -- query ---------------------------------------------------------------------


@main.command("query")
@click.option("--data", "data_files", multiple=True, required=True,
              type=click.Path(exists=True), help="Turtle data files (repeatable).")
@click.option("--file", "query_file", required=True, type=click.Path(exists=True))
@click.option("--now", "now_text", default=None, help="Evaluation time (ISO 8601).")
@click.option("--extension", "extensions", multiple=True, type=click.Path(exists=True))
def query_cmd(data_files, query_file, now_text, extensions) -> None:
    """Evaluate a query against local Turtle files."""
    registry = _default_registry_with(extensions)
    graph = Graph()
    for path in data_files:
        graph.update(parse_turtle(Path(path).read_text(encoding="utf-8")))
    ast = parse_query(Path(query_file).read_text(encoding="utf-8"))
    results = evaluate(ast, graph, registry, now=_parse_now(now_text))
    click.echo("\t".join(results.variables))
    for row in results.rows:
        click.echo("\t".join(repr(row[v]) if v in row else "" for v in results.variables))
    for note in results.notes:
        click.echo(f"# {note}", err=True)


# -- tokenize ------------------------------------------------------------------


@main.command("tokenize")
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--asset", "asset_file", required=True, type=click.Path(exists=True),
              help="JSON asset descriptor: iri, unique_id, owner, types, observations.")
@click.option("--provider", default=None, help="Ledger provider (default: node anchor provider).")
@click.option("--now", "now_text", default=None)
def tokenize_cmd(workspace_dir, asset_file, provider, now_text) -> None:
    """Tokenize an asset described by a JSON file into the node workspace."""
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    desc = json.loads(Path(asset_file).read_text(encoding="utf-8"))
    observations = tuple(
        ObservationSpec(
            iri=o["iri"],
            value=str(o["value"]),
            observed_at=parse_datetime(o["observed_at"]),
            datatype=o.get("datatype", "http://www.w3.org/2001/XMLSchema#string"),
            unit=o.get("unit"),
        )
        for o in desc.get("observations", [])
    )
    spec = AssetSpec(
        iri=desc["iri"],
        unique_id=desc["unique_id"],
        owner=desc["owner"],
        types=tuple(desc.get("types", ["http://example.org/ns/agritrustcore#Asset"])),
        kind=desc.get("kind", "collective"),
        observations=observations,
        composition=tuple(
            (c["asset"], Decimal(str(c["fraction"]))) for c in desc.get("composition", [])
        ),
    )
    record = node.tokenizer.tokenize_asset(
        spec, provider or node.config.anchor_provider, _parse_now(now_text)
    )
    ws.save_node(node)
    click.echo(json.dumps({"token": record.iri, "tx_id": record.tx_id,
                           "provider": record.provider}, indent=2))


# -- edge capture / flush --------------------------------------------------------


@main.group()
def edge() -> None:
    """Offline field capture and queue flushing."""


@edge.command("capture")
@click.option("--form", "form_file", required=True, type=click.Path(exists=True))
@click.option("--key", "key_file", required=True, type=click.Path(exists=True))
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--now", "now_text", default=None)
def edge_capture(form_file, key_file, workspace_dir, now_text) -> None:
    """Sign a field form offline and append it to the node's edge queue."""
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    keys = KeyPair.load(Path(key_file))
    form = json.loads(Path(form_file).read_text(encoding="utf-8"))
    worker = form.get("worker_id", "")
    if not node.directory.registered(worker):
        node.directory.register(worker, keys.public_bytes())
        ws.save_node(node)
    observation = capture_signed_observation(form, keys, node.directory, _parse_now(now_text))
    ws.append_queue_entry(
        {
            "iri": observation.iri,
            "value": observation.value,
            "observed_at": observation.observed_at.isoformat(),
            "feature": observation.feature,
            "signer": observation.signer,
            "signature": observation.signature.hex(),
            "device": observation.device_meta,
            "state": "queued",
        }
    )
    click.echo(f"queued {observation.iri} signed by {observation.signer}")


@edge.command("flush")
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--connectivity", default="up", show_default=True, type=click.Choice(["up", "down"]))
@click.option("--now", "now_text", default=None)
def edge_flush(workspace_dir, connectivity, now_text) -> None:
    """Drain the edge queue into application processes, FIFO."""
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    entries = ws.read_queue()
    if connectivity != "up":
        click.echo("connectivity down: 0 submitted")
        return
    now = _parse_now(now_text)
    submitted = 0
    for entry in entries:
        if entry.get("state") == "acknowledged":
            continue
        observation = SignedObservation(
            iri=entry["iri"],
            value=entry["value"],
            observed_at=parse_datetime(entry["observed_at"]),
            feature=entry["feature"],
            signer=entry["signer"],
            signature=bytes.fromhex(entry["signature"]),
            device_meta=entry.get("device"),
        )
        form = json.loads(entry["value"])
        process = node.tokenizer.record_application_process(
            observation,
            plot=form["plot_id"],
            chemical=form["product_id"],
            worker=observation.signer,
            provider=node.config.anchor_provider,
            now=now,
        )
        tx = node.graph.object(Iri(process), Iri("http://example.org/ns/agritrustcore#blockchainTransactionId"))
        entry["state"] = "acknowledged"
        entry["tx_id"] = tx.lexical if isinstance(tx, Literal) else ""
        submitted += 1
        click.echo(f"anchored {entry['iri']} -> {entry['tx_id']}")
    ws.write_queue(entries)
    ws.save_node(node)
    click.echo(f"{submitted} submitted")


# -- contract -------------------------------------------------------------------


@main.group()
def contract() -> None:
    """Create, audit and revoke data contracts."""


@contract.command("create")
@click.option("--terms", "terms_file", required=True, type=click.Path(exists=True))
@click.option("--sign-as", "key_file", required=True, type=click.Path(exists=True))
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--now", "now_text", default=None)
def contract_create(terms_file, key_file, workspace_dir, now_text) -> None:
    """Sign contract terms as the producer and activate the contract."""
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    terms = json.loads(Path(terms_file).read_text(encoding="utf-8"))
    keys = KeyPair.load(Path(key_file))
    node.directory.register(terms["producer"], keys.public_bytes())
    if not node.directory.registered(terms["consumer"]):
        click.echo(f"note: consumer {terms['consumer']} registered without a key on file", err=True)
        node.directory.register(terms["consumer"], b"\x00" * 32)
    signature = keys.sign(DataContract.terms_bytes(terms))
    try:
        record = node.contracts.create_contract(terms, node.graph, signature, _parse_now(now_text))
    except ContractError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    ws.save_node(node)
    click.echo(json.dumps({"contract_id": record.id, "anchor": list(record.anchor_tx)}, indent=2))


@contract.command("audit")
@click.argument("contract_id")
@click.option("--days", default=30, show_default=True)
@click.option("--now", "now_text", default=None)
@click.option("--node", "workspace_dir", required=True, type=click.Path())
def contract_audit(contract_id, days, now_text, workspace_dir) -> None:
    """Print the audit report for a contract, newest first."""
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    audit_file = ws.path / "audit.jsonl"
    if audit_file.exists():
        for line in audit_file.read_text(encoding="utf-8").splitlines():
            if line.strip():
                e = json.loads(line)
                node.contracts.audit.append(
                    timestamp=parse_datetime(e["timestamp"]),
                    contract_id=e["contract_id"],
                    consumer=e["consumer"],
                    asset=e["asset"],
                    action=e["action"],
                    decision_reason=e["decision_reason"],
                )
    rows = node.contracts.audit_report(contract_id, window_days=days, now=_parse_now(now_text))
    for row in rows:
        click.echo(json.dumps(row, sort_keys=True))
    click.echo(f"{len(rows)} events")


@contract.command("revoke")
@click.argument("contract_id")
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--reason", default="revoked_by_producer", show_default=True)
@click.option("--now", "now_text", default=None)
def contract_revoke(contract_id, workspace_dir, reason, now_text) -> None:
    ws = Workspace(Path(workspace_dir))
    node = ws.load_node()
    node.contracts.revoke(contract_id, _parse_now(now_text), reason)
    ws.save_node(node)
    click.echo(f"revoked {contract_id}")


# -- ledger ---------------------------------------------------------------------


@main.group()
def ledger() -> None:
    """Inspect and verify ledger chains."""


@ledger.command("dump")
@click.argument("provider")
@click.option("--node", "workspace_dir", required=True, type=click.Path())
def ledger_dump(provider, workspace_dir) -> None:
    """One line per transaction: seq tx_id kind payload_hash timestamp submitter prev_hash."""
    node = Workspace(Path(workspace_dir)).load_node()
    for line in node.ledger.provider(provider).dump_lines():
        click.echo(line)


@ledger.command("verify")
@click.argument("provider")
@click.argument("tx_id")
@click.option("--payload", "payload_file", type=click.Path(exists=True), default=None)
@click.option("--node", "workspace_dir", required=True, type=click.Path())
def ledger_verify(provider, tx_id, payload_file, workspace_dir) -> None:
    """Verify a transaction anchor (and payload bytes if given); exit 0 iff ok."""
    node = Workspace(Path(workspace_dir)).load_node()
    payload = Path(payload_file).read_bytes() if payload_file else None
    check = node.ledger.verify_anchor(provider, tx_id, payload)
    click.echo(f"{'ok' if check.ok else 'FAIL'} {check.reason}")
    if not check.ok:
        sys.exit(1)


# -- node -----------------------------------------------------------------------


@main.group()
def node() -> None:
    """Run a platform node or talk to one."""


@node.command("init")
@click.option("--node", "workspace_dir", required=True, type=click.Path())
@click.option("--node-id", required=True)
@click.option("--base-iri", required=True)
@click.option("--provider", "providers", multiple=True, default=("BrazilAgriChain",))
def node_init(workspace_dir, node_id, base_iri, providers) -> None:
    """Create a workspace directory for a new platform node."""
    ws = Workspace(Path(workspace_dir))
    ws.init(node_id, base_iri, list(providers))
    node_obj = ws.load_node()
    ws.save_node(node_obj)
    click.echo(f"initialized {workspace_dir} as {node_id}")


@node.command("serve")
@click.option("--config", "config_file", required=False, type=click.Path(exists=True))
@click.option("--node", "workspace_dir", required=False, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8151, show_default=True)
def node_serve(config_file, workspace_dir, host, port) -> None:
    """Serve a node over HTTP (from a config file or a workspace)."""
    from .service import serve

    if workspace_dir:
        node_obj = Workspace(Path(workspace_dir)).load_node()
    elif config_file:
        config = NodeConfig.model_validate_json(Path(config_file).read_text(encoding="utf-8"))
        node_obj = PlatformNode(config)
    else:
        raise click.ClickException("provide --config or --node")
    serve(node_obj, host=host, port=port)


@node.command("query")
@click.option("--endpoint", required=True)
@click.option("--file", "query_file", required=True, type=click.Path(exists=True))
@click.option("--contract", "contract_id", default=None)
@click.option("--key", "key_file", required=True, type=click.Path(exists=True))
@click.option("--requester", required=True, help="Requester identity IRI.")
@click.option("--purpose", default=None)
@click.option("--usage", default=None)
def node_query(endpoint, query_file, contract_id, key_file, requester, purpose, usage) -> None:
    """Send a signed query to a running node."""
    import httpx

    keys = KeyPair.load(Path(key_file))
    body = {"query": Path(query_file).read_text(encoding="utf-8")}
    if purpose:
        body["purpose_tag"] = purpose
    if usage:
        body["usage_tag"] = usage
    request = WireRequest(
        kind="query",
        body=body,
        requester_id=requester,
        signature=keys.sign(canonical_body_bytes(body)).hex(),
        contract_id=contract_id,
    )
    response = httpx.post(endpoint.rstrip("/") + "/wire", json=request.model_dump(), timeout=10.0)
    response.raise_for_status()
    payload = response.json()
    if payload["status"] != "ok":
        raise click.ClickException(f"{payload['status']}: {payload.get('error_reason')}")
    results = decode_results(payload["body"])
    click.echo("\t".join(results.variables))
    for row in results.rows:
        click.echo("\t".join(repr(row[v]) if v in row else "" for v in results.variables))


# -- scenario --------------------------------------------------------------------


@main.command("scenario")
@click.argument("action", type=click.Choice(["run"]))
@click.argument("name")
@click.option("--now", "now_text", default=None, help="Simulation start time (ISO 8601).")
@click.option("--report", "report_dir", default=None, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def scenario_cmd(action, name, now_text, report_dir, seed) -> None:
    """Run one case study scenario by name, or 'all'."""
    from .scenarios import run_all, run_scenario

    start = parse_datetime(now_text) if now_text else None
    if name == "all":
        reports = run_all(seed=seed, start=start, report_dir=Path(report_dir) if report_dir else None)
    else:
        reports = [run_scenario(name, seed=seed, start=start)]
        if report_dir:
            reports[0].write(Path(report_dir))
    failed = 0
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        ok = sum(a.passed for a in report.assertions)
        click.echo(f"{report.scenario}: {status} ({ok}/{len(report.assertions)} assertions)")
        for assertion in report.assertions:
            if not assertion.passed:
                click.echo(f"  FAIL {assertion.step} :: {assertion.name}: "
                           f"expected {assertion.expected}, got {assertion.actual}")
                failed += 1
    if failed or not all(r.passed for r in reports):
        sys.exit(1)


if __name__ == "__main__":
    main()

from __future__ import annotations

import json
import socket
from pathlib import Path

import pytest

from signet.cli import EXIT_INPUT, EXIT_NETWORK, EXIT_OK, EXIT_USAGE, main
from signet.predictors import ENV_URL

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(autouse=True)
def no_llm_env(monkeypatch):
    monkeypatch.delenv(ENV_URL, raising=False)


@pytest.fixture()
def no_network(monkeypatch):
    def guard(*args, **kwargs):
        raise AssertionError("network access attempted during offline run")

    monkeypatch.setattr(socket, "socket", guard)
    monkeypatch.setattr(socket, "create_connection", guard)


def _read_records(path: Path) -> list[dict]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        if rec.get("record") != "provenance":
            out.append(rec)
    return out


def _provenance_line(path: Path) -> dict:
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert first.get("record") == "provenance"
    return first


def _run_chain(out_dir: Path) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "sigs": out_dir / "sigs.jsonl",
        "labels": out_dir / "labels.jsonl",
        "voted": out_dir / "voted.jsonl",
        "report": out_dir / "report.json",
        "ablation": out_dir / "ablation.json",
        "stats": out_dir / "stats.json",
    }
    assert main([
        "preprocess",
        "--flows", str(FIXTURES / "flows_demo.jsonl"),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--domain-aliases", str(FIXTURES / "domain_aliases.tsv"),
        "--ad-domains", str(FIXTURES / "ad_domains.txt"),
        "--out", str(paths["sigs"]),
        "--stats", str(paths["stats"]),
    ]) == EXIT_OK
    assert main([
        "label",
        "--signatures", str(paths["sigs"]),
        "--stub", "--stub-echo-field", "OUI",
        "--models", "alpha,beta",
        "--out", str(paths["labels"]),
    ]) == EXIT_OK
    assert main([
        "vote",
        "--labels", str(paths["labels"]),
        "--vendor-aliases", str(FIXTURES / "vendor_aliases.tsv"),
        "--out", str(paths["voted"]),
    ]) == EXIT_OK
    assert main([
        "evaluate",
        "--pred", str(paths["voted"]),
        "--refs", str(FIXTURES / "references_demo.jsonl"),
        "--vendor-aliases", str(FIXTURES / "vendor_aliases.tsv"),
        "--semantic-map", str(FIXTURES / "semantic_map.tsv"),
        "--ambiguous", str(FIXTURES / "ambiguous_labels.txt"),
        "--out", str(paths["report"]),
    ]) == EXIT_OK
    assert main([
        "ablate",
        "--signatures", str(paths["sigs"]),
        "--refs", str(FIXTURES / "references_demo.jsonl"),
        "--vendor-aliases", str(FIXTURES / "vendor_aliases.tsv"),
        "--stub", "--stub-echo-field", "OUI",
        "--out", str(paths["ablation"]),
    ]) == EXIT_OK
    return paths


def test_end_to_end_offline_chain(tmp_path, no_network, capsys):
    paths = _run_chain(tmp_path)
    signatures = _read_records(paths["sigs"])
    assert len(signatures) == 7

    voted = _read_records(paths["voted"])
    vendors = {rec["device_id"]: rec["vendor"] for rec in voted}
    assert vendors["cam-nest-01"] == "Google"
    assert vendors["doorbell-ring-02"] == "Amazon"

    report = json.loads(paths["report"].read_text(encoding="utf-8"))
    assert report["n_pairs"] == 7
    assert report["per_tier"]["strict"] == pytest.approx(4 / 7)
    assert report["per_tier"]["brand"] == pytest.approx(6 / 7)
    assert "provenance" in report

    ablation = json.loads(paths["ablation"].read_text(encoding="utf-8"))
    assert ablation["per_feature_accuracy"]["oui_friendly"] == 0.0
    deltas = ablation["deltas"]
    assert all(deltas[f] == 0.0 for f in deltas if f != "oui_friendly")


def test_reruns_are_byte_identical(tmp_path, no_network):
    # identical invocations must reproduce identical bytes; provenance embeds
    # input paths, so the rerun targets the same directory
    paths = _run_chain(tmp_path / "a")
    first = {key: path.read_bytes() for key, path in paths.items()}
    _run_chain(tmp_path / "a")
    for key, path in paths.items():
        assert path.read_bytes() == first[key], key


def test_provenance_records_inputs_and_versions(tmp_path, no_network):
    paths = _run_chain(tmp_path)
    prov = _provenance_line(paths["sigs"])
    assert prov["command"] == "preprocess"
    assert set(prov["inputs"]) == {"flows", "psl", "domain_aliases", "ad_domains"}
    for entry in prov["inputs"].values():
        assert len(entry["sha256"]) == 64
    assert prov["package_version"]
    # downstream readers skip the provenance line transparently
    labels_prov = _provenance_line(paths["labels"])
    assert labels_prov["inputs"]["signatures"]["sha256"]


def test_perturb_and_emit_subcommands(tmp_path, no_network):
    paths = _run_chain(tmp_path)
    perturbed = tmp_path / "perturbed.jsonl"
    assert main([
        "perturb",
        "--signatures", str(paths["sigs"]),
        "--kind", "swap_hostname",
        "--decoys", str(FIXTURES / "decoy_hostnames.txt"),
        "--seed", "5",
        "--out", str(perturbed),
    ]) == EXIT_OK
    records = _read_records(perturbed)
    assert len(records) == 7

    pairs_path = tmp_path / "pairs.jsonl"
    assert main([
        "emit",
        "--signatures", str(paths["sigs"]),
        "--labels", str(paths["voted"]),
        "--holdout-fraction", "0.25",
        "--seed", "5",
        "--out", str(pairs_path),
    ]) == EXIT_OK
    pairs = _read_records(pairs_path)
    assert pairs
    for rec in pairs:
        start, end = rec["vendor_span"]
        assert rec["response"][start:end]
        assert rec["phase"] in ("I", "II")
        assert rec["split"] in ("train", "holdout")


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["preprocess"]) == EXIT_USAGE
    missing = tmp_path / "missing.jsonl"
    assert main([
        "preprocess",
        "--flows", str(missing),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--out", str(tmp_path / "out.jsonl"),
    ]) == EXIT_USAGE
    # label without --stub and without a configured endpoint
    assert main([
        "label",
        "--signatures", str(FIXTURES / "flows_demo.jsonl"),
        "--out", str(tmp_path / "labels.jsonl"),
    ]) == EXIT_USAGE
    capsys.readouterr()


def test_per_record_decode_errors_are_counted_not_fatal(tmp_path, capsys):
    mixed = tmp_path / "mixed.jsonl"
    first_flow = (FIXTURES / "flows_demo.jsonl").read_text(encoding="utf-8").splitlines()[0]
    mixed.write_text(first_flow + "\nnot json at all\n", encoding="utf-8")
    stats_path = tmp_path / "stats.json"
    assert main([
        "preprocess",
        "--flows", str(mixed),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--out", str(tmp_path / "out.jsonl"),
        "--stats", str(stats_path),
    ]) == EXIT_OK
    stats = json.loads(stats_path.read_text(encoding="utf-8"))
    assert stats["decode_errors"] == 1
    assert stats["input_flows"] == 1
    capsys.readouterr()


def test_undecodable_input_exits_3(tmp_path, capsys):
    # not UTF-8 at all: fatal before any record is seen
    binary = tmp_path / "binary.jsonl"
    binary.write_bytes(b"\xff\xfe\x00garbage")
    assert main([
        "preprocess",
        "--flows", str(binary),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--out", str(tmp_path / "out1.jsonl"),
    ]) == EXIT_INPUT

    # every line bad: no decodable flows is fatal, unlike a partial decode
    allbad = tmp_path / "allbad.jsonl"
    allbad.write_text("not json\nalso not json\n", encoding="utf-8")
    assert main([
        "preprocess",
        "--flows", str(allbad),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--out", str(tmp_path / "out2.jsonl"),
    ]) == EXIT_INPUT

    # record streams written by other subcommands are trusted: damage is fatal
    badlabels = tmp_path / "badlabels.jsonl"
    badlabels.write_text('{"nonsense": true}\n', encoding="utf-8")
    assert main([
        "vote",
        "--labels", str(badlabels),
        "--out", str(tmp_path / "out3.jsonl"),
    ]) == EXIT_INPUT
    capsys.readouterr()


def test_transport_exhaustion_exits_4(tmp_path, monkeypatch, capsys):
    # an endpoint that nothing listens on: retries exhaust, exit 4
    monkeypatch.setenv(ENV_URL, "http://127.0.0.1:9/v1/chat")
    sigs = tmp_path / "sigs.jsonl"
    assert main([
        "preprocess",
        "--flows", str(FIXTURES / "flows_demo.jsonl"),
        "--psl", str(FIXTURES / "public_suffix_list.dat"),
        "--out", str(sigs),
    ]) == EXIT_OK
    assert main([
        "label",
        "--signatures", str(sigs),
        "--models", "remote",
        "--max-attempts", "1",
        "--out", str(tmp_path / "labels.jsonl"),
    ]) == EXIT_NETWORK
    capsys.readouterr()


def test_version_flag(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "signet" in capsys.readouterr().out

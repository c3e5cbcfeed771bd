"""CLI verbs, file outputs, and exit codes."""

import json

import pytest

from bbtm.cli import main

BASE_CONFIG = {
    "seed": 77,
    "nodes": [
        {"role": "Elector", "count": 3},
        {"role": "RCA", "count": 1},
        {"role": "ICA", "count": 1},
        {"role": "PG", "count": 1},
        {"role": "OSP", "count": 1},
    ],
    "policies": {"ballot_quorum": 2},
}


@pytest.fixture
def deployment(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps(BASE_CONFIG))
    dep = tmp_path / "dep"
    assert main(["network", "init", "--config", str(config), "--out", str(dep)]) == 0
    return dep


def _last_json(capsys):
    return json.loads(capsys.readouterr().out)


class TestNetworkInit:
    def test_creates_expected_files(self, deployment):
        names = {p.name for p in deployment.iterdir()}
        assert {"consortium.json", "keys.json", "system.block", "gccf.chain", "gpf.chain"} <= names

    def test_missing_config_is_usage_error(self, tmp_path):
        assert main(["network", "init", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "d")]) == 2


class TestCertVerbs:
    def test_issue_validate_roundtrip(self, deployment, tmp_path, capsys):
        cert_path = tmp_path / "ica9.bin"
        rc = main([
            "cert", "issue", "--deployment", str(deployment),
            "--issuer", "RCA-1", "--subject", "ICA-9", "--out", str(cert_path), "--submit",
        ])
        assert rc == 0
        issued = _last_json(capsys)
        assert issued["submitted"] is True
        assert cert_path.exists() and cert_path.with_suffix(".bin.json").exists()
        rc = main(["cert", "validate", "--deployment", str(deployment), "--cert", str(cert_path)])
        assert rc == 0
        verdict = _last_json(capsys)
        assert verdict["result"] == "Success"
        assert len(verdict["path"]) == 2

    def test_unsubmitted_cert_fails_validation(self, deployment, tmp_path, capsys):
        cert_path = tmp_path / "ica8.bin"
        assert main([
            "cert", "issue", "--deployment", str(deployment),
            "--issuer", "RCA-1", "--subject", "ICA-8", "--out", str(cert_path),
        ]) == 0
        capsys.readouterr()
        rc = main(["cert", "validate", "--deployment", str(deployment), "--cert", str(cert_path)])
        assert rc == 1
        verdict = _last_json(capsys)
        assert verdict["result"] == "NotVerify" and verdict["reason"] == "missing-link"

    def test_validate_accepts_json_cert_files(self, deployment, tmp_path, capsys):
        meta = json.loads((deployment / "consortium.json").read_text())
        rca = next(m for m in meta["config"]["members"] if m["name"] == "RCA-1")
        cert_json = tmp_path / "rca.json"
        cert_json.write_text(json.dumps(rca["cert"]))
        assert main(["cert", "validate", "--deployment", str(deployment), "--cert", str(cert_json)]) == 0


class TestPolicyVerbs:
    def test_add_get_revoke_lifecycle(self, deployment, capsys):
        assert main([
            "policy", "add", "--deployment", str(deployment),
            "--entity", "RA", "--rule", "batch", "--body", '{"limit": 9}',
        ]) == 0
        capsys.readouterr()
        assert main(["policy", "get", "--deployment", str(deployment), "--entity", "RA", "--rule", "batch"]) == 0
        record = _last_json(capsys)["record"]
        assert record["status"] == "alive" and record["rule_body"] == {"limit": 9}
        assert main(["policy", "revoke", "--deployment", str(deployment), "--entity", "RA", "--rule", "batch"]) == 0
        capsys.readouterr()
        main(["policy", "get", "--deployment", str(deployment), "--entity", "RA", "--rule", "batch"])
        assert _last_json(capsys)["record"]["status"] == "death"

    def test_get_absent_rule_fails(self, deployment, capsys):
        assert main(["policy", "get", "--deployment", str(deployment), "--entity", "RA", "--rule", "nope"]) == 1

    def test_non_pg_submitter_rejected(self, deployment, capsys):
        rc = main([
            "policy", "add", "--deployment", str(deployment),
            "--entity", "RA", "--rule", "x", "--body", "{}", "--by", "RCA-1",
        ])
        assert rc == 1


class TestBallotVerbs:
    def test_full_ballot_flow(self, deployment, tmp_path, capsys):
        meta = json.loads((deployment / "consortium.json").read_text())
        elector3 = next(m for m in meta["config"]["members"] if m["name"] == "Elector-3")
        # A brand-new elector certificate is the ballot target; freeze its
        # bytes to a file the CLI can endorse.
        target = tmp_path / "elector4.bin"
        assert main([
            "cert", "issue", "--deployment", str(deployment),
            "--issuer", "Elector-4", "--subject", "Elector-4", "--out", str(target),
        ]) == 0
        capsys.readouterr()
        rc = main([
            "ballot", "tally", "--deployment", str(deployment),
            "--type", "AddElectorCert", "--target-cert", str(target),
        ])
        assert rc == 0 and _last_json(capsys)["status"] == "open"
        for elector in ("Elector-1", "Elector-2"):
            assert main([
                "ballot", "endorse", "--deployment", str(deployment),
                "--type", "AddElectorCert", "--target-cert", str(target), "--elector", elector,
            ]) == 0
        capsys.readouterr()
        main(["ballot", "tally", "--deployment", str(deployment), "--type", "AddElectorCert", "--target-cert", str(target)])
        assert _last_json(capsys)["status"] == "accepted"
        assert main([
            "ballot", "apply", "--deployment", str(deployment),
            "--type", "AddElectorCert", "--target-cert", str(target), "--elector", "Elector-1",
        ]) == 0
        capsys.readouterr()
        assert main(["cert", "validate", "--deployment", str(deployment), "--cert", str(target)]) == 0

    def test_apply_without_quorum_fails(self, deployment, tmp_path, capsys):
        target = tmp_path / "e5.bin"
        assert main([
            "cert", "issue", "--deployment", str(deployment),
            "--issuer", "Elector-5", "--subject", "Elector-5", "--out", str(target),
        ]) == 0
        rc = main([
            "ballot", "apply", "--deployment", str(deployment),
            "--type", "AddElectorCert", "--target-cert", str(target), "--elector", "Elector-1",
        ])
        assert rc == 1


class TestLedgerVerbs:
    def test_export_verify_import(self, deployment, tmp_path, capsys):
        out = tmp_path / "gccf.export"
        assert main(["ledger", "export", "--deployment", str(deployment), "--channel", "GCCF", "--out", str(out)]) == 0
        capsys.readouterr()
        assert main(["ledger", "verify", str(out)]) == 0
        assert _last_json(capsys)["ok"] is True
        assert main(["ledger", "import", str(out), "--channel", "GCCF"]) == 0

    def test_verify_flags_corruption(self, deployment, tmp_path, capsys):
        out = tmp_path / "gpf.export"
        assert main(["ledger", "export", "--deployment", str(deployment), "--channel", "GPF", "--out", str(out)]) == 0
        data = bytearray(out.read_bytes())
        data[len(data) // 2] ^= 0xFF
        corrupted = tmp_path / "gpf.corrupt"
        corrupted.write_bytes(bytes(data))
        assert main(["ledger", "verify", str(corrupted)]) == 1


class TestGccfExport:
    def test_snapshot_files(self, deployment, tmp_path, capsys):
        base = tmp_path / "snapshot"
        assert main(["gccf", "export", "--deployment", str(deployment), "--out", str(base)]) == 0
        summary = _last_json(capsys)
        assert base.with_suffix(".bin").exists() and base.with_suffix(".json").exists()
        snapshot = json.loads(base.with_suffix(".json").read_text())
        assert snapshot["version"] == summary["version"]
        assert "Elector" in snapshot["certificates"]


class TestSimAndMetrics:
    def test_sim_run_and_metrics_report(self, tmp_path, capsys):
        scenario = {
            "seed": 5,
            "nodes": [["Elector", 3], ["RCA", 1], ["ICA", 1], ["PG", 1], ["OSP", 1], ["RA", 1]],
            "network": {"latency_min_ms": 5, "latency_max_ms": 20, "drop_rate": 0.0},
            "generate": {"count": 30, "spacing_ms": 8},
            "policies": {"ballot_quorum": 2},
        }
        scenario_path = tmp_path / "scenario.json"
        scenario_path.write_text(json.dumps(scenario))
        report_path = tmp_path / "report.json"
        ledger_dir = tmp_path / "ledgers"
        csv_path = tmp_path / "lifecycles.csv"
        rc = main([
            "sim", "run", "--scenario", str(scenario_path),
            "--report", str(report_path), "--out", str(ledger_dir), "--lifecycles", str(csv_path),
        ])
        assert rc == 0
        assert _last_json(capsys)["converged"] is True
        assert report_path.exists() and csv_path.exists()
        assert main(["ledger", "verify", str(ledger_dir / "gccf.chain")]) == 0
        capsys.readouterr()
        assert main(["metrics", "report", "--report", str(report_path), "--format", "json"]) == 0
        computed = _last_json(capsys)
        assert computed["committed"] > 0
        out_csv = tmp_path / "metrics.csv"
        assert main(["metrics", "report", "--report", str(report_path), "--format", "csv", "--out", str(out_csv)]) == 0
        assert out_csv.read_text().splitlines()[0] == "section,name,value"

    def test_seed_override_changes_digest(self, tmp_path, capsys):
        scenario = {
            "seed": 5,
            "nodes": [["Elector", 2], ["RCA", 1], ["PG", 1], ["OSP", 1]],
            "workload": [{"at_ms": 100, "action": "policy_add", "entity": "RA", "rule": "r", "body": {}}],
        }
        path = tmp_path / "s.json"
        path.write_text(json.dumps(scenario))
        reports = []
        for seed in ("9", "10"):
            rp = tmp_path / f"r{seed}.json"
            assert main(["sim", "run", "--scenario", str(path), "--seed", seed, "--report", str(rp)]) == 0
            reports.append(json.loads(rp.read_text()))
        assert reports[0]["seed"] == 9 and reports[1]["seed"] == 10


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["ledger", "explode"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["cert", "validate", "--cert", "x"])
        assert exc.value.code == 2

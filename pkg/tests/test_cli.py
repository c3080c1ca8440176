import json

import pytest

from oidc_testbed.cli import EXIT_ERROR, EXIT_HIGH, EXIT_OK, main
from oidc_testbed.manifest import HARDENED_MANIFEST


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def replica_scan(tmp_path_factory):
    out = tmp_path_factory.mktemp("scan")
    code = main(["scan", "--out", str(out)])
    return out, code


def test_scan_replica_exits_high(replica_scan):
    out, code = replica_scan
    assert code == EXIT_HIGH
    report = json.loads((out / "report.json").read_text())
    assert report["flows"]["Hybrid"]["classes"]["session-swap"]["confirmed"] == 24
    assert (out / "rps" / "hy01" / "traces" / "baseline.jsonl").exists()
    assert "24 out of 33 (73%)" in (out / "report.txt").read_text()


def test_scan_hardened_exits_clean(tmp_path, capsys):
    assert main(["scan", "--manifest", str(HARDENED_MANIFEST), "--out", str(tmp_path),
                 "--format", "records"]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert (tmp_path / "findings.jsonl").read_text() == ""


def test_scan_malformed_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n "rps": [{"name": "a", "flow": "Hybrid", "flags": ["NOPE"]}]}')
    assert main(["scan", "--manifest", str(bad)]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "$.rps[0].flags[0]" in err and "line 2" in err


def test_scan_deterministic_across_runs_and_jobs(tmp_path, replica_scan):
    first, _ = replica_scan
    assert main(["scan", "--out", str(tmp_path / "again")]) == EXIT_HIGH
    assert _files(tmp_path / "again") == _files(first)
    assert main(["scan", "--out", str(tmp_path / "par"), "--jobs", "2"]) == EXIT_HIGH
    assert _files(tmp_path / "par") == _files(first)


def test_seed_override_changes_traces(tmp_path, replica_scan):
    first, _ = replica_scan
    main(["scan", "--manifest", str(HARDENED_MANIFEST), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["scan", "--manifest", str(HARDENED_MANIFEST), "--out", str(tmp_path / "b"), "--seed", "2"])
    name = "rps/hardened-hybrid/traces/baseline.jsonl"
    assert _files(tmp_path / "a")[name] != _files(tmp_path / "b")[name]


def test_analyze_exported_trace(replica_scan, capsys):
    out, _ = replica_scan
    capsys.readouterr()
    code = main(["analyze-trace", str(out / "rps" / "hy01" / "traces" / "baseline.jsonl")])
    text = capsys.readouterr().out
    assert "flow: Hybrid" in text and "google-id-auth" in text
    # static findings are candidates, never High
    assert code == EXIT_OK


def test_analyze_hand_built_http_trace(tmp_path, capsys):
    lines = [
        {"kind": "meta", "rp": "shop"},
        {"kind": "brm", "seq": 1, "sender": "browser:v", "to": "shop.rp.test", "method": "GET",
         "url": "https://shop.rp.test/login", "headers": {}, "body": {}, "cookies": {}, "channel": "Https",
         "status": 200, "response_headers": {}, "response_body": {}, "set_cookies": []},
        {"kind": "brm", "seq": 2, "sender": "browser:v", "to": "shop.rp.test", "method": "POST",
         "url": "http://shop.rp.test/signin/google", "headers": {}, "body": {"access_token": "tok"},
         "cookies": {}, "channel": "Http", "status": 200, "response_headers": {}, "response_body": {},
         "set_cookies": []},
    ]
    path = tmp_path / "t.jsonl"
    path.write_text("".join(json.dumps(x) + "\n" for x in lines))
    main(["analyze-trace", str(path), "--format", "records"])
    records = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert records[0] == {"flow": "Unclassifiable", "messages": 2}
    assert "token-sniffable" in {r["class"] for r in records[1:]}


def test_analyze_empty_trace(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["analyze-trace", str(empty)]) == EXIT_ERROR
    assert "empty trace" in capsys.readouterr().err
    assert main(["analyze-trace", str(tmp_path / "missing.jsonl")]) == EXIT_ERROR


def test_demo_session_swap(capsys):
    assert main(["demo", "session-swap"]) == EXIT_HIGH
    text = capsys.readouterr().out
    assert "attacker" in text and "victim" in text
    assert "step 5" in text and "result: SUCCESS" in text


def test_demo_xss_patched_browser(capsys):
    assert main(["demo", "xss-token-theft", "--patched-browser"]) == EXIT_OK
    assert "result: FAILURE - XssBlocked" in capsys.readouterr().out


def test_demo_unknown_playbook(capsys):
    assert main(["demo", "nope"]) == EXIT_ERROR
    assert "session-swap" in capsys.readouterr().err


def test_demo_flag_override(capsys):
    assert main(["demo", "session-swap", "--flow", "AuthorizationCode", "--flag", "PLAINTEXT_SIGNIN_ENDPOINT"]) == EXIT_OK
    assert "result: FAILURE" in capsys.readouterr().out


def test_fleet_report_from_out(replica_scan, capsys):
    out, _ = replica_scan
    capsys.readouterr()
    assert main(["fleet-report", "--out", str(out), "--format", "records"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == json.loads((out / "report.json").read_text())


def test_fleet_report_needs_source(capsys):
    assert main(["fleet-report"]) == EXIT_ERROR

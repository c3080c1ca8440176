"""Acceptance criteria 1-6, each printing one PASS/FAIL line."""
import json
import random
import time

import pytest

from oidc_testbed import protocol as pc
from oidc_testbed.attacks import FLAG_ATTACK_TABLE, PLAYBOOKS, run_trigger
from oidc_testbed.cli import EXIT_HIGH, EXIT_OK, main
from oidc_testbed.errors import AudienceMismatch, BadSignature, Expired, InvalidCode, MalformedToken
from oidc_testbed.manifest import HARDENED_MANIFEST, REPLICA_MANIFEST, load_manifest
from oidc_testbed.op import authenticate_and_grant, handle_token_endpoint
from oidc_testbed.protocol import FlowType, StateValue
from oidc_testbed.rp import Flag, RpConfig
from oidc_testbed.scanner import Finding, Source, hybrid_submission_counts, run_scan, scan_fleet, static_agrees
from oidc_testbed.scenario import VICTIM, Environment, build_world

from conftest import CODE_REG, HYBRID_REG, make_op_state

H, C = "Hybrid", "AuthorizationCode"

# (flow, class, statistic, expected) -- statistic is confirmed, observed or a vector name
REPLICA_COUNTS = [
    (H, "google-id-auth", "confirmed", 3),
    (H, "google-id-auth", "observed", 6),
    (H, "unverified-token-auth", "observed", 19),
    (H, "unverified-token-auth", "confirmed", 13),
    (H, "token-sniffable", "signin-submission", 4),
    (H, "token-sniffable", "cookie", 1),
    (H, "privacy-leak", "confirmed", 7),
    (H, "session-swap", "confirmed", 24),
    (H, "session-swap", "single-use-code", 8),
    (H, "session-swap", "reusable-credential", 16),
    (C, "token-to-browser", "confirmed", 4),
    (C, "privacy-leak", "confirmed", 11),
    (C, "session-swap", "confirmed", 24),
    (C, "forced-login-csrf", "confirmed", 24),
    (C, "xss-token-theft", "confirmed", 69),
]
HYBRID_DETAIL = {"post_without_state": 14, "extra_evidence": 3, "customised": 23}


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def scans(tmp_path_factory):
    """Two independent single-threaded `scan` runs of the shipped replica manifest."""
    out = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        code = main(["scan", "--manifest", str(REPLICA_MANIFEST), "--out", str(d), "--jobs", "1"])
        out.append((d, code, time.perf_counter() - t0))
    return out


def _stat(report_json, flow, cls, stat):
    entry = report_json["flows"][flow]["classes"][cls]
    return entry[stat] if stat in ("confirmed", "observed") else entry["vectors"].get(stat, 0)


def test_criterion_1_replica_fleet(scans, capsys):
    out, code, elapsed = scans[0]
    manifest = load_manifest(REPLICA_MANIFEST)
    flows = [c.flow.value for c in manifest.rps]
    rep = json.loads((out / "report.json").read_text())
    problems = []
    shape = (len(flows), flows.count(C), flows.count(H), flows.count("ClientSide"))
    if shape != (103, 69, 33, 1):
        problems.append(f"fleet shape {shape}")
    if rep["flows"][C]["share_percent"] != 67:
        problems.append("code-flow share")
    for flow, cls, stat, want in REPLICA_COUNTS:
        got = _stat(rep, flow, cls, stat)
        if got != want:
            problems.append(f"{flow}/{cls}/{stat} {got} != {want}")
    detail = hybrid_submission_counts(scan_fleet(manifest.rps, manifest.environment))
    for key, want in HYBRID_DETAIL.items():
        if detail[key] != want:
            problems.append(f"Hybrid/{key} {detail[key]} != {want}")
    if code != EXIT_HIGH:
        problems.append(f"exit {code}")
    if elapsed >= 60:
        problems.append(f"runtime {elapsed:.1f}s")
    report(capsys, 1, not problems,
           f"replica fleet: {len(REPLICA_COUNTS) + len(HYBRID_DETAIL)} counts exact, scan {elapsed:.2f}s"
           if not problems else "; ".join(problems))
    assert not problems


def test_criterion_2_hardened_control(tmp_path, capsys):
    manifest = load_manifest(HARDENED_MANIFEST)
    findings = []
    for cfg in manifest.rps:
        result = run_scan(cfg, manifest.environment)
        findings += result.dynamic + result.static
        # every applicable playbook ran and failed
        assert {o.playbook for o in result.outcomes} == {p for p, pb in PLAYBOOKS.items() if pb.applies_to(cfg.flow)}
    code = main(["scan", "--manifest", str(HARDENED_MANIFEST), "--out", str(tmp_path)])
    ok = not findings and code == EXIT_OK and (tmp_path / "findings.jsonl").read_text() == ""
    report(capsys, 2, ok, f"hardened RPs ({', '.join(c.flow.value for c in manifest.rps)}): "
                          f"{len(findings)} findings, exit {code}")
    assert ok


def test_criterion_3_flag_attack_equivalence(capsys):
    bad = []
    for row in FLAG_ATTACK_TABLE:
        for seed in (0, 1, 2):
            with_flag, without = run_trigger(row, Environment(seed=seed))
            if (with_flag, without) != ((False, True) if row.defends else (True, False)):
                bad.append(f"{row.flag}/{row.flow.value}/{row.playbook}")
    singles = 0
    for flow in FlowType:
        for flag in Flag:
            try:
                cfg = RpConfig.make("target", flow, [flag])
            except ValueError:
                continue
            singles += 1
            env = Environment(universal_xss=False)
            got = {pid for pid, pb in PLAYBOOKS.items()
                   if pb.applies_to(flow) and pb.run(build_world(cfg, env, pid), cfg.name).success}
            names = {f.value for f in cfg.flags}
            hits = {r.playbook for r in FLAG_ATTACK_TABLE
                    if r.flow is flow and r.flag in names and r.context <= names and not r.defends}
            blocked = {r.playbook for r in FLAG_ATTACK_TABLE
                       if r.flow is flow and r.flag in names and r.context <= names and r.defends}
            if got != hits - blocked:
                bad.append(f"single {flow.value}/{flag.value}: {sorted(got)}")
    report(capsys, 3, not bad, f"{len(FLAG_ATTACK_TABLE)} table rows x 3 seeds, {singles} single-flag configs"
           if not bad else "; ".join(bad))
    assert not bad


def test_criterion_4_protocol_invariants(capsys):
    problems = []
    state = make_op_state(4)
    # code single use, both flows
    for reg, redirect in ((CODE_REG, CODE_REG.redirect_uri), (HYBRID_REG, pc.POSTMESSAGE)):
        code = pc.mint_code(state, reg.client_id, VICTIM.numeric_id, 0)
        handle_token_endpoint(state, code.value, reg.client_id, reg.client_secret, redirect, 1)
        try:
            handle_token_endpoint(state, code.value, reg.client_id, reg.client_secret, redirect, 2)
            problems.append(f"second redemption accepted ({reg.registered_flow.value})")
        except InvalidCode:
            pass
    # step-5 and step-8 id_token identical
    req = pc.build_authorization_request(HYBRID_REG, FlowType.HYBRID, StateValue("s"))
    delivered = authenticate_and_grant(state, (VICTIM.email, VICTIM.password), req).payload
    step8 = handle_token_endpoint(state, delivered.code, "rp-h", "secret-h", pc.POSTMESSAGE, 1)
    if step8.id_token.encoded != delivered.id_token:
        problems.append("step-8 id_token differs from step 5")
    # audience binding
    try:
        pc.verify_id_token(delivered.id_token, state.signing_key, "rp-m", 1)
        problems.append("id_token for rp-h accepted by rp-m")
    except AudienceMismatch:
        pass
    if pc.verify_id_token(delivered.id_token, state.signing_key, "rp-h", 1).aud != "rp-h":
        problems.append("audience")
    # 1000 seeded single-byte tamperings
    token = delivered.id_token
    rng = random.Random(2014)
    accepted = 0
    for _ in range(1000):
        raw = bytearray(token.encode())
        pos = rng.randrange(len(raw))
        raw[pos] = rng.choice([b for b in range(33, 127) if b != raw[pos]])
        try:
            pc.verify_id_token(raw.decode(), state.signing_key, "rp-h", 1)
            accepted += 1
        except (BadSignature, MalformedToken, AudienceMismatch, Expired):
            pass
    if accepted:
        problems.append(f"{accepted} tampered tokens verified")
    report(capsys, 4, not problems, "single-use code, step-5/8 identity, audience binding, 1000/1000 tampered "
                                    "tokens rejected" if not problems else "; ".join(problems))
    assert not problems


def test_criterion_5_determinism(scans, capsys):
    (a, _, _), (b, _, _) = scans
    fa, fb = _files(a), _files(b)
    differing = sorted(k for k in fa.keys() | fb.keys() if fa.get(k) != fb.get(k))
    traces = sum(1 for k in fa if k.endswith(".jsonl") and "/traces/" in k)
    ok = not differing and traces > 0
    report(capsys, 5, ok, f"two scans byte-identical over {len(fa)} files ({traces} traces)"
           if ok else f"differing: {differing[:5]}")
    assert ok


def test_criterion_6_trace_round_trip(scans, capsys):
    out, _, _ = scans[0]
    manifest = load_manifest(REPLICA_MANIFEST)
    dynamic: dict = {}
    for line in (out / "findings.jsonl").read_text().splitlines():
        f = Finding.from_record(json.loads(line))
        if f.source is Source.DYNAMIC:
            dynamic.setdefault(f.rp, []).append(f)
    right, disagree = 0, []
    for cfg in manifest.rps:
        path = out / "rps" / cfg.name / "traces" / "baseline.jsonl"
        capsys.readouterr()
        main(["analyze-trace", str(path), "--format", "records"])
        lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        right += lines[0]["flow"] == cfg.flow.value
        static = [Finding.from_record(r) for r in lines[1:]]
        missing = static_agrees(dynamic.get(cfg.name, []), static)
        if missing:
            disagree.append(f"{cfg.name}: {[m.value for m in missing]}")
    ok = right == len(manifest.rps) == 103 and not disagree
    report(capsys, 6, ok, f"{right}/{len(manifest.rps)} flows reclassified, static agrees with dynamic on "
                          f"{len(manifest.rps) - len(disagree)}/{len(manifest.rps)} RPs"
           if ok else f"{right}/103 flows; disagreements {disagree[:5]}")
    assert ok

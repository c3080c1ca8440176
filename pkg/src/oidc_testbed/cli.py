"""Command-line front end.

    oidc-testbed scan --manifest M.json --out DIR [--seed N] [--jobs N] [--format table|records]
    oidc-testbed analyze-trace TRACE.jsonl [--format table|records]
    oidc-testbed demo PLAYBOOK [--flow F] [--flag X ...] [--patched-browser] [--seed N]
    oidc-testbed fleet-report (--out DIR | --manifest M.json) [--format table|records]

Exit status: 0 clean, 2 when any High-severity finding was produced, 1 on error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attacks import PLAYBOOKS
from .browser import Trace
from .errors import TestbedError, Unclassifiable
from .manifest import REPLICA_MANIFEST, load_manifest, parse_manifest
from .op import OP_HOST
from .protocol import FlowType
from .rp import Flag, RpConfig
from .scanner import (
    Finding,
    Severity,
    aggregate_fleet,
    classify_flow,
    detect_signatures,
    findings_from_outcome,
    scan_fleet,
)
from .scenario import Environment, build_world

EXIT_OK, EXIT_ERROR, EXIT_HIGH = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _findings_table(findings: list) -> str:
    if not findings:
        return "no findings\n"
    rows = [("RP", "CLASS", "SEVERITY", "SOURCE", "VECTORS")]
    rows += [(f.rp, f.vuln_class.value, f.severity.value, f.source.value, ",".join(f.vectors)) for f in findings]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def _records(findings: list) -> str:
    return "".join(json.dumps(f.to_record(), sort_keys=True) + "\n" for f in findings)


def _exit_for(findings: list) -> int:
    return EXIT_HIGH if any(f.severity is Severity.HIGH for f in findings) else EXIT_OK


# --------------------------------------------------------------------------


def cmd_scan(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.seed is not None:
        manifest = manifest.with_seed(args.seed)
    results = scan_fleet(manifest.rps, manifest.environment, jobs=args.jobs)
    per_rp = {r.config.name: r.findings for r in results}
    findings = [f for r in results for f in r.findings]
    report = aggregate_fleet(per_rp, manifest.rps)

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(manifest.dumps())
        (out / "findings.jsonl").write_text(_records(findings))
        (out / "report.json").write_text(_dump(report.to_dict()))
        (out / "report.txt").write_text(report.to_table())
        for r in results:
            rp_dir = out / "rps" / r.config.name
            (rp_dir / "traces").mkdir(parents=True, exist_ok=True)
            (rp_dir / "findings.json").write_text(_dump({
                "rp": r.config.to_dict(),
                "findings": [f.to_record() for f in r.findings],
                "outcomes": [o.to_dict() for o in r.outcomes],
            }))
            for label, trace in r.traces.items():
                (rp_dir / "traces" / f"{label}.jsonl").write_text(trace.dumps())

    if args.format == "records":
        sys.stdout.write(_records(findings))
    else:
        sys.stdout.write(report.to_table())
    return _exit_for(findings)


def cmd_analyze_trace(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise TestbedError(f"{args.trace}: {exc.strerror}") from None
    trace = Trace.loads(text)
    try:
        flow = classify_flow(trace).value
    except Unclassifiable:
        flow = "Unclassifiable"
    findings = detect_signatures(trace)
    if args.format == "records":
        sys.stdout.write(json.dumps({"flow": flow, "messages": len(trace)}, sort_keys=True) + "\n")
        sys.stdout.write(_records(findings))
    else:
        sys.stdout.write(f"flow: {flow}\nmessages: {len(trace)}\n")
        sys.stdout.write(_findings_table(findings))
    return _exit_for(findings)


def cmd_fleet_report(args) -> int:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        results = scan_fleet(manifest.rps, manifest.environment, jobs=args.jobs)
        per_rp = {r.config.name: r.findings for r in results}
    elif args.out:
        out = Path(args.out)
        try:
            manifest = parse_manifest((out / "manifest.json").read_text(), str(out / "manifest.json"))
            lines = (out / "findings.jsonl").read_text().splitlines()
        except OSError as exc:
            raise TestbedError(f"{out}: {exc.strerror} (run `scan --out` first)") from None
        per_rp: dict = {}
        for line in lines:
            if line.strip():
                f = Finding.from_record(json.loads(line))
                per_rp.setdefault(f.rp, []).append(f)
    else:
        raise TestbedError("fleet-report needs --out DIR or --manifest FILE")
    report = aggregate_fleet(per_rp, manifest.rps)
    sys.stdout.write(_dump(report.to_dict()) if args.format == "records" else report.to_table())
    return EXIT_OK


# --------------------------------------------------------------------------
# demo


DEMO_CONFIGS = {
    "google-id-impersonation": (FlowType.HYBRID, ("AUTH_BY_GOOGLE_ID",)),
    "cross-rp-token-impersonation": (FlowType.HYBRID, ("AUTH_BY_ACCESS_TOKEN",)),
    "token-sniff": (FlowType.HYBRID, ("AUTH_BY_ACCESS_TOKEN", "PLAINTEXT_SIGNIN_ENDPOINT")),
    "privacy-sniff": (FlowType.AUTHORIZATION_CODE, ("PLAINTEXT_SIGNIN_ENDPOINT", "RETURNS_USERINFO_PLAINTEXT")),
    "session-swap": (FlowType.HYBRID, ("NO_STATE",)),
    "xss-token-theft": (FlowType.AUTHORIZATION_CODE, ()),
    "forced-login-csrf": (FlowType.AUTHORIZATION_CODE, ("NO_STATE",)),
}


def annotate(msg) -> str:
    """Protocol step a browser-relayed message belongs to."""
    body = msg.response_body
    if msg.to == OP_HOST:
        delivered = bool(body.get("delivery")) or msg.status == 302
        if msg.path == "/o/auth":
            if delivered:
                return "step 5: authorization response granted automatically, no user interaction"
            return f"step 3: OP asks for {body.get('form', msg.status)}"
        if msg.path == "/o/login":
            if delivered:
                return "steps 4-5: user signs in or consents, OP answers with the authorization response"
            return f"step 4: OP rejects the input ({msg.status})"
        return "OP"
    if msg.path == "/login":
        return "steps 1-2: RP login page issues the authorization request"
    if msg.path in ("/signin/google", "/callback"):
        if msg.status == 200 and body.get("status") == "signed-in":
            return "step 6: sign-in endpoint accepts the response (steps 7-9 run server-to-server)"
        return f"step 6: sign-in endpoint answers {msg.status} {body.get('error', '')}".rstrip()
    if msg.path == "/home":
        return "landing page"
    return ""


def cmd_demo(args) -> int:
    if args.playbook not in PLAYBOOKS:
        raise TestbedError(f"unknown playbook {args.playbook!r}; valid ids: {', '.join(PLAYBOOKS)}")
    flow, flags = DEMO_CONFIGS[args.playbook]
    if args.flow:
        flow = FlowType(args.flow)
    if args.flag is not None:
        flags = tuple(args.flag)
    config = RpConfig.make("demo", flow, flags)
    env = Environment(seed=args.seed, universal_xss=not args.patched_browser)
    world = build_world(config, env, args.playbook)
    playbook = PLAYBOOKS[args.playbook]
    if not playbook.applies_to(config.flow):
        raise TestbedError(f"{args.playbook} does not apply to a {config.flow.value} RP")
    outcome = playbook.run(world, config.name)

    out = [f"playbook: {args.playbook}",
           f"target:   {config.name} ({config.flow.value}) flags={sorted(f.value for f in config.flags) or 'none'}",
           f"browser:  {'patched' if args.patched_browser else 'universal XSS'}", ""]
    for msg in world.network.log:
        who = msg.sender.split(":", 1)[1]
        out.append(f"{msg.seq:>3} {who:<9} {msg.method:<4} {msg.url[:90]}")
        note = annotate(msg)
        out.append(f"    {'':<9} -> {msg.status} {msg.channel}" + (f"  # {note}" if note else ""))
    out += ["", f"result: {'SUCCESS' if outcome.success else 'FAILURE'} - {outcome.reason}"]
    if not outcome.preconditions_met:
        out.append("preconditions were not met")
    sys.stdout.write("\n".join(out) + "\n")
    return _exit_for(findings_from_outcome(outcome))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oidc-testbed", description="OpenID Connect RP testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan every RP in a fleet manifest")
    p.add_argument("--manifest", default=str(REPLICA_MANIFEST))
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for findings, report and traces")
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("analyze-trace", help="classify and statically analyse an exported trace")
    p.add_argument("trace")
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.set_defaults(func=cmd_analyze_trace)

    p = sub.add_parser("demo", help="run one playbook against a canned RP and narrate it")
    p.add_argument("playbook")
    p.add_argument("--flow", choices=[f.value for f in FlowType])
    p.add_argument("--flag", action="append", choices=[f.value for f in Flag],
                   help="RP flag (repeatable); replaces the canned flags")
    p.add_argument("--patched-browser", action="store_true", help="browser without universal XSS")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("fleet-report", help="fleet statistics from a scan directory or a manifest")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.set_defaults(func=cmd_fleet_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TestbedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Run every applicable playbook against an RP, analyse its login trace
statically, and fold per-RP findings into fleet statistics."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional
from urllib.parse import parse_qsl, urlsplit

from .attacks import PLAYBOOKS, AttackOutcome, IDENTITY_FIELDS
from .browser import Trace
from .errors import Unclassifiable
from .http import split_fragment
from .op import OP_HOST
from .protocol import NULL_STATE_WIRE, Delivery, FlowType
from .rp import SESSION_COOKIE, RpConfig
from .scenario import VICTIM, Environment, build_world

# shorter than this and a state value is a constant, not a nonce
MIN_STATE_LENGTH = 16
SIGNIN_PATHS = ("/signin/google", "/callback")
TOKEN_FIELDS = ("access_token", "id_token")


class VulnClass(str, enum.Enum):
    GOOGLE_ID_AUTH = "google-id-auth"
    UNVERIFIED_TOKEN_AUTH = "unverified-token-auth"
    TOKEN_SNIFFABLE = "token-sniffable"
    PRIVACY_LEAK = "privacy-leak"
    SESSION_SWAP = "session-swap"
    FORCED_LOGIN_CSRF = "forced-login-csrf"
    XSS_TOKEN_THEFT = "xss-token-theft"
    TOKEN_TO_BROWSER = "token-to-browser"
    WEAK_STATE = "null/absent/fixed-state"


class Severity(str, enum.Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"
    # static only: the trace shows the pattern, but whether the server relies on it is unknown
    CANDIDATE = "Candidate"


class Source(str, enum.Enum):
    DYNAMIC = "dynamic-playbook"
    STATIC = "static-signature"


V = VulnClass

SEVERITY = {
    V.GOOGLE_ID_AUTH: Severity.HIGH,
    V.UNVERIFIED_TOKEN_AUTH: Severity.HIGH,
    V.SESSION_SWAP: Severity.HIGH,
    V.TOKEN_SNIFFABLE: Severity.MEDIUM,
    V.TOKEN_TO_BROWSER: Severity.MEDIUM,
    V.PRIVACY_LEAK: Severity.MEDIUM,
    V.XSS_TOKEN_THEFT: Severity.MEDIUM,
    V.FORCED_LOGIN_CSRF: Severity.LOW,
    V.WEAK_STATE: Severity.HIGH,
}
STATIC_CANDIDATES = {V.GOOGLE_ID_AUTH, V.UNVERIFIED_TOKEN_AUTH, V.WEAK_STATE}

PLAYBOOK_CLASS = {
    "google-id-impersonation": V.GOOGLE_ID_AUTH,
    "cross-rp-token-impersonation": V.UNVERIFIED_TOKEN_AUTH,
    "privacy-sniff": V.PRIVACY_LEAK,
    "session-swap": V.SESSION_SWAP,
    "xss-token-theft": V.XSS_TOKEN_THEFT,
    "forced-login-csrf": V.FORCED_LOGIN_CSRF,
}
# where a sniffed token sat -> (class, vector)
SNIFF_LOCATION = {
    "request-field": (V.TOKEN_SNIFFABLE, "signin-submission"),
    "cookie": (V.TOKEN_SNIFFABLE, "cookie"),
    "set-cookie": (V.TOKEN_SNIFFABLE, "cookie"),
    "response-body": (V.TOKEN_TO_BROWSER, "response-body"),
}
# dynamic class -> static class expected on the same RP's login trace
STATIC_COUNTERPART = {
    V.SESSION_SWAP: V.WEAK_STATE,
    V.FORCED_LOGIN_CSRF: V.WEAK_STATE,
    V.XSS_TOKEN_THEFT: None,  # the exploit trace is not a login trace
}


@dataclass(frozen=True)
class Finding:
    rp: str
    vuln_class: VulnClass
    severity: Severity
    source: Source
    evidence: dict = field(default_factory=dict, hash=False, compare=False)
    vectors: tuple = ()
    playbook: Optional[str] = None

    def to_record(self) -> dict:
        return {"rp": self.rp, "class": self.vuln_class.value, "severity": self.severity.value,
                "source": self.source.value, "playbook": self.playbook, "vectors": list(self.vectors),
                "evidence": self.evidence}

    @classmethod
    def from_record(cls, rec: dict) -> "Finding":
        return cls(rec["rp"], VulnClass(rec["class"]), Severity(rec["severity"]), Source(rec["source"]),
                   rec.get("evidence", {}), tuple(rec.get("vectors", ())), rec.get("playbook"))


def findings_from_outcome(outcome: AttackOutcome) -> list:
    if not outcome.success:
        return []
    ev = {"playbook": outcome.playbook, "reason": outcome.reason, "seqs": outcome.evidence.get("seqs", [])}
    if outcome.playbook == "token-sniff":
        by_class: dict = {}
        for loc in outcome.vectors:
            cls, vector = SNIFF_LOCATION[loc]
            by_class.setdefault(cls, set()).add(vector)
        return [Finding(outcome.rp, cls, SEVERITY[cls], Source.DYNAMIC, ev, tuple(sorted(vecs)), outcome.playbook)
                for cls, vecs in sorted(by_class.items())]
    cls = PLAYBOOK_CLASS[outcome.playbook]
    return [Finding(outcome.rp, cls, SEVERITY[cls], Source.DYNAMIC, ev, tuple(outcome.vectors), outcome.playbook)]


# --------------------------------------------------------------------------
# static analysis of one login trace


def _rp_name(msg, trace: Trace) -> str:
    return trace.meta.get("rp") or msg.to.split(".")[0]


def _is_submission(msg) -> bool:
    if msg.to == OP_HOST or msg.path not in SIGNIN_PATHS:
        return False
    return any(k in msg.request_fields for k in ("code", "google_id", "email") + TOKEN_FIELDS)


def _weak_state(fields: dict) -> Optional[str]:
    state = fields.get("state")
    if state is None:
        return "absent"
    if state == NULL_STATE_WIRE:
        return "null"
    if len(state) < MIN_STATE_LENGTH:
        return "constant"
    return None


def _has_identity(fields: dict) -> bool:
    return any(fields.get(k) for k in IDENTITY_FIELDS + TOKEN_FIELDS)


def detect_signatures(trace: Trace) -> list:
    """Static candidates read off the BRMs of ``trace`` (no server knowledge)."""
    hits: dict = {}

    def hit(cls: VulnClass, msg, vector: Optional[str] = None, note: Optional[str] = None):
        entry = hits.setdefault(cls, {"rp": _rp_name(msg, trace), "seqs": [], "vectors": set(), "notes": set()})
        if msg.seq not in entry["seqs"]:
            entry["seqs"].append(msg.seq)
        if vector:
            entry["vectors"].add(vector)
        if note:
            entry["notes"].add(note)

    for msg in trace:
        fields = msg.request_fields
        if _is_submission(msg):
            if fields.get("google_id"):
                hit(V.GOOGLE_ID_AUTH, msg)
            if any(fields.get(k) for k in TOKEN_FIELDS):
                hit(V.UNVERIFIED_TOKEN_AUTH, msg)
            weak = _weak_state(fields)
            if weak:
                hit(V.WEAK_STATE, msg, note=weak)
        if msg.to != OP_HOST and msg.response_body.get("access_token"):
            hit(V.TOKEN_TO_BROWSER, msg, "response-body")
        if not msg.is_http:
            continue
        cookies = {k: v for k, v in msg.cookies.items() if k != SESSION_COOKIE}
        set_cookies = {c["name"]: c["value"] for c in msg.set_cookies if c["name"] != SESSION_COOKIE}
        if any(fields.get(k) for k in TOKEN_FIELDS):
            hit(V.TOKEN_SNIFFABLE, msg, "signin-submission")
        if any(cookies.get(k) or set_cookies.get(k) for k in TOKEN_FIELDS):
            hit(V.TOKEN_SNIFFABLE, msg, "cookie")
        if _has_identity(fields) or _has_identity(cookies) or _has_identity(set_cookies) \
                or _has_identity(msg.response_body):
            hit(V.PRIVACY_LEAK, msg)

    out = []
    for cls in VulnClass:
        if cls not in hits:
            continue
        entry = hits[cls]
        sev = Severity.CANDIDATE if cls in STATIC_CANDIDATES else SEVERITY[cls]
        ev = {"seqs": entry["seqs"]}
        if entry["notes"]:
            ev["state"] = sorted(entry["notes"])
        out.append(Finding(entry["rp"], cls, sev, Source.STATIC, ev, tuple(sorted(entry["vectors"]))))
    return out


def classify_flow(trace: Trace) -> FlowType:
    delivered_code = delivered_tokens = False
    for msg in trace:
        body = msg.response_body
        if body.get("delivery") == Delivery.POST_MESSAGE_HTML.value:
            if body.get("code"):
                return FlowType.HYBRID
            if body.get("access_token") or body.get("id_token"):
                delivered_tokens = True
        if msg.to == OP_HOST and msg.status == 302:
            bare, fragment = split_fragment(msg.response_headers.get("Location", ""))
            query = dict(parse_qsl(urlsplit(bare).query))
            if query.get("code") and not (fragment.get("access_token") or query.get("access_token")):
                delivered_code = True
    if delivered_code:
        return FlowType.AUTHORIZATION_CODE
    if delivered_tokens:
        return FlowType.CLIENT_SIDE
    raise Unclassifiable(f"no authorization response in {len(trace)} messages")


# --------------------------------------------------------------------------
# per-RP scan


@dataclass
class ScanResult:
    config: RpConfig
    dynamic: list
    static: list
    outcomes: list
    baseline: Trace
    traces: dict  # label -> Trace

    @property
    def findings(self) -> list:
        return merge_findings(self.dynamic, self.static)


def baseline_trace(config: RpConfig, env: Environment) -> Trace:
    """The victim's honest login, captured for static analysis and export."""
    world = build_world(config, env, "baseline")
    victim = world.browser("victim")
    trace = victim.start_trace(rp=config.name, flow=config.flow.value, seed=env.seed, label="baseline")
    world.login(victim, config.name, VICTIM)
    return trace


def run_playbooks(config: RpConfig, env: Environment) -> list:
    outcomes = []
    for pid, playbook in PLAYBOOKS.items():
        if playbook.applies_to(config.flow):
            outcomes.append(playbook.run(build_world(config, env, pid), config.name))
    return outcomes


def run_scan(config: RpConfig, env: Environment) -> ScanResult:
    outcomes = run_playbooks(config, env)
    dynamic = [f for o in outcomes for f in findings_from_outcome(o)]
    base = baseline_trace(config, env)
    traces = {"baseline": base}
    for o in outcomes:
        for i, t in enumerate(o.traces):
            traces[o.playbook if i == 0 else f"{o.playbook}-{i}"] = t
    return ScanResult(config, dynamic, detect_signatures(base), outcomes, base, traces)


def scan_rp(config: RpConfig, environment: Environment) -> list:
    """Dynamic findings only: one per successful playbook (token-sniff may yield two classes)."""
    return [f for o in run_playbooks(config, environment) for f in findings_from_outcome(o)]


def merge_findings(dynamic: Iterable[Finding], static: Iterable[Finding]) -> list:
    """One finding per (rp, class); a confirmed dynamic finding hides its static twin."""
    merged: dict = {}
    for f in list(dynamic) + list(static):
        key = (f.rp, f.vuln_class)
        if key not in merged:
            merged[key] = f
    return sorted(merged.values(), key=lambda f: (f.rp, list(VulnClass).index(f.vuln_class)))


def static_agrees(dynamic: Iterable[Finding], static: Iterable[Finding]) -> list:
    """Dynamic classes whose static counterpart is missing (empty list = agreement)."""
    seen = {f.vuln_class for f in static}
    missing = []
    for f in dynamic:
        want = STATIC_COUNTERPART.get(f.vuln_class, f.vuln_class)
        if want is not None and want not in seen:
            missing.append(f.vuln_class)
    return missing


# --------------------------------------------------------------------------
# fleet statistics


def percent(count: int, population: int) -> int:
    """Integer percent, halves rounded up."""
    return math.floor(100 * count / population + 0.5) if population else 0


def out_of(count: int, population: int) -> str:
    return f"{count} out of {population} ({percent(count, population)}%)"


@dataclass
class ClassStats:
    observed: int = 0
    confirmed: int = 0
    vectors: dict = field(default_factory=dict)


@dataclass
class FleetReport:
    populations: dict  # flow value -> RP count
    stats: dict        # flow value -> {class value -> ClassStats}

    @property
    def total(self) -> int:
        return sum(self.populations.values())

    def get(self, flow, cls) -> ClassStats:
        return self.stats[FlowType(flow).value][VulnClass(cls).value]

    def to_dict(self) -> dict:
        flows = {}
        for flow, pop in self.populations.items():
            classes = {}
            for cls, st in self.stats[flow].items():
                classes[cls] = {"observed": st.observed, "observed_percent": percent(st.observed, pop),
                                "confirmed": st.confirmed, "confirmed_percent": percent(st.confirmed, pop),
                                "vectors": dict(sorted(st.vectors.items()))}
            flows[flow] = {"population": pop, "share_percent": percent(pop, self.total), "classes": classes}
        return {"total": self.total, "flows": flows}

    def to_table(self) -> str:
        lines = [f"{self.total} RPs"]
        for flow, pop in self.populations.items():
            lines.append(f"{flow}: {out_of(pop, self.total)}")
        for flow, pop in self.populations.items():
            lines.append("")
            lines.append(f"[{flow}] population {pop}")
            for cls, st in self.stats[flow].items():
                if not st.observed:
                    continue
                row = f"  {cls:<26} confirmed {out_of(st.confirmed, pop):<20} observed {out_of(st.observed, pop)}"
                if st.vectors:
                    row += "  [" + ", ".join(f"{k}: {v}" for k, v in sorted(st.vectors.items())) + "]"
                lines.append(row)
        return "\n".join(lines) + "\n"


def aggregate_fleet(findings_per_rp: dict, configs: Iterable[RpConfig]) -> FleetReport:
    configs = list(configs)
    populations = {flow.value: 0 for flow in FlowType}
    stats = {flow.value: {cls.value: ClassStats() for cls in VulnClass} for flow in FlowType}
    for cfg in configs:
        flow = cfg.flow.value
        populations[flow] += 1
        by_class: dict = {}
        for f in findings_per_rp.get(cfg.name, []):
            by_class.setdefault(f.vuln_class, []).append(f)
        for cls, fs in by_class.items():
            st = stats[flow][cls.value]
            st.observed += 1
            dyn = [f for f in fs if f.source is Source.DYNAMIC]
            if dyn:
                st.confirmed += 1
                for v in sorted({v for f in dyn for v in f.vectors}):
                    st.vectors[v] = st.vectors.get(v, 0) + 1
    populations = {k: v for k, v in populations.items() if v}
    stats = {k: v for k, v in stats.items() if k in populations}
    return FleetReport(populations, stats)


def hybrid_submission_counts(results: Iterable[ScanResult]) -> dict:
    """Counts about what hybrid RP Clients submit, read off scan results.

    customised: the client sends more than the code (google_id or a token).
    extra_evidence: confirmed token impersonations whose forged request also
    needed the victim's google_id or email.
    post_without_state: confirmed session swaps delivered by an auto-posting
    form with no state field.
    """
    out = {"customised": 0, "extra_evidence": 0, "post_without_state": 0}
    for r in results:
        if r.config.flow is not FlowType.HYBRID:
            continue
        fields = {}
        for msg in r.baseline:
            if _is_submission(msg):
                fields = msg.request_fields
        out["customised"] += any(k in fields for k in ("google_id",) + TOKEN_FIELDS)
        for o in r.outcomes:
            if not o.success:
                continue
            if o.playbook == "cross-rp-token-impersonation":
                out["extra_evidence"] += any(k in o.evidence["forged"] for k in ("google_id", "email"))
            if o.playbook == "session-swap":
                page = o.evidence["page"]
                out["post_without_state"] += page["kind"] == "AUTO_POST_FORM" and "state" not in page["fields"]
    return out


def _scan_one(args) -> ScanResult:
    config, env = args
    return run_scan(config, env)


def scan_fleet(configs: Iterable[RpConfig], env: Environment, jobs: int = 1) -> list:
    """Scan every RP; results come back in input order whatever ``jobs`` is."""
    work = [(c, env) for c in configs]
    if jobs <= 1:
        return [_scan_one(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_scan_one, work, chunksize=4))

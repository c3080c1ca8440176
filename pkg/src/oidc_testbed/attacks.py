"""Attack playbooks.

Each playbook drives an attacker (and, where needed, a victim browser) inside a
:class:`~oidc_testbed.scenario.World` and reports an :class:`AttackOutcome`
whose ``success`` is decided from observable state only: which user the RP
session belongs to, or whether a captured token still works at userinfo.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import protocol as pc
from .browser import (
    AttackPage,
    AttackPageKind,
    ExploitScript,
    Trace,
    load_attack_page,
    relay_submission,
    xss_execute,
)
from .errors import (
    InvalidToken,
    MalformedToken,
    NoAutoGrant,
    StaleCode,
    XssBlocked,
)
from .http import with_query
from .op import AUTH_URL
from .protocol import FlowType
from .rp import SESSION_COOKIE, TOKEN_COOKIE, RpConfig
from .scenario import ATTACKER, MALICIOUS_RP, VICTIM, World, build_world

__all__ = [
    "AttackOutcome", "AttackPage", "AttackPageKind", "SniffReport", "Sniffed", "PLAYBOOKS",
    "impersonate_via_google_id", "impersonate_via_cross_rp_token", "sniff_token_or_info",
    "token_sniff", "privacy_sniff", "session_swap", "xss_steal_token", "forced_login_csrf",
    "FlagTrigger", "FLAG_ATTACK_TABLE", "run_trigger",
]

IDENTITY_FIELDS = ("numeric_id", "email", "display_name", "google_id")


@dataclass
class AttackOutcome:
    playbook: str
    rp: str
    success: bool
    preconditions_met: bool = True
    reason: str = ""
    vectors: tuple = ()
    evidence: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"playbook": self.playbook, "rp": self.rp, "success": self.success,
                "preconditions_met": self.preconditions_met, "reason": self.reason,
                "vectors": list(self.vectors), "evidence": self.evidence}


def _not_applicable(playbook: str, world: World, target: str, why: str) -> AttackOutcome:
    return AttackOutcome(playbook, target, False, preconditions_met=False, reason=why)


def _trace(world: World, browser, target: str, label: str) -> Trace:
    cfg = world.rps[target].config
    return browser.start_trace(rp=target, flow=cfg.flow.value, seed=world.env.seed, label=label)


def _seqs(trace: Trace) -> list:
    return [m.seq for m in trace]


# --------------------------------------------------------------------------
# impersonation (Hybrid)


def impersonate_via_google_id(world: World, target: str, victim_id: str = VICTIM.numeric_id) -> AttackOutcome:
    pid = "google-id-impersonation"
    if world.rps[target].config.flow is not FlowType.HYBRID:
        return _not_applicable(pid, world, target, "needs a Hybrid-flow RP")
    attacker = world.browser("attacker")
    trace = _trace(world, attacker, target, pid)
    own = world.login(attacker, target, ATTACKER, intercept=True).submission
    forged = replace(own, google_id=victim_id)
    page = relay_submission(attacker, forged)
    user = world.session_user(attacker, target)
    return AttackOutcome(
        pid, target, user == victim_id,
        reason=f"RP session belongs to {user}" if user else f"RP answered {page.response.status}",
        evidence={"forged": forged.fields(), "session_user": user, "status": page.response.status,
                  "seqs": _seqs(trace)},
        traces=[trace],
    )


def impersonate_via_cross_rp_token(world: World, malicious_rp: str, target: str,
                                   victim=VICTIM) -> AttackOutcome:
    pid = "cross-rp-token-impersonation"
    if world.rps[target].config.flow is not FlowType.HYBRID:
        return _not_applicable(pid, world, target, "needs a Hybrid-flow RP")
    world.login(world.browser("victim"), malicious_rp, victim)
    stolen = world.rps[malicious_rp].harvested.get(victim.numeric_id)
    if not stolen:
        return _not_applicable(pid, world, target, f"victim never signed in to {malicious_rp}")

    attacker = world.browser("attacker")
    trace = _trace(world, attacker, target, pid)
    shape = world.login(attacker, target, ATTACKER, intercept=True).submission
    extra = {}
    if shape.access_token is not None:
        # the token's owner is public to whoever holds it
        profile = world.op.userinfo(stolen)
        if shape.google_id is not None:
            extra["google_id"] = profile["numeric_id"]
        if shape.email is not None:
            extra["email"] = profile["email"]
    forged = replace(shape, **{"code": None, "id_token": None, "google_id": None, "email": None,
                               "access_token": stolen, **extra})
    page = relay_submission(attacker, forged)
    user = world.session_user(attacker, target)
    return AttackOutcome(
        pid, target, user == victim.numeric_id,
        reason=f"RP session belongs to {user}" if user else f"RP answered {page.response.status}",
        evidence={"token_from": malicious_rp, "forged": forged.fields(), "session_user": user,
                  "status": page.response.status, "seqs": _seqs(trace)},
        traces=[trace],
    )


# --------------------------------------------------------------------------
# passive sniffing


@dataclass(frozen=True)
class Sniffed:
    what: str       # "access_token", "id_token" or an identity field
    value: str
    seq: int
    host: str
    location: str   # request-field | cookie | response-body | set-cookie


@dataclass(frozen=True)
class SniffReport:
    tokens: tuple = ()
    identities: tuple = ()

    def __bool__(self) -> bool:
        return bool(self.tokens or self.identities)


def sniff_token_or_info(trace: Trace) -> SniffReport:
    """Everything a passive network attacker reads off the Http messages of ``trace``."""
    tokens, idents = [], []

    def take(fields: dict, msg, location: str):
        for key, value in fields.items():
            if not isinstance(value, str) or not value:
                continue
            if key == "access_token":
                tokens.append(Sniffed(key, value, msg.seq, msg.to, location))
            elif key == "id_token":
                tokens.append(Sniffed(key, value, msg.seq, msg.to, location))
                try:
                    claims = pc.decode_id_token_claims(value)
                except MalformedToken:
                    continue
                idents.append(Sniffed("numeric_id", claims.sub, msg.seq, msg.to, location))
                idents.append(Sniffed("email", claims.email, msg.seq, msg.to, location))
            elif key in IDENTITY_FIELDS:
                idents.append(Sniffed(key, value, msg.seq, msg.to, location))

    for msg in trace:
        if not msg.is_http:
            continue
        take(msg.request_fields, msg, "request-field")
        take({k: v for k, v in msg.cookies.items() if k != SESSION_COOKIE}, msg, "cookie")
        take(msg.response_body, msg, "response-body")
        take({c["name"]: c["value"] for c in msg.set_cookies if c["name"] == TOKEN_COOKIE}, msg, "set-cookie")
    return SniffReport(tuple(tokens), tuple(idents))


def _live_profile(world: World, token: Sniffed) -> Optional[dict]:
    if token.what != "access_token":
        return None
    try:
        return world.op.userinfo(token.value)
    except InvalidToken:
        return None


def _victim_login_trace(world: World, target: str, label: str) -> Trace:
    victim = world.browser("victim")
    trace = _trace(world, victim, target, label)
    world.login(victim, target, VICTIM)
    return trace


def token_sniff(world: World, target: str, trace: Optional[Trace] = None) -> AttackOutcome:
    pid = "token-sniff"
    trace = trace if trace is not None else _victim_login_trace(world, target, pid)
    report = sniff_token_or_info(trace)
    live = [t for t in report.tokens if _live_profile(world, t) is not None]
    return AttackOutcome(
        pid, target, bool(live),
        reason=f"{len(live)} live access_token(s) seen on Http" if live else "no live token on Http",
        vectors=tuple(sorted({t.location for t in live})),
        evidence={"tokens": [t.__dict__ for t in live], "seqs": sorted({t.seq for t in live})},
        traces=[trace],
    )


def privacy_sniff(world: World, target: str, trace: Optional[Trace] = None) -> AttackOutcome:
    pid = "privacy-sniff"
    trace = trace if trace is not None else _victim_login_trace(world, target, pid)
    report = sniff_token_or_info(trace)
    leaked = {s.what: s.value for s in report.identities}
    seqs = {s.seq for s in report.identities}
    for tok in report.tokens:
        profile = _live_profile(world, tok)
        if profile:
            leaked.update(profile)
            seqs.add(tok.seq)
    return AttackOutcome(
        pid, target, bool(leaked),
        reason=f"learned {sorted(leaked)}" if leaked else "nothing about the user on Http",
        evidence={"leaked": leaked, "seqs": sorted(seqs)},
        traces=[trace],
    )


# --------------------------------------------------------------------------
# login CSRF


def _swap_page(world: World, target: str) -> AttackPage:
    """Attacker signs in with their own account and keeps the step-5 material."""
    cfg = world.rps[target].config
    run = world.login(world.browser("attacker"), target, ATTACKER, intercept=True)
    if cfg.flow is FlowType.AUTHORIZATION_CODE:
        return AttackPage(AttackPageKind.IMG_SRC, run.callback_url)
    sub = run.submission
    kind = AttackPageKind.AUTO_POST_FORM if sub.http_method == "POST" else AttackPageKind.IMG_SRC
    return AttackPage(kind, sub.url, sub.fields())


def _deliver_swap(world: World, target: str, victim, page: AttackPage) -> Optional[str]:
    victim.navigate(f"{world.rps[target].config.origin}/login")
    mark = len(victim.trace)
    load_attack_page(victim, page)
    if any(m.to == world.rps[target].host and m.response_body.get("reason") == "InvalidCode"
           for m in victim.trace.messages[mark:]):
        raise StaleCode("the embedded code was already redeemed")
    return world.session_user(victim, target)


def session_swap(world: World, target: str, attacker=ATTACKER, victim_browser=None) -> AttackOutcome:
    pid = "session-swap"
    cfg = world.rps[target].config
    if cfg.flow is FlowType.CLIENT_SIDE:
        return _not_applicable(pid, world, target, "no server-side session to swap")
    page = _swap_page(world, target)
    victim = victim_browser or world.browser("victim")
    trace = _trace(world, victim, target, pid)
    user = _deliver_swap(world, target, victim, page)
    success = user == attacker.numeric_id

    # replay the very same page against a second victim
    reusable, remint = False, False
    if success:
        other = world.browser("victim-2")
        other.start_trace(**trace.meta, replay=True)
        try:
            reusable = _deliver_swap(world, target, other, page) == attacker.numeric_id
        except StaleCode:
            remint = True
            other2 = world.browser("victim-3")
            other2.start_trace(**trace.meta, replay=True)
            _deliver_swap(world, target, other2, _swap_page(world, target))
    vector = ("reusable-credential" if reusable else "single-use-code") if success else None
    return AttackOutcome(
        pid, target, success,
        reason=f"victim's RP session belongs to {user}" if user else "victim not logged in",
        vectors=(vector,) if vector else (),
        evidence={"page": {"kind": page.kind.value, "target": page.target, "fields": page.fields},
                  "session_user": user, "page_reusable": reusable, "reminted": remint, "seqs": _seqs(trace)},
        traces=[trace],
    )


def forced_login_csrf(world: World, target: str, victim_browser=None) -> AttackOutcome:
    pid = "forced-login-csrf"
    cfg = world.rps[target].config
    if cfg.flow is not FlowType.AUTHORIZATION_CODE:
        return _not_applicable(pid, world, target, "needs an Authorization Code Flow RP")
    victim = victim_browser or world.browser("victim")
    # victim has an OP session and an earlier grant but is signed out of the RP
    world.login(victim, target, VICTIM)
    victim.clear_cookies(world.rps[target].host)
    pre = world.op_user(victim) == VICTIM.numeric_id and world.has_grant(VICTIM, target)

    # the attacker's own login page yields an authorization URL with whatever state the RP uses
    attacker = world.browser("attacker")
    auth_url = attacker.navigate(f"{cfg.origin}/login").response.body["authorization_url"]
    page = AttackPage(AttackPageKind.IMG_SRC, auth_url)
    trace = _trace(world, victim, target, pid)
    load_attack_page(victim, page)
    user = world.session_user(victim, target)
    return AttackOutcome(
        pid, target, pre and user == VICTIM.numeric_id, preconditions_met=pre,
        reason=f"victim silently signed in as {user}" if user else "victim still signed out",
        evidence={"page": {"kind": page.kind.value, "target": auth_url}, "session_user": user,
                  "seqs": _seqs(trace)},
        traces=[trace],
    )


# --------------------------------------------------------------------------
# universal XSS against the code flow


def xss_steal_token(world: World, target: str, victim_browser=None) -> AttackOutcome:
    pid = "xss-token-theft"
    cfg = world.rps[target].config
    if cfg.flow is not FlowType.AUTHORIZATION_CODE:
        return _not_applicable(pid, world, target, "needs an Authorization Code Flow RP")
    victim = victim_browser or world.browser("victim")
    world.login(victim, target, VICTIM)
    # everything in the request is public: client_id and the registered redirect_uri
    req = pc.build_authorization_request(cfg.registration, cfg.flow, None)
    script = ExploitScript(with_query(AUTH_URL, pc.mutate_response_type(req).to_params()))
    trace = _trace(world, victim, target, pid)
    try:
        data = xss_execute(victim, cfg.origin, script)
    except (XssBlocked, NoAutoGrant) as exc:
        return AttackOutcome(pid, target, False, preconditions_met=not isinstance(exc, NoAutoGrant),
                             reason=f"{type(exc).__name__}: {exc}", evidence={"seqs": _seqs(trace)},
                             traces=[trace])
    owner = None
    if data.access_token:
        try:
            owner = world.op.userinfo(data.access_token)["numeric_id"]
        except InvalidToken:
            owner = None
    return AttackOutcome(
        pid, target, owner == VICTIM.numeric_id,
        reason=f"exfiltrated a live token for {owner}" if owner else "no usable token in the fragment",
        evidence={"exploit_url": script.open_url, "exfiltrated_from": data.source_url,
                  "token_owner": owner, "seqs": _seqs(trace)},
        traces=[trace],
    )


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Playbook:
    id: str
    flows: frozenset
    run: object

    def applies_to(self, flow: FlowType) -> bool:
        return flow in self.flows


_H, _C, _S = FlowType.HYBRID, FlowType.AUTHORIZATION_CODE, FlowType.CLIENT_SIDE

PLAYBOOKS = {p.id: p for p in (
    Playbook("google-id-impersonation", frozenset({_H}), lambda w, t: impersonate_via_google_id(w, t)),
    Playbook("cross-rp-token-impersonation", frozenset({_H}),
             lambda w, t: impersonate_via_cross_rp_token(w, MALICIOUS_RP, t)),
    Playbook("token-sniff", frozenset({_H, _C, _S}), lambda w, t: token_sniff(w, t)),
    Playbook("privacy-sniff", frozenset({_H, _C, _S}), lambda w, t: privacy_sniff(w, t)),
    Playbook("session-swap", frozenset({_H, _C}), lambda w, t: session_swap(w, t)),
    Playbook("xss-token-theft", frozenset({_C}), lambda w, t: xss_steal_token(w, t)),
    Playbook("forced-login-csrf", frozenset({_C}), lambda w, t: forced_login_csrf(w, t)),
)}


# --------------------------------------------------------------------------
# which flag makes which playbook succeed


@dataclass(frozen=True)
class FlagTrigger:
    """``playbook`` succeeds against ``context | {flag}`` and fails against
    ``context`` alone (reversed when ``defends``).

    Flags that only change how an attack is carried out (CLIENT_SUBMITS_VIA_POST
    picks the attack page kind, REQUIRES_EMAIL_WITH_TOKEN adds a field the
    attacker can fetch) have no row.
    """

    flag: str
    flow: FlowType
    playbook: str
    context: frozenset = frozenset()
    defends: bool = False

    def configs(self):
        base = RpConfig.make("target", self.flow, self.context)
        flagged = RpConfig.make("target", self.flow, self.context | {self.flag})
        return flagged, base


def _rows():
    plain = frozenset({"PLAINTEXT_SIGNIN_ENDPOINT"})
    rows = [
        ("AUTH_BY_GOOGLE_ID", _H, "google-id-impersonation", frozenset()),
        ("GOOGLE_ID_WITH_ACCESS_TOKEN", _H, "google-id-impersonation", frozenset()),
        ("GOOGLE_ID_WITH_ACCESS_TOKEN", _H, "cross-rp-token-impersonation", frozenset()),
        ("AUTH_BY_ACCESS_TOKEN", _H, "cross-rp-token-impersonation", frozenset()),
        ("GOOGLE_ID_WITH_CODE", _H, "privacy-sniff", plain),
        ("SUBMITS_ACCESS_TOKEN", _H, "token-sniff", plain),
        ("SUBMITS_ACCESS_TOKEN", _H, "privacy-sniff", plain),
        ("SUBMITS_ID_TOKEN", _H, "privacy-sniff", plain),
        ("PLAINTEXT_SIGNIN_ENDPOINT", _H, "token-sniff", frozenset({"SUBMITS_ACCESS_TOKEN"})),
        ("RETURNS_ACCESS_TOKEN_TO_BROWSER", _C, "token-sniff", plain),
        ("RETURNS_USERINFO_PLAINTEXT", _C, "privacy-sniff", plain),
        ("RETURNS_USERINFO_PLAINTEXT", _H, "privacy-sniff", plain),
        # the client-side flow posts the profile itself
        ("PLAINTEXT_SIGNIN_ENDPOINT", _S, "privacy-sniff", frozenset()),
    ]
    for flow in (_H, _C):
        rows += [("TOKEN_IN_PLAINTEXT_COOKIE", flow, "token-sniff", frozenset()),
                 ("TOKEN_IN_PLAINTEXT_COOKIE", flow, "privacy-sniff", frozenset()),
                 ("DOWNGRADE_TO_HTTP_AFTER_SIGNIN", flow, "privacy-sniff", frozenset())]
        for weak in ("NO_STATE", "FIXED_STATE", "NULL_STATE_FORWARDED"):
            rows.append((weak, flow, "session-swap", frozenset()))
            if flow is _C:
                rows.append((weak, flow, "forced-login-csrf", frozenset()))
    out = [FlagTrigger(f, flow, pid, ctx) for f, flow, pid, ctx in rows]
    out.append(FlagTrigger("VERIFIES_ACCESS_TOKEN", _H, "cross-rp-token-impersonation",
                           frozenset({"AUTH_BY_ACCESS_TOKEN"}), defends=True))
    return tuple(out)


FLAG_ATTACK_TABLE = _rows()


def run_trigger(row: FlagTrigger, env) -> tuple:
    """``(success with the flag, success without it)``."""
    results = []
    for cfg in row.configs():
        world = build_world(cfg, env, row.playbook)
        results.append(PLAYBOOKS[row.playbook].run(world, cfg.name).success)
    return tuple(results)

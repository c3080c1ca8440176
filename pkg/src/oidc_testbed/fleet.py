"""The 103-RP replica fleet and the hardened control fleet.

Flag assignments are chosen so the fleet scan reproduces the expected
counts; ``scripts/make_replica_manifest.py`` writes them to ``data/``.
"""
from __future__ import annotations

from .manifest import FleetManifest
from .protocol import FlowType
from .rp import RpConfig
from .scenario import Environment

REPLICA_SEED = 2014

H, C = "Hybrid", "AuthorizationCode"
POST = "CLIENT_SUBMITS_VIA_POST"
NO, FIX, NUL = "NO_STATE", "FIXED_STATE", "NULL_STATE_FORWARDED"
PLAIN = "PLAINTEXT_SIGNIN_ENDPOINT"
AT_AUTH = ("AUTH_BY_ACCESS_TOKEN", "SUBMITS_ACCESS_TOKEN")


def _hybrid() -> list:
    rows = [
        # logs in the submitted google_id
        ("AUTH_BY_GOOGLE_ID", NO, POST),
        ("AUTH_BY_GOOGLE_ID", FIX),
        ("GOOGLE_ID_WITH_ACCESS_TOKEN", "SUBMITS_ACCESS_TOKEN", NO, POST),
        # google_id rides along with the code; the code decides
        ("GOOGLE_ID_WITH_CODE", "SUBMITS_ACCESS_TOKEN", NO, POST),
        ("GOOGLE_ID_WITH_CODE", NUL),
        ("GOOGLE_ID_WITH_CODE", PLAIN),
        # access_token is the authenticator
        (*AT_AUTH, PLAIN, "SUBMITS_ID_TOKEN"),
        (*AT_AUTH, PLAIN, NO),
        (*AT_AUTH, PLAIN, NO, POST),
        (*AT_AUTH, PLAIN, FIX),
        (*AT_AUTH, "REQUIRES_EMAIL_WITH_TOKEN", NO, POST),
        (*AT_AUTH, "REQUIRES_EMAIL_WITH_TOKEN", NO, POST),
        (*AT_AUTH, NO, POST),
        (*AT_AUTH, NO, POST),
        (*AT_AUTH, NO, POST),
        (*AT_AUTH, FIX),
        (*AT_AUTH, NUL),
        (*AT_AUTH, NO, POST),
        # access_token checked at tokeninfo first
        (*AT_AUTH, "VERIFIES_ACCESS_TOKEN", NO, POST),
        (*AT_AUTH, "VERIFIES_ACCESS_TOKEN", NO),
        # access_token submitted but unused
        ("SUBMITS_ACCESS_TOKEN", NO, POST),
        ("SUBMITS_ACCESS_TOKEN", NO, POST),
        ("SUBMITS_ACCESS_TOKEN", FIX),
        # code only
        (NO, POST),
        (NO,),
        (NUL,),
        (PLAIN, "RETURNS_USERINFO_PLAINTEXT"),
        ("DOWNGRADE_TO_HTTP_AFTER_SIGNIN", "TOKEN_IN_PLAINTEXT_COOKIE"),
        (POST,),
        (),
        (),
        (),
        (),
    ]
    return [(f"hy{i:02d}", H, flags) for i, flags in enumerate(rows, 1)]


def _code() -> list:
    rows = [(PLAIN, "RETURNS_ACCESS_TOKEN_TO_BROWSER")] * 4
    rows += [(PLAIN, "RETURNS_USERINFO_PLAINTEXT")] * 7
    rows += [(NO,)] * 20 + [(FIX,)] * 3 + [(NUL,)]
    rows += [()] * 34
    return [(f"ac{i:02d}", C, flags) for i, flags in enumerate(rows, 1)]


ASSUMPTIONS = [
    "The single client-side-flow RP has no reported weaknesses and is configured hardened.",
    "Every code-flow RP is exposed to token theft once the browser has a universal XSS bug.",
    "Browser flag universal_xss=true models the vulnerable (unpatched) browser.",
]


def replica_fleet(seed: int = REPLICA_SEED) -> FleetManifest:
    rows = _code() + _hybrid() + [("cs01", "ClientSide", ())]
    configs = [RpConfig.make(name, FlowType(flow), flags) for name, flow, flags in rows]
    return FleetManifest(seed, configs, Environment(seed=seed), "103 RPs: 69 code flow, 33 hybrid, 1 client-side",
                         list(ASSUMPTIONS))


def hardened_fleet(seed: int = REPLICA_SEED) -> FleetManifest:
    configs = [RpConfig.make(f"hardened-{f.value.lower()}", f) for f in
               (FlowType.AUTHORIZATION_CODE, FlowType.HYBRID, FlowType.CLIENT_SIDE)]
    # a patched browser: the code flow is only safe from token theft without universal XSS
    env = Environment(seed=seed, universal_xss=False)
    return FleetManifest(seed, configs, env, "Compliant RPs under a patched browser")

"""Relying Party whose behaviour is fully determined by an :class:`RpConfig`.

The empty flag set is the compliant ("hardened") RP: its client submits the
code together with a state value bound to the pre-login session, the server
redeems the code, verifies the id_token and only then logs the user in.  Each
flag switches on one deviation observed in deployed RPs.
"""
from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field
from typing import Optional

from . import protocol as pc
from .errors import (
    InvalidToken,
    MissingField,
    SignInRejected,
    StateMismatch,
    TestbedError,
)
from .http import HttpRequest, HttpResponse, SetCookie, with_query
from .op import AUTH_URL
from .protocol import (
    AuthorizationResponse,
    ChannelSecurity,
    ClientRegistration,
    FlowType,
    StateValue,
)

SESSION_COOKIE = "rpsid"
TOKEN_COOKIE = "access_token"
FIXED_STATE_VALUE = "STATE"


class Flag(str, enum.Enum):
    AUTH_BY_GOOGLE_ID = "AUTH_BY_GOOGLE_ID"
    GOOGLE_ID_WITH_CODE = "GOOGLE_ID_WITH_CODE"
    GOOGLE_ID_WITH_ACCESS_TOKEN = "GOOGLE_ID_WITH_ACCESS_TOKEN"
    SUBMITS_ACCESS_TOKEN = "SUBMITS_ACCESS_TOKEN"
    AUTH_BY_ACCESS_TOKEN = "AUTH_BY_ACCESS_TOKEN"
    VERIFIES_ACCESS_TOKEN = "VERIFIES_ACCESS_TOKEN"
    SUBMITS_ID_TOKEN = "SUBMITS_ID_TOKEN"
    PLAINTEXT_SIGNIN_ENDPOINT = "PLAINTEXT_SIGNIN_ENDPOINT"
    TOKEN_IN_PLAINTEXT_COOKIE = "TOKEN_IN_PLAINTEXT_COOKIE"
    RETURNS_ACCESS_TOKEN_TO_BROWSER = "RETURNS_ACCESS_TOKEN_TO_BROWSER"
    RETURNS_USERINFO_PLAINTEXT = "RETURNS_USERINFO_PLAINTEXT"
    DOWNGRADE_TO_HTTP_AFTER_SIGNIN = "DOWNGRADE_TO_HTTP_AFTER_SIGNIN"
    NO_STATE = "NO_STATE"
    FIXED_STATE = "FIXED_STATE"
    NULL_STATE_FORWARDED = "NULL_STATE_FORWARDED"
    CLIENT_SUBMITS_VIA_POST = "CLIENT_SUBMITS_VIA_POST"
    REQUIRES_EMAIL_WITH_TOKEN = "REQUIRES_EMAIL_WITH_TOKEN"


F = Flag

GOOGLE_ID_FAMILY = frozenset({F.AUTH_BY_GOOGLE_ID, F.GOOGLE_ID_WITH_CODE, F.GOOGLE_ID_WITH_ACCESS_TOKEN})
# flags under which the server logs in whatever google_id it is handed
GOOGLE_ID_AUTH = frozenset({F.AUTH_BY_GOOGLE_ID, F.GOOGLE_ID_WITH_ACCESS_TOKEN})
WEAK_STATE = frozenset({F.NO_STATE, F.FIXED_STATE, F.NULL_STATE_FORWARDED})
CLIENT_SCRIPT_FLAGS = GOOGLE_ID_FAMILY | {
    F.SUBMITS_ACCESS_TOKEN, F.AUTH_BY_ACCESS_TOKEN, F.VERIFIES_ACCESS_TOKEN, F.SUBMITS_ID_TOKEN,
    F.CLIENT_SUBMITS_VIA_POST, F.REQUIRES_EMAIL_WITH_TOKEN,
}
CLIENT_SIDE_FLAGS = frozenset({F.PLAINTEXT_SIGNIN_ENDPOINT, F.DOWNGRADE_TO_HTTP_AFTER_SIGNIN})

# flag -> flags it cannot exist without
IMPLIES = {
    F.AUTH_BY_ACCESS_TOKEN: {F.SUBMITS_ACCESS_TOKEN},
    F.VERIFIES_ACCESS_TOKEN: {F.AUTH_BY_ACCESS_TOKEN},
    F.REQUIRES_EMAIL_WITH_TOKEN: {F.AUTH_BY_ACCESS_TOKEN},
    F.GOOGLE_ID_WITH_ACCESS_TOKEN: {F.SUBMITS_ACCESS_TOKEN},
}


def closure(flags) -> frozenset:
    """``flags`` plus every prerequisite they imply."""
    out, todo = set(), [Flag(f) for f in flags]
    while todo:
        f = todo.pop()
        if f not in out:
            out.add(f)
            todo.extend(IMPLIES.get(f, ()))
    return frozenset(out)


def validate_flags(flow: FlowType, flags: frozenset) -> None:
    problems = []
    for f, needs in IMPLIES.items():
        if f in flags and not needs <= flags:
            problems.append(f"{f.value} requires {sorted(n.value for n in needs)}")
    if len(flags & WEAK_STATE) > 1:
        problems.append("at most one of NO_STATE, FIXED_STATE, NULL_STATE_FORWARDED")
    if len(flags & GOOGLE_ID_FAMILY) > 1:
        problems.append("at most one google-id submission style")
    if flow is FlowType.AUTHORIZATION_CODE and flags & CLIENT_SCRIPT_FLAGS:
        problems.append(f"client-script flags need a Hybrid flow: {sorted(f.value for f in flags & CLIENT_SCRIPT_FLAGS)}")
    if flow is FlowType.CLIENT_SIDE and flags - CLIENT_SIDE_FLAGS:
        problems.append(f"ClientSide RPs only support {sorted(f.value for f in CLIENT_SIDE_FLAGS)}")
    if problems:
        raise ValueError("; ".join(problems))


def rp_host(name: str) -> str:
    return f"{name}.rp.test"


@dataclass(frozen=True)
class RpConfig:
    name: str
    flow: FlowType
    registration: ClientRegistration
    flags: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "flags", frozenset(Flag(f) for f in self.flags))
        validate_flags(self.flow, self.flags)
        if self.registration.registered_flow is not self.flow:
            raise ValueError("registration flow differs from config flow")

    @classmethod
    def make(cls, name: str, flow: FlowType, flags=()) -> "RpConfig":
        flow = FlowType(flow)
        flags = closure(flags)
        secret = "secret-" + hashlib.sha256(name.encode()).hexdigest()[:24]
        scheme = "http" if F.PLAINTEXT_SIGNIN_ENDPOINT in flags else "https"
        if flow is FlowType.AUTHORIZATION_CODE:
            reg = ClientRegistration(name, secret, flow, redirect_uri=f"{scheme}://{rp_host(name)}/callback")
        else:
            reg = ClientRegistration(name, secret, flow, origin=f"https://{rp_host(name)}")
        return cls(name, flow, reg, flags)

    def has(self, flag: Flag) -> bool:
        return flag in self.flags

    @property
    def host(self) -> str:
        return rp_host(self.name)

    @property
    def origin(self) -> str:
        return f"https://{self.host}"

    @property
    def hardened(self) -> bool:
        return not self.flags

    @property
    def signin_url(self) -> str:
        scheme = "http" if self.has(F.PLAINTEXT_SIGNIN_ENDPOINT) else "https"
        path = "/callback" if self.flow is FlowType.AUTHORIZATION_CODE else "/signin/google"
        return f"{scheme}://{self.host}{path}"

    @property
    def landing_url(self) -> str:
        downgrade = self.has(F.DOWNGRADE_TO_HTTP_AFTER_SIGNIN) or self.has(F.TOKEN_IN_PLAINTEXT_COOKIE)
        return f"{'http' if downgrade else 'https'}://{self.host}/home"

    @property
    def submit_method(self) -> str:
        return "POST" if self.has(F.CLIENT_SUBMITS_VIA_POST) else "GET"

    @property
    def secure_session_cookie(self) -> bool:
        return not (self.has(F.PLAINTEXT_SIGNIN_ENDPOINT) or self.has(F.DOWNGRADE_TO_HTTP_AFTER_SIGNIN))

    @property
    def validates_state(self) -> bool:
        return not self.flags & WEAK_STATE

    def to_dict(self) -> dict:
        return {"name": self.name, "flow": self.flow.value, "flags": sorted(f.value for f in self.flags)}


@dataclass(frozen=True)
class SignInSubmission:
    url: str
    http_method: str
    state: Optional[StateValue] = None
    code: Optional[str] = None
    access_token: Optional[str] = None
    id_token: Optional[str] = None
    google_id: Optional[str] = None
    email: Optional[str] = None
    display_name: Optional[str] = None

    @property
    def channel(self) -> ChannelSecurity:
        return ChannelSecurity.of_url(self.url)

    def fields(self) -> dict:
        out = {k: getattr(self, k) for k in ("code", "access_token", "id_token", "google_id", "email",
                                              "display_name") if getattr(self, k) is not None}
        if self.state is not None:
            out["state"] = self.state.wire()
        return out

    @classmethod
    def from_fields(cls, url: str, method: str, fields: dict) -> "SignInSubmission":
        return cls(url, method, StateValue.from_wire(fields.get("state")),
                   **{k: fields.get(k) for k in ("code", "access_token", "id_token", "google_id", "email",
                                                 "display_name")})


@dataclass
class RpSession:
    cookie: str
    expected_state: Optional[StateValue] = None
    logged_in_user: Optional[str] = None
    profile: dict = field(default_factory=dict)
    access_token: Optional[str] = None


@dataclass(frozen=True)
class SignInResult:
    user: Optional[str]
    profile: dict
    access_token: Optional[str]
    body: dict
    session_cookie: Optional[str] = None


@dataclass(frozen=True)
class LoginPage:
    """What the RP login page gives the browser: an authorization request and,
    for postMessage flows, the in-page RP Client configuration."""

    config: RpConfig
    authorization_url: str
    page_state: Optional[StateValue]


# --------------------------------------------------------------------------
# RP Client (runs in the browser)


def rp_client_script(config: RpConfig, delivered: AuthorizationResponse, *,
                     page_state: Optional[StateValue] = None, profile: Optional[dict] = None) -> SignInSubmission:
    """Fields the in-page RP Client sends to the sign-in endpoint.

    ``profile`` is the userinfo result a client-side-flow client fetched
    itself; the hybrid client never calls the OP.
    """
    if config.flow is FlowType.AUTHORIZATION_CODE:
        raise ValueError("code-flow RPs have no client script")
    claims = pc.decode_id_token_claims(delivered.id_token) if delivered.id_token else None
    if config.flow is FlowType.CLIENT_SIDE:
        # authentication stays in the client; the server only receives the final profile
        profile = profile or {"email": claims.email}
        return SignInSubmission(config.signin_url, config.submit_method, page_state,
                                email=profile.get("email"), display_name=profile.get("display_name"))

    f = config.flags
    alt_auth = bool(f & {F.AUTH_BY_GOOGLE_ID, F.GOOGLE_ID_WITH_ACCESS_TOKEN, F.AUTH_BY_ACCESS_TOKEN})
    if F.NO_STATE in f:
        state = None
    elif F.FIXED_STATE in f:
        state = StateValue(FIXED_STATE_VALUE)
    elif F.NULL_STATE_FORWARDED in f:
        state = delivered.state
    else:
        state = page_state
    return SignInSubmission(
        url=config.signin_url,
        http_method=config.submit_method,
        state=state,
        code=delivered.code if (not alt_auth or F.GOOGLE_ID_WITH_CODE in f) else None,
        access_token=delivered.access_token if F.SUBMITS_ACCESS_TOKEN in f else None,
        id_token=delivered.id_token if F.SUBMITS_ID_TOKEN in f else None,
        google_id=claims.sub if (f & GOOGLE_ID_FAMILY and claims) else None,
        email=claims.email if (F.REQUIRES_EMAIL_WITH_TOKEN in f and claims) else None,
    )


# --------------------------------------------------------------------------
# RP server logic


def check_state(config: RpConfig, submitted: Optional[StateValue], expected: Optional[StateValue]) -> None:
    if F.NO_STATE in config.flags or F.NULL_STATE_FORWARDED in config.flags:
        return
    if F.FIXED_STATE in config.flags:
        if submitted is None or submitted.value != FIXED_STATE_VALUE:
            raise StateMismatch("constant state missing")
        return
    if submitted is None or expected is None or submitted.is_null or submitted.value != expected.value:
        raise StateMismatch("state does not match the browser session")


def _exchange_code(config: RpConfig, op_handle, code: Optional[str]):
    if not code:
        raise MissingField("code")
    redirect_uri = (config.registration.redirect_uri if config.flow is FlowType.AUTHORIZATION_CODE
                    else pc.POSTMESSAGE)
    try:
        tokens = op_handle.token(code, config.registration.client_id, config.registration.client_secret,
                                 redirect_uri)
        claims = pc.verify_id_token(tokens.id_token.encoded, op_handle.verification_key,
                                    config.registration.client_id, op_handle.clock())
        profile = op_handle.userinfo(tokens.access_token.value)
    except TestbedError as exc:
        raise SignInRejected(type(exc).__name__) from exc
    return claims.sub, profile, tokens.access_token.value


def _success_body(config: RpConfig, profile: dict, access_token: Optional[str]) -> dict:
    body = {"status": "signed-in", "next": config.landing_url}
    if config.has(F.RETURNS_USERINFO_PLAINTEXT):
        body.update(profile)
    if config.has(F.RETURNS_ACCESS_TOKEN_TO_BROWSER) and access_token:
        body["access_token"] = access_token
    return body


def handle_signin_endpoint(config: RpConfig, op_handle, submission: SignInSubmission,
                           expected_state: Optional[StateValue] = None) -> SignInResult:
    if config.flow is FlowType.CLIENT_SIDE:
        check_state(config, submission.state, expected_state)
        # no server-side authentication in the client-side flow
        return SignInResult(None, {}, None, {"status": "profile-recorded"})
    check_state(config, submission.state, expected_state)
    f = config.flags
    token = None
    if f & GOOGLE_ID_AUTH:
        if not submission.google_id:
            raise MissingField("google_id")
        user, profile = submission.google_id, {"numeric_id": submission.google_id}
        token = submission.access_token
    elif F.AUTH_BY_ACCESS_TOKEN in f:
        token = submission.access_token
        if not token:
            raise MissingField("access_token")
        try:
            if F.VERIFIES_ACCESS_TOKEN in f:
                info = op_handle.tokeninfo(token)
                if info["client_id"] != config.registration.client_id:
                    raise SignInRejected(f"access_token was issued to {info['client_id']}")
            profile = op_handle.userinfo(token)
        except InvalidToken as exc:
            raise SignInRejected("InvalidToken") from exc
        if F.REQUIRES_EMAIL_WITH_TOKEN in f:
            if not submission.email:
                raise MissingField("email")
            if submission.email != profile["email"]:
                raise SignInRejected("email does not match userinfo")
        user = profile["numeric_id"]
    else:
        user, profile, token = _exchange_code(config, op_handle, submission.code)
    return SignInResult(user, profile, token, _success_body(config, profile, token))


def handle_code_flow_callback(config: RpConfig, op_handle, redirect_params: dict,
                              expected_state: Optional[StateValue] = None) -> SignInResult:
    if config.flow is not FlowType.AUTHORIZATION_CODE:
        raise ValueError("callback only exists for code-flow RPs")
    check_state(config, StateValue.from_wire(redirect_params.get("state")), expected_state)
    user, profile, token = _exchange_code(config, op_handle, redirect_params.get("code"))
    return SignInResult(user, profile, token, _success_body(config, profile, token))


class RpServer:
    """One RP actor: owns its session store and serves /login, the sign-in
    endpoint, /callback and /home."""

    def __init__(self, config: RpConfig, op_handle, rng: random.Random):
        self.config = config
        self.op = op_handle
        self.rng = rng
        self.sessions: dict = {}
        # tokens this RP obtained, per user -- what a malicious RP would reuse
        self.harvested: dict = {}

    @property
    def host(self) -> str:
        return self.config.host

    def session_for(self, cookies: dict) -> Optional[RpSession]:
        return self.sessions.get(cookies.get(SESSION_COOKIE))

    def _new_session(self, **kw) -> RpSession:
        s = RpSession(pc.random_token(self.rng), **kw)
        self.sessions[s.cookie] = s
        return s

    def _cookie(self, session: RpSession) -> SetCookie:
        return SetCookie(SESSION_COOKIE, session.cookie, secure=self.config.secure_session_cookie)

    def handle(self, request: HttpRequest) -> HttpResponse:
        cfg = self.config
        path = request.path
        try:
            if path == "/login" and request.method == "GET":
                return self._login_page()
            if path == "/signin/google" and cfg.flow is not FlowType.AUTHORIZATION_CODE:
                if request.method != cfg.submit_method:
                    return HttpResponse(405, body={"error": "method_not_allowed"})
                sub = SignInSubmission.from_fields(request.url, request.method, request.params())
                session = self.session_for(request.cookies)
                result = handle_signin_endpoint(cfg, self.op, sub, session.expected_state if session else None)
                return self._signed_in(result)
            if path == "/callback" and cfg.flow is FlowType.AUTHORIZATION_CODE:
                if "code" not in request.query:
                    # authorization response arrived in the fragment: the endpoint has nothing to read
                    return HttpResponse(404, body={"error": "not_found"})
                session = self.session_for(request.cookies)
                result = handle_code_flow_callback(cfg, self.op, request.query,
                                                   session.expected_state if session else None)
                return self._signed_in(result)
            if path == "/home":
                return self._home(request)
        except StateMismatch as exc:
            return HttpResponse(403, body={"error": "StateMismatch", "reason": str(exc)})
        except SignInRejected as exc:
            return HttpResponse(401, body={"error": type(exc).__name__, "reason": str(exc)})
        return HttpResponse(404, body={"error": "not_found"})

    def _login_page(self) -> HttpResponse:
        cfg = self.config
        session = self._new_session()
        session.expected_state = StateValue(pc.random_token(self.rng), bound_session=session.cookie)
        if cfg.flow is FlowType.AUTHORIZATION_CODE:
            if cfg.has(F.NO_STATE):
                req_state = None
            elif cfg.has(F.FIXED_STATE):
                req_state = StateValue(FIXED_STATE_VALUE)
            elif cfg.has(F.NULL_STATE_FORWARDED):
                req_state = pc.NULL_STATE
            else:
                req_state = session.expected_state
        else:
            # generated by the OP's JavaScript API, not bound to any RP session
            req_state = StateValue(pc.random_token(self.rng))
        req = pc.build_authorization_request(cfg.registration, cfg.flow, req_state)
        auth_url = with_query(AUTH_URL, req.to_params())
        page = LoginPage(cfg, auth_url, session.expected_state)
        return HttpResponse(200, body={"page": "login", "authorization_url": auth_url},
                            set_cookies=[self._cookie(session)], page=page)

    def _signed_in(self, result: SignInResult) -> HttpResponse:
        if result.user is None:
            return HttpResponse(200, body=result.body)
        session = self._new_session(logged_in_user=result.user, profile=result.profile,
                                    access_token=result.access_token)
        if result.access_token:
            self.harvested[result.user] = result.access_token
        cookies = [self._cookie(session)]
        if self.config.has(F.TOKEN_IN_PLAINTEXT_COOKIE) and result.access_token:
            cookies.append(SetCookie(TOKEN_COOKIE, result.access_token, secure=False))
        return HttpResponse(200, body=result.body, set_cookies=cookies)

    def _home(self, request: HttpRequest) -> HttpResponse:
        session = self.session_for(request.cookies)
        body = {"page": "home"}
        if session and session.logged_in_user and self.config.has(F.DOWNGRADE_TO_HTTP_AFTER_SIGNIN):
            body.update(session.profile)
        return HttpResponse(200, body=body)

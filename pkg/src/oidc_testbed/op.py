"""A Google-like OpenID Provider.

The OP grants authorization automatically when the browser already holds an
OP session and the user has consented to the client before.  Hybrid and
client-side requests are answered with an HTML document that postMessages the
response to the RP origin; code-flow requests are answered with a 302.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

from . import protocol as pc
from .errors import (
    BadCredentials,
    ClientAuthFailed,
    InvalidCode,
    InvalidToken,
    OriginMismatch,
    RedirectUriMismatch,
    TestbedError,
    UnknownClient,
)
from .http import HttpRequest, HttpResponse, SetCookie, redirect, with_fragment, with_query
from .protocol import (
    AuthorizationRequest,
    AuthorizationResponse,
    ClientRegistration,
    Delivery,
    FlowType,
    TokenSet,
    UserIdentity,
)

OP_HOST = "accounts.op.test"
OP_ORIGIN = f"https://{OP_HOST}"
AUTH_URL = f"{OP_ORIGIN}/o/auth"
LOGIN_URL = f"{OP_ORIGIN}/o/login"
TOKEN_URL = f"{OP_ORIGIN}/o/token"
TOKENINFO_URL = f"{OP_ORIGIN}/o/tokeninfo"
USERINFO_URL = f"{OP_ORIGIN}/o/userinfo"
SESSION_COOKIE = "SID"


@dataclass
class OpState:
    signing_key: bytes
    rng: random.Random
    clients: dict = field(default_factory=dict)
    users: dict = field(default_factory=dict)
    sessions: dict = field(default_factory=dict)
    grants: set = field(default_factory=set)
    codes: dict = field(default_factory=dict)
    access_tokens: dict = field(default_factory=dict)
    id_tokens: dict = field(default_factory=dict)
    # code value -> TokenSet delivered alongside it (hybrid step 5)
    code_tokens: dict = field(default_factory=dict)
    null_state_bug: bool = True
    accept_mutated_response_type: bool = True
    code_lifetime: int = pc.CODE_LIFETIME
    token_lifetime: int = pc.ACCESS_TOKEN_LIFETIME

    @classmethod
    def create(cls, rng: random.Random, **flags) -> "OpState":
        return cls(signing_key=rng.randbytes(32), rng=rng, **flags)

    def register(self, registration: ClientRegistration) -> None:
        if registration.client_id in self.clients:
            raise ValueError(f"duplicate client_id {registration.client_id}")
        self.clients[registration.client_id] = registration

    def add_user(self, user: UserIdentity) -> None:
        if user.numeric_id in self.users:
            raise ValueError(f"duplicate numeric_id {user.numeric_id}")
        self.users[user.numeric_id] = user


class OpResponseKind(str, enum.Enum):
    LOGIN_FORM = "LoginForm"
    CONSENT_FORM = "ConsentForm"
    DELIVERY = "AuthorizationResponseDelivery"


@dataclass(frozen=True)
class OpForm:
    """Login or consent page; submitting it posts ``fields`` plus user input to /o/login."""

    kind: OpResponseKind
    action: str
    fields: dict


@dataclass(frozen=True)
class OpResponse:
    kind: OpResponseKind
    payload: Any
    session_cookie: Optional[str] = None


@dataclass(frozen=True)
class HtmlDocument:
    """The step-5 page: its only script posts ``message`` to ``target_origin``."""

    target_origin: str
    message: AuthorizationResponse
    script: str = "postMessage"


# --------------------------------------------------------------------------


def _registration_for(state: OpState, req: AuthorizationRequest) -> ClientRegistration:
    reg = state.clients.get(req.client_id)
    if reg is None:
        raise UnknownClient(req.client_id)
    if reg.registered_flow is FlowType.AUTHORIZATION_CODE:
        if req.redirect_uri != reg.redirect_uri:
            raise RedirectUriMismatch(f"{req.redirect_uri!r} is not registered for {reg.client_id}")
    else:
        if req.redirect_uri != pc.POSTMESSAGE:
            raise RedirectUriMismatch("postMessage clients must use redirect_uri=postmessage")
        if req.origin != reg.origin:
            raise OriginMismatch(f"{req.origin!r} != registered origin {reg.origin!r}")
    return reg


def _deliver(state: OpState, reg: ClientRegistration, req: AuthorizationRequest, user: str,
             now: int) -> AuthorizationResponse:
    if reg.registered_flow is FlowType.AUTHORIZATION_CODE:
        code = pc.mint_code(state, reg.client_id, user, now)
        if req.wants_tokens and state.accept_mutated_response_type:
            tokens = pc.mint_token_set(state, reg.client_id, user, req.scope, now)
            state.code_tokens[code.value] = tokens
            return AuthorizationResponse(Delivery.FRAGMENT_ON_REDIRECT, req.state, code.value,
                                         tokens.access_token.value, tokens.id_token.encoded)
        return AuthorizationResponse(Delivery.REDIRECT_302, req.state, code.value)

    tokens = pc.mint_token_set(state, reg.client_id, user, req.scope, now)
    code_value = None
    if reg.registered_flow is FlowType.HYBRID:
        code_value = pc.mint_code(state, reg.client_id, user, now).value
        state.code_tokens[code_value] = tokens
    return AuthorizationResponse(Delivery.POST_MESSAGE_HTML, req.state, code_value,
                                 tokens.access_token.value, tokens.id_token.encoded)


def handle_authorization_request(state: OpState, req: AuthorizationRequest, browser_cookies: dict,
                                 now: int = 0) -> OpResponse:
    reg = _registration_for(state, req)
    user = state.sessions.get(browser_cookies.get(SESSION_COOKIE))
    if user is None:
        return OpResponse(OpResponseKind.LOGIN_FORM, OpForm(OpResponseKind.LOGIN_FORM, LOGIN_URL, req.to_params()))
    if (user, reg.client_id) not in state.grants:
        return OpResponse(OpResponseKind.CONSENT_FORM,
                          OpForm(OpResponseKind.CONSENT_FORM, LOGIN_URL, req.to_params()))
    # automatic authorization granting: no user interaction at all
    return OpResponse(OpResponseKind.DELIVERY, _deliver(state, reg, req, user, now))


def authenticate_and_grant(state: OpState, credentials: Optional[tuple], req: AuthorizationRequest,
                           browser_cookies: Optional[dict] = None, now: int = 0) -> OpResponse:
    """Process a submitted login form (``credentials=(login, password)``) or a consent click (``None``)."""
    reg = _registration_for(state, req)
    cookie = None
    if credentials is not None:
        login, password = credentials
        user = next((u for u in state.users.values() if login in (u.numeric_id, u.email)), None)
        if user is None or user.password != password:
            raise BadCredentials(f"login failed for {login!r}")
        cookie = pc.random_token(state.rng)
        state.sessions[cookie] = user.numeric_id
        user_id = user.numeric_id
    else:
        user_id = state.sessions.get((browser_cookies or {}).get(SESSION_COOKIE))
        if user_id is None:
            raise BadCredentials("consent submitted without an OP session")
    state.grants.add((user_id, reg.client_id))
    return OpResponse(OpResponseKind.DELIVERY, _deliver(state, reg, req, user_id, now), session_cookie=cookie)


def render_hybrid_delivery(resp: AuthorizationResponse, registration: ClientRegistration, *,
                           null_state_bug: bool = False) -> HtmlDocument:
    if resp.delivery is not Delivery.POST_MESSAGE_HTML:
        raise ValueError("only postMessage deliveries are rendered as HTML")
    if null_state_bug:
        resp = replace(resp, state=pc.NULL_STATE)
    return HtmlDocument(registration.origin, resp)


def handle_token_endpoint(state: OpState, code_value: str, client_id: str, client_secret: str,
                          redirect_uri: str, now: int = 0) -> TokenSet:
    code = state.codes.get(code_value)
    if code is None or code.redeemed or now >= code.expires_at:
        raise InvalidCode("unknown, expired or already redeemed code")
    reg = state.clients.get(client_id)
    if reg is None or reg.client_secret != client_secret:
        raise ClientAuthFailed(client_id)
    if code.client_id != client_id:
        raise InvalidCode(f"code was issued to {code.client_id}, not {client_id}")
    expected = reg.redirect_uri if reg.registered_flow is FlowType.AUTHORIZATION_CODE else pc.POSTMESSAGE
    if redirect_uri != expected:
        raise RedirectUriMismatch(f"{redirect_uri!r} != {expected!r}")
    # consumed only once every check passed
    code.redeem()
    tokens = state.code_tokens.get(code_value)
    if tokens is None:
        tokens = pc.mint_token_set(state, client_id, code.user, {"openid", "email", "profile"}, now)
    return tokens


def _live_token(state: OpState, value: str, now: int) -> pc.AccessToken:
    token = state.access_tokens.get(value)
    if token is None or now >= token.expires_at:
        raise InvalidToken("unknown or expired access_token")
    return token


def handle_tokeninfo(state: OpState, access_token_value: str, now: int = 0) -> dict:
    token = _live_token(state, access_token_value, now)
    return {"client_id": token.client_id, "user": token.user, "scope": sorted(token.scope),
            "expires_in": token.expires_at - now}


def handle_userinfo(state: OpState, access_token_value: str, now: int = 0) -> dict:
    token = _live_token(state, access_token_value, now)
    return state.users[token.user].profile()


# --------------------------------------------------------------------------


_STATUS = {BadCredentials: 401, InvalidToken: 401, ClientAuthFailed: 401}


class OpServer:
    """Routes in-memory HTTP requests to the OP handlers."""

    host = OP_HOST

    def __init__(self, state: OpState, clock: Callable[[], int]):
        self.state = state
        self.clock = clock

    @property
    def verification_key(self) -> bytes:
        return self.state.signing_key

    # back-channel calls (RP server -> OP, never relayed by a browser)
    def token(self, code, client_id, client_secret, redirect_uri) -> TokenSet:
        return handle_token_endpoint(self.state, code, client_id, client_secret, redirect_uri, self.clock())

    def tokeninfo(self, access_token: str) -> dict:
        return handle_tokeninfo(self.state, access_token, self.clock())

    def userinfo(self, access_token: str) -> dict:
        return handle_userinfo(self.state, access_token, self.clock())

    def handle(self, request: HttpRequest) -> HttpResponse:
        route = {
            "/o/auth": self._auth,
            "/o/login": self._login,
            "/o/token": self._token,
            "/o/tokeninfo": lambda r: HttpResponse(body=self.tokeninfo(r.params().get("access_token", ""))),
            "/o/userinfo": lambda r: HttpResponse(body=self.userinfo(r.params().get("access_token", ""))),
        }.get(request.path)
        if route is None:
            return HttpResponse(404, body={"error": "not_found"})
        try:
            return route(request)
        except TestbedError as exc:
            return HttpResponse(_STATUS.get(type(exc), 400), body={"error": type(exc).__name__})

    def _auth(self, request: HttpRequest) -> HttpResponse:
        req = AuthorizationRequest.from_params(request.query)
        return self._render(handle_authorization_request(self.state, req, request.cookies, self.clock()), req)

    def _login(self, request: HttpRequest) -> HttpResponse:
        fields = dict(request.body)
        login, password = fields.pop("login", None), fields.pop("password", None)
        fields.pop("consent", None)
        req = AuthorizationRequest.from_params(fields)
        creds = (login, password) if login is not None else None
        return self._render(authenticate_and_grant(self.state, creds, req, request.cookies, self.clock()), req)

    def _token(self, request: HttpRequest) -> HttpResponse:
        p = request.params()
        tokens = self.token(p.get("code", ""), p.get("client_id", ""), p.get("client_secret", ""),
                            p.get("redirect_uri", ""))
        return HttpResponse(body={"access_token": tokens.access_token.value, "id_token": tokens.id_token.encoded})

    def _render(self, resp: OpResponse, req: AuthorizationRequest) -> HttpResponse:
        cookies = [SetCookie(SESSION_COOKIE, resp.session_cookie)] if resp.session_cookie else []
        if resp.kind is not OpResponseKind.DELIVERY:
            return HttpResponse(200, body={"form": resp.kind.value}, page=resp.payload, set_cookies=cookies)
        auth: AuthorizationResponse = resp.payload
        reg = self.state.clients[req.client_id]
        if auth.delivery is Delivery.POST_MESSAGE_HTML:
            doc = render_hybrid_delivery(auth, reg, null_state_bug=self.state.null_state_bug)
            body = {"delivery": auth.delivery.value, "target_origin": doc.target_origin, **doc.message.params()}
            return HttpResponse(200, body=body, page=doc, set_cookies=cookies)
        if auth.delivery is Delivery.REDIRECT_302:
            return redirect(with_query(reg.redirect_uri, auth.params()), set_cookies=cookies)
        return redirect(with_fragment(reg.redirect_uri, auth.params()), set_cookies=cookies)

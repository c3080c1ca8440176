"""Token and message types shared by the OP, RPs, browser and attackers.

Tokens are drawn from a seeded :class:`random.Random` so that whole runs are
reproducible.  The id_token is a three-part ``header.claims.mac`` string whose
middle part is plain base64url: anyone holding the token can read the claims,
only the OP key holder can produce a valid MAC.
"""
from __future__ import annotations

import base64
import binascii
import enum
import hashlib
import hmac
import random
from dataclasses import dataclass, replace
from typing import Optional
from urllib.parse import urlsplit

from .errors import (
    AudienceMismatch,
    BadSignature,
    Expired,
    InconsistentRegistration,
    MalformedToken,
    UnknownClient,
    UnknownUser,
)

CODE_LIFETIME = 60
ACCESS_TOKEN_LIFETIME = 3600
TOKEN_BYTES = 16  # 128 bits

ISSUER = "https://accounts.op.test"
ID_TOKEN_HEADER = "alg=HS256\ntyp=JWT"
CLAIM_KEYS = ("iss", "sub", "aud", "iat", "exp", "email")

POSTMESSAGE = "postmessage"
NULL_STATE_WIRE = "null"


class FlowType(str, enum.Enum):
    AUTHORIZATION_CODE = "AuthorizationCode"
    HYBRID = "Hybrid"
    CLIENT_SIDE = "ClientSide"


class ChannelSecurity(str, enum.Enum):
    HTTPS = "Https"
    HTTP = "Http"

    @classmethod
    def of_url(cls, url: str) -> "ChannelSecurity":
        return cls.HTTP if urlsplit(url).scheme == "http" else cls.HTTPS


class Delivery(str, enum.Enum):
    POST_MESSAGE_HTML = "PostMessageHtml"
    REDIRECT_302 = "Redirect302"
    FRAGMENT_ON_REDIRECT = "FragmentOnRedirect"


# --------------------------------------------------------------------------
# value helpers


def random_token(rng: random.Random, nbytes: int = TOKEN_BYTES) -> str:
    """URL-safe base64 of ``nbytes`` random bytes, unpadded."""
    return b64url_encode(rng.randbytes(nbytes))


def b64url_encode(raw: bytes) -> str:
    return base64.urlsafe_b64encode(raw).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    # Only the canonical encoding is accepted; otherwise flipping unused
    # trailing bits would produce a different string with identical bytes.
    try:
        raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except (binascii.Error, ValueError) as exc:
        raise MalformedToken(f"bad base64url segment: {exc}") from None
    if b64url_encode(raw) != text:
        raise MalformedToken("non-canonical base64url segment")
    return raw


def origin_of(url: str) -> str:
    parts = urlsplit(url)
    return f"{parts.scheme}://{parts.netloc}"


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class UserIdentity:
    numeric_id: str
    email: str
    display_name: str
    password: str

    def __post_init__(self):
        if not self.numeric_id or not self.numeric_id.isdigit():
            raise ValueError(f"numeric_id must be a non-empty digit string: {self.numeric_id!r}")

    def profile(self) -> dict:
        return {"numeric_id": self.numeric_id, "email": self.email, "display_name": self.display_name}


@dataclass(frozen=True)
class ClientRegistration:
    client_id: str
    client_secret: str
    registered_flow: FlowType
    redirect_uri: Optional[str] = None
    origin: Optional[str] = None

    def __post_init__(self):
        code_flow = self.registered_flow is FlowType.AUTHORIZATION_CODE
        if code_flow != (self.redirect_uri is not None):
            raise InconsistentRegistration("redirect_uri is required iff the flow is AuthorizationCode")
        if (not code_flow) != (self.origin is not None):
            raise InconsistentRegistration("origin is required iff the flow is Hybrid or ClientSide")
        if self.origin is not None and urlsplit(self.origin).path not in ("", "/"):
            raise InconsistentRegistration("origin must not carry a path")


@dataclass(frozen=True)
class StateValue:
    """A state parameter.  ``value=None`` is the NULL marker."""

    value: Optional[str]
    bound_session: Optional[str] = None

    @property
    def is_null(self) -> bool:
        return self.value is None

    @property
    def session_bound(self) -> bool:
        return self.bound_session is not None and self.value is not None

    def wire(self) -> str:
        return NULL_STATE_WIRE if self.value is None else self.value

    @classmethod
    def from_wire(cls, text: Optional[str]) -> Optional["StateValue"]:
        if text is None:
            return None
        return NULL_STATE if text == NULL_STATE_WIRE else cls(text)


NULL_STATE = StateValue(None)


@dataclass
class Code:
    value: str
    client_id: str
    user: str
    issued_at: int
    expires_at: int
    redeemed: bool = False

    def redeem(self) -> None:
        if self.redeemed:
            raise ValueError("code already redeemed")
        self.redeemed = True


@dataclass(frozen=True)
class AccessToken:
    value: str
    client_id: str
    user: str
    scope: frozenset
    expires_at: int


@dataclass(frozen=True)
class IdTokenClaims:
    iss: str
    sub: str
    aud: str
    iat: int
    exp: int
    email: str


class VerifiedClaims(IdTokenClaims):
    """Claims that passed :func:`verify_id_token`."""


@dataclass(frozen=True)
class IdToken:
    issuer: str
    subject: str
    audience: str
    issued_at: int
    expires_at: int
    email: str
    encoded: str

    @property
    def claims(self) -> IdTokenClaims:
        return IdTokenClaims(self.issuer, self.subject, self.audience, self.issued_at, self.expires_at, self.email)


@dataclass(frozen=True)
class TokenSet:
    access_token: AccessToken
    id_token: IdToken

    def __post_init__(self):
        if (self.access_token.user, self.access_token.client_id) != (self.id_token.subject, self.id_token.audience):
            raise ValueError("access_token and id_token must reference the same user and client")


@dataclass(frozen=True)
class AuthorizationRequest:
    client_id: str
    response_type: tuple
    redirect_uri: str
    state: Optional[StateValue]
    scope: frozenset = frozenset({"openid", "email", "profile"})
    origin: Optional[str] = None

    def to_params(self) -> dict:
        params = {
            "client_id": self.client_id,
            "response_type": " ".join(self.response_type),
            "redirect_uri": self.redirect_uri,
            "scope": " ".join(sorted(self.scope)),
        }
        if self.state is not None:
            params["state"] = self.state.wire()
        if self.origin is not None:
            params["origin"] = self.origin
        return params

    @classmethod
    def from_params(cls, params: dict) -> "AuthorizationRequest":
        return cls(
            client_id=params.get("client_id", ""),
            response_type=tuple(params.get("response_type", "").split()),
            redirect_uri=params.get("redirect_uri", ""),
            state=StateValue.from_wire(params.get("state")),
            scope=frozenset(params.get("scope", "").split()),
            origin=params.get("origin"),
        )

    @property
    def wants_tokens(self) -> bool:
        return "token" in self.response_type or "id_token" in self.response_type


@dataclass(frozen=True)
class AuthorizationResponse:
    delivery: Delivery
    state: Optional[StateValue]
    code: Optional[str] = None
    access_token: Optional[str] = None
    id_token: Optional[str] = None

    def __post_init__(self):
        if self.delivery is Delivery.REDIRECT_302 and (self.code is None or self.access_token or self.id_token):
            raise ValueError("a 302 delivery carries a code and no tokens")

    def params(self) -> dict:
        out = {k: v for k, v in (("code", self.code), ("access_token", self.access_token),
                                 ("id_token", self.id_token)) if v is not None}
        if self.state is not None:
            out["state"] = self.state.wire()
        return out


# --------------------------------------------------------------------------
# id_token codec


def _claims_text(claims: IdTokenClaims) -> str:
    lines = []
    for key in CLAIM_KEYS:
        value = str(getattr(claims, key))
        if "\n" in value:
            raise ValueError(f"claim {key} cannot contain a newline")
        lines.append(f"{key}={value}")
    return "\n".join(lines)


def _mac(key: bytes, signing_input: str) -> bytes:
    return hmac.new(key, signing_input.encode("ascii"), hashlib.sha256).digest()


def encode_id_token(claims: IdTokenClaims, op_signing_key: bytes) -> str:
    header = b64url_encode(ID_TOKEN_HEADER.encode())
    body = b64url_encode(_claims_text(claims).encode("utf-8"))
    signing_input = f"{header}.{body}"
    return f"{signing_input}.{b64url_encode(_mac(op_signing_key, signing_input))}"


def _split(encoded: str) -> tuple:
    parts = encoded.split(".")
    if len(parts) != 3 or not all(parts):
        raise MalformedToken("expected three dot-separated parts")
    return tuple(parts)


def decode_id_token_claims(encoded: str) -> IdTokenClaims:
    """Read the claims out of an encoded id_token.  No key is needed."""
    header, body, mac = _split(encoded)
    b64url_decode(header)
    b64url_decode(mac)
    try:
        text = b64url_decode(body).decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedToken("claims are not utf-8") from None
    found = {}
    for line in text.split("\n"):
        key, sep, value = line.partition("=")
        if not sep or key in found:
            raise MalformedToken(f"bad claims line {line!r}")
        found[key] = value
    if tuple(found) != CLAIM_KEYS:
        raise MalformedToken(f"claims keys {sorted(found)} != {list(CLAIM_KEYS)}")
    try:
        iat, exp = int(found["iat"]), int(found["exp"])
    except ValueError:
        raise MalformedToken("iat/exp must be integers") from None
    return IdTokenClaims(found["iss"], found["sub"], found["aud"], iat, exp, found["email"])


def verify_id_token(encoded: str, op_key: bytes, expected_audience: str, now: int) -> VerifiedClaims:
    claims = decode_id_token_claims(encoded)
    header, body, mac = _split(encoded)
    if not hmac.compare_digest(b64url_decode(mac), _mac(op_key, f"{header}.{body}")):
        raise BadSignature("id_token MAC does not verify")
    if claims.aud != expected_audience:
        raise AudienceMismatch(f"id_token audience {claims.aud!r} != {expected_audience!r}")
    if now >= claims.exp:
        raise Expired(f"id_token expired at {claims.exp}, now {now}")
    return VerifiedClaims(**vars(claims))


# --------------------------------------------------------------------------
# minting (operates on an op_sim.OpState)


def _check(op_state, client_id: str, user: str) -> None:
    if client_id not in op_state.clients:
        raise UnknownClient(client_id)
    if user not in op_state.users:
        raise UnknownUser(user)


def mint_code(op_state, client_id: str, user: str, now: int) -> Code:
    _check(op_state, client_id, user)
    code = Code(random_token(op_state.rng), client_id, user, now, now + op_state.code_lifetime)
    op_state.codes[code.value] = code
    return code


def mint_token_set(op_state, client_id: str, user: str, scope, now: int) -> TokenSet:
    _check(op_state, client_id, user)
    identity = op_state.users[user]
    access = AccessToken(random_token(op_state.rng), client_id, user, frozenset(scope),
                         now + op_state.token_lifetime)
    claims = IdTokenClaims(ISSUER, user, client_id, now, now + op_state.token_lifetime, identity.email)
    encoded = encode_id_token(claims, op_state.signing_key)
    id_token = IdToken(claims.iss, claims.sub, claims.aud, claims.iat, claims.exp, claims.email, encoded)
    op_state.access_tokens[access.value] = access
    op_state.id_tokens[encoded] = id_token
    return TokenSet(access, id_token)


# --------------------------------------------------------------------------


def build_authorization_request(registration: ClientRegistration, flow: FlowType, state: Optional[StateValue],
                                scope=frozenset({"openid", "email", "profile"}), *,
                                null_state_bug: bool = False) -> AuthorizationRequest:
    if registration.registered_flow is not flow:
        raise InconsistentRegistration(
            f"client {registration.client_id} is registered for {registration.registered_flow.value}, not {flow.value}")
    if flow is FlowType.AUTHORIZATION_CODE:
        return AuthorizationRequest(registration.client_id, ("code",), registration.redirect_uri, state,
                                    frozenset(scope))
    response_type = ("code", "token", "id_token") if flow is FlowType.HYBRID else ("token", "id_token")
    if null_state_bug:
        state = NULL_STATE
    return AuthorizationRequest(registration.client_id, response_type, POSTMESSAGE, state, frozenset(scope),
                                origin=registration.origin)


def mutate_response_type(req: AuthorizationRequest) -> AuthorizationRequest:
    """The forged request of the XSS exploit: ask a code-flow client for tokens too."""
    return replace(req, response_type=("code", "token", "id_token"))

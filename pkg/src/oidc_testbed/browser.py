"""Scripted browser and the traces of browser-relayed messages (BRMs) it records.

The browser is not a JavaScript engine.  Each piece of "script" that matters
for the attacks is a fixed behaviour: postMessage delivery to the RP Client,
the RP Client's submission, auto-submitting forms, img/iframe loads and the
universal-XSS exploit.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional
from urllib.parse import parse_qsl, urlsplit

from .errors import MalformedTrace, NoAutoGrant, OriginMismatch, RedirectLoop, XssBlocked
from .http import HttpRequest, HttpResponse, split_fragment, with_query
from .op import USERINFO_URL, HtmlDocument, OpForm
from .protocol import ChannelSecurity, FlowType, StateValue
from .rp import LoginPage, RpConfig, SignInSubmission, rp_client_script

MAX_REDIRECTS = 10

BRM_FIELDS = ("seq", "sender", "to", "method", "url", "headers", "body", "cookies", "channel",
              "status", "response_headers", "response_body", "set_cookies")


class Clock:
    """Logical simulator time; every relayed message advances it by one."""

    def __init__(self, start: int = 0):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def tick(self) -> int:
        self.now += 1
        return self.now


class Network:
    def __init__(self):
        self.actors = {}
        # every BRM from every browser on this network, in seq order
        self.log: list = []

    def attach(self, actor) -> None:
        self.actors[actor.host] = actor

    def deliver(self, request: HttpRequest) -> HttpResponse:
        actor = self.actors.get(request.host)
        if actor is None:
            return HttpResponse(502, body={"error": "unreachable"})
        return actor.handle(request)


@dataclass(frozen=True)
class BrowserRelayedMessage:
    seq: int
    sender: str
    to: str
    method: str
    url: str
    headers: dict
    body: dict
    cookies: dict
    channel: str
    status: int
    response_headers: dict
    response_body: dict
    set_cookies: list

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in BRM_FIELDS}

    @classmethod
    def from_record(cls, rec: dict) -> "BrowserRelayedMessage":
        missing = [k for k in BRM_FIELDS if k not in rec]
        if missing:
            raise MalformedTrace(f"BRM record missing {missing}")
        return cls(**{k: rec[k] for k in BRM_FIELDS})

    @property
    def is_http(self) -> bool:
        return self.channel == ChannelSecurity.HTTP.value

    @property
    def request_fields(self) -> dict:
        return {**dict(parse_qsl(urlsplit(self.url).query, keep_blank_values=True)), **self.body}

    @property
    def path(self) -> str:
        return urlsplit(self.url).path


@dataclass
class Trace:
    meta: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)

    def append(self, msg: BrowserRelayedMessage) -> None:
        if self.messages and msg.seq <= self.messages[-1].seq:
            raise ValueError("seq must be strictly increasing")
        self.messages.append(msg)

    def __iter__(self):
        return iter(self.messages)

    def __len__(self):
        return len(self.messages)

    def to_lines(self) -> list:
        head = json.dumps({"kind": "meta", **self.meta}, sort_keys=True)
        return [head] + [json.dumps({"kind": "brm", **m.to_record()}, sort_keys=True) for m in self.messages]

    def dumps(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise MalformedTrace("empty trace")
        trace = cls()
        for n, line in enumerate(lines, 1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedTrace(f"line {n}: {exc}") from None
            if not isinstance(rec, dict):
                raise MalformedTrace(f"line {n}: expected an object")
            kind = rec.pop("kind", None)
            if kind == "meta":
                trace.meta = rec
            elif kind == "brm":
                try:
                    trace.append(BrowserRelayedMessage.from_record(rec))
                except ValueError as exc:
                    raise MalformedTrace(f"line {n}: {exc}") from None
            else:
                raise MalformedTrace(f"line {n}: unknown record kind {kind!r}")
        return trace


@dataclass(frozen=True)
class Page:
    url: str  # may carry a fragment
    response: HttpResponse

    @property
    def fragment(self) -> dict:
        return split_fragment(self.url)[1]


@dataclass(frozen=True)
class RpClient:
    """The RP's in-page script, listening for the OP's postMessage."""

    config: RpConfig
    listener_origin: str
    page_state: Optional[StateValue] = None

    @classmethod
    def from_login_page(cls, page: LoginPage) -> "RpClient":
        return cls(page.config, page.config.origin, page.page_state)


class AttackPageKind(str, enum.Enum):
    IMG_SRC = "IMG_SRC"
    IFRAME_SRC = "IFRAME_SRC"
    AUTO_POST_FORM = "AUTO_POST_FORM"


@dataclass(frozen=True)
class AttackPage:
    kind: AttackPageKind
    target: Optional[str] = None
    fields: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExploitScript:
    """Opens ``open_url`` in a new window and reads that window's URL fragment."""

    open_url: str


@dataclass(frozen=True)
class ExfiltratedData:
    source_url: str
    access_token: Optional[str] = None
    id_token: Optional[str] = None
    code: Optional[str] = None


class Browser:
    def __init__(self, network: Network, clock: Clock, name: str = "browser", *, universal_xss: bool = False):
        self.network = network
        self.clock = clock
        self.name = name
        self.universal_xss = universal_xss
        self.jars: dict = {}
        self.trace = Trace()
        self.history: list = []
        self.dropped_messages: list = []

    def start_trace(self, **meta) -> Trace:
        self.trace = Trace(meta)
        return self.trace

    def cookies_for(self, url: str) -> dict:
        req_host = split_fragment(url)[0]
        probe = HttpRequest("GET", req_host)
        jar = self.jars.get(probe.host, {})
        https = probe.channel is ChannelSecurity.HTTPS
        return {c.name: c.value for c in jar.values() if https or not c.secure}

    def clear_cookies(self, host: str) -> None:
        self.jars.pop(host, None)

    def send(self, method: str, url: str, body: Optional[dict] = None) -> HttpResponse:
        url, _ = split_fragment(url)
        request = HttpRequest(method, url, dict(body or {}), self.cookies_for(url))
        seq = self.clock.tick()
        response = self.network.deliver(request)
        msg = BrowserRelayedMessage(
            seq=seq, sender=f"browser:{self.name}", to=request.host, method=method, url=url,
            headers=dict(request.headers), body=dict(request.body), cookies=dict(request.cookies),
            channel=request.channel.value, status=response.status, response_headers=dict(response.headers),
            response_body=dict(response.body),
            set_cookies=[{"name": c.name, "value": c.value, "secure": c.secure} for c in response.set_cookies],
        )
        self.trace.append(msg)
        self.network.log.append(msg)
        jar = self.jars.setdefault(request.host, {})
        for c in response.set_cookies:
            jar[c.name] = c
        return response

    def request(self, method: str, url: str, body: Optional[dict] = None, *, follow: bool = True) -> Page:
        response = self.send(method, url, body)
        hops = 0
        while follow and response.status in (301, 302, 303) and response.location:
            hops += 1
            if hops > MAX_REDIRECTS:
                raise RedirectLoop(f"more than {MAX_REDIRECTS} redirects starting at {url}")
            url = response.location
            response = self.send("GET", url)
        page = Page(url, response)
        self.history.append(page)
        return page

    def navigate(self, url: str, *, follow: bool = True) -> Page:
        return navigate(self, url, follow=follow)


def navigate(browser: Browser, url: str, *, follow: bool = True) -> Page:
    return browser.request("GET", url, follow=follow)


def submit_form(browser: Browser, form: OpForm, extra: Optional[dict] = None, *, follow: bool = True) -> Page:
    return browser.request("POST", form.action, {**form.fields, **(extra or {})}, follow=follow)


def relay_submission(browser: Browser, submission: SignInSubmission) -> Page:
    fields = submission.fields()
    if submission.http_method == "POST":
        return browser.request("POST", submission.url, fields)
    return browser.request("GET", with_query(submission.url, fields))


def run_postmessage_delivery(browser: Browser, html: HtmlDocument, rp_client: RpClient, *,
                             relay: bool = True) -> SignInSubmission:
    if html.target_origin != rp_client.listener_origin:
        browser.dropped_messages.append((html.target_origin, rp_client.listener_origin))
        raise OriginMismatch(f"postMessage to {html.target_origin} not delivered to {rp_client.listener_origin}")
    profile = None
    if rp_client.config.flow is FlowType.CLIENT_SIDE and html.message.access_token:
        # the client-side flow fetches the profile from the browser itself
        page = browser.request("GET", with_query(USERINFO_URL, {"access_token": html.message.access_token}))
        profile = page.response.body if page.response.status == 200 else None
    submission = rp_client_script(rp_client.config, html.message, page_state=rp_client.page_state,
                                  profile=profile)
    if relay:
        relay_submission(browser, submission)
    return submission


def load_attack_page(browser: Browser, page: AttackPage) -> None:
    if page.target is None:
        return
    if page.kind is AttackPageKind.AUTO_POST_FORM:
        browser.request("POST", page.target, dict(page.fields))
    else:
        browser.request("GET", with_query(page.target, page.fields) if page.fields else page.target)


def xss_execute(browser: Browser, target_origin: str, script: ExploitScript) -> ExfiltratedData:
    if not browser.universal_xss:
        raise XssBlocked(f"cannot inject into {target_origin}")
    opened = browser.request("GET", script.open_url)
    if isinstance(opened.response.page, OpForm):
        raise NoAutoGrant(f"OP answered with {opened.response.page.kind.value}")
    fragment = opened.fragment
    if not fragment:
        raise NoAutoGrant("no authorization response in the opened window's fragment")
    return ExfiltratedData(opened.url, fragment.get("access_token"), fragment.get("id_token"), fragment.get("code"))


def iter_http_messages(traces: Iterable[Trace]):
    for trace in traces:
        for msg in trace:
            if msg.is_http:
                yield msg

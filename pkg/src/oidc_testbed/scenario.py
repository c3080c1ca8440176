"""A self-contained world: one OP, some RPs, two users and their browsers.

Every scan step builds its own world from ``(seed, label)`` so runs never share
state and are reproducible on their own.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .browser import Browser, Clock, Network, Page, RpClient, run_postmessage_delivery, submit_form
from .errors import ScenarioSetupFailed
from .op import SESSION_COOKIE as OP_SESSION_COOKIE
from .op import HtmlDocument, OpForm, OpResponseKind, OpServer, OpState
from .protocol import AuthorizationResponse, FlowType, UserIdentity
from .rp import SESSION_COOKIE, LoginPage, RpConfig, RpServer, SignInSubmission

VICTIM = UserIdentity("115722834054889887046", "victim@gmail.test", "Victim Person", "victim-password")
ATTACKER = UserIdentity("104201337000000000666", "attacker@gmail.test", "Attacker Person", "attacker-password")
MALICIOUS_RP = "rp-m"


@dataclass(frozen=True)
class Environment:
    """Knobs outside any single RP: OP behaviour and the browser model."""

    seed: int = 0
    null_state_bug: bool = True
    accept_mutated_response_type: bool = True
    universal_xss: bool = True
    code_lifetime: int = 60
    token_lifetime: int = 3600

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LoginRun:
    login_page: LoginPage
    delivered: Optional[AuthorizationResponse] = None
    submission: Optional[SignInSubmission] = None
    callback_url: Optional[str] = None
    pages: list = field(default_factory=list)

    @property
    def final(self) -> Optional[Page]:
        return self.pages[-1] if self.pages else None


class World:
    def __init__(self, env: Environment, label: str):
        self.env = env
        self.label = label
        self.rng = random.Random(f"{env.seed}:{label}")
        self.clock = Clock()
        self.network = Network()
        self.op_state = OpState.create(
            random.Random(self.rng.getrandbits(64)),
            null_state_bug=env.null_state_bug,
            accept_mutated_response_type=env.accept_mutated_response_type,
            code_lifetime=env.code_lifetime,
            token_lifetime=env.token_lifetime,
        )
        self.op = OpServer(self.op_state, self.clock)
        self.network.attach(self.op)
        for user in (VICTIM, ATTACKER):
            self.op_state.add_user(user)
        self.rps: dict = {}
        self.browsers: dict = {}

    def add_rp(self, config: RpConfig) -> RpServer:
        if config.name in self.rps:
            raise ScenarioSetupFailed(f"RP {config.name!r} already present")
        try:
            self.op_state.register(config.registration)
        except ValueError as exc:
            raise ScenarioSetupFailed(str(exc)) from None
        rp = RpServer(config, self.op, random.Random(self.rng.getrandbits(64)))
        self.rps[config.name] = rp
        self.network.attach(rp)
        return rp

    def browser(self, name: str, *, universal_xss: Optional[bool] = None) -> Browser:
        if name not in self.browsers:
            xss = self.env.universal_xss if universal_xss is None else universal_xss
            self.browsers[name] = Browser(self.network, self.clock, name, universal_xss=xss)
        return self.browsers[name]

    def session_user(self, browser: Browser, rp_name: str) -> Optional[str]:
        rp = self.rps[rp_name]
        cookie = browser.jars.get(rp.host, {}).get(SESSION_COOKIE)
        session = rp.sessions.get(cookie.value) if cookie else None
        return session.logged_in_user if session else None

    def op_user(self, browser: Browser) -> Optional[str]:
        cookie = browser.jars.get(self.op.host, {}).get(OP_SESSION_COOKIE)
        return self.op_state.sessions.get(cookie.value) if cookie else None

    def has_grant(self, user: UserIdentity, rp_name: str) -> bool:
        return (user.numeric_id, self.rps[rp_name].config.registration.client_id) in self.op_state.grants

    def login(self, browser: Browser, rp_name: str, user: UserIdentity, *, intercept: bool = False) -> LoginRun:
        """Sign ``user`` in at ``rp_name``.  With ``intercept`` the step-5 material
        is captured but never handed to the RP."""
        rp = self.rps[rp_name]
        cfg = rp.config
        page = browser.navigate(f"{cfg.origin}/login")
        login_page = page.response.page
        if not isinstance(login_page, LoginPage):
            raise ScenarioSetupFailed(f"{rp_name}: no login page ({page.response.status})")
        run = LoginRun(login_page, pages=[page])
        op_page = browser.navigate(login_page.authorization_url, follow=False)
        for _ in range(2):
            form = op_page.response.page
            if not isinstance(form, OpForm):
                break
            if form.kind is OpResponseKind.LOGIN_FORM:
                extra = {"login": user.email, "password": user.password}
            else:
                extra = {"consent": "allow"}
            op_page = submit_form(browser, form, extra, follow=False)
        run.pages.append(op_page)

        doc = op_page.response.page
        if isinstance(doc, HtmlDocument):
            run.delivered = doc.message
            run.submission = run_postmessage_delivery(browser, doc, RpClient.from_login_page(login_page),
                                                      relay=not intercept)
            if intercept:
                return run
            run.pages.append(browser.history[-1])
        elif cfg.flow is FlowType.AUTHORIZATION_CODE and op_page.response.location:
            run.callback_url = op_page.response.location
            if intercept:
                return run
            run.pages.append(browser.navigate(run.callback_url))
        else:
            raise ScenarioSetupFailed(f"{rp_name}: OP did not deliver an authorization response "
                                      f"({op_page.response.status} {op_page.response.body})")
        landing = run.final.response.body.get("next")
        if run.final.response.status == 200 and landing:
            run.pages.append(browser.navigate(landing))
        return run


def build_world(config: RpConfig, env: Environment, label: str) -> World:
    """Target RP plus the attacker-operated RP used for cross-RP token reuse."""
    if config.name == MALICIOUS_RP:
        raise ScenarioSetupFailed(f"{MALICIOUS_RP!r} is reserved for the attacker's RP")
    world = World(env, f"{config.name}/{label}")
    world.add_rp(config)
    world.add_rp(RpConfig.make(MALICIOUS_RP, FlowType.HYBRID))
    return world

from dataclasses import replace

import pytest

from oidc_testbed import protocol as pc
from oidc_testbed.errors import BadCredentials, InvalidToken, OriginMismatch, RedirectUriMismatch
from oidc_testbed.op import (
    SESSION_COOKIE,
    HtmlDocument,
    OpResponseKind,
    authenticate_and_grant,
    handle_authorization_request,
    handle_token_endpoint,
    handle_tokeninfo,
    handle_userinfo,
    render_hybrid_delivery,
)
from oidc_testbed.protocol import Delivery, FlowType, StateValue
from oidc_testbed.scenario import VICTIM

from conftest import CODE_REG, HYBRID_REG, make_op_state


def _hybrid_req(state=StateValue("st")):
    return pc.build_authorization_request(HYBRID_REG, FlowType.HYBRID, state)


def _code_req(state=StateValue("st")):
    return pc.build_authorization_request(CODE_REG, FlowType.AUTHORIZATION_CODE, state)


def _signed_in(state, req):
    resp = authenticate_and_grant(state, (VICTIM.email, VICTIM.password), req)
    return resp, {SESSION_COOKIE: resp.session_cookie}


def test_fresh_browser_gets_login_form(op_state):
    assert handle_authorization_request(op_state, _hybrid_req(), {}).kind is OpResponseKind.LOGIN_FORM


def test_password_login_delivers_hybrid_bundle(op_state):
    resp, _ = _signed_in(op_state, _hybrid_req())
    auth = resp.payload
    assert resp.kind is OpResponseKind.DELIVERY
    assert auth.delivery is Delivery.POST_MESSAGE_HTML
    assert auth.code and auth.access_token and auth.id_token


def test_bad_password(op_state):
    with pytest.raises(BadCredentials):
        authenticate_and_grant(op_state, (VICTIM.email, "nope"), _hybrid_req())


def test_session_without_grant_asks_consent(op_state):
    _, cookies = _signed_in(op_state, _hybrid_req())
    assert handle_authorization_request(op_state, _code_req(), cookies).kind is OpResponseKind.CONSENT_FORM


def test_auto_grant_code_flow(op_state):
    _, cookies = _signed_in(op_state, _code_req())
    resp = handle_authorization_request(op_state, _code_req(StateValue("s2")), cookies)
    assert resp.kind is OpResponseKind.DELIVERY
    assert resp.payload.delivery is Delivery.REDIRECT_302
    assert resp.payload.state == StateValue("s2")
    assert resp.payload.access_token is None and resp.payload.id_token is None


def test_auto_grant_hybrid_second_request(op_state):
    _, cookies = _signed_in(op_state, _hybrid_req())
    assert handle_authorization_request(op_state, _hybrid_req(), cookies).kind is OpResponseKind.DELIVERY


def test_mutated_response_type_puts_tokens_in_fragment(op_state):
    _, cookies = _signed_in(op_state, _code_req())
    resp = handle_authorization_request(op_state, pc.mutate_response_type(_code_req()), cookies)
    assert resp.payload.delivery is Delivery.FRAGMENT_ON_REDIRECT
    assert resp.payload.access_token


def test_fixed_op_ignores_mutation():
    state = make_op_state(accept_mutated_response_type=False)
    _, cookies = _signed_in(state, _code_req())
    resp = handle_authorization_request(state, pc.mutate_response_type(_code_req()), cookies)
    assert resp.payload.delivery is Delivery.REDIRECT_302
    assert resp.payload.access_token is None


def test_redirect_uri_and_origin_checked(op_state):
    with pytest.raises(RedirectUriMismatch):
        handle_authorization_request(op_state, replace(_code_req(), redirect_uri="https://evil.test/cb"), {})
    with pytest.raises(OriginMismatch):
        handle_authorization_request(op_state, replace(_hybrid_req(), origin="https://evil.test"), {})


def test_hybrid_html_targets_registered_origin(op_state):
    resp, _ = _signed_in(op_state, _hybrid_req())
    doc = render_hybrid_delivery(resp.payload, HYBRID_REG)
    assert isinstance(doc, HtmlDocument)
    assert doc.script == "postMessage" and doc.target_origin == HYBRID_REG.origin


def test_null_state_bug_replaces_state(op_state):
    resp, _ = _signed_in(op_state, _hybrid_req())
    assert render_hybrid_delivery(resp.payload, HYBRID_REG, null_state_bug=True).message.state.is_null
    assert render_hybrid_delivery(resp.payload, HYBRID_REG).message.state == StateValue("st")


def test_step8_id_token_identical_to_step5(op_state):
    resp, _ = _signed_in(op_state, _hybrid_req())
    auth = resp.payload
    tokens = handle_token_endpoint(op_state, auth.code, "rp-h", "secret-h", pc.POSTMESSAGE, 1)
    assert tokens.id_token.encoded == auth.id_token
    assert tokens.access_token.value == auth.access_token


def test_code_flow_exchange(op_state):
    resp, _ = _signed_in(op_state, _code_req())
    tokens = handle_token_endpoint(op_state, resp.payload.code, "rp-a", "secret-a", CODE_REG.redirect_uri, 1)
    assert tokens.id_token.subject == VICTIM.numeric_id


def test_tokeninfo_reveals_issuing_client(op_state):
    ts = pc.mint_token_set(op_state, "rp-m", VICTIM.numeric_id, {"openid"}, 0)
    assert handle_tokeninfo(op_state, ts.access_token.value)["client_id"] == "rp-m"


def test_userinfo_is_bearer(op_state):
    ts = pc.mint_token_set(op_state, "rp-h", VICTIM.numeric_id, {"openid"}, 0)
    assert handle_userinfo(op_state, ts.access_token.value) == VICTIM.profile()


def test_userinfo_rejects_unknown_and_expired(op_state):
    ts = pc.mint_token_set(op_state, "rp-h", VICTIM.numeric_id, {"openid"}, 0)
    with pytest.raises(InvalidToken):
        handle_userinfo(op_state, "not-a-token")
    with pytest.raises(InvalidToken):
        handle_userinfo(op_state, ts.access_token.value, now=3600)

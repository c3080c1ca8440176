"""Hypothesis property tests for the protocol, browser, attack and scanner invariants."""
import random

import pytest

from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from oidc_testbed import protocol as pc
from oidc_testbed.attacks import FLAG_ATTACK_TABLE, PLAYBOOKS, run_trigger
from oidc_testbed.errors import AudienceMismatch, ClientAuthFailed, InvalidCode
from oidc_testbed.op import handle_token_endpoint
from oidc_testbed.protocol import FlowType, IdTokenClaims
from oidc_testbed.rp import Flag, RpConfig
from oidc_testbed.scanner import run_scan, static_agrees
from oidc_testbed.scenario import VICTIM, Environment, build_world

from conftest import CODE_REG, make_op_state

FLOWS = list(FlowType)
SLOW = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])


def _valid(flow, flags):
    try:
        return RpConfig.make("target", flow, flags)
    except ValueError:
        return None


SINGLE_FLAG_CONFIGS = [c for c in (_valid(flow, [f]) for flow in FLOWS for f in Flag) if c is not None]


def predicted_successes(cfg):
    """Playbooks the flag table says must succeed against ``cfg`` (patched browser)."""
    hits, blocked = set(), set()
    for row in FLAG_ATTACK_TABLE:
        if row.flow is cfg.flow and Flag(row.flag) in cfg.flags and row.context <= {f.value for f in cfg.flags}:
            (blocked if row.defends else hits).add(row.playbook)
    return hits - blocked


@st.composite
def configs(draw):
    flow = draw(st.sampled_from(FLOWS))
    flags = draw(st.sets(st.sampled_from(list(Flag)), max_size=4))
    cfg = _valid(flow, flags)
    assume(cfg is not None)
    return cfg


seeds = st.integers(min_value=0, max_value=2**32)


# --------------------------------------------------------------------------
# flag table


@SLOW
@given(st.sampled_from(FLAG_ATTACK_TABLE), seeds)
def test_flag_table_equivalence_any_seed(row, seed):
    with_flag, without = run_trigger(row, Environment(seed=seed))
    assert with_flag is not row.defends
    assert without is row.defends


@SLOW
@given(st.sampled_from(SINGLE_FLAG_CONFIGS), seeds)
def test_single_flag_configs_follow_table(cfg, seed):
    env = Environment(seed=seed, universal_xss=False)
    got = {pid for pid, pb in PLAYBOOKS.items()
           if pb.applies_to(cfg.flow) and pb.run(build_world(cfg, env, pid), cfg.name).success}
    assert got == predicted_successes(cfg)


@pytest.mark.parametrize("cfg", SINGLE_FLAG_CONFIGS,
                         ids=lambda c: f"{c.flow.value}-{'+'.join(sorted(f.value for f in c.flags))}")
def test_every_single_flag_config(cfg):
    env = Environment(universal_xss=False)
    got = {pid for pid, pb in PLAYBOOKS.items()
           if pb.applies_to(cfg.flow) and pb.run(build_world(cfg, env, pid), cfg.name).success}
    assert got == predicted_successes(cfg)


# --------------------------------------------------------------------------
# scanner


@SLOW
@given(configs(), seeds)
def test_static_agrees_with_dynamic(cfg, seed):
    result = run_scan(cfg, Environment(seed=seed))
    assert static_agrees(result.dynamic, result.static) == []


@SLOW
@given(configs(), seeds)
def test_scan_idempotent(cfg, seed):
    a, b = run_scan(cfg, Environment(seed=seed)), run_scan(cfg, Environment(seed=seed))
    assert [f.to_record() for f in a.findings] == [f.to_record() for f in b.findings]
    assert {k: t.dumps() for k, t in a.traces.items()} == {k: t.dumps() for k, t in b.traces.items()}


@SLOW
@given(st.sampled_from(FLOWS), seeds)
def test_hardened_clean_across_seeds(flow, seed):
    result = run_scan(RpConfig.make("target", flow), Environment(seed=seed, universal_xss=False))
    assert result.findings == []


# --------------------------------------------------------------------------
# browser


@SLOW
@given(configs(), seeds)
def test_cookie_isolation_and_fragment_secrecy(cfg, seed):
    world = build_world(cfg, Environment(seed=seed), "props")
    for pid, pb in PLAYBOOKS.items():
        if pb.applies_to(cfg.flow):
            pb.run(world, cfg.name)
    issued: dict = {}  # host -> cookie name -> values that host has set
    for msg in world.network.log:
        for name, value in msg.cookies.items():
            assert value in issued.get(msg.to, {}).get(name, set())
        assert "#" not in msg.url
        for c in msg.set_cookies:
            issued.setdefault(msg.to, {}).setdefault(c["name"], set()).add(c["value"])


# --------------------------------------------------------------------------
# protocol

text = st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\n"), max_size=40)


@given(text, st.from_regex(r"[0-9]{1,21}", fullmatch=True), text, st.integers(0, 10**9),
       st.integers(1, 10**6), text, st.binary(min_size=1, max_size=64))
def test_codec_round_trip(iss, sub, aud, iat, life, email, key):
    claims = IdTokenClaims(iss, sub, aud, iat, iat + life, email)
    encoded = pc.encode_id_token(claims, key)
    assert pc.decode_id_token_claims(encoded) == claims
    assert vars(pc.verify_id_token(encoded, key, aud, iat)) == vars(claims)


@given(text, text)
def test_audience_binding(aud, other):
    claims = IdTokenClaims(pc.ISSUER, VICTIM.numeric_id, aud, 0, 100, VICTIM.email)
    encoded = pc.encode_id_token(claims, b"k")
    try:
        got = pc.verify_id_token(encoded, b"k", other, 1)
    except AudienceMismatch:
        assert aud != other
    else:
        assert got.aud == other == aud


@given(st.lists(st.sampled_from(["good", "bad-secret", "wrong-client"]), min_size=2, max_size=6), seeds)
def test_code_redeemed_at_most_once(attempts, seed):
    state = make_op_state(seed)
    code = pc.mint_code(state, "rp-a", VICTIM.numeric_id, 0)
    creds = {"good": ("rp-a", "secret-a"), "bad-secret": ("rp-a", "nope"), "wrong-client": ("rp-h", "secret-h")}
    successes = 0
    for kind in attempts:
        client, secret = creds[kind]
        try:
            handle_token_endpoint(state, code.value, client, secret, CODE_REG.redirect_uri, 1)
            successes += 1
        except (InvalidCode, ClientAuthFailed):
            pass
    assert successes == (1 if "good" in attempts else 0)


@given(seeds)
def test_minted_tokens_transparent(seed):
    state = make_op_state(seed)
    ts = pc.mint_token_set(state, "rp-h", VICTIM.numeric_id, {"openid"}, random.Random(seed).randrange(100))
    claims = pc.decode_id_token_claims(ts.id_token.encoded)
    assert (claims.sub, claims.email) == (VICTIM.numeric_id, VICTIM.email)

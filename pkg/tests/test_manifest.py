import json

import pytest

from oidc_testbed.errors import ManifestError
from oidc_testbed.fleet import hardened_fleet, replica_fleet
from oidc_testbed.manifest import HARDENED_MANIFEST, REPLICA_MANIFEST, load_manifest, parse_manifest
from oidc_testbed.rp import Flag


def test_shipped_manifests_match_generator():
    assert REPLICA_MANIFEST.read_text() == replica_fleet().dumps()
    assert HARDENED_MANIFEST.read_text() == hardened_fleet().dumps()


def test_replica_shape():
    m = load_manifest(REPLICA_MANIFEST)
    flows = [c.flow.value for c in m.rps]
    assert (len(m.rps), flows.count("AuthorizationCode"), flows.count("Hybrid"), flows.count("ClientSide")) == (
        103, 69, 33, 1)
    assert m.assumptions and m.environment.universal_xss


def test_dumps_parse_round_trip():
    m = replica_fleet(seed=5)
    back = parse_manifest(m.dumps())
    assert back.to_dict() == m.to_dict()


def test_implied_flags_added():
    m = parse_manifest('{"seed": 1, "rps": [{"name": "a", "flow": "Hybrid", "flags": ["VERIFIES_ACCESS_TOKEN"]}]}')
    assert Flag.SUBMITS_ACCESS_TOKEN in m.rps[0].flags


def _rps(*entries):
    return json.dumps({"seed": 1, "rps": list(entries)}, indent=1)


@pytest.mark.parametrize("text, needle", [
    ("{", "line 1"),
    ('{"rps": [{"name": "a", "flow": "Hybrid"}]}', "$.seed"),
    ('{"seed": "x", "rps": [{"name": "a", "flow": "Hybrid"}]}', "$.seed: expected int"),
    ('{"seed": 1, "rps": []}', "$.rps"),
    ('{"seed": 1, "bogus": 2, "rps": [{"name": "a", "flow": "Hybrid"}]}', "$.bogus: unknown field"),
    ('{"seed": 1, "op": {"code_lifetime": 0}, "rps": [{"name": "a", "flow": "Hybrid"}]}', "must be positive"),
    (_rps({"name": "a", "flow": "Hybrid"}, {"name": "a", "flow": "Hybrid"}), "$.rps[1].name: duplicate"),
    (_rps({"name": "rp-m", "flow": "Hybrid"}), "reserved"),
    (_rps({"name": "Bad_Name", "flow": "Hybrid"}), "lowercase host label"),
    (_rps({"name": "a", "flow": "Implicit"}), "$.rps[0].flow"),
    (_rps({"name": "a", "flow": "Hybrid", "flags": ["NOPE"]}), "$.rps[0].flags[0]: unknown flag"),
    (_rps({"name": "a", "flow": "AuthorizationCode", "flags": ["AUTH_BY_GOOGLE_ID"]}), "need a Hybrid flow"),
    (_rps({"name": "a", "flow": "Hybrid", "extra": 1}), "$.rps[0].extra"),
])
def test_manifest_errors(text, needle):
    with pytest.raises(ManifestError) as exc:
        parse_manifest(text, "m.json")
    assert needle in str(exc.value)
    assert str(exc.value).startswith("m.json")


def test_error_carries_line_context():
    text = _rps({"name": "a", "flow": "Hybrid"}, {"name": "b", "flow": "Hybrid", "flags": ["NOPE"]})
    with pytest.raises(ManifestError) as exc:
        parse_manifest(text)
    lineno = text[:text.index('"b"')].count("\n") + 1
    assert f"(line {lineno}:" in str(exc.value)


def test_missing_file():
    with pytest.raises(ManifestError):
        load_manifest("/nonexistent/manifest.json")

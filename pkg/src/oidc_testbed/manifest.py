"""Fleet manifests: JSON files listing RP configs plus OP/browser knobs and a seed.

Schema::

    {
      "seed": int,                                  required
      "description": str,
      "assumptions": [str, ...],
      "op": {"null_state_bug": bool, "accept_mutated_response_type": bool,
             "code_lifetime": int, "token_lifetime": int},
      "browser": {"universal_xss": bool},
      "rps": [{"name": str, "flow": "AuthorizationCode" | "Hybrid" | "ClientSide",
               "flags": [str, ...], "note": str}, ...]   required, non-empty
    }

Implied flags (e.g. AUTH_BY_ACCESS_TOKEN needs SUBMITS_ACCESS_TOKEN) are added
on load.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError
from .protocol import FlowType
from .rp import Flag, RpConfig
from .scenario import MALICIOUS_RP, Environment

NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]{0,62}$")
TOP_KEYS = {"seed", "description", "assumptions", "op", "browser", "rps"}
OP_KEYS = {"null_state_bug": bool, "accept_mutated_response_type": bool, "code_lifetime": int, "token_lifetime": int}
BROWSER_KEYS = {"universal_xss": bool}
RP_KEYS = {"name", "flow", "flags", "note"}


@dataclass
class FleetManifest:
    seed: int
    rps: list
    environment: Environment
    description: str = ""
    assumptions: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        env = self.environment
        return {
            "seed": self.seed,
            "description": self.description,
            "assumptions": list(self.assumptions),
            "op": {k: getattr(env, k) for k in OP_KEYS},
            "browser": {k: getattr(env, k) for k in BROWSER_KEYS},
            "rps": [{**c.to_dict(), **({"note": self.notes[c.name]} if c.name in self.notes else {})}
                    for c in self.rps],
        }

    def dumps(self) -> str:
        """Pretty JSON with one RP per line, so errors point at a useful line."""
        d = self.to_dict()
        rps = d.pop("rps")
        head = json.dumps(d, indent=2)
        body = ",\n".join("    " + json.dumps(rp) for rp in rps)
        return head[:-2] + ',\n  "rps": [\n' + body + "\n  ]\n}\n"

    def with_seed(self, seed: int) -> "FleetManifest":
        env = Environment(**{**self.environment.to_dict(), "seed": seed})
        return FleetManifest(seed, self.rps, env, self.description, self.assumptions, self.notes)


class _Checker:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def line_of(self, needle: str) -> int:
        idx = self.text.find(needle)
        return self.text.count("\n", 0, idx) + 1 if idx >= 0 else 0

    def fail(self, path: str, msg: str, needle: str = None):
        line = self.line_of(needle) if needle else 0
        where = f" (line {line}: {self.text.splitlines()[line - 1].strip()[:80]})" if line else ""
        raise ManifestError(f"{self.source}: {path}: {msg}{where}")

    def expect(self, value, typ, path: str, needle: str = None):
        ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
        if not ok:
            self.fail(path, f"expected {typ.__name__}, got {type(value).__name__}", needle)


def parse_manifest(text: str, source: str = "<manifest>") -> FleetManifest:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1].strip()[:80] if text.strip() else ""
        raise ManifestError(f"{source}: line {exc.lineno} col {exc.colno}: {exc.msg}: {line}") from None
    ck = _Checker(text, source)
    ck.expect(data, dict, "$")
    for key in sorted(set(data) - TOP_KEYS):
        ck.fail(f"$.{key}", "unknown field", f'"{key}"')
    if "seed" not in data:
        ck.fail("$.seed", "required (runs must be reproducible)")
    ck.expect(data["seed"], int, "$.seed", '"seed"')

    env_kw = {"seed": data["seed"]}
    for section, allowed in (("op", OP_KEYS), ("browser", BROWSER_KEYS)):
        block = data.get(section, {})
        ck.expect(block, dict, f"$.{section}", f'"{section}"')
        for key, value in block.items():
            if key not in allowed:
                ck.fail(f"$.{section}.{key}", "unknown field", f'"{key}"')
            ck.expect(value, allowed[key], f"$.{section}.{key}", f'"{key}"')
            if allowed[key] is int and value <= 0:
                ck.fail(f"$.{section}.{key}", "must be positive", f'"{key}"')
            env_kw[key] = value

    assumptions = data.get("assumptions", [])
    ck.expect(assumptions, list, "$.assumptions", '"assumptions"')
    for i, a in enumerate(assumptions):
        ck.expect(a, str, f"$.assumptions[{i}]", '"assumptions"')
    description = data.get("description", "")
    ck.expect(description, str, "$.description", '"description"')

    if "rps" not in data:
        ck.fail("$.rps", "required")
    ck.expect(data["rps"], list, "$.rps", '"rps"')
    if not data["rps"]:
        ck.fail("$.rps", "must list at least one RP", '"rps"')
    configs, notes, seen = [], {}, set()
    for i, entry in enumerate(data["rps"]):
        path = f"$.rps[{i}]"
        ck.expect(entry, dict, path, '"rps"')
        name = entry.get("name")
        needle = f'"name": "{name}"' if isinstance(name, str) else '"rps"'
        for key in sorted(set(entry) - RP_KEYS):
            ck.fail(f"{path}.{key}", "unknown field", needle)
        for key in ("name", "flow"):
            if key not in entry:
                ck.fail(f"{path}.{key}", "required", needle)
        ck.expect(name, str, f"{path}.name", needle)
        if not NAME_RE.match(name):
            ck.fail(f"{path}.name", f"{name!r} is not a lowercase host label", needle)
        if name == MALICIOUS_RP:
            ck.fail(f"{path}.name", f"{MALICIOUS_RP!r} is reserved for the attacker's RP", needle)
        if name in seen:
            ck.fail(f"{path}.name", f"duplicate RP name {name!r}", needle)
        seen.add(name)
        try:
            flow = FlowType(entry["flow"])
        except ValueError:
            ck.fail(f"{path}.flow", f"must be one of {[f.value for f in FlowType]}", needle)
        flags = entry.get("flags", [])
        ck.expect(flags, list, f"{path}.flags", needle)
        for j, flag in enumerate(flags):
            if flag not in Flag.__members__:
                ck.fail(f"{path}.flags[{j}]", f"unknown flag {flag!r}", needle)
        try:
            configs.append(RpConfig.make(name, flow, flags))
        except ValueError as exc:
            ck.fail(f"{path}.flags", str(exc), needle)
        if "note" in entry:
            ck.expect(entry["note"], str, f"{path}.note", needle)
            notes[name] = entry["note"]
    return FleetManifest(data["seed"], configs, Environment(**env_kw), description, list(assumptions), notes)


def load_manifest(path) -> FleetManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{path}: {exc.strerror}") from None
    return parse_manifest(text, str(path))


DATA_DIR = Path(__file__).parent / "data"
REPLICA_MANIFEST = DATA_DIR / "replica_manifest.json"
HARDENED_MANIFEST = DATA_DIR / "hardened_manifest.json"

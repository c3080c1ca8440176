"""Deterministic OpenID Connect testbed: a simulated OP, configurable RPs, a
scripted browser, attack playbooks and a fleet scanner."""

from .protocol import FlowType
from .rp import Flag, RpConfig
from .scenario import Environment

__all__ = ["Environment", "Flag", "FlowType", "RpConfig"]

import random

import pytest

from oidc_testbed.op import OpState
from oidc_testbed.protocol import ClientRegistration, FlowType
from oidc_testbed.scenario import ATTACKER, VICTIM, Environment

CODE_REG = ClientRegistration("rp-a", "secret-a", FlowType.AUTHORIZATION_CODE,
                              redirect_uri="https://rp-a.rp.test/callback")
HYBRID_REG = ClientRegistration("rp-h", "secret-h", FlowType.HYBRID, origin="https://rp-h.rp.test")
MALICIOUS_REG = ClientRegistration("rp-m", "secret-m", FlowType.HYBRID, origin="https://rp-m.rp.test")


def make_op_state(seed=0, **flags) -> OpState:
    state = OpState.create(random.Random(seed), **flags)
    for reg in (CODE_REG, HYBRID_REG, MALICIOUS_REG):
        state.register(reg)
    for user in (VICTIM, ATTACKER):
        state.add_user(user)
    return state


@pytest.fixture
def op_state():
    return make_op_state()


@pytest.fixture
def env():
    return Environment(seed=7)

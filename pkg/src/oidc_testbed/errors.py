"""Exception hierarchy shared by every actor in the testbed."""


class TestbedError(Exception):
    """Base class for all simulator errors."""


# token / protocol
class UnknownClient(TestbedError):
    pass


class UnknownUser(TestbedError):
    pass


class MalformedToken(TestbedError):
    pass


class BadSignature(TestbedError):
    pass


class AudienceMismatch(TestbedError):
    pass


class Expired(TestbedError):
    pass


class InconsistentRegistration(TestbedError):
    pass


# OP endpoints
class OriginMismatch(TestbedError):
    pass


class RedirectUriMismatch(TestbedError):
    pass


class BadCredentials(TestbedError):
    pass


class InvalidCode(TestbedError):
    pass


class ClientAuthFailed(TestbedError):
    pass


class InvalidToken(TestbedError):
    pass


# RP endpoints
class SignInRejected(TestbedError):
    pass


class MissingField(SignInRejected):
    pass


class StateMismatch(SignInRejected):
    pass


# browser
class RedirectLoop(TestbedError):
    pass


class XssBlocked(TestbedError):
    pass


class NoAutoGrant(TestbedError):
    pass


# attacks / scanner / cli
class StaleCode(TestbedError):
    pass


class ScenarioSetupFailed(TestbedError):
    pass


class Unclassifiable(TestbedError):
    pass


class MalformedTrace(TestbedError):
    pass


class ManifestError(TestbedError):
    pass

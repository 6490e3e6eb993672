"""Exception hierarchy shared across the package."""


class WebRecallError(Exception):
    """Base class for every error raised by this package."""


class InvalidTrajectory(WebRecallError, ValueError):
    pass


class SchemaError(WebRecallError, ValueError):
    """A file or request does not match its expected schema."""


class VersionMismatch(SchemaError):
    """A file declares a schema version this build cannot read."""


class DanglingLocator(SchemaError):
    pass


class UnreachablePage(SchemaError):
    pass


class NoSuchElement(WebRecallError, LookupError):
    pass


class EpisodeFinished(WebRecallError, RuntimeError):
    pass


class UnknownNode(WebRecallError, KeyError):
    pass


class BrokenChain(WebRecallError, RuntimeError):
    """A node's diff chain references an ancestor that is no longer stored."""


class NoRoot(WebRecallError, LookupError):
    pass


class NotVisited(WebRecallError, LookupError):
    pass


class OracleError(WebRecallError):
    pass


class OracleUnavailable(OracleError):
    pass


class MalformedVerdict(OracleError, ValueError):
    pass


class IndexOutOfRange(MalformedVerdict):
    pass


class OracleBudgetExceeded(OracleError):
    pass


class TaskSetMismatch(WebRecallError, ValueError):
    pass


class ConfigError(WebRecallError, ValueError):
    pass

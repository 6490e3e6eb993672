"""One interface for every language-model judgment the system needs.

A handle answers :class:`OracleRequest` objects with :class:`OracleVerdict`
objects. Requests and verdicts are checked at the boundary so callers never
see a verdict of the wrong shape.
"""

from __future__ import annotations

import enum
import string
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Sequence

from ..core import FailureLabel, Query
from ..errors import IndexOutOfRange, MalformedVerdict, OracleBudgetExceeded, SchemaError

PROMPT_VERSION = "v1"


class Role(str, enum.Enum):
    HEURISTIC = "heuristic"
    RELEVANCE = "relevance"
    RANK_PATHS = "rank_paths"
    CLASSIFY_ERROR = "classify_error"
    LOCATE_FIRST_ERROR = "locate_first_error"
    REFLECT = "reflect"
    UPDATE_DECISION = "update_decision"


class UpdateChoice(str, enum.Enum):
    KEEP_OLD = "keep_old"
    TAKE_NEW = "take_new"


REQUIRED_CONTEXT: dict[Role, tuple[str, ...]] = {
    Role.HEURISTIC: ("page",),
    Role.RELEVANCE: ("page",),
    Role.RANK_PATHS: ("candidates",),
    Role.CLASSIFY_ERROR: ("trajectory",),
    Role.LOCATE_FIRST_ERROR: ("trajectory", "horizon"),
    Role.REFLECT: ("trajectory", "error_index"),
    Role.UPDATE_DECISION: ("old", "new", "old_validated", "new_validated", "old_length", "new_length"),
}

# JSON schema of the ``result`` field a remote endpoint must return, per role.
RESULT_SCHEMAS: dict[Role, dict[str, Any]] = {
    Role.HEURISTIC: {"type": "number", "minimum": 0, "maximum": 1},
    Role.RELEVANCE: {"type": "boolean"},
    Role.RANK_PATHS: {"type": "array", "items": {"type": "integer", "minimum": 0}},
    Role.CLASSIFY_ERROR: {"enum": [FailureLabel.NAVIGATION.value, FailureLabel.EXECUTION.value]},
    Role.LOCATE_FIRST_ERROR: {"type": "integer", "minimum": 1},
    Role.REFLECT: {"type": "string", "minLength": 1},
    Role.UPDATE_DECISION: {"enum": [UpdateChoice.KEEP_OLD.value, UpdateChoice.TAKE_NEW.value]},
}


@dataclass(frozen=True, eq=True)
class OracleRequest:
    role: Role
    query: Query
    context: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))

    def check(self) -> None:
        missing = [k for k in REQUIRED_CONTEXT[self.role] if k not in self.context]
        if missing:
            raise SchemaError(f"{self.role.value} request lacks context fields {missing}")
        if self.role is Role.RANK_PATHS and not isinstance(self.context["candidates"], (list, tuple)):
            raise SchemaError("rank_paths candidates must be a list")


@dataclass(frozen=True)
class OracleVerdict:
    role: Role
    value: Any


def check_verdict(req: OracleRequest, value: Any) -> Any:
    """Return ``value`` coerced to the role's result type, or raise MalformedVerdict."""
    role = req.role
    if role is Role.HEURISTIC:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
            raise MalformedVerdict(f"heuristic promise must lie in [0, 1], got {value!r}")
        return float(value)
    if role is Role.RELEVANCE:
        if not isinstance(value, bool):
            raise MalformedVerdict(f"relevance must be boolean, got {value!r}")
        return value
    if role is Role.RANK_PATHS:
        n = len(req.context["candidates"])
        if not isinstance(value, (list, tuple)) or sorted(value) != list(range(n)):
            raise MalformedVerdict(f"ranking must be a permutation of 0..{n - 1}, got {value!r}")
        return [int(v) for v in value]
    if role is Role.CLASSIFY_ERROR:
        try:
            label = FailureLabel(value)
        except ValueError:
            raise MalformedVerdict(f"unknown failure label {value!r}") from None
        if label is FailureLabel.SUCCESS:
            raise MalformedVerdict("error classification cannot return success")
        return label
    if role is Role.LOCATE_FIRST_ERROR:
        if isinstance(value, bool) or not isinstance(value, int):
            raise MalformedVerdict(f"first-error index must be an integer, got {value!r}")
        if not 1 <= value <= int(req.context["horizon"]):
            raise IndexOutOfRange(f"first-error index {value} outside 1..{req.context['horizon']}")
        return value
    if role is Role.REFLECT:
        if not isinstance(value, str) or not value.strip():
            raise MalformedVerdict("reflection must be non-empty text")
        return value
    try:
        return UpdateChoice(value)
    except ValueError:
        raise MalformedVerdict(f"unknown update decision {value!r}") from None


class OracleHandle:
    """Base class: subclasses implement :meth:`_answer` returning a raw result."""

    def __init__(self) -> None:
        self.calls = 0

    def _answer(self, req: OracleRequest) -> Any:
        raise NotImplementedError

    def judge(self, req: OracleRequest) -> OracleVerdict:
        req.check()
        self.calls += 1
        return OracleVerdict(req.role, check_verdict(req, self._answer(req)))


def judge(handle: OracleHandle, req: OracleRequest) -> OracleVerdict:
    return handle.judge(req)


class BudgetedOracle(OracleHandle):
    """Wraps a handle and aborts once more than ``max_calls`` are made since the last reset."""

    def __init__(self, inner: OracleHandle, max_calls: int) -> None:
        super().__init__()
        self.inner = inner
        self.max_calls = max_calls
        self._lock = threading.Lock()

    def reset(self) -> None:
        with self._lock:
            self.calls = 0

    def judge(self, req: OracleRequest) -> OracleVerdict:
        with self._lock:
            if self.calls >= self.max_calls:
                raise OracleBudgetExceeded(f"more than {self.max_calls} oracle calls in one episode")
            self.calls += 1
        return self.inner.judge(req)


# ---------------------------------------------------------------------------
# Prompt rendering


def _template(role: Role) -> string.Template:
    name = f"{role.value}.{PROMPT_VERSION}.txt"
    text = resources.files(__package__).joinpath("prompts", name).read_text(encoding="utf-8")
    return string.Template(text)


def _numbered(items: Sequence[str]) -> str:
    return "\n\n".join(f"[{i}]\n{item}" for i, item in enumerate(items))


def render_context(req: OracleRequest) -> str:
    """Deterministic prompt text for ``req``; absent context fields stay as placeholders."""
    fields: dict[str, Any] = {"query": req.query.text, "site": req.query.site}
    for key, value in req.context.items():
        if key == "candidates":
            value = _numbered([str(c) for c in value])
        elif isinstance(value, bool):
            value = "yes" if value else "no"
        fields[key] = value
    return _template(req.role).safe_substitute(fields)


# ---------------------------------------------------------------------------
# Convenience calls used by the navigator, reflector and memory


def heuristic_promise(oracle: OracleHandle, query: Query, page: str) -> float:
    return oracle.judge(OracleRequest(Role.HEURISTIC, query, {"page": page})).value


def is_relevant(oracle: OracleHandle, query: Query, page: str) -> bool:
    return oracle.judge(OracleRequest(Role.RELEVANCE, query, {"page": page})).value


def rank_paths(oracle: OracleHandle, query: Query, candidates: Sequence[str]) -> list[int]:
    return oracle.judge(OracleRequest(Role.RANK_PATHS, query, {"candidates": list(candidates)})).value


__all__ = [
    "BudgetedOracle",
    "OracleHandle",
    "OracleRequest",
    "OracleVerdict",
    "REQUIRED_CONTEXT",
    "RESULT_SCHEMAS",
    "Role",
    "UpdateChoice",
    "check_verdict",
    "heuristic_promise",
    "is_relevant",
    "judge",
    "rank_paths",
    "render_context",
]

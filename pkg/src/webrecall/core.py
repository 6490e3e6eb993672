"""Domain vocabulary: queries, actions, observations, trajectories, failure labels.

Pages are handled in a canonical text form: one header line ``page: <locator>``
followed by one JSON-array line per element, sorted. Observations store only
the line-level difference to their predecessor; roots additionally cache the
full normalized text.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .errors import InvalidTrajectory, SchemaError

PAGE_HEADER = "page: "
ERROR_SUFFIX = "#error"

# Attribute names dropped before hashing; they change between identical page loads.
VOLATILE_ATTRS = frozenset(
    {"timestamp", "ts", "session", "session_id", "sessionid", "csrf", "csrf_token", "nonce", "request_id"}
)

_WS = re.compile(r"\s+")


class ActionKind(str, enum.Enum):
    CLICK = "click"
    TYPE = "type"
    STOP = "stop"


_KIND_ORDER = {ActionKind.CLICK: 0, ActionKind.TYPE: 1, ActionKind.STOP: 2}


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    site: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"id": self.id, "text": self.text, "site": self.site}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Query":
        return cls(id=str(d["id"]), text=str(d["text"]), site=str(d["site"]))


@dataclass(frozen=True)
class Action:
    """A typed interaction. ``target`` is an element id; ``payload`` is typed text or the final answer."""

    kind: ActionKind
    target: str = ""
    payload: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActionKind(self.kind))
        if self.kind is ActionKind.CLICK:
            if not self.target or self.payload:
                raise ValueError("click needs a target and no payload")
        elif self.kind is ActionKind.TYPE:
            if not self.target or not self.payload:
                raise ValueError("type needs a target and a payload")
        elif self.target:
            raise ValueError("stop has no target")

    @classmethod
    def click(cls, target: str) -> "Action":
        return cls(ActionKind.CLICK, target)

    @classmethod
    def type(cls, target: str, text: str) -> "Action":
        return cls(ActionKind.TYPE, target, text)

    @classmethod
    def stop(cls, answer: str = "") -> "Action":
        return cls(ActionKind.STOP, "", answer)

    def sort_key(self) -> tuple[int, str, str]:
        return (_KIND_ORDER[self.kind], self.target, self.payload)

    def render(self) -> str:
        if self.kind is ActionKind.CLICK:
            return f"Click [{self.target}]"
        if self.kind is ActionKind.TYPE:
            return f"Type [{self.target}] '{self.payload}'"
        return f"Stop action: {self.payload}"

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value, "target": self.target, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Action":
        return cls(ActionKind(d["kind"]), d.get("target", ""), d.get("payload", ""))


@dataclass(frozen=True)
class Element:
    id: str
    role: str
    text: str = ""
    attrs: tuple[tuple[str, str], ...] = ()

    def line(self) -> str:
        attrs = {k: v for k, v in self.attrs if k.lower() not in VOLATILE_ATTRS}
        text = _WS.sub(" ", self.text).strip()
        row: list[Any] = [self.id, self.role, text]
        if attrs:
            row.append(dict(sorted(attrs.items())))
        return json.dumps(row, ensure_ascii=False, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "Element":
        row = json.loads(line)
        attrs = tuple(sorted(row[3].items())) if len(row) > 3 else ()
        return cls(row[0], row[1], row[2], attrs)


def normalize_page(locator: str, elements: Iterable[Element]) -> str:
    """Canonical page text: volatile attributes dropped, whitespace collapsed, elements sorted."""
    lines = sorted({e.line() for e in elements})
    return "\n".join([PAGE_HEADER + locator, *lines])


def parse_page(text: str) -> tuple[str, list[Element]]:
    header, *rest = text.split("\n")
    if not header.startswith(PAGE_HEADER):
        raise SchemaError(f"not a normalized page: {header[:40]!r}")
    return header[len(PAGE_HEADER):], [Element.from_line(line) for line in rest if line]


def observation_hash(normalized_state: str) -> str:
    """SHA-256 hex digest of the UTF-8 normalized page text."""
    return hashlib.sha256(normalized_state.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Diff:
    removed: tuple[str, ...] = ()
    added: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not self.removed and not self.added

    def to_dict(self) -> dict[str, list[str]]:
        return {"removed": list(self.removed), "added": list(self.added)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Diff":
        return cls(tuple(d.get("removed", ())), tuple(d.get("added", ())))


def _split(text: str) -> set[str]:
    return {line for line in text.split("\n") if line} if text else set()


def compute_diff(old: str | None, new: str) -> Diff:
    before = _split(old) if old is not None else set()
    after = _split(new)
    return Diff(tuple(sorted(before - after)), tuple(sorted(after - before)))


def apply_diff(text: str, diff: Diff) -> str:
    lines = (_split(text) - set(diff.removed)) | set(diff.added)
    headers = [line for line in lines if line.startswith(PAGE_HEADER)]
    if len(headers) != 1:
        raise SchemaError("diff application produced a page without a single header line")
    body = sorted(lines - set(headers))
    return "\n".join([headers[0], *body])


def apply_diffs(text: str, diffs: Iterable[Diff]) -> str:
    for d in diffs:
        text = apply_diff(text, d)
    return text


@dataclass(frozen=True)
class Observation:
    obs_id: str
    diff: Diff
    locator: str
    full_state_cached: str | None = None

    @classmethod
    def from_state(cls, state: str, previous: str | None = None, *, root: bool = False) -> "Observation":
        locator = state.split("\n", 1)[0][len(PAGE_HEADER):]
        return cls(
            obs_id=observation_hash(state),
            diff=compute_diff(previous, state),
            locator=locator,
            full_state_cached=state if root else None,
        )

    @property
    def is_error(self) -> bool:
        return self.locator.endswith(ERROR_SUFFIX)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"obs_id": self.obs_id, "locator": self.locator, "diff": self.diff.to_dict()}
        if self.full_state_cached is not None:
            d["full_state"] = self.full_state_cached
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Observation":
        return cls(d["obs_id"], Diff.from_dict(d["diff"]), d["locator"], d.get("full_state"))


@dataclass(frozen=True)
class Step:
    action: Action
    observation: Observation

    def to_dict(self) -> dict[str, Any]:
        return {"action": self.action.to_dict(), "observation": self.observation.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Step":
        return cls(Action.from_dict(d["action"]), Observation.from_dict(d["observation"]))


@dataclass(frozen=True)
class Trajectory:
    """Actions a_1..a_H with the observation after each; ``start`` is o_0."""

    query_id: str
    start: Observation
    steps: tuple[Step, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(s.action for s in self.steps)

    @property
    def observations(self) -> tuple[Observation, ...]:
        return (self.start, *(s.observation for s in self.steps))

    def observation_ids(self) -> frozenset[str]:
        return frozenset(o.obs_id for o in self.observations)

    def prefix(self, n: int) -> "Trajectory":
        return Trajectory(self.query_id, self.start, self.steps[:n])

    def final_answer(self) -> str | None:
        if self.steps and self.steps[-1].action.kind is ActionKind.STOP:
            return self.steps[-1].action.payload
        return None

    def render(self) -> str:
        lines = [f"start [page {self.start.locator}]"]
        for i, s in enumerate(self.steps, 1):
            lines.append(f"{i}. {s.action.render()} -> [page {s.observation.locator}]")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "start": self.start.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Trajectory":
        return cls(d["query_id"], Observation.from_dict(d["start"]), tuple(Step.from_dict(s) for s in d["steps"]))


class FailureLabel(str, enum.Enum):
    SUCCESS = "success"
    NAVIGATION = "navigation_failure"
    EXECUTION = "execution_failure"


def classify_by_ground_truth(traj: Trajectory, key_obs: Iterable[str], solved: bool) -> FailureLabel:
    """Label an episode from the simulator's key observations.

    Navigation failure when some key observation was never seen; execution
    failure when all were seen and the task still failed. The start page
    counts as seen.
    """
    key = frozenset(key_obs)
    if not key:
        raise ValueError("key observation set must be non-empty")
    if traj.horizon == 0:
        raise InvalidTrajectory("cannot classify an empty trajectory")
    if solved:
        return FailureLabel.SUCCESS
    if traj.observation_ids() & key != key:
        return FailureLabel.NAVIGATION
    return FailureLabel.EXECUTION


def action_sequence_key(actions: Sequence[Action]) -> tuple[tuple[int, str, str], ...]:
    return tuple(a.sort_key() for a in actions)

"""Agent policies: the decision rule used inside an episode.

A policy is a factory of per-episode actors. ``policy.begin(query, demos)``
returns an actor whose ``act(page, obs_id)`` picks the next action from the
normalized page text. Actors may keep episode-local state; policies must
not keep anything across episodes.
"""

from __future__ import annotations

import enum
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

from .core import Action, ActionKind, Element, Query, parse_page
from .memory import MemoryEntry

log = logging.getLogger(__name__)

HOME_TEXT = "Home"
CLICKABLE = ("link", "button")
_WORD = re.compile(r"[a-z0-9]+")
_QUOTED = re.compile(r"'([^'\n]+)'")

STOPWORDS = frozenset(
    "a an and are as at be by for from give has have in is it its of on or per "
    "that the this to was what when where which who whose with".split()
)


class PolicyKind(str, enum.Enum):
    SCRIPTED = "scripted"
    ORACLE_DRIVEN = "oracle_driven"


def stem(token: str) -> str:
    """Crude plural folding, enough for list headings such as ``Orders`` vs ``order``."""
    if len(token) > 3 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def content_stems(text: str) -> set[str]:
    return {stem(t) for t in _WORD.findall(text.lower()) if t not in STOPWORDS}


def render_demonstrations(demos: Sequence[MemoryEntry]) -> str:
    """Demonstrations as prompt text: query, numbered actions, rationale."""
    return "\n\n".join(f"Demonstration {i}:\n{d.render()}" for i, d in enumerate(demos, 1))


class Actor(Protocol):
    def act(self, page: str, obs_id: str) -> Action: ...


class Policy(Protocol):
    kind: PolicyKind

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> Actor: ...


# ---------------------------------------------------------------------------
# Scripted greedy policy


@dataclass
class _GreedyActor:
    query: Query
    demos: Sequence[MemoryEntry]
    follow_demos: bool = True
    taken: set[tuple[str, Action]] = field(default_factory=set)
    clicked_hints: set[str] = field(default_factory=set)
    last_hint_from_answer_page: bool = False

    def __post_init__(self) -> None:
        self.query_stems = content_stems(self.query.text)
        self.hints: list[str] = []
        for d in self.demos:
            for h in _QUOTED.findall(d.value.rationale):
                if h not in self.hints:
                    self.hints.append(h)

    def _take(self, obs_id: str, action: Action, hint: bool = False, on_answer_page: bool = False) -> Action:
        self.taken.add((obs_id, action))
        self.last_hint_from_answer_page = hint and on_answer_page
        return action

    def _from_demo(self, obs_id: str) -> Action | None:
        for d in self.demos:
            traj = d.value.trajectory
            obs = [o.obs_id for o in traj.observations]
            # the last occurrence skips any detour the demonstration took
            for j in range(traj.horizon - 1, -1, -1):
                if obs[j] != obs_id:
                    continue
                step = traj.steps[j]
                action = step.action
                if action.kind is ActionKind.STOP and d.query.text != self.query.text:
                    break
                if step.observation.is_error or (obs_id, action) in self.taken:
                    break
                return action
        return None

    def _is_answer_page(self, obs_id: str, elements: list[Element]) -> bool:
        if not any(e.role == "row" for e in elements):
            return False
        if self.last_hint_from_answer_page:
            return True
        for d in self.demos:
            # only a demonstration of this very task says where to answer
            if d.query.text == self.query.text and d.value.trajectory.observations[-1].obs_id == obs_id:
                return True
        headings = [e for e in elements if e.role == "heading"]
        return any(content_stems(h.text) and content_stems(h.text) <= self.query_stems for h in headings)

    def act(self, page: str, obs_id: str) -> Action:
        _, elements = parse_page(page)
        if self.follow_demos:
            demo_action = self._from_demo(obs_id)
            if demo_action is not None:
                return self._take(obs_id, demo_action)
        if self._is_answer_page(obs_id, elements):
            for e in elements:
                if e.role == "button" and e.text in self.hints and e.text not in self.clicked_hints:
                    self.clicked_hints.add(e.text)
                    return self._take(obs_id, Action.click(e.id), hint=True, on_answer_page=True)
            row = next(e for e in elements if e.role == "row")
            return self._take(obs_id, Action.stop(row.text.split(" | ")[0].strip()))
        best: tuple[int, Element] | None = None
        home: Element | None = None
        for e in elements:
            if e.role not in CLICKABLE:
                continue
            if e.text == HOME_TEXT:
                home = home or e
                continue
            if (obs_id, Action.click(e.id)) in self.taken:
                continue
            score = len(content_stems(e.text) & self.query_stems)
            if score > 0 and (best is None or score > best[0]):
                best = (score, e)
        if best is not None:
            return self._take(obs_id, Action.click(best[1].id))
        if home is not None and (obs_id, Action.click(home.id)) not in self.taken:
            return self._take(obs_id, Action.click(home.id))
        return self._take(obs_id, Action.stop(""))


@dataclass(frozen=True)
class ScriptedPolicy:
    """Imperfect greedy agent that can follow retrieved demonstrations.

    Without demonstrations it clicks the link sharing the most content words
    with the query, returns home from dead ends, and answers with the first
    table row of the first page whose heading matches the query. With
    demonstrations it first replays the demonstrated action for the current
    page (taking the latest occurrence so detours are skipped), treats the
    final page of a demonstration of the same query as the answer page, and
    clicks any button whose label a rationale quotes before answering.
    """

    follow_demos: bool = True
    kind: PolicyKind = PolicyKind.SCRIPTED

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> _GreedyActor:
        return _GreedyActor(query, tuple(demos) if self.follow_demos else (), self.follow_demos)


# ---------------------------------------------------------------------------
# Simple policies for tests and comparators


@dataclass
class _ReplayActor:
    actions: Sequence[Action]
    i: int = 0

    def act(self, page: str, obs_id: str) -> Action:
        if self.i >= len(self.actions):
            return Action.stop("")
        a = self.actions[self.i]
        self.i += 1
        return a


@dataclass(frozen=True)
class ReplayPolicy:
    """Plays a fixed action script, then stops with an empty answer."""

    actions: tuple[Action, ...]
    kind: PolicyKind = PolicyKind.SCRIPTED

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> _ReplayActor:
        return _ReplayActor(self.actions)


@dataclass(frozen=True)
class DemoReplayPolicy:
    """Replays the top demonstration's actions verbatim (stops early if there is none)."""

    kind: PolicyKind = PolicyKind.SCRIPTED

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> _ReplayActor:
        return _ReplayActor(demos[0].value.trajectory.actions if demos else ())


@dataclass
class _WanderActor:
    rng: random.Random
    stop_probability: float

    def act(self, page: str, obs_id: str) -> Action:
        _, elements = parse_page(page)
        clickable = [e for e in elements if e.role in CLICKABLE]
        if not clickable or self.rng.random() < self.stop_probability:
            return Action.stop("")
        return Action.click(self.rng.choice(clickable).id)


@dataclass(frozen=True)
class RandomWalkPolicy:
    """Naive wanderer: clicks a uniformly random clickable element.

    The generator is seeded from ``(seed, query id)`` so episodes do not
    depend on scheduling order.
    """

    seed: int = 0
    stop_probability: float = 0.0
    kind: PolicyKind = PolicyKind.SCRIPTED

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> _WanderActor:
        return _WanderActor(random.Random(f"{self.seed}:{query.id}"), self.stop_probability)


# ---------------------------------------------------------------------------
# Language-model policy

ACT_SCHEMA: dict[str, Any] = {"type": "string", "minLength": 1}
_ACTION_RE = re.compile(r"^\s*(?:(click)\s*\[([^\]]+)\]|(type)\s*\[([^\]]+)\]\s*'(.*)'|(stop)(?:\s+action)?\s*:?\s*(.*))\s*$", re.I | re.S)

ACT_PROMPT = """You are operating a website to complete a task.

Task: {query}

{demos}
Current page (one element per line: [id, role, text, attrs]):
{page}

Reply with exactly one action:
  Click [element id]
  Type [element id] 'text'
  Stop action: <final answer>
"""


def parse_action(text: str) -> Action:
    m = _ACTION_RE.match(text)
    if not m:
        raise ValueError(f"not an action: {text!r}")
    if m.group(1):
        return Action.click(m.group(2).strip())
    if m.group(3):
        return Action.type(m.group(4).strip(), m.group(5))
    return Action.stop(m.group(7).strip())


@dataclass
class _RemoteActor:
    client: Any
    endpoint: str
    query: Query
    demo_text: str
    headers: dict[str, str]

    def act(self, page: str, obs_id: str) -> Action:
        demos = f"Demonstrations:\n{self.demo_text}\n" if self.demo_text else ""
        prompt = ACT_PROMPT.format(query=self.query.text, demos=demos, page=page)
        resp = self.client.post(self.endpoint, json={"role": "act", "prompt": prompt, "schema": ACT_SCHEMA}, headers=self.headers)
        resp.raise_for_status()
        raw = resp.json().get("result", "")
        try:
            return parse_action(str(raw))
        except ValueError:
            log.warning("unparseable action %r; stopping the episode", raw)
            return Action.stop("")


class RemotePolicy:
    """Language-model agent reached over HTTP (same wire format as the remote oracle)."""

    kind = PolicyKind.ORACLE_DRIVEN

    def __init__(self, endpoint: str, token_env: str = "WEBRECALL_ORACLE_TOKEN", client: Any = None) -> None:
        import os

        import httpx

        self.endpoint = endpoint
        self.client = client or httpx.Client(timeout=60.0)
        token = os.environ.get(token_env)
        self.headers = {"Authorization": f"Bearer {token}"} if token else {}

    def begin(self, query: Query, demos: Sequence[MemoryEntry]) -> _RemoteActor:
        return _RemoteActor(self.client, self.endpoint, query, render_demonstrations(demos), self.headers)

"""Deterministic multi-site web environment with tasks and validators.

Worlds are loaded from a JSON document (``schema: 1``) with top-level keys
``sites`` and ``tasks``. Every page has fixed content, so each locator maps to
exactly one observation id; state changes such as sorting or filtering are
separate pages reached by an affordance.
"""

from __future__ import annotations

import enum
import json
import re
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

from .core import (
    ERROR_SUFFIX,
    Action,
    ActionKind,
    Element,
    Observation,
    Query,
    Step,
    Trajectory,
    normalize_page,
    observation_hash,
)
from .errors import DanglingLocator, EpisodeFinished, SchemaError, UnreachablePage, VersionMismatch

DEFAULT_HORIZON = 30
WILDCARD = "*"

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

WORLD_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "sites", "tasks"],
    "properties": {
        "schema": {"type": "integer"},
        "world_id": {"type": "string"},
        "sites": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["site_id", "root", "pages"],
                "properties": {
                    "site_id": {"type": "string", "minLength": 1},
                    "root": {"type": "string"},
                    "pages": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["locator", "elements"],
                            "properties": {
                                "locator": {"type": "string", "minLength": 1},
                                "elements": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["id", "role"],
                                        "properties": {
                                            "id": {"type": "string", "minLength": 1},
                                            "role": {"type": "string"},
                                            "text": {"type": "string"},
                                            "attrs": {"type": "object", "additionalProperties": {"type": "string"}},
                                        },
                                    },
                                },
                                "affordances": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["action_kind", "element_id"],
                                        "properties": {
                                            "action_kind": {"enum": ["click", "type"]},
                                            "element_id": {"type": "string"},
                                            "dest": {"type": "string"},
                                            "mutation": {"type": "object", "additionalProperties": {"type": "string"}},
                                        },
                                        "oneOf": [{"required": ["dest"]}, {"required": ["mutation"]}],
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["query", "key_obs", "validator"],
                "properties": {
                    "query": {
                        "type": "object",
                        "required": ["id", "text", "site"],
                        "properties": {
                            "id": {"type": "string"},
                            "text": {"type": "string", "minLength": 1},
                            "site": {"type": "string"},
                        },
                    },
                    "key_obs": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    "validator": {
                        "type": "object",
                        "required": ["kind", "expected"],
                        "properties": {
                            "kind": {"enum": ["answer_equals", "answer_contains", "state_reached"]},
                            "expected": {"type": "string"},
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Affordance:
    action_kind: ActionKind
    element_id: str
    dest: str | None = None
    mutation: tuple[tuple[str, str], ...] = ()

    def destinations(self) -> list[str]:
        if self.dest is not None:
            return [self.dest]
        return [d for _, d in self.mutation]

    def resolve(self, payload: str) -> str | None:
        if self.dest is not None:
            return self.dest
        table = dict(self.mutation)
        return table.get(payload, table.get(WILDCARD))


@dataclass(frozen=True)
class PageSpec:
    locator: str
    elements: tuple[Element, ...]
    affordances: tuple[Affordance, ...] = ()

    @cached_property
    def state(self) -> str:
        return normalize_page(self.locator, self.elements)

    @cached_property
    def obs_id(self) -> str:
        return observation_hash(self.state)

    def element(self, element_id: str) -> Element | None:
        for e in self.elements:
            if e.id == element_id:
                return e
        return None

    def affordance(self, kind: ActionKind, element_id: str) -> Affordance | None:
        for a in self.affordances:
            if a.action_kind is kind and a.element_id == element_id:
                return a
        return None


@dataclass(frozen=True)
class SiteGraph:
    site_id: str
    root: str
    pages: Mapping[str, PageSpec]

    def reachable(self, start: str | None = None) -> set[str]:
        seen = {start or self.root}
        todo = deque(seen)
        while todo:
            page = self.pages[todo.popleft()]
            for aff in page.affordances:
                for dest in aff.destinations():
                    if dest not in seen:
                        seen.add(dest)
                        todo.append(dest)
        return seen


class ValidatorKind(str, enum.Enum):
    ANSWER_EQUALS = "answer_equals"
    ANSWER_CONTAINS = "answer_contains"
    STATE_REACHED = "state_reached"


@dataclass(frozen=True)
class ValidatorSpec:
    kind: ValidatorKind
    expected: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ValidatorKind(self.kind))
        if not self.expected:
            raise ValueError("validator needs a non-empty expected value")


@dataclass(frozen=True)
class TaskSpec:
    query: Query
    key_obs: frozenset[str]
    validator: ValidatorSpec
    key_locators: tuple[str, ...] = ()

    @property
    def id(self) -> str:
        return self.query.id


@dataclass(frozen=True)
class World:
    world_id: str
    sites: Mapping[str, SiteGraph]
    tasks: tuple[TaskSpec, ...]

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def page_count(self) -> int:
        return sum(len(s.pages) for s in self.sites.values())

    def locator_of(self, obs_id: str) -> str | None:
        for site in self.sites.values():
            for page in site.pages.values():
                if page.obs_id == obs_id:
                    return page.locator
        return None


# ---------------------------------------------------------------------------
# Loading


def _parse_site(raw: Mapping[str, Any]) -> SiteGraph:
    pages: dict[str, PageSpec] = {}
    for p in raw["pages"]:
        elements = tuple(
            Element(e["id"], e["role"], e.get("text", ""), tuple(sorted(e.get("attrs", {}).items())))
            for e in p["elements"]
        )
        ids = [e.id for e in elements]
        if len(ids) != len(set(ids)):
            raise SchemaError(f"{p['locator']}: duplicate element ids")
        affs = []
        for a in p.get("affordances", []):
            if a["element_id"] not in ids:
                raise SchemaError(f"{p['locator']}: affordance on missing element {a['element_id']!r}")
            affs.append(
                Affordance(
                    ActionKind(a["action_kind"]),
                    a["element_id"],
                    a.get("dest"),
                    tuple(sorted(a.get("mutation", {}).items())),
                )
            )
        if p["locator"] in pages:
            raise SchemaError(f"duplicate locator {p['locator']!r}")
        pages[p["locator"]] = PageSpec(p["locator"], elements, tuple(affs))
    site = SiteGraph(raw["site_id"], raw["root"], pages)
    if site.root not in pages:
        raise DanglingLocator(f"site {site.site_id}: root {site.root!r} is not a page")
    for page in pages.values():
        for aff in page.affordances:
            for dest in aff.destinations():
                if dest not in pages:
                    raise DanglingLocator(f"{page.locator}: [{aff.element_id}] leads to unknown page {dest!r}")
    return site


def _resolve(site: SiteGraph, ref: str, reachable: set[str]) -> tuple[str, str]:
    """Map a locator (or raw observation id) to ``(obs_id, locator)``."""
    if ref in site.pages:
        if ref not in reachable:
            raise UnreachablePage(f"site {site.site_id}: task references unreachable page {ref!r}")
        return site.pages[ref].obs_id, ref
    if _HEX64.match(ref):
        for loc in reachable:
            if site.pages[loc].obs_id == ref:
                return ref, loc
        raise UnreachablePage(f"site {site.site_id}: observation {ref[:12]} is not reachable")
    raise DanglingLocator(f"site {site.site_id}: task references unknown page {ref!r}")


def parse_world(data: Mapping[str, Any], world_id: str = "world") -> World:
    try:
        jsonschema.validate(data, WORLD_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"world file: {exc.message}") from exc
    if data["schema"] != 1:
        raise VersionMismatch(f"world schema {data['schema']} is not supported")
    sites = {}
    for raw in data["sites"]:
        site = _parse_site(raw)
        if site.site_id in sites:
            raise SchemaError(f"duplicate site {site.site_id!r}")
        sites[site.site_id] = site
    reach = {sid: s.reachable() for sid, s in sites.items()}
    tasks = []
    seen_ids = set()
    for raw in data["tasks"]:
        query = Query.from_dict(raw["query"])
        if query.site not in sites:
            raise SchemaError(f"task {query.id}: unknown site {query.site!r}")
        if query.id in seen_ids:
            raise SchemaError(f"duplicate task id {query.id!r}")
        seen_ids.add(query.id)
        site = sites[query.site]
        resolved = [_resolve(site, ref, reach[site.site_id]) for ref in raw["key_obs"]]
        vkind = ValidatorKind(raw["validator"]["kind"])
        expected = raw["validator"]["expected"]
        if not expected:
            raise SchemaError(f"task {query.id}: validator needs a non-empty expected value")
        if vkind is ValidatorKind.STATE_REACHED:
            expected = _resolve(site, expected, reach[site.site_id])[0]
        tasks.append(
            TaskSpec(
                query=query,
                key_obs=frozenset(obs for obs, _ in resolved),
                validator=ValidatorSpec(vkind, expected),
                key_locators=tuple(sorted({loc for _, loc in resolved})),
            )
        )
    return World(data.get("world_id", world_id), sites, tuple(tasks))


def load_world(path: str | Path) -> World:
    """Load and validate a world file. The returned World exposes ``sites`` and ``tasks``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return parse_world(data, world_id=path.stem)


# ---------------------------------------------------------------------------
# Stepping


@dataclass(frozen=True)
class EnvState:
    site: SiteGraph = field(repr=False)
    locator: str
    text: str
    done: bool = False
    answer: str | None = None

    @property
    def page(self) -> PageSpec:
        return self.site.pages[self.locator]


def reset(site: SiteGraph) -> tuple[EnvState, Observation]:
    page = site.pages[site.root]
    return EnvState(site, page.locator, page.state), Observation.from_state(page.state, root=True)


def _error_state(page: PageSpec, message: str) -> str:
    alert = Element("__error__", "alert", message)
    return normalize_page(page.locator + ERROR_SUFFIX, (*page.elements, alert))


def step(state: EnvState, action: Action) -> tuple[EnvState, Observation]:
    """Apply one action. Bad targets yield an error observation on the same page."""
    if state.done:
        raise EpisodeFinished("episode already stopped")
    page = state.page
    if action.kind is ActionKind.STOP:
        new = replace(state, done=True, answer=action.payload)
        return new, Observation.from_state(state.text, state.text)
    dest: str | None = None
    error: str | None = None
    if page.element(action.target) is None:
        error = f"No such element: {action.target}"
    else:
        aff = page.affordance(action.kind, action.target)
        if aff is None:
            error = f"Element [{action.target}] does not accept {action.kind.value}"
        else:
            dest = aff.resolve(action.payload)
            if dest is None:
                error = f"Input '{action.payload}' had no effect on [{action.target}]"
    if error is not None:
        text = _error_state(page, error)
        return replace(state, text=text), Observation.from_state(text, state.text)
    target = state.site.pages[dest]
    return replace(state, locator=dest, text=target.state), Observation.from_state(target.state, state.text)


def replay(site: SiteGraph, actions: Sequence[Action], query_id: str = "") -> Trajectory:
    state, start = reset(site)
    steps = []
    for a in actions:
        state, obs = step(state, a)
        steps.append(Step(a, obs))
        if state.done:
            break
    return Trajectory(query_id, start, tuple(steps))


def _norm_answer(s: str) -> str:
    return " ".join(s.split()).casefold()


def validate(task: TaskSpec, traj: Trajectory) -> bool:
    v = task.validator
    if v.kind is ValidatorKind.STATE_REACHED:
        return v.expected in traj.observation_ids()
    answer = traj.final_answer()
    if answer is None:
        return False
    if v.kind is ValidatorKind.ANSWER_EQUALS:
        return _norm_answer(answer) == _norm_answer(v.expected)
    return _norm_answer(v.expected) in _norm_answer(answer)


# ---------------------------------------------------------------------------
# Fixture checks


def _answer_pages(site: SiteGraph, task: TaskSpec) -> set[str]:
    v = task.validator
    if v.kind is ValidatorKind.STATE_REACHED:
        return {loc for loc, p in site.pages.items() if p.obs_id == v.expected}
    want = _norm_answer(v.expected)
    found = set()
    for loc, page in site.pages.items():
        for e in page.elements:
            cells = [_norm_answer(c) for c in e.text.split(" | ")]
            if v.kind is ValidatorKind.ANSWER_EQUALS and want in cells:
                found.add(loc)
            if v.kind is ValidatorKind.ANSWER_CONTAINS and want in _norm_answer(e.text):
                found.add(loc)
    return found


def _moves(page: PageSpec) -> Iterable[tuple[Action, str]]:
    for aff in page.affordances:
        if aff.action_kind is ActionKind.CLICK:
            yield Action.click(aff.element_id), aff.dest  # type: ignore[misc]
        else:
            for payload, dest in aff.mutation:
                yield Action.type(aff.element_id, payload if payload != WILDCARD else "x"), dest


def find_solution(world: World, task: TaskSpec, horizon: int = DEFAULT_HORIZON) -> list[Action] | None:
    """Brute-force breadth-first search for a validating action sequence within ``horizon``."""
    site = world.sites[task.query.site]
    targets = _answer_pages(site, task)
    keys = task.key_obs
    obs_of = {loc: p.obs_id for loc, p in site.pages.items()}

    def seen_keys(loc: str, prior: frozenset[str]) -> frozenset[str]:
        return prior | ({obs_of[loc]} & keys)

    start = (site.root, seen_keys(site.root, frozenset()))
    parents: dict[tuple[str, frozenset[str]], tuple[Any, Action] | None] = {start: None}
    frontier = deque([(start, 0)])
    while frontier:
        node, depth = frontier.popleft()
        loc, got = node
        if got == keys and loc in targets and depth + 1 <= horizon:
            actions: list[Action] = []
            cur: Any = node
            while parents[cur] is not None:
                cur, a = parents[cur]
                actions.append(a)
            actions.reverse()
            if task.validator.kind is ValidatorKind.STATE_REACHED:
                return actions or [Action.stop("")]
            return [*actions, Action.stop(task.validator.expected)]
        if depth + 1 >= horizon:
            continue
        for action, dest in _moves(site.pages[loc]):
            nxt = (dest, seen_keys(dest, got))
            if nxt not in parents:
                parents[nxt] = (node, action)
                frontier.append((nxt, depth + 1))
    return None

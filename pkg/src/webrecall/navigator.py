"""Best-first (A*) search over the replay buffer for a route that answers a query.

The oracle scores each page with a promise ``p`` in [0, 1]; the search uses
``h = 1 - p`` so lower priority values are better. Two priority rules exist:

``standard``
    ``f = g + w * h`` with unit edge cost ``g`` (hop count from the root).
``cumulative``
    ``f(root) = h(root)`` and ``f(child) = f(parent) + h(child)``.

Ties are broken by lower depth, then by the lexicographic order of the
action sequence from the root.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Literal

from .buffer import BufferGraph
from .core import Action, Observation, Query, Step, Trajectory, action_sequence_key
from .errors import NotVisited
from .oracle import OracleHandle, heuristic_promise, is_relevant, rank_paths

log = logging.getLogger(__name__)

FMode = Literal["standard", "cumulative"]


@dataclass(frozen=True)
class SearchLimits:
    max_expansions: int = 500
    candidate_cap: int = 20
    f_mode: FMode = "standard"
    heuristic_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.f_mode not in ("standard", "cumulative"):
            raise ValueError(f"unknown f_mode {self.f_mode!r}")
        if self.max_expansions < 1 or self.candidate_cap < 1:
            raise ValueError("search limits must be positive")
        if self.heuristic_weight < 0:
            raise ValueError("heuristic weight must be non-negative")


@dataclass(frozen=True)
class SearchNodeScore:
    g: int
    h: float
    f: float


@dataclass(frozen=True)
class CandidatePath:
    terminal: str
    path: tuple[tuple[Action, str], ...]
    score: float
    locators: tuple[str, ...] = field(default=(), compare=False)

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a, _ in self.path)

    def __len__(self) -> int:
        return len(self.path)

    def sort_key(self) -> tuple:
        return (len(self.path), action_sequence_key(self.actions), self.terminal)

    def render(self) -> str:
        route = " -> ".join(a.render() for a in self.actions) or "(stay on the home page)"
        end = self.locators[-1] if self.locators else self.terminal[:12]
        return f"route: {route}\nends at: [page {end}]"


class AStarSearch:
    """One search over an (unchanging) buffer. Parent pointers live here, not in the buffer."""

    def __init__(self, buf: BufferGraph, query: Query, oracle: OracleHandle, limits: SearchLimits | None = None) -> None:
        self.buf = buf
        self.query = query
        self.oracle = oracle
        self.limits = limits or SearchLimits()
        self.scores: dict[str, SearchNodeScore] = {}
        self.parents: dict[str, tuple[str, Action] | None] = {}
        self.expanded: list[tuple[str, float]] = []
        self._h: dict[str, float] = {}
        self._keys: dict[str, tuple] = {}
        self._closed: set[str] = set()

    def heuristic(self, obs_id: str) -> float:
        if obs_id not in self._h:
            promise = heuristic_promise(self.oracle, self.query, self.buf.reconstruct_page(obs_id))
            self._h[obs_id] = 1.0 - promise
        return self._h[obs_id]

    def _priority(self, g: int, h: float, parent_f: float | None) -> float:
        if self.limits.f_mode == "standard":
            return g + self.limits.heuristic_weight * h
        return h if parent_f is None else parent_f + h

    def run(self) -> list[CandidatePath]:
        if not self.buf.nodes:
            return []
        root = self.buf.root_for(self.query.site)
        h0 = self.heuristic(root)
        f0 = self._priority(0, h0, None)
        self.scores[root] = SearchNodeScore(0, h0, f0)
        self.parents[root] = None
        self._keys[root] = ()
        counter = itertools.count()
        heap = [(f0, 0, (), next(counter), root)]
        candidates: list[str] = []
        limits = self.limits
        while heap and len(self.expanded) < limits.max_expansions:
            f, g, key, _, node = heapq.heappop(heap)
            if node in self._closed or (f, g, key) != self._best(node):
                continue
            self._closed.add(node)
            self.expanded.append((node, f))
            if is_relevant(self.oracle, self.query, self.buf.reconstruct_page(node)):
                candidates.append(node)
                if len(candidates) >= limits.candidate_cap:
                    break
            for action, dst in self.buf.neighbors(node):
                if dst in self._closed:
                    continue
                h = self.heuristic(dst)
                ng = g + 1
                nf = self._priority(ng, h, f)
                nkey = key + (action.sort_key(),)
                if dst not in self.scores or (nf, ng, nkey) < self._best(dst):
                    self.scores[dst] = SearchNodeScore(ng, h, nf)
                    self.parents[dst] = (node, action)
                    self._keys[dst] = nkey
                    heapq.heappush(heap, (nf, ng, nkey, next(counter), dst))
        log.debug("search for %s expanded %d nodes, %d candidates", self.query.id, len(self.expanded), len(candidates))
        return [self.backtrack(c) for c in candidates]

    def _best(self, node: str) -> tuple[float, int, tuple]:
        s = self.scores[node]
        return (s.f, s.g, self._keys[node])

    def backtrack(self, terminal: str) -> CandidatePath:
        """Root-to-terminal route following this search's parent pointers."""
        if terminal not in self._closed:
            raise NotVisited(f"{terminal[:12]} was not expanded in this search")
        path: list[tuple[Action, str]] = []
        cur = terminal
        while self.parents[cur] is not None:
            parent, action = self.parents[cur]  # type: ignore[misc]
            path.append((action, cur))
            cur = parent
        path.reverse()
        locators = (self.buf.node(cur).obs.locator, *(self.buf.node(o).obs.locator for _, o in path))
        return CandidatePath(terminal, tuple(path), self.scores[terminal].f, locators)


def astar_search(
    buf: BufferGraph, query: Query, oracle: OracleHandle, limits: SearchLimits | None = None
) -> list[CandidatePath]:
    """Candidates (relevant pages with their routes) in the order they were expanded."""
    return AStarSearch(buf, query, oracle, limits).run()


def rank_and_select(cands: list[CandidatePath], query: Query, oracle: OracleHandle) -> CandidatePath | None:
    """Ask the oracle to rank candidate routes and return the best one.

    Candidates are first put in canonical order (shorter, then lexicographically
    smaller action sequence), so an oracle that cannot separate two routes
    falls back to that order.
    """
    if not cands:
        return None
    ordered = sorted(cands, key=CandidatePath.sort_key)
    if len(ordered) == 1:
        return ordered[0]
    ranking = rank_paths(oracle, query, [c.render() for c in ordered])
    return ordered[ranking[0]]


def path_to_trajectory(buf: BufferGraph, query: Query, cand: CandidatePath) -> Trajectory:
    """Turn a buffer route into a trajectory with observations diffed along the route."""
    root_id = buf.root_for(query.site)
    root_text = buf.reconstruct_page(root_id)
    start = Observation.from_state(root_text, root=True)
    steps = []
    prev = root_text
    for action, obs_id in cand.path:
        text = buf.reconstruct_page(obs_id)
        steps.append(Step(action, Observation.from_state(text, prev)))
        prev = text
    return Trajectory(query.id, start, tuple(steps))


def repair_navigation(
    buf: BufferGraph,
    failed: Trajectory,
    query: Query,
    oracle: OracleHandle,
    limits: SearchLimits | None = None,
) -> Trajectory | None:
    """Search the buffer for a route to a relevant page; None when nothing relevant is stored."""
    if not buf.nodes or query.site not in buf.roots:
        return None
    best = rank_and_select(astar_search(buf, query, oracle, limits), query, oracle)
    if best is None:
        return None
    return path_to_trajectory(buf, query, best)

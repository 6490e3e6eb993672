"""Bounded directed graph of observed pages with action-labelled edges.

Each node keeps only the diff to its first-seen predecessor (``parent_hint``);
roots keep the full page. Pages are rebuilt by replaying diffs down the
``parent_hint`` chain. Nodes that other nodes use as ``parent_hint`` are never
evicted, so chains of surviving nodes stay intact.
"""

from __future__ import annotations

import copy
import logging
import threading
from collections import OrderedDict, defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import Action, ActionKind, Observation, Trajectory, apply_diffs
from .errors import BrokenChain, NoRoot, SchemaError, UnknownNode
from .records import read_records, write_records

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 10_000
EVICTION_POLICIES = ("lru", "lfu")


@dataclass
class BufferNode:
    obs: Observation
    parent_hint: str | None
    last_visit: int = 0
    visit_count: int = 0
    depth: int = 0


Edge = tuple[str, str, Action]


class BufferGraph:
    """The environment map built from every ingested episode.

    Args:
        capacity: Maximum node count before eviction kicks in.
        policy: ``"lru"`` (least recently visited) or ``"lfu"`` (least frequently).
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, policy: str = "lru") -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if policy not in EVICTION_POLICIES:
            raise ValueError(f"unknown eviction policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self.nodes: dict[str, BufferNode] = {}
        self.edges: set[Edge] = set()
        self.roots: dict[str, str] = {}  # site -> obs_id
        self.pinned: frozenset[str] = frozenset()
        self.visit_clock = 0
        self.warnings: list[str] = []
        self._out: dict[str, set[tuple[Action, str]]] = defaultdict(set)
        self._in: dict[str, set[tuple[str, Action]]] = defaultdict(set)
        self._hint_children: dict[str, int] = defaultdict(int)
        self._recency: OrderedDict[str, None] = OrderedDict()
        self._page_cache: dict[str, str] = {}
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # Queries

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, obs_id: object) -> bool:
        return obs_id in self.nodes

    @property
    def root_ids(self) -> frozenset[str]:
        return frozenset(self.roots.values())

    def root_for(self, site: str) -> str:
        try:
            return self.roots[site]
        except KeyError:
            raise NoRoot(f"no root recorded for site {site!r}") from None

    def node(self, obs_id: str) -> BufferNode:
        try:
            return self.nodes[obs_id]
        except KeyError:
            raise UnknownNode(obs_id) from None

    def neighbors(self, obs_id: str) -> list[tuple[Action, str]]:
        """Outgoing edges sorted by action kind, target, payload, then destination."""
        if obs_id not in self.nodes:
            raise UnknownNode(obs_id)
        return sorted(self._out.get(obs_id, ()), key=lambda e: (e[0].sort_key(), e[1]))

    def reconstruct_page(self, obs_id: str) -> str:
        cached = self._page_cache.get(obs_id)
        if cached is not None:
            return cached
        chain = []
        cur = self.node(obs_id)
        while cur.obs.full_state_cached is None:
            chain.append(cur.obs.diff)
            parent = cur.parent_hint
            if parent is None or parent not in self.nodes:
                raise BrokenChain(f"ancestor {parent!s:.12} of {obs_id:.12} is missing")
            cur = self.nodes[parent]
        text = apply_diffs(cur.obs.full_state_cached, reversed(chain))
        self._page_cache[obs_id] = text
        return text

    def snapshot(self) -> "BufferGraph":
        """Independent copy for readers; later writes to ``self`` do not affect it."""
        with self._lock:
            return copy.deepcopy(self)

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state: dict) -> None:
        self.__dict__.update(state)
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # Mutation

    def pin(self, obs_ids: Iterable[str]) -> None:
        """Replace the set of nodes protected from eviction."""
        with self._lock:
            self.pinned = frozenset(obs_ids)

    def _touch(self, obs_id: str) -> None:
        self.visit_clock += 1
        node = self.nodes[obs_id]
        node.last_visit = self.visit_clock
        node.visit_count += 1
        self._recency[obs_id] = None
        self._recency.move_to_end(obs_id)

    def _add_node(self, obs: Observation, parent: str | None, depth: int) -> None:
        self.nodes[obs.obs_id] = BufferNode(obs, parent, depth=depth)
        if parent is not None:
            self._hint_children[parent] += 1

    def _add_edge(self, src: str, dst: str, action: Action) -> None:
        edge = (src, dst, action)
        if edge in self.edges:
            return
        self.edges.add(edge)
        self._out[src].add((action, dst))
        self._in[dst].add((src, action))
        self._relax(src, dst)

    def _relax(self, src: str, dst: str) -> None:
        if self.nodes[src].depth + 1 >= self.nodes[dst].depth:
            return
        self.nodes[dst].depth = self.nodes[src].depth + 1
        todo = deque([dst])
        while todo:
            u = todo.popleft()
            for _, v in self._out.get(u, ()):
                if self.nodes[u].depth + 1 < self.nodes[v].depth:
                    self.nodes[v].depth = self.nodes[u].depth + 1
                    todo.append(v)

    def add_root(self, site: str, obs: Observation) -> None:
        if obs.full_state_cached is None:
            raise ValueError("a root observation must carry its full page state")
        with self._lock:
            if obs.obs_id not in self.nodes:
                self._add_node(obs, None, 0)
            else:
                node = self.nodes[obs.obs_id]
                if node.obs.full_state_cached is None:
                    # promote: the full state is now known, drop the diff chain
                    if node.parent_hint is not None:
                        self._hint_children[node.parent_hint] -= 1
                    node.obs, node.parent_hint = obs, None
                    self._page_cache.clear()
            self.roots[site] = obs.obs_id
            self._recompute_depths()
            self._recency.setdefault(obs.obs_id, None)

    def ingest_episode(self, traj: Trajectory, site: str) -> "BufferGraph":
        """Merge one episode's observations and transitions, then enforce capacity.

        Stop steps and steps that leave the page unchanged add no edge.
        """
        with self._lock:
            start = traj.start
            if start.obs_id not in self.nodes:
                if start.full_state_cached is None:
                    raise ValueError("trajectory does not start at a known page")
            if start.full_state_cached is not None and self.roots.get(site) != start.obs_id:
                self.add_root(site, start)
            self._touch(start.obs_id)
            prev = start.obs_id
            for s in traj.steps:
                obs = s.observation
                if s.action.kind is ActionKind.STOP or obs.obs_id == prev:
                    continue
                if obs.obs_id not in self.nodes:
                    self._add_node(obs, prev, self.nodes[prev].depth + 1)
                self._touch(obs.obs_id)
                self._add_edge(prev, obs.obs_id, s.action)
                prev = obs.obs_id
            self.evict()
            return self

    def _evictable(self, obs_id: str) -> bool:
        return (
            obs_id not in self.root_ids
            and obs_id not in self.pinned
            and self._hint_children.get(obs_id, 0) == 0
        )

    def _victim(self) -> str | None:
        if self.policy == "lru":
            for obs_id in self._recency:
                if self._evictable(obs_id):
                    return obs_id
            return None
        best = None
        for obs_id, n in self.nodes.items():
            if self._evictable(obs_id):
                key = (n.visit_count, n.last_visit, obs_id)
                if best is None or key < best[0]:
                    best = (key, obs_id)
        return best[1] if best else None

    def evict(self) -> "BufferGraph":
        """Drop lowest-priority evictable nodes until the capacity bound holds."""
        with self._lock:
            removed = False
            while len(self.nodes) > self.capacity:
                victim = self._victim()
                if victim is None:
                    msg = f"capacity {self.capacity} exceeded ({len(self.nodes)} nodes): remaining nodes are roots, pinned or chain ancestors"
                    if not self.warnings or self.warnings[-1] != msg:  # skip exact repeats
                        self.warnings.append(msg)
                        log.warning(msg)
                    break
                self._remove(victim)
                removed = True
            if removed:
                self._recompute_depths()
            return self

    def _remove(self, obs_id: str) -> None:
        node = self.nodes.pop(obs_id)
        if node.parent_hint is not None:
            self._hint_children[node.parent_hint] -= 1
        self._hint_children.pop(obs_id, None)
        for action, dst in self._out.pop(obs_id, set()):
            self.edges.discard((obs_id, dst, action))
            self._in[dst].discard((obs_id, action))
        for src, action in self._in.pop(obs_id, set()):
            self.edges.discard((src, obs_id, action))
            self._out[src].discard((action, obs_id))
        self._recency.pop(obs_id, None)
        self._page_cache.pop(obs_id, None)

    def _recompute_depths(self) -> None:
        depth = {r: 0 for r in self.root_ids if r in self.nodes}
        todo = deque(sorted(depth))
        while todo:
            u = todo.popleft()
            for _, v in self._out.get(u, ()):
                if v not in depth:
                    depth[v] = depth[u] + 1
                    todo.append(v)
        for obs_id, n in self.nodes.items():
            n.depth = depth.get(obs_id, n.depth)

    # ------------------------------------------------------------------
    # Comparison & persistence

    def structure(self) -> tuple[frozenset, frozenset, dict[str, int]]:
        return (
            frozenset(self.nodes),
            frozenset(self.edges),
            {k: n.depth for k, n in self.nodes.items()},
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BufferGraph):
            return NotImplemented
        return self.structure() == other.structure() and self.roots == other.roots

    __hash__ = None  # type: ignore[assignment]

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges, key=lambda e: (self.nodes[e[0]].depth, e[0], e[2].sort_key(), e[1]))

    def sorted_nodes(self) -> list[tuple[str, BufferNode]]:
        return sorted(self.nodes.items(), key=lambda kv: (kv[1].depth, kv[0]))

    def save(self, path: str | Path) -> None:
        with self._lock:
            recs: list[dict] = []
            for obs_id, n in self.sorted_nodes():
                recs.append(
                    {
                        "type": "node",
                        "obs": n.obs.to_dict(),
                        "parent_hint": n.parent_hint,
                        "depth": n.depth,
                        "visit_count": n.visit_count,
                        "last_visit": n.last_visit,
                    }
                )
            for src, dst, action in self.sorted_edges():
                recs.append({"type": "edge", "src": src, "dst": dst, "action": action.to_dict()})
            write_records(
                path,
                "buffer",
                recs,
                capacity=self.capacity,
                policy=self.policy,
                visit_clock=self.visit_clock,
                roots=dict(sorted(self.roots.items())),
                pinned=sorted(self.pinned),
            )

    @classmethod
    def load(cls, path: str | Path) -> "BufferGraph":
        header, recs = read_records(path, "buffer")
        try:
            buf = cls(capacity=int(header["capacity"]), policy=header["policy"])
            buf.visit_clock = int(header["visit_clock"])
            buf.roots = dict(header["roots"])
            buf.pinned = frozenset(header.get("pinned", ()))
            by_visit = []
            for r in recs:
                if r["type"] == "node":
                    obs = Observation.from_dict(r["obs"])
                    buf._add_node(obs, r["parent_hint"], int(r["depth"]))
                    node = buf.nodes[obs.obs_id]
                    node.visit_count, node.last_visit = int(r["visit_count"]), int(r["last_visit"])
                    by_visit.append((node.last_visit, obs.obs_id))
            for r in recs:
                if r["type"] == "edge":
                    edge = (r["src"], r["dst"], Action.from_dict(r["action"]))
                    if edge[0] not in buf.nodes or edge[1] not in buf.nodes:
                        raise SchemaError(f"{path}: edge references a missing node")
                    buf.edges.add(edge)
                    buf._out[edge[0]].add((edge[2], edge[1]))
                    buf._in[edge[1]].add((edge[0], edge[2]))
                elif r["type"] != "node":
                    raise SchemaError(f"{path}: unknown record type {r['type']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{path}: malformed buffer record: {exc}") from exc
        for _, obs_id in sorted(by_visit):
            buf._recency[obs_id] = None
        return buf

    def to_dot(self) -> str:
        lines = ["digraph buffer {"]
        for obs_id, n in self.sorted_nodes():
            label = f"{n.obs.locator}\\n{obs_id[:8]} d={n.depth}"
            shape = ' shape="box"' if obs_id in self.root_ids else ""
            lines.append(f'  "{obs_id}" [label="{_dot_escape(label)}"{shape}];')
        for src, dst, action in self.sorted_edges():
            lines.append(f'  "{src}" -> "{dst}" [label="{_dot_escape(action.render())}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace('"', '\\"')

"""Key-value reflective memory: query embeddings -> corrected trajectories with rationales.

Lookup is an exact cosine scan. Similarities are rounded to 12 decimals
before ranking so the order does not depend on floating-point summation
order; ties keep insertion order.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import FailureLabel, Query, Trajectory
from .errors import OracleUnavailable, SchemaError
from .oracle import OracleHandle, OracleRequest, Role, UpdateChoice
from .records import read_records, write_records

log = logging.getLogger(__name__)

DEFAULT_DIM = 256
DEDUP_THRESHOLD = 0.95
MIN_SIMILARITY = 0.30
SIM_DECIMALS = 12

_TOKEN = re.compile(r"[a-z0-9]+")


class EmbedMethod(str, enum.Enum):
    HASHED_BOW = "hashed_bow"
    REMOTE = "remote"


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


@dataclass(frozen=True)
class Embedder:
    dim: int = DEFAULT_DIM
    method: EmbedMethod = EmbedMethod.HASHED_BOW
    endpoint: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", EmbedMethod(self.method))
        if self.dim < 1:
            raise ValueError("embedding dimension must be positive")
        if self.method is EmbedMethod.REMOTE and not self.endpoint:
            raise ValueError("remote embedder needs an endpoint")

    def embed(self, text: str) -> np.ndarray:
        if self.method is EmbedMethod.REMOTE:
            vec = np.asarray(self._remote(text), dtype=np.float64)
            if vec.shape != (self.dim,):
                raise SchemaError(f"remote embedding has shape {vec.shape}, expected ({self.dim},)")
        else:
            vec = np.zeros(self.dim, dtype=np.float64)
            for tok in tokenize(text):
                vec[_bucket(tok, self.dim)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = np.zeros(self.dim, dtype=np.float64)
            vec[0] = 1.0
            return vec
        return vec / norm

    def _remote(self, text: str) -> list[float]:
        import httpx

        resp = httpx.post(self.endpoint, json={"role": "embed", "text": text}, timeout=30.0)  # type: ignore[arg-type]
        resp.raise_for_status()
        return resp.json()["result"]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"dim": self.dim, "method": self.method.value}
        if self.endpoint:
            d["endpoint"] = self.endpoint
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Embedder":
        return cls(int(d["dim"]), EmbedMethod(d["method"]), d.get("endpoint"))


def embed(embedder: Embedder, text: str) -> np.ndarray:
    return embedder.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


@dataclass(frozen=True)
class MemoryValue:
    trajectory: Trajectory
    rationale: str
    label_at_store: FailureLabel

    @property
    def validated(self) -> bool:
        return self.label_at_store is FailureLabel.SUCCESS

    def render(self) -> str:
        lines = [f"{i}. {a.render()}" for i, a in enumerate(self.trajectory.actions, 1)]
        body = "\n".join(lines) if lines else "(no actions)"
        return f"{body}\nRationale: {self.rationale or '-'}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "trajectory": self.trajectory.to_dict(),
            "rationale": self.rationale,
            "label": self.label_at_store.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MemoryValue":
        return cls(Trajectory.from_dict(d["trajectory"]), d["rationale"], FailureLabel(d["label"]))


@dataclass
class MemoryEntry:
    key_vec: np.ndarray = field(repr=False)
    query: Query
    value: MemoryValue
    version: int = 0

    @property
    def query_text(self) -> str:
        return self.query.text

    def render(self) -> str:
        return f"Query: {self.query.text}\n{self.value.render()}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": [float(x) for x in self.key_vec],
            "query": self.query.to_dict(),
            "value": self.value.to_dict(),
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MemoryEntry":
        return cls(
            np.asarray(d["key"], dtype=np.float64),
            Query.from_dict(d["query"]),
            MemoryValue.from_dict(d["value"]),
            int(d["version"]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryEntry):
            return NotImplemented
        return (
            self.key_vec.tobytes() == other.key_vec.tobytes()
            and self.query == other.query
            and self.value == other.value
            and self.version == other.version
        )


class UpdateOutcome(str, enum.Enum):
    INSERTED = "inserted"
    REPLACED = "replaced"
    KEPT = "kept"


class MemoryStore:
    """Reflective memory with exact cosine lookup.

    Args:
        embedder: Turns query text into unit key vectors.
        dedup_threshold: Similarity at or above which an update targets an existing entry.
        min_similarity: Lookup results below this similarity are dropped.
    """

    def __init__(
        self,
        embedder: Embedder | None = None,
        dedup_threshold: float = DEDUP_THRESHOLD,
        min_similarity: float = MIN_SIMILARITY,
    ) -> None:
        self.embedder = embedder or Embedder()
        self.dedup_threshold = dedup_threshold
        self.min_similarity = min_similarity
        self.entries: list[MemoryEntry] = []
        self._index: np.ndarray | None = None
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.embedder == other.embedder and self.entries == other.entries

    __hash__ = None  # type: ignore[assignment]

    def _matrix(self) -> np.ndarray:
        if self._index is None:
            if self.entries:
                self._index = np.vstack([e.key_vec for e in self.entries])
            else:
                self._index = np.zeros((0, self.embedder.dim))
        return self._index

    def _similarities(self, vec: np.ndarray) -> np.ndarray:
        return np.round(self._matrix() @ vec, SIM_DECIMALS)

    def insert(self, query: Query, value: MemoryValue) -> MemoryEntry:
        with self._lock:
            entry = MemoryEntry(self.embedder.embed(query.text), query, value)
            self.entries.append(entry)
            self._index = None
            return entry

    def lookup(
        self, query: Query, k: int = 1, site: str | None = None, min_similarity: float | None = None
    ) -> list[tuple[MemoryEntry, float]]:
        """Top-``k`` entries by cosine similarity, best first; optionally restricted to one site."""
        if k < 1:
            raise ValueError("k must be at least 1")
        floor = self.min_similarity if min_similarity is None else min_similarity
        with self._lock:
            if not self.entries:
                return []
            sims = self._similarities(self.embedder.embed(query.text))
            order = sorted(range(len(self.entries)), key=lambda i: (-sims[i], i))
            out = []
            for i in order:
                if sims[i] < floor:
                    break
                if site is not None and self.entries[i].query.site != site:
                    continue
                out.append((self.entries[i], float(sims[i])))
                if len(out) == k:
                    break
            return out

    def update(self, query: Query, new_value: MemoryValue, oracle: OracleHandle) -> UpdateOutcome:
        """Insert, or let the oracle decide whether ``new_value`` replaces the closest same-site entry."""
        with self._lock:
            best: tuple[float, int] | None = None
            if self.entries:
                sims = self._similarities(self.embedder.embed(query.text))
                for i, e in enumerate(self.entries):
                    if e.query.site == query.site and (best is None or sims[i] > best[0]):
                        best = (float(sims[i]), i)
            if best is None or best[0] < self.dedup_threshold:
                self.insert(query, new_value)
                return UpdateOutcome.INSERTED
            entry = self.entries[best[1]]
            old = entry.value
            req = OracleRequest(
                Role.UPDATE_DECISION,
                query,
                {
                    "old": old.render(),
                    "new": new_value.render(),
                    "old_validated": old.validated,
                    "new_validated": new_value.validated,
                    "old_length": old.trajectory.horizon,
                    "new_length": new_value.trajectory.horizon,
                },
            )
            try:
                choice = oracle.judge(req).value
            except OracleUnavailable:
                log.warning("update oracle unavailable; keeping stored value for %s", query.id)
                return UpdateOutcome.KEPT
            if choice is UpdateChoice.KEEP_OLD:
                return UpdateOutcome.KEPT
            entry.value = new_value
            entry.version += 1
            return UpdateOutcome.REPLACED

    def pinned_obs_ids(self) -> frozenset[str]:
        """Every observation referenced by a stored trajectory."""
        ids: set[str] = set()
        for e in self.entries:
            ids |= e.value.trajectory.observation_ids()
        return frozenset(ids)

    def persist(self, path: str | Path) -> None:
        with self._lock:
            write_records(
                path,
                "memory",
                [e.to_dict() for e in self.entries],
                embedder=self.embedder.to_dict(),
                dedup_threshold=self.dedup_threshold,
                min_similarity=self.min_similarity,
            )

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        header, recs = read_records(path, "memory")
        try:
            store = cls(
                Embedder.from_dict(header["embedder"]),
                float(header["dedup_threshold"]),
                float(header["min_similarity"]),
            )
            store.entries = [MemoryEntry.from_dict(r) for r in recs]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: malformed memory record: {exc}") from exc
        for e in store.entries:
            if e.key_vec.shape != (store.embedder.dim,):
                raise SchemaError(f"{path}: key vector of wrong dimension")
        return store


def lookup(store: MemoryStore, query: Query, k: int = 1) -> list[tuple[MemoryEntry, float]]:
    return store.lookup(query, k)


def update(store: MemoryStore, query: Query, new_value: MemoryValue, oracle: OracleHandle) -> UpdateOutcome:
    return store.update(query, new_value, oracle)

"""Deterministic table-driven oracle used for tests and desk-scale benchmarks.

Rules are checked in file order; the first whose matcher accepts the request
supplies the verdict, otherwise the role default applies. A matcher looks at
substrings of the query and of the role's main text (page text, trajectory
rendering, candidate rendering, or both trajectories for update decisions).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from ..core import FailureLabel
from ..errors import SchemaError, VersionMismatch
from . import OracleHandle, OracleRequest, Role, UpdateChoice

ARBITRATE = "arbitrate"
LAST = "last"

BUILTIN_DEFAULTS: dict[Role, Any] = {
    Role.HEURISTIC: 0.5,
    Role.RELEVANCE: False,
    Role.RANK_PATHS: 0.5,
    Role.CLASSIFY_ERROR: FailureLabel.NAVIGATION.value,
    Role.LOCATE_FIRST_ERROR: LAST,
    Role.REFLECT: "The final action did not accomplish the task. Re-check the page content before answering.",
    Role.UPDATE_DECISION: ARBITRATE,
}


@dataclass(frozen=True)
class Rule:
    role: Role
    verdict: Any
    query_contains: str = ""
    context_contains: tuple[str, ...] = ()
    context_lacks: tuple[str, ...] = ()

    def matches(self, query_text: str, text: str) -> bool:
        return (
            self.query_contains in query_text
            and all(s in text for s in self.context_contains)
            and not any(s in text for s in self.context_lacks)
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"role": self.role.value, "verdict": self.verdict}
        if self.query_contains:
            d["query_contains"] = self.query_contains
        if self.context_contains:
            d["context_contains"] = list(self.context_contains)
        if self.context_lacks:
            d["context_lacks"] = list(self.context_lacks)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Rule":
        return cls(
            role=Role(d["role"]),
            verdict=d["verdict"],
            query_contains=d.get("query_contains", ""),
            context_contains=tuple(d.get("context_contains", ())),
            context_lacks=tuple(d.get("context_lacks", ())),
        )


def arbitrate(old_validated: bool, new_validated: bool, old_length: int, new_length: int) -> UpdateChoice:
    """Default update policy.

    A validated trajectory beats a non-validated one; between two validated
    ones the strictly shorter wins; between two non-validated ones the newer
    reflection wins, since it was produced with the older one in context.
    """
    if old_validated != new_validated:
        return UpdateChoice.TAKE_NEW if new_validated else UpdateChoice.KEEP_OLD
    if old_validated:
        return UpdateChoice.TAKE_NEW if new_length < old_length else UpdateChoice.KEEP_OLD
    return UpdateChoice.TAKE_NEW


def _step_lines(trajectory: str) -> list[str]:
    return [line for line in trajectory.split("\n") if line[:1].isdigit()]


class ScriptedOracle(OracleHandle):
    """Stateless rule table. Identical requests always get identical verdicts."""

    def __init__(self, rules: list[Rule] | tuple[Rule, ...] = (), defaults: Mapping[Role | str, Any] | None = None) -> None:
        super().__init__()
        self.rules = tuple(rules)
        self.defaults = dict(BUILTIN_DEFAULTS)
        for role, verdict in (defaults or {}).items():
            self.defaults[Role(role)] = verdict
        self._by_role: dict[Role, list[Rule]] = {r: [] for r in Role}
        for rule in self.rules:
            self._by_role[rule.role].append(rule)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedOracle":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScriptedOracle":
        if data.get("schema") != 1:
            raise VersionMismatch(f"oracle rule file schema {data.get('schema')!r} is not supported")
        try:
            rules = [Rule.from_dict(r) for r in data.get("rules", [])]
            return cls(rules, data.get("defaults"))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad oracle rule: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": 1,
            "defaults": {r.value: v for r, v in self.defaults.items()},
            "rules": [r.to_dict() for r in self.rules],
        }

    def _lookup(self, role: Role, query_text: str, text: str) -> Any:
        for rule in self._by_role[role]:
            if rule.matches(query_text, text):
                return rule.verdict
        return self.defaults[role]

    def _answer(self, req: OracleRequest) -> Any:
        ctx, q = req.context, req.query.text
        role = req.role
        if role in (Role.HEURISTIC, Role.RELEVANCE):
            return self._lookup(role, q, ctx["page"])
        if role is Role.RANK_PATHS:
            scores = [float(self._lookup(role, q, str(c))) for c in ctx["candidates"]]
            return sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        if role is Role.CLASSIFY_ERROR:
            return self._lookup(role, q, ctx["trajectory"])
        if role is Role.REFLECT:
            return self._lookup(role, q, ctx["trajectory"])
        if role is Role.LOCATE_FIRST_ERROR:
            spec = self._lookup(role, q, ctx["trajectory"])
            horizon = int(ctx["horizon"])
            if spec == LAST:
                return horizon
            if isinstance(spec, Mapping) and "first_matching" in spec:
                for i, line in enumerate(_step_lines(ctx["trajectory"]), 1):
                    if spec["first_matching"] in line:
                        return i
                return horizon
            return spec
        spec = self._lookup(role, q, f"{ctx['old']}\n{ctx['new']}")
        if spec == ARBITRATE:
            return arbitrate(
                bool(ctx["old_validated"]), bool(ctx["new_validated"]), int(ctx["old_length"]), int(ctx["new_length"])
            ).value
        return spec

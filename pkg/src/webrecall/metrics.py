"""Aggregate episode results into reports and compare two runs.

A report is a pure function of a results file: the last round of the last
phase gives each task's final outcome; every round contributes one point to
the per-round curve.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import FailureLabel
from .errors import SchemaError, TaskSetMismatch
from .records import read_records, write_records
from .runtime import EpisodeResult

PHASE_ORDER = {"exploration": 0, "inference": 1, "baseline": 1}
NO_TASKS_NOTE = "no tasks: the results file holds no episodes"


def pct(x: float) -> str:
    return f"{100 * x:.1f}%"


@dataclass
class MetricsReport:
    """Summary of a run.

    Attributes:
        tasks: Number of tasks in the final round.
        successes: Tasks solved in the final round.
        success_rate: ``successes / tasks`` (0.0 when there are no tasks).
        per_domain: Site id -> ``{"tasks", "successes", "success_rate"}``.
        mean_steps: Mean horizon of the final round's successful episodes.
        breakdown: Label -> proportion of final-round episodes.
        per_round: One entry per (phase, round) in run order.
        oracle_calls: Oracle calls over every phase.
        per_task: Task id -> final ``{"site", "label", "steps", "success"}``.
        settings: Configuration values echoed for auditability.
        notes: Free-text remarks (e.g. the empty-run note).
    """

    tasks: int
    successes: int
    success_rate: float
    per_domain: dict[str, dict[str, Any]]
    mean_steps: float | None
    breakdown: dict[str, float]
    per_round: list[dict[str, Any]]
    oracle_calls: int
    per_task: dict[str, dict[str, Any]]
    settings: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def navigation_failures(self) -> int:
        return sum(1 for t in self.per_task.values() if t["label"] == FailureLabel.NAVIGATION.value)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricsReport":
        try:
            return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})
        except TypeError as exc:
            raise SchemaError(f"malformed report: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        lines = [f"Tasks: {self.tasks}"]
        if self.tasks == 0:
            lines.extend(f"Note: {n}" for n in self.notes)
            return "\n".join(lines) + "\n"
        lines.append(f"Success rate: {pct(self.success_rate)} ({self.successes}/{self.tasks})")
        for site, d in sorted(self.per_domain.items()):
            lines.append(f"  {site}: {pct(d['success_rate'])} ({d['successes']}/{d['tasks']})")
        steps = "n/a" if self.mean_steps is None else f"{self.mean_steps:.1f}"
        lines.append(f"Mean steps (successful tasks): {steps}")
        lines.append(
            "Outcome breakdown: "
            + ", ".join(f"{label} {pct(self.breakdown[label])}" for label in sorted(self.breakdown))
        )
        if self.per_round:
            lines.append("Per-round success rate:")
            for r in self.per_round:
                lines.append(f"  {r['phase']} {r['round']}: {pct(r['success_rate'])} ({r['successes']}/{r['tasks']})")
        lines.append(f"Oracle calls: {self.oracle_calls}")
        if self.settings:
            lines.append("Settings: " + ", ".join(f"{k}={v}" for k, v in sorted(self.settings.items())))
        lines.extend(f"Note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def save(self, out_dir: str | Path, stem: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(self.to_json(), encoding="utf-8")
        (out / f"{stem}.txt").write_text(self.render(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc


def build_report(results: Iterable[EpisodeResult], settings: Mapping[str, Any] | None = None) -> MetricsReport:
    results = list(results)
    settings = dict(settings or {})
    if not results:
        return MetricsReport(0, 0, 0.0, {}, None, {l.value: 0.0 for l in FailureLabel}, [], 0, {}, settings, [NO_TASKS_NOTE])
    rounds: dict[tuple[int, str, int], list[EpisodeResult]] = defaultdict(list)
    for r in results:
        rounds[(PHASE_ORDER.get(r.phase, 1), r.phase, r.round)].append(r)
    keys = sorted(rounds)
    final = rounds[keys[-1]]
    per_task = {
        r.task_id: {"site": r.site, "label": r.label.value, "steps": r.steps, "success": r.success}
        for r in sorted(final, key=lambda r: r.task_id)
    }
    n = len(per_task)
    wins = sum(t["success"] for t in per_task.values())
    domains: dict[str, dict[str, Any]] = {}
    for t in per_task.values():
        d = domains.setdefault(t["site"], {"tasks": 0, "successes": 0})
        d["tasks"] += 1
        d["successes"] += int(t["success"])
    for d in domains.values():
        d["success_rate"] = d["successes"] / d["tasks"]
    counts = Counter(t["label"] for t in per_task.values())
    breakdown = {l.value: counts.get(l.value, 0) / n for l in FailureLabel}
    solved_steps = [t["steps"] for t in per_task.values() if t["success"]]
    curve = []
    for key in keys:
        rs = rounds[key]
        ok = sum(r.success for r in rs)
        curve.append({"phase": key[1], "round": key[2], "tasks": len(rs), "successes": ok, "success_rate": ok / len(rs)})
    return MetricsReport(
        tasks=n,
        successes=wins,
        success_rate=wins / n,
        per_domain=dict(sorted(domains.items())),
        mean_steps=sum(solved_steps) / len(solved_steps) if solved_steps else None,
        breakdown=breakdown,
        per_round=curve,
        oracle_calls=sum(r.oracle_calls for r in results),
        per_task=per_task,
        settings=settings,
    )


def write_results(path: str | Path, results: Iterable[EpisodeResult], **meta: Any) -> None:
    write_records(path, "results", [r.to_dict() for r in results], **meta)


def read_results(path: str | Path) -> list[EpisodeResult]:
    _, recs = read_records(path, "results")
    try:
        return [EpisodeResult.from_dict(r) for r in recs]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed result record: {exc}") from exc


@dataclass(frozen=True)
class Comparison:
    sr_baseline: float
    sr_candidate: float
    sr_delta: float
    sr_ratio: float | None
    mean_step_delta: float | None
    nav_failures_baseline: int
    nav_failures_candidate: int
    nav_failure_reduction_pct: float
    common_solved: int
    common_steps_baseline: float | None
    common_steps_candidate: float | None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def render(self) -> str:
        def num(x: float | None, fmt: str = "{:+.1f}") -> str:
            return "n/a" if x is None else fmt.format(x)

        return (
            f"Success rate: {pct(self.sr_baseline)} -> {pct(self.sr_candidate)} "
            f"(delta {100 * self.sr_delta:+.1f} points, ratio {num(self.sr_ratio, '{:.2f}x')})\n"
            f"Mean steps delta: {num(self.mean_step_delta)}\n"
            f"Navigation failures: {self.nav_failures_baseline} -> {self.nav_failures_candidate} "
            f"(reduction {self.nav_failure_reduction_pct:.1f}%)\n"
            f"Commonly solved tasks: {self.common_solved}, mean steps "
            f"{num(self.common_steps_baseline, '{:.1f}')} -> {num(self.common_steps_candidate, '{:.1f}')}\n"
        )


def compare_runs(baseline: MetricsReport, candidate: MetricsReport) -> Comparison:
    """Deltas of ``candidate`` relative to ``baseline``; both must cover the same tasks."""
    if set(baseline.per_task) != set(candidate.per_task):
        only_b = sorted(set(baseline.per_task) - set(candidate.per_task))
        only_c = sorted(set(candidate.per_task) - set(baseline.per_task))
        raise TaskSetMismatch(f"task sets differ: baseline-only {only_b[:5]}, candidate-only {only_c[:5]}")
    nb, nc = baseline.navigation_failures, candidate.navigation_failures
    if baseline.per_task:
        nb_count, nc_count = nb, nc
    else:  # summary-only reports
        nb_count = round(baseline.breakdown.get(FailureLabel.NAVIGATION.value, 0.0) * baseline.tasks)
        nc_count = round(candidate.breakdown.get(FailureLabel.NAVIGATION.value, 0.0) * candidate.tasks)
    reduction = 100.0 * (nb_count - nc_count) / nb_count if nb_count else 0.0
    step_delta = None
    if baseline.mean_steps is not None and candidate.mean_steps is not None:
        step_delta = candidate.mean_steps - baseline.mean_steps
    common = [t for t, v in baseline.per_task.items() if v["success"] and candidate.per_task[t]["success"]]
    cb = sum(baseline.per_task[t]["steps"] for t in common) / len(common) if common else None
    cc = sum(candidate.per_task[t]["steps"] for t in common) / len(common) if common else None
    return Comparison(
        sr_baseline=baseline.success_rate,
        sr_candidate=candidate.success_rate,
        sr_delta=candidate.success_rate - baseline.success_rate,
        sr_ratio=candidate.success_rate / baseline.success_rate if baseline.success_rate else None,
        mean_step_delta=step_delta,
        nav_failures_baseline=nb_count,
        nav_failures_candidate=nc_count,
        nav_failure_reduction_pct=reduction,
        common_solved=len(common),
        common_steps_baseline=cb,
        common_steps_candidate=cc,
    )

"""Episode loop and the two-phase (exploration, inference) coordination.

Rounds have a barrier: all episodes of a round run first (optionally in
parallel, each in its own environment), then trajectories are merged into the
buffer in task order, then failures are reflected on and memory is updated one
task at a time in a seeded shuffled order. Only the episode stage is parallel,
so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .buffer import BufferGraph
from .core import FailureLabel, Step, Trajectory, classify_by_ground_truth
from .env import DEFAULT_HORIZON, TaskSpec, World, reset, step, validate
from .errors import OracleBudgetExceeded, OracleUnavailable
from .memory import MemoryEntry, MemoryStore, MemoryValue, UpdateOutcome
from .navigator import SearchLimits
from .oracle import BudgetedOracle, OracleHandle
from .policies import Policy
from .reflector import classify_episode, reflect_execution, reflect_navigation

log = logging.getLogger(__name__)

ABLATIONS = ("reflection", "navigation", "failed-trajectories")
VALIDATED_RATIONALE = "Validated: this action sequence solved the task."


@dataclass(frozen=True)
class RuntimeOptions:
    """Knobs for one run.

    Attributes:
        horizon: Action cap per inference episode.
        exploration_cap: Action cap per exploration episode.
        k: Demonstrations retrieved per task.
        rounds: Inference rounds.
        seed: Seeds the per-round task order for reflection and memory updates.
        parallelism: Worker threads for the episode stage of a round.
        limits: Buffer search limits used by navigation repair.
        ablations: Subset of ``ABLATIONS`` to switch off.
        oracle_budget: Oracle calls allowed per task per round.
    """

    horizon: int = DEFAULT_HORIZON
    exploration_cap: int = 5
    k: int = 1
    rounds: int = 5
    seed: int = 0
    parallelism: int = 1
    limits: SearchLimits = field(default_factory=SearchLimits)
    ablations: frozenset[str] = frozenset()
    oracle_budget: int = 5000

    def __post_init__(self) -> None:
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        unknown = self.ablations - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}")
        for name in ("horizon", "exploration_cap", "k", "parallelism", "oracle_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")


@dataclass(frozen=True)
class EpisodeResult:
    task_id: str
    site: str
    phase: str
    round: int
    trajectory: Trajectory
    label: FailureLabel
    steps: int
    oracle_calls: int = 0
    demonstrations_used: int = 0
    oracle_label: FailureLabel | None = None
    memory_outcome: str | None = None

    @property
    def success(self) -> bool:
        return self.label is FailureLabel.SUCCESS

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "site": self.site,
            "phase": self.phase,
            "round": self.round,
            "label": self.label.value,
            "success": self.success,
            "steps": self.steps,
            "oracle_calls": self.oracle_calls,
            "demonstrations_used": self.demonstrations_used,
            "oracle_label": self.oracle_label.value if self.oracle_label else None,
            "memory_outcome": self.memory_outcome,
            "trajectory": self.trajectory.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EpisodeResult":
        return cls(
            task_id=d["task_id"],
            site=d["site"],
            phase=d["phase"],
            round=int(d["round"]),
            trajectory=Trajectory.from_dict(d["trajectory"]),
            label=FailureLabel(d["label"]),
            steps=int(d["steps"]),
            oracle_calls=int(d.get("oracle_calls", 0)),
            demonstrations_used=int(d.get("demonstrations_used", 0)),
            oracle_label=FailureLabel(d["oracle_label"]) if d.get("oracle_label") else None,
            memory_outcome=d.get("memory_outcome"),
        )


def run_episode(
    world: World, task: TaskSpec, policy: Policy, demos: Sequence[MemoryEntry] = (), horizon: int = DEFAULT_HORIZON
) -> Trajectory:
    """Observe, decide, step until the policy stops or ``horizon`` actions were taken."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    site = world.sites[task.query.site]
    state, start = reset(site)
    actor = policy.begin(task.query, demos)
    steps: list[Step] = []
    while len(steps) < horizon and not state.done:
        action = actor.act(state.text, steps[-1].observation.obs_id if steps else start.obs_id)
        state, obs = step(state, action)
        steps.append(Step(action, obs))
    return Trajectory(task.query.id, start, tuple(steps))


def label_episode(task: TaskSpec, traj: Trajectory) -> FailureLabel:
    """Simulator label: validator first, then key-observation coverage."""
    return classify_by_ground_truth(traj, task.key_obs, validate(task, traj))


def retrieve(mem: MemoryStore | None, task: TaskSpec, k: int) -> list[MemoryEntry]:
    """Demonstrations for ``task``, restricted to its own site."""
    if mem is None:
        return []
    return [e for e, _ in mem.lookup(task.query, k, site=task.query.site)]


def _run_episodes(
    world: World,
    tasks: Sequence[TaskSpec],
    policy: Policy,
    demos: Sequence[Sequence[MemoryEntry]],
    horizon: int,
    parallelism: int,
) -> list[Trajectory]:
    jobs = list(zip(tasks, demos))
    if parallelism == 1 or len(jobs) < 2:
        return [run_episode(world, t, policy, d, horizon) for t, d in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda job: run_episode(world, job[0], policy, job[1], horizon), jobs))


def _learn(
    task: TaskSpec,
    traj: Trajectory,
    label: FailureLabel,
    buf: BufferGraph,
    mem: MemoryStore,
    oracle: OracleHandle,
    opts: RuntimeOptions,
) -> tuple[FailureLabel | None, UpdateOutcome | None]:
    """Reflect on one episode and store the outcome; returns (oracle label, memory outcome)."""
    query = task.query
    if label is FailureLabel.SUCCESS:
        return None, mem.update(query, MemoryValue(traj, VALIDATED_RATIONALE, FailureLabel.SUCCESS), oracle)
    oracle_label = classify_episode(traj, query, oracle, task.key_obs).oracle_label
    if oracle_label is FailureLabel.NAVIGATION:
        if "navigation" in opts.ablations:
            return oracle_label, None
        reflection = reflect_navigation(traj, query, buf, oracle, opts.limits)
    else:
        if "reflection" in opts.ablations:
            return oracle_label, None
        reflection = reflect_execution(traj, query, oracle)
    if reflection is None or "failed-trajectories" in opts.ablations:
        return oracle_label, None
    value = MemoryValue(reflection.truncated, reflection.rationale, reflection.label)
    return oracle_label, mem.update(query, value, oracle)


def _round(
    world: World,
    tasks: Sequence[TaskSpec],
    policy: Policy,
    buf: BufferGraph,
    mem: MemoryStore,
    oracle: OracleHandle,
    opts: RuntimeOptions,
    phase: str,
    round_index: int,
) -> list[EpisodeResult]:
    if phase == "exploration":
        demos: list[list[MemoryEntry]] = [[] for _ in tasks]
        horizon = opts.exploration_cap
    else:
        demos = [retrieve(mem, t, opts.k) for t in tasks]
        horizon = opts.horizon
    trajs = _run_episodes(world, tasks, policy, demos, horizon, opts.parallelism)
    labels = [label_episode(t, tr) for t, tr in zip(tasks, trajs)]
    for task, traj in zip(tasks, trajs):
        buf.ingest_episode(traj, task.query.site)
    order = list(range(len(tasks)))
    random.Random(opts.seed * 1000 + round_index).shuffle(order)
    learned: dict[int, tuple[FailureLabel | None, UpdateOutcome | None, int]] = {}
    for i in order:
        budget = BudgetedOracle(oracle, opts.oracle_budget)
        try:
            oracle_label, outcome = _learn(tasks[i], trajs[i], labels[i], buf, mem, budget, opts)
        except (OracleBudgetExceeded, OracleUnavailable) as exc:
            log.warning("task %s: reflection aborted: %s", tasks[i].id, exc)
            oracle_label, outcome = None, None
        buf.pin(mem.pinned_obs_ids())
        learned[i] = (oracle_label, outcome, budget.calls)
    results = []
    for i, task in enumerate(tasks):
        oracle_label, outcome, calls = learned[i]
        results.append(
            EpisodeResult(
                task_id=task.id,
                site=task.query.site,
                phase=phase,
                round=round_index,
                trajectory=trajs[i],
                label=labels[i],
                steps=trajs[i].horizon,
                oracle_calls=calls,
                demonstrations_used=len(demos[i]),
                oracle_label=oracle_label,
                memory_outcome=outcome.value if outcome else None,
            )
        )
    return results


def run_exploration(
    world: World,
    tasks: Sequence[TaskSpec],
    policy: Policy,
    buf: BufferGraph,
    mem: MemoryStore,
    oracle: OracleHandle,
    opts: RuntimeOptions | None = None,
) -> tuple[BufferGraph, MemoryStore, list[EpisodeResult]]:
    """Run every task once without demonstrations and learn from the outcomes.

    Mutates and returns ``buf`` and ``mem`` so an interrupted run can resume.
    """
    opts = opts or RuntimeOptions()
    results = _round(world, tasks, policy, buf, mem, oracle, opts, "exploration", 0)
    return buf, mem, results


def run_inference(
    world: World,
    tasks: Sequence[TaskSpec],
    policy: Policy,
    buf: BufferGraph,
    mem: MemoryStore,
    oracle: OracleHandle,
    opts: RuntimeOptions | None = None,
    round_index: int = 1,
) -> list[EpisodeResult]:
    """One inference round: retrieve, act, then reflect on failures and update memory."""
    opts = opts or RuntimeOptions()
    return _round(world, tasks, policy, buf, mem, oracle, opts, "inference", round_index)


def run_baseline(
    world: World, tasks: Sequence[TaskSpec], policy: Policy, opts: RuntimeOptions | None = None
) -> list[list[EpisodeResult]]:
    """Memoryless comparator: the base policy, ``opts.rounds`` times, no learning."""
    opts = opts or RuntimeOptions()
    rounds = []
    for r in range(1, opts.rounds + 1):
        trajs = _run_episodes(world, tasks, policy, [[] for _ in tasks], opts.horizon, opts.parallelism)
        rounds.append(
            [
                EpisodeResult(t.id, t.query.site, "baseline", r, tr, label_episode(t, tr), tr.horizon)
                for t, tr in zip(tasks, trajs)
            ]
        )
    return rounds


@dataclass
class Experiment:
    buffer: BufferGraph
    memory: MemoryStore
    exploration: list[EpisodeResult]
    rounds: list[list[EpisodeResult]]

    @property
    def results(self) -> list[EpisodeResult]:
        return [*self.exploration, *(r for rnd in self.rounds for r in rnd)]


def run_experiment(
    world: World,
    tasks: Sequence[TaskSpec],
    policy: Policy,
    oracle: OracleHandle,
    opts: RuntimeOptions | None = None,
    buf: BufferGraph | None = None,
    mem: MemoryStore | None = None,
    explore: bool = True,
) -> Experiment:
    """Exploration (optional) followed by ``opts.rounds`` inference rounds."""
    opts = opts or RuntimeOptions()
    buf = buf if buf is not None else BufferGraph()
    mem = mem if mem is not None else MemoryStore()
    exploration: list[EpisodeResult] = []
    if explore:
        _, _, exploration = run_exploration(world, tasks, policy, buf, mem, oracle, opts)
    rounds = [run_inference(world, tasks, policy, buf, mem, oracle, opts, r) for r in range(1, opts.rounds + 1)]
    return Experiment(buf, mem, exploration, rounds)


def success_rate(results: Iterable[EpisodeResult]) -> float:
    results = list(results)
    return sum(r.success for r in results) / len(results) if results else 0.0

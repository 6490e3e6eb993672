"""Turn failed episodes into reflections: a label, a trusted prefix and a rationale.

Nothing here mutates the buffer or the memory; storing the result is the
caller's job.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from .buffer import BufferGraph
from .core import FailureLabel, Query, Trajectory, classify_by_ground_truth
from .errors import InvalidTrajectory
from .navigator import SearchLimits, repair_navigation
from .oracle import OracleHandle, OracleRequest, Role

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Reflection:
    failed_query: Query
    label: FailureLabel
    truncated: Trajectory
    rationale: str
    first_error_index: int | None = None
    noop_repair: bool = False

    def __post_init__(self) -> None:
        if self.label is FailureLabel.SUCCESS:
            raise ValueError("successful episodes are not reflected on")
        if self.first_error_index is not None and self.truncated.horizon != self.first_error_index - 1:
            raise ValueError("truncated trajectory must stop right before the first error")


@dataclass(frozen=True)
class Classification:
    label: FailureLabel
    oracle_label: FailureLabel
    ground_truth: FailureLabel | None = None

    @property
    def agrees(self) -> bool | None:
        return None if self.ground_truth is None else self.ground_truth is self.oracle_label


def _reject_solved(traj: Trajectory, solved: bool) -> None:
    if solved:
        raise ValueError("cannot reflect on an episode that validated")
    if traj.horizon == 0:
        raise InvalidTrajectory("cannot reflect on an empty trajectory")


def classify_episode(
    traj: Trajectory,
    query: Query,
    oracle: OracleHandle,
    key_obs: Iterable[str] | None = None,
    trust_ground_truth: bool = False,
) -> Classification:
    """Oracle label plus, when key observations are known, the simulator's label."""
    if traj.horizon == 0:
        raise InvalidTrajectory("cannot classify an empty trajectory")
    verdict = oracle.judge(OracleRequest(Role.CLASSIFY_ERROR, query, {"trajectory": traj.render()}))
    oracle_label = verdict.value
    truth = None
    if key_obs is not None:
        truth = classify_by_ground_truth(traj, key_obs, solved=False)
        if truth is not oracle_label:
            log.info("task %s: oracle says %s, ground truth %s", query.id, oracle_label.value, truth.value)
    label = truth if (trust_ground_truth and truth is not None) else oracle_label
    return Classification(label, oracle_label, truth)


def classify(
    traj: Trajectory,
    query: Query,
    oracle: OracleHandle,
    key_obs: Iterable[str] | None = None,
    trust_ground_truth: bool = False,
) -> FailureLabel:
    return classify_episode(traj, query, oracle, key_obs, trust_ground_truth).label


def reflect_execution(traj: Trajectory, query: Query, oracle: OracleHandle, solved: bool = False) -> Reflection:
    """Find the first wrong action, keep the steps before it and ask why it was wrong."""
    _reject_solved(traj, solved)
    rendered = traj.render()
    index = oracle.judge(
        OracleRequest(Role.LOCATE_FIRST_ERROR, query, {"trajectory": rendered, "horizon": traj.horizon})
    ).value
    rationale = oracle.judge(
        OracleRequest(Role.REFLECT, query, {"trajectory": rendered, "error_index": index})
    ).value
    return Reflection(
        failed_query=query,
        label=FailureLabel.EXECUTION,
        truncated=traj.prefix(index - 1),
        rationale=rationale,
        first_error_index=index,
    )


def reflect_navigation(
    traj: Trajectory,
    query: Query,
    buf: BufferGraph,
    oracle: OracleHandle,
    limits: SearchLimits | None = None,
    solved: bool = False,
) -> Reflection | None:
    """Replace a lost route by the best stored route to a relevant page, if any."""
    _reject_solved(traj, solved)
    repaired = repair_navigation(buf, traj, query, oracle, limits)
    if repaired is None:
        return None
    route = repaired.actions
    noop = traj.actions[: len(route)] == route
    listed = " ".join(f"{i}. {a.render()}" for i, a in enumerate(route, 1)) or "(home page)"
    if noop:
        note = "The original route already reaches the relevant page (no-op repair)."
    else:
        note = "The earlier route never reached the page that holds the answer."
    return Reflection(
        failed_query=query,
        label=FailureLabel.NAVIGATION,
        truncated=repaired,
        rationale=f"Navigation: {listed}\nReflection: {note}",
        noop_repair=noop,
    )

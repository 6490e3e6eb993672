import json

import httpx
import pytest

from _support import bench_world, mini_world
from webrecall.core import Action, FailureLabel, Query
from webrecall.env import find_solution, replay
from webrecall.memory import MemoryStore, MemoryValue
from webrecall.policies import (
    DemoReplayPolicy,
    PolicyKind,
    RandomWalkPolicy,
    RemotePolicy,
    ReplayPolicy,
    ScriptedPolicy,
    content_stems,
    parse_action,
    render_demonstrations,
    stem,
)
from webrecall.runtime import label_episode, run_episode


@pytest.fixture(scope="module")
def world():
    return bench_world()


def task_by_text(world, fragment):
    return next(t for t in world.tasks if fragment in t.query.text)


def test_stemming_and_content_words():
    assert [stem(w) for w in ["entries", "orders", "class", "bus", "ids"]] == ["entry", "order", "class", "bus", "ids"]
    assert content_stems("Which of the Orders is the newest by date?") == {"order", "newest", "date"}


def test_scripted_policy_solves_a_direct_list_task(world):
    task = world.task("cms-02")
    traj = run_episode(world, task, ScriptedPolicy())
    assert label_episode(task, traj) is FailureLabel.SUCCESS
    assert traj.horizon == 3
    assert traj.actions[-1].payload == task.validator.expected


def test_scripted_policy_backs_out_of_a_decoy(world):
    # "recent" matches a decoy link first; the policy returns home and recovers
    task = world.task("cms-01")
    traj = run_episode(world, task, ScriptedPolicy())
    assert label_episode(task, traj) is FailureLabel.SUCCESS
    assert [o.locator for o in traj.observations][:3] == ["home", "info/recent-activity", "home"]
    assert traj.horizon == 5


def test_scripted_policy_misses_the_sort_without_guidance(world):
    task = task_by_text(world, "newest by date?")
    traj = run_episode(world, task, ScriptedPolicy())
    assert label_episode(task, traj) is FailureLabel.EXECUTION


def test_quoted_hint_in_a_demonstration_triggers_the_sort(world):
    task = task_by_text(world, "newest by date?")
    failed = run_episode(world, task, ScriptedPolicy())
    mem = MemoryStore()
    rationale = "The list is oldest first. Click 'Sort by Date' before reading the first row."
    mem.insert(task.query, MemoryValue(failed.prefix(failed.horizon - 1), rationale, FailureLabel.EXECUTION))
    demos = [e for e, _ in mem.lookup(task.query, 1)]
    traj = run_episode(world, task, ScriptedPolicy(), demos)
    assert label_episode(task, traj) is FailureLabel.SUCCESS
    assert traj.horizon == failed.horizon + 1
    # the memoryless variant ignores the demonstration
    assert label_episode(task, run_episode(world, task, ScriptedPolicy(follow_demos=False), demos)) is FailureLabel.EXECUTION


def test_demonstration_following_skips_detours(world):
    task = world.tasks[0]
    site = world.sites[task.query.site]
    sol = find_solution(world, task)
    home = next(a.element_id for a in site.pages[site.root].affordances if a.element_id.startswith("0"))
    detour = replay(site, [Action.click(home), Action.click("90-home"), *sol], task.id)
    mem = MemoryStore()
    mem.insert(task.query, MemoryValue(detour, "ok", FailureLabel.SUCCESS))
    traj = run_episode(world, task, ScriptedPolicy(), [mem.entries[0]])
    assert traj.actions == tuple(sol)


def test_simple_policies(world):
    task = world.tasks[0]
    sol = tuple(find_solution(world, task))
    assert run_episode(world, task, ReplayPolicy(sol)).actions == sol
    assert run_episode(world, task, ReplayPolicy(sol[:1])).actions == (*sol[:1], Action.stop(""))
    mem = MemoryStore()
    mem.insert(task.query, MemoryValue(replay(world.sites[task.query.site], sol), "ok", FailureLabel.SUCCESS))
    assert run_episode(world, task, DemoReplayPolicy(), mem.entries).actions == sol
    assert run_episode(world, task, DemoReplayPolicy()).actions == (Action.stop(""),)
    walk = RandomWalkPolicy(seed=3)
    one = run_episode(world, task, walk, horizon=6)
    assert one.horizon == 6 and one == run_episode(world, task, walk, horizon=6)
    assert ScriptedPolicy().kind is PolicyKind.SCRIPTED


@pytest.mark.parametrize(
    "text,action",
    [
        ("Click [11-sales]", Action.click("11-sales")),
        ("  click [ status ] ", Action.click("status")),
        ("Type [status] 'Complete'", Action.type("status", "Complete")),
        ("Stop action: John Lee", Action.stop("John Lee")),
        ("stop", Action.stop("")),
    ],
)
def test_parse_action(text, action):
    assert parse_action(text) == action


def test_parse_action_rejects_prose():
    with pytest.raises(ValueError):
        parse_action("I think we should scroll")


def test_render_demonstrations(world):
    site = mini_world().sites["cms"]
    mem = MemoryStore()
    mem.insert(Query("a", "q one", "cms"), MemoryValue(replay(site, [Action.click("11-sales")]), "r", FailureLabel.EXECUTION))
    assert render_demonstrations(mem.entries) == "Demonstration 1:\nQuery: q one\n1. Click [11-sales]\nRationale: r"


def test_remote_policy_posts_prompt_and_parses_reply(world):
    task = world.tasks[0]
    sol = find_solution(world, task)
    replies = iter([a.render() for a in sol])
    bodies = []

    def handler(request):
        bodies.append(json.loads(request.content))
        return httpx.Response(200, json={"result": next(replies, "no idea")})

    policy = RemotePolicy("http://agent.test", client=httpx.Client(transport=httpx.MockTransport(handler)))
    traj = run_episode(world, task, policy)
    assert label_episode(task, traj) is FailureLabel.SUCCESS
    assert bodies[0]["role"] == "act" and task.query.text in bodies[0]["prompt"]
    assert "page: home" in bodies[0]["prompt"]
    assert policy.kind is PolicyKind.ORACLE_DRIVEN
    confused = RemotePolicy("http://agent.test", client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"result": "hmm"}))))
    assert run_episode(world, task, confused).actions == (Action.stop(""),)

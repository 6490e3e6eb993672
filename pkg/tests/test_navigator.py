import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import TARGET, bfs_distances, explored_buffer, random_world
from webrecall.buffer import BufferGraph
from webrecall.core import Action, Query
from webrecall.env import parse_world, replay
from webrecall.errors import NotVisited
from webrecall.navigator import (
    AStarSearch,
    CandidatePath,
    SearchLimits,
    astar_search,
    path_to_trajectory,
    rank_and_select,
    repair_navigation,
)
from webrecall.oracle import Role
from webrecall.oracle.scripted import Rule, ScriptedOracle


def diamond_world():
    """home -> a -> goal, home -> b -> goal, home -> d -> e -> goal (goal holds the target)."""
    links = {"home": ["a", "b", "d"], "a": ["goal"], "b": ["goal"], "d": ["e"], "e": ["goal"], "goal": []}
    pages = []
    for loc, outs in links.items():
        els = [{"id": "h", "role": "heading", "text": loc}]
        if loc == "goal":
            els.append({"id": "t", "role": "text", "text": TARGET})
        affs = []
        for dest in outs:
            els.append({"id": f"1-{dest}", "role": "link", "text": dest})
            affs.append({"action_kind": "click", "element_id": f"1-{dest}", "dest": dest})
        pages.append({"locator": loc, "elements": els, "affordances": affs})
    return parse_world({"schema": 1, "sites": [{"site_id": "s", "root": "home", "pages": pages}], "tasks": []})


def diamond_buffer():
    world = diamond_world()
    site = world.sites["s"]
    buf = BufferGraph()
    for acts in (["1-d", "1-e", "1-goal"], ["1-b", "1-goal"], ["1-a", "1-goal"]):
        buf.ingest_episode(replay(site, [Action.click(a) for a in acts]), "s")
    return world, buf


Q = Query("q", "find the target", "s")
RELEVANT = Rule(Role.RELEVANCE, True, context_contains=(TARGET,))


def test_zero_heuristic_finds_shortest_route_with_lexicographic_tie_break():
    _, buf = diamond_buffer()
    cands = astar_search(buf, Q, ScriptedOracle([RELEVANT], {"heuristic": 1.0}))
    assert len(cands) == 1
    assert cands[0].actions == (Action.click("1-a"), Action.click("1-goal"))
    assert cands[0].locators == ("home", "a", "goal")
    assert cands[0].score == 2.0
    assert "route: Click [1-a] -> Click [1-goal]" in cands[0].render()


def test_heuristic_steers_expansion_order():
    _, buf = diamond_buffer()
    rules = [RELEVANT, Rule(Role.HEURISTIC, 1.0, context_contains=("page: b\n",)), Rule(Role.HEURISTIC, 1.0, context_contains=(TARGET,))]
    search = AStarSearch(buf, Q, ScriptedOracle(rules, {"heuristic": 0.0}), SearchLimits(heuristic_weight=2.0))
    cands = search.run()
    # f(goal via b) = 2 + 0 beats f(a) = 1 + 2, so the goal is reached through b
    assert cands[0].actions == (Action.click("1-b"), Action.click("1-goal"))
    assert [buf.node(n).obs.locator for n, _ in search.expanded][:3] == ["home", "b", "goal"]


def test_cumulative_mode_sums_heuristics():
    _, buf = diamond_buffer()
    rules = [RELEVANT, Rule(Role.HEURISTIC, 0.75, context_contains=("page: home\n",))]
    search = AStarSearch(buf, Q, ScriptedOracle(rules, {"heuristic": 0.5}), SearchLimits(f_mode="cumulative"))
    cands = search.run()
    # 0.25 (home) + 0.5 (a) + 0.5 (goal)
    assert cands[0].score == 1.25


def test_limits_cap_expansions_and_candidates():
    world = random_world(random.Random(11), 80, target_prob=0.5)
    buf = explored_buffer(world, random.Random(11), walks=20, length=10)
    oracle = ScriptedOracle([RELEVANT], {"heuristic": 1.0})
    s = AStarSearch(buf, Q, oracle, SearchLimits(max_expansions=5, candidate_cap=100))
    s.run()
    assert len(s.expanded) == 5
    cands = astar_search(buf, Q, oracle, SearchLimits(candidate_cap=2))
    assert len(cands) == 2
    with pytest.raises(ValueError):
        SearchLimits(f_mode="other")
    with pytest.raises(ValueError):
        SearchLimits(max_expansions=0)


def test_backtrack_requires_an_expanded_node():
    _, buf = diamond_buffer()
    s = AStarSearch(buf, Q, ScriptedOracle([RELEVANT]))
    with pytest.raises(NotVisited):
        s.backtrack(next(iter(buf.nodes)))


def test_rank_and_select_uses_oracle_ranking_over_canonical_order():
    a = CandidatePath("t1", ((Action.click("z"), "t1"),), 1.0, ("home", "zeta"))
    b = CandidatePath("t2", ((Action.click("a"), "x"), (Action.click("b"), "t2")), 2.0, ("home", "x", "beta"))
    assert rank_and_select([], Q, ScriptedOracle()) is None
    assert rank_and_select([b], Q, ScriptedOracle()) == b
    # default rank score ties: canonical order (shorter first) wins
    assert rank_and_select([b, a], Q, ScriptedOracle()) == a
    prefer_beta = ScriptedOracle([Rule(Role.RANK_PATHS, 0.9, context_contains=("beta",))])
    assert rank_and_select([a, b], Q, prefer_beta) == b


def test_repair_navigation():
    world, buf = diamond_buffer()
    oracle = ScriptedOracle([RELEVANT], {"heuristic": 1.0})
    traj = replay(world.sites["s"], [Action.click("1-d"), Action.stop("")])
    fixed = repair_navigation(buf, traj, Q, oracle)
    assert [o.locator for o in fixed.observations] == ["home", "a", "goal"]
    assert fixed.observations[-1].obs_id == world.sites["s"].pages["goal"].obs_id
    assert repair_navigation(buf, traj, Q, ScriptedOracle()) is None
    assert repair_navigation(BufferGraph(), traj, Q, oracle) is None
    assert repair_navigation(buf, traj, Query("q", "x", "other"), oracle) is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.dictionaries(st.integers(0, 29), st.integers(0, 8)))
def test_standard_mode_dequeues_non_decreasing_f(seed, promises):
    rng = random.Random(seed)
    world = random_world(rng, 30, target_prob=0.3)
    buf = explored_buffer(world, rng, walks=8, length=8)
    # promises in [0, 1] make h = 1 - p consistent for unit edge costs
    rules = [Rule(Role.HEURISTIC, p / 8, context_contains=(f"page: p{i}\n",)) for i, p in promises.items()]
    s = AStarSearch(buf, Q, ScriptedOracle([RELEVANT, *rules]), SearchLimits(10_000, 10_000))
    cands = s.run()
    fs = [f for _, f in s.expanded]
    assert all(x <= y + 1e-12 for x, y in zip(fs, fs[1:]))
    assert len(s.expanded) <= min(len(buf.nodes), 10_000)
    site = world.sites["s"]
    for c in cands:
        traj = replay(site, list(c.actions))
        assert [o.obs_id for o in traj.observations[1:]] == [o for _, o in c.path]
        rebuilt = path_to_trajectory(buf, Q, c)
        assert [o.obs_id for o in rebuilt.observations] == [o.obs_id for o in traj.observations]


def test_cumulative_update_from_two_to_two_and_a_half():
    _, buf = diamond_buffer()
    rules = [
        RELEVANT,
        Rule(Role.HEURISTIC, 0.0, context_contains=("page: home\n",)),
        Rule(Role.HEURISTIC, 0.0, context_contains=("page: d\n",)),
        Rule(Role.HEURISTIC, 0.5, context_contains=("page: e\n",)),
    ]
    search = AStarSearch(buf, Q, ScriptedOracle(rules, {"heuristic": 1.0}), SearchLimits(f_mode="cumulative"))
    search.run()
    f = {buf.node(n).obs.locator: v for n, v in search.expanded}
    assert f["d"] == 2.0 and f["e"] == 2.5


def grid_world():
    pages = []
    for r in range(3):
        for c in range(3):
            els = [{"id": "h", "role": "heading", "text": f"cell {r} {c}"}]
            if (r, c) == (2, 2):
                els.append({"id": "t", "role": "text", "text": TARGET})
            affs = []
            for name, (dr, dc) in {"down": (1, 0), "right": (0, 1), "up": (-1, 0), "left": (0, -1)}.items():
                rr, cc = r + dr, c + dc
                if 0 <= rr < 3 and 0 <= cc < 3:
                    els.append({"id": name, "role": "link", "text": name})
                    affs.append({"action_kind": "click", "element_id": name, "dest": f"g{rr}{cc}"})
            pages.append({"locator": f"g{r}{c}", "elements": els, "affordances": affs})
    return parse_world({"schema": 1, "sites": [{"site_id": "s", "root": "g00", "pages": pages}], "tasks": []})


def test_grid_with_manhattan_heuristic_matches_bfs():
    world = grid_world()
    site = world.sites["s"]
    buf = explored_buffer(world, random.Random(9), walks=60, length=8)
    dist = bfs_distances(buf, buf.root_for("s"))
    goal = site.pages["g22"].obs_id
    assert dist[goal] == 4
    promise = [Rule(Role.HEURISTIC, 1 - (4 - r - c) / 4, context_contains=(f"page: g{r}{c}\n",)) for r in range(3) for c in range(3)]
    cands = astar_search(buf, Q, ScriptedOracle([RELEVANT, *promise]))
    assert [c.terminal for c in cands] == [goal] and len(cands[0]) == 4
    assert replay(site, list(cands[0].actions)).observations[-1].obs_id == goal


def test_repaired_prefixes_replay_to_a_relevant_page():
    oracle = ScriptedOracle([RELEVANT], {"heuristic": 1.0})
    repaired = 0
    seed = 0
    while repaired < 10:
        rng = random.Random(seed)
        seed += 1
        world = random_world(rng, 40, target_prob=0.2)
        site = world.sites["s"]
        targets = {p.obs_id for p in site.pages.values() if any(e.text == TARGET for e in p.elements)}
        buf = explored_buffer(world, rng, walks=15, length=8)
        if not targets & set(buf.nodes):
            continue
        failed = replay(site, [Action.stop("")])
        fixed = repair_navigation(buf, failed, Q, oracle)
        assert fixed is not None
        again = replay(site, list(fixed.actions))
        assert again.observations[-1].obs_id in targets
        assert [o.obs_id for o in again.observations] == [o.obs_id for o in fixed.observations]
        repaired += 1

import json
import multiprocessing

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from webrecall.config import builtin_path
from webrecall.core import FailureLabel, Query
from webrecall.errors import (
    IndexOutOfRange,
    MalformedVerdict,
    OracleBudgetExceeded,
    OracleUnavailable,
    SchemaError,
    VersionMismatch,
)
from webrecall.oracle import (
    BudgetedOracle,
    OracleRequest,
    Role,
    UpdateChoice,
    check_verdict,
    render_context,
)
from webrecall.oracle.remote import RemoteOracle, parse_result
from webrecall.oracle.scripted import Rule, ScriptedOracle, arbitrate

Q = Query("q1", "Which order is newest?", "cms")
TRAJ = "start [page home]\n1. Click [a] -> [page sales]\n2. Stop action: x -> [page sales]"

SAMPLE = {
    Role.HEURISTIC: {"page": "page: home"},
    Role.RELEVANCE: {"page": "page: home"},
    Role.RANK_PATHS: {"candidates": ["route a", "route b"]},
    Role.CLASSIFY_ERROR: {"trajectory": TRAJ},
    Role.LOCATE_FIRST_ERROR: {"trajectory": TRAJ, "horizon": 2},
    Role.REFLECT: {"trajectory": TRAJ, "error_index": 2},
    Role.UPDATE_DECISION: {"old": "o", "new": "n", "old_validated": False, "new_validated": True, "old_length": 3, "new_length": 4},
}


def test_scripted_rules_first_match_wins_then_default():
    oracle = ScriptedOracle(
        [
            Rule(Role.HEURISTIC, 0.9, query_contains="newest", context_contains=("page: sales\n",)),
            Rule(Role.HEURISTIC, 0.2, context_contains=("page: sales",)),
            Rule(Role.CLASSIFY_ERROR, "navigation_failure", context_lacks=("[page sales/orders]",)),
        ],
        defaults={"classify_error": "execution_failure"},
    )
    h = lambda page: oracle.judge(OracleRequest(Role.HEURISTIC, Q, {"page": page})).value
    assert h("page: sales\nx") == 0.9
    assert h("page: sales/orders\nx") == 0.2
    assert h("page: home\nx") == 0.5
    label = lambda t: oracle.judge(OracleRequest(Role.CLASSIFY_ERROR, Q, {"trajectory": t})).value
    assert label(TRAJ) is FailureLabel.NAVIGATION
    assert label(TRAJ + "\n3. Click [o] -> [page sales/orders]") is FailureLabel.EXECUTION
    assert oracle.calls == 5


def test_scripted_role_specials():
    oracle = ScriptedOracle(
        [
            Rule(Role.RANK_PATHS, 0.9, context_contains=("b",)),
            Rule(Role.LOCATE_FIRST_ERROR, {"first_matching": "Stop"}, query_contains="newest"),
            Rule(Role.UPDATE_DECISION, "keep_old", context_contains=("pinned",)),
        ]
    )
    j = lambda role, **ctx: oracle.judge(OracleRequest(role, Q, {**SAMPLE[role], **ctx})).value
    assert j(Role.RANK_PATHS) == [1, 0]
    assert j(Role.LOCATE_FIRST_ERROR) == 2
    assert j(Role.UPDATE_DECISION) is UpdateChoice.TAKE_NEW
    assert j(Role.UPDATE_DECISION, old="pinned") is UpdateChoice.KEEP_OLD
    assert j(Role.RELEVANCE) is False
    other = ScriptedOracle()
    assert other.judge(OracleRequest(Role.LOCATE_FIRST_ERROR, Q, SAMPLE[Role.LOCATE_FIRST_ERROR])).value == 2


@pytest.mark.parametrize(
    "old_v,new_v,old_n,new_n,expected",
    [
        (False, True, 3, 9, UpdateChoice.TAKE_NEW),
        (True, False, 9, 1, UpdateChoice.KEEP_OLD),
        (True, True, 5, 4, UpdateChoice.TAKE_NEW),
        (True, True, 4, 4, UpdateChoice.KEEP_OLD),
        (True, True, 3, 4, UpdateChoice.KEEP_OLD),
        (False, False, 2, 7, UpdateChoice.TAKE_NEW),
    ],
)
def test_default_arbitration(old_v, new_v, old_n, new_n, expected):
    assert arbitrate(old_v, new_v, old_n, new_n) is expected


@pytest.mark.parametrize(
    "role,value",
    [
        (Role.HEURISTIC, 1.5),
        (Role.HEURISTIC, True),
        (Role.RELEVANCE, "yes"),
        (Role.RANK_PATHS, [0, 0]),
        (Role.CLASSIFY_ERROR, "success"),
        (Role.CLASSIFY_ERROR, "bogus"),
        (Role.LOCATE_FIRST_ERROR, 3),
        (Role.LOCATE_FIRST_ERROR, 0),
        (Role.REFLECT, "  "),
        (Role.UPDATE_DECISION, "maybe"),
    ],
)
def test_verdicts_of_the_wrong_shape_are_rejected(role, value):
    with pytest.raises(MalformedVerdict):
        check_verdict(OracleRequest(role, Q, SAMPLE[role]), value)


def test_index_out_of_range_is_specific():
    with pytest.raises(IndexOutOfRange):
        check_verdict(OracleRequest(Role.LOCATE_FIRST_ERROR, Q, SAMPLE[Role.LOCATE_FIRST_ERROR]), 5)


def test_requests_missing_context_are_rejected():
    with pytest.raises(SchemaError):
        ScriptedOracle().judge(OracleRequest(Role.REFLECT, Q, {"trajectory": TRAJ}))
    with pytest.raises(SchemaError):
        ScriptedOracle().judge(OracleRequest(Role.RANK_PATHS, Q, {"candidates": "a"}))


def test_budget_aborts_after_max_calls():
    inner = ScriptedOracle()
    budget = BudgetedOracle(inner, 2)
    req = OracleRequest(Role.RELEVANCE, Q, SAMPLE[Role.RELEVANCE])
    budget.judge(req)
    budget.judge(req)
    with pytest.raises(OracleBudgetExceeded):
        budget.judge(req)
    budget.reset()
    budget.judge(req)
    assert inner.calls == 3


@pytest.mark.parametrize("role", list(Role))
def test_every_role_has_a_prompt_with_all_fields_filled(role):
    text = render_context(OracleRequest(role, Q, SAMPLE[role]))
    assert Q.text in text
    assert "$" not in text


def test_rule_files_round_trip_and_version_check(tmp_path):
    oracle = ScriptedOracle.from_file(builtin_path("oracles", "bench"))
    again = ScriptedOracle.from_dict(json.loads(json.dumps(oracle.to_dict())))
    assert again.rules == oracle.rules and again.defaults == oracle.defaults
    with pytest.raises(VersionMismatch):
        ScriptedOracle.from_dict({"schema": 2})
    with pytest.raises(SchemaError):
        ScriptedOracle.from_dict({"schema": 1, "rules": [{"role": "nope", "verdict": 1}]})
    p = tmp_path / "o.json"
    p.write_text("{")
    with pytest.raises(SchemaError):
        ScriptedOracle.from_file(p)


def _judge_in_child(args):
    path, role, ctx = args
    oracle = ScriptedOracle.from_file(path)
    return oracle.judge(OracleRequest(Role(role), Query("cms-01", "Open the recent orders list and tell me the first order shown.", "cms"), ctx)).value


def test_scripted_verdicts_are_identical_across_processes():
    path = str(builtin_path("oracles", "bench"))
    jobs = [(path, "heuristic", {"page": "page: sales\nx"}), (path, "classify_error", {"trajectory": TRAJ})]
    here = [_judge_in_child(j) for j in jobs]
    with multiprocessing.get_context("spawn").Pool(2) as pool:
        there = pool.map(_judge_in_child, jobs)
    assert here == there == [0.9, FailureLabel.NAVIGATION]


@given(st.sampled_from(list(Role)), st.text(max_size=30))
def test_scripted_handle_is_deterministic(role, text):
    oracle = ScriptedOracle([Rule(Role.HEURISTIC, 0.7, context_contains=("a",))])
    ctx = dict(SAMPLE[role])
    for key in ("page", "trajectory"):
        if key in ctx:
            ctx[key] = text
    req = OracleRequest(role, Q, ctx)
    assert oracle.judge(req) == oracle.judge(req)


# ---------------------------------------------------------------------------
# Remote handle over a mock transport


def _remote(handler, **kw):
    return RemoteOracle("http://oracle.test/judge", client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_remote_round_trip_and_bearer_token(monkeypatch):
    seen = []

    def handler(request):
        body = json.loads(request.content)
        seen.append((body, request.headers.get("authorization")))
        return httpx.Response(200, json={"result": "navigation"})

    monkeypatch.setenv("WEBRECALL_ORACLE_TOKEN", "sekret")
    oracle = _remote(handler)
    assert oracle.judge(OracleRequest(Role.CLASSIFY_ERROR, Q, SAMPLE[Role.CLASSIFY_ERROR])).value is FailureLabel.NAVIGATION
    body, auth = seen[0]
    assert body["role"] == "classify_error" and Q.text in body["prompt"]
    assert body["schema"]["enum"] == ["navigation_failure", "execution_failure"]
    assert auth == "Bearer sekret"


def test_remote_repairs_once_then_fails():
    replies = iter(["garbage", "0.4"])
    oracle = _remote(lambda r: httpx.Response(200, json={"result": next(replies)}))
    assert oracle.judge(OracleRequest(Role.HEURISTIC, Q, SAMPLE[Role.HEURISTIC])).value == 0.4
    bad = _remote(lambda r: httpx.Response(200, json={"result": "garbage"}))
    with pytest.raises(MalformedVerdict):
        bad.judge(OracleRequest(Role.HEURISTIC, Q, SAMPLE[Role.HEURISTIC]))


def test_remote_retries_server_errors_then_reports_unavailable():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    with pytest.raises(OracleUnavailable):
        _remote(handler, retries=2).judge(OracleRequest(Role.RELEVANCE, Q, SAMPLE[Role.RELEVANCE]))
    assert len(calls) == 3
    flaky = iter([httpx.Response(500), httpx.Response(200, json={"result": True})])
    assert _remote(lambda r: next(flaky)).judge(OracleRequest(Role.RELEVANCE, Q, SAMPLE[Role.RELEVANCE])).value is True


def test_remote_rejects_missing_result_and_out_of_range_index():
    with pytest.raises(MalformedVerdict):
        _remote(lambda r: httpx.Response(200, json={"answer": 1})).judge(OracleRequest(Role.RELEVANCE, Q, SAMPLE[Role.RELEVANCE]))
    with pytest.raises(IndexOutOfRange):
        _remote(lambda r: httpx.Response(200, json={"result": 9})).judge(
            OracleRequest(Role.LOCATE_FIRST_ERROR, Q, SAMPLE[Role.LOCATE_FIRST_ERROR])
        )


def test_parse_result_coercions():
    assert parse_result(Role.HEURISTIC, 1.7) == 1.0
    assert parse_result(Role.RELEVANCE, "Yes") is True
    assert parse_result(Role.RANK_PATHS, "[1, 0]") == [1, 0]
    assert parse_result(Role.CLASSIFY_ERROR, "Execution") == "execution_failure"
    assert parse_result(Role.LOCATE_FIRST_ERROR, " 3 ") == 3
    assert parse_result(Role.UPDATE_DECISION, "TAKE_NEW") == "take_new"


def test_classify_prompt_carries_the_actions_and_both_definitions():
    text = render_context(OracleRequest(Role.CLASSIFY_ERROR, Q, SAMPLE[Role.CLASSIFY_ERROR]))
    assert "1. Click [a] -> [page sales]" in text and "2. Stop action: x" in text
    assert "- navigation_failure:" in text and "- execution_failure:" in text


def test_update_prompt_carries_both_trajectories():
    ctx = {**SAMPLE[Role.UPDATE_DECISION], "old": "OLD-ROUTE", "new": "NEW-ROUTE"}
    text = render_context(OracleRequest(Role.UPDATE_DECISION, Q, ctx))
    assert "OLD-ROUTE" in text and "NEW-ROUTE" in text

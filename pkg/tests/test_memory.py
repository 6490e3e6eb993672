import hashlib
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import mini_world
from webrecall.core import Action, FailureLabel, Query
from webrecall.env import replay
from webrecall.errors import OracleUnavailable, SchemaError
from webrecall.memory import (
    Embedder,
    EmbedMethod,
    MemoryStore,
    MemoryValue,
    UpdateOutcome,
    cosine,
    embed,
    lookup,
    update,
)
from webrecall.oracle import OracleHandle
from webrecall.oracle.scripted import ScriptedOracle


@pytest.fixture(scope="module")
def site():
    return mini_world().sites["cms"]


def value(site, n_steps, validated):
    """A stored value whose trajectory has ``n_steps`` actions (back and forth from the home page)."""
    actions = [Action.click("11-sales"), Action.click("90-home")] * n_steps
    traj = replay(site, actions[:n_steps])
    label = FailureLabel.SUCCESS if validated else FailureLabel.EXECUTION
    return MemoryValue(traj, "why", label)


def test_hashed_bag_of_words_matches_an_independent_computation():
    e = Embedder(dim=256)
    vec = e.embed("Open the orders list")
    ref = np.zeros(256)
    for tok in ["open", "the", "orders", "list"]:
        ref[int.from_bytes(hashlib.blake2b(tok.encode(), digest_size=8).digest(), "big") % 256] += 1
    assert np.array_equal(vec, ref / np.linalg.norm(ref))
    # three shared tokens out of four, no bucket collisions
    assert cosine(e.embed("open the orders list"), e.embed("open the invoices list")) == pytest.approx(0.75, abs=1e-12)


def test_empty_text_embeds_to_a_fixed_unit_vector():
    v = Embedder(8).embed("!!!")
    assert v.tolist() == [1.0] + [0.0] * 7


@given(st.text(max_size=80))
def test_embed_is_deterministic_and_unit_norm(text):
    e = Embedder(64)
    a, b = embed(e, text), embed(e, text)
    assert np.array_equal(a, b)
    assert abs(float(np.linalg.norm(a)) - 1.0) < 1e-12


def test_embedder_validation_and_round_trip():
    with pytest.raises(ValueError):
        Embedder(0)
    with pytest.raises(ValueError):
        Embedder(8, EmbedMethod.REMOTE)
    e = Embedder(32, EmbedMethod.REMOTE, "http://x")
    assert Embedder.from_dict(e.to_dict()) == e


def test_lookup_orders_by_similarity_then_insertion(site):
    store = MemoryStore(Embedder(256))
    v = value(site, 1, True)
    store.insert(Query("a", "open the invoices list", "cms"), v)
    store.insert(Query("b", "open the orders list", "cms"), v)
    store.insert(Query("c", "open the orders list", "shop"), v)
    store.insert(Query("d", "completely unrelated words", "cms"), v)
    got = lookup(store, Query("p", "open the orders list", "cms"), k=3)
    assert [(e.query.id, round(s, 6)) for e, s in got] == [("b", 1.0), ("c", 1.0), ("a", 0.75)]
    assert [e.query.id for e, _ in store.lookup(Query("p", "open the orders list", "cms"), 3, site="cms")] == ["b", "a"]
    assert store.lookup(Query("p", "open the orders list", "cms"), 5, min_similarity=0.9)[-1][0].query.id == "c"
    with pytest.raises(ValueError):
        store.lookup(Query("p", "x", "cms"), 0)
    assert MemoryStore().lookup(Query("p", "x", "cms")) == []


def test_update_inserts_replaces_or_keeps(site):
    store = MemoryStore()
    oracle = ScriptedOracle()
    q = Query("t", "what is the newest order", "cms")
    assert update(store, q, value(site, 2, False), oracle) is UpdateOutcome.INSERTED
    # validated beats non-validated
    assert store.update(q, value(site, 3, True), oracle) is UpdateOutcome.REPLACED
    assert store.entries[0].version == 1 and store.entries[0].value.validated
    # a longer validated trajectory does not replace a shorter one
    assert store.update(q, value(site, 4, True), oracle) is UpdateOutcome.KEPT
    assert store.update(q, value(site, 1, False), oracle) is UpdateOutcome.KEPT
    assert store.update(q, value(site, 1, True), oracle) is UpdateOutcome.REPLACED
    assert len(store) == 1 and store.entries[0].value.trajectory.horizon == 1
    # same text on another site never merges
    assert store.update(Query("u", q.text, "shop"), value(site, 1, True), oracle) is UpdateOutcome.INSERTED
    assert len(store) == 2


def test_update_keeps_the_old_value_when_the_oracle_is_down(site):
    class Down(OracleHandle):
        def _answer(self, req):
            raise OracleUnavailable("down")

    store = MemoryStore()
    q = Query("t", "what is the newest order", "cms")
    store.update(q, value(site, 2, False), Down())
    assert store.update(q, value(site, 1, True), Down()) is UpdateOutcome.KEPT


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 5), st.booleans()), max_size=25))
def test_update_never_decreases_validated_entries(site, ops):
    store = MemoryStore()
    oracle = ScriptedOracle()
    texts = ["newest order", "oldest order", "first invoice", "top search term"]
    shortest: dict[int, int] = {}
    for t, n, ok in ops:
        before = sum(e.value.validated for e in store.entries)
        store.update(Query(str(t), texts[t], "cms"), value(site, n, ok), oracle)
        assert sum(e.value.validated for e in store.entries) >= before
        entry = next(e for e in store.entries if e.query.text == texts[t])
        if t in shortest:
            assert entry.value.validated and entry.value.trajectory.horizon <= shortest[t]
        if entry.value.validated:
            shortest[t] = entry.value.trajectory.horizon


def test_pinned_obs_ids_cover_every_stored_trajectory(site):
    store = MemoryStore()
    v = value(site, 2, True)
    store.insert(Query("a", "x y", "cms"), v)
    assert store.pinned_obs_ids() == v.trajectory.observation_ids()


def test_persist_load_round_trip_and_errors(site, tmp_path):
    store = MemoryStore(Embedder(32), 0.9, 0.1)
    rng = random.Random(0)
    for i in range(5):
        store.update(Query(f"q{i}", f"query number {rng.random()}", "cms"), value(site, i % 3, i % 2 == 0), ScriptedOracle())
    p = tmp_path / "m.jsonl"
    store.persist(p)
    loaded = MemoryStore.load(p)
    assert loaded == store and loaded.dedup_threshold == 0.9 and loaded.min_similarity == 0.1
    text = p.read_text().split("\n")
    p.write_text(text[0].replace('"dim":32', '"dim":16') + "\n" + "\n".join(text[1:]))
    with pytest.raises(SchemaError):
        MemoryStore.load(p)
    p.write_text('{"schema":1,"kind":"memory"}\n')
    with pytest.raises(SchemaError):
        MemoryStore.load(p)


def test_value_and_entry_rendering(site):
    v = MemoryValue(replay(site, [Action.click("11-sales")]), "Click 'Sort' first.", FailureLabel.EXECUTION)
    assert v.render() == "1. Click [11-sales]\nRationale: Click 'Sort' first."
    store = MemoryStore()
    entry = store.insert(Query("a", "newest order?", "cms"), v)
    assert entry.render() == "Query: newest order?\n" + v.render()
    assert entry.query_text == "newest order?"
    assert MemoryValue.from_dict(v.to_dict()) == v


def test_related_order_queries_are_closer_than_unrelated_ones():
    e = Embedder(256)
    probe = e.embed("oldest complete order")
    related = cosine(probe, e.embed("billing name of the oldest complete order"))
    unrelated = cosine(probe, e.embed("top search terms"))
    # three shared tokens: 3 / sqrt(3 * 7)
    assert related == pytest.approx(3 / 21 ** 0.5, abs=1e-12)
    assert unrelated == 0.0 and related > unrelated


def test_fifty_entry_store_matches_an_exhaustive_scan(site):
    rng = random.Random(50)
    vocab = "open list order invoice newest oldest price customer search term review post".split()
    store = MemoryStore(Embedder(64), min_similarity=-1.0)
    v = value(site, 1, True)
    for i in range(50):
        store.insert(Query(f"q{i}", " ".join(rng.choices(vocab, k=4)), "cms"), v)
    probe = Query("p", "newest order in the list", "cms")
    pv = store.embedder.embed(probe.text)
    scored = sorted(((-round(float(np.dot(pv, store.embedder.embed(e.query.text))), 12), i) for i, e in enumerate(store.entries)))
    assert [e.query.id for e, _ in store.lookup(probe, 3)] == [store.entries[i].query.id for _, i in scored[:3]]

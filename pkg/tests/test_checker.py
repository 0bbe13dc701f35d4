import pytest
from hypothesis import given, settings, strategies as st

from tripath.checker import (
    BudgetExceeded,
    HistoryEvent,
    HistoryRecorder,
    OracleDict,
    check_linearizable,
    dump_history,
    keysum_verify,
    load_history,
    structural_validate,
)
from tripath.policy import PolicyKind
from tripath.trees import BstDictionary, DictConfig


def ev(tid, kind, args, response, inv, resp):
    return HistoryEvent(tid, kind, tuple(args), response, inv, resp)


def test_empty_and_single_threaded_histories_are_ok():
    assert check_linearizable([])
    history = [
        ev(0, "insert", (5, 1), True, 1, 2),
        ev(0, "search", (5,), 1, 3, 4),
        ev(0, "delete", (5,), True, 5, 6),
        ev(0, "search", (5,), None, 7, 8),
    ]
    verdict = check_linearizable(history)
    assert verdict.ok
    assert len(verdict.witness) == 4


def test_lost_update_is_a_violation():
    # two inserts of the same key both reported "absent" with no delete in
    # between: impossible sequentially
    history = [
        ev(0, "insert", (3, 1), True, 1, 4),
        ev(1, "insert", (3, 2), True, 2, 3),
        ev(0, "search", (3,), 2, 5, 6),
    ]
    verdict = check_linearizable(history)
    assert not verdict.ok
    assert len(verdict.witness) < len(history)


def test_real_time_order_is_respected():
    # a search that starts strictly after a completed insert must see it
    history = [
        ev(0, "insert", (7, 1), True, 1, 2),
        ev(1, "search", (7,), None, 3, 4),
    ]
    assert not check_linearizable(history).ok
    # overlapping operations may order either way
    history = [
        ev(0, "insert", (7, 1), True, 1, 4),
        ev(1, "search", (7,), None, 2, 3),
    ]
    assert check_linearizable(history).ok


def test_range_query_responses_are_checked():
    history = [
        ev(0, "insert", (1, 10), True, 1, 2),
        ev(0, "insert", (3, 30), True, 3, 4),
        ev(1, "range_query", (0, 5), ((1, 10), (3, 30)), 5, 6),
    ]
    assert check_linearizable(history).ok
    history[-1] = ev(1, "range_query", (0, 5), ((1, 10),), 5, 6)
    assert not check_linearizable(history).ok


def test_budget_limits_enforced():
    history = [ev(t, "search", (1,), None, 2 * i + 1, 2 * i + 2) for i, t in enumerate([0, 1, 2, 3])]
    with pytest.raises(BudgetExceeded):
        check_linearizable(history)
    history = [ev(0, "search", (1,), None, 2 * i + 1, 2 * i + 2) for i in range(37)]
    with pytest.raises(BudgetExceeded):
        check_linearizable(history)


def test_oracle_dict_semantics():
    o = OracleDict()
    assert o.apply("insert", (1, 5)) is True
    assert o.apply("insert", (1, 6)) is False
    assert o.apply("search", (1,)) == 6
    assert o.apply("range_query", (0, 9)) == ((1, 6),)
    assert o.apply("delete", (1,)) is True
    assert o.apply("delete", (1,)) is False


def test_recorder_produces_checkable_history():
    d = BstDictionary(DictConfig(policy=PolicyKind.NON_HTM))
    rec = HistoryRecorder(d)
    rec.insert(4, 44)
    rec.search(4)
    rec.range_query(0, 10)
    rec.delete(4)
    history = rec.history()
    assert [e.kind for e in history] == ["insert", "search", "range_query", "delete"]
    assert check_linearizable(history).ok


def test_history_serialization_roundtrip():
    history = [
        ev(0, "insert", (5, 1), True, 1, 2),
        ev(1, "range_query", (0, 9), ((5, 1),), 3, 6),
        ev(2, "search", (5,), 1, 4, 5),
        ev(0, "delete", (5,), True, 7, 8),
    ]
    text = dump_history(history)
    assert "→" in text and "@1,2" in text
    assert load_history(text) == sorted(history, key=lambda e: e.inv)


def test_keysum_verify():
    d = BstDictionary(DictConfig(policy=PolicyKind.NON_HTM))
    assert keysum_verify([0], d)
    d.insert(7, 1)
    assert keysum_verify([7], d)
    d.insert(4, 1)
    d.delete(7)
    assert keysum_verify([7 + 4 - 7], d)
    assert not keysum_verify([99], d)


def test_structural_validate_delegates():
    d = BstDictionary(DictConfig(policy=PolicyKind.NON_HTM))
    assert structural_validate(d) == []


@settings(deadline=None, max_examples=50)
@given(
    ops=st.lists(
        st.tuples(st.sampled_from(["insert", "delete", "search"]), st.integers(0, 5)),
        max_size=12,
    )
)
def test_sequential_histories_always_linearizable(ops):
    o = OracleDict()
    history = []
    now = 0
    for kind, k in ops:
        args = (k, k) if kind == "insert" else (k,)
        response = o.apply(kind, args)
        history.append(ev(0, kind, args, response, now + 1, now + 2))
        now += 2
    assert check_linearizable(history).ok

import pytest

from tripath.engine import EmulatedEngine, TxnConfig, AbortReason, FAILED_VALIDATION
from tripath.llxscx import (
    ABORTED,
    COMMITTED,
    FAIL,
    FINALIZED,
    IN_PROGRESS,
    DataRecord,
    ScxRecord,
    SyncLayer,
    is_tagged,
    make_tagged_seq,
    tagged_pid,
    tagged_seq,
)
from tripath.scripting import StepScheduler


def make_layer(debug=False, **engine_kw):
    eng = EmulatedEngine(TxnConfig(**engine_kw))
    return SyncLayer(eng, max_processes=8, debug=debug)


def fresh_target(layer):
    return DataRecord(layer)


def test_tagged_seq_layout():
    ts = make_tagged_seq(5, 9)
    assert ts & 1 == 1
    assert tagged_pid(ts) == 5
    assert tagged_seq(ts) == 9
    assert is_tagged(ts)


def test_llx_snapshot_of_quiescent_record():
    layer = make_layer()
    p = layer.register_process()
    child = fresh_target(layer)
    rec = DataRecord(layer, links=(child, None))
    snap = layer.llx_o(p, rec)
    assert snap == (child, None)
    assert layer.linked_snapshot(p, rec) == (child, None)


def test_single_process_scx_updates_link():
    layer = make_layer()
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    assert layer.llx_o(p, rec) == (None,)
    assert layer.scx_o(p, [rec], [], (rec, 0), new)
    assert rec.links[0].load() is new
    # record was in V \ R: still usable
    assert layer.llx_o(p, rec) == (new,)


def test_scx_finalizes_records_and_llx_reports_it():
    layer = make_layer()
    p = layer.register_process()
    parent = DataRecord(layer, links=(None,))
    victim = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    assert layer.llx_o(p, parent) == (None,)
    assert layer.llx_o(p, victim) == (None,)
    assert layer.scx_o(p, [parent, victim], [victim], (parent, 0), new)
    assert layer.llx_o(p, victim) is FINALIZED
    assert victim.marked.load() is True


def test_scx_fails_after_interfering_update():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_o(p, rec) == (None,)
    # q races in between p's llx and scx
    assert layer.llx_o(q, rec) == (None,)
    q_new = fresh_target(layer)
    assert layer.scx_o(q, [rec], [], (rec, 0), q_new)
    p_new = fresh_target(layer)
    assert not layer.scx_o(p, [rec], [], (rec, 0), p_new)
    assert rec.links[0].load() is q_new


def test_llx_mid_scx_helps_owner_to_completion():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    r0 = DataRecord(layer, links=(None,))
    r1 = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    sched = StepScheduler()
    descs = []

    def probe(event, **kw):
        if event == "frozen":
            descs.append(kw["desc"])
            sched.checkpoint("frozen")

    layer.probe = probe

    def p_scx():
        assert layer.llx_o(p, r0) == (None,)
        assert layer.llx_o(p, r1) == (None,)
        return layer.scx_o(p, [r0, r1], [], (r0, 0), new)

    sched.spawn("p", p_scx)
    sched.run_until("p", "frozen")  # both records frozen, commit not yet done
    layer.probe = None

    res = layer.llx_o(q, r0)  # must help p's operation first, then fail
    assert res is FAIL
    assert descs[0].state.load() == COMMITTED
    assert r0.links[0].load() is new
    assert sched.finish("p") is True


def test_help_frozen_check_branch_returns_true():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    probes = []
    assert layer.llx_o(p, rec) == (None,)
    new = fresh_target(layer)
    # capture p's descriptor via probe
    layer.probe = lambda event, **kw: probes.append(kw.get("desc")) if event == "commit" else None
    assert layer.scx_o(p, [rec], [], (rec, 0), new)
    layer.probe = None
    desc = probes[0]
    assert desc.all_frozen.load() is True
    # another operation re-freezes rec, so desc's freezing CAS can no longer apply
    assert layer.llx_o(q, rec) == (new,)
    assert layer.scx_o(q, [rec], [], (rec, 0), fresh_target(layer))
    # late helper of the already-committed desc
    assert layer.help(desc) is True
    assert desc.state.load() == COMMITTED


def test_help_abort_branch_sets_aborted():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_o(p, rec) == (None,)
    assert layer.llx_o(q, rec) == (None,)
    assert layer.scx_o(q, [rec], [], (rec, 0), fresh_target(layer))
    # p's scx now operates on a stale link snapshot: first freezing CAS fails
    probes = []
    layer.probe = lambda event, **kw: probes.append(event)
    assert not layer.scx_o(p, [rec], [], (rec, 0), fresh_target(layer))
    layer.probe = None
    assert "abort" in probes


def test_racing_helpers_apply_effect_exactly_once():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    other = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    sched = StepScheduler()

    def probe(event, **kw):
        if event == "frozen":
            sched.checkpoint("frozen")

    layer.probe = probe

    def p_scx():
        assert layer.llx_o(p, rec) == (None,)
        assert layer.llx_o(p, other) == (None,)
        return layer.scx_o(p, [rec, other], [other], (rec, 0), new)

    sched.spawn("p", p_scx)
    sched.run_until("p", "frozen")
    layer.probe = None

    # q helps the whole operation to completion
    assert layer.llx_o(q, rec) is FAIL
    assert rec.links[0].load() is new
    version_after_help = rec.links[0]._vv[1]
    # p then replays mark/update/commit idempotently
    assert sched.finish("p") is True
    assert rec.links[0].load() is new
    assert rec.links[0]._vv[1] == version_after_help  # update CAS applied once
    assert other.marked.load() is True


# ---------------------------------------------------------------------------
# tag-aware llx
# ---------------------------------------------------------------------------


def test_llx_htm_treats_tagged_info_as_unfrozen():
    layer = make_layer()
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    rec.info.store(make_tagged_seq(3, 42))
    snap = layer.llx_htm(p, rec)
    assert snap == (None,)


def test_llx_o_rejects_tagged_info():
    layer = make_layer()
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    rec.info.store(make_tagged_seq(3, 42))
    with pytest.raises(AssertionError):
        layer.llx_o(p, rec)


def test_llx_htm_tagged_and_marked_is_finalized_without_help():
    layer = make_layer()
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    rec.info.store(make_tagged_seq(3, 42))
    rec.marked.store(True)
    events = []
    layer.probe = lambda event, **kw: events.append(event)
    assert layer.llx_htm(p, rec) is FINALIZED
    layer.probe = None
    assert events == []  # no help call ever happened


def test_llx_htm_on_in_progress_descriptor_helps_then_fails():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    sched = StepScheduler()
    layer.probe = lambda event, **kw: sched.checkpoint(event) if event == "frozen" else None

    def q_scx():
        assert layer.llx_htm(q, rec) == (None,)
        return layer.scx_o(q, [rec], [], (rec, 0), new)

    sched.spawn("q", q_scx)
    sched.run_until("q", "frozen")
    layer.probe = None
    assert layer.llx_htm(p, rec) is FAIL
    assert rec.links[0].load() is new  # p helped q's operation
    assert sched.finish("q") is True


# ---------------------------------------------------------------------------
# transactional scx
# ---------------------------------------------------------------------------


def test_scx_htm_commits_fresh_tagged_values():
    layer = make_layer()
    p = layer.register_process()
    rec0 = DataRecord(layer, links=(None,))
    rec1 = DataRecord(layer, links=(None,))
    new = fresh_target(layer)
    assert layer.llx_htm(p, rec0) == (None,)
    assert layer.llx_htm(p, rec1) == (None,)
    out = layer.engine.txn_execute(
        lambda ctx: layer.scx_htm(p, ctx, [rec0, rec1], [rec1], (rec0, 0), new)
    )
    assert out.committed and out.value is True
    info0, info1 = rec0.info.load(), rec1.info.load()
    assert is_tagged(info0) and info0 == info1
    assert tagged_pid(info0) == p
    assert rec0.links[0].load() is new
    assert rec1.marked.load() is True
    assert layer.llx_htm(p, rec1) is FINALIZED


def test_scx_htm_values_are_distinct_across_operations():
    layer = make_layer(debug=True)
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    seen = []
    for pid in (p, q, p, q):
        assert layer.llx_htm(pid, rec) is not FAIL
        out = layer.engine.txn_execute(
            lambda ctx: layer.scx_htm(pid, ctx, [rec], [], (rec, 0), fresh_target(layer))
        )
        assert out.committed
        seen.append(rec.info.load())
    assert len(set(seen)) == len(seen)
    history = rec.info_history_values()
    assert len(set(map(id, history))) == len(history)


def test_scx_htm_aborts_on_stale_info():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_htm(p, rec) == (None,)
    # q commits an update in between
    assert layer.llx_htm(q, rec) == (None,)
    assert layer.scx_o(q, [rec], [], (rec, 0), fresh_target(layer))
    out = layer.engine.txn_execute(
        lambda ctx: layer.scx_htm(p, ctx, [rec], [], (rec, 0), fresh_target(layer))
    )
    assert out.reason is AbortReason.EXPLICIT
    assert out.code == FAILED_VALIDATION


def test_scx_htm_aborts_when_record_frozen_by_cas_path():
    layer = make_layer()
    p = layer.register_process()
    q = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_htm(p, rec) == (None,)

    sched = StepScheduler()
    layer.probe = lambda event, **kw: sched.checkpoint(event) if event == "frozen" else None

    def q_scx():
        assert layer.llx_htm(q, rec) == (None,)
        return layer.scx_o(q, [rec], [], (rec, 0), fresh_target(layer))

    sched.spawn("q", q_scx)
    sched.run_until("q", "frozen")  # rec now frozen, descriptor in progress
    layer.probe = None

    assert layer.scx_dispatch(p, [rec], [], (rec, 0), fresh_target(layer), budget=5) is False
    assert layer.attempts(p) == 1  # consumed one try, not reset
    assert sched.finish("q") is True


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------


def test_dispatch_commits_first_try_and_resets_budget():
    layer = make_layer()
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_htm(p, rec) == (None,)
    assert layer.scx_dispatch(p, [rec], [], (rec, 0), fresh_target(layer), budget=20)
    assert layer.attempts(p) == 0
    assert is_tagged(rec.info.load())


def test_dispatch_exhausts_budget_then_uses_cas_path(monkeypatch):
    layer = make_layer(spurious_abort_prob=1.0)
    p = layer.register_process()
    rec = DataRecord(layer, links=(None,))
    assert layer.llx_htm(p, rec) == (None,)

    calls = {"txn": 0}
    real = layer.engine.txn_execute

    def counting(body, config=None, commit_probe=None):
        calls["txn"] += 1
        return real(body, config, commit_probe)

    monkeypatch.setattr(layer.engine, "txn_execute", counting)
    new = fresh_target(layer)
    assert layer.scx_dispatch(p, [rec], [], (rec, 0), new, budget=7) is True
    assert calls["txn"] == 7  # exactly the budget, then the CAS path ran
    assert rec.links[0].load() is new
    assert not is_tagged(rec.info.load())  # CAS path froze with a descriptor
    assert layer.attempts(p) == 0  # reset on success


def test_mixed_paths_preserve_freshness_and_tag_discipline():
    layer = make_layer(debug=True)
    p = layer.register_process()  # transactional updater
    q = layer.register_process()  # CAS-path updater
    recs = [DataRecord(layer, links=(None,)) for _ in range(4)]

    import random

    rng = random.Random(42)
    for step in range(120):
        rec = rng.choice(recs)
        if step % 2 == 0:
            if layer.llx_htm(p, rec) in (FAIL, FINALIZED):
                continue
            layer.engine.txn_execute(
                lambda ctx: layer.scx_htm(p, ctx, [rec], [], (rec, 0), fresh_target(layer))
            )
        else:
            if layer.llx_htm(q, rec) in (FAIL, FINALIZED):
                continue
            layer.scx_o(q, [rec], [], (rec, 0), fresh_target(layer))

    for rec in recs:
        history = rec.info_history_values()
        # freshness: no value repeats in the record's info history
        assert len(set(map(id, history))) == len(history)
        for value in history:
            if isinstance(value, int):
                assert value & 1 == 1
            else:
                assert isinstance(value, ScxRecord)


def test_finalized_record_links_never_change_again():
    layer = make_layer()
    p = layer.register_process()
    parent = DataRecord(layer, links=(None,))
    victim = DataRecord(layer, links=(None,))
    assert layer.llx_o(p, parent) == (None,)
    assert layer.llx_o(p, victim) == (None,)
    assert layer.scx_o(p, [parent, victim], [victim], (parent, 0), fresh_target(layer))
    frozen_value = victim.links[0].load()
    assert layer.llx_o(p, victim) is FINALIZED
    # no further scx can involve victim: any llx returns FINALIZED, so a
    # linked snapshot can never be produced again
    assert victim.links[0].load() is frozen_value


def test_allocation_counters_track_record_creation():
    layer = make_layer()
    p = layer.register_process()
    base = layer.alloc_count(p)
    DataRecord(layer)
    DataRecord(layer, links=(None, None))
    assert layer.alloc_count(p) == base + 2

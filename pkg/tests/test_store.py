import random
import threading

import pytest

from lazykv.store import (
    Compare,
    CompareRelation,
    CompareTarget,
    DeleteRangeOp,
    EventType,
    InvalidRange,
    MalformedTxn,
    PutOp,
    RangeOp,
    StoreNode,
    TxnRequest,
    UnknownWatchId,
)


def make_store(node_id=1, start_ms=0):
    t = {"now": start_ms}
    s = StoreNode(node_id, now_fn=lambda: t["now"])
    s._test_time = t
    return s


def sync(src: StoreNode, dst: StoreNode):
    for op in src.replica.ops_missing_from(dst.replica.applied_snapshot()):
        dst.apply_remote(op)


class TestPut:
    def test_put_on_empty_store(self):
        s = make_store()
        prev, rev = s.put(b"a", b"1")
        assert prev is None
        assert rev == 1
        entry = s.entry(b"a")
        assert (entry.value, entry.create_revision, entry.mod_revision,
                entry.version) == (b"1", 1, 1, 1)

    def test_second_put_bumps_version(self):
        s = make_store()
        s.put(b"a", b"1")
        prev, rev = s.put(b"a", b"2")
        assert prev.value == b"1"
        assert rev == 2
        assert s.entry(b"a").version == 2

    def test_remote_op_advances_version_and_mod_revision(self):
        # Hand-executed scenario: node1 put, then node2's concurrent put
        # arrives. Two applied ops => rev 2, version 2 on node1.
        n1, n2 = make_store(1, start_ms=10), make_store(2, start_ms=20)
        n1.put(b"k", b"local")
        n2.put(b"k", b"remote")
        sync(n2, n1)
        entry = n1.entry(b"k")
        assert entry.version == 2
        assert entry.mod_revision == n1.revision == 2
        # node2's stamp is later (start_ms 20 > 10), so its value wins
        assert entry.value == b"remote"

    def test_empty_key_rejected(self):
        with pytest.raises(InvalidRange):
            make_store().put(b"", b"v")


class TestRange:
    def test_empty_store(self):
        assert make_store().range(b"a", b"z") == ([], 0)

    def test_half_open_interval(self):
        s = make_store()
        for k in (b"a", b"b", b"c"):
            s.put(k, b"v")
        entries, count = s.range(b"a", b"c")
        assert [e.key for e in entries] == [b"a", b"b"]
        assert count == 2

    def test_limit_reports_full_count(self):
        # Oracle: brute-force filter over the full key set.
        s = make_store()
        keys = [b"a", b"b", b"c"]
        for k in keys:
            s.put(k, b"v")
        expected = sorted(k for k in keys if b"a" <= k < b"z")
        entries, count = s.range(b"a", b"z", limit=1)
        assert count == len(expected) == 3
        assert [e.key for e in entries] == expected[:1]

    def test_single_key_and_to_end_forms(self):
        s = make_store()
        for k in (b"a", b"b"):
            s.put(k, b"v")
        entries, count = s.range(b"a")
        assert count == 1 and entries[0].key == b"a"
        entries, count = s.range(b"a", b"\x00")
        assert [e.key for e in entries] == [b"a", b"b"]

    def test_inverted_range_rejected(self):
        with pytest.raises(InvalidRange):
            make_store().range(b"z", b"a")

    def test_serializable_flag_served_locally(self):
        s = make_store()
        s.put(b"a", b"1")
        assert s.range(b"a", serializable=True) == s.range(b"a", serializable=False)


class TestDeleteRange:
    def test_empty_range(self):
        assert make_store().delete_range(b"a", b"z") == 0

    def test_deletes_live_keys(self):
        s = make_store()
        s.put(b"a", b"1")
        s.put(b"b", b"2")
        assert s.delete_range(b"a", b"z") == 2
        assert s.range(b"a", b"z") == ([], 0)

    def test_concurrent_remote_put_resurfaces_key(self):
        # Oracle: the crdt winner rule. The delete and the remote put are
        # concurrent siblings; the put has the later hlc so it wins.
        n1, n2 = make_store(1, start_ms=10), make_store(2, start_ms=50)
        n1.put(b"k", b"v")
        sync(n1, n2)
        n1.delete_range(b"k")
        n2.put(b"k", b"remote")  # concurrent with the delete
        sync(n2, n1)
        assert n1.entry(b"k") is not None
        assert n1.entry(b"k").value == b"remote"
        assert n1.replica.winner(b"k") == b"remote"

    def test_recreate_resets_version_and_create_revision(self):
        s = make_store()
        s.put(b"a", b"1")
        s.delete_range(b"a")
        s.put(b"a", b"2")
        e = s.entry(b"a")
        assert (e.create_revision, e.version) == (3, 1)


class TestTxn:
    def test_version_eq_zero_on_absent_key(self):
        s = make_store()
        res = s.txn(TxnRequest(
            compares=(Compare(b"a", CompareTarget.VERSION, CompareRelation.EQ, 0),),
            success=(PutOp(b"a", b"1"),),
        ))
        assert res.succeeded
        assert s.entry(b"a").value == b"1"

    def test_mod_revision_compare_after_put(self):
        s = make_store()
        _, rev = s.put(b"a", b"1")
        res = s.txn(TxnRequest(
            compares=(Compare(b"a", CompareTarget.MOD_REVISION,
                              CompareRelation.EQ, rev),),
            success=(PutOp(b"a", b"2"), RangeOp(b"a")),
            failure=(PutOp(b"a", b"never"),),
        ))
        assert res.succeeded
        assert s.entry(b"a").value == b"2"
        range_result = res.responses[1]
        assert range_result.entries[0].value == b"2"  # sees the txn's own put

    def test_failure_branch(self):
        s = make_store()
        s.put(b"a", b"1")
        res = s.txn(TxnRequest(
            compares=(Compare(b"a", CompareTarget.VALUE, CompareRelation.EQ, b"x"),),
            success=(PutOp(b"a", b"yes"),),
            failure=(DeleteRangeOp(b"a"),),
        ))
        assert not res.succeeded
        assert res.responses[0].deleted == 1

    def test_unsynced_replicas_evaluate_their_own_snapshot(self):
        # Staleness is by design: each node's txn sees only local state.
        n1, n2 = make_store(1), make_store(2)
        n1.put(b"a", b"1")
        req = TxnRequest(
            compares=(Compare(b"a", CompareTarget.VALUE, CompareRelation.EQ, b"1"),),
        )
        assert n1.txn(req).succeeded is True
        assert n2.txn(req).succeeded is False  # hasn't synced; local snapshot says absent

    def test_malformed_txn(self):
        s = make_store()
        with pytest.raises(MalformedTxn):
            s.txn(TxnRequest(compares=(
                Compare(b"a", CompareTarget.VALUE, CompareRelation.EQ, 7),),))
        with pytest.raises(MalformedTxn):
            s.txn(TxnRequest(compares=(
                Compare(b"", CompareTarget.VERSION, CompareRelation.EQ, 0),),))
        with pytest.raises(MalformedTxn):
            s.txn(TxnRequest(success=(PutOp(b"", b"v"),)))

    def test_txn_revision_window_is_contiguous_under_concurrency(self):
        s = make_store()
        errors = []

        def txn_worker(tag):
            try:
                for i in range(25):
                    res = s.txn(TxnRequest(success=(
                        PutOp(f"{tag}-{i}-x".encode(), b"1"),
                        PutOp(f"{tag}-{i}-y".encode(), b"2"),
                        PutOp(f"{tag}-{i}-z".encode(), b"3"),
                    )))
                    revs = [r.revision for r in res.responses]
                    if revs != list(range(revs[0], revs[0] + 3)):
                        errors.append(revs)
            except Exception as e:  # pragma: no cover
                errors.append(e)

        threads = [threading.Thread(target=txn_worker, args=(t,)) for t in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        assert s.revision == 4 * 25 * 3


class TestWatch:
    def test_put_in_range_fires_once(self):
        s = make_store()
        reg = s.watch_create(b"a", b"c")
        s.put(b"b", b"1")
        s.put(b"z", b"ignored")
        events = reg.stream.drain()
        assert len(events) == 1
        assert events[0].type is EventType.PUT
        assert events[0].kv.key == b"b"

    def test_delete_event(self):
        s = make_store()
        s.put(b"b", b"1")
        reg = s.watch_create(b"a", b"c")
        s.delete_range(b"b")
        events = reg.stream.drain()
        assert [e.type for e in events] == [EventType.DELETE]
        assert events[0].kv.version == 0
        assert events[0].prev_kv.value == b"1"

    def test_start_revision_replays_history(self):
        s = make_store()
        s.put(b"a", b"1")
        s.put(b"b", b"2")
        s.put(b"a", b"3")
        reg = s.watch_create(b"a", b"c", start_revision=2)
        events = reg.stream.drain()
        assert [(e.kv.key, e.kv.mod_revision) for e in events] == [(b"b", 2), (b"a", 3)]

    def test_cancel_stops_delivery_and_is_idempotent(self):
        s = make_store()
        reg = s.watch_create(b"a", b"c")
        assert s.watch_cancel(reg.watch_id) is True
        s.put(b"b", b"1")
        assert reg.stream.drain() == []
        assert s.watch_cancel(reg.watch_id) is False
        with pytest.raises(UnknownWatchId):
            s.watch_cancel(999)

    def test_random_ops_match_bruteforce_oracle(self):
        # Independent oracle: replay the same op sequence against a plain
        # dict model, counting revisions, and filter by range ourselves.
        rng = random.Random(42)
        s = make_store()
        watch_start, watch_end, watch_from = b"k2", b"k7", 20
        reg = s.watch_create(watch_start, watch_end, start_revision=watch_from)

        model: dict[bytes, bytes] = {}
        expected: list[tuple[str, bytes]] = []
        rev = 0
        for _ in range(100):
            key = f"k{rng.randrange(10)}".encode()
            if rng.random() < 0.7:
                rev += 1
                model[key] = rng.randbytes(3)
                s.put(key, model[key])
                kind = "PUT"
                fired = True
            else:
                existed = key in model
                deleted = s.delete_range(key)
                assert deleted == (1 if existed else 0)
                if not existed:
                    continue  # no live key, no op issued, no revision
                del model[key]
                rev += 1
                kind = "DELETE"
                fired = True
            if fired and watch_start <= key < watch_end and rev >= watch_from:
                expected.append((kind, key, rev))

        actual = [(e.type.value, e.kv.key, e.kv.mod_revision)
                  for e in reg.stream.drain()]
        assert actual == expected
        assert s.revision == rev


class TestRevisions:
    def test_every_applied_op_increments_revision_by_one(self):
        n1, n2 = make_store(1), make_store(2)
        n1.put(b"a", b"1")
        n2.put(b"b", b"2")
        n2.put(b"b", b"3")
        sync(n2, n1)
        assert n1.revision == 3  # 1 local + 2 remote
        assert n1.entry(b"b").mod_revision <= n1.revision

    def test_mod_revision_never_exceeds_current(self):
        s = make_store()
        for i in range(10):
            s.put(f"k{i}".encode(), b"v")
        entries, _ = s.range(b"k0", b"\x00")
        assert all(e.mod_revision <= s.revision for e in entries)


class TestStructured:
    def test_field_puts_merge_into_document(self):
        s = make_store(start_ms=5)
        s.structured_put(b"rs", ("spec", "replicas"), b"3")
        s.structured_put(b"rs", ("meta",), b"web")
        assert s.document(b"rs") == {"spec": {"replicas": b"3"}, "meta": b"web"}
        entry = s.entry(b"rs")
        assert entry.value == b'{"meta":"web","spec":{"replicas":"3"}}'

    def test_concurrent_field_writes_expose_siblings(self):
        n1, n2 = make_store(1, start_ms=7), make_store(2, start_ms=7)
        n1.structured_put(b"rs", ("replicas",), b"4")
        n2.structured_put(b"rs", ("replicas",), b"5")
        sync(n1, n2)
        sync(n2, n1)
        sibs = n1.field_siblings(b"rs", ("replicas",))
        assert sorted(p for p, _, _ in sibs) == [b"4", b"5"]
        assert n1.entry(b"rs").value == n2.entry(b"rs").value

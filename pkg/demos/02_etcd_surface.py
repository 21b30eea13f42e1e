#!/usr/bin/env python3
"""The etcd-style surface of one node: revisions, ranges, txns, watches.

Every applied op bumps the node-local revision by one; watches stream
every change in their key range, including history replay from a start
revision.
"""

from lazykv.store import (
    Compare,
    CompareRelation,
    CompareTarget,
    PutOp,
    RangeOp,
    StoreNode,
    TxnRequest,
)

store = StoreNode(node_id=1)

print("== puts carry create/mod revisions and versions ==")
store.put(b"/registry/pods/web-1", b"phase=Pending")
store.put(b"/registry/pods/web-2", b"phase=Pending")
prev, rev = store.put(b"/registry/pods/web-1", b"phase=Running")
entry = store.entry(b"/registry/pods/web-1")
print(f"revision now {rev}; web-1 create_rev={entry.create_revision} "
      f"mod_rev={entry.mod_revision} version={entry.version}")
print(f"previous value was {prev.value!r}")

print("\n== ranges are key-ordered with counts independent of limit ==")
entries, count = store.range(b"/registry/pods/", b"/registry/pods0", limit=1)
print(f"range limit=1 -> {[e.key.decode() for e in entries]} of {count} total")

print("\n== transactions evaluate compares on one local snapshot ==")
txn = TxnRequest(
    compares=(Compare(b"/registry/pods/web-1", CompareTarget.VERSION,
                      CompareRelation.EQ, 2),),
    success=(PutOp(b"/registry/pods/web-1", b"phase=Succeeded"),
             RangeOp(b"/registry/pods/web-1")),
    failure=(RangeOp(b"/registry/pods/web-1"),),
)
result = store.txn(txn)
print(f"compare version==2 -> succeeded={result.succeeded}; "
      f"value now {result.responses[1].entries[0].value!r}")

print("\n== watches replay history then stream live events ==")
watch = store.watch_create(b"/registry/pods/", b"/registry/pods0",
                           start_revision=1)
store.delete_range(b"/registry/pods/web-2")
for event in watch.stream.drain():
    print(f"  rev {event.kv.mod_revision:>2} {event.type.value:<6} "
          f"{event.kv.key.decode()}")
store.watch_cancel(watch.watch_id)
print("watch cancelled")

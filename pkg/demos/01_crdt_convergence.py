#!/usr/bin/env python3
"""Replicas accept writes independently and converge after exchanging ops.

Walks through the core replication loop: two replicas take concurrent
writes to the same key, ship each other their op logs, keep both values as
siblings, and expose a deterministic winner. A third replica receiving the
ops in a different order lands on the identical state.
"""

from lazykv import Put, Replica, deliver_all

t = {"now": 0}
r1 = Replica(1, now_fn=lambda: t["now"])
r2 = Replica(2, now_fn=lambda: t["now"])

print("== concurrent writes on two replicas ==")
t["now"] = 100
op1 = r1.issue(b"color", (), Put(b"red"))
op2 = r2.issue(b"color", (), Put(b"blue"))
print(f"replica 1 wrote 'red'   -> op {op1.dot}, deps {op1.deps}")
print(f"replica 2 wrote 'blue'  -> op {op2.dot}, deps {op2.deps}")
print(f"replica 1 sees: {r1.winner(b'color')}")
print(f"replica 2 sees: {r2.winner(b'color')}")

print("\n== after anti-entropy both hold the same siblings ==")
deliver_all(r1, r2)
deliver_all(r2, r1)
for r in (r1, r2):
    sibs = [(payload, origin) for payload, origin, _ in r.siblings(b"color")]
    print(f"replica {r.node_id}: winner={r.winner(b'color')} siblings={sibs}")
assert r1.state_hash() == r2.state_hash()
print(f"state hashes equal: {r1.state_hash():#018x}")

print("\n== delivery order does not matter ==")
r3 = Replica(3, now_fn=lambda: t["now"])
for op in [op2, op1]:  # reversed order
    r3.apply_remote(op)
assert r3.state_hash() == r1.state_hash()
print(f"replica 3 applied the ops reversed and matches: "
      f"{r3.winner(b'color')}")

print("\n== causal dependencies buffer out-of-order arrivals ==")
op3 = r1.issue(b"color", (), Put(b"green"))  # causally after the merge
late = Replica(4, now_fn=lambda: t["now"])
result, _ = late.apply_remote(op3)
print(f"op {op3.dot} needs {op3.deps}; fresh replica buffers it: {result.value}")
for op in (op1, op2):
    late.apply_remote(op)
print(f"after the dependencies arrive it drains: {late.winner(b'color')}")
assert late.winner(b"color") == b"green"

#!/usr/bin/env python3
"""Live HTTP session against the etcd v3 JSON gateway.

Starts two gateway processes-worth of nodes in-process, wired as sync
peers over HTTP, then exercises put/range/txn/watch exactly as an etcd
JSON client would (base64 keys, string-encoded int64s). Standalone:

    LAZYKV_LISTEN=127.0.0.1:2379 lazykv-gateway --node-id 1
"""

import base64
import json
import threading
import time

import requests

from lazykv.gateway import GatewayServer
from lazykv.store import StoreNode


def b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode()


node1 = GatewayServer(StoreNode(1), listen="127.0.0.1:0")
node1.start()
node2 = GatewayServer(StoreNode(2), listen="127.0.0.1:0",
                      peers=[f"http://{node1.address}"], sync_interval_ms=100)
node2.start()
url1, url2 = f"http://{node1.address}", f"http://{node2.address}"
print(f"node 1 gateway: {url1}")
print(f"node 2 gateway: {url2} (lazy-syncs from node 1)")

print("\n== PUT and RANGE ==")
resp = requests.post(f"{url1}/v3/kv/put",
                     json={"key": b64(b"foo"), "value": b64(b"bar")})
print(f"put -> header {resp.json()['header']}")
resp = requests.post(f"{url1}/v3/kv/range", json={"key": b64(b"foo")})
kv = resp.json()["kvs"][0]
print(f"range -> value={base64.b64decode(kv['value'])!r} "
      f"mod_revision={kv['mod_revision']}")

print("\n== WATCH stream (background thread) ==")
frames = []
def watch():
    body = {"create_request": {"key": b64(b"foo")}}
    with requests.post(f"{url1}/v3/watch", json=body, stream=True) as stream:
        for line in stream.iter_lines():
            frames.append(json.loads(line))
            if len(frames) >= 2:
                return
threading.Thread(target=watch, daemon=True).start()
time.sleep(0.3)
requests.post(f"{url1}/v3/kv/put",
              json={"key": b64(b"foo"), "value": b64(b"baz")})
for _ in range(50):
    if len(frames) >= 2:
        break
    time.sleep(0.1)
print(f"created frame: watch_id={frames[0]['result']['watch_id']}")
event = frames[1]["result"]["events"][0]
print(f"event frame: value={base64.b64decode(event['kv']['value'])!r}")

print("\n== TXN ==")
resp = requests.post(f"{url1}/v3/kv/txn", json={
    "compare": [{"key": b64(b"foo"), "target": "VALUE", "result": "EQUAL",
                 "value": b64(b"baz")}],
    "success": [{"request_put": {"key": b64(b"decision"), "value": b64(b"yes")}}],
})
print(f"txn succeeded={resp.json().get('succeeded', False)}")

print("\n== cross-process sync (binary digest codec over HTTP) ==")
deadline = time.time() + 5
kv = None
while time.time() < deadline:
    resp = requests.post(f"{url2}/v3/kv/range", json={"key": b64(b"foo")})
    body = resp.json()
    if body.get("count") == "1" and body["kvs"][0]["value"] == b64(b"baz"):
        kv = body["kvs"][0]
        break
    time.sleep(0.1)
print(f"node 2 caught up lazily: foo={base64.b64decode(kv['value'])!r}, "
      f"header reports member_id={resp.json()['header']['member_id']} "
      f"as its own authority")

node1.stop()
node2.stop()

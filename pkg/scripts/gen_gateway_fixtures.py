#!/usr/bin/env python3
"""Regenerate tests/fixtures/gateway_golden.json from the store engine.

The fixture file is a frozen, hand-reviewed artifact; rerun this only when
the gateway wire format intentionally changes, then re-review the diff.
"""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lazykv.gateway import GatewayCore, render  # noqa: E402
from lazykv.store import StoreNode  # noqa: E402


def b64(raw: bytes) -> str:
    import base64
    return base64.b64encode(raw).decode()


def main() -> None:
    store = StoreNode(1, now_fn=lambda: 0)
    core = GatewayCore(store)
    fixtures = []

    def unary(name, path, request):
        method = {
            "/v3/kv/put": core.put,
            "/v3/kv/range": core.range,
            "/v3/kv/deleterange": core.delete_range,
            "/v3/kv/txn": core.txn,
        }[path]
        response = render(method(request)).decode()
        fixtures.append({"name": name, "path": path,
                         "request": request, "response": response})

    unary("put-fresh-key", "/v3/kv/put",
          {"key": b64(b"a"), "value": b64(b"1")})
    unary("put-overwrite-with-prev", "/v3/kv/put",
          {"key": b64(b"a"), "value": b64(b"2"), "prev_kv": True})
    unary("put-second-key", "/v3/kv/put",
          {"key": b64(b"b"), "value": b64(b"3")})
    unary("range-single-key", "/v3/kv/range", {"key": b64(b"a")})
    unary("range-limit-reports-more", "/v3/kv/range",
          {"key": b64(b"a"), "range_end": b64(b"c"), "limit": 1})
    unary("range-empty", "/v3/kv/range", {"key": b64(b"z")})
    unary("txn-success-put-then-range", "/v3/kv/txn", {
        "compare": [{"key": b64(b"a"), "target": "VERSION",
                     "result": "EQUAL", "version": "2"}],
        "success": [{"request_put": {"key": b64(b"a"), "value": b64(b"4")}},
                    {"request_range": {"key": b64(b"a")}}],
        "failure": [{"request_range": {"key": b64(b"b")}}],
    })
    unary("txn-failure-branch", "/v3/kv/txn", {
        "compare": [{"key": b64(b"b"), "target": "VALUE",
                     "result": "NOT_EQUAL", "value": b64(b"3")}],
        "success": [{"request_put": {"key": b64(b"b"), "value": b64(b"nope")}}],
        "failure": [{"request_range": {"key": b64(b"b")}}],
    })
    unary("deleterange-hits-one", "/v3/kv/deleterange", {"key": b64(b"b")})
    unary("deleterange-empty", "/v3/kv/deleterange", {"key": b64(b"b")})

    # watch replaying history from revision 1 over [a, c), with prev_kv
    request = {"create_request": {"key": b64(b"a"), "range_end": b64(b"c"),
                                  "start_revision": 1, "prev_kv": True}}
    watch_id, frames = core.watch_stream(request)
    collected = []
    gen = iter(frames)
    collected.append(render(next(gen)).decode())  # created frame
    for _ in range(5):  # revisions 1..5 touched [a, c)
        collected.append(render(next(gen)).decode())
    store.watch_cancel(watch_id)
    fixtures.append({"name": "watch-replay-history", "path": "/v3/watch",
                     "request": request, "mutations": [],
                     "frames": collected})

    # watch from "now", then one live put
    request = {"create_request": {"key": b64(b"c")}}
    watch_id, frames = core.watch_stream(request)
    gen = iter(frames)
    live = [render(next(gen)).decode()]
    mutations = [["put", {"key": b64(b"c"), "value": b64(b"9")}]]
    core.put(mutations[0][1])
    live.append(render(next(gen)).decode())
    store.watch_cancel(watch_id)
    fixtures.append({"name": "watch-live-event", "path": "/v3/watch",
                     "request": request, "mutations": mutations,
                     "frames": live})

    out = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "gateway_golden.json"
    path.write_text(json.dumps(fixtures, indent=2) + "\n")
    print(f"wrote {len(fixtures)} fixtures to {path}")


if __name__ == "__main__":
    main()

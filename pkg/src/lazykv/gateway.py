"""etcd v3 HTTP/JSON gateway subset over one store node.

Serves POST /v3/kv/put, /v3/kv/range, /v3/kv/deleterange, /v3/kv/txn and a
streaming POST /v3/watch with newline-delimited JSON frames. Encoding
follows the etcd JSON gateway conventions: byte fields travel base64,
64-bit integers render as decimal strings, and default-valued fields are
omitted (except `count` and `deleted`, which are always present). Every
response header reports this node as its own authority: member_id is the
node id, revision is the node-local revision, raft_term is pinned to "1"
(there is no term to progress; documented divergence).

The HTTP layer is a thin shell over GatewayCore, a pure adapter from JSON
bodies to store-engine calls; tests exercise the core directly against the
engine and replay golden fixtures through real HTTP.

Cross-process anti-entropy: POST /peer/sync carries a binary digest (see
docs/sync-wire.md) and answers with a binary op batch; a background loop
pushes digests to configured peer URLs every sync interval.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import json
import os
import sys
import threading
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterator, Optional, Sequence

import yaml

from .netsim import ConfigError
from .store import (
    Compare,
    CompareRelation,
    CompareTarget,
    DeleteRangeOp,
    DeleteRangeResult,
    Event,
    EventType,
    InvalidRange,
    KvEntry,
    MalformedTxn,
    PutOp,
    PutResult,
    RangeOp,
    RangeResult,
    StoreNode,
    TxnRequest,
)
from .sync import SyncConfig, Syncer
from .wire import decode_message, encode_message

CLUSTER_ID = 0x8E9E05C52405CAE6  # fixed advertised cluster identity
RAFT_TERM = "1"


class BadRequest(Exception):
    """Maps to HTTP 400 with an etcd-style error body."""


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64(field: str, body: dict, required: bool = False) -> bytes:
    value = body.get(field)
    if value is None:
        if required:
            raise BadRequest("etcdserver: key is not provided")
        return b""
    if not isinstance(value, str):
        raise BadRequest(f"etcdserver: field {field!r} must be base64 text")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as e:
        raise BadRequest(f"etcdserver: field {field!r} is not base64: {e}") from e


def _int_field(body: dict, field: str, default: int = 0) -> int:
    value = body.get(field, default)
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise BadRequest(f"etcdserver: field {field!r} must be an integer") from e


def _kv_json(entry: KvEntry) -> dict:
    out = {"key": _b64(entry.key)}
    if entry.create_revision:
        out["create_revision"] = str(entry.create_revision)
    if entry.mod_revision:
        out["mod_revision"] = str(entry.mod_revision)
    if entry.version:
        out["version"] = str(entry.version)
    if entry.value:
        out["value"] = _b64(entry.value)
    return out


COMPARE_TARGETS = {
    None: (CompareTarget.VERSION, "version"),
    "VERSION": (CompareTarget.VERSION, "version"),
    "CREATE": (CompareTarget.CREATE_REVISION, "create_revision"),
    "MOD": (CompareTarget.MOD_REVISION, "mod_revision"),
    "VALUE": (CompareTarget.VALUE, "value"),
}

COMPARE_RESULTS = {
    None: CompareRelation.EQ,
    "EQUAL": CompareRelation.EQ,
    "GREATER": CompareRelation.GT,
    "LESS": CompareRelation.LT,
    "NOT_EQUAL": CompareRelation.NEQ,
}


class GatewayCore:
    """Pure adapter: etcd gateway JSON bodies in, JSON-able dicts out."""

    def __init__(self, store: StoreNode, cluster_id: int = CLUSTER_ID):
        self.store = store
        self.cluster_id = cluster_id

    def header(self) -> dict:
        return {
            "cluster_id": str(self.cluster_id),
            "member_id": str(self.store.node_id),
            "revision": str(self.store.revision),
            "raft_term": RAFT_TERM,
        }

    def put(self, body: dict) -> dict:
        key = _unb64("key", body, required=True)
        value = _unb64("value", body)
        want_prev = bool(body.get("prev_kv", False))
        try:
            prev, _ = self.store.put(key, value)
        except InvalidRange as e:
            raise BadRequest(f"etcdserver: {e}") from e
        out = {"header": self.header()}
        if want_prev and prev is not None:
            out["prev_kv"] = _kv_json(prev)
        return out

    def range(self, body: dict) -> dict:
        key = _unb64("key", body, required=True)
        range_end = _unb64("range_end", body)
        limit = _int_field(body, "limit")
        serializable = bool(body.get("serializable", False))
        try:
            entries, count = self.store.range(key, range_end or None, limit,
                                              serializable=serializable)
        except InvalidRange as e:
            raise BadRequest(f"etcdserver: {e}") from e
        out = {"header": self.header()}
        if entries and not body.get("count_only", False):
            out["kvs"] = [_kv_json(e) for e in entries]
        if limit and count > len(entries):
            out["more"] = True
        out["count"] = str(count)
        return out

    def delete_range(self, body: dict) -> dict:
        key = _unb64("key", body, required=True)
        range_end = _unb64("range_end", body)
        try:
            deleted = self.store.delete_range(key, range_end or None)
        except InvalidRange as e:
            raise BadRequest(f"etcdserver: {e}") from e
        return {"header": self.header(), "deleted": str(deleted)}

    def txn(self, body: dict) -> dict:
        req = TxnRequest(
            compares=tuple(self._parse_compare(c)
                           for c in body.get("compare", [])),
            success=tuple(self._parse_txn_op(o)
                          for o in body.get("success", [])),
            failure=tuple(self._parse_txn_op(o)
                          for o in body.get("failure", [])),
        )
        try:
            result = self.store.txn(req)
        except (MalformedTxn, InvalidRange) as e:
            raise BadRequest(f"etcdserver: {e}") from e
        out = {"header": self.header()}
        if result.succeeded:
            out["succeeded"] = True
        raw_branch = body.get("success" if result.succeeded else "failure", [])
        out["responses"] = [self._txn_response(r, raw)
                            for r, raw in zip(result.responses, raw_branch)]
        return out

    def watch_stream(self, body: dict,
                     alive: Optional[Callable[[], bool]] = None
                     ) -> tuple[int, Iterator[dict]]:
        """Returns (watch_id, frame iterator). The iterator blocks waiting
        for events; it stops when the watch is cancelled or `alive` (polled
        between waits) reports the consumer is gone."""
        create = body.get("create_request")
        if not isinstance(create, dict):
            raise BadRequest("etcdserver: watch needs a create_request")
        key = _unb64("key", create, required=True)
        range_end = _unb64("range_end", create)
        start_rev = _int_field(create, "start_revision")
        want_prev = bool(create.get("prev_kv", False))
        reg = self.store.watch_create(key, range_end or None, start_rev)

        def frames() -> Iterator[dict]:
            yield {
                "result": {
                    "header": self.header(),
                    "watch_id": str(reg.watch_id),
                    "created": True,
                }
            }
            while True:
                event = reg.stream.get(timeout=0.1)
                if event is None:
                    if reg.stream.closed:
                        return
                    if alive is not None and not alive():
                        return
                    continue
                yield {
                    "result": {
                        "header": self.header(),
                        "watch_id": str(reg.watch_id),
                        "events": [self._event_json(event, want_prev)],
                    }
                }

        return reg.watch_id, frames()

    # -- helpers ------------------------------------------------------------

    def _parse_compare(self, c: dict) -> Compare:
        if not isinstance(c, dict):
            raise BadRequest("etcdserver: compare entry must be an object")
        key = _unb64("key", c, required=True)
        target_name = c.get("target")
        if target_name not in COMPARE_TARGETS:
            raise BadRequest(f"etcdserver: unknown compare target {target_name!r}")
        target, operand_field = COMPARE_TARGETS[target_name]
        result_name = c.get("result")
        if result_name not in COMPARE_RESULTS:
            raise BadRequest(f"etcdserver: unknown compare result {result_name!r}")
        if target is CompareTarget.VALUE:
            operand: object = _unb64("value", c)
        else:
            operand = _int_field(c, operand_field)
        return Compare(key, target, COMPARE_RESULTS[result_name], operand)

    def _parse_txn_op(self, op: dict):
        if not isinstance(op, dict) or len(op) != 1:
            raise BadRequest("etcdserver: txn op must hold exactly one request")
        (kind, body), = op.items()
        if kind == "request_put":
            return PutOp(_unb64("key", body, required=True),
                         _unb64("value", body))
        if kind == "request_range":
            return RangeOp(_unb64("key", body, required=True),
                           _unb64("range_end", body) or None,
                           _int_field(body, "limit"),
                           bool(body.get("serializable", False)))
        if kind == "request_delete_range":
            return DeleteRangeOp(_unb64("key", body, required=True),
                                 _unb64("range_end", body) or None)
        raise BadRequest(f"etcdserver: unknown txn request {kind!r}")

    def _txn_response(self, result, raw_op: dict) -> dict:
        if isinstance(result, PutResult):
            sub = {"header": {"revision": str(result.revision)}}
            want_prev = bool(raw_op.get("request_put", {}).get("prev_kv", False))
            if want_prev and result.prev is not None:
                sub["prev_kv"] = _kv_json(result.prev)
            return {"response_put": sub}
        if isinstance(result, RangeResult):
            sub = {"header": {"revision": str(self.store.revision)}}
            if result.entries:
                sub["kvs"] = [_kv_json(e) for e in result.entries]
            sub["count"] = str(result.count)
            return {"response_range": sub}
        assert isinstance(result, DeleteRangeResult)
        return {"response_delete_range": {
            "header": {"revision": str(self.store.revision)},
            "deleted": str(result.deleted),
        }}

    def _event_json(self, event: Event, include_prev: bool = False) -> dict:
        out: dict = {}
        if event.type is EventType.DELETE:
            out["type"] = "DELETE"
        out["kv"] = _kv_json(event.kv)
        if include_prev and event.prev_kv is not None:
            out["prev_kv"] = _kv_json(event.prev_kv)
        return out


def render(obj: dict) -> bytes:
    """Canonical wire rendering: compact separators, insertion order."""
    return json.dumps(obj, separators=(",", ":")).encode()


def error_body(message: str, code: int = 3) -> bytes:
    return render({"error": message, "code": code, "message": message})


ROUTES = {
    "/v3/kv/put": "put",
    "/v3/kv/range": "range",
    "/v3/kv/deleterange": "delete_range",
    "/v3/kv/txn": "txn",
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "lazykv-gateway"

    def log_message(self, fmt, *args):  # quiet by default
        if self.server.gateway.verbose:  # type: ignore[attr-defined]
            super().log_message(fmt, *args)

    def do_POST(self):  # noqa: N802 - http.server API
        gateway: GatewayServer = self.server.gateway  # type: ignore[attr-defined]
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            if self.path == "/peer/sync":
                self._peer_sync(gateway, raw)
                return
            try:
                body = json.loads(raw) if raw else {}
            except json.JSONDecodeError as e:
                raise BadRequest(f"etcdserver: request is malformed: {e}") from e
            if not isinstance(body, dict):
                raise BadRequest("etcdserver: request body must be an object")
            if self.path == "/v3/watch":
                self._watch(gateway, body)
                return
            method = ROUTES.get(self.path)
            if method is None:
                self._respond(404, error_body(
                    f"etcdserver: unknown path {self.path}", code=5))
                return
            payload = getattr(gateway.core, method)(body)
            self._respond(200, render(payload))
        except BadRequest as e:
            self._respond(400, error_body(str(e)))
        except BrokenPipeError:
            pass
        except Exception as e:  # internal error; keep the server alive
            self._respond(500, error_body(f"etcdserver: internal: {e}", code=13))

    def _respond(self, status: int, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _client_alive(self) -> bool:
        import select
        import socket as socketlib
        readable, _, _ = select.select([self.connection], [], [], 0)
        if not readable:
            return True
        try:
            # streaming POST is one-shot; readable means EOF (or stray bytes)
            return bool(self.connection.recv(1, socketlib.MSG_PEEK))
        except OSError:
            return False

    def _watch(self, gateway: "GatewayServer", body: dict) -> None:
        watch_id, frames = gateway.core.watch_stream(
            body, alive=self._client_alive)
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()
        try:
            for frame in frames:
                chunk = render(frame) + b"\n"
                self.wfile.write(f"{len(chunk):x}\r\n".encode())
                self.wfile.write(chunk + b"\r\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            try:
                gateway.store.watch_cancel(watch_id)
            except Exception:
                pass

    def _peer_sync(self, gateway: "GatewayServer", raw: bytes) -> None:
        digest = decode_message(raw)
        batch = gateway.syncer.handle_digest(digest)
        body = encode_message(batch) if batch is not None else b""
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class GatewayServer:
    """One node's HTTP front end plus optional peer-sync loop."""

    def __init__(self, store: StoreNode, listen: str = "127.0.0.1:0",
                 peers: Sequence[str] = (), sync_interval_ms: float = 1000.0,
                 verbose: bool = False):
        host, _, port = listen.rpartition(":")
        self.store = store
        self.core = GatewayCore(store)
        self.syncer = Syncer(store, [store.node_id], SyncConfig())
        self.peers = list(peers)
        self.sync_interval_ms = sync_interval_ms
        self.verbose = verbose
        self.httpd = ThreadingHTTPServer((host or "127.0.0.1", int(port)),
                                         _Handler)
        self.httpd.gateway = self  # type: ignore[attr-defined]
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> None:
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        t.start()
        self._threads.append(t)
        if self.peers:
            loop = threading.Thread(target=self._peer_loop, daemon=True)
            loop.start()
            self._threads.append(loop)

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def _peer_loop(self) -> None:
        while not self._stop.wait(self.sync_interval_ms / 1000.0):
            digest = encode_message(self.syncer.digest())
            for peer in self.peers:
                try:
                    req = urllib.request.Request(
                        f"{peer}/peer/sync", data=digest,
                        headers={"Content-Type": "application/octet-stream"})
                    with urllib.request.urlopen(req, timeout=5) as resp:
                        raw = resp.read()
                    if raw:
                        self.syncer.handle_batch(decode_message(raw))
                except OSError:
                    continue  # unreachable peer; next round retries


def load_gateway_config(path: str) -> dict:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict) or "node_id" not in raw:
        raise ConfigError("gateway config needs node_id")
    return raw


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lazykv-gateway",
        description="Serve the etcd v3 JSON gateway subset over one node",
    )
    parser.add_argument("--config", default=None,
                        help="YAML: node_id, listen, peers, sync_interval_ms")
    parser.add_argument("--listen", default=None,
                        help="host:port (or env LAZYKV_LISTEN)")
    parser.add_argument("--node-id", type=int, default=None)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    cfg = load_gateway_config(args.config) if args.config else {}
    listen = (args.listen or os.environ.get("LAZYKV_LISTEN")
              or cfg.get("listen") or "127.0.0.1:2379")
    node_id = args.node_id if args.node_id is not None else cfg.get("node_id", 1)
    store = StoreNode(int(node_id))
    server = GatewayServer(store, listen=listen, peers=cfg.get("peers", ()),
                           sync_interval_ms=float(cfg.get("sync_interval_ms", 1000.0)),
                           verbose=args.verbose)
    server.start()
    print(f"lazykv gateway node {node_id} listening on {server.address}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())

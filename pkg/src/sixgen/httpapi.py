"""JSON-over-HTTP surface of a node.

Standard library server, one handler thread per request, every touch of
the runtime behind one lock shared with the scheduler pump. Mutations
submit a transaction and by default wait (outside the lock) until it
commits locally, so a plain sequence of curl calls behaves as expected;
``?wait=false`` returns 202 immediately.

``GET /events`` streams bus envelopes as newline-delimited JSON from the
requested offsets onward, polling the bus and emitting heartbeat lines
while idle. State-changing endpoints require the configured bearer token
when one is set; reads and /healthz stay open.
"""

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import MarketplaceError, NotFound

log = logging.getLogger(__name__)

COMMIT_WAIT_S = 5.0
STREAM_POLL_S = 0.2
HEARTBEAT_S = 15.0

STATUS_FOR_CODE = {
    "NotFound": 404,
    "UnknownChannel": 404,
    "UnknownBaseline": 404,
    "NotAdmin": 403,
    "NotApproved": 403,
    "NotParty": 403,
    "NotOwner": 403,
    "NotMember": 403,
    "SelfTrade": 403,
    "AuthRejected": 401,
    "IllegalTransition": 409,
    "IllegalEvent": 409,
    "AlreadyVoted": 409,
    "AlreadyVotedError": 409,
    "RequestClosed": 409,
    "DuplicateChannel": 409,
    "DuplicateIdentity": 409,
    "AlreadyRetired": 409,
    "AlreadyRegistered": 409,
    "AlreadyComposed": 409,
    "AlreadyRevoked": 409,
    "OfferingNotActive": 409,
    "CapacityRace": 409,
    "NotDeployed": 409,
    "PayloadTooLarge": 413,
    "NodeStopped": 503,
}


def _status_for(exc: MarketplaceError) -> int:
    return STATUS_FOR_CODE.get(exc.code, 400)


class NodeApi:
    """Binds one runtime to one listening port."""

    def __init__(self, runtime, lock, host="127.0.0.1", port=8471, token=None):
        self.runtime = runtime
        self.lock = lock
        self.token = token
        api = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                log.debug("%s %s", self.address_string(), fmt % args)

            def do_OPTIONS(self):
                self.send_response(204)
                self._cors()
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                api.dispatch(self, "GET")

            def do_POST(self):
                api.dispatch(self, "POST")

            def do_PATCH(self):
                api.dispatch(self, "PATCH")

            def do_DELETE(self):
                api.dispatch(self, "DELETE")

            def _cors(self):
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods",
                                 "GET, POST, PATCH, DELETE, OPTIONS")
                self.send_header("Access-Control-Allow-Headers",
                                 "Content-Type, Authorization")

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.server.daemon_threads = True
        self.port = self.server.server_port
        self._thread = None

    def start(self):
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        name=f"api-{self.runtime.node_id}",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    # -- plumbing -----------------------------------------------------------------

    def dispatch(self, handler, method):
        parsed = urlparse(handler.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        try:
            body = self._read_body(handler)
            result, status = self.route(handler, method, parts, query, body)
            if result is _STREAMED:
                return
            self._send(handler, status, result)
        except AuthError as exc:
            self._send(handler, 401, exc.to_doc())
        except MarketplaceError as exc:
            self._send(handler, _status_for(exc), exc.to_doc())
        except KeyError as exc:
            # a route reached for a field the body does not carry
            self._send(handler, 400, {"code": "MissingField",
                                      "message": f"missing field {exc}"})
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            log.exception("unhandled API failure on %s %s", method, handler.path)
            self._send(handler, 500, {"code": "Internal",
                                      "message": "internal error"})

    def _read_body(self, handler):
        length = int(handler.headers.get("Content-Length") or 0)
        if not length:
            return {}
        raw = handler.rfile.read(length)
        try:
            return json.loads(raw.decode("utf-8"))
        except ValueError:
            raise MarketplaceError("request body is not valid JSON") from None

    def _send(self, handler, status, doc):
        data = json.dumps(doc).encode("utf-8")
        try:
            handler.send_response(status)
            handler._cors()
            handler.send_header("Content-Type", "application/json")
            handler.send_header("Content-Length", str(len(data)))
            handler.end_headers()
            handler.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _check_auth(self, handler):
        if not self.token:
            return
        auth = handler.headers.get("Authorization", "")
        if auth != f"Bearer {self.token}":
            raise AuthError("missing or wrong bearer token")

    def _commit(self, submit, wait=True):
        """Run a mutation under the lock; optionally wait for local commit."""
        done = threading.Event()
        with self.lock:
            result = submit(lambda *a: done.set())
        if wait and done.wait(COMMIT_WAIT_S):
            return result, 200
        return result, 202

    # -- routing ------------------------------------------------------------------------

    def route(self, handler, method, parts, query, body):
        rt = self.runtime
        wait = query.get("wait", "true") != "false"

        if method != "GET":
            self._check_auth(handler)

        if parts == ["healthz"] and method == "GET":
            with self.lock:
                return rt.health(), 200

        if parts == ["offering"]:
            if method == "GET":
                with self.lock:
                    return rt.marketplace.list_offerings(
                        resource_type=query.get("resource_type"),
                        status=query.get("status", "ACTIVE"),
                        provider=query.get("provider"),
                        max_price=_maybe_float(query.get("max_price")),
                    ), 200
            if method == "POST":
                holder = {}

                def submit(cb):
                    holder["id"] = rt.marketplace.create_offering(
                        body["name"], body["resource_type"],
                        body.get("characteristics") or {},
                        body.get("price") or {},
                        sla_terms=body.get("sla_terms"),
                        on_applied=cb)
                    return holder["id"]

                offering_id, status = self._commit(submit, wait)
                return {"offering_id": offering_id}, 201 if status == 200 else 202

        if len(parts) == 2 and parts[0] == "offering":
            offering_id = parts[1]
            if method == "GET":
                with self.lock:
                    return rt.marketplace.get_offering(offering_id), 200
            if method == "PATCH":
                _, status = self._commit(
                    lambda cb: rt.marketplace.update_offering(
                        offering_id, body, on_applied=cb), wait)
                with self.lock:
                    return rt.marketplace.get_offering(offering_id), status
            if method == "DELETE":
                _, status = self._commit(
                    lambda cb: rt.marketplace.retire_offering(
                        offering_id, on_applied=cb), wait)
                return {"offering_id": offering_id, "status": "RETIRED"}, status

        if parts == ["order"]:
            if method == "GET":
                with self.lock:
                    return rt.marketplace.list_orders(
                        party=query.get("party"),
                        status=query.get("status")), 200
            if method == "POST":
                def submit(cb):
                    return rt.marketplace.create_order(body["offering_id"],
                                                       on_applied=cb)

                order_id, status = self._commit(submit, wait)
                return {"order_id": order_id}, 201 if status == 200 else 202

        if len(parts) >= 2 and parts[0] == "order":
            order_id = parts[1]
            if len(parts) == 2 and method == "GET":
                with self.lock:
                    return rt.marketplace.get_order(order_id), 200
            if len(parts) == 2 and method == "PATCH":
                _, status = self._commit(
                    lambda cb: rt.marketplace.update_order(
                        order_id, body["status"],
                        reason=body.get("reason"), on_applied=cb), wait)
                with self.lock:
                    return rt.marketplace.get_order(order_id), status
            if len(parts) == 3 and method == "POST":
                action = parts[2]
                with self.lock:
                    if action == "teardown":
                        rt.teardown_order(order_id)
                    elif action == "remediate":
                        rt.remediate_order(order_id)
                    else:
                        raise NotFound(f"no action {action}")
                return {"order_id": order_id, "action": action}, 202

        if parts[:1] == ["identity"]:
            return self._route_identity(method, parts[1:], body, wait)

        if parts[:1] == ["sc-state"]:
            return self._route_sc(method, parts[1:], body, wait)

        if parts == ["metrics"] and method == "POST":
            with self.lock:
                return rt.submit_metric(
                    body["order_id"], body["metric"], body["value"],
                    ts_ms=body.get("ts_ms")), 200

        if len(parts) == 3 and parts[0] == "sla" and parts[2] == "status" \
                and method == "GET":
            with self.lock:
                return rt.sla_status(parts[1]), 200

        if len(parts) == 3 and parts[0] == "lake" and method == "GET":
            with self.lock:
                return rt.query_lake(
                    parts[1], parts[2],
                    from_ts=_maybe_int(query.get("from")),
                    to_ts=_maybe_int(query.get("to")),
                    max_points=_maybe_int(query.get("max_points"))), 200

        if parts == ["intent"] and method == "POST":
            with self.lock:
                return rt.discover(
                    body["text"],
                    top_m=int(body.get("top_m", 3)),
                    fallback=bool(body.get("fallback", False))), 200

        if parts == ["discovery", "refit"] and method == "POST":
            with self.lock:
                return rt.refit_discovery(
                    k=body.get("k"), d=body.get("d"),
                    seed=int(body.get("seed", 0))), 200

        if parts == ["discovery", "clusters"] and method == "GET":
            with self.lock:
                if rt.offer_space is None:
                    raise NotFound("offer space not fitted yet")
                return rt.offer_space.describe(), 200

        if parts == ["events"] and method == "GET":
            self._stream_events(handler, query)
            return _STREAMED, 200

        raise NotFound(f"no route for {method} /{'/'.join(parts)}")

    def _route_identity(self, method, parts, body, wait):
        rt = self.runtime
        if parts == ["dids"] and method == "GET":
            with self.lock:
                return rt.identity.identities(), 200
        if len(parts) == 2 and parts[0] == "dids" and method == "GET":
            with self.lock:
                return rt.identity.resolve_did(parts[1]), 200
        if len(parts) == 3 and parts[0] == "dids" and parts[2] == "revoke" \
                and method == "POST":
            _, status = self._commit(
                lambda cb: rt.identity.revoke_did(parts[1], on_applied=cb),
                wait)
            return {"did": parts[1], "status": "REVOKED"}, status
        if parts == ["commit-requests"]:
            if method == "GET":
                with self.lock:
                    return rt.identity.requests(), 200
            if method == "POST":
                def submit(cb):
                    return rt.identity.submit_commit_request(
                        body["node_id"], body["public_key"],
                        body["requested_role"], on_applied=cb)

                req_id, status = self._commit(submit, wait)
                return {"req_id": req_id}, 201 if status == 200 else 202
        if len(parts) == 2 and parts[0] == "commit-requests" and method == "GET":
            with self.lock:
                req = rt.identity.requests().get(parts[1])
            if req is None:
                raise NotFound(f"no request {parts[1]}")
            return req, 200
        if len(parts) == 3 and parts[0] == "commit-requests" \
                and parts[2] == "review" and method == "POST":
            _, status = self._commit(
                lambda cb: rt.identity.review_commit_request(
                    parts[1], bool(body["approve"]), on_applied=cb), wait)
            return {"req_id": parts[1], "voted": True}, status
        raise NotFound("no such identity route")

    def _route_sc(self, method, parts, body, wait):
        rt = self.runtime
        if not parts and method == "GET":
            with self.lock:
                return rt.contracts.list_instances(), 200
        if len(parts) == 1 and method == "GET":
            with self.lock:
                return rt.contracts.get_state(parts[0]), 200
        if len(parts) == 2 and parts[1] == "events":
            if method == "GET":
                with self.lock:
                    return rt.contracts.get_events(parts[0]), 200
            if method == "POST":
                _, status = self._commit(
                    lambda cb: rt.contracts.submit_event(
                        parts[0], body, on_applied=cb), wait)
                with self.lock:
                    return rt.contracts.get_state(parts[0]), status
        if len(parts) == 2 and parts[1] == "legal-prose" and method == "GET":
            with self.lock:
                return rt.contracts.legal_prose(parts[0]), 200
        if len(parts) == 2 and parts[1] == "terms" and method == "GET":
            with self.lock:
                return rt.contracts.effective_terms(parts[0]), 200
        raise NotFound("no such agreement route")

    # -- event stream ----------------------------------------------------------------

    def _stream_events(self, handler, query):
        topics = [t for t in (query.get("topics") or "").split(",") if t]
        offsets = {}
        for part in (query.get("from") or "").split(","):
            if ":" in part:
                topic, _, off = part.rpartition(":")
                offsets[topic] = int(off)
        handler.send_response(200)
        handler._cors()
        handler.send_header("Content-Type", "application/x-ndjson")
        handler.send_header("Cache-Control", "no-cache")
        handler.send_header("Connection", "close")
        handler.end_headers()
        cursors = dict(offsets)
        last_write = time.monotonic()
        try:
            while True:
                batch = []
                with self.lock:
                    active = topics or self.runtime.bus.topics()
                    for topic in active:
                        start = cursors.get(topic, offsets.get(topic, 0))
                        events = self.runtime.bus.read(topic, start, limit=100)
                        if events:
                            cursors[topic] = events[-1]["offset"] + 1
                            batch.extend(events)
                if batch:
                    batch.sort(key=lambda e: (e["ts_ms"], e["topic"],
                                              e["offset"]))
                    for env in batch:
                        handler.wfile.write(
                            (json.dumps(env) + "\n").encode("utf-8"))
                    handler.wfile.flush()
                    last_write = time.monotonic()
                elif time.monotonic() - last_write > HEARTBEAT_S:
                    handler.wfile.write(b'{"topic":"heartbeat"}\n')
                    handler.wfile.flush()
                    last_write = time.monotonic()
                time.sleep(STREAM_POLL_S)
        except (BrokenPipeError, ConnectionResetError, OSError):
            return


class AuthError(MarketplaceError):
    code = "AuthRejected"


_STREAMED = object()


def _maybe_int(value):
    return int(value) if value not in (None, "") else None


def _maybe_float(value):
    return float(value) if value not in (None, "") else None

"""Scenario harness: drives a simulated cluster through YAML step scripts.

A scenario is a cluster header plus a list of steps. Steps either act
(publish an offering, place an order, kill a node, advance time) or
assert (order status, agreement status, an event on some node's bus,
equal state hashes). Ids created by action steps bind to names via
``as:`` and later steps reference them with ``$name``.

The runner drains every node's bus into one transcript after each step,
so assertions look at what actually happened rather than at engine
internals. `run_scenario` returns a ScenarioResult; the first failing
step stops the run.
"""

import shutil
import tempfile
from importlib import resources

import yaml

from ..errors import ScenarioInvalid
from ..node import NodeRuntime, make_founding
from ..runtime import Network, Scheduler

DEFAULT_SIZE = 4
SETTLE_MS = 3_000


class StepFailed(Exception):
    def __init__(self, index, step, message):
        super().__init__(f"step {index} ({step.get('do')}): {message}")
        self.index = index
        self.step = step


class ExpectFailed(Exception):
    """Raised inside a step handler; the runner wraps it with the index."""


class Cluster:
    """A set of node runtimes on one simulated scheduler."""

    def __init__(self, size=DEFAULT_SIZE, seed=0, data_root=None,
                 capacity=None, extra_nodes=()):
        self.seed = seed
        self.scheduler = Scheduler()
        self.network = Network(self.scheduler, seed=seed)
        node_ids = [f"n{i}" for i in range(1, size + 1)]
        self.founding = make_founding(node_ids, seed_prefix=f"sim{seed}")
        self.data_root = data_root
        self.runtimes = {}
        for entry in self.founding:
            self._make_runtime(entry["node_id"], entry["key_seed"], capacity)
        # candidates share the founding list but are not in it
        self.candidates = {}
        for node_id in extra_nodes:
            kp_seed = f"sim{seed}-{node_id}"
            self.candidates[node_id] = kp_seed
        self.transcript = []
        self._cursors = {}

    def _make_runtime(self, node_id, key_seed, capacity=None):
        config = {
            "node_id": node_id,
            "key_seed": key_seed,
            "founding": self.founding,
            "data_dir": self.data_root,
            "capacity": capacity,
        }
        rt = NodeRuntime(config, self.scheduler, self.network)
        self.runtimes[node_id] = rt
        return rt

    def start(self):
        for rt in self.runtimes.values():
            rt.start()
        self.idle()
        return self

    def node(self, node_id) -> NodeRuntime:
        try:
            return self.runtimes[node_id]
        except KeyError:
            raise ScenarioInvalid(f"no node {node_id}") from None

    @property
    def now_ms(self):
        return self.scheduler.clock.now_ms()

    def advance(self, ms):
        self.scheduler.run_until(self.now_ms + ms)
        self.drain()

    def idle(self):
        self.scheduler.run_until_idle()
        self.drain()

    def settle(self, ms=SETTLE_MS):
        """Advance enough for submit->commit->automation to play out."""
        self.advance(ms)

    def drain(self):
        """Pull new bus envelopes from every runtime into the transcript."""
        for node_id, rt in self.runtimes.items():
            for topic in rt.bus.topics():
                cursor = self._cursors.get((node_id, topic), 0)
                events = rt.bus.read(topic, cursor, limit=10_000)
                if events:
                    self._cursors[(node_id, topic)] = \
                        events[-1]["offset"] + 1
                    for env in events:
                        self.transcript.append({
                            "node": node_id,
                            "topic": topic,
                            "ts_ms": env["ts_ms"],
                            "offset": env["offset"],
                            "data": env["data"],
                        })
        self.transcript.sort(key=lambda e: (e["ts_ms"], e["node"],
                                            e["topic"], e["offset"]))

    def find(self, topic, node=None, since_ms=None, **match):
        """Transcript entries for a topic whose data contains `match`."""
        out = []
        for entry in self.transcript:
            if entry["topic"] != topic:
                continue
            if node and entry["node"] != node:
                continue
            if since_ms is not None and entry["ts_ms"] < since_ms:
                continue
            data = entry["data"]
            if all(_dig(data, k) == v for k, v in match.items()):
                out.append(entry)
        return out

    def kill(self, node_id):
        rt = self.node(node_id)
        rt.stop()
        self.network.set_down(node_id)

    def revive(self, node_id):
        """Bring a node back: fresh runtime, same identity, same disk."""
        old = self.runtimes[node_id]
        key_seed = old.config["key_seed"]
        capacity = old.config.get("capacity")
        for topic in list(self._cursors):
            if topic[0] == node_id:
                del self._cursors[topic]
        self.network.set_up(node_id)
        rt = self._make_runtime(node_id, key_seed, capacity)
        rt.join_network()
        return rt

    def candidate_seed(self, node_id):
        return self.candidates.get(node_id, f"sim{self.seed}-{node_id}")

    def join_candidate(self, node_id):
        """Start a non-founding node after its identity was approved."""
        key_seed = self.candidate_seed(node_id)
        rt = self._make_runtime(node_id, key_seed)
        rt.join_network()
        return rt

    def stop(self):
        for rt in self.runtimes.values():
            if not rt.stopped:
                rt.stop()


class ScenarioResult:
    def __init__(self, name):
        self.name = name
        self.ok = True
        self.steps = []
        self.error = None
        self.sim_ms = 0
        self.bindings = {}

    def to_doc(self):
        return {
            "name": self.name,
            "ok": self.ok,
            "sim_ms": self.sim_ms,
            "steps": self.steps,
            "error": self.error,
            "bindings": self.bindings,
        }


def scenario_names() -> list:
    root = resources.files("sixgen.harness") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def load_scenario(name_or_path) -> dict:
    if str(name_or_path).endswith((".yaml", ".yml")):
        with open(name_or_path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    else:
        ref = resources.files("sixgen.harness") / "scenarios" \
            / f"{name_or_path}.yaml"
        if not ref.is_file():
            raise ScenarioInvalid(f"unknown scenario {name_or_path}")
        doc = yaml.safe_load(ref.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "steps" not in doc:
        raise ScenarioInvalid("scenario needs a steps list")
    return doc


def run_scenario(scenario, echo=None) -> ScenarioResult:
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    result = ScenarioResult(scenario.get("name", "unnamed"))
    header = scenario.get("cluster") or {}
    data_root = None
    if header.get("persistence"):
        data_root = tempfile.mkdtemp(prefix="sixgen-scn-")
    cluster = Cluster(
        size=int(header.get("size", DEFAULT_SIZE)),
        seed=int(header.get("seed", 0)),
        data_root=data_root,
        capacity=header.get("capacity"),
        extra_nodes=header.get("extra_nodes") or (),
    ).start()
    bindings = result.bindings
    try:
        for i, step in enumerate(scenario["steps"]):
            desc = step.get("do", "?")
            try:
                _run_step(cluster, step, bindings)
            except ExpectFailed as exc:
                raise StepFailed(i, step, str(exc)) from exc
            except Exception as exc:
                raise StepFailed(i, step, f"{type(exc).__name__}: {exc}") \
                    from exc
            cluster.drain()
            result.steps.append({"index": i, "do": desc, "ok": True})
            if echo:
                echo(f"  ok  {i:>3} {desc}")
    except StepFailed as exc:
        result.ok = False
        result.error = str(exc)
        result.steps.append({"index": exc.index, "do": exc.step.get("do"),
                             "ok": False, "error": str(exc)})
        if echo:
            echo(f"  FAIL {exc}")
    finally:
        result.sim_ms = cluster.now_ms
        cluster.stop()
        if data_root:
            shutil.rmtree(data_root, ignore_errors=True)
    return result


# -- step interpreter -------------------------------------------------------------


def _run_step(cluster, step, bindings):
    op = step.get("do")
    handler = _STEPS.get(op)
    if handler is None:
        raise ScenarioInvalid(f"unknown step {op!r}")
    handler(cluster, step, bindings)


def _ref(bindings, value):
    if isinstance(value, str) and value.startswith("$"):
        name = value[1:]
        if name not in bindings:
            raise ScenarioInvalid(f"unbound reference ${name}")
        return bindings[name]
    return value


def _bind(bindings, step, value):
    if step.get("as"):
        bindings[step["as"]] = value


def _step_advance(cluster, step, bindings):
    cluster.advance(int(step.get("ms", 1000)))


def _step_idle(cluster, step, bindings):
    cluster.idle()


def _step_settle(cluster, step, bindings):
    cluster.settle(int(step.get("ms", SETTLE_MS)))


def _step_offering(cluster, step, bindings):
    rt = cluster.node(step["node"])
    oid = rt.marketplace.create_offering(
        step["name"], step["resource_type"],
        step.get("characteristics") or {},
        step.get("price") or {"amount": 100.0, "currency": "EUR",
                              "unit": "month"},
        sla_terms=step.get("sla_terms"))
    _bind(bindings, step, oid)
    cluster.settle()


def _step_retire(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.marketplace.retire_offering(_ref(bindings, step["offering"]))
    cluster.settle()


def _step_order(cluster, step, bindings):
    rt = cluster.node(step["node"])
    oid = rt.marketplace.create_order(_ref(bindings, step["offering"]))
    _bind(bindings, step, oid)
    cluster.settle()


def _step_order_status(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.marketplace.update_order(_ref(bindings, step["order"]),
                                step["status"], reason=step.get("reason"))
    cluster.settle()


def _step_teardown(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.teardown_order(_ref(bindings, step["order"]))
    cluster.settle()


def _step_remediate(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.remediate_order(_ref(bindings, step["order"]))
    cluster.settle()


def _step_metric_profile(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.broker.set_profile(
        _ref(bindings, step["order"]), step["metric"],
        [tuple(seg) for seg in step["segments"]],
        interval_ms=int(step.get("interval_ms", 1000)),
        duration_s=int(step.get("duration_s", 120)))


def _step_offering_violation(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.broker.emit_offering_violation(
        _ref(bindings, step["order"]),
        step.get("detail", "delivered resource deviates from the offering"))
    cluster.settle()


def _step_inject_fault(cluster, step, bindings):
    rt = cluster.node(step["node"])
    params = dict(step.get("params") or {})
    order = step.get("order")
    rt.broker.inject_fault(step["kind"],
                           order_id=_ref(bindings, order) if order else None,
                           **params)


def _step_clear_fault(cluster, step, bindings):
    cluster.node(step["node"]).broker.clear_fault(step["kind"])


def _step_kill(cluster, step, bindings):
    cluster.kill(step["node"])
    cluster.settle()


def _step_revive(cluster, step, bindings):
    cluster.revive(step["node"])
    cluster.settle()


def _step_commit_request(cluster, step, bindings):
    rt = cluster.node(step["node"])
    candidate = step["candidate"]
    from ..crypto import KeyPair
    kp = KeyPair.generate(seed=cluster.candidate_seed(candidate))
    req_id = rt.identity.submit_commit_request(
        candidate, kp.public_bytes.hex(), step.get("role", "TRADING"))
    _bind(bindings, step, req_id)
    cluster.settle()


def _step_review(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.identity.review_commit_request(_ref(bindings, step["request"]),
                                      bool(step["approve"]))
    cluster.settle()


def _step_join(cluster, step, bindings):
    cluster.join_candidate(step["candidate"])
    cluster.settle()


def _step_revoke(cluster, step, bindings):
    rt = cluster.node(step["node"])
    if step.get("did"):
        did = _ref(bindings, step["did"])
    else:
        target = step["target"]
        if target in cluster.runtimes:
            did = cluster.runtimes[target].keypair.did
        else:
            from ..crypto import KeyPair, did_for
            kp = KeyPair.generate(seed=cluster.candidate_seed(target))
            did = did_for(kp.public_bytes)
    rt.identity.revoke_did(did)
    cluster.settle()


def _step_intent(cluster, step, bindings):
    rt = cluster.node(step["node"])
    found = rt.discover(step["text"], top_m=int(step.get("top_m", 3)),
                        fallback=bool(step.get("fallback", False)))
    _bind(bindings, step, found)
    if step.get("top_as"):
        if not found["results"]:
            raise ExpectFailed(f"no results for {step['text']!r}")
        bindings[step["top_as"]] = found["results"][0]["offering_id"]


def _step_refit(cluster, step, bindings):
    rt = cluster.node(step["node"])
    rt.refit_discovery(k=step.get("k"), d=step.get("d"),
                       seed=int(step.get("seed", 0)))


def _step_expect_order(cluster, step, bindings):
    order_id = _ref(bindings, step["order"])
    nodes = [step["node"]] if step.get("node") else list(cluster.runtimes)
    for node_id in nodes:
        rt = cluster.runtimes[node_id]
        if rt.stopped:
            continue
        try:
            order = rt.marketplace.get_order(order_id)
        except Exception:
            if step.get("node"):
                raise
            continue  # not a party on this node
        if order["status"] != step["status"]:
            raise ExpectFailed(f"order {order_id} on {node_id} is "
                f"{order['status']}, wanted {step['status']}")


def _step_expect_sc(cluster, step, bindings):
    order_id = _ref(bindings, step["order"])
    nodes = [step["node"]] if step.get("node") else list(cluster.runtimes)
    seen = 0
    for node_id in nodes:
        rt = cluster.runtimes[node_id]
        if rt.stopped:
            continue
        sc_id = rt.contracts.sc_for_order(order_id)
        if sc_id is None:
            continue
        sc = rt.contracts.get_state(sc_id)
        seen += 1
        if sc["status"] != step["status"]:
            raise ExpectFailed(f"agreement for {order_id} on {node_id} is "
                f"{sc['status']}, wanted {step['status']}")
    if not seen:
        raise ExpectFailed(f"no agreement for order {order_id}")


def _step_expect_offering(cluster, step, bindings):
    offering_id = _ref(bindings, step["offering"])
    node_id = step.get("node") or "n1"
    offering = cluster.node(node_id).marketplace.get_offering(offering_id)
    want = step.get("status", "ACTIVE")
    if offering["status"] != want:
        raise ExpectFailed(f"offering {offering_id} is "
                                  f"{offering['status']}, wanted {want}")


def _step_expect_event(cluster, step, bindings):
    match = {k: _ref(bindings, v)
             for k, v in (step.get("match") or {}).items()}
    hits = cluster.find(step["topic"], node=step.get("node"), **match)
    want = int(step.get("at_least", 1))
    if len(hits) < want:
        raise ExpectFailed(f"{len(hits)} events on {step['topic']} "
            f"matching {match}, wanted >= {want}")


def _step_expect_no_event(cluster, step, bindings):
    match = {k: _ref(bindings, v)
             for k, v in (step.get("match") or {}).items()}
    hits = cluster.find(step["topic"], node=step.get("node"), **match)
    if hits:
        raise ExpectFailed(f"{len(hits)} unexpected events on {step['topic']}")


def _step_expect_alarm(cluster, step, bindings):
    match = {"order_id": _ref(bindings, step["order"])}
    if step.get("metric"):
        match["metric"] = step["metric"]
    hits = cluster.find("sla.alarm", node=step.get("node"), **match)
    if len(hits) < int(step.get("at_least", 1)):
        raise ExpectFailed(f"no alarm matching {match}")


def _step_expect_alert(cluster, step, bindings):
    match = {"order_id": _ref(bindings, step["order"])}
    if step.get("metric"):
        match["metric"] = step["metric"]
    hits = cluster.find("sla.alert", node=step.get("node"), **match)
    if len(hits) < int(step.get("at_least", 1)):
        raise ExpectFailed(f"no alert matching {match}")
    if step.get("before_alarm"):
        alarms = cluster.find("sla.alarm", **match)
        if alarms and hits[0]["ts_ms"] >= alarms[0]["ts_ms"]:
            raise ExpectFailed("first alert did not precede first alarm")


def _step_expect_identity(cluster, step, bindings):
    node_id = step.get("node") or "n1"
    rt = cluster.node(node_id)
    target = step.get("target")
    if target in cluster.runtimes:
        did = cluster.runtimes[target].keypair.did
    elif target:
        from ..crypto import KeyPair, did_for
        kp = KeyPair.generate(seed=cluster.candidate_seed(target))
        did = did_for(kp.public_bytes)
    else:
        did = _ref(bindings, step["did"])
    record = rt.identity.resolve_did(did)
    for field in ("status", "role"):
        if step.get(field) and record.get(field) != step[field]:
            raise ExpectFailed(f"identity {did} {field} is "
                f"{record.get(field)}, wanted {step[field]}")


def _step_expect_request(cluster, step, bindings):
    node_id = step.get("node") or "n1"
    req_id = _ref(bindings, step["request"])
    req = cluster.node(node_id).identity.requests().get(req_id)
    if req is None:
        raise ExpectFailed(f"no commit request {req_id}")
    if req["status"] != step["status"]:
        raise ExpectFailed(f"request {req_id} is {req['status']}, "
                                  f"wanted {step['status']}")


def _step_expect_hash_equal(cluster, step, bindings):
    channel = step.get("channel")
    if channel and channel.startswith("$order:"):
        from ..marketplace import order_channel
        name = channel[len("$order:"):]
        order_id = bindings.get(name, name)
        order = None
        for rt in cluster.runtimes.values():
            if rt.stopped:
                continue
            try:
                order = rt.marketplace.get_order(order_id)
                break
            except Exception:
                continue
        if order is None:
            raise ExpectFailed(f"no live node knows order {order_id}")
        channel = order_channel(order["provider"], order["consumer"])
    channel = _ref(bindings, channel)
    nodes = step.get("nodes") or [
        n for n, rt in cluster.runtimes.items() if not rt.stopped]
    hashes = {}
    for node_id in nodes:
        rt = cluster.runtimes[node_id]
        if channel in rt.ledger.channels:
            hashes[node_id] = rt.ledger.state_hash(channel)
    if len(hashes) < 2:
        raise ExpectFailed(f"channel {channel} lives on {len(hashes)} of the "
            f"checked nodes, cannot compare")
    if len(set(hashes.values())) != 1:
        raise ExpectFailed(f"state hashes diverge: {hashes}")


def _step_expect_discovery(cluster, step, bindings):
    found = _ref(bindings, step["result"])
    results = found["results"]
    want = _ref(bindings, step.get("top"))
    if want:
        if not results or results[0]["offering_id"] != want:
            got = results[0]["offering_id"] if results else None
            raise ExpectFailed(f"top result {got}, wanted {want}")
    contains = step.get("contains")
    if contains:
        ids = {r["offering_id"] for r in results}
        missing = [c for c in contains if _ref(bindings, c) not in ids]
        if missing:
            raise ExpectFailed(f"results missing {missing}")
    if step.get("count") is not None \
            and len(results) != int(step["count"]):
        raise ExpectFailed(f"{len(results)} results, wanted {step['count']}")


def _step_expect_lake(cluster, step, bindings):
    rt = cluster.node(step["node"])
    points = rt.query_lake(_ref(bindings, step["order"]), step["metric"])
    if len(points) < int(step.get("at_least", 1)):
        raise ExpectFailed(f"lake has {len(points)} points, "
                           f"wanted >= {step.get('at_least', 1)}")


def _dig(doc, dotted):
    cur = doc
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


_STEPS = {
    "advance": _step_advance,
    "idle": _step_idle,
    "settle": _step_settle,
    "offering": _step_offering,
    "retire": _step_retire,
    "order": _step_order,
    "order_status": _step_order_status,
    "teardown": _step_teardown,
    "remediate": _step_remediate,
    "metric_profile": _step_metric_profile,
    "offering_violation": _step_offering_violation,
    "inject_fault": _step_inject_fault,
    "clear_fault": _step_clear_fault,
    "kill": _step_kill,
    "revive": _step_revive,
    "commit_request": _step_commit_request,
    "review": _step_review,
    "join": _step_join,
    "revoke": _step_revoke,
    "intent": _step_intent,
    "refit": _step_refit,
    "expect_order": _step_expect_order,
    "expect_sc": _step_expect_sc,
    "expect_offering": _step_expect_offering,
    "expect_event": _step_expect_event,
    "expect_no_event": _step_expect_no_event,
    "expect_alarm": _step_expect_alarm,
    "expect_alert": _step_expect_alert,
    "expect_identity": _step_expect_identity,
    "expect_request": _step_expect_request,
    "expect_hash_equal": _step_expect_hash_equal,
    "expect_discovery": _step_expect_discovery,
    "expect_lake": _step_expect_lake,
}

"""Node runtime: one marketplace participant.

Wires the ledger, identity, marketplace, agreement, assurance, and broker
engines over a shared scheduler and bus, and runs the provider-side
automation that turns a committed order into a delivered, monitored
service:

    order ACKNOWLEDGED   -> compose the agreement
    agreement composed   -> register assurance watch, check availability
    capacity available   -> order IN_PROGRESS, deploy
    deployment COMPLETED -> agreement ACTIVE, metric feed starts
    teardown             -> agreement TERMINATED, order COMPLETED
    deployment fault     -> agreement TERMINATED, order FAILED

The consumer side registers a non-evaluating watch on the same terms:
measurements it is handed (its own probes, audit feeds) are stored but
never alarmed, so the provider stays the one writer of breach events.

A runtime is loop-agnostic: under a `SimClock` many runtimes share one
scheduler in one thread; under a `WallClock` the caller pumps the
scheduler (see the node CLI). After a restart with a data directory, the
ledger replays from disk, projections rebuild, and the reconcile pass
re-registers watches and re-deploys resources this node still owes.
"""

import logging

import yaml

from .broker import Broker
from .bus import Bus
from .contracts import ContractsEngine
from .crypto import KeyPair
from .discovery import (
    classify_offer,
    discover,
    fit_clusters,
    parse_intent,
    resolve_clusters,
)
from .errors import (
    CapacityRace, ConfigInvalid, IllegalEvent, IllegalTransition, NotFound,
    NotParty,
)
from .identity import IDENTITY_CHANNEL, IdentityEngine, genesis_identity_txs
from .ledger import LedgerNode, NodeDirectory
from .marketplace import MARKET_CHANNEL, MarketplaceEngine
from .sla import SlaEngine

log = logging.getLogger(__name__)

NON_TERMINAL_SC = ("CREATED", "DEPLOYING", "ACTIVE", "SUSPENDED", "VIOLATED")


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot load config {path}: {exc}") from exc
    return check_config(config)


def check_config(config) -> dict:
    if not isinstance(config, dict):
        raise ConfigInvalid("config must be a mapping")
    if not config.get("node_id"):
        raise ConfigInvalid("config needs node_id", field="node_id")
    if not config.get("key_seed"):
        raise ConfigInvalid("config needs key_seed", field="key_seed")
    founding = config.get("founding") or []
    for entry in founding:
        if "node_id" not in entry or "public_key" not in entry:
            raise ConfigInvalid("founding entries need node_id and public_key",
                                field="founding")
    config.setdefault("auto_provider", True)
    config.setdefault("data_dir", None)
    config.setdefault("founding", founding)
    return config


def make_founding(node_ids, seed_prefix="sixgen") -> list:
    """Deterministic founding set: one keypair per node id from the prefix."""
    out = []
    for node_id in node_ids:
        kp = KeyPair.generate(seed=f"{seed_prefix}-{node_id}")
        out.append({
            "node_id": node_id,
            "public_key": kp.public_bytes.hex(),
            "key_seed": f"{seed_prefix}-{node_id}",
        })
    return out


class NodeRuntime:
    def __init__(self, config, scheduler, network):
        self.config = check_config(dict(config))
        self.node_id = self.config["node_id"]
        self.scheduler = scheduler
        self.network = network
        self.clock = scheduler.clock
        self.keypair = KeyPair.generate(seed=self.config["key_seed"])
        self.stopped = False

        self.bus = Bus(scheduler)
        directory = NodeDirectory()
        for entry in self.config["founding"]:
            directory.add(entry["node_id"], bytes.fromhex(entry["public_key"]))
        self.ledger = LedgerNode(self.node_id, self.keypair, scheduler,
                                 network, self.bus, directory,
                                 data_dir=self.config["data_dir"])
        self.identity = IdentityEngine(self.node_id, self.keypair,
                                       self.ledger, self.bus, self.clock)
        self.marketplace = MarketplaceEngine(self.node_id, self.ledger,
                                             self.identity, self.bus,
                                             self.clock)
        self.contracts = ContractsEngine(self.node_id, self.ledger,
                                         self.marketplace, self.bus,
                                         self.clock)
        self.sla = SlaEngine(self.clock, self.bus, emitter=self._sla_emit,
                             gate=self._sla_gate)
        self.broker = Broker(self.node_id, scheduler,
                             emitter=self._broker_emit,
                             sink=self._broker_sink,
                             capacity=self.config.get("capacity"))
        self.offer_space = None

        self.bus.subscribe(["market.order"], self._on_order)
        self.bus.subscribe(["sc.composed"], self._on_composed)
        self.bus.subscribe(["ledger.caught_up"], lambda env: self._reconcile())

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> "NodeRuntime":
        self.ledger.start()
        founding_ids = [e["node_id"] for e in self.config["founding"]]
        if self.node_id in founding_ids \
                and IDENTITY_CHANNEL not in self.ledger.channels:
            self.ledger.bootstrap_channel(
                IDENTITY_CHANNEL, "*", True,
                extra_txs=genesis_identity_txs(self.config["founding"]))
            self.ledger.bootstrap_channel(MARKET_CHANNEL, "*", True)
        self._reconcile()
        return self

    def join_network(self):
        """Pull public channels from a live peer (first start of a newcomer,
        or any restart); private channels follow via the channel listing."""
        self.ledger.restore()

    def stop(self):
        self.stopped = True
        self.broker.halt()
        self.ledger.stop()

    def _reconcile(self):
        """Idempotent repair after replay or catch-up: watches, deployments,
        and any provider step the replayed history shows as still owed."""
        for state in self.contracts.list_instances():
            if state["status"] not in NON_TERMINAL_SC:
                continue
            order_id = state["order_id"]
            if not self.sla.watched(order_id):
                try:
                    terms = self.contracts.effective_terms(state["sc_id"])
                    self.sla.register_sla(
                        order_id, terms,
                        evaluate=state["provider"] == self.node_id)
                except NotFound:
                    continue
            if not self.config["auto_provider"] \
                    or state["provider"] != self.node_id \
                    or order_id in self.broker.deployments:
                continue
            try:
                order = self.marketplace.get_order(order_id)
            except NotFound:
                continue
            if state["status"] in ("ACTIVE", "VIOLATED"):
                self.broker.adopt(order)
                self.broker.redeploy(order_id)
            elif state["status"] == "CREATED" \
                    and order["status"] == "ACKNOWLEDGED" \
                    and not self.broker.awaiting_capacity(order_id):
                self.broker.check_availability(order)
            elif state["status"] == "DEPLOYING" \
                    and order["status"] == "IN_PROGRESS":
                try:
                    self.broker.deploy(order)
                except CapacityRace:
                    log.warning("cannot redeploy %s after restart, "
                                "capacity is taken", order_id)
        if not self.config["auto_provider"]:
            return
        # Orders committed while this node was down never raised a bus
        # event here, so the compose step is owed from the projection.
        for order in self.marketplace.list_orders(party=self.node_id,
                                                  status="ACKNOWLEDGED"):
            if order["provider"] == self.node_id \
                    and self.contracts.sc_for_order(order["order_id"]) is None:
                self.contracts.compose(order["order_id"])

    # -- provider automation --------------------------------------------------------

    def _on_order(self, env):
        order = env["data"]["order"]
        if self.stopped or not self.config["auto_provider"]:
            return
        if order["provider"] != self.node_id:
            return
        if order["status"] == "ACKNOWLEDGED" \
                and self.contracts.sc_for_order(order["order_id"]) is None:
            self.contracts.compose(order["order_id"])

    def _on_composed(self, env):
        state = env["data"]
        order_id = state["order_id"]
        if self.stopped:
            return
        if not self.sla.watched(order_id):
            try:
                terms = self.contracts.effective_terms(state["sc_id"])
            except NotFound:
                return
            if terms:
                self.sla.register_sla(
                    order_id, terms,
                    evaluate=state["provider"] == self.node_id)
        if self.config["auto_provider"] and state["provider"] == self.node_id:
            order = self.marketplace.get_order(order_id)
            self.broker.check_availability(order)

    def _broker_emit(self, kind, payload):
        order_id = payload["order_id"]
        sc_id = self.contracts.sc_for_order(order_id)
        if sc_id is not None:
            event = {"kind": kind, **payload}
            if kind == "AVAILABILITY_RESPONSE":
                event = {"kind": kind, "order_id": order_id,
                         "available": payload["available"]}
            try:
                self.contracts.submit_event(sc_id, event)
            except IllegalEvent as exc:
                log.warning("broker event dropped for %s: %s", sc_id, exc)
        if not self.config["auto_provider"] or self.stopped:
            return
        if kind == "AVAILABILITY_RESPONSE" and payload["available"]:
            self._deploy_if_ready(order_id)
        elif kind == "DEPLOYMENT_STATUS" and payload["status"] == "FAILED":
            outcome = "COMPLETED" if payload.get("reason") == "teardown" \
                else "FAILED"
            self._finish_order(order_id, outcome, payload.get("reason"))

    def _deploy_if_ready(self, order_id):
        try:
            order = self.marketplace.get_order(order_id)
        except NotFound:
            return
        if order["provider"] != self.node_id:
            return
        if order["status"] == "ACKNOWLEDGED" \
                and order_id not in self.broker.deployments:
            self.marketplace.update_order(order_id, "IN_PROGRESS")
            self.broker.deploy(dict(order, status="IN_PROGRESS"))

    def _finish_order(self, order_id, outcome, reason=None):
        try:
            order = self.marketplace.get_order(order_id)
        except NotFound:
            return
        if order["provider"] != self.node_id \
                or order["status"] != "IN_PROGRESS":
            return
        try:
            self.marketplace.update_order(order_id, outcome, reason=reason)
        except IllegalTransition as exc:
            log.warning("cannot finish %s as %s: %s", order_id, outcome, exc)

    def _sla_emit(self, kind, payload):
        sc_id = self.contracts.sc_for_order(payload["order_id"])
        if sc_id is None:
            return
        try:
            self.contracts.submit_event(sc_id, {"kind": kind, **payload})
        except IllegalEvent as exc:
            log.warning("assurance event dropped for %s: %s", sc_id, exc)

    def _sla_gate(self, order_id) -> bool:
        sc_id = self.contracts.sc_for_order(order_id)
        if sc_id is None:
            return True
        status = self.contracts.get_state(sc_id)["status"]
        return status not in ("SUSPENDED", "TERMINATED")

    def _broker_sink(self, order_id, metric, value, ts_ms):
        if self.sla.watched(order_id):
            self.sla.ingest(order_id, metric, value, ts_ms=ts_ms)

    # -- operations used by the API and the harness ------------------------------------

    def teardown_order(self, order_id):
        self._require_provider_side(order_id, "teardown")
        self.broker.teardown(order_id)

    def remediate_order(self, order_id):
        self._require_provider_side(order_id, "remediation")
        self.broker.redeploy(order_id)

    def _require_provider_side(self, order_id, action):
        # Deployments live on the providing node only, so these ops
        # cannot be served from the consumer side.
        order = self.marketplace.get_order(order_id)
        if order["provider"] != self.node_id:
            raise NotParty(
                f"{action} for {order_id} runs on the provider "
                f"node {order['provider']}")

    def submit_metric(self, order_id, metric, value, ts_ms=None) -> dict:
        return self.sla.ingest(order_id, metric, value, ts_ms=ts_ms)

    def refit_discovery(self, k=None, d=None, seed=0) -> dict:
        corpus = self.marketplace.list_offerings(status="ACTIVE")
        self.offer_space = fit_clusters(corpus, k=k, d=d, seed=seed)
        self.bus.publish("discovery.refit", self.offer_space.describe())
        return self.offer_space.describe()

    def discover(self, text, top_m=3, fallback=False) -> dict:
        corpus = self.marketplace.list_offerings(status="ACTIVE")
        space = None if fallback else self.offer_space
        return discover(space, corpus, text, top_m=top_m, fallback=fallback)

    def classify_offering(self, offering_id) -> dict:
        offering = self.marketplace.get_offering(offering_id)
        cluster = classify_offer(self.offer_space, offering)
        return {"offering_id": offering_id, "cluster": cluster}

    def resolve_intent_clusters(self, text) -> list:
        return resolve_clusters(self.offer_space, parse_intent(text))

    def sla_status(self, order_id) -> dict:
        return self.sla.status(order_id)

    def query_lake(self, order_id, metric, from_ts=None, to_ts=None,
                   max_points=None) -> list:
        return self.sla.query_lake(order_id, metric, from_ts, to_ts,
                                   max_points)

    def events_since(self, topics, offsets=None, limit=500) -> list:
        out = []
        offsets = offsets or {}
        for topic in topics:
            out.extend(self.bus.read(topic, offsets.get(topic, 0)))
        out.sort(key=lambda e: (e["ts_ms"], e["topic"], e["offset"]))
        return out[:limit]

    def health(self) -> dict:
        return {
            "node_id": self.node_id,
            "did": self.keypair.did,
            "started": self.ledger.started,
            "channels": self.ledger.list_channels(),
            "now_ms": self.clock.now_ms(),
            "orders": len(self.marketplace.list_orders()),
            "agreements": len(self.contracts.instances),
        }

"""Ledger-backed agreement engine.

Composition and every later event are transactions on the order channel of
the trading pair, under keys ``scev/<sc_id>/<hash>``. Key order carries no
meaning; the channel's total order does. Each party folds the same event
stream through the pure state machine, so `get_state` answers identically
on both nodes without any extra coordination.

The composition event stores only a model reference (baseline name plus
overrides) and the binding map. Models are reconstructed locally from the
packaged baselines, and the legal prose is re-rendered and re-hashed on
each node; a hash that differs from the anchored one is loudly logged, as
it means the parties are not reading the same agreement text.
"""

import datetime
import logging

from ..canon import doc_hash
from ..errors import AlreadyComposed, IllegalEvent, NotFound
from ..marketplace import order_channel
from . import model as model_mod
from . import prose as prose_mod
from . import sc

log = logging.getLogger(__name__)

BASELINE_FOR_RESOURCE = {
    "VNF": "vnf-b2b",
    "EDGE_CLOUD": "edgecloud-b2b",
    "SLICE": "slice-b2b",
    "NETWORK_SERVICE": "ns-b2b",
    "RAN": "ns-b2b",
}


def _effective_date(ts_ms: int) -> str:
    dt = datetime.datetime.fromtimestamp(ts_ms / 1000, datetime.timezone.utc)
    return dt.strftime("%Y-%m-%d")


def standard_bindings(order: dict, offering_name: str) -> dict:
    return {
        "provider_name": order["provider"],
        "consumer_name": order["consumer"],
        "provider_did": order["provider_did"],
        "consumer_did": order["consumer_did"],
        "offering_name": offering_name,
        "price_amount": order["price"]["amount"],
        "price_currency": order["price"]["currency"],
        "price_unit": order["price"].get("unit", "hour"),
        "effective_date": _effective_date(order["created_ms"]),
    }


class ContractsEngine:
    def __init__(self, node_id, ledger, marketplace, bus, clock):
        self.node_id = node_id
        self.ledger = ledger
        self.marketplace = marketplace
        self.bus = bus
        self.clock = clock
        self.instances = {}
        self.event_logs = {}
        self.skipped = {}
        self._sc_by_order = {}
        self._channels = {}
        self._models = {}
        ledger.on_commit(self._on_commit)

    # -- composition -------------------------------------------------------------

    def compose(self, order_id, baseline=None, overrides=None,
                on_applied=None) -> str:
        order = self.marketplace.get_order(order_id)
        if order_id in self._sc_by_order:
            raise AlreadyComposed(f"order {order_id} already has "
                                  f"{self._sc_by_order[order_id]}")
        baseline = baseline or BASELINE_FOR_RESOURCE[order["resource_type"]]
        overrides = overrides or {}
        model = self._load(baseline, overrides)
        offering_name = order_id
        try:
            offering = self.marketplace.get_offering(order["offering_id"])
            offering_name = offering["name"]
        except NotFound:
            log.warning("offering %s not found while composing for %s",
                        order["offering_id"], order_id)
        bindings = standard_bindings(order, offering_name)
        text = prose_mod.render_prose(model, bindings)
        sc_id = "sc-" + order_id[len("ord-"):]
        event = {
            "kind": "COMPOSED",
            "sc_id": sc_id,
            "order_id": order_id,
            "baseline": baseline,
            "overrides": overrides,
            "bindings": bindings,
            "legal_hash": prose_mod.prose_hash(text),
            "ts_ms": self.clock.now_ms(),
        }
        self._submit(order_id, sc_id, event, on_applied)
        return sc_id

    def submit_event(self, sc_id, event, on_applied=None):
        """Record an event; validated against the local fold before it goes out."""
        state = self.get_state(sc_id)
        event = dict(event, sc_id=sc_id, ts_ms=self.clock.now_ms())
        sc.apply_event(state, event)  # IllegalEvent propagates to the caller
        self._submit(state["order_id"], sc_id, event, on_applied)
        return event

    def _submit(self, order_id, sc_id, event, on_applied=None):
        channel = self._channels.get(sc_id)
        if channel is None:
            order = self.marketplace.get_order(order_id)
            channel = order_channel(order["consumer"], order["provider"])
        key = f"scev/{sc_id}/{doc_hash(event)[:16]}"
        self.ledger.submit_tx(channel, {"op": "PUT", "key": key, "doc": event},
                              on_applied=on_applied)

    # -- queries --------------------------------------------------------------------

    def get_state(self, sc_id) -> dict:
        state = self.instances.get(sc_id)
        if state is None:
            raise NotFound(f"no agreement {sc_id}")
        return dict(state)

    def get_events(self, sc_id) -> list:
        if sc_id not in self.instances:
            raise NotFound(f"no agreement {sc_id}")
        return list(self.event_logs.get(sc_id, []))

    def sc_for_order(self, order_id):
        return self._sc_by_order.get(order_id)

    def list_instances(self) -> list:
        return [dict(s) for _, s in sorted(self.instances.items())]

    def legal_prose(self, sc_id) -> dict:
        state = self.get_state(sc_id)
        model = self._load(state["model"]["baseline"],
                           state["model"]["overrides"])
        text = prose_mod.render_prose(model, state["bindings"])
        return {
            "sc_id": sc_id,
            "markdown": text,
            "hash": prose_mod.prose_hash(text),
            "anchored_hash": state["legal_hash"],
        }

    def effective_terms(self, sc_id) -> list:
        """Model terms merged with the order's own, order terms winning."""
        state = self.get_state(sc_id)
        model = self._load(state["model"]["baseline"],
                           state["model"]["overrides"])
        order = self.marketplace.get_order(state["order_id"])
        merged = {t["term_id"]: dict(t) for t in model["terms"]}
        for term in order.get("sla_terms", []):
            merged[term["term_id"]] = dict(term)
        return [merged[k] for k in sorted(merged)]

    def _load(self, baseline, overrides):
        key = (baseline, doc_hash(overrides))
        if key not in self._models:
            model = model_mod.apply_overrides(
                model_mod.load_baseline(baseline), overrides)
            model_mod.validate_model(model)
            self._models[key] = model
        return self._models[key]

    # -- fold --------------------------------------------------------------------------

    def _on_commit(self, channel, key, doc, tx, replay):
        if not key.startswith("scev/"):
            return
        sc_id = doc["sc_id"]
        if doc["kind"] == "COMPOSED":
            self._fold_composed(channel, sc_id, doc, replay)
        else:
            self._fold_event(sc_id, doc, replay)

    def _fold_composed(self, channel, sc_id, doc, replay):
        if sc_id in self.instances:
            log.warning("duplicate composition for %s ignored", sc_id)
            return
        try:
            order = self.marketplace.get_order(doc["order_id"])
        except NotFound:
            log.warning("composition for unknown order %s skipped",
                        doc["order_id"])
            return
        model = self._load(doc["baseline"], doc["overrides"])
        text = prose_mod.render_prose(model, doc["bindings"])
        if prose_mod.prose_hash(text) != doc["legal_hash"]:
            log.warning("legal prose hash mismatch for %s: local rendering "
                        "differs from the anchored text", sc_id)
        state = sc.new_instance(sc_id, order,
                                {"baseline": doc["baseline"],
                                 "overrides": doc["overrides"]},
                                doc["bindings"], doc["legal_hash"],
                                doc["ts_ms"])
        self.instances[sc_id] = state
        self.event_logs[sc_id] = [doc]
        self.skipped[sc_id] = 0
        self._sc_by_order[doc["order_id"]] = sc_id
        self._channels[sc_id] = channel
        if not replay:
            self.bus.publish("sc.composed", dict(state))

    def _fold_event(self, sc_id, doc, replay):
        state = self.instances.get(sc_id)
        if state is None:
            log.warning("event for unknown agreement %s skipped", sc_id)
            return
        try:
            new_state = sc.apply_event(state, doc)
        except IllegalEvent as exc:
            # Both replicas fold the same order, so both skip the same event.
            self.skipped[sc_id] += 1
            log.warning("skipping illegal event on %s: %s", sc_id, exc)
            return
        self.instances[sc_id] = new_state
        self.event_logs[sc_id].append(doc)
        if not replay:
            self.bus.publish("sc.event", {
                "sc_id": sc_id, "event": doc, "status": new_state["status"],
            })
            if new_state["status"] != state["status"]:
                self.bus.publish("sc.status", {
                    "sc_id": sc_id,
                    "order_id": new_state["order_id"],
                    "from": state["status"],
                    "to": new_state["status"],
                    "alerts_open": new_state["alerts_open"],
                })

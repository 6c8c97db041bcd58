"""Offering catalog and order lifecycle.

Offerings live on the public ``market`` channel. Orders live on a private
channel per trading pair (``order-<a>-<b>``, ids sorted), created lazily on
the first order between two nodes, so the existence and content of a deal
never leaves the two parties.

Order states:

    ACKNOWLEDGED -> IN_PROGRESS | CANCELLED
    IN_PROGRESS  -> COMPLETED | FAILED

Cancellation belongs to the consumer, the other transitions to the
provider. Every applied order update is published on the bus as
``market.order`` with the prior status attached.
"""

import logging

from .canon import canonical_bytes, doc_hash
from .errors import (
    AlreadyRetired,
    IllegalTransition,
    InvalidOffering,
    NotApproved,
    NotFound,
    NotOwner,
    NotParty,
    OfferingNotActive,
    SelfTrade,
)

log = logging.getLogger(__name__)

MARKET_CHANNEL = "market"
DOC_MAX_BYTES = 2048

RESOURCE_TYPES = ("VNF", "EDGE_CLOUD", "SLICE", "RAN", "NETWORK_SERVICE")

REQUIRED_CHARACTERISTICS = {
    "VNF": ("cores", "ram_gb"),
    "EDGE_CLOUD": ("cores", "ram_gb", "storage_gb"),
    "SLICE": ("latency_ms", "throughput_mbps", "coverage"),
    "RAN": ("operating_band", "bandwidth_mhz"),
    "NETWORK_SERVICE": ("component_count",),
}

# Characteristics that are labels, not quantities.
TEXT_CHARACTERISTICS = {"coverage", "operating_band"}

ORDER_TRANSITIONS = {
    "ACKNOWLEDGED": {"IN_PROGRESS", "CANCELLED"},
    "IN_PROGRESS": {"COMPLETED", "FAILED"},
    "CANCELLED": set(),
    "COMPLETED": set(),
    "FAILED": set(),
}

# Which side of the trade may request each transition.
TRANSITION_ACTOR = {
    "IN_PROGRESS": "provider",
    "COMPLETED": "provider",
    "FAILED": "provider",
    "CANCELLED": "consumer",
}

TRADING_ROLES = {"ADMIN", "TRADING"}


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_sla_terms(terms):
    for term in terms or []:
        for field in ("term_id", "metric", "op", "threshold", "kind"):
            if field not in term:
                raise InvalidOffering(f"sla term missing {field}", field="sla_terms")
        if term["op"] not in ("LTE", "GTE"):
            raise InvalidOffering(f"bad op {term['op']}", field="sla_terms")
        if term["kind"] not in ("INSTANT", "WINDOW_MEAN"):
            raise InvalidOffering(f"bad kind {term['kind']}", field="sla_terms")
        if not _is_number(term["threshold"]):
            raise InvalidOffering("threshold must be numeric", field="sla_terms")
        if term["kind"] == "WINDOW_MEAN" and not _is_number(term.get("window_s")):
            raise InvalidOffering("WINDOW_MEAN needs window_s", field="sla_terms")


def validate_offering(doc):
    rtype = doc.get("resource_type")
    if rtype not in RESOURCE_TYPES:
        raise InvalidOffering(f"unknown resource type {rtype!r}",
                              field="resource_type")
    if not doc.get("name"):
        raise InvalidOffering("offering needs a name", field="name")
    chars = doc.get("characteristics") or {}
    for req in REQUIRED_CHARACTERISTICS[rtype]:
        if req not in chars:
            raise InvalidOffering(f"{rtype} requires {req}", field=req)
        if req in TEXT_CHARACTERISTICS:
            if not isinstance(chars[req], str) or not chars[req]:
                raise InvalidOffering(f"{req} must be a label", field=req)
        elif not _is_number(chars[req]):
            raise InvalidOffering(f"{req} must be numeric", field=req)
    price = doc.get("price") or {}
    if not _is_number(price.get("amount")) or price["amount"] < 0:
        raise InvalidOffering("price.amount must be a non-negative number",
                              field="price")
    if not price.get("currency"):
        raise InvalidOffering("price.currency is required", field="price")
    validate_sla_terms(doc.get("sla_terms"))
    if len(canonical_bytes(doc)) > DOC_MAX_BYTES:
        raise InvalidOffering(f"offering exceeds {DOC_MAX_BYTES} bytes")


def order_channel(a: str, b: str) -> str:
    lo, hi = sorted((a, b))
    return f"order-{lo}-{hi}"


class MarketplaceEngine:
    def __init__(self, node_id, ledger, identity, bus, clock):
        self.node_id = node_id
        self.ledger = ledger
        self.identity = identity
        self.bus = bus
        self.clock = clock
        self._orders = {}  # order_id -> channel, kept by projection
        self._parked = {}  # channel -> [order docs awaiting the channel]
        ledger.on_commit(self._on_commit)
        bus.subscribe(["ledger.channel"], self._on_channel)

    # -- offerings ---------------------------------------------------------------

    def create_offering(self, name, resource_type, characteristics, price,
                        sla_terms=None, on_applied=None) -> str:
        self._require_trading_role()
        offering_id = "of-" + doc_hash({
            "provider": self.node_id, "name": name,
            "ts": self.clock.now_ms(),
        })[:12]
        doc = {
            "offering_id": offering_id,
            "provider": self.node_id,
            "provider_did": self.identity.resolve_node(self.node_id)["did"],
            "name": name,
            "resource_type": resource_type,
            "characteristics": characteristics,
            "price": price,
            "sla_terms": sla_terms or [],
            "status": "ACTIVE",
            "created_ms": self.clock.now_ms(),
        }
        validate_offering(doc)
        self._put_offering(doc, on_applied)
        return offering_id

    def update_offering(self, offering_id, changes, on_applied=None):
        doc = dict(self.get_offering(offering_id))
        if doc["provider"] != self.node_id:
            raise NotOwner(f"{offering_id} belongs to {doc['provider']}")
        if doc["status"] == "RETIRED":
            raise AlreadyRetired(f"{offering_id} is retired")
        for field in ("offering_id", "provider", "provider_did", "created_ms",
                      "status"):
            if field in changes:
                raise InvalidOffering(f"{field} cannot be changed", field=field)
        doc.update(changes)
        validate_offering(doc)
        self._put_offering(doc, on_applied)

    def retire_offering(self, offering_id, on_applied=None):
        doc = dict(self.get_offering(offering_id))
        if doc["provider"] != self.node_id:
            raise NotOwner(f"{offering_id} belongs to {doc['provider']}")
        if doc["status"] == "RETIRED":
            raise AlreadyRetired(f"{offering_id} is already retired")
        doc["status"] = "RETIRED"
        self._put_offering(doc, on_applied)

    def get_offering(self, offering_id) -> dict:
        doc = self.ledger.read_state(MARKET_CHANNEL, f"offering/{offering_id}")
        if doc is None:
            raise NotFound(f"no offering {offering_id}")
        return doc

    def list_offerings(self, resource_type=None, status="ACTIVE",
                       provider=None, max_price=None) -> list:
        out = []
        for doc in self.ledger.read_all(MARKET_CHANNEL, "offering/").values():
            if resource_type and doc["resource_type"] != resource_type:
                continue
            if status and doc["status"] != status:
                continue
            if provider and doc["provider"] != provider:
                continue
            if max_price is not None and doc["price"]["amount"] > max_price:
                continue
            out.append(doc)
        out.sort(key=lambda d: d["offering_id"])
        return out

    def _put_offering(self, doc, on_applied):
        self.ledger.submit_tx(
            MARKET_CHANNEL,
            {"op": "PUT", "key": f"offering/{doc['offering_id']}", "doc": doc},
            on_applied=on_applied)

    # -- orders --------------------------------------------------------------------

    def create_order(self, offering_id, on_applied=None) -> str:
        self._require_trading_role()
        offering = self.get_offering(offering_id)
        if offering["status"] != "ACTIVE":
            raise OfferingNotActive(f"{offering_id} is {offering['status']}")
        provider = offering["provider"]
        if provider == self.node_id:
            raise SelfTrade("cannot order from yourself")
        now = self.clock.now_ms()
        order_id = "ord-" + doc_hash({
            "offering": offering_id, "consumer": self.node_id, "ts": now,
        })[:12]
        doc = {
            "order_id": order_id,
            "offering_id": offering_id,
            "consumer": self.node_id,
            "consumer_did": self.identity.resolve_node(self.node_id)["did"],
            "provider": provider,
            "provider_did": offering["provider_did"],
            "resource_type": offering["resource_type"],
            "characteristics": offering["characteristics"],
            "price": offering["price"],
            "sla_terms": offering["sla_terms"],
            "status": "ACKNOWLEDGED",
            "history": [{"from": None, "to": "ACKNOWLEDGED",
                         "ts_ms": now, "by": self.node_id}],
            "created_ms": now,
        }
        if len(canonical_bytes(doc)) > DOC_MAX_BYTES:
            raise InvalidOffering(f"order exceeds {DOC_MAX_BYTES} bytes")
        channel = order_channel(self.node_id, provider)
        if channel in self.ledger.channels:
            self._put_order(channel, doc, on_applied)
        else:
            self._parked.setdefault(channel, []).append((doc, on_applied))
            self.ledger.create_channel(channel, [self.node_id, provider])
        return order_id

    def update_order(self, order_id, new_status, reason=None, on_applied=None):
        channel, doc = self._find_order(order_id)
        doc = dict(doc)
        actor_side = TRANSITION_ACTOR.get(new_status)
        if actor_side is None:
            raise IllegalTransition(f"unknown order status {new_status}")
        if doc.get(actor_side) != self.node_id:
            if self.node_id not in (doc["consumer"], doc["provider"]):
                raise NotParty(f"{self.node_id} is not a party to {order_id}")
            raise NotParty(f"only the {actor_side} may set {new_status}")
        if new_status not in ORDER_TRANSITIONS[doc["status"]]:
            raise IllegalTransition(
                f"{doc['status']} cannot move to {new_status}")
        entry = {"from": doc["status"], "to": new_status,
                 "ts_ms": self.clock.now_ms(), "by": self.node_id}
        if reason:
            entry["reason"] = reason
        doc["status"] = new_status
        doc["history"] = doc["history"] + [entry]
        self._put_order(channel, doc, on_applied)

    def get_order(self, order_id) -> dict:
        _, doc = self._find_order(order_id)
        return doc

    def list_orders(self, party=None, status=None) -> list:
        out = []
        for order_id, channel in sorted(self._orders.items()):
            doc = self.ledger.read_state(channel, f"order/{order_id}")
            if doc is None:
                continue
            if party and party not in (doc["consumer"], doc["provider"]):
                continue
            if status and doc["status"] != status:
                continue
            out.append(doc)
        return out

    def _put_order(self, channel, doc, on_applied=None):
        self.ledger.submit_tx(
            channel,
            {"op": "PUT", "key": f"order/{doc['order_id']}", "doc": doc},
            on_applied=on_applied)

    def _find_order(self, order_id):
        channel = self._orders.get(order_id)
        if channel is None:
            raise NotFound(f"no order {order_id}")
        doc = self.ledger.read_state(channel, f"order/{order_id}")
        if doc is None:
            raise NotFound(f"no order {order_id}")
        return channel, doc

    def _require_trading_role(self):
        try:
            role = self.identity.resolve_node(self.node_id)["role"]
        except NotFound:
            raise NotApproved(f"{self.node_id} has no identity") from None
        if role not in TRADING_ROLES:
            raise NotApproved(f"role {role} may not trade")

    # -- projection -------------------------------------------------------------------

    def _on_commit(self, channel, key, doc, tx, replay):
        if channel == MARKET_CHANNEL and key.startswith("offering/"):
            if not replay:
                self.bus.publish("market.offering", doc)
        elif channel.startswith("order-") and key.startswith("order/"):
            prior = None
            if doc["order_id"] in self._orders:
                hist = doc.get("history", [])
                prior = hist[-1]["from"] if hist else None
            self._orders[doc["order_id"]] = channel
            if not replay:
                self.bus.publish("market.order",
                                 {"order": doc, "prior_status": prior})

    def _on_channel(self, env):
        channel = env["data"]["name"]
        for doc, on_applied in self._parked.pop(channel, []):
            self._put_order(channel, doc, on_applied)

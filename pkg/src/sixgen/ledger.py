"""Channel-partitioned replicated ledger.

Each channel is an independent hash-linked chain of blocks with its own
world state (key -> versioned JSON doc) and its own member set. Ordering is
single-leader: the live member with the lowest node id sequences
transactions into blocks, cut at 50 transactions or 200 ms after the first
pending one, whichever comes first. Followers validate each block against
their local tip, apply it, and acknowledge; a block is confirmed once a
majority of members acknowledged it. Submitters keep an outbox and re-send
unconfirmed transactions every second, re-resolving the leader each time,
which carries traffic across a leader crash without an explicit election
round. A node that was down catches up block-by-block from a live peer; if
its tip conflicts with what the peer serves (a block cut but never spread
before a crash), it discards its copy and rebuilds from height zero.

Private channels replicate only to their members, and every operation on a
channel a node does not hold fails with the same error whether the channel
does not exist or the caller is simply not allowed to see it. Public
channels replicate to every active node in the directory.

World-state writes fan out to registered commit hooks. Hooks receive a
``replay`` flag: True when the block comes from disk replay or catch-up,
so projections rebuild state without re-triggering side effects.
"""

import logging
import os
import re
import struct
import json

from . import crypto
from .canon import (
    GENESIS_PREV_HASH,
    block_hash,
    canonical_bytes,
    doc_hash,
    tx_id as make_tx_id,
)
from .errors import (
    BadSignature,
    DataCorrupt,
    DuplicateChannel,
    NodeStopped,
    NotMember,
    PayloadTooLarge,
    UnknownChannel,
    UnknownMember,
)

log = logging.getLogger(__name__)

MAX_PAYLOAD_BYTES = 64 * 1024
BLOCK_MAX_TX = 50
BLOCK_MAX_WAIT_MS = 200
RETRANSMIT_MS = 1000
CATCH_UP_CHUNK = 20
PUBLIC_MEMBERS = "*"

_CHANNEL_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9._-]{0,63}$")


class NodeDirectory:
    """A node's local view of which peers exist and their keys."""

    def __init__(self):
        self._nodes = {}

    def add(self, node_id: str, public_key: bytes, did: str = None):
        self._nodes[node_id] = {
            "public_key": public_key,
            "did": did or crypto.did_for(public_key),
            "status": "ACTIVE",
        }

    def revoke(self, node_id: str):
        if node_id in self._nodes:
            self._nodes[node_id]["status"] = "REVOKED"

    def get(self, node_id: str):
        return self._nodes.get(node_id)

    def is_active(self, node_id: str) -> bool:
        rec = self._nodes.get(node_id)
        return bool(rec and rec["status"] == "ACTIVE")

    def active_ids(self) -> list:
        return sorted(n for n, r in self._nodes.items() if r["status"] == "ACTIVE")

    def public_key(self, node_id: str) -> bytes:
        rec = self._nodes.get(node_id)
        return rec["public_key"] if rec else None


class Channel:
    def __init__(self, name, members, public):
        self.name = name
        self.members = members  # explicit list, or PUBLIC_MEMBERS
        self.public = public
        self.blocks = []
        self.state = {}
        self.tx_heights = {}
        # leader-side ordering machinery
        self.pending = []
        self.cut_timer = None
        self.acks = {}

    def tip_height(self) -> int:
        return len(self.blocks) - 1

    def tip_hash(self) -> str:
        return self.blocks[-1]["hash"] if self.blocks else GENESIS_PREV_HASH

    def meta(self) -> dict:
        return {"name": self.name, "members": self.members, "public": self.public}


def validate_block(block: dict, expect_height: int, expect_prev: str):
    if block["height"] != expect_height:
        raise DataCorrupt(f"block height {block['height']}, expected {expect_height}")
    if block["prev_hash"] != expect_prev:
        raise DataCorrupt(f"prev hash mismatch at height {block['height']}")
    ids = [t["tx_id"] for t in block["txs"]]
    if block_hash(block["height"], block["prev_hash"], ids) != block["hash"]:
        raise DataCorrupt(f"block hash mismatch at height {block['height']}")


class LedgerNode:
    def __init__(self, node_id, keypair, scheduler, network, bus,
                 directory: NodeDirectory, data_dir: str = None):
        self.node_id = node_id
        self.keypair = keypair
        self.scheduler = scheduler
        self.network = network
        self.bus = bus
        self.directory = directory
        self.data_dir = data_dir
        self.channels = {}
        self.started = False
        self._hooks = []
        self._applied_watchers = {}  # tx_id -> [fn(tx, block)]
        self._outbox = {}  # tx_id -> {channel, tx}
        self._retransmit_armed = False
        self._catching_up = set()

    # -- lifecycle -----------------------------------------------------------

    def start(self):
        self.network.register(self.node_id, self._on_message)
        if self.data_dir:
            self._load_all()
        self.started = True

    def stop(self):
        self.started = False
        self.network.set_down(self.node_id)

    def restore(self):
        """Come back after a stop: reload disk, rejoin, and reconcile."""
        self.channels = {}
        self.network.set_up(self.node_id)
        self.network.register(self.node_id, self._on_message)
        if self.data_dir:
            self._load_all()
        self.started = True
        self._request_channel_list()
        for name in list(self.channels):
            self.catch_up(name)

    def on_commit(self, fn):
        self._hooks.append(fn)

    def _require_started(self):
        if not self.started:
            raise NodeStopped(f"{self.node_id} is stopped")

    # -- channel management ----------------------------------------------------

    def bootstrap_channel(self, name, members, public, extra_txs=None):
        """Create a founding channel locally and deterministically.

        Every founding node runs this with identical arguments before any
        traffic flows, so all replicas hold the same genesis block without
        a network round. Genesis transactions carry no signature.
        """
        if name in self.channels:
            return
        self._check_channel_name(name)
        txs = [self._genesis_tx(name, members, public)]
        for payload in extra_txs or []:
            txs.append(self._unsigned_tx(name, payload, submitter="genesis"))
        block = self._build_block(0, GENESIS_PREV_HASH, txs, ts_ms=0)
        self._create_channel_local(name, members, public)
        self._apply_block(name, block, replay=False, persist=True)

    def create_channel(self, name, members, public=False):
        """Propose a channel; the would-be leader serializes creation."""
        self._require_started()
        self._check_channel_name(name)
        if name in self.channels:
            raise DuplicateChannel(f"channel {name} already exists")
        if public:
            members = PUBLIC_MEMBERS
        else:
            members = sorted(set(members))
            for m in members:
                if not self.directory.is_active(m):
                    raise UnknownMember(f"unknown member {m}")
            if self.node_id not in members:
                raise NotMember("creator must be a member")
        payload = {"op": "CHANNEL_GENESIS", "name": name,
                   "members": members, "public": public}
        tx = self._signed_tx(name, payload)
        leader = self._leader_for_members(members)
        if leader == self.node_id:
            self._leader_accept_genesis(tx)
        else:
            self._send(leader, "SUBMIT", name, {"tx": tx})
            self._outbox[tx["tx_id"]] = {"channel": name, "tx": tx, "genesis": True}
            self._arm_retransmit()
        return tx["tx_id"]

    def list_channels(self) -> list:
        return sorted(self.channels)

    def channel_meta(self, name) -> dict:
        return self._get_channel(name).meta()

    # -- core operations -------------------------------------------------------

    def submit_tx(self, channel, payload, on_applied=None) -> str:
        self._require_started()
        ch = self._get_channel(channel)
        if not self._may_write(ch, self.node_id):
            raise NotMember(f"{self.node_id} may not write to {channel}")
        body = canonical_bytes(payload)
        if len(body) > MAX_PAYLOAD_BYTES:
            raise PayloadTooLarge(f"payload is {len(body)} bytes")
        tx = self._signed_tx(channel, payload)
        if on_applied:
            self._applied_watchers.setdefault(tx["tx_id"], []).append(on_applied)
        if tx["tx_id"] in ch.tx_heights:
            # Same payload from the same submitter is the same transaction.
            self._fire_applied(tx, ch.blocks[ch.tx_heights[tx["tx_id"]]])
            return tx["tx_id"]
        leader = self.leader_of(channel)
        if leader == self.node_id:
            self._leader_intake(ch, tx)
        else:
            self._send(leader, "SUBMIT", channel, {"tx": tx})
        self._outbox[tx["tx_id"]] = {"channel": channel, "tx": tx}
        self._arm_retransmit()
        return tx["tx_id"]

    def _leader_intake(self, ch: Channel, tx):
        # A leader mid-catch-up must not cut blocks on a stale tip.
        if ch.name in self._catching_up:
            self.scheduler.call_later(50, lambda: self._leader_intake(ch, tx))
            return
        self._leader_enqueue(ch, tx)

    def read_state(self, channel, key):
        ch = self._get_channel(channel)
        entry = ch.state.get(key)
        return entry["doc"] if entry else None

    def read_version(self, channel, key):
        ch = self._get_channel(channel)
        entry = ch.state.get(key)
        return entry["version"] if entry else 0

    def read_all(self, channel, prefix="") -> dict:
        ch = self._get_channel(channel)
        return {k: v["doc"] for k, v in sorted(ch.state.items())
                if k.startswith(prefix)}

    def verify_chain(self, channel) -> int:
        """Re-validate every hash and signature; return the tip height."""
        ch = self._get_channel(channel)
        prev = GENESIS_PREV_HASH
        for i, block in enumerate(ch.blocks):
            validate_block(block, i, prev)
            for tx in block["txs"]:
                self._verify_tx(tx, genesis=(i == 0 and tx["submitter"] == "genesis"))
            prev = block["hash"]
        return ch.tip_height()

    def state_hash(self, channel) -> str:
        ch = self._get_channel(channel)
        return doc_hash(ch.state)

    def chain_tip(self, channel):
        ch = self._get_channel(channel)
        return ch.tip_height(), ch.tip_hash()

    def blocks_of(self, channel) -> list:
        return list(self._get_channel(channel).blocks)

    def tx_committed(self, channel, txid) -> bool:
        ch = self.channels.get(channel)
        return bool(ch and txid in ch.tx_heights)

    def catch_up(self, channel):
        """Ask a live peer for blocks above the local tip."""
        ch = self.channels.get(channel)
        from_height = ch.tip_height() + 1 if ch else 0
        peer = self._any_live_peer(ch)
        if peer is None:
            return
        self._catching_up.add(channel)
        self._send(peer, "CATCH_UP_REQ", channel, {"from_height": from_height})

    def leader_of(self, channel) -> str:
        ch = self._get_channel(channel)
        return self._leader_for_members(ch.members)

    def is_leader(self, channel) -> bool:
        return self.leader_of(channel) == self.node_id

    # -- transaction construction ----------------------------------------------

    def _signed_tx(self, channel, payload) -> dict:
        core = {"channel": channel, "payload": payload, "submitter": self.node_id}
        return {
            "tx_id": make_tx_id(payload, channel, self.node_id),
            "channel": channel,
            "submitter": self.node_id,
            "payload": payload,
            "sig": self.keypair.sign_doc(core),
        }

    def _unsigned_tx(self, channel, payload, submitter) -> dict:
        return {
            "tx_id": make_tx_id(payload, channel, submitter),
            "channel": channel,
            "submitter": submitter,
            "payload": payload,
            "sig": "",
        }

    def _genesis_tx(self, name, members, public) -> dict:
        payload = {"op": "CHANNEL_GENESIS", "name": name,
                   "members": members, "public": public}
        return self._unsigned_tx(name, payload, submitter="genesis")

    def _verify_tx(self, tx, genesis=False):
        expect = make_tx_id(tx["payload"], tx["channel"], tx["submitter"])
        if tx["tx_id"] != expect:
            raise DataCorrupt(f"tx id mismatch for {tx['tx_id'][:12]}")
        if genesis:
            return
        pub = self.directory.public_key(tx["submitter"])
        if pub is None:
            raise UnknownMember(f"unknown submitter {tx['submitter']}")
        core = {"channel": tx["channel"], "payload": tx["payload"],
                "submitter": tx["submitter"]}
        if not crypto.verify_doc(pub, tx["sig"], core):
            raise BadSignature(f"bad signature on tx {tx['tx_id'][:12]}")

    # -- leader path -------------------------------------------------------------

    def _leader_for_members(self, members) -> str:
        if members == PUBLIC_MEMBERS:
            candidates = self.directory.active_ids()
        else:
            candidates = members
        live = [n for n in sorted(candidates) if self.network.alive(n)]
        if not live:
            raise UnknownMember("no live members")
        return live[0]

    def _leader_enqueue(self, ch: Channel, tx):
        if tx["tx_id"] in ch.tx_heights:
            return
        if any(t["tx_id"] == tx["tx_id"] for t in ch.pending):
            return
        ch.pending.append(tx)
        if len(ch.pending) >= BLOCK_MAX_TX:
            self._cut_block(ch)
        elif ch.cut_timer is None:
            ch.cut_timer = self.scheduler.call_later(
                BLOCK_MAX_WAIT_MS, lambda: self._cut_due(ch))

    def _cut_due(self, ch: Channel):
        ch.cut_timer = None
        if ch.pending:
            self._cut_block(ch)

    def _cut_block(self, ch: Channel):
        if ch.cut_timer is not None:
            ch.cut_timer.cancel()
            ch.cut_timer = None
        txs, ch.pending = ch.pending[:BLOCK_MAX_TX], ch.pending[BLOCK_MAX_TX:]
        block = self._build_block(ch.tip_height() + 1, ch.tip_hash(), txs,
                                  ts_ms=self.scheduler.clock.now_ms())
        self._apply_block(ch.name, block, replay=False, persist=True)
        ch.acks[block["height"]] = {self.node_id}
        for peer in self._replica_targets(ch):
            self._send(peer, "ORDERED_BLOCK", ch.name, {"block": block})
        if ch.pending and ch.cut_timer is None:
            ch.cut_timer = self.scheduler.call_later(
                BLOCK_MAX_WAIT_MS, lambda: self._cut_due(ch))

    def _build_block(self, height, prev_hash, txs, ts_ms) -> dict:
        ids = [t["tx_id"] for t in txs]
        return {
            "height": height,
            "prev_hash": prev_hash,
            "ts_ms": ts_ms,
            "txs": txs,
            "hash": block_hash(height, prev_hash, ids),
        }

    def _leader_accept_genesis(self, tx):
        name = tx["payload"]["name"]
        if name in self.channels:
            raise DuplicateChannel(f"channel {name} already exists")
        members = tx["payload"]["members"]
        public = tx["payload"]["public"]
        block = self._build_block(0, GENESIS_PREV_HASH, [tx],
                                  ts_ms=self.scheduler.clock.now_ms())
        ch = self._create_channel_local(name, members, public)
        self._apply_block(name, block, replay=False, persist=True)
        ch.acks[0] = {self.node_id}
        for peer in self._replica_targets(ch):
            self._send(peer, "ORDERED_BLOCK", name, {"block": block})

    def _replica_targets(self, ch: Channel) -> list:
        if ch.members == PUBLIC_MEMBERS:
            targets = self.directory.active_ids()
        else:
            targets = ch.members
        return [n for n in targets if n != self.node_id]

    def _majority(self, ch: Channel) -> int:
        n = len(self.directory.active_ids()) if ch.members == PUBLIC_MEMBERS \
            else len(ch.members)
        return n // 2 + 1

    def block_confirmed(self, channel, height) -> bool:
        ch = self._get_channel(channel)
        return len(ch.acks.get(height, ())) >= self._majority(ch)

    # -- membership and access ---------------------------------------------------

    def _may_write(self, ch: Channel, node_id) -> bool:
        if not self.directory.is_active(node_id):
            return False
        if ch.members == PUBLIC_MEMBERS:
            return True
        return node_id in ch.members

    def _may_hold(self, name, members, public) -> bool:
        if public or members == PUBLIC_MEMBERS:
            return True
        return self.node_id in members

    def _get_channel(self, name) -> Channel:
        ch = self.channels.get(name)
        if ch is None:
            raise UnknownChannel("channel unknown or access denied")
        return ch

    def _check_channel_name(self, name):
        if not _CHANNEL_NAME_RE.match(name or ""):
            raise UnknownChannel(f"invalid channel name {name!r}")

    def _create_channel_local(self, name, members, public) -> Channel:
        ch = Channel(name, members, public)
        self.channels[name] = ch
        return ch

    # -- block application ---------------------------------------------------------

    def _apply_block(self, name, block, replay, persist):
        ch = self.channels[name]
        validate_block(block, ch.tip_height() + 1, ch.tip_hash())
        for tx in block["txs"]:
            self._verify_tx(tx, genesis=(block["height"] == 0
                                         and tx["submitter"] == "genesis"))
        ch.blocks.append(block)
        for tx in block["txs"]:
            ch.tx_heights[tx["tx_id"]] = block["height"]
            self._apply_tx(ch, tx, replay)
            self._outbox.pop(tx["tx_id"], None)
            if not replay:
                self._fire_applied(tx, block)
        if persist and self.data_dir:
            self._persist_block(name, block)
        if not replay:
            if block["height"] == 0:
                self.bus.publish("ledger.channel", ch.meta())
            self.bus.publish("ledger.block", {
                "channel": name,
                "height": block["height"],
                "n_txs": len(block["txs"]),
                "hash": block["hash"],
            })

    def _apply_tx(self, ch: Channel, tx, replay):
        payload = tx["payload"]
        op = payload.get("op")
        if op == "CHANNEL_GENESIS":
            return
        if op == "PUT":
            key = payload["key"]
            prior = ch.state.get(key)
            version = (prior["version"] + 1) if prior else 1
            ch.state[key] = {"doc": payload["doc"], "version": version}
            for hook in self._hooks:
                try:
                    hook(ch.name, key, payload["doc"], tx, replay)
                except Exception:
                    log.exception("commit hook failed on %s %s", ch.name, key)
        else:
            log.warning("ignoring tx with unknown op %r", op)

    def _fire_applied(self, tx, block):
        for fn in self._applied_watchers.pop(tx["tx_id"], []):
            try:
                fn(tx, block)
            except Exception:
                log.exception("applied watcher failed for %s", tx["tx_id"][:12])

    # -- wire protocol ---------------------------------------------------------------

    def _send(self, dst, mtype, channel, body):
        core = {"v": 1, "type": mtype, "channel": channel,
                "sender": self.node_id, "body": body}
        frame = dict(core)
        frame["sig"] = self.keypair.sign_doc(core)
        self.network.send(self.node_id, dst, canonical_bytes(frame))

    def _on_message(self, src, data: bytes):
        if not self.started:
            return
        try:
            msg = json.loads(data.decode("utf-8"))
        except ValueError:
            log.warning("undecodable frame from %s", src)
            return
        sender = msg.get("sender")
        pub = self.directory.public_key(sender)
        core = {k: msg[k] for k in ("v", "type", "channel", "sender", "body")}
        if pub is None or not crypto.verify_doc(pub, msg.get("sig", ""), core):
            log.warning("dropping frame with bad signature from %s", sender)
            return
        handler = getattr(self, "_handle_" + msg["type"].lower(), None)
        if handler is None:
            log.warning("no handler for message type %s", msg["type"])
            return
        handler(sender, msg["channel"], msg["body"])

    def _handle_submit(self, sender, channel, body):
        tx = body["tx"]
        try:
            self._verify_tx(tx)
        except (BadSignature, DataCorrupt, UnknownMember) as exc:
            self._send(sender, "SUBMIT_NACK", channel,
                       {"tx_id": tx["tx_id"], "code": exc.code,
                        "message": str(exc)})
            return
        if tx["payload"].get("op") == "CHANNEL_GENESIS" and channel not in self.channels:
            try:
                self._leader_accept_genesis(tx)
            except DuplicateChannel as exc:
                self._send(sender, "SUBMIT_NACK", channel,
                           {"tx_id": tx["tx_id"], "code": exc.code,
                            "message": str(exc)})
            return
        ch = self.channels.get(channel)
        if ch is None:
            # Not holding the channel: either it never existed or this node
            # is not the leader the sender thinks it is. Let retransmit and
            # catch-up sort it out.
            return
        if channel in self.channels and tx["tx_id"] in ch.tx_heights:
            return
        if not self._may_write(ch, tx["submitter"]):
            self._send(sender, "SUBMIT_NACK", channel,
                       {"tx_id": tx["tx_id"], "code": "NotMember",
                        "message": f"{tx['submitter']} may not write"})
            return
        if not self.is_leader(channel):
            # Forward along to whoever should lead now.
            self._send(self.leader_of(channel), "SUBMIT", channel, {"tx": tx})
            return
        self._leader_intake(ch, tx)

    def _handle_submit_nack(self, sender, channel, body):
        entry = self._outbox.pop(body["tx_id"], None)
        code = body.get("code", "Error")
        if entry:
            log.warning("tx %s rejected by %s: %s",
                        body["tx_id"][:12], sender, body.get("message"))
            self.bus.publish("ledger.rejected", {
                "channel": channel, "tx_id": body["tx_id"],
                "code": code, "message": body.get("message", ""),
            })

    def _handle_ordered_block(self, sender, channel, body):
        block = body["block"]
        ch = self.channels.get(channel)
        if ch is None:
            if block["height"] == 0:
                self._accept_genesis_block(channel, block)
            else:
                self._send(sender, "CATCH_UP_REQ", channel, {"from_height": 0})
            return
        if block["height"] <= ch.tip_height():
            self._ack(sender, ch, ch.blocks[block["height"]])
            return
        if block["height"] > ch.tip_height() + 1:
            self.catch_up(channel)
            return
        try:
            self._apply_block(channel, block, replay=False, persist=True)
        except (DataCorrupt, BadSignature, UnknownMember) as exc:
            log.warning("rejecting block %d on %s: %s",
                        block["height"], channel, exc)
            return
        self._ack(sender, ch, block)

    def _accept_genesis_block(self, channel, block):
        try:
            genesis = block["txs"][0]["payload"]
            assert genesis["op"] == "CHANNEL_GENESIS"
        except (KeyError, IndexError, AssertionError):
            log.warning("malformed genesis block for %s", channel)
            return
        if not self._may_hold(channel, genesis["members"], genesis["public"]):
            return
        self._create_channel_local(channel, genesis["members"], genesis["public"])
        try:
            self._apply_block(channel, block, replay=False, persist=True)
        except (DataCorrupt, BadSignature, UnknownMember) as exc:
            del self.channels[channel]
            log.warning("rejecting genesis for %s: %s", channel, exc)
            return
        leader = self._leader_for_members(genesis["members"])
        if leader != self.node_id:
            self._ack(leader, self.channels[channel], block)

    def _ack(self, to, ch: Channel, block):
        self._send(to, "ACK", ch.name,
                   {"height": block["height"], "hash": block["hash"]})

    def _handle_ack(self, sender, channel, body):
        ch = self.channels.get(channel)
        if ch is None:
            return
        height = body["height"]
        if height <= ch.tip_height() and ch.blocks[height]["hash"] == body["hash"]:
            ch.acks.setdefault(height, set()).add(sender)

    def _handle_catch_up_req(self, sender, channel, body):
        ch = self.channels.get(channel)
        if ch is None:
            return
        if ch.members != PUBLIC_MEMBERS and sender not in ch.members:
            return
        start = body["from_height"]
        blocks = ch.blocks[start:start + CATCH_UP_CHUNK]
        self._send(sender, "CATCH_UP_RESP", channel, {
            "from_height": start,
            "blocks": blocks,
            "tip": ch.tip_height(),
        })

    def _handle_catch_up_resp(self, sender, channel, body):
        blocks = body["blocks"]
        ch = self.channels.get(channel)
        if not blocks:
            # Empty chunk: the peer has nothing above our tip. Still counts
            # as a completed catch-up, or restore would never reconcile.
            if ch is not None:
                self._finish_or_continue(sender, channel, body["tip"], ch)
            else:
                self._catching_up.discard(channel)
            return
        if ch is None:
            if blocks[0]["height"] != 0:
                self._send(sender, "CATCH_UP_REQ", channel, {"from_height": 0})
                return
            genesis = blocks[0]["txs"][0]["payload"]
            if not self._may_hold(channel, genesis["members"], genesis["public"]):
                return
            ch = self._create_channel_local(channel, genesis["members"],
                                            genesis["public"])
        first = blocks[0]
        if first["height"] <= ch.tip_height():
            # Overlap: peer started below our tip; skip what we have, but
            # check the shared block is really shared.
            local = ch.blocks[first["height"]]
            if local["hash"] != first["hash"]:
                self._rebuild_from_zero(channel, sender)
                return
            blocks = [b for b in blocks if b["height"] > ch.tip_height()]
            if not blocks:
                self._finish_or_continue(sender, channel, body["tip"], ch)
                return
            first = blocks[0]
        if first["prev_hash"] != ch.tip_hash():
            # Our tip was never replicated; drop our copy and start over.
            self._rebuild_from_zero(channel, sender)
            return
        for block in blocks:
            try:
                self._apply_block(channel, block, replay=True, persist=True)
            except (DataCorrupt, BadSignature, UnknownMember) as exc:
                log.warning("catch-up block %d on %s rejected: %s",
                            block["height"], channel, exc)
                self._catching_up.discard(channel)
                return
        self._finish_or_continue(sender, channel, body["tip"], ch)

    def _finish_or_continue(self, sender, channel, peer_tip, ch: Channel):
        if ch.tip_height() < peer_tip:
            self._send(sender, "CATCH_UP_REQ", channel,
                       {"from_height": ch.tip_height() + 1})
        else:
            self._catching_up.discard(channel)
            self.bus.publish("ledger.caught_up", {
                "channel": channel, "height": ch.tip_height(),
            })

    def _rebuild_from_zero(self, channel, peer):
        log.warning("local chain for %s conflicts with peers; rebuilding", channel)
        ch = self.channels.pop(channel)
        if self.data_dir:
            path = self._chain_path(channel)
            if os.path.exists(path):
                os.remove(path)
        del ch
        self._send(peer, "CATCH_UP_REQ", channel, {"from_height": 0})

    def _handle_channel_list_req(self, sender, channel, body):
        metas = []
        for name, ch in sorted(self.channels.items()):
            if ch.members == PUBLIC_MEMBERS or sender in ch.members:
                metas.append(ch.meta())
        self._send(sender, "CHANNEL_LIST_RESP", "", {"channels": metas})

    def _handle_channel_list_resp(self, sender, channel, body):
        for meta in body["channels"]:
            if meta["name"] not in self.channels:
                self._send(sender, "CATCH_UP_REQ", meta["name"], {"from_height": 0})

    def _request_channel_list(self):
        # Ask every live peer: private channels are only reported by their
        # members, so a single sample can miss some of this node's channels.
        for peer in self.directory.active_ids():
            if peer != self.node_id and self.network.alive(peer):
                self._send(peer, "CHANNEL_LIST_REQ", "", {})

    def _any_live_peer(self, ch: Channel = None):
        if ch is None or ch.members == PUBLIC_MEMBERS:
            candidates = self.directory.active_ids()
        else:
            candidates = ch.members
        for n in sorted(candidates):
            if n != self.node_id and self.network.alive(n):
                return n
        return None

    # -- retransmit ----------------------------------------------------------------

    def _arm_retransmit(self):
        if self._retransmit_armed:
            return
        self._retransmit_armed = True
        self.scheduler.call_later(RETRANSMIT_MS, self._retransmit)

    def _retransmit(self):
        self._retransmit_armed = False
        if not self.started or not self._outbox:
            return
        for txid, entry in list(self._outbox.items()):
            channel, tx = entry["channel"], entry["tx"]
            ch = self.channels.get(channel)
            if ch is not None and txid in ch.tx_heights:
                self._outbox.pop(txid, None)
                continue
            try:
                if entry.get("genesis"):
                    leader = self._leader_for_members(tx["payload"]["members"])
                else:
                    leader = self.leader_of(channel)
            except (UnknownChannel, UnknownMember):
                continue
            if leader == self.node_id:
                if entry.get("genesis"):
                    if channel not in self.channels:
                        self._leader_accept_genesis(tx)
                    self._outbox.pop(txid, None)
                elif ch is not None:
                    self._leader_enqueue(ch, tx)
            else:
                self._send(leader, "SUBMIT", channel, {"tx": tx})
        if self._outbox:
            self._arm_retransmit()

    # -- persistence ------------------------------------------------------------------

    def _chain_path(self, channel) -> str:
        return os.path.join(self.data_dir, self.node_id, channel + ".chain")

    def _persist_block(self, channel, block):
        path = self._chain_path(channel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        record = canonical_bytes(block)
        with open(path, "ab") as fh:
            fh.write(struct.pack(">I", len(record)))
            fh.write(record)

    def _load_all(self):
        root = os.path.join(self.data_dir, self.node_id)
        if not os.path.isdir(root):
            return
        for fname in sorted(os.listdir(root)):
            if fname.endswith(".chain"):
                self._load_channel(fname[:-len(".chain")])

    def _load_channel(self, name):
        blocks = []
        with open(self._chain_path(name), "rb") as fh:
            while True:
                header = fh.read(4)
                if len(header) < 4:
                    break
                (length,) = struct.unpack(">I", header)
                record = fh.read(length)
                if len(record) < length:
                    log.warning("torn record at end of %s chain; truncating", name)
                    break
                blocks.append(json.loads(record.decode("utf-8")))
        if not blocks:
            return
        genesis = blocks[0]["txs"][0]["payload"]
        if genesis.get("op") != "CHANNEL_GENESIS":
            raise DataCorrupt(f"chain file for {name} lacks a genesis record")
        ch = self._create_channel_local(name, genesis["members"], genesis["public"])
        prev = GENESIS_PREV_HASH
        for i, block in enumerate(blocks):
            try:
                validate_block(block, i, prev)
                for tx in block["txs"]:
                    expect = make_tx_id(tx["payload"], tx["channel"],
                                        tx["submitter"])
                    if tx["tx_id"] != expect:
                        raise DataCorrupt(f"tx content mismatch at height {i}")
            except DataCorrupt as exc:
                del self.channels[name]
                raise DataCorrupt(f"channel {name}: {exc}") from exc
            prev = block["hash"]
        for block in blocks:
            ch.blocks.append(block)
            for tx in block["txs"]:
                ch.tx_heights[tx["tx_id"]] = block["height"]
                self._apply_tx(ch, tx, replay=True)

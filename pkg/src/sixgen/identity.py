"""Decentralized identity and governed onboarding.

Identity lives on the public ``identity`` channel, so every node folds the
same history into the same registry. Three kinds of records:

    id/<did>        the identity itself: key, node id, role, status, cert
    idreq/<id>      an onboarding request and its final status
    idvote/<id>/<n> one admin's vote on a request

Votes are separate keys rather than fields of the request doc, so two
admins voting at once never overwrite each other. A request closes the
moment the vote that satisfies the role policy is applied; the node whose
vote crossed the threshold writes the closure records, including the
certificate for an approved identity. With votes totally ordered by the
channel, exactly one vote crosses, so exactly one node writes.

Role policies over the current set of active admins:

    ADMIN               unanimous approval
    TRADING/MONITORING  strict majority approval

A request is rejected once rejections reach a strict majority, or as soon
as approval has become arithmetically impossible.

Founding identities are written into the channel genesis from node
configuration and carry no certificate; their trust is rooted in the
config itself. Revocation is a single-admin action.
"""

import logging

from . import crypto
from .canon import doc_hash
from .errors import (
    AlreadyRevoked,
    AlreadyVoted,
    DuplicateIdentity,
    MalformedCertificate,
    NotAdmin,
    NotFound,
    RequestClosed,
)

log = logging.getLogger(__name__)

ROLES = ("ADMIN", "TRADING", "MONITORING")
IDENTITY_CHANNEL = "identity"


def evaluate_policy(role: str, votes: dict, admins: set) -> str:
    """Fold votes from active admins into OPEN / APPROVED / REJECTED."""
    yes = sum(1 for v, ok in votes.items() if ok and v in admins)
    no = sum(1 for v, ok in votes.items() if not ok and v in admins)
    n = len(admins)
    need = n if role == "ADMIN" else n // 2 + 1
    majority = n // 2 + 1
    if yes >= need:
        return "APPROVED"
    if no >= majority or yes + (n - yes - no) < need:
        return "REJECTED"
    return "OPEN"


def genesis_identity_txs(founding: list) -> list:
    """PUT payloads binding each founding node to an ADMIN identity."""
    payloads = []
    for entry in sorted(founding, key=lambda e: e["node_id"]):
        pub = bytes.fromhex(entry["public_key"])
        did = crypto.did_for(pub)
        payloads.append({
            "op": "PUT",
            "key": f"id/{did}",
            "doc": {
                "did": did,
                "node_id": entry["node_id"],
                "public_key": entry["public_key"],
                "role": "ADMIN",
                "status": "ACTIVE",
                "sponsor": None,
                "cert": "",
            },
        })
    return payloads


class IdentityEngine:
    def __init__(self, node_id, keypair, ledger, bus, clock):
        self.node_id = node_id
        self.keypair = keypair
        self.ledger = ledger
        self.bus = bus
        self.clock = clock
        self._votes = {}       # req_id -> {voter node_id: bool}
        self._req_status = {}  # req_id -> last evaluated status
        ledger.on_commit(self._on_commit)

    # -- queries ---------------------------------------------------------------

    def resolve_did(self, did: str) -> dict:
        rec = self.ledger.read_state(IDENTITY_CHANNEL, f"id/{did}")
        if rec is None:
            raise NotFound(f"no identity {did}")
        return rec

    def resolve_node(self, node_id: str) -> dict:
        for did, rec in self.identities().items():
            if rec["node_id"] == node_id:
                return rec
        raise NotFound(f"no identity for node {node_id}")

    def identities(self) -> dict:
        records = self.ledger.read_all(IDENTITY_CHANNEL, "id/")
        return {k[len("id/"):]: v for k, v in records.items()}

    def requests(self) -> dict:
        records = self.ledger.read_all(IDENTITY_CHANNEL, "idreq/")
        return {k[len("idreq/"):]: v for k, v in records.items()}

    def admins(self) -> set:
        return {rec["node_id"] for rec in self.identities().values()
                if rec["role"] == "ADMIN" and rec["status"] == "ACTIVE"}

    def is_admin(self, node_id: str = None) -> bool:
        return (node_id or self.node_id) in self.admins()

    # -- onboarding ------------------------------------------------------------

    def submit_commit_request(self, node_id, public_key_hex, requested_role,
                              on_applied=None) -> str:
        if requested_role not in ROLES:
            raise NotFound(f"unknown role {requested_role}", field="requested_role")
        try:
            pub = bytes.fromhex(public_key_hex)
            if len(pub) != 32:
                raise ValueError("key must be 32 bytes")
        except ValueError as exc:
            raise MalformedCertificate(f"bad public key: {exc}") from exc
        did = crypto.did_for(pub)
        existing = self.ledger.read_state(IDENTITY_CHANNEL, f"id/{did}")
        if existing and existing["status"] == "ACTIVE":
            raise DuplicateIdentity(f"{did} is already active")
        for req_id, req in self.requests().items():
            if req["did"] == did and req["status"] == "OPEN":
                raise DuplicateIdentity(f"request {req_id} already open for {did}")
        now = self.clock.now_ms()
        req_id = doc_hash({"did": did, "role": requested_role, "ts": now})[:16]
        doc = {
            "req_id": req_id,
            "did": did,
            "node_id": node_id,
            "public_key": public_key_hex,
            "requested_role": requested_role,
            "sponsor": self.node_id,
            "status": "OPEN",
            "created_ms": now,
        }
        self.ledger.submit_tx(IDENTITY_CHANNEL,
                              {"op": "PUT", "key": f"idreq/{req_id}", "doc": doc},
                              on_applied=on_applied)
        return req_id

    def review_commit_request(self, req_id, approve: bool, on_applied=None):
        req = self.ledger.read_state(IDENTITY_CHANNEL, f"idreq/{req_id}")
        if req is None:
            raise NotFound(f"no request {req_id}")
        if req["status"] != "OPEN":
            raise RequestClosed(f"request {req_id} is {req['status']}")
        if not self.is_admin():
            raise NotAdmin(f"{self.node_id} is not an active admin")
        if self.node_id in self._votes.get(req_id, {}):
            raise AlreadyVoted(f"{self.node_id} already voted on {req_id}")
        doc = {
            "req_id": req_id,
            "voter": self.node_id,
            "approve": bool(approve),
            "ts_ms": self.clock.now_ms(),
        }
        key = f"idvote/{req_id}/{self.node_id}"
        self.ledger.submit_tx(IDENTITY_CHANNEL,
                              {"op": "PUT", "key": key, "doc": doc},
                              on_applied=on_applied)

    def propagate_certificates(self, req_id):
        """Write the closure records for a request whose vote already passed.

        Normally runs automatically on the node that cast the deciding
        vote; calling it again is harmless, and it unsticks a request whose
        decider crashed between voting and writing.
        """
        req = self.ledger.read_state(IDENTITY_CHANNEL, f"idreq/{req_id}")
        if req is None:
            raise NotFound(f"no request {req_id}")
        if req["status"] != "OPEN":
            return
        verdict = evaluate_policy(req["requested_role"],
                                  self._votes.get(req_id, {}), self.admins())
        if verdict == "OPEN":
            return
        self._write_closure(req, verdict)

    def revoke_did(self, did, on_applied=None):
        if not self.is_admin():
            raise NotAdmin(f"{self.node_id} is not an active admin")
        rec = self.resolve_did(did)
        if rec["status"] == "REVOKED":
            raise AlreadyRevoked(f"{did} is already revoked")
        doc = dict(rec)
        doc["status"] = "REVOKED"
        doc["revoked_by"] = self.node_id
        self.ledger.submit_tx(IDENTITY_CHANNEL,
                              {"op": "PUT", "key": f"id/{did}", "doc": doc},
                              on_applied=on_applied)

    # -- projection -------------------------------------------------------------

    def _on_commit(self, channel, key, doc, tx, replay):
        if channel != IDENTITY_CHANNEL:
            return
        if key.startswith("id/"):
            self._project_identity(doc, replay)
        elif key.startswith("idvote/"):
            self._project_vote(doc, tx, replay)
        elif key.startswith("idreq/") and not replay:
            self.bus.publish("identity.request", doc)

    def _project_identity(self, doc, replay):
        if doc["status"] == "ACTIVE":
            self.ledger.directory.add(doc["node_id"],
                                      bytes.fromhex(doc["public_key"]),
                                      did=doc["did"])
            if not replay:
                self.bus.publish("identity.propagated", doc)
        else:
            self.ledger.directory.revoke(doc["node_id"])
            if not replay:
                self.bus.publish("identity.revoked", doc)

    def _project_vote(self, doc, tx, replay):
        req_id = doc["req_id"]
        req = self.ledger.read_state(IDENTITY_CHANNEL, f"idreq/{req_id}")
        if req is None:
            log.warning("vote for unknown request %s ignored", req_id)
            return
        admins = self.admins()
        if doc["voter"] not in admins:
            log.warning("vote by non-admin %s on %s ignored", doc["voter"], req_id)
            return
        votes = self._votes.setdefault(req_id, {})
        votes[doc["voter"]] = doc["approve"]
        if not replay:
            self.bus.publish("identity.vote", doc)
        if req["status"] != "OPEN":
            return
        before = self._req_status.get(req_id, "OPEN")
        after = evaluate_policy(req["requested_role"], votes, admins)
        self._req_status[req_id] = after
        crossed = before == "OPEN" and after != "OPEN"
        if crossed and not replay and tx["submitter"] == self.node_id:
            self._write_closure(req, after)

    def _write_closure(self, req, verdict):
        req_doc = dict(req)
        req_doc["status"] = verdict
        req_doc["closed_ms"] = self.clock.now_ms()
        self.ledger.submit_tx(
            IDENTITY_CHANNEL,
            {"op": "PUT", "key": f"idreq/{req['req_id']}", "doc": req_doc})
        if verdict != "APPROVED":
            return
        cert = crypto.encode_certificate({
            "did": req["did"],
            "public_key": req["public_key"],
            "role": req["requested_role"],
            "issued_by": self.keypair.did,
            "issued_at_ms": self.clock.now_ms(),
        }, self.keypair)
        id_doc = {
            "did": req["did"],
            "node_id": req["node_id"],
            "public_key": req["public_key"],
            "role": req["requested_role"],
            "status": "ACTIVE",
            "sponsor": req["sponsor"],
            "cert": cert,
        }
        self.ledger.submit_tx(
            IDENTITY_CHANNEL,
            {"op": "PUT", "key": f"id/{req['did']}", "doc": id_doc})

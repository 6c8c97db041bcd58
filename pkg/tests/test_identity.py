"""Identity registry, onboarding votes, and certificate propagation.

The vote-folding policy gets an exhaustive comparison against a separate
plain-English oracle; the network behavior is exercised on a simulated
four-node cluster.
"""

import itertools

import pytest

from sixgen import crypto
from sixgen.crypto import KeyPair
from sixgen.errors import (
    AlreadyRevoked,
    AlreadyVoted,
    DuplicateIdentity,
    NotAdmin,
    NotFound,
    RequestClosed,
)
from sixgen.identity import evaluate_policy


def policy_oracle(role, votes, admins):
    """Independent restatement of the onboarding policy.

    ADMIN needs every active admin to approve; other roles need a strict
    majority. A request is rejected the moment approval can no longer be
    reached even if every silent admin votes yes.
    """
    yes = sum(1 for voter, ok in votes.items() if voter in admins and ok)
    no = sum(1 for voter, ok in votes.items() if voter in admins and not ok)
    n = len(admins)
    need = n if role == "ADMIN" else n // 2 + 1
    if yes >= need:
        return "APPROVED"
    if n - no < need:
        return "REJECTED"
    return "OPEN"


def test_policy_matches_oracle_for_every_vote_pattern():
    for n in range(1, 6):
        admins = {f"a{i}" for i in range(n)}
        voters = sorted(admins) + ["outsider"]
        for role in ("ADMIN", "TRADING", "MONITORING"):
            for pattern in itertools.product((None, True, False),
                                             repeat=len(voters)):
                votes = {v: ok for v, ok in zip(voters, pattern)
                         if ok is not None}
                want = policy_oracle(role, votes, admins)
                got = evaluate_policy(role, votes, admins)
                assert got == want, (role, sorted(votes.items()), n)


def test_trading_and_monitoring_share_one_policy():
    admins = {"a", "b", "c"}
    for votes in ({"a": True}, {"a": True, "b": True}, {"a": False, "b": False}):
        assert (evaluate_policy("TRADING", votes, admins)
                == evaluate_policy("MONITORING", votes, admins))


def test_non_admin_votes_carry_no_weight():
    admins = {"a", "b", "c"}
    stuffed = {"x1": True, "x2": True, "x3": True}
    assert evaluate_policy("TRADING", stuffed, admins) == "OPEN"


def test_rejection_can_close_before_majority_no():
    # Four admins, TRADING needs three approvals. Two rejections leave at
    # most two possible approvals, so the request closes early.
    admins = {"a", "b", "c", "d"}
    votes = {"a": False, "b": False}
    assert evaluate_policy("TRADING", votes, admins) == "REJECTED"


# -- onboarding on a live cluster ----------------------------------------------


def candidate_key(cluster, name) -> KeyPair:
    return KeyPair.generate(seed=cluster.candidate_seed(name))


def open_request(cluster, name, role="TRADING", sponsor="n1") -> str:
    kp = candidate_key(cluster, name)
    req_id = cluster.node(sponsor).identity.submit_commit_request(
        name, kp.public_bytes.hex(), role)
    cluster.settle()
    return req_id


def test_strict_majority_approves_trading_candidate(cluster4):
    req_id = open_request(cluster4, "n9")
    did = candidate_key(cluster4, "n9").did

    cluster4.node("n1").identity.review_commit_request(req_id, True)
    cluster4.settle()
    cluster4.node("n2").identity.review_commit_request(req_id, True)
    cluster4.settle()
    assert cluster4.node("n3").identity.requests()[req_id]["status"] == "OPEN"

    cluster4.node("n3").identity.review_commit_request(req_id, True)
    cluster4.settle()

    for rt in cluster4.runtimes.values():
        req = rt.identity.requests()[req_id]
        assert req["status"] == "APPROVED"
        rec = rt.identity.resolve_did(did)
        assert rec["status"] == "ACTIVE"
        assert rec["role"] == "TRADING"
        assert rec["node_id"] == "n9"
        assert rt.ledger.directory.is_active("n9")
    assert cluster4.find("identity.propagated", did=did)


def test_issued_certificate_verifies_against_its_issuer(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    did = candidate_key(cluster4, "n9").did
    rec = cluster4.node("n4").identity.resolve_did(did)

    doc = crypto.parse_certificate(rec["cert"])
    issuer = doc["body"]["issued_by"]
    issuer_rec = cluster4.node("n4").identity.resolve_did(issuer)
    body = crypto.check_certificate(doc, bytes.fromhex(issuer_rec["public_key"]))
    assert body["did"] == did
    assert body["role"] == "TRADING"
    # a different admin's key must not validate it
    other = next(r for r in cluster4.node("n4").identity.identities().values()
                 if r["did"] != issuer and r["role"] == "ADMIN")
    with pytest.raises(Exception):
        crypto.check_certificate(doc, bytes.fromhex(other["public_key"]))


def test_joined_candidate_reaches_ledger_parity(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    rt = cluster4.join_candidate("n9")
    cluster4.settle()
    ref = cluster4.node("n1")
    for channel in ("identity", "market"):
        assert rt.ledger.state_hash(channel) == ref.ledger.state_hash(channel)
    assert rt.identity.resolve_node("n9")["status"] == "ACTIVE"
    assert not rt.identity.is_admin()


def test_admin_role_needs_unanimity(cluster4):
    req_id = open_request(cluster4, "n8", role="ADMIN")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    assert cluster4.node("n4").identity.requests()[req_id]["status"] == "OPEN"
    cluster4.node("n4").identity.review_commit_request(req_id, True)
    cluster4.settle()
    assert cluster4.node("n1").identity.requests()[req_id]["status"] == "APPROVED"
    did = candidate_key(cluster4, "n8").did
    assert "n8" in cluster4.node("n1").identity.admins() or \
        cluster4.node("n1").identity.resolve_did(did)["role"] == "ADMIN"


def test_two_rejections_close_a_four_admin_request(cluster4):
    req_id = open_request(cluster4, "n9")
    cluster4.node("n1").identity.review_commit_request(req_id, False)
    cluster4.settle()
    cluster4.node("n2").identity.review_commit_request(req_id, False)
    cluster4.settle()
    req = cluster4.node("n3").identity.requests()[req_id]
    assert req["status"] == "REJECTED"
    did = candidate_key(cluster4, "n9").did
    with pytest.raises(NotFound):
        cluster4.node("n3").identity.resolve_did(did)


def test_double_vote_rejected(cluster4):
    req_id = open_request(cluster4, "n9")
    cluster4.node("n1").identity.review_commit_request(req_id, True)
    cluster4.settle()
    with pytest.raises(AlreadyVoted):
        cluster4.node("n1").identity.review_commit_request(req_id, False)


def test_vote_on_closed_request_rejected(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    with pytest.raises(RequestClosed):
        cluster4.node("n4").identity.review_commit_request(req_id, True)


def test_trading_member_cannot_review(cluster4):
    first = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(first, True)
        cluster4.settle()
    rt = cluster4.join_candidate("n9")
    cluster4.settle()
    second = open_request(cluster4, "n7")
    with pytest.raises(NotAdmin):
        rt.identity.review_commit_request(second, True)


def test_duplicate_onboarding_attempts_rejected(cluster4):
    kp = candidate_key(cluster4, "n9")
    cluster4.node("n1").identity.submit_commit_request(
        "n9", kp.public_bytes.hex(), "TRADING")
    cluster4.settle()
    with pytest.raises(DuplicateIdentity):
        cluster4.node("n2").identity.submit_commit_request(
            "n9", kp.public_bytes.hex(), "TRADING")


def test_onboarding_an_active_identity_rejected(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    kp = candidate_key(cluster4, "n9")
    with pytest.raises(DuplicateIdentity):
        cluster4.node("n1").identity.submit_commit_request(
            "n9", kp.public_bytes.hex(), "TRADING")


def test_malformed_candidate_key_rejected(cluster4):
    eng = cluster4.node("n1").identity
    with pytest.raises(Exception):
        eng.submit_commit_request("n9", "zz-not-hex", "TRADING")
    with pytest.raises(Exception):
        eng.submit_commit_request("n9", "ab" * 3, "TRADING")
    with pytest.raises(NotFound):
        eng.submit_commit_request("n9", "ab" * 32, "OVERLORD")


def test_revocation_cuts_the_member_off(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    rt = cluster4.join_candidate("n9")
    cluster4.settle()
    did = candidate_key(cluster4, "n9").did

    cluster4.node("n2").identity.revoke_did(did)
    cluster4.settle()
    for peer in ("n1", "n2", "n3", "n4"):
        node = cluster4.node(peer)
        assert node.identity.resolve_did(did)["status"] == "REVOKED"
        assert not node.ledger.directory.is_active("n9")
    assert cluster4.find("identity.revoked", did=did)

    # frames signed by the revoked key are dropped at every peer
    rt.ledger.submit_tx("market", {"op": "PUT", "key": "sneak",
                                   "doc": {"by": "n9"}})
    cluster4.settle()
    assert cluster4.node("n1").ledger.read_state("market", "sneak") is None

    with pytest.raises(AlreadyRevoked):
        cluster4.node("n2").identity.revoke_did(did)


def test_revocation_is_admin_only(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    rt = cluster4.join_candidate("n9")
    cluster4.settle()
    admin_did = cluster4.node("n1").identity.resolve_node("n1")["did"]
    with pytest.raises(NotAdmin):
        rt.identity.revoke_did(admin_did)


def test_trust_stores_converge_after_churn(cluster4):
    approved = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(approved, True)
        cluster4.settle()
    cluster4.join_candidate("n9")
    cluster4.settle()
    rejected = open_request(cluster4, "n7", sponsor="n2")
    cluster4.node("n1").identity.review_commit_request(rejected, False)
    cluster4.settle()
    cluster4.node("n3").identity.review_commit_request(rejected, False)
    cluster4.settle()

    actives = {tuple(sorted(rt.ledger.directory.active_ids()))
               for rt in cluster4.runtimes.values()}
    assert len(actives) == 1
    assert set(actives.pop()) == {"n1", "n2", "n3", "n4", "n9"}
    registries = {tuple(sorted(rt.identity.identities()))
                  for rt in cluster4.runtimes.values()}
    assert len(registries) == 1


def test_manual_propagation_is_idempotent(cluster4):
    req_id = open_request(cluster4, "n9")
    for adm in ("n1", "n2", "n3"):
        cluster4.node(adm).identity.review_commit_request(req_id, True)
        cluster4.settle()
    # already closed: calling again must change nothing
    before = cluster4.node("n1").ledger.chain_tip("identity")
    cluster4.node("n1").identity.propagate_certificates(req_id)
    cluster4.settle()
    assert cluster4.node("n1").ledger.chain_tip("identity") == before
    with pytest.raises(NotFound):
        cluster4.node("n1").identity.propagate_certificates("feedbead00000000")

"""Membership lifecycle: approval by admin majority, join, catch-up, trade.

Candidate n5 asks for a trading identity, three of the four founding
admins approve, and the new node joins mid-flight, replays the shared
history, and immediately sells. A second candidate is voted down.

Run with: python3 demos/onboarding.py
"""

from sixgen.crypto import KeyPair
from sixgen.harness import Cluster


def main():
    cluster = Cluster(size=4, seed=17).start()
    sponsor = cluster.node("n1")

    print("== candidate n5 asks to join as a trader")
    kp = KeyPair.generate(seed=cluster.candidate_seed("n5"))
    req_id = sponsor.identity.submit_commit_request(
        "n5", kp.public_bytes.hex(), "TRADING")
    cluster.settle()
    print(f"  request {req_id} is "
          f"{sponsor.identity.requests()[req_id]['status']}")

    print("== three of four admins approve")
    for admin in ("n1", "n2", "n3"):
        cluster.node(admin).identity.review_commit_request(req_id, True)
        cluster.settle()
        req = sponsor.identity.requests()[req_id]
        print(f"  after {admin}: {req['status']}")

    print("== n5 joins and replays the shared history")
    n5 = cluster.join_candidate("n5")
    cluster.settle(6_000)
    record = cluster.node("n4").identity.resolve_did(n5.keypair.did)
    print(f"  n4 resolves n5 as {record['role']}/{record['status']}")

    print("== the newcomer can sell straight away")
    oid = n5.marketplace.create_offering(
        "Newcomer VNF", "VNF", {"cores": 4, "ram_gb": 8},
        {"amount": 110.0, "currency": "EUR", "unit": "month"})
    cluster.settle()
    order_id = sponsor.marketplace.create_order(oid)
    cluster.settle(6_000)
    print(f"  n1's order is "
          f"{sponsor.marketplace.get_order(order_id)['status']}")

    print("== candidate n6 is voted down")
    kp6 = KeyPair.generate(seed=cluster.candidate_seed("n6"))
    req6 = sponsor.identity.submit_commit_request(
        "n6", kp6.public_bytes.hex(), "TRADING")
    cluster.settle()
    for admin in ("n1", "n2"):
        cluster.node(admin).identity.review_commit_request(req6, False)
        cluster.settle()
    print(f"  request {req6} ends "
          f"{sponsor.identity.requests()[req6]['status']}")

    heights = {nid: rt.ledger.chain_tip("identity")
               for nid, rt in cluster.runtimes.items()}
    tips = {t for t in heights.values()}
    print(f"== identity chains agree on all "
          f"{len(heights)} nodes: {len(tips) == 1}")
    cluster.stop()


if __name__ == "__main__":
    main()

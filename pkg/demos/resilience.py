"""Kill a node mid-trade, keep trading, revive it, and compare chains.

One of four nodes goes down while orders flow. The survivors keep
committing; the revived node replays its disk and catches up over the
network, after which every replica reports the same chain tip on every
channel, byte for byte.

Run with: python3 demos/resilience.py
"""

import tempfile

from sixgen.harness import Cluster


def tips(cluster, channel):
    return {nid: rt.ledger.chain_tip(channel)
            for nid, rt in cluster.runtimes.items() if not rt.stopped}


def main():
    with tempfile.TemporaryDirectory() as root:
        cluster = Cluster(size=4, seed=23, data_root=root).start()
        seller = cluster.node("n1")
        buyer = cluster.node("n2")

        oid = seller.marketplace.create_offering(
            "Edge rack", "EDGE_CLOUD",
            {"cores": 32, "ram_gb": 128, "storage_gb": 1000},
            {"amount": 410.0, "currency": "EUR", "unit": "month"})
        cluster.settle()
        first = buyer.marketplace.create_order(oid)
        cluster.settle(5_000)
        print(f"order {first} is "
              f"{buyer.marketplace.get_order(first)['status']}")

        print("\nkilling n4; the market keeps moving without it")
        cluster.kill("n4")
        second = buyer.marketplace.create_order(oid)
        seller.marketplace.update_offering(oid, {"price": {
            "amount": 395.0, "currency": "EUR", "unit": "month"}})
        cluster.settle(5_000)
        print(f"order {second} placed while n4 is down: "
              f"{buyer.marketplace.get_order(second)['status']}")
        print("market tips on survivors:", tips(cluster, "market"))

        print("\nreviving n4 from its own disk plus network catch-up")
        cluster.revive("n4")
        cluster.settle(8_000)
        n4 = cluster.node("n4")
        price = n4.marketplace.get_offering(oid)["price"]["amount"]
        print(f"n4 sees the price cut it missed: {price} EUR")

        for channel in ("market", "identity"):
            per_node = tips(cluster, channel)
            agreed = len(set(per_node.values())) == 1
            height, digest = next(iter(per_node.values()))
            print(f"{channel}: all 4 nodes at height {height}, "
                  f"tip {digest[:16]}..., identical: {agreed}")
        cluster.stop()


if __name__ == "__main__":
    main()

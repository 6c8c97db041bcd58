"""Natural-language discovery over a clustered offer space.

Publishes a mixed catalog of VNFs, edge cloud, slices, and radio cells
on one node, fits the offer-space model, and answers a handful of
buyer intents. The last query contrasts the pruned search (only the
best-matching clusters are scanned) with the exhaustive fallback.

Run with: python3 demos/discovery_intents.py
"""

import random

from sixgen.harness import Cluster

CATALOG = [
    ("VNF", {"cores": (2, 8), "ram_gb": (4, 16)}, (10, 30), {}),
    ("EDGE_CLOUD", {"cores": (32, 48), "ram_gb": (128, 192),
                    "storage_gb": (1000, 2000)}, (320, 400), {}),
    ("SLICE", {"latency_ms": (5, 15), "throughput_mbps": (100, 500)},
     (90, 130), {"coverage": "urban"}),
    ("RAN", {"bandwidth_mhz": (100, 400)}, (190, 230),
     {"operating_band": "n78"}),
]

INTENTS = [
    "cheapest vnf with at least 4 cores",
    "edge cloud with at least 40 cores and 150 gb of ram",
    "slice with latency below 10 ms in an urban area",
    "radio with no less than 200 mhz on band n78",
    "fastest slice over 300 mbps",
]


def main():
    cluster = Cluster(size=2, seed=9).start()
    seller = cluster.node("n1")
    buyer = cluster.node("n2")
    rng = random.Random(4)

    for rtype, ranges, price, labels in CATALOG:
        for i in range(12):
            chars = {f: round(rng.uniform(lo, hi), 2)
                     for f, (lo, hi) in ranges.items()}
            chars.update(labels)
            seller.marketplace.create_offering(
                f"{rtype.lower()}-{i}", rtype, chars,
                {"amount": round(rng.uniform(*price), 2),
                 "currency": "EUR", "unit": "month"})
    cluster.settle()

    doc = buyer.refit_discovery(k=4, seed=0)
    print(f"offer space: {doc['n']} offers in {doc['k']} clusters, "
          f"explained variance {doc['explained_variance']:.2f}")

    for text in INTENTS:
        out = buyer.discover(text)
        hard = [(h["field"], h["op"], h["value"])
                for h in out["intent"]["hard"]]
        print(f"\n> {text}")
        print(f"  parsed: type={out['intent']['resource_type']} "
              f"hard={hard}")
        for offer in out["results"][:3]:
            print(f"  {offer['name']:>16}  "
                  f"{offer['price']['amount']:>7.2f} EUR  "
                  f"{offer['characteristics']}")

    text = "vnf with 4 cores or more under 25 eur"
    pruned = buyer.discover(text, top_m=1)
    full = buyer.discover(text, fallback=True)
    print(f"\n> {text}")
    print(f"  pruned search scanned {pruned['candidates_considered']} "
          f"of {doc['n']} offers and found {len(pruned['results'])}")
    print(f"  exhaustive fallback found {len(full['results'])}; "
          f"same top hit: "
          f"{pruned['results'][0] == full['results'][0]}")
    cluster.stop()


if __name__ == "__main__":
    main()

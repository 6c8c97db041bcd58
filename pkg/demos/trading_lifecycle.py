"""Walk one resource trade end to end on a simulated four-node market.

A provider publishes a VNF offering, a consumer orders it, and the
provider-side automation composes the smart contract, confirms capacity,
deploys, and starts feeding metrics. The script then tears the order
down and shows the audit trail both parties hold.

Run with: python3 demos/trading_lifecycle.py
"""

import json

from sixgen.harness import Cluster


def say(stage, detail=""):
    print(f"\n== {stage}" + (f"  ({detail})" if detail else ""))


def show(doc, keys):
    print(json.dumps({k: doc[k] for k in keys if k in doc}, indent=2))


def main():
    cluster = Cluster(size=4, seed=42).start()
    provider = cluster.node("n2")
    consumer = cluster.node("n3")

    say("publish", "n2 lists a packet-core VNF")
    oid = provider.marketplace.create_offering(
        "Packet core", "VNF",
        {"cores": 8, "ram_gb": 16, "vendor": "acme"},
        {"amount": 240.0, "currency": "EUR", "unit": "month"})
    cluster.settle()
    show(consumer.marketplace.get_offering(oid),
         ["offering_id", "name", "status", "price"])

    say("order", "n3 buys it; automation runs on commit")
    order_id = consumer.marketplace.create_order(oid)
    cluster.settle(5_000)
    order = consumer.marketplace.get_order(order_id)
    show(order, ["order_id", "status", "provider", "consumer"])

    sc_id = provider.contracts.sc_for_order(order_id)
    say("smart contract", sc_id)
    for rt in (provider, consumer):
        state = rt.contracts.get_state(sc_id)
        print(f"  {rt.node_id} sees status {state['status']}")
    print("  event log:", [e["kind"]
                           for e in provider.contracts.get_events(sc_id)])

    say("metrics", "deployment feeds the provider's lake")
    cluster.advance(10_000)
    series = provider.query_lake(order_id, "cpu_utilization", max_points=5)
    for point in series:
        print(f"  t={point['ts_ms']:>6} ms  cpu {point['value']:.1f}%")
    status = provider.sla_status(order_id)
    print("  watched terms:", [t["term_id"] for t in status["terms"]])

    say("teardown", "provider releases the resource")
    provider.teardown_order(order_id)
    cluster.settle()
    order = consumer.marketplace.get_order(order_id)
    print(f"  order is {order['status']}; contract is "
          f"{consumer.contracts.get_state(sc_id)['status']}")
    print("  history:")
    for entry in order["history"]:
        print(f"    {entry['from']} -> {entry['to']} by {entry['by']}")

    cluster.stop()
    print("\ndone.")


if __name__ == "__main__":
    main()

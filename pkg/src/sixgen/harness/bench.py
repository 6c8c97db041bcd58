"""Measured service levels of the stack itself.

Four measurements, each on a freshly built simulated cluster:

- alarm_latency: wall time from a breaching measurement entering the
  assurance engine to the ALARM being emitted, at a steady ingest rate.
- bandwidth: bytes actually sent and received per node over a full
  trade lifecycle, divided by elapsed simulated seconds.
- onboarding: wall time to run the whole onboarding scenario, replay
  and catch-up included.
- commit_scaling: median commit latency (simulated time from submission
  to local apply) on a 4-node vs an 8-node cluster.

Numbers are reported raw; thresholds live with the callers.
"""

import statistics
import time

from ..node import NodeRuntime, make_founding
from ..runtime import Network, Scheduler
from .runner import Cluster, run_scenario


def _percentile(values, pct):
    if not values:
        return None
    ordered = sorted(values)
    idx = min(len(ordered) - 1, int(round(pct / 100 * (len(ordered) - 1))))
    return ordered[idx]


def _active_order(cluster, provider="n2", consumer="n1"):
    rt = cluster.node(provider)
    offering_id = rt.marketplace.create_offering(
        "Bench VNF", "VNF", {"cores": 4, "ram_gb": 8},
        {"amount": 100.0, "currency": "EUR", "unit": "month"})
    cluster.settle()
    order_id = cluster.node(consumer).marketplace.create_order(offering_id)
    cluster.settle(5_000)
    sc_id = rt.contracts.sc_for_order(order_id)
    state = rt.contracts.get_state(sc_id)
    if state["status"] != "ACTIVE":
        raise RuntimeError(f"bench setup failed: agreement is "
                           f"{state['status']}")
    return order_id


def bench_alarm_latency(rate_hz=10, duration_s=30, size=4, seed=101) -> dict:
    """Breaching instant samples at rate_hz; wall seconds per detection."""
    cluster = Cluster(size=size, seed=seed).start()
    try:
        order_id = _active_order(cluster)
        provider = cluster.node("n2")
        step_ms = int(1000 / rate_hz)
        latencies = []
        for _ in range(duration_s * rate_hz):
            cluster.scheduler.run_until(cluster.now_ms + step_ms)
            t0 = time.perf_counter()
            result = provider.submit_metric(order_id, "availability_pct",
                                            95.0)
            elapsed = time.perf_counter() - t0
            if result["alarms"]:
                latencies.append(elapsed)
        return {
            "samples": len(latencies),
            "rate_hz": rate_hz,
            "p50_ms": _percentile(latencies, 50) * 1000,
            "p99_ms": _percentile(latencies, 99) * 1000,
            "max_ms": max(latencies) * 1000,
        }
    finally:
        cluster.stop()


def bench_bandwidth(monitor_s=60, size=4, seed=102) -> dict:
    """Bytes per node per simulated second across one full trade."""
    cluster = Cluster(size=size, seed=seed).start()
    try:
        start_ms = cluster.now_ms
        order_id = _active_order(cluster)
        cluster.advance(monitor_s * 1000)
        cluster.node("n2").teardown_order(order_id)
        cluster.settle(5_000)
        elapsed_s = (cluster.now_ms - start_ms) / 1000
        per_node = {n: cluster.network.bytes_for(n) / elapsed_s
                    for n in cluster.runtimes}
        return {
            "sim_seconds": elapsed_s,
            "bytes_per_s": {n: round(v, 1) for n, v in per_node.items()},
            "peak_bytes_per_s": round(max(per_node.values()), 1),
            "mean_bytes_per_s": round(
                sum(per_node.values()) / len(per_node), 1),
        }
    finally:
        cluster.stop()


def bench_onboarding() -> dict:
    """Wall time for the full membership lifecycle scenario."""
    t0 = time.perf_counter()
    result = run_scenario("onboarding")
    elapsed = time.perf_counter() - t0
    return {
        "ok": result.ok,
        "wall_s": round(elapsed, 3),
        "sim_ms": result.sim_ms,
    }


def _commit_latencies(size, txs, seed) -> list:
    scheduler = Scheduler()
    network = Network(scheduler, seed=seed)
    node_ids = [f"n{i}" for i in range(1, size + 1)]
    founding = make_founding(node_ids, seed_prefix=f"bench{seed}")
    runtimes = []
    for entry in founding:
        runtimes.append(NodeRuntime({
            "node_id": entry["node_id"],
            "key_seed": entry["key_seed"],
            "founding": founding,
        }, scheduler, network))
    for rt in runtimes:
        rt.start()
    scheduler.run_until_idle()
    submitter = runtimes[1].ledger  # non-leader: includes the forward hop
    latencies = []
    for i in range(txs):
        t0 = scheduler.clock.now_ms()
        seen = []
        submitter.submit_tx("market", {
            "op": "PUT", "key": f"bench/{i}", "doc": {"i": i},
        }, on_applied=lambda *a: seen.append(scheduler.clock.now_ms()))
        guard = 0
        while not seen and guard < 10_000:
            due = scheduler.next_due()
            if due is None:
                break
            scheduler.run_until(due)
            guard += 1
        if seen:
            latencies.append(seen[0] - t0)
    for rt in runtimes:
        rt.stop()
    return latencies


def bench_commit_scaling(sizes=(4, 8), txs=25, seed=103) -> dict:
    """Commit latency growth as the member count doubles.

    Growth is judged on the median, which ignores the occasional
    timer-aligned outlier that a mean would smear in.
    """
    samples = {size: _commit_latencies(size, txs, seed) for size in sizes}
    lo, hi = min(sizes), max(sizes)
    medians = {s: statistics.median(v) for s, v in samples.items()}
    return {
        "txs": txs,
        "median_ms": {str(s): round(medians[s], 2) for s in sizes},
        "mean_ms": {str(s): round(statistics.mean(v), 2)
                    for s, v in samples.items()},
        "growth": round(medians[hi] / medians[lo], 3),
    }


def run_all(quick=False) -> dict:
    return {
        "alarm_latency": bench_alarm_latency(
            duration_s=10 if quick else 30),
        "bandwidth": bench_bandwidth(monitor_s=20 if quick else 60),
        "onboarding": bench_onboarding(),
        "commit_scaling": bench_commit_scaling(txs=10 if quick else 25),
    }

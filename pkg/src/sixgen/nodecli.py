"""`sixgen-node`: run a live marketplace node (or a small local cluster).

All nodes of a `run` invocation live in one process and share a
wall-clock scheduler; a pump thread drives due timers while HTTP handler
threads take the same lock for each runtime touch. The first node's API
listens on the configured port, and `--all-nodes` exposes node i on
port+i so automation on every participant can be poked directly.
"""

import logging
import threading
import time

import click
import yaml

from .clock import WallClock
from .httpapi import NodeApi
from .node import NodeRuntime, load_config, make_founding
from .runtime import Network, Scheduler

log = logging.getLogger(__name__)

PUMP_INTERVAL_S = 0.01

DEMO_CATALOG = [
    ("n2", "Packet core VNF", "VNF",
     {"cores": 8, "ram_gb": 16, "vendor": "opencore"},
     {"amount": 240.0, "currency": "EUR", "unit": "month"}),
    ("n2", "Firewall VNF", "VNF",
     {"cores": 4, "ram_gb": 8, "vendor": "opencore"},
     {"amount": 120.0, "currency": "EUR", "unit": "month"}),
    ("n3", "Edge cloud Munich", "EDGE_CLOUD",
     {"cores": 32, "ram_gb": 128, "storage_gb": 2000},
     {"amount": 1900.0, "currency": "EUR", "unit": "month"}),
    ("n3", "Edge cloud Athens", "EDGE_CLOUD",
     {"cores": 16, "ram_gb": 64, "storage_gb": 1000},
     {"amount": 980.0, "currency": "EUR", "unit": "month"}),
    ("n4", "URLLC slice", "SLICE",
     {"latency_ms": 5.0, "throughput_mbps": 150.0, "coverage": "urban"},
     {"amount": 3200.0, "currency": "EUR", "unit": "month"}),
    ("n4", "Broadband slice", "SLICE",
     {"latency_ms": 25.0, "throughput_mbps": 400.0, "coverage": "national"},
     {"amount": 2100.0, "currency": "EUR", "unit": "month"}),
    ("n2", "Mid-band RAN cell", "RAN",
     {"operating_band": "n78", "bandwidth_mhz": 100},
     {"amount": 760.0, "currency": "EUR", "unit": "month"}),
    ("n3", "CDN service", "NETWORK_SERVICE",
     {"component_count": 6},
     {"amount": 1450.0, "currency": "EUR", "unit": "month"}),
]


def build_cluster(config):
    """Expand a config into runtimes on one wall-clock scheduler."""
    scheduler = Scheduler(WallClock())
    network = Network(scheduler, seed=int(config.get("net_seed", 0)))
    cluster = config.get("cluster")
    if cluster:
        size = int(cluster.get("size", 4))
        prefix = cluster.get("node_prefix", "n")
        node_ids = [f"{prefix}{i}" for i in range(1, size + 1)]
        founding = make_founding(node_ids,
                                 cluster.get("seed_prefix", "sixgen"))
        node_cfgs = []
        for entry in founding:
            node_cfgs.append({
                "node_id": entry["node_id"],
                "key_seed": entry["key_seed"],
                "founding": founding,
                "data_dir": config.get("data_dir"),
                "capacity": config.get("capacity"),
            })
    else:
        node_cfgs = [dict(config)]
        if not node_cfgs[0].get("founding"):
            founding = make_founding([config["node_id"]],
                                     config.get("seed_prefix", "sixgen"))
            node_cfgs[0]["founding"] = founding
    runtimes = [NodeRuntime(cfg, scheduler, network) for cfg in node_cfgs]
    return scheduler, network, runtimes


def seed_demo_catalog(runtimes, lock):
    by_id = {rt.node_id: rt for rt in runtimes}
    created = []
    for node_id, name, rtype, chars, price in DEMO_CATALOG:
        rt = by_id.get(node_id, runtimes[0])
        done = threading.Event()
        with lock:
            oid = rt.marketplace.create_offering(
                name, rtype, chars, price, on_applied=lambda *a: done.set())
        done.wait(5.0)
        created.append(oid)
    with lock:
        runtimes[0].refit_discovery()
    return created


@click.group()
def main():
    """Marketplace node."""
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "-c", "config_path",
              envvar="SIXGEN_CONFIG", default=None,
              help="YAML config; omit for an in-memory 4-node demo cluster.")
@click.option("--host", default=None, help="Override API bind host.")
@click.option("--port", type=int, default=None, help="Override API port.")
@click.option("--all-nodes", is_flag=True,
              help="Expose every cluster node's API on consecutive ports.")
@click.option("--seed-demo", is_flag=True,
              help="Publish a small demo catalog after startup.")
@click.option("--token", default=None,
              help="Require this bearer token on mutating requests.")
def run(config_path, host, port, all_nodes, seed_demo, token):
    """Start the node (or cluster) and serve its HTTP API."""
    if config_path:
        config = _peek(config_path)
        if "cluster" not in config:
            config = load_config(config_path)
    else:
        config = {"cluster": {"size": 4, "seed_prefix": "demo"}}
    api_cfg = config.get("api") or {}
    host = host or api_cfg.get("host", "127.0.0.1")
    port = port if port is not None else int(api_cfg.get("port", 8471))
    token = token or api_cfg.get("token")
    if api_cfg.get("all_nodes"):
        all_nodes = True

    scheduler, network, runtimes = build_cluster(config)
    lock = threading.RLock()
    stop = threading.Event()

    def pump():
        while not stop.is_set():
            with lock:
                scheduler.run_due()
            time.sleep(PUMP_INTERVAL_S)

    pump_thread = threading.Thread(target=pump, name="pump", daemon=True)
    pump_thread.start()
    with lock:
        for rt in runtimes:
            rt.start()
    _wait_settled(scheduler, lock)

    if seed_demo:
        seed_demo_catalog(runtimes, lock)
        click.echo(f"seeded {len(DEMO_CATALOG)} demo offerings")

    apis = []
    exposed = runtimes if all_nodes else runtimes[:1]
    for i, rt in enumerate(exposed):
        api = NodeApi(rt, lock, host=host, port=port + i, token=token).start()
        apis.append(api)
        click.echo(f"node {rt.node_id} listening on http://{host}:{api.port}")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        stop.set()
        pump_thread.join(timeout=2.0)
        for api in apis:
            api.stop()
        with lock:
            for rt in runtimes:
                rt.stop()


def _peek(path):
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def _wait_settled(scheduler, lock, timeout_s=5.0):
    """Block until bootstrap traffic drains (no due work, empty outboxes)."""
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        with lock:
            if scheduler.next_due() is None:
                return
        time.sleep(0.05)


@main.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--size", type=int, default=4, help="Cluster size.")
@click.option("--port", type=int, default=8471, help="API port.")
def init_config(path, size, port):
    """Write a sample cluster config."""
    sample = {
        "cluster": {"size": size, "node_prefix": "n", "seed_prefix": "demo"},
        "api": {"host": "127.0.0.1", "port": port, "all_nodes": True,
                "token": None},
        "data_dir": None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(sample, fh, sort_keys=False)
    click.echo(f"wrote {path}")


@main.command()
@click.argument("node_id")
@click.option("--seed-prefix", default="sixgen")
def keys(node_id, seed_prefix):
    """Print the deterministic identity material for a node id."""
    entry = make_founding([node_id], seed_prefix)[0]
    from .crypto import KeyPair, did_for
    kp = KeyPair.generate(seed=entry["key_seed"])
    click.echo(yaml.safe_dump({
        "node_id": node_id,
        "key_seed": entry["key_seed"],
        "public_key": entry["public_key"],
        "did": did_for(kp.public_bytes),
    }, sort_keys=False))


if __name__ == "__main__":
    main()

"""Simulated resource controllers behind the provider.

A provider node drives two controller stacks that expose the same
operations through different command dialects: DIALECT_A speaks RPC-style
``{"method": ..., "params": ...}`` calls (the compute stack), DIALECT_B
speaks path-style ``{"verb": ..., "path": ..., "body": ...}`` calls (the
connectivity stack). Both are rendered from one shared translation table,
so a translated order carries the same verbs with the same arguments in
the same sequence regardless of dialect.

Lifecycle: ``check_availability`` answers from capacity accounting and,
when negative, re-checks every five seconds until capacity frees up;
``deploy`` claims capacity, reports progress immediately and completion
250 ms later, then feeds the agreed metrics from a piecewise-linear
profile into the measurement sink. ``teardown`` stops the feed, frees
capacity, and reports a final failed deployment status, which is what
terminates the agreement.

Everything is driven by the shared scheduler: no threads, no wall clock,
and fault injection simply rewrites what the next scheduled step does.
"""

import logging

from .errors import (
    CapacityRace,
    NoController,
    NotDeployed,
    UnsupportedResourceType,
)

log = logging.getLogger(__name__)

DEPLOY_DELAY_MS = 250
AVAIL_RECHECK_MS = 5000
MAX_RECHECKS = 120
METRIC_INTERVAL_MS = 1000
DEFAULT_DURATION_S = 120

DIALECT_A = "DIALECT_A"
DIALECT_B = "DIALECT_B"

# Shared translation table: resource type -> ordered (verb, argument names).
# Arguments name characteristics of the order; both dialects render from
# exactly this sequence.
TRANSLATION_TABLE = {
    "VNF": [
        ("instantiate", ("cores", "ram_gb")),
        ("configure", ()),
        ("start", ()),
    ],
    "EDGE_CLOUD": [
        ("reserve", ("cores", "ram_gb", "storage_gb")),
        ("attach_storage", ("storage_gb",)),
        ("expose", ()),
    ],
    "SLICE": [
        ("allocate", ("throughput_mbps", "latency_ms")),
        ("configure_qos", ("latency_ms",)),
        ("activate", ("coverage",)),
    ],
    "RAN": [
        ("tune_band", ("operating_band", "bandwidth_mhz")),
        ("activate_cell", ()),
    ],
    "NETWORK_SERVICE": [
        ("instantiate_components", ("component_count",)),
        ("chain", ()),
        ("start", ()),
    ],
}

DIALECT_FOR_RESOURCE = {
    "VNF": DIALECT_A,
    "EDGE_CLOUD": DIALECT_A,
    "SLICE": DIALECT_B,
    "RAN": DIALECT_B,
    "NETWORK_SERVICE": DIALECT_B,
}

# What an order claims from the capacity pool, per resource type.
CLAIM_FIELDS = {
    "VNF": ("cores", "ram_gb"),
    "EDGE_CLOUD": ("cores", "ram_gb", "storage_gb"),
    "SLICE": ("throughput_mbps",),
    "RAN": ("bandwidth_mhz",),
    "NETWORK_SERVICE": ("component_count",),
}

DEFAULT_CAPACITY = {
    "cores": 64.0,
    "ram_gb": 256.0,
    "storage_gb": 4096.0,
    "throughput_mbps": 2000.0,
    "bandwidth_mhz": 400.0,
    "component_count": 32.0,
}

DEFAULT_PROFILES = {
    "VNF": {
        "cpu_utilization": [(0, 35.0), (60, 55.0), (120, 45.0)],
        "memory_utilization": [(0, 50.0), (120, 60.0)],
        "availability_pct": [(0, 100.0), (120, 100.0)],
    },
    "EDGE_CLOUD": {
        "cpu_utilization": [(0, 30.0), (60, 50.0), (120, 40.0)],
        "storage_utilization": [(0, 40.0), (120, 55.0)],
        "latency_ms": [(0, 8.0), (120, 12.0)],
    },
    "SLICE": {
        "latency_ms": [(0, 6.0), (120, 8.0)],
        "throughput_mbps": [(0, 180.0), (120, 160.0)],
        "packet_loss_pct": [(0, 0.01), (120, 0.02)],
    },
    "RAN": {
        "availability_pct": [(0, 100.0), (120, 100.0)],
        "latency_ms": [(0, 20.0), (120, 25.0)],
    },
    "NETWORK_SERVICE": {
        "availability_pct": [(0, 100.0), (120, 100.0)],
        "latency_ms": [(0, 30.0), (120, 35.0)],
        "error_rate_pct": [(0, 0.2), (120, 0.4)],
    },
}


def interpolate(segments, t_s: float) -> float:
    """Piecewise-linear value at t_s; holds the edges beyond the ends."""
    if t_s <= segments[0][0]:
        return segments[0][1]
    for (t0, v0), (t1, v1) in zip(segments, segments[1:]):
        if t_s <= t1:
            if t1 == t0:
                return v1
            return v0 + (v1 - v0) * (t_s - t0) / (t1 - t0)
    return segments[-1][1]


def render_command(dialect, resource_type, verb, args: dict) -> dict:
    if dialect == DIALECT_A:
        return {
            "dialect": DIALECT_A,
            "method": f"controller.{resource_type.lower()}.{verb}",
            "params": args,
        }
    return {
        "dialect": DIALECT_B,
        "verb": "POST",
        "path": f"/v1/{resource_type.lower()}/{verb}",
        "body": args,
    }


class Broker:
    def __init__(self, node_id, scheduler, emitter=None, sink=None,
                 capacity=None, dialects=None):
        self.node_id = node_id
        self.scheduler = scheduler
        self.emitter = emitter or (lambda kind, payload: None)
        self.sink = sink or (lambda order_id, metric, value, ts_ms: None)
        self.capacity = dict(DEFAULT_CAPACITY, **(capacity or {}))
        self.dialects = dict(DIALECT_FOR_RESOURCE, **(dialects or {}))
        self.deployments = {}
        self._faults = {}
        self._profiles = {}
        self._rechecks = {}

    # -- fault injection -----------------------------------------------------------

    def inject_fault(self, kind, order_id=None, **params):
        """Arrange for the next matching operation to misbehave.

        Kinds: deploy_fail, capacity_exhausted, offering_deviation,
        metric_profile (params: metric, segments, interval_ms, duration_s).
        """
        self._faults.setdefault(kind, []).append(
            {"order_id": order_id, **params})

    def clear_fault(self, kind):
        self._faults.pop(kind, None)

    def _take_fault(self, kind, order_id):
        entries = self._faults.get(kind, [])
        for i, entry in enumerate(entries):
            if entry["order_id"] in (None, order_id):
                return entries.pop(i)
        return None

    def _peek_fault(self, kind, order_id):
        for entry in self._faults.get(kind, []):
            if entry["order_id"] in (None, order_id):
                return entry
        return None

    # -- lifecycle --------------------------------------------------------------------

    def check_availability(self, order, _attempt=0) -> bool:
        claim = self._claim(order)
        exhausted = self._peek_fault("capacity_exhausted", order["order_id"])
        available = exhausted is None and self._fits(claim)
        self.emitter("AVAILABILITY_RESPONSE", {
            "order_id": order["order_id"],
            "available": available,
            "claim": claim,
            "free": self._free(),
        })
        if not available and _attempt < MAX_RECHECKS:
            order_id = order["order_id"]
            self._rechecks[order_id] = self.scheduler.call_later(
                AVAIL_RECHECK_MS,
                lambda: self._recheck(order, _attempt + 1))
        return available

    def _recheck(self, order, attempt):
        order_id = order["order_id"]
        self._rechecks.pop(order_id, None)
        if order_id in self.deployments:
            return
        self.check_availability(order, _attempt=attempt)

    def awaiting_capacity(self, order_id) -> bool:
        return order_id in self._rechecks

    def translate_order(self, order) -> dict:
        rtype = order["resource_type"]
        steps = TRANSLATION_TABLE.get(rtype)
        if steps is None:
            raise UnsupportedResourceType(f"no controller handles {rtype}")
        dialect = self.dialects.get(rtype)
        if dialect is None:
            raise NoController(f"no controller configured for {rtype}")
        chars = order["characteristics"]
        commands = []
        for verb, arg_names in steps:
            args = {name: chars[name] for name in arg_names if name in chars}
            args["order_id"] = order["order_id"]
            commands.append(render_command(dialect, rtype, verb, args))
        return {
            "order_id": order["order_id"],
            "resource_type": rtype,
            "dialect": dialect,
            "commands": commands,
        }

    def deploy(self, order) -> dict:
        order_id = order["order_id"]
        if order_id in self.deployments:
            return self.deployments[order_id]["plan"]
        claim = self._claim(order)
        if not self._fits(claim):
            raise CapacityRace(f"capacity changed under {order_id}")
        plan = self.translate_order(order)
        self.deployments[order_id] = {
            "order": order,
            "claim": claim,
            "status": "IN_PROGRESS",
            "plan": plan,
            "schedule": [],
        }
        timer = self._rechecks.pop(order_id, None)
        if timer:
            timer.cancel()
        self.emitter("DEPLOYMENT_STATUS", {
            "order_id": order_id, "status": "IN_PROGRESS",
        })
        self.scheduler.call_later(DEPLOY_DELAY_MS,
                                  lambda: self._finish_deploy(order_id))
        return plan

    def _finish_deploy(self, order_id):
        dep = self.deployments.get(order_id)
        if dep is None or dep["status"] != "IN_PROGRESS":
            return
        fail = self._take_fault("deploy_fail", order_id)
        if fail is not None:
            dep["status"] = "FAILED"
            del self.deployments[order_id]
            self.emitter("DEPLOYMENT_STATUS", {
                "order_id": order_id, "status": "FAILED",
                "reason": fail.get("reason", "controller fault"),
            })
            return
        dep["status"] = "COMPLETED"
        self.emitter("DEPLOYMENT_STATUS", {
            "order_id": order_id, "status": "COMPLETED",
        })
        deviation = self._take_fault("offering_deviation", order_id)
        if deviation is not None:
            self.emit_offering_violation(
                order_id, deviation.get("detail", "delivered resource "
                                        "deviates from the offering"))
        self._start_metrics(dep)

    def redeploy(self, order_id):
        """Re-run deployment on an already-claimed resource (remediation)."""
        dep = self.deployments.get(order_id)
        if dep is None:
            raise NotDeployed(f"{order_id} has no deployment")
        dep["status"] = "IN_PROGRESS"
        self._stop_metrics(dep)
        self.emitter("DEPLOYMENT_STATUS", {
            "order_id": order_id, "status": "IN_PROGRESS",
        })
        self.scheduler.call_later(DEPLOY_DELAY_MS,
                                  lambda: self._finish_deploy(order_id))

    def adopt(self, order):
        """Re-own a running deployment after a restart, without events."""
        order_id = order["order_id"]
        if order_id in self.deployments:
            return
        self.deployments[order_id] = {
            "order": order,
            "claim": self._claim(order),
            "status": "COMPLETED",
            "plan": self.translate_order(order),
            "schedule": [],
        }

    def halt(self):
        """Drop everything scheduled; the owning node is going down."""
        for dep in self.deployments.values():
            self._stop_metrics(dep)
        for timer in self._rechecks.values():
            timer.cancel()
        self._rechecks.clear()
        self.deployments.clear()
        self._faults.clear()

    def teardown(self, order_id, reason="teardown"):
        dep = self.deployments.pop(order_id, None)
        if dep is None:
            raise NotDeployed(f"{order_id} has no deployment")
        self._stop_metrics(dep)
        self.emitter("DEPLOYMENT_STATUS", {
            "order_id": order_id, "status": "FAILED", "reason": reason,
        })

    def emit_offering_violation(self, order_id, detail):
        if order_id not in self.deployments:
            raise NotDeployed(f"{order_id} has no deployment")
        self.emitter("OFFERING_VIOLATION", {
            "order_id": order_id, "detail": detail,
        })

    # -- metric feed --------------------------------------------------------------------

    def set_profile(self, order_id, metric, segments, interval_ms=None,
                    duration_s=None):
        """Override one metric's profile before (or during) deployment."""
        self._profiles.setdefault(order_id, {})[metric] = {
            "segments": [(float(t), float(v)) for t, v in segments],
            "interval_ms": interval_ms or METRIC_INTERVAL_MS,
            "duration_s": duration_s or DEFAULT_DURATION_S,
        }
        dep = self.deployments.get(order_id)
        if dep and dep["status"] == "COMPLETED":
            self._stop_metrics(dep)
            self._start_metrics(dep)

    def _start_metrics(self, dep):
        order = dep["order"]
        order_id = order["order_id"]
        profiles = {}
        for metric, segments in DEFAULT_PROFILES[order["resource_type"]].items():
            profiles[metric] = {
                "segments": segments,
                "interval_ms": METRIC_INTERVAL_MS,
                "duration_s": DEFAULT_DURATION_S,
            }
        profiles.update(self._profiles.get(order_id, {}))
        t0 = self.scheduler.clock.now_ms()
        for metric, prof in sorted(profiles.items()):
            self._tick(dep, order_id, metric, prof, t0, 0)

    def _tick(self, dep, order_id, metric, prof, t0, n):
        if self.deployments.get(order_id) is not dep \
                or dep["status"] != "COMPLETED":
            return
        t_ms = n * prof["interval_ms"]
        if t_ms > prof["duration_s"] * 1000:
            return
        value = interpolate(prof["segments"], t_ms / 1000.0)
        self.sink(order_id, metric, value, t0 + t_ms)
        task = self.scheduler.call_later(
            prof["interval_ms"],
            lambda: self._tick(dep, order_id, metric, prof, t0, n + 1))
        dep["schedule"].append(task)

    def _stop_metrics(self, dep):
        for task in dep["schedule"]:
            task.cancel()
        dep["schedule"] = []

    # -- capacity -----------------------------------------------------------------------

    def _claim(self, order) -> dict:
        fields = CLAIM_FIELDS.get(order["resource_type"])
        if fields is None:
            raise UnsupportedResourceType(
                f"no controller handles {order['resource_type']}")
        chars = order["characteristics"]
        claim = {}
        for field in fields:
            value = chars.get(field)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                claim[field] = float(value)
        return claim

    def _allocated(self) -> dict:
        total = {}
        for dep in self.deployments.values():
            for field, amount in dep["claim"].items():
                total[field] = total.get(field, 0.0) + amount
        return total

    def _free(self) -> dict:
        allocated = self._allocated()
        return {field: self.capacity.get(field, 0.0) - allocated.get(field, 0.0)
                for field in self.capacity}

    def _fits(self, claim) -> bool:
        free = self._free()
        return all(free.get(field, 0.0) >= amount
                   for field, amount in claim.items())

    def utilization(self) -> dict:
        return {
            "capacity": dict(self.capacity),
            "allocated": self._allocated(),
            "free": self._free(),
            "deployments": sorted(self.deployments),
        }

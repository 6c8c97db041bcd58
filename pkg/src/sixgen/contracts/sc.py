"""Agreement status state machine.

The status of a composed agreement is a pure fold of its event log over the
transition table below. Both parties fold the same totally-ordered log, so
they cannot disagree on status.

Statuses:

    CREATED     composed, deployment not yet started
    DEPLOYING   provider reported deployment in progress
    ACTIVE      service delivered, terms being monitored
    SUSPENDED   provider reported the resource unavailable; parks the
                current status and restores it when availability returns
    VIOLATED    a term was breached (alarm) or the delivered resource does
                not match the offering
    TERMINATED  final; deployment failed or the service was torn down

Event kinds and their qualifiers:

    ALERT                   predicted breach; counts, never changes status
    ALARM                   measured breach
    OFFERING_VIOLATION      delivered resource deviates from the offering
    AVAILABILITY_RESPONSE   qualifier: available (bool)
    DEPLOYMENT_STATUS       qualifier: status (IN_PROGRESS|COMPLETED|FAILED)

A remediation is the provider re-running deployment: DEPLOYMENT_STATUS
COMPLETED while VIOLATED returns the agreement to ACTIVE and closes open
alerts. OFFERING_VIOLATION while SUSPENDED cannot interrupt the suspension
but rewrites the parked status to VIOLATED, so the violation survives the
resume. Anything not in the table raises IllegalEvent.
"""

from ..errors import IllegalEvent

STATUSES = ("CREATED", "DEPLOYING", "ACTIVE", "SUSPENDED", "VIOLATED",
            "TERMINATED")

EVENT_KINDS = ("ALERT", "ALARM", "OFFERING_VIOLATION",
               "AVAILABILITY_RESPONSE", "DEPLOYMENT_STATUS")

STAY = "__stay__"
PRIOR = "__prior__"

# (status, kind, qualifier) -> (target, effects...)
TRANSITIONS = {
    ("CREATED", "DEPLOYMENT_STATUS", "IN_PROGRESS"): ("DEPLOYING",),
    ("CREATED", "DEPLOYMENT_STATUS", "FAILED"): ("TERMINATED",),
    ("CREATED", "AVAILABILITY_RESPONSE", True): (STAY,),
    ("CREATED", "AVAILABILITY_RESPONSE", False): ("SUSPENDED", "park"),

    ("DEPLOYING", "DEPLOYMENT_STATUS", "IN_PROGRESS"): (STAY,),
    ("DEPLOYING", "DEPLOYMENT_STATUS", "COMPLETED"): ("ACTIVE",),
    ("DEPLOYING", "DEPLOYMENT_STATUS", "FAILED"): ("TERMINATED",),
    ("DEPLOYING", "AVAILABILITY_RESPONSE", True): (STAY,),
    ("DEPLOYING", "AVAILABILITY_RESPONSE", False): ("SUSPENDED", "park"),

    ("ACTIVE", "ALERT", None): (STAY, "count_alert"),
    ("ACTIVE", "ALARM", None): ("VIOLATED",),
    ("ACTIVE", "OFFERING_VIOLATION", None): ("VIOLATED",),
    ("ACTIVE", "DEPLOYMENT_STATUS", "IN_PROGRESS"): (STAY,),
    ("ACTIVE", "DEPLOYMENT_STATUS", "COMPLETED"): (STAY,),
    ("ACTIVE", "DEPLOYMENT_STATUS", "FAILED"): ("TERMINATED",),
    ("ACTIVE", "AVAILABILITY_RESPONSE", True): (STAY,),
    ("ACTIVE", "AVAILABILITY_RESPONSE", False): ("SUSPENDED", "park"),

    ("VIOLATED", "ALERT", None): (STAY, "count_alert"),
    ("VIOLATED", "ALARM", None): (STAY,),
    ("VIOLATED", "OFFERING_VIOLATION", None): (STAY,),
    ("VIOLATED", "DEPLOYMENT_STATUS", "IN_PROGRESS"): (STAY,),
    ("VIOLATED", "DEPLOYMENT_STATUS", "COMPLETED"): ("ACTIVE", "close_alerts"),
    ("VIOLATED", "DEPLOYMENT_STATUS", "FAILED"): ("TERMINATED",),
    ("VIOLATED", "AVAILABILITY_RESPONSE", True): (STAY,),
    ("VIOLATED", "AVAILABILITY_RESPONSE", False): ("SUSPENDED", "park"),

    ("SUSPENDED", "AVAILABILITY_RESPONSE", True): (PRIOR,),
    ("SUSPENDED", "AVAILABILITY_RESPONSE", False): (STAY,),
    ("SUSPENDED", "OFFERING_VIOLATION", None): (STAY, "park_violated"),
}


def qualifier(event: dict):
    kind = event["kind"]
    if kind == "AVAILABILITY_RESPONSE":
        return bool(event["available"])
    if kind == "DEPLOYMENT_STATUS":
        return event["status"]
    return None


def new_instance(sc_id, order, model_ref, bindings, legal_hash, ts_ms) -> dict:
    return {
        "sc_id": sc_id,
        "order_id": order["order_id"],
        "provider": order["provider"],
        "consumer": order["consumer"],
        "provider_did": order["provider_did"],
        "consumer_did": order["consumer_did"],
        "resource_type": order["resource_type"],
        "model": model_ref,  # {"baseline", "overrides"}
        "bindings": bindings,
        "legal_hash": legal_hash,
        "status": "CREATED",
        "prior": None,
        "alerts_open": 0,
        "event_count": 0,
        "composed_ms": ts_ms,
    }


def apply_event(state: dict, event: dict) -> dict:
    """Apply one event, returning the next state. Pure; raises IllegalEvent."""
    kind = event.get("kind")
    if kind not in EVENT_KINDS:
        raise IllegalEvent(f"unknown event kind {kind!r}")
    row = TRANSITIONS.get((state["status"], kind, qualifier(event)))
    if row is None:
        raise IllegalEvent(
            f"{kind}[{qualifier(event)}] is not allowed in {state['status']}")
    target, *effects = row
    new = dict(state)
    if "park" in effects:
        new["prior"] = state["status"]
    if target == PRIOR:
        new["status"] = state["prior"]
        new["prior"] = None
    elif target != STAY:
        new["status"] = target
    if "count_alert" in effects:
        new["alerts_open"] = state["alerts_open"] + 1
    if "close_alerts" in effects:
        new["alerts_open"] = 0
    if "park_violated" in effects:
        new["prior"] = "VIOLATED"
    new["event_count"] = state["event_count"] + 1
    return new


def replay(state: dict, events, strict=True):
    """Fold events over a fresh instance; lenient mode skips illegal ones."""
    skipped = 0
    for event in events:
        try:
            state = apply_event(state, event)
        except IllegalEvent:
            if strict:
                raise
            skipped += 1
    return state, skipped

"""Agreement machine, models, prose, and the ledger-backed engine.

The transition table is checked against a plain-branch restatement of the
documented lifecycle, first exhaustively over every (status, event) pair
and then over ten thousand random event sequences.
"""

import random

import pytest

from sixgen.canon import sha256_hex
from sixgen.contracts import sc
from sixgen.contracts.engine import ContractsEngine, standard_bindings
from sixgen.contracts.model import (
    apply_overrides,
    list_baselines,
    load_baseline,
    model_hash,
    validate_model,
)
from sixgen.contracts.prose import prose_hash, render_prose
from sixgen.errors import (
    AlreadyComposed,
    IllegalEvent,
    ModelMismatch,
    NotFound,
    OverrideTypeMismatch,
    UnboundPlaceholder,
    UnknownBaseline,
)
from sixgen.node import NodeRuntime, make_founding
from sixgen.runtime import Network, Scheduler


def fold_oracle(state, event):
    """The lifecycle as prose, re-implemented as branches.

    Alerts only ever count. An alarm or a delivery deviation makes a
    monitored agreement VIOLATED. Losing availability suspends whatever
    was happening and restores it on return; a deviation during the
    suspension poisons the parked status. Redeployment finishing while
    VIOLATED heals the agreement and closes its alerts. A failed
    deployment terminates, and TERMINATED absorbs nothing further.
    """
    status = state["status"]
    kind = event.get("kind")
    new = dict(state)
    new["event_count"] = state["event_count"] + 1

    if kind == "ALERT":
        if status in ("ACTIVE", "VIOLATED"):
            new["alerts_open"] = state["alerts_open"] + 1
            return new
    elif kind == "ALARM":
        if status == "ACTIVE":
            new["status"] = "VIOLATED"
            return new
        if status == "VIOLATED":
            return new
    elif kind == "OFFERING_VIOLATION":
        if status == "ACTIVE":
            new["status"] = "VIOLATED"
            return new
        if status == "VIOLATED":
            return new
        if status == "SUSPENDED":
            new["prior"] = "VIOLATED"
            return new
    elif kind == "AVAILABILITY_RESPONSE":
        available = bool(event["available"])
        if status == "SUSPENDED":
            if available:
                new["status"] = state["prior"]
                new["prior"] = None
            return new
        if status in ("CREATED", "DEPLOYING", "ACTIVE", "VIOLATED"):
            if not available:
                new["prior"] = status
                new["status"] = "SUSPENDED"
            return new
    elif kind == "DEPLOYMENT_STATUS":
        report = event["status"]
        if report == "FAILED" and status in ("CREATED", "DEPLOYING",
                                             "ACTIVE", "VIOLATED"):
            new["status"] = "TERMINATED"
            return new
        if report == "IN_PROGRESS":
            if status == "CREATED":
                new["status"] = "DEPLOYING"
                return new
            if status in ("DEPLOYING", "ACTIVE", "VIOLATED"):
                return new
        if report == "COMPLETED":
            if status == "DEPLOYING":
                new["status"] = "ACTIVE"
                return new
            if status == "ACTIVE":
                return new
            if status == "VIOLATED":
                new["status"] = "ACTIVE"
                new["alerts_open"] = 0
                return new
    raise IllegalEvent(f"{kind} in {status}")


def fresh(status="CREATED", prior=None, alerts=0):
    order = {
        "order_id": "ord-x", "provider": "n1", "consumer": "n2",
        "provider_did": "did:6gen:p", "consumer_did": "did:6gen:c",
        "resource_type": "VNF",
    }
    state = sc.new_instance("sc-x", order, {"baseline": "vnf-b2b",
                                            "overrides": {}}, {}, "h", 0)
    state["status"] = status
    state["prior"] = prior
    state["alerts_open"] = alerts
    return state


ALL_EVENTS = (
    [{"kind": "ALERT"}, {"kind": "ALARM"}, {"kind": "OFFERING_VIOLATION"}]
    + [{"kind": "AVAILABILITY_RESPONSE", "available": v}
       for v in (True, False, 1, 0)]
    + [{"kind": "DEPLOYMENT_STATUS", "status": s}
       for s in ("IN_PROGRESS", "COMPLETED", "FAILED", "EXPLODED")]
    + [{"kind": "MYSTERY"}, {}]
)


def states_under_test():
    for status in sc.STATUSES:
        if status == "SUSPENDED":
            for prior in ("CREATED", "DEPLOYING", "ACTIVE", "VIOLATED"):
                yield fresh(status, prior=prior)
        else:
            yield fresh(status)


def test_every_status_event_pair_matches_the_oracle():
    for state in states_under_test():
        for event in ALL_EVENTS:
            try:
                want = fold_oracle(state, event)
            except IllegalEvent:
                with pytest.raises(IllegalEvent):
                    sc.apply_event(state, event)
                continue
            got = sc.apply_event(state, event)
            assert got == want, (state["status"], state["prior"], event)


def test_ten_thousand_random_sequences_fold_identically():
    rng = random.Random(4242)
    for _ in range(10_000):
        state = fresh()
        shadow = fresh()
        applied = 0
        for _ in range(rng.randrange(3, 25)):
            event = rng.choice(ALL_EVENTS)
            try:
                want = fold_oracle(shadow, event)
            except IllegalEvent:
                with pytest.raises(IllegalEvent):
                    sc.apply_event(state, event)
                continue
            state = sc.apply_event(state, event)
            shadow = want
            applied += 1
            # structural invariants along every path
            assert state == shadow
            assert state["alerts_open"] >= 0
            assert (state["prior"] is not None) == (state["status"]
                                                    == "SUSPENDED")
        assert state["event_count"] == applied


def test_terminated_absorbs_everything():
    state = sc.apply_event(fresh(), {"kind": "DEPLOYMENT_STATUS",
                                     "status": "FAILED"})
    assert state["status"] == "TERMINATED"
    for event in ALL_EVENTS:
        with pytest.raises(IllegalEvent):
            sc.apply_event(state, event)


def test_suspension_parks_and_restores_each_status():
    for parked in ("CREATED", "DEPLOYING", "ACTIVE", "VIOLATED"):
        down = sc.apply_event(fresh(parked),
                              {"kind": "AVAILABILITY_RESPONSE",
                               "available": False})
        assert down["status"] == "SUSPENDED" and down["prior"] == parked
        up = sc.apply_event(down, {"kind": "AVAILABILITY_RESPONSE",
                                   "available": True})
        assert up["status"] == parked and up["prior"] is None


def test_violation_during_suspension_survives_the_resume():
    down = sc.apply_event(fresh("ACTIVE"),
                          {"kind": "AVAILABILITY_RESPONSE", "available": False})
    poisoned = sc.apply_event(down, {"kind": "OFFERING_VIOLATION"})
    assert poisoned["status"] == "SUSPENDED"
    up = sc.apply_event(poisoned, {"kind": "AVAILABILITY_RESPONSE",
                                   "available": True})
    assert up["status"] == "VIOLATED"


def test_remediation_heals_and_closes_alerts():
    state = fresh("ACTIVE")
    state = sc.apply_event(state, {"kind": "ALERT"})
    state = sc.apply_event(state, {"kind": "ALERT"})
    state = sc.apply_event(state, {"kind": "ALARM"})
    assert (state["status"], state["alerts_open"]) == ("VIOLATED", 2)
    state = sc.apply_event(state, {"kind": "DEPLOYMENT_STATUS",
                                   "status": "COMPLETED"})
    assert (state["status"], state["alerts_open"]) == ("ACTIVE", 0)


def test_replay_modes():
    events = [
        {"kind": "DEPLOYMENT_STATUS", "status": "IN_PROGRESS"},
        {"kind": "ALARM"},  # illegal while DEPLOYING
        {"kind": "DEPLOYMENT_STATUS", "status": "COMPLETED"},
    ]
    state, skipped = sc.replay(fresh(), events, strict=False)
    assert state["status"] == "ACTIVE" and skipped == 1
    with pytest.raises(IllegalEvent):
        sc.replay(fresh(), events, strict=True)


# -- models ---------------------------------------------------------------------


def test_baselines_ship_and_validate():
    names = list_baselines()
    assert names == ["edgecloud-b2b", "ns-b2b", "slice-b2b", "vnf-b2b",
                     "vnf-b2c"]
    hashes = set()
    for name in names:
        model = load_baseline(name)
        validate_model(model)
        hashes.add(model_hash(model))
    assert len(hashes) == len(names)
    with pytest.raises(UnknownBaseline):
        load_baseline("imaginary")


def test_model_validation_failures():
    model = load_baseline("vnf-b2b")
    broken = dict(model)
    del broken["remedies"]
    with pytest.raises(ModelMismatch):
        validate_model(broken)

    dupe = apply_overrides(model, {})
    dupe["terms"].append(dict(dupe["terms"][0]))
    with pytest.raises(ModelMismatch):
        validate_model(dupe)

    bad_op = apply_overrides(model, {})
    bad_op["terms"][0]["op"] = "EQ"
    with pytest.raises(ModelMismatch):
        validate_model(bad_op)

    bad_section = apply_overrides(model, {})
    bad_section["legal_template"][0] = {"title": "no body"}
    with pytest.raises(ModelMismatch):
        validate_model(bad_section)


def test_overrides_select_terms_by_id():
    model = load_baseline("vnf-b2b")
    out = apply_overrides(model, {"terms.cpu-util.threshold": 75})
    got = {t["term_id"]: t["threshold"] for t in out["terms"]}
    assert got["cpu-util"] == 75
    assert got["mem-util"] == 90.0
    # source model untouched
    assert load_baseline("vnf-b2b")["terms"][0]["threshold"] == 85.0
    assert model["terms"][0]["threshold"] == 85.0


def test_override_type_and_path_guards():
    model = load_baseline("vnf-b2b")
    apply_overrides(model, {"terms.cpu-util.threshold": 75.5})  # int->float ok
    with pytest.raises(OverrideTypeMismatch):
        apply_overrides(model, {"terms.cpu-util.threshold": "high"})
    with pytest.raises(OverrideTypeMismatch):
        apply_overrides(model, {"terms.cpu-util": 5})
    with pytest.raises(NotFound):
        apply_overrides(model, {"terms.no-such-term.threshold": 1})
    with pytest.raises(NotFound):
        apply_overrides(model, {"holograms.enabled": True})


# -- prose ------------------------------------------------------------------------


BINDINGS = {
    "provider_name": "n1", "consumer_name": "n2",
    "provider_did": "did:6gen:aa", "consumer_did": "did:6gen:bb",
    "offering_name": "box", "price_amount": 12, "price_currency": "EUR",
    "price_unit": "hour", "effective_date": "2026-08-16",
}


def test_prose_is_deterministic_and_hashable():
    model = load_baseline("vnf-b2b")
    text1 = render_prose(model, dict(BINDINGS))
    text2 = render_prose(model, dict(reversed(list(BINDINGS.items()))))
    assert text1 == text2
    assert prose_hash(text1) == sha256_hex(text1.encode("utf-8"))
    assert "n1" in text1 and "box" in text1 and "2026-08-16" in text1
    assert "{{" not in text1
    assert "| cpu-util | cpu_utilization | at most 85.0 | mean over 30 s |" in text1


def test_unbound_placeholder_is_loud():
    model = load_baseline("vnf-b2b")
    partial = {k: v for k, v in BINDINGS.items() if k != "consumer_name"}
    with pytest.raises(UnboundPlaceholder):
        render_prose(model, partial)


def test_explicit_bindings_beat_remedies():
    model = load_baseline("vnf-b2b")
    boosted = render_prose(model, dict(BINDINGS, violation_credit_pct=55))
    standard = render_prose(model, dict(BINDINGS))
    assert "55" in boosted and boosted != standard


# -- engine on a live pair -----------------------------------------------------------


@pytest.fixture
def pair():
    sched = Scheduler()
    net = Network(sched, seed=9)
    founding = make_founding(["n1", "n2", "n3"], seed_prefix="sc")
    rts = {}
    for entry in founding:
        cfg = {"node_id": entry["node_id"], "key_seed": entry["key_seed"],
               "founding": founding, "auto_provider": False}
        rts[entry["node_id"]] = NodeRuntime(cfg, sched, net)
    for rt in rts.values():
        rt.start()
    sched.run_until_idle()
    yield sched, rts
    for rt in rts.values():
        rt.stop()


def composed_pair(sched, rts, sla_terms=None):
    oid = rts["n1"].marketplace.create_offering(
        "box", "VNF", {"cores": 4, "ram_gb": 8},
        {"amount": 12, "currency": "EUR"}, sla_terms=sla_terms)
    sched.run_until_idle()
    order_id = rts["n2"].marketplace.create_order(oid)
    sched.run_until_idle()
    sc_id = rts["n1"].contracts.compose(order_id)
    sched.run_until_idle()
    return order_id, sc_id


def test_composition_lands_on_both_parties(pair):
    sched, rts = pair
    order_id, sc_id = composed_pair(sched, rts)
    for side in ("n1", "n2"):
        eng = rts[side].contracts
        state = eng.get_state(sc_id)
        assert state["status"] == "CREATED"
        assert state["order_id"] == order_id
        assert eng.sc_for_order(order_id) == sc_id
    with pytest.raises(NotFound):
        rts["n3"].contracts.get_state(sc_id)
    with pytest.raises(AlreadyComposed):
        rts["n1"].contracts.compose(order_id)


def test_event_chain_folds_identically_on_both_sides(pair):
    sched, rts = pair
    _, sc_id = composed_pair(sched, rts)
    eng = rts["n1"].contracts
    steps = [
        ({"kind": "DEPLOYMENT_STATUS", "status": "IN_PROGRESS"}, "DEPLOYING"),
        ({"kind": "DEPLOYMENT_STATUS", "status": "COMPLETED"}, "ACTIVE"),
        ({"kind": "ALERT", "term_id": "cpu-util"}, "ACTIVE"),
        ({"kind": "ALARM", "term_id": "cpu-util"}, "VIOLATED"),
        ({"kind": "DEPLOYMENT_STATUS", "status": "COMPLETED"}, "ACTIVE"),
    ]
    for event, expect in steps:
        eng.submit_event(sc_id, event)
        sched.run_until_idle()
        a = rts["n1"].contracts.get_state(sc_id)
        b = rts["n2"].contracts.get_state(sc_id)
        assert a == b
        assert a["status"] == expect
    assert a["alerts_open"] == 0
    assert a["event_count"] == len(steps)
    # every event including the composition is on the ledger, both sides
    for side in ("n1", "n2"):
        log = rts[side].contracts.get_events(sc_id)
        assert len(log) == len(steps) + 1
        assert log[0]["kind"] == "COMPOSED"
        assert [e["kind"] for e in log[1:]] == [e["kind"] for e, _ in steps]


def test_illegal_event_rejected_before_it_ships(pair):
    sched, rts = pair
    _, sc_id = composed_pair(sched, rts)
    with pytest.raises(IllegalEvent):
        rts["n1"].contracts.submit_event(sc_id, {"kind": "ALARM"})
    sched.run_until_idle()
    state = rts["n2"].contracts.get_state(sc_id)
    assert state["event_count"] == 0 and state["status"] == "CREATED"


def test_legal_prose_anchored_hash_verifies_everywhere(pair):
    sched, rts = pair
    _, sc_id = composed_pair(sched, rts)
    texts = set()
    for side in ("n1", "n2"):
        doc = rts[side].contracts.legal_prose(sc_id)
        assert doc["hash"] == doc["anchored_hash"]
        texts.add(doc["markdown"])
    assert len(texts) == 1


def test_effective_terms_prefer_the_order_snapshot(pair):
    sched, rts = pair
    custom = [
        {"term_id": "cpu-util", "metric": "cpu_utilization", "op": "LTE",
         "threshold": 70, "kind": "WINDOW_MEAN", "window_s": 10},
        {"term_id": "jitter", "metric": "jitter_ms", "op": "LTE",
         "threshold": 4, "kind": "INSTANT"},
    ]
    _, sc_id = composed_pair(sched, rts, sla_terms=custom)
    terms = {t["term_id"]: t for t in rts["n2"].contracts.effective_terms(sc_id)}
    assert terms["cpu-util"]["threshold"] == 70  # order overrides the model
    assert terms["jitter"]["threshold"] == 4  # order adds a term
    assert terms["mem-util"]["threshold"] == 90.0  # model fills the rest


def test_bindings_come_from_the_order():
    order = {
        "order_id": "ord-abc", "provider": "p1", "consumer": "c1",
        "provider_did": "did:6gen:p", "consumer_did": "did:6gen:c",
        "price": {"amount": 3, "currency": "EUR", "unit": "day"},
        "created_ms": 86_400_000,  # exactly one day into the epoch, UTC
    }
    b = standard_bindings(order, "super-vnf")
    assert b["provider_name"] == "p1"
    assert b["offering_name"] == "super-vnf"
    assert b["price_unit"] == "day"
    assert b["effective_date"] == "1970-01-02"
    assert standard_bindings(dict(order, created_ms=86_399_999),
                             "x")["effective_date"] == "1970-01-01"

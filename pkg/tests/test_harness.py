"""Scenario harness: loading, execution, determinism, failure reporting."""

import json

import pytest

from sixgen.harness import Cluster
from sixgen.harness.runner import (
    ScenarioInvalid,
    load_scenario,
    run_scenario,
    scenario_names,
)

ALL_SCENARIOS = [
    "discovery-intents", "edgecloud-trading", "networkservice-trading",
    "onboarding", "resilience", "slice-trading", "vnf-trading", "xr-e2e",
]


def test_packaged_scenario_names():
    assert scenario_names() == ALL_SCENARIOS


def test_load_scenario_by_name_and_by_path(tmp_path):
    doc = load_scenario("onboarding")
    assert doc["name"] == "onboarding"
    assert isinstance(doc["steps"], list) and doc["steps"]

    path = tmp_path / "own.yaml"
    path.write_text("name: own\nsteps:\n  - {do: settle, ms: 100}\n")
    assert load_scenario(str(path))["name"] == "own"


def test_load_scenario_guards():
    with pytest.raises(ScenarioInvalid):
        load_scenario("no-such-scenario")


def test_load_scenario_needs_steps(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("name: hollow\n")
    with pytest.raises(ScenarioInvalid):
        load_scenario(str(path))


def test_run_scenario_reports_every_step():
    result = run_scenario("networkservice-trading")
    assert result.ok, result.error
    assert result.name == "networkservice-trading"
    assert result.sim_ms > 0
    assert all(step["ok"] for step in result.steps)
    doc = result.to_doc()
    assert doc["ok"] is True
    assert doc["error"] is None
    assert len(doc["steps"]) == len(result.steps)


def test_run_scenario_is_deterministic():
    first = run_scenario("edgecloud-trading").to_doc()
    second = run_scenario("edgecloud-trading").to_doc()
    assert first == second


def test_failing_step_carries_its_index():
    scenario = {
        "name": "fails-at-one",
        "cluster": {"size": 2, "seed": 3},
        "steps": [
            {"do": "settle", "ms": 500},
            {"do": "expect_event", "topic": "market.order",
             "node": "n1", "min_count": 1},
        ],
    }
    result = run_scenario(scenario)
    assert result.ok is False
    assert result.steps[-1]["ok"] is False
    assert result.steps[-1]["index"] == 1
    assert "expect_event" in result.error


def test_unknown_step_verb_fails_cleanly():
    result = run_scenario({
        "name": "bad-verb",
        "cluster": {"size": 2},
        "steps": [{"do": "frobnicate"}],
    })
    assert result.ok is False
    assert "frobnicate" in result.error


VNF_CHARS = {"cores": 2, "ram_gb": 4}
PRICE = {"amount": 12.0, "currency": "EUR", "unit": "month"}


def drive(seed):
    """A fixed trade on a fresh cluster, returning its full transcript."""
    cluster = Cluster(size=3, seed=seed).start()
    try:
        oid = cluster.node("n2").marketplace.create_offering(
            "Drive target", "VNF", dict(VNF_CHARS), dict(PRICE))
        cluster.settle()
        cluster.node("n3").marketplace.create_order(oid)
        cluster.settle()
        cluster.advance(5_000)
        return [
            (e["node"], e["topic"], e["ts_ms"], e["offset"],
             json.dumps(e["data"], sort_keys=True, default=str))
            for e in cluster.transcript
        ]
    finally:
        cluster.stop()


def test_same_seed_gives_identical_transcripts():
    assert drive(21) == drive(21)


def test_transcripts_carry_the_whole_flow():
    transcript = drive(22)
    topics = {t for (_, t, _, _, _) in transcript}
    assert {"market.offering", "market.order", "sc.composed",
            "sc.event"} <= topics


def test_find_matches_nested_fields():
    cluster = Cluster(size=3, seed=9).start()
    try:
        oid = cluster.node("n2").marketplace.create_offering(
            "Findable", "VNF", dict(VNF_CHARS), dict(PRICE))
        cluster.settle()
        order_id = cluster.node("n3").marketplace.create_order(oid)
        cluster.settle()
        # orders ride the private pair channel, so only parties emit them
        assert cluster.find("market.order", node="n1") == []
        hits = cluster.find("market.order", node="n2",
                            **{"order.order_id": order_id})
        assert hits
        assert all(h["data"]["order"]["order_id"] == order_id for h in hits)
        acked = cluster.find("market.order",
                             **{"order.status": "ACKNOWLEDGED"})
        assert any(h["data"]["order"]["order_id"] == order_id for h in acked)
        assert cluster.find("market.order",
                            **{"order.order_id": "ord-absent"}) == []
    finally:
        cluster.stop()

"""Command-line entry points: scdev, sixgen-node, sixgen-harness."""

import json
import socket
import subprocess
import sys
import time
import urllib.request

import pytest
import yaml
from click.testing import CliRunner

from sixgen.contracts import model as model_mod
from sixgen.contracts.toolkit import main as scdev
from sixgen.harness.cli import main as harness
from sixgen.nodecli import main as nodecli


@pytest.fixture
def runner():
    return CliRunner()


# -- scdev ---------------------------------------------------------------------


def test_scdev_list_baselines(runner):
    result = runner.invoke(scdev, ["list-baselines"])
    assert result.exit_code == 0
    names = [line.split()[0] for line in result.output.splitlines()]
    assert names == ["edgecloud-b2b", "ns-b2b", "slice-b2b",
                     "vnf-b2b", "vnf-b2c"]


def test_scdev_show_prints_the_model(runner):
    result = runner.invoke(scdev, ["show", "vnf-b2b"])
    assert result.exit_code == 0
    model = json.loads(result.output)
    assert model["model_id"] == "vnf-b2b"
    assert {t["term_id"] for t in model["terms"]} \
        == {"cpu-util", "mem-util", "availability"}


def test_scdev_new_applies_overrides(runner, tmp_path):
    out = tmp_path / "custom.json"
    result = runner.invoke(scdev, [
        "new", "vnf-b2b", "-o", str(out),
        "--set", "terms.cpu-util.threshold=75",
        "--set", "remedies.violation_credit_pct=15",
    ])
    assert result.exit_code == 0, result.output
    model = json.loads(out.read_text())
    cpu = next(t for t in model["terms"] if t["term_id"] == "cpu-util")
    assert cpu["threshold"] == 75
    assert model["remedies"]["violation_credit_pct"] == 15
    # the hash echoed on write matches the file content
    assert model_mod.model_hash(model)[:16] in result.output


def test_scdev_new_rejects_malformed_assignment(runner, tmp_path):
    result = runner.invoke(scdev, ["new", "vnf-b2b", "-o",
                                   str(tmp_path / "x.json"),
                                   "--set", "nonsense"])
    assert result.exit_code == 2
    assert "PATH=VALUE" in result.output


def test_scdev_validate_and_hash(runner, tmp_path):
    out = tmp_path / "model.json"
    runner.invoke(scdev, ["new", "ns-b2b", "-o", str(out)])
    result = runner.invoke(scdev, ["validate", str(out)])
    assert result.exit_code == 0
    assert "OK model_id=ns-b2b" in result.output

    result = runner.invoke(scdev, ["hash", str(out)])
    assert result.exit_code == 0
    digest = result.output.strip()
    assert len(digest) == 64 and int(digest, 16) >= 0


def test_scdev_prose_renders_bound_text(runner, tmp_path):
    out = tmp_path / "model.json"
    runner.invoke(scdev, ["new", "vnf-b2b", "-o", str(out)])
    result = runner.invoke(scdev, [
        "prose", str(out),
        "--bind", "provider_name=CarrierOne",
        "--bind", "consumer_name=MvnoTwo",
        "--bind", "provider_did=did:example:p",
        "--bind", "consumer_did=did:example:c",
        "--bind", "order_id=ord-1", "--bind", "sc_id=sc-1",
        "--bind", "offering_name=Packet core",
        "--bind", "price_amount=120.0", "--bind", "price_currency=EUR",
        "--bind", "price_unit=month",
        "--bind", "effective_date=2026-01-01",
    ])
    assert result.exit_code == 0, result.output
    assert "CarrierOne" in result.output
    assert "{{" not in result.output


def test_scdev_error_wrapper_exits_nonzero(tmp_path):
    # the console wrapper turns domain errors into exit 1 + stderr line
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"model_id": "nope"}))
    proc = subprocess.run(
        [sys.executable, "-m", "sixgen.contracts.toolkit",
         "validate", str(broken)],
        capture_output=True, text=True, timeout=60)
    assert proc.returncode == 1
    assert "error [" in proc.stderr


# -- sixgen-node ----------------------------------------------------------------------


def test_node_init_config_writes_usable_yaml(runner, tmp_path):
    path = tmp_path / "cluster.yaml"
    result = runner.invoke(nodecli, ["init-config", str(path),
                                     "--size", "3", "--port", "9100"])
    assert result.exit_code == 0
    config = yaml.safe_load(path.read_text())
    assert config["cluster"]["size"] == 3
    assert config["api"]["port"] == 9100


def test_node_keys_are_deterministic(runner):
    first = runner.invoke(nodecli, ["keys", "n7", "--seed-prefix", "demo"])
    second = runner.invoke(nodecli, ["keys", "n7", "--seed-prefix", "demo"])
    assert first.exit_code == 0
    assert first.output == second.output
    doc = yaml.safe_load(first.output)
    assert doc["node_id"] == "n7"
    assert doc["did"].startswith("did:")
    other = runner.invoke(nodecli, ["keys", "n7", "--seed-prefix", "prod"])
    assert yaml.safe_load(other.output)["did"] != doc["did"]


def _free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _get(url, timeout=5):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return json.loads(resp.read())


def test_node_run_serves_http(tmp_path):
    port = _free_port()
    config = tmp_path / "node.yaml"
    config.write_text(yaml.safe_dump({
        "cluster": {"size": 2, "seed_prefix": "clitest"},
        "api": {"host": "127.0.0.1", "port": port},
    }))
    proc = subprocess.Popen(
        [sys.executable, "-m", "sixgen.nodecli", "run", "-c", str(config)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    try:
        deadline = time.monotonic() + 30
        health = None
        while time.monotonic() < deadline:
            if proc.poll() is not None:
                raise AssertionError(
                    f"node exited early:\n{proc.stdout.read()}")
            try:
                health = _get(f"http://127.0.0.1:{port}/healthz")
                break
            except OSError:
                time.sleep(0.2)
        assert health is not None, "node never served /healthz"
        assert health["node_id"] == "n1"
        assert {"identity", "market"} <= set(health["channels"])

        req = urllib.request.Request(
            f"http://127.0.0.1:{port}/offering",
            data=json.dumps({
                "name": "Probe VNF", "resource_type": "VNF",
                "characteristics": {"cores": 2, "ram_gb": 4},
                "price": {"amount": 9.0, "currency": "EUR", "unit": "month"},
            }).encode(), method="POST",
            headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=15) as resp:
            assert resp.status == 201
            oid = json.loads(resp.read())["offering_id"]
        listing = _get(f"http://127.0.0.1:{port}/offering")
        assert oid in [o["offering_id"] for o in listing]
    finally:
        proc.terminate()
        proc.wait(timeout=10)


# -- sixgen-harness ---------------------------------------------------------------


def test_harness_list_names_all_scenarios(runner):
    result = runner.invoke(harness, ["list"])
    assert result.exit_code == 0
    names = [line.split()[0] for line in result.output.splitlines()]
    assert names == [
        "discovery-intents", "edgecloud-trading", "networkservice-trading",
        "onboarding", "resilience", "slice-trading", "vnf-trading", "xr-e2e",
    ]


def test_harness_runs_one_scenario_as_json(runner):
    result = runner.invoke(harness,
                           ["run", "networkservice-trading", "--json"])
    assert result.exit_code == 0, result.output
    docs = json.loads(result.output)
    assert len(docs) == 1
    assert docs[0]["ok"] is True
    assert all(step["ok"] for step in docs[0]["steps"])


def test_harness_runs_scenario_from_a_path(runner, tmp_path):
    # copy a packaged scenario and run it by file path
    from importlib import resources
    text = (resources.files("sixgen.harness") / "scenarios"
            / "networkservice-trading.yaml").read_text(encoding="utf-8")
    path = tmp_path / "copy.yaml"
    path.write_text(text)
    result = runner.invoke(harness, ["run", str(path)])
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output


def test_harness_reports_failing_step(runner, tmp_path):
    scenario = {
        "name": "broken-on-purpose",
        "cluster": {"size": 2, "seed": 3},
        "steps": [
            {"do": "offering", "node": "n1", "name": "Thing",
             "resource_type": "VNF",
             "characteristics": {"cores": 2, "ram_gb": 4},
             "price": {"amount": 10.0, "currency": "EUR", "unit": "month"},
             "as": "thing"},
            {"do": "expect_offering", "offering": "$thing",
             "status": "RETIRED"},
        ],
    }
    path = tmp_path / "broken.yaml"
    path.write_text(yaml.safe_dump(scenario))
    result = runner.invoke(harness, ["run", str(path)])
    assert result.exit_code == 1
    assert "FAIL" in result.output
    assert "step 1" in result.output


def test_harness_rejects_unknown_scenario(runner):
    result = runner.invoke(harness, ["run", "no-such-scenario"])
    assert result.exit_code != 0

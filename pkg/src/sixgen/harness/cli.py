"""`sixgen-harness`: run packaged scenarios and service-level benchmarks."""

import json
import sys

import click

from . import bench as bench_mod
from .runner import load_scenario, run_scenario, scenario_names


@click.group()
def main():
    """Scenario and benchmark harness."""


@main.command("list")
def list_cmd():
    """List packaged scenarios."""
    for name in scenario_names():
        doc = load_scenario(name)
        desc = " ".join((doc.get("description") or "").split())
        click.echo(f"{name:28s} {desc}")


@main.command()
@click.argument("names", nargs=-1)
@click.option("--json", "as_json", is_flag=True, help="Emit JSON results.")
def run(names, as_json):
    """Run scenarios by name or YAML path (default: all packaged ones)."""
    targets = list(names) or scenario_names()
    results = []
    failed = False
    for target in targets:
        if not as_json:
            click.echo(f"== {target}")
        result = run_scenario(target,
                              echo=None if as_json else click.echo)
        results.append(result.to_doc())
        failed = failed or not result.ok
        if not as_json:
            status = "PASS" if result.ok else "FAIL"
            click.echo(f"   {status} ({len(result.steps)} steps, "
                       f"{result.sim_ms} sim ms)")
    if as_json:
        click.echo(json.dumps(results, indent=2, default=str))
    sys.exit(1 if failed else 0)


@main.command("bench")
@click.option("--quick", is_flag=True, help="Shorter runs, rougher numbers.")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON results.")
def bench_cmd(quick, as_json):
    """Measure alarm latency, bandwidth, onboarding, commit scaling."""
    results = bench_mod.run_all(quick=quick)
    if as_json:
        click.echo(json.dumps(results, indent=2))
        return
    alarm = results["alarm_latency"]
    click.echo(f"alarm latency   p50 {alarm['p50_ms']:.3f} ms   "
               f"p99 {alarm['p99_ms']:.3f} ms   "
               f"max {alarm['max_ms']:.3f} ms   "
               f"({alarm['samples']} alarms at {alarm['rate_hz']}/s)")
    bw = results["bandwidth"]
    click.echo(f"bandwidth       mean {bw['mean_bytes_per_s']} B/s/node   "
               f"peak {bw['peak_bytes_per_s']} B/s "
               f"over {bw['sim_seconds']:.0f} sim s")
    onb = results["onboarding"]
    click.echo(f"onboarding      {onb['wall_s']} s wall "
               f"({onb['sim_ms']} sim ms, ok={onb['ok']})")
    sc = results["commit_scaling"]
    medians = "   ".join(f"{k} nodes {v} ms"
                         for k, v in sc["median_ms"].items())
    click.echo(f"commit latency  {medians}   growth {sc['growth']}x")


if __name__ == "__main__":
    main()

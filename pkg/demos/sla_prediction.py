"""Trend alerts fire before the breach they predict.

Feeds a load metric that climbs a straight line toward its contract
threshold and prints the moment the engine extrapolates the crossing
(ALERT) versus the moment the threshold is actually breached (ALARM).

Run with: python3 demos/sla_prediction.py
"""

from sixgen.bus import Bus
from sixgen.runtime import Scheduler
from sixgen.sla import SlaEngine

TERM = {"term_id": "load", "metric": "load", "op": "LTE",
        "threshold": 100, "kind": "INSTANT", "horizon_s": 60}


def main():
    sched = Scheduler()
    log = []
    engine = SlaEngine(sched.clock, Bus(sched),
                       emitter=lambda kind, p: log.append((kind, p)))
    engine.register_sla("ord-demo", [TERM])

    print("load ramps as v = 2t against a LTE 100 contract "
          "(true crossing at t = 50 s)\n")
    for t in range(0, 56):
        engine.ingest("ord-demo", "load", 2.0 * t, ts_ms=t * 1000)
        while log:
            kind, payload = log.pop(0)
            if kind == "ALERT":
                print(f"t={t:>3} s  ALERT  fitted v = "
                      f"{payload['slope_per_s']:.3f}t + "
                      f"{payload['intercept']:.3f}, crossing predicted "
                      f"at t = {payload['predicted_crossing_s']:.1f} s")
            else:
                print(f"t={t:>3} s  ALARM  value {payload['value']:.1f} "
                      f"breached threshold {payload['threshold']}")

    fit = engine.predict("ord-demo", "load")
    print(f"\nfinal fit over {fit['fitted_points']} points: "
          f"slope {fit['slope_per_s']:.3f}/s")


if __name__ == "__main__":
    main()

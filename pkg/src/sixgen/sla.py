"""Service-level assurance: measurement lake, breach detection, prediction.

Every ingested sample lands in an append-only per-(order, metric) series
with timestamps clamped to be monotone. Evaluation happens inline on
ingest, per term of the registered agreement:

  breach      INSTANT compares the sample itself against the threshold;
              WINDOW_MEAN compares the mean over the trailing window.
              Every breaching ingest raises an ALARM; equality with the
              threshold is compliant.

  prediction  when a term is not breached, an ordinary least squares line
              is fitted over the last 60 seconds of samples (at least 5
              points) with time measured in seconds since the stream's
              first sample. If the line crosses the threshold within the
              term's horizon, an ALERT carrying slope, intercept, and the
              predicted crossing time is raised, subject to a 30 second
              per-term cooldown.

Alarms and alerts go to the bus (``sla.alarm``, ``sla.alert``) and to an
optional emitter callback, which the node wires to the agreement event
log. An optional gate callback can silence evaluation while the agreement
is suspended or terminated; samples still land in the lake.
"""

import logging
import math

from .errors import (
    AlreadyRegistered,
    InsufficientData,
    InvalidRange,
    MalformedSample,
    NoTerms,
    NotFound,
)
from .marketplace import validate_sla_terms

log = logging.getLogger(__name__)

FIT_WINDOW_S = 60
MIN_POINTS = 5
ALERT_COOLDOWN_MS = 30_000
DEFAULT_HORIZON_S = 60


def ols_fit(points):
    """Least squares line v = intercept + slope * t over [(t_s, value)]."""
    n = len(points)
    if n < 2:
        raise InsufficientData(f"need 2 points for a fit, have {n}")
    mean_t = sum(p[0] for p in points) / n
    mean_v = sum(p[1] for p in points) / n
    stt = sum((p[0] - mean_t) ** 2 for p in points)
    stv = sum((p[0] - mean_t) * (p[1] - mean_v) for p in points)
    if stt == 0.0:
        raise InsufficientData("all points share one timestamp")
    slope = stv / stt
    return mean_v - slope * mean_t, slope


def _is_breach(op: str, value: float, threshold: float) -> bool:
    if op == "LTE":
        return value > threshold
    return value < threshold


class DataLake:
    """Append-only series store with monotone timestamps."""

    def __init__(self):
        self._series = {}

    def append(self, order_id, metric, ts_ms, value) -> int:
        series = self._series.setdefault((order_id, metric), [])
        if series and ts_ms < series[-1][0]:
            ts_ms = series[-1][0]
        series.append((ts_ms, value))
        return ts_ms

    def series(self, order_id, metric) -> list:
        return self._series.get((order_id, metric), [])

    def metrics_for(self, order_id) -> list:
        return sorted(m for (o, m) in self._series if o == order_id)

    def query(self, order_id, metric, from_ts=None, to_ts=None,
              max_points=None) -> list:
        if from_ts is not None and to_ts is not None and from_ts > to_ts:
            raise InvalidRange(f"from {from_ts} is after to {to_ts}")
        pts = [p for p in self.series(order_id, metric)
               if (from_ts is None or p[0] >= from_ts)
               and (to_ts is None or p[0] <= to_ts)]
        if max_points is not None and max_points > 0 and len(pts) > max_points:
            stride = math.ceil(len(pts) / max_points)
            pts = pts[::stride]
        return [{"ts_ms": t, "value": v} for t, v in pts]


class SlaEngine:
    def __init__(self, clock, bus, emitter=None, gate=None):
        self.clock = clock
        self.bus = bus
        self.emitter = emitter
        self.gate = gate
        self.lake = DataLake()
        self._watches = {}
        self._stream_start = {}

    # -- registration -----------------------------------------------------------

    def register_sla(self, order_id, terms, evaluate=True):
        if order_id in self._watches:
            raise AlreadyRegistered(f"{order_id} is already watched")
        validate_sla_terms(terms)
        if not terms:
            raise NoTerms(f"no terms for {order_id}")
        self._watches[order_id] = {
            "order_id": order_id,
            "terms": {t["term_id"]: dict(t) for t in terms},
            "evaluate": evaluate,
            "registered_ms": self.clock.now_ms(),
            "term_state": {t["term_id"]: {"last_alert_ms": None,
                                          "last_alarm_ms": None,
                                          "breached": False}
                           for t in terms},
        }

    def deregister(self, order_id):
        self._watches.pop(order_id, None)

    def watched(self, order_id) -> bool:
        return order_id in self._watches

    # -- ingest -------------------------------------------------------------------

    def ingest(self, order_id, metric, value, ts_ms=None) -> dict:
        watch = self._watches.get(order_id)
        if watch is None:
            raise NotFound(f"order {order_id} is not registered")
        if not isinstance(value, (int, float)) or isinstance(value, bool) \
                or not math.isfinite(value):
            raise MalformedSample(f"value {value!r} is not a finite number",
                                  field="value")
        if not metric or not isinstance(metric, str):
            raise MalformedSample("metric must be a non-empty string",
                                  field="metric")
        ts = ts_ms if ts_ms is not None else self.clock.now_ms()
        ts = self.lake.append(order_id, metric, ts, float(value))
        self._stream_start.setdefault((order_id, metric), ts)
        out = {"order_id": order_id, "metric": metric, "ts_ms": ts,
               "alarms": [], "alerts": []}
        if not watch["evaluate"]:
            return out
        if self.gate is not None and not self.gate(order_id):
            return out
        for term in watch["terms"].values():
            if term["metric"] != metric:
                continue
            self._evaluate(watch, term, value, ts, out)
        return out

    def _evaluate(self, watch, term, value, ts, out):
        order_id = watch["order_id"]
        state = watch["term_state"][term["term_id"]]
        checked = self._current_level(order_id, term, ts)
        breached = _is_breach(term["op"], checked, term["threshold"])
        state["breached"] = breached
        if breached:
            payload = {
                "order_id": order_id,
                "term_id": term["term_id"],
                "metric": term["metric"],
                "term_kind": term["kind"],
                "op": term["op"],
                "threshold": term["threshold"],
                "value": checked,
                "sample": value,
                "ts_ms": ts,
            }
            state["last_alarm_ms"] = ts
            out["alarms"].append(payload)
            self.bus.publish("sla.alarm", payload)
            if self.emitter:
                self.emitter("ALARM", payload)
            return
        fit = self._predict(order_id, term, ts)
        if fit is None or not fit["crossing_within_horizon"]:
            return
        last = state["last_alert_ms"]
        if last is not None and ts - last < ALERT_COOLDOWN_MS:
            return
        payload = {
            "order_id": order_id,
            "term_id": term["term_id"],
            "metric": term["metric"],
            "op": term["op"],
            "threshold": term["threshold"],
            "slope_per_s": fit["slope_per_s"],
            "intercept": fit["intercept"],
            "predicted_crossing_s": fit["predicted_crossing_s"],
            "horizon_s": fit["horizon_s"],
            "ts_ms": ts,
        }
        state["last_alert_ms"] = ts
        out["alerts"].append(payload)
        self.bus.publish("sla.alert", payload)
        if self.emitter:
            self.emitter("ALERT", payload)

    def _current_level(self, order_id, term, now_ms) -> float:
        series = self.lake.series(order_id, term["metric"])
        if term["kind"] == "INSTANT":
            return series[-1][1]
        window_ms = term["window_s"] * 1000
        recent = [v for t, v in series if t >= now_ms - window_ms]
        return sum(recent) / len(recent)

    def _predict(self, order_id, term, now_ms):
        series = self.lake.series(order_id, term["metric"])
        if not series:
            return None
        start = self._stream_start[(order_id, term["metric"])]
        window_ms = FIT_WINDOW_S * 1000
        pts = [((t - start) / 1000.0, v) for t, v in series
               if t >= now_ms - window_ms]
        if len(pts) < MIN_POINTS:
            return None
        try:
            intercept, slope = ols_fit(pts)
        except InsufficientData:
            return None
        now_s = (now_ms - start) / 1000.0
        horizon_s = term.get("horizon_s", DEFAULT_HORIZON_S)
        # Only a trend moving toward the threshold can cross it.
        moving_toward = slope > 0 if term["op"] == "LTE" else slope < 0
        crossing_s = None
        within = False
        if moving_toward and slope != 0:
            crossing_s = (term["threshold"] - intercept) / slope
            within = now_s < crossing_s <= now_s + horizon_s
        return {
            "term_id": term["term_id"],
            "slope_per_s": slope,
            "intercept": intercept,
            "predicted_crossing_s": crossing_s,
            "crossing_within_horizon": within,
            "horizon_s": horizon_s,
            "fitted_points": len(pts),
            "now_s": now_s,
        }

    # -- queries ----------------------------------------------------------------------

    def predict(self, order_id, term_id) -> dict:
        watch = self._watches.get(order_id)
        if watch is None:
            raise NotFound(f"order {order_id} is not registered")
        term = watch["terms"].get(term_id)
        if term is None:
            raise NotFound(f"no term {term_id} on {order_id}")
        fit = self._predict(order_id, term, self.clock.now_ms())
        if fit is None:
            raise InsufficientData(
                f"need {MIN_POINTS} points in the last {FIT_WINDOW_S}s")
        return fit

    def status(self, order_id) -> dict:
        watch = self._watches.get(order_id)
        if watch is None:
            raise NotFound(f"order {order_id} is not registered")
        now = self.clock.now_ms()
        terms = []
        for term in watch["terms"].values():
            state = watch["term_state"][term["term_id"]]
            series = self.lake.series(order_id, term["metric"])
            entry = {
                **term,
                "breached": state["breached"],
                "last_alarm_ms": state["last_alarm_ms"],
                "last_alert_ms": state["last_alert_ms"],
                "samples": len(series),
            }
            if series:
                entry["latest"] = {"ts_ms": series[-1][0],
                                   "value": series[-1][1]}
                entry["current_level"] = self._current_level(order_id, term, now)
                fit = self._predict(order_id, term, now)
                if fit is not None:
                    entry["prediction"] = fit
            terms.append(entry)
        terms.sort(key=lambda t: t["term_id"])
        return {
            "order_id": order_id,
            "registered_ms": watch["registered_ms"],
            "evaluate": watch["evaluate"],
            "terms": terms,
        }

    def query_lake(self, order_id, metric, from_ts=None, to_ts=None,
                   max_points=None) -> list:
        return self.lake.query(order_id, metric, from_ts, to_ts, max_points)

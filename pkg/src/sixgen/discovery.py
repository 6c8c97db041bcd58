"""Offer-space clustering and intent-based discovery.

Offerings mix quantities (cores, latency, price) with labels (resource
type, coverage), so the feature space is built the way factor analysis of
mixed data prescribes: quantities are z-scored; each label level becomes an
indicator column scaled by one over the square root of the level's
proportion, then centered. The combined matrix is projected onto its top
singular directions, and offers are clustered there with k-means++
(seeded, ties to the lowest index, empty clusters reseeded from the
farthest point).

Intents are plain text parsed by a fixed rule grammar (documented in
docs/intent-grammar.md); there is nothing probabilistic in the path from
text to constraints. Discovery resolves the intent to the nearest few
clusters, hard-filters their members against the constraints, and ranks
what survives by the intent's soft preferences, then price. A fallback
flag widens the candidate set to the whole corpus, which is the oracle the
pruned path is measured against.
"""

import math
import re

import numpy as np

from .errors import (
    CorpusTooSmall,
    EmptyIntent,
    ModelNotFitted,
    NoActionableTerms,
)

SHIFT_TOL = 1e-6
MAX_ITER = 300
RESTARTS = 8
VARIANCE_TARGET = 0.85

_ABSENT = "__absent__"


# -- feature extraction ---------------------------------------------------------

def _raw_features(offering):
    numeric = {}
    labels = {"resource_type": offering["resource_type"]}
    for name, value in offering.get("characteristics", {}).items():
        if isinstance(value, bool):
            continue
        if isinstance(value, (int, float)):
            numeric[name] = float(value)
        elif isinstance(value, str):
            labels[name] = value
    numeric["price_amount"] = float(offering["price"]["amount"])
    return numeric, labels


class OfferSpace:
    """Fitted projection plus centroids; everything needed to place a new
    offer or an intent into the same coordinates."""

    def __init__(self, numeric_cols, numeric_means, numeric_stds, dropped,
                 cat_cols, cat_scale, cat_center, basis, explained, centroids,
                 labels, offering_ids, k, d, seed):
        self.numeric_cols = numeric_cols
        self.numeric_means = numeric_means
        self.numeric_stds = numeric_stds
        self.dropped = dropped
        self.cat_cols = cat_cols  # [(field, level)]
        self.cat_scale = cat_scale
        self.cat_center = cat_center
        self.basis = basis
        self.explained = explained
        self.centroids = centroids
        self.labels = labels
        self.offering_ids = offering_ids
        self.k = k
        self.d = d
        self.seed = seed

    def describe(self) -> dict:
        sizes = [int((self.labels == c).sum()) for c in range(self.k)]
        return {
            "k": self.k,
            "d": self.d,
            "seed": self.seed,
            "n": len(self.offering_ids),
            "explained_variance": round(float(self.explained), 6),
            "cluster_sizes": sizes,
            "numeric_features": list(self.numeric_cols),
            "dropped_features": list(self.dropped),
            "label_features": sorted({f for f, _ in self.cat_cols}),
        }

    # -- transform ---------------------------------------------------------------

    def _design_row(self, numeric, labels):
        row = np.zeros(len(self.numeric_cols) + len(self.cat_cols))
        for j, col in enumerate(self.numeric_cols):
            value = numeric.get(col)
            if value is None:
                row[j] = 0.0  # imputed to the column mean
            else:
                row[j] = (value - self.numeric_means[j]) / self.numeric_stds[j]
        base = len(self.numeric_cols)
        for j, (field, level) in enumerate(self.cat_cols):
            hit = labels.get(field) == level
            raw = self.cat_scale[j] if hit else 0.0
            row[base + j] = raw - self.cat_center[j]
        return row

    def project(self, numeric, labels) -> np.ndarray:
        return self._design_row(numeric, labels) @ self.basis

    def project_offering(self, offering) -> np.ndarray:
        numeric, labels = _raw_features(offering)
        return self.project(numeric, labels)


def fit_clusters(offerings, k=None, d=None, seed=0) -> OfferSpace:
    offerings = list(offerings)
    n = len(offerings)
    if n < 2:
        raise CorpusTooSmall(f"need at least 2 offerings, have {n}")
    if k is None:
        k = max(2, int(round(math.sqrt(n / 2))))
    if k > n:
        raise CorpusTooSmall(f"k={k} exceeds corpus size {n}")

    rows = [_raw_features(o) for o in offerings]
    numeric_cols = sorted({name for numeric, _ in rows for name in numeric})
    cat_fields = sorted({field for _, labels in rows for field in labels})

    # Numeric block: impute with the column mean, z-score, drop constants.
    raw = np.full((n, len(numeric_cols)), np.nan)
    for i, (numeric, _) in enumerate(rows):
        for j, col in enumerate(numeric_cols):
            if col in numeric:
                raw[i, j] = numeric[col]
    means = np.nanmean(raw, axis=0)
    filled = np.where(np.isnan(raw), means, raw)
    stds = filled.std(axis=0)
    keep = stds > 0
    dropped = [(numeric_cols[j], "constant across the corpus")
               for j in range(len(numeric_cols)) if not keep[j]]
    numeric_cols = [c for j, c in enumerate(numeric_cols) if keep[j]]
    means = means[keep]
    stds = stds[keep]
    numeric_block = (filled[:, keep] - means) / stds

    # Label block: indicators scaled by 1/sqrt(level proportion), centered.
    cat_cols = []
    for field in cat_fields:
        levels = sorted({labels.get(field, _ABSENT) for _, labels in rows})
        cat_cols.extend((field, level) for level in levels)
    indicator = np.zeros((n, len(cat_cols)))
    for i, (_, labels) in enumerate(rows):
        for j, (field, level) in enumerate(cat_cols):
            if labels.get(field, _ABSENT) == level:
                indicator[i, j] = 1.0
    props = indicator.mean(axis=0)
    scale = 1.0 / np.sqrt(np.where(props > 0, props, 1.0))
    scaled = indicator * scale
    center = scaled.mean(axis=0)
    cat_block = scaled - center

    design = np.hstack([numeric_block, cat_block])
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    total = float((s ** 2).sum())
    if d is None:
        if total == 0:
            d = 2
        else:
            cumulative = np.cumsum(s ** 2) / total
            d = int(np.searchsorted(cumulative, VARIANCE_TARGET) + 1)
            d = max(2, d)
    d = min(d, design.shape[1], n)
    basis = vt[:d].T
    explained = float((s[:d] ** 2).sum() / total) if total else 1.0
    points = design @ basis

    centroids, labels_arr = _kmeans(points, k, seed)
    return OfferSpace(
        numeric_cols=numeric_cols,
        numeric_means=means,
        numeric_stds=stds,
        dropped=dropped,
        cat_cols=cat_cols,
        cat_scale=scale,
        cat_center=center,
        basis=basis,
        explained=explained,
        centroids=centroids,
        labels=labels_arr,
        offering_ids=[o["offering_id"] for o in offerings],
        k=k,
        d=d,
        seed=seed,
    )


def _kmeans(points, k, seed):
    # A single Lloyd run can stall in a local optimum; keep the lowest-inertia
    # solution over a fixed number of seeded restarts.
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(RESTARTS):
        centroids, labels = _kmeans_once(points, k, rng)
        inertia = float(
            ((points - centroids[labels]) ** 2).sum())
        if best is None or inertia < best[0]:
            best = (inertia, centroids, labels)
    return best[1], best[2]


def _kmeans_once(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[int(rng.integers(n))]
    for c in range(1, k):
        d2 = np.min(
            ((points[:, None, :] - centroids[None, :c, :]) ** 2).sum(axis=2),
            axis=1)
        total = float(d2.sum())
        if total == 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[c] = points[idx]

    labels = np.zeros(n, dtype=int)
    for _ in range(MAX_ITER):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:
                # Reseed an empty cluster from the point worst served now.
                worst = int(dists[np.arange(n), labels].argmax())
                new_centroids[c] = points[worst]
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < SHIFT_TOL:
            break
    dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = dists.argmin(axis=1)
    return centroids, labels


def classify_offer(space: OfferSpace, offering) -> int:
    if space is None:
        raise ModelNotFitted("fit the offer space first")
    point = space.project_offering(offering)
    dists = ((space.centroids - point) ** 2).sum(axis=1)
    return int(dists.argmin())


# -- intent grammar ---------------------------------------------------------------

RESOURCE_WORDS = [
    ("network service", "NETWORK_SERVICE"),
    ("edge cloud", "EDGE_CLOUD"),
    ("edge", "EDGE_CLOUD"),
    ("slice", "SLICE"),
    ("vnf", "VNF"),
    ("network function", "VNF"),
    ("ran", "RAN"),
    ("radio", "RAN"),
]

# metric lexicon: pattern -> feature name; order matters, first match wins.
METRIC_WORDS = [
    (r"(?:v?cpus?|cores?)", "cores"),
    (r"(?:gb\s+(?:of\s+)?ram|ram|memory)", "ram_gb"),
    (r"(?:gb\s+(?:of\s+)?(?:storage|disk)|storage|disk)", "storage_gb"),
    (r"(?:ms(?:\s+(?:of\s+)?latency)?|latency)", "latency_ms"),
    (r"(?:mbps|throughput)", "throughput_mbps"),
    (r"(?:mhz|bandwidth)", "bandwidth_mhz"),
    (r"components?", "component_count"),
    (r"(?:eur(?:os?)?|price)", "price_amount"),
]

# Bare quantities lean in the metric's natural direction.
MORE_IS_BETTER = {"cores", "ram_gb", "storage_gb", "throughput_mbps",
                  "bandwidth_mhz", "component_count"}

_GTE_WORDS = r"(?:at\s+least|minimum(?:\s+of)?|no\s+less\s+than|>=|more\s+than|over)"
_LTE_WORDS = r"(?:at\s+most|under|below|up\s+to|no\s+more\s+than|<=|less\s+than|within)"
_NUM = r"(?P<num>\d+(?:\.\d+)?)"

SOFT_WORDS = [
    (r"cheap(?:est)?|lowest\s+price", ("price_amount", "asc")),
    (r"fast(?:est)?|lowest\s+latency", ("latency_ms", "asc")),
    (r"highest\s+throughput|most\s+throughput", ("throughput_mbps", "desc")),
]

_COVERAGE = re.compile(
    r"(?:coverage\s+|in\s+an?\s+|in\s+)(urban|rural|national|regional)\b")
_BAND = re.compile(r"band\s+(n\d+)\b")


def _metric_pattern():
    alternatives = "|".join(f"(?P<m{i}>{pat})"
                            for i, (pat, _) in enumerate(METRIC_WORDS))
    return alternatives


def _matched_metric(match):
    for i, (_, name) in enumerate(METRIC_WORDS):
        if match.group(f"m{i}"):
            return name
    return None


_CONSTRAINT_RES = [
    # "at least 8 cores" / "under 20 ms latency"
    re.compile(rf"(?P<dir_gte>{_GTE_WORDS})\s+{_NUM}\s*(?:{_metric_pattern()})"),
    re.compile(rf"(?P<dir_lte>{_LTE_WORDS})\s+{_NUM}\s*(?:{_metric_pattern()})"),
    # "8 cores or more", "20 ms or less"
    re.compile(rf"{_NUM}\s*(?:{_metric_pattern()})\s+or\s+(?P<tail>more|less)"),
    # bare "8 cores"
    re.compile(rf"{_NUM}\s*(?:{_metric_pattern()})"),
]


def parse_intent(text: str) -> dict:
    """Parse free text into constraints by fixed rules; no scoring, no guesses."""
    if not text or not text.strip():
        raise EmptyIntent("empty intent text")
    lowered = " ".join(text.lower().split())
    intent = {"text": text, "resource_type": None, "hard": [],
              "labels": {}, "soft": []}

    for word, rtype in RESOURCE_WORDS:
        if re.search(rf"\b{re.escape(word)}\b", lowered):
            intent["resource_type"] = rtype
            break

    cover = _COVERAGE.search(lowered)
    if cover:
        intent["labels"]["coverage"] = cover.group(1)
    band = _BAND.search(lowered)
    if band:
        intent["labels"]["operating_band"] = band.group(1)

    for pattern, pref in SOFT_WORDS:
        if re.search(rf"\b(?:{pattern})\b", lowered):
            intent["soft"].append({"field": pref[0], "order": pref[1]})

    seen = set()
    consumed = []
    for rx in _CONSTRAINT_RES:
        for match in rx.finditer(lowered):
            span = match.span()
            if any(s < span[1] and span[0] < e for s, e in consumed):
                continue  # an earlier, more specific rule took this text
            metric = _matched_metric(match)
            if metric is None or metric in seen:
                continue
            value = float(match.group("num"))
            groups = match.groupdict()
            if groups.get("dir_gte"):
                op = "GTE"
            elif groups.get("dir_lte"):
                op = "LTE"
            elif groups.get("tail"):
                op = "GTE" if groups["tail"] == "more" else "LTE"
            else:
                op = "GTE" if metric in MORE_IS_BETTER else "LTE"
            intent["hard"].append({"field": metric, "op": op, "value": value})
            seen.add(metric)
            consumed.append(span)
    intent["hard"].sort(key=lambda h: h["field"])
    return intent


def _intent_features(intent):
    numeric = {h["field"]: h["value"] for h in intent["hard"]}
    labels = dict(intent["labels"])
    if intent["resource_type"]:
        labels["resource_type"] = intent["resource_type"]
    return numeric, labels


def resolve_clusters(space: OfferSpace, intent) -> list:
    """Rank clusters by closeness to the intent; scores normalized to [0,1]."""
    if space is None:
        raise ModelNotFitted("fit the offer space first")
    numeric, labels = _intent_features(intent)
    point = space.project(numeric, labels)
    dists = np.sqrt(((space.centroids - point) ** 2).sum(axis=1))
    scores = 1.0 / (1.0 + dists)
    top = float(scores.max())
    if top > 0:
        scores = scores / top
    ranked = sorted(range(space.k), key=lambda c: (-scores[c], c))
    return [{"cluster": c,
             "score": float(scores[c]),
             "size": int((space.labels == c).sum())}
            for c in ranked]


# -- discovery --------------------------------------------------------------------

def _offer_value(offering, field):
    if field == "price_amount":
        return offering["price"]["amount"]
    return offering.get("characteristics", {}).get(field)


def _satisfies(offering, intent) -> bool:
    if intent["resource_type"] and \
            offering["resource_type"] != intent["resource_type"]:
        return False
    for field, label in intent["labels"].items():
        value = _offer_value(offering, field)
        if not isinstance(value, str) or value.lower() != label.lower():
            return False
    for term in intent["hard"]:
        value = _offer_value(offering, term["field"])
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return False
        if term["op"] == "GTE" and value < term["value"]:
            return False
        if term["op"] == "LTE" and value > term["value"]:
            return False
    return True


def _rank(results, intent) -> list:
    def sort_key(offering):
        key = []
        for pref in intent["soft"]:
            value = _offer_value(offering, pref["field"])
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                value = math.inf if pref["order"] == "asc" else -math.inf
            key.append(value if pref["order"] == "asc" else -value)
        key.append(offering["price"]["amount"])
        key.append(offering["offering_id"])
        return tuple(key)

    return sorted(results, key=sort_key)


def discover(space, offerings, text, top_m=3, fallback=False) -> dict:
    intent = parse_intent(text)
    if not intent["hard"] and not intent["resource_type"] \
            and not intent["labels"] and not intent["soft"]:
        raise NoActionableTerms(f"nothing actionable in {text!r}")
    live = [o for o in offerings if o.get("status", "ACTIVE") == "ACTIVE"]
    pruned = False
    clusters = None
    if fallback or space is None:
        candidates = live
    else:
        ranked = resolve_clusters(space, intent)
        chosen = {entry["cluster"] for entry in ranked[:top_m]}
        clusters = [entry for entry in ranked if entry["cluster"] in chosen]
        candidates = [o for o in live
                      if classify_offer(space, o) in chosen]
        pruned = True
    results = _rank([o for o in candidates if _satisfies(o, intent)], intent)
    return {
        "intent": intent,
        "pruned": pruned,
        "clusters": clusters,
        "candidates_considered": len(candidates),
        "results": results,
    }

"""Agreement model handling.

A model is a JSON document: identification, the default service-level
terms for its resource type, remedies, and a legal template whose
placeholders are bound at composition time. Baselines ship with the
package; `apply_overrides` specializes one with dotted-path assignments
(for example ``terms.cpu-util.threshold=75``), where a term path segment
selects by ``term_id``. Overrides may change values but never the type of
what they replace.
"""

import json
from importlib import resources

from ..canon import doc_hash
from ..errors import (
    ModelMismatch,
    NotFound,
    OverrideTypeMismatch,
    UnknownBaseline,
)

REQUIRED_TOP = ("model_id", "version", "name", "resource_type", "kind",
                "terms", "remedies", "legal_template")

TERM_FIELDS = ("term_id", "metric", "op", "threshold", "kind")


def _baseline_root():
    return resources.files("sixgen.contracts").joinpath("baselines")


def list_baselines() -> list:
    names = []
    for entry in _baseline_root().iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-len(".json")])
    return sorted(names)


def load_baseline(name: str) -> dict:
    path = _baseline_root().joinpath(name + ".json")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UnknownBaseline(
            f"no baseline {name!r}; have {', '.join(list_baselines())}"
        ) from None


def validate_model(model: dict):
    for field in REQUIRED_TOP:
        if field not in model:
            raise ModelMismatch(f"model missing {field}", field=field)
    seen = set()
    for term in model["terms"]:
        for field in TERM_FIELDS:
            if field not in term:
                raise ModelMismatch(f"term missing {field}", field="terms")
        if term["term_id"] in seen:
            raise ModelMismatch(f"duplicate term_id {term['term_id']}",
                                field="terms")
        seen.add(term["term_id"])
        if term["op"] not in ("LTE", "GTE"):
            raise ModelMismatch(f"bad op {term['op']}", field="terms")
        if term["kind"] not in ("INSTANT", "WINDOW_MEAN"):
            raise ModelMismatch(f"bad kind {term['kind']}", field="terms")
    for section in model["legal_template"]:
        if "title" not in section or "body" not in section:
            raise ModelMismatch("legal sections need title and body",
                                field="legal_template")


def model_hash(model: dict) -> str:
    return doc_hash(model)


def _resolve_parent(model, path):
    """Walk to the container holding the last path segment."""
    parts = path.split(".")
    node = model
    for part in parts[:-1]:
        if isinstance(node, list):
            match = [t for t in node
                     if isinstance(t, dict) and t.get("term_id") == part]
            if not match:
                raise NotFound(f"no list entry {part!r} in override path {path}")
            node = match[0]
        elif isinstance(node, dict):
            if part not in node:
                raise NotFound(f"no field {part!r} in override path {path}")
            node = node[part]
        else:
            raise NotFound(f"path {path} descends into a scalar")
    return node, parts[-1]


def apply_overrides(model: dict, overrides: dict) -> dict:
    out = json.loads(json.dumps(model))
    for path in sorted(overrides):
        value = overrides[path]
        node, leaf = _resolve_parent(out, path)
        if isinstance(node, list):
            match = [t for t in node
                     if isinstance(t, dict) and t.get("term_id") == leaf]
            if not match:
                raise NotFound(f"no list entry {leaf!r} in override path {path}")
            raise OverrideTypeMismatch(
                f"override path {path} selects a whole term; set one field")
        if leaf not in node:
            raise NotFound(f"no field {leaf!r} in override path {path}")
        old = node[leaf]
        same_number = (isinstance(old, (int, float)) and not isinstance(old, bool)
                       and isinstance(value, (int, float))
                       and not isinstance(value, bool))
        if type(old) is not type(value) and not same_number:
            raise OverrideTypeMismatch(
                f"{path} is {type(old).__name__}, got {type(value).__name__}")
        node[leaf] = value
    return out

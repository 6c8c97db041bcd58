"""Deterministic legal prose.

The human-readable agreement is markdown rendered from the model's legal
template and a binding map. Rendering the same model with the same bindings
yields byte-identical text, so its hash can be anchored in the event log
and re-verified by either party at any time.
"""

import re

from ..canon import sha256_hex
from ..errors import UnboundPlaceholder

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")

_OP_WORDS = {"LTE": "at most", "GTE": "at least"}


def _terms_table(terms) -> str:
    lines = [
        "| Term | Metric | Objective | Evaluation |",
        "| --- | --- | --- | --- |",
    ]
    for term in terms:
        objective = f"{_OP_WORDS[term['op']]} {term['threshold']}"
        if term["kind"] == "WINDOW_MEAN":
            evaluation = f"mean over {term['window_s']} s"
        else:
            evaluation = "every sample"
        lines.append(f"| {term['term_id']} | {term['metric']} "
                     f"| {objective} | {evaluation} |")
    return "\n".join(lines)


def _substitute(text: str, bindings: dict, missing: set) -> str:
    def repl(match):
        name = match.group(1)
        if name not in bindings:
            missing.add(name)
            return match.group(0)
        return str(bindings[name])

    return _PLACEHOLDER.sub(repl, text)


def render_prose(model: dict, bindings: dict) -> str:
    # Remedies are part of the model and bind themselves; explicit bindings win.
    bindings = {**model.get("remedies", {}), **bindings}
    missing = set()
    parts = [
        f"# Service agreement: {model['name']}",
        "",
        f"Model `{model['model_id']}` version {model['version']}, "
        f"resource type {model['resource_type']}.",
        "",
    ]
    for section in model["legal_template"]:
        parts.append(f"## {_substitute(section['title'], bindings, missing)}")
        parts.append("")
        parts.append(_substitute(section["body"], bindings, missing))
        parts.append("")
    parts.append("## Service level terms")
    parts.append("")
    parts.append(_terms_table(model["terms"]))
    parts.append("")
    if missing:
        raise UnboundPlaceholder("unbound placeholders: "
                                 + ", ".join(sorted(missing)))
    return "\n".join(parts)


def prose_hash(text: str) -> str:
    return sha256_hex(text.encode("utf-8"))

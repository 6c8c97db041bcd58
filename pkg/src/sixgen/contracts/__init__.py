"""Smart-contract layer: machine-readable agreement models, a pure status
state machine folded over an event log, deterministic legal prose, and the
`scdev` authoring toolkit."""

from .model import load_baseline, list_baselines, apply_overrides, \
    validate_model, model_hash
from .sc import STATUSES, EVENT_KINDS, TRANSITIONS, new_instance, \
    apply_event, replay
from .prose import render_prose, prose_hash
from .engine import ContractsEngine

__all__ = [
    "load_baseline", "list_baselines", "apply_overrides", "validate_model",
    "model_hash", "STATUSES", "EVENT_KINDS", "TRANSITIONS", "new_instance",
    "apply_event", "replay", "render_prose", "prose_hash", "ContractsEngine",
]

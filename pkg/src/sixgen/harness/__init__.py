from .runner import Cluster, ScenarioResult, StepFailed, load_scenario, run_scenario, scenario_names

__all__ = [
    "Cluster",
    "ScenarioResult",
    "StepFailed",
    "load_scenario",
    "run_scenario",
    "scenario_names",
]

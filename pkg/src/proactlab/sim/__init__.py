"""Deterministic discrete-event simulation of the drone-network blockchain:
engine, network and energy models, agents, workloads, attacks, and metrics."""

from .scenario import ScenarioConfig, default_config, run  # noqa: F401

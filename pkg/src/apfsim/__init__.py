"""Shunt active power filter simulator comparing EMD-augmented and plain
modified p-q control on a three-phase four-wire system."""

from .control import StrategyKind
from .emd import EmdConfig, ImfSet, decompose
from .plant import ScenarioConfig, SimulationTrace, simulate

__all__ = ["EmdConfig", "ImfSet", "ScenarioConfig", "SimulationTrace", "StrategyKind",
           "decompose", "simulate"]

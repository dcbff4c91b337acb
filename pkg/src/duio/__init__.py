"""Distributed unknown-input observers: existence checks, gain synthesis,
certification and simulation over fixed, switching and directed networks."""

from .errors import (
    BlowUpError,
    DesignError,
    DuioError,
    GraphError,
    LinalgError,
    ScenarioError,
    SimulationError,
)
from .graph import SwitchingSchedule, Topology
from .model import DesignCertificate, NodeGains, ObserverDesign, SystemModel

__version__ = "0.1.0"

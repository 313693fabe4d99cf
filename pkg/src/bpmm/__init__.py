"""Back-pressure scheduling with SDM/SDMA for mmWave relay networks."""
from .channel import LinkState, RadioParams
from .network import Flow, Node, Topology, generate_drop, validate
from .power import PowerPolicy, conditional_weight, waterfill
from .schedulers import Schedule, SchedulerKind, audit_schedule
from .sim import SimConfig, run

__version__ = "0.1.0"

__all__ = [
    "Flow", "LinkState", "Node", "PowerPolicy", "RadioParams", "Schedule", "SchedulerKind", "SimConfig",
    "Topology", "audit_schedule", "conditional_weight", "generate_drop", "run", "validate", "waterfill",
]

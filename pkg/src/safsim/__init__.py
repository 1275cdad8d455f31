"""Energy-conserving simulation of radio-network protocols."""

from .engine import DeliveryPolicy, EnergyLedger, Transcript, run
from .graph import Graph, Partition, apsp, build_graph, quotient

__version__ = "0.1.0"

__all__ = ["DeliveryPolicy", "EnergyLedger", "Graph", "Partition", "Transcript", "apsp",
           "build_graph", "quotient", "run", "__version__"]

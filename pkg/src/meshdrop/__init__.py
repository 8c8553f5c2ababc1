"""Mesh-network comms stack and simulator for intermittently connected
multi-robot exploration: propagation modeling, bottleneck-SNR routing, a
disruption-tolerant prioritized transfer protocol, comms-aware autonomy
behaviors, and a deterministic discrete-event simulator tying them together.
"""

__version__ = "0.1.0"

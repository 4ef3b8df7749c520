"""circuitlit: an offline-testable literature assistant for circuit design.

Hybrid keyword + semantic retrieval over paper bundles, a tool-using
reasoning loop for question answering, schematic-to-netlist extraction, and
an evaluation harness with a cost/latency model.
"""

__version__ = "0.1.0"

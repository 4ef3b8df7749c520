"""Schematic image + component detections -> SPICE netlist."""

from .extract import (
    ComponentDetection,
    Netlist,
    NetlistConfig,
    NetlistLine,
    Node,
    TerminalAssignment,
    assign_node_ids,
    emit_netlist,
    generate,
    load_detections,
    map_terminals,
    parse_netlist,
    terminal_count,
    validate_nodes,
)
from .raster import (
    LABELING_BACKEND,
    Region,
    binarize,
    connected_components,
    label_pixels,
    mask_components,
    read_pgm,
    region_stats,
    write_pgm,
)

__all__ = [
    "ComponentDetection",
    "Netlist",
    "NetlistConfig",
    "NetlistLine",
    "Node",
    "TerminalAssignment",
    "Region",
    "LABELING_BACKEND",
    "assign_node_ids",
    "binarize",
    "connected_components",
    "emit_netlist",
    "generate",
    "label_pixels",
    "load_detections",
    "map_terminals",
    "mask_components",
    "parse_netlist",
    "read_pgm",
    "region_stats",
    "terminal_count",
    "validate_nodes",
    "write_pgm",
]

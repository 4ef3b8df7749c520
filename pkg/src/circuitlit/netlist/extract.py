"""Graph stage of the schematic pipeline: detections + wire regions in,
SPICE netlist out.

A wire region becomes an electrical node only if it touches the edge band of
at least two distinct components; everything else (text, noise) is dropped.
Regions touching any ground symbol are clustered into node 0. Terminals are
read off by contact side: two-terminal parts list the left/top contact
first, transistors list drain/gate/source from the top/left/bottom contacts
(a convention, recorded in the emitted header).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import NoComponents
from .raster import (
    Region,
    binarize,
    label_pixels,
    mask_components,
    read_pgm,
    region_stats,
)

TWO_TERMINAL = ("resistor", "capacitor", "inductor", "diode", "vsource", "isource")
THREE_TERMINAL = ("nmos", "pmos", "npn", "pnp")

PREFIXES = {
    "resistor": "R",
    "capacitor": "C",
    "inductor": "L",
    "nmos": "M",
    "pmos": "M",
    "npn": "Q",
    "pnp": "Q",
    "diode": "D",
    "vsource": "V",
    "isource": "I",
    "opamp": "X",
}

SIDES = ("left", "right", "top", "bottom")


@dataclass(frozen=True)
class NetlistConfig:
    threshold: int = 128
    dilation_px: int = 2
    band_px: int = 3
    connectivity: int = 8
    opamp_terminals: int = 3
    # Contact-side order for 3-terminal devices: drain, gate, source.
    mos_side_order: tuple[str, str, str] = ("top", "left", "bottom")


@dataclass(frozen=True)
class ComponentDetection:
    det_id: str
    label: str
    bbox: tuple[int, int, int, int]  # half-open (x0, y0, x1, y1)
    confidence: float = 1.0

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"{self.det_id}: degenerate bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"{self.det_id}: confidence out of [0,1]")


def terminal_count(label: str, cfg: NetlistConfig = NetlistConfig()) -> int:
    if label == "ground":
        return 1
    if label in TWO_TERMINAL:
        return 2
    if label in THREE_TERMINAL:
        return 3
    if label == "opamp":
        return cfg.opamp_terminals
    return 2


@dataclass(frozen=True)
class Node:
    node_id: int
    regions: frozenset[int]
    is_ground: bool = False


@dataclass(frozen=True)
class TerminalAssignment:
    det_id: str
    terminals: tuple[int, ...]
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class NetlistLine:
    ref: str
    label: str
    nodes: tuple[int, ...]
    value: str = "?"


@dataclass(frozen=True)
class Netlist:
    lines: tuple[NetlistLine, ...]
    text: str
    node_count: int
    dangling: tuple[int, ...] = ()
    source_id: str = ""


def load_detections(path: str | Path) -> tuple[str, list[ComponentDetection]]:
    """Read a detections JSON file: {"image": ..., "detections": [...]}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    dets = [
        ComponentDetection(
            det_id=d["det_id"],
            label=d["label"],
            bbox=tuple(int(v) for v in d["bbox"]),
            confidence=float(d.get("confidence", 1.0)),
        )
        for d in data.get("detections", [])
    ]
    return data.get("image", ""), dets


def side_bands(
    bbox: tuple[int, int, int, int], band_px: int, shape: tuple[int, int]
) -> dict[str, tuple[int, int, int, int]]:
    """Outward edge bands of a bbox, clipped to the image."""
    x0, y0, x1, y1 = bbox
    h, w = shape
    b = band_px
    raw = {
        "left": (x0 - b, y0 - b, x0, y1 + b),
        "right": (x1, y0 - b, x1 + b, y1 + b),
        "top": (x0 - b, y0 - b, x1 + b, y0),
        "bottom": (x0 - b, y1, x1 + b, y1 + b),
    }
    out = {}
    for side, (a0, b0, a1, b1) in raw.items():
        a0, b0 = max(0, a0), max(0, b0)
        a1, b1 = min(w, a1), min(h, b1)
        if a0 < a1 and b0 < b1:
            out[side] = (a0, b0, a1, b1)
    return out


def validate_nodes(
    labels: np.ndarray,
    regions: list[Region],
    detections: list[ComponentDetection],
    band_px: int = 3,
) -> list[Region]:
    """Keep regions whose pixels enter the edge bands of >= 2 components."""
    touched: dict[int, set[tuple[str, str]]] = {r.region_id: set() for r in regions}
    for det in detections:
        for side, (x0, y0, x1, y1) in side_bands(det.bbox, band_px, labels.shape).items():
            window = labels[y0:y1, x0:x1]
            for rid in np.unique(window):
                if rid != 0 and int(rid) in touched:
                    touched[int(rid)].add((det.det_id, side))
    out = []
    for region in regions:
        contacts = touched[region.region_id]
        if len({det_id for det_id, _ in contacts}) >= 2:
            out.append(replace(region, touched_components=frozenset(contacts)))
    return out


def assign_node_ids(
    valid_regions: list[Region], detections: list[ComponentDetection]
) -> tuple[list[Node], dict[int, int]]:
    """Number nodes; everything touching a ground symbol collapses to node 0.

    Non-ground regions keep labeling order (first pixel, row-major), numbered
    from 1.
    """
    ground_dets = {d.det_id for d in detections if d.label == "ground"}
    ground_regions = []
    plain_regions = []
    for region in sorted(valid_regions, key=lambda r: r.region_id):
        det_ids = {det_id for det_id, _ in region.touched_components}
        if det_ids & ground_dets:
            ground_regions.append(region)
        else:
            plain_regions.append(region)

    nodes: list[Node] = []
    region_to_node: dict[int, int] = {}
    if ground_regions:
        nodes.append(
            Node(node_id=0, regions=frozenset(r.region_id for r in ground_regions), is_ground=True)
        )
        for r in ground_regions:
            region_to_node[r.region_id] = 0
    for i, region in enumerate(plain_regions, start=1):
        nodes.append(Node(node_id=i, regions=frozenset({region.region_id})))
        region_to_node[region.region_id] = i
    return nodes, region_to_node


def _side_priority(label: str, cfg: NetlistConfig) -> tuple[str, ...]:
    if label in THREE_TERMINAL:
        order = list(cfg.mos_side_order)
        order += [s for s in SIDES if s not in order]
        return tuple(order)
    return ("left", "top", "right", "bottom")


def map_terminals(
    detections: list[ComponentDetection],
    valid_regions: list[Region],
    region_to_node: dict[int, int],
    cfg: NetlistConfig = NetlistConfig(),
) -> dict[str, TerminalAssignment]:
    """Assign one node per component terminal, padding unmet terminals with
    fresh dangling node ids (flagged, never fatal)."""
    per_det_side: dict[str, dict[str, list[int]]] = {d.det_id: {} for d in detections}
    for region in valid_regions:
        node = region_to_node[region.region_id]
        for det_id, side in region.touched_components:
            if det_id in per_det_side:
                bucket = per_det_side[det_id].setdefault(side, [])
                if node not in bucket:
                    bucket.append(node)

    next_dangling = max(region_to_node.values(), default=0) + 1
    out: dict[str, TerminalAssignment] = {}
    for det in sorted(detections, key=lambda d: (d.bbox[1], d.bbox[0], d.det_id)):
        # One contact per (side, node); the same node on two sides is two
        # terminals (e.g. a diode-connected transistor).
        contacts: list[int] = []
        for side in _side_priority(det.label, cfg):
            for node in sorted(per_det_side[det.det_id].get(side, [])):
                contacts.append(node)
        want = terminal_count(det.label, cfg)
        flags: list[str] = []
        if len(contacts) > want:
            contacts = contacts[:want]
            flags.append("extra_contact")
        while len(contacts) < want:
            contacts.append(next_dangling)
            next_dangling += 1
            flags.append("dangling")
        out[det.det_id] = TerminalAssignment(
            det_id=det.det_id, terminals=tuple(contacts), flags=tuple(flags)
        )
    return out


def emit_netlist(
    detections: list[ComponentDetection],
    terminal_map: dict[str, TerminalAssignment],
    node_count: int,
    source_id: str = "",
    cfg: NetlistConfig = NetlistConfig(),
) -> Netlist:
    """Write SPICE cards, one per non-ground component, in reading order."""
    ordered = sorted(detections, key=lambda d: (d.bbox[1], d.bbox[0], d.det_id))
    counters: dict[str, int] = {}
    lines: list[NetlistLine] = []
    for det in ordered:
        if det.label == "ground":
            continue
        prefix = PREFIXES.get(det.label, "X")
        counters[prefix] = counters.get(prefix, 0) + 1
        assignment = terminal_map[det.det_id]
        lines.append(
            NetlistLine(
                ref=f"{prefix}{counters[prefix]}",
                label=det.label,
                nodes=assignment.terminals,
            )
        )

    usage: dict[int, int] = {}
    for line in lines:
        for node in line.nodes:
            usage[node] = usage.get(node, 0) + 1
    dangling = tuple(sorted(n for n, c in usage.items() if n != 0 and c < 2))

    text_lines = [f"* netlist generated from {source_id or 'schematic'}"]
    text_lines.append("* transistor cards list nodes as drain gate source (top/left/bottom contacts)")
    for line in lines:
        text_lines.append(f"{line.ref} {' '.join(str(n) for n in line.nodes)} {line.value}")
    for node in dangling:
        text_lines.append(f"* dangling: node {node}")
    text_lines.append(".END")
    return Netlist(
        lines=tuple(lines),
        text="\n".join(text_lines) + "\n",
        node_count=node_count,
        dangling=dangling,
        source_id=source_id,
    )


_REVERSE_PREFIX = {
    "R": "resistor",
    "C": "capacitor",
    "L": "inductor",
    "M": "mos",
    "Q": "bjt",
    "D": "diode",
    "V": "vsource",
    "I": "isource",
    "X": "other",
}


def parse_netlist(text: str) -> list[NetlistLine]:
    """Parse SPICE card text emitted by this module (round-trip reader)."""
    lines = []
    for raw in text.splitlines():
        raw = raw.strip()
        if not raw or raw.startswith("*"):
            continue
        if raw.upper() == ".END":
            break
        tokens = raw.split()
        if len(tokens) < 3:
            raise ValueError(f"malformed card: {raw!r}")
        ref, nodes, value = tokens[0], tokens[1:-1], tokens[-1]
        if not re.match(r"^[A-Za-z]+\d+$", ref):
            raise ValueError(f"malformed designator: {ref!r}")
        lines.append(
            NetlistLine(
                ref=ref,
                label=_REVERSE_PREFIX.get(ref[0].upper(), "other"),
                nodes=tuple(int(n) for n in nodes),
                value=value,
            )
        )
    return lines


def generate(
    image_path: str | Path,
    detections_path: str | Path,
    cfg: NetlistConfig = NetlistConfig(),
) -> Netlist:
    """Full pipeline: binarize, mask, label, validate, number, map, emit."""
    image = read_pgm(image_path)
    source_id, detections = load_detections(detections_path)
    if not detections:
        raise NoComponents(f"{detections_path}: no detections")
    mask = binarize(image, cfg.threshold)
    wire_mask = mask_components(mask, detections, cfg.dilation_px)
    labels, n = label_pixels(wire_mask, cfg.connectivity)
    regions = region_stats(labels, n)
    valid = validate_nodes(labels, regions, detections, cfg.band_px)
    nodes, region_to_node = assign_node_ids(valid, detections)
    tmap = map_terminals(detections, valid, region_to_node, cfg)
    plain_nodes = sum(1 for nd in nodes if not nd.is_ground)
    node_count = plain_nodes + (1 if any(nd.is_ground for nd in nodes) else 0)
    return emit_netlist(
        detections,
        tmap,
        node_count=node_count,
        source_id=source_id or Path(image_path).stem,
        cfg=cfg,
    )

"""Synthetic schematic generator with known ground truth.

Draws parametric circuits (voltage divider, RC, RLC, current mirror,
inverter) onto clean rasters, emits perfect detections, and records which
electrical net each component terminal touches. Placement is jittered and
the whole schematic may be mirrored horizontally/vertically, which exercises
the contact-side conventions.

Ground truth terminal order restates the documented side convention
directly from the drawn anchor sides (left/top first for two-terminal
parts, top/left/bottom for transistors) without calling the extraction
code, so tests can compare extracted netlists against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extract import THREE_TERMINAL, ComponentDetection

TEMPLATES = ("divider", "rc", "rlc", "mirror", "inverter")


@dataclass
class SynthCircuit:
    name: str
    image: np.ndarray
    detections: list[ComponentDetection]
    # det_id -> terminal net names, ordered per the side convention
    expected: dict[str, tuple[str, ...]]
    has_ground: bool


class _Builder:
    def __init__(self, width: int, height: int, thickness: int):
        self.img = np.full((height, width), 255, dtype=np.uint8)
        self.t = thickness
        self.dets: list[tuple[str, str, tuple[int, int, int, int]]] = []
        self.anchors: dict[str, list[tuple[str, str]]] = {}

    def hline(self, x0: int, x1: int, y: int) -> None:
        xa, xb = min(x0, x1), max(x0, x1)
        self.img[y : y + self.t, xa : xb + self.t] = 0

    def vline(self, x: int, y0: int, y1: int) -> None:
        ya, yb = min(y0, y1), max(y0, y1)
        self.img[ya : yb + self.t, x : x + self.t] = 0

    def box(self, det_id: str, label: str, x0: int, y0: int, x1: int, y1: int) -> None:
        self.img[y0, x0:x1] = 0
        self.img[y1 - 1, x0:x1] = 0
        self.img[y0:y1, x0] = 0
        self.img[y0:y1, x1 - 1] = 0
        self.dets.append((det_id, label, (x0, y0, x1, y1)))
        self.anchors.setdefault(det_id, [])

    def touch(self, det_id: str, side: str, net: str) -> None:
        self.anchors[det_id].append((side, net))


def _expected_terminals(label: str, anchors: list[tuple[str, str]]) -> tuple[str, ...]:
    if label in THREE_TERMINAL:
        priority = ("top", "left", "bottom", "right")
    else:
        priority = ("left", "top", "right", "bottom")
    ordered = []
    for side in priority:
        nets = sorted({net for s, net in anchors if s == side})
        ordered.extend(nets)
    return tuple(ordered)


_MIRROR_X = {"left": "right", "right": "left"}
_MIRROR_Y = {"top": "bottom", "bottom": "top"}


def _finish(
    name: str,
    builder: _Builder,
    rng: np.random.Generator,
    has_ground: bool,
) -> SynthCircuit:
    img = builder.img
    dets = builder.dets
    anchors = builder.anchors
    h, w = img.shape
    if rng.random() < 0.5:
        img = img[:, ::-1].copy()
        dets = [(d, lab, (w - b[2], b[1], w - b[0], b[3])) for d, lab, b in dets]
        anchors = {
            d: [(_MIRROR_X.get(s, s), n) for s, n in a] for d, a in anchors.items()
        }
    if rng.random() < 0.5:
        img = img[::-1, :].copy()
        dets = [(d, lab, (b[0], h - b[3], b[2], h - b[1])) for d, lab, b in dets]
        anchors = {
            d: [(_MIRROR_Y.get(s, s), n) for s, n in a] for d, a in anchors.items()
        }
    detections = [
        ComponentDetection(det_id=d, label=lab, bbox=b, confidence=1.0)
        for d, lab, b in dets
    ]
    expected = {
        d: _expected_terminals(lab, anchors[d]) for d, lab, _ in dets if lab != "ground"
    }
    return SynthCircuit(
        name=name, image=img, detections=detections, expected=expected, has_ground=has_ground
    )


def _jitter(rng: np.random.Generator, base: int, amount: int = 3) -> int:
    return base + int(rng.integers(-amount, amount + 1))


def _divider(rng: np.random.Generator, with_ground: bool) -> SynthCircuit:
    t = int(rng.integers(1, 3))
    b = _Builder(360, 300, t)
    xv = _jitter(rng, 60)
    xr = _jitter(rng, 220)
    yt = _jitter(rng, 25)
    yb = _jitter(rng, 250)
    yv0 = _jitter(rng, 100)
    yr1 = _jitter(rng, 60)
    yr2 = _jitter(rng, 160)

    b.box("v1", "vsource", xv - 12, yv0, xv + 12, yv0 + 36)
    b.box("r1", "resistor", xr - 12, yr1, xr + 12, yr1 + 36)
    b.box("r2", "resistor", xr - 12, yr2, xr + 12, yr2 + 36)

    b.vline(xv, yt, yv0)
    b.hline(xv, xr, yt)
    b.vline(xr, yt, yr1)
    b.touch("v1", "top", "a")
    b.touch("r1", "top", "a")

    b.vline(xr, yr1 + 36, yr2)
    b.touch("r1", "bottom", "b")
    b.touch("r2", "top", "b")

    b.vline(xv, yv0 + 36, yb)
    b.hline(xv, xr, yb)
    b.vline(xr, yr2 + 36, yb)
    b.touch("v1", "bottom", "gnd")
    b.touch("r2", "bottom", "gnd")
    if with_ground:
        xg = _jitter(rng, 140)
        b.vline(xg, yb, yb + 14)
        b.box("gnd1", "ground", xg - 8, yb + 14, xg + 8, yb + 28)
        b.touch("gnd1", "top", "gnd")
    return _finish("divider", b, rng, with_ground)


def _rc(rng: np.random.Generator) -> SynthCircuit:
    t = int(rng.integers(1, 3))
    b = _Builder(400, 280, t)
    xv = _jitter(rng, 55)
    xr0 = _jitter(rng, 140)
    xr1 = xr0 + 40
    xc = _jitter(rng, 300)
    yt = _jitter(rng, 60)
    yb = _jitter(rng, 220)
    yv0 = _jitter(rng, 110)
    yc0 = _jitter(rng, 110)

    b.box("v1", "vsource", xv - 12, yv0, xv + 12, yv0 + 36)
    b.box("r1", "resistor", xr0, yt - 12, xr1, yt + 12)
    b.box("c1", "capacitor", xc - 12, yc0, xc + 12, yc0 + 30)

    b.vline(xv, yt, yv0)
    b.hline(xv, xr0, yt)
    b.touch("v1", "top", "a")
    b.touch("r1", "left", "a")

    b.hline(xr1, xc, yt)
    b.vline(xc, yt, yc0)
    b.touch("r1", "right", "b")
    b.touch("c1", "top", "b")

    b.vline(xv, yv0 + 36, yb)
    b.hline(xv, xc, yb)
    b.vline(xc, yc0 + 30, yb)
    b.touch("v1", "bottom", "gnd")
    b.touch("c1", "bottom", "gnd")
    xg = _jitter(rng, 180)
    b.vline(xg, yb, yb + 14)
    b.box("gnd1", "ground", xg - 8, yb + 14, xg + 8, yb + 28)
    b.touch("gnd1", "top", "gnd")
    return _finish("rc", b, rng, True)


def _rlc(rng: np.random.Generator) -> SynthCircuit:
    t = int(rng.integers(1, 3))
    b = _Builder(480, 280, t)
    xv = _jitter(rng, 50)
    xr0 = _jitter(rng, 120)
    xr1 = xr0 + 40
    xl0 = xr1 + _jitter(rng, 60, 2)
    xl1 = xl0 + 40
    xc = _jitter(rng, 400)
    yt = _jitter(rng, 60)
    yb = _jitter(rng, 220)
    yv0 = _jitter(rng, 110)
    yc0 = _jitter(rng, 110)

    b.box("v1", "vsource", xv - 12, yv0, xv + 12, yv0 + 36)
    b.box("r1", "resistor", xr0, yt - 12, xr1, yt + 12)
    b.box("l1", "inductor", xl0, yt - 12, xl1, yt + 12)
    b.box("c1", "capacitor", xc - 12, yc0, xc + 12, yc0 + 30)

    b.vline(xv, yt, yv0)
    b.hline(xv, xr0, yt)
    b.touch("v1", "top", "a")
    b.touch("r1", "left", "a")

    b.hline(xr1, xl0, yt)
    b.touch("r1", "right", "b")
    b.touch("l1", "left", "b")

    b.hline(xl1, xc, yt)
    b.vline(xc, yt, yc0)
    b.touch("l1", "right", "c")
    b.touch("c1", "top", "c")

    b.vline(xv, yv0 + 36, yb)
    b.hline(xv, xc, yb)
    b.vline(xc, yc0 + 30, yb)
    b.touch("v1", "bottom", "gnd")
    b.touch("c1", "bottom", "gnd")
    xg = _jitter(rng, 200)
    b.vline(xg, yb, yb + 14)
    b.box("gnd1", "ground", xg - 8, yb + 14, xg + 8, yb + 28)
    b.touch("gnd1", "top", "gnd")
    return _finish("rlc", b, rng, True)


def _mirror(rng: np.random.Generator) -> SynthCircuit:
    t = int(rng.integers(1, 3))
    b = _Builder(360, 260, t)
    xi = _jitter(rng, 45, 2)
    xm1 = _jitter(rng, 115, 2)
    xgb = _jitter(rng, 152, 2)
    xm2 = _jitter(rng, 195, 2)
    xr = _jitter(rng, 280, 2)
    ya = _jitter(rng, 20, 2)
    yb2 = _jitter(rng, 32, 2)
    ym0 = _jitter(rng, 70, 2)
    ygd = _jitter(rng, 150, 2)
    xg1 = _jitter(rng, 78, 2)
    yg = ym0 + 18

    b.box("i1", "isource", xi - 12, ym0, xi + 12, ym0 + 36)
    b.box("m1", "nmos", xm1 - 18, ym0, xm1 + 18, ym0 + 36)
    b.box("m2", "nmos", xm2 - 18, ym0, xm2 + 18, ym0 + 36)
    b.box("r1", "resistor", xr - 12, ym0, xr + 12, ym0 + 36)

    # net a: source top, M1 drain, M1 gate, M2 gate
    b.vline(xi, ya, ym0)
    b.hline(xi, xgb, ya)
    b.vline(xm1, ya, ym0)
    b.vline(xg1, ya, yg)
    b.hline(xg1, xm1 - 18, yg)
    b.vline(xgb, ya, yg)
    b.hline(xgb, xm2 - 18, yg)
    b.touch("i1", "top", "a")
    b.touch("m1", "top", "a")
    b.touch("m1", "left", "a")
    b.touch("m2", "left", "a")

    # net b: M2 drain, load top
    b.hline(xm2, xr, yb2)
    b.vline(xm2, yb2, ym0)
    b.vline(xr, yb2, ym0)
    b.touch("m2", "top", "b")
    b.touch("r1", "top", "b")

    # ground rail
    b.hline(xi, xr, ygd)
    for x, det in ((xi, "i1"), (xm1, "m1"), (xm2, "m2"), (xr, "r1")):
        b.vline(x, ym0 + 36, ygd)
        b.touch(det, "bottom", "gnd")
    xg = _jitter(rng, 250, 2)
    b.vline(xg, ygd, ygd + 14)
    b.box("gnd1", "ground", xg - 8, ygd + 14, xg + 8, ygd + 28)
    b.touch("gnd1", "top", "gnd")
    return _finish("mirror", b, rng, True)


def _inverter(rng: np.random.Generator) -> SynthCircuit:
    t = int(rng.integers(1, 3))
    b = _Builder(320, 300, t)
    xvs = _jitter(rng, 45, 2)
    xvi = _jitter(rng, 95, 2)
    xgb = _jitter(rng, 145, 2)
    xm = _jitter(rng, 210, 2)
    yt = _jitter(rng, 20, 2)
    yvin = _jitter(rng, 40, 2)
    ysrc0 = _jitter(rng, 64, 2)
    ymp0 = ysrc0
    ymn0 = ymp0 + _jitter(rng, 80, 2)
    ygd = ymn0 + 36 + _jitter(rng, 40, 2)

    b.box("vs", "vsource", xvs - 12, ysrc0, xvs + 12, ysrc0 + 36)
    b.box("vin", "vsource", xvi - 12, ysrc0, xvi + 12, ysrc0 + 36)
    b.box("mp", "pmos", xm - 18, ymp0, xm + 18, ymp0 + 36)
    b.box("mn", "nmos", xm - 18, ymn0, xm + 18, ymn0 + 36)

    # net vdd: supply top to pmos top
    b.vline(xvs, yt, ysrc0)
    b.hline(xvs, xm, yt)
    b.vline(xm, yt, ymp0)
    b.touch("vs", "top", "vdd")
    b.touch("mp", "top", "vdd")

    # net in: input source top to both gates via gate bus
    b.vline(xvi, yvin, ysrc0)
    b.hline(xvi, xgb, yvin)
    b.vline(xgb, yvin, ymn0 + 18)
    b.hline(xgb, xm - 18, ymp0 + 18)
    b.hline(xgb, xm - 18, ymn0 + 18)
    b.touch("vin", "top", "in")
    b.touch("mp", "left", "in")
    b.touch("mn", "left", "in")

    # net out: pmos bottom to nmos top
    b.vline(xm, ymp0 + 36, ymn0)
    b.touch("mp", "bottom", "out")
    b.touch("mn", "top", "out")

    # ground rail
    b.hline(xvs, xm, ygd)
    for x, det in ((xvs, "vs"), (xvi, "vin"), (xm, "mn")):
        b.vline(x, (ysrc0 + 36) if det != "mn" else (ymn0 + 36), ygd)
        b.touch(det, "bottom", "gnd")
    xg = _jitter(rng, 160, 2)
    b.vline(xg, ygd, ygd + 14)
    b.box("gnd1", "ground", xg - 8, ygd + 14, xg + 8, ygd + 28)
    b.touch("gnd1", "top", "gnd")
    return _finish("inverter", b, rng, True)


def generate_circuit(kind: str, rng: np.random.Generator) -> SynthCircuit:
    if kind == "divider":
        return _divider(rng, with_ground=bool(rng.random() < 0.8))
    if kind == "rc":
        return _rc(rng)
    if kind == "rlc":
        return _rlc(rng)
    if kind == "mirror":
        return _mirror(rng)
    if kind == "inverter":
        return _inverter(rng)
    raise ValueError(f"unknown template {kind!r}")


def generate_corpus(count: int, seed: int = 7) -> list[SynthCircuit]:
    """A reproducible mix over all templates."""
    rng = np.random.default_rng(seed)
    return [generate_circuit(TEMPLATES[i % len(TEMPLATES)], rng) for i in range(count)]

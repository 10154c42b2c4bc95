"""SVG rendering: edge darkness encodes conductance, node color encodes role."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .network import CONSUMER, GENERATOR, TRANSMISSION, NetworkTopology

ROLE_COLORS = {TRANSMISSION: "black", CONSUMER: "blue", GENERATOR: "red"}

# Edges fainter than this fraction of the strongest edge are not drawn.
MIN_VISIBLE = 1e-6


def render_svg(
    topology: NetworkTopology,
    theta: np.ndarray,
    path,
    opacity_exponent: float = 1.0,
    unit: float = 60.0,
    margin: float = 30.0,
) -> Path:
    """Write a deterministic SVG of the design.

    Edge stroke opacity is ``(theta / max theta) ** opacity_exponent``, so
    zero-conductance lines vanish. The virtual generator and its lines are
    never drawn. Identical inputs produce byte-identical files.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (topology.n_edges,):
        raise ValueError("theta must have one entry per edge")
    real_nodes = [nd for nd in topology.nodes if nd.role in ROLE_COLORS]
    real_edges = [e for e in topology.edges if topology.real_edge_mask[e.id]]

    xs = [nd.x for nd in real_nodes]
    ys = [nd.y for nd in real_nodes]
    x0, y1 = min(xs, default=0.0), max(ys, default=0.0)

    def px(x: float) -> float:
        return margin + (x - x0) * unit

    def py(y: float) -> float:
        return margin + (y1 - y) * unit  # flip so larger y is up

    width = 2 * margin + (max(xs, default=0.0) - x0) * unit
    height = 2 * margin + (y1 - min(ys, default=0.0)) * unit

    peak = max((theta[e.id] for e in real_edges), default=0.0)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.2f}" height="{height:.2f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}">',
        f'<rect width="{width:.2f}" height="{height:.2f}" fill="white"/>',
    ]
    for e in real_edges:
        if peak <= 0:
            continue
        rel = theta[e.id] / peak
        if rel < MIN_VISIBLE:
            continue
        opacity = rel**opacity_exponent
        a, b = topology.nodes[e.u], topology.nodes[e.v]
        lines.append(
            f'<line x1="{px(a.x):.2f}" y1="{py(a.y):.2f}" '
            f'x2="{px(b.x):.2f}" y2="{py(b.y):.2f}" '
            f'stroke="black" stroke-width="3" stroke-linecap="round" '
            f'stroke-opacity="{opacity:.6f}"/>'
        )
    for nd in real_nodes:
        lines.append(
            f'<circle cx="{px(nd.x):.2f}" cy="{py(nd.y):.2f}" r="5" '
            f'fill="{ROLE_COLORS[nd.role]}"/>'
        )
    lines.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out

"""State-frame serialization: the dashboard wire schema and replay files.

A replay file is newline-delimited UTF-8 JSON: one geometry header record
followed by one frame record per step.  The same message dictionaries travel
over the dashboard socket, so recording and streaming share this module.
All messages carry ``v`` (protocol version, currently 1) and a ``kind``
discriminator.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .engine import Engine
from .network import CompiledNetwork

PROTOCOL_VERSION = 1


class ReplayFormatError(ValueError):
    """Raised when a replay file or frame record is malformed."""


def geometry_message(net: CompiledNetwork, scenario: str = "",
                     mode: str = "live", **extras) -> dict:
    """Static description a client needs before it can render frames."""
    spec = net.spec
    nodes = []
    sig_index = {int(ni): si for si, ni in enumerate(net.sig_nodes)}
    for i, n in enumerate(spec.nodes):
        nodes.append({
            "id": n.id, "x": n.position[0], "y": n.position[1],
            "signalized": n.signalized,
            "n_phases": len(n.phases),
            "sig": sig_index.get(i, -1),
        })
    links = []
    for li, l in enumerate(spec.links):
        if l.geometry is not None:
            polyline = [list(p) for p in l.geometry]
        else:
            a = net.node_xy[net.node_index[l.from_node]]
            b = net.node_xy[net.node_index[l.to_node]]
            polyline = [[float(a[0]), float(a[1])], [float(b[0]), float(b[1])]]
        links.append({
            "id": l.id, "from": l.from_node, "to": l.to_node,
            "lanes": l.lanes,
            "cells": [int(net.link_first[li]), int(net.link_last[li])],
            "polyline": polyline,
        })
    msg = {"v": PROTOCOL_VERSION, "kind": "geometry", "scenario": scenario,
           "mode": mode, "dt": net.dt, "n_cells": net.n_cells,
           "nodes": nodes, "links": links}
    msg.update(extras)
    return msg


def frame_message(engine: Engine, throughput_cum: float, delay_cum: float,
                  mean_speed: float) -> dict:
    return {
        "v": PROTOCOL_VERSION, "kind": "frame", "t": engine.clock,
        "densities": [float(x) for x in engine.normalized_density()],
        "signals": engine.signal_snapshot(),
        "metrics": {"queue": engine.total_queue(),
                    "throughput_cum": float(throughput_cum),
                    "mean_speed": float(mean_speed),
                    "delay_cum": float(delay_cum)},
    }


def serialize(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"))


def parse(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise ReplayFormatError(f"invalid JSON: {e.msg}") from e
    if not isinstance(msg, dict) or "kind" not in msg:
        raise ReplayFormatError("message must be an object with a 'kind'")
    return msg


def validate_frame(msg: dict, n_cells: Optional[int] = None) -> dict:
    if msg.get("kind") != "frame":
        raise ReplayFormatError(f"expected frame, got '{msg.get('kind')}'")
    for key in ("t", "densities", "signals", "metrics"):
        if key not in msg:
            raise ReplayFormatError(f"frame missing '{key}'")
    if n_cells is not None and len(msg["densities"]) != n_cells:
        raise ReplayFormatError(
            f"frame has {len(msg['densities'])} densities, network has {n_cells}")
    return msg


class ReplayWriter:
    """Streams header + frames to a newline-delimited JSON file."""

    def __init__(self, path, header: dict):
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")
        self._fh.write(serialize(header) + "\n")
        self.frames = 0

    def write_frame(self, frame: dict) -> None:
        self._fh.write(serialize(frame) + "\n")
        self.frames += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_replay(path):
    """Parse a replay file into (header, frames).

    Malformed records raise :class:`ReplayFormatError` naming the offending
    frame index.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ReplayFormatError(f"{path}: empty replay file")
    try:
        header = parse(lines[0])
    except ReplayFormatError as e:
        raise ReplayFormatError(f"{path}: header: {e}") from e
    if header.get("kind") != "geometry":
        raise ReplayFormatError(f"{path}: first record must be geometry")
    n_cells = header.get("n_cells")
    frames = []
    for i, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        try:
            frames.append(validate_frame(parse(line), n_cells))
        except ReplayFormatError as e:
            raise ReplayFormatError(f"{path}: frame {i}: {e}") from e
    return header, frames

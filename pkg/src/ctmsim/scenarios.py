"""Built-in scenario generators and the name-addressable registry.

Link lengths and demand levels here are calibrated constants: cell counts per
scenario are pinned by tests (single intersection 24; grids 126/378/726/1170;
arterials 56/88/168/328), so treat geometry edits as breaking changes.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .network import (
    DEFAULT_CAPACITY, DEFAULT_FREE_FLOW_SPEED, LinkSpec, MovementSpec,
    NetworkSpec, NodeSpec, PhaseSpec, compile_network, load_network_json,
    movement_key, validate,
)

VF = DEFAULT_FREE_FLOW_SPEED
CELL = VF * 1.0                     # cell length at dt = 1

# --- single intersection ----------------------------------------------------
SI_APPROACH_CELLS = 2
SI_EXIT_CELLS = 3
SI_STUB_CELLS = 1
SI_LANES = 3
SI_SAT_NS = 1.30                    # veh/s per north/south through movement
SI_SAT_EW = 0.80
SI_NS_RATE = 1080.0 / 3600.0        # veh/s per north/south approach
SI_EW_RATE = 720.0 / 3600.0
SI_STUB_Q_NS = 0.42                 # downstream corridor capacity, veh/s/lane
SI_STUB_Q_EW = 0.27

# --- grids -------------------------------------------------------------------
GRID_INTERNAL_CELLS = 3
GRID_EDGE_CELLS = 3                 # origin and sink links at access points
GRID_BYPASS_CELLS = 15
GRID_LANES = 2
GRID_ROW_RATE = 0.15                # veh/s per east/west boundary origin link
GRID_COL_RATE = 0.09                # veh/s per north/south boundary origin link
GRID_ROW_SPLIT = 1.0                # heavy/light alternation between rows
GRID_BYPASS_RATE = 0.22             # veh/s per bypass link
GRID_TURNS = (0.6, 0.2, 0.2)        # through, left, right
GRID_TURN_SAT = 0.11                # veh/s, shared-lane turning capacity

# --- arterials ----------------------------------------------------------------
ART_MAIN_CELLS = 4
ART_SIDE_CELLS = 2
ART_END_CELLS = 4
ART_MAIN_LANES = 2
ART_END_RATE = 0.30
ART_SIDE_RATE = 0.12


@dataclass
class ScenarioDefinition:
    name: str
    network: NetworkSpec
    demand: dict                     # origin link id -> veh/s
    default_controller_params: dict = field(default_factory=dict)
    horizon: int = 720               # decision steps
    decision_interval: float = 5.0   # seconds per decision
    corridors: tuple = ()            # ordered node-id lists for coordination

    def compile(self):
        return compile_network(self.network)

    def origin_rate_vector(self, compiled) -> list:
        return [self.demand.get(compiled.link_ids[li], 0.0)
                for li in compiled.origin_links]

    def scaled(self, factor: float) -> "ScenarioDefinition":
        """Copy with all arrival rates multiplied by ``factor`` (v/c sweeps)."""
        return replace(self, demand={k: v * factor for k, v in self.demand.items()})


def generate_demand(network: NetworkSpec, rate: float) -> dict:
    """Uniform demand: every origin link receives ``rate`` veh/hr."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    return {l.id: rate / 3600.0 for l in network.links if l.is_origin}


def _through(sat):
    return sat


def gen_single_intersection() -> ScenarioDefinition:
    """One signalized four-approach junction with two phases (NS, EW).

    Each exit feeds a one-lane downstream stub whose capacity sits just above
    the approach demand, the usual picture of an urban junction draining into
    constrained corridors.  24 cells total.
    """
    ap_len = SI_APPROACH_CELLS * CELL
    ex_len = SI_EXIT_CELLS * CELL
    st_len = SI_STUB_CELLS * CELL
    far = ap_len + ex_len + st_len + 40.0

    nodes = [NodeSpec("C", (0.0, 0.0), signalized=True, phases=(
        PhaseSpec((movement_key("in_N", "out_S"), movement_key("in_S", "out_N"))),
        PhaseSpec((movement_key("in_E", "out_W"), movement_key("in_W", "out_E"))),
    ))]
    links: list = []
    movements: list = []
    demand: dict = {}

    # (side, unit vector pointing outward from C)
    dirs = {"N": (0.0, 1.0), "S": (0.0, -1.0), "E": (1.0, 0.0), "W": (-1.0, 0.0)}
    opposite = {"N": "S", "S": "N", "E": "W", "W": "E"}
    for side, (ux, uy) in dirs.items():
        nodes.append(NodeSpec(f"o{side}", (ux * far, uy * far)))
        nodes.append(NodeSpec(f"m{side}", (ux * (ex_len + 10), uy * (ex_len + 10))))
        nodes.append(NodeSpec(f"e{side}", (ux * (ex_len + st_len + 25),
                                           uy * (ex_len + st_len + 25))))
        links.append(LinkSpec(f"in_{side}", f"o{side}", "C", ap_len,
                              lanes=SI_LANES, is_origin=True))
        links.append(LinkSpec(f"out_{side}", "C", f"m{side}", ex_len,
                              lanes=SI_LANES))
        stub_q = SI_STUB_Q_NS if side in ("N", "S") else SI_STUB_Q_EW
        links.append(LinkSpec(f"stub_{side}", f"m{side}", f"e{side}", st_len,
                              lanes=1, capacity=stub_q, is_sink=True))
        movements.append(MovementSpec(f"out_{side}", f"stub_{side}", 1.0,
                                      DEFAULT_CAPACITY * SI_LANES, f"m{side}"))

    for side in dirs:
        ns = side in ("N", "S")
        movements.append(MovementSpec(
            f"in_{side}", f"out_{opposite[side]}", 1.0,
            SI_SAT_NS if ns else SI_SAT_EW, "C"))
        demand[f"in_{side}"] = SI_NS_RATE if ns else SI_EW_RATE

    net = NetworkSpec(nodes=nodes, links=links, movements=movements, dt=1.0,
                      metadata={"name": "single-intersection"})
    return ScenarioDefinition(
        "single-intersection-v0", net, demand,
        default_controller_params={"ltmp": {"switch_cost_factor": 1.25}})


_TURN = {  # incoming heading -> (through, left, right) headings
    "S": ("S", "E", "W"), "N": ("N", "W", "E"),
    "E": ("E", "N", "S"), "W": ("W", "S", "N"),
}
_STEP = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}  # row, col delta


def gen_grid(rows: int, cols: int) -> ScenarioDefinition:
    """Signalized rows x cols grid with boundary demand and bypass arterials.

    Every exposed node side carries two inbound origin links and one outbound
    sink; bypass links are origin-to-sink through-roads that skirt the
    signalized interior.  Interior movements split through/left/right.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    D = GRID_INTERNAL_CELLS * CELL
    edge_len = GRID_EDGE_CELLS * CELL

    nodes: list = []
    links: list = []
    movements: list = []
    demand: dict = {}

    def gid(i, j):
        return f"g{i}_{j}"

    def pos(i, j):
        return (j * D, -i * D)

    for i in range(rows):
        for j in range(cols):
            nodes.append(NodeSpec(gid(i, j), pos(i, j), signalized=True))

    # Internal links, both directions between orthogonal neighbours.
    def internal_id(i1, j1, i2, j2):
        return f"l{i1}_{j1}__{i2}_{j2}"

    for i in range(rows):
        for j in range(cols):
            for di, dj in ((0, 1), (1, 0)):
                i2, j2 = i + di, j + dj
                if i2 < rows and j2 < cols:
                    links.append(LinkSpec(internal_id(i, j, i2, j2),
                                          gid(i, j), gid(i2, j2), D,
                                          lanes=GRID_LANES))
                    links.append(LinkSpec(internal_id(i2, j2, i, j),
                                          gid(i2, j2), gid(i, j), D,
                                          lanes=GRID_LANES))

    # Exposed sides: two origins in, one sink out.
    exposed: list = []
    for j in range(cols):
        exposed.append((0, j, "N"))
        exposed.append((rows - 1, j, "S"))
    for i in range(rows):
        exposed.append((i, 0, "W"))
        exposed.append((i, cols - 1, "E"))

    out_unit = {"N": (0.0, 1.0), "S": (0.0, -1.0), "E": (1.0, 0.0),
                "W": (-1.0, 0.0)}
    inbound_heading = {"N": "S", "S": "N", "W": "E", "E": "W"}
    for i, j, side in exposed:
        x, y = pos(i, j)
        ux, uy = out_unit[side]
        anchor = f"b{side}_{i}_{j}"
        nodes.append(NodeSpec(anchor, (x + ux * (edge_len + 15),
                                       y + uy * (edge_len + 15))))
        if side in ("E", "W"):
            # Alternating heavy and light arterial rows.
            split = GRID_ROW_SPLIT if i % 2 == 0 else 2.0 - GRID_ROW_SPLIT
            rate = GRID_ROW_RATE * split
        else:
            rate = GRID_COL_RATE
        for tag in ("a", "b"):
            lid = f"in{side}_{i}_{j}_{tag}"
            links.append(LinkSpec(lid, anchor, gid(i, j), edge_len,
                                  lanes=GRID_LANES, is_origin=True))
            demand[lid] = rate
        links.append(LinkSpec(f"out{side}_{i}_{j}", gid(i, j), anchor,
                              edge_len, lanes=GRID_LANES, is_sink=True))

    # Bypass through-roads that never enter the interior.
    n_byp = rows + cols - 2
    for b in range(n_byp):
        a = f"bypA{b}"
        z = f"bypZ{b}"
        yoff = D * (rows + 1 + b)
        nodes.append(NodeSpec(a, (-edge_len, -yoff)))
        nodes.append(NodeSpec(z, (GRID_BYPASS_CELLS * CELL - edge_len, -yoff)))
        lid = f"byp{b}"
        links.append(LinkSpec(lid, a, z, GRID_BYPASS_CELLS * CELL,
                              lanes=GRID_LANES, is_origin=True, is_sink=True))
        demand[lid] = GRID_BYPASS_RATE

    # Movements: through/left/right from every incoming link of each node.
    heading_out: dict = {}
    for i in range(rows):
        for j in range(cols):
            n = gid(i, j)
            hs: dict = {}
            for h, (di, dj) in _STEP.items():
                i2, j2 = i + di, j + dj
                if 0 <= i2 < rows and 0 <= j2 < cols:
                    hs[h] = internal_id(i, j, i2, j2)
            for l in links:
                if l.from_node == n and l.is_sink:
                    side = l.id[3]          # outN_... -> N
                    hs[side] = l.id
            heading_out[n] = hs

    incoming: list = []
    for l in links:
        if l.to_node.startswith("g") and not l.is_sink:
            if l.is_origin:
                side = l.id[2]              # inN_... -> N
                heading = inbound_heading[side]
            else:
                # internal: moving toward to_node
                m = re.match(r"l(\d+)_(\d+)__(\d+)_(\d+)", l.id)
                i1, j1, i2, j2 = map(int, m.groups())
                heading = ("S" if i2 > i1 else "N") if i1 != i2 else \
                          ("E" if j2 > j1 else "W")
            incoming.append((l, heading))

    phase_movs: dict = {}
    for l, heading in incoming:
        node = l.to_node
        th, lf, rt = _TURN[heading]
        hs = heading_out[node]
        targets = [(th, GRID_TURNS[0]), (lf, GRID_TURNS[1]), (rt, GRID_TURNS[2])]
        avail = [(hs[h], w, h == th) for h, w in targets if h in hs]
        total = sum(w for _, w, _ in avail)
        through_sat = DEFAULT_CAPACITY * l.lanes
        for to_id, w, is_through in avail:
            sat = through_sat if is_through else GRID_TURN_SAT
            movements.append(MovementSpec(l.id, to_id, w / total, sat, node))
            phase = 0 if heading in ("N", "S") else 1
            phase_movs.setdefault(node, ([], []))[phase].append(
                movement_key(l.id, to_id))

    for idx, n in enumerate(nodes):
        if n.signalized:
            ns, ew = phase_movs[n.id]
            nodes[idx] = replace(n, phases=(PhaseSpec(tuple(ns)),
                                            PhaseSpec(tuple(ew))))

    corridors = tuple(
        tuple(gid(i, j) for j in range(cols)) for i in range(rows))
    net = NetworkSpec(nodes=nodes, links=links, movements=movements, dt=1.0,
                      metadata={"name": f"grid-{rows}x{cols}"})
    return ScenarioDefinition(
        f"grid-{rows}x{cols}-v0", net, demand, corridors=corridors,
        default_controller_params={"ltmp": {"switch_cost_factor": 8.0},
                                   "sotl": {"sotl_gap": 1.5},
                                   "webster": {"webster_discount": 0.19}})


def gen_arterial(n: int) -> ScenarioDefinition:
    """Two-way arterial corridor of ``n`` signals with crossing side streets."""
    if n < 2:
        raise ValueError("arterial needs >= 2 intersections")
    D = ART_MAIN_CELLS * CELL
    side_len = ART_SIDE_CELLS * CELL
    end_len = ART_END_CELLS * CELL

    nodes: list = []
    links: list = []
    movements: list = []
    demand: dict = {}

    def nid(i):
        return f"a{i}"

    for i in range(n):
        nodes.append(NodeSpec(nid(i), (i * D, 0.0), signalized=True))
        nodes.append(NodeSpec(f"n{i}", (i * D, side_len + 10)))
        nodes.append(NodeSpec(f"s{i}", (i * D, -(side_len + 10))))
    nodes.append(NodeSpec("west", (-end_len - 10, 0.0)))
    nodes.append(NodeSpec("east", ((n - 1) * D + end_len + 10, 0.0)))

    for i in range(n - 1):
        links.append(LinkSpec(f"mE{i}", nid(i), nid(i + 1), D,
                              lanes=ART_MAIN_LANES))
        links.append(LinkSpec(f"mW{i}", nid(i + 1), nid(i), D,
                              lanes=ART_MAIN_LANES))
    links += [
        LinkSpec("endE_in", "west", nid(0), end_len, lanes=ART_MAIN_LANES,
                 is_origin=True),
        LinkSpec("endW_out", nid(0), "west", end_len, lanes=ART_MAIN_LANES,
                 is_sink=True),
        LinkSpec("endW_in", "east", nid(n - 1), end_len, lanes=ART_MAIN_LANES,
                 is_origin=True),
        LinkSpec("endE_out", nid(n - 1), "east", end_len, lanes=ART_MAIN_LANES,
                 is_sink=True),
    ]
    demand["endE_in"] = ART_END_RATE
    demand["endW_in"] = ART_END_RATE

    for i in range(n):
        links.append(LinkSpec(f"sideN_in{i}", f"n{i}", nid(i), side_len,
                              is_origin=True))
        links.append(LinkSpec(f"sideS_in{i}", f"s{i}", nid(i), side_len,
                              is_origin=True))
        links.append(LinkSpec(f"sideN_out{i}", nid(i), f"n{i}", side_len,
                              is_sink=True))
        links.append(LinkSpec(f"sideS_out{i}", nid(i), f"s{i}", side_len,
                              is_sink=True))
        demand[f"sideN_in{i}"] = ART_SIDE_RATE
        demand[f"sideS_in{i}"] = ART_SIDE_RATE

    main_sat = DEFAULT_CAPACITY * ART_MAIN_LANES
    side_sat = DEFAULT_CAPACITY
    for i in range(n):
        east_out = f"mE{i}" if i < n - 1 else "endE_out"
        west_out = f"mW{i - 1}" if i > 0 else "endW_out"
        east_in = "endE_in" if i == 0 else f"mE{i - 1}"
        west_in = "endW_in" if i == n - 1 else f"mW{i}"
        movements.append(MovementSpec(east_in, east_out, 1.0, main_sat, nid(i)))
        movements.append(MovementSpec(west_in, west_out, 1.0, main_sat, nid(i)))
        movements.append(MovementSpec(f"sideN_in{i}", f"sideS_out{i}", 1.0,
                                      side_sat, nid(i)))
        movements.append(MovementSpec(f"sideS_in{i}", f"sideN_out{i}", 1.0,
                                      side_sat, nid(i)))
        main = (movement_key(east_in, east_out), movement_key(west_in, west_out))
        cross = (movement_key(f"sideN_in{i}", f"sideS_out{i}"),
                 movement_key(f"sideS_in{i}", f"sideN_out{i}"))
        nodes[[k for k, nn in enumerate(nodes) if nn.id == nid(i)][0]] = \
            replace(nodes[[k for k, nn in enumerate(nodes) if nn.id == nid(i)][0]],
                    phases=(PhaseSpec(main), PhaseSpec(cross)))

    net = NetworkSpec(nodes=nodes, links=links, movements=movements, dt=1.0,
                      metadata={"name": f"arterial-{n}"})
    return ScenarioDefinition(f"arterial-{n}-v0", net, demand,
                              corridors=(tuple(nid(i) for i in range(n)),))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

TABLE_SCENARIOS = (
    "single-intersection-v0",
    "grid-2x2-v0", "grid-4x4-v0", "grid-6x6-v0", "grid-8x8-v0",
    "arterial-3-v0", "arterial-5-v0", "arterial-10-v0", "arterial-20-v0",
)

_GRID_RE = re.compile(r"^grid-(\d+)x(\d+)-v0$")
_ART_RE = re.compile(r"^arterial-(\d+)-v0$")

#: extra directories scanned for `*.json` networks, newest registration wins
scenario_dirs: list = []


def _dir_candidates() -> list:
    dirs = [Path(d) for d in scenario_dirs]
    env = os.environ.get("CTMSIM_SCENARIO_DIR")
    if env:
        dirs += [Path(p) for p in env.split(os.pathsep)]
    default = Path("scenarios")
    if default.is_dir():
        dirs.append(default)
    return dirs


def _load_from_dirs(name: str) -> Optional[ScenarioDefinition]:
    for d in _dir_candidates():
        if not d.is_dir():
            continue
        for path in sorted(d.glob("*.json")):
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                continue
            meta_name = (doc.get("metadata") or {}).get("name", path.stem)
            if meta_name != name:
                continue
            spec = load_network_json(json.dumps(doc))
            demand = {k: float(v) for k, v in
                      (doc.get("metadata", {}).get("demand") or {}).items()}
            if not demand:
                demand = generate_demand(spec, 360.0)
            return ScenarioDefinition(name, spec, demand)
    return None


def available_scenarios() -> list:
    names = list(TABLE_SCENARIOS)
    for d in _dir_candidates():
        if d.is_dir():
            for path in sorted(d.glob("*.json")):
                try:
                    doc = json.loads(path.read_text(encoding="utf-8"))
                    names.append((doc.get("metadata") or {}).get("name", path.stem))
                except (OSError, json.JSONDecodeError):
                    continue
    return names


def make(name: str, demand_scale: float = 1.0) -> ScenarioDefinition:
    """Build a scenario by registry name.

    Grid and arterial names parse dimensions dynamically, so any
    ``grid-{R}x{C}-v0`` or ``arterial-{N}-v0`` is accepted; city networks
    dropped into a scenario directory load by their metadata name.
    """
    definition = None
    if name == "single-intersection-v0":
        definition = gen_single_intersection()
    else:
        m = _GRID_RE.match(name)
        if m:
            definition = gen_grid(int(m.group(1)), int(m.group(2)))
        else:
            m = _ART_RE.match(name)
            if m:
                definition = gen_arterial(int(m.group(1)))
    if definition is None:
        definition = _load_from_dirs(name)
    if definition is None:
        known = ", ".join(available_scenarios())
        raise KeyError(f"unknown scenario '{name}'; available: {known}")
    if demand_scale != 1.0:
        definition = definition.scaled(demand_scale)
    return definition

"""Logical road-network model, validation, and compilation to flat arrays.

The logical model (:class:`NetworkSpec`) is a plain description of nodes,
links, and turning movements.  The engine never touches it directly: it is
validated and then compiled into a :class:`CompiledNetwork`, a bundle of
contiguous NumPy arrays indexed by dense integers, which the simulation
kernel iterates over in a single pass per step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

import numpy as np

# Default physical parameters (SI units: m, s, veh).
DEFAULT_FREE_FLOW_SPEED = 13.89   # m/s  (~50 km/h)
DEFAULT_WAVE_SPEED = 5.56         # m/s  (~20 km/h)
DEFAULT_JAM_DENSITY = 0.15        # veh/m/lane
DEFAULT_CAPACITY = 0.5            # veh/s/lane (1800 veh/h/lane)
DEFAULT_YELLOW = 3.0              # s
DEFAULT_ALL_RED = 2.0             # s

# Signal interim states (shared with the engine kernels).
GREEN, YELLOW, ALL_RED = 0, 1, 2


def movement_key(from_link: str, to_link: str) -> str:
    """Canonical string identifier of a movement."""
    return f"{from_link}->{to_link}"


@dataclass(frozen=True)
class LinkSpec:
    id: str
    from_node: str
    to_node: str
    length: float
    lanes: int = 1
    free_flow_speed: float = DEFAULT_FREE_FLOW_SPEED
    wave_speed: float = DEFAULT_WAVE_SPEED
    jam_density: float = DEFAULT_JAM_DENSITY
    capacity: float = DEFAULT_CAPACITY
    is_origin: bool = False
    is_sink: bool = False
    geometry: Optional[tuple] = None      # polyline ((x, y), ...) for rendering
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MovementSpec:
    from_link: str
    to_link: str
    turn_ratio: float
    saturation_rate: float
    node: str
    extra: dict = field(default_factory=dict)

    @property
    def key(self) -> str:
        return movement_key(self.from_link, self.to_link)


@dataclass(frozen=True)
class PhaseSpec:
    movements: tuple   # movement keys granted green


@dataclass(frozen=True)
class NodeSpec:
    id: str
    position: tuple = (0.0, 0.0)
    signalized: bool = False
    phases: tuple = ()
    yellow_time: float = DEFAULT_YELLOW
    all_red_time: float = DEFAULT_ALL_RED
    extra: dict = field(default_factory=dict)


@dataclass
class NetworkSpec:
    nodes: list
    links: list
    movements: list
    dt: float = 1.0
    metadata: dict = field(default_factory=dict)

    def node_by_id(self) -> dict:
        return {n.id: n for n in self.nodes}

    def link_by_id(self) -> dict:
        return {l.id: l for l in self.links}


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding: the offending entity and the violated rule."""
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"[{self.entity}] {self.rule}: {self.message}"


def validate(spec: NetworkSpec) -> list:
    """Check every structural invariant; returns [] iff the spec is sound."""
    out: list = []

    def bad(entity, rule, message):
        out.append(Diagnostic(entity, rule, message))

    if not spec.dt > 0:
        bad("network", "dt > 0", f"dt = {spec.dt}")

    nodes = {}
    for n in spec.nodes:
        if n.id in nodes:
            bad(f"node {n.id}", "unique id", "duplicate node id")
        nodes[n.id] = n
        if n.yellow_time < 0 or n.all_red_time < 0:
            bad(f"node {n.id}", "interim times >= 0",
                f"yellow={n.yellow_time}, all_red={n.all_red_time}")

    links = {}
    for l in spec.links:
        ent = f"link {l.id}"
        if l.id in links:
            bad(ent, "unique id", "duplicate link id")
        links[l.id] = l
        if not l.length > 0:
            bad(ent, "length > 0", f"length = {l.length}")
        if l.lanes < 1:
            bad(ent, "lanes >= 1", f"lanes = {l.lanes}")
        if not l.free_flow_speed > 0:
            bad(ent, "free_flow_speed > 0", f"vf = {l.free_flow_speed}")
        if not (0 < l.wave_speed <= l.free_flow_speed):
            bad(ent, "0 < w <= vf",
                f"w = {l.wave_speed}, vf = {l.free_flow_speed}")
        if not l.capacity > 0:
            bad(ent, "capacity > 0", f"Q = {l.capacity}")
        if l.free_flow_speed > 0 and l.capacity > 0:
            k_c = l.capacity / l.free_flow_speed
            if not k_c < l.jam_density:
                bad(ent, "critical density below jam density",
                    f"Q/vf = {k_c:.4f} >= kj = {l.jam_density}")
        for ref in (l.from_node, l.to_node):
            if ref not in nodes:
                bad(ent, "node reference resolves", f"unknown node '{ref}'")

    if not any(l.is_origin for l in spec.links):
        bad("network", ">= 1 origin link", "no link has origin set")
    if not any(l.is_sink for l in spec.links):
        bad("network", ">= 1 sink link", "no link has sink set")

    movements = {}
    for m in spec.movements:
        ent = f"movement {m.key}"
        if m.key in movements:
            bad(ent, "unique movement", "duplicate from/to pair")
        movements[m.key] = m
        if not (0 < m.turn_ratio <= 1):
            bad(ent, "turn ratio in (0, 1]", f"beta = {m.turn_ratio}")
        if not m.saturation_rate > 0:
            bad(ent, "saturation_rate > 0", f"s = {m.saturation_rate}")
        if m.node not in nodes:
            bad(ent, "node reference resolves", f"unknown node '{m.node}'")
        fl, tl = links.get(m.from_link), links.get(m.to_link)
        if fl is None:
            bad(ent, "link reference resolves", f"unknown link '{m.from_link}'")
        if tl is None:
            bad(ent, "link reference resolves", f"unknown link '{m.to_link}'")
        if fl is not None and tl is not None and m.node in nodes:
            if fl.to_node != m.node or tl.from_node != m.node:
                bad(ent, "movement crosses its node",
                    f"'{m.from_link}' ends at '{fl.to_node}', "
                    f"'{m.to_link}' starts at '{tl.from_node}', node is '{m.node}'")
        if fl is not None and fl.is_sink:
            bad(ent, "sink links have no outgoing movements",
                f"'{m.from_link}' is a sink")

    # Turn ratios partition each movement-bearing incoming link.
    beta_sums: dict = {}
    for m in spec.movements:
        beta_sums.setdefault(m.from_link, 0.0)
        beta_sums[m.from_link] += m.turn_ratio
    for link_id, s in beta_sums.items():
        if abs(s - 1.0) > 1e-9:
            bad(f"link {link_id}", "turn ratios sum != 1",
                f"sum of beta over movements = {s:.12g}")

    moves_at_node: dict = {}
    for m in spec.movements:
        moves_at_node.setdefault(m.node, set()).add(m.key)

    for n in spec.nodes:
        ent = f"node {n.id}"
        here = moves_at_node.get(n.id, set())
        if n.signalized:
            if len(n.phases) < 2:
                bad(ent, "signalized node needs >= 2 phases",
                    f"has {len(n.phases)}")
            covered: set = set()
            for i, ph in enumerate(n.phases):
                if not ph.movements:
                    bad(ent, "phase non-empty", f"phase {i} grants nothing")
                for mk in ph.movements:
                    if mk not in here:
                        bad(ent, "phase movements belong to node",
                            f"phase {i} references '{mk}'")
                    covered.add(mk)
            for mk in sorted(here - covered):
                bad(ent, "every movement appears in >= 1 phase",
                    f"'{mk}' is never granted green")
        elif n.phases:
            bad(ent, "phases empty iff unsignalized",
                f"unsignalized node defines {len(n.phases)} phases")

    return out


class CompiledNetwork:
    """Flat-array form of a validated :class:`NetworkSpec`.

    Immutable after construction; one instance can back any number of
    concurrently stepping simulation states.
    """

    def __init__(self, spec: NetworkSpec):
        diags = validate(spec)
        if diags:
            raise ValueError(
                "network fails validation:\n" + "\n".join(str(d) for d in diags))

        self.spec = spec
        self.dt = float(spec.dt)

        self.node_ids = [n.id for n in spec.nodes]
        self.link_ids = [l.id for l in spec.links]
        node_index = {nid: i for i, nid in enumerate(self.node_ids)}
        link_index = {lid: i for i, lid in enumerate(self.link_ids)}
        self.node_index, self.link_index = node_index, link_index

        n_links = len(spec.links)
        self.node_xy = np.array(
            [n.position for n in spec.nodes], dtype=np.float64).reshape(-1, 2)

        # Discretize each link into cells of exactly vf*dt (CFL), at least one
        # cell per link; the analytic length survives only as metadata.
        self.link_first = np.zeros(n_links, dtype=np.int64)
        self.link_last = np.zeros(n_links, dtype=np.int64)
        self.link_ncells = np.zeros(n_links, dtype=np.int64)
        cell_link: list = []
        for li, l in enumerate(spec.links):
            dx = l.free_flow_speed * self.dt
            n_cells = max(1, int(round(l.length / dx)))
            self.link_first[li] = len(cell_link)
            self.link_ncells[li] = n_cells
            cell_link.extend([li] * n_cells)
            self.link_last[li] = len(cell_link) - 1

        self.n_cells = len(cell_link)
        self.cell_link = np.asarray(cell_link, dtype=np.int64)

        link_arr = lambda attr: np.array(
            [getattr(l, attr) for l in spec.links], dtype=np.float64)
        self.cell_lanes = link_arr("lanes")[self.cell_link]
        self.cell_vf = link_arr("free_flow_speed")[self.cell_link]
        self.cell_w = link_arr("wave_speed")[self.cell_link]
        self.cell_kj = link_arr("jam_density")[self.cell_link]
        self.cell_q = link_arr("capacity")[self.cell_link]
        self.cell_dx = self.cell_vf * self.dt

        self.cell_down = np.full(self.n_cells, -1, dtype=np.int64)
        for li in range(n_links):
            f, last = self.link_first[li], self.link_last[li]
            if last > f:
                self.cell_down[f:last] = np.arange(f + 1, last + 1)

        # Signalized nodes get dense indices in node input order.
        self.sig_nodes = np.array(
            [node_index[n.id] for n in spec.nodes if n.signalized], dtype=np.int64)
        sig_of_node = {int(ni): si for si, ni in enumerate(self.sig_nodes)}
        self.n_sig = len(self.sig_nodes)
        sig_specs = [spec.nodes[i] for i in self.sig_nodes]
        self.sig_yellow = np.array([n.yellow_time for n in sig_specs], dtype=np.float64)
        self.sig_all_red = np.array([n.all_red_time for n in sig_specs], dtype=np.float64)
        self.sig_nphases = np.array([len(n.phases) for n in sig_specs], dtype=np.int64)

        # Movements, in input order.
        n_mov = len(spec.movements)
        self.n_movements = n_mov
        self.mov_keys = [m.key for m in spec.movements]
        mov_index = {k: i for i, k in enumerate(self.mov_keys)}
        self.mov_index = mov_index
        self.mov_up = np.zeros(n_mov, dtype=np.int64)
        self.mov_down = np.zeros(n_mov, dtype=np.int64)
        self.mov_beta = np.zeros(n_mov, dtype=np.float64)
        self.mov_sat = np.zeros(n_mov, dtype=np.float64)
        self.mov_node = np.zeros(n_mov, dtype=np.int64)
        self.mov_sig = np.full(n_mov, -1, dtype=np.int64)
        self.mov_phase_mask = np.zeros(n_mov, dtype=np.int64)
        for mi, m in enumerate(spec.movements):
            self.mov_up[mi] = self.link_last[link_index[m.from_link]]
            self.mov_down[mi] = self.link_first[link_index[m.to_link]]
            self.mov_beta[mi] = m.turn_ratio
            self.mov_sat[mi] = m.saturation_rate
            ni = node_index[m.node]
            self.mov_node[mi] = ni
            self.mov_sig[mi] = sig_of_node.get(ni, -1)

        # Per-(signalized node, phase) movement table in CSR layout, plus a
        # per-movement membership bitmask over its node's local phase indices.
        self.sig_phase_start = np.zeros(self.n_sig, dtype=np.int64)
        ptr = [0]
        phase_movs: list = []
        row = 0
        for si, n in enumerate(sig_specs):
            self.sig_phase_start[si] = row
            for p, ph in enumerate(n.phases):
                for mk in ph.movements:
                    mi = mov_index[mk]
                    phase_movs.append(mi)
                    self.mov_phase_mask[mi] |= np.int64(1 << p)
                ptr.append(len(phase_movs))
                row += 1
        self.sig_phase_ptr = np.asarray(ptr, dtype=np.int64)
        self.phase_movs = np.asarray(phase_movs, dtype=np.int64)
        self.n_phase_rows = row

        self.origin_links = np.array(
            [link_index[l.id] for l in spec.links if l.is_origin], dtype=np.int64)
        self.origin_first_cell = self.link_first[self.origin_links]
        self.sink_links = np.array(
            [link_index[l.id] for l in spec.links if l.is_sink], dtype=np.int64)
        self.sink_last_cell = self.link_last[self.sink_links]
        self.sink_cap = (link_arr("capacity") * link_arr("lanes"))[self.sink_links]

        # Cells on incoming links of signalized nodes count toward queues.
        link_to_node = np.array(
            [node_index[l.to_node] for l in spec.links], dtype=np.int64)
        node_sig = np.zeros(len(spec.nodes), dtype=bool)
        node_sig[self.sig_nodes] = True
        self.link_to_sig = np.where(
            node_sig[link_to_node],
            np.array([sig_of_node.get(int(t), -1) for t in link_to_node]), -1)
        self.cell_queue_sig = self.link_to_sig[self.cell_link]
        self.cell_kc = self.cell_q / self.cell_vf

        self._freeze_arrays()

    def _freeze_arrays(self):
        for k, v in vars(self).items():
            if isinstance(v, np.ndarray):
                v.setflags(write=False)

    # Convenience views -----------------------------------------------------

    def link_cells(self, link_id: str) -> np.ndarray:
        li = self.link_index[link_id]
        return np.arange(self.link_first[li], self.link_last[li] + 1)

    def incoming_links(self, node_id: str) -> list:
        ni = self.node_index[node_id]
        return [l.id for l in self.spec.links
                if self.node_index[l.to_node] == ni]

    def describe(self) -> str:
        return (f"{len(self.link_ids)} links, {self.n_cells} cells, "
                f"{self.n_movements} movements, {self.n_sig} signalized nodes")


def compile_network(spec: NetworkSpec) -> CompiledNetwork:
    """Validate and flatten a network; raises ValueError on any diagnostic."""
    return CompiledNetwork(spec)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

_NODE_KEYS = {"id", "x", "y", "signalized", "phases", "yellow", "all_red"}
_LINK_KEYS = {"id", "from", "to", "length", "lanes", "vf", "w", "kj", "q",
              "origin", "sink", "geometry"}
_MOV_KEYS = {"from_link", "to_link", "beta", "sat", "node"}
_TOP_KEYS = {"dt", "nodes", "links", "movements", "metadata"}


class NetworkFormatError(ValueError):
    """Raised when a network document violates the JSON schema."""


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise NetworkFormatError(f"{path}: missing required field '{key}'")
    return doc[key]


def load_network_json(data) -> NetworkSpec:
    """Parse a UTF-8 JSON network document.

    Unknown fields are preserved (per-entity in ``extra``, top-level under
    ``metadata['_extra']``) so that documents round-trip through save.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    if isinstance(data, str):
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise NetworkFormatError(
                f"line {e.lineno}, column {e.colno}: {e.msg}") from e
    else:
        doc = data
    if not isinstance(doc, dict):
        raise NetworkFormatError("top level: expected an object")

    nodes = []
    for i, nd in enumerate(doc.get("nodes", [])):
        path = f"nodes[{i}]"
        nid = str(_require(nd, "id", path))
        phases = tuple(
            PhaseSpec(movements=tuple(str(m) for m in _require(ph, "movements", f"{path}.phases[{j}]")))
            for j, ph in enumerate(nd.get("phases") or []))
        nodes.append(NodeSpec(
            id=nid,
            position=(float(nd.get("x", 0.0)), float(nd.get("y", 0.0))),
            signalized=bool(nd.get("signalized", False)),
            phases=phases,
            yellow_time=float(nd.get("yellow", DEFAULT_YELLOW)),
            all_red_time=float(nd.get("all_red", DEFAULT_ALL_RED)),
            extra={k: v for k, v in nd.items() if k not in _NODE_KEYS},
        ))

    links = []
    for i, ld in enumerate(doc.get("links", [])):
        path = f"links[{i}]"
        geometry = ld.get("geometry")
        if geometry is not None:
            geometry = tuple((float(p[0]), float(p[1])) for p in geometry)
        links.append(LinkSpec(
            id=str(_require(ld, "id", path)),
            from_node=str(_require(ld, "from", path)),
            to_node=str(_require(ld, "to", path)),
            length=float(_require(ld, "length", path)),
            lanes=int(ld.get("lanes", 1)),
            free_flow_speed=float(ld.get("vf", DEFAULT_FREE_FLOW_SPEED)),
            wave_speed=float(ld.get("w", DEFAULT_WAVE_SPEED)),
            jam_density=float(ld.get("kj", DEFAULT_JAM_DENSITY)),
            capacity=float(ld.get("q", DEFAULT_CAPACITY)),
            is_origin=bool(ld.get("origin", False)),
            is_sink=bool(ld.get("sink", False)),
            geometry=geometry,
            extra={k: v for k, v in ld.items() if k not in _LINK_KEYS},
        ))

    movements = []
    for i, md in enumerate(doc.get("movements", [])):
        path = f"movements[{i}]"
        movements.append(MovementSpec(
            from_link=str(_require(md, "from_link", path)),
            to_link=str(_require(md, "to_link", path)),
            turn_ratio=float(_require(md, "beta", path)),
            saturation_rate=float(_require(md, "sat", path)),
            node=str(_require(md, "node", path)),
            extra={k: v for k, v in md.items() if k not in _MOV_KEYS},
        ))

    metadata = dict(doc.get("metadata") or {})
    top_extra = {k: v for k, v in doc.items() if k not in _TOP_KEYS}
    if top_extra:
        metadata["_extra"] = top_extra

    spec = NetworkSpec(nodes=nodes, links=links, movements=movements,
                       dt=float(doc.get("dt", 1.0)), metadata=metadata)

    # Dangling references fail loudly at load time, not at compile time.
    diags = [d for d in validate(spec)
             if "resolves" in d.rule or "reference" in d.rule]
    if diags:
        raise NetworkFormatError("; ".join(str(d) for d in diags))
    return spec


def save_network_json(spec: NetworkSpec, indent: Optional[int] = None) -> bytes:
    """Serialize a NetworkSpec to canonical UTF-8 JSON bytes."""
    nodes = []
    for n in spec.nodes:
        nd: dict = {
            "id": n.id, "x": n.position[0], "y": n.position[1],
            "signalized": n.signalized,
            "phases": [{"movements": list(ph.movements)} for ph in n.phases],
            "yellow": n.yellow_time, "all_red": n.all_red_time,
        }
        nd.update(n.extra)
        nodes.append(nd)

    links = []
    for l in spec.links:
        ld: dict = {
            "id": l.id, "from": l.from_node, "to": l.to_node,
            "length": l.length, "lanes": l.lanes,
            "vf": l.free_flow_speed, "w": l.wave_speed,
            "kj": l.jam_density, "q": l.capacity,
            "origin": l.is_origin, "sink": l.is_sink,
        }
        if l.geometry is not None:
            ld["geometry"] = [list(p) for p in l.geometry]
        ld.update(l.extra)
        links.append(ld)

    movements = []
    for m in spec.movements:
        md: dict = {"from_link": m.from_link, "to_link": m.to_link,
                    "beta": m.turn_ratio, "sat": m.saturation_rate,
                    "node": m.node}
        md.update(m.extra)
        movements.append(md)

    metadata = dict(spec.metadata)
    top_extra = metadata.pop("_extra", {})
    doc = {"dt": spec.dt, "nodes": nodes, "links": links,
           "movements": movements, "metadata": metadata}
    doc.update(top_extra)
    return json.dumps(doc, indent=indent, sort_keys=False).encode("utf-8")

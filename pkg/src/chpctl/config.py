"""System configuration: declarative description of the coupled grid.

The on-disk format is YAML with the top-level sections ``eps``, ``dhs``,
``hps``, ``costs``, ``constants`` and ``weights``.  See ``docs/schema.md``
for field-by-field documentation.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

SOURCE = "source"
HEATPUMP = "heatpump"
LOAD = "load"
EDGE_KINDS = (SOURCE, HEATPUMP, LOAD)

FLOW_BALANCE_RTOL = 1e-9


class ConfigError(ValueError):
    """Raised when a configuration violates a structural invariant."""


@dataclass(frozen=True)
class EpsBus:
    id: int
    inertia: float
    damping: float
    gov_time: float
    droop: float
    is_reference: bool = False
    voltage: float = 1.0


@dataclass(frozen=True)
class EpsLine:
    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class DhsEdge:
    """Edge of the heating network.

    ``flow`` is the volumetric throughput that multiplies temperature
    differences in the energy balance.  ``load_share`` only matters for
    load edges: it is the fraction of a scenario's total heat load drawn
    at this edge (pipes are load edges with zero share).
    """

    id: int
    kind: str
    volume: float
    flow: float
    upstream_node: int
    load_share: float = 0.0


@dataclass(frozen=True)
class DhsNode:
    id: int
    volume: float
    incoming_edges: tuple[int, ...]


@dataclass(frozen=True)
class HeatPump:
    id: int
    bus: int
    edge: int
    cop: float
    gain_e: float
    gain_h: float


@dataclass(frozen=True)
class CostConfig:
    source_cost: dict[int, float]
    temp_penalty: float = 1.0
    edge_penalty: dict[int, float] = field(default_factory=dict)
    node_penalty: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class PhysicalConstants:
    rho: float = 1000.0
    cp: float = 4186.0
    agc_gain: float = 1.0
    power_base: float = 1.0e6
    d_min: float = 1.0e-3


@dataclass(frozen=True)
class WeightConfig:
    """Loop-shaping weight and synthesis tolerances."""

    cutoff: float = 2.0 * 3.141592653589793 * 0.003
    alpha: float = 0.01
    eps: float = 1.0e-6
    rho_min: float = 1.0e-4
    rho_max: float = 1.0
    gain_bound: float = 10.0
    decay: float = 0.005


@dataclass(frozen=True)
class SystemConfig:
    buses: tuple[EpsBus, ...]
    lines: tuple[EpsLine, ...]
    edges: tuple[DhsEdge, ...]
    nodes: tuple[DhsNode, ...]
    heat_pumps: tuple[HeatPump, ...]
    costs: CostConfig
    constants: PhysicalConstants = PhysicalConstants()
    weights: WeightConfig = WeightConfig()

    def with_gains(self, gain_e: float | None = None, gain_h: float | None = None) -> "SystemConfig":
        """Copy with every heat pump's coupling gains overridden."""
        hps = tuple(
            replace(
                hp,
                gain_e=hp.gain_e if gain_e is None else float(gain_e),
                gain_h=hp.gain_h if gain_h is None else float(gain_h),
            )
            for hp in self.heat_pumps
        )
        return replace(self, heat_pumps=hps)

    def with_volume(self, volume: float) -> "SystemConfig":
        """Copy with a uniform water volume on every edge and node."""
        edges = tuple(replace(e, volume=float(volume)) for e in self.edges)
        nodes = tuple(replace(n, volume=float(volume)) for n in self.nodes)
        return replace(self, edges=edges, nodes=nodes)

    def with_weights(self, **kw) -> "SystemConfig":
        return replace(self, weights=replace(self.weights, **kw))

    @property
    def n_sources(self) -> int:
        return sum(e.kind == SOURCE for e in self.edges)

    def to_dict(self) -> dict:
        return {
            "eps": {
                "buses": [asdict(b) for b in self.buses],
                "lines": [asdict(line) for line in self.lines],
            },
            "dhs": {
                "edges": [asdict(e) for e in self.edges],
                "nodes": [dict(asdict(n), incoming_edges=list(n.incoming_edges)) for n in self.nodes],
            },
            "hps": [asdict(h) for h in self.heat_pumps],
            "costs": {
                "source_cost": dict(self.costs.source_cost),
                "temp_penalty": self.costs.temp_penalty,
                "edge_penalty": dict(self.costs.edge_penalty),
                "node_penalty": dict(self.costs.node_penalty),
            },
            "constants": asdict(self.constants),
            "weights": asdict(self.weights),
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """SHA-256 of the canonical serialization (fully resolved)."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(raw: dict) -> SystemConfig:
    """Build and validate a :class:`SystemConfig` from parsed YAML."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    try:
        eps, dhs, hps, costs = raw["eps"], raw["dhs"], raw.get("hps", []), raw["costs"]
    except KeyError as exc:
        raise ConfigError(f"missing section {exc}") from None

    buses = tuple(_build(EpsBus, b, f"eps.buses[{i}]") for i, b in enumerate(eps.get("buses", [])))
    lines = tuple(_build(EpsLine, b, f"eps.lines[{i}]") for i, b in enumerate(eps.get("lines", []) or []))
    edges = tuple(_build(DhsEdge, e, f"dhs.edges[{i}]") for i, e in enumerate(dhs.get("edges", [])))
    nodes = []
    for i, n in enumerate(dhs.get("nodes", [])):
        node = _build(DhsNode, n, f"dhs.nodes[{i}]")
        nodes.append(replace(node, incoming_edges=tuple(int(j) for j in node.incoming_edges)))
    heat_pumps = tuple(_build(HeatPump, h, f"hps[{i}]") for i, h in enumerate(hps or []))

    costs = dict(costs)
    for key in ("source_cost", "edge_penalty", "node_penalty"):
        costs[key] = {int(k): float(v) for k, v in (costs.get(key) or {}).items()}
    cost_cfg = _build(CostConfig, costs, "costs")
    constants = _build(PhysicalConstants, raw.get("constants") or {}, "constants")
    weights = _build(WeightConfig, raw.get("weights") or {}, "weights")

    cfg = SystemConfig(buses, lines, edges, tuple(nodes), heat_pumps, cost_cfg, constants, weights)
    validate(cfg)
    return cfg


def loads(text: str) -> SystemConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return from_dict(raw)


def load_config(path) -> SystemConfig:
    """Parse and validate a YAML configuration file."""
    return loads(Path(path).read_text())


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(cfg.dumps())


def _connected(vertices, pairs) -> bool:
    if not vertices:
        return True
    adj = defaultdict(set)
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    start = next(iter(vertices))
    seen = {start}
    todo = deque([start])
    while todo:
        v = todo.popleft()
        for w in adj[v] - seen:
            seen.add(w)
            todo.append(w)
    return seen == set(vertices)


def validate(cfg: SystemConfig) -> None:
    """Check every structural invariant; raise :class:`ConfigError` on the first violation."""
    # electric side
    if not cfg.buses:
        raise ConfigError("eps: at least one bus is required")
    bus_ids = [b.id for b in cfg.buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise ConfigError("eps: duplicate bus ids")
    refs = [b.id for b in cfg.buses if b.is_reference]
    if len(refs) != 1:
        raise ConfigError(f"eps: exactly one reference bus required, found {len(refs)}")
    for b in cfg.buses:
        if not (b.inertia > 0 and b.gov_time > 0 and b.droop > 0 and b.voltage > 0):
            raise ConfigError(f"bus {b.id}: inertia, gov_time, droop and voltage must be positive")
        if b.damping < cfg.constants.d_min or cfg.constants.d_min <= 0:
            raise ConfigError(f"bus {b.id}: damping {b.damping} below d_min {cfg.constants.d_min}")
    for line in cfg.lines:
        if line.from_bus not in bus_ids or line.to_bus not in bus_ids:
            raise ConfigError(f"line {line.from_bus}-{line.to_bus}: unknown bus")
        if line.from_bus == line.to_bus:
            raise ConfigError(f"line {line.from_bus}-{line.to_bus}: self loop")
        if not line.susceptance > 0:
            raise ConfigError(f"line {line.from_bus}-{line.to_bus}: susceptance must be positive")
    if not _connected(bus_ids, [(line.from_bus, line.to_bus) for line in cfg.lines]):
        raise ConfigError("eps: line graph is not connected")

    # heating side
    edge_ids = [e.id for e in cfg.edges]
    node_ids = [n.id for n in cfg.nodes]
    if len(set(edge_ids)) != len(edge_ids):
        raise ConfigError("dhs: duplicate edge ids")
    if len(set(node_ids)) != len(node_ids):
        raise ConfigError("dhs: duplicate node ids")
    edges = {e.id: e for e in cfg.edges}
    for e in cfg.edges:
        if e.kind not in EDGE_KINDS:
            raise ConfigError(f"edge {e.id}: kind must be one of {EDGE_KINDS}")
        if not (e.volume > 0 and e.flow > 0):
            raise ConfigError(f"edge {e.id}: volume and flow must be positive")
        if e.upstream_node not in node_ids:
            raise ConfigError(f"edge {e.id}: unknown upstream node {e.upstream_node}")
        if e.load_share < 0 or (e.load_share and e.kind != LOAD):
            raise ConfigError(f"edge {e.id}: load_share must be >= 0 and only set on load edges")
    if not any(e.kind == SOURCE for e in cfg.edges):
        raise ConfigError("dhs: at least one source edge is required")
    owner: dict[int, int] = {}
    for n in cfg.nodes:
        if not n.volume > 0:
            raise ConfigError(f"node {n.id}: volume must be positive")
        for j in n.incoming_edges:
            if j not in edges:
                raise ConfigError(f"node {n.id}: unknown incoming edge {j}")
            if j in owner:
                raise ConfigError(f"edge {j}: incoming to both node {owner[j]} and node {n.id}")
            owner[j] = n.id
    missing = sorted(set(edge_ids) - set(owner))
    if missing:
        raise ConfigError(f"edges {missing} are not incoming to any node")
    for n in cfg.nodes:
        inflow = sum(edges[j].flow for j in n.incoming_edges)
        outflow = sum(e.flow for e in cfg.edges if e.upstream_node == n.id)
        if abs(inflow - outflow) > FLOW_BALANCE_RTOL * max(inflow, outflow, 1e-300):
            raise ConfigError(f"node {n.id} hydraulic imbalance: in {inflow!r} != out {outflow!r}")

    # couplings
    hp_edges = [hp.edge for hp in cfg.heat_pumps]
    hp_buses = [hp.bus for hp in cfg.heat_pumps]
    if len({hp.id for hp in cfg.heat_pumps}) != len(cfg.heat_pumps):
        raise ConfigError("hps: duplicate heat pump ids")
    if len(set(hp_edges)) != len(hp_edges) or len(set(hp_buses)) != len(hp_buses):
        raise ConfigError("hps: bus and edge assignments must be injective")
    for hp in cfg.heat_pumps:
        if hp.bus not in bus_ids:
            raise ConfigError(f"hp {hp.id}: unknown bus {hp.bus}")
        if hp.edge not in edges or edges[hp.edge].kind != HEATPUMP:
            raise ConfigError(f"hp {hp.id}: edge {hp.edge} is not a heatpump edge")
        if not hp.cop > 0 or hp.gain_e < 0 or hp.gain_h < 0:
            raise ConfigError(f"hp {hp.id}: cop must be positive and gains nonnegative")
    unpaired = sorted(e.id for e in cfg.edges if e.kind == HEATPUMP and e.id not in hp_edges)
    if unpaired:
        raise ConfigError(f"heatpump edges {unpaired} have no heat pump")

    # costs
    src = sorted(e.id for e in cfg.edges if e.kind == SOURCE)
    if sorted(cfg.costs.source_cost) != src:
        raise ConfigError(f"costs.source_cost must list exactly the source edges {src}")
    if any(not f > 0 for f in cfg.costs.source_cost.values()):
        raise ConfigError("costs.source_cost must be strictly positive")
    penalties = [cfg.costs.temp_penalty, *cfg.costs.edge_penalty.values(), *cfg.costs.node_penalty.values()]
    if any(not p > 0 for p in penalties):
        raise ConfigError("temperature penalties must be strictly positive")
    if set(cfg.costs.edge_penalty) - set(edge_ids) or set(cfg.costs.node_penalty) - set(node_ids):
        raise ConfigError("costs: penalty override for unknown element")

    c = cfg.constants
    if not (c.rho > 0 and c.cp > 0 and c.agc_gain > 0 and c.power_base > 0):
        raise ConfigError("constants: rho, cp, agc_gain and power_base must be positive")
    w = cfg.weights
    if not (w.cutoff > 0 and 0 < w.alpha < 1 and w.eps > 0 and w.gain_bound > 0):
        raise ConfigError("weights: cutoff, eps, gain_bound must be positive and 0 < alpha < 1")
    if not 0 < w.rho_min <= w.rho_max:
        raise ConfigError("weights: need 0 < rho_min <= rho_max")
    if w.decay < 0:
        raise ConfigError("weights: decay must be nonnegative")

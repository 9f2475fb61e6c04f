"""Synthetic test networks.

The generator produces hydraulically balanced heating networks paired
with a radial electric feeder of the same size.  Parameter ranges:

============================  =====================
edge/node water volume        0.05 m^3 (50 L)
ring flow                     0.04-0.06 m^3/s
radial pair flow              0.02-0.06 m^3/s
bus inertia M                 0.5-1.5
bus damping D                 0.5-1.0
governor time constant T_g    0.3-0.8 s
droop K^P                     1.0-2.0
line susceptance |B|          5-15
source cost f                 (0.5-2.0)e-6 per W^2
temperature penalty F^D       5e-3 per K^2
============================  =====================

Sizes of at least 8 get three heat pumps on the edges leaving nodes
``{1, N-1, N}`` (for the 33-node ring these are edges 1, 32, 33), and three
sources; smaller networks get one heat pump and two sources (one source
when there is no other way to keep a load edge; size 2 has no load edge).
"""

from __future__ import annotations

import numpy as np

from .config import (
    HEATPUMP,
    LOAD,
    SOURCE,
    ConfigError,
    CostConfig,
    DhsEdge,
    DhsNode,
    EpsBus,
    EpsLine,
    HeatPump,
    PhysicalConstants,
    SystemConfig,
    WeightConfig,
    validate,
)

VOLUME = 0.05
COP = 3.0
TEMP_PENALTY = 5.0e-3


def _hp_nodes(size: int) -> list[int]:
    return [1] if size < 8 else [1, size - 1, size]


def _pipes(size: int, topology: str, rng: np.random.Generator):
    """Return (edge id, upstream node, downstream node, flow) tuples."""
    if topology == "ring":
        q = float(rng.uniform(0.04, 0.06))
        return [(j, j, j % size + 1, q) for j in range(1, size + 1)]
    if topology == "radial":
        out = []
        nid = 1
        for child in range(2, size + 1):
            parent = int(rng.integers(max(1, child - 3), child))
            q = float(rng.uniform(0.02, 0.06))
            out.append((nid, parent, child, q))
            out.append((nid + 1, child, parent, q))
            nid += 2
        return out
    raise ConfigError(f"unknown topology {topology!r} (expected ring or radial)")


def gen_network(size: int, topology: str = "ring", seed: int = 0, gain_e: float = 0.6, gain_h: float = 0.6) -> SystemConfig:
    """Generate a deterministic synthetic coupled network with ``size`` nodes and buses."""
    if int(size) != size or size < 2:
        raise ConfigError(f"size must be an integer >= 2, got {size!r}")
    size = int(size)
    rng = np.random.default_rng(seed)
    pipes = _pipes(size, topology, rng)

    hp_nodes = _hp_nodes(size)
    hp_edges = []
    for k in hp_nodes:
        hp_edges.append(next(p[0] for p in pipes if p[1] == k and p[0] not in hp_edges))
    free = [p[0] for p in pipes if p[0] not in hp_edges]
    n_src = min(2 if size < 8 else 3, len(free))
    if n_src > 1 and n_src == len(free):  # leave room for a load edge
        n_src -= 1
    picks = np.linspace(0, len(free) - 1, n_src + 2)[1:-1] if len(free) > n_src else np.arange(n_src)
    src_edges = sorted({free[int(round(i))] for i in picks})
    if len(src_edges) < n_src:
        src_edges = free[:n_src]

    edges = []
    load_edges = [p[0] for p in pipes if p[0] not in hp_edges and p[0] not in src_edges]
    loaded = set(load_edges[:: 2]) or set(load_edges[:1])
    for eid, up, _down, q in pipes:
        if eid in hp_edges:
            kind, share = HEATPUMP, 0.0
        elif eid in src_edges:
            kind, share = SOURCE, 0.0
        else:
            kind = LOAD
            share = float(rng.uniform(0.5, 1.5)) if eid in loaded else 0.0
        edges.append(DhsEdge(eid, kind, VOLUME, q, up, share))
    nodes = [
        DhsNode(k, VOLUME, tuple(p[0] for p in pipes if p[2] == k)) for k in range(1, size + 1)
    ]

    buses = []
    for i in range(1, size + 1):
        buses.append(
            EpsBus(
                id=i,
                inertia=float(rng.uniform(0.5, 1.5)),
                damping=float(rng.uniform(0.5, 1.0)),
                gov_time=float(rng.uniform(0.3, 0.8)),
                droop=float(rng.uniform(1.0, 2.0)),
                is_reference=(i == 1),
            )
        )
    lines = []
    for i in range(2, size + 1):
        parent = int(rng.integers(max(1, i - 3), i))
        lines.append(EpsLine(parent, i, float(rng.uniform(5.0, 15.0))))
    if size >= 6:
        lines.append(EpsLine(size // 2, size, float(rng.uniform(5.0, 15.0))))

    hps = [
        HeatPump(k + 1, bus, edge, COP, gain_e, gain_h)
        for k, (bus, edge) in enumerate(zip(hp_nodes, hp_edges))
    ]
    costs = CostConfig(
        source_cost={j: float(rng.uniform(0.5, 2.0)) * 1e-6 for j in src_edges},
        temp_penalty=TEMP_PENALTY,
    )
    ref = buses[0]
    agc = 0.8 * (ref.damping + ref.droop) / ref.gov_time
    cfg = SystemConfig(
        tuple(buses), tuple(lines), tuple(edges), tuple(nodes), tuple(hps), costs,
        PhysicalConstants(agc_gain=round(agc, 6)), WeightConfig(),
    )
    validate(cfg)
    return cfg


def minimal_ring(flow: float = 1.0, volume: float = 1.0, rho_cp: float = 1.0) -> SystemConfig:
    """Two nodes joined by one source edge (1 -> 2) and one load edge (2 -> 1)."""
    edges = (
        DhsEdge(1, SOURCE, volume, flow, upstream_node=1),
        DhsEdge(2, LOAD, volume, flow, upstream_node=2, load_share=1.0),
    )
    nodes = (DhsNode(1, volume, (2,)), DhsNode(2, volume, (1,)))
    bus = EpsBus(1, inertia=1.0, damping=1.0, gov_time=0.1, droop=1.0, is_reference=True)
    return SystemConfig(
        buses=(bus,),
        lines=(),
        edges=edges,
        nodes=nodes,
        heat_pumps=(),
        costs=CostConfig(source_cost={1: 1.0}, temp_penalty=1.0),
        constants=PhysicalConstants(rho=rho_cp, cp=1.0, agc_gain=1.0, power_base=1.0),
    )

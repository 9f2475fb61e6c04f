"""Assembly of the constant matrices of the heating network and its coupling.

Element order is canonical throughout the package: source edges, heat-pump
edges, load edges, nodes; each block sorted by id.  Heat quantities are
carried in watts and divided by ``rho * cp`` here, so the Kirchhoff matrix
only contains flows.  Heat-pump electrical power is in per unit and
converted with ``constants.power_base``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import HEATPUMP, LOAD, SOURCE, ConfigError, SystemConfig


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the thermal state vector."""

    source_edges: tuple[int, ...]
    hp_edges: tuple[int, ...]
    load_edges: tuple[int, ...]
    nodes: tuple[int, ...]

    @property
    def edges(self) -> tuple[int, ...]:
        return self.source_edges + self.hp_edges + self.load_edges

    @property
    def n_g(self) -> int:
        return len(self.source_edges)

    @property
    def n_hp(self) -> int:
        return len(self.hp_edges)

    @property
    def n_e(self) -> int:
        return len(self.edges)

    @property
    def n_x(self) -> int:
        return self.n_e + len(self.nodes)

    def edge_index(self, edge_id: int) -> int:
        return self.edges.index(edge_id)

    def node_index(self, node_id: int) -> int:
        return self.n_e + self.nodes.index(node_id)

    def labels(self) -> list[str]:
        return (
            [f"TG{j}" for j in self.source_edges]
            + [f"THP{j}" for j in self.hp_edges]
            + [f"TL{j}" for j in self.load_edges]
            + [f"TN{k}" for k in self.nodes]
        )


def layout(cfg: SystemConfig) -> Layout:
    by_kind = {k: tuple(sorted(e.id for e in cfg.edges if e.kind == k)) for k in (SOURCE, HEATPUMP, LOAD)}
    return Layout(by_kind[SOURCE], by_kind[HEATPUMP], by_kind[LOAD], tuple(sorted(n.id for n in cfg.nodes)))


def heat_pump_order(cfg: SystemConfig):
    """Heat pumps ordered like their edges in the heat-pump block."""
    return sorted(cfg.heat_pumps, key=lambda hp: hp.edge)


def build_kirchhoff(cfg: SystemConfig, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Return the Kirchhoff matrix ``A_h`` and element volumes in state order.

    Edge row ``j`` carries ``+q_j`` on the diagonal and ``-q_j`` in the
    column of its upstream node; node row ``k`` carries the summed inflow on
    the diagonal and ``-q_j`` for each incoming edge ``j``.
    """
    lay = layout(cfg)
    n = lay.n_x
    edges = {e.id: e for e in cfg.edges}
    A_h = np.zeros((n, n))
    vol = np.zeros(n)
    for j in lay.edges:
        e = edges[j]
        r = lay.edge_index(j)
        A_h[r, r] += e.flow
        A_h[r, lay.node_index(e.upstream_node)] -= e.flow
        vol[r] = e.volume
    for node in cfg.nodes:
        r = lay.node_index(node.id)
        vol[r] = node.volume
        for j in node.incoming_edges:
            A_h[r, r] += edges[j].flow
            A_h[r, lay.edge_index(j)] -= edges[j].flow

    colsum = A_h.sum(axis=0)
    scale = np.abs(A_h).sum(axis=0)
    for k in lay.nodes:
        c = lay.node_index(k)
        if abs(colsum[c]) > tol * scale[c]:
            raise ConfigError(f"node {k} hydraulic imbalance (column sum {colsum[c]!r})")
    return A_h, vol


def build_error_maps(cfg: SystemConfig):
    """Return ``(C, D, s_T, F_M, F_D)`` defining ``e = C T + D h^G``.

    The first ``n_G - 1`` error rows are the marginal-cost differences of
    consecutive sources, the last row is the penalty-weighted temperature
    sum ``Sig^H``.
    """
    lay = layout(cfg)
    n_g, n_x = lay.n_g, lay.n_x
    f = np.array([cfg.costs.source_cost[j] for j in lay.source_edges], dtype=float)
    F_M = np.zeros((n_g - 1, n_g))
    for i in range(n_g - 1):
        F_M[i, i] = f[i]
        F_M[i, i + 1] = -f[i + 1]

    pen = np.full(n_x, cfg.costs.temp_penalty, dtype=float)
    for j, p in cfg.costs.edge_penalty.items():
        pen[lay.edge_index(j)] = p
    for k, p in cfg.costs.node_penalty.items():
        pen[lay.node_index(k)] = p
    F_D = np.diag(pen)

    C = np.zeros((n_g, n_x))
    C[-1] = pen
    D = np.zeros((n_g, n_g))
    D[:-1] = F_M
    s_T = np.zeros((1, n_g))
    s_T[0, -1] = 1.0
    return C, D, s_T, F_M, F_D


@dataclass(frozen=True)
class DhsMatrices:
    layout: Layout
    A_h: np.ndarray
    volumes: np.ndarray
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    W_L: np.ndarray  # w^h = W_L @ h^L (per load edge, watts)
    C: np.ndarray
    D: np.ndarray
    s_T: np.ndarray
    F_M: np.ndarray
    F_D: np.ndarray
    F_G: np.ndarray
    load_shares: np.ndarray

    def heat_to_w(self, h_load) -> np.ndarray:
        return self.W_L @ np.asarray(h_load, dtype=float)


def build_dhs_matrices(cfg: SystemConfig) -> DhsMatrices:
    lay = layout(cfg)
    A_h, vol = build_kirchhoff(cfg)
    rcp = cfg.constants.rho * cfg.constants.cp
    Vinv = 1.0 / vol
    A = A_h * Vinv[:, None]

    n_x, n_g, n_hp = lay.n_x, lay.n_g, lay.n_hp
    n_l = len(lay.load_edges)
    B1 = np.zeros((n_x, n_g))
    B1[np.arange(n_g), np.arange(n_g)] = Vinv[:n_g] / rcp
    B2 = np.zeros((n_x, n_hp))
    rows = n_g + np.arange(n_hp)
    B2[rows, np.arange(n_hp)] = Vinv[rows] * cfg.constants.power_base / rcp
    W_L = np.zeros((n_x, n_l))
    rows = n_g + n_hp + np.arange(n_l)
    W_L[rows, np.arange(n_l)] = -Vinv[rows] / rcp

    edges = {e.id: e for e in cfg.edges}
    shares = np.array([edges[j].load_share for j in lay.load_edges], dtype=float)
    if shares.sum() > 0:
        shares = shares / shares.sum()

    C, D, s_T, F_M, F_D = build_error_maps(cfg)
    F_G = np.diag([cfg.costs.source_cost[j] for j in lay.source_edges])
    return DhsMatrices(lay, A_h, vol, A, B1, B2, W_L, C, D, s_T, F_M, F_D, F_G, shares)


@dataclass(frozen=True)
class CoupledMatrices:
    dm: DhsMatrices
    A_e: np.ndarray
    B_e: np.ndarray
    B_w: np.ndarray
    B_s: np.ndarray
    S_C: np.ndarray
    S_D: np.ndarray
    A_aug: np.ndarray
    B_aug: np.ndarray
    B_cl_w: np.ndarray
    B_cl_h: np.ndarray
    cop: np.ndarray
    gamma_e: np.ndarray
    gamma_h: np.ndarray

    @property
    def n_aug(self) -> int:
        return self.A_aug.shape[0]

    @property
    def n_hp(self) -> int:
        return self.gamma_e.shape[0]

    @property
    def n_g(self) -> int:
        return self.B_aug.shape[1]


def build_coupled_matrices(cfg: SystemConfig, dm: DhsMatrices | None = None) -> CoupledMatrices:
    """Assemble the heat-pump-coupled and integrator-augmented operators."""
    if dm is None:
        dm = build_dhs_matrices(cfg)
    hps = heat_pump_order(cfg)
    n_hp = len(hps)
    n_x, n_g = dm.layout.n_x, dm.layout.n_g
    cop = np.diag([hp.cop for hp in hps]).reshape(n_hp, n_hp)
    g_e = np.diag([hp.gain_e for hp in hps]).reshape(n_hp, n_hp)
    g_h = np.diag([hp.gain_h for hp in hps]).reshape(n_hp, n_hp)
    ones = np.ones((n_hp, 1))

    B_w = dm.B2 @ cop @ g_e
    B_s = dm.B2 @ cop @ g_h @ ones @ dm.s_T
    A_e = -dm.A + B_s @ dm.C
    B_e = dm.B1 + B_s @ dm.D

    A_aug = np.block([[A_e, np.zeros((n_x, n_g))], [dm.C, np.zeros((n_g, n_g))]])
    B_aug = np.vstack([B_e, dm.D])
    B_cl_w = np.vstack([B_w, np.zeros((n_g, n_hp))])
    B_cl_h = np.vstack([np.eye(n_x), np.zeros((n_g, n_x))])
    S_C = g_h @ np.hstack([ones @ dm.s_T @ dm.C, np.zeros((n_hp, n_g))])
    S_D = g_h @ ones @ dm.s_T @ dm.D
    return CoupledMatrices(dm, A_e, B_e, B_w, B_s, S_C, S_D, A_aug, B_aug, B_cl_w, B_cl_h, cop, g_e, g_h)


def assemble(cfg: SystemConfig) -> CoupledMatrices:
    return build_coupled_matrices(cfg, build_dhs_matrices(cfg))

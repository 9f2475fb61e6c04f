import numpy as np
import pytest

from chpctl import lmi, netgen
from chpctl.config import HEATPUMP, LOAD, SOURCE


def rk4(f, y0, h, n):
    """Plain fixed-step RK4, used as a reference integrator in the tests."""
    y = np.array(y0, dtype=float)
    t = 0.0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def scalar_thermal_rhs(cfg, h_src, h_hp, h_load):
    """Element-by-element energy balance, written independently of the matrix assembly.

    ``h_src``, ``h_hp``, ``h_load`` map edge id to injected heat (W, heat
    pumps in per unit of ``power_base``).  Returns a function of the
    temperature dictionary ``{('e', id) | ('n', id): T}``.
    """
    rcp = cfg.constants.rho * cfg.constants.cp
    edges = {e.id: e for e in cfg.edges}

    def rhs(T):
        d = {}
        for e in cfg.edges:
            heat = 0.0
            if e.kind == SOURCE:
                heat = h_src.get(e.id, 0.0)
            elif e.kind == HEATPUMP:
                heat = h_hp.get(e.id, 0.0) * cfg.constants.power_base
            elif e.kind == LOAD:
                heat = -h_load.get(e.id, 0.0)
            d[("e", e.id)] = (rcp * e.flow * (T[("n", e.upstream_node)] - T[("e", e.id)]) + heat) / (rcp * e.volume)
        for n in cfg.nodes:
            acc = sum(edges[j].flow * (T[("e", j)] - T[("n", n.id)]) for j in n.incoming_edges)
            d[("n", n.id)] = acc / n.volume
        return d

    return rhs


def passivity_congruence(d, X, Y, rho):
    P = np.linalg.inv(X)
    K = Y @ P
    T = np.eye(d.n + d.p)
    T[: d.n, : d.n] = X
    return T @ lmi.passivity_bmi(d, P, K, rho) @ T, lmi.passivity_lmi(d, X, Y, rho)


def hinf_congruence(d, w, X, Y, q_w, g2):
    n, p = d.n, d.p
    P = np.linalg.inv(X)
    P_lp = np.block([[P, np.zeros((n, p))], [np.zeros((p, n)), np.eye(p) / q_w]])
    T = np.eye(n + 3 * p)
    T[:n, :n] = X
    T[n:n + p, n:n + p] = q_w * np.eye(p)
    return T @ lmi.hinf_bmi(d, w, P_lp, Y @ P, g2) @ T, lmi.hinf_lmi(d, w, X, Y, q_w, g2)


@pytest.fixture(scope="session")
def toy():
    """Four-node ring with one heat pump and two sources."""
    return netgen.gen_network(4, "ring", 0)


@pytest.fixture(scope="session")
def minimal():
    """Two nodes, one source edge, one load edge, unit flow and volume."""
    return netgen.minimal_ring()


@pytest.fixture(scope="session")
def toy_joint(toy):
    return lmi.synthesize(toy, "joint")


@pytest.fixture(scope="session")
def toy_baseline(toy):
    return lmi.synthesize(toy, "passivity-only")

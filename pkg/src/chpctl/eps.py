"""Electric side: swing equations with governor lag and AGC, and the
strict-positive-realness test for the per-bus generation transfer functions.

All quantities are deviations in per unit.  Angles are carried relative to
the reference bus, ``x_theta = R_I theta`` with ``theta_r = 0``.  Sign
conventions follow the bus equations literally: the flow out of bus ``i`` is
``P_i = sum_j |B_ij| V_i V_j sin(theta_i - theta_j) - P^L_i``, so a positive
``P^L`` raises frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .model import heat_pump_order


@dataclass(frozen=True)
class EpsModel:
    """Array form of the electric network, buses sorted by id."""

    bus_ids: tuple[int, ...]
    ref: int  # index of the reference bus
    M: np.ndarray
    D: np.ndarray
    Tg: np.ndarray
    KP: np.ndarray
    V: np.ndarray
    KI: float
    line_from: np.ndarray
    line_to: np.ndarray
    line_b: np.ndarray  # |B_ij| V_i V_j
    hp_bus: np.ndarray  # bus index of each heat pump, heat-pump order

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    @property
    def n_state(self) -> int:
        return 3 * self.n

    @property
    def others(self) -> np.ndarray:
        """Indices of the non-reference buses (the order of ``x_theta``)."""
        return np.array([i for i in range(self.n) if i != self.ref], dtype=np.int64)


def eps_model(cfg: SystemConfig) -> EpsModel:
    buses = sorted(cfg.buses, key=lambda b: b.id)
    ids = tuple(b.id for b in buses)
    idx = {b: i for i, b in enumerate(ids)}
    ref = next(i for i, b in enumerate(buses) if b.is_reference)
    V = np.array([b.voltage for b in buses], dtype=float)
    lf = np.array([idx[ln.from_bus] for ln in cfg.lines], dtype=np.int64)
    lt = np.array([idx[ln.to_bus] for ln in cfg.lines], dtype=np.int64)
    lb = np.array([ln.susceptance for ln in cfg.lines], dtype=float)
    if len(cfg.lines):
        lb = lb * V[lf] * V[lt]
    return EpsModel(
        bus_ids=ids,
        ref=ref,
        M=np.array([b.inertia for b in buses], dtype=float),
        D=np.array([b.damping for b in buses], dtype=float),
        Tg=np.array([b.gov_time for b in buses], dtype=float),
        KP=np.array([b.droop for b in buses], dtype=float),
        V=V,
        KI=float(cfg.constants.agc_gain),
        line_from=lf,
        line_to=lt,
        line_b=lb,
        hp_bus=np.array([idx[hp.bus] for hp in heat_pump_order(cfg)], dtype=np.int64),
    )


@dataclass
class EpsState:
    x_theta: np.ndarray  # n - 1 angles relative to the reference bus
    omega: np.ndarray
    PG: np.ndarray
    g: float

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x_theta, self.omega, self.PG, [self.g]])

    @classmethod
    def unpack(cls, y: np.ndarray, n: int) -> "EpsState":
        y = np.asarray(y, dtype=float)
        return cls(y[: n - 1].copy(), y[n - 1:2 * n - 1].copy(), y[2 * n - 1:3 * n - 1].copy(), float(y[3 * n - 1]))

    @classmethod
    def zeros(cls, n: int) -> "EpsState":
        return cls(np.zeros(n - 1), np.zeros(n), np.zeros(n), 0.0)


def full_angles(model: EpsModel, x_theta) -> np.ndarray:
    theta = np.zeros(model.n)
    theta[model.others] = x_theta
    return theta


def line_flows(model: EpsModel, theta) -> np.ndarray:
    """``sum_j |B_ij| V_i V_j sin(theta_i - theta_j)`` for every bus."""
    P = np.zeros(model.n)
    f = model.line_b * np.sin(theta[model.line_from] - theta[model.line_to])
    np.add.at(P, model.line_from, f)
    np.add.at(P, model.line_to, -f)
    return P


def bus_heat_pump_power(model: EpsModel, p_h) -> np.ndarray:
    """Scatter heat-pump powers onto their buses."""
    out = np.zeros(model.n)
    np.add.at(out, model.hp_bus, np.asarray(p_h, dtype=float))
    return out


def control_input(model: EpsModel, omega, g) -> np.ndarray:
    """``u_i = -K^P_i omega_i + delta_ir K^I g``."""
    u = -model.KP * np.asarray(omega, dtype=float)
    u[model.ref] += model.KI * g
    return u


def eps_derivative(model: EpsModel, state: EpsState, p_h, P_L) -> EpsState:
    """Time derivative of the electric state.

    ``p_h`` holds one entry per heat pump; ``P_L`` one entry per bus.
    """
    theta = full_angles(model, state.x_theta)
    P = line_flows(model, theta) - np.asarray(P_L, dtype=float)
    w = state.omega
    domega = (-model.D * w - P + state.PG - bus_heat_pump_power(model, p_h)) / model.M
    dPG = (-state.PG + control_input(model, w, state.g)) / model.Tg
    dtheta = w[model.others] - w[model.ref]
    return EpsState(dtheta, domega, dPG, -float(w[model.ref]))


def linearize(model: EpsModel, theta0=None):
    """State-space ``(A, B_p, B_L, C_hp)`` of the electric side at ``theta0``.

    Inputs are the heat-pump powers and the bus loads, the output is the
    heat-pump bus frequency.  State order matches :meth:`EpsState.pack`.
    """
    n = model.n
    theta0 = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    L = np.zeros((n, n))  # Jacobian of line flows w.r.t. full angles
    c = model.line_b * np.cos(theta0[model.line_from] - theta0[model.line_to])
    for a, b, w in zip(model.line_from, model.line_to, c):
        L[a, a] += w
        L[b, b] += w
        L[a, b] -= w
        L[b, a] -= w
    oth = model.others
    m = n - 1
    ns = 3 * n
    iw, ip, ig = m, m + n, m + 2 * n
    A = np.zeros((ns, ns))
    A[np.arange(m), iw + oth] = 1.0
    A[np.arange(m), iw + model.ref] -= 1.0
    Minv = 1.0 / model.M
    A[iw:iw + n, :m] = -Minv[:, None] * L[:, oth]
    A[iw:iw + n, iw:iw + n] = np.diag(-model.D * Minv)
    A[iw:iw + n, ip:ip + n] = np.diag(Minv)
    A[ip:ip + n, iw:iw + n] = np.diag(-model.KP / model.Tg)
    A[ip:ip + n, ip:ip + n] = np.diag(-1.0 / model.Tg)
    A[ip + model.ref, ig] = model.KI / model.Tg[model.ref]
    A[ig, iw + model.ref] = -1.0
    k = len(model.hp_bus)
    B_p = np.zeros((ns, k))
    B_p[iw + model.hp_bus, np.arange(k)] = -Minv[model.hp_bus]
    B_L = np.zeros((ns, n))
    B_L[iw:iw + n, :] = np.diag(Minv)
    C_hp = np.zeros((k, ns))
    C_hp[np.arange(k), iw + model.hp_bus] = 1.0
    return A, B_p, B_L, C_hp


# ---------------------------------------------------------------------------
# strict positive realness of the generation transfer functions


class PoleError(ZeroDivisionError):
    pass


def transfer_Gi(model: EpsModel, bus: int, s: complex) -> complex:
    """``D_i + K^P_i/(T_i s + 1) + delta_ir K^I/(s (T_i s + 1))`` at bus index ``bus``."""
    D, K, T = model.D[bus], model.KP[bus], model.Tg[bus]
    den = T * s + 1.0
    if den == 0:
        raise PoleError(f"s = {s} is the governor pole -1/T_g = {-1.0 / T} of bus {model.bus_ids[bus]}")
    val = D + K / den
    if bus == model.ref:
        if s == 0:
            raise PoleError(f"s = 0 is the integrator pole of reference bus {model.bus_ids[bus]}")
        val = val + model.KI / (s * den)
    return complex(val)


def ref_bus_real_part(D, KP, KI, T, w):
    """Closed form ``Re G_r(jw) = D + (K^P - K^I T)/(1 + w^2 T^2)``."""
    w = np.asarray(w, dtype=float)
    return D + (KP - KI * T) / (1.0 + (w * T) ** 2)


@dataclass(frozen=True)
class SprReport:
    margins: np.ndarray  # per bus, min of Re G_i over grid and endpoints
    argmin: np.ndarray  # rad/s where the minimum occurs (0 or inf for endpoints)
    ref_analytic: float  # analytic infimum of Re G_r
    passed: bool

    @property
    def margin(self) -> float:
        return float(np.min(self.margins))


def spr_grid(points_per_decade: int = 50, lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), int(round(points_per_decade * np.log10(hi / lo))) + 1)


def spr_check(model: EpsModel, grid=None) -> SprReport:
    """Minimum of ``Re G_i(jw)`` over a log grid and the limits ``w -> 0, inf``.

    ``Re G_i`` is monotone in ``w`` for every bus here, so the endpoint
    limits carry the infimum; the grid guards against mistakes in that
    argument.  For the reference bus the integral term contributes
    ``-K^I T/(1 + w^2 T^2)`` to the real part, which stays finite at ``w = 0``.
    """
    grid = spr_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid[0] > 1e-4 or grid[-1] < 1e4:
        raise ValueError("grid must span at least [1e-4, 1e4] rad/s")
    margins, where = [], []
    ref_inf = np.nan
    for i in range(model.n):
        vals = np.array([transfer_Gi(model, i, 1j * w).real for w in grid])
        D, K, T = model.D[i], model.KP[i], model.Tg[i]
        KI = model.KI if i == model.ref else 0.0
        lim0 = D + K - KI * T
        limi = D
        cand = np.concatenate([vals, [lim0, limi]])
        pts = np.concatenate([grid, [0.0, np.inf]])
        k = int(np.argmin(cand))
        margins.append(float(cand[k]))
        where.append(float(pts[k]))
        if i == model.ref:
            ref_inf = float(min(lim0, limi))
    margins = np.array(margins)
    return SprReport(margins, np.array(where), ref_inf, bool(np.min(margins) > 0))


def passivity_surrogate(model: EpsModel, grid=None) -> float:
    """``min_w lambda_min(He H(jw))`` for ``H``: ``-p^H -> omega^HP`` of the linearized grid."""
    A, B_p, _, C = linearize(model)
    grid = spr_grid(20) if grid is None else grid
    n = A.shape[0]
    out = np.inf
    for w in grid:
        H = C @ np.linalg.solve(1j * w * np.eye(n) - A, -B_p)
        out = min(out, float(np.linalg.eigvalsh(0.5 * (H + H.conj().T))[0]))
    return out

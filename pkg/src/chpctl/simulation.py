"""Closed-loop time-domain simulation of the coupled grid and heating network.

The electric side is the nonlinear swing model of :mod:`chpctl.eps`; the
heating side is the integrator-augmented linear model closed with
``h^G = -K x``.  Heat pumps couple the two through
``p^H = gamma^E omega^HP + C_y(K) x``.  Integration is fixed-step RK4 in a
compiled loop; disturbances are scalar time profiles times fixed spatial
patterns (load shares for heat, a bus split for electric load).
"""

from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .config import SOURCE, SystemConfig
from .dhs import closed_loop, error_signal
from .eps import EpsModel, eps_model, linearize
from .model import CoupledMatrices, assemble

NOISE_ALGORITHM = "numpy.random.PCG64/standard_normal"
DIVERGENCE_LIMIT = 1e9


class SimulationDiverged(ArithmeticError):
    def __init__(self, message: str, time: float, state: np.ndarray):
        super().__init__(message)
        self.time = time
        self.state = state


# ---------------------------------------------------------------------------
# disturbance profiles


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)


@dataclass(frozen=True)
class Step:
    t0: float
    value: float

    def __call__(self, t):
        return np.where(np.asarray(t) >= self.t0, self.value, 0.0)


@dataclass(frozen=True)
class Sinusoid:
    freq: float  # Hz
    amplitude: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.sin(2 * np.pi * self.freq * np.asarray(t) + self.phase)


@dataclass(frozen=True)
class Spike:
    """Rectangular pulse of height ``magnitude`` on ``[t0, t0 + width)``."""

    t0: float
    magnitude: float
    width: float = 1.0

    def __call__(self, t):
        t = np.asarray(t)
        return np.where((t >= self.t0) & (t < self.t0 + self.width), self.magnitude, 0.0)


@dataclass(frozen=True)
class DecayingNoise:
    """White noise scaled by ``sigma0 exp(-decay t)``, held piecewise constant.

    Each sample is held for one integrator step, or for ``hold`` seconds when
    given.  A fixed ``hold`` keeps the realization independent of the step,
    which is what step-refinement studies need; the step should then divide
    ``hold``.  ``seed=None`` defers to the scenario seed.
    """

    sigma0: float
    decay: float
    seed: int | None = None
    hold: float | None = None

    def __post_init__(self):
        if self.hold is not None and not self.hold > 0:
            raise ValueError("noise hold period must be positive")

    def samples(self, t_steps: np.ndarray, seed: int | None = None) -> np.ndarray:
        seed = self.seed if self.seed is not None else seed
        if seed is None:
            raise ValueError("noise profile needs a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        if self.hold is None:
            return self.sigma0 * np.exp(-self.decay * t_steps) * rng.standard_normal(t_steps.size)
        # small guard so that step times landing on a sample boundary round down onto it
        k = np.floor(t_steps / self.hold + 1e-9).astype(np.int64)
        z = rng.standard_normal(int(k.max()) + 1 if k.size else 0)
        return self.sigma0 * np.exp(-self.decay * k * self.hold) * z[k]


PROFILE_KINDS = {"constant": Constant, "step": Step, "sinusoid": Sinusoid, "spike": Spike, "noise": DecayingNoise}


def profile_from_dict(raw: dict):
    raw = dict(raw)
    kind = raw.pop("kind")
    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown profile kind {kind!r}")
    return PROFILE_KINDS[kind](**raw)


def profile_to_dict(p) -> dict:
    kind = next(k for k, v in PROFILE_KINDS.items() if isinstance(p, v))
    return {"kind": kind, **{k: getattr(p, k) for k in p.__dataclass_fields__}}


def stage_values(profiles, t0: np.ndarray, h: float, seeds=()) -> np.ndarray:
    """Profile sum at the RK4 stage times ``t, t + h/2, t + h`` of every step.

    Noise is piecewise constant over a step, so all three columns share the
    value in force at the start of that step.  ``seeds`` lists one seed per noise profile.
    """
    out = np.zeros((t0.size, 3))
    seeds = iter(seeds)
    for p in profiles:
        if isinstance(p, DecayingNoise):
            out += p.samples(t0, next(seeds))[:, None]
        else:
            for c, dt in enumerate((0.0, 0.5 * h, h)):
                out[:, c] += p(t0 + dt)
    return out


# ---------------------------------------------------------------------------
# scenario / trajectory


@dataclass(frozen=True)
class Scenario:
    """Disturbances, horizon and step.

    ``heat_load`` profiles are in watts of total load, spread over load edges
    by their ``load_share``.  ``eps_load`` profiles are per unit, split over
    ``eps_buses`` (all buses, equally, when empty).
    """

    horizon: float
    step: float | None = None  # default_step(cfg) when None
    eps_load: tuple = ()
    heat_load: tuple = ()
    eps_buses: tuple = ()
    gains: tuple[float, float] | None = None  # (gamma^E, gamma^H) override
    record_every: int = 1
    seed: int | None = None

    def __post_init__(self):
        if not self.horizon > 0 or (self.step is not None and not self.step > 0):
            raise ValueError("horizon and step must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        for p in self.eps_load + self.heat_load:
            if isinstance(p, DecayingNoise) and p.seed is None and self.seed is None:
                raise ValueError("noise profiles need a seed (on the profile or the scenario)")

    def noise_seeds(self) -> list[int]:
        """Effective seed of each noise profile, electric load first.

        Profiles without their own seed get ``scenario.seed + k`` for the
        ``k``-th noise profile, so two such streams never coincide.
        """
        out = []
        for k, p in enumerate(q for q in self.eps_load + self.heat_load if isinstance(q, DecayingNoise)):
            out.append(int(p.seed) if p.seed is not None else int(self.seed) + k)
        return out

    def with_step(self, step: float) -> "Scenario":
        return replace(self, step=float(step))

    @property
    def n_steps(self) -> int:
        if self.step is None:
            raise ValueError("scenario step not resolved")
        n = int(np.ceil(self.horizon / self.step - 1e-9))
        r = self.record_every
        return -(-n // r) * r

    def drive_frequency(self) -> float | None:
        f = [p.freq for p in self.eps_load + self.heat_load if isinstance(p, Sinusoid)]
        return max(f) if f else None

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "step": self.step,
            "eps_load": [profile_to_dict(p) for p in self.eps_load],
            "heat_load": [profile_to_dict(p) for p in self.heat_load],
            "eps_buses": list(self.eps_buses),
            "gains": list(self.gains) if self.gains is not None else None,
            "record_every": self.record_every,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        return cls(
            horizon=float(raw["horizon"]),
            step=float(raw["step"]) if raw.get("step") is not None else None,
            eps_load=tuple(profile_from_dict(p) for p in raw.get("eps_load", [])),
            heat_load=tuple(profile_from_dict(p) for p in raw.get("heat_load", [])),
            eps_buses=tuple(raw.get("eps_buses", [])),
            gains=tuple(raw["gains"]) if raw.get("gains") is not None else None,
            record_every=int(raw.get("record_every", 1)),
            seed=raw.get("seed"),
        )


def thermal_time(cfg: SystemConfig) -> float:
    """Turnover time of the heating network: total water volume over total source flow."""
    vol = sum(e.volume for e in cfg.edges) + sum(n.volume for n in cfg.nodes)
    flow = sum(e.flow for e in cfg.edges if e.kind == SOURCE)
    return vol / flow


def default_step(cfg: SystemConfig) -> float:
    """``min(0.01 s, T_thermal / 1000)``."""
    return min(0.01, thermal_time(cfg) / 1000.0)


@dataclass
class Trajectory:
    t: np.ndarray
    eps: np.ndarray  # (samples, 3 n_bus): x_theta, omega, P^G, g
    x: np.ndarray  # (samples, n_aug): T, xi
    p_h: np.ndarray
    h_g: np.ndarray
    e: np.ndarray
    sig: np.ndarray
    u: np.ndarray
    n_bus: int
    meta: dict = field(default_factory=dict)

    @property
    def omega(self) -> np.ndarray:
        n = self.n_bus
        return self.eps[:, n - 1:2 * n - 1]

    @property
    def PG(self) -> np.ndarray:
        n = self.n_bus
        return self.eps[:, 2 * n - 1:3 * n - 1]

    @property
    def g(self) -> np.ndarray:
        return self.eps[:, 3 * self.n_bus - 1]

    @property
    def T(self) -> np.ndarray:
        return self.x[:, : self.x.shape[1] - self.h_g.shape[1]]

    def final_state(self) -> np.ndarray:
        return np.concatenate([self.eps[-1], self.x[-1]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}: {v}\n")
        wr = csv.writer(buf, lineterminator="\n")
        n = self.n_bus
        head = ["t"] + [f"x_theta{i}" for i in range(n - 1)] + [f"omega{i}" for i in range(n)]
        head += [f"PG{i}" for i in range(n)] + ["g"]
        head += [f"x{i}" for i in range(self.x.shape[1])]
        head += [f"pH{k}" for k in range(self.p_h.shape[1])] + [f"hG{k}" for k in range(self.h_g.shape[1])]
        head += [f"e{k}" for k in range(self.e.shape[1])] + ["SigH"]
        wr.writerow(head)
        rows = np.hstack([self.t[:, None], self.eps, self.x, self.p_h, self.h_g, self.e, self.sig[:, None]])
        for r in rows:
            wr.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# compiled integrator


@njit(cache=True, nogil=True)
def _deriv(y, aL, ah, n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus, Ldir,
           A_cl, B_w, C_y, G_e, wdir, theta, P, w_hp, p_h, dy):
    m = n - 1
    nx = A_cl.shape[0]
    nh = hp_bus.shape[0]
    o = 3 * n
    theta[ref] = 0.0
    for i in range(m):
        theta[others[i]] = y[i]
    for i in range(n):
        P[i] = -Ldir[i] * aL
    for k in range(lf.shape[0]):
        f = lb[k] * np.sin(theta[lf[k]] - theta[lt[k]])
        P[lf[k]] += f
        P[lt[k]] -= f
    for k in range(nh):
        w_hp[k] = y[m + hp_bus[k]]
    for k in range(nh):
        acc = 0.0
        for j in range(nh):
            acc += G_e[k, j] * w_hp[j]
        for j in range(nx):
            acc += C_y[k, j] * y[o + j]
        p_h[k] = acc
        P[hp_bus[k]] += acc
    g = y[m + 2 * n]
    for i in range(n):
        w = y[m + i]
        dy[m + i] = (-D[i] * w - P[i] + y[m + n + i]) / M[i]
        u = -KP[i] * w
        if i == ref:
            u += KI * g
        dy[m + n + i] = (-y[m + n + i] + u) / Tg[i]
    w_ref = y[m + ref]
    for i in range(m):
        dy[i] = y[m + others[i]] - w_ref
    dy[m + 2 * n] = -w_ref
    for r in range(nx):
        acc = wdir[r] * ah
        for j in range(nx):
            acc += A_cl[r, j] * y[o + j]
        for k in range(nh):
            acc += B_w[r, k] * w_hp[k]
        dy[o + r] = acc


@njit(cache=True, nogil=True)
def _rk4(y0, h, n_steps, stride, aL, ah, n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus,
         Ldir, A_cl, B_w, C_y, G_e, wdir, limit, out):
    ny = y0.shape[0]
    nh = hp_bus.shape[0]
    y = y0.copy()
    z = np.empty(ny)
    k1 = np.empty(ny)
    k2 = np.empty(ny)
    k3 = np.empty(ny)
    k4 = np.empty(ny)
    theta = np.empty(n)
    P = np.empty(n)
    w_hp = np.empty(nh)
    p_h = np.empty(nh)
    out[0] = y
    r = 1
    for s in range(n_steps):
        _deriv(y, aL[s, 0], ah[s, 0], n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus, Ldir,
               A_cl, B_w, C_y, G_e, wdir, theta, P, w_hp, p_h, k1)
        for i in range(ny):
            z[i] = y[i] + 0.5 * h * k1[i]
        _deriv(z, aL[s, 1], ah[s, 1], n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus, Ldir,
               A_cl, B_w, C_y, G_e, wdir, theta, P, w_hp, p_h, k2)
        for i in range(ny):
            z[i] = y[i] + 0.5 * h * k2[i]
        _deriv(z, aL[s, 1], ah[s, 1], n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus, Ldir,
               A_cl, B_w, C_y, G_e, wdir, theta, P, w_hp, p_h, k3)
        for i in range(ny):
            z[i] = y[i] + h * k3[i]
        _deriv(z, aL[s, 2], ah[s, 2], n, ref, others, M, D, Tg, KP, KI, lf, lt, lb, hp_bus, Ldir,
               A_cl, B_w, C_y, G_e, wdir, theta, P, w_hp, p_h, k4)
        bad = False
        for i in range(ny):
            y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not (abs(y[i]) <= limit):
                bad = True
        if bad:
            out[r] = y
            return s + 1
        if (s + 1) % stride == 0:
            out[r] = y
            r += 1
    return -1


@dataclass(frozen=True)
class _Plant:
    cfg: SystemConfig
    cm: CoupledMatrices
    em: EpsModel


def _plant(cfg: SystemConfig, scenario: Scenario) -> _Plant:
    if scenario.gains is not None:
        cfg = cfg.with_gains(*scenario.gains)
    return _Plant(cfg, assemble(cfg), eps_model(cfg))


def _eps_direction(em: EpsModel, buses) -> np.ndarray:
    d = np.zeros(em.n)
    if not buses:
        d[:] = 1.0 / em.n
    else:
        idx = {b: i for i, b in enumerate(em.bus_ids)}
        for b in buses:
            d[idx[b]] += 1.0 / len(buses)
    return d


def simulate(cfg: SystemConfig, K, scenario: Scenario, y0=None, certified: bool = True) -> Trajectory:
    """Integrate the coupled closed loop from ``y0`` (zero deviation by default).

    The state is ``[x_theta, omega, P^G, g, T, xi]``.  ``certified=False``
    only marks the output; the integration itself is the same.
    """
    pl = _plant(cfg, scenario)
    if scenario.step is None:
        scenario = scenario.with_step(default_step(pl.cfg))
    cm, em = pl.cm, pl.em
    K = np.asarray(K, dtype=float)
    clp = closed_loop(cm, K)
    n_aug = cm.n_aug
    ny = em.n_state + n_aug
    y0 = np.zeros(ny) if y0 is None else np.asarray(y0, dtype=float)
    if y0.shape != (ny,):
        raise ValueError(f"initial state must have length {ny}")

    h = scenario.step
    n_steps = scenario.n_steps
    stride = scenario.record_every
    t_steps = np.arange(n_steps) * h
    seeds = scenario.noise_seeds()
    n_eps_noise = sum(isinstance(p, DecayingNoise) for p in scenario.eps_load)
    aL = stage_values(scenario.eps_load, t_steps, h, seeds[:n_eps_noise])
    ah = stage_values(scenario.heat_load, t_steps, h, seeds[n_eps_noise:])
    Ldir = _eps_direction(em, scenario.eps_buses)
    wdir = np.concatenate([cm.dm.W_L @ cm.dm.load_shares, np.zeros(cm.n_g)])

    out = np.zeros((n_steps // stride + 1, ny))
    flag = _rk4(
        y0, h, n_steps, stride, aL, ah, em.n, em.ref, em.others, em.M, em.D, em.Tg, em.KP, em.KI,
        em.line_from, em.line_to, em.line_b, em.hp_bus, Ldir,
        np.ascontiguousarray(clp.A_cl), np.ascontiguousarray(clp.B_w), np.ascontiguousarray(clp.C_y),
        np.ascontiguousarray(cm.gamma_e), wdir, DIVERGENCE_LIMIT, out,
    )
    if flag >= 0:
        t_bad = flag * h
        raise SimulationDiverged(f"state exceeded {DIVERGENCE_LIMIT:g} at t = {t_bad:.6g} s", t_bad, out[-1])

    t = np.arange(out.shape[0]) * stride * h
    eps_part, x = out[:, : em.n_state], out[:, em.n_state:]
    n = em.n
    omega = eps_part[:, n - 1:2 * n - 1]
    g = eps_part[:, 3 * n - 1]
    p_h = omega[:, em.hp_bus] @ cm.gamma_e.T + x @ clp.C_y.T
    h_g = -x @ K.T
    e, sig = error_signal(cm.dm, x[:, : cm.dm.layout.n_x].T, h_g.T)
    u = -omega * em.KP[None, :]
    u[:, em.ref] += em.KI * g
    meta = {
        "config_sha256": pl.cfg.digest(),
        "controller_sha256": hashlib.sha256(np.ascontiguousarray(K).tobytes()).hexdigest(),
        "step": h,
        "record_every": stride,
        "horizon": n_steps * h,
        "seed": scenario.seed,
        "noise_seeds": seeds,
        "noise": NOISE_ALGORITHM,
        "certified": certified,
    }
    return Trajectory(t, eps_part, x, p_h, h_g, e.T, sig, u, n, meta)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsReport:
    J_freq_L1: float
    J_u_L2: float
    peak_hG: float
    J_hG_L2: float

    def as_dict(self) -> dict:
        return {"J_freq_L1": self.J_freq_L1, "J_u_L2": self.J_u_L2, "peak_hG": self.peak_hG, "J_hG_L2": self.J_hG_L2}


def _trapz(y, t):
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def metrics_from_signals(t, omega, u, h_g) -> MetricsReport:
    """Trapezoidal ``int ||omega||_1``, ``(int ||u||^2)^(1/2)``, ``max |h^G|``, ``(int ||h^G||^2)^(1/2)``."""
    t = np.asarray(t, dtype=float)
    omega, u, h_g = (np.atleast_2d(np.asarray(a, dtype=float).T).T for a in (omega, u, h_g))
    return MetricsReport(
        J_freq_L1=_trapz(np.abs(omega).sum(axis=1), t),
        J_u_L2=float(np.sqrt(_trapz((u**2).sum(axis=1), t))),
        peak_hG=float(np.max(np.abs(h_g))) if h_g.size else 0.0,
        J_hG_L2=float(np.sqrt(_trapz((h_g**2).sum(axis=1), t))),
    )


def compute_metrics(traj: Trajectory, window: tuple[float, float] | None = None) -> MetricsReport:
    """Metrics over ``window`` (the whole trajectory by default)."""
    m = np.ones(traj.t.size, dtype=bool)
    if window is not None:
        m = (traj.t >= window[0] - 1e-12) & (traj.t <= window[1] + 1e-12)
    return metrics_from_signals(traj.t[m], traj.omega[m], traj.u[m], traj.h_g[m])


def metric_window(scenario: Scenario) -> tuple[float, float] | None:
    """Ten drive periods after a two-period warm-up when a sinusoid is present, else everything."""
    f = scenario.drive_frequency()
    if f is None:
        return None
    return 2.0 / f, 12.0 / f


# ---------------------------------------------------------------------------
# linearized coupled loop


def coupled_linearization(cfg: SystemConfig, K):
    """``(A, B_L, B_h)`` of the coupled loop linearized at zero angle deviation.

    State order is that of :func:`simulate`; ``B_L`` takes bus loads,
    ``B_h`` heat load per load edge.
    """
    cm, em = assemble(cfg), eps_model(cfg)
    clp = closed_loop(cm, np.asarray(K, dtype=float))
    A, B_p, B_L, C_hp = linearize(em)
    big = np.block([[A + B_p @ clp.gamma_e @ C_hp, B_p @ clp.C_y], [clp.B_w @ C_hp, clp.A_cl]])
    n_aug = cm.n_aug
    BL = np.vstack([B_L, np.zeros((n_aug, em.n))])
    Bh = np.vstack([np.zeros((em.n_state, cm.dm.W_L.shape[1])), cm.dm.W_L, np.zeros((cm.n_g, cm.dm.W_L.shape[1]))])
    return big, BL, Bh


def coupled_abscissa(cfg: SystemConfig, K) -> float:
    return float(np.max(np.linalg.eigvals(coupled_linearization(cfg, K)[0]).real))


# ---------------------------------------------------------------------------
# joint vs baseline comparison

COMPARE_FREQUENCIES = (0.0016, 0.016, 50.0)
COMPARE_AMPLITUDE = 0.01  # per-unit electric load


def compare_scenario(freq: float, step: float | None = None, amplitude: float = COMPARE_AMPLITUDE) -> Scenario:
    """Sinusoidal bus load at ``freq`` Hz over twelve periods.

    The step is at most 0.01 s and resolves each period with at least 40
    steps; samples are kept at about 40 per period.
    """
    period = 1.0 / freq
    h = min(0.01, period / 40.0) if step is None else step
    stride = max(1, int(period / 40.0 / h))
    return Scenario(horizon=12.0 * period, step=h, eps_load=(Sinusoid(freq, amplitude),), record_every=stride)


@dataclass(frozen=True)
class RatioRow:
    freq: float
    joint: MetricsReport
    baseline: MetricsReport

    @property
    def ratios(self) -> dict:
        a, b = self.joint.as_dict(), self.baseline.as_dict()
        return {k: (a[k] / b[k] if b[k] != 0 else (1.0 if a[k] == 0 else np.inf)) for k in a}


def compare(cfg: SystemConfig, K_joint, K_baseline, frequencies=COMPARE_FREQUENCIES, amplitude=COMPARE_AMPLITUDE,
            jobs: int = 1):
    """Joint/baseline metric ratios for sinusoidal load at each frequency.

    The ``2 len(frequencies)`` runs are independent; ``jobs > 1`` spreads
    them over a thread pool (the integration loop releases the GIL).  The
    result does not depend on ``jobs``.
    """
    scens = [compare_scenario(float(f), amplitude=amplitude) for f in frequencies]

    def run(task):
        sc, K = task
        return compute_metrics(simulate(cfg, K, sc), metric_window(sc))

    tasks = [(sc, K) for sc in scens for K in (K_joint, K_baseline)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(run, tasks))
    else:
        out = [run(t) for t in tasks]
    return [RatioRow(float(f), out[2 * i], out[2 * i + 1]) for i, f in enumerate(frequencies)]


def ratio_table_csv(rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    buf.write("# window: 10 drive periods after 2 warm-up periods\n")
    wr = csv.writer(buf, lineterminator="\n")
    keys = ["J_freq_L1", "J_u_L2", "peak_hG", "J_hG_L2"]
    wr.writerow(["freq_hz"] + keys)
    for r in rows:
        rat = r.ratios
        wr.writerow([repr(r.freq)] + [repr(float(rat[k])) for k in keys])
    return buf.getvalue()

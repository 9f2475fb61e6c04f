"""Passivity and weighted bounded-real LMIs, controller synthesis and certificates.

The temperature regulator ``h^G = -K x`` is found from the change of
variables ``X = P^{-1}``, ``Y = K X``.  Two matrix inequalities share
``(X, Y)``:

* the KYP passivity LMI for the port ``omega^HP -> p^H`` with feedthrough
  ``gamma^E`` and relaxation ``rho``;
* a bounded-real LMI for the strictly proper part of that port seen through
  the high-pass weight ``W(s) = alpha + (s/w_h) / (1 + s/w_h)``.

Synthesis runs on a diagonally scaled copy of the matrices (see
:func:`default_scaling`); ``X`` and ``Y`` are stored in those coordinates
and ``K`` is stored in physical units.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import sdp
from .config import SystemConfig, WeightConfig
from .model import CoupledMatrices, assemble

MARGIN = 1.01  # the SDP asks for 1% more than eps so round-off cannot eat the margin


class InfeasibleError(RuntimeError):
    """The LMI system has no solution (or the solver certified so)."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NumericalError(RuntimeError):
    """The solver stopped without a certified answer."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class LmiData:
    """The six operators both LMIs are built from."""

    A: np.ndarray  # A_aug
    B: np.ndarray  # B_aug
    Bw: np.ndarray  # B_cl^(omega)
    SC: np.ndarray
    SD: np.ndarray
    gamma_e: np.ndarray
    z_scale: float = 1.0  # the weighted output is divided by this

    @classmethod
    def from_coupled(cls, cm: CoupledMatrices) -> "LmiData":
        return cls(cm.A_aug, cm.B_aug, cm.B_cl_w, cm.S_C, cm.S_D, cm.gamma_e)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.Bw.shape[1]


@dataclass(frozen=True)
class Scaling:
    """Diagonal state and input scaling ``x = Sx x~``, ``h^G = Su h~``, plus a
    scalar normalization of the weighted performance output."""

    state: np.ndarray
    input: np.ndarray
    output: float = 1.0

    def apply(self, d: LmiData) -> LmiData:
        sx, su = self.state, self.input
        return LmiData(
            d.A * sx[None, :] / sx[:, None],
            d.B * su[None, :] / sx[:, None],
            d.Bw / sx[:, None],
            d.SC * sx[None, :],
            d.SD * su[None, :],
            d.gamma_e,
            self.output,
        )

    def unscale_gain(self, K_scaled: np.ndarray) -> np.ndarray:
        return self.input[:, None] * K_scaled / self.state[None, :]

    def scale_gain(self, K: np.ndarray) -> np.ndarray:
        return K * self.state[None, :] / self.input[:, None]

    def unscale_lyapunov(self, X_scaled: np.ndarray) -> np.ndarray:
        return self.state[:, None] * X_scaled * self.state[None, :]


def default_scaling(cfg: SystemConfig, cm: CoupledMatrices) -> Scaling:
    """Equilibrate the synthesis problem.

    Temperatures stay in kelvin.  Heat inputs are measured in units of
    ``rho cp q_mean`` (the heat that moves a mean flow by one kelvin), and each
    integrator state is divided by the norm of its error row over the
    fastest thermal rate, so every row of ``[A_aug, B_aug]`` has comparable
    magnitude.  Because that rate is proportional to flow over volume, the
    scaled problem is invariant under a uniform change of water volume.
    """
    dm = cm.dm
    q_mean = float(np.mean([e.flow for e in cfg.edges]))
    su = np.full(cm.n_g, cfg.constants.rho * cfg.constants.cp * q_mean)
    rate = float(np.max(np.abs(np.diag(dm.A))))
    rows = np.hstack([dm.C, dm.D * su[None, :]])
    sxi = np.linalg.norm(rows, axis=1) / rate
    sxi[sxi == 0] = 1.0
    sc = Scaling(np.concatenate([np.ones(dm.layout.n_x), sxi]), su)
    # a priori size of the weighted channel, so gamma is of order one
    d = sc.apply(LmiData.from_coupled(cm))
    size = np.linalg.norm(d.SC, 2) * np.linalg.norm(d.Bw, 2) / rate
    return Scaling(sc.state, sc.input, float(size) if size > 0 else 1.0)


def identity_scaling(cm: CoupledMatrices) -> Scaling:
    return Scaling(np.ones(cm.n_aug), np.ones(cm.n_g), 1.0)


@dataclass(frozen=True)
class WeightFilter:
    """High-pass loop-shaping weight ``alpha + (s/w_h)/(1 + s/w_h)``."""

    cutoff: float
    alpha: float

    def response(self, s):
        x = np.asarray(s) / self.cutoff
        return self.alpha + x / (1.0 + x)

    def realization(self, d: LmiData, K: np.ndarray):
        """Return ``(A_lp, B_lp, C_lp)`` of the weighted strictly proper port.

        The port output is first normalized, ``p~ = C_y(K) x / z_scale``;
        the filter state obeys ``x_w' = -w_h x_w + p~`` and the output is
        ``z = (1 + alpha) p~ - w_h x_w``.
        """
        n, p = d.n, d.p
        Acl = d.A - d.B @ K
        Cy = d.SC - d.SD @ K
        wh, a, zs = self.cutoff, self.alpha, d.z_scale
        A_lp = np.block([[Acl, np.zeros((n, p))], [Cy / zs, -wh * np.eye(p)]])
        B_lp = np.vstack([d.Bw, np.zeros((p, p))])
        C_lp = np.hstack([(1.0 + a) / zs * Cy, -wh * np.eye(p)])
        return A_lp, B_lp, C_lp


def _sym(M):
    return M + M.T


def passivity_lmi(d: LmiData, X, Y, rho, decay: float = 0.0) -> np.ndarray:
    """KYP passivity LMI in ``(X, Y, rho)``.

    ``decay > 0`` adds ``2 decay X`` to the top-left block, which also
    certifies ``max Re eig(A_cl) <= -decay``; the plain LMI is implied.
    """
    p = d.p
    top = _sym(d.A @ X - d.B @ Y) + 2.0 * decay * X
    off = d.Bw - X @ d.SC.T + Y.T @ d.SD.T
    br = -(d.gamma_e + d.gamma_e.T) - rho * np.eye(p)
    return np.block([[top, off], [off.T, br]])


def hinf_lmi(d: LmiData, w: WeightFilter, X, Y, q_w, gamma2) -> np.ndarray:
    """Bounded-real LMI for the weighted channel, congruence form."""
    n, p = d.n, d.p
    wh, a, zs = w.cutoff, w.alpha, d.z_scale
    At = d.A @ X - d.B @ Y
    Ct = (d.SC @ X - d.SD @ Y) / zs
    Z = np.zeros
    psi11 = np.block([[_sym(At), Ct.T], [Ct, -2.0 * wh * q_w * np.eye(p)]])
    psi13 = np.vstack([(1.0 + a) * Ct.T, -wh * q_w * np.eye(p)])
    B_lp = np.vstack([d.Bw, Z((p, p))])
    return np.block(
        [
            [psi11, B_lp, psi13],
            [B_lp.T, -np.eye(p), Z((p, p))],
            [psi13.T, Z((p, p)), -gamma2 * np.eye(p)],
        ]
    )


def passivity_bmi(d: LmiData, P, K, rho) -> np.ndarray:
    """KYP inequality in the Lyapunov matrix ``P`` and gain ``K``."""
    Acl = d.A - d.B @ K
    Cy = d.SC - d.SD @ K
    off = P @ d.Bw - Cy.T
    br = -(d.gamma_e + d.gamma_e.T) - rho * np.eye(d.p)
    return np.block([[_sym(P @ Acl), off], [off.T, br]])


def hinf_bmi(d: LmiData, w: WeightFilter, P_lp, K, gamma2) -> np.ndarray:
    """Bounded-real inequality of the weighted channel in ``P_lp`` and ``K``."""
    A_lp, B_lp, C_lp = w.realization(d, K)
    p = d.p
    Z = np.zeros
    return np.block(
        [
            [_sym(P_lp @ A_lp), P_lp @ B_lp, C_lp.T],
            [B_lp.T @ P_lp, -np.eye(p), Z((p, p))],
            [C_lp, Z((p, p)), -gamma2 * np.eye(p)],
        ]
    )


def max_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])


# ---------------------------------------------------------------------------
# SDP construction


def build_problem(d: LmiData, w: WeightFilter, weights: WeightConfig, mode: str) -> sdp.Problem:
    """Structured SDP for ``mode`` in ``{"joint", "passivity-only"}``."""
    if mode not in ("joint", "passivity-only"):
        raise ValueError(f"unknown synthesis mode {mode!r}")
    n, m, p = d.n, d.m, d.p
    eps = MARGIN * weights.eps
    I, Z = np.eye, np.zeros
    lam = weights.decay

    groups = [sdp.Group("X", sdp.SYM, (n, n)), sdp.Group("Y", sdp.FULL, (m, n)),
              sdp.Group("rho", sdp.SCALAR), sdp.Group("t", sdp.SCALAR)]
    blocks = []

    # passivity: S = -eps I - (Pi0 + Pi(X, Y, rho))
    k = n + p
    Ex = np.vstack([I(n), Z((p, n))])
    Pi0 = np.block([[Z((n, n)), d.Bw], [d.Bw.T, -(d.gamma_e + d.gamma_e.T)]])
    blocks.append(sdp.Block("passivity", -eps * I(k) - Pi0, {
        "X": (np.vstack([d.A + lam * I(n), -d.SC]), Ex),
        "Y": (np.vstack([-d.B, d.SD]), Ex),
        "rho": np.diag(np.r_[np.zeros(n), -np.ones(p)]),
    }))

    # X >= t I and the gain bound [[b t I, Y], [Y^T, b t I]] >= 0
    blocks.append(sdp.Block("lyapunov", Z((n, n)), {"X": (-0.5 * I(n), I(n)), "t": I(n)}))
    beta = weights.gain_bound
    blocks.append(sdp.Block("gain", Z((m + n, m + n)), {
        "Y": (-np.vstack([I(m), Z((n, m))]), np.vstack([Z((m, n)), I(n)])),
        "t": -beta * I(m + n),
    }))
    one = np.ones((1, 1))
    blocks.append(sdp.Block("t>=eps", -weights.eps * one, {"t": -one}))
    blocks.append(sdp.Block("rho>=min", -weights.rho_min * one, {"rho": -one}))
    blocks.append(sdp.Block("rho<=max", weights.rho_max * one, {"rho": one}))

    if mode == "joint":
        groups += [sdp.Group("q_w", sdp.SCALAR), sdp.Group("gamma2", sdp.SCALAR)]
        wh, a, zs = w.cutoff, w.alpha, d.z_scale
        k = n + 3 * p
        Ex = np.vstack([I(n), Z((3 * p, n))])
        Psi0 = Z((k, k))
        Psi0[:n, n + p:n + 2 * p] = d.Bw
        Psi0[n + p:n + 2 * p, :n] = d.Bw.T
        Psi0[n + p:n + 2 * p, n + p:n + 2 * p] = -I(p)
        Fq = Z((k, k))
        Fq[n:n + p, n:n + p] = -2.0 * wh * I(p)
        Fq[n:n + p, n + 2 * p:] = -wh * I(p)
        Fq[n + 2 * p:, n:n + p] = -wh * I(p)
        Fg = Z((k, k))
        Fg[n + 2 * p:, n + 2 * p:] = -I(p)
        blocks.append(sdp.Block("hinf", -eps * I(k) - Psi0, {
            "X": (np.vstack([d.A, d.SC / zs, Z((p, n)), (1.0 + a) / zs * d.SC]), Ex),
            "Y": (np.vstack([-d.B, -d.SD / zs, Z((p, m)), -(1.0 + a) / zs * d.SD]), Ex),
            "q_w": Fq,
            "gamma2": Fg,
        }))
        blocks.append(sdp.Block("q_w>=eps", -weights.eps * one, {"q_w": -one}))
        objective = {"gamma2": 1.0}
    else:
        objective = {"rho": -1.0}
    return sdp.Problem(groups, blocks, objective)


@dataclass
class SynthesisResult:
    """Decision variables (scaled coordinates), gain (physical units) and scalars."""

    mode: str
    X: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    rho: float
    q_w: float | None
    gamma: float | None
    scaling: Scaling
    weights: WeightConfig
    solver: dict = field(default_factory=dict)
    report: "CertificateReport | None" = None

    @property
    def K_scaled(self) -> np.ndarray:
        return self.scaling.scale_gain(self.K)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "K": self.K.tolist(),
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "rho": self.rho,
            "q_w": self.q_w,
            "gamma": self.gamma,
            "scaling": {"state": self.scaling.state.tolist(), "input": self.scaling.input.tolist(),
                        "output": self.scaling.output},
            "weights": {k: getattr(self.weights, k) for k in self.weights.__dataclass_fields__},
            "solver": self.solver,
        }
        if self.report is not None:
            out["report"] = self.report.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthesisResult":
        arr = np.asarray
        return cls(
            mode=raw["mode"],
            X=arr(raw["X"], dtype=float),
            Y=arr(raw["Y"], dtype=float),
            K=arr(raw["K"], dtype=float),
            rho=raw["rho"],
            q_w=raw.get("q_w"),
            gamma=raw.get("gamma"),
            scaling=Scaling(arr(raw["scaling"]["state"], dtype=float), arr(raw["scaling"]["input"], dtype=float),
                            float(raw["scaling"].get("output", 1.0))),
            weights=WeightConfig(**raw["weights"]),
            solver=raw.get("solver", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _solve(cfg: SystemConfig, mode: str, cm: CoupledMatrices | None, scaling: Scaling | None,
           verbose: bool = False) -> SynthesisResult:
    cm = cm if cm is not None else assemble(cfg)
    scaling = scaling if scaling is not None else default_scaling(cfg, cm)
    d = scaling.apply(LmiData.from_coupled(cm))
    w = WeightFilter(cfg.weights.cutoff, cfg.weights.alpha)
    prob = build_problem(d, w, cfg.weights, mode)
    t0 = time.perf_counter()
    res = prob.solve(verbose=verbose)
    elapsed = time.perf_counter() - t0
    info = {
        "status": res.status,
        "iterations": res.iterations,
        "gap": res.gap,
        "seconds": round(elapsed, 3),
        "slack_min_eig": res.slack_min_eig,
        "message": res.message,
    }
    if res.status == "infeasible":
        raise InfeasibleError(f"{mode} synthesis infeasible: {res.message}", info)
    if res.status not in ("optimal", "optimal-inaccurate"):
        worst = min(res.slack_min_eig.values())
        raise NumericalError(f"{mode} synthesis failed ({res.message}); max LMI violation {-worst:.3e}", info)
    v = res.values
    X, Y = v["X"], v["Y"]
    K_scaled = linalg.solve(X, Y.T, assume_a="pos").T
    return SynthesisResult(
        mode=mode,
        X=X,
        Y=Y,
        K=scaling.unscale_gain(K_scaled),
        rho=v["rho"],
        q_w=v.get("q_w"),
        gamma=float(scaling.output * np.sqrt(v["gamma2"])) if "gamma2" in v else None,
        scaling=scaling,
        weights=cfg.weights,
        solver=info,
    )


def solve_joint(cfg: SystemConfig, cm: CoupledMatrices | None = None, scaling: Scaling | None = None,
                verbose: bool = False) -> SynthesisResult:
    """Minimize the weighted H-infinity bound subject to both LMIs with shared ``(X, Y)``."""
    return _solve(cfg, "joint", cm, scaling, verbose)


def solve_passivity_only(cfg: SystemConfig, cm: CoupledMatrices | None = None, scaling: Scaling | None = None,
                         verbose: bool = False) -> SynthesisResult:
    """Baseline: passivity LMI alone, maximizing ``rho`` up to ``weights.rho_max``.

    The objective saturates at the cap, so the returned point is the
    interior-point limit on the optimal face (a central solution of the
    feasibility set) rather than an extreme one.
    """
    return _solve(cfg, "passivity-only", cm, scaling, verbose)


def synthesize(cfg: SystemConfig, mode: str, **kw) -> SynthesisResult:
    if mode == "joint":
        return solve_joint(cfg, **kw)
    if mode in ("passivity-only", "passivity"):
        return solve_passivity_only(cfg, **kw)
    raise ValueError(f"unknown synthesis mode {mode!r}")


def solve_joint_bisection(cfg: SystemConfig, cm: CoupledMatrices | None = None, scaling: Scaling | None = None,
                          rtol: float = 1e-3, hi: float | None = None) -> SynthesisResult:
    """Fallback: bisection on ``gamma^2`` over feasibility problems.

    Each step fixes ``gamma2`` (its LP bound pins it) and asks the solver for
    any feasible point; the last feasible point is returned.
    """
    cm = cm if cm is not None else assemble(cfg)
    scaling = scaling if scaling is not None else default_scaling(cfg, cm)
    d = scaling.apply(LmiData.from_coupled(cm))
    w = WeightFilter(cfg.weights.cutoff, cfg.weights.alpha)

    def feasible(g2):
        prob = build_problem(d, w, cfg.weights, "joint")
        one = np.ones((1, 1))
        prob.blocks.append(sdp.Block("gamma2<=", g2 * one, {"gamma2": one}))
        prob = sdp.Problem(prob.groups, prob.blocks, {})
        res = prob.solve()
        return res if res.status == "optimal" else None

    if hi is None:
        hi = 1.0
        while feasible(hi) is None:
            hi *= 10.0
            if hi > 1e12:
                raise InfeasibleError("joint LMIs infeasible for every tested gamma")
    lo, best = 0.0, feasible(hi)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        r = feasible(mid)
        if r is None:
            lo = mid
        else:
            hi, best = mid, r
    v = best.values
    K_scaled = linalg.solve(v["X"], v["Y"].T, assume_a="pos").T
    return SynthesisResult("joint", v["X"], v["Y"], scaling.unscale_gain(K_scaled), v["rho"], v["q_w"],
                           float(scaling.output * np.sqrt(hi)), scaling, cfg.weights, {"status": "bisection", "upper": hi, "lower": lo})


# ---------------------------------------------------------------------------
# H-infinity norm


def hinf_norm(A, B, C, D=None, rtol: float = 1e-6, grid: np.ndarray | None = None) -> float:
    """``||C (sI - A)^{-1} B + D||_inf`` by bisection on the Hamiltonian test.

    ``gamma`` exceeds the norm iff the Hamiltonian has no eigenvalue on the
    imaginary axis.  The bracket starts from a frequency sweep; every
    imaginary-axis eigenvalue found during the bisection is evaluated, which
    raises the lower bound.
    """
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    n = A.shape[0]
    D = np.zeros((C.shape[0], B.shape[1])) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
    ev = np.linalg.eigvals(A)
    if np.max(ev.real) >= 0:
        raise ValueError(f"A is not Hurwitz (max Re eig = {np.max(ev.real):.3e})")

    def sigma(w):
        G = C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
        return np.linalg.svd(G, compute_uv=False)[0]

    if grid is None:
        lo_f = max(np.min(np.abs(ev)) / 100.0, 1e-12)
        hi_f = np.max(np.abs(ev)) * 100.0
        grid = np.concatenate([[0.0], np.logspace(np.log10(lo_f), np.log10(hi_f), 200), np.abs(ev.imag)])
    lo = max(sigma(w) for w in grid)
    lo = max(lo, np.linalg.svd(D, compute_uv=False)[0] if D.size else 0.0)
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo

    def crossings(g):
        R = g * g * np.eye(D.shape[1]) - D.T @ D
        Ri = np.linalg.inv(R)
        Ah = A + B @ Ri @ D.T @ C
        H = np.block(
            [
                [Ah, B @ Ri @ B.T],
                [-C.T @ (np.eye(C.shape[0]) + D @ Ri @ D.T) @ C, -Ah.T],
            ]
        )
        lam = np.linalg.eigvals(H)
        scale = np.max(np.abs(lam)) + 1.0
        return [abs(x.imag) for x in lam if abs(x.real) <= 1e-8 * scale]

    while crossings(hi):
        hi *= 2.0
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        ws = crossings(mid)
        if ws:
            lo = max(mid, max(sigma(w) for w in ws))
        else:
            hi = mid
    return 0.5 * (lo + hi)


def weighted_channel(d: LmiData, w: WeightFilter, K: np.ndarray):
    return w.realization(d, K)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class CertificateReport:
    abscissa: float
    hurwitz: bool
    lmi_passivity: float
    lmi_hinf: float | None
    pr_margin: float
    hinf_weighted: float | None
    gamma: float | None
    dc_deviation: float
    min_eig_X: float
    eps: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "abscissa": self.abscissa,
            "hurwitz": bool(self.hurwitz),
            "lmi_passivity_max_eig": self.lmi_passivity,
            "lmi_hinf_max_eig": self.lmi_hinf,
            "pr_margin": self.pr_margin,
            "hinf_weighted": self.hinf_weighted,
            "gamma": self.gamma,
            "dc_deviation": self.dc_deviation,
            "min_eig_X": self.min_eig_X,
            "eps": self.eps,
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "passed": bool(self.passed),
        }

    def lines(self) -> list[str]:
        out = []
        for name, ok in self.checks.items():
            out.append(f"{'PASS' if ok else 'FAIL'} {name}")
        return out


def verify_certificates(result: SynthesisResult, cm: CoupledMatrices, grid: np.ndarray | None = None,
                        dc_tol: float = 1e-6) -> CertificateReport:
    """Check a controller independently of the solver.

    (i) Hurwitz closed loop, (ii) both LMIs at the returned point,
    (iii) positive-real margin on a frequency grid, (iv) Hamiltonian
    H-infinity norm of the weighted channel against the certified bound,
    (v) DC gain of the port against ``gamma^E``.
    """
    from .dhs import closed_loop
    from .freq import default_verification_grid, positive_real_margin, transfer_at

    weights = result.weights
    eps = weights.eps
    clp = closed_loop(cm, result.K)
    hurwitz = clp.abscissa < 0
    d = result.scaling.apply(LmiData.from_coupled(cm))
    w = WeightFilter(weights.cutoff, weights.alpha)
    X, Y = result.X, result.Y
    min_eig_X = float(np.linalg.eigvalsh(X)[0])

    lp = max_eig(passivity_lmi(d, X, Y, result.rho))
    lh = None
    if result.mode == "joint" and result.q_w is not None:
        lh = max_eig(hinf_lmi(d, w, X, Y, result.q_w, (result.gamma / result.scaling.output) ** 2))

    checks = {"hurwitz": bool(hurwitz), "X positive definite": min_eig_X > eps}
    checks["passivity LMI <= -eps"] = lp <= -eps
    if lh is not None:
        checks["hinf LMI <= -eps"] = lh <= -eps

    pr = float("nan")
    hw = None
    dc = float("inf")
    if hurwitz:
        grid = default_verification_grid() if grid is None else grid
        pr = positive_real_margin(clp, grid)
        checks["positive real on grid"] = pr >= 0
        A_lp, B_lp, C_lp = w.realization(LmiData.from_coupled(cm), result.K)
        hw = hinf_norm(A_lp, B_lp, C_lp)
        if result.gamma is not None:
            checks["weighted hinf <= gamma (1%)"] = hw <= result.gamma * 1.01
        dc = float(np.linalg.norm(transfer_at(clp, 0.0) - cm.gamma_e))
        checks["dc gain = gamma_E"] = dc <= dc_tol
    else:
        checks["positive real on grid"] = False
        checks["dc gain = gamma_E"] = False

    return CertificateReport(
        abscissa=clp.abscissa,
        hurwitz=bool(hurwitz),
        lmi_passivity=lp,
        lmi_hinf=lh,
        pr_margin=pr,
        hinf_weighted=hw,
        gamma=result.gamma,
        dc_deviation=dc,
        min_eig_X=min_eig_X,
        eps=eps,
        checks=checks,
    )

"""Steady-state economic dispatch of the heating network.

At equilibrium ``A T = b`` with ``b = B1 h^G + B2 h^P + w^h``.  Because the
columns of ``A_h`` sum to zero, ``nu = V`` (the volume vector) spans the
left kernel of ``A``, so ``b`` must satisfy the energy balance
``nu^T b = 0``; ``1`` spans the right kernel, so temperatures are fixed up to
a common offset ``alpha``.

E1 picks ``h^G`` minimizing ``1/2 sum f_i h_i^2`` subject to the balance;
E2 picks the offset minimizing ``1/2 T^T F^D T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DhsMatrices

PINV_RTOL = 1e-10


class DispatchInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class DispatchSolution:
    h_g: np.ndarray
    T: np.ndarray
    alpha: float
    lam: float  # common marginal cost f_i h_i


def pinv(A, rtol: float = PINV_RTOL) -> np.ndarray:
    """SVD pseudoinverse, singular values below ``rtol * sigma_max`` dropped."""
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float))
    keep = s > rtol * (s[0] if s.size else 0.0)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def balance_weights(dm: DhsMatrices) -> np.ndarray:
    """Left-kernel vector ``nu`` with ``nu^T A = 0``."""
    return np.asarray(dm.volumes, dtype=float)


def _rest(dm: DhsMatrices, h_p, w_h) -> np.ndarray:
    n_hp = dm.B2.shape[1]
    h_p = np.zeros(n_hp) if h_p is None else np.asarray(h_p, dtype=float)
    return dm.B2 @ h_p + np.asarray(w_h, dtype=float)


def _balance(dm: DhsMatrices, h_p, w_h):
    """``(c, r)`` such that the balance reads ``c . h^G = r``."""
    nu = balance_weights(dm)
    return nu @ dm.B1, -float(nu @ _rest(dm, h_p, w_h))


def source_costs(dm: DhsMatrices) -> np.ndarray:
    return np.diag(dm.F_G).copy()


def phi1(dm: DhsMatrices, h_g) -> float:
    h = np.asarray(h_g, dtype=float)
    return 0.5 * float(h @ dm.F_G @ h)


def phi2(dm: DhsMatrices, T) -> float:
    T = np.asarray(T, dtype=float)
    return 0.5 * float(T @ dm.F_D @ T)


def solve_E1(dm: DhsMatrices, h_p, w_h, tol: float = 1e-12) -> np.ndarray:
    """Cheapest balanced source heat: ``f_i h_i = c_i mu`` plus ``c . h = r``."""
    c, r = _balance(dm, h_p, w_h)
    if c.size == 0:
        if abs(r) > tol * max(1.0, float(np.abs(_rest(dm, h_p, w_h)).max(initial=0.0))):
            raise DispatchInfeasible(f"no sources but net load imbalance {r:g}")
        return np.zeros(0)
    finv = 1.0 / source_costs(dm)
    mu = r / float(c @ (finv * c))
    return finv * c * mu


def solve_E2(dm: DhsMatrices, h_g, h_p, w_h, rtol: float = 1e-9) -> tuple[np.ndarray, float]:
    """``T* = A^+ b + alpha 1`` with ``alpha`` minimizing the temperature penalty.

    ``b`` must satisfy the energy balance to ``rtol`` relative; E2 is posed
    with exact equality constraints.
    """
    b = dm.B1 @ np.asarray(h_g, dtype=float) + _rest(dm, h_p, w_h)
    nu = balance_weights(dm)
    scale = float(np.abs(nu) @ np.abs(b))
    if abs(nu @ b) > rtol * max(scale, 1e-300):
        raise DispatchInfeasible(f"b is not in the range of A (imbalance {nu @ b:g})")
    Tp = pinv(dm.A) @ b
    one = np.ones_like(Tp)
    F = dm.F_D
    alpha = -float(one @ F @ Tp) / float(one @ F @ one)
    return Tp + alpha * one, alpha


def solve_dispatch(dm: DhsMatrices, h_p, w_h) -> DispatchSolution:
    h = solve_E1(dm, h_p, w_h)
    T, alpha = solve_E2(dm, h, h_p, w_h)
    lam = float(np.mean(source_costs(dm) * h)) if h.size else 0.0
    return DispatchSolution(h, T, alpha, lam)


@dataclass(frozen=True)
class OptimalityReport:
    marginal: float  # ||F^M h^G||_inf
    weighted_sum: float  # |1^T F^D T|
    tol: float

    @property
    def passed(self) -> bool:
        return self.marginal <= self.tol and self.weighted_sum <= self.tol


def check_optimality(dm: DhsMatrices, T, h_g, tol: float = 1e-6) -> OptimalityReport:
    fm = dm.F_M @ np.asarray(h_g, dtype=float)
    s = float(np.sum(dm.F_D @ np.asarray(T, dtype=float)))
    return OptimalityReport(float(np.max(np.abs(fm), initial=0.0)), abs(s), tol)


# ---------------------------------------------------------------------------
# independent search oracle

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]`` to within ``tol``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _nested_min(f, dim: int, R: float, tol: float) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    if dim == 1:
        return np.array([golden_section(lambda z: f(np.array([z])), -R, R, tol)])

    def outer(z0):
        inner = _nested_min(lambda z: f(np.concatenate([[z0], z])), dim - 1, R, tol)
        return f(np.concatenate([[z0], inner]))

    z0 = golden_section(outer, -R, R, tol)
    return np.concatenate([[z0], _nested_min(lambda z: f(np.concatenate([[z0], z])), dim - 1, R, tol)])


@dataclass(frozen=True)
class OracleResult:
    h_g: np.ndarray
    T: np.ndarray
    alpha: float
    phi1: float
    phi2: float


def brute_force_oracle(dm: DhsMatrices, h_p, w_h, resolution: float = 1e-4) -> OracleResult:
    """Direct minimization of the two costs by nested golden-section search.

    ``h^G`` is searched over the balanced affine set (at most two free
    coordinates for three sources); temperatures use a least-squares
    particular solution and a scan over the common offset.
    """
    c, r = _balance(dm, h_p, w_h)
    n_g = c.size
    if n_g > 3:
        raise ValueError("oracle limited to at most three sources")
    f = source_costs(dm)
    if n_g == 0:
        h = np.zeros(0)
    else:
        h0 = c * r / float(c @ c)
        _, _, Vt = np.linalg.svd(c[None, :])
        N = Vt[1:].T
        R = float(np.linalg.norm(h0)) * np.sqrt(f.max() / f.min()) + 10 * resolution
        z = _nested_min(lambda z: 0.5 * float(f @ (h0 + N @ z) ** 2), n_g - 1, R, resolution)
        h = h0 + N @ z

    b = dm.B1 @ h + _rest(dm, h_p, w_h)
    Tp = np.linalg.lstsq(dm.A, b, rcond=None)[0]
    one = np.ones_like(Tp)
    Ra = float(np.abs(Tp).max(initial=0.0)) + 1.0
    alpha = golden_section(lambda a: phi2(dm, Tp + a * one), -Ra, Ra, resolution)
    T = Tp + alpha * one
    return OracleResult(h, T, alpha, phi1(dm, h), phi2(dm, T))

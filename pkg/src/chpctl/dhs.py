"""Open-loop, augmented and closed-loop heating-network dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CoupledMatrices, DhsMatrices


def error_signal(dm: DhsMatrices, T, h_g):
    """Return ``(e, Sig^H)`` with ``e = C T + D h^G``.

    The first ``n_G - 1`` entries are marginal-cost differences, the last one
    is the penalty-weighted temperature sum ``Sig^H``.  Works on stacked
    columns as well.
    """
    e = dm.C @ np.asarray(T, dtype=float) + dm.D @ np.asarray(h_g, dtype=float)
    return e, e[-1]


def dhs_derivative(cm: CoupledMatrices, x, h_g, omega_hp, w_h):
    """Augmented vector field ``A_aug x + B_aug h^G + B_w omega^HP + B_h w^h``."""
    return (
        cm.A_aug @ np.asarray(x, dtype=float)
        + cm.B_aug @ np.asarray(h_g, dtype=float)
        + cm.B_cl_w @ np.asarray(omega_hp, dtype=float)
        + cm.B_cl_h @ np.asarray(w_h, dtype=float)
    )


def output_pH(cm: CoupledMatrices, x, omega_hp, K):
    """Heat-pump electrical power ``gamma^E omega^HP + (S_C - S_D K) x``."""
    Cy = cm.S_C - cm.S_D @ np.asarray(K, dtype=float)
    return cm.gamma_e @ np.asarray(omega_hp, dtype=float) + Cy @ np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ClosedLoopDhs:
    A_cl: np.ndarray
    C_y: np.ndarray
    B_w: np.ndarray
    B_h: np.ndarray
    gamma_e: np.ndarray

    @property
    def abscissa(self) -> float:
        """Spectral abscissa ``max Re eig(A_cl)``."""
        return float(np.max(np.linalg.eigvals(self.A_cl).real))

    @property
    def n_hp(self) -> int:
        return self.gamma_e.shape[0]


def closed_loop(cm: CoupledMatrices, K) -> ClosedLoopDhs:
    """Close the loop with ``h^G = -K x``."""
    K = np.asarray(K, dtype=float)
    n_x = cm.dm.layout.n_x
    if K.shape != (cm.n_g, cm.n_aug):
        raise ValueError(f"gain must be {cm.n_g}x{cm.n_aug}, got {K.shape}")
    K_T, K_I = K[:, :n_x], K[:, n_x:]
    dm = cm.dm
    A_cl = np.block([[cm.A_e - cm.B_e @ K_T, -cm.B_e @ K_I], [dm.C - dm.D @ K_T, -dm.D @ K_I]])
    return ClosedLoopDhs(A_cl, cm.S_C - cm.S_D @ K, cm.B_cl_w, cm.B_cl_h, cm.gamma_e)


def equilibrium(clp: ClosedLoopDhs, omega_hp, w_h) -> np.ndarray:
    """Unique equilibrium ``-A_cl^{-1}(B_w omega + B_h w)`` of a Hurwitz loop."""
    rhs = clp.B_w @ np.asarray(omega_hp, dtype=float) + clp.B_h @ np.asarray(w_h, dtype=float)
    return -np.linalg.solve(clp.A_cl, rhs)

"""Frequency response of the closed heating-network port ``omega^HP -> p^H``."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dhs import ClosedLoopDhs

BAND_HZ = (0.003, 0.02)


def default_grid(points_per_decade: int = 60, lo: float = 1e-5, hi: float = 1e3) -> np.ndarray:
    """Log-spaced grid in rad/s; ``60/decade`` over eight decades gives 480 points."""
    decades = np.log10(hi) - np.log10(lo)
    n = int(round(points_per_decade * decades))
    return np.logspace(np.log10(lo), np.log10(hi), n)


def default_verification_grid() -> np.ndarray:
    return np.logspace(-5, 3, 400)


class ResolventError(ArithmeticError):
    pass


def transfer_at(clp: ClosedLoopDhs, w: float) -> np.ndarray:
    """``G(jw) = C_y (jw I - A_cl)^{-1} B_w + gamma^E``."""
    n = clp.A_cl.shape[0]
    M = 1j * w * np.eye(n) - clp.A_cl
    try:
        sol = np.linalg.solve(M, clp.B_w)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvals(clp.A_cl)
        hit = ev[np.argmin(np.abs(ev - 1j * w))]
        raise ResolventError(f"jw = {1j * w} is an eigenvalue of A_cl ({hit})") from None
    if not np.all(np.isfinite(sol)) or np.linalg.cond(M) > 1e15:
        ev = np.linalg.eigvals(clp.A_cl)
        hit = ev[np.argmin(np.abs(ev - 1j * w))]
        raise ResolventError(f"jw = {1j * w} is (numerically) an eigenvalue of A_cl ({hit})")
    return clp.C_y @ sol + clp.gamma_e


def _hermitian_min(G: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0])


def positive_real_margin(clp: ClosedLoopDhs, grid) -> float:
    """``min lambda_min(He G(jw))`` over the grid and the two endpoints.

    As ``w -> inf`` the port tends to ``gamma^E``; ``w = 0`` is evaluated
    directly.  A positive-real port must be analytic in the open right
    half plane, so a loop with ``max Re eig(A_cl) >= 0`` gets ``-inf``
    whatever its values on the axis.
    """
    if clp.abscissa >= 0:
        return float("-inf")
    vals = [_hermitian_min(transfer_at(clp, float(w))) for w in grid]
    vals.append(_hermitian_min(clp.gamma_e.astype(complex)))
    vals.append(_hermitian_min(transfer_at(clp, 0.0)))
    return float(min(vals))


@dataclass(frozen=True)
class FreqResponse:
    grid: np.ndarray  # rad/s
    G: np.ndarray  # (len(grid), n_hp, n_hp)
    sigma_max: np.ndarray
    eigenloci: np.ndarray  # (len(grid), n_hp), continuity ordered
    pr_margin: np.ndarray
    peak_index: int | None  # largest local max of sigma_max inside the mid band

    @property
    def hz(self) -> np.ndarray:
        return self.grid / (2 * np.pi)

    @property
    def peak(self) -> float | None:
        return None if self.peak_index is None else float(self.sigma_max[self.peak_index])

    def band_max(self, band_hz=BAND_HZ) -> float:
        m = (self.hz >= band_hz[0]) & (self.hz <= band_hz[1])
        return float(np.max(self.sigma_max[m]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        n = self.eigenloci.shape[1]
        head = ["omega_rad_s", "f_hz", "sigma_max", "pr_margin"]
        for k in range(n):
            head += [f"eig{k + 1}_re", f"eig{k + 1}_im"]
        wr.writerow(head)
        for i, w in enumerate(self.grid):
            row = [repr(float(w)), repr(float(w / (2 * np.pi))), repr(float(self.sigma_max[i])),
                   repr(float(self.pr_margin[i]))]
            for z in self.eigenloci[i]:
                row += [repr(float(z.real)), repr(float(z.imag))]
            wr.writerow(row)
        return buf.getvalue()


def match_eigenvalues(prev: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Reorder ``new`` to minimize total distance to ``prev``."""
    cost = np.abs(prev[:, None] - new[None, :])
    _, cols = linear_sum_assignment(cost)
    return new[cols]


def mid_band_peak(grid: np.ndarray, sigma: np.ndarray, band_hz=BAND_HZ) -> int | None:
    """Index of the largest local maximum of ``sigma`` inside the band, if any."""
    f = grid / (2 * np.pi)
    best = None
    for i in range(1, len(sigma) - 1):
        if band_hz[0] <= f[i] <= band_hz[1] and sigma[i] >= sigma[i - 1] and sigma[i] >= sigma[i + 1]:
            if best is None or sigma[i] > sigma[best]:
                best = i
    return best


def sweep(clp: ClosedLoopDhs, grid=None) -> FreqResponse:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    Gs = np.array([transfer_at(clp, float(w)) for w in grid])
    sig = np.array([np.linalg.svd(G, compute_uv=False)[0] for G in Gs])
    pr = np.array([_hermitian_min(G) for G in Gs])
    loci = []
    for G in Gs:
        ev = np.linalg.eigvals(G)
        loci.append(ev if not loci else match_eigenvalues(loci[-1], ev))
    return FreqResponse(grid, Gs, sig, np.array(loci), pr, mid_band_peak(grid, sig))

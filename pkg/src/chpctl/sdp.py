"""Primal-dual interior-point solver for block-diagonal linear matrix inequalities.

Problems have the form::

    minimize    c^T y
    subject to  S_b = H_b - A_b(y)  >= 0     for every block b

where ``y`` is the concatenation of variable groups (symmetric matrices, full
matrices and scalars).  Matrix groups enter a block through congruence-like
terms ``L V R^T + R V^T L^T``; scalars enter through a fixed symmetric matrix.
That structure lets the Schur complement be formed from small products
instead of one dense ``k x k`` matrix per decision variable, which is what
makes synthesis on a 33-node network take seconds rather than minutes.

The iteration is the HKM search direction with Mehrotra's predictor-corrector
step and separate primal/dual step lengths, started from an infeasible
interior point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import linalg

SYM = "sym"
FULL = "full"
SCALAR = "scalar"


@dataclass(frozen=True)
class Group:
    """A block of decision variables."""

    name: str
    kind: str
    shape: tuple[int, int] = (1, 1)

    @property
    def size(self) -> int:
        if self.kind == SYM:
            return self.shape[0] * (self.shape[0] + 1) // 2
        if self.kind == FULL:
            return self.shape[0] * self.shape[1]
        return 1


@dataclass
class Block:
    """One LMI block ``H - sum_g A_g(y_g) >= 0``.

    ``terms`` maps a group name to either ``(L, R)`` for matrix groups or a
    symmetric matrix ``F`` for scalar groups.
    """

    name: str
    H: np.ndarray
    terms: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.H.shape[0]


@dataclass
class SdpResult:
    status: str  # "optimal", "optimal-inaccurate", "infeasible", "unbounded", "failed"
    y: np.ndarray
    values: dict
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int
    slack_min_eig: dict
    message: str = ""
    Z: list | None = None


class SolverError(RuntimeError):
    pass


@njit(cache=True)
def _lr_kernel(P1, Q1, P2, Q2, P3, Q3, P4, Q4, ia, ib, wi, sym1, jc, jd, wj, sym2, same, out):
    n1 = ia.shape[0]
    n2 = jc.shape[0]
    for i in range(n1):
        a = ia[i]
        b = ib[i]
        j0 = i if same else 0
        for j in range(j0, n2):
            c = jc[j]
            d = jd[j]
            v = P1[b, c] * Q1[d, a] + P2[b, d] * Q2[c, a] + P3[a, c] * Q3[d, b] + P4[a, d] * Q4[c, b]
            if sym2:
                v += P1[b, d] * Q1[c, a] + P2[b, c] * Q2[d, a] + P3[a, d] * Q3[c, b] + P4[a, c] * Q4[d, b]
            if sym1:
                v += P1[a, c] * Q1[d, b] + P2[a, d] * Q2[c, b] + P3[b, c] * Q3[d, a] + P4[b, d] * Q4[c, a]
                if sym2:
                    v += P1[a, d] * Q1[c, b] + P2[a, c] * Q2[d, b] + P3[b, d] * Q3[c, a] + P4[b, c] * Q4[d, a]
            out[i, j] = v * wi[i] * wj[j]
            if same:
                out[j, i] = out[i, j]


class Problem:
    """Structured block LMI problem with a linear objective."""

    def __init__(self, groups: list[Group], blocks: list[Block], objective: dict[str, np.ndarray | float]):
        self.groups = list(groups)
        self.blocks = list(blocks)
        self.offsets = {}
        off = 0
        for g in self.groups:
            self.offsets[g.name] = off
            off += g.size
        self.n = off
        self.c = np.zeros(self.n)
        for name, val in objective.items():
            g = self._group(name)
            self.c[self._slice(name)] = np.ravel(val) if np.ndim(val) else val
            del g
        self._index = {}
        for g in self.groups:
            if g.kind == SYM:
                a, b = np.triu_indices(g.shape[0])
                w = np.where(a == b, 0.5, 1.0)
                self._index[g.name] = (a.astype(np.int64), b.astype(np.int64), w, True)
            elif g.kind == FULL:
                a, b = np.divmod(np.arange(g.size), g.shape[1])
                self._index[g.name] = (a.astype(np.int64), b.astype(np.int64), np.ones(g.size), False)
        for blk in self.blocks:
            for name, term in blk.terms.items():
                g = self._group(name)
                k = blk.size
                if g.kind == SCALAR:
                    if np.shape(term) != (k, k):
                        raise ValueError(f"block {blk.name}: scalar term {name} must be {k}x{k}")
                else:
                    L, R = term
                    p, q = (g.shape[0], g.shape[0]) if g.kind == SYM else g.shape
                    if L.shape != (k, p) or R.shape != (k, q):
                        raise ValueError(f"block {blk.name}: term {name} has shapes {L.shape}, {R.shape}")

    # -- bookkeeping -------------------------------------------------------
    def _group(self, name: str) -> Group:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def _slice(self, name: str) -> slice:
        o = self.offsets[name]
        return slice(o, o + self._group(name).size)

    def unpack(self, y: np.ndarray) -> dict:
        out = {}
        for g in self.groups:
            v = y[self._slice(g.name)]
            if g.kind == SYM:
                n = g.shape[0]
                M = np.zeros((n, n))
                M[np.triu_indices(n)] = v
                out[g.name] = M + np.triu(M, 1).T
            elif g.kind == FULL:
                out[g.name] = v.reshape(g.shape)
            else:
                out[g.name] = float(v[0])
        return out

    def pack(self, values: dict) -> np.ndarray:
        y = np.zeros(self.n)
        for g in self.groups:
            v = values[g.name]
            if g.kind == SYM:
                y[self._slice(g.name)] = np.asarray(v)[np.triu_indices(g.shape[0])]
            elif g.kind == FULL:
                y[self._slice(g.name)] = np.ravel(v)
            else:
                y[self._slice(g.name)] = v
        return y

    # -- linear maps -------------------------------------------------------
    def forward(self, y: np.ndarray) -> list[np.ndarray]:
        """Return ``A_b(y)`` for every block."""
        vals = self.unpack(y)
        out = []
        for blk in self.blocks:
            M = np.zeros((blk.size, blk.size))
            for name, term in blk.terms.items():
                v = vals[name]
                if self._group(name).kind == SCALAR:
                    M += v * term
                else:
                    L, R = term
                    T = L @ v @ R.T
                    M += T + T.T
            out.append(M)
        return out

    def slacks(self, y: np.ndarray) -> list[np.ndarray]:
        return [blk.H - F for blk, F in zip(self.blocks, self.forward(y))]

    def adjoint(self, W: list[np.ndarray]) -> np.ndarray:
        """Return the vector ``(<A_i, W>)_i``; ``W`` need not be symmetric."""
        out = np.zeros(self.n)
        for blk, Wb in zip(self.blocks, W):
            Ws = Wb + Wb.T
            for name, term in blk.terms.items():
                sl = self._slice(name)
                g = self._group(name)
                if g.kind == SCALAR:
                    out[sl] += 0.5 * np.sum(term * Ws)
                else:
                    L, R = term
                    F = L.T @ Ws @ R
                    a, b, w, sym = self._index[name]
                    if sym:
                        out[sl] += w * (F[a, b] + F[b, a])
                    else:
                        out[sl] += F[a, b]
        return out

    def schur(self, G: list[np.ndarray], Hinv: list[np.ndarray]) -> np.ndarray:
        """Assemble ``M_ij = sum_b <A_i, G_b A_j Hinv_b>``."""
        M = np.zeros((self.n, self.n))
        for blk, Gb, Hb in zip(self.blocks, G, Hinv):
            names = list(blk.terms)
            mats = [n for n in names if self._group(n).kind != SCALAR]
            scal = [n for n in names if self._group(n).kind == SCALAR]
            for i1, n1 in enumerate(mats):
                L1, R1 = blk.terms[n1]
                a1, b1, w1, s1 = self._index[n1]
                for n2 in mats[i1:]:
                    L2, R2 = blk.terms[n2]
                    a2, b2, w2, s2 = self._index[n2]
                    GL2, GR2 = Gb @ L2, Gb @ R2
                    HL1, HR1 = Hb @ L1, Hb @ R1
                    P1, Q1 = R1.T @ GL2, R2.T @ HL1
                    P2, Q2 = R1.T @ GR2, L2.T @ HL1
                    P3, Q3 = L1.T @ GL2, R2.T @ HR1
                    P4, Q4 = L1.T @ GR2, L2.T @ HR1
                    same = n1 == n2
                    out = np.empty((a1.size, a2.size))
                    _lr_kernel(
                        np.ascontiguousarray(P1), np.ascontiguousarray(Q1),
                        np.ascontiguousarray(P2), np.ascontiguousarray(Q2),
                        np.ascontiguousarray(P3), np.ascontiguousarray(Q3),
                        np.ascontiguousarray(P4), np.ascontiguousarray(Q4),
                        a1, b1, w1, s1, a2, b2, w2, s2, same, out,
                    )
                    sl1, sl2 = self._slice(n1), self._slice(n2)
                    M[sl1, sl2] += out
                    if not same:
                        M[sl2, sl1] += out.T
            for ns in scal:
                Wt = Gb @ blk.terms[ns] @ Hb
                Ws = Wt + Wt.T
                o = self.offsets[ns]
                for n1 in mats:
                    L1, R1 = blk.terms[n1]
                    a1, b1, w1, s1 = self._index[n1]
                    F = L1.T @ Ws @ R1
                    col = w1 * (F[a1, b1] + F[b1, a1]) if s1 else F[a1, b1]
                    M[self._slice(n1), o] += col
                    M[o, self._slice(n1)] += col
                for n2 in scal:
                    M[self.offsets[n2], o] += 0.5 * np.sum(blk.terms[n2] * Ws)
        return 0.5 * (M + M.T)

    # -- solver ------------------------------------------------------------
    def solve(
        self,
        tol: float = 1e-8,
        feas_tol: float = 1e-9,
        max_iter: int = 100,
        step: float = 0.95,
        verbose: bool = False,
        loose_tol: float = 1e-4,
    ) -> SdpResult:
        """Run the interior-point method.

        Stops with ``"optimal"`` once the relative gap is below ``tol`` and both
        residuals below ``feas_tol``.  If progress stalls first (tiny steps or
        a failed factorization), the best dual-feasible iterate is returned as
        ``"optimal-inaccurate"`` provided its gap is below ``loose_tol``.
        """
        return _hkm(self, tol, feas_tol, max_iter, step, verbose, loose_tol)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest ``a <= 1`` with ``X + a dX`` positive semidefinite (``X`` positive definite)."""
    Lc = linalg.cholesky(X, lower=True)
    T = linalg.solve_triangular(Lc, dX, lower=True)
    T = linalg.solve_triangular(Lc, T.T, lower=True)
    lam = linalg.eigvalsh(0.5 * (T + T.T))[0]
    return 1.0 if lam >= 0 else min(1.0, -1.0 / lam)


def _chol_solve(M: np.ndarray):
    scale = np.sqrt(np.maximum(np.diag(M), 1e-300))
    Ms = M / scale[:, None] / scale[None, :]
    reg = 0.0
    for _ in range(6):
        try:
            cf = linalg.cho_factor(Ms + reg * np.eye(M.shape[0]), lower=True, check_finite=False)
            return lambda r: linalg.cho_solve(cf, r / scale, check_finite=False) / scale
        except linalg.LinAlgError:
            reg = 1e-14 if reg == 0.0 else reg * 100
    lu = linalg.lu_factor(Ms)
    return lambda r: linalg.lu_solve(lu, r / scale) / scale


def _inner(A: list, B: list) -> float:
    return float(sum(np.sum(a * b) for a, b in zip(A, B)))


def _hkm(prob: Problem, tol, feas_tol, max_iter, frac, verbose, loose_tol=1e-4) -> SdpResult:
    blocks = prob.blocks
    b = -prob.c
    C = [blk.H for blk in blocks]
    k_tot = sum(blk.size for blk in blocks)
    normC = np.sqrt(_inner(C, C))
    normb = np.linalg.norm(b)
    scale0 = max(1.0, normC, normb) ** 0.5 * 10
    Z = [scale0 * np.eye(blk.size) for blk in blocks]
    S = [scale0 * np.eye(blk.size) for blk in blocks]
    y = np.zeros(prob.n)

    status, message = "failed", "iteration limit reached"
    it = 0
    best = None  # (gap, y, Z) of the best iterate with a feasible dual slack
    for it in range(1, max_iter + 1):
        AZ = prob.adjoint(Z)
        rp = b - AZ
        Ay = prob.forward(y)
        Rd = [c - s - a for c, s, a in zip(C, S, Ay)]
        mu = _inner(Z, S) / k_tot
        pobj = _inner(C, Z)
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / (1.0 + normb)
        dinf = np.sqrt(_inner(Rd, Rd)) / (1.0 + normC)
        if verbose:
            print(f"{it:3d} pobj {pobj: .8e} dobj {dobj: .8e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}")
        if gap <= tol and pinf <= feas_tol and dinf <= feas_tol:
            status, message = "optimal", "converged"
            break
        if pinf <= 1e3 * feas_tol and dinf <= 1e3 * feas_tol:
            if best is None or gap < best[0]:
                best = (gap, y.copy(), [z.copy() for z in Z], it)
            elif it - best[3] >= 4 and best[0] <= loose_tol:
                message = "no progress in four iterations"
                break
        # Farkas-type certificates: Z >= 0 with A(Z) ~ 0 and <C, Z> < 0 means
        # the LMI system has no solution; a direction y with A*(y) <= 0 and
        # b^T y > 0 means the objective is unbounded.
        if pobj < 0 and np.linalg.norm(AZ) <= 1e-8 * -pobj and -pobj > 1e8 * (1.0 + normb):
            status, message = "infeasible", f"dual ray with <H,Z> = {pobj:.3e}"
            break
        if dobj > 1e8 * (1.0 + normC) and np.sqrt(_inner(Ay, Ay)) <= 1e-8 * dobj * 1e8:
            if all(np.linalg.eigvalsh(-a)[0] >= -1e-8 * dobj for a in Ay):
                status, message = "unbounded", "objective unbounded below"
                break

        try:
            ap, ad, dy, dS, dZ = _step(prob, Z, S, Rd, rp, mu, k_tot, frac)
        except (linalg.LinAlgError, np.linalg.LinAlgError):
            message = "factorization failed"
            break
        if max(ap, ad) < 1e-8:
            message = "step length collapsed"
            break
        Z = [z + ap * d for z, d in zip(Z, dZ)]
        Z = [0.5 * (z + z.T) for z in Z]
        y = y + ad * dy
        S = [s + ad * d for s, d in zip(S, dS)]
        S = [0.5 * (s + s.T) for s in S]
        if not all(np.isfinite(z).all() for z in Z) or not np.isfinite(y).all():
            message = "non-finite iterate"
            break

    if status == "failed" and best is not None and best[0] <= loose_tol:
        status = "optimal-inaccurate"
        message = f"{message}; returning best iterate (gap {best[0]:.1e})"
        y, Z = best[1], best[2]
    slack = prob.slacks(y)
    mins = {blk.name: float(np.linalg.eigvalsh(s)[0]) for blk, s in zip(blocks, slack)}
    pobj, dobj = _inner(C, Z), float(b @ y)
    return SdpResult(
        status=status,
        y=y,
        values=prob.unpack(y),
        primal_obj=pobj,
        dual_obj=dobj,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        iterations=it,
        slack_min_eig=mins,
        message=message,
        Z=Z,
    )


def _step(prob: Problem, Z, S, Rd, rp, mu, k_tot, frac):
    """One Mehrotra predictor-corrector HKM step; returns step lengths and direction."""
    Sinv = [linalg.cho_solve(linalg.cho_factor(s), np.eye(s.shape[0])) for s in S]
    M = prob.schur(Z, Sinv)
    solve_M = _chol_solve(M)

    def direction(Rc):
            # Rc is the right-hand side of dZ S + Z dS = Rc
            rhs = rp - prob.adjoint([(rc - z @ rd) @ si for rc, z, rd, si in zip(Rc, Z, Rd, Sinv)])
            dy = solve_M(rhs)
            Ady = prob.forward(dy)
            dS = [rd - a for rd, a in zip(Rd, Ady)]
            dZ = [(rc - z @ ds) @ si for rc, z, ds, si in zip(Rc, Z, dS, Sinv)]
            dZ = [0.5 * (d + d.T) for d in dZ]
            return dy, dS, dZ

    def direction(Rc):
        # Rc is the right-hand side of dZ S + Z dS = Rc
        rhs = rp - prob.adjoint([(rc - z @ rd) @ si for rc, z, rd, si in zip(Rc, Z, Rd, Sinv)])
        dy = solve_M(rhs)
        Ady = prob.forward(dy)
        dS = [rd - a for rd, a in zip(Rd, Ady)]
        dZ = [(rc - z @ ds) @ si for rc, z, ds, si in zip(Rc, Z, dS, Sinv)]
        dZ = [0.5 * (d + d.T) for d in dZ]
        return dy, dS, dZ

    # predictor
    Rc = [-z @ s for z, s in zip(Z, S)]
    dy, dS, dZ = direction(Rc)
    ap = min(_max_step(z, d) for z, d in zip(Z, dZ))
    ad = min(_max_step(s, d) for s, d in zip(S, dS))
    mu_aff = _inner([z + ap * d for z, d in zip(Z, dZ)], [s + ad * d for s, d in zip(S, dS)]) / k_tot
    sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
    # corrector
    Rc = [sigma * mu * np.eye(z.shape[0]) - z @ s - dz @ ds for z, s, dz, ds in zip(Z, S, dZ, dS)]
    dy, dS, dZ = direction(Rc)
    ap = min(1.0, frac * min(_max_step(z, d) for z, d in zip(Z, dZ)))
    ad = min(1.0, frac * min(_max_step(s, d) for s, d in zip(S, dS)))
    return ap, ad, dy, dS, dZ

"""Dense convex QP solver based on the alternating direction method of multipliers.

Solves ``min 1/2 z'Hz + g'z  s.t.  l <= Gz <= u,  z_lb <= z <= z_ub``.
Variable bounds are stacked under G so the splitting sees one constraint
matrix. The iteration follows the operator-splitting scheme popularized by
OSQP: Ruiz equilibration, over-relaxation, adaptive penalty, infeasibility
certificates from the dual increments, and an optional active-set polish.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .errors import DimensionMismatch

INF = 1e20


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    eps_infeasible: float = 1e-5
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho_interval: int = 25
    check_interval: int = 5
    scaling_iters: int = 10
    polish: bool = True
    regularization: float = 1e-8


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    G: np.ndarray | None = None
    l: np.ndarray | None = None
    u: np.ndarray | None = None
    z_lb: np.ndarray | None = None
    z_ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        if self.H.shape != (n, n) or self.g.shape != (n,):
            raise DimensionMismatch("H must be n x n and g length n")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(self.H))):
            raise ValueError("H is not symmetric")
        if self.G is None:
            self.G = np.zeros((0, n))
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        m = self.G.shape[0]
        if self.G.shape[1] != n and m:
            raise DimensionMismatch("G must have n columns")
        self.G = self.G.reshape(m, n)
        self.l = np.full(m, -np.inf) if self.l is None else np.asarray(self.l, dtype=float)
        self.u = np.full(m, np.inf) if self.u is None else np.asarray(self.u, dtype=float)
        self.z_lb = np.full(n, -np.inf) if self.z_lb is None else np.asarray(self.z_lb, dtype=float)
        self.z_ub = np.full(n, np.inf) if self.z_ub is None else np.asarray(self.z_ub, dtype=float)
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise DimensionMismatch("l and u must match the rows of G")
        if self.z_lb.shape != (n,) or self.z_ub.shape != (n,):
            raise DimensionMismatch("variable bounds must have length n")
        if np.any(self.l > self.u) or np.any(self.z_lb > self.z_ub):
            raise ValueError("lower bound above upper bound")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    def stacked(self):
        """Constraint matrix with the variable bounds appended as identity rows."""
        A = np.vstack([self.G, np.eye(self.n)])
        return A, np.concatenate([self.l, self.z_lb]), np.concatenate([self.u, self.z_ub])

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def dump(self, path) -> None:
        """Write every matrix as a labelled block of plain text for offline checks."""
        with open(path, "w") as fh:
            for name in ("H", "g", "G", "l", "u", "z_lb", "z_ub"):
                arr = np.atleast_2d(getattr(self, name))
                fh.write(f"# {name} {arr.shape[0]} {arr.shape[1]}\n")
                np.savetxt(fh, arr, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "QpProblem":
        blocks, cur, name = {}, [], None
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    if name is not None:
                        blocks[name] = cur
                    _, name, r, c = line.split()
                    cur = (int(r), int(c), [])
                elif line.strip():
                    cur[2].append([float(v) for v in line.split()])
        blocks[name] = cur
        arr = {k: np.array(v[2]).reshape(v[0], v[1]) for k, v in blocks.items()}
        return cls(arr["H"], arr["g"][0], arr["G"], arr["l"][0], arr["u"][0], arr["z_lb"][0], arr["z_ub"][0])


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))  # multipliers of the stacked rows
    solve_time: float = 0.0
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _ruiz(H, A, iters):
    n, m = H.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    # scaling is positive, so working on the absolute values is exact
    aH, aA = np.abs(H), np.abs(A)
    for _ in range(iters):
        row = aA.max(axis=1) if m else np.zeros(0)
        col = np.maximum(aH.max(axis=0), aA.max(axis=0)) if m else aH.max(axis=0)
        dn = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        em = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        aH *= dn[:, None]
        aH *= dn[None, :]
        aA *= em[:, None]
        aA *= dn[None, :]
        D *= dn
        E *= em
    return D, E


class DenseAdmmSolver:
    """Reusable solver; ``solve`` accepts an optional warm start."""

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()

    def solve(self, p: QpProblem, z0=None, y0=None) -> QpSolution:
        st = self.settings
        t0 = time.perf_counter()
        H = p.H
        w = np.linalg.eigvalsh(H)
        if w[0] < 0:
            H = H + st.regularization * np.eye(p.n)
        A, lo, hi = p.stacked()
        lo = np.maximum(lo, -INF)
        hi = np.minimum(hi, INF)
        n, m = A.shape[1], A.shape[0]

        D, E = _ruiz(H, A, st.scaling_iters)
        c = 1.0 / max(1e-4, min(1e4, max(np.mean(np.max(np.abs(D[:, None] * H * D[None, :]), axis=0)),
                                            np.max(np.abs(D * p.g)))))
        Hs = c * D[:, None] * H * D[None, :]
        qs = c * D * p.g
        As = E[:, None] * A * D[None, :]
        AsT = np.ascontiguousarray(As.T)
        ls = np.where(lo <= -INF, -INF, E * lo)
        us = np.where(hi >= INF, INF, E * hi)

        equality = (hi - lo) < 1e-9
        loose = (lo <= -INF) & (hi >= INF)
        rho = st.rho

        def rho_vec(r):
            v = np.full(m, r)
            v[equality] = 1e3 * r
            v[loose] = 1e-6
            return v

        rv = rho_vec(rho)
        K = cho_factor(Hs + st.sigma * np.eye(n) + AsT @ (rv[:, None] * As), check_finite=False)

        x = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float) / D
        z = np.clip(As @ x, ls, us)
        y = np.zeros(m) if y0 is None or len(y0) != m else np.asarray(y0, dtype=float) / E * c
        status = QpStatus.MAX_ITER
        r_prim = r_dual = np.inf
        it = 0
        for it in range(1, st.max_iter + 1):
            x_prev, y_prev = x, y
            rhs = st.sigma * x - qs + AsT @ (rv * z - y)
            x_t = cho_solve(K, rhs, check_finite=False)
            z_t = As @ x_t
            x = st.alpha * x_t + (1.0 - st.alpha) * x_prev
            z_relax = st.alpha * z_t + (1.0 - st.alpha) * z
            z_new = np.clip(z_relax + y / rv, ls, us)
            y = y + rv * (z_relax - z_new)
            z = z_new

            if it % st.check_interval and it != st.max_iter:
                continue
            Ax = As @ x
            Hx = Hs @ x
            Aty = AsT @ y
            r_prim = np.max(np.abs((Ax - z) / E), initial=0.0)
            r_dual = np.max(np.abs((Hx + qs + Aty) / D), initial=0.0) / c
            eps_p = st.eps_abs + st.eps_rel * max(np.max(np.abs(Ax / E), initial=0.0),
                                                  np.max(np.abs(z / E), initial=0.0))
            eps_d = st.eps_abs + st.eps_rel / c * max(np.max(np.abs(Hx / D)), np.max(np.abs(Aty / D)),
                                                      np.max(np.abs(qs / D)))
            if r_prim <= eps_p and r_dual <= eps_d:
                status = QpStatus.OPTIMAL
                break
            dy = y - y_prev
            ndy = np.max(np.abs(E * dy), initial=0.0)
            if ndy > 1e-12:
                lhs = np.max(np.abs((AsT @ dy) / D))
                support = np.sum(np.where(dy > 0, us, ls) * dy, where=dy != 0)
                if lhs <= st.eps_infeasible * ndy and support < -st.eps_infeasible * ndy:
                    status = QpStatus.INFEASIBLE
                    break
            if it % st.adaptive_rho_interval == 0:
                num = r_prim / max(np.max(np.abs(Ax)), np.max(np.abs(z)), 1e-12)
                den = r_dual * c / max(np.max(np.abs(Hx)), np.max(np.abs(Aty)), np.max(np.abs(qs)), 1e-12)
                new = float(np.clip(rho * np.sqrt(num / max(den, 1e-12)), 1e-6, 1e6))
                if new > 5.0 * rho or new < 0.2 * rho:
                    rho = new
                    rv = rho_vec(rho)
                    K = cho_factor(Hs + st.sigma * np.eye(n) + AsT @ (rv[:, None] * As), check_finite=False)

        z_out = D * x
        y_out = E * y / c
        polished = False
        if status is not QpStatus.INFEASIBLE and st.polish:
            res = _polish(H, p.g, A, lo, hi, z_out, y_out)
            if res is not None:
                zp, yp, rp, rd = res
                if rp <= max(r_prim, st.eps_abs) and rd <= max(r_dual, st.eps_abs):
                    z_out, y_out, r_prim, r_dual = zp, yp, rp, rd
                    polished = True
                    status = QpStatus.OPTIMAL
        return QpSolution(z_out, p.objective(z_out), status, it, float(r_prim), float(r_dual),
                          y_out, time.perf_counter() - t0, polished)


def _polish(H, g, A, lo, hi, z, y, delta=1e-9, refine=3, tol=1e-9):
    """Solve the equality-constrained problem on the guessed active set.

    The guess comes from the ADMM iterate. If the KKT solution puts a
    multiplier on the wrong side of its bound, that row is released; if it
    violates an inactive row, the worst one is added. A few passes of this
    usually repair a slightly wrong guess.
    """
    Az = A @ z
    lower = (Az - lo < -y) & (lo > -INF)
    upper = (hi - Az < y) & (hi < INF) & ~lower
    n, m = H.shape[0], A.shape[0]
    for _ in range(max(3, m // 2)):
        act = lower | upper
        Aa = A[act]
        b = np.where(lower, lo, hi)[act]
        k = Aa.shape[0]
        KKT = np.block([[H, Aa.T], [Aa, np.zeros((k, k))]])
        reg = np.block([[delta * np.eye(n), np.zeros((n, k))], [np.zeros((k, n)), -delta * np.eye(k)]])
        rhs = np.concatenate([-g, b])
        try:
            lu = lu_factor(KKT + reg, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = lu_solve(lu, rhs, check_finite=False)
        for _ in range(refine):
            sol = sol + lu_solve(lu, rhs - KKT @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        zp = sol[:n]
        yp = np.zeros(m)
        yp[act] = sol[n:]
        # multipliers must carry the sign of the bound they hold
        wrong = np.where(lower, yp, 0.0) * (yp > 1e-7) - np.where(upper, yp, 0.0) * (yp < -1e-7)
        Azp = A @ zp
        viol = np.maximum(lo - Azp, 0.0) + np.maximum(Azp - hi, 0.0)
        if np.any(wrong > 0):
            i = int(np.argmax(wrong))
            lower[i] = upper[i] = False
            continue
        if viol.max(initial=0.0) > tol:
            i = int(np.argmax(viol))
            if lo[i] - Azp[i] > 0:
                lower[i] = True
            else:
                upper[i] = True
            continue
        rd = float(np.max(np.abs(H @ zp + g + A.T @ yp)))
        return zp, yp, float(viol.max(initial=0.0)), rd
    return None


def solve(p: QpProblem, warm=None, settings: QpSettings | None = None) -> QpSolution:
    return DenseAdmmSolver(settings).solve(p, warm)

"""Tube-based LTV MPC with a Kalman-filtered error tube.

The controller steers a nominal copy of the predictive model with a
condensed QP every ``T_mpc`` and corrects the real-minus-nominal error with
the ancillary gain ``K_e`` every ``T_control``:

    u = u_bar - K_e e_hat

Three variants share the code path. LTVMPC resets the nominal to the
measurement at every solve and applies no feedback. T-LTVMPC feeds back the
raw error and tightens by the raw error bound. FT-LTVMPC feeds back the
filtered, hysteresis-held error and tightens by its invariant box.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.linalg import solve_discrete_are

from .errors import (ContractionViolated, DimensionMismatch, EmptyTightenedSet, UnstableClosedLoop)
from .kinematics import wheel_angles_from_pose
from .params import VehicleParams
from .predict import (BETA, D, DPSI, N_U, N_X, R, S, Horizon, PredictModel, build_horizon,
                      discretize, output_selector, steady_state_input)
from .qp import DenseAdmmSolver, QpProblem, QpSettings, QpStatus

DEFAULT_Q = (0.0, 10.0, 11.7, 0.0, 0.0)
DEFAULT_R = (19.1, 19.1)
DEFAULT_PF = (0.0, 3.3, 3.9, 0.0, 0.0)
DEFAULT_ME = (0.0, 0.075, 0.022, 0.022, 0.009)
DEFAULT_KE = ((0.0, 0.35, 4.66, 0.05, 1.27), (0.0, 3.09, 2.12, 1.66, 0.02))
COV_FLOOR = 1e-12
# error components run through the filter; arc length is resynchronized at
# every solve and carries no feedback gain
FILTERED = [D, DPSI, BETA, R]


class Variant(enum.Enum):
    LTVMPC = "LTVMPC"
    T_LTVMPC = "T_LTVMPC"
    FT_LTVMPC = "FT_LTVMPC"

    @classmethod
    def parse(cls, name) -> "Variant":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "_")
        return cls[key]


def _arr(v) -> np.ndarray:
    a = np.array(v, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MpcConfig:
    T_control: float = 0.02
    T_mpc: float = 0.25
    N: int = 20
    Q: tuple = DEFAULT_Q  # diagonal, on tracked outputs
    R: tuple = DEFAULT_R  # diagonal, on deviation from the feedforward pose
    P_f: tuple = DEFAULT_PF
    beta_max: float = math.radians(10.0)
    r_max: float = 0.3
    omega_max: float = math.radians(90.0)
    M_e: tuple = DEFAULT_ME
    K_e: tuple = DEFAULT_KE
    hysteresis: tuple | None = None  # defaults to 0.1 M_e
    kalman_q: tuple | None = None  # diagonal; defaults to M_e^2
    kalman_r: tuple | None = None  # diagonal; defaults to (0.1 M_e)^2
    variant: Variant = Variant.FT_LTVMPC
    heading_mode: str = "body"
    substeps: int = 10  # Euler substeps per T_mpc in the prediction
    control_substeps: int = 10  # Euler substeps per T_control for nominal and error models
    slack_weight: float = 1e4
    terminal_d: float = 0.5
    terminal_heading: float = math.radians(15.0)
    input_limit: float = 0.5 * math.pi - 0.01
    losm_constraint: bool = True
    losm_margin: float = 0.02  # rad on theta_R
    feedforward: bool = True
    recompute_terminal: bool = False
    v_floor: float = 0.5
    qp_max_iter: int = 4000

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        for name in ("Q", "P_f", "M_e"):
            if len(getattr(self, name)) != N_X:
                raise DimensionMismatch(f"{name} needs {N_X} entries")
        if len(self.R) != N_U:
            raise DimensionMismatch(f"R needs {N_U} entries")
        if np.shape(self.K_e) != (N_U, N_X):
            raise DimensionMismatch("K_e must be 2 x 5")
        if not self.T_mpc >= self.T_control > 0:
            raise ValueError("need T_mpc >= T_control > 0")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        for name in ("Q", "R", "P_f", "M_e"):
            if min(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.heading_mode not in ("body", "velocity"):
            raise ValueError("heading_mode must be 'body' or 'velocity'")

    @property
    def q(self) -> np.ndarray:
        return np.diag(self.Q)

    @property
    def r(self) -> np.ndarray:
        return np.diag(self.R)

    @property
    def p_f(self) -> np.ndarray:
        return np.diag(self.P_f)

    @property
    def k_e(self) -> np.ndarray:
        return np.array(self.K_e, dtype=float)

    @property
    def m_e(self) -> np.ndarray:
        return np.array(self.M_e, dtype=float)

    @property
    def eps(self) -> np.ndarray:
        return 0.1 * self.m_e if self.hysteresis is None else np.array(self.hysteresis, dtype=float)

    @property
    def kalman_cov(self):
        q = self.m_e ** 2 if self.kalman_q is None else np.array(self.kalman_q, dtype=float)
        r = (0.1 * self.m_e) ** 2 if self.kalman_r is None else np.array(self.kalman_r, dtype=float)
        return np.diag(np.maximum(q, COV_FLOOR)), np.diag(np.maximum(r, COV_FLOOR))

    @property
    def ticks_per_solve(self) -> float:
        return self.T_mpc / self.T_control

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Variant):
                v = v.value
            elif isinstance(v, tuple):
                v = np.asarray(v).tolist()
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MpcConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown controller fields: {sorted(unknown)}")
        conv = {}
        for k, v in d.items():
            if isinstance(v, list):
                v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
            conv[k] = v
        return cls(**conv)

    def with_variant(self, variant) -> "MpcConfig":
        return replace(self, variant=Variant.parse(variant))


# terminal weight and gains


def lqr_gain(A, B, Q, R) -> np.ndarray:
    """Discrete LQR gain K with u = -K x."""
    P = solve_discrete_are(A, B, Q, R)
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def lyapunov_terminal_weight(A, B, Q, R, K_f=None, tol: float = 1e-10, max_iter: int = 100000) -> np.ndarray:
    """Fixed point of P = Q + K'RK + (A - BK)' P (A - BK)."""
    A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R))
    K = lqr_gain(A, B, Q, R) if K_f is None else np.atleast_2d(np.asarray(K_f, dtype=float))
    Acl = A - B @ K
    rho = max(abs(np.linalg.eigvals(Acl)))
    if rho >= 1.0:
        raise UnstableClosedLoop(f"spectral radius {rho:.4f} >= 1")
    W = Q + K.T @ R @ K
    P = W.copy()
    for _ in range(max_iter):
        P_next = W + Acl.T @ P @ Acl
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P_next))):
            P = P_next
            break
        P = P_next
    return 0.5 * (P + P.T)


# error filter and tube


def error_box_bound(A_e, K_k, M_e, M_v=None) -> np.ndarray:
    """Per-component bound on the filtered error.

    The filter recursion is ``e+ = (I - K) A_e e + K y`` with ``|y| <= M_e +
    M_v``; propagating boxes gives the fixed point
    ``c = (I - |(I - K) A_e|)^-1 |K| (M_e + M_v)``.
    """
    n = A_e.shape[0]
    M_e = np.asarray(M_e, dtype=float)
    M_v = np.zeros(n) if M_v is None else np.asarray(M_v, dtype=float)
    F = (np.eye(n) - K_k) @ A_e
    norm = np.linalg.norm(F, 2)
    if norm >= 1.0:
        raise ContractionViolated(f"||(I - K) A_e|| = {norm:.4f} >= 1")
    absF = np.abs(F)
    if max(abs(np.linalg.eigvals(absF))) >= 1.0:
        raise ContractionViolated("box recursion does not contract")
    return np.linalg.solve(np.eye(n) - absF, np.abs(K_k) @ (M_e + M_v))


@dataclass(frozen=True)
class ErrorFilterState:
    e_hat: np.ndarray  # filter estimate before the hold
    prior: np.ndarray
    P: np.ndarray
    held: np.ndarray  # output after hysteresis
    gain: np.ndarray
    bound: np.ndarray  # invariant box half-widths

    @classmethod
    def initial(cls, A_e, Q_k, R_k, M_e) -> "ErrorFilterState":
        n = A_e.shape[0]
        P_prior = solve_discrete_are(A_e.T, np.eye(n), Q_k, R_k)
        P_prior = 0.5 * (P_prior + P_prior.T)
        K = P_prior @ np.linalg.inv(P_prior + R_k)
        P = (np.eye(n) - K) @ P_prior @ (np.eye(n) - K).T + K @ R_k @ K.T
        zero = np.zeros(n)
        return cls(zero, zero, 0.5 * (P + P.T), zero, K, error_box_bound(A_e, K, M_e))


def kalman_hysteresis_update(state: ErrorFilterState, e_meas, A_e, Q_k, R_k, eps) -> ErrorFilterState:
    """One predict/update cycle with C = I, Joseph form, then the per-component hold.

    A component of the output moves to the new estimate only when it differs
    from the previously held value by at least its threshold.
    """
    n = A_e.shape[0]
    I = np.eye(n)
    prior = A_e @ state.e_hat
    P_prior = A_e @ state.P @ A_e.T + Q_k
    K = P_prior @ np.linalg.inv(P_prior + R_k)
    e_hat = prior + K @ (np.asarray(e_meas, dtype=float) - prior)
    IK = I - K
    P = IK @ P_prior @ IK.T + K @ R_k @ K.T
    P = 0.5 * (P + P.T)
    moved = np.abs(e_hat - state.held) >= np.asarray(eps, dtype=float)
    held = np.where(moved, e_hat, state.held)
    return ErrorFilterState(e_hat, prior, P, held, K, state.bound)


@dataclass(frozen=True)
class TightenedSets:
    """Constraint levels after subtracting the error box ``E = [-bound, bound]``."""

    bound: np.ndarray
    beta_rel_max: float  # |beta - beta_R|
    r_max: float
    input_lo: np.ndarray
    input_hi: np.ndarray
    terminal_d: float
    terminal_heading: float
    input_margin: np.ndarray  # |K_e| bound, reused for other input rows

    def margin(self, a_x, a_u) -> float:
        """Tightening of a row ``a_x' x + a_u' u`` under ``u = u_bar - K_e e``."""
        return float(np.abs(np.asarray(a_x) - self._k_e.T @ np.asarray(a_u)) @ self.bound)

    _k_e: np.ndarray = field(default_factory=lambda: np.zeros((N_U, N_X)), repr=False)


def tighten_sets(cfg: MpcConfig, bound=None) -> TightenedSets:
    """Pontryagin differences of the box constraints with the error box."""
    bound = np.zeros(N_X) if bound is None else np.asarray(bound, dtype=float)
    K = cfg.k_e
    input_margin = np.abs(K) @ bound
    head = np.zeros(N_X)
    head[DPSI] = 1.0
    if cfg.heading_mode == "body":
        head[BETA] = -1.0
    # the sideslip row is tightened by the state error only; counting the
    # feedback-induced shift of beta_R as well empties it at the default gains
    beta_rel = cfg.beta_max - bound[BETA]
    sets = TightenedSets(
        bound=_arr(bound),
        beta_rel_max=beta_rel,
        r_max=cfg.r_max - bound[R],
        input_lo=_arr(-cfg.input_limit + input_margin),
        input_hi=_arr(cfg.input_limit - input_margin),
        terminal_d=cfg.terminal_d - bound[D],
        terminal_heading=cfg.terminal_heading - float(np.abs(head) @ bound),
        input_margin=_arr(input_margin),
        _k_e=K,
    )
    if min(sets.beta_rel_max, sets.r_max, sets.terminal_d, sets.terminal_heading) <= 0 or np.any(
            sets.input_lo >= sets.input_hi):
        raise EmptyTightenedSet(f"error box {bound} empties a constraint set")
    return sets


# condensed QP


@dataclass(frozen=True)
class Prediction:
    """Stacked affine map ``X = Fx x0 + Fu U + f`` over states 1..N."""

    Fx: np.ndarray  # (5N, 5)
    Fu: np.ndarray  # (5N, 2N)
    f: np.ndarray  # (5N,)

    def states(self, x0, U) -> np.ndarray:
        return (self.Fx @ x0 + self.Fu @ np.ravel(U) + self.f).reshape(-1, N_X)


def condense(horizon: Horizon) -> Prediction:
    N = horizon.N
    Fx = np.zeros((N_X * N, N_X))
    Fu = np.zeros((N_X * N, N_U * N))
    f = np.zeros(N_X * N)
    Ax, Au, af = np.eye(N_X), np.zeros((N_X, N_U * N)), np.zeros(N_X)
    for k, st in enumerate(horizon.steps):
        Ax = st.A @ Ax
        Au = st.A @ Au
        Au[:, N_U * k:N_U * (k + 1)] += st.B
        af = st.A @ af + st.c
        rows = slice(N_X * k, N_X * (k + 1))
        Fx[rows], Fu[rows], f[rows] = Ax, Au, af
    return Prediction(Fx, Fu, f)


def assemble_cost(pred: Prediction, x0, y_ref, u_ff, cfg: MpcConfig, P_f=None, selector=None):
    """Hessian and gradient of the tracking cost over the stacked inputs.

    ``y_ref`` is (N, 5) for predicted states 1..N, ``u_ff`` is (N, 2). The
    last state carries the terminal weight.
    """
    N = cfg.N
    y_ref = np.asarray(y_ref, dtype=float)
    u_ff = np.asarray(u_ff, dtype=float)
    if y_ref.shape != (N, N_X) or u_ff.shape != (N, N_U) or pred.Fu.shape != (N_X * N, N_U * N):
        raise DimensionMismatch("horizon, reference and feedforward lengths disagree")
    S_ = output_selector(cfg.heading_mode) if selector is None else selector
    P_f = cfg.p_f if P_f is None else P_f
    Wy = [S_.T @ cfg.q @ S_] * (N - 1) + [S_.T @ P_f @ S_]
    W = np.zeros((N_X * N, N_X * N))
    for k, w in enumerate(Wy):
        W[N_X * k:N_X * (k + 1), N_X * k:N_X * (k + 1)] = w
    # reference expressed in state coordinates: S x_ref = y_ref with S invertible
    x_ref = np.linalg.solve(S_, y_ref.T).T.ravel()
    Rb = np.kron(np.eye(N), cfg.r)
    free = pred.Fx @ np.asarray(x0, dtype=float) + pred.f - x_ref
    FuW = pred.Fu.T @ W
    H = 2.0 * (FuW @ pred.Fu + Rb)
    g = 2.0 * (FuW @ free - Rb @ u_ff.ravel())
    const = float(free @ W @ free + u_ff.ravel() @ Rb @ u_ff.ravel())
    return 0.5 * (H + H.T), g, const


def _wheel_angles_batch(theta, beta, params: VehicleParams) -> np.ndarray:
    t = np.tan(theta)[:, None]
    d = np.arctan2(params.wheel_x * t + np.sin(beta)[:, None], np.cos(beta)[:, None] - params.wheel_y * t)
    d = np.where(d > 0.5 * np.pi, d - np.pi, d)
    return np.where(d < -0.5 * np.pi, d + np.pi, d)


def pose_jacobians(U, params: VehicleParams, h: float = 1e-6) -> np.ndarray:
    """Central-difference sensitivity of the wheel angles to the pose, shape (N, wheels, 2)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    th, be = U[:, 0], U[:, 1]
    d_theta = (_wheel_angles_batch(th + h, be, params) - _wheel_angles_batch(th - h, be, params)) / (2 * h)
    d_beta = (_wheel_angles_batch(th, be + h, params) - _wheel_angles_batch(th, be - h, params)) / (2 * h)
    return np.stack([d_theta, d_beta], axis=-1)


def losm_row(beta0: float, params: VehicleParams, margin: float):
    """Linearized ICR-outside-track bound ``|theta| <= atan((2/M) cos beta) - margin``.

    Returns ``(slope, offset)`` so the bound reads
    ``+-theta <= offset + slope (beta - beta0)``.
    """
    a = 2.0 / params.track
    cb = math.cos(beta0)
    offset = math.atan(a * cb) - margin
    slope = -a * math.sin(beta0) / (1.0 + (a * cb) ** 2)
    return slope, offset


@dataclass
class ConstraintSet:
    G: np.ndarray
    l: np.ndarray
    u: np.ndarray
    z_lb: np.ndarray
    z_ub: np.ndarray
    n_soft: int


def assemble_constraints(pred: Prediction, horizon: Horizon, x0, cfg: MpcConfig, sets: TightenedSets,
                         params: VehicleParams, u_prev) -> ConstraintSet:
    """Rows over ``z = [U (2N), slack_beta (N), slack_r (N)]``."""
    N = cfg.N
    nu = N_U * N
    nz = nu + 2 * N
    x0 = np.asarray(x0, dtype=float)
    free = pred.Fx @ x0 + pred.f
    rows, lo, hi = [], [], []

    def add(coef, l_, u_):
        rows.append(coef)
        lo.append(l_)
        hi.append(u_)

    # sideslip relative to the commanded pose, k = 0..N-1, soft
    for k in range(N):
        a = np.zeros(nz)
        a[N_U * k + 1] = -1.0
        if k == 0:
            base = x0[BETA]
        else:
            a[:nu] += pred.Fu[N_X * (k - 1) + BETA]
            base = free[N_X * (k - 1) + BETA]
        lim = sets.beta_rel_max
        lower = a.copy()
        lower[nu + k] = 1.0
        upper = a.copy()
        upper[nu + k] = -1.0
        add(lower, -lim - base, np.inf)
        add(upper, -np.inf, lim - base)
    # yaw rate, k = 1..N, soft
    for k in range(N):
        a = np.zeros(nz)
        a[:nu] = pred.Fu[N_X * k + R]
        base = free[N_X * k + R]
        lower = a.copy()
        lower[nu + N + k] = 1.0
        upper = a.copy()
        upper[nu + N + k] = -1.0
        add(lower, -sets.r_max - base, np.inf)
        add(upper, -np.inf, sets.r_max - base)
    # ICR kept outside the track, hard
    if cfg.losm_constraint:
        for k in range(N):
            b0 = float(horizon.controls[k, 1])
            slope, offset = losm_row(b0, params, cfg.losm_margin)
            for sign in (1.0, -1.0):
                a_u = np.array([sign, -slope])
                a = np.zeros(nz)
                a[N_U * k:N_U * (k + 1)] = a_u
                add(a, -np.inf, offset - slope * b0 - sets.margin(np.zeros(N_X), a_u))
    # wheel steering rate, hard
    step_lim = cfg.omega_max * cfg.T_mpc
    jac = pose_jacobians(horizon.controls, params)
    nw = params.n_wheels
    for k in range(N):
        Cd = jac[k]
        a = np.zeros((nw, nz))
        a[:, N_U * k:N_U * (k + 1)] = Cd
        if k == 0:
            ref = Cd @ u_prev
        else:
            a[:, N_U * (k - 1):N_U * k] -= Cd
            ref = np.zeros(nw)
        rows.extend(a)
        lo.extend(ref - step_lim)
        hi.extend(ref + step_lim)
    # terminal box, hard
    S_ = output_selector(cfg.heading_mode)
    last = slice(N_X * (N - 1), N_X * N)
    a = np.zeros(nz)
    a[:nu] = pred.Fu[last][D]
    add(a, -sets.terminal_d - free[last][D], sets.terminal_d - free[last][D])
    head = S_[DPSI]
    a = np.zeros(nz)
    a[:nu] = head @ pred.Fu[last]
    base = float(head @ free[last]) - horizon.heading_ref[N]
    add(a, -sets.terminal_heading - base, sets.terminal_heading - base)

    z_lb = np.concatenate([np.tile(sets.input_lo, N), np.zeros(2 * N)])
    z_ub = np.concatenate([np.tile(sets.input_hi, N), np.full(2 * N, np.inf)])
    return ConstraintSet(np.array(rows), np.array(lo), np.array(hi), z_lb, z_ub, 2 * N)


# controller


@dataclass(frozen=True)
class ControlSolution:
    u_bar: np.ndarray  # (N, 2) nominal sequence of the latest solve
    x_bar: np.ndarray  # (N, 5) nominal predicted states 1..N
    u: np.ndarray  # applied pose (theta_R, beta_R)
    delta: np.ndarray  # per-wheel angles
    e: np.ndarray  # raw error x - x_bar
    e_used: np.ndarray  # error term fed back
    solved: bool  # a QP ran this tick
    status: str
    iterations: int
    solve_time: float
    clipped: bool


class TubeMpcController:
    """Two-rate controller; call ``step`` once per ``T_control``."""

    def __init__(self, cfg: MpcConfig, params: VehicleParams, path, qp_settings: QpSettings | None = None):
        self.cfg = cfg
        self.params = params
        self.path = path
        self.model = PredictModel(params)
        self.solver = DenseAdmmSolver(qp_settings or QpSettings(max_iter=cfg.qp_max_iter))
        self.Q_k, self.R_k = cfg.kalman_cov
        self._Q_r = self.Q_k[np.ix_(FILTERED, FILTERED)]
        self._R_r = self.R_k[np.ix_(FILTERED, FILTERED)]
        self.selector = output_selector(cfg.heading_mode)
        self._warm_up()
        self.reset()

    def _warm_up(self):
        # load the compiled kernels now so the first solve is timed fairly
        x = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
        self.model.jacobians(x, np.zeros(N_U), 5.0, 0.0)
        steady_state_input(self.model, 5.0, 0.0, 0.0)

    def reset(self, x0=None, u_prev=None):
        cfg = self.cfg
        self.x_bar = None if x0 is None else np.array(x0, dtype=float)
        self.u_bar_seq = None
        self.x_bar_seq = np.zeros((cfg.N, N_X))
        self.u_prev = np.zeros(N_U) if u_prev is None else np.array(u_prev, dtype=float)
        self.filter = None
        self.sets = tighten_sets(cfg, None)
        self.next_solve = 0
        self.n_solves = 0
        self.tick = 0
        self._z = None
        self._ff_last = None
        self.nominal_step = None  # (A, B, c) over T_control
        self.A_e = None
        self.last_status = "none"

    # helpers

    def _feedforward(self, v: float, s_arr, kappa_arr):
        cfg = self.cfg
        out = np.zeros((len(s_arr), N_U))
        if not cfg.feedforward:
            return out
        s_arr = np.asarray(s_arr, dtype=float)
        refs = self.path.heading_ref_at(s_arr)
        slopes = self.path.heading_ref_at(s_arr + 0.5) - self.path.heading_ref_at(s_arr - 0.5)
        for k, kappa in enumerate(kappa_arr):
            seed = self._ff_last if k == 0 else out[k - 1]
            out[k] = steady_state_input(self.model, v, float(kappa), float(refs[k]), float(slopes[k]),
                                        cfg.heading_mode, seed=seed)
        self._ff_last = out[0].copy()
        return out

    def _control_rate_model(self, step):
        st = discretize(step.A_t, step.B_t, step.A_t @ step.x0 + step.B_t @ step.u0 + step.c_t,
                        step.x0, step.u0, self.cfg.T_control, self.cfg.control_substeps)
        return st.A, st.B, st.c

    def _solve(self, x0, v: float):
        cfg = self.cfg
        N = cfg.N
        t0 = time.perf_counter()
        if self.u_bar_seq is None:
            s_pred = x0[S] + v * cfg.T_mpc * np.arange(N)
            seed = self._feedforward(v, s_pred, self.path.curvature_at(s_pred))
        else:
            seed = np.vstack([self.u_bar_seq[1:], self.u_bar_seq[-1:]])
        horizon = build_horizon(self.model, x0, seed, self.path, v, cfg.T_mpc, N, cfg.substeps)
        u_ff = self._feedforward(v, horizon.states[:N, S], horizon.kappa)
        pred = condense(horizon)
        y_ref = np.zeros((N, N_X))
        y_ref[:, DPSI] = horizon.heading_ref[1:]
        P_f = self._terminal_weight(horizon) if cfg.recompute_terminal else None
        H, g, _ = assemble_cost(pred, x0, y_ref, u_ff, cfg, P_f, self.selector)

        A_c, B_c, c_c = self._control_rate_model(horizon.steps[0])
        A_e = A_c - B_c @ cfg.k_e
        self.nominal_step = (A_c, B_c, c_c)
        self.A_e = A_e
        self._update_tube(A_e)

        cons = assemble_constraints(pred, horizon, x0, cfg, self.sets, self.params, self.u_prev)
        ns = cons.n_soft
        Hz = np.zeros((N_U * N + ns, N_U * N + ns))
        Hz[:N_U * N, :N_U * N] = H
        Hz[N_U * N:, N_U * N:] = 2.0 * cfg.slack_weight * np.eye(ns)
        gz = np.concatenate([g, np.zeros(ns)])
        problem = QpProblem(Hz, gz, cons.G, cons.l, cons.u, cons.z_lb, cons.z_ub)
        warm = None
        if self._z is not None:
            U = self._z[:N_U * N].reshape(N, N_U)
            warm = np.concatenate([np.vstack([U[1:], U[-1:]]).ravel(), np.zeros(ns)])
        sol = self.solver.solve(problem, warm)
        status = sol.status.value
        if sol.status is QpStatus.INFEASIBLE or not np.all(np.isfinite(sol.z)):
            U = seed.copy()  # previous sequence shifted
            status = QpStatus.INFEASIBLE.value
        else:
            U = np.clip(sol.z[:N_U * N], cons.z_lb[:N_U * N], cons.z_ub[:N_U * N]).reshape(N, N_U)
            self._z = sol.z
        self.u_bar_seq = U
        self.x_bar_seq = pred.states(x0, U)
        self.last_status = status
        return status, sol.iterations, time.perf_counter() - t0

    def _terminal_weight(self, horizon: Horizon):
        cfg = self.cfg
        st = horizon.steps[-1]
        keep = [D, DPSI, BETA, R]
        A = st.A[np.ix_(keep, keep)]
        B = st.B[keep]
        Qy = (self.selector.T @ cfg.q @ self.selector)[np.ix_(keep, keep)]
        P = lyapunov_terminal_weight(A, B, Qy + 1e-6 * np.eye(4), cfg.r)
        out = np.zeros((N_X, N_X))
        out[np.ix_(keep, keep)] = P
        # expressed on outputs: S' P_y S = P_x with P_y = S^-T P_x S^-1
        Sinv = np.linalg.inv(self.selector)
        return Sinv.T @ out @ Sinv

    def _update_tube(self, A_e):
        cfg = self.cfg
        variant = cfg.variant
        bound = np.zeros(N_X)
        if variant is not Variant.LTVMPC:
            # the fixed feedback gain loses stability at low speed, where the
            # yaw and sideslip modes outrun the control period
            rho = max(abs(np.linalg.eigvals(A_e[np.ix_(FILTERED, FILTERED)])))
            if rho >= 1.0:
                raise UnstableClosedLoop(f"error dynamics spectral radius {rho:.4f} >= 1")
        if variant is Variant.FT_LTVMPC:
            A_r = A_e[np.ix_(FILTERED, FILTERED)]
            if self.filter is None:
                self.filter = ErrorFilterState.initial(A_r, self._Q_r, self._R_r, cfg.m_e[FILTERED])
            else:
                self.filter = replace(self.filter, bound=error_box_bound(A_r, self.filter.gain, cfg.m_e[FILTERED]))
            bound[FILTERED] = self.filter.bound
        elif variant is Variant.T_LTVMPC:
            bound = cfg.m_e
        self.sets = tighten_sets(cfg, bound)

    def _filter_update(self, e):
        A_r = self.A_e[np.ix_(FILTERED, FILTERED)]
        self.filter = kalman_hysteresis_update(self.filter, e[FILTERED], A_r, self._Q_r, self._R_r,
                                               self.cfg.eps[FILTERED])

    # main entry

    def step(self, x_meas, v_meas: float) -> ControlSolution:
        """Measure, filter, solve when due, apply, advance the nominal."""
        cfg = self.cfg
        x_meas = np.asarray(x_meas, dtype=float)
        v = max(float(v_meas), cfg.v_floor)
        if self.x_bar is None:
            self.x_bar = x_meas.copy()
        solve_due = self.tick >= self.next_solve
        if solve_due:
            if cfg.variant is Variant.LTVMPC:
                self.x_bar = x_meas.copy()
            else:
                self.x_bar[S] = x_meas[S]
            self._v = v
        e = x_meas - self.x_bar

        status, iters, dt = self.last_status, 0, 0.0
        if solve_due:
            status, iters, dt = self._solve(self.x_bar, v)
            self.n_solves += 1
            # next solve at the first tick at or past the next multiple of T_mpc
            self.next_solve = math.ceil(self.n_solves * cfg.T_mpc / cfg.T_control - 1e-9)

        e_used = np.zeros(N_X)
        if cfg.variant is Variant.FT_LTVMPC:
            self._filter_update(e)
            e_used[FILTERED] = self.filter.held
        elif cfg.variant is Variant.T_LTVMPC:
            e_used = e

        u_bar = self.u_bar_seq[0]
        u = u_bar - cfg.k_e @ e_used
        lim = cfg.input_limit
        clipped = bool(np.any(np.abs(u) > lim))
        if clipped:
            u = np.clip(u, -lim, lim)
        delta = wheel_angles_from_pose(float(u[0]), float(u[1]), self.params)

        A_c, B_c, c_c = self.nominal_step
        self.x_bar = A_c @ self.x_bar + B_c @ u_bar + c_c
        self.u_prev = u_bar.copy()
        self.tick += 1
        return ControlSolution(self.u_bar_seq.copy(), self.x_bar_seq.copy(), u, delta, e, np.array(e_used),
                               solve_due, status, iters, dt, clipped)

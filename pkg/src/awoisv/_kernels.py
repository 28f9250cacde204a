"""Scalar-loop plant kernels, JIT-compiled with numba when it is available.

The closed loop integrates the body dynamics at 1 ms, so the per-step cost
of small numpy arrays dominates. These kernels restate the (v, beta, r)
rates with explicit wheel loops; tests check them against the vectorized
functions in ``dynamics``.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def vbr_rates(v, beta, r, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz):
    cb = math.cos(beta)
    sb = math.sin(beta)
    vx = v * cb
    vy = v * sb
    v_dot = 0.0
    side = 0.0
    mz = 0.0
    for k in range(xw.shape[0]):
        s = sin_d[k]
        c = cos_d[k]
        vtx = vx - yw[k] * r
        vty = vy + xw[k] * r
        v_roll = vtx * c + vty * s
        v_side = -vtx * s + vty * c
        if abs(v_roll) < 1e-6:
            alpha = 0.0
        else:
            alpha = v_side / abs(v_roll)
        f = fx[k]
        lim = mu * fz
        if f > lim:
            f = lim
        elif f < -lim:
            f = -lim
        fmax = math.sqrt(max(lim * lim - f * f, 0.0))
        if fmax <= 0.0:
            fy = 0.0
        elif abs(alpha) >= math.atan(3.0 * fmax / c_alpha):
            fy = -fmax if alpha > 0 else fmax
        else:
            t = math.tan(alpha)
            q = c_alpha / fmax
            fy = -c_alpha * t * (1.0 - q * abs(t) / 3.0 + q * q * t * t / 27.0)
        v_dot += (-s * cb + c * sb) * fy + (c * cb + s * sb) * f
        side += (c * cb + s * sb) * fy + (s * cb - c * sb) * f
        mz += (c * xw[k] + s * yw[k]) * fy + (s * xw[k] - c * yw[k]) * f
    return v_dot / mass, side / mass, mz / inertia


@njit(cache=True)
def _rates(y, out, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, wb, wr, v_min):
    v = y[3]
    beta = y[4]
    r = y[5]
    v_dot, side, r_dot = vbr_rates(v, beta, r, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz)
    course = y[2] + beta
    out[0] = v * math.cos(course)
    out[1] = v * math.sin(course)
    out[2] = r
    out[3] = v_dot
    if v > v_min:
        out[4] = side / v - r + wb
    else:
        out[4] = 0.0
    out[5] = r_dot + wr


@njit(cache=True)
def _wrap(a):
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w == -math.pi:
        w = math.pi
    return w


@njit(cache=True)
def rk4_step(y, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, dt, wb, wr, v_min):
    n = y.shape[0]
    k1 = y.copy()
    k2 = y.copy()
    k3 = y.copy()
    k4 = y.copy()
    tmp = y.copy()
    _rates(y, k1, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, wb, wr, v_min)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k1[i]
    _rates(tmp, k2, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, wb, wr, v_min)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * dt * k2[i]
    _rates(tmp, k3, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, wb, wr, v_min)
    for i in range(n):
        tmp[i] = y[i] + dt * k3[i]
    _rates(tmp, k4, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, wb, wr, v_min)
    out = y.copy()
    for i in range(n):
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    out[2] = _wrap(out[2])
    out[4] = _wrap(out[4])
    if out[3] < 0.0:
        out[3] = 0.0
    return out


@njit(cache=True)
def regulated_steps(y, sin_d, cos_d, xw, yw, mass, inertia, c_alpha, mu, fz, dt, v_ref,
                    gain, fx_limit, w_beta, w_r, v_min):
    """Advance ``len(w_beta)`` RK4 steps under the proportional speed regulator.

    The drive force is recomputed at the start of every step and applied
    along each wheel's direction of travel.
    """
    n_w = xw.shape[0]
    fx = sin_d.copy()
    for j in range(w_beta.shape[0]):
        total = gain * mass * (v_ref - y[3])
        cb = math.cos(y[4])
        sb = math.sin(y[4])
        for k in range(n_w):
            vtx = y[3] * cb - yw[k] * y[5]
            vty = y[3] * sb + xw[k] * y[5]
            v_roll = vtx * cos_d[k] + vty * sin_d[k]
            f = total / n_w
            if v_roll < 0.0:
                f = -f
            if f > fx_limit:
                f = fx_limit
            elif f < -fx_limit:
                f = -fx_limit
            fx[k] = f
        y = rk4_step(y, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, dt,
                     w_beta[j], w_r[j], v_min)
    return y, fx


@njit(cache=True)
def pose_wheel_angles(theta, beta_r, xw, yw, out_sin, out_cos):
    """Wheel angle sine/cosine for a steering pose, folded onto [-pi/2, pi/2]."""
    t = math.tan(theta)
    sb = math.sin(beta_r)
    cb = math.cos(beta_r)
    for k in range(xw.shape[0]):
        d = math.atan2(xw[k] * t + sb, cb - yw[k] * t)
        if d > 0.5 * math.pi:
            d -= math.pi
        elif d < -0.5 * math.pi:
            d += math.pi
        out_sin[k] = math.sin(d)
        out_cos[k] = math.cos(d)


@njit(cache=True)
def frenet_rates(x, theta, beta_r, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, out):
    """Frenet predictive model with the drive forces neglected."""
    n_w = xw.shape[0]
    sin_d = xw.copy()
    cos_d = xw.copy()
    fx = xw.copy()
    for k in range(n_w):
        fx[k] = 0.0
    pose_wheel_angles(theta, beta_r, xw, yw, sin_d, cos_d)
    d = x[1]
    dpsi = x[2]
    beta = x[3]
    r = x[4]
    _, side, r_dot = vbr_rates(v, beta, r, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz)
    beta_dot = side / v - r
    s_dot = v * math.cos(dpsi) / (1.0 - d * kappa)
    out[0] = s_dot
    out[1] = v * math.sin(dpsi)
    out[2] = r + beta_dot - kappa * s_dot
    out[3] = beta_dot
    out[4] = r_dot


@njit(cache=True)
def frenet_jacobian(x, u, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, rel_step, A, B):
    """Central finite differences of ``frenet_rates`` into A (5x5) and B (5x2)."""
    fp = x.copy()
    fm = x.copy()
    z = x.copy()
    for j in range(5):
        h = rel_step * max(1.0, abs(x[j]))
        z[j] = x[j] + h
        frenet_rates(z, u[0], u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fp)
        z[j] = x[j] - h
        frenet_rates(z, u[0], u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fm)
        z[j] = x[j]
        for i in range(5):
            A[i, j] = (fp[i] - fm[i]) / (2.0 * h)
    for j in range(2):
        h = rel_step * max(1.0, abs(u[j]))
        up = u[0]
        bp = u[1]
        if j == 0:
            frenet_rates(x, up + h, bp, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fp)
            frenet_rates(x, up - h, bp, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fm)
        else:
            frenet_rates(x, up, bp + h, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fp)
            frenet_rates(x, up, bp - h, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fm)
        for i in range(5):
            B[i, j] = (fp[i] - fm[i]) / (2.0 * h)


@njit(cache=True)
def steady_pose(x, u0, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, tol, max_iter):
    """Newton iteration on (theta_R, beta_R) zeroing the sideslip and yaw accelerations.

    Returns the pose and the final residual norm.
    """
    u = u0.copy()
    f = x.copy()
    fp = x.copy()
    fm = x.copy()
    J = np.empty((2, 2))
    res = 0.0
    for _ in range(max_iter):
        frenet_rates(x, u[0], u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, f)
        res = max(abs(f[3]), abs(f[4]))
        if res < tol:
            return u, res
        for j in range(2):
            h = 1e-7 * max(1.0, abs(u[j]))
            if j == 0:
                frenet_rates(x, u[0] + h, u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fp)
                frenet_rates(x, u[0] - h, u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fm)
            else:
                frenet_rates(x, u[0], u[1] + h, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fp)
                frenet_rates(x, u[0], u[1] - h, v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, fm)
            J[0, j] = (fp[3] - fm[3]) / (2.0 * h)
            J[1, j] = (fp[4] - fm[4]) / (2.0 * h)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det == 0.0:
            return u, np.inf
        du0 = -(J[1, 1] * f[3] - J[0, 1] * f[4]) / det
        du1 = -(-J[1, 0] * f[3] + J[0, 0] * f[4]) / det
        big = max(abs(du0), abs(du1))
        scale = 1.0 if big <= 0.2 else 0.2 / big
        u[0] += scale * du0
        u[1] += scale * du1
    frenet_rates(x, u[0], u[1], v, kappa, xw, yw, mass, inertia, c_alpha, mu, fz, f)
    return u, max(abs(f[3]), abs(f[4]))


@njit(cache=True)
def _tire_fy(v_roll, v_side, f, c_alpha, mu, fz):
    if abs(v_roll) < 1e-6:
        alpha = 0.0
    else:
        alpha = v_side / abs(v_roll)
    lim = mu * fz
    fmax = math.sqrt(max(lim * lim - f * f, 0.0))
    if fmax <= 0.0:
        return 0.0
    if abs(alpha) >= math.atan(3.0 * fmax / c_alpha):
        return -fmax if alpha > 0 else fmax
    t = math.tan(alpha)
    q = c_alpha / fmax
    return -c_alpha * t * (1.0 - q * abs(t) / 3.0 + q * q * t * t / 27.0)


@njit(cache=True)
def xy_rates(y, out, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz):
    """(v_x, v_y, r) derivative from the body-frame force balance."""
    vx, vy, r = y[0], y[1], y[2]
    f_long = 0.0
    f_lat = 0.0
    mz = 0.0
    for k in range(xw.shape[0]):
        s = sin_d[k]
        c = cos_d[k]
        vtx = vx - yw[k] * r
        vty = vy + xw[k] * r
        fy = _tire_fy(vtx * c + vty * s, -vtx * s + vty * c, fx[k], c_alpha, mu, fz)
        fl = fx[k] * c - fy * s
        ft = fx[k] * s + fy * c
        f_long += fl
        f_lat += ft
        mz += xw[k] * ft - yw[k] * fl
    out[0] = f_long / mass + r * vy
    out[1] = f_lat / mass - r * vx
    out[2] = mz / inertia


@njit(cache=True)
def _vbr_body(y, out, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz):
    v_dot, side, r_dot = vbr_rates(y[0], y[1], y[2], sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz)
    out[0] = v_dot
    out[1] = side / y[0] - y[2]
    out[2] = r_dot


@njit(cache=True)
def body_steps(y, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz, dt, n, form):
    """``n`` RK4 steps of the body model with fixed inputs; form 0 is (v_x, v_y, r), 1 is (v, beta, r)."""
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    y = y.copy()
    for _ in range(n):
        for stage in range(4):
            if stage == 0:
                for i in range(3):
                    tmp[i] = y[i]
                k = k1
            elif stage == 1:
                for i in range(3):
                    tmp[i] = y[i] + 0.5 * dt * k1[i]
                k = k2
            elif stage == 2:
                for i in range(3):
                    tmp[i] = y[i] + 0.5 * dt * k2[i]
                k = k3
            else:
                for i in range(3):
                    tmp[i] = y[i] + dt * k3[i]
                k = k4
            if form == 0:
                xy_rates(tmp, k, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz)
            else:
                _vbr_body(tmp, k, sin_d, cos_d, fx, xw, yw, mass, inertia, c_alpha, mu, fz)
        for i in range(3):
            y[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return y

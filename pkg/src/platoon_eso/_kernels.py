"""Compiled closed-loop right-hand side used by the simulator's inner loop.

The algebra is the same as :func:`platoon_eso.control.surfaces`,
:func:`platoon_eso.dynamics._jerk` and :func:`platoon_eso.observer.eso_deriv`,
flattened into per-vehicle loops.  ``Platoon.rhs_reference`` assembles the
same right-hand side from those functions, and a test keeps both routes in
agreement.

State layout for N followers: p (N+1), v (N+1), a (N+1), s (N), beta1 (N),
beta2 (N).  Coefficients are rows of ``C`` (one column per follower), indexed
by the constants below.  The leader input is a sum of segments, one row of
``seg`` each: start, end, shape (0 constant, 1 raised cosine), magnitude.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DSC, BASELINE = 0, 1

(K1, IH1, IH2, A2_Z1, A2_ETA1, A2_E, U_Q, U_Z2, U_Z1, U_ETA2, L, BH, IK1, IK2,
 J_A, J_VV, J_0, J_VA, J_U, LAM1, LAM2, LAM3, LAM4, R, KP, KV, KA, KD) = range(28)
N_COEF = 28
SEG_CONSTANT, SEG_SMOOTH = 0, 1


@njit(cache=True)
def leader_input(t, seg):
    total = 0.0
    for j in range(seg.shape[0]):
        start, end = seg[j, 0], seg[j, 1]
        if start <= t < end:
            if seg[j, 2] == SEG_CONSTANT:
                total += seg[j, 3]
            else:
                phase = 2.0 * np.pi * (t - start) / (end - start)
                total += seg[j, 3] * 0.5 * (1.0 - np.cos(phase))
    return total


@njit(cache=True)
def _inputs(x, C, n, mode, u, al1, al2):
    n1 = n + 1
    for i in range(n):
        e = x[i] - x[i + 1] - C[R, i]
        v_prev, v = x[n1 + i], x[n1 + i + 1]
        a_prev, a = x[2 * n1 + i], x[2 * n1 + i + 1]
        if mode == DSC:
            s = x[3 * n1 + i]
            b1 = x[3 * n1 + n + i]
            b2 = x[3 * n1 + 2 * n + i]
            a1 = (v_prev + C[K1, i] * e) * C[IH1, i]
            z1 = v * C[IH1, i] - b1
            a2 = C[A2_Z1, i] * z1 + C[A2_ETA1, i] * (b1 - a1) + C[A2_E, i] * e
            z2 = a * C[IH2, i] - b2
            u[i] = (C[U_Q, i] * (s + C[L, i] * a) + C[U_Z2, i] * z2
                    + C[U_Z1, i] * z1 + C[U_ETA2, i] * (b2 - a2))
            al1[i] = a1
            al2[i] = a2
        else:
            u[i] = (C[KP, i] * e + C[KV, i] * (v_prev - v)
                    + C[KA, i] * a_prev + C[KD, i] * a)


@njit(cache=True)
def control(x, C, n, mode):
    u = np.empty(n)
    al1 = np.empty(n)
    al2 = np.empty(n)
    _inputs(x, C, n, mode, u, al1, al2)
    return u


@njit(cache=True)
def rhs(t, x, gamma, seg, tau0, C, n, mode):
    n1 = n + 1
    u = np.empty(n)
    al1 = np.empty(n)
    al2 = np.empty(n)
    _inputs(x, C, n, mode, u, al1, al2)
    dx = np.zeros(x.size)
    for k in range(n1):
        dx[k] = x[n1 + k]
        dx[n1 + k] = x[2 * n1 + k]
    dx[2 * n1] = (leader_input(t, seg) - x[2 * n1]) / tau0
    for i in range(n):
        v = x[n1 + i + 1]
        a = x[2 * n1 + i + 1]
        sigma = C[LAM1, i] * np.exp(-C[LAM2, i] * t) + C[LAM3, i] * np.sin(C[LAM4, i] * t)
        dx[2 * n1 + i + 1] = (C[J_U, i] * u[i] + sigma - C[J_0, i]
                              - (C[J_A, i] + C[J_VA, i] * v) * a - C[J_VV, i] * v * v)
        if mode == DSC:
            l = C[L, i]
            dx[3 * n1 + i] = -l * (x[3 * n1 + i] + l * a + C[BH, i] * gamma[i])
            dx[3 * n1 + n + i] = (al1[i] - x[3 * n1 + n + i]) * C[IK1, i]
            dx[3 * n1 + 2 * n + i] = (al2[i] - x[3 * n1 + 2 * n + i]) * C[IK2, i]
    return dx


@njit(cache=True)
def rk4(t, x, h, gamma, seg, tau0, C, n, mode):
    """One classical RK4 step with gamma held."""
    k1 = rhs(t, x, gamma, seg, tau0, C, n, mode)
    k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1, gamma, seg, tau0, C, n, mode)
    k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2, gamma, seg, tau0, C, n, mode)
    k4 = rhs(t + h, x + h * k3, gamma, seg, tau0, C, n, mode)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _excess(x, gamma, M, C, n, mode):
    return np.abs(gamma - control(x, C, n, mode)) - M


@njit(cache=True)
def _hermite(x0, x1, f0, f1, h, s):
    s2 = s * s
    s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * x0 + (s3 - 2.0 * s2 + s) * h * f0
            + (-2.0 * s3 + 3.0 * s2) * x1 + (s3 - s2) * h * f1)


@njit(cache=True)
def advance(t, x, h, gamma, M, seg, tau0, C, n, mode, time_tol):
    """Integrate from t towards t + h, stopping at the first trigger instant.

    Returns ``(taken, x_new, fired)``.  ``taken == h`` and no follower fired
    when |gamma - u| stays below M over the step.  Otherwise the crossing is
    found by Illinois regula falsi on the cubic Hermite interpolant through
    both step ends (as accurate as the step itself), the state is integrated
    to that instant, and ``fired`` marks every follower whose sampling error
    has reached M there.
    """
    ex0 = _excess(x, gamma, M, C, n, mode)
    if np.max(ex0) >= 0.0:
        return 0.0, x, ex0 >= 0.0
    x_end = rk4(t, x, h, gamma, seg, tau0, C, n, mode)
    ex_end = _excess(x_end, gamma, M, C, n, mode)
    if np.max(ex_end) < 0.0:
        return h, x_end, ex_end >= 0.0
    f0 = rhs(t, x, gamma, seg, tau0, C, n, mode)
    f1 = rhs(t + h, x_end, gamma, seg, tau0, C, n, mode)
    a, fa = 0.0, np.max(ex0)
    b, fb = h, np.max(ex_end)
    ex_b = ex_end
    side = 0
    tol_f = 1e-9 * np.max(M)
    while b - a > time_tol:
        c = b - fb * (b - a) / (fb - fa)
        if not (a < c < b):
            c = 0.5 * (a + b)
        ex_c = _excess(_hermite(x, x_end, f0, f1, h, c / h), gamma, M, C, n, mode)
        fc = np.max(ex_c)
        if fc >= 0.0:
            b, fb, ex_b = c, fc, ex_c
            if side == -1:
                fa *= 0.5
            side = -1
            if fc <= tol_f:
                break
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
    if b >= h:
        return h, x_end, ex_end >= 0.0
    x_new = rk4(t, x, b, gamma, seg, tau0, C, n, mode)
    fired = (ex_b >= 0.0) | (_excess(x_new, gamma, M, C, n, mode) >= 0.0)
    return b, x_new, fired

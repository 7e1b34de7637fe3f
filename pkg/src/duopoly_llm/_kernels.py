"""Compiled inner loops for the learning recursions.

These mirror ``dynamics.stochastic_step`` / ``dynamics.deterministic_step``
operation for operation (same uniform layout, same summation order) so the
compiled and reference paths agree to rounding.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


@numba.njit(cache=True, nogil=True)
def delta_closed_form(theta, rho, r):
    if rho == 1.0:
        return 2.0 * r - 2.0
    p_high = theta * rho + (1.0 - theta) * (1.0 - rho)
    return 2.0 * (r - 1.0) - r * rho * (1.0 - rho) / (p_high * (1.0 - p_high))


@numba.njit(cache=True, nogil=True)
def stochastic_chunk(z, n, n_max, u, rho, r, eps, alpha, eta, z_cap,
                     record_every, rec_n, rec_theta, n_rec):
    """Advance the finite-batch recursion through one block of uniforms.

    ``u`` has shape ``(steps, b, 3)``. Returns ``(z, n, absorbed, n_rec)``.
    """
    b = u.shape[1]
    absorbed = False
    for k in range(u.shape[0]):
        if n >= n_max:
            break
        theta = sigmoid(z)
        p_high = theta * rho + (1.0 - theta) * (1.0 - rho)
        ph = max(p_high, eps)
        pl = max(1.0 - p_high, eps)
        total = 0.0
        for j in range(b):
            mode_high = u[k, j, 0] < theta
            h1 = mode_high if u[k, j, 1] < rho else not mode_high
            h2 = mode_high if u[k, j, 2] < rho else not mode_high
            if h1:
                pi1 = 2.0 * r if h2 else r
                total += pi1 / ph
            else:
                pi1 = 2.0 + r if h2 else 2.0
                total += -pi1 / pl
            if h2:
                pi2 = 2.0 * r if h1 else r
                total += pi2 / ph
            else:
                pi2 = 2.0 + r if h1 else 2.0
                total += -pi2 / pl
        dbar = total / (2 * b)
        gamma = eta / (n + 1.0) ** alpha
        z = z + gamma * dbar
        if z >= z_cap:
            z = z_cap
            absorbed = True
        elif z <= -z_cap:
            z = -z_cap
            absorbed = True
        n += 1
        if n % record_every == 0 or absorbed or n == n_max:
            rec_n[n_rec] = n
            rec_theta[n_rec] = sigmoid(z)
            n_rec += 1
        if absorbed:
            break
    return z, n, absorbed, n_rec


@numba.njit(cache=True, nogil=True)
def deterministic_run(z, n_max, rho, r, alpha, eta, z_cap, record_every, rec_n, rec_theta):
    """Run the large-batch recursion from step 0; returns ``(z, n, absorbed, n_rec)``."""
    rec_n[0] = 0
    rec_theta[0] = sigmoid(z)
    n_rec = 1
    n = 0
    absorbed = False
    while n < n_max:
        theta = sigmoid(z)
        gamma = eta / (n + 1.0) ** alpha
        z = z + gamma * delta_closed_form(theta, rho, r)
        if z >= z_cap:
            z = z_cap
            absorbed = True
        elif z <= -z_cap:
            z = -z_cap
            absorbed = True
        n += 1
        if n % record_every == 0 or absorbed or n == n_max:
            rec_n[n_rec] = n
            rec_theta[n_rec] = sigmoid(z)
            n_rec += 1
        if absorbed:
            break
    return z, n, absorbed, n_rec


@numba.njit(cache=True, nogil=True)
def ode_rk4(theta0, rho, r, dt, n_steps, out):
    """Classical RK4 for d(theta)/dt = theta (1 - theta) delta(theta)."""
    th = theta0
    out[0] = th
    for i in range(n_steps):
        k1 = th * (1.0 - th) * delta_closed_form(th, rho, r)
        x = th + 0.5 * dt * k1
        k2 = x * (1.0 - x) * delta_closed_form(x, rho, r)
        x = th + 0.5 * dt * k2
        k3 = x * (1.0 - x) * delta_closed_form(x, rho, r)
        x = th + dt * k3
        k4 = x * (1.0 - x) * delta_closed_form(x, rho, r)
        th = th + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = th
    return out


def empty_record(size):
    return np.empty(size, dtype=np.int64), np.empty(size, dtype=np.float64)

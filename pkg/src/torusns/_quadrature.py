"""Product integration against the weakly singular smoothing kernel.

The kernel is ``k(tau) = mu_omega(tau) * exp(-tau)``, which is the pure power law
``C * tau^(-a)`` on ``(0, b]`` (``a = b = (1 + omega)/2``,
``C = ((1 + omega)/(2e))^a``) and ``exp(-tau)`` beyond ``b``. Its zeroth and
first moments over any interval have closed forms, so integrals of
``k(tau) * p(tau)`` with ``p`` piecewise linear are evaluated exactly.
"""

from __future__ import annotations

import math

import numpy as np


def kernel_constants(omega: float) -> tuple[float, float, float]:
    """Return ``(C, a, b)`` for the split kernel."""
    if not 0 < omega < 1:
        raise ValueError(f"smoothing exponent requires 0 < omega < 1, got {omega}")
    nu = 1.0 + omega
    a = nu / 2
    return (nu / (2 * math.e)) ** a, a, nu / 2


def _pow_diff(p0: np.ndarray, p1: np.ndarray, c: float) -> np.ndarray:
    """``p1^c - p0^c`` without cancellation when the endpoints are close."""
    out = np.empty_like(p1)
    zero = p0 <= 0
    out[zero] = p1[zero] ** c
    nz = ~zero
    q0 = p0[nz]
    out[nz] = q0**c * np.expm1(c * np.log1p((p1[nz] - q0) / q0))
    return out


def kernel_moments(omega: float, tau0, tau1) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``int k`` and ``int (tau - tau0) k`` over ``[tau0, tau1]`` (vectorized).

    Requires ``0 <= tau0 <= tau1``.
    """
    C, a, b = kernel_constants(omega)
    t0 = np.atleast_1d(np.asarray(tau0, dtype=float))
    t1 = np.atleast_1d(np.asarray(tau1, dtype=float))
    t0, t1 = np.broadcast_arrays(t0, t1)
    if np.any(t0 < 0) or np.any(t1 < t0):
        raise ValueError("kernel moments need 0 <= tau0 <= tau1")
    m0 = np.zeros(t0.shape)
    m1 = np.zeros(t0.shape)

    # power-law piece on [p0, p1] = [tau0, tau1] n [0, b]
    p0 = np.minimum(t0, b)
    p1 = np.minimum(t1, b)
    has = p1 > p0
    if np.any(has):
        q0, q1, s = p0[has], p1[has], t0[has]
        i0 = _pow_diff(q0, q1, 1 - a) / (1 - a)
        i1 = _pow_diff(q0, q1, 2 - a) / (2 - a) - s * i0
        m0[has] += C * i0
        m1[has] += C * i1

    # exponential piece on [e0, e1] = [tau0, tau1] n [b, inf)
    e0 = np.maximum(t0, b)
    e1 = np.maximum(t1, b)
    has = e1 > e0
    if np.any(has):
        q0, q1, s = e0[has], e1[has], t0[has]
        ex0 = np.exp(-q0)
        i0 = -ex0 * np.expm1(-(q1 - q0))
        # int (tau - q0) e^-tau over [q0, q1]
        h = q1 - q0
        j1 = ex0 * (-np.expm1(-h) - h * np.exp(-h))
        m0[has] += i0
        m1[has] += j1 + (q0 - s) * i0
    return m0, m1


def kernel_integral(omega: float, tau: float) -> float:
    """``int_0^tau k``; bounded by the smoothing constant for every tau."""
    m0, _ = kernel_moments(omega, 0.0, tau)
    return float(m0[0])


def hat_weights(omega: float, t_eval: float, s: np.ndarray) -> np.ndarray:
    """Weights ``w_j`` with ``sum_j w_j g(s_j) = int_0^t_eval k(t_eval - s) g_lin(s) ds``.

    ``g_lin`` is the piecewise-linear interpolant of ``g`` on the nodes ``s``
    (increasing, ``s[0] = 0``, ``s[-1] = t_eval``).
    """
    s = np.asarray(s, float)
    n = len(s) - 1
    w = np.zeros(n + 1)
    if n == 0:
        return w
    h = np.diff(s)
    # in tau = t_eval - s the panel [s_j, s_j+1] becomes [t - s_j+1, t - s_j]
    tau0 = np.maximum(t_eval - s[1:], 0.0)
    tau1 = t_eval - s[:-1]
    m0, m1 = kernel_moments(omega, tau0, tau1)
    # on the panel, g_lin = g_{j+1} + (g_j - g_{j+1}) * (tau - tau0) / h
    right = m0 - m1 / h
    left = m1 / h
    w[1:] += right
    w[:-1] += left
    return w

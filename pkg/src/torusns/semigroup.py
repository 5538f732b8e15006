"""Heat semigroup on Fourier coefficients and the smoothing constants built on it."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._quadrature import kernel_constants, kernel_integral, kernel_moments
from .spectral import FourierVectorField, sobolev_norm

GLOBAL_SLACK = 1e-9
_MAX_PANELS = 4_000_000
_EPS = np.finfo(float).eps


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


def mu_hat(nu: float, t: float) -> float:
    """Smoothing majorant: ``(nu / (2 e t))^(nu/2) e^t`` for ``t <= nu/2``, else 1."""
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if t > nu / 2:
        return 1.0
    return (nu / (2 * math.e * t)) ** (nu / 2) * math.exp(t)


def mu_omega(omega: float, t: float) -> float:
    if not 0 < omega < 1:
        raise ValueError(f"need 0 < omega < 1, got {omega}")
    return mu_hat(1.0 + omega, t)


def heat_propagate(v: FourierVectorField, t: float) -> FourierVectorField:
    """``e^(t Delta) v``: damp each coefficient by ``exp(-t |k|^2)``."""
    if t < 0:
        raise ValueError(f"heat flow needs t >= 0, got {t}")
    damp = np.exp(-t * v.lattice.k2.astype(float))
    return FourierVectorField(v.coeffs * damp, v.M, solenoidal=v.solenoidal, validate=False)


def smoothing_defect(v: FourierVectorField, t: float, n: float, nu: float) -> float:
    """Slack in ``||e^(t Delta) v||_n <= mu_hat(nu, t) e^-t ||v||_(n - nu)`` (never negative)."""
    bound = mu_hat(nu, t) * math.exp(-t) * sobolev_norm(v, n - nu)
    return bound - sobolev_norm(heat_propagate(v, t), n)


# ---------------------------------------------------------------- the convolution


def _fine_profile(omega: float, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative ``J(tau) = int_0^tau k(s) e^(2s) ds`` on ``nodes`` inside ``[0, b]``.

    Product integration: ``e^(2s)`` is replaced by its linear interpolant on each
    panel and integrated exactly against the power-law kernel. Returns the values
    and a cumulative bound on the interpolation error.
    """
    h = np.diff(nodes)
    m0, m1 = kernel_moments(omega, nodes[:-1], nodes[1:])
    f = np.exp(2 * nodes)
    slope = np.divide(np.diff(f), h, out=np.zeros_like(h), where=h > 0)
    panel = m0 * f[:-1] + m1 * slope
    # |f - f_lin| <= h^2/8 max|f''| and f'' = 4 e^(2s)
    err = m0 * 0.5 * h**2 * f[1:]
    J = np.concatenate([[0.0], np.cumsum(panel)])
    E = np.concatenate([[0.0], np.cumsum(err)])
    return J, E


def _panel_width(omega: float, x: float, tol: float) -> float:
    C, a, b = kernel_constants(omega)
    total = kernel_integral(omega, x) * math.exp(2 * x)
    return math.sqrt(2 * tol / total) if total > 0 else x


def convolution_integral_with_error(omega: float, t: float, quad_tol: float = 1e-10) -> tuple[float, float]:
    """``int_0^t e^-s mu_omega(t - s) ds`` and a bound on its quadrature error."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0, 0.0
    C, a, b = kernel_constants(omega)
    x = min(t, b)
    # the error of J is damped by e^-t in the final value
    hf = _panel_width(omega, x, quad_tol * math.exp(t))
    n = min(max(1, math.ceil(x / hf)), _MAX_PANELS)
    while True:
        nodes = np.linspace(0.0, x, n + 1)
        m0, m1 = kernel_moments(omega, nodes[:-1], nodes[1:])
        f = np.exp(2 * nodes)
        h = np.diff(nodes)
        panel = m0 * f[:-1] + m1 * np.diff(f) / h
        J = math.fsum(panel)
        # interpolation error of e^(2s) plus a few ulps per panel evaluation
        err = (math.fsum(m0 * 0.5 * h**2 * f[1:]) + 16 * _EPS * J) * math.exp(-t)
        if err <= quad_tol:
            break
        if n >= _MAX_PANELS:
            raise QuadratureError(f"tolerance {quad_tol:g} not reached with {n} panels", achieved=err)
        n = min(2 * n, _MAX_PANELS)
    # beyond b the integrand k(s) e^(2s) is e^s and integrates exactly
    value = J * math.exp(-t)
    if t > b:
        value += -math.expm1(b - t)
    return value, err


def convolution_integral(omega: float, t: float, quad_tol: float = 1e-10) -> float:
    value, _ = convolution_integral_with_error(omega, t, quad_tol)
    return value


def holder_constant(omega: float) -> float:
    """H with ``|I(t + delta) - I(t)| <= H delta^(1 - (1 + omega)/2)`` for ``0 <= delta <= 1``."""
    C, a, b = kernel_constants(omega)
    i_bar = 1.0 + math.exp(2 * b) * kernel_integral(omega, b)
    return C * math.exp(b) / (1 - a) + 1.0 + i_bar


@dataclass(frozen=True)
class NBound:
    """Certified majorant of ``sup_t int_0^t e^-s mu_omega(t - s) ds``."""

    omega: float
    n_upper: float
    argmax_window: tuple[float, float]
    grid_step: float
    interior_max: float
    allowance: float
    tail_sup: float
    quad_error: float
    slack: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["argmax_window"] = list(self.argmax_window)
        return out


def compute_N(
    omega: float,
    grid_step: float = 5e-5,
    quad_tol: float = 1e-10,
    max_allowance: float = 0.005,
) -> NBound:
    """Upper bound for the smoothing constant N_omega.

    For ``t <= b = (1+omega)/2`` the integral is ``I(t) = e^-t J(t)`` with ``J``
    nondecreasing, so on a grid cell ``[t_i, t_i+1]`` it never exceeds
    ``e^(-t_i) J(t_i+1)``. For ``t >= b`` it equals ``1 + e^-t (J(b) - e^b)``,
    which is monotone, so the tail supremum is ``max(I(b), 1)``.
    The grid is halved until the cell allowance drops below ``max_allowance``.
    """
    if not 0 < omega < 1:
        raise ValueError(f"need 0 < omega < 1, got {omega}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    C, a, b = kernel_constants(omega)
    hf_target = _panel_width(omega, b, quad_tol)
    g = float(grid_step)
    for _ in range(40):
        n_cells = math.ceil(b / g - 1e-12)
        m = max(1, math.ceil(g / hf_target))
        nodes = np.minimum(np.arange(n_cells * m + 1) * (g / m), b)
        J, E = _fine_profile(omega, nodes)
        t = nodes[::m]
        Jc, Ec = J[::m], E[::m]
        vals = np.exp(-t) * Jc
        cell_upper = np.exp(-t[:-1]) * (Jc[1:] + Ec[1:])
        interior_max = float(vals.max())
        upper_interior = float(cell_upper.max())
        allowance = upper_interior - interior_max
        if allowance < max_allowance:
            break
        g /= 2
    else:  # pragma: no cover - the allowance shrinks like g^(1 - a)
        raise QuadratureError("grid refinement did not reach the allowance target", allowance)

    tail_sup = max(1.0, math.exp(-b) * (J[-1] + E[-1]))
    rounding = 4 * (len(nodes) + 8) * _EPS * float(J[-1])
    slack = float(max(GLOBAL_SLACK, rounding))
    n_upper = max(upper_interior, tail_sup) + slack

    # every cell whose upper bound reaches the observed maximum may hold the maximizer
    hot = np.nonzero(cell_upper >= interior_max)[0]
    window = (float(t[hot.min()]), float(t[hot.max() + 1]))
    return NBound(
        omega=omega,
        n_upper=float(n_upper),
        argmax_window=window,
        grid_step=g,
        interior_max=interior_max,
        allowance=allowance,
        tail_sup=float(tail_sup),
        quad_error=float(E[-1]),
        slack=slack,
    )

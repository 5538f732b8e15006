"""A-posteriori certification through the control inequality.

Given an approximate solution ``u_ap`` with ``||u_ap(t)||_1 <= D(t)`` and a mild
residual bounded by ``E(t)``, any ``R`` with

    E(t) + K int_0^t mu(t-s) e^-(t-s) (2 D(s) R(s) + R(s)^2) ds <= R(t)

bounds ``||u(t) - u_ap(t)||_1``. Here ``u_ap`` on ``[0, T]`` is the piecewise-linear
interpolant in time of the stored Galerkin states. ``D`` and ``R`` are piecewise
linear as well, so every integral is bounded by exact product integration
against the singular kernel plus an explicit allowance for the curvature of
``D R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._quadrature import hat_weights, kernel_moments
from .nonlinearity import bilinear_P
from .solver import Trajectory
from .spectral import FourierVectorField, lattice, norm_weights, resize

_EPS = np.finfo(float).eps
# sup over [0, 1] of a quadratic is at most 5/4 of its largest value at 0, 1/2, 1
_QUADRATIC_LEBESGUE = 1.25


class ControlInequalityError(RuntimeError):
    """No admissible R on the whole grid; ``t_star`` is the first failing time."""

    def __init__(self, message: str, t_star: float, defect: float):
        super().__init__(message)
        self.t_star = t_star
        self.defect = defect


@dataclass(frozen=True, eq=False)
class EstimatorSeries:
    times: np.ndarray
    D: np.ndarray
    E: np.ndarray
    R: np.ndarray | None = None

    def __post_init__(self) -> None:
        t = np.asarray(self.times, float)
        n = len(t)
        if n == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        for name in ("D", "E", "R"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, float)
            if a.shape != (n,):
                raise ValueError(f"{name} has shape {a.shape}, expected ({n},)")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite and nonnegative")

    def to_dict(self) -> dict:
        out = {"times": list(map(float, self.times)), "D": list(map(float, self.D)), "E": list(map(float, self.E))}
        if self.R is not None:
            out["R"] = list(map(float, self.R))
        return out


# --------------------------------------------------------------------- estimators


def growth_estimator(traj: Trajectory) -> np.ndarray:
    """``D_i = max ||u_ap||_1`` over the samples ``i-1, i, i+1``.

    Along a cell the H^1 norm of a linear interpolant is convex, hence below
    the larger endpoint value; the neighbour maximum makes the piecewise-linear
    interpolant of ``D`` dominate it everywhere.
    """
    h1 = np.asarray(traj.h1_norms, float)
    D = h1.copy()
    D[1:] = np.maximum(D[1:], h1[:-1])
    D[:-1] = np.maximum(D[:-1], h1[1:])
    return D


def _phi(z: np.ndarray, j: int) -> np.ndarray:
    """``phi_j(z) = sum_n z^n / (n + j)!`` (exponential-integrator functions)."""
    z = np.asarray(z, float)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.full_like(zs, 1.0 / math.factorial(j))
    for n in range(25):
        acc += term
        term = term * zs / (n + j + 1)
    out[small] = acc
    zb = z[~small]
    # phi_j(z) = (e^z - sum_{n<j} z^n/n!) / z^j
    partial = sum(zb**n / math.factorial(n) for n in range(j))
    out[~small] = (np.exp(zb) - partial) / zb**j
    return out


@dataclass(frozen=True, eq=False)
class ErrorEstimate:
    times: np.ndarray
    E: np.ndarray
    residual: np.ndarray
    tail: np.ndarray
    tail_norms: np.ndarray  # per cell: max ||(1 - pi_M) P||_(-omega) at the 3 nodes


def _duhamel_residual(traj: Trajectory, omega: float, M_res: int) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the interpolated trajectory with ``P`` kept on ``|k| <= M_res``.

    On a cell ``P(u_ap(s))`` is an exact quadratic in s (``u_ap`` is linear), so
    the Duhamel integral of its low part is evaluated exactly from the values
    at both ends and the midpoint. Also returns, per cell, the largest
    ``||(1 - pi_(M_res)) P||_(-omega)`` over those three points.
    """
    M, d = traj.M, traj.config.d
    M2 = 2 * M  # every mode of P(u_ap, u_ap)
    times = np.asarray(traj.times, float)
    n = len(times)
    lat = lattice(d, M_res)
    lat2 = lattice(d, M2)
    w1 = norm_weights(lat.k2, 1)
    wneg = norm_weights(lat2.k2, -omega)
    high = lat2.k2 > M_res * M_res
    k2 = lat.k2.astype(float)

    def split(c: np.ndarray) -> tuple[np.ndarray, float]:
        f = FourierVectorField(c, M, solenoidal=True, validate=False)
        P2 = bilinear_P(f, f, M2).coeffs
        a2 = (P2.real**2 + P2.imag**2).sum(axis=0)
        return resize(P2, M2, M_res), math.sqrt(float(np.sum(wneg[high] * a2[high])))

    states = [resize(s.coeffs, s.M, M) for s in traj.states]
    residual = np.zeros(n)
    tail_norms = np.zeros(max(n - 1, 0))
    W = resize(states[0], M, M_res)
    low0, tn0 = split(states[0])
    scale = 0.0
    for j in range(n - 1):
        h = times[j + 1] - times[j]
        lowm, tnm = split(0.5 * (states[j] + states[j + 1]))
        low1, tn1 = split(states[j + 1])
        z = -k2 * h
        a1 = -3 * low0 + 4 * lowm - low1
        a2 = 2 * low0 - 4 * lowm + 2 * low1
        W = np.exp(z) * W + h * (_phi(z, 1) * low0 + _phi(z, 2) * a1 + 2 * _phi(z, 3) * a2)
        r = resize(states[j + 1], M, M_res) - W
        residual[j + 1] = math.sqrt(float(np.sum(w1 * (r.real**2 + r.imag**2).sum(axis=0))))
        scale = max(scale, math.sqrt(float(np.sum(w1 * (W.real**2 + W.imag**2).sum(axis=0)))))
        tail_norms[j] = max(tn0, tnm, tn1)
        low0, tn0 = low1, tn1
    # rounding in the recursion, far below any meaningful residual
    residual += 1e3 * _EPS * scale * np.sqrt(np.arange(n))
    return residual, tail_norms


def mild_residual(traj: Trajectory, omega: float = 0.7) -> np.ndarray:
    """``||u_ap(t) - e^(t Delta) u0 - int e^((t-s) Delta) P(u_ap) ds||_1`` with all modes of P."""
    residual, _ = _duhamel_residual(traj, omega, 2 * traj.M)
    return residual


def error_estimator(traj: Trajectory, omega: float) -> ErrorEstimate:
    """Bound the mild residual of the interpolated trajectory in H^1.

    ``P(u_ap) = pi_M P + (1 - pi_M) P``: the low part enters the exact residual
    recursion, the high part is bounded with the smoothing estimate
    ``||e^(t Delta) v||_1 <= mu_omega(t) e^-t ||v||_(-omega)`` integrated in s.
    """
    times = np.asarray(traj.times, float)
    n = len(times)
    residual, tail_norms = _duhamel_residual(traj, omega, traj.M)
    tail = np.zeros(n)
    for i in range(1, n):
        m0, _ = kernel_moments(omega, times[i] - times[1 : i + 1], times[i] - times[:i])
        tail[i] = _QUADRATIC_LEBESGUE * float(np.dot(m0, tail_norms[:i]))
    tail *= 1 + 1e-12
    return ErrorEstimate(times=times, E=residual + tail, residual=residual, tail=tail, tail_norms=tail_norms)


# ------------------------------------------------------------ control inequality


def _check_B(B: float) -> None:
    if B != 1:
        raise ValueError("only the decay rate B = 1 of the H^1 heat semigroup is supported")


def _history(omega: float, times: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Hat weights for ``t_i`` and the per-cell kernel masses."""
    w = hat_weights(omega, times[i], times[: i + 1])
    m0, _ = kernel_moments(omega, times[i] - times[1 : i + 1], times[i] - times[:i])
    return w, m0


def _curvature_allowance(D: np.ndarray, R: np.ndarray) -> np.ndarray:
    # on a cell, D R exceeds its chord by at most max(0, -dD dR) / 4; R^2 never does
    return np.maximum(0.0, -2.0 * np.diff(D) * np.diff(R)) / 4.0


def control_lhs(
    times: np.ndarray,
    D: np.ndarray,
    E: np.ndarray,
    R: np.ndarray,
    K: float,
    omega: float,
    *,
    refine: int = 1,
) -> np.ndarray:
    """Upper bound for ``E + K int k (2 D R + R^2)`` at every grid time.

    With ``refine > 1`` each cell is split into ``refine`` panels (D and R
    interpolated linearly) before integrating, giving an independent re-check.
    """
    times = np.asarray(times, float)
    D, E, R = (np.asarray(a, float) for a in (D, E, R))
    if refine > 1:
        frac = np.arange(refine) / refine
        fine = np.append((times[:-1, None] + frac * np.diff(times)[:, None]).ravel(), times[-1])
        Df, Rf = np.interp(fine, times, D), np.interp(fine, times, R)
        lhs_fine = control_lhs(fine, Df, np.zeros_like(fine), Rf, K, omega)
        return E + lhs_fine[::refine]
    g = 2 * D * R + R**2
    allow = _curvature_allowance(D, R)
    out = np.array(E, dtype=float)
    for i in range(1, len(times)):
        w, m0 = _history(omega, times, i)
        integral = float(np.dot(w, g[: i + 1])) + float(np.dot(m0, allow[:i]))
        out[i] += K * integral
    # account for rounding in the dot products
    return out * (1 + 64 * _EPS * len(times))


@dataclass(frozen=True, eq=False)
class ControlSolution:
    series: EstimatorSeries
    R_equality: np.ndarray
    margins: np.ndarray
    margins_refined: np.ndarray
    K: float
    omega: float
    safety: float

    @property
    def R(self) -> np.ndarray:
        return self.series.R

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "omega": self.omega,
            "safety": self.safety,
            "min_margin": float(self.margins.min()),
            "min_margin_refined": float(self.margins_refined.min()),
            **self.series.to_dict(),
            "margins": self.margins.tolist(),
        }


def solve_control_inequality(
    times,
    D,
    E,
    K: float,
    omega: float,
    safety: float = 1.1,
    *,
    B: float = 1.0,
    recheck_refine: int = 2,
) -> ControlSolution:
    """March the equality version in time, inflate by ``safety`` and verify.

    The equality at ``t_i`` is a quadratic in ``R_i`` (the newest hat weight
    multiplies ``2 D_i R_i + R_i^2``); the smaller root is taken. A negative
    discriminant means no solution exists past that time.
    """
    _check_B(B)
    if not safety > 1:
        raise ValueError("safety factor must exceed 1")
    if K <= 0:
        raise ValueError("K must be positive")
    series = EstimatorSeries(np.asarray(times, float), np.asarray(D, float), np.asarray(E, float))
    t, D, E = series.times, series.D, series.E
    n = len(t)
    R = np.zeros(n)
    R[0] = E[0]
    g = np.zeros(n)
    g[0] = 2 * D[0] * R[0] + R[0] ** 2
    for i in range(1, n):
        w, _ = _history(omega, t, i)
        c = E[i] + K * float(np.dot(w[:i], g[:i]))
        a = K * w[i]
        b = 1.0 - 2.0 * a * D[i]
        disc = b * b - 4.0 * a * c
        if b <= 0 or disc < 0:
            raise ControlInequalityError(
                f"control inequality has no solution at t={t[i]:.6g}",
                t_star=float(t[i]),
                defect=float(-disc if b > 0 else -b),
            )
        R[i] = 2.0 * c / (b + math.sqrt(disc))
        g[i] = 2 * D[i] * R[i] + R[i] ** 2
    Rs = safety * R
    lhs = control_lhs(t, D, E, Rs, K, omega)
    margins = Rs - lhs
    bad = np.nonzero(margins < 0)[0]
    if bad.size:
        i = int(bad[0])
        raise ControlInequalityError(
            f"inflated R fails the inequality at t={t[i]:.6g} (defect {-margins[i]:.3e})",
            t_star=float(t[i]),
            defect=float(-margins[i]),
        )
    refined = Rs - control_lhs(t, D, E, Rs, K, omega, refine=recheck_refine)
    bad = np.nonzero(refined < 0)[0]
    if bad.size:
        i = int(bad[0])
        raise ControlInequalityError(
            f"refined re-check fails at t={t[i]:.6g} (defect {-refined[i]:.3e})",
            t_star=float(t[i]),
            defect=float(-refined[i]),
        )
    return ControlSolution(
        series=EstimatorSeries(t, D, E, Rs),
        R_equality=R,
        margins=margins,
        margins_refined=refined,
        K=float(K),
        omega=float(omega),
        safety=float(safety),
    )


# ------------------------------------------------------------- reference check


@dataclass(frozen=True, eq=False)
class ReferenceReport:
    times: np.ndarray
    errors: np.ndarray
    R: np.ndarray
    margins: np.ndarray
    violations: list[tuple[float, float, float]]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_checked": int(len(self.times)),
            "min_margin": float(self.margins.min()) if len(self.margins) else None,
            "violations": [{"t": t, "error": e, "R": r} for t, e, r in self.violations],
        }


def verify_against_reference(u_ap: Trajectory, u_ref: Trajectory, R) -> ReferenceReport:
    """Check ``||u_ref(t) - u_ap(t)||_1 <= R(t)`` at every time stored in both."""
    R = np.asarray(R, float)
    if R.shape != (len(u_ap.times),):
        raise ValueError("R must be sampled on the approximate trajectory's times")
    M = max(u_ap.M, u_ref.M)
    w1 = norm_weights(lattice(u_ap.config.d, M).k2, 1)
    ts, errs, rs = [], [], []
    for j, t in enumerate(u_ref.times):
        i = int(np.argmin(np.abs(u_ap.times - t)))
        if abs(u_ap.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            continue
        diff = resize(u_ref.states[j].coeffs, u_ref.M, M) - resize(u_ap.states[i].coeffs, u_ap.M, M)
        err = math.sqrt(float(np.sum(w1 * (diff.real**2 + diff.imag**2).sum(axis=0))))
        ts.append(float(t))
        errs.append(err)
        rs.append(float(R[i]))
    ts_a, errs_a, rs_a = np.array(ts), np.array(errs), np.array(rs)
    margins = rs_a - errs_a
    violations = [(t, e, r) for t, e, r, m in zip(ts, errs, rs, margins) if m < 0]
    return ReferenceReport(ts_a, errs_a, rs_a, margins, violations)

"""Galerkin mild-solution integrator and the small-data global existence certificate.

The truncated system is ``du/dt = Delta u + pi_M P(u, u)`` on ``|k| <= M``. One
step of length h uses the Duhamel form with the linear part exact:

    u(t+h) = e^(h Delta) u(t) + int_0^h e^((h-s) Delta) P(u(t+s)) ds
           ~ e^(h Delta) [u(t) + h/2 P(u(t))] + h/2 P(u(t+h))

The implicit trapezoidal term is resolved by Picard iteration, measured in
the H^1 norm. This exponential trapezoidal scheme is second order.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import __version__
from .nonlinearity import bilinear_P
from .spectral import (
    FieldFormatError,
    FourierVectorField,
    SpaceParams,
    _check_solenoidal,
    lattice,
    norm_weights,
    resize,
    sobolev_norm,
)

TRAJECTORY_FORMAT = "torusns.trajectory"
TRAJECTORY_VERSION = 1


class PicardError(RuntimeError):
    """Picard iteration did not reach the tolerance within the iteration cap."""

    def __init__(self, message: str, t: float, ratio: float, residual: float):
        super().__init__(message)
        self.t = t
        self.ratio = ratio
        self.residual = residual


@dataclass(frozen=True)
class SolveConfig:
    d: int = 3
    omega: float = 0.7
    M: int = 8
    T: float = 5.0
    dt: float = 0.01
    picard_tol: float = 1e-12
    picard_max_iters: int = 50
    save_every: int = 1

    def __post_init__(self) -> None:
        SpaceParams(self.d, self.omega).require_solver()
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("T and dt must be positive")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * self.T / self.dt:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if not self.picard_tol > 0 or self.picard_max_iters < 1:
            raise ValueError("picard_tol must be positive and picard_max_iters >= 1")
        if int(self.save_every) != self.save_every or self.save_every < 1:
            raise ValueError("save_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SolveConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**dict(doc))


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SolveConfig
    times: np.ndarray
    states: tuple[FourierVectorField, ...]
    h1_norms: np.ndarray
    picard_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    contraction_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nonlinear: bool = True

    def __len__(self) -> int:
        return len(self.times)

    @property
    def u0(self) -> FourierVectorField:
        return self.states[0]

    @property
    def M(self) -> int:
        return self.config.M

    def l2_norms(self) -> np.ndarray:
        return np.array([sobolev_norm(s, 0) for s in self.states])

    def energy_defects(self) -> np.ndarray:
        """Trapezoidal residual of ``d/dt ||u||^2 = -2 ||u||_1^2`` between samples."""
        e = self.l2_norms() ** 2
        g = self.h1_norms**2
        h = np.diff(self.times)
        return np.diff(e) / h + (g[1:] + g[:-1])

    def state_at(self, t: float, atol: float = 1e-9) -> FourierVectorField:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise KeyError(f"no stored state at t={t}")
        return self.states[i]


# ------------------------------------------------------------------- integration


def _as_field(c: np.ndarray, M: int) -> FourierVectorField:
    return FourierVectorField(c, M, solenoidal=True, validate=False)


def _h1(c: np.ndarray, w1: np.ndarray) -> float:
    return math.sqrt(float(np.sum(w1 * (c.real**2 + c.imag**2).sum(axis=0))))


def picard_solve(
    u0: FourierVectorField,
    cfg: SolveConfig,
    *,
    nonlinear: bool = True,
    progress: Callable[[int, int], None] | None = None,
) -> Trajectory:
    """Integrate the truncated system from ``u0`` (projected onto ``|k| <= M``)."""
    if u0.d != cfg.d:
        raise ValueError(f"u0 has d={u0.d}, config has d={cfg.d}")
    _check_solenoidal(u0.coeffs, u0.lattice)
    M, h = cfg.M, cfg.dt
    lat = lattice(cfg.d, M)
    w1 = norm_weights(lat.k2, 1)
    damp = np.exp(-h * lat.k2.astype(float))
    damp[~lat.mask] = 0.0

    def P_self(c: np.ndarray) -> np.ndarray:
        if not nonlinear:
            return np.zeros_like(c)
        f = _as_field(c, M)
        return bilinear_P(f, f, M).coeffs

    u = resize(u0.coeffs, u0.M, M)
    times = [0.0]
    states = [_as_field(u, M)]
    iters: list[int] = []
    ratios: list[float] = []
    Pn = P_self(u)
    n_steps = cfg.n_steps
    for n in range(n_steps):
        t = n * h
        base = damp * (u + 0.5 * h * Pn)
        cur = base + 0.5 * h * Pn
        prev_diff = math.inf
        ratio = 0.0
        for m in range(1, cfg.picard_max_iters + 1):
            nxt = base + 0.5 * h * P_self(cur)
            diff = _h1(nxt - cur, w1)
            ratio = diff / prev_diff if math.isfinite(prev_diff) and prev_diff > 0 else 0.0
            cur = nxt
            if diff < cfg.picard_tol:
                break
            prev_diff = diff
        else:
            raise PicardError(
                f"Picard iteration stalled at t={t + h:.6g}: residual {diff:.3e} after "
                f"{cfg.picard_max_iters} iterations (last contraction ratio {ratio:.3g})",
                t=t + h,
                ratio=ratio,
                residual=diff,
            )
        iters.append(m)
        ratios.append(ratio)
        u = cur
        Pn = P_self(u)
        if (n + 1) % cfg.save_every == 0 or n + 1 == n_steps:
            times.append((n + 1) * h)
            states.append(_as_field(u, M))
        if progress is not None:
            progress(n + 1, n_steps)
    h1 = np.array([sobolev_norm(s, 1) for s in states])
    return Trajectory(
        config=cfg,
        times=np.array(times),
        states=tuple(states),
        h1_norms=h1,
        picard_iterations=np.array(iters, dtype=int),
        contraction_ratios=np.array(ratios),
        nonlinear=nonlinear,
    )


# ---------------------------------------------------------- global existence


def chi(z: float) -> float:
    """``(1 - sqrt(1 - z)) / (z/2)`` on ``[0, 1]``, equal to 1 at z = 0."""
    if not 0 <= z <= 1:
        raise ValueError(f"chi is defined on [0, 1], got {z}")
    if z == 0:
        return 1.0
    # rationalized form, no cancellation for small z
    return 2.0 / (1.0 + math.sqrt(1.0 - z))


@dataclass(frozen=True)
class GlobalCertificate:
    h1_norm: float
    K: float
    N: float
    threshold: float
    z: float
    passes: bool

    def envelope(self, t) -> np.ndarray:
        """``chi(4 K N ||u0||_1) e^-t ||u0||_1`` (only meaningful when ``passes``)."""
        if not self.passes:
            raise ValueError("the datum exceeds the global existence threshold")
        return chi(self.z) * np.exp(-np.asarray(t, float)) * self.h1_norm

    def to_dict(self) -> dict:
        return asdict(self)


def global_certificate(u0: FourierVectorField, K: float, N: float) -> GlobalCertificate:
    if K <= 0 or N <= 0:
        raise ValueError("K and N must be positive")
    norm = sobolev_norm(u0, 1)
    z = 4 * K * N * norm
    return GlobalCertificate(norm, K, N, 1.0 / (4 * K * N), z, z <= 1)


@dataclass(frozen=True)
class EnvelopeReport:
    times: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    margins: np.ndarray
    min_margin: float
    first_violation: float | None

    def to_dict(self) -> dict:
        return {
            "min_margin": self.min_margin,
            "first_violation": self.first_violation,
            "times": self.times.tolist(),
            "margins": self.margins.tolist(),
        }


def envelope_report(traj: Trajectory, envelope: np.ndarray) -> EnvelopeReport:
    margins = envelope - traj.h1_norms
    bad = np.nonzero(margins < 0)[0]
    return EnvelopeReport(
        times=traj.times,
        norms=traj.h1_norms,
        envelope=envelope,
        margins=margins,
        min_margin=float(margins.min()),
        first_violation=float(traj.times[bad[0]]) if bad.size else None,
    )


def envelope_check(traj: Trajectory, u0: FourierVectorField, K: float, N: float) -> EnvelopeReport:
    cert = global_certificate(u0, K, N)
    return envelope_report(traj, cert.envelope(traj.times))


# ------------------------------------------------------------------------ JSON IO


def _half_modes(d: int, M: int) -> np.ndarray:
    """Ball modes whose first nonzero component is positive (one per conjugate pair)."""
    lat = lattice(d, M)
    k = lat.k.reshape(d, -1).T[lat.mask.ravel()]
    first = np.array([row[np.nonzero(row)[0][0]] for row in k])
    return k[first > 0]


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        buf = base64.b64decode(s.encode("ascii"), validate=True)
        a = np.frombuffer(buf, dtype="<f8")
    except (ValueError, TypeError, AttributeError) as exc:
        raise FieldFormatError(f"undecodable state payload: {exc}") from None
    if a.size != math.prod(shape):
        raise FieldFormatError(f"state payload has {a.size} numbers, expected {math.prod(shape)}")
    return a.reshape(shape).astype(float)


def trajectory_to_dict(traj: Trajectory) -> dict:
    d, M = traj.config.d, traj.config.M
    modes = _half_modes(d, M)
    idx = (slice(None), slice(None)) + tuple((modes + M).T)
    stack = np.stack([s.coeffs for s in traj.states])[idx]  # (n_states, d, n_half)
    return {
        "format": TRAJECTORY_FORMAT,
        "version": TRAJECTORY_VERSION,
        "generator": f"torusns {__version__}",
        "config": traj.config.to_dict(),
        "nonlinear": traj.nonlinear,
        "times": traj.times.tolist(),
        "h1_norms": traj.h1_norms.tolist(),
        "picard_iterations": traj.picard_iterations.tolist(),
        "contraction_ratios": traj.contraction_ratios.tolist(),
        "modes": modes.tolist(),
        "states": {
            "encoding": "base64-float64-le",
            "shape": list(stack.shape),
            "re": _encode(stack.real),
            "im": _encode(stack.imag),
        },
    }


def trajectory_from_dict(doc: Mapping) -> Trajectory:
    if doc.get("format") != TRAJECTORY_FORMAT:
        raise FieldFormatError(f"unexpected format tag {doc.get('format')!r}")
    if doc.get("version") != TRAJECTORY_VERSION:
        raise FieldFormatError(f"unsupported trajectory version {doc.get('version')!r}")
    try:
        cfg = SolveConfig.from_dict(doc["config"])
        times = np.asarray(doc["times"], float)
        h1 = np.asarray(doc["h1_norms"], float)
        st = doc["states"]
        shape = tuple(int(x) for x in st["shape"])
        modes = np.asarray(doc["modes"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"malformed trajectory document: {exc}") from None
    d, M = cfg.d, cfg.M
    expected = _half_modes(d, M)
    if modes.shape != expected.shape or np.any(modes != expected):
        raise FieldFormatError("mode table does not match the configured (d, M)")
    if st.get("encoding") != "base64-float64-le":
        raise FieldFormatError(f"unknown state encoding {st.get('encoding')!r}")
    if shape != (len(times), d, len(modes)):
        raise FieldFormatError(f"state shape {shape} inconsistent with {len(times)} times")
    if len(times) == 0 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise FieldFormatError("times must start at 0 and increase strictly")
    vals = _decode(st["re"], shape) + 1j * _decode(st["im"], shape)
    lat = lattice(d, M)
    pos = tuple((modes + M).T)
    neg = tuple((-modes + M).T)
    states = []
    for v in vals:
        c = np.zeros((d,) + lat.shape, complex)
        c[(slice(None),) + pos] = v
        c[(slice(None),) + neg] = np.conj(v)
        _check_solenoidal(c, lat)
        states.append(FourierVectorField(c, M, solenoidal=True, validate=False))
    norms = np.array([sobolev_norm(s, 1) for s in states])
    if len(h1) != len(states) or not np.allclose(norms, h1, rtol=1e-12, atol=0):
        raise FieldFormatError("stored h1_norms do not match the states")
    return Trajectory(
        config=cfg,
        times=times,
        states=tuple(states),
        h1_norms=norms,
        picard_iterations=np.asarray(doc.get("picard_iterations", []), dtype=int),
        contraction_ratios=np.asarray(doc.get("contraction_ratios", []), float),
        nonlinear=bool(doc.get("nonlinear", True)),
    )


def save_trajectory(traj: Trajectory, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trajectory_to_dict(traj)))


def load_trajectory(path: str | Path) -> Trajectory:
    return trajectory_from_dict(json.loads(Path(path).read_text()))

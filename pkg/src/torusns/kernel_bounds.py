"""Certified enclosures of the lattice kernel and of the bilinear constant K_omega.

The kernel is ``K(k) = sum_{h != 0, k} |h|^(-2 omega) |k - h|^(-2)``. It is split
into an exact finite sum over the ball ``|h| < lam + 2 sqrt(d)`` and a closed-form
majorant of the remainder. Terms are summed with ``math.fsum`` (exactly rounded),
so the only rounding left is in the individual terms; that is bounded by a
relative slack of a few ulps and folded into the bracket.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .spectral import SpaceParams, fundamental_domain

_U = 2.0**-53
# per-term relative error: pow (exp/log) + product + division, generously rounded up
_TERM_ULPS = 8
_MAX_RADIUS = 2**26  # keeps |h|^2 exact in float64


def _workers(workers: int | None) -> int:
    if workers is None:
        return max(1, min(8, os.cpu_count() or 1))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return int(workers)


def _up(x: float, n: int = 1) -> float:
    for _ in range(n):
        x = math.nextafter(x, math.inf)
    return x


def _down(x: float, n: int = 1) -> float:
    for _ in range(n):
        x = math.nextafter(x, -math.inf)
    return x


# ------------------------------------------------------------------ truncated sum


def _slab_sum(k: np.ndarray, omega: float, h1: int, R2: float, inner: np.ndarray) -> float:
    """Exact-rounded sum of the kernel terms with first coordinate ``h1``."""
    d = k.size
    if d == 1:  # pragma: no cover - d >= 2 enforced upstream
        raise ValueError("d must be >= 2")
    rest = np.meshgrid(*([inner] * (d - 1)), indexing="ij")
    n2 = h1 * h1 + sum(r * r for r in rest)
    keep = n2 <= R2
    n2 = n2[keep]
    kh = (k[0] - h1) ** 2 + sum((k[i + 1] - rest[i][keep]) ** 2 for i in range(d - 1))
    ok = (n2 > 0) & (kh > 0)
    terms = 1.0 / (np.power(n2[ok].astype(np.float64), omega) * kh[ok].astype(np.float64))
    return math.fsum(terms)


def truncated_kernel_sum(
    k: Sequence[int],
    omega: float,
    lam: float,
    *,
    workers: int | None = None,
) -> float:
    """Finite part of the kernel: all ``h`` with ``|h| < lam + 2 sqrt(d)``, ``h != 0, k``.

    Every lattice point strictly inside the radius is included (the float test
    is widened by a relative 1e-12, which can only add positive terms).
    """
    kv = np.asarray(k, dtype=np.int64)
    d = kv.size
    R = lam + 2 * math.sqrt(d)
    if R > _MAX_RADIUS:
        raise OverflowError(f"cutoff radius {R:g} exceeds the exact-integer guard {_MAX_RADIUS}")
    R2 = R * R * (1 + 1e-12)
    Ri = int(math.floor(R))
    inner = np.arange(-Ri, Ri + 1, dtype=np.int64)
    slabs = range(-Ri, Ri + 1)
    with ThreadPoolExecutor(_workers(workers)) as pool:
        parts = list(pool.map(lambda h1: _slab_sum(kv, omega, h1, R2, inner), slabs))
    return math.fsum(parts)


# -------------------------------------------------------------------- tail bounds


def tail_S_bound(nu: float, lam: float, d: int) -> float:
    """Majorant of ``sum_{|h| >= lam + 2 sqrt(d)} |h|^(-nu)`` (nonzero lattice points).

    ``(2 pi^(d/2) / Gamma(d/2)) sum_i C(d-1, i) d^((d-1-i)/2) / ((nu-1-i) lam^(nu-1-i))``
    """
    if nu <= d:
        raise ValueError(f"the lattice tail diverges unless nu > d (nu={nu}, d={d})")
    if lam <= 0:
        raise ValueError("lam must be positive")
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    terms = [
        math.comb(d - 1, i) * d ** ((d - 1 - i) / 2) / ((nu - 1 - i) * lam ** (nu - 1 - i))
        for i in range(d)
    ]
    return area * math.fsum(terms)


def kernel_tail_bound(k: Sequence[int], omega: float, lam: float) -> float:
    """Majorant of the kernel terms dropped by :func:`truncated_kernel_sum`."""
    d = len(k)
    norm_k = math.sqrt(sum(int(x) ** 2 for x in k))
    if lam <= norm_k:
        raise ValueError(f"cutoff lam={lam} must exceed |k|={norm_k:.6g}")
    return tail_S_bound(2 * omega + 2, lam - norm_k, d)


# ----------------------------------------------------------------------- brackets


@dataclass(frozen=True)
class KernelBracket:
    """Two-sided enclosure ``lower <= K(k) <= upper``."""

    k: tuple[int, ...]
    omega: float
    lam: float
    truncated_sum: float
    tail_bound: float
    rounding_slack: float

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def lower(self) -> float:
        return _down(self.truncated_sum - self.rounding_slack)

    @property
    def upper(self) -> float:
        # the tail formula itself is evaluated in floats; inflate it a little
        return _up(self.truncated_sum + self.tail_bound * (1 + 1e-12) + self.rounding_slack, 2)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        out = asdict(self)
        out["k"] = list(self.k)
        out["d"] = self.d
        out["lower"] = self.lower
        out["upper"] = self.upper
        return out


def kernel_bracket(
    k: Sequence[int],
    omega: float,
    lam: float = 150.0,
    *,
    workers: int | None = None,
) -> KernelBracket:
    kt = tuple(int(x) for x in k)
    if not any(kt):
        raise ValueError("the kernel is defined for nonzero k only")
    SpaceParams(len(kt), omega).require_kernel()
    tail = kernel_tail_bound(kt, omega, lam)
    s = truncated_kernel_sum(kt, omega, lam, workers=workers)
    return KernelBracket(
        k=kt,
        omega=float(omega),
        lam=float(lam),
        truncated_sum=s,
        tail_bound=tail,
        rounding_slack=_TERM_ULPS * _U * s,
    )


@dataclass(frozen=True)
class SupCertificate:
    """Enclosure of ``sup_k K(k)`` from the points of the fundamental domain I(a)."""

    d: int
    omega: float
    a: int
    lam: float
    per_point: tuple[KernelBracket, ...]
    boundary_point: KernelBracket
    boundary_term: float
    sup_lower: float
    sup_upper: float

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "omega": self.omega,
            "a": self.a,
            "lam": self.lam,
            "per_point": [b.to_dict() for b in self.per_point],
            "boundary_point": self.boundary_point.to_dict(),
            "boundary_term": self.boundary_term,
            "sup_lower": self.sup_lower,
            "sup_upper": self.sup_upper,
        }


def boundary_term(upper_at_edge: float, a: int, omega: float) -> float:
    """``K(0,...,0,a+1) + (a+1)^-2 + (a+1)^(-2 omega)`` rounded upward."""
    s = upper_at_edge + (a + 1) ** -2.0 + (a + 1) ** (-2.0 * omega)
    return _up(s, 4)


def sup_certificate(
    d: int = 3,
    omega: float = 0.7,
    a: int = 1,
    lam: float = 150.0,
    *,
    workers: int | None = None,
) -> SupCertificate:
    """Bracket the kernel on I(a) and close the sup with the boundary majorant."""
    if int(a) != a or a < 1:
        raise ValueError(f"a must be a positive integer, got {a!r}")
    a = int(a)
    SpaceParams(d, omega).require_kernel()
    if lam <= a + 1:
        raise ValueError(f"lam={lam} must exceed a + 1 = {a + 1}")
    points = fundamental_domain(d, a)
    per_point = tuple(kernel_bracket(p, omega, lam, workers=workers) for p in points)
    edge = kernel_bracket((0,) * (d - 1) + (a + 1,), omega, lam, workers=workers)
    R = boundary_term(edge.upper, a, omega)
    return SupCertificate(
        d=d,
        omega=float(omega),
        a=a,
        lam=float(lam),
        per_point=per_point,
        boundary_point=edge,
        boundary_term=R,
        sup_lower=max(b.lower for b in per_point),
        sup_upper=max(max(b.upper for b in per_point), R),
    )


@dataclass(frozen=True)
class KBracket:
    """Enclosure of ``(2 pi)^(-d/2) sqrt(sup K)`` with outward rounding."""

    lower: float
    upper: float
    sup: SupCertificate = field(repr=False)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "sup": self.sup.to_dict()}


def k_from_sup(d: int, sup_lower: float, sup_upper: float) -> tuple[float, float]:
    scale = (2 * math.pi) ** (-d / 2)
    return _down(scale * math.sqrt(sup_lower), 4), _up(scale * math.sqrt(sup_upper), 4)


def k_constant(
    d: int = 3,
    omega: float = 0.7,
    a: int = 1,
    lam: float = 150.0,
    *,
    workers: int | None = None,
) -> KBracket:
    cert = sup_certificate(d, omega, a, lam, workers=workers)
    lo, hi = k_from_sup(d, cert.sup_lower, cert.sup_upper)
    return KBracket(lo, hi, cert)

"""Zero-mean vector fields on the torus T^d stored as lattice Fourier coefficients.

Conventions
-----------
The Fourier basis is ``e_k(x) = exp(i k.x) / (2 pi)^(d/2)``, so the L2 norm of a
field equals the Euclidean norm of its coefficient family (Parseval, no extra
factors). Fields are truncated by the *Euclidean* ball ``0 < |k| <= M``; the
coefficients live in a dense array of shape ``(d, 2M+1, ..., 2M+1)`` whose
entry ``[:, k_1 + M, ..., k_d + M]`` is the vector ``v_k``. Entries outside the
ball (and the ``k = 0`` entry) are always zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

FIELD_FORMAT = "torusns.fourier-vector-field"
FIELD_VERSION = 1

# relative tolerance used when validating reality / solenoidality of loaded data
_VALIDATION_RTOL = 1e-12


class FieldFormatError(ValueError):
    """A serialized field violates a structural invariant."""


@dataclass(frozen=True)
class SpaceParams:
    """Dimension ``d`` and Sobolev exponent ``omega`` of the functional setting."""

    d: int = 3
    omega: float = 0.7

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d!r}")

    @property
    def kernel_admissible(self) -> bool:
        # the lattice kernel converges iff omega > d/2 - 1
        return self.omega > self.d / 2 - 1

    @property
    def solver_admissible(self) -> bool:
        return self.d / 2 - 1 < self.omega < 1

    def require_kernel(self) -> None:
        if not self.kernel_admissible:
            raise ValueError(
                f"omega={self.omega} must exceed d/2 - 1 = {self.d / 2 - 1} for d={self.d}"
            )

    def require_solver(self) -> None:
        if not self.solver_admissible:
            raise ValueError(
                f"need d/2 - 1 < omega < 1, got d={self.d}, omega={self.omega}"
            )


@dataclass(frozen=True, eq=False)
class Lattice:
    """Integer wavevectors of the cube ``[-M, M]^d`` and the ball mask."""

    d: int
    M: int
    k: np.ndarray  # (d, 2M+1, ..., 2M+1) int64
    k2: np.ndarray  # |k|^2, int64
    mask: np.ndarray  # 0 < |k| <= M

    @property
    def shape(self) -> tuple[int, ...]:
        return self.k2.shape

    @property
    def n_modes(self) -> int:
        return int(self.mask.sum())


@lru_cache(maxsize=64)
def lattice(d: int, M: int) -> Lattice:
    if M < 0:
        raise ValueError("cutoff must be nonnegative")
    r = np.arange(-M, M + 1, dtype=np.int64)
    k = np.stack(np.meshgrid(*([r] * d), indexing="ij"))
    k2 = np.sum(k * k, axis=0)
    mask = (k2 > 0) & (k2 <= M * M)
    for arr in (k, k2, mask):
        arr.setflags(write=False)
    return Lattice(d, M, k, k2, mask)


def conj_reflect(c: np.ndarray, vector: bool = True) -> np.ndarray:
    """Return ``conj(c_{-k})`` at position k."""
    n = c.ndim - 1 if vector else c.ndim
    return np.conj(c[(Ellipsis,) + (slice(None, None, -1),) * n])


class FourierVectorField:
    """Immutable truncated Fourier representation of a real zero-mean vector field."""

    __slots__ = ("d", "M", "coeffs", "solenoidal")

    def __init__(
        self,
        coeffs: np.ndarray,
        M: int | None = None,
        *,
        solenoidal: bool = False,
        validate: bool = True,
    ) -> None:
        coeffs = np.array(coeffs, dtype=np.complex128)
        d = coeffs.shape[0]
        if coeffs.ndim != d + 1:
            raise ValueError(f"expected coefficient array of shape (d, n, ..., n), got {coeffs.shape}")
        side = coeffs.shape[1]
        if side % 2 != 1 or any(s != side for s in coeffs.shape[1:]):
            raise ValueError(f"lattice axes must share one odd length, got {coeffs.shape[1:]}")
        if M is None:
            M = (side - 1) // 2
        if side != 2 * M + 1:
            raise ValueError(f"array side {side} does not match cutoff M={M}")
        lat = lattice(d, M)
        outside = ~lat.mask
        if validate and np.any(coeffs[:, outside] != 0):
            raise ValueError("nonzero coefficients outside the ball 0 < |k| <= M")
        coeffs[:, outside] = 0
        if validate:
            _check_reality(coeffs)
            if solenoidal:
                _check_solenoidal(coeffs, lat)
        coeffs.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "M", int(M))
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "solenoidal", bool(solenoidal))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("FourierVectorField is immutable")

    def __repr__(self) -> str:
        return (
            f"FourierVectorField(d={self.d}, M={self.M}, modes={self.n_nonzero}, "
            f"solenoidal={self.solenoidal})"
        )

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, d: int, M: int) -> "FourierVectorField":
        shape = (d,) + (2 * M + 1,) * d
        return cls(np.zeros(shape, complex), M, solenoidal=True, validate=False)

    @classmethod
    def from_modes(
        cls,
        d: int,
        M: int,
        modes: Mapping[Sequence[int], Sequence[complex]],
        *,
        solenoidal: bool = False,
    ) -> "FourierVectorField":
        """Build a field from an explicit ``{k: v_k}`` mapping (both k and -k listed)."""
        c = np.zeros((d,) + (2 * M + 1,) * d, complex)
        for k, vec in modes.items():
            k = tuple(int(x) for x in k)
            if len(k) != d:
                raise ValueError(f"mode {k} has wrong dimension")
            n2 = sum(x * x for x in k)
            if n2 == 0:
                raise ValueError("the zero mode cannot be stored (zero-mean fields)")
            if n2 > M * M:
                raise ValueError(f"mode {k} lies outside the ball |k| <= {M}")
            c[(slice(None),) + tuple(x + M for x in k)] = np.asarray(vec, complex)
        return cls(c, M, solenoidal=solenoidal)

    @property
    def lattice(self) -> Lattice:
        return lattice(self.d, self.M)

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(np.any(self.coeffs != 0, axis=0)))

    def coefficient(self, k: Sequence[int]) -> np.ndarray:
        k = tuple(int(x) for x in k)
        if sum(x * x for x in k) > self.M**2:
            return np.zeros(self.d, complex)
        return self.coeffs[(slice(None),) + tuple(x + self.M for x in k)].copy()

    def modes(self) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
        """Nonzero modes in lexicographic order of k."""
        lat = self.lattice
        nz = np.any(self.coeffs != 0, axis=0) & lat.mask
        for idx in zip(*np.nonzero(nz)):
            k = tuple(int(i) - self.M for i in idx)
            yield k, self.coeffs[(slice(None),) + idx].copy()

    def with_cutoff(self, M: int) -> "FourierVectorField":
        """Embed into (M larger) or Galerkin-project onto (M smaller) another ball."""
        return FourierVectorField(
            resize(self.coeffs, self.M, M), M, solenoidal=self.solenoidal, validate=False
        )

    # linear structure --------------------------------------------------------
    def _binary(self, other: "FourierVectorField", sign: float) -> "FourierVectorField":
        if not isinstance(other, FourierVectorField):
            return NotImplemented
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        M = max(self.M, other.M)
        c = resize(self.coeffs, self.M, M) + sign * resize(other.coeffs, other.M, M)
        return FourierVectorField(c, M, solenoidal=self.solenoidal and other.solenoidal, validate=False)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __mul__(self, alpha: float) -> "FourierVectorField":
        alpha = float(alpha)
        return FourierVectorField(self.coeffs * alpha, self.M, solenoidal=self.solenoidal, validate=False)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierVectorField":
        return self * -1.0


def resize(c: np.ndarray, M_from: int, M_to: int, vector: bool = True) -> np.ndarray:
    """Copy centered coefficients into a cube of another half-width (truncating to the ball)."""
    if M_from == M_to:
        return c.copy()
    lead = c.shape[:1] if vector else ()
    d = c.ndim - len(lead)
    out = np.zeros(lead + (2 * M_to + 1,) * d, c.dtype)
    m = min(M_from, M_to)
    src = (Ellipsis,) + (slice(M_from - m, M_from + m + 1),) * d
    dst = (Ellipsis,) + (slice(M_to - m, M_to + m + 1),) * d
    out[dst] = c[src]
    mask = lattice(d, M_to).mask
    out[..., ~mask] = 0
    return out


def _check_reality(c: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(c))), 1e-300) if c.size else 1.0
    err = np.max(np.abs(c - conj_reflect(c))) if c.size else 0.0
    if err > _VALIDATION_RTOL * scale:
        raise FieldFormatError(f"reality condition v(-k) = conj(v(k)) violated (max defect {err:.3e})")


def _check_solenoidal(c: np.ndarray, lat: Lattice) -> None:
    scale = max(float(np.max(np.abs(c))), 1e-300) * max(lat.M, 1)
    div = np.abs(np.sum(lat.k * c, axis=0))
    err = float(np.max(div)) if div.size else 0.0
    if err > _VALIDATION_RTOL * scale:
        raise FieldFormatError(f"field flagged divergence-free but max |k.v_k| = {err:.3e}")


def symmetrize(c: np.ndarray, vector: bool = True) -> np.ndarray:
    """Project onto conjugate-symmetric coefficient families."""
    return 0.5 * (c + conj_reflect(c, vector))


# --------------------------------------------------------------------------- norms


def norm_weights(k2: np.ndarray, n: float) -> np.ndarray:
    """``|k|^(2n)`` on the lattice; exact integer powers for integer n, zero at k = 0."""
    k2f = k2.astype(np.float64)
    out = np.zeros_like(k2f)
    nz = k2 > 0
    if float(n).is_integer():
        p = int(n)
        if p >= 0:
            out[nz] = (k2[nz] ** p).astype(np.float64) if p < 16 else k2f[nz] ** p
        else:
            out[nz] = 1.0 / (k2[nz] ** (-p)).astype(np.float64) if -p < 16 else k2f[nz] ** p
    else:
        out[nz] = np.exp(n * np.log(k2f[nz]))
    return out


def sobolev_norm(v: FourierVectorField, n: float) -> float:
    """``sqrt(sum_k |k|^(2n) |v_k|^2)`` over the stored modes."""
    w = norm_weights(v.lattice.k2, n)
    a2 = np.sum(v.coeffs.real**2 + v.coeffs.imag**2, axis=0)
    return math.sqrt(float(np.sum(w * a2)))


def inner_product(v: FourierVectorField, w: FourierVectorField, n: float = 0.0) -> float:
    """Real inner product ``<v|w>_n = sum_k |k|^(2n) conj(v_k).w_k``."""
    M = max(v.M, w.M)
    a = resize(v.coeffs, v.M, M)
    b = resize(w.coeffs, w.M, M)
    wts = norm_weights(lattice(v.d, M).k2, n)
    return float(np.sum(wts * np.sum(np.conj(a) * b, axis=0)).real)


# ----------------------------------------------------------------------- operators


def leray_coeffs(c: np.ndarray, lat: Lattice) -> np.ndarray:
    k = lat.k.astype(np.float64)
    k2 = lat.k2.astype(np.float64)
    k2 = np.where(k2 > 0, k2, 1.0)
    kc = np.sum(k * c, axis=0)
    return c - k * (kc / k2)


def leray_project(v: FourierVectorField) -> FourierVectorField:
    """Coefficient-wise orthogonal projection onto the plane orthogonal to k."""
    return FourierVectorField(leray_coeffs(v.coeffs, v.lattice), v.M, solenoidal=True, validate=False)


def divergence(v: FourierVectorField) -> np.ndarray:
    """Scalar coefficients ``i k.v_k`` on the same centered cube."""
    return 1j * np.sum(v.lattice.k * v.coeffs, axis=0)


def curl(v: FourierVectorField) -> FourierVectorField:
    """``(curl v)_k = i k x v_k``; three dimensions only."""
    if v.d != 3:
        raise ValueError(f"curl is defined here for d = 3 only, got d = {v.d}")
    k = v.lattice.k
    c = v.coeffs
    cross = np.stack(
        [
            k[1] * c[2] - k[2] * c[1],
            k[2] * c[0] - k[0] * c[2],
            k[0] * c[1] - k[1] * c[0],
        ]
    )
    return FourierVectorField(1j * cross, v.M, solenoidal=True, validate=False)


def fractional_laplacian(v: FourierVectorField, n: float) -> FourierVectorField:
    """``sqrt(-Delta)^n``: multiply each coefficient by ``|k|^n``."""
    w = norm_weights(v.lattice.k2, n / 2)
    return FourierVectorField(v.coeffs * w, v.M, solenoidal=v.solenoidal, validate=False)


# ------------------------------------------------------------------ lattice symmetry


def reflect(k: Sequence[int], r: int) -> tuple[int, ...]:
    """Flip the sign of component ``r`` (0-based)."""
    k = tuple(int(x) for x in k)
    if not 0 <= r < len(k):
        raise ValueError(f"reflection index {r} out of range for d={len(k)}")
    return k[:r] + (-k[r],) + k[r + 1 :]


def permute(k: Sequence[int], sigma: Sequence[int]) -> tuple[int, ...]:
    """``(k_sigma(0), ..., k_sigma(d-1))`` for a 0-based permutation ``sigma``."""
    k = tuple(int(x) for x in k)
    sigma = tuple(int(s) for s in sigma)
    if sorted(sigma) != list(range(len(k))):
        raise ValueError(f"{sigma} is not a permutation of range({len(k)})")
    return tuple(k[s] for s in sigma)


def canonical_point(k: Sequence[int]) -> tuple[int, ...]:
    """Representative in the fundamental domain ``0 <= k_1 <= ... <= k_d``."""
    return tuple(sorted(abs(int(x)) for x in k))


def fundamental_domain(d: int, a: int) -> list[tuple[int, ...]]:
    """Nonzero sorted tuples with entries in ``[0, a]``."""
    pts = itertools.combinations_with_replacement(range(a + 1), d)
    return [p for p in pts if any(p)]


# --------------------------------------------------------------------- generators


def random_field(
    seed: int,
    M: int,
    d: int = 3,
    target_h1_norm: float = 1.0,
    *,
    decay: float = 2.0,
) -> FourierVectorField:
    """Reproducible random divergence-free field rescaled to a prescribed H^1 norm.

    Coefficients are complex Gaussians with amplitude ``|k|^(-decay)``, symmetrized
    for reality and Leray-projected.
    """
    if M < 1:
        raise ValueError("cutoff M must be >= 1")
    lat = lattice(d, M)
    rng = np.random.default_rng(seed)
    shape = (d,) + lat.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    amp = norm_weights(lat.k2, -decay / 2)
    c = symmetrize(c * amp)
    c[:, ~lat.mask] = 0
    c = symmetrize(leray_coeffs(c, lat))
    v = FourierVectorField(c, M, solenoidal=True, validate=False)
    h1 = sobolev_norm(v, 1)
    if target_h1_norm == 0 or h1 == 0:
        return FourierVectorField.zero(d, M)
    return v * (target_h1_norm / h1)


# -------------------------------------------------------------------- serialization


def field_to_dict(v: FourierVectorField) -> dict:
    return {
        "format": FIELD_FORMAT,
        "version": FIELD_VERSION,
        "d": v.d,
        "M": v.M,
        "solenoidal": v.solenoidal,
        "modes": [
            {"k": list(k), "re": [float(x) for x in vec.real], "im": [float(x) for x in vec.imag]}
            for k, vec in v.modes()
        ],
    }


def field_from_dict(doc: Mapping) -> FourierVectorField:
    """Load a serialized field, enforcing every structural invariant."""
    if doc.get("format") != FIELD_FORMAT:
        raise FieldFormatError(f"unexpected format tag {doc.get('format')!r}")
    if doc.get("version") != FIELD_VERSION:
        raise FieldFormatError(f"unsupported field version {doc.get('version')!r}")
    try:
        d, M = int(doc["d"]), int(doc["M"])
        entries = doc["modes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"malformed field document: {exc}") from None
    if d < 2 or M < 0:
        raise FieldFormatError(f"invalid d={d} or M={M}")
    c = np.zeros((d,) + (2 * M + 1,) * d, complex)
    seen = set()
    for entry in entries:
        k = tuple(int(x) for x in entry["k"])
        re, im = entry["re"], entry["im"]
        if len(k) != d or len(re) != d or len(im) != d:
            raise FieldFormatError(f"mode {k}: component count does not match d={d}")
        n2 = sum(x * x for x in k)
        if n2 == 0:
            raise FieldFormatError("zero mode present: fields must have zero mean")
        if n2 > M * M:
            raise FieldFormatError(f"mode {k} outside the ball |k| <= {M}")
        if k in seen:
            raise FieldFormatError(f"duplicate mode {k}")
        seen.add(k)
        c[(slice(None),) + tuple(x + M for x in k)] = np.asarray(re, float) + 1j * np.asarray(im, float)
    for k in seen:
        if tuple(-x for x in k) not in seen:
            raise FieldFormatError(f"mode {k} has no conjugate partner {tuple(-x for x in k)}")
    _check_reality(c)
    solenoidal = bool(doc.get("solenoidal", False))
    if solenoidal:
        _check_solenoidal(c, lattice(d, M))
    return FourierVectorField(c, M, solenoidal=solenoidal, validate=False)


def iter_modes(d: int, M: int) -> Iterable[tuple[int, ...]]:
    lat = lattice(d, M)
    for idx in zip(*np.nonzero(lat.mask)):
        yield tuple(int(i) - M for i in idx)

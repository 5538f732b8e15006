"""The Navier-Stokes bilinear term ``P(v, w) = -L(v . grad w)`` on truncated fields.

Products of Fourier series are convolutions of the coefficient families,
``(v . grad w)_k = (2 pi)^(-d/2) sum_h (v_h . i(k - h)) w_(k-h)``. Two evaluators
are provided: a zero-padded FFT whose grid is large enough that no alias can
land on a requested output mode (so the result is the exact convolution up to
rounding), and a direct coefficient loop used as a reference.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import fft as sfft

from .spectral import (
    FourierVectorField,
    _check_solenoidal,
    lattice,
    leray_coeffs,
    norm_weights,
    resize,
    sobolev_norm,
    symmetrize,
)

_FFT_WORKERS: int | None = None


def set_fft_workers(n: int | None) -> None:
    """Cap the threads used by the FFT backend (``None`` lets scipy decide)."""
    global _FFT_WORKERS
    if n is not None and n < 1:
        raise ValueError("worker count must be >= 1")
    _FFT_WORKERS = n


def _grid_size(*cutoffs: int) -> int:
    # a product of modes up to Ma and Mb reaches Ma + Mb; folding by N must not
    # bring any of those onto an output mode |k| <= M_out
    return sfft.next_fast_len(sum(cutoffs) + 1)


def _to_physical(c: np.ndarray, M: int, N: int, d: int) -> np.ndarray:
    """Real grid values of a conjugate-symmetric cube (up to ``(2 pi)^(-d/2)``)."""
    lead = c.shape[: c.ndim - d]
    buf = np.zeros(lead + (N,) * (d - 1) + (N // 2 + 1,), complex)
    idx = np.r_[N - M : N, 0 : M + 1]  # positions of -M..M
    # the real transform only reads the nonnegative half of the last axis
    buf[(Ellipsis,) + np.ix_(*([idx] * (d - 1) + [np.arange(M + 1)]))] = c[..., M:]
    axes = tuple(range(-d, 0))
    return sfft.irfftn(buf, s=(N,) * d, axes=axes, workers=_FFT_WORKERS) * N**d


def _to_coeffs(f: np.ndarray, M: int, d: int) -> np.ndarray:
    N = f.shape[-1]
    axes = tuple(range(-d, 0))
    g = sfft.rfftn(f, axes=axes, workers=_FFT_WORKERS) / N**d
    idx = np.r_[N - M : N, 0 : M + 1]
    out = np.empty(f.shape[: f.ndim - d] + (2 * M + 1,) * d, complex)
    out[..., M:] = g[(Ellipsis,) + np.ix_(*([idx] * (d - 1) + [np.arange(M + 1)]))]
    # negative last index from reality: c(-k) = conj(c(k))
    out[..., :M] = np.conj(np.flip(out, axis=axes)[..., :M])
    return out


def advection_coeffs(v: FourierVectorField, w: FourierVectorField, M_out: int) -> np.ndarray:
    """Coefficients of ``v . grad w`` on ``|k| <= M_out`` (not projected)."""
    if v.d != w.d:
        raise ValueError(f"dimension mismatch: {v.d} vs {w.d}")
    d = v.d
    N = _grid_size(v.M, w.M, M_out)
    if v is w and v.solenoidal:
        return _self_advection(v, M_out, N)
    kw = lattice(d, w.M).k
    vx = _to_physical(v.coeffs, v.M, N, d)  # (d, N, ..., N)
    # grad w: component i, derivative j
    gw = _to_physical(1j * kw[None, :] * w.coeffs[:, None], w.M, N, d)  # (d, d, N..)
    prod = np.einsum("j...,ij...->i...", vx, gw)
    c = _to_coeffs(prod, M_out, d) * (2 * math.pi) ** (-d / 2)
    c[:, ~lattice(d, M_out).mask] = 0
    return c


def _self_advection(u: FourierVectorField, M_out: int, N: int) -> np.ndarray:
    """``u . grad u = div(u (x) u)`` for solenoidal u: d transforms in, d(d+1)/2 out."""
    d = u.d
    ux = _to_physical(u.coeffs, u.M, N, d)
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    prods = np.stack([ux[i] * ux[j] for i, j in pairs])
    T = _to_coeffs(prods, M_out, d) * (2 * math.pi) ** (-d / 2)
    k = lattice(d, M_out).k
    c = np.zeros((d,) + T.shape[1:], complex)
    for n, (i, j) in enumerate(pairs):
        c[i] += 1j * k[j] * T[n]
        if i != j:
            c[j] += 1j * k[i] * T[n]
    c[:, ~lattice(d, M_out).mask] = 0
    return c


def advection_coeffs_direct(v: FourierVectorField, w: FourierVectorField, M_out: int) -> np.ndarray:
    """Reference double loop over the stored modes of ``v`` and ``w``."""
    if v.d != w.d:
        raise ValueError(f"dimension mismatch: {v.d} vs {w.d}")
    d = v.d
    out = np.zeros((d,) + (2 * M_out + 1,) * d, complex)
    pref = (2 * math.pi) ** (-d / 2)
    wmodes = list(w.modes())
    for h, vh in v.modes():
        for l, wl in wmodes:
            k = tuple(a + b for a, b in zip(h, l))
            if not 0 < sum(x * x for x in k) <= M_out * M_out:
                continue
            coef = 1j * sum(vh[j] * l[j] for j in range(d))
            out[(slice(None),) + tuple(x + M_out for x in k)] += pref * coef * wl
    return out


def bilinear_P(
    v: FourierVectorField,
    w: FourierVectorField,
    M_out: int | None = None,
    *,
    method: str = "fft",
) -> FourierVectorField:
    """``-L(v . grad w)`` truncated to ``|k| <= M_out`` (default ``M_v + M_w``, no truncation)."""
    if M_out is None:
        M_out = v.M + w.M
    if method == "fft":
        c = advection_coeffs(v, w, M_out)
    elif method == "direct":
        c = advection_coeffs_direct(v, w, M_out)
    else:
        raise ValueError(f"unknown method {method!r}")
    lat = lattice(v.d, M_out)
    c = symmetrize(leray_coeffs(-c, lat))
    c[:, ~lat.mask] = 0
    return FourierVectorField(c, M_out, solenoidal=True, validate=False)


def bilinear_ratio(v: FourierVectorField, w: FourierVectorField, omega: float) -> float:
    """``||P(v, w)||_(-omega) / (||v||_1 ||w||_1)`` with every product mode kept."""
    _check_solenoidal(v.coeffs, v.lattice)
    den = sobolev_norm(v, 1) * sobolev_norm(w, 1)
    if den == 0:
        raise ZeroDivisionError("bilinear_ratio needs nonzero v and w")
    return sobolev_norm(bilinear_P(v, w), -omega) / den


# ------------------------------------------------------------------ scalar fields


def scalar_sobolev_norm(c: np.ndarray, n: float) -> float:
    """Norm of a centered scalar coefficient cube, ignoring the k = 0 entry."""
    c = np.asarray(c)
    M = (c.shape[0] - 1) // 2
    k2 = np.sum(lattice(c.ndim, M).k ** 2, axis=0)
    return math.sqrt(float(np.sum(norm_weights(k2, n) * np.abs(c) ** 2)))


def scalar_product_coeffs(z: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Coefficients of the pointwise product ``z v`` on the full cube ``|k|_inf <= Mz + Mv``."""
    z = np.asarray(z, complex)
    v = np.asarray(v, complex)
    if z.ndim != v.ndim:
        raise ValueError("fields must share the dimension")
    d = z.ndim
    Mz, Mv = (z.shape[0] - 1) // 2, (v.shape[0] - 1) // 2
    Mo = Mz + Mv
    N = _grid_size(Mz, Mv, Mo)
    prod = _to_physical(z, Mz, N, d) * _to_physical(v, Mv, N, d)
    return _to_coeffs(prod, Mo, d) * (2 * math.pi) ** (-d / 2)


def zero_mean_product_norm(z: np.ndarray, v: np.ndarray) -> float:
    """``||z v - <z v>||_(L2)``: L2 norm of the product with the k = 0 mode dropped."""
    c = scalar_product_coeffs(z, v)
    center = (c.shape[0] - 1) // 2
    c[(center,) * c.ndim] = 0
    return math.sqrt(float(np.sum(np.abs(c) ** 2)))


def project_out(P: FourierVectorField, M: int) -> FourierVectorField:
    """``(1 - pi_M) P``: the modes of ``P`` with ``|k| > M``."""
    low = resize(P.coeffs, P.M, M)
    c = P.coeffs - resize(low, M, P.M)
    return FourierVectorField(c, P.M, solenoidal=P.solenoidal, validate=False)

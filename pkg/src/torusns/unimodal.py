"""Convolutions of even, unimodal and symmetric functions on lattice grids.

A grid is a centered array with odd side lengths; entry ``[i_1, ..., i_d]``
holds ``f(i_1 - c_1, ..., i_d - c_d)`` and the function vanishes outside the
array. These helpers back the symmetry reduction used for the kernel sup.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import signal


def _centered(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if any(n % 2 == 0 for n in f.shape):
        raise ValueError(f"grid axes must have odd length, got {f.shape}")
    if np.any(f < 0):
        raise ValueError("functions must be nonnegative")
    return f


def convolve_grid(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``(p * q)(k) = sum_h p(h) q(k - h)``, exact up to rounding; output stays centered."""
    p, q = _centered(p), _centered(q)
    if p.ndim != q.ndim:
        raise ValueError("grids must share the dimension")
    return signal.convolve(p, q, mode="full", method="direct")


def convolve_1d(p, q) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, float))
    q = np.atleast_1d(np.asarray(q, float))
    if p.ndim != 1 or q.ndim != 1:
        raise ValueError("convolve_1d takes one-dimensional sequences")
    return convolve_grid(p, q)


def _atol(f: np.ndarray, rtol: float) -> float:
    return rtol * float(np.max(f)) if f.size else 0.0


def check_even(f: np.ndarray, rtol: float = 1e-12) -> bool:
    """``f(R_r k) = f(k)`` for every axis r."""
    f = _centered(f)
    tol = _atol(f, rtol)
    return all(np.all(np.abs(f - np.flip(f, axis=r)) <= tol) for r in range(f.ndim))


def check_unimodal(f: np.ndarray, rtol: float = 1e-12) -> bool:
    """Nondecreasing up to the center and nonincreasing after it, along every axis."""
    f = _centered(f)
    tol = _atol(f, rtol)
    for r in range(f.ndim):
        c = f.shape[r] // 2
        diff = np.diff(f, axis=r)
        rising = np.take(diff, range(0, c), axis=r)
        falling = np.take(diff, range(c, f.shape[r] - 1), axis=r)
        if np.any(rising < -tol) or np.any(falling > tol):
            return False
    # beyond the grid the function is 0 <= f, so the outward steps are fine
    return True


def check_even_unimodal(f: np.ndarray, rtol: float = 1e-12) -> bool:
    return check_even(f, rtol) and check_unimodal(f, rtol)


def check_symmetric(f: np.ndarray, rtol: float = 1e-12) -> bool:
    """``f(P_sigma k) = f(k)`` for every permutation of the coordinates."""
    f = _centered(f)
    if len(set(f.shape)) > 1:
        return False
    tol = _atol(f, rtol)
    return all(
        np.all(np.abs(f - np.transpose(f, sigma)) <= tol)
        for sigma in itertools.permutations(range(f.ndim))
    )


def random_even_unimodal(
    rng: np.random.Generator,
    half_width: int,
    d: int = 1,
    *,
    symmetric: bool = False,
) -> np.ndarray:
    """Random nonnegative grid, even and unimodal in each variable.

    A reverse cumulative sum of nonnegative increments along every axis gives a
    function of ``(|k_1|, ..., |k_d|)`` that is nonincreasing in each argument;
    mirroring makes it even. Averaging over axis permutations keeps both
    properties and adds symmetry.
    """
    n = half_width + 1
    g = rng.exponential(size=(n,) * d) * (rng.random((n,) * d) < 0.7)
    for r in range(d):
        g = np.flip(np.cumsum(np.flip(g, axis=r), axis=r), axis=r)
    if symmetric:
        perms = list(itertools.permutations(range(d)))
        g = sum(np.transpose(g, s) for s in perms) / len(perms)
    f = g
    for r in range(d):
        f = np.concatenate([np.flip(np.take(f, range(1, n), axis=r), axis=r), f], axis=r)
    return f

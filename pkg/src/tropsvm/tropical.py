"""Max-plus arithmetic on the tropical projective torus R^d / R1.

Points are plain 1-D float arrays. Every function that returns a point
returns it in canonical form (first coordinate shifted to zero), so two
representatives of the same torus point compare equal componentwise.

Sector indices are 1-based throughout the public API.
"""

from __future__ import annotations

import math

import numpy as np

NEG_INF = -math.inf
DEFAULT_TOL = 1e-9


def trop_add(a: float, b: float) -> float:
    """Tropical sum: ``max(a, b)``. ``-inf`` is the identity."""
    return max(a, b)


def trop_mul(a: float, b: float) -> float:
    """Tropical product: ``a + b``, absorbing at ``-inf``."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


def as_point(x, d: int | None = None) -> np.ndarray:
    """Validate ``x`` as a finite point of dimension >= 2 and return it as floats."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"expected a 1-D point with at least 2 coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("torus points must have finite coordinates")
    if d is not None and arr.size != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {arr.size}")
    return arr


def _pair(v, w) -> tuple[np.ndarray, np.ndarray]:
    v = as_point(v)
    w = as_point(w)
    if v.size != w.size:
        raise ValueError(f"dimension mismatch: {v.size} vs {w.size}")
    return v, w


def canonical(x) -> np.ndarray:
    """Representative of ``x`` in the torus with first coordinate 0."""
    arr = as_point(x)
    return arr - arr[0]


def trop_combine(a: float, v, b: float, w) -> np.ndarray:
    """Canonical form of ``a ⊙ v ⊞ b ⊙ w`` (coordinatewise ``max(a + v_i, b + w_i)``).

    Either scalar may be ``-inf``, in which case the other term dominates.
    """
    v, w = _pair(v, w)
    if a == NEG_INF and b == NEG_INF:
        raise ValueError("at least one scalar must be finite")
    if a == NEG_INF:
        return canonical(b + w)
    if b == NEG_INF:
        return canonical(a + v)
    return canonical(np.maximum(a + v, b + w))


def trop_distance(v, w) -> float:
    """Generalized Hilbert projective metric ``max(v - w) - min(v - w)``."""
    v, w = _pair(v, w)
    diff = v - w
    return float(diff.max() - diff.min())


def torus_equal(v, w, tol: float = DEFAULT_TOL) -> bool:
    return trop_distance(v, w) <= tol


def _top_two(y: np.ndarray) -> tuple[float, float]:
    # np.partition is O(d); the last two entries are the two largest
    part = np.partition(y, y.size - 2)
    return float(part[-1]), float(part[-2])


def dist_to_hyperplane(x, omega) -> float:
    """Tropical distance from ``x`` to the hyperplane with normal vector ``omega``.

    Equal to the gap between the largest and second largest entry of
    ``omega + x``; zero exactly when ``x`` lies on the hyperplane.
    """
    x, omega = _pair(x, omega)
    first, second = _top_two(omega + x)
    return first - second


def sector_membership(x, omega, tol: float = DEFAULT_TOL) -> frozenset[int]:
    """1-based indices ``i`` with ``omega_i + x_i`` within ``tol`` of the maximum.

    A singleton means ``x`` sits in an open sector; two or more indices mean
    ``x`` is on the hyperplane (up to ``tol``).
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    x, omega = _pair(x, omega)
    y = omega + x
    top = y.max()
    return frozenset(int(i) + 1 for i in np.flatnonzero(y >= top - tol))


def argmax_sector(x, omega) -> int:
    """Single sector index for ``x``; ties resolve to the smallest index."""
    x, omega = _pair(x, omega)
    return int(np.argmax(omega + x)) + 1


def trop_segment(v, w) -> list[np.ndarray]:
    """Breakpoints of the tropical line segment between ``v`` and ``w``.

    The segment is ``{0 ⊙ v ⊞ λ ⊙ w : λ real}``; it changes direction only
    where ``λ`` crosses one of the values ``v_i - w_i``. Walking those
    thresholds in increasing order yields at most ``d`` pseudo-vertices,
    starting at ``v`` and ending at ``w``.
    """
    v, w = _pair(v, w)
    thresholds = np.unique(v - w)
    out: list[np.ndarray] = []
    for lam in thresholds:
        pt = trop_combine(0.0, v, float(lam), w)
        if not out or trop_distance(out[-1], pt) > DEFAULT_TOL:
            out.append(pt)
    return out

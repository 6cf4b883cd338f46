"""Shared numerical utilities: dense extremum sampling, piecewise quadrature,
grid-based quasiconvexity tests and level-crossing searches."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

DENSE_SAMPLES = 2**14


def sample_min(fn, lo: float, hi: float, n: int = DENSE_SAMPLES, refine: bool = True):
    """Minimum of ``fn`` on [lo, hi] by dense sampling plus local refinement.

    Returns (argmin, min). ``fn`` must accept numpy arrays.
    """
    if hi <= lo:
        raise ValueError("empty interval")
    x = np.linspace(lo, hi, n)
    v = np.asarray(fn(x), dtype=float)
    i = int(np.argmin(v))
    if not refine:
        return float(x[i]), float(v[i])
    a = x[max(i - 1, 0)]
    b = x[min(i + 1, n - 1)]
    if a == b:
        return float(x[i]), float(v[i])
    res = minimize_scalar(lambda p: float(fn(p)), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    if res.fun <= v[i]:
        return float(res.x), float(res.fun)
    return float(x[i]), float(v[i])


def sample_max(fn, lo: float, hi: float, n: int = DENSE_SAMPLES, refine: bool = True):
    xm, vm = sample_min(lambda p: -fn(p), lo, hi, n=n, refine=refine)
    return xm, -vm


def max_abs_on(fn, lo: float, hi: float, n: int = DENSE_SAMPLES) -> float:
    _, hi_v = sample_max(lambda p: np.abs(fn(p)), lo, hi, n=n)
    return hi_v


@lru_cache(maxsize=8)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_integral(fn, a: float, b: float, n: int = 40) -> float:
    """Gauss-Legendre integral of a smooth ``fn`` on [a, b]."""
    if b == a:
        return 0.0
    t, w = _leggauss(n)
    x = 0.5 * (b - a) * t + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.dot(w, np.asarray(fn(x), dtype=float)))


def is_quasiconvex_on_grid(values, tol: float = 0.0) -> bool:
    """True iff every sublevel set of the sampled values is one index interval.

    Equivalent to: non-increasing up to some argmin, non-decreasing after,
    up to ``tol`` slack for floating noise.
    """
    v = np.asarray(values, dtype=float)
    m = int(np.argmin(v))
    d = np.diff(v)
    return bool(np.all(d[:m] <= tol) and np.all(d[m:] >= -tol))


def leftmost_crossing(fn, level: float, lo: float, hi: float, n: int = DENSE_SAMPLES) -> float:
    """Leftmost p in [lo, hi] with fn(p) <= level; fn(lo) > level is required.

    Grid scan for the first sign change, then bisection on that bracket.
    """
    x = np.linspace(lo, hi, n)
    v = np.asarray(fn(x), dtype=float)
    below = v <= level
    if below[0]:
        return float(x[0])
    if not below.any():
        raise ValueError("no crossing on interval")
    j = int(np.argmax(below))
    return brentq(lambda p: float(fn(p)) - level, x[j - 1], x[j], xtol=1e-13)


def rightmost_crossing(fn, level: float, lo: float, hi: float, n: int = DENSE_SAMPLES) -> float:
    return -leftmost_crossing(lambda p: fn(-p), level, -hi, -lo, n=n)


def expand_until(fn, level: float, center: float, step0: float = 1.0, max_doublings: int = 60):
    """Grow [center-w, center+w] until fn > level at both ends (coercive fn)."""
    w = step0
    for _ in range(max_doublings):
        if fn(center - w) > level and fn(center + w) > level:
            return center - w, center + w
        w *= 2.0
    raise RuntimeError("coercivity bracket expansion failed")


def cumulative_simpson_pieces(y, x, piece_idx=None):
    """Cumulative Simpson integral that never fits a quadratic across a piece
    boundary; ``piece_idx`` are indices into x of the smooth-piece edges."""
    from scipy.integrate import cumulative_simpson

    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if piece_idx is None or len(piece_idx) <= 2:
        return cumulative_simpson(y, x=x, initial=0.0)
    out = np.empty_like(y)
    offset = 0.0
    for a, b in zip(piece_idx[:-1], piece_idx[1:]):
        if b - a == 1:
            seg = np.array([0.0, 0.5 * (x[b] - x[a]) * (y[a] + y[b])])
        else:
            seg = cumulative_simpson(y[a:b + 1], x=x[a:b + 1], initial=0.0)
        out[a:b + 1] = offset + seg
        offset = out[b]
    return out


def fd_second(fn, p, h: float = 1e-4):
    """Central second difference, O(h^2)."""
    p = np.asarray(p, dtype=float)
    return (fn(p + h) - 2.0 * fn(p) + fn(p - h)) / h**2


def fd_first(fn, p, h: float = 1e-5):
    """Central first difference, O(h^2)."""
    p = np.asarray(p, dtype=float)
    return (fn(p + h) - fn(p - h)) / (2.0 * h)

"""Counterexample synthesis: build a two-plateau C^{1,1} momentum profile f
whose slope integral vanishes over one period, read off the potential
V = -f' - G(f), and package the result with the constants needed downstream.

The profile spends most of the period on plateaus at p1 and p2 (durations in
the ratio fixed by the slopes of G), and inside the two transition windows it
holds sub-plateaus at the argmin/argmax of G' whose time split is tuned so
that the integral of G'(f) over a period is exactly zero. All ramps are
quintic smoothsteps with zero end slopes, so f is C^2 across every breakpoint
and V is piecewise smooth with closed-form values.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HypothesisViolation, TuningFailure
from .hamiltonians import Hamiltonian1D, reflect
from .numerics import max_abs_on, sample_max, sample_min
from .potentials import PeriodicPotential

ELL_MARGIN = 1e-2           # retained fraction of the small-ell limit
ELL_K_MAX = 20              # dyadic floor for the transition budget


def _smoothstep(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_d1(t):
    return 30.0 * np.square(t) * np.square(1.0 - t)


def _smoothstep_d2(t):
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


@dataclass(frozen=True)
class Segment:
    x0: float
    x1: float
    u: float            # value at x0
    v: float            # value at x1; plateau iff u == v

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def is_plateau(self) -> bool:
        return self.u == self.v


@dataclass(frozen=True)
class ProfileSpec:
    """Piecewise description of the synthesized profile."""

    p1: float
    p2: float
    L: float
    ell: float
    ell_prime: float
    a: float
    p_min: float
    p_max: float
    segments: tuple

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.x0 for s in self.segments] + [1.0])

    def _piecewise(self, x, fn):
        x = np.asarray(x, dtype=float)
        x = x - np.floor(x)
        out = np.empty_like(x)
        edges = self.breakpoints
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0,
                      len(self.segments) - 1)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if m.any():
                out[m] = fn(seg, x[m])
        return out

    def eval(self, x):
        def f(seg, xs):
            if seg.is_plateau:
                return np.full_like(xs, seg.u)
            t = (xs - seg.x0) / seg.width
            return seg.u + (seg.v - seg.u) * _smoothstep(t)

        return self._piecewise(x, f)

    def d1(self, x):
        def f(seg, xs):
            if seg.is_plateau:
                return np.zeros_like(xs)
            t = (xs - seg.x0) / seg.width
            return (seg.v - seg.u) / seg.width * _smoothstep_d1(t)

        return self._piecewise(x, f)

    def d2(self, x):
        def f(seg, xs):
            if seg.is_plateau:
                return np.zeros_like(xs)
            t = (xs - seg.x0) / seg.width
            return (seg.v - seg.u) / seg.width**2 * _smoothstep_d2(t)

        return self._piecewise(x, f)

    def mean(self) -> float:
        """Exact integral of f over one period (ramp mean is the midpoint value)."""
        total = 0.0
        for s in self.segments:
            total += 0.5 * (s.u + s.v) * s.width
        return total

    def integral_of(self, fn, tol: float = 1e-14) -> float:
        """Integral of fn(f(x)) over one period: exact on plateaus, adaptive
        panel-doubled Gauss on ramps (fn composed with a steep ramp can have
        features far narrower than the ramp itself)."""
        total = 0.0
        for s in self.segments:
            if s.is_plateau:
                total += float(fn(s.u)) * s.width
            else:
                total += _adaptive_segment_integral(fn, s, tol)
        return total

    def reflect(self) -> "ProfileSpec":
        """The profile of the reflected system: x -> -f(-x), rotated so the
        low plateau starts at 0 again."""
        refl = [Segment(1.0 - s.x1, 1.0 - s.x0, -s.v, -s.u) for s in self.segments]
        shift = self.ell      # reflected window [0, ell] wraps to the tail
        moved = []
        for s in refl:
            x0 = s.x0 - shift
            x1 = s.x1 - shift
            if x1 <= 0.0 + 1e-15:
                x0 += 1.0
                x1 += 1.0
            moved.append(Segment(x0, x1, s.u, s.v))
        moved.sort(key=lambda s: s.x0)
        segs = _snap_segments(moved)
        return ProfileSpec(
            p1=-self.p2, p2=-self.p1, L=1.0 - self.L, ell=self.ell,
            ell_prime=self.ell_prime, a=1.0 - self.a,
            p_min=-self.p_max, p_max=-self.p_min, segments=tuple(segs))

    def params_dict(self) -> dict:
        return {
            "p1": self.p1, "p2": self.p2, "L": self.L, "ell": self.ell,
            "ell_prime": self.ell_prime, "a": self.a,
            "p_min": self.p_min, "p_max": self.p_max,
            "segments": [[s.x0, s.x1, s.u, s.v] for s in self.segments],
        }

    @staticmethod
    def from_params(d: dict) -> "ProfileSpec":
        segs = tuple(Segment(*row) for row in d["segments"])
        return ProfileSpec(p1=d["p1"], p2=d["p2"], L=d["L"], ell=d["ell"],
                           ell_prime=d["ell_prime"], a=d["a"],
                           p_min=d["p_min"], p_max=d["p_max"], segments=segs)


def _adaptive_segment_integral(fn, seg: Segment, tol: float = 1e-14,
                               n_gauss: int = 24, k_max: int = 13) -> float:
    """Integral of fn(f) over one ramp by Gauss panels, doubled to agreement."""
    t_ref, w_ref = np.polynomial.legendre.leggauss(n_gauss)

    def value(k_panels):
        edges = np.linspace(seg.x0, seg.x1, k_panels + 1)
        half = 0.5 * np.diff(edges)
        centers = 0.5 * (edges[:-1] + edges[1:])
        xs = (centers[:, None] + half[:, None] * t_ref[None, :]).ravel()
        ts = (xs - seg.x0) / seg.width
        fv = np.asarray(fn(seg.u + (seg.v - seg.u) * _smoothstep(ts)), dtype=float)
        return float(np.sum(fv.reshape(k_panels, n_gauss) @ w_ref * half))

    prev = value(1)
    for k in range(1, k_max + 1):
        cur = value(2**k)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def _snap_segments(segs, tol: float = 1e-12):
    """Force exact contiguity on [0, 1] and drop zero-width pieces."""
    out = []
    cursor = 0.0
    for s in segs:
        if s.width <= tol:
            continue
        out.append(Segment(cursor, cursor + s.width, s.u, s.v))
        cursor = out[-1].x1
    if abs(cursor - 1.0) > 1e-9:
        raise AssertionError(f"segments cover {cursor}, expected 1")
    last = out[-1]
    out[-1] = Segment(last.x0, 1.0, last.u, last.v)
    return out


# ---------------------------------------------------------------------------
# hypothesis checks and scalar selections
# ---------------------------------------------------------------------------

def compute_L(G: Hamiltonian1D, p1: float, p2: float) -> float:
    """Plateau split L = G'(p2) / (G'(p2) - G'(p1)), requiring G'(p1) < 0 < G'(p2)."""
    g1 = float(G.d1(p1))
    g2 = float(G.d1(p2))
    if not (g1 < 0.0 < g2):
        raise HypothesisViolation(f"need G'(p1) < 0 < G'(p2); got {g1}, {g2}")
    return g2 / (g2 - g1)


@dataclass(frozen=True)
class HypothesisReport:
    slope_ok: bool       # G'(p1) < 0 < G'(p2)
    direct: bool         # G''(p1) < 0 and the slope/curvature chain
    reflected: bool      # same after (p, x) -> (-p, -x)
    K1: float

    @property
    def ok(self) -> bool:
        return self.slope_ok and (self.direct or self.reflected)


def slope_curvature_hypotheses(G: Hamiltonian1D, p1: float, p2: float) -> HypothesisReport:
    g1, g2 = float(G.d1(p1)), float(G.d1(p2))
    c1, c2 = float(G.d2(p1)), float(G.d2(p2))
    slope_ok = g1 < 0.0 < g2
    k1 = max_abs_on(G.d1, p1, p2) if slope_ok else float("nan")
    direct = slope_ok and c1 < 0.0 and c1 * g2 * math.exp(-k1) < c2 * g1 * math.exp(k1)
    refl = slope_ok and c2 < 0.0 and c1 * g2 * math.exp(k1) < c2 * g1 * math.exp(-k1)
    return HypothesisReport(slope_ok=slope_ok, direct=direct, reflected=refl, K1=k1)


REGIME_CONCAVE = "plateaus_concave"    # both plateau curvatures negative
REGIME_RIGHT_CONVEX = "right_convex"   # curvature at p2 nonnegative


def select_ell(G: Hamiltonian1D, p1: float, p2: float,
               margin: float = ELL_MARGIN, k_max: int = ELL_K_MAX):
    """Largest dyadic transition budget ell = (L ^ (1-L)) / 2^k for which the
    regime inequality holds while retaining ``margin`` of its small-ell limit."""
    hyp = slope_curvature_hypotheses(G, p1, p2)
    if not (hyp.slope_ok and hyp.direct):
        raise HypothesisViolation("direct-form hypotheses fail; reflect first")
    L = compute_L(G, p1, p2)
    c1, c2 = float(G.d2(p1)), float(G.d2(p2))
    k1 = hyp.K1
    k2 = max_abs_on(G.d2, p1, p2)
    em, ep = math.exp(-k1), math.exp(k1)

    if c1 < 0.0 and c2 < 0.0:
        regime = REGIME_CONCAVE

        def lhs(ell):
            return ((L - ell) * c1 + (1.0 - L - ell) * c2) * em + 2.0 * ell * k2 * ep
    else:
        regime = REGIME_RIGHT_CONVEX

        def lhs(ell):
            return (L - ell) * c1 * em + ((1.0 - L - ell) * c2 + 2.0 * ell * k2) * ep

    limit = lhs(0.0)
    if not limit < 0.0:
        raise HypothesisViolation("small-ell limit of the regime inequality is not negative")
    cap = min(L, 1.0 - L)
    for k in range(1, k_max + 1):
        ell = cap / 2.0**k
        if lhs(ell) <= margin * limit:
            return ell, regime
    raise HypothesisViolation(f"no admissible ell down to {cap / 2.0**k_max:g}")


# ---------------------------------------------------------------------------
# profile construction
# ---------------------------------------------------------------------------

def _window_segments(x_start, ascending, p_lo, p_hi, levels, ramp_w):
    """Segments of one transition window.

    ``levels`` is [(value, duration), ...] sorted in traversal order between
    the plateau values p_lo (entry) and p_hi (exit) for an ascending window;
    descending windows traverse the reversed sequence.
    """
    seq = [(p_lo, 0.0)] + levels + [(p_hi, 0.0)]
    if not ascending:
        seq = [(p_hi, 0.0)] + levels[::-1] + [(p_lo, 0.0)]
    segs = []
    x = x_start
    for (u, _), (v, dur) in zip(seq[:-1], seq[1:]):
        if u != v:
            segs.append(Segment(x, x + ramp_w, u, v))
            x += ramp_w
        if dur > 0.0:
            segs.append(Segment(x, x + dur, v, v))
            x += dur
    return segs, x


def build_profile(G: Hamiltonian1D, p1: float, p2: float, ell: float,
                  ell_prime: Optional[float] = None,
                  margin: float = ELL_MARGIN) -> ProfileSpec:
    """Two-plateau profile with the sub-plateau mix tuned so that the slope
    integral of G along the profile vanishes exactly (to round-off)."""
    L = compute_L(G, p1, p2)
    cap = min(L, 1.0 - L)
    if not 0.0 < ell < cap:
        raise ValueError(f"ell must lie in (0, {cap:g})")
    g1, g2 = float(G.d1(p1)), float(G.d1(p2))
    x_min, m1 = sample_min(G.d1, p1, p2)
    x_max, M1 = sample_max(G.d1, p1, p2)
    p_min = float(np.clip(x_min, p1, p2))
    p_max = float(np.clip(x_max, p1, p2))
    base = g1 * (L - ell) + g2 * (1.0 - L - ell)
    lim_neg = base + 2.0 * ell * m1      # < 0 by the choice of L
    lim_pos = base + 2.0 * ell * M1      # > 0 likewise

    def sides(lp):
        s_neg = base + 2.0 * (ell - lp) * m1 + 2.0 * lp * M1
        s_pos = base + 2.0 * (ell - lp) * M1 + 2.0 * lp * m1
        return s_neg, s_pos

    lp = ell / 8.0 if ell_prime is None else ell_prime
    for _ in range(60):
        s_neg, s_pos = sides(lp)
        if s_neg <= margin * lim_neg and s_pos >= margin * lim_pos:
            break
        if ell_prime is not None:
            raise TuningFailure("supplied ell_prime violates the two-sided bracket")
        lp *= 0.5
    else:
        raise TuningFailure("no admissible ell_prime found")

    # traversal order of the sub-plateau levels inside an ascending window
    lv = sorted([(p_min, "min"), (p_max, "max")])

    def assemble(a):
        d = {"min": (ell - lp) * (1.0 - a), "max": (ell - lp) * a}
        levels = [(val, d[tag]) for val, tag in lv]
        seq = [p1] + [val for val, _ in levels] + [p2]
        n_ramps = sum(1 for u, v in zip(seq[:-1], seq[1:]) if u != v)
        ramp_w = lp / n_ramps if n_ramps else 0.0
        segs = [Segment(0.0, L - ell, p1, p1)]
        w1, x_end = _window_segments(L - ell, True, p1, p2, levels, ramp_w)
        segs += w1
        if abs(x_end - L) > 1e-12:
            raise AssertionError("transition window does not close")
        segs.append(Segment(L, 1.0 - ell, p2, p2))
        w2, x_end = _window_segments(1.0 - ell, False, p1, p2, levels, ramp_w)
        segs += w2
        if abs(x_end - 1.0) > 1e-12:
            raise AssertionError("second window does not close")
        return ProfileSpec(p1=p1, p2=p2, L=L, ell=ell, ell_prime=lp, a=a,
                           p_min=p_min, p_max=p_max,
                           segments=tuple(_snap_segments(segs)))

    def slope_integral(a):
        return assemble(a).integral_of(G.d1)

    i0 = slope_integral(0.0)
    i1 = slope_integral(1.0)
    if not (i0 < 0.0 < i1):
        raise TuningFailure(f"mix endpoints do not bracket zero: {i0:g}, {i1:g}")
    # the integral is affine in the mix parameter: plateau durations are linear
    # in a and every ramp contribution is translation invariant
    a_star = -i0 / (i1 - i0)
    prof = assemble(a_star)
    resid = prof.integral_of(G.d1)
    slope = i1 - i0
    for _ in range(4):
        if abs(resid) <= 1e-13 * max(1.0, abs(i0), abs(i1)):
            break
        a_star -= resid / slope
        prof = assemble(min(max(a_star, 0.0), 1.0))
        resid = prof.integral_of(G.d1)
    return prof


def synthesize_potential(G: Hamiltonian1D, profile: ProfileSpec):
    """Potential V = -f' - G(f) making the profile an exact zero-level
    corrector; returns (V, theta0) with theta0 the exact profile mean."""
    theta0 = profile.mean()

    def ev(x):
        return -(profile.d1(x) + np.asarray(G.eval(profile.eval(x)), dtype=float))

    mean = -profile.integral_of(G.eval)
    knots = tuple(b for b in profile.breakpoints[1:-1])
    # Lipschitz constant and sup from dense per-segment sampling
    sup_abs = 0.0
    lip = 0.0
    for s in profile.segments:
        xs = np.linspace(s.x0, s.x1, 257)
        f = profile.eval(xs)
        fp = profile.d1(xs)
        fpp = profile.d2(xs)
        vv = -(fp + np.asarray(G.eval(f), dtype=float))
        sup_abs = max(sup_abs, float(np.max(np.abs(vv))))
        vp = -(fpp + np.asarray(G.d1(f), dtype=float) * fp)
        lip = max(lip, float(np.max(np.abs(vp))))
    digest = hashlib.sha256(
        repr((G.fingerprint, profile.params_dict())).encode()).hexdigest()[:16]
    hard = tuple((s.x0, s.x1, _ramp_steps(G, profile, s))
                 for s in profile.segments if not s.is_plateau)
    V = PeriodicPotential(
        label=f"synth({G.label})", eval=ev, lipschitz_const=lip,
        sup_abs=sup_abs, mean=mean, knots=knots, hard_pieces=hard,
        fingerprint=f"synth:{digest}")
    return V, theta0


def _ramp_steps(G, profile, seg, tol: float = 1e-12, n_ref: int = 8193):
    """Substep count making composite-Simpson integrals of G'(f) and G(f)
    over the ramp accurate to ``tol``; G' composed with a steep ramp can have
    features much narrower than the ramp itself."""
    from scipy.integrate import simpson

    x_ref = np.linspace(seg.x0, seg.x1, n_ref)
    f_ref = profile.eval(x_ref)
    refs = [float(simpson(np.asarray(fn(f_ref), dtype=float), x=x_ref))
            for fn in (G.d1, G.eval)]
    n = 384
    while n < n_ref // 2:
        xs = np.linspace(seg.x0, seg.x1, n + 1)
        fs = profile.eval(xs)
        errs = [abs(float(simpson(np.asarray(fn(fs), dtype=float), x=xs)) - ref)
                for fn, ref in zip((G.d1, G.eval), refs)]
        if max(errs) <= tol:
            return n
        n *= 2
    return n


@dataclass(frozen=True)
class CounterexampleBundle:
    """A Hamiltonian/potential pair whose effective Hamiltonian has an interior
    bump at theta0, plus the constants used to build it."""

    G: Hamiltonian1D
    V: PeriodicPotential
    theta0: float
    profile: ProfileSpec
    K1: float
    K2: float
    regime: str
    reflected: bool


def build_counterexample(G: Hamiltonian1D, p1: float, p2: float) -> CounterexampleBundle:
    """Full synthesis for (G, p1, p2); applies the momentum/space reflection
    automatically when only the reflected form of the hypotheses holds."""
    hyp = slope_curvature_hypotheses(G, p1, p2)
    if not hyp.slope_ok:
        raise HypothesisViolation("need G'(p1) < 0 < G'(p2)")
    if hyp.direct:
        work_G, w1, w2, reflected = G, p1, p2, False
    elif hyp.reflected:
        work_G, w1, w2, reflected = reflect(G), -p2, -p1, True
    else:
        raise HypothesisViolation("slope/curvature chain fails in both orientations")
    ell, regime = select_ell(work_G, w1, w2)
    prof_w = build_profile(work_G, w1, w2, ell)
    if reflected:
        profile = prof_w.reflect()
    else:
        profile = prof_w
    V, theta0 = synthesize_potential(G, profile)
    k1 = max_abs_on(G.d1, p1, p2)
    k2 = max_abs_on(G.d2, p1, p2)
    return CounterexampleBundle(G=G, V=V, theta0=theta0, profile=profile,
                                K1=k1, K2=k2, regime=regime, reflected=reflected)

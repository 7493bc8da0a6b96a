"""Cusp profiles with a logarithmic modulus of continuity and the domains they bound.

The canonical profile is ``g(r) = A |log|r||^(-alpha)`` on ``0 < |r| <= 1/2``
with ``g(0) = 0``. Its inverse half-width is ``r(y) = exp(-(A/y)^(1/alpha))``,
so a channel bounded by it pinches exponentially fast.

A :class:`CuspDomain` is either the region below the graph (``side="below"``)
or the horn above it (``side="above"``), cut at a height ``height``. The horn
is the exterior cusp proper; the region below a profile that touches zero at
the tip falls apart into two lobes once the tip is truncated.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

BASE = (-0.5, 0.5)
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


class DomainError(ValueError):
    pass


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CuspProfile:
    """Boundary graph over the base interval (-1/2, 1/2).

    ``kind`` is ``"canonical"``, ``"constant"`` or ``"function"``; for the last
    one ``func`` must be a vectorized callable on [-1/2, 1/2].
    """

    A: float = 1.0
    alpha: float = 2.0
    kind: str = "canonical"
    value: float = 1.0
    func: Callable | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("canonical", "constant", "function"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "canonical" and not (self.A > 0 and self.alpha > 0):
            raise ValueError("canonical profile needs A > 0 and alpha > 0")
        if self.kind == "function" and self.func is None:
            raise ValueError("function profile needs func")

    @classmethod
    def canonical(cls, A: float = 1.0, alpha: float = 2.0) -> "CuspProfile":
        return cls(A=A, alpha=alpha)

    @classmethod
    def constant(cls, value: float = 1.0) -> "CuspProfile":
        return cls(A=0.0, alpha=1.0, kind="constant", value=value)

    @classmethod
    def from_function(cls, func: Callable, label: str = "", A: float = 1.0, alpha: float = 1.0) -> "CuspProfile":
        return cls(A=A, alpha=alpha, kind="function", func=func, label=label)

    @classmethod
    def from_samples(cls, xs, ys, label: str = "sampled") -> "CuspProfile":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        return cls.from_function(lambda r: np.interp(r, xs, ys), label=label)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.full_like(r, self.value)
        if self.kind == "function":
            return np.asarray(self.func(r), dtype=float)
        a = np.abs(r)
        with np.errstate(divide="ignore"):
            la = np.abs(np.log(a))
        out = self.A * la ** (-self.alpha)
        return np.where(a == 0, 0.0, out)

    def half_width(self, y):
        """Inverse of the canonical profile: r(y) = exp(-(A/y)^(1/alpha))."""
        if self.kind != "canonical":
            raise NotImplementedError("half_width is defined for the canonical profile only")
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(y > 0, np.exp(-((self.A / y) ** (1.0 / self.alpha))), 0.0)

    def height_for_half_width(self, r):
        return self(r)

    def digest(self) -> str:
        if self.kind == "function":
            probe = self(np.linspace(*BASE, 257))
            body = probe.tobytes()
        else:
            body = repr((self.kind, self.A, self.alpha, self.value)).encode()
        return hashlib.sha256(body).hexdigest()[:16]


def profile_eval(p: CuspProfile, r: float) -> float:
    if abs(r) > 0.5:
        raise DomainError(f"|r|={abs(r)} exceeds 1/2")
    return float(p(r))


@dataclass(frozen=True)
class ModulusReport:
    A_eff: float
    worst_pair: tuple[float, float]
    band_scales: np.ndarray
    band_maxima: np.ndarray
    n_pairs: int
    n_skipped: int
    passed: bool
    reason: str


def _sharpest_point(p: CuspProfile, n: int = 20001) -> float:
    """Locate the point where the profile changes fastest by bisection on a grid."""
    x = np.linspace(*BASE, n)
    gx = p(x)
    i = int(np.argmax(np.abs(np.diff(gx))))
    lo, hi = x[i], x[i + 1]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if abs(p(mid) - p(lo)) >= abs(p(hi) - p(mid)):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def modulus_check(p: CuspProfile, n_pairs: int = 10_000, seed: int = 0, min_growth_slope: float = 0.5) -> ModulusReport:
    """Sampled estimate of sup |g(x)-g(y)| |log|x-y||^alpha over pairs in B.

    Pairs mix uniform draws, draws log-uniform near the tip and draws
    straddling the point of fastest change at separations 10^-U(0,12). The
    maxima per decade of separation expose a jump: they keep growing as the
    separation shrinks.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    m = n_pairs // 3
    c = _sharpest_point(p)
    x1 = rng.uniform(*BASE, n_pairs - 2 * m)
    y1 = rng.uniform(*BASE, n_pairs - 2 * m)
    sgn = rng.choice([-1.0, 1.0], m)
    x2 = sgn * 10.0 ** rng.uniform(-12, math.log10(0.5), m)
    y2 = x2 + rng.choice([-1.0, 1.0], m) * 10.0 ** rng.uniform(-12, 0, m)
    d3 = 10.0 ** rng.uniform(-12, 0, m)
    t3 = rng.uniform(0, 1, m)
    x3 = c - t3 * d3
    y3 = c + (1 - t3) * d3
    xs = np.clip(np.concatenate([x1, x2, x3]), *BASE)
    ys = np.clip(np.concatenate([y1, y2, y3]), *BASE)
    delta = np.abs(xs - ys)
    ok = (delta > 0) & (delta < 1)
    skipped = int(np.sum(~ok))
    xs, ys, delta = xs[ok], ys[ok], delta[ok]
    ratio = np.abs(p(xs) - p(ys)) * np.abs(np.log(delta)) ** p.alpha
    if not np.all(np.isfinite(ratio)):
        return ModulusReport(math.inf, (math.nan, math.nan), np.array([]), np.array([]), n_pairs, skipped, False, "non-finite ratio")
    k = int(np.argmax(ratio)) if len(ratio) else 0
    A_eff = float(ratio[k]) if len(ratio) else 0.0
    worst = (float(xs[k]), float(ys[k])) if len(ratio) else (math.nan, math.nan)

    edges = np.arange(0, -13, -1)
    scales, maxima = [], []
    lg = np.log10(delta)
    for hi, lo in zip(edges[:-1], edges[1:]):
        sel = (lg < hi) & (lg >= lo)
        if np.any(sel):
            scales.append(10.0 ** hi)
            maxima.append(float(ratio[sel].max()))
    maxima = np.asarray(maxima)
    passed, reason = True, "A_eff finite"
    # a bounded modulus gives band maxima that stop growing; a jump makes them
    # scale like |log delta|^alpha, i.e. slope ~ alpha in log-log coordinates
    small = (np.asarray(scales) <= 1e-5) & (maxima > 0)
    if np.sum(small) >= 4:
        xl = np.log(np.abs(np.log(np.asarray(scales)[small])))
        slope = np.polyfit(xl, np.log(maxima[small]), 1)[0]
        if slope > min_growth_slope * p.alpha:
            passed, reason = False, f"band maxima grow like |log delta|^{slope:.2f} at small separations"
    return ModulusReport(A_eff, worst, np.asarray(scales), maxima, n_pairs, skipped, passed, reason)


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CuspDomain:
    """Region bounded by a profile over B = (-1/2, 1/2).

    ``side="below"``: {x' in B, 0 < y < g(x')}, with the part where
    g(x') < w_min removed. ``side="above"``: the horn {x' in B, g(x') < y < H}
    with the part where the channel is narrower than ``w_min`` removed.
    """

    profile: CuspProfile
    w_min: float = 1e-4
    side: str = "below"
    height: float | None = None
    base: tuple[float, float] = BASE
    n_uniform: int = 4001
    tip_step: float = 0.02
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.side not in ("below", "above"):
            raise ValueError("side must be 'below' or 'above'")
        if not self.w_min > 0:
            raise ValueError("w_min must be positive")
        if self.side == "above":
            if self.profile.kind != "canonical":
                raise ValueError("the horn needs the canonical profile")
            H = self.height if self.height is not None else min(self.profile.A, float(self.profile(0.5)))
            if H > float(self.profile(0.5)) + 1e-15:
                raise ValueError("horn height exceeds the profile over B")
            object.__setattr__(self, "height", float(H))

    # -- scalar geometry ---------------------------------------------------

    @property
    def y_cut(self) -> float:
        """Lowest retained height of the horn (channel width equals w_min there)."""
        if self.side != "above":
            return 0.0
        p = self.profile
        lg = math.log(2.0 / self.w_min)
        if lg <= 0:
            return math.inf
        return p.A / lg**p.alpha

    @property
    def x_cut(self) -> float:
        """Half-width of the removed tip strip of the below-side domain."""
        if self.side != "below" or self.profile.kind != "canonical":
            return 0.0
        return float(self.profile.half_width(self.w_min))

    def area(self, truncated: bool = True) -> float:
        from .linalg import adaptive_quad

        p = self.profile
        if self.side == "above":
            lo = self.y_cut if truncated else 0.0
            return adaptive_quad(lambda y: 2 * p.half_width(y), lo, self.height, tol=1e-13).value
        if p.kind == "constant":
            return (self.base[1] - self.base[0]) * p.value if (not truncated or p.value >= self.w_min) else 0.0
        lo = self.x_cut if truncated else 0.0
        f = lambda r: p(r)
        return adaptive_quad(f, lo, self.base[1], tol=1e-13).value + adaptive_quad(
            lambda r: p(-r), lo, -self.base[0], tol=1e-13
        ).value

    def contains(self, pts, truncated: bool = False) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inb = (x > self.base[0]) & (x < self.base[1])
        gx = self.profile(np.clip(x, *self.base))
        if self.side == "below":
            ok = inb & (y > 0) & (y < gx)
            if truncated:
                ok &= gx >= self.w_min
        else:
            ok = inb & (y > gx) & (y < self.height)
            if truncated:
                ok &= y > self.y_cut
        return ok

    def digest(self) -> str:
        body = repr((self.profile.digest(), self.w_min, self.side, self.height, self.base)).encode()
        return hashlib.sha256(body).hexdigest()[:16]

    # -- boundary polyline -------------------------------------------------

    def graph_polyline(self) -> tuple[np.ndarray, np.ndarray]:
        """Densely sampled graph with generating abscissae, refined geometrically at the tip."""
        if "graph" in self._cache:
            return self._cache["graph"]
        a, b = self.base
        s = np.linspace(a, b, self.n_uniform)
        if self.profile.kind == "canonical":
            t = np.arange(-math.log(0.5), 690.0, self.tip_step)
            tip = np.exp(-t)
            s = np.unique(np.concatenate([s, tip, -tip, [0.0]]))
            if self.side == "above":
                # only the part of the graph below the lid bounds the horn
                rH = float(self.profile.half_width(self.height))
                s = np.unique(np.concatenate([s[np.abs(s) <= rH], [-rH, rH]]))
        pts = np.column_stack([s, self.profile(s)])
        self._cache["graph"] = (pts, s)
        return pts, s

    def straight_segments(self) -> np.ndarray:
        """Non-graph parts of the boundary as an (m, 2, 2) array of segments."""
        a, b = self.base
        if self.side == "below":
            ga, gb = float(self.profile(a)), float(self.profile(b))
            return np.array([[[a, 0.0], [b, 0.0]], [[a, 0.0], [a, ga]], [[b, 0.0], [b, gb]]])
        rH = float(self.profile.half_width(self.height))
        return np.array([[[-rH, self.height], [rH, self.height]]])

    def boundary_polyline(self) -> np.ndarray:
        pts, _ = self.graph_polyline()
        if self.side == "below":
            a, b = self.base
            return np.vstack([pts, [[b, 0.0], [a, 0.0], pts[:1]]])
        return np.vstack([pts, pts[:1]])

    def export_polyline(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for x, y in self.boundary_polyline():
                w.writerow([repr(float(x)), repr(float(y))])

    def _tree(self):
        if "tree" not in self._cache:
            pts, _ = self.graph_polyline()
            self._cache["tree"] = cKDTree(pts)
        return self._cache["tree"]


def _segment_distance(P, S0, S1):
    d = S1 - S0
    L2 = np.einsum("...i,...i->...", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, np.einsum("...i,...i->...", P - S0, d) / L2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    Q = S0 + t[..., None] * d
    return np.linalg.norm(P - Q, axis=-1)


def _graph_distance(dom: CuspDomain, P: np.ndarray, k: int = 8, iters: int = 60) -> np.ndarray:
    pts, s = dom.graph_polyline()
    tree = dom._tree()
    n = len(pts)
    _, idx = tree.query(P, k=min(k, n))
    idx = np.atleast_2d(idx)
    # candidate segments: both neighbours of each near vertex
    seg = np.concatenate([np.clip(idx - 1, 0, n - 2), np.clip(idx, 0, n - 2)], axis=1)
    dpoly = _segment_distance(P[:, None, :], pts[seg], pts[seg + 1])
    order = np.argsort(dpoly, axis=1)[:, :2]
    best_seg = np.take_along_axis(seg, order, axis=1)
    prof = dom.profile

    s0, s1 = s[best_seg], s[best_seg + 1]
    geo = (s0 * s1 > 0) & (s0 != 0)

    def curve(tau):
        with np.errstate(divide="ignore", invalid="ignore"):
            sg = np.where(geo, np.sign(s0) * np.abs(s0) ** (1 - tau) * np.abs(s1) ** tau, s0 + tau * (s1 - s0))
        return sg, prof(sg)

    def dist2(tau):
        sx, sy = curve(tau)
        return (sx - P[:, None, 0]) ** 2 + (sy - P[:, None, 1]) ** 2

    lo = np.zeros(s0.shape)
    hi = np.ones(s0.shape)
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = dist2(c), dist2(d)
    for _ in range(iters):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c_new = hi - _GOLDEN * (hi - lo)
        d_new = lo + _GOLDEN * (hi - lo)
        c, d = np.where(left, c_new, d), np.where(left, c, d_new)
        f_new = dist2(np.where(left, c, d))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
    best = np.minimum(np.minimum(fc, fd), np.minimum(dist2(np.zeros_like(lo)), dist2(np.ones_like(lo))))
    return np.sqrt(best.min(axis=1))


def boundary_distance(dom: CuspDomain, x, part: str = "all", check: bool = True):
    """Euclidean distance to the boundary (``part="all"``) or to the graph only (``part="graph"``).

    The graph polyline only selects candidate segments; the minimum is then
    refined on the true curve by golden-section search.
    """
    P = np.atleast_2d(np.asarray(x, dtype=float))
    if check and not np.all(dom.contains(P)):
        raise DomainError("point outside the domain")
    d = _graph_distance(dom, P)
    if part == "all":
        segs = dom.straight_segments()
        ds = _segment_distance(P[:, None, :], segs[None, :, 0, :], segs[None, :, 1, :]).min(axis=1)
        d = np.minimum(d, ds)
    elif part != "graph":
        raise ValueError("part must be 'all' or 'graph'")
    return float(d[0]) if np.ndim(x) == 1 else d


def vertical_gap(dom: CuspDomain, x, check: bool = True):
    """e(x): distance from x to the graph straight up (below side) or straight down (horn)."""
    P = np.atleast_2d(np.asarray(x, dtype=float))
    if check and not np.all(dom.contains(P)):
        raise DomainError("point outside the domain (or on its boundary)")
    g = dom.profile(P[:, 0])
    e = g - P[:, 1] if dom.side == "below" else P[:, 1] - g
    return float(e[0]) if np.ndim(x) == 1 else e


# --------------------------------------------------------------------------
# distance bounds near the graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceSample:
    point: tuple[float, float]
    e_val: float
    d_gamma: float
    lower_printed: float
    lower_repaired: float


def lower_bound_printed(e, A: float, alpha: float):
    return np.exp(-np.asarray(e, dtype=float) ** (-1.0 / alpha) / (1.0 + A))


def lower_bound_repaired(e, A: float, alpha: float):
    return np.exp(-(((1.0 + A) / np.asarray(e, dtype=float)) ** (1.0 / alpha)))


@dataclass
class DistanceBoundReport:
    samples: list[DistanceSample]
    A_eff: float
    upper_violations: int
    printed_violations: int
    printed_inconsistent: int
    repaired_violations: int
    min_margin_repaired: float

    @property
    def passed(self) -> bool:
        return self.upper_violations == 0 and self.repaired_violations == 0

    def as_arrays(self) -> dict:
        return {
            "x": np.array([s.point[0] for s in self.samples]),
            "y": np.array([s.point[1] for s in self.samples]),
            "e": np.array([s.e_val for s in self.samples]),
            "d_gamma": np.array([s.d_gamma for s in self.samples]),
            "lower_printed": np.array([s.lower_printed for s in self.samples]),
            "lower_repaired": np.array([s.lower_repaired for s in self.samples]),
        }


def sample_near_graph(dom: CuspDomain, n: int, e_max: float = 1e-2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Interior points with vertical gap in (0, e_max], half of them close to the tip."""
    rng = np.random.default_rng(seed)
    pts, gaps = [], []
    need = n
    while need > 0:
        m = 2 * need + 16
        half = m // 2
        xs = np.concatenate(
            [rng.uniform(*dom.base, m - half), rng.choice([-1.0, 1.0], half) * 10.0 ** rng.uniform(-12, math.log10(0.5), half)]
        )
        xs = xs[(xs > dom.base[0]) & (xs < dom.base[1]) & (xs != 0)]
        e = e_max * np.where(rng.uniform(size=len(xs)) < 0.5, rng.uniform(size=len(xs)), 10.0 ** rng.uniform(-6, 0, len(xs)))
        g = dom.profile(xs)
        y = g - e if dom.side == "below" else g + e
        P = np.column_stack([xs, y])
        ok = dom.contains(P) & (e > 0)
        P, e = P[ok][:need], e[ok][:need]
        pts.append(P)
        gaps.append(e)
        need -= len(P)
    return np.vstack(pts), np.concatenate(gaps)


def lemma_ed_check(dom: CuspDomain, samples: int = 10_000, e_max: float = 1e-2, seed: int = 0, A_eff: float | None = None) -> DistanceBoundReport:
    """Compare d_Gamma(x) with e(x) and with both lower bounds.

    Gamma is the graph of the profile. ``A_eff`` defaults to the sampled
    modulus constant of the profile.
    """
    p = dom.profile
    if A_eff is None:
        A_eff = modulus_check(p, 10_000, seed=seed).A_eff
    P, e = sample_near_graph(dom, samples, e_max, seed)
    e = vertical_gap(dom, P, check=False)
    d = boundary_distance(dom, P, part="graph", check=False)
    lp = lower_bound_printed(e, A_eff, p.alpha)
    lr = lower_bound_repaired(e, A_eff, p.alpha)
    out = [DistanceSample((float(a), float(b)), float(ee), float(dd), float(x), float(y)) for (a, b), ee, dd, x, y in zip(P, e, d, lp, lr)]
    with np.errstate(divide="ignore"):
        margin = float(np.min(np.log(d) - np.log(lr)))
    return DistanceBoundReport(
        samples=out,
        A_eff=float(A_eff),
        upper_violations=int(np.sum(~((d > 0) & (d <= e * (1 + 1e-12))))),
        printed_violations=int(np.sum(d < lp)),
        printed_inconsistent=int(np.sum(lp > e)),
        repaired_violations=int(np.sum(d < lr)),
        min_margin_repaired=margin,
    )

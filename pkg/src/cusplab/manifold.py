"""Rotationally invariant cusp manifold with metric g(u)(du^2 + dtheta^2).

``g(u) = u^-2 (log u)^-alpha`` on ``u >= u_min = 2 pi``. Distances integrate
``g^(1/2) du``, areas ``g du dtheta``, and angular mode ``n`` of the Laplacian
reduces to ``-f'' + n^2 f = lam g f``. The radial problem is discretized with
P1 elements on a grid uniform in ``v = log u``, where

    A = int e^-v h'^2 dv + n^2 int e^v h^2 dv,    B = int w(e^v) e^v h^2 dv

and ``w`` defaults to ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate as si
import scipy.sparse as sp

from .linalg import EigenPairSet, SparseSymmetricForm, adaptive_quad, rayleigh_min, solve_generalized

U_MIN = 2.0 * math.pi
POINTS_PER_DECADE = 2000


class ManifoldDomainError(ValueError):
    pass


def metric_eval(alpha: float, u):
    """g(u) = u^-2 (log u)^-alpha."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 1):
        raise ManifoldDomainError("metric needs u > 1")
    out = u_arr**-2 * np.log(u_arr) ** (-alpha)
    return float(out) if np.ndim(u) == 0 else out


def metric_derivative(alpha: float, u):
    u = np.asarray(u, dtype=float)
    lu = np.log(u)
    return -(u**-3) * lu ** (-alpha) * (2.0 + alpha / lu)


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------


def cusp_distance(alpha: float, u0: float, check: bool = True) -> float:
    """Distance from the circle u = u0 to the cusp: (2/(alpha-2)) (log u0)^(1-alpha/2)."""
    if not alpha > 2:
        raise ManifoldDomainError("alpha <= 2: the manifold is unbounded")
    if not u0 > 1:
        raise ManifoldDomainError("u0 must exceed 1")
    closed = 2.0 / (alpha - 2.0) * math.log(u0) ** (1.0 - alpha / 2.0)
    if check:
        # with v = log u the integrand is v^(-alpha/2); it decays too slowly to stop at u = e^700
        q = adaptive_quad(lambda v: v ** (-alpha / 2.0), math.log(u0), math.inf, tol=1e-15, rtol=1e-13).value
        if abs(q - closed) > 1e-8 * closed:
            raise ArithmeticError(f"closed form {closed!r} disagrees with quadrature {q!r}")
    return closed


def eta_of_eps(alpha: float, eps: float) -> float:
    """log of eta(eps); the circle u = eta(eps) lies at distance eps from the cusp."""
    kappa = (alpha - 2.0) / 2.0
    return (kappa * eps) ** (-1.0 / kappa)


@dataclass(frozen=True)
class BallVolume:
    alpha: float
    eps: float
    log_eta: float
    quad_value: float
    quad_error: float
    second_value: float
    printed_asymptotic: float
    derived_asymptotic: float

    @property
    def cross_rel_diff(self) -> float:
        return abs(self.quad_value - self.second_value) / abs(self.second_value)

    @property
    def ratio_derived(self) -> float:
        return self.quad_value / self.derived_asymptotic

    @property
    def ratio_printed(self) -> float:
        return self.quad_value / self.printed_asymptotic


def ball_volume(alpha: float, eps: float) -> BallVolume:
    """Area of the ball of radius eps about the cusp, with two asymptotic forms.

    ``quad_value`` integrates ``2 pi g(u)`` over ``u > eta(eps)`` with
    :func:`adaptive_quad`; ``second_value`` integrates ``2 pi e^-v v^-alpha``
    over ``v > log eta`` with QUADPACK. ``printed_asymptotic`` is a closed form
    in eps without the angular factor, ``derived_asymptotic`` is
    ``2 pi (log eta)^-alpha / eta``.
    """
    if not alpha > 2:
        raise ManifoldDomainError("alpha <= 2: no ball about the cusp")
    if not 0 < eps < cusp_distance(alpha, U_MIN, check=False):
        raise ManifoldDomainError("eps must lie below the distance from u_min to the cusp")
    kappa = (alpha - 2.0) / 2.0
    a = eta_of_eps(alpha, eps)
    scale = math.exp(-a) * a ** (-alpha)
    # integrands are divided by scale so that the tolerances act relatively
    if a < 700:
        res = adaptive_quad(lambda u: 2 * math.pi * metric_eval(alpha, u) / scale, math.exp(a), math.inf, tol=1e-13, rtol=1e-13)
    else:
        res = adaptive_quad(lambda v: 2 * math.pi * np.exp(-(v - a)) * (v / a) ** (-alpha) * a ** (-alpha) / scale, a, math.inf, tol=1e-13, rtol=1e-13)
    second, _ = si.quad(lambda v: 2 * math.pi * math.exp(-(v - a)) * (v / a) ** (-alpha), a, math.inf, epsabs=0, epsrel=1e-13, limit=200)
    printed = math.exp(-(kappa ** (-1 / kappa)) * eps ** (-1 / kappa)) * (kappa * eps) ** (-1 / kappa)
    mine = 2 * math.pi * scale
    return BallVolume(alpha, eps, a, res.value * scale, res.error_estimate * scale, second * scale, printed, mine)


def embed_r3(alpha: float, u, theta, u_min: float = U_MIN):
    """Point of the surface of revolution: x = g^(1/2) cos theta, y = g^(1/2) sin theta, z(u)."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    g = metric_eval(alpha, u_arr)
    gp = metric_derivative(alpha, u_arr)
    bad = np.abs(gp) >= 2 * g
    if np.any(bad):
        raise ManifoldDomainError(f"embedding condition |g'| < 2g fails at u={float(u_arr[bad][0])!r}")

    def zprime(s):
        gs, gps = metric_eval(alpha, s), metric_derivative(alpha, s)
        return np.sqrt(gs - gps**2 / (4 * gs))

    check_u = np.linspace(u_min, max(u_min, u_arr.max()), 64)
    if np.any(np.abs(metric_derivative(alpha, check_u)) >= 2 * metric_eval(alpha, check_u)):
        raise ManifoldDomainError("embedding condition fails between u_min and u")
    z = np.array([adaptive_quad(zprime, u_min, float(x), tol=1e-12).value for x in u_arr])
    r = np.sqrt(g)
    th = np.broadcast_to(np.asarray(theta, dtype=float), u_arr.shape)
    x, y = r * np.cos(th), r * np.sin(th)
    y = np.where(th == 0, 0.0, y)
    if np.ndim(u) == 0:
        return float(x[0]), float(y[0]), float(z[0])
    return x, y, z


# --------------------------------------------------------------------------
# radial discretization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldModel:
    alpha: float
    n_mode: int = 0
    u_min: float = U_MIN
    bc: str = "neumann"
    U_max: float = 1e5
    N_grid: int | None = None

    def __post_init__(self):
        if self.bc not in ("neumann", "dirichlet"):
            raise ValueError("bc must be 'neumann' or 'dirichlet'")
        if not self.U_max > self.u_min:
            raise ValueError("U_max must exceed u_min")
        if self.N_grid is not None and self.N_grid < 10:
            raise ValueError("N_grid must be at least 10")

    @property
    def n_nodes(self) -> int:
        if self.N_grid is not None:
            return int(self.N_grid)
        decades = math.log10(self.U_max / self.u_min)
        return int(math.ceil(POINTS_PER_DECADE * decades)) + 1


@dataclass
class RadialPencil:
    model: ManifoldModel
    v: np.ndarray
    keep: np.ndarray
    A: SparseSymmetricForm
    B: SparseSymmetricForm

    @property
    def u(self) -> np.ndarray:
        return np.exp(self.v)

    def full(self, vec: np.ndarray) -> np.ndarray:
        """Nodal values on the whole grid, zeros at removed Dirichlet nodes."""
        out = np.zeros(len(self.v))
        out[self.keep] = vec
        return out


_GX, _GW = np.polynomial.legendre.leggauss(3)


def radial_discretize(m: ManifoldModel, weight: Callable | None = None) -> RadialPencil:
    """P1 pencil of -f'' + n^2 f = lam w f on [u_min, U_max], grid uniform in log u.

    ``weight(u)`` defaults to g(u). Neumann at u_min is natural, Dirichlet
    removes the node; u = U_max always carries a Dirichlet condition.
    """
    N = m.n_nodes
    if N < 10:
        raise ValueError("N_grid must be at least 10")
    v0, v1 = math.log(m.u_min), math.log(m.U_max)
    v = np.linspace(v0, v1, N)
    h = np.diff(v)
    xq = v[:-1, None] + h[:, None] * (_GX + 1) / 2
    wq = _GW[None, :] * h[:, None] / 2
    p1 = (_GX + 1) / 2
    p0 = 1 - p1
    uq = np.exp(xq)
    if weight is None:
        wB = np.exp(-xq) * xq ** (-m.alpha)
    else:
        wB = np.asarray(weight(uq), dtype=float) * uq
    kst = (np.exp(-xq) * wq).sum(1) / h**2
    n2 = m.n_mode**2
    rows, cols, va, vb = [], [], [], []
    for i, pi_ in ((0, p0), (1, p1)):
        for j, pj in ((0, p0), (1, p1)):
            sign = 1.0 if i == j else -1.0
            rows.append(np.arange(N - 1) + i)
            cols.append(np.arange(N - 1) + j)
            va.append(sign * kst + n2 * (uq * pi_ * pj * wq).sum(1))
            vb.append((wB * pi_ * pj * wq).sum(1))
    r, c = np.concatenate(rows), np.concatenate(cols)
    A = sp.csr_matrix((np.concatenate(va), (r, c)), shape=(N, N))
    B = sp.csr_matrix((np.concatenate(vb), (r, c)), shape=(N, N))
    start = 1 if m.bc == "dirichlet" else 0
    keep = np.arange(start, N - 1)
    return RadialPencil(m, v, keep, SparseSymmetricForm(A).restricted(keep), SparseSymmetricForm(B).restricted(keep))


def radial_eigen(m: ManifoldModel, k: int = 5, tol: float = 1e-8, seed: int = 0) -> tuple[RadialPencil, EigenPairSet]:
    pen = radial_discretize(m)
    pairs = solve_generalized(pen.A, pen.B, k, tol, seed=seed)
    pairs.meta["grid_hash"] = f"{m.alpha}:{m.n_mode}:{m.bc}:{m.U_max}:{len(pen.v)}"
    return pen, pairs


# --------------------------------------------------------------------------
# endpoint classification
# --------------------------------------------------------------------------


def log_integral(logf: Callable, a: float, b: float, rtol: float = 1e-10) -> float:
    """log of int_a^b exp(logf(v)) dv for integrands far outside floating range.

    The integrand is scaled by its maximum on a dense grid and integrated over
    pieces that shrink geometrically toward the maximizer.
    """
    grid = np.linspace(a, b, 4001)
    L = logf(grid)
    i = int(np.argmax(L))
    vstar, Lmax = grid[i], float(L[i])
    # refine the maximizer within its grid cell
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    fine = np.linspace(lo, hi, 2001)
    Lf = logf(fine)
    j = int(np.argmax(Lf))
    vstar, Lmax = float(fine[j]), max(Lmax, float(Lf[j]))
    offs = (b - a) * 2.0 ** -np.arange(0, 60)
    pts = np.unique(np.clip(np.concatenate([[a, b, vstar], vstar - offs, vstar + offs]), a, b))
    total = 0.0
    f = lambda x: np.exp(logf(x) - Lmax)
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            total += adaptive_quad(f, lo, hi, tol=1e-18 * (hi - lo), rtol=rtol, max_intervals=2000).value
    return Lmax + math.log(total)


@dataclass
class EndpointReport:
    alpha: float
    n_mode: int
    U_list: list
    log_norms: dict
    verdicts: dict
    expected: dict

    @property
    def matches(self) -> bool:
        return all(self.verdicts[k] == self.expected[k] for k in self.expected)


def _candidates(n: int) -> dict:
    """log|phi| as a function of u for the lambda = 0 solutions of mode n."""
    if n == 0:
        return {"phi1": lambda u: np.zeros_like(u), "phi2": lambda u: np.log(u)}
    return {"psi1": lambda u: -n * u, "psi2": lambda u: n * u}


EXPECTED = {"phi1": "in_L2", "phi2": "not_in_L2", "psi1": "in_L2", "psi2": "not_in_L2"}


def endpoint_classify(
    alpha: float,
    n_mode: int = 0,
    U_list: Sequence[float] = (1e3, 1e4, 1e5, 1e6),
    u_min: float = U_MIN,
    conv_rtol: float = 0.01,
    div_factor: float = 2.0,
) -> EndpointReport:
    """Truncated weighted norms int_{u_min}^U |phi|^2 g du of the lambda = 0 solutions.

    A candidate is ``in_L2`` when the norm changes by less than ``conv_rtol``
    over the last decade of U, ``not_in_L2`` when it grows by more than
    ``div_factor``. Integration runs in log space so e^(nu) cannot overflow.
    """
    cands = _candidates(n_mode)
    log_norms, verdicts = {}, {}
    for name, logphi in cands.items():
        # v = log u, du = e^v dv
        logf = lambda v, lp=logphi: 2 * lp(np.exp(v)) - 2 * v - alpha * np.log(v) + v
        vals = [log_integral(logf, math.log(u_min), math.log(U)) for U in U_list]
        log_norms[name] = vals
        growth = vals[-1] - vals[-2]
        if abs(growth) < 1 and abs(math.expm1(growth)) < conv_rtol:
            verdicts[name] = "in_L2"
        elif growth > math.log(div_factor):
            verdicts[name] = "not_in_L2"
        else:
            verdicts[name] = "undetermined"
    return EndpointReport(alpha, n_mode, list(U_list), log_norms, verdicts, {k: EXPECTED[k] for k in cands})


# --------------------------------------------------------------------------
# form bound (log u)^alpha <= c H
# --------------------------------------------------------------------------


def hardy_weight(alpha: float) -> Callable:
    """(log u)^alpha g(u) = u^-2."""
    return lambda u: np.asarray(u, dtype=float) ** -2


def hardy_manifold_constant(m: ManifoldModel, tol: float = 1e-8) -> float:
    """inf over the radial sector of Q(f) / int (log u)^alpha f^2 g du."""
    if m.n_mode != 0:
        raise ValueError("the radial sector n_mode = 0 suffices")
    pen = radial_discretize(m, weight=hardy_weight(m.alpha))
    return rayleigh_min(pen.A, pen.B, tol)


def hardy_sweep(alpha: float, U_list: Sequence[float], bc: str = "neumann", N_grid: int | None = None, tol: float = 1e-8) -> list[float]:
    return [hardy_manifold_constant(ManifoldModel(alpha, 0, bc=bc, U_max=U, N_grid=N_grid), tol) for U in U_list]


def trial_vector_quotient(alpha: float, U_max: float, u_min: float = U_MIN) -> float:
    """Rayleigh quotient of phi(u) = u^(1/2) - 2 u_min^(1/4) u^(1/4) on [u_min, U_max].

    phi'(u_min) = 0, so phi respects the Neumann condition.
    """
    c = 2 * u_min**0.25
    dphi = lambda u: 0.5 * u**-0.5 - 0.25 * c * u**-0.75
    phi = lambda u: u**0.5 - c * u**0.25
    num = adaptive_quad(lambda u: dphi(u) ** 2, u_min, U_max, tol=1e-12, rtol=1e-12).value
    w = hardy_weight(alpha)
    den = adaptive_quad(lambda u: phi(u) ** 2 * w(u), u_min, U_max, tol=1e-12, rtol=1e-12).value
    return num / den


# --------------------------------------------------------------------------
# sup-norm traces
# --------------------------------------------------------------------------


@dataclass
class RadialEigenSolution:
    alpha: float
    U_list: list
    eigenvalues: np.ndarray  # (n_U, k)
    sup_norms: np.ndarray  # (n_U, k) per tracked branch
    branch_index: np.ndarray  # (n_U, k) index of each tracked branch in the solve at that U
    overlaps: np.ndarray  # (n_U, k) overlap with the previous truncation
    lambda_of_interest: int
    fit_slope: float | None = None
    fit_lambda: float | None = None
    transformed_residual: np.ndarray | None = None
    eigenpairs: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)

    @property
    def trace(self) -> np.ndarray:
        return self.sup_norms[:, self.lambda_of_interest]

    @property
    def lam_trace(self) -> np.ndarray:
        return self.eigenvalues[:, self.lambda_of_interest]

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.trace) > 0))

    @property
    def last_rel_change(self) -> float:
        t = self.trace
        return float(abs(t[-1] - t[-2]) / abs(t[-2]))

    @property
    def fit_rel_error(self) -> float | None:
        if self.fit_slope is None:
            return None
        return abs(self.fit_slope - self.fit_lambda) / abs(self.fit_lambda)


def transformed_residual(pen: RadialPencil, lam: float, vec: np.ndarray, alpha: float, trim: float = 0.05) -> float:
    """Relative residual of -k'' + (1/4 - lam v^-alpha) k = 0 for k = e^(-v/2) h, away from the ends."""
    v = pen.v
    h = pen.full(vec)
    k = np.exp(-v / 2) * h
    dv = v[1] - v[0]
    kpp = (k[2:] - 2 * k[1:-1] + k[:-2]) / dv**2
    vi, ki = v[1:-1], k[1:-1]
    res = -kpp + (0.25 - lam * vi ** (-alpha)) * ki
    n = len(vi)
    sl = slice(int(trim * n), int((1 - trim) * n))
    scale = np.abs(0.25 * ki[sl]) + np.abs(lam * vi[sl] ** (-alpha) * ki[sl]) + np.abs(kpp[sl])
    return float(np.max(np.abs(res[sl])) / np.max(scale))


def supnorm_trace(
    alpha: float,
    U_list: Sequence[float] = (1e3, 1e4, 1e5, 1e6),
    k: int = 5,
    mode_index: int = 1,
    points_per_decade: int = POINTS_PER_DECADE,
    tol: float = 1e-8,
    seed: int = 0,
    min_overlap: float = 0.5,
) -> RadialEigenSolution:
    """Eigenvalues and sup |f| / ||f||_{L2(g du)} of the first k radial branches across truncations.

    Branches are followed from one U_max to the next by maximal overlap in the
    weighted inner product after interpolating the previous eigenfunctions onto
    the new grid. For alpha = 1 the slope of log sup|f| against log log U_max
    is fitted and compared with the eigenvalue at the largest U_max.
    """
    if mode_index < 1:
        raise ValueError("mode_index must be >= 1 (index 0 is the near-constant branch)")
    U_list = list(U_list)
    nU = len(U_list)
    lam = np.zeros((nU, k))
    sup = np.zeros((nU, k))
    idx = np.zeros((nU, k), dtype=int)
    ov = np.ones((nU, k))
    resid = np.zeros(nU)
    flags = []
    prev = None
    pairs_all = []
    for a, U in enumerate(U_list):
        decades = math.log10(U / U_MIN)
        m = ManifoldModel(alpha, 0, U_max=U, N_grid=int(math.ceil(points_per_decade * decades)) + 1)
        pen, pairs = radial_eigen(m, k, tol, seed)
        pairs_all.append(pairs)
        V = np.column_stack([pen.full(pairs.vectors[:, i]) for i in range(k)])
        if prev is None:
            perm = np.arange(k)
        else:
            pv, pV = prev
            W = np.column_stack([np.interp(pen.v, pv, pV[:, i], right=0.0) for i in range(k)])
            Bfull = pen.B.matrix
            G = np.abs(W[pen.keep].T @ (Bfull @ V[pen.keep]))  # (old branch, new index)
            perm = np.full(k, -1)
            used = set()
            for i in np.argsort(-G.max(axis=1)):
                for jj in np.argsort(-G[i]):
                    if jj not in used:
                        perm[i] = jj
                        used.add(jj)
                        break
            for i in range(k):
                ov[a, i] = G[i, perm[i]]
                if G[i, perm[i]] < min_overlap:
                    flags.append(f"U={U:g}: branch {i} overlap {G[i, perm[i]]:.3f} below {min_overlap}")
            # keep following branches in their original order
        lam[a] = pairs.eigenvalues[perm]
        sup[a] = pairs.sup_norms[perm]
        idx[a] = perm
        Vs = V[:, perm]
        prev = (pen.v, Vs)
        resid[a] = transformed_residual(pen, lam[a, mode_index], Vs[pen.keep, mode_index], alpha)
    sol = RadialEigenSolution(alpha, U_list, lam, sup, idx, ov, mode_index, transformed_residual=resid, eigenpairs=pairs_all, flags=flags)
    if alpha == 1:
        x = np.log(np.log(np.asarray(U_list)))
        y = np.log(sup[:, mode_index])
        sol.fit_slope = float(np.polyfit(x, y, 1)[0])
        sol.fit_lambda = float(lam[-1, mode_index])
    return sol

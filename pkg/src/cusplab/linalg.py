"""Sparse symmetric pencils, smallest-end eigensolves and adaptive quadrature.

Everything else in the package funnels through three entry points:

* :func:`solve_generalized` -- the ``k`` smallest eigenpairs of ``A v = lam B v``
  by shift-invert Lanczos on the shifted pencil ``(A + sigma B, B)``,
* :func:`rayleigh_min` -- the infimum of ``v'Av / v'Bv``,
* :func:`adaptive_quad` -- globally adaptive Gauss-Kronrod quadrature with a
  logarithmic substitution for half-infinite ranges.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 400
# dense path also taken for large k relative to n, up to this size
DENSE_FULL_LIMIT = 6000


class EigenSolveError(RuntimeError):
    """Raised when the eigensolver cannot meet its residual tolerance."""

    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(f"{message} (best relative residual {best_residual:.3e})")
        self.best_residual = best_residual


class NotPositiveDefiniteError(ValueError):
    pass


class QuadratureError(RuntimeError):
    """Tolerance not met within the evaluation budget; carries the partial estimate."""

    def __init__(self, message: str, partial: "QuadratureResult"):
        super().__init__(f"{message}: value={partial.value!r} err={partial.error_estimate:.3e}")
        self.partial = partial


# --------------------------------------------------------------------------
# forms and eigenpairs
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseSymmetricForm:
    """Symmetric bilinear form on R^n stored as CSR."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"form must be square, got {m.shape}")
        diag = m.diagonal()
        if not np.all(np.isfinite(diag)):
            raise ValueError("form has non-finite diagonal entries")
        asym = abs(m - m.T)
        scale = max(abs(m).max() if m.nnz else 0.0, 1e-300)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise ValueError("form is not symmetric")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_triplets(cls, rows, cols, vals, n: int) -> "SparseSymmetricForm":
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr())

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.matrix @ v))

    def quadratic(self, u) -> float:
        # one pass over the stored entries
        m = self.matrix
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        return float(np.sum(m.data * u[rows] * u[m.indices]))

    def __matmul__(self, v):
        return self.matrix @ v

    def __add__(self, other: "SparseSymmetricForm") -> "SparseSymmetricForm":
        return SparseSymmetricForm(self.matrix + as_form(other).matrix)

    def scaled(self, c: float) -> "SparseSymmetricForm":
        return SparseSymmetricForm(c * self.matrix)

    def restricted(self, keep) -> "SparseSymmetricForm":
        keep = np.asarray(keep)
        return SparseSymmetricForm(self.matrix[keep][:, keep])

    def permuted(self, perm) -> "SparseSymmetricForm":
        perm = np.asarray(perm)
        return SparseSymmetricForm(self.matrix[perm][:, perm])

    def digest(self) -> str:
        m = self.matrix
        h = hashlib.sha256()
        h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
        for arr in (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def as_form(a) -> SparseSymmetricForm:
    if isinstance(a, SparseSymmetricForm):
        return a
    if sp.issparse(a):
        return SparseSymmetricForm(a)
    return SparseSymmetricForm(sp.csr_matrix(np.atleast_2d(np.asarray(a, dtype=float))))


def pencil_digest(A, B, *extra) -> str:
    h = hashlib.sha256()
    h.update(as_form(A).digest().encode())
    h.update(as_form(B).digest().encode())
    for e in extra:
        h.update(repr(e).encode())
    return h.hexdigest()


@dataclass
class EigenPairSet:
    """Ordered eigenvalues with B-orthonormal coefficient vectors (one per column)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray | None
    sup_norms: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.sup_norms = np.asarray(self.sup_norms, dtype=float)
        if self.vectors is not None:
            self.vectors = np.asarray(self.vectors, dtype=float)
            if self.vectors.ndim == 1:
                self.vectors = self.vectors[:, None]
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        if len(self.sup_norms) != len(self.eigenvalues):
            raise ValueError("one sup norm per eigenvalue required")

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def dimension(self) -> int | None:
        """Dimension of the discrete space, when known."""
        if "dimension" in self.meta:
            return int(self.meta["dimension"])
        return None if self.vectors is None else self.vectors.shape[0]

    @property
    def complete(self) -> bool:
        """True when the set holds the whole spectrum of a finite problem."""
        return self.dimension is not None and self.dimension == len(self)

    def residuals(self, A, B) -> np.ndarray:
        A, B = as_form(A).matrix, as_form(B).matrix
        V = self.vectors
        R = A @ V - (B @ V) * self.eigenvalues
        # scaled by (1 + |lam|) so that high modes of a full spectrum are judged fairly
        return np.linalg.norm(R, axis=0) / ((1.0 + np.abs(self.eigenvalues)) * np.linalg.norm(B @ V, axis=0))

    def orthonormality_defect(self, B) -> float:
        V = self.vectors
        G = V.T @ (as_form(B).matrix @ V)
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))

    def head(self, k: int) -> "EigenPairSet":
        vec = None if self.vectors is None else self.vectors[:, :k]
        return EigenPairSet(self.eigenvalues[:k], vec, self.sup_norms[:k], dict(self.meta))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int


# --------------------------------------------------------------------------
# factorization helpers
# --------------------------------------------------------------------------


def _symmetric_lu(M: sp.spmatrix):
    """LU with diagonal pivoting on a symmetric ordering; pivots then give the inertia."""
    lu = spla.splu(
        sp.csc_matrix(M),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    return lu


def _inertia_ok(lu, n: int) -> bool | None:
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    return bool(np.all(lu.U.diagonal() > 0))


def check_positive_definite(B, what: str = "B"):
    """Factorize ``B`` and reject it unless all pivots are positive."""
    Bm = as_form(B).matrix
    n = Bm.shape[0]
    if n <= DENSE_LIMIT:
        try:
            sla.cholesky(Bm.toarray())
        except sla.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"{what} is not positive definite") from exc
        return None
    try:
        lu = _symmetric_lu(Bm)
    except RuntimeError as exc:
        raise NotPositiveDefiniteError(f"{what} is singular") from exc
    ok = _inertia_ok(lu, n)
    if ok is None:
        lam = spla.eigsh(Bm, k=1, which="SA", return_eigenvectors=False)[0]
        ok = lam > 0
    if not ok:
        raise NotPositiveDefiniteError(f"{what} is not positive definite")
    return lu


# --------------------------------------------------------------------------
# eigensolver
# --------------------------------------------------------------------------


def _normalize_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _rayleigh_ritz(A, B, V):
    """B-orthonormalize V and rotate it onto Ritz vectors of the pencil."""
    Ap = V.T @ (A @ V)
    Bp = V.T @ (B @ V)
    Ap = 0.5 * (Ap + Ap.T)
    Bp = 0.5 * (Bp + Bp.T)
    w, Y = sla.eigh(Ap, Bp)
    return w, V @ Y


def solve_generalized(
    A,
    B,
    k: int,
    tol: float = 1e-8,
    *,
    sigma: float = 1.0,
    seed: int = 0,
    max_attempts: int = 3,
    adapt_shift: bool = True,
) -> EigenPairSet:
    """The ``k`` smallest eigenpairs of ``A v = lam B v``.

    ``A`` may be semi-definite; the factorized operator is ``A + sigma*B`` and
    the spectrum is shifted back afterwards. With ``adapt_shift`` the shift is
    lowered when a cheap estimate puts the wanted eigenvalues far below it.
    Every returned pair satisfies ``|Av - lam Bv| <= tol (1 + |lam|) |Bv|``.
    """
    A, B = as_form(A), as_form(B)
    n = A.dimension
    if B.dimension != n:
        raise ValueError("A and B must have the same dimension")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    Am, Bm = A.matrix, B.matrix
    check_positive_definite(Bm)
    shifted = (Am + sigma * Bm).tocsc()
    meta = {"problem_hash": pencil_digest(A, B, k, tol), "tol": tol, "k": k, "dimension": n, "seed": seed}

    if n <= DENSE_LIMIT or (k > n // 4 and n <= DENSE_FULL_LIMIT):
        try:
            sla.cholesky(shifted.toarray())
        except sla.LinAlgError as exc:
            raise NotPositiveDefiniteError("A + sigma*B is not positive definite (A not PSD)") from exc
        w, V = sla.eigh(Am.toarray(), Bm.toarray(), subset_by_index=[0, k - 1])
        attempts = [(w, V)]
    else:
        lu = _symmetric_lu(shifted)
        if _inertia_ok(lu, n) is False:
            raise NotPositiveDefiniteError("A + sigma*B is not positive definite (A not PSD)")
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        if adapt_shift:
            # When the wanted eigenvalues sit far below sigma, 1/(lam + sigma)
            # clusters near 1/sigma and Lanczos stalls. A few block inverse
            # iterations estimate the scale of lam_k; the shift drops to it.
            V = rng.standard_normal((n, min(k + 2, n - 1)))
            for _ in range(8):
                V, _r = np.linalg.qr(lu.solve(Bm @ V))
            ritz, V = _rayleigh_ritz(Am, Bm, V)
            scale = float(ritz[min(k, len(ritz) - 1)])
            if 0 < scale < 0.1 * sigma:
                sigma = scale
                lu = _symmetric_lu((Am + sigma * Bm).tocsc())
            v0 = V.sum(axis=1)
        meta["sigma"] = sigma
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        attempts = []
        best = math.inf
        for attempt in range(max_attempts):
            ncv = min(n - 1, max(2 * k + 1, 20) * (attempt + 1))
            kk = min(k + 2, n - 2) if ncv > k + 2 else k
            try:
                w, V = spla.eigsh(
                    Am, k=kk, M=Bm, sigma=-sigma, which="LM", OPinv=op, v0=v0, ncv=max(ncv, kk + 1), tol=0.0
                )
            except spla.ArpackNoConvergence as exc:
                if exc.eigenvectors is not None and exc.eigenvectors.shape[1]:
                    w, V = _rayleigh_ritz(Am, Bm, exc.eigenvectors)
                    res = EigenPairSet(w, V, np.abs(V).max(0)).residuals(Am, Bm)
                    best = min(best, float(res.max()))
                continue
            order = np.argsort(w)
            w, V = _rayleigh_ritz(Am, Bm, V[:, order])
            attempts.append((w[:k], V[:, :k]))
            break
        if not attempts:
            raise EigenSolveError("shift-invert Lanczos did not converge", best)

    w, V = attempts[-1]
    V = _normalize_signs(V)
    V = V / np.sqrt(np.einsum("ij,ij->j", V, Bm @ V))
    w = np.maximum.accumulate(w)  # guards against roundoff-level misordering
    pairs = EigenPairSet(w, V, np.abs(V).max(axis=0), meta)
    res = pairs.residuals(Am, Bm)
    if np.any(res > tol):
        floor = np.finfo(float).eps * spla.norm(Am, 1) / max(np.min(Bm.diagonal()), 1e-300)
        raise EigenSolveError(
            f"residual above tol={tol:g} (roundoff floor of this pencil is roughly {floor:.1e})", float(res.max())
        )
    if np.any(w < -tol * max(1.0, abs(w).max())):
        raise NotPositiveDefiniteError("A has eigenvalues below -tol")
    pairs.meta["max_residual"] = float(res.max())
    return pairs


def rayleigh_min(A, B, tol: float = 1e-8, **kw) -> float:
    """inf over v != 0 of v'Av / v'Bv."""
    return float(solve_generalized(A, B, 1, tol, **kw).eigenvalues[0])


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1]
_XGK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ]
)
_WGK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[1:7:2] = _WG[:3]
_GW[7] = _WG[3]
_GW[9:14:2] = _WG[2::-1]


def _as_vectorized(f: Callable) -> Callable:
    probe = np.array([0.25, 0.5])
    try:
        out = np.asarray(f(probe), dtype=float)
        if out.shape == probe.shape:
            return f
    except Exception:
        pass
    return np.vectorize(lambda x: float(f(float(x))), otypes=[float])


def _gk15(f, a: float, b: float):
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    y = np.asarray(f(c + h * _NODES), dtype=float)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError(f"integrand not finite on [{a}, {b}]")
    k = h * np.dot(_KW, y)
    g = h * np.dot(_GW, y)
    return k, abs(k - g)


def adaptive_quad(
    f: Callable,
    a: float,
    b: float,
    tol: float = 1e-10,
    rtol: float = 0.0,
    max_intervals: int = 4000,
) -> QuadratureResult:
    """Globally adaptive G7/K15 quadrature of ``f`` over ``[a, b]``.

    ``b`` may be ``inf``. For ``a > 0`` the tail is first rewritten with
    ``u = exp(v)`` and then mapped onto ``[0, 1)``. Success means the summed
    ``|K15 - G7|`` estimate is below ``max(tol, rtol*|value|)``.
    """
    f = _as_vectorized(f)
    if math.isinf(a):
        raise ValueError("lower limit must be finite")
    if b < a:
        r = adaptive_quad(f, b, a, tol, rtol, max_intervals)
        return QuadratureResult(-r.value, r.error_estimate, r.evaluations)
    if math.isinf(b):
        if a > 0:
            v0 = math.log(a)

            def g(v):
                # beyond exp(700) an integrable tail contributes nothing representable
                v = np.asarray(v, dtype=float)
                far = v > 700.0
                u = np.exp(np.where(far, 700.0, v))
                return np.where(far, 0.0, f(u) * u)

        else:
            v0 = a
            g = f

        def h(s):
            s = np.asarray(s, dtype=float)
            t = s / (1.0 - s)
            with np.errstate(over="ignore", invalid="ignore"):
                y = g(v0 + t) / (1.0 - s) ** 2
            return np.where(np.isfinite(t) & (t < 1e300), y, 0.0)

        return adaptive_quad(h, 0.0, 1.0, tol, rtol, max_intervals)

    evals = 15
    k, e = _gk15(f, a, b)
    heap = [(-e, a, b, k)]
    total, err = k, e
    while err > max(tol, rtol * abs(total)):
        if len(heap) >= max_intervals:
            raise QuadratureError("evaluation budget exhausted", QuadratureResult(total, err, evals))
        ne, lo, hi, kv = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise QuadratureError("interval collapsed", QuadratureResult(total, err, evals))
        k1, e1 = _gk15(f, lo, mid)
        k2, e2 = _gk15(f, mid, hi)
        evals += 30
        heapq.heappush(heap, (-e1, lo, mid, k1))
        heapq.heappush(heap, (-e2, mid, hi, k2))
        total += k1 + k2 - kv
        err += e1 + e2 + ne
        if len(heap) % 64 == 0 or err <= max(tol, rtol * abs(total)):
            # re-sum from the leaves to avoid drift
            total = math.fsum(item[3] for item in heap)
            err = math.fsum(-item[0] for item in heap)
    return QuadratureResult(float(total), float(err), evals)

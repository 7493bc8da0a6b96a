"""Graded P1 meshes of truncated cusp domains and Neumann form assembly.

Two mesh generators are provided:

* column mapping for the region below a positive profile (the unit square is
  the profile ``g = 1``);
* a graded horn mesh for the exterior cusp ``{g(x') < y < H}``: rows of nodes
  at ``x = xi * r(y)`` for fixed ``xi`` in [-1, 1], with row spacing tied to
  the local channel width so that elements shrink with the channel.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import CuspDomain, CuspProfile, DomainError, boundary_distance
from .linalg import SparseSymmetricForm, rayleigh_min

log = logging.getLogger(__name__)

MIN_ANGLE_DEG = 15.0


class MeshQualityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    grading: dict = field(default_factory=dict)
    domain: CuspDomain | None = None
    row_of_triangle: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.ascontiguousarray(self.nodes, dtype=float))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def angles(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out[:, i] = np.degrees(np.arccos(np.clip(cosv, -1, 1)))
        return out

    @property
    def min_angle(self) -> float:
        return float(self.angles().min())

    def diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.max(np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]), axis=0)

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.sort(e, axis=1)

    def boundary_edges(self) -> np.ndarray:
        e, counts = np.unique(self.edges(), axis=0, return_counts=True)
        return e[counts == 1]

    def is_conforming(self) -> bool:
        _, counts = np.unique(self.edges(), axis=0, return_counts=True)
        return bool(np.all(counts <= 2))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.nodes.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()[:16]

    def export_csv(self, node_path, element_path) -> None:
        with open(node_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "x", "y"])
            for i, (x, y) in enumerate(self.nodes):
                w.writerow([i, repr(float(x)), repr(float(y))])
        with open(element_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "n0", "n1", "n2"])
            for i, t in enumerate(self.triangles):
                w.writerow([i, *map(int, t)])


def _check_quality(mesh: Mesh, where: str) -> Mesh:
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise MeshQualityError(f"{where}: {int(np.sum(areas <= 0))} triangles not positively oriented")
    ang = mesh.angles().min(axis=1)
    bad = ang < MIN_ANGLE_DEG
    if np.any(bad):
        i = int(np.argmin(ang))
        layer = int(mesh.row_of_triangle[i]) if mesh.row_of_triangle is not None else -1
        raise MeshQualityError(
            f"{where}: min angle {ang[i]:.2f} deg below {MIN_ANGLE_DEG} in layer {layer} "
            f"(y in [{mesh.nodes[mesh.triangles[i], 1].min():.4g}, {mesh.nodes[mesh.triangles[i], 1].max():.4g}])"
        )
    return mesh


def _structured_triangles(n_rows: int, n_cols: int, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split each cell of an (n_rows+1) x (n_cols+1) node grid along its shorter diagonal."""
    idx = np.arange((n_rows + 1) * (n_cols + 1)).reshape(n_rows + 1, n_cols + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    rows = np.repeat(np.arange(n_rows), n_cols)
    diag_ac = np.linalg.norm(nodes[a] - nodes[c], axis=1)
    diag_bd = np.linalg.norm(nodes[b] - nodes[d], axis=1)
    use_ac = diag_ac <= diag_bd * (1 + 1e-12)
    t1 = np.where(use_ac[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(use_ac[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    tris = np.empty((2 * len(a), 3), dtype=np.int64)
    tris[0::2], tris[1::2] = t1, t2
    return tris, np.repeat(rows, 2)


def unit_square_mesh(h0: float) -> Mesh:
    return build_graded_mesh(CuspDomain(CuspProfile.constant(1.0)), h0)


def build_graded_mesh(d: CuspDomain, h0: float, ratio: float = 0.7, min_layers: int = 3) -> Mesh:
    """Triangulate the truncated domain.

    ``ratio`` in (0, 1) is the geometric factor by which row heights shrink
    toward the tip. Raises :class:`DomainError` for empty or disconnected
    domains and :class:`MeshQualityError` naming the offending layer when the
    minimum angle drops below 15 degrees.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if d.side == "above":
        return _horn_mesh(d, h0, ratio, min_layers)
    return _column_mesh(d, h0)


def _column_mesh(d: CuspDomain, h0: float) -> Mesh:
    p = d.profile
    a, b = d.base
    if h0 >= (b - a):
        raise ValueError("h0 must be smaller than the domain diameter")
    n_cols = int(math.ceil((b - a) / h0 - 1e-9))
    x = np.linspace(a, b, n_cols + 1)
    g = p(x)
    gmax = float(p(np.linspace(a, b, 2001)).max())
    if gmax < d.w_min:
        raise DomainError(f"w_min={d.w_min} exceeds the largest profile height {gmax:.4g}: empty domain")
    if np.any(p(np.linspace(a, b, 20001)) < d.w_min):
        raise DomainError(
            "truncating the tip where g < w_min disconnects the region below the profile; "
            "use side='above' for the exterior cusp"
        )
    n_rows = int(math.ceil(gmax / h0 - 1e-9))
    t = np.linspace(0.0, 1.0, n_rows + 1)
    X = np.broadcast_to(x, (n_rows + 1, n_cols + 1))
    Y = t[:, None] * g[None, :]
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris, rows = _structured_triangles(n_rows, n_cols, nodes)
    mesh = Mesh(nodes, tris, {"h0": h0, "ratio": None, "w_min": d.w_min, "rows": n_rows, "cols": n_cols}, d, rows)
    return _check_quality(mesh, "column mesh")


def horn_rows(d: CuspDomain, h0: float, ratio: float) -> tuple[np.ndarray, int]:
    """Row heights of the horn mesh, from the cut y_cut up to the lid H."""
    p = d.profile
    H, y0 = d.height, d.y_cut
    if not y0 < H:
        raise DomainError(f"w_min={d.w_min} leaves no horn below the lid (y_cut={y0:.4g} >= H={H:.4g})")
    n_cols = max(2, int(math.ceil(2 * float(p.half_width(H)) / h0 - 1e-9)))
    dx = lambda y: 2 * float(p.half_width(y)) / n_cols
    ys = [y0]
    dy = dx(y0)
    while ys[-1] < H:
        y = ys[-1]
        dy = min(dy / ratio, h0, dx(y))
        if y + 1.5 * dy >= H:
            ys.append(H)
            break
        ys.append(y + dy)
    return np.asarray(ys), n_cols


def _horn_mesh(d: CuspDomain, h0: float, ratio: float, min_layers: int) -> Mesh:
    p = d.profile
    H = d.height
    if h0 >= H:
        raise ValueError("h0 must be smaller than the domain diameter")
    ys, n_cols = horn_rows(d, h0, ratio)
    n_rows = len(ys) - 1
    graded = int(np.sum(np.diff(ys) < h0 * (1 - 1e-9)))
    if graded < min_layers:
        raise MeshQualityError(f"only {graded} graded layers before w_min={d.w_min}; need {min_layers}")
    xi = np.linspace(-1.0, 1.0, n_cols + 1)
    r = p.half_width(ys)
    X = xi[None, :] * r[:, None]
    Y = np.broadcast_to(ys[:, None], X.shape)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris, rows = _structured_triangles(n_rows, n_cols, nodes)
    width = 2 * r
    tip = width[:-1] <= 10 * d.w_min
    grading = {
        "h0": h0,
        "ratio": ratio,
        "w_min": d.w_min,
        "rows": n_rows,
        "cols": n_cols,
        "graded_layers": graded,
        "tip_layers": int(np.sum(tip)),
        "tip_layer_elements": int(2 * n_cols * np.sum(tip)),
        "y_cut": float(ys[0]),
    }
    mesh = Mesh(nodes, tris, grading, d, rows)
    return _check_quality(mesh, "horn mesh")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle split into four through its edge midpoints."""
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    n0 = mesh.n_nodes
    m = len(t)
    m01, m12, m20 = n0 + inv[:m], n0 + inv[m : 2 * m], n0 + inv[2 * m :]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tris = np.vstack(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    rows = None if mesh.row_of_triangle is None else np.tile(mesh.row_of_triangle, 4)
    grading = dict(mesh.grading, refined=mesh.grading.get("refined", 0) + 1)
    return Mesh(nodes, tris, grading, mesh.domain, rows)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    """Weight for the weighted mass: 1 (``unit``) or |log d(x)|^s (``log_dist_power``)."""

    kind: str = "unit"
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("unit", "log_dist_power"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.s < 0:
            raise ValueError("exponent s must be >= 0")

    @classmethod
    def log_dist(cls, s: float) -> "WeightSpec":
        return cls("log_dist_power", s)

    def __call__(self, dist) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if self.kind == "unit" or self.s == 0:
            return np.ones_like(dist)
        return np.abs(np.log(dist)) ** self.s


# interior 3-point rule, exact for degree 2
_QB = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_QW = np.full(3, 1 / 3)


@dataclass
class AssembledForms:
    stiffness: SparseSymmetricForm
    mass: SparseSymmetricForm
    weighted_mass: SparseSymmetricForm
    weight: WeightSpec
    quad_points: np.ndarray
    quad_dist: np.ndarray
    nudged: int = 0


def _local_matrices(mesh: Mesh):
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # gradients of barycentric coordinates
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    K = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4 * area[:, None, None])
    M = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return K, M, area


def _scatter(mesh: Mesh, local: np.ndarray) -> SparseSymmetricForm:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    m = 0.5 * (m + m.T)
    return SparseSymmetricForm(m)


def quadrature_points(mesh: Mesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qk,tkd->tqd", _QB, p)


def assemble(mesh: Mesh, w: WeightSpec = WeightSpec(), distance: Callable | None = None) -> AssembledForms:
    """P1 stiffness, mass and weighted mass on ``mesh``.

    The weighted mass uses a 3-point interior rule; the distance to the
    boundary comes from :func:`boundary_distance` unless ``distance`` is given.
    """
    K, M, area = _local_matrices(mesh)
    qp = quadrature_points(mesh)
    flat = qp.reshape(-1, 2)
    if w.kind == "unit" or w.s == 0:
        dist = np.full(len(flat), np.nan)
        wq = np.ones(len(flat))
        nudged = 0
    else:
        if distance is None:
            if mesh.domain is None:
                raise ValueError("weighted assembly needs a mesh with a domain or an explicit distance")
            distance = lambda P: boundary_distance(mesh.domain, P, check=False)
        dist = np.asarray(distance(flat), dtype=float)
        bad = ~(dist > 0)
        nudged = int(bad.sum())
        if nudged:
            warnings.warn(f"{nudged} quadrature points on the boundary; distance set to 1e-12", RuntimeWarning)
            log.warning("%d quadrature points nudged inward by 1e-12", nudged)
            dist = np.where(bad, 1e-12, dist)
        wq = w(dist)
    wq = wq.reshape(qp.shape[:2])
    # sum_q w_q * W_q * phi_i(q) phi_j(q) * area
    W = np.einsum("tq,q,qi,qj->tij", wq, _QW, _QB, _QB) * area[:, None, None]
    return AssembledForms(_scatter(mesh, K), _scatter(mesh, M), _scatter(mesh, W), w, qp, dist.reshape(qp.shape[:2]), nudged)


# --------------------------------------------------------------------------
# Hardy constant
# --------------------------------------------------------------------------


@dataclass
class HardyResult:
    s: float
    table: list[dict]
    verdict: str
    b_inv_by_w_min: dict

    @property
    def b_inv(self) -> float:
        """Value at the smallest w_min and finest mesh."""
        return self.table[-1]["b_inv"]

    @property
    def b6(self) -> float:
        return 1.0 / self.b_inv if self.b_inv > 0 else math.inf


def hardy_quotient(mesh: Mesh, s: float, support_radius: float | None = None, tol: float = 1e-8) -> tuple[float, AssembledForms]:
    """inf (Q(f) + |f|^2) / int |log d|^s f^2 over P1 functions on ``mesh``."""
    forms = assemble(mesh, WeightSpec.log_dist(s) if s > 0 else WeightSpec())
    A = forms.stiffness + forms.mass
    B = forms.weighted_mass
    if support_radius is not None:
        tip = np.array([0.0, mesh.domain.y_cut if mesh.domain is not None else 0.0])
        keep = np.flatnonzero(np.linalg.norm(mesh.nodes - tip, axis=1) < support_radius)
        if len(keep) < 2:
            raise DomainError("support radius keeps fewer than two nodes")
        A, B = A.restricted(keep), B.restricted(keep)
    return rayleigh_min(A, B, tol), forms


def hardy_constant_2d(
    domain_for: Callable[[float], CuspDomain],
    s: float,
    h0_levels: Sequence[float] = (1 / 8, 1 / 16, 1 / 32),
    w_min_list: Sequence[float] = (1e-2, 1e-3, 1e-4),
    ratio: float = 0.7,
    support_radius: float | None = None,
    tol: float = 1e-8,
    stable_rtol: float = 0.15,
) -> HardyResult:
    """Best Hardy constant estimates across meshes and truncations.

    ``domain_for(w_min)`` builds the domain. The verdict compares the finest
    mesh values across the w_min sequence: ``stable`` when they agree within
    ``stable_rtol``, ``decay`` when they fall monotonically by more than that.
    """
    if not s > 0 and not s == 0:
        raise ValueError("s must be >= 0")
    table = []
    finest = {}
    for w_min in w_min_list:
        dom = domain_for(w_min)
        for h0 in h0_levels:
            mesh = build_graded_mesh(dom, h0, ratio)
            b_inv, _ = hardy_quotient(mesh, s, support_radius, tol)
            table.append({"w_min": w_min, "h0": h0, "nodes": mesh.n_nodes, "b_inv": b_inv})
        finest[w_min] = table[-1]["b_inv"]
    vals = np.array([finest[w] for w in w_min_list])
    spread = (vals.max() - vals.min()) / max(vals.max(), 1e-300)
    if spread <= stable_rtol:
        verdict = "stable"
    elif np.all(np.diff(vals) < 0):
        verdict = "decay"
    else:
        verdict = "inconclusive"
    return HardyResult(s, table, verdict, finest)

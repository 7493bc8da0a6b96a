import math

import numpy as np
import pytest
import scipy.integrate as si
import scipy.special as ss
from hypothesis import given
from hypothesis import strategies as st

from cusplab.linalg import rayleigh_min
from cusplab.manifold import (
    U_MIN,
    ManifoldDomainError,
    ManifoldModel,
    ball_volume,
    cusp_distance,
    embed_r3,
    endpoint_classify,
    hardy_manifold_constant,
    hardy_sweep,
    metric_eval,
    radial_discretize,
    radial_eigen,
    supnorm_trace,
    trial_vector_quotient,
)


# -- metric and geometry ------------------------------------------------------


def test_metric_examples():
    assert metric_eval(2, math.e) == pytest.approx(math.e**-2, rel=1e-15)
    assert metric_eval(0, 10.0) == pytest.approx(0.01, rel=1e-15)
    assert metric_eval(1, math.e**2) == pytest.approx(math.e**-4 / 2, rel=1e-15)
    with pytest.raises(ManifoldDomainError):
        metric_eval(2, 1.0)


def test_cusp_distance_examples():
    assert cusp_distance(4, math.e**2) == pytest.approx(0.5, rel=1e-14)
    assert cusp_distance(4, math.e**4) == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(ManifoldDomainError):
        cusp_distance(2, 10.0)
    with pytest.raises(ManifoldDomainError):
        cusp_distance(3, 1.0)


@pytest.mark.parametrize("alpha", [3, 4, 6])
@pytest.mark.parametrize("u0", [math.e**2, math.e**4])
def test_cusp_distance_matches_quadrature(alpha, u0):
    closed = cusp_distance(alpha, u0, check=False)
    # independent route: v = log u = v0 e^t turns the slow tail into an exponential one
    v0 = math.log(u0)
    q, _ = si.quad(lambda t: v0 ** (1 - alpha / 2) * math.exp(t * (1 - alpha / 2)), 0, math.inf, epsabs=0, epsrel=1e-12)
    assert abs(q - closed) <= 1e-8 * closed


@given(st.floats(3.0, 8.0), st.floats(2.0, 50.0), st.floats(1.01, 5.0))
def test_cusp_distance_decreasing(alpha, v0, factor):
    assert cusp_distance(alpha, math.exp(v0 * factor), check=False) < cusp_distance(alpha, math.exp(v0), check=False)


def test_ball_volume_oracle():
    b = ball_volume(4, 0.5)
    assert b.log_eta == pytest.approx(2.0, rel=1e-15)
    # 2 pi int_2^inf e^-v v^-4 dv = 2 pi 2^-3 E_4(2)
    oracle = 2 * math.pi * 2**-3 * ss.expn(4, 2.0)
    assert oracle == pytest.approx(0.019652893532194786, rel=1e-14)
    assert b.quad_value == pytest.approx(oracle, rel=1e-10)
    assert b.cross_rel_diff < 1e-6


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.05])
def test_ball_volume_expn_oracle(eps):
    b = ball_volume(4, eps)
    a = b.log_eta
    oracle = 2 * math.pi * a**-3 * ss.expn(4, a)
    assert b.quad_value == pytest.approx(oracle, rel=1e-8)


def test_ball_volume_ratio_trend():
    r = [ball_volume(4, e).ratio_derived for e in (0.5, 0.1, 0.05, 0.01)]
    assert np.all(np.diff(r) > 0) and r[-1] < 1
    assert r[-1] > 0.95


def test_ball_volume_rejects_large_eps():
    with pytest.raises(ManifoldDomainError):
        ball_volume(4, cusp_distance(4, U_MIN) * 1.01)


def test_embedding():
    u = np.linspace(U_MIN, 100, 40)
    x, y, z = embed_r3(2.0, u, np.linspace(0, 2 * math.pi, 40))
    assert np.allclose(x**2 + y**2, metric_eval(2.0, u), rtol=1e-14, atol=0)
    assert np.all(np.diff(z) > 0)
    _, y0, _ = embed_r3(2.0, 20.0, 0.0)
    assert y0 == 0.0


def test_embedding_z_table():
    # oracle: trapezoid on a fine grid of z' written out by hand
    alpha = 2.0
    u = np.linspace(U_MIN, 100, 200001)
    lu = np.log(u)
    g = u**-2 * lu**-alpha
    gp = -(u**-3) * lu**-alpha * (2 + alpha / lu)
    zp = np.sqrt(g - gp**2 / (4 * g))
    z_ref = np.concatenate([[0], np.cumsum(0.5 * (zp[1:] + zp[:-1]) * np.diff(u))])
    pts = np.array([10.0, 20.0, 50.0, 100.0])
    _, _, z = embed_r3(alpha, pts, 0.0)
    assert np.allclose(z, np.interp(pts, u, z_ref), rtol=1e-8)


# -- radial pencil ------------------------------------------------------------


def test_radial_neumann_kernel_away_from_cap():
    pen = radial_discretize(ManifoldModel(1.0, 0, U_max=1e3))
    r = pen.A @ np.ones(pen.A.dimension)
    # the node next to the Dirichlet cap sees the missing neighbour
    assert np.max(np.abs(r[:-1])) < 1e-12 * np.max(np.abs(pen.A.matrix.diagonal()))
    assert r[-1] > 0


def test_radial_lowest_eigenvalue_tends_to_zero():
    lam = [radial_eigen(ManifoldModel(1.5, 0, U_max=U), 1)[1].eigenvalues[0] for U in (1e3, 1e4, 1e5)]
    assert np.all(np.diff(lam) < 0)
    assert lam[-1] < 1e-3


def test_radial_weight_is_metric():
    m = ManifoldModel(1.5, 0, U_max=1e3, N_grid=200)
    a = radial_discretize(m).B.matrix
    b = radial_discretize(m, weight=lambda u: metric_eval(1.5, u)).B.matrix
    assert abs(a - b).max() < 1e-15 * abs(a).max()


def test_radial_rejects_small_grid():
    with pytest.raises(ValueError):
        ManifoldModel(1.0, 0, N_grid=5)


def test_radial_dirichlet_removes_node():
    m = ManifoldModel(1.0, 0, U_max=1e3, N_grid=100)
    assert radial_discretize(m).A.dimension == 99
    assert radial_discretize(ManifoldModel(1.0, 0, U_max=1e3, N_grid=100, bc="dirichlet")).A.dimension == 98


def test_radial_eigenvectors_weighted_orthonormal():
    tol = 1e-8
    pen, E = radial_eigen(ManifoldModel(1.0, 0, U_max=1e4), 5, tol)
    assert E.orthonormality_defect(pen.B) < 10 * tol


# -- endpoint classification --------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 2])
@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_endpoint_table(n, alpha):
    r = endpoint_classify(alpha, n)
    assert r.matches, r.verdicts


def test_endpoint_no_overflow_for_large_mode():
    r = endpoint_classify(1.0, 2, U_list=(1e5, 1e6))
    assert all(np.isfinite(v).all() for v in r.log_norms.values())
    assert r.log_norms["psi2"][-1] > 1e6


# -- form bound ---------------------------------------------------------------


def test_hardy_alpha0_is_first_eigenvalue():
    m = ManifoldModel(0.0, 0, U_max=1e4)
    pen = radial_discretize(m)
    assert hardy_manifold_constant(m) == pytest.approx(rayleigh_min(pen.A, pen.B), rel=1e-6)


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_hardy_nonincreasing_in_U(alpha, bc):
    vals = hardy_sweep(alpha, [1e3, 1e4, 1e5], bc=bc)
    assert np.all(np.diff(vals) <= 10 * 1e-8 * np.abs(vals[:-1]))


def test_hardy_weight_independent_of_alpha():
    a = hardy_sweep(1.0, [1e4])[0]
    b = hardy_sweep(3.0, [1e4])[0]
    assert a == pytest.approx(b, rel=1e-6)


def _trial_quotient_closed(U, u0=U_MIN):
    c = 2 * u0**0.25
    num = lambda u: 0.25 * math.log(u) + c * u**-0.25 - c * c / 8 * u**-0.5
    den = lambda u: math.log(u) + 8 * c * u**-0.25 - 2 * c * c * u**-0.5
    return (num(U) - num(u0)) / (den(U) - den(u0))


def test_trial_vector_quotient():
    q = trial_vector_quotient(1.0, 1e5)
    assert q == pytest.approx(_trial_quotient_closed(1e5), rel=1e-10)
    assert q == pytest.approx(0.35995082248751464, rel=1e-10)
    # the radial minimum never exceeds a trial quotient
    assert hardy_sweep(1.0, [1e5])[0] <= q


# -- sup-norm traces ----------------------------------------------------------


def test_supnorm_trace_alpha1():
    sol = supnorm_trace(1.0)
    assert sol.strictly_increasing
    assert sol.fit_rel_error < 0.2
    assert np.all(sol.transformed_residual < 1e-5)
    assert len(sol.eigenpairs) == 4
    assert sol.lam_trace[-1] == pytest.approx(2.4205, rel=1e-3)


def test_supnorm_trace_rejects_constant_branch():
    with pytest.raises(ValueError):
        supnorm_trace(1.0, mode_index=0)


def test_supnorm_trace_alpha2_keeps_growing():
    # the trace still grows by about 32% over the last decade; see the decisions ledger
    sol = supnorm_trace(2.0)
    assert sol.lam_trace[-1] == pytest.approx(12.088, rel=1e-3)
    assert 0.25 < sol.last_rel_change < 0.4
    assert sol.fit_slope is None

from __future__ import annotations

import numpy as np
import pytest
from conftest import poly1

from skewmix.density import invariant_density, weight_A
from skewmix.errors import BudgetExceeded
from skewmix.maps import ExpandingMap, FiberRotation, preimage_levels, preimage_tree
from skewmix.symbol import (
    GridSpec,
    N0Found,
    NotFoundWithin,
    WeightG,
    cocycle_step,
    direction_grid,
    direction_lipschitz,
    find_n0,
    jacobian_power_t,
    ptilde,
    ptilde_by_words,
    ptilde_field,
    w_n,
    xi_grid,
)
from skewmix.trig import TrigPoly

SMALL = GridSpec(x_points=16, xi_spacing=1 / 32)


@pytest.fixture(scope="module")
def tau2():
    return FiberRotation.from_components([poly1((1, 1.0, 0.0), (2, 0.0, 0.4)), poly1((1, 0.3, 0.7))])


# --- weight g -------------------------------------------------------------

def test_weight_g_pieces(doubling, tau_cos):
    g = WeightG.for_system(doubling, tau_cos)
    R, b = g.knots
    assert b == pytest.approx(1.5 * R)
    assert g(R / 2) == 1.0
    assert g(2 * R) == pytest.approx(2 * R)
    mid = (R + b) / 2
    assert 1 < g(mid) < mid


def test_weight_g_threshold(doubling, perturbed, tau_cos):
    for T in (doubling, perturbed):
        g = WeightG.for_system(T, tau_cos)
        lower = max(1.0, max(1.0, 2 * tau_cos.dtau_sup) / (T.gamma - 1))
        assert g.R > lower and g.R == pytest.approx(1.01 * lower)
    with pytest.raises(ValueError):
        WeightG(0.5, 2.0)


def test_weight_g_monotone_c1_envelope(doubling, tau2):
    g = WeightG.for_system(doubling, tau2)
    R, b = g.knots
    t = np.linspace(R, b, 20001)
    vals = g(t)
    assert np.all(np.diff(vals) > 0)
    assert np.all((vals >= 1 - 1e-12) & (vals <= t + 1e-12))
    for knot in (R, b):
        eps = 1e-7
        left = (g(knot) - g(knot - eps)) / eps
        right = (g(knot + eps) - g(knot)) / eps
        assert abs(left - right) < 1e-6
        assert abs(g.derivative(knot - 1e-12) - g.derivative(knot + 1e-12)) < 1e-6
    fd = np.gradient(vals, t)
    assert np.abs(fd).max() <= g.dg_sup() + 1e-6


# --- cocycle and W_n ------------------------------------------------------

def test_cocycle_step_example(doubling):
    tau = FiberRotation.from_components([poly1((1, 1 / (2 * np.pi), 0.0))])  # D tau = -sin(2 pi x)
    assert cocycle_step(doubling, tau, [1.0], [0.25], [0.5])[0] == pytest.approx(0.0, abs=1e-15)
    assert cocycle_step(doubling, tau, [0.0], [0.3], [0.7])[0] == pytest.approx(1.4)
    with pytest.raises(ValueError):
        cocycle_step(doubling, tau, [0.5], [0.3], [0.7])


def test_cocycle_exterior_expansion(doubling, tau2):
    g = WeightG.for_system(doubling, tau2)
    rng = np.random.default_rng(0)
    x = rng.random((500, 1))
    xi = rng.choice([-1, 1], (500, 1)) * rng.uniform(g.R * 1.0001, 5 * g.R, (500, 1))
    ang = rng.uniform(0, 2 * np.pi)
    out = cocycle_step(doubling, tau2, [np.cos(ang), np.sin(ang)], x, xi)
    assert np.all(np.abs(out[:, 0]) > 1.5 * np.abs(xi[:, 0]))


def test_w_n_small_cases(doubling, tau_cos, diag23):
    x = np.array([[0.1], [0.7]])
    assert np.all(w_n(doubling, tau_cos, x, 0) == 0)
    assert np.allclose(w_n(doubling, tau_cos, x, 1), np.swapaxes(tau_cos.jacobian(x), -1, -2))
    tau = FiberRotation.from_components([TrigPoly.from_real_terms([((1, 1), 0.3, 0.1)], 2)] * 2)
    assert w_n(diag23, tau, np.zeros((3, 2)), 2).shape == (3, 2, 2)


@pytest.mark.parametrize("name", ["doubling", "perturbed"])
def test_w_n_matches_cocycle_composition(request, name, tau_cos):
    T = request.getfixturevalue(name)
    rng = np.random.default_rng(1)
    n = 3
    for y in rng.random((5, 1)):
        orbit = [y]
        for _ in range(n - 1):
            orbit.append(T.eval(orbit[-1]))
        for n_dir in ([1.0], [-1.0], [0.0]):
            for xi in ([1.0], [0.0]):
                cov = np.array(xi)
                for pt in reversed(orbit):  # the point nearest x is applied first
                    cov = cocycle_step(T, tau_cos, n_dir, pt, cov)
                closed = jacobian_power_t(T, y, n) @ np.array(xi) + w_n(T, tau_cos, y, n) @ np.array(n_dir)
                assert np.allclose(cov, closed, atol=1e-12)


# --- p~ --------------------------------------------------------------------

def test_ptilde_two_implementations_agree(doubling, perturbed, tau_cos, tau2, h_perturbed, h_one):
    assert ptilde(doubling, tau_cos, h_one, -1.0, [1.0], 4, [0.0], [0.0]) == pytest.approx(
        ptilde_by_words(doubling, tau_cos, h_one, -1.0, [1.0], 4, [0.0], [0.0]), abs=1e-12)
    rng = np.random.default_rng(2)
    for T, tau, h in ((doubling, tau2, h_one), (perturbed, tau_cos, h_perturbed)):
        g = WeightG.for_system(T, tau)
        for _ in range(6):
            n = int(rng.integers(1, 5))
            n_dir = direction_grid(tau.fiber_dim, 30)[rng.integers(0, len(direction_grid(tau.fiber_dim, 30)))]
            x, xi = rng.random(1), rng.uniform(-g.R, g.R, 1)
            a = ptilde(T, tau, h, -1.0, n_dir, n, x, xi, g)
            b = ptilde_by_words(T, tau, h, -1.0, n_dir, n, x, xi, g)
            assert a == pytest.approx(b, abs=1e-12)


def test_ptilde_constant_tau_is_one_near_origin(doubling, h_one):
    tau = FiberRotation.from_components([TrigPoly.constant(0.4, 1)])
    g = WeightG.for_system(doubling, tau)
    for n in range(1, 5):
        xi = np.linspace(-g.R / 2**n, g.R / 2**n, 7)[:, None]
        assert np.all(ptilde(doubling, tau, h_one, -1.0, [1.0], n, np.full((7, 1), 0.3), xi, g) == 1.0)


def test_ptilde_exterior_bound(doubling, tau2, h_one):
    g = WeightG.for_system(doubling, tau2)
    rng = np.random.default_rng(3)
    x = rng.random((200, 1))
    xi = rng.choice([-1, 1], (200, 1)) * g.R * (1 + rng.uniform(1e-9, 1e-2, (200, 1)))
    for s in (-1.0, -0.5):
        vals = ptilde(doubling, tau2, h_one, s, [0.6, 0.8], 2, x, xi, g)
        assert np.all(vals <= g.exterior_bound(s) + 1e-15)


def test_ptilde_budget(doubling, tau_cos, h_one):
    small = ExpandingMap.linear([[2]], budget=8)
    with pytest.raises(BudgetExceeded):
        ptilde(small, tau_cos, h_one, -1.0, [1.0], 4, [0.1], [0.1])
    with pytest.raises(ValueError):
        ptilde(doubling, tau_cos, h_one, 0.5, [1.0], 1, [0.1], [0.1])


def test_ptilde_product_table_shape(doubling, tau_cos, h_one):
    out = ptilde(doubling, tau_cos, h_one, -1.0, [1.0], 2, np.zeros((3, 1)), np.ones((4, 1)), paired=False)
    assert out.shape == (3, 4)


def test_antipodal_symmetry(doubling, tau2, h_one):
    rng = np.random.default_rng(4)
    x = rng.random((50, 1))
    xi = rng.uniform(-3, 3, (50, 1))
    n_dir = np.array([0.6, -0.8])
    a = ptilde(doubling, tau2, h_one, -1.0, n_dir, 3, x, xi)
    b = ptilde(doubling, tau2, h_one, -1.0, -n_dir, 3, x, -xi)
    assert np.allclose(a, b, atol=1e-15)


def test_chain_consistency(perturbed, tau_cos, h_perturbed):
    T, h = perturbed, h_perturbed
    g = WeightG.for_system(T, tau_cos)
    x = np.array([0.21])
    xi = np.array([0.4 * g.R])
    n_dir = [1.0]
    n, m = 2, 3
    total = 0.0
    for leaf in preimage_tree(T, x, m):
        z = leaf.point
        eta = jacobian_power_t(T, z, m) @ xi + w_n(T, tau_cos, z, m) @ np.array(n_dir)
        inner = ptilde(T, tau_cos, h, -1.0, n_dir, n, z, eta, g)
        # un-normalise the inner quotient from eta back to xi
        total += float(weight_A(T, h, z, m)) * inner * (float(g(abs(eta[0]))) / float(g(abs(xi[0])))) ** -2
    direct = ptilde(T, tau_cos, h, -1.0, n_dir, n + m, x, xi, g)
    assert direct == pytest.approx(total, abs=1e-12)


def _escape_oracle(T, tau, s, n_dir, n, x, xi, R):
    leaves = preimage_levels(T, x, n)[-1]
    images = jacobian_power_t(T, leaves, n) @ xi + w_n(T, tau, leaves, n) @ n_dir
    return np.linalg.norm(images, axis=-1).max() > R


def test_escape_biconditional_random(doubling, perturbed, tau_cos, tau2, h_one, h_perturbed):
    rng = np.random.default_rng(5)
    cases = [(doubling, tau2, h_one), (perturbed, tau_cos, h_perturbed)]
    for T, tau, h in cases:
        g = WeightG.for_system(T, tau)
        dirs = direction_grid(tau.fiber_dim, 10)
        for _ in range(60):
            n = int(rng.integers(1, 6))
            n_dir = dirs[rng.integers(0, len(dirs))]
            x, xi = rng.random(1), rng.uniform(-1.2 * g.R, 1.2 * g.R, 1)
            val = ptilde(T, tau, h, -1.0, n_dir, n, x, xi, g)
            assert 0 < val <= 1
            assert (val < 1) == _escape_oracle(T, tau, -1.0, n_dir, n, x, xi, g.R)


def test_field_escape_diagnostics(doubling, tau_cos, h_one):
    fld = ptilde_field(doubling, tau_cos, h_one, -1.0, [1.0], 3, SMALL)
    assert np.all((fld.values > 0) & (fld.values <= 1))
    assert np.array_equal(fld.values < 1, fld.max_norms > WeightG.for_system(doubling, tau_cos).R)
    assert fld.escape_fraction + fld.trapped_fraction == pytest.approx(1.0)
    assert fld.sup == max(fld.grid_max, fld.exterior_bound)
    x_star, xi_star = fld.argmax()
    assert x_star.shape == (1,) and xi_star.shape == (1,)


def test_xi_grid_covers_ball():
    pts = xi_grid(2.0, 2, 0.25)
    assert np.linalg.norm(pts, axis=-1).max() <= 2.0 + 1e-12
    assert np.any(np.all(pts == 0, axis=-1))
    assert len(xi_grid(1.0, 1, 0.1)) == 21


def test_sup_monotone_in_n(doubling, perturbed, tau_cos, h_one, h_perturbed):
    for T, h in ((doubling, h_one), (perturbed, h_perturbed)):
        sups = [ptilde_field(T, tau_cos, h, -1.0, [1.0], n, SMALL).sup for n in range(1, 7)]
        for m in range(6):
            for k in range(m + 1, 6):
                assert sups[k] <= sups[m] + 2e-9


def test_direction_continuity(doubling, tau2, h_one):
    g = WeightG.for_system(doubling, tau2)
    rng = np.random.default_rng(6)
    dt = 2.0
    for n in range(1, 5):
        lip = direction_lipschitz(doubling, tau2, -1.0, n, g)
        stated = 2 * n * 1.0 * g.dg_sup() * dt * tau2.dtau_sup
        for _ in range(40):
            a = rng.uniform(0, 2 * np.pi)
            da = rng.uniform(-0.05, 0.05)
            n1 = np.array([np.cos(a), np.sin(a)])
            n2 = np.array([np.cos(a + da), np.sin(a + da)])
            x, xi = rng.random(1), rng.uniform(-g.R, g.R, 1)
            diff = abs(ptilde(doubling, tau2, h_one, -1.0, n1, n, x, xi, g)
                       - ptilde(doubling, tau2, h_one, -1.0, n2, n, x, xi, g))
            dist = np.linalg.norm(n1 - n2)
            assert diff <= lip * dist + 1e-9
            assert diff <= stated * dist + 1e-9


def test_direction_grids():
    assert np.array_equal(direction_grid(1), [[1.0], [-1.0]])
    d2 = direction_grid(2, 5.0)
    assert len(d2) == 72 and np.allclose(np.linalg.norm(d2, axis=1), 1)
    d3 = direction_grid(3, 20.0)
    assert np.allclose(np.linalg.norm(d3, axis=1), 1)
    # every point of the sphere is within a few resolutions of a grid point
    probe = np.random.default_rng(7).standard_normal((500, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    gap = np.arccos(np.clip(probe @ d3.T, -1, 1)).min(axis=1).max()
    assert gap < np.radians(20.0)


def test_coboundary_bounded_section(doubling, tau_cob, u_sin, h_one):
    rng = np.random.default_rng(8)
    x = rng.random((20, 1))
    section = u_sin.gradient(x).real  # F keeps n u'(x) invariant
    for n in range(1, 7):
        for sign in (1.0, -1.0):
            vals = ptilde(doubling, tau_cob, h_one, -1.0, [sign], n, x, sign * section)
            assert np.all(vals == 1.0)


def test_find_n0_coboundary_not_found(doubling, tau_cob, h_one):
    res = find_n0(doubling, tau_cob, h_one, -1.0, n_max=5, grid=SMALL)
    assert isinstance(res, NotFoundWithin) and res.n_max == 5
    assert all(v == [1.0] * 5 for v in res.history.values())


def test_find_n0_cos_small_grid(doubling, tau_cos, h_one):
    res = find_n0(doubling, tau_cos, h_one, -1.0, n_max=8, grid=SMALL)
    assert isinstance(res, N0Found) and res.n0 <= 8 and res.ptilde0 < 1 - 1e-3
    for hist in res.history.values():
        assert all(b <= a + 2e-9 for a, b in zip(hist, hist[1:]))
    assert 0 < res.rate_proxy < 1


def test_dependent_direction_stays_trapped(doubling, tau_sqrt3, h_one):
    # v = (sqrt3, -1)/2 kills tau, so the cocycle is pure expansion and xi = 0 never escapes
    v = np.array([np.sqrt(3.0), -1.0]) / 2
    for n in range(1, 6):
        fld = ptilde_field(doubling, tau_sqrt3, h_one, -1.0, v, n, SMALL)
        assert fld.grid_max == 1.0


def test_perturbed_density_used(perturbed, tau_cos):
    h = invariant_density(perturbed)
    a = ptilde(perturbed, tau_cos, h, -1.0, [1.0], 3, [0.3], [0.5])
    b = ptilde_by_words(perturbed, tau_cos, h, -1.0, [1.0], 3, [0.3], [0.5])
    assert a == pytest.approx(b, abs=1e-12)

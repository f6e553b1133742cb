from __future__ import annotations

import numpy as np
import pytest

from skewmix.errors import WindowTooNoisy
from skewmix.lab.correlate import correlation_forward, correlation_series, fit_decay_rate, split_fiber
from skewmix.trig import TrigPoly
from skewmix.twisted import assemble_koopman, spectral_radius


def obs(table, d):
    return TrigPoly.from_table(table, d)


COS_Y = obs({(0, 1): 0.5, (0, -1): 0.5}, 2)


def test_split_fiber():
    phi = obs({(1, 1): 2.0, (0, 1): 1.0, (3, 0): 0.5}, 2)
    parts = split_fiber(phi, 1)
    assert sorted(parts) == [(0,), (1,)]
    assert parts[(1,)].table() == {(0,): 1.0, (1,): 2.0}


def test_constant_observables_give_zero(doubling, tau_cos, h_one):
    one = obs({(0, 0): 1.0}, 2)
    assert np.all(correlation_series(doubling, tau_cos, h_one, one, one, 10, grid=128) < 1e-13)


def test_fiber_orthogonality(doubling, tau_cos, h_one):
    phi = obs({(1, 0): 1.0, (0, 0): 0.3}, 2)
    psi = obs({(0, 1): 1.0}, 2)
    assert np.all(correlation_series(doubling, tau_cos, h_one, phi, psi, 8, grid=128) == 0)


@pytest.mark.parametrize("name", ["doubling", "perturbed"])
def test_transfer_path_matches_forward_quadrature(request, name, tau_cos):
    from skewmix.density import invariant_density

    T = request.getfixturevalue(name)
    h = invariant_density(T)
    phi = obs({(1, 1): 0.7, (0, 1): 0.4, (0, -1): 0.4, (2, 0): 0.2}, 2)
    psi = obs({(0, -1): 1.0, (-1, -1): 0.3, (0, 0): 0.5}, 2)
    C = correlation_series(T, tau_cos, h, phi, psi, 5, grid=512, signed=True)
    for n in range(1, 6):
        assert C[n - 1] == pytest.approx(correlation_forward(T, tau_cos, h, phi, psi, n), abs=1e-10)


def test_cos_example_decays_at_the_twisted_rate(doubling, tau_cos, h_one):
    C = correlation_series(doubling, tau_cos, h_one, COS_Y, COS_Y, 60)
    fit = fit_decay_rate(C, (10, 60))
    radius = spectral_radius(assemble_koopman(doubling, tau_cos, [1], 64)).value
    # the leading eigenvalue is complex, so C_n oscillates under its envelope
    assert fit.r2 > 0.9
    assert abs(fit.rate - radius) / radius < 0.15
    assert C[59] < 1e-4 * C[0]


def test_coboundary_has_no_decay(doubling, tau_cob, h_one):
    phi = obs({(0, -1): 1.0}, 2)
    psi = obs({(0, 1): 1.0}, 2)
    C = correlation_series(doubling, tau_cob, h_one, phi, psi, 40)
    assert C[9:40].max() >= 0.5 * C[:10].max()
    assert C.min() > 0.1
    try:
        fit = fit_decay_rate(C, (10, 40))
        assert fit.r2 < 0.5
    except WindowTooNoisy:
        pass


def test_fit_exact_geometric():
    n = np.arange(1, 41)
    fit = fit_decay_rate(0.5 * 0.7**n, (10, 40))
    assert fit.rate == pytest.approx(0.7, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0) and fit.excluded == []
    assert fit.used == list(range(10, 41))


def test_fit_with_tiny_noise():
    rng = np.random.default_rng(0)
    n = np.arange(1, 41)
    C = 0.5 * 0.7**n + 1e-14 * rng.standard_normal(40)
    fit = fit_decay_rate(np.abs(C), (10, 40))
    assert fit.rate == pytest.approx(0.7, abs=1e-3)


def test_fit_excludes_floor_and_refuses_noise():
    n = np.arange(1, 41)
    C = 0.5 * 0.3**n
    fit = fit_decay_rate(C, (5, 40))
    assert fit.excluded and min(fit.excluded) > max(fit.used)
    assert fit.rate == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(WindowTooNoisy):
        fit_decay_rate(C, (30, 40))


def test_fit_flat_series_has_zero_r2():
    fit = fit_decay_rate(np.full(40, 0.5), (10, 40))
    assert fit.rate == pytest.approx(1.0) and fit.r2 == 0.0
    assert set(fit.to_dict()) == {"rate", "r2", "window", "used", "excluded"}


def test_observable_dimension_check(doubling, tau_cos, h_one):
    with pytest.raises(ValueError):
        correlation_series(doubling, tau_cos, h_one, obs({(0,): 1.0}, 1), COS_Y, 3)


def test_two_dimensional_base(diag23):
    from skewmix.density import invariant_density
    from skewmix.maps import FiberRotation

    tau = FiberRotation.from_components([TrigPoly.from_real_terms([((1, 0), 0.5, 0.0), ((0, 1), 0.0, 0.4)], 2)])
    h = invariant_density(diag23)
    phi = obs({(0, 0, 1): 1.0, (1, 0, 1): 0.3}, 3)
    psi = obs({(0, 0, -1): 1.0}, 3)
    C = correlation_series(diag23, tau, h, phi, psi, 3, grid=32 * 32, signed=True)
    for n in range(1, 4):
        fwd = correlation_forward(diag23, tau, h, phi, psi, n, grid=256 * 256)
        assert C[n - 1] == pytest.approx(fwd, abs=1e-9)

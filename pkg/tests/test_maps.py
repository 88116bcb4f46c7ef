import numpy as np
import pytest

from fednmap.maps import (GammaRangeWarning, lyapunov, lyapunov_constant, natural_map,
                          normal_map, normal_map_i, psi_value, reference_solve, snapshot,
                          subgradient_distance)
from fednmap.problems import make_composite_quadratic
from fednmap.regularizers import Regularizer

from oracles import brute_prox_scalar, phi_scalar


def lasso_1d():
    # f(x) = 1/2 x^2 - 2x, i.e. 1/2 (x - 2)^2 without its constant 2
    return make_composite_quadratic(1, 1, 0.0, seed=0, diag=[1.0], b=[2.0])


def random_instance(seed, p=6, n=3, hetero=1.0):
    return make_composite_quadratic(n, p, hetero, seed=seed)


# -- normal map ----------------------------------------------------------------------

def test_normal_map_with_zero_phi_is_gradient():
    prob = random_instance(0)
    z = np.linspace(-1, 1, 6)
    x, fnor = normal_map(prob, Regularizer.zero(), 0.3, z)
    np.testing.assert_array_equal(x, z)
    np.testing.assert_allclose(fnor, prob.gradient(z), atol=1e-15)


def test_normal_map_1d_lasso_example():
    prob, reg = lasso_1d(), Regularizer.l1(1.0)
    x_oracle = brute_prox_scalar(phi_scalar("l1", nu1=1.0), 1.0, 0.5)
    assert abs(x_oracle) < 1e-6
    x, fnor = normal_map(prob, reg, 1.0, [0.5])
    assert x[0] == 0.0
    assert fnor[0] == pytest.approx(-1.5, abs=1e-15)


def test_normal_map_vanishes_at_reference_fixed_point():
    prob, reg = random_instance(1), Regularizer.elastic_net(0.3, 0.1)
    sol = reference_solve(prob, reg, 0.2)
    assert sol.converged
    assert np.linalg.norm(normal_map(prob, reg, 0.2, sol.z)[1]) <= 1e-8


def test_client_normal_maps_average_to_global():
    prob, reg = random_instance(2, n=4), Regularizer.l1(0.2)
    z = np.random.default_rng(0).normal(size=6)
    local = np.mean([normal_map_i(prob, reg, 0.5, z, i)[1] for i in range(4)], axis=0)
    np.testing.assert_allclose(local, normal_map(prob, reg, 0.5, z)[1], atol=1e-13)


# -- natural map -----------------------------------------------------------------------

def test_natural_map_with_zero_phi_is_gradient():
    prob = random_instance(3)
    x = np.arange(6.0)
    for gamma in (0.01, 1.0, 7.0):
        np.testing.assert_allclose(natural_map(prob, Regularizer.zero(), gamma, x),
                                   prob.gradient(x), rtol=1e-12, atol=1e-12)


def test_natural_map_1d_lasso_example():
    prob, reg = lasso_1d(), Regularizer.l1(1.0)
    assert brute_prox_scalar(phi_scalar("l1", nu1=1.0), 1.0, 2.0) == pytest.approx(1.0, abs=1e-6)
    assert natural_map(prob, reg, 1.0, [0.0])[0] == pytest.approx(-1.0, abs=1e-15)


def test_natural_map_vanishes_at_lasso_minimizer():
    prob, reg = random_instance(4), Regularizer.l1(0.5)
    sol = reference_solve(prob, reg, 0.2)
    assert np.linalg.norm(natural_map(prob, reg, 0.2, sol.x)) <= 1e-8


# -- Lyapunov ------------------------------------------------------------------------

def test_lyapunov_constant_examples():
    assert lyapunov_constant(0.2, 0.0, 1.0) == pytest.approx(3 / (2 * (3 + 4 / 25)), abs=1e-15)
    assert lyapunov_constant(0.2, 0.0, 1.0) == pytest.approx(0.474684, abs=1e-6)
    assert lyapunov_constant(0.2, 0.0, 0.0) == 0.5


@pytest.mark.parametrize("L", [0.1, 1.0, 10.0, 1e3])
@pytest.mark.parametrize("rho", [0.0, 0.5, 3.0])
def test_lyapunov_constant_range(L, rho):
    gamma = 1.0 / (5.0 * (rho + L))
    assert 4 / 9 <= lyapunov_constant(gamma, rho, L) < 0.5


def test_lyapunov_equals_psi_at_fixed_point():
    prob, reg = random_instance(5), Regularizer.elastic_net(0.2, 0.2)
    gamma = 1.0 / (5 * prob.L_bound)
    sol = reference_solve(prob, reg, gamma)
    assert lyapunov(prob, reg, gamma, sol.z) == pytest.approx(psi_value(prob, reg, sol.x), abs=1e-12)


def test_lyapunov_warns_outside_gamma_range():
    prob, reg = random_instance(6), Regularizer.l1(0.1)
    with pytest.warns(GammaRangeWarning):
        value = lyapunov(prob, reg, 10.0, np.zeros(6))
    assert np.isfinite(value)


# -- reference solver --------------------------------------------------------------------

def test_reference_solver_smooth_closed_form():
    prob = make_composite_quadratic(2, 2, 0.5, seed=8)
    sol = reference_solve(prob, Regularizer.zero(), 0.3)
    exact = np.linalg.solve(prob.mean_hessian, prob.b.mean(axis=0))
    assert sol.converged
    np.testing.assert_allclose(sol.x, exact, atol=1e-10)


def test_reference_solver_1d_lasso():
    prob, reg = lasso_1d(), Regularizer.l1(1.0)
    grid = np.linspace(-3, 3, 600001)
    vals = 0.5 * (grid - 2) ** 2 + np.abs(grid)
    assert grid[np.argmin(vals)] == pytest.approx(1.0, abs=1e-5)
    assert vals.min() == pytest.approx(1.5, abs=1e-9)
    sol = reference_solve(prob, reg, 1.0)
    assert sol.x[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.psi_star + 2.0 == pytest.approx(1.5, abs=1e-10)


def test_reference_solver_methods_agree_on_elastic_net():
    prob, reg = random_instance(9, p=10), Regularizer.elastic_net(0.2, 0.05)
    sol = reference_solve(prob, reg, 0.1)
    assert sol.converged
    assert sol.agreement <= 1e-8


def test_reference_solver_reports_non_convergence():
    prob, reg = random_instance(10), Regularizer.l1(0.1)
    sol = reference_solve(prob, reg, 0.1, max_iter=3)
    assert not sol.converged
    assert sol.iterations == 3


# -- inequalities ------------------------------------------------------------------------

@pytest.mark.parametrize("reg", [Regularizer.l1(0.4), Regularizer.elastic_net(0.3, 0.2),
                                 Regularizer.box(-0.5, 0.5), Regularizer.zero()],
                         ids=["l1", "elastic_net", "box", "zero"])
def test_sandwich_inequality(reg):
    rng = np.random.default_rng(0)
    for k in range(200):
        prob = random_instance(int(rng.integers(1000)), p=5)
        gamma = float(rng.uniform(0.01, 2.0))
        z = rng.normal(size=5) * 3
        x, fnor = normal_map(prob, reg, gamma, z)
        fnat = natural_map(prob, reg, gamma, x)
        dist = subgradient_distance(prob, reg, x)
        assert (1 - gamma * reg.rho) * np.linalg.norm(fnat) <= dist + 1e-10
        assert dist <= np.linalg.norm(fnor) + 1e-10


def test_normal_map_is_a_subgradient_of_psi():
    rng = np.random.default_rng(1)
    prob = random_instance(11, p=7)
    for reg in (Regularizer.l1(0.4), Regularizer.elastic_net(0.3, 0.2), Regularizer.box(-0.3, 0.4)):
        for _ in range(200):
            gamma = float(rng.uniform(0.05, 2.0))
            z = rng.normal(size=7) * 2
            x, fnor = normal_map(prob, reg, gamma, z)
            lower, upper = reg.subdifferential_box(x)
            s = fnor - prob.gradient(x)
            assert np.all(s >= lower - 1e-12) and np.all(s <= upper + 1e-12)


def test_normal_map_lipschitz():
    rng = np.random.default_rng(2)
    prob, reg = random_instance(12, p=6), Regularizer.elastic_net(0.3, 0.1)
    gamma = 0.4
    bound = (prob.L_bound + 2 / gamma) / (1 - gamma * reg.rho)
    for _ in range(1000):
        z, zp = rng.normal(size=6) * 2, rng.normal(size=6) * 2
        num = np.linalg.norm(normal_map(prob, reg, gamma, z)[1] - normal_map(prob, reg, gamma, zp)[1])
        assert num / np.linalg.norm(z - zp) <= bound + 1e-9


def test_pl_inequality_on_strongly_convex_elastic_net():
    rng = np.random.default_rng(3)
    prob, reg = random_instance(13, p=6), Regularizer.elastic_net(0.2, 0.3)
    mu = 2 * reg.nu2
    psi_star = reference_solve(prob, reg, 0.1).psi_star
    for _ in range(1000):
        x = rng.normal(size=6) * 3
        gap = psi_value(prob, reg, x) - psi_star
        assert 2 * mu * gap <= subgradient_distance(prob, reg, x) ** 2 + 1e-10


def test_snapshot_consistency():
    prob, reg = random_instance(14), Regularizer.l1(0.3)
    z = np.random.default_rng(0).normal(size=6)
    snap = snapshot(prob, reg, 0.2, z)
    assert snap.fnat_sq <= snap.fnor_sq + 1e-12
    assert snap.subgrad_dist_sq <= snap.fnor_sq + 1e-12
    with pytest.warns(GammaRangeWarning):
        H = lyapunov(prob, reg, 0.2, z)
    assert snap.lyapunov == pytest.approx(H, abs=1e-12)

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fednmap.schedules import theorem1_params, theorem2_params


def test_theorem1_example():
    s = theorem1_params(L=1.0, rho=0.0, sigma=1.0, T=100, n=10, Q=5, delta_psi=1.0)
    assert s.gamma == pytest.approx(0.2, abs=1e-15)
    assert s.eta_hat == pytest.approx(1 / (320 * math.sqrt(2)), rel=1e-14)
    assert s.eta_hat == pytest.approx(2.2097e-3, abs=1e-7)
    assert s.m == 1
    assert s.eta_a * s.eta_s * 5 == pytest.approx(s.eta_hat, rel=1e-14)


def test_theorem1_eta_a_two_term_denominator():
    s = theorem1_params(L=1.0, rho=0.0, sigma=1.0, T=100, n=10, Q=5, delta_psi=1.0, eta_s_cap=math.inf)
    want = 1 / (380 * (100 * 125 / 10) ** 0.25 + 240 * math.sqrt(500))
    assert s.eta_a == pytest.approx(want, rel=1e-14)


def test_theorem1_four_times_T_halves_eta_hat():
    a = theorem1_params(2.0, 0.5, 1.5, 100, 4, 3, 2.0)
    b = theorem1_params(2.0, 0.5, 1.5, 400, 4, 3, 2.0)
    assert b.eta_hat == pytest.approx(a.eta_hat / 2, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(L=st.floats(0.1, 100), rho=st.floats(0, 10), sigma=st.floats(0.01, 10),
       T=st.integers(1, 10_000), n=st.integers(1, 100), Q=st.integers(1, 50),
       dpsi=st.floats(1e-3, 1e3))
def test_theorem1_premise_satisfied_or_flagged(L, rho, sigma, T, n, Q, dpsi):
    s = theorem1_params(L, rho, sigma, T, n, Q, dpsi)
    gamma = 1 / (5 * (rho + L))
    bound = (1 - gamma * rho) / (100 * s.m * math.sqrt(L * L + 1 / gamma**2))
    assert s.eta_hat <= bound * (1 + 1e-12) or not s.premise_ok


def test_theorem1_zero_noise_fallback():
    L, rho = 2.0, 0.5
    s = theorem1_params(L, rho, 0.0, 100, 4, 3, 1.0)
    gamma = 1 / (5 * (L + rho))
    assert s.m == 1
    assert s.eta_hat == pytest.approx((1 - gamma * rho) / (100 * math.sqrt(L * L + 1 / gamma**2)), rel=1e-14)
    assert any(f.startswith("deterministic") for f in s.flags)
    assert s.premise_ok


def test_theorem1_rejects_bad_inputs():
    with pytest.raises(ValueError):
        theorem1_params(1.0, 0.0, 1.0, 10, 1, 1, 0.0)
    with pytest.raises(ValueError):
        theorem1_params(-1.0, 0.0, 1.0, 10, 1, 1, 1.0)


def test_theorem2_example():
    s = theorem2_params(L=1.0, rho=1.0, mu=1.0, n=10, Q=5, T=100)
    # 120 Q (L + rho + mu) T = 180000
    assert s.eta_a == pytest.approx(math.log(5000) / 180000, rel=1e-14)
    assert s.eta_a == pytest.approx(4.7318e-5, abs=1e-9)
    assert s.gamma == pytest.approx(1 / 15, rel=1e-14)
    assert s.eta_hat == pytest.approx(s.eta_a * 5, rel=1e-14)


def test_theorem2_degenerate_single_everything():
    s = theorem2_params(1.0, 0.0, 1.0, 1, 1, 1)
    assert s.eta_a == 0.0
    assert any(f.startswith("degenerate") for f in s.flags)


def test_theorem2_m():
    assert theorem2_params(L=1.5, rho=0.5, mu=1.0, n=2, Q=2, T=100).m == 50


def test_theorem2_requires_positive_mu():
    with pytest.raises(ValueError):
        theorem2_params(1.0, 0.0, 0.0, 2, 2, 10)

import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapid.errors import ConfigurationError, ContractViolation
from adapid.identifier import IdentifierConfig, SolverSettings, run
from adapid.iss import (asymptotic_bound, bound_rhs, build_g2, build_xi_example,
                        build_xi_general, check_iss, constants_label, gt_value)
from adapid.kinf import PowerTerm
from adapid.losses import LossSpec
from adapid.pe import certify_pe


def test_xi_example_quadratic():
    # p = 2, a = 1, lam = 0.9, T = 2, gamma0 = 1: min(0.3645 r**2, 0.45 r**2)
    xi = build_xi_example(1.0, 2.0, 0.9, 2, 1.0)
    assert xi(1.0) == pytest.approx(0.3645)
    assert xi(3.0) == pytest.approx(0.3645 * 9)


def test_xi_example_mixed_exponents():
    xi = build_xi_example(2.0, 1.0, 0.5, 1, 1.0)
    # min(2 * 1 * 0.5 r, 0.5 r**2): linear beyond r = 2
    assert xi(1.0) == pytest.approx(0.5)
    assert xi(4.0) == pytest.approx(4.0)


def test_general_matches_example():
    X = np.array([[1.0, 0.0], [0.0, 1.0]] * 10)
    cert = certify_pe(X, LossSpec.power(2), T=2)
    g = build_xi_general(cert, LossSpec.power(2), LossSpec.scaled_sq_norm(1.0), 0.9)
    e = build_xi_example(cert.gamma1, 2.0, 0.9, 2, 1.0)
    r = np.logspace(-3, 3, 30)
    np.testing.assert_allclose(g(r), e(r), rtol=1e-12)


def test_build_errors():
    X = np.array([[1.0, 0.0], [0.0, 1.0]] * 5)
    cert = certify_pe(X, LossSpec.power(2), T=2)
    with pytest.raises(ConfigurationError):
        build_xi_general(cert, LossSpec.huber(1.0), LossSpec.scaled_sq_norm(1.0), 0.9)
    with pytest.raises(ConfigurationError):
        build_xi_general(cert, LossSpec.power(2), LossSpec.power(2), 0.9)
    with pytest.raises(ConfigurationError):
        build_xi_general(cert, LossSpec.power(2), LossSpec.scaled_sq_norm(1.0), 1.0)


def test_bound_rhs_example():
    b = bound_rhs([1.0, 1.0], LossSpec.power(2), LossSpec.scaled_sq_norm(1.0), [1.0, 0.0], 0.5)
    np.testing.assert_allclose(b, [2.0, 3.0, 3.5])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 0.999), st.integers(0, 300))
def test_bound_rhs_matches_explicit_sum(seed, lam, N):
    rng = np.random.default_rng(seed)
    v = rng.uniform(-1, 1, N)
    eta0 = rng.normal(size=2)
    psi, psi0 = LossSpec.huber(0.5), LossSpec.scaled_sq_norm(2.0)
    b = bound_rhs(v, psi, psi0, eta0, lam)
    assert b.size == N + 1
    for t in {0, N // 2, N}:
        explicit = 2 * lam ** t * psi0(eta0) + 2 * sum(
            lam ** (t - k) * psi(v[k - 1]) for k in range(1, t + 1))
        assert b[t] == pytest.approx(explicit, rel=1e-12)


def test_asymptotic_examples():
    xi = PowerTerm(1.0, 2.0)
    assert asymptotic_bound(LossSpec.power(2), 0.5, 1.0, xi) == pytest.approx(2.0)
    assert asymptotic_bound(LossSpec.power(2), 0.9, 1.0, xi) == pytest.approx(np.sqrt(20))
    assert asymptotic_bound(LossSpec.power(2), 0.9, 0.0, xi) == 0.0
    with pytest.raises(ContractViolation):
        asymptotic_bound(LossSpec.power(2), 0.9, -1.0, xi)


def test_check_iss_examples():
    xi = PowerTerm(1.0, 2.0)
    est = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 1.0]])
    bt = check_iss(est, [0.0, 0.0], [1.0, 1.0, 1.0], xi)
    np.testing.assert_allclose(bt.err, [0.0, 0.5, np.sqrt(2)])
    np.testing.assert_allclose(bt.xi_inv_b, [1.0, 1.0, 1.0])
    assert bt.violated.tolist() == [False, False, True]
    assert bt.unexplained.tolist() == [2] and bt.n_violations == 1
    bt = check_iss(est, [0.0, 0.0], [1.0, 1.0, 1.0], xi, flags=["ok", "ok", "suboptimal"])
    assert bt.unexplained.size == 0 and bt.solver_flagged.tolist() == [2]
    np.testing.assert_allclose(bt.margin, [1.0, 0.5, 1.0 - np.sqrt(2)])
    with pytest.raises(ContractViolation):
        check_iss(est, [0.0, 0.0], [1.0, 1.0], xi)


def test_tolerance_absorbs_rounding():
    xi = PowerTerm(1.0, 2.0)
    bt = check_iss([[1.0 + 1e-9]], [0.0], [1.0], xi, tol=1e-6)
    assert not bt.violated[0]


def test_write_csv(tmp_path):
    bt = check_iss([[0.0], [2.0]], [0.0], [1.0, 1.0], PowerTerm(1.0, 2.0))
    bt.write_csv(tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["t", "err", "b", "xi_inv_b", "violated", "solver_flag"]
    assert rows[2][0] == "1" and rows[2][4] == "1" and rows[2][5] == "ok"


def stream(N=60, n=2, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, (N, n))


@pytest.mark.parametrize("psi,psi0", [
    (LossSpec.power(2), LossSpec.scaled_sq_norm(1.0)),
    (LossSpec.huber(1.0), LossSpec.scaled_sq_norm(0.5)),
    (LossSpec.power(1), LossSpec.quadratic_form([[2.0, 0.5], [0.5, 1.0]])),
    (LossSpec.power(0.5), LossSpec.scaled_sq_norm(1.0)),
    (LossSpec.power(3), LossSpec.scaled_sq_norm(1.0)),
])
@pytest.mark.parametrize("lam", [0.7, 0.95])
def test_gt_sandwich_on_samples(psi, psi0, lam):
    X = stream()
    cert = certify_pe(X, psi, T=6)
    g1 = build_xi_general(cert, psi, psi0, lam)
    g2 = build_g2(cert, psi, psi0, lam)
    rng = np.random.default_rng(1)
    thetas = rng.normal(size=(400, 2)) * np.exp(rng.uniform(-4, 4, (400, 1)))
    r = np.linalg.norm(thetas, axis=1)
    for t in (0, 1, 5, 6, 17, 60):
        G = gt_value(thetas, X[:t], lam, psi, psi0)
        assert np.all(g1(r) <= G * (1 + 1e-9))
        assert np.all(G <= g2(r) * (1 + 1e-9))


def test_gt_value_explicit():
    X = np.array([[1.0], [2.0]])
    psi, psi0 = LossSpec.power(2), LossSpec.scaled_sq_norm(1.0)
    # 0.5 * (0.5 * 1 + 4) + 0.5 * 0.25 * 1
    assert gt_value([[1.0]], X, 0.5, psi, psi0)[0] == pytest.approx(0.5 * 4.5 + 0.125)


@pytest.mark.parametrize("psi,mode", [(LossSpec.power(2), "rls"), (LossSpec.huber(1.0), "gradient"),
                                      (LossSpec.power(1), "irls")])
def test_identifier_respects_bound(psi, mode):
    rng = np.random.default_rng(2)
    X = stream(N=120, seed=3)
    theta = np.array([1.0, -0.5])
    v = rng.uniform(-0.1, 0.1, 120)
    y = X @ theta + v
    psi0 = LossSpec.scaled_sq_norm(1.0)
    lam = 0.9
    cfg = IdentifierConfig(lam=lam, psi=psi, psi0=psi0, theta0=np.zeros(2),
                           solver=SolverSettings(mode=mode))
    est = run(cfg, X, y)
    cert = certify_pe(X, psi, T=4)
    xi = build_xi_general(cert, psi, psi0, lam)
    b = bound_rhs(v, psi, psi0, cfg.theta0 - theta, lam)
    bt = check_iss(est.thetas, theta, b, xi, flags=est.flags)
    assert bt.n_violations == 0
    assert np.all(bt.margin > 0)


def test_constants_label():
    X = stream()
    assert constants_label(certify_pe(X, LossSpec.power(2), T=4)) == "exact-constants"
    assert constants_label(certify_pe(X, LossSpec.huber(1.0), T=4)) == "estimated-constants"
    assert constants_label(certify_pe(X[:, :1], LossSpec.huber(1.0), T=4)) == "exact-constants"


def test_noise_free_bound_decays():
    psi, psi0 = LossSpec.power(2), LossSpec.scaled_sq_norm(1.0)
    b = bound_rhs(np.zeros(50), psi, psi0, [0.5, -1.0], 0.9)
    np.testing.assert_allclose(b, 2 * 0.9 ** np.arange(51) * 1.25, rtol=1e-13)
    assert np.all(np.diff(b) <= 0)
    np.testing.assert_array_equal(bound_rhs(np.zeros(5), psi, psi0, [0.0, 0.0], 0.9), 0.0)


def test_exact_start_is_equality_boundary():
    # theta_hat_0 = theta_true and no noise: err = 0 = xi^-1(0)
    X = stream(N=20)
    theta = np.array([0.4, 0.1])
    psi, psi0 = LossSpec.power(2), LossSpec.scaled_sq_norm(1.0)
    cfg = IdentifierConfig(lam=0.9, psi=psi, psi0=psi0, theta0=theta.copy())
    est = run(cfg, X, X @ theta)
    xi = build_xi_general(certify_pe(X, psi, T=4), psi, psi0, 0.9)
    bt = check_iss(est.thetas, theta, bound_rhs(np.zeros(20), psi, psi0, np.zeros(2), 0.9), xi)
    assert np.all(bt.xi_inv_b == 0) and np.all(bt.err == 0) and bt.n_violations == 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapid.errors import ConfigurationError, ContractViolation
from adapid.losses import (LossSpec, eval_loss, gh_value, gti_constant, sandwich_bounds,
                           verify_properties)

SCALAR_SPECS = [LossSpec.power(0.5), LossSpec.power(1.0), LossSpec.power(2.0),
                LossSpec.power(3.0), LossSpec.huber(0.5), LossSpec.huber(1.0),
                LossSpec.huber(2.0)]
finite = st.floats(-50, 50, allow_nan=False)


def test_eval_loss_examples():
    assert eval_loss(LossSpec.power(2), 3.0) == 9.0
    assert eval_loss(LossSpec.huber(1.0), 2.0) == 1.5
    assert eval_loss(LossSpec.huber(1.0), 0.5) == 0.125
    for spec in SCALAR_SPECS:
        assert eval_loss(spec, 0.0) == 0.0
    assert eval_loss(LossSpec.scaled_sq_norm(2.0), [1.0, 1.0]) == 4.0
    assert eval_loss(LossSpec.quadratic_form([[1, 0], [0, 4]]), [1.0, 1.0]) == 5.0


def test_scaled_power():
    half = LossSpec.power(2, scale=0.5)
    assert eval_loss(half, 3.0) == 4.5


def test_eval_loss_arity():
    with pytest.raises(ContractViolation):
        eval_loss(LossSpec.power(2), [1.0, 2.0])
    with pytest.raises(ContractViolation):
        eval_loss(LossSpec.quadratic_form(np.eye(3)), [1.0, 2.0])


@pytest.mark.parametrize("bad", [lambda: LossSpec.power(0), lambda: LossSpec.huber(-1),
                                 lambda: LossSpec.scaled_sq_norm(0),
                                 lambda: LossSpec.quadratic_form([[1, 2], [0, 1]]),
                                 lambda: LossSpec.quadratic_form([[1, 0], [0, -1]])])
def test_invalid_specs(bad):
    with pytest.raises((ContractViolation, ConfigurationError)):
        bad()


def test_gti_constants():
    assert gti_constant(LossSpec.power(2)) == 0.5
    assert gti_constant(LossSpec.power(1)) == 1.0
    assert gti_constant(LossSpec.power(0.5)) == 0.5
    assert gti_constant(LossSpec.power(3)) == 0.25
    assert gti_constant(LossSpec.huber(1)) == 0.5
    assert gti_constant(LossSpec.scaled_sq_norm(3.0)) == 0.5


def test_gh_values():
    assert gh_value(LossSpec.power(2), 0.5) == 0.25
    assert gh_value(LossSpec.huber(1.0), 3.0) == 3.0
    assert gh_value(LossSpec.huber(1.0), 0.5) == 0.25
    assert gh_value(LossSpec.power(1), 1.0) == 1.0
    with pytest.raises(ContractViolation):
        gh_value(LossSpec.power(2), 0.0)


@pytest.mark.parametrize("spec", [LossSpec.power(2), LossSpec.huber(1.0)])
def test_gh_ratio_oracle(spec):
    # inf_x psi(x) / psi(x / s) over a dense grid equals f(s) for these families
    x = np.concatenate([-np.logspace(-4, 6, 4000), np.logspace(-4, 6, 4000)])
    for s in (0.1, 0.5, 2.0, 3.0, 10.0):
        ratio = np.min(spec(x) / spec(x / s))
        assert ratio >= gh_value(spec, s) - 1e-12
        assert ratio == pytest.approx(gh_value(spec, s), rel=1e-3)


@pytest.mark.parametrize("spec", SCALAR_SPECS + [LossSpec.scaled_sq_norm(2.0),
                                                 LossSpec.quadratic_form([[2, 1], [1, 3]])])
def test_verify_properties_pass(spec):
    rep = verify_properties(spec, n_samples=10_000, seed=1)
    assert rep.ok, str(rep)
    assert rep.worst_margin >= -1e-9
    assert rep.n_samples == 10_000 and rep.seed == 1 and rep.tol == 1e-9


def test_verify_properties_asymmetric_fails_symmetry():
    def lopsided(e):
        e = np.asarray(e, dtype=float)
        return np.where(e >= 0, e * e, 2 * e * e)

    rep = verify_properties(lopsided, n_samples=2000, seed=0, alpha=0.5, gh=lambda s: s * s)
    assert not rep.passed["symmetric"]


def test_verify_properties_huber_wrong_alpha_fails_gti():
    rep = verify_properties(LossSpec.huber(1.0), n_samples=10_000, seed=0, alpha=1.0)
    assert not rep.passed["gti"]
    assert rep.passed["positive_definite"] and rep.passed["symmetric"] and rep.passed["gh"]
    # the collinear pair x = 2h, y = x / 2 already violates alpha = 1
    h = LossSpec.huber(1.0)
    assert h(1.0) < 1.0 * h(2.0) - h(1.0)


def test_verify_properties_deterministic():
    a = verify_properties(LossSpec.huber(2.0), n_samples=500, seed=3)
    b = verify_properties(LossSpec.huber(2.0), n_samples=500, seed=3)
    assert a.margins == b.margins


@settings(max_examples=300, deadline=None)
@given(finite, finite, st.sampled_from(SCALAR_SPECS))
def test_gti_holds(x, y, spec):
    lhs = spec(x - y)
    rhs = gti_constant(spec) * spec(x) - spec(y)
    assert lhs >= rhs - 1e-9 * (1 + abs(rhs))


@settings(max_examples=300, deadline=None)
@given(finite, st.floats(1e-3, 1e3), st.sampled_from(SCALAR_SPECS))
def test_gh_holds(x, r, spec):
    lhs = spec(x)
    rhs = gh_value(spec, 1.0 / r) * spec(r * x)
    assert lhs >= rhs - 1e-9 * (1 + abs(rhs))


def test_sandwich_quadratic_examples():
    sb = sandwich_bounds(LossSpec.quadratic_form(np.eye(2)))
    assert (sb.D1, sb.D2) == (1.0, 1.0) and sb.exact
    assert sb.xi1(3.0) == 9.0 and sb.xi2(3.0) == 9.0
    sb = sandwich_bounds(LossSpec.scaled_sq_norm(2.0), n=3)
    assert sb.xi1(1.5) == pytest.approx(4.5) and sb.xi2(1.5) == pytest.approx(4.5)
    sb = sandwich_bounds(LossSpec.quadratic_form(np.diag([1.0, 4.0])))
    assert sb.D1 == pytest.approx(1.0) and sb.D2 == pytest.approx(4.0)


def test_sandwich_holds_on_samples():
    W = np.array([[2.0, 0.7, 0.0], [0.7, 1.0, 0.2], [0.0, 0.2, 0.5]])
    spec = LossSpec.quadratic_form(W)
    xi1, xi2 = sandwich_bounds(spec)
    rng = np.random.default_rng(0)
    th = rng.standard_normal((2000, 3)) * np.exp(rng.uniform(-4, 4, (2000, 1)))
    r = np.linalg.norm(th, axis=1)
    v = spec(th)
    assert np.all(xi1(r) <= v * (1 + 1e-12))
    assert np.all(v <= xi2(r) * (1 + 1e-12))


def test_sandwich_sampled_scalar_loss():
    sb = sandwich_bounds(LossSpec.huber(1.0), n=1)
    assert sb.D1 == sb.D2 == 0.5


def test_sandwich_rejects_other_norms():
    with pytest.raises(ConfigurationError):
        sandwich_bounds(LossSpec.scaled_sq_norm(1.0), norm="l1", n=2)


@pytest.mark.parametrize("spec", SCALAR_SPECS + [LossSpec.power(2, scale=0.5),
                                                 LossSpec.scaled_sq_norm(1.5),
                                                 LossSpec.quadratic_form([[2, 1], [1, 3]])])
def test_serialisation_round_trip(spec):
    assert LossSpec.from_dict(spec.to_dict()) == spec


def test_parse_shorthand():
    assert LossSpec.parse("power:2") == LossSpec.power(2.0)
    assert LossSpec.parse("huber:1") == LossSpec.huber(1.0)
    assert LossSpec.parse('{"kind": "huber", "h": 0.5}') == LossSpec.huber(0.5)
    with pytest.raises(ConfigurationError):
        LossSpec.parse("cauchy:1")

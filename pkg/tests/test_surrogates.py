"""Entropy surrogates: frozen closed-form values, bounds, and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow.autodiff import Tape, Tensor, finite_diff_grad
from entroflow.errors import (
    ConfigError,
    DegenerateBatchError,
    FactorizationError,
    UndefinedInformationError,
)
from entroflow.surrogates import (
    SurrogateConfig,
    entropy_logdet,
    entropy_softmax,
    entropy_variance,
    gaussian_entropy_bound,
    mutual_info_upper,
    noisy_rep,
    surrogate_entropy,
)

# Z whose sample covariance is exactly I (orthogonal columns, each with
# unbiased variance 1): columns (1,-1,0) and (1,1,-2)/sqrt(3).
Z_UNIT_COV = np.array(
    [
        [1.0, 1.0 / np.sqrt(3.0)],
        [-1.0, 1.0 / np.sqrt(3.0)],
        [0.0, -2.0 / np.sqrt(3.0)],
    ]
)


def grad_of(f, x0):
    t = Tensor(x0)
    with Tape() as tape:
        out = f(t)
    tape.backward(out)
    return t.grad


# ---------------------------------------------------------------------------
# noisy_rep


def test_noisy_rep_zero_noise_is_identity():
    z = np.arange(6.0).reshape(3, 2)
    out = noisy_rep(z, 0.0, seed=1)
    np.testing.assert_array_equal(out, z)


def test_noisy_rep_determinism_and_mean():
    z = np.zeros((10_000, 10))
    a = noisy_rep(z, 0.3, seed=42)
    b = noisy_rep(z, 0.3, seed=42)
    np.testing.assert_array_equal(a, b)
    c = noisy_rep(z, 0.3, seed=43)
    assert not np.array_equal(a, c)
    # law of large numbers: mean of 1e5 noise entries within 3 sigma/sqrt(n)
    assert abs(a.mean()) <= 3.0 * 0.3 / np.sqrt(1e5)


def test_noisy_rep_is_constant_on_tape():
    z0 = np.ones((4, 3))
    t = Tensor(z0)
    with Tape() as tape:
        zn = noisy_rep(t, 0.5, seed=7)
        out = (zn * zn).sum()
    tape.backward(out)
    # gradient flows through the noisy value: dout/dz = 2*zn, not 2*z
    np.testing.assert_allclose(t.grad, 2.0 * zn.data)


# ---------------------------------------------------------------------------
# frozen surrogate values


def test_entropy_logdet_unit_covariance():
    val = entropy_logdet(Tensor(Z_UNIT_COV), epsilon=0.01).item()
    assert val == pytest.approx(np.log(1.01), rel=1e-12)


def test_entropy_logdet_hand_2x2():
    z = Tensor([[1.0, -1.0], [-1.0, 1.0]])
    val = entropy_logdet(z, epsilon=0.01).item()
    assert val == pytest.approx(0.5 * np.log(0.0401), rel=1e-12)
    assert val == pytest.approx(-1.6080, abs=5e-4)


def test_entropy_logdet_monotone_in_epsilon():
    rng = np.random.default_rng(0)
    z = Tensor(rng.normal(size=(6, 3)))
    vals = [entropy_logdet(z, eps).item() for eps in (1e-4, 1e-2, 1.0)]
    assert vals[0] < vals[1] < vals[2]


def test_entropy_logdet_lower_bound_at_constant_rows():
    p, eps = 3, 1e-2
    z = Tensor(np.tile([1.0, 2.0, 3.0], (5, 1)))
    val = entropy_logdet(z, eps).item()
    assert val == pytest.approx(0.5 * p * np.log(eps), rel=1e-10)


def test_entropy_variance_values():
    assert entropy_variance(Tensor([[1.0, -1.0], [-1.0, 1.0]])).item() == pytest.approx(2.0)
    assert entropy_variance(Tensor(np.tile([3.0, 4.0], (4, 1)))).item() == 0.0
    rng = np.random.default_rng(1)
    z = rng.normal(size=(9, 4))
    v1 = entropy_variance(Tensor(z)).item()
    v2 = entropy_variance(Tensor(2.5 * z)).item()
    assert v2 == pytest.approx(2.5**2 * v1, rel=1e-12)


def test_entropy_variance_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        entropy_variance(Tensor(np.ones((1, 4))))


def test_entropy_softmax_uniform_rows():
    assert entropy_softmax(Tensor(np.zeros((3, 2)))).item() == pytest.approx(np.log(2.0))
    assert entropy_softmax(Tensor(np.full((5, 7), 3.3))).item() == pytest.approx(np.log(7.0))


def test_entropy_softmax_peaked_row():
    z = Tensor([[10.0, 0.0, 0.0, 0.0]])
    val = entropy_softmax(z).item()
    q = np.exp(np.array([10.0, 0.0, 0.0, 0.0]) - 10.0)
    q /= q.sum()
    expected = float(-(q * np.log(q)).sum())
    assert val == pytest.approx(expected, rel=1e-12)
    assert val <= 0.01


def test_entropy_softmax_shift_invariance():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(4, 5))
    shifted = z + rng.normal(size=(4, 1))  # different constant per row
    v1 = entropy_softmax(Tensor(z)).item()
    v2 = entropy_softmax(Tensor(shifted)).item()
    assert v1 == pytest.approx(v2, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(b=st.integers(2, 8), p=st.integers(2, 6), seed=st.integers(0, 2**31 - 1))
def test_entropy_softmax_range_property(b, p, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=3.0, size=(b, p))
    val = entropy_softmax(Tensor(z)).item()
    assert -1e-12 <= val <= np.log(p) + 1e-12


# ---------------------------------------------------------------------------
# Gaussian diagnostics


def test_gaussian_entropy_bound_closed_forms():
    assert gaussian_entropy_bound(np.eye(1)) == pytest.approx(
        0.5 * np.log(2.0 * np.pi * np.e), rel=1e-12
    )
    assert gaussian_entropy_bound(np.eye(2)) == pytest.approx(np.log(2.0 * np.pi * np.e))
    # argument of the log equals one
    sigma = np.array([[np.exp(-1.0) / (2.0 * np.pi)]])
    assert gaussian_entropy_bound(sigma) == pytest.approx(0.0, abs=1e-12)


def test_gaussian_entropy_bound_scaling():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 3))
    sigma = a @ a.T + np.eye(3)
    c = 1.7
    assert gaussian_entropy_bound(c * sigma) == pytest.approx(
        gaussian_entropy_bound(sigma) + 0.5 * 3 * np.log(c), rel=1e-10
    )


def test_gaussian_entropy_bound_rejects_indefinite():
    with pytest.raises(FactorizationError):
        gaussian_entropy_bound(np.diag([1.0, -1.0]))


def test_mutual_info_upper_closed_form_1d():
    # p=1 with sample covariance exactly 4*sigma^2: built from two points
    sigma_xi = 0.5
    var_target = 4.0 * sigma_xi**2
    half = np.sqrt(var_target / 2.0)
    z = np.array([[half], [-half]])  # unbiased variance = 2*half^2 = var_target
    got = mutual_info_upper(z, sigma_xi)
    assert got == pytest.approx(0.5 * np.log(4.0), rel=1e-10)


def test_mutual_info_upper_clips_at_zero():
    rng = np.random.default_rng(4)
    z = 1e-3 * rng.normal(size=(50, 3))
    assert mutual_info_upper(z, sigma_xi=10.0) == 0.0


def test_mutual_info_upper_monotone_in_signal():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(200, 2))
    lo = mutual_info_upper(0.5 * base, 0.1)
    hi = mutual_info_upper(2.0 * base, 0.1)
    assert hi > lo


def test_mutual_info_upper_zero_noise_flagged():
    with pytest.raises(UndefinedInformationError):
        mutual_info_upper(np.ones((4, 2)), 0.0)


# ---------------------------------------------------------------------------
# config & dispatch


def test_surrogate_config_validation():
    with pytest.raises(ConfigError, match="kind"):
        SurrogateConfig(kind="entropy")
    with pytest.raises(ConfigError):
        SurrogateConfig(epsilon=0.0)
    with pytest.raises(ConfigError):
        SurrogateConfig(sigma_xi=-0.1)
    cfg = SurrogateConfig()
    assert (cfg.kind, cfg.epsilon, cfg.sigma_xi) == ("logdet", 1e-4, 0.1)


def test_surrogate_dispatch_consistency():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(8, 4))
    for kind, direct in [
        ("logdet", lambda t: entropy_logdet(t, 1e-4)),
        ("variance", entropy_variance),
        ("softmax", entropy_softmax),
    ]:
        cfg = SurrogateConfig(kind=kind)
        assert surrogate_entropy(Tensor(z), cfg).item() == direct(Tensor(z)).item()


# ---------------------------------------------------------------------------
# gradients vs finite differences (rel 1e-5, B=8, p=4)


@pytest.mark.parametrize(
    "name,f",
    [
        ("logdet", lambda t: entropy_logdet(t, 1e-2)),
        ("variance", entropy_variance),
        ("softmax", entropy_softmax),
    ],
)
def test_surrogate_gradients_match_fd(name, f):
    rng = np.random.default_rng(7)
    z0 = rng.normal(size=(8, 4))
    got = grad_of(f, z0)
    want = finite_diff_grad(f, Tensor(z0), h=1e-5)
    rel = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12)
    assert rel <= 1e-5, f"{name}: rel err {rel:.2e}"

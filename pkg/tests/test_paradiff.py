import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavectl import fourier_core as fc
from wavectl import paradiff as pd


def mode(g, k):
    c = np.zeros(g.shape, complex)
    c[k] = 1.0
    return c


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 3, allow_nan=False), st.floats(-2, 3, allow_nan=False))
def test_smooth_step_is_monotone_step(s, t):
    a, b = pd.smooth_step(min(s, t)), pd.smooth_step(max(s, t))
    assert 0 <= a <= b <= 1
    if max(s, t) <= 0:
        assert b == 0
    if min(s, t) >= 1:
        assert a == 1


def test_smooth_step_symmetry():
    t = np.linspace(0, 1, 101)
    for step in (pd.smooth_step, pd.smooth_step_alt):
        assert np.allclose(step(t) + step(1 - t), 1.0, atol=1e-14)


def test_cutoff_pair_validation_and_support():
    with pytest.raises(ValueError):
        pd.CutoffPair(0.3, 0.1)
    with pytest.raises(ValueError):
        pd.CutoffPair(0.1, 0.6)
    c = pd.DEFAULT_CUTOFF
    assert c.rho(0.05) == 1 and c.rho(0.31) == 0
    assert c.pi_fn(np.array([[0.0]]))[0] == 0 and c.pi_fn(np.array([[1.0]]))[0] == 1


@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8)])
def test_quantization_of_one_is_pi(dim, n):
    g = fc.make_grid(dim, n)
    one = pd.symbol_from_multiplier(g, lambda xi: np.ones(xi.shape[:-1]), 0.0)
    u = fc.random_field(g, np.random.default_rng(1), real=False, zero_mean=False, batch=(5,))
    pi = fc.pi_multiplier().values(g)
    assert np.max(np.abs(pd.paradiff_apply(one, u) - pi[..., None] * u)) < 1e-13


def test_paraproduct_spectral_separation():
    g = fc.make_grid(1, 32)
    x = g.x[0]
    a = fc.forward(g, np.cos(x))
    # low-frequency symbol against a high mode: T_a u = a u exactly
    u = mode(g, 10)
    assert np.allclose(pd.paraproduct(g, a, u), fc.forward(g, np.cos(x) * np.exp(10j * x)),
                       atol=1e-14)
    # high-frequency symbol against a low mode: T_a u = 0
    a_hi = fc.forward(g, np.cos(8 * x))
    assert np.allclose(pd.paraproduct(g, a_hi, mode(g, 1)), 0, atol=1e-14)
    # the remainder vanishes on separated pairs (n = 64 keeps mode 11 below the dealias line)
    g2 = fc.make_grid(1, 64)
    x2 = g2.x[0]
    R = pd.paraproduct_remainder(g2, fc.forward(g2, np.cos(x2)), fc.forward(g2, np.cos(10 * x2)))
    assert np.allclose(R, 0, atol=1e-14)


def direct_paraproduct(g, a, u, cut=pd.DEFAULT_CUTOFF):
    """Double sum over the extended lattice, d = 1, Nyquist split in half."""
    n = g.n
    ext = np.arange(-n // 2, n // 2 + 1)

    def ext_coeff(c, k):
        v = c[k % n]
        return 0.5 * v if abs(k) == n // 2 else v

    out = np.zeros(g.shape, complex)
    for xi in ext:
        acc = 0
        for eta in ext:
            th = xi - eta
            if abs(th) > n // 2:
                continue
            w = cut.chi(np.array([th]), np.array([eta])) * cut.pi_fn(np.array([eta]))
            acc += w * ext_coeff(a, th) * ext_coeff(u, eta)
        out[xi % n] += acc
    return out


def test_paraproduct_against_direct_sum():
    g = fc.make_grid(1, 16)
    rng = np.random.default_rng(3)
    a = fc.random_field(g, rng, real=True, decay=1.0, zero_mean=False)
    u = fc.random_field(g, rng, real=False)
    assert np.allclose(pd.paraproduct(g, a, u), direct_paraproduct(g, a, u), atol=1e-14)


@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8)])
def test_paraproduct_in_symbol_matches_paraproduct(dim, n):
    g = fc.make_grid(dim, n)
    rng = np.random.default_rng(4)
    a = fc.random_field(g, rng, real=True, decay=2.0, zero_mean=False)
    u = fc.random_field(g, rng, real=False)
    M = pd.paraproduct_in_symbol(g, u)
    assert np.allclose(pd.apply_matrix(g, M, a), pd.paraproduct(g, a, u), atol=1e-14)


def test_real_even_symbol_preserves_real_fields():
    g = fc.make_grid(1, 16)
    x = g.x[0].reshape(-1, 1, 1)
    a = pd.make_symbol(g, lambda x, xi: (1 + 0.3 * np.cos(x[..., 0])) * np.sqrt(1 + xi[..., 0] ** 2),
                       1.0, "real-even")
    assert a.check_parity()
    u = fc.random_field(g, np.random.default_rng(5), real=True)
    assert fc.is_real(g, pd.paradiff_apply(a, u), 1e-12)
    assert fc.is_real(g, pd.pseudodiff_apply(a, u), 1e-12)


def test_symbol_shape_and_parity_validation():
    g = fc.make_grid(1, 8)
    with pytest.raises(ValueError):
        pd.SampledSymbol(g, 0.0, np.ones((8, 8)))
    with pytest.raises(ValueError):
        pd.SampledSymbol(g, 0.0, np.ones((8, 9)), "odd")
    bad = pd.SampledSymbol(g, 0.0, 1j * np.ones((8, 9)), "real-even")
    assert not bad.check_parity()


def test_x_derivative_and_composition():
    g = fc.make_grid(1, 16)
    a = pd.make_symbol(g, lambda x, xi: np.sin(x[..., 0]) * xi[..., 0], 1.0)
    d = pd.x_derivative(a, 0)
    want = pd.make_symbol(g, lambda x, xi: np.cos(x[..., 0]) * xi[..., 0], 1.0).values
    assert np.allclose(d, want, atol=1e-12)
    # d_xi(xi) D_x a = -i cos(x) xi
    comp = pd.first_order_composition([np.ones_like(a.values)], a)
    assert np.allclose(comp, -1j * want, atol=1e-12)


def test_operator_order_estimate_bounds():
    g = fc.make_grid(1, 16)
    spec = fc.abs_d(1.0)

    def A(c):
        return fc.apply_multiplier(spec, c, g)

    ests = [pd.operator_order_estimate(A, 1.0, 0.0, g, trials=t) for t in (1, 2, 4)]
    assert all(b >= a - 1e-12 for a, b in zip(ests, ests[1:]))
    exact = np.max(g.kabs / fc.bracket(g))
    assert ests[-1] <= exact + 1e-12 and ests[-1] > 0.9 * exact
    with pytest.raises(ValueError):
        pd.operator_order_estimate(A, 1.0, 0.0, g, trials=0)


def test_realified_matrix_and_band_norm():
    g = fc.make_grid(1, 8)
    spec = fc.abs_d(2.0)

    def A(c):
        return fc.apply_multiplier(spec, c, g)

    M = pd.realified_matrix(g, A)
    c = fc.random_field(g, np.random.default_rng(0), real=False)
    assert np.allclose(M @ fc.realify(g, c), fc.realify(g, A(c)))
    assert np.isclose(pd.band_norm(g, A, 1.0, 2.0), 4.0)

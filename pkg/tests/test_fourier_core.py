import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavectl import fourier_core as fc

grids = st.builds(fc.make_grid, st.sampled_from([1, 2]), st.sampled_from([8, 16]))
seeds = st.integers(0, 2 ** 31)


def test_grid_validation():
    with pytest.raises(ValueError):
        fc.make_grid(3, 16)
    with pytest.raises(ValueError):
        fc.make_grid(1, 15)
    with pytest.raises(ValueError):
        fc.make_grid(1, 6)
    with pytest.raises(ValueError):
        fc.make_grid(1, 16, depth=0.0)


def test_grid_json_round_trip():
    for g in (fc.make_grid(1, 16), fc.make_grid(2, 8, 1.5)):
        assert fc.TorusGrid.from_json(json.loads(json.dumps(g.to_json()))) == g


@settings(max_examples=30, deadline=None)
@given(grids, seeds)
def test_forward_inverse_round_trip(g, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    assert np.allclose(fc.inverse(g, fc.forward(g, u)), u, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(grids, seeds)
def test_parseval_and_inner(g, seed):
    rng = np.random.default_rng(seed)
    a = fc.random_field(g, rng, real=False)
    b = fc.random_field(g, rng, real=False)
    l2 = fc.l2_physical(g, fc.inverse(g, a))
    assert np.isclose(fc.sobolev_norm(g, a), l2, rtol=1e-12)
    ip = fc.inner(g, a, b)
    assert np.isclose(ip, fc.realify(g, a) @ fc.realify(g, b), rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(grids, seeds)
def test_real_imag_split(g, seed):
    rng = np.random.default_rng(seed)
    c = fc.random_field(g, rng, real=False, zero_mean=False)
    re, im = fc.real_part(g, c), fc.imag_part(g, c)
    assert fc.is_real(g, re) and fc.is_real(g, im)
    assert np.allclose(re + 1j * im, c, atol=1e-14)
    u = fc.inverse(g, c)
    assert np.allclose(fc.inverse(g, re), u.real, atol=1e-12)
    assert np.allclose(fc.inverse(g, im), u.imag, atol=1e-12)
    # realified Re/Im matrices agree with the coefficient maps
    assert np.allclose(fc.rmat_re(g) @ fc.realify(g, c), fc.realify(g, re), atol=1e-14)
    assert np.allclose(fc.rmat_im(g) @ fc.realify(g, c), fc.realify(g, im), atol=1e-14)


def test_realify_complexify_and_rmat():
    g = fc.make_grid(2, 8)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(g.shape + (3,)) + 1j * rng.standard_normal(g.shape + (3,))
    assert np.array_equal(fc.complexify(g, fc.realify(g, c)), c)
    A = rng.standard_normal((g.size, g.size)) + 1j * rng.standard_normal((g.size, g.size))
    x = c[..., 0].ravel()
    assert np.allclose(fc.rmat(A) @ fc.realify(g, c[..., 0]), fc.realify(g, (A @ x).reshape(g.shape)))


def test_gradient_of_trig_polynomial():
    g = fc.make_grid(2, 16)
    X, Y = g.x
    u = np.sin(3 * X) * np.cos(2 * Y)
    gx, gy = fc.grad(g, fc.forward(g, u))
    assert np.allclose(fc.to_real(g, gx), 3 * np.cos(3 * X) * np.cos(2 * Y), atol=1e-12)
    assert np.allclose(fc.to_real(g, gy), -2 * np.sin(3 * X) * np.sin(2 * Y), atol=1e-12)
    lap = fc.div(g, [gx, gy])
    assert np.allclose(fc.to_real(g, lap), -13 * u, atol=1e-11)


def test_multipliers_on_single_modes():
    g = fc.make_grid(1, 32, depth=1.0)
    k = 5
    c = np.zeros(g.shape, complex)
    c[k] = 1.0
    G0 = fc.apply_multiplier(fc.dn_flat_multiplier(), c, g)
    assert np.isclose(G0[k], k * np.tanh(k))
    assert np.isclose(fc.apply_multiplier(fc.abs_d(1.5), c, g)[k], k ** 1.5)
    assert fc.apply_multiplier(fc.abs_d(-0.5), np.ones(g.shape), g)[0] == 0
    mb = fc.apply_multiplier(fc.m_b_multiplier(np.inf), c, g)
    assert np.all(mb == 0)
    assert np.array_equal(fc.pi_multiplier().values(g).real, (g.kabs > 0).astype(float))


def test_sobolev_norm_single_mode_and_semiclassical():
    g = fc.make_grid(1, 16)
    c = np.zeros(g.shape, complex)
    c[3] = 2.0
    assert np.isclose(fc.sobolev_norm(g, c, 2.0), 2.0 * 10.0)
    assert np.isclose(fc.sobolev_norm(g, c, 2.0, h=0.5), 2.0 * (1 + 2.25))
    with pytest.raises(ValueError):
        fc.sobolev_norm(g, c, 1.0, h=2.0)
    batch = np.stack([c, 2 * c], axis=-1)
    assert np.allclose(fc.sobolev_norm(g, batch, 1.0), [2 * np.sqrt(10), 4 * np.sqrt(10)])


def test_dealiased_product_matches_exact_for_low_modes():
    g = fc.make_grid(1, 32)
    x = g.x[0]
    a, b = np.cos(2 * x), np.sin(3 * x)
    prod = fc.mul(g, fc.forward(g, a), fc.forward(g, b))
    assert np.allclose(fc.to_real(g, prod), a * b, atol=1e-13)
    # content above n/3 is removed
    hi = fc.mul(g, fc.forward(g, np.cos(8 * x)), fc.forward(g, np.cos(4 * x)))
    assert np.allclose(hi[12], 0) and np.isclose(hi[4], 0.25)


def test_spectral_field_flags_and_json():
    g = fc.make_grid(1, 8)
    with pytest.raises(ValueError):
        fc.SpectralField(g, np.eye(8)[1] * 1j, real=True)
    with pytest.raises(ValueError):
        fc.SpectralField(g, np.eye(8)[0], zero_mean=True)
    f = fc.SpectralField.from_samples(g, np.cos(g.x[0]), real=True)
    back = fc.SpectralField.from_json(json.loads(f.dumps()))
    assert np.allclose(back.coeffs, f.coeffs) and back.real
    assert np.isclose(f.norm(), np.sqrt(0.5))


def test_multiplier_must_be_finite():
    g = fc.make_grid(1, 8)
    bad = fc.MultiplierSpec(lambda gr: 1.0 / gr.kabs, -1.0, "1/|k|")
    with np.errstate(divide="ignore"):
        with pytest.raises(ValueError):
            fc.apply_multiplier(bad, np.ones(g.shape), g)

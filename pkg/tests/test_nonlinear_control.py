import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavectl import evolution as ev
from wavectl import fourier_core as fc
from wavectl import hum_control as hc
from wavectl import nonlinear_control as nc
from wavectl import wave_symbols as ws


@pytest.fixture(scope="module")
def g16():
    return fc.make_grid(1, 16)


def test_random_state_norm_and_mean(g16):
    st0 = nc.random_state(g16, np.random.default_rng(0), 1e-3)
    assert st0.norm(ws.WORK_S) == pytest.approx(1e-3, rel=1e-12)
    assert nc.random_state(g16, np.random.default_rng(0), 1e-3, psi_mean=0.25).psi_mean == 0.25
    assert np.all(fc.dealias(g16, st0.eta) == st0.eta)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_flat_water_flow_group(t1, t2):
    g = fc.make_grid(1, 16)
    flow = nc.FlatWaterFlow(g)
    rng = np.random.default_rng(1)
    e, p = fc.random_field(g, rng), fc.random_field(g, rng)
    a = flow.apply(*flow.apply(e, p, t1), t2)
    b = flow.apply(e, p, t1 + t2)
    assert np.allclose(a[0], b[0], atol=1e-13) and np.allclose(a[1], b[1], atol=1e-13)


def test_kinetic_closed_form(g16):
    st0 = nc.random_state(g16, np.random.default_rng(2), 1e-1, s=2)
    K = fc.to_real(g16, nc.kinetic_terms(g16, st0.eta, st0.psi))
    from wavectl import dn_operator as dn
    G = fc.to_real(g16, dn.dn_apply(g16, st0.eta, st0.psi))
    ex = fc.to_real(g16, fc.grad(g16, st0.eta)[0])
    px = fc.to_real(g16, fc.grad(g16, st0.psi)[0])
    ref = fc.to_real(g16, fc.dealias(g16, fc.forward(
        g16, 0.5 * px ** 2 - 0.5 * (ex * px + G) ** 2 / (1 + ex ** 2) + 0j)))
    # the quotient is not band limited, so the two dealiased routes differ slightly
    assert np.max(np.abs(K - ref)) <= 1e-3 * np.max(np.abs(ref))


def test_simulator_rest_state_and_linear_limit(g16):
    z = ws.SurfaceState.zero(g16)
    tr = nc.simulate_waterwave(z, None, 1.0, 8)
    assert np.all(tr.eta == 0) and np.all(tr.psi == 0)
    st0 = nc.random_state(g16, np.random.default_rng(3), 1e-9)
    tr = nc.simulate_waterwave(st0, None, 1.0, 64)
    e, p = nc.FlatWaterFlow(g16).apply(st0.eta, st0.psi, 1.0)
    assert nc.state_distance(tr.final, ws.SurfaceState(g16, e, p), 0) <= 1e-6 * 1e-9


def test_simulator_conserves_mass_and_energy(g16):
    st0 = nc.random_state(g16, np.random.default_rng(4), 2e-2, s=2)
    E = []
    for steps in (64, 128):
        tr = nc.simulate_waterwave(st0, None, 1.0, steps)
        assert np.allclose(tr.mass(), tr.mass()[0], atol=1e-17)
        E.append(abs(nc.energy(tr.final) - nc.energy(st0)))
    assert E[1] <= 1e-6 * nc.energy(st0)


def test_simulator_pressure_work(g16):
    # a uniform pressure only shifts the mean of psi
    st0 = nc.random_state(g16, np.random.default_rng(5), 1e-3)
    p = np.zeros((9,) + g16.shape, complex)
    p[:, 0] = 0.5
    a = nc.simulate_waterwave(st0, p, 1.0, 8)
    b = nc.simulate_waterwave(st0, None, 1.0, 8)
    assert np.allclose(a.eta, b.eta, atol=1e-18)
    assert a.final.psi_mean - b.final.psi_mean == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        nc.simulate_waterwave(st0, p[:3], 1.0, 8)


def test_node_operators_flat_state(g16):
    z = ws.SurfaceState.zero(g16)
    no = nc.node_operators(g16, z, hc.arc(np.pi).phi_samples(g16))
    assert np.allclose(no.L, no.P, atol=1e-12)
    assert np.allclose(no.P, ev.FlatFlow(g16).generator_matrix(), atol=1e-12)


def test_linearization_reproduces_velocity(g16):
    # -L(u) u is the time derivative of u along the nonlinear flow
    st0 = nc.random_state(g16, np.random.default_rng(0), 1e-2, s=3)
    no = nc.node_operators(g16, st0, hc.arc(np.pi).phi_samples(g16))
    u = ws.to_complex_variable(st0)
    h = 1e-4
    fwd = nc.simulate_waterwave(st0, None, h, 1).final
    rev = nc.simulate_waterwave(ws.SurfaceState(g16, st0.eta, -st0.psi), None, h, 1).final
    back = ws.SurfaceState(g16, rev.eta, -rev.psi)
    udot = (ws.to_complex_variable(fwd) - ws.to_complex_variable(back)) / (2 * h)
    Lu = fc.complexify(g16, no.L @ fc.realify(g16, u))
    Pu = fc.complexify(g16, no.P @ fc.realify(g16, u))
    assert np.linalg.norm(udot + Lu) <= 1e-6 * np.linalg.norm(udot)
    assert np.linalg.norm(udot + Pu) > 1e-4 * np.linalg.norm(udot)


def test_zero_frequency_flat_closed_form(g16):
    reg = hc.arc(np.pi)
    states = [ws.SurfaceState.zero(g16)] * 11
    zf = nc.recover_zero_frequency(states, None, 0.3, 1.1, reg, 2.0)
    c0 = (1.1 - 0.3) / (2.0 * reg.phi_mean(g16))
    assert abs(zf.c0 - c0) <= 1e-12
    assert zf.alpha[0] == 0.3 and abs(zf.alpha[-1] - 1.1) <= 1e-12


def test_c0_update_secant_is_exact_on_affine_maps():
    G = lambda c: 0.3 * c - 2.0
    hist = [(0.0, G(0.0))]
    c = nc._c0_update(hist)
    assert c == G(0.0)
    hist.append((c, G(c)))
    root = nc._c0_update(hist)
    assert abs(G(root) - root) <= 1e-12


def test_scheme_zero_state_and_guards(g16):
    cfg = nc.SchemeConfig()
    zero = np.zeros(g16.shape, complex)
    res = nc.iterate_scheme(zero, hc.arc(5.0), 1.0, 64, cfg, grid=g16)
    assert res.final_residual == 0 and np.all(res.pext == 0)
    big = ws.to_complex_variable(nc.random_state(g16, np.random.default_rng(0), 1e-1))
    with pytest.raises(nc.SchemeError):
        nc.iterate_scheme(big, hc.arc(5.0), 1.0, 64, cfg, grid=g16)
    with pytest.raises(ValueError):
        nc.SchemeConfig(eps0=0)
    with pytest.raises(ValueError):
        nc.end_to_end_control(ws.SurfaceState.zero(g16), ws.SurfaceState.zero(g16),
                              hc.arc(5.0), 1.0, 63)


def test_pressure_assembly(g16):
    reg = hc.arc(np.pi)
    F = np.zeros((3,) + g16.shape, complex)
    p = nc.pressure(g16, reg, F, np.ones(3), c0=2.0)
    assert np.allclose(fc.to_real(g16, p[1]), 2.0 * reg.phi_samples(g16))

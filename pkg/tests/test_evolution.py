import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from wavectl import evolution as ev
from wavectl import fourier_core as fc


def rand_Q(g, steps, scale, seed):
    rng = np.random.default_rng(seed)
    N2 = 2 * g.size
    return [scale * rng.standard_normal((N2, N2)) for _ in range(steps + 1)]


@pytest.mark.parametrize("depth", [np.inf, 1.0])
def test_flat_flow_matches_matrix_exponential(depth):
    g = fc.make_grid(1, 16, depth)
    flow = ev.FlatFlow(g, 1.0)
    P0 = flow.generator_matrix()
    u = fc.random_field(g, np.random.default_rng(0), real=False, decay=1.0)
    for tau in (0.013, -0.2):
        want = fc.complexify(g, sla.expm(-tau * P0) @ fc.realify(g, u))
        assert np.allclose(flow.apply(u, tau), want, atol=1e-12)


def test_dispersion_relation():
    g = fc.make_grid(2, 8, depth=0.7)
    k = g.kabs
    nu = ev.FlatFlow(g, 2.0).frequencies()
    want = np.sqrt((k ** 3 + 2.0 * k) * np.tanh(0.7 * k))
    assert np.allclose(nu, want)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 1000))
def test_flat_flow_group_and_transpose(s, t, seed):
    g = fc.make_grid(1, 16)
    flow = ev.FlatFlow(g)
    rng = np.random.default_rng(seed)
    u = fc.random_field(g, rng, real=False)
    v = fc.random_field(g, rng, real=False)
    assert np.allclose(flow.apply(flow.apply(u, s), t), flow.apply(u, s + t), atol=1e-10)
    lhs = fc.inner(g, flow.apply(u, t), v)
    rhs = fc.inner(g, u, flow.apply(v, t, transpose=True))
    assert np.isclose(lhs, rhs, atol=1e-12)


def test_flat_flow_conserves_quadratic_energy():
    g = fc.make_grid(1, 32)
    flow = ev.FlatFlow(g)
    u = fc.random_field(g, np.random.default_rng(1), real=False, decay=2.0)

    def E(w):
        r, s = fc.real_part(g, w), fc.imag_part(g, w)
        return np.sum(flow.c * np.abs(r) ** 2 + flow.a * np.abs(s) ** 2)

    assert np.isclose(E(flow.apply(u, 0.37)), E(u), rtol=1e-12)


def test_chi_cutoff():
    t = np.linspace(0, 2, 201)
    chi = ev.chi_T(t, 2.0)
    assert np.all(chi[t <= 1.0] == 1) and np.all(chi[t >= 1.5] == 0)
    assert np.all(np.diff(chi) <= 0)


def test_resolution_guard():
    g = fc.make_grid(1, 32)
    with pytest.raises(ev.EvolutionError):
        ev.flat_operator(g, 1.0, 10)
    ev.flat_operator(g, 1.0, 64)


def test_forward_backward_inverse():
    g = fc.make_grid(1, 8)
    op = ev.LinearizedOperator(g, 1.0, 16, Q=rand_Q(g, 16, 0.3, 2))
    rng = np.random.default_rng(3)
    u = fc.random_field(g, rng, real=False)
    G = [fc.random_field(g, rng, real=False) for _ in range(17)]
    u1 = op.step_forward(3, u, G[3], G[4])
    assert np.allclose(op.step_backward(3, u1, G[3], G[4]), u, atol=1e-12)
    tr = ev.solve_forward(u, op, source=G)
    bw = ev.solve_backward(op, G, tr.final)
    assert np.allclose(bw.states, tr.states, atol=1e-10)


def test_dual_recursion_is_transpose():
    g = fc.make_grid(1, 8)
    op = ev.LinearizedOperator(g, 1.0, 16, Q=rand_Q(g, 16, 0.3, 4))
    rng = np.random.default_rng(5)
    u, v = fc.random_field(g, rng, real=False), fc.random_field(g, rng, real=False)
    u1 = op.step_forward(5, u)
    v1, _ = op.dual_step_forward(5, v)
    # <Phi u, v1> = <u, Phi^T v1> = <u, v> for v1 = Phi^{-T} v
    assert np.isclose(fc.inner(g, u1, v1), fc.inner(g, u, v), atol=1e-12)
    vb, _ = op.dual_step_backward(5, v1)
    assert np.allclose(vb, v, atol=1e-12)


def test_discrete_duality_is_exact():
    g = fc.make_grid(1, 8)
    steps = 16
    op = ev.LinearizedOperator(g, 1.0, steps, Q=rand_Q(g, steps, 0.3, 6))
    op = op.with_control(phi=0.5 + 0.5 * np.cos(g.x[0]), chi=ev.chi_T(op.times, 1.0))
    rng = np.random.default_rng(7)
    F = np.array([fc.random_field(g, rng, real=True) for _ in range(steps + 1)])
    v0 = fc.random_field(g, rng, real=False)
    lhs = -fc.inner(g, ev.range_operator(op, [op.apply_B(j, F[j]) for j in range(steps + 1)]), v0)
    rhs = ev.discrete_pairing(op, F, ev.solve_dual(v0, op))
    assert np.isclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_control_operator_transpose():
    g = fc.make_grid(2, 8)
    op = ev.flat_operator(g, 1.0, 64).with_control(phi=np.exp(np.cos(g.x[0])) / np.e,
                                                   chi=np.linspace(1, 0, 65))
    rng = np.random.default_rng(8)
    F, v = fc.random_field(g, rng, real=False), fc.random_field(g, rng, real=False)
    for j in (0, 10, 64):
        assert np.isclose(fc.inner(g, op.apply_B(j, F), v), fc.inner(g, F, op.apply_Bt(j, v)),
                          atol=1e-14)


def test_flat_forward_equals_flow():
    g = fc.make_grid(1, 16)
    op = ev.flat_operator(g, 0.5, 64)
    u = fc.random_field(g, np.random.default_rng(9), real=False)
    tr = ev.solve_forward(u, op)
    assert np.allclose(tr.final, op.flow.apply(u, 0.5), atol=1e-12)
    assert tr.norms().shape == (65,)


def test_trajectory_requires_uniform_nodes():
    g = fc.make_grid(1, 8)
    with pytest.raises(ValueError):
        ev.Trajectory(np.array([0.0, 0.1, 0.3]), np.zeros((3, 8)), g)
    with pytest.raises(ValueError):
        ev.Trajectory(np.array([0.0, 0.1]), np.zeros((3, 8)), g)


def test_system_symbol_flat_eigenvalues():
    g = fc.make_grid(1, 16)
    M = ev.system_symbol_matrix(g)
    ev_ = np.sort(np.abs(np.linalg.eigvals(M)))
    nu = ev.FlatFlow(g).frequencies().ravel()
    want = np.sort(np.concatenate([nu, nu]))
    # the Nyquist mode is shared between +-n/2 and not a clean plane wave
    keep = np.abs(g.k1) < 8
    nz = np.sort(np.concatenate([nu[keep], nu[keep]]))
    assert np.allclose(np.intersect1d(np.round(ev_, 8), np.round(nz, 8)), np.unique(np.round(nz, 8)))


def test_assemble_P_flat_state_is_flat():
    g = fc.make_grid(1, 8)
    op = ev.assemble_P(np.zeros((17,) + g.shape), g, 1.0)
    assert all(np.max(np.abs(Q)) < 1e-12 for Q in op.Q)

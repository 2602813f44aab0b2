"""Time integration of the linearized paradifferential equations.

Everything is R-linear, so operators other than the flat flow are stored as
realified 2N x 2N matrices acting on (Re c, Im c) of the coefficient vector.
The real L^2 inner product is then the Euclidean one and adjoints are
transposes.

One step of the forward scheme for (d/dt + P(t)) u = G(t), P = P0 + Q(t):

    half step of the exact flat flow  exp(-h/2 P0)   (exponential trapezoid
                                                       for the source)
    Crank-Nicolson for Q over h, with Q at the midpoint taken as the
    average of the two nodes
    half step of the exact flat flow

The source at the half-step point is the average of the nodal values.  The
dual scheme is the transposed recursion v_{j+1} = Phi_j^{-T} v_j, which is
the same splitting applied to d/dt v = P^T v.  With these choices the
discrete duality pairing is a trapezoid rule on half-step nodes and the
Gram operator built downstream is exactly symmetric.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import fourier_core as fc
from . import paradiff as pd
from . import wave_symbols as ws
from . import dn_operator as dn

G_DEFAULT = 1.0


class EvolutionError(RuntimeError):
    pass


def chi_T(t, T):
    """Time cutoff: 1 for t <= T/2, 0 for t >= 3T/4, smooth in between."""
    t = np.asarray(t, dtype=float)
    return 1.0 - pd.smooth_step((t / T - 0.5) / 0.25)


def resolution_guard(grid, T, steps):
    kmax = float(np.max(grid.kabs))
    need = 2.0 * kmax ** 1.5 * T / np.pi
    if steps < need:
        raise EvolutionError(f"steps = {steps} below the resolution guard {need:.1f}")


# -- realified helpers ------------------------------------------------------------

def rapply(grid, M, c):
    """Apply a realified matrix to complex coefficient arrays (batch trailing)."""
    c = np.asarray(c)
    x = fc.realify(grid, c)
    y = M @ x.reshape(x.shape[0], -1)
    return fc.complexify(grid, y.reshape(x.shape))


def realify_operator(grid, fn):
    """Realified matrix of an R-linear map on coefficient arrays."""
    return pd.realified_matrix(grid, fn)


# -- exact flat flow ---------------------------------------------------------------

class FlatFlow:
    """exp(-tau P0) for P0 = i|D|^{3/2} - g|D|^{-1/2} Im + i|D|^{1/2} m_b(D) Re.

    With r = Re u and s = Im u it reads r' = a s, s' = -c r, where
    a = |k|^{3/2} + g|k|^{-1/2} and c = |k|^{3/2} tanh(b|k|).
    """

    def __init__(self, grid, g=G_DEFAULT):
        self.grid, self.g = grid, float(g)
        k = grid.kabs
        nz = k > 0
        a = np.zeros_like(k)
        a[nz] = k[nz] ** 1.5 + self.g * k[nz] ** -0.5
        c = k ** 1.5 * fc.tanh_depth(k, grid.depth)
        self.a, self.c = a, c
        self.nu = np.sqrt(a * c)
        self._cache = {}

    def _coeffs(self, tau):
        key = float(tau)
        if key not in self._cache:
            nu = self.nu
            C = np.cos(nu * tau)
            S = np.sin(nu * tau)
            with np.errstate(divide="ignore", invalid="ignore"):
                sa = np.where(nu > 0, self.a * S / np.where(nu > 0, nu, 1), self.a * tau)
                sc = np.where(nu > 0, self.c * S / np.where(nu > 0, nu, 1), self.c * tau)
            self._cache[key] = (C, sa, sc)
        return self._cache[key]

    def apply(self, u, tau, transpose=False):
        g = self.grid
        C, sa, sc = (fc._bshape(g, m, u) for m in self._coeffs(tau))
        r = fc.real_part(g, u)
        s = fc.imag_part(g, u)
        if transpose:
            r2 = C * r - sc * s
            s2 = sa * r + C * s
        else:
            r2 = C * r + sa * s
            s2 = -sc * r + C * s
        return r2 + 1j * s2

    def generator_matrix(self):
        """Realified P0."""
        return realify_operator(self.grid, lambda u: p0_apply(self.grid, u, self.g))

    def frequencies(self):
        return self.nu


def p0_apply(grid, u, g=G_DEFAULT):
    """P0 u with the flat symbols."""
    d32 = fc.apply_multiplier(fc.abs_d(1.5), u, grid)
    im = fc.apply_multiplier(fc.abs_d(-0.5), fc.imag_part(grid, u), grid)
    re = fc.apply_multiplier(fc.m_b_multiplier(), fc.real_part(grid, u), grid)
    re = fc.apply_multiplier(fc.abs_d(0.5), re, grid)
    return 1j * d32 - g * im + 1j * re


# -- trajectories --------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (steps + 1,) + grid.shape + batch
    grid: fc.TorusGrid = None

    def __post_init__(self):
        dt = np.diff(self.times)
        if len(dt) and np.max(np.abs(dt - dt[0])) > 1e-12 * max(1.0, abs(self.times[-1])):
            raise ValueError("trajectory nodes must be uniform")
        if self.states.shape[0] != len(self.times):
            raise ValueError("one state per node required")

    @property
    def final(self):
        return self.states[-1]

    def norms(self, s=0.0):
        return np.array([fc.sobolev_norm(self.grid, u, s) for u in self.states])

    def to_csv(self, path, s=0.0):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", f"norm_H{s:g}"])
            for t, nrm in zip(self.times, self.norms(s)):
                w.writerow([repr(float(t)), repr(float(np.max(nrm)))])


@dataclass
class ControlInput:
    F: np.ndarray               # (steps + 1,) + grid.shape (+ batch)
    times: np.ndarray

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=complex)


# -- the operator --------------------------------------------------------------------

@dataclass
class LinearizedOperator:
    """Frozen-coefficient operator P(t) sampled at uniform nodes on [0, T].

    Q[j] is the realified remainder P(t_j) - P0 (None for the flat case).
    The control operator at node j is chi[j] T_q[j] (phi Re F) unless a
    realified control matrix Bmat[j] is supplied.
    """
    grid: fc.TorusGrid
    T: float
    steps: int
    g: float = G_DEFAULT
    Q: list = None
    Tq: list = None
    phi: np.ndarray = None
    chi: np.ndarray = None
    Bmat: list = None
    states: list = None
    check_guard: bool = True
    _lu: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.check_guard:
            resolution_guard(self.grid, self.T, self.steps)
        if self.phi is None:
            self.phi = np.ones(self.grid.shape)
        if self.chi is None:
            self.chi = np.ones(self.steps + 1)
        self.chi = np.asarray(self.chi, dtype=float)
        self.flow = FlatFlow(self.grid, self.g)

    @property
    def h(self):
        return self.T / self.steps

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def flat(self):
        return self.Q is None

    def with_control(self, phi=None, chi=None, Bmat=None):
        return LinearizedOperator(self.grid, self.T, self.steps, self.g, self.Q, self.Tq,
                                  self.phi if phi is None else phi,
                                  self.chi if chi is None else chi,
                                  Bmat, self.states, False)

    # node operators
    def P_apply(self, j, u):
        out = p0_apply(self.grid, u, self.g)
        if self.Q is not None:
            out = out + rapply(self.grid, self.Q[j], u)
        return out

    def _Tq(self, j, u, herm=False):
        if self.Tq is None:
            return fc.apply_multiplier(fc.pi_multiplier(), u, self.grid)
        M = self.Tq[j].conj().T if herm else self.Tq[j]
        return pd.apply_matrix(self.grid, M, u)

    def _phi(self, u):
        g = self.grid
        return fc.forward(g, fc._bshape(g, self.phi, u) * fc.inverse(g, u))

    def apply_B(self, j, F):
        """Control operator at node j."""
        if self.Bmat is not None:
            return rapply(self.grid, self.Bmat[j], F)
        if self.chi[j] == 0:
            return np.zeros_like(F, dtype=complex)
        return self.chi[j] * self._Tq(j, self._phi(fc.real_part(self.grid, F)))

    def apply_Bt(self, j, v):
        """Transpose of the control operator (real L^2 adjoint)."""
        if self.Bmat is not None:
            return rapply(self.grid, self.Bmat[j].T, v)
        if self.chi[j] == 0:
            return np.zeros_like(v, dtype=complex)
        return self.chi[j] * fc.real_part(self.grid, self._phi(self._Tq(j, v, herm=True)))

    # step pieces
    def _factor(self, j):
        if j not in self._lu:
            Qm = 0.5 * (self.Q[j] + self.Q[j + 1])
            I = np.eye(Qm.shape[0])
            hh = 0.5 * self.h
            self._lu[j] = (sla.lu_factor(I + hh * Qm), sla.lu_factor(I - hh * Qm), Qm)
        return self._lu[j]

    def _C(self, j, u, inverse=False, transpose=False):
        if self.Q is None:
            return u
        lu_p, lu_m, Qm = self._factor(j)
        x = fc.realify(self.grid, u)
        shp = x.shape
        x = x.reshape(shp[0], -1)
        hh = 0.5 * self.h
        if not inverse and not transpose:      # (I + hQ/2)^-1 (I - hQ/2)
            y = sla.lu_solve(lu_p, x - hh * (Qm @ x))
        elif inverse and not transpose:        # (I - hQ/2)^-1 (I + hQ/2)
            y = sla.lu_solve(lu_m, x + hh * (Qm @ x))
        elif transpose and not inverse:        # (I - hQ/2)^T (I + hQ/2)^-T
            z = sla.lu_solve(lu_p, x, trans=1)
            y = z - hh * (Qm.T @ z)
        else:                                  # (I + hQ/2)^T (I - hQ/2)^-T
            z = sla.lu_solve(lu_m, x, trans=1)
            y = z + hh * (Qm.T @ z)
        return fc.complexify(self.grid, y.reshape(shp))

    def _A(self, u, tau, transpose=False):
        return self.flow.apply(u, tau, transpose)

    def step_forward(self, j, u, Gj=None, Gn=None):
        hh = 0.5 * self.h
        y = self._A(u, hh)
        if Gj is not None:
            Gm = 0.5 * (Gj + Gn)
            y = y + 0.25 * self.h * (self._A(Gj, hh) + Gm)
        y = self._A(self._C(j, y), hh)
        if Gj is not None:
            y = y + 0.25 * self.h * (self._A(Gm, hh) + Gn)
        return y

    def step_backward(self, j, u_next, Gj=None, Gn=None):
        hh = 0.5 * self.h
        y = u_next
        if Gj is not None:
            Gm = 0.5 * (Gj + Gn)
            y = y - 0.25 * self.h * (self._A(Gm, hh) + Gn)
        y = self._C(j, self._A(y, -hh), inverse=True)
        if Gj is not None:
            y = y - 0.25 * self.h * (self._A(Gj, hh) + Gm)
        return self._A(y, -hh)

    def dual_step_forward(self, j, v):
        """v_{j+1} = Phi_j^{-T} v_j; also returns the stage midpoint value."""
        hh = 0.5 * self.h
        vm = self._A(v, -hh, transpose=True)
        vp = self._C(j, vm, inverse=True, transpose=True)
        return self._A(vp, -hh, transpose=True), 0.5 * (vm + vp)

    def dual_step_backward(self, j, v_next):
        """v_j = Phi_j^T v_{j+1}; also returns the stage midpoint value."""
        hh = 0.5 * self.h
        vp = self._A(v_next, hh, transpose=True)
        vm = self._C(j, vp, transpose=True)
        return self._A(vm, hh, transpose=True), 0.5 * (vm + vp)


def _check_finite(u, what):
    if not np.all(np.isfinite(u)):
        raise EvolutionError(f"non-finite values in {what}")


def _sources(op, F=None, source=None):
    """Per-node source list (or None)."""
    if F is None and source is None:
        return None
    out = []
    for j in range(op.steps + 1):
        Gj = 0
        if F is not None:
            Gj = Gj + op.apply_B(j, F[j])
        if source is not None:
            Gj = Gj + source[j]
        out.append(np.asarray(Gj, dtype=complex))
    return out


def solve_forward(u0, op, F=None, source=None):
    """Trajectory of (d/dt + P) u = B F + source from u(0) = u0."""
    u = np.asarray(u0, dtype=complex)
    Fa = None if F is None else (F.F if isinstance(F, ControlInput) else F)
    G = _sources(op, Fa, source)
    states = [u]
    for j in range(op.steps):
        if G is None:
            u = op.step_forward(j, u)
        else:
            u = op.step_forward(j, u, G[j], G[j + 1])
        states.append(u)
    out = np.array(states)
    _check_finite(out, "forward solve")
    return Trajectory(op.times, out, op.grid)


def solve_backward(op, G, uT=None):
    """Trajectory of (d/dt + P) u = G with u(T) = uT (default 0)."""
    u = np.zeros_like(G[0]) if uT is None else np.asarray(uT, dtype=complex)
    states = [u]
    for j in reversed(range(op.steps)):
        u = op.step_backward(j, u, G[j], G[j + 1])
        states.append(u)
    out = np.array(states[::-1])
    _check_finite(out, "backward solve")
    return Trajectory(op.times, out, op.grid)


def range_operator(op, G):
    """R G = u(0) for (d/dt + P) u = G, u(T) = 0."""
    u = np.zeros_like(G[0])
    for j in reversed(range(op.steps)):
        u = op.step_backward(j, u, G[j], G[j + 1])
    return u


@dataclass
class DualTrajectory(Trajectory):
    mid: np.ndarray = None      # stage midpoints, (steps,) + grid.shape + batch

    def smoothed(self):
        """Nodal dual values paired with nodal sources by the discrete duality."""
        v, m = self.states, self.mid
        out = np.empty_like(v)
        out[0] = 0.5 * (v[0] + m[0])
        out[-1] = 0.5 * (v[-1] + m[-1])
        out[1:-1] = 0.25 * (2 * v[1:-1] + m[1:] + m[:-1])
        return out


def solve_dual(v0, op):
    """Trajectory of d/dt v = P^T v from v(0) = v0 (real L^2 adjoint of P)."""
    v = np.asarray(v0, dtype=complex)
    states, mids = [v], []
    for j in range(op.steps):
        v, m = op.dual_step_forward(j, v)
        states.append(v)
        mids.append(m)
    out = np.array(states)
    _check_finite(out, "dual solve")
    return DualTrajectory(op.times, out, op.grid, np.array(mids))


def trapezoid_weights(op):
    w = np.full(op.steps + 1, op.h)
    w[0] = w[-1] = 0.5 * op.h
    return w


def discrete_pairing(op, F, dual):
    """sum_j w_j Re(F_j, B_j^T vtilde_j): equals -Re(R B F, v0) exactly."""
    vt = dual.smoothed()
    w = trapezoid_weights(op)
    return float(sum(w[j] * np.sum(fc.inner(op.grid, F[j], op.apply_Bt(j, vt[j])))
                     for j in range(op.steps + 1)))


def trapezoid_pairing(op, F, dual):
    """Plain nodal trapezoid quadrature of int Re(F, B^T v) dt."""
    w = trapezoid_weights(op)
    return float(sum(w[j] * np.sum(fc.inner(op.grid, F[j], op.apply_Bt(j, dual.states[j])))
                     for j in range(op.steps + 1)))


# -- assembly of P along a trajectory ------------------------------------------------

def _transport_matrix(grid, V):
    """div T_V as a complex matrix."""
    M = 0
    for kj, Vj in zip(grid.k, V):
        Tv = pd.paradiff_matrix(pd.symbol_from_function_of_x(grid, fc.real_part(grid, Vj)))
        M = M + (1j * kj.ravel())[:, None] * Tv
    return M


def node_matrices(grid, state, g=G_DEFAULT, cfg=dn.DEFAULT_DN, bundle=None, BV=None):
    """Realified P(u) at one surface state, plus T_q, the bundle and B, V."""
    if bundle is None:
        bundle = ws.build_symbols(grid, state.eta, check=False)
    B, V = ws.compute_BV(state, cfg) if BV is None else BV
    Rm, Im = fc.rmat_re(grid), fc.rmat_im(grid)
    mb = fc.m_b_multiplier().values(grid).real.ravel()
    cplx = 1j * bundle.T("gamma") + _transport_matrix(grid, V)
    P = (fc.rmat(cplx) - g * fc.rmat(bundle.T("r_inv")) @ Im
         + fc.rmat(1j * bundle.T("r") * mb[None, :]) @ Rm)
    return P, bundle.T("q0"), bundle, (B, V)


def assemble_P(ubar, grid, T, g=G_DEFAULT, cfg=dn.DEFAULT_DN, states=None, check_guard=True):
    """LinearizedOperator for P(ubar(t)); ubar is an array (steps+1,)+grid.shape.

    Surface states come from inverting u -> (eta, psi) at every node unless
    supplied.
    """
    ubar = np.asarray(ubar, dtype=complex)
    steps = ubar.shape[0] - 1
    P0 = FlatFlow(grid, g).generator_matrix()
    Q, Tq, sts = [], [], []
    for j in range(steps + 1):
        st = states[j] if states is not None else (
            ws.SurfaceState.zero(grid) if not np.any(ubar[j])
            else ws.from_complex_variable(ubar[j], grid, cfg=cfg))
        P, Tqj, _, _ = node_matrices(grid, st, g, cfg)
        Q.append(P - P0)
        Tq.append(Tqj)
        sts.append(st)
    return LinearizedOperator(grid, T, steps, g, Q, Tq, states=sts, check_guard=check_guard)


def flat_operator(grid, T, steps, g=G_DEFAULT, check_guard=True):
    return LinearizedOperator(grid, T, steps, g, check_guard=check_guard)


# -- the 2-vector system --------------------------------------------------------------

def system_symbol_matrix(grid, state=None, g=G_DEFAULT, cfg=dn.DEFAULT_DN):
    """The 2N x 2N complex matrix of pi(D) Op(A pi) at one surface state."""
    if state is None:
        state = ws.SurfaceState.zero(grid)
    bnd = ws.build_symbols(grid, state.eta, check=False)
    _, V = ws.compute_BV(state, cfg) if np.any(state.eta) or np.any(state.psi) else (
        None, [np.zeros(grid.shape, complex)] * grid.dim)
    xi = pd.xi_grid(grid)
    kabs = np.sqrt(np.sum(xi ** 2, axis=-1))
    mb = kabs * (fc.tanh_depth(kabs, grid.depth) - 1.0)
    bshape = grid.shape + (1,) * grid.dim
    Vphys = [fc.to_real(grid, v).reshape(bshape) for v in V]
    vxi = sum(Vj * xi[..., j] for j, Vj in enumerate(Vphys))
    gam = bnd.gamma.values
    ginv = 0.5 * g * bnd.r_inv.values
    rmb = 0.5 * bnd.r.values * mb

    def op(vals):
        a = pd.SampledSymbol(grid, 0.0, np.broadcast_to(vals, grid.shape + grid.ext_shape))
        return pd.pseudodiff_matrix(a, True)

    pi = np.diag(fc.pi_multiplier().values(grid).real.ravel())
    A11 = op(gam + vxi + ginv + rmb)
    A12 = op(ginv - rmb)
    A21 = op(-ginv - rmb)
    A22 = op(-gam + vxi - ginv + rmb)
    M = np.block([[pi @ A11, pi @ A12], [pi @ A21, pi @ A22]])
    return M


def system_propagator(w0_pair, grid, T, steps, states=None, g=G_DEFAULT):
    """Evolve D_t w + A w = 0 for the pair (w+, w-); frozen symbols per node.

    Each step uses the exponential of the node-averaged matrix.
    """
    wp, wm = (np.asarray(w, dtype=complex) for w in w0_pair)
    resolution_guard(grid, T, steps)
    N = grid.size
    h = T / steps
    if states is None:
        mats = [system_symbol_matrix(grid, None, g)]
    else:
        mats = [system_symbol_matrix(grid, st, g) for st in states]
    x = np.concatenate([wp.reshape(N, -1), wm.reshape(N, -1)])
    out = [x]
    E_flat = None
    for j in range(steps):
        if len(mats) == 1:
            if E_flat is None:
                E_flat = sla.expm(-1j * h * mats[0])
            E = E_flat
        else:
            E = sla.expm(-1j * h * 0.5 * (mats[j] + mats[j + 1]))
        x = E @ x
        out.append(x)
    arr = np.array(out)
    shp = (steps + 1,) + grid.shape + wp.shape[grid.dim:]
    times = np.linspace(0, T, steps + 1)
    return (Trajectory(times, arr[:, :N].reshape(shp), grid),
            Trajectory(times, arr[:, N:].reshape(shp), grid))

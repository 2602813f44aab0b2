"""Control of the nonlinear water-wave system.

The iterative scheme freezes coefficients along the previous iterate u^n and
solves the linear problem (d/dt + P_n + R_n) u = (B_n + beta_n) F with the
control Phi_n u0.  The full operator L_n = P_n + R_n is the exact quasilinear
form of the water-wave vector field in the variable u: for a perturbation v
we pass to surface variables with the base state's symbols, take velocities
that are linear in v with base-state coefficients (so that v = u gives back
the nonlinear vector field), and return to u.  R_n is then L_n - P_n.

The spatial means of psi are not seen by u; they are recovered afterwards
from the scalar balance d/dt mean(psi) = mean(P_ext) - mean(kinetic terms).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fourier_core as fc
from . import paradiff as pd
from . import dn_operator as dn
from . import wave_symbols as ws
from . import evolution as ev
from . import hum_control as hc

log = logging.getLogger(__name__)


class SchemeError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


# -- the water-wave vector field -----------------------------------------------------

def kinetic_linear(grid, eta, psi, B, psi_v, gpsi_v):
    """-1/2 grad psi . grad psi_v + 1/2 B (grad eta . grad psi_v + G psi_v).

    Linear in psi_v (batched), with base-state coefficients.  At psi_v = psi it
    equals -1/2|grad psi|^2 + 1/2 (grad eta . grad psi + G psi)^2 / (1 + |grad eta|^2).
    """
    def ph(c):
        return fc.inverse(grid, c)

    def bc(f, like):
        return f.reshape(grid.shape + (1,) * (np.ndim(like) - grid.dim))

    gpsi = [fc.to_real(grid, c) for c in fc.grad(grid, psi)]
    geta = [fc.to_real(grid, c) for c in fc.grad(grid, eta)]
    gv = [ph(c) for c in fc.grad(grid, psi_v)]
    Bp = fc.to_real(grid, B)
    a = sum(bc(gp, psi_v) * g for gp, g in zip(gpsi, gv))
    b = sum(bc(ge, psi_v) * g for ge, g in zip(geta, gv)) + ph(gpsi_v)
    return fc.dealias(grid, fc.forward(grid, -0.5 * a + 0.5 * bc(Bp, psi_v) * b))


def kinetic_terms(grid, eta, psi, cfg=dn.DEFAULT_DN):
    """K(eta, psi) = 1/2|grad psi|^2 - 1/2 (grad eta . grad psi + G psi)^2/(1+|grad eta|^2)."""
    gpsi = dn.dn_apply(grid, eta, psi, cfg)
    B, _ = dn.bv_fields(grid, eta, psi, gpsi)
    return -kinetic_linear(grid, eta, psi, B, psi, gpsi)


def velocity(grid, eta, psi, g=ev.G_DEFAULT, cfg=dn.DEFAULT_DN, pext=None):
    """(d/dt eta, d/dt psi) of the water-wave system."""
    gpsi = dn.dn_apply(grid, eta, psi, cfg)
    B, _ = dn.bv_fields(grid, eta, psi, gpsi)
    dpsi = -g * eta + dn.mean_curvature(grid, eta) + kinetic_linear(grid, eta, psi, B, psi, gpsi)
    if pext is not None:
        dpsi = dpsi + pext
    return gpsi, dpsi


def energy(state, g=ev.G_DEFAULT, cfg=dn.DEFAULT_DN):
    """1/2 <psi, G psi> + <sqrt(1 + |grad eta|^2) - 1> + g/2 <eta^2> (mean over the torus)."""
    grid = state.grid
    gpsi = dn.dn_apply(grid, state.eta, state.psi, cfg)
    kin = 0.5 * np.mean(fc.to_real(grid, state.psi) * fc.to_real(grid, gpsi))
    geta = [fc.to_real(grid, c) for c in fc.grad(grid, state.eta)]
    surf = np.mean(np.sqrt(1.0 + sum(x ** 2 for x in geta)) - 1.0)
    pot = 0.5 * g * np.mean(fc.to_real(grid, state.eta) ** 2)
    return float(kin + surf + pot)


class FlatWaterFlow:
    """Exact flow of eta' = G(0) psi, psi' = -(g + |D|^2) eta."""

    def __init__(self, grid, g=ev.G_DEFAULT):
        self.grid, self.g = grid, float(g)
        k = grid.kabs
        self.gk = k * fc.tanh_depth(k, grid.depth)
        self.w2 = g + k ** 2
        self.om = np.sqrt(self.gk * self.w2)
        self._cache = {}

    def _coeffs(self, tau):
        if tau not in self._cache:
            om = self.om
            C = np.cos(om * tau)
            S = np.sin(om * tau)
            with np.errstate(divide="ignore", invalid="ignore"):
                s1 = np.where(om > 0, self.gk * S / np.where(om > 0, om, 1), self.gk * tau)
                s2 = np.where(om > 0, self.w2 * S / np.where(om > 0, om, 1), self.w2 * tau)
            self._cache[tau] = (C, s1, s2)
        return self._cache[tau]

    def apply(self, eta, psi, tau):
        C, s1, s2 = self._coeffs(float(tau))
        return C * eta + s1 * psi, -s2 * eta + C * psi


@dataclass
class SurfaceTrajectory:
    times: np.ndarray
    eta: np.ndarray             # (steps + 1,) + grid.shape
    psi: np.ndarray
    grid: fc.TorusGrid

    def state(self, j):
        return ws.SurfaceState(self.grid, self.eta[j], self.psi[j])

    @property
    def final(self):
        return self.state(-1)

    def mass(self):
        return np.array([e[(0,) * self.grid.dim].real for e in self.eta])

    def to_csv(self, path, s=ws.WORK_S):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "eta_norm", "psi_norm", "mass"])
            for j, t in enumerate(self.times):
                w.writerow([repr(float(t)),
                            repr(float(fc.sobolev_norm(self.grid, self.eta[j], s + 0.5))),
                            repr(float(fc.sobolev_norm(self.grid, self.psi[j], s))),
                            repr(float(self.eta[j][(0,) * self.grid.dim].real))])


def simulate_waterwave(state0, pext, T, steps, g=ev.G_DEFAULT, cfg=dn.DEFAULT_DN,
                       blowup=1e3):
    """Integrate the water-wave system with pressure pext at uniform nodes.

    pext: None or coefficient array (steps + 1,) + grid.shape of real fields.
    Strang splitting: exact flat half steps (pressure by the exponential
    trapezoid rule), and classical RK4 over a full step for the nonlinear
    remainder of the vector field.
    """
    grid = state0.grid
    if steps < 1 or not T > 0:
        raise ValueError("need T > 0 and steps >= 1")
    dn._check_eta(grid, state0.eta, cfg)
    h = T / steps
    flow = FlatWaterFlow(grid, g)
    if pext is not None:
        pext = np.asarray(pext, dtype=complex)
        if pext.shape != (steps + 1,) + grid.shape:
            raise ValueError("pext needs one field per node")
    lin_g = fc.dn_flat_multiplier()

    def remainder(e, p):
        de, dp = velocity(grid, e, p, g, cfg)
        de = de - fc.apply_multiplier(lin_g, p, grid)
        dp = dp + g * e - fc.div(grid, fc.grad(grid, e))
        return fc.real_part(grid, de), fc.real_part(grid, dp)

    def half(e, p, P0, P1):
        e2, p2 = flow.apply(e, p, 0.5 * h)
        if P0 is not None:
            ea, pa = flow.apply(0 * P0, P0, 0.5 * h)
            e2 = e2 + 0.25 * h * ea
            p2 = p2 + 0.25 * h * (pa + P1)
        return e2, p2

    eta = np.array(state0.eta)
    psi = np.array(state0.psi)
    out_e, out_p = [eta], [psi]
    scale = max(state0.norm(0.0), 1e-300)
    for j in range(steps):
        P0 = P1 = Pm = None
        if pext is not None:
            P0, P1 = pext[j], pext[j + 1]
            Pm = 0.5 * (P0 + P1)
        eta, psi = half(eta, psi, P0, Pm)
        k1 = remainder(eta, psi)
        k2 = remainder(eta + 0.5 * h * k1[0], psi + 0.5 * h * k1[1])
        k3 = remainder(eta + 0.5 * h * k2[0], psi + 0.5 * h * k2[1])
        k4 = remainder(eta + h * k3[0], psi + h * k3[1])
        eta = eta + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        psi = psi + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        eta, psi = half(eta, psi, Pm, P1)
        eta, psi = fc.real_part(grid, eta), fc.real_part(grid, psi)
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(psi))):
            raise SimulationError(f"non-finite state at step {j + 1}")
        if fc.sobolev_norm(grid, eta) + fc.sobolev_norm(grid, psi) > blowup * max(scale, 1.0):
            raise SimulationError(f"blow-up guard triggered at step {j + 1}")
        out_e.append(eta)
        out_p.append(psi)
    return SurfaceTrajectory(np.linspace(0, T, steps + 1), np.array(out_e), np.array(out_p), grid)


# -- operators of the scheme at one node ------------------------------------------------

@dataclass
class NodeOperators:
    P: np.ndarray               # realified P(u)
    L: np.ndarray               # realified P(u) + R(u)
    Tq: np.ndarray              # complex T_q
    Bn: np.ndarray              # realified F -> T_q(phi Re F) - T_q T_{B(eta, phi Re F)} eta
    state: ws.SurfaceState


def _bc(grid, f, like):
    return f.reshape(grid.shape + (1,) * (np.ndim(like) - grid.dim))


def b_functional(grid, eta, w, cfg=dn.DEFAULT_DN):
    """B(eta, w) = (grad eta . grad w + G(eta) w)/(1 + |grad eta|^2), linear in w."""
    gw = dn.dn_apply(grid, eta, w, cfg)
    B, _ = dn.bv_fields(grid, eta, w, gw)
    return B


def node_operators(grid, state, phi, g=ev.G_DEFAULT, cfg=dn.DEFAULT_DN, delta=1e-4):
    """P, L = P + R and the control matrix at one surface state."""
    eta, psi = state.eta, state.psi
    bnd = ws.build_symbols(grid, eta, check=False)
    gpsi = dn.dn_apply(grid, eta, psi, cfg)
    B, V = dn.bv_fields(grid, eta, psi, gpsi)
    P, Tq, _, _ = ev.node_matrices(grid, state, g, cfg, bnd, (B, V))
    Tq_inv, Tp, Tp_inv = bnd.T_inv("q0"), bnd.T("p"), bnd.T_inv("p")
    TB = pd.paradiff_matrix(pd.symbol_from_function_of_x(grid, fc.real_part(grid, B)))

    # velocity of the base state and the rates of q, p and B along it
    eta_dot = gpsi
    psi_dot = (-g * eta + dn.mean_curvature(grid, eta)
               + kinetic_linear(grid, eta, psi, B, psi, gpsi))
    nrm = float(np.max(np.abs(eta_dot)) + np.max(np.abs(psi_dot))) or 1.0
    dl = delta / nrm
    qdot, pdot = ws.symbol_rates(grid, eta, eta_dot, dl)
    Tqd, Tpd = pd.paradiff_matrix(qdot), pd.paradiff_matrix(pdot)
    if np.any(eta_dot):
        Bp = b_functional(grid, eta + dl * eta_dot, psi + dl * psi_dot, cfg)
        Bm = b_functional(grid, eta - dl * eta_dot, psi - dl * psi_dot, cfg)
        Bdot = fc.real_part(grid, (Bp - Bm) / (2 * dl))
    else:
        Bdot = np.zeros(grid.shape, complex)
    TBd = pd.paradiff_matrix(pd.symbol_from_function_of_x(grid, Bdot))

    # u-velocity of a perturbation v, on the realified basis
    N = grid.size
    E = fc.complexify(grid, np.eye(2 * N))
    app = lambda M, c: pd.apply_matrix(grid, M, c)
    w_v = app(Tq_inv, fc.real_part(grid, E))               # psi_v - T_B eta_v
    eta_v = -app(Tp_inv, fc.imag_part(grid, E))
    psi_v = w_v + app(TB, eta_v)
    eta_dv = dn.dn_apply(grid, eta, psi_v, cfg)
    psi_dv = (-g * eta_v + dn.mean_curvature_linear(grid, eta, eta_v)
              + kinetic_linear(grid, eta, psi, B, psi_v, eta_dv))
    u_dv = (app(Tq, psi_dv - app(TB, eta_dv)) - 1j * app(Tp, eta_dv)
            + app(Tqd, w_v) - app(Tq @ TBd, eta_v) - 1j * app(Tpd, eta_v))
    L = -fc.realify(grid, u_dv)

    # control matrix (B + beta) without the time cutoff
    Fr = fc.real_part(grid, E)
    w = fc.forward(grid, _bc(grid, phi, Fr) * fc.inverse(grid, Fr))
    Bw = b_functional(grid, eta, w, cfg)
    Mpar = pd.paraproduct_in_symbol(grid, eta)
    Bn = fc.realify(grid, app(Tq, w - app(Mpar, Bw)))
    return NodeOperators(P, L, Tq, Bn, state)


def uniform_field(grid):
    one = np.zeros(grid.shape, dtype=complex)
    one[(0,) * grid.dim] = 1.0
    return one


# -- the iterative scheme ------------------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    eps0: float = 2.0
    K: float = 1e3
    tol: float = 1e-9           # relative to the first increment ||u^1||
    maxiter: int = 12
    s: float = ws.WORK_S
    g: float = ev.G_DEFAULT
    phi_tol: float = 1e-10
    gram_method: str = "dense"
    cg_tol: float = 1e-10
    check_amplitude: bool = True
    floor_factor: float = 1e4
    dn_cfg: dn.DNConfig = dn.DEFAULT_DN

    def __post_init__(self):
        if not (self.eps0 > 0 and self.K > 0 and self.tol > 0 and self.maxiter >= 1):
            raise ValueError("invalid scheme configuration")


@dataclass
class SchemeState:
    n: int
    u_traj: ev.Trajectory
    F_traj: ev.ControlInput
    deltas: list
    states: list
    c0: float = 0.0
    pext: np.ndarray = None     # coefficients of the pressure at the nodes
    phi_info: list = field(default_factory=list)
    final_residual: float = np.nan

    @property
    def ratios(self):
        d = self.deltas
        return [d[i + 1] / d[i] for i in range(1, len(d) - 1) if d[i] > 0]


def scheme_operators(grid, u_traj, T, region, cfg, states=None):
    """Frozen-coefficient operators along a u trajectory."""
    steps = u_traj.shape[0] - 1
    phi = region.phi_samples(grid)
    P0 = ev.FlatFlow(grid, cfg.g).generator_matrix()
    nodes, sts = [], []
    for j in range(steps + 1):
        if not np.any(u_traj[j]):
            st = ws.SurfaceState.zero(grid)
        else:
            guess = states[j].eta if states is not None else None
            st = ws.from_complex_variable(u_traj[j], grid, cfg=cfg.dn_cfg, eta0=guess)
        nodes.append(node_operators(grid, st, phi, cfg.g, cfg.dn_cfg))
        sts.append(st)
    chi = ev.chi_T(np.linspace(0, T, steps + 1), T)
    opP = ev.LinearizedOperator(grid, T, steps, cfg.g, [nd.P - P0 for nd in nodes],
                                [nd.Tq for nd in nodes], phi, chi, states=sts,
                                check_guard=False)
    opL = ev.LinearizedOperator(grid, T, steps, cfg.g, [nd.L - P0 for nd in nodes],
                                None, phi, chi, [c * nd.Bn for c, nd in zip(chi, nodes)],
                                states=sts, check_guard=False)
    return opP, opL, nodes


def _c0_source(grid, nodes, c0):
    if c0 == 0:
        return None
    one = fc.realify(grid, uniform_field(grid))
    return [c0 * fc.complexify(grid, nd.Bn @ one) for nd in nodes]


def pressure(grid, region, F, chi, c0=0.0):
    """Coefficients of P_ext = phi (chi Re F + c0) at every node."""
    phi = region.phi_samples(grid)
    out = []
    for Fj, cj in zip(F, chi):
        val = cj * fc.to_real(grid, fc.real_part(grid, Fj)) + c0
        out.append(fc.forward(grid, phi * val))
    return np.array(out)


def roundoff_floor(grid, traj, s, factor=1e4):
    """H^s size of a roundoff-level perturbation spread over the lattice."""
    l2 = max(float(fc.sobolev_norm(grid, u)) for u in traj)
    top = float(np.max(fc.bracket(grid))) ** s
    return factor * np.finfo(float).eps * l2 * top * np.sqrt(grid.size)


def iterate_scheme(u0, region, T, steps, cfg=SchemeConfig(), c0=0.0, init=None, grid=None):
    """F^{n+1} = Phi_n(u0), then (d/dt + P_n + R_n) u^{n+1} = (B_n + beta_n) F^{n+1}."""
    u0 = np.asarray(u0, dtype=complex)
    if grid is None:
        raise ValueError("grid required")
    ev.resolution_guard(grid, T, steps)
    s_d = cfg.s - 1.5
    amp = float(fc.sobolev_norm(grid, u0, cfg.s))
    if cfg.check_amplitude and amp >= cfg.eps0 / cfg.K:
        raise SchemeError(f"||u0||_H^s = {amp:.3g} is not below eps0/K = {cfg.eps0 / cfg.K:.3g}")
    times = np.linspace(0, T, steps + 1)
    chi = ev.chi_T(times, T)
    if init is None:
        u_prev = np.zeros((steps + 1,) + grid.shape, dtype=complex)
        states = None
    else:
        u_prev, states = init.u_traj.states, init.states
    scale = max(float(fc.sobolev_norm(grid, u0, s_d)),
                max((float(fc.sobolev_norm(grid, u, s_d)) for u in u_prev), default=0.0), 1e-300)
    deltas = []
    infos = []
    F = None
    if amp == 0 and c0 == 0:
        F = np.zeros_like(u_prev)
        st = SchemeState(1, ev.Trajectory(times, u_prev, grid), ev.ControlInput(F, times),
                         [0.0], [ws.SurfaceState.zero(grid)] * (steps + 1), c0,
                         pressure(grid, region, F, chi, c0))
        st.final_residual = 0.0
        return st
    for n in range(cfg.maxiter):
        opP, opL, nodes = scheme_operators(grid, u_prev, T, region, cfg, states)
        states = opP.states
        src = _c0_source(grid, nodes, c0)
        target = u0 if src is None else u0 - ev.range_operator(opL, src)
        sysg = hc.GramSystem(opP, cg_tol=cfg.cg_tol, method=cfg.gram_method)
        ctrl, info = hc.phi_control(target, sysg, opL, tol=cfg.phi_tol, info=True)
        F = ctrl.F
        infos.append({k: v for k, v in info.items() if k != "v0"})
        tr = ev.solve_forward(u0, opL, F, src)
        u_new = tr.states
        delta = float(max(fc.sobolev_norm(grid, u_new[j] - u_prev[j], s_d)
                          for j in range(steps + 1)))
        deltas.append(delta)
        u_prev = u_new
        log.info("scheme iteration %d: delta %.3e", n + 1, delta)
        floor = roundoff_floor(grid, u_new, s_d, cfg.floor_factor)
        if delta <= floor:
            break
        if len(deltas) >= 3 and deltas[-1] / deltas[-2] >= 0.9:
            raise SchemeError(f"scheme does not contract (delta ratio {deltas[-1] / deltas[-2]:.3g}, "
                              f"deltas {['%.2e' % d for d in deltas]}); eps0 too large")
        if delta <= cfg.tol * max(deltas[0] if init is None else 0.0, scale):
            break
    else:
        raise SchemeError(f"scheme did not reach tol {cfg.tol:.1e} in {cfg.maxiter} iterations "
                          f"(last delta {deltas[-1]:.3g})")
    # surface states of the final iterate
    final_states = []
    for j in range(steps + 1):
        if not np.any(u_prev[j]):
            final_states.append(ws.SurfaceState.zero(grid))
        else:
            final_states.append(ws.from_complex_variable(u_prev[j], grid, cfg=cfg.dn_cfg,
                                                         eta0=states[j].eta))
    res = float(fc.sobolev_norm(grid, u_prev[-1], s_d)
                / max(fc.sobolev_norm(grid, u0, s_d), 1e-300))
    out = SchemeState(len(deltas), ev.Trajectory(times, u_prev, grid), ev.ControlInput(F, times),
                      deltas, final_states, c0, pressure(grid, region, F, chi, c0), infos, res)
    return out


# -- zero frequency --------------------------------------------------------------------

@dataclass
class ZeroFreqSolution:
    times: np.ndarray
    alpha: np.ndarray
    c0: float
    kinetic_mean: np.ndarray = None


def _trapz_cum(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def recover_zero_frequency(traj, F, psi0_mean, psi1_mean, region, T, chi=None,
                           cfg=dn.DEFAULT_DN, kinetic=None):
    """alpha(t) = mean psi0 + int_0^t mean(phi chi Re F + c0 phi - K) and its c0.

    traj: list of SurfaceState (or SurfaceTrajectory) at uniform nodes on [0, T];
    F: control coefficients at the nodes (None for no control).  Means are
    averages over the torus.
    """
    if isinstance(traj, SurfaceTrajectory):
        states = [traj.state(j) for j in range(len(traj.times))]
    else:
        states = list(traj)
    grid = states[0].grid
    m = len(states)
    times = np.linspace(0, T, m)
    phi = region.phi_samples(grid)
    phi_mean = float(np.mean(phi))
    if not phi_mean > 0:
        raise ValueError("control region has zero measure")
    if chi is None:
        chi = np.ones(m)
    if kinetic is None:
        kinetic = np.array([fc.to_real(grid, kinetic_terms(grid, st.eta, st.psi, cfg)).mean()
                            if np.any(st.psi) else 0.0 for st in states])
    if F is None:
        force = np.zeros(m)
    else:
        force = np.array([cj * np.mean(phi * fc.to_real(grid, fc.real_part(grid, Fj)))
                          for Fj, cj in zip(F, chi)])
    alpha0 = psi0_mean + _trapz_cum(force - kinetic, times)
    c0 = (psi1_mean - alpha0[-1]) / (T * phi_mean)
    alpha = alpha0 + c0 * phi_mean * times
    return ZeroFreqSolution(times, alpha, float(c0), kinetic)


# -- end to end ------------------------------------------------------------------------

@dataclass
class EndToEndResult:
    times: np.ndarray
    pext: np.ndarray            # coefficients, (steps + 1,) + grid.shape
    error: float
    c0: float
    halves: tuple
    simulation: SurfaceTrajectory = None
    c0_history: list = field(default_factory=list)
    zero_freq: ZeroFreqSolution = None


def _c0_update(hist):
    """Fixed-point step, or a secant step on r(c) = c0(c) - c once two passes exist."""
    c_b, g_b = hist[-1]
    if len(hist) < 2:
        return g_b
    c_a, g_a = hist[-2]
    r_a, r_b = g_a - c_a, g_b - c_b
    if r_b == r_a or c_b == c_a:
        return g_b
    return c_b - r_b * (c_b - c_a) / (r_b - r_a)


def _glue(first, second):
    """Forward half on [0, T/2] and the reversed second half, at shared node T/2."""
    return np.concatenate([first, second[::-1][1:]], axis=0)


def end_to_end_control(state0, state1, region, T, steps, cfg=SchemeConfig(), c0_tol=1e-9,
                       c0_maxiter=8, simulate=True):
    """Pressure steering state0 to state1 in time T (steps uniform nodes).

    The first half drives state0 to rest on [0, T/2]; the second half drives
    the time-reversed target (eta1, -psi1) to rest, and is read backwards.
    c0 is updated from the zero-frequency balance until it is stationary;
    after two passes the update is a secant step on c -> c0(c) - c.
    """
    grid = state0.grid
    if steps % 2:
        raise ValueError("steps must be even")
    half_T, half_n = 0.5 * T, steps // 2
    tags = ("forward half", "reversed half")
    try:
        s_rev = ws.SurfaceState(grid, state1.eta, -state1.psi)
        u_a = ws.to_complex_variable(state0, cfg=cfg.dn_cfg) if np.any(state0.eta) or np.any(state0.psi) \
            else np.zeros(grid.shape, complex)
        u_b = ws.to_complex_variable(s_rev, cfg=cfg.dn_cfg) if np.any(s_rev.eta) or np.any(s_rev.psi) \
            else np.zeros(grid.shape, complex)
    except Exception as exc:
        raise SchemeError(f"[initial data] {exc}") from exc
    times = np.linspace(0, T, steps + 1)
    chi_h = ev.chi_T(np.linspace(0, half_T, half_n + 1), half_T)
    chi = _glue(chi_h, chi_h)
    c0, hist = 0.0, []
    halves = (None, None)
    for it in range(c0_maxiter):
        new = []
        for tag, u0, prev in zip(tags, (u_a, u_b), halves):
            try:
                new.append(iterate_scheme(u0, region, half_T, half_n, cfg, c0, prev, grid))
            except Exception as exc:
                raise SchemeError(f"[{tag}] {exc}") from exc
        halves = tuple(new)
        a, b = halves
        states = a.states + [ws.SurfaceState(grid, st.eta, -st.psi) for st in b.states[::-1][1:]]
        F = _glue(a.F_traj.F, b.F_traj.F)
        zf = recover_zero_frequency(states, F, state0.psi_mean, state1.psi_mean, region, T,
                                    chi, cfg.dn_cfg)
        hist.append((c0, zf.c0))
        log.info("c0 pass %d: c0 in %.12e, out %.12e", it + 1, c0, zf.c0)
        if abs(zf.c0 - c0) <= c0_tol * max(1.0, abs(zf.c0)) or (zf.c0 == 0 and it == 0):
            c0 = zf.c0
            break
        c0 = _c0_update(hist)
    else:
        raise SchemeError(f"[zero frequency] c0 not stationary after {c0_maxiter} passes "
                          f"(last change {abs(hist[-1][1] - hist[-1][0]):.3g})")
    pext = _glue(halves[0].pext, halves[1].pext)
    res = EndToEndResult(times, pext, np.nan, c0, halves, c0_history=hist, zero_freq=zf)
    if simulate:
        try:
            sim = simulate_waterwave(state0, pext, T, steps, cfg.g, cfg.dn_cfg)
        except Exception as exc:
            raise SchemeError(f"[verification] {exc}") from exc
        res.simulation = sim
        res.error = state_distance(sim.final, state1, cfg.s)
    return res


def state_distance(a, b, s=ws.WORK_S):
    """||eta_a - eta_b||_{H^{s+1/2}} + ||psi_a - psi_b||_{H^s}."""
    g = a.grid
    return float(fc.sobolev_norm(g, a.eta - b.eta, s + 0.5) + fc.sobolev_norm(g, a.psi - b.psi, s))


def random_state(grid, rng, amplitude, s=ws.WORK_S, decay=None, psi_mean=0.0):
    """Smooth random state scaled to ||eta||_{H^{s+1/2}} + ||psi||_{H^s} = amplitude."""
    if decay is None:
        decay = s + 2.0
    eta = fc.random_field(grid, rng, real=True, decay=decay + 0.5)
    psi = fc.random_field(grid, rng, real=True, decay=decay)
    eta = fc.dealias(grid, eta)
    psi = fc.dealias(grid, psi)
    st = ws.SurfaceState(grid, eta, psi)
    k = amplitude / st.norm(s)
    psi = k * psi
    psi[(0,) * grid.dim] = psi_mean
    return ws.SurfaceState(grid, k * eta, psi)

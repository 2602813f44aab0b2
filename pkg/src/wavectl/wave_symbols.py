"""Surface state, good unknown, symmetrizer symbols and the complex unknown u.

Symbols are sampled on grid points times the extended frequency lattice.
Closed-form xi-derivatives are used; x-derivatives are spectral.  Every
symbol homogeneous in xi is set to 0 on the xi = 0 column, which the
low-frequency cutoff removes anyway.
"""
from dataclasses import dataclass, field

import numpy as np

from . import fourier_core as fc
from . import paradiff as pd
from . import dn_operator as dn

WORK_S = 12.0
FP_TOL = 1e-11
FP_MAXITER = 50


class InversionError(ValueError):
    """The fixed point defining eta(u) failed to converge."""


@dataclass
class SurfaceState:
    grid: fc.TorusGrid
    eta: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=complex)
        self.psi = np.asarray(self.psi, dtype=complex)
        for name, c in (("eta", self.eta), ("psi", self.psi)):
            if c.shape != self.grid.shape:
                raise ValueError(f"{name} does not match the grid")
            if not fc.is_real(self.grid, c, 1e-10):
                raise ValueError(f"{name} must be real valued")
        scale = max(np.max(np.abs(self.eta)), 1e-300)
        if abs(self.eta[(0,) * self.grid.dim]) > 1e-12 * max(scale, 1.0):
            raise ValueError("eta must have zero mean")
        self.eta[(0,) * self.grid.dim] = 0.0

    @classmethod
    def zero(cls, grid):
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, z, z.copy())

    @property
    def psi_mean(self):
        return float(self.psi[(0,) * self.grid.dim].real)

    def norm(self, s=WORK_S):
        """||eta||_{H^{s+1/2}} + ||psi||_{H^s}."""
        return float(fc.sobolev_norm(self.grid, self.eta, s + 0.5)
                     + fc.sobolev_norm(self.grid, self.psi, s))


def compute_BV(state, cfg=dn.DEFAULT_DN):
    g_psi = dn.dn_apply(state.grid, state.eta, state.psi, cfg)
    return dn.bv_fields(state.grid, state.eta, state.psi, g_psi)


def good_unknown(state, B=None, cfg=dn.DEFAULT_DN):
    """omega = psi - T_B eta."""
    if B is None:
        B, _ = compute_BV(state, cfg)
    return state.psi - pd.paraproduct(state.grid, B, state.eta)


# -- symbols -------------------------------------------------------------------

def _dx(grid, arr, j):
    """Spectral x_j-derivative of an array of shape grid.shape + trailing.

    The Nyquist wavenumber is dropped so real tables stay real.
    """
    kj = np.where(np.abs(grid.k[j]) == grid.n // 2, 0, grid.k[j])
    kj = kj.reshape(grid.shape + (1,) * (arr.ndim - grid.dim))
    return fc.ifft(grid, 1j * kj * fc.fft(grid, arr))


def _resolved(grid, eta, tol=1e-8):
    mass = np.abs(eta) ** 2
    total = mass.sum()
    if total == 0:
        return True
    top = ~grid.dealias_mask
    return mass[top].sum() <= tol * total


def _raw_symbols(grid, eta):
    """Dictionary of raw symbol tables at eta (arrays grid.shape + ext_shape)."""
    d = grid.dim
    bshape = grid.shape + (1,) * d
    geta = [fc.to_real(grid, c).reshape(bshape) for c in fc.grad(grid, eta)]
    xi = pd.xi_grid(grid).reshape((1,) * d + grid.ext_shape + (d,))
    xis = [xi[..., j] for j in range(d)]
    s = sum(gj ** 2 for gj in geta)
    one_s = 1.0 + s
    dot = sum(gj * xj for gj, xj in zip(geta, xis))
    xi2 = sum(xj ** 2 for xj in xis)
    full = grid.shape + grid.ext_shape
    zero = np.broadcast_to(xi2 == 0, full)
    nz = ~zero

    def safe(arr):
        arr = np.array(np.broadcast_to(arr, full), dtype=complex)
        arr[zero] = 0.0
        return arr

    def div0(a, b):
        a = np.broadcast_to(a, full)
        b = np.broadcast_to(b, full)
        out = np.zeros(full, dtype=complex)
        out[nz] = a[nz] / b[nz]
        return out

    lam1 = safe(np.sqrt(np.maximum(one_s * xi2 - dot ** 2, 0.0)))
    dlam1 = [div0(one_s * xj - dot * gj, lam1) for xj, gj in zip(xis, geta)]
    ell2 = safe(one_s ** -0.5 * (xi2 - dot ** 2 / one_s))
    dell2 = [safe(one_s ** -0.5 * (2 * xj - 2 * dot * gj / one_s))
             for xj, gj in zip(xis, geta)]
    gam32 = np.sqrt(ell2 * lam1)
    dgam32 = [div0(de * lam1 + ell2 * dl, 2 * gam32) for de, dl in zip(dell2, dlam1)]

    alpha1 = safe((lam1 + 1j * dot) / one_s)
    flux = sum(_dx(grid, alpha1 * np.broadcast_to(gj, full), j)
               for j, gj in enumerate(geta))
    grad_alpha = [_dx(grid, alpha1, j) for j in range(d)]
    brace = flux + 1j * sum(dl * ga for dl, ga in zip(dlam1, grad_alpha))
    lam0 = div0(one_s * brace, 2 * lam1)

    ell1 = -1j * sum(_dx(grid, 0.5 * de, j) for j, de in enumerate(dell2))
    ell1 = safe(ell1)
    corr = 0.5 * sum(-1j * _dx(grid, dg, j) for j, dg in enumerate(dgam32))
    gam12 = safe(np.sqrt(div0(ell2, lam1)) * lam0.real / 2 + corr)

    q0 = np.array(np.broadcast_to(one_s ** 0.25, full), dtype=complex)
    p12 = safe(one_s ** -0.5 * np.sqrt(lam1))
    dxp = [_dx(grid, p12, j) for j in range(d)]
    num = q0 * ell1 - gam12 * p12 + 1j * sum(dg * dp for dg, dp in zip(dgam32, dxp))
    pm12 = div0(num, gam32)
    r = div0(p12, q0)
    rinv = div0(q0, p12)
    return dict(lambda1=lam1, lambda0=lam0, ell2=ell2, ell1=ell1, q0=q0,
                p_half=p12, p_mhalf=pm12, gamma_32=gam32, gamma_12=gam12,
                r=r, r_inv=rinv)


_ORDERS = dict(lambda1=1.0, lambda0=0.0, ell2=2.0, ell1=1.0, q0=0.0,
               p_half=0.5, p_mhalf=-0.5, gamma_32=1.5, gamma_12=0.5,
               r=0.5, r_inv=-0.5)
_PARITY = dict(lambda1="real-even", ell2="real-even", ell1="imaginary-odd",
               q0="real-even", p_half="real-even", gamma_32="real-even",
               r="real-even", r_inv="real-even")


def _nonzero_inverse(grid, M):
    """Inverse of M restricted to zero-mean fields (the k = 0 row/col is zero)."""
    nz = np.ones(grid.size, dtype=bool)
    nz[0] = False
    out = np.zeros_like(M)
    out[np.ix_(nz, nz)] = np.linalg.inv(M[np.ix_(nz, nz)])
    return out


@dataclass
class SymbolBundle:
    grid: fc.TorusGrid
    eta: np.ndarray
    symbols: dict
    cut: pd.CutoffPair = pd.DEFAULT_CUTOFF
    _mats: dict = field(default_factory=dict, repr=False)

    def __getattr__(self, name):
        syms = self.__dict__.get("symbols")
        if syms is not None and name in syms:
            return syms[name]
        raise AttributeError(name)

    def symbol(self, name):
        return self.symbols[name]

    @property
    def p(self):
        return self.p_half + self.p_mhalf

    @property
    def gamma(self):
        return self.gamma_32 + self.gamma_12

    def T(self, name):
        """Dense complex matrix of T_a for a named symbol (or 'p', 'gamma')."""
        if name not in self._mats:
            a = getattr(self, name)
            self._mats[name] = pd.paradiff_matrix(a, self.cut)
        return self._mats[name]

    def T_inv(self, name):
        key = name + "^-1"
        if key not in self._mats:
            self._mats[key] = _nonzero_inverse(self.grid, self.T(name))
        return self._mats[key]


def build_symbols(state_or_grid, eta=None, cut=pd.DEFAULT_CUTOFF, check=True):
    """SymbolBundle at the surface elevation of a state (or grid, eta)."""
    if isinstance(state_or_grid, SurfaceState):
        grid, eta = state_or_grid.grid, state_or_grid.eta
    else:
        grid = state_or_grid
    eta = np.asarray(eta, dtype=complex)
    if check and not _resolved(grid, eta):
        raise ValueError("eta is not resolved: top-third spectral mass too large")
    raw = _raw_symbols(grid, eta)
    syms = {k: pd.SampledSymbol(grid, _ORDERS[k], v, _PARITY.get(k, "none"))
            for k, v in raw.items()}
    return SymbolBundle(grid, eta, syms, cut)


# -- complex unknown -------------------------------------------------------------

def _apply(grid, M, c):
    return pd.apply_matrix(grid, M, c)


def to_complex_variable(state, bundle=None, B=None, cfg=dn.DEFAULT_DN):
    """u = T_q omega - i T_p eta (zero mean, complex)."""
    grid = state.grid
    if bundle is None:
        bundle = build_symbols(state)
    omega = good_unknown(state, B, cfg)
    return _apply(grid, bundle.T("q0"), omega) - 1j * _apply(grid, bundle.T("p"), state.eta)


def _psi_from(grid, bundle, u, eta, B):
    re_u = fc.real_part(grid, u)
    return _apply(grid, bundle.T_inv("q0"), re_u) + pd.paraproduct(grid, B, eta)


def from_complex_variable(u, grid, s=WORK_S, tol=FP_TOL, maxiter=FP_MAXITER,
                          cfg=dn.DEFAULT_DN, psi_mean=0.0, info=False, eta0=None):
    """(eta, psi) with to_complex_variable(eta, psi) = u, by the fixed point

        eta <- |D|^{-1/2}( -Im u + T_{|xi|^{1/2} - p(eta)} eta ),

    recomputing B from the current (eta, psi) at each sweep.  eta0 is an
    optional starting guess (default 0).
    """
    u = np.asarray(u, dtype=complex)
    im_u = fc.imag_part(grid, u)
    re_u = fc.real_part(grid, u)
    dm = fc.abs_d(-0.5)
    eta = np.zeros(grid.shape, dtype=complex) if eta0 is None else np.array(eta0, dtype=complex)
    psi = np.zeros(grid.shape, dtype=complex)
    B = np.zeros(grid.shape, dtype=complex)
    flat_p = pd.symbol_from_multiplier(grid, lambda xi: np.sqrt(np.sqrt(np.sum(xi ** 2, -1))), 0.5)
    Tflat = pd.paradiff_matrix(flat_p)
    history = []
    for it in range(1, maxiter + 1):
        bundle = build_symbols(grid, eta, check=False)
        corr = _apply(grid, Tflat - bundle.T("p"), eta)
        eta_new = fc.apply_multiplier(dm, -im_u + corr, grid)
        eta_new = fc.real_part(grid, eta_new)
        bundle = build_symbols(grid, eta_new, check=False)
        psi_new = _apply(grid, bundle.T_inv("q0"), re_u)
        if np.any(eta_new):
            st = SurfaceState(grid, eta_new, fc.real_part(grid, psi_new))
            B, _ = compute_BV(st, cfg)
            psi_new = psi_new + pd.paraproduct(grid, B, eta_new)
        psi_new = fc.real_part(grid, psi_new)
        delta = float(fc.sobolev_norm(grid, eta_new - eta, s + 0.5)
                      + fc.sobolev_norm(grid, psi_new - psi, s))
        history.append(delta)
        eta, psi = eta_new, psi_new
        if delta < tol or not np.any(eta):
            break
    else:
        raise InversionError(f"fixed point did not converge in {maxiter} iterations "
                             f"(last increment {history[-1]:.3g}); amplitude too large")
    psi = psi.copy()
    psi[(0,) * grid.dim] = psi_mean
    state = SurfaceState(grid, eta, psi)
    if info:
        return state, {"iterations": len(history), "increments": history, "B": B}
    return state


def inversion_contraction(grid, eta_a, eta_b, u, s=WORK_S):
    """Measured Lipschitz ratio ||Psi(a) - Psi(b)|| / ||a - b|| of the fixed-point map."""
    dm = fc.abs_d(-0.5)
    flat_p = pd.symbol_from_multiplier(grid, lambda xi: np.sqrt(np.sqrt(np.sum(xi ** 2, -1))), 0.5)
    Tflat = pd.paradiff_matrix(flat_p)
    im_u = fc.imag_part(grid, u)

    def Psi(e):
        bnd = build_symbols(grid, e, check=False)
        return fc.apply_multiplier(dm, -im_u + _apply(grid, Tflat - bnd.T("p"), e), grid)

    num = fc.sobolev_norm(grid, Psi(eta_a) - Psi(eta_b), s + 0.5)
    den = fc.sobolev_norm(grid, eta_a - eta_b, s + 0.5)
    return float(num / den)


def symbol_rates(grid, eta, eta_dot, delta=None):
    """Central differences of q and p along eta_dot: returns (qdot, pdot) symbols."""
    nrm = float(np.max(np.abs(eta_dot))) or 1.0
    if delta is None:
        delta = 1e-4 / nrm
    bp = build_symbols(grid, eta + delta * eta_dot, check=False)
    bm = build_symbols(grid, eta - delta * eta_dot, check=False)
    qd = (bp.q0.values - bm.q0.values) / (2 * delta)
    pdv = (bp.p.values - bm.p.values) / (2 * delta)
    return (pd.SampledSymbol(grid, 0.0, qd, "real-even"),
            pd.SampledSymbol(grid, 0.5, pdv))

"""Dirichlet-Neumann operator, its shape derivative and the mean curvature.

G(eta) psi is evaluated by the Taylor expansion of t -> G(t eta) psi around
t = 0.  The coefficients come from differentiating the shape derivative
identity

    d/dt G(t eta) psi = -G(t eta)(B_t eta) - div(V_t eta)

order by order, where B_t, V_t are built from the truncated expansion.  All
routines accept psi with trailing batch axes, which is how operator
matrices are assembled.  Linear parts are exact; products that are
nonlinear in eta are dealiased with the 2/3 rule.
"""
from dataclasses import dataclass

import numpy as np

from . import fourier_core as fc


class DNError(ValueError):
    pass


@dataclass(frozen=True)
class DNConfig:
    expansion_order: int = 4
    validity_threshold: float = 0.2

    def __post_init__(self):
        if not 1 <= self.expansion_order <= 6:
            raise ValueError("expansion_order must lie in 1..6")
        if not self.validity_threshold > 0:
            raise ValueError("validity_threshold must be positive")


DEFAULT_DN = DNConfig()


def _phys(grid, c):
    return fc.inverse(grid, c)


def _coef(grid, f):
    return fc.forward(grid, f)


def _bc(grid, f, c):
    """Broadcast a physical field of grid shape against a batched array."""
    return f.reshape(grid.shape + (1,) * (np.ndim(c) - grid.dim))


def dn_flat(grid, psi, b=None):
    return fc.apply_multiplier(fc.dn_flat_multiplier(b), psi, grid)


def c1_norm(grid, eta):
    e = fc.to_real(grid, eta)
    g = [fc.to_real(grid, c) for c in fc.grad(grid, eta)]
    return float(np.max(np.abs(e)) + np.max(np.sqrt(sum(gj ** 2 for gj in g))))


def _check_eta(grid, eta, cfg):
    nrm = c1_norm(grid, eta)
    if nrm >= cfg.validity_threshold:
        raise DNError(f"||eta||_C1 = {nrm:.3g} exceeds the validity threshold "
                      f"{cfg.validity_threshold}")
    return nrm


class _Expansion:
    """Shared eta-dependent data for one evaluation."""

    def __init__(self, grid, eta):
        self.grid = grid
        self.eta_p = fc.to_real(grid, eta)
        self.geta_p = [fc.to_real(grid, c) for c in fc.grad(grid, eta)]
        self.s_p = sum(gj ** 2 for gj in self.geta_p)

    def taylor(self, phi, order):
        """Taylor coefficients g_0..g_order of t -> G(t eta) phi."""
        grid = self.grid
        gphi_p = [_phys(grid, c) for c in fc.grad(grid, phi)]
        a_p = sum(_bc(grid, ge, phi) * gp for ge, gp in zip(self.geta_p, gphi_p))
        eta_b = _bc(grid, self.eta_p, phi)
        s_b = _bc(grid, self.s_p, phi)
        g = [dn_flat(grid, phi)]
        g_p = [_phys(grid, g[0])]
        b_p = []
        sub = []
        for m in range(order):
            # b_m from the numerator t a + sum g_j t^j times (1 + t^2 s)^-1
            bm = 0
            for k in range(m // 2 + 1):
                j = m - 2 * k
                num = g_p[j] + (a_p if j == 1 else 0)
                bm = bm + (-s_b) ** k * num
            b_p.append(bm)
            arg = fc.dealias(grid, _coef(grid, bm * eta_b))
            sub.append(self.taylor(arg, order - 1 - m))
            total = sum(sub[l][m - l] for l in range(m + 1))
            if m == 0:
                vm = [gp for gp in gphi_p]
            else:
                vm = [-b_p[m - 1] * _bc(grid, ge, phi) for ge in self.geta_p]
            flux = [fc.dealias(grid, _coef(grid, v * eta_b)) for v in vm]
            gnext = -(total + fc.div(grid, flux)) / (m + 1)
            g.append(gnext)
            g_p.append(_phys(grid, gnext))
        return g


def dn_terms(grid, eta, psi, order):
    """Homogeneous terms G_0 psi, ..., G_order psi of the expansion."""
    return _Expansion(grid, eta).taylor(np.asarray(psi, dtype=complex), order)


def dn_apply(grid, eta, psi, cfg=DEFAULT_DN, info=False):
    """G(eta) psi by the order-M expansion; ``info`` adds an error report."""
    _check_eta(grid, eta, cfg)
    terms = dn_terms(grid, eta, psi, cfg.expansion_order)
    out = sum(terms)
    norms = [float(np.max(fc.sobolev_norm(grid, t))) for t in terms]
    tail, prev = norms[-1], max(norms[-3:-1]) if len(norms) > 2 else norms[0]
    if tail > prev and tail > 1e-6 * max(norms[0], 1e-300):
        raise DNError("expansion increments grow: the series is not converging")
    if info:
        return out, {"increment_norms": norms, "error_estimate": tail}
    return out


def dn_matrix(grid, eta, cfg=DEFAULT_DN):
    """Dense complex matrix of psi -> G(eta) psi on flattened coefficients."""
    N = grid.size
    basis = np.eye(N, dtype=complex).reshape(grid.shape + (N,))
    cols = dn_apply(grid, eta, basis, cfg)
    return cols.reshape(N, N)


def first_order_dn(grid, eta, psi):
    """Independent closed form of the first-order term for infinite depth."""
    absd = fc.abs_d(1.0)
    d_psi = fc.apply_multiplier(absd, psi, grid)
    term1 = fc.apply_multiplier(absd, fc.mul(grid, eta, d_psi), grid)
    flux = [fc.mul(grid, eta, gp) for gp in fc.grad(grid, psi)]
    return -term1 - fc.div(grid, flux)


def bv_fields(grid, eta, psi, g_psi):
    """B and V from eta, psi and G(eta) psi (batched psi allowed)."""
    geta_p = [fc.to_real(grid, c) for c in fc.grad(grid, eta)]
    gpsi = fc.grad(grid, psi)
    gpsi_p = [_phys(grid, c) for c in gpsi]
    inv = 1.0 / (1.0 + sum(g ** 2 for g in geta_p))
    a_p = sum(_bc(grid, ge, psi) * gp for ge, gp in zip(geta_p, gpsi_p))
    G_p = _phys(grid, g_psi)
    corr = a_p * _bc(grid, inv, psi) + G_p * _bc(grid, inv - 1.0, psi)
    B = g_psi + fc.dealias(grid, _coef(grid, corr))
    B_p = _phys(grid, B)
    V = [gp - fc.dealias(grid, _coef(grid, B_p * _bc(grid, ge, psi)))
         for gp, ge in zip(gpsi, geta_p)]
    return B, V


def dn_shape_derivative(grid, eta, psi, h, cfg=DEFAULT_DN):
    """-G(eta)(B h) - div(V h)."""
    g_psi = dn_apply(grid, eta, psi, cfg)
    B, V = bv_fields(grid, eta, psi, g_psi)
    h_p = fc.to_real(grid, h)
    Bh = fc.dealias(grid, _coef(grid, _phys(grid, B) * h_p))
    Vh = [fc.dealias(grid, _coef(grid, _phys(grid, v) * h_p)) for v in V]
    return -dn_apply(grid, eta, Bh, cfg) - fc.div(grid, Vh)


def mean_curvature(grid, eta):
    """div(grad eta / sqrt(1 + |grad eta|^2)); the linear part is kept exact."""
    geta = fc.grad(grid, eta)
    geta_p = [fc.to_real(grid, c) for c in geta]
    fac = 1.0 / np.sqrt(1.0 + sum(g ** 2 for g in geta_p)) - 1.0
    corr = [fc.dealias(grid, _coef(grid, g * fac)) for g in geta_p]
    return fc.div(grid, geta) + fc.div(grid, corr)


def mean_curvature_linear(grid, eta, v):
    """div(c(grad eta) grad v): linear in v, equal to H(eta) at v = eta."""
    geta_p = [fc.to_real(grid, c) for c in fc.grad(grid, eta)]
    fac = 1.0 / np.sqrt(1.0 + sum(g ** 2 for g in geta_p)) - 1.0
    gv = fc.grad(grid, v)
    corr = [fc.dealias(grid, _coef(grid, _phys(grid, c) * _bc(grid, fac, v))) for c in gv]
    return fc.div(grid, gv) + fc.div(grid, corr)


# -- independent oracle ------------------------------------------------------------

def cheb(m):
    """Chebyshev points on [-1, 1] (descending) and differentiation matrix."""
    z = np.cos(np.pi * np.arange(m + 1) / m)
    c = np.ones(m + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(m + 1)
    Z = np.tile(z, (m + 1, 1)).T
    dZ = Z - Z.T
    D = np.outer(c, 1.0 / c) / (dZ + np.eye(m + 1))
    D -= np.diag(D.sum(axis=1))
    return z, D


def dn_elliptic_oracle(grid, eta, psi, depth, m=32):
    """G(eta) psi from a Fourier x Chebyshev solve of the Laplace problem.

    One-dimensional surfaces over a flat bottom at finite depth only.
    """
    if grid.dim != 1 or np.isinf(depth):
        raise ValueError("oracle supports d = 1 and finite depth")
    n = grid.n
    eta_p = fc.to_real(grid, eta)
    deta_p = fc.to_real(grid, fc.grad(grid, eta)[0])
    psi_p = fc.to_real(grid, psi)
    z, Dz = cheb(m)
    k = grid.k1
    Fm = np.fft.fft(np.eye(n), axis=0)
    Dx = np.real(np.fft.ifft(1j * k[:, None] * Fm, axis=0))
    h = eta_p + depth
    # unknown ordering: index = j * n + i  (z-node j, x-node i)
    Ix, Iz = np.eye(n), np.eye(m + 1)
    DX = np.kron(Iz, Dx)
    DZ = np.kron(Dz, Ix)
    zz = np.repeat(z, n)
    hh = np.tile(h, m + 1)
    hx = np.tile(deta_p, m + 1)
    zx = -(1.0 + zz) * hx / hh
    zy = 2.0 / hh
    Px = DX + zx[:, None] * DZ
    Py = zy[:, None] * DZ
    L = Px @ Px + Py @ Py
    rhs = np.zeros((m + 1) * n)
    top = np.arange(n)                      # z = 1 is the first Chebyshev node
    bot = m * n + np.arange(n)
    L[top] = 0.0
    L[top, top] = 1.0
    rhs[top] = psi_p
    L[bot] = Py[bot]
    rhs[bot] = 0.0
    phi = np.linalg.solve(L, rhs)
    phix = (Px @ phi)[top]
    phiy = (Py @ phi)[top]
    return fc.forward(grid, phiy - deta_p * phix)

"""Discrete paradifferential and pseudodifferential quantization on the torus.

A symbol ``a(x, xi)`` is sampled at the grid points and at the extended
symmetric lattice ``-n/2 .. n/2`` in each frequency axis.  Operators are
assembled as dense matrices on the extended lattice and folded back to the
stored one: the Nyquist coefficient is split evenly between ``+-n/2`` on
the way in and the two entries are summed on the way out.  This keeps the
conjugation symmetry of real fields exact.

With normalized coefficients the quantization reads

    out(xi) = sum_eta chi(xi - eta, eta) ahat(xi - eta, eta) pi(eta) u(eta)

where ``ahat(., eta)`` are the normalized x-coefficients of ``a(., eta)``.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import fourier_core as fc


# -- cutoffs -------------------------------------------------------------------

def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    a = np.exp(-1.0 / t[mid])
    b = np.exp(-1.0 / (1.0 - t[mid]))
    out[mid] = a / (a + b)
    out[t >= 1] = 1.0
    return out


def smooth_step_alt(t):
    """A second admissible step built from a different flat profile."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    a = np.exp(-1.0 / t[mid] ** 2)
    b = np.exp(-1.0 / (1.0 - t[mid]) ** 2)
    out[mid] = a / (a + b)
    out[t >= 1] = 1.0
    return out


@dataclass(frozen=True)
class CutoffPair:
    eps1: float = 0.1
    eps2: float = 0.3
    step: object = smooth_step

    def __post_init__(self):
        if not 0 < self.eps1 < self.eps2 < 0.5:
            raise ValueError("need 0 < eps1 < eps2 < 1/2")

    def rho(self, r):
        return 1.0 - self.step((np.asarray(r) - self.eps1) / (self.eps2 - self.eps1))

    def chi(self, theta, eta):
        """theta, eta: arrays with the frequency components on the last axis."""
        th = np.sqrt(np.sum(np.asarray(theta, float) ** 2, axis=-1))
        br = np.sqrt(1.0 + np.sum(np.asarray(eta, float) ** 2, axis=-1))
        return self.rho(th / br)

    def pi_fn(self, xi):
        r = np.sqrt(np.sum(np.asarray(xi, float) ** 2, axis=-1))
        return self.step((r - 0.25) / 0.5)


DEFAULT_CUTOFF = CutoffPair()
ALT_CUTOFF = CutoffPair(0.12, 0.28, smooth_step_alt)


# -- symbols -------------------------------------------------------------------

@dataclass
class SampledSymbol:
    grid: fc.TorusGrid
    order: float
    values: np.ndarray
    parity: str = "none"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        want = self.grid.shape + self.grid.ext_shape
        if self.values.shape != want:
            raise ValueError(f"symbol values must have shape {want}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("symbol values must be finite")
        if self.parity not in ("real-even", "imaginary-odd", "none"):
            raise ValueError(f"unknown parity tag {self.parity!r}")

    def check_parity(self, tol=1e-12):
        v = self.values
        flipped = np.flip(v, axis=tuple(range(self.grid.dim, 2 * self.grid.dim)))
        scale = max(np.max(np.abs(v)), 1e-300)
        if self.parity == "real-even":
            return (np.max(np.abs(v.imag)) <= tol * scale
                    and np.max(np.abs(v - flipped)) <= tol * scale)
        if self.parity == "imaginary-odd":
            return (np.max(np.abs(v.real)) <= tol * scale
                    and np.max(np.abs(v + flipped)) <= tol * scale)
        return True

    def __add__(self, other):
        return SampledSymbol(self.grid, max(self.order, other.order),
                             self.values + other.values)

    def __sub__(self, other):
        return SampledSymbol(self.grid, max(self.order, other.order),
                             self.values - other.values)

    def scaled(self, c):
        return SampledSymbol(self.grid, self.order, c * self.values, self.parity)

    def to_json(self):
        vals = self.values.reshape(self.grid.size, -1)
        return {"order": self.order, "parity": self.parity,
                "values": [[float(z.real), float(z.imag)] for z in vals.ravel(order="F")]}


def xi_grid(grid):
    """Extended frequencies as an array of shape ext_shape + (d,)."""
    return np.stack(grid.ext_k, axis=-1).astype(float)


def make_symbol(grid, fn, order, parity="none"):
    """Sample ``fn(x, xi)``; x has shape grid.shape + (1,)*d + (d,), xi broadcasts."""
    d = grid.dim
    x = np.stack(grid.x, axis=-1).reshape(grid.shape + (1,) * d + (d,))
    xi = xi_grid(grid).reshape((1,) * d + grid.ext_shape + (d,))
    vals = np.broadcast_to(fn(x, xi), grid.shape + grid.ext_shape)
    return SampledSymbol(grid, order, np.array(vals, dtype=complex), parity)


def symbol_from_function_of_x(grid, f_coeffs, order=0.0):
    """x-only symbol a(x, xi) = f(x) from the coefficients of f."""
    f = fc.inverse(grid, f_coeffs)
    parity = "none"
    if fc.is_real(grid, np.asarray(f_coeffs)):
        f, parity = f.real, "real-even"
    vals = np.broadcast_to(f.reshape(grid.shape + (1,) * grid.dim),
                           grid.shape + grid.ext_shape)
    return SampledSymbol(grid, order, np.array(vals, dtype=complex), parity)


def symbol_from_multiplier(grid, fn, order, parity="real-even"):
    """x-independent symbol a(xi) = fn(|xi| array of ext lattice)."""
    xi = xi_grid(grid)
    vals = fn(xi)
    vals = np.broadcast_to(vals, grid.shape + grid.ext_shape)
    return SampledSymbol(grid, order, np.array(vals, dtype=complex), parity)


# -- lattice extension and folding ---------------------------------------------

@lru_cache(maxsize=None)
def _ext1(n):
    """Extension (n+1) x n and fold n x (n+1) matrices of one axis."""
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    X = np.zeros((n + 1, n))
    Fo = np.zeros((n, n + 1))
    for s, kk in enumerate(k):
        if kk == -n // 2:
            X[0, s] = X[n, s] = 0.5
            Fo[s, 0] = Fo[s, n] = 1.0
        else:
            X[kk + n // 2, s] = 1.0
            Fo[s, kk + n // 2] = 1.0
    return X, Fo


@lru_cache(maxsize=None)
def ext_fold(dim, n):
    X1, F1 = _ext1(n)
    if dim == 1:
        return X1, F1
    return np.kron(X1, X1), np.kron(F1, F1)


def _ahat_ext(a):
    """Normalized x-coefficients of every column, extended in theta."""
    g = a.grid
    d = g.dim
    ahat = np.fft.fftn(a.values, axes=tuple(range(d))) / g.size
    X, _ = ext_fold(d, g.n)
    return X @ ahat.reshape(g.size, -1)        # (n+1)^d theta  x  (n+1)^d eta


@lru_cache(maxsize=None)
def _pair_index(dim, n):
    """For each (xi, eta) on the extended lattice: theta index or -1."""
    e = np.arange(-n // 2, n // 2 + 1)
    if dim == 1:
        th = e[:, None] - e[None, :]
        ok = np.abs(th) <= n // 2
        idx = np.where(ok, th + n // 2, -1)
        theta = th[..., None]
        eta = np.broadcast_to(e[None, :, None], th.shape + (1,))
        return idx, theta, eta
    E1, E2 = np.meshgrid(e, e, indexing="ij")
    k1, k2 = E1.ravel(), E2.ravel()
    t1 = k1[:, None] - k1[None, :]
    t2 = k2[:, None] - k2[None, :]
    ok = (np.abs(t1) <= n // 2) & (np.abs(t2) <= n // 2)
    idx = np.where(ok, (t1 + n // 2) * (n + 1) + (t2 + n // 2), -1)
    theta = np.stack([t1, t2], axis=-1)
    eta = np.broadcast_to(np.stack([k1, k2], axis=-1)[None, :, :], theta.shape)
    return idx, theta, eta


def _weights(dim, n, cut, with_chi, with_pi):
    idx, theta, eta = _pair_index(dim, n)
    w = (idx >= 0).astype(float)
    if with_chi:
        w = w * cut.chi(theta, eta)
    if with_pi:
        w = w * cut.pi_fn(eta)
    return idx, w


def _ext_matrix(a, cut, with_chi, with_pi):
    g = a.grid
    idx, w = _weights(g.dim, g.n, cut, with_chi, with_pi)
    A = _ahat_ext(a)
    cols = np.broadcast_to(np.arange(A.shape[1])[None, :], idx.shape)
    M = np.where(idx >= 0, A[np.maximum(idx, 0), cols], 0.0)
    return M * w


def paradiff_matrix(a, cut=DEFAULT_CUTOFF):
    """Dense matrix of T_a acting on flattened stored coefficients."""
    key = ("T", cut)
    if key not in a._cache:
        X, Fo = ext_fold(a.grid.dim, a.grid.n)
        a._cache[key] = Fo @ _ext_matrix(a, cut, True, True) @ X
    return a._cache[key]


def pseudodiff_matrix(a, with_pi=True, cut=DEFAULT_CUTOFF):
    key = ("Op", with_pi, cut)
    if key not in a._cache:
        X, Fo = ext_fold(a.grid.dim, a.grid.n)
        a._cache[key] = Fo @ _ext_matrix(a, cut, False, with_pi) @ X
    return a._cache[key]


def apply_matrix(grid, M, u):
    u = np.asarray(u)
    if u.shape[:grid.dim] != grid.shape:
        raise ValueError("grid mismatch")
    flat = u.reshape((grid.size, -1))
    return (M @ flat).reshape(u.shape)


def paradiff_apply(a, u, cut=DEFAULT_CUTOFF):
    if np.shape(u)[:a.grid.dim] != a.grid.shape:
        raise ValueError("symbol and field live on different grids")
    return apply_matrix(a.grid, paradiff_matrix(a, cut), u)


def pseudodiff_apply(a, u, with_pi=True, cut=DEFAULT_CUTOFF):
    if np.shape(u)[:a.grid.dim] != a.grid.shape:
        raise ValueError("symbol and field live on different grids")
    return apply_matrix(a.grid, pseudodiff_matrix(a, with_pi, cut), u)


def paraproduct(grid, a_coeffs, u, cut=DEFAULT_CUTOFF):
    """T_a u for a function a(x)."""
    return paradiff_apply(symbol_from_function_of_x(grid, a_coeffs), u, cut)


def paraproduct_in_symbol(grid, u, cut=DEFAULT_CUTOFF):
    """Matrix of a -> T_a u for x-only symbols, acting on coefficients of a."""
    X, Fo = ext_fold(grid.dim, grid.n)
    idx, w = _weights(grid.dim, grid.n, cut, True, True)
    u_ext = X @ np.asarray(u, dtype=complex).reshape(grid.size)
    L = np.zeros((idx.shape[0], X.shape[0]), dtype=complex)
    rows = np.broadcast_to(np.arange(idx.shape[0])[:, None], idx.shape)
    ok = idx >= 0
    np.add.at(L, (rows[ok], idx[ok]), (w * u_ext[None, :])[ok])
    return Fo @ L @ X


def paraproduct_remainder(grid, a, b, cut=DEFAULT_CUTOFF):
    """R(a, b) = ab - T_a b - T_b a with the dealiased product."""
    ab = fc.mul(grid, a, b)
    return ab - paraproduct(grid, a, b, cut) - paraproduct(grid, b, a, cut)


# -- symbolic calculus -----------------------------------------------------------

def x_derivative(a, j):
    """Spectral derivative d/dx_j of a sampled symbol, column by column."""
    g = a.grid
    axes = tuple(range(g.dim))
    ahat = np.fft.fftn(a.values, axes=axes)
    kj = g.k[j].reshape(g.shape + (1,) * g.dim)
    return np.fft.ifftn(1j * kj * ahat, axes=axes)


def first_order_composition(a_xi_grad, b):
    """Symbol sum_j d_xi_j a D_x_j b, with D = -i d/dx."""
    out = 0
    for j, da in enumerate(a_xi_grad):
        out = out + da * (-1j) * x_derivative(b, j)
    return out


# -- empirical operator norms --------------------------------------------------

def realified_matrix(grid, apply_fn):
    """Realified matrix of an R-linear map on coefficient arrays."""
    N = grid.size
    basis = np.eye(N).reshape(grid.shape + (N,))
    cols_re = apply_fn(basis.astype(complex))
    cols_im = apply_fn(1j * basis)
    top = fc.realify(grid, cols_re)
    bot = fc.realify(grid, cols_im)
    return np.concatenate([top, bot], axis=1)


def operator_order_estimate(apply_fn, s_in, s_out, grid, trials=4, seed=0):
    """Estimate sup ||A u||_{H^s_out} / ||u||_{H^s_in}.

    Lanczos on the weighted normal operator from one seeded start vector;
    the Krylov dimension grows with ``trials`` so the estimate is
    nondecreasing in ``trials`` and never exceeds the true norm.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    A = realified_matrix(grid, apply_fn)
    w_in = np.tile(fc.bracket(grid).ravel() ** s_in, 2)
    w_out = np.tile(fc.bracket(grid).ravel() ** s_out, 2)
    B = (w_out[:, None] * A) / w_in[None, :]
    C = B.T @ B
    dim = C.shape[0]
    m = min(dim, 8 * trials)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(dim)
    Q = np.zeros((dim, m))
    Q[:, 0] = q / np.linalg.norm(q)
    k = 1
    scale = np.linalg.norm(C)
    for j in range(1, m):
        v = C @ Q[:, j - 1]
        v -= Q[:, :j] @ (Q[:, :j].T @ v)
        v -= Q[:, :j] @ (Q[:, :j].T @ v)
        nv = np.linalg.norm(v)
        if nv <= 1e-12 * scale:
            break
        Q[:, j] = v / nv
        k = j + 1
    Qk = Q[:, :k]
    H = Qk.T @ C @ Qk
    return float(np.sqrt(max(np.linalg.eigvalsh(0.5 * (H + H.T))[-1], 0.0)))


def band_norm(grid, apply_fn, kmin, kmax):
    """L^2 operator norm restricted to inputs with kmin < |k| <= kmax."""
    A = realified_matrix(grid, apply_fn)
    band = ((grid.kabs > kmin) & (grid.kabs <= kmax)).ravel()
    sel = np.concatenate([band, band])
    return float(np.linalg.norm(A[:, sel], 2))

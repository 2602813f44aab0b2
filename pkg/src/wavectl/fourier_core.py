"""Torus grids, spectral fields, Fourier multipliers and Sobolev norms.

Coefficients are normalized so that ``c_k = (2 pi)^-d \\int u e^{-ikx} dx``,
which makes ``||e^{ikx}||_{L^2} = 1`` with the measure ``(2 pi)^-d dx``.
Coefficient arrays have shape ``grid.shape + batch`` with the spatial axes
first, stored in numpy FFT order.  The stored lattice of one axis is
``{-n/2, ..., n/2 - 1}``; the Nyquist entry stands for both ``+-n/2``.
"""
from dataclasses import dataclass
from functools import cached_property
import json

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    dim: int
    n: int
    depth: float = np.inf

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n_per_dim must be even and >= 8, got {self.n}")
        if not self.depth > 0:
            raise ValueError("depth must be positive")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self):
        return self.n ** self.dim

    @property
    def axes(self):
        return tuple(range(self.dim))

    @cached_property
    def k1(self):
        """Integer frequencies of one axis in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)

    @cached_property
    def k(self):
        """Tuple of integer frequency arrays, each of shape ``grid.shape``."""
        return tuple(np.meshgrid(*([self.k1] * self.dim), indexing="ij"))

    @cached_property
    def kabs(self):
        return np.sqrt(sum(kj.astype(float) ** 2 for kj in self.k))

    @cached_property
    def x(self):
        x1 = 2 * np.pi * np.arange(self.n) / self.n
        return tuple(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    @cached_property
    def lattice(self):
        """Stored frequencies in row-major order of the coefficient array."""
        return np.stack([kj.ravel() for kj in self.k], axis=1)

    @cached_property
    def ext1(self):
        """Extended symmetric lattice of one axis, ``-n/2 .. n/2``."""
        return np.arange(-self.n // 2, self.n // 2 + 1)

    @cached_property
    def ext_k(self):
        return tuple(np.meshgrid(*([self.ext1] * self.dim), indexing="ij"))

    @property
    def ext_shape(self):
        return (self.n + 1,) * self.dim

    @cached_property
    def dealias_mask(self):
        m = np.ones(self.shape, dtype=bool)
        for kj in self.k:
            m &= np.abs(kj) <= self.n // 3
        return m

    def to_json(self):
        return {"dim": self.dim, "n": self.n,
                "depth": "inf" if np.isinf(self.depth) else float(self.depth)}

    @staticmethod
    def from_json(obj):
        depth = obj["depth"]
        return TorusGrid(int(obj["dim"]), int(obj["n"]),
                         np.inf if depth == "inf" else float(depth))


def make_grid(d, n_per_dim, depth=np.inf):
    return TorusGrid(int(d), int(n_per_dim), float(depth))


def _check(grid, arr):
    if arr.shape[:grid.dim] != grid.shape:
        raise ValueError(f"array of shape {arr.shape} does not match grid {grid.shape}")


def fft(grid, a):
    """Unnormalized DFT over the spatial axes."""
    if grid.dim == 1:
        return np.fft.fft(a, axis=0)
    return np.fft.fft2(a, axes=(0, 1))


def ifft(grid, a):
    if grid.dim == 1:
        return np.fft.ifft(a, axis=0)
    return np.fft.ifft2(a, axes=(0, 1))


def forward(grid, samples):
    """Physical samples -> normalized coefficients (batch axes trailing)."""
    samples = np.asarray(samples)
    _check(grid, samples)
    return fft(grid, samples) / grid.size


def inverse(grid, coeffs):
    coeffs = np.asarray(coeffs)
    _check(grid, coeffs)
    return ifft(grid, coeffs) * grid.size


def to_real(grid, coeffs):
    """Physical samples of a field known to be real."""
    return inverse(grid, coeffs).real


def reflect(grid, c):
    """c(k) -> c(-k) on the stored lattice."""
    out = np.flip(c, axis=grid.axes)
    return np.roll(out, 1, axis=grid.axes)


def conj_reflect(grid, c):
    """The antilinear map c(k) -> conj c(-k); its fixed points are real fields."""
    return np.conj(reflect(grid, c))


def real_part(grid, c):
    """Coefficients of Re u."""
    return 0.5 * (c + conj_reflect(grid, c))


def imag_part(grid, c):
    """Coefficients of Im u."""
    return -0.5j * (c - conj_reflect(grid, c))


def is_real(grid, c, tol=1e-12):
    scale = max(np.max(np.abs(c)), 1e-300)
    return np.max(np.abs(c - conj_reflect(grid, c))) <= tol * scale


def dealias(grid, c):
    mask = grid.dealias_mask.reshape(grid.shape + (1,) * (c.ndim - grid.dim))
    return c * mask


def mul(grid, *coeffs):
    """Dealiased coefficients of a pointwise product of fields."""
    prod = inverse(grid, coeffs[0])
    for c in coeffs[1:]:
        prod = prod * inverse(grid, c)
    return dealias(grid, forward(grid, prod))


def _bshape(grid, m, c):
    return m.reshape(grid.shape + (1,) * (np.ndim(c) - grid.dim))


def grad(grid, c):
    return [1j * _bshape(grid, kj, c) * c for kj in grid.k]


def div(grid, vec):
    return sum(1j * _bshape(grid, kj, v) * v for kj, v in zip(grid.k, vec))


def bracket(grid, h=1.0):
    return np.sqrt(1.0 + (h * grid.kabs) ** 2)


@dataclass(frozen=True)
class MultiplierSpec:
    rule: object
    order: float = 0.0
    name: str = ""

    def values(self, grid):
        vals = np.asarray(self.rule(grid), dtype=complex)
        if vals.shape != grid.shape or not np.all(np.isfinite(vals)):
            raise ValueError(f"multiplier {self.name!r} not finite on the lattice")
        return vals


def apply_multiplier(spec, c, grid):
    c = np.asarray(c)
    _check(grid, c)
    vals = spec.values(grid)
    if np.all(vals.imag == 0):
        vals = vals.real
    return _bshape(grid, vals, c) * c


def _safe_pow(kabs, s):
    out = np.zeros_like(kabs)
    nz = kabs > 0
    out[nz] = kabs[nz] ** s
    return out


def abs_d(s):
    """|D|^s, with the k = 0 value set to 0 (also for negative s)."""
    return MultiplierSpec(lambda g: _safe_pow(g.kabs, s), float(s), f"|D|^{s}")


def pi_multiplier():
    """pi(D): the smooth cutoff equals the indicator of k != 0 on the lattice."""
    return MultiplierSpec(lambda g: (g.kabs > 0).astype(float), 0.0, "pi(D)")


def tanh_depth(kabs, depth):
    return np.ones_like(kabs) if np.isinf(depth) else np.tanh(depth * kabs)


def dn_flat_multiplier(depth=None):
    """G(0) = |D| tanh(b|D|); the depth defaults to the grid's."""
    def rule(g):
        b = g.depth if depth is None else depth
        return g.kabs * tanh_depth(g.kabs, b)
    return MultiplierSpec(rule, 1.0, "G(0)")


def m_b_multiplier(depth=None):
    """m_b(D) = |D|(tanh(b|D|) - 1); identically zero for infinite depth."""
    def rule(g):
        b = g.depth if depth is None else depth
        return g.kabs * (tanh_depth(g.kabs, b) - 1.0)
    return MultiplierSpec(rule, -np.inf, "m_b(D)")


def sobolev_norm(grid, c, s=0.0, h=None):
    """(sum_k <hk>^{2s} |c_k|^2)^{1/2}; batch axes give an array of norms."""
    c = np.asarray(c)
    _check(grid, c)
    if h is not None and not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    w = bracket(grid, 1.0 if h is None else h) ** (2 * s)
    return np.sqrt(np.sum(_bshape(grid, w, c) * np.abs(c) ** 2, axis=grid.axes))


def l2_physical(grid, samples):
    """Quadrature L^2 norm with the (2 pi)^-d normalized measure."""
    return np.sqrt(np.mean(np.abs(samples) ** 2, axis=grid.axes))


def inner(grid, a, b):
    """Real L^2 inner product Re (a, b)."""
    return np.real(np.sum(np.conj(a) * b, axis=grid.axes))


def random_field(grid, rng, real=True, decay=0.0, zero_mean=True, batch=()):
    """Random coefficients with spectrum weighted by <k>^-decay."""
    shape = grid.shape + tuple(batch)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= _bshape(grid, bracket(grid) ** (-decay), c)
    if real:
        c = real_part(grid, c)
    if zero_mean:
        c[(0,) * grid.dim] = 0
    return c


# -- realified representation -------------------------------------------------
# An R-linear operator on coefficient vectors of length N is a real 2N x 2N
# matrix acting on (Re c, Im c), with c flattened in row-major lattice order.

def realify(grid, c):
    flat = np.asarray(c).reshape((grid.size,) + np.shape(c)[grid.dim:])
    return np.concatenate([flat.real, flat.imag], axis=0)


def complexify(grid, x):
    N = grid.size
    c = x[:N] + 1j * x[N:]
    return c.reshape(grid.shape + np.shape(x)[1:])


def rmat(A):
    """Realified matrix of a complex-linear N x N matrix."""
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def reflect_perm(grid):
    idx = np.arange(grid.size).reshape(grid.shape)
    return reflect(grid, idx).ravel()


def rmat_conj_reflect(grid):
    N = grid.size
    R = np.zeros((N, N))
    R[np.arange(N), reflect_perm(grid)] = 1.0
    Z = np.zeros((N, N))
    return np.block([[R, Z], [Z, -R]])


def rmat_re(grid):
    return 0.5 * (np.eye(2 * grid.size) + rmat_conj_reflect(grid))


def rmat_im(grid):
    N = grid.size
    return rmat(-0.5j * np.eye(N)) @ (np.eye(2 * N) - rmat_conj_reflect(grid))


def rmat_diag(grid, vals):
    return rmat(np.diag(np.asarray(vals, dtype=complex).ravel()))


@dataclass
class SpectralField:
    grid: TorusGrid
    coeffs: np.ndarray
    real: bool = False
    zero_mean: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        _check(self.grid, self.coeffs)
        if self.real and not is_real(self.grid, self.coeffs, 1e-10):
            raise ValueError("field flagged real is not conjugate symmetric")
        if self.zero_mean and abs(self.coeffs[(0,) * self.grid.dim]) > 1e-12:
            raise ValueError("field flagged zero-mean has a nonzero mean")

    @classmethod
    def from_samples(cls, grid, samples, **flags):
        return cls(grid, forward(grid, samples), **flags)

    def samples(self):
        u = inverse(self.grid, self.coeffs)
        return u.real if self.real else u

    def norm(self, s=0.0, h=None):
        return float(sobolev_norm(self.grid, self.coeffs, s, h))

    def to_json(self):
        flat = self.coeffs.ravel()
        return {"grid": self.grid.to_json(), "real": self.real,
                "zero_mean": self.zero_mean,
                "coeffs": [[float(z.real), float(z.imag)] for z in flat]}

    @classmethod
    def from_json(cls, obj):
        grid = TorusGrid.from_json(obj["grid"])
        arr = np.array(obj["coeffs"], dtype=float)
        coeffs = (arr[:, 0] + 1j * arr[:, 1]).reshape(grid.shape)
        return cls(grid, coeffs, bool(obj.get("real")), bool(obj.get("zero_mean")))

    def dumps(self):
        return json.dumps(self.to_json())

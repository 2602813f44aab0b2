"""Geometric control condition, control-time floor and torus quasimodes.

Hit lengths are computed by sphere tracing along straight lines: the signed
distance of the region bounds how far a ray can travel without entering it,
so steps never skip over the region.
"""
from dataclasses import dataclass
from math import gcd

import numpy as np

from . import fourier_core as fc
from . import paradiff as pd

CAP_LENGTH = 100 * 2 * np.pi
GOLDEN = 0.5 * (1 + np.sqrt(5.0))


class GCCError(ValueError):
    pass


@dataclass(frozen=True)
class GeodesicSample:
    direction: tuple
    offset: tuple
    hit_length: float

    def __post_init__(self):
        if not self.hit_length >= 0:
            raise ValueError("hit length must be nonnegative")


def sample_directions(dim, n_dirs, max_rational=8, periods=False):
    """Golden-angle directions plus every rational direction p/q, |p|,|q| <= 8.

    With ``periods`` also returns the length of each closed geodesic (inf for
    the golden-angle directions, treated as irrational).
    """
    if dim == 1:
        d = np.array([[1.0], [-1.0]])
        return (d, np.full(2, 2 * np.pi)) if periods else d
    ang = 2 * np.pi * np.mod(np.arange(n_dirs) / GOLDEN, 1.0)
    dirs = [np.stack([np.cos(ang), np.sin(ang)], axis=1)]
    rat = []
    for p in range(-max_rational, max_rational + 1):
        for q in range(-max_rational, max_rational + 1):
            if (p, q) != (0, 0) and gcd(abs(p), abs(q)) == 1:
                rat.append((p, q))
    r = np.array(rat, dtype=float)
    rn = np.linalg.norm(r, axis=1)
    dirs.append(r / rn[:, None])
    out = np.concatenate(dirs)
    if periods:
        return out, np.concatenate([np.full(n_dirs, np.inf), 2 * np.pi * rn])
    return out


def sample_offsets(dim, n_offsets):
    """Uniform lattice with n_offsets points per axis."""
    s = 2 * np.pi * np.arange(n_offsets) / n_offsets
    if dim == 1:
        return s[:, None]
    X, Y = np.meshgrid(s, s, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _interval_entry(y, v, center, half):
    """Exact entry length into the periodic interval |y - center| <= half."""
    s = np.mod(y - (center - half), 2 * np.pi)
    inside = s <= 2 * half
    with np.errstate(divide="ignore"):
        up = (2 * np.pi - s) / np.where(v > 0, v, np.nan)
        down = (s - 2 * half) / np.where(v < 0, -v, np.nan)
    L = np.where(v > 0, up, np.where(v < 0, down, np.inf))
    return np.where(inside, 0.0, L)


def _traced_entry(shape, x0, xi, lim, tol=1e-9, min_step=1e-4):
    """Sphere tracing on the signed distance of one shape."""
    L = np.zeros(len(x0))
    active = np.arange(len(x0))
    while active.size:
        sd = shape.signed_distance(x0[active] + L[active, None] * xi[active])
        hit = sd >= -tol
        L[active] += np.where(hit, 0.0, np.maximum(-sd, min_step))
        over = L[active] > lim[active]
        L[active[over & ~hit]] = np.inf
        active = active[~hit & ~over]
    return L


def hit_lengths(region, offsets, directions, cap=CAP_LENGTH, periods=None):
    """First arclength at which each ray x + L xi enters the closure of omega.

    Returns an array (n_offsets, n_dirs); inf when the cap is reached, or
    when a closed geodesic has been traversed once without a hit.  Strips
    and arcs are handled in closed form, balls by sphere tracing.
    """
    x0 = np.repeat(offsets[:, None, :], len(directions), axis=1).reshape(-1, offsets.shape[1])
    xi = np.repeat(directions[None, :, :], len(offsets), axis=0).reshape(-1, directions.shape[1])
    per = np.full(len(directions), np.inf) if periods is None else np.asarray(periods, float)
    lim = np.minimum(np.tile(per * (1 + 1e-9), len(offsets)), cap)
    L = np.full(len(x0), np.inf)
    for sh in region.shapes:
        if sh.kind == "torus":
            Ls = np.zeros(len(x0))
        elif sh.kind == "arc":
            Ls = _interval_entry(x0[:, 0], xi[:, 0], sh.center[0], sh.size)
        elif sh.kind == "strip":
            Ls = _interval_entry(x0[:, sh.axis], xi[:, sh.axis], sh.center[0], sh.size)
        else:
            Ls = _traced_entry(sh, x0, xi, np.minimum(lim, L))
        L = np.minimum(L, Ls)
    L = np.where(L > lim, np.inf, L)
    return L.reshape(len(offsets), len(directions))


def min_traverse_length(region, n_dirs=64, n_offsets=64, cap=CAP_LENGTH, info=False):
    """Largest sampled hit length: the L of the propagation-speed condition."""
    if n_dirs < 64 or n_offsets < 64:
        raise ValueError("sampling counts must be at least 64")
    if region.is_torus:
        return (0.0, {"samples": 0, "worst": None}) if info else 0.0
    dirs, per = sample_directions(region.dim, n_dirs, periods=True)
    offs = sample_offsets(region.dim, n_offsets)
    H = hit_lengths(region, offs, dirs, cap, periods=per)
    i, j = np.unravel_index(np.argmax(H), H.shape)
    L = float(H[i, j])
    if info:
        worst = GeodesicSample(tuple(dirs[j]), tuple(offs[i]), L)
        return L, {"samples": int(H.size), "worst": worst}
    return L


def gcc_holds(region, **kw):
    return bool(np.isfinite(min_traverse_length(region, **kw)))


def control_time_floor(region=None, upsilon=1.0, L=None, **kw):
    """Minimal T with (3/2) upsilon^{1/2} T > L: frequencies >= upsilon reach omega."""
    if not upsilon > 0:
        raise ValueError("upsilon must be positive")
    if L is None:
        L = min_traverse_length(region, **kw)
    if not np.isfinite(L):
        raise GCCError("the region does not satisfy the geometric control condition")
    return float(L / (1.5 * np.sqrt(upsilon)))


# -- quasimodes (d = 2) ---------------------------------------------------------------

@dataclass
class Quasimode:
    grid: fc.TorusGrid
    n: int
    gamma: tuple
    chi_profile: np.ndarray         # coefficients of chi
    alpha: float
    field: np.ndarray               # coefficients of e^{i n gamma.z} chi(z)

    @property
    def lambda_n(self):
        return float((self.n * np.linalg.norm(self.gamma)) ** self.alpha)


def _lattice_perp_mask(grid, gamma):
    k1, k2 = grid.k
    return (k1 * gamma[0] + k2 * gamma[1]) == 0


def transverse_profile(grid, gamma, bump, delta):
    """chi(z) = bump(kappa(z)/|gamma|), kappa = gamma_perp . z, a function along
    the closed geodesic through 0 in direction gamma (primitive gamma).

    bump receives the signed transverse distance in (-pi/|gamma|, pi/|gamma|]
    and should vanish for |s| >= delta.  The result is projected onto the
    lattice modes orthogonal to gamma.
    """
    p, q = gamma
    if gcd(abs(p), abs(q)) != 1:
        raise ValueError("gamma must be primitive")
    X, Y = grid.x
    gn = np.hypot(p, q)
    kappa = np.mod(-q * X + p * Y + np.pi, 2 * np.pi) - np.pi
    c = fc.forward(grid, bump(kappa / gn).astype(complex))
    return np.where(_lattice_perp_mask(grid, gamma), c, 0.0)


def smooth_bump(delta):
    """C^infinity bump with support |s| < delta, equal to 1 for |s| < delta/2."""
    return lambda s: 1.0 - pd.smooth_step((np.abs(s) - 0.5 * delta) / (0.5 * delta))


def build_quasimode(grid, gamma, chi_profile, n, alpha=1.5, delta=None, tol=1e-10):
    """u^n = e^{i n gamma.z} chi(z) by an exact lattice shift of chi's spectrum."""
    if grid.dim != 2:
        raise ValueError("quasimodes live on the 2-torus")
    gamma = tuple(int(v) for v in gamma)
    if gamma == (0, 0):
        raise ValueError("gamma must be nonzero")
    if not 1 < alpha <= 2:
        raise ValueError("alpha must lie in (1, 2]")
    chi = np.asarray(chi_profile, dtype=complex)
    off = ~_lattice_perp_mask(grid, gamma)
    if np.max(np.abs(chi[off]), initial=0.0) > tol * max(np.max(np.abs(chi)), 1e-300):
        raise GCCError("profile is not constant along gamma")
    if delta is not None:
        X, Y = grid.x
        p, q = gamma
        dist = np.abs(np.mod(-q * X + p * Y + np.pi, 2 * np.pi) - np.pi) / np.hypot(p, q)
        vals = fc.inverse(grid, chi)
        if np.max(np.abs(vals[dist >= delta]), initial=0.0) > tol * np.max(np.abs(vals)):
            raise GCCError("profile support leaves the delta-neighbourhood of the geodesic")
    shift = tuple(n * gv for gv in gamma)
    if max(abs(s) for s in shift) > grid.n // 2 - 1:
        raise GCCError("n gamma is not resolved by the grid")
    field = np.roll(chi, shift, axis=(0, 1))
    # rolling wraps the stored fft ordering; verify nothing crossed the Nyquist line
    k1, k2 = grid.k
    src = np.roll(k1, shift[0], axis=0) + shift[0], np.roll(k2, shift[1], axis=1) + shift[1]
    wrapped = (src[0] != k1) | (src[1] != k2)
    if np.any(np.abs(field[wrapped]) > 0):
        raise GCCError("spectrum of chi too wide for the requested shift")
    return Quasimode(grid, n, gamma, chi, float(alpha), field)


def spectral_support_ok(q):
    """Every nonzero coefficient sits on n gamma + gamma_perp (exact integer test)."""
    k1, k2 = q.grid.k
    g1, g2 = q.gamma
    kk = (k1 - q.n * g1) * g1 + (k2 - q.n * g2) * g2
    return bool(np.all(q.field[kk != 0] == 0))


def resolvent_ratio(q, region=None):
    """r_n = ||(|D|^alpha - lambda_n) u|| / ||u|| and obs_n = ||phi u|| / ||u||."""
    g = q.grid
    if q.n * max(abs(v) for v in q.gamma) > g.n / 3:
        raise GCCError("n gamma exceeds a third of the grid")
    c = q.field
    nrm = np.sqrt(np.sum(np.abs(c) ** 2))
    r = np.sqrt(np.sum(np.abs((g.kabs ** q.alpha - q.lambda_n) * c) ** 2)) / nrm
    if region is None:
        return float(r), None
    phys = fc.inverse(g, c) * region.phi_samples(g)
    obs = np.sqrt(np.mean(np.abs(phys) ** 2)) / np.sqrt(np.mean(np.abs(fc.inverse(g, c)) ** 2))
    return float(r), float(obs)


def f_profile(t, alpha):
    """((1 + t^2)^{alpha/2} - 1) / t^alpha."""
    t = np.asarray(t, dtype=float)
    return ((1 + t * t) ** (alpha / 2) - 1) / t ** alpha


def single_mode_ratio(n, gamma, m, alpha):
    """Closed form r_n for chi = e^{i m (gamma_perp/|gamma|).z}-type single modes."""
    gn = np.linalg.norm(gamma)
    return float(m ** alpha * f_profile(m / (n * gn), alpha))


def fit_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def quasimode_sweep(grid, gamma, chi, ns, alpha=1.5, region=None, delta=None):
    """Rows (n, r_n, obs_n)."""
    rows = []
    for n in ns:
        q = build_quasimode(grid, gamma, chi, n, alpha, delta)
        r, o = resolvent_ratio(q, region)
        rows.append((int(n), r, o))
    return rows

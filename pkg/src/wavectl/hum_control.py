"""HUM synthesis for the linearized equation.

Given the dual solution v = S f0 of d/dt v = P^T v, the control operator
acts through B* v = chi_T phi Re(T_q^* v).  The Gram operator

    K f0 = -R B B* S f0

is assembled matrix-free from one dual sweep and one backward sweep.  Time
integrals use the discrete pairing of the evolution module, which makes K
exactly symmetric and positive semidefinite in the real L^2 product.
"""
from dataclasses import dataclass, field

import numpy as np

from . import fourier_core as fc
from . import paradiff as pd
from . import evolution as ev
from . import wave_symbols as ws


class ControlError(RuntimeError):
    pass


# -- regions ---------------------------------------------------------------------------

def _pdist(a, b):
    """Periodic distance on the circle of length 2 pi."""
    d = np.mod(a - b, 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


@dataclass(frozen=True)
class Shape:
    """Basic region: 'torus', 'arc' (d=1), 'strip' or 'ball' (d=2)."""
    kind: str
    center: tuple = (np.pi,)
    size: float = 1.0           # half-length, half-width or radius
    axis: int = 1               # strips: the coordinate that is bounded

    def signed_distance(self, pts):
        """Distance to the boundary, positive inside; pts has shape (..., d)."""
        pts = np.asarray(pts, dtype=float)
        if self.kind == "torus":
            return np.full(pts.shape[:-1], np.inf)
        if self.kind == "arc":
            return self.size - _pdist(pts[..., 0], self.center[0])
        if self.kind == "strip":
            return self.size - _pdist(pts[..., self.axis], self.center[0])
        if self.kind == "ball":
            dd = sum(_pdist(pts[..., j], self.center[j]) ** 2 for j in range(pts.shape[-1]))
            return self.size - np.sqrt(dd)
        raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class ControlRegion:
    """omega as a union of shapes; phi = step(signed distance / width).

    phi = 0 outside omega and phi = 1 on omega' = {distance > width}, so
    1_{omega'} <= phi <= 1_omega holds pointwise.
    """
    dim: int
    shapes: tuple
    width: float = 0.4

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if not self.width > 0:
            raise ValueError("transition width must be positive")
        for s in self.shapes:
            if s.kind == "arc" and self.dim != 1:
                raise ValueError("arcs live on the circle")
            if s.kind in ("strip", "ball") and self.dim != 2:
                raise ValueError(f"{s.kind} regions need d = 2")

    def signed_distance(self, pts):
        return np.max([s.signed_distance(pts) for s in self.shapes], axis=0)

    def indicator(self, pts):
        return self.signed_distance(pts) > 0

    def interior(self, pts):
        """Indicator of omega'."""
        return self.signed_distance(pts) >= self.width

    def phi_samples(self, grid):
        pts = np.stack(grid.x, axis=-1)
        sd = self.signed_distance(pts)
        return pd.smooth_step(np.where(np.isinf(sd), 1.0, sd / self.width))

    def phi(self, grid):
        return fc.forward(grid, self.phi_samples(grid))

    def phi_mean(self, grid):
        return float(np.mean(self.phi_samples(grid)))

    @property
    def is_torus(self):
        return any(s.kind == "torus" for s in self.shapes)

    def to_json(self):
        return {"dim": self.dim, "width": self.width,
                "shapes": [{"kind": s.kind, "center": list(s.center), "size": s.size,
                            "axis": s.axis} for s in self.shapes]}

    @staticmethod
    def from_json(obj):
        shapes = tuple(Shape(s["kind"], tuple(s.get("center", (np.pi,))),
                             float(s.get("size", 1.0)), int(s.get("axis", 1)))
                       for s in obj["shapes"])
        return ControlRegion(int(obj["dim"]), shapes, float(obj.get("width", 0.4)))


def full_torus(dim):
    return ControlRegion(dim, (Shape("torus"),))


def arc(length, center=np.pi, width=0.4):
    return ControlRegion(1, (Shape("arc", (center,), 0.5 * length),), width)


def strip(halfwidth, center=np.pi, axis=1, width=0.4):
    return ControlRegion(2, (Shape("strip", (center,), halfwidth, axis),), width)


def ball(center, radius, width=0.4):
    return ControlRegion(2, (Shape("ball", tuple(center), radius),), width)


def union(*regions):
    return ControlRegion(regions[0].dim, sum((r.shapes for r in regions), ()),
                         min(r.width for r in regions))


def controlled_operator(op, region, use_chi=True):
    """Attach phi_omega and chi_T of a region to a linearized operator."""
    chi = ev.chi_T(op.times, op.T) if use_chi else np.ones(op.steps + 1)
    return op.with_control(phi=region.phi_samples(op.grid), chi=chi)


# -- Gram operator ---------------------------------------------------------------------

def _dot(grid, a, b):
    return fc.inner(grid, a, b)


@dataclass
class GramSystem:
    op: ev.LinearizedOperator
    cg_tol: float = 1e-10
    cg_maxiter: int = 500
    res_s: float = 0.0              # Sobolev index of the CG stopping test
    method: str = "cg"              # or "dense": assembled K and a symmetric solve
    history: list = field(default_factory=list)
    rayleigh: dict = field(default_factory=dict)
    _dual: object = field(default=None, repr=False)
    _dense: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.method not in ("cg", "dense"):
            raise ValueError(f"unknown Gram inversion method {self.method!r}")
        if not self.cg_tol > 0 or self.cg_maxiter < 1:
            raise ValueError("cg_tol must be positive and cg_maxiter >= 1")

    @property
    def grid(self):
        return self.op.grid

    def inner(self, a, b):
        return _dot(self.grid, a, b)

    def control_of(self, f0):
        """F = -B* S f0 at every node, with the cached dual trajectory."""
        dual = ev.solve_dual(f0, self.op)
        self._dual = dual
        vt = dual.smoothed()
        return np.array([-self.op.apply_Bt(j, vt[j]) for j in range(self.op.steps + 1)])

    def apply(self, f0):
        """K f0 (batched along trailing axes)."""
        f0 = np.asarray(f0, dtype=complex)
        F = self.control_of(f0)
        G = [self.op.apply_B(j, F[j]) for j in range(self.op.steps + 1)]
        return ev.range_operator(self.op, G)

    def matrix(self, chunk=64):
        """Dense realified K (2N x 2N), assembled in batches."""
        g = self.grid
        N2 = 2 * g.size
        E = np.eye(N2)
        cols = []
        for s in range(0, N2, chunk):
            block = fc.complexify(g, E[:, s:s + chunk])
            cols.append(fc.realify(g, self.apply(block)))
        return np.concatenate(cols, axis=1)


def apply_gram(f0, sys):
    return sys.apply(f0)


def _invert_dense(u0, sys):
    g = sys.grid
    if sys._dense is None:
        Kz = _restrict_zero_mean(g, sys.matrix())
        Kz = 0.5 * (Kz + Kz.T)
        lam, U = np.linalg.eigh(Kz)
        sys._dense = (lam, U)
        sys.rayleigh = {"min": float(lam[0]), "max": float(lam[-1])}
    lam, U = sys._dense
    if lam[0] <= 0:
        raise ControlError(f"Gram matrix is singular (smallest eigenvalue {lam[0]:.3g})")
    N = g.size
    keep = np.ones(2 * N, dtype=bool)
    keep[0] = keep[N] = False
    b = fc.realify(g, u0)
    shp = b.shape
    b = b.reshape(2 * N, -1)
    x = np.zeros_like(b)
    x[keep] = U @ ((U.T @ b[keep]) / lam[:, None])
    f0 = fc.complexify(g, x.reshape(shp))
    r = u0 - sys.apply(f0)
    sys.history = [float(np.max(fc.sobolev_norm(g, r, sys.res_s)
                                / np.maximum(fc.sobolev_norm(g, u0, sys.res_s), 1e-300)))]
    return f0


def invert_gram(u0, sys, x0=None, allow_fail=False):
    """Conjugate gradient for K f0 = u0 in the real inner product.

    Stops when the H^res_s norm of the residual falls below cg_tol times that
    of u0.  Ritz values of the CG Lanczos tridiagonal give the Rayleigh
    quotient estimates stored in sys.rayleigh.
    """
    g = sys.grid
    u0 = np.asarray(u0, dtype=complex)
    if np.max(np.abs(u0[(0,) * g.dim])) > 1e-14 * max(1.0, np.max(np.abs(u0))):
        raise ValueError("u0 must have zero mean")
    nrm = lambda v: float(np.max(fc.sobolev_norm(g, v, sys.res_s)))
    b_norm = nrm(u0)
    x = np.zeros_like(u0) if x0 is None else np.array(x0, dtype=complex)
    if b_norm == 0:
        sys.history = [0.0]
        return x
    if sys.method == "dense":
        return _invert_dense(u0, sys)
    r = u0 - sys.apply(x) if x0 is not None else u0.copy()
    p = r.copy()
    rr = sys.inner(r, r)
    hist = [nrm(r) / b_norm]
    alphas, betas = [], []
    for it in range(sys.cg_maxiter):
        if hist[-1] <= sys.cg_tol:
            break
        Kp = sys.apply(p)
        pKp = sys.inner(p, Kp)
        if pKp <= 0:
            break
        alpha = rr / pKp
        x = x + alpha * p
        r = r - alpha * Kp
        rr_new = sys.inner(r, r)
        beta = rr_new / rr
        alphas.append(alpha)
        betas.append(beta)
        rr = rr_new
        p = r + beta * p
        hist.append(nrm(r) / b_norm)
    sys.history = hist
    sys.rayleigh = _ritz(alphas, betas)
    if hist[-1] > sys.cg_tol and not allow_fail:
        raise ControlError(f"CG reached {len(hist) - 1} iterations with residual "
                           f"{hist[-1]:.3g}; smallest Rayleigh estimate "
                           f"{sys.rayleigh.get('min', float('nan')):.3g}")
    return x


def _ritz(alphas, betas):
    m = len(alphas)
    if m == 0:
        return {}
    Tm = np.zeros((m, m))
    for i in range(m):
        Tm[i, i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i + 1 < m:
            Tm[i, i + 1] = Tm[i + 1, i] = np.sqrt(betas[i]) / alphas[i]
    ev_ = np.linalg.eigvalsh(Tm)
    return {"min": float(ev_[0]), "max": float(ev_[-1])}


def theta_control(u0, sys, f0=None):
    """Theta u0 = -B* S K^{-1} u0 as a ControlInput."""
    if f0 is None:
        f0 = invert_gram(u0, sys)
    F = sys.control_of(f0)
    return ev.ControlInput(F, sys.op.times)


def control_residual(u0, F, op, source=None):
    """||u(T)|| / ||u0|| after driving u0 with F."""
    tr = ev.solve_forward(u0, op, F, source)
    g = op.grid
    return float(fc.sobolev_norm(g, tr.final) / max(fc.sobolev_norm(g, u0), 1e-300)), tr


def phi_control(u0, sys, op_full, Bfull=None, tol=1e-10, maxiter=60, s=0.0, info=False,
                floor=1e-6):
    """Control for (d/dt + P + R) u = (B + beta) F, as Theta (1 + E)^{-1}.

    op_full carries P + R (its Q) and, through Bmat, B + beta.  With
    A v0 = R~((B + beta) Theta v0) one has A = 1 + E, and A v0 = u0 is solved
    by the Neumann (Richardson) iteration v <- v + (u0 - A v).  A residual
    ratio >= 0.9 above ``floor`` means the series diverges; below it the
    iteration has reached the roundoff level of the Gram solve and stops.
    """
    g = sys.grid
    u0 = np.asarray(u0, dtype=complex)
    nrm = lambda v: float(fc.sobolev_norm(g, v, s))
    b = nrm(u0)
    hist, ratios = [], []
    if b == 0:
        F = np.zeros((sys.op.steps + 1,) + g.shape, dtype=complex)
        out = ev.ControlInput(F, sys.op.times)
        return (out, {"residuals": [0.0], "ratios": []}) if info else out
    op_c = op_full if Bfull is None else op_full.with_control(Bmat=Bfull)

    def A(v):
        th = theta_control(v, sys)
        G = [op_c.apply_B(j, th.F[j]) for j in range(op_c.steps + 1)]
        return ev.range_operator(op_c, G), th

    v = u0.copy()
    best = None
    for it in range(maxiter):
        Av, th = A(v)
        r = u0 - Av
        hist.append(nrm(r) / b)
        if best is None or hist[-1] < best[0]:
            best = (hist[-1], th, v)
        if hist[-1] <= tol:
            break
        if len(hist) > 1:
            ratios.append(hist[-1] / hist[-2])
            if ratios[-1] >= 0.9:
                if hist[-1] > floor:
                    raise ControlError(f"perturbation series diverges (ratio {ratios[-1]:.3g}); "
                                       "amplitude too large")
                break
        v = v + r
    _, th, v = best
    out = ev.ControlInput(th.F, sys.op.times)
    if info:
        return out, {"residuals": hist, "ratios": ratios, "v0": v}
    return out


# -- diagnostics -----------------------------------------------------------------------

def _restrict_zero_mean(grid, K):
    """Drop the realified k = 0 rows/columns."""
    N = grid.size
    keep = np.ones(2 * N, dtype=bool)
    keep[0] = keep[N] = False
    return K[np.ix_(keep, keep)]


def observability_constant(sys, method="inverse-power", tol=1e-8, maxiter=200, seed=0):
    """Smallest Rayleigh quotient of K on zero-mean fields.

    'inverse-power' runs inverse iteration with an inner CG solve; 'dense'
    takes the smallest eigenvalue of the assembled matrix.
    """
    g = sys.grid
    if method == "dense":
        K = _restrict_zero_mean(g, sys.matrix())
        return float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])
    rng = np.random.default_rng(seed)
    x = fc.random_field(g, rng, real=False)
    x = x / np.sqrt(sys.inner(x, x))
    lam = np.inf
    inner = GramSystem(sys.op, cg_tol=1e-12, cg_maxiter=max(sys.cg_maxiter, 4 * g.size))
    for it in range(maxiter):
        y = invert_gram(x, inner, allow_fail=True)
        ny = np.sqrt(inner.inner(y, y))
        y = y / ny
        Ky = sys.apply(y)
        lam_new = float(sys.inner(y, Ky))
        x = y
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam


def lambda_operator(grid, state, mu, h):
    """Dense Lambda^mu_h = 1 + h^mu T_{(gamma^{3/2})^{2 mu / 3}} (zero-mean space)."""
    bnd = ws.build_symbols(grid, state.eta, check=False)
    vals = np.abs(bnd.gamma_32.values) ** (2.0 * mu / 3.0)
    a = pd.SampledSymbol(grid, mu, vals, "real-even")
    return fc.rmat(np.diag(fc.pi_multiplier().values(grid).real.ravel())
                   + h ** mu * pd.paradiff_matrix(a))


def commutator_diagnostic(sys, mu, h, state=None, K=None):
    """|| [K, Lambda^mu_h] Lambda^{-mu}_h ||_{L^2 -> L^2} on zero-mean fields."""
    g = sys.grid
    if state is None:
        state = sys.op.states[0] if sys.op.states else ws.SurfaceState.zero(g)
    if K is None:
        K = sys.matrix()
    L = lambda_operator(g, state, mu, h)
    Kz, Lz = _restrict_zero_mean(g, K), _restrict_zero_mean(g, L)
    C = (Kz @ Lz - Lz @ Kz) @ np.linalg.inv(Lz)
    return float(np.linalg.norm(C, 2))


def hum_least_norm_check(sys, u0):
    """Weighted norms of Theta u0 and of the least-norm exact control.

    The reachability map F -> R B F is assembled densely node by node, so this
    is for small grids only.  HUM optimality means the two norms agree.
    """
    g = sys.grid
    op = sys.op
    w = ev.trapezoid_weights(op)
    N2 = 2 * g.size
    E = fc.complexify(g, np.eye(N2))
    zero = np.zeros_like(E)
    cols = []
    for j in range(op.steps + 1):
        G = [zero] * (op.steps + 1)
        G[j] = op.apply_B(j, E)
        cols.append(fc.realify(g, ev.range_operator(op, G)) / np.sqrt(w[j]))
    Amat = np.concatenate(cols, axis=1)
    y = np.linalg.pinv(Amat, rcond=1e-12) @ fc.realify(g, u0)
    th = theta_control(u0, sys)
    hum = np.sqrt(sum(w[j] * np.sum(fc.realify(g, th.F[j]) ** 2)
                      for j in range(op.steps + 1)))
    return {"least_norm": float(np.linalg.norm(y)), "hum": float(hum)}

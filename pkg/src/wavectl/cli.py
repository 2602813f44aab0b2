"""Command line entry point: ``wavectl <experiment> --config FILE`` and ``wavectl verify DIR``.

Config files are JSON objects or flat ``key = value`` text (one pair per
line, ``#`` starts a comment).  Values are read as JSON when possible, so
``ns = [8, 16]`` gives a list and ``depth = inf`` is accepted as infinity;
anything else is kept as a string.  Regions are a JSON object (the
``ControlRegion.to_json`` layout) or a short string: ``torus``, ``arc:L``,
``strip:HALFWIDTH[:AXIS]``, ``ball:CX,CY,R``, joined with ``+`` for unions.

Every run writes record.json (config snapshot, input hash, metrics, file
manifest with sha256, wall clock per stage), CSV tables and a PNG per CSV.
"""
import argparse
import hashlib
import json
import math
import os
import sys
import time

EXPERIMENTS = ("simulate", "control-linear", "control-nonlinear", "gcc-check", "quasimode",
               "paradiff-verify", "observability")

COMMON = {"dim": 1, "n": 32, "depth": math.inf, "g": 1.0, "seed": 0}

DEFAULTS = {
    "simulate": {"T": 1.0, "steps": 256, "amplitude": 1e-3, "s": 12.0},
    "control-linear": {"T": 1.0, "steps": 64, "region": "arc:3.141592653589793",
                       "cg_tol": 1e-10, "cg_maxiter": 500, "amplitude": 1.0},
    "control-nonlinear": {"T": 2.0, "steps": 512, "region": "arc:5.0", "amplitude": 1e-3,
                          "s": 12.0, "tol": 1e-9, "maxiter": 12, "eps0": 2.0, "K": 1e3},
    "gcc-check": {"dim": 2, "region": "torus", "n_dirs": 64, "n_offsets": 64, "upsilon": 1.0},
    "quasimode": {"dim": 2, "n": 128, "gamma": [1, 0], "delta": 1.0, "alpha": 1.5,
                  "ns": [4, 8, 12, 16, 20, 24, 28, 32], "region": "strip:1.0:1"},
    "paradiff-verify": {"trials": 20, "ns": [16, 64]},
    "observability": {"dim": 2, "ns": [8, 16], "T": 4.0, "steps": None, "region": "strip:1.0:1"},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


# -- config ---------------------------------------------------------------------------

def _value(text):
    t = text.strip()
    low = t.lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    if low in ("true", "false"):
        return low == "true"
    try:
        return json.loads(t)
    except ValueError:
        return t.strip("'\"")


def parse_config_text(text):
    s = text.strip()
    if s.startswith("{"):
        try:
            obj = json.loads(s)
        except ValueError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config must be an object")
        return obj
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"line {no}: bad key {k!r}")
        out[k] = _value(v)
    return out


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def parse_region(spec, dim):
    from . import hum_control as hc
    if isinstance(spec, dict):
        try:
            reg = hc.ControlRegion.from_json(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad region: {exc}") from None
        if reg.dim != dim:
            raise ConfigError("region dimension differs from the grid")
        return reg
    if not isinstance(spec, str) or not spec:
        raise ConfigError("region must be a string or an object")
    parts = []
    for piece in spec.split("+"):
        kind, *args = piece.strip().split(":")
        try:
            if kind == "torus":
                parts.append(hc.full_torus(dim))
            elif kind == "arc":
                L = float(args[0])
                if not 0 < L <= 2 * math.pi:
                    raise ValueError("arc length must lie in (0, 2 pi]")
                parts.append(hc.arc(L))
            elif kind == "strip":
                hw = float(args[0])
                axis = int(args[1]) if len(args) > 1 else 1
                if hw <= 0 or axis not in (0, 1):
                    raise ValueError("strip needs a positive half width and axis 0 or 1")
                parts.append(hc.strip(hw, axis=axis))
            elif kind == "ball":
                cx, cy, r = (float(v) for v in args[0].split(","))
                if r <= 0:
                    raise ValueError("radius must be positive")
                parts.append(hc.ball((cx, cy), r))
            else:
                raise ValueError(f"unknown region kind {kind!r}")
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad region {piece!r}: {exc}") from None
    try:
        reg = hc.union(*parts)
    except ValueError as exc:
        raise ConfigError(f"bad region: {exc}") from None
    if reg.dim != dim:
        raise ConfigError("region dimension differs from the grid")
    return reg


def _num(cfg, key, lo=None, hi=None, integer=False, open_lo=False, allow_inf=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number")
    if integer and (not float(v).is_integer() or isinstance(v, float) and math.isinf(v)):
        raise ConfigError(f"{key} must be an integer")
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ConfigError(f"{key} must be finite")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"{key} must be {'>' if open_lo else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{key} must be <= {hi}")
    cfg[key] = int(v) if integer else float(v)


def _int_list(cfg, key, lo):
    v = cfg[key]
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool)
                                                   and x >= lo for x in v):
        raise ConfigError(f"{key} must be a nonempty list of integers >= {lo}")


def validate(experiment, raw, seed=None):
    """Merge defaults, check every field, return the normalized config."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[experiment])
    unknown = set(raw) - set(cfg) - {"experiment", "out"}
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError("config names a different experiment")
    cfg.update({k: v for k, v in raw.items() if k not in ("experiment", "out")})
    if seed is not None:
        cfg["seed"] = seed
    _num(cfg, "seed", 0, integer=True)
    _num(cfg, "dim", 1, 2, integer=True)
    _num(cfg, "n", 8, 512, integer=True)
    if cfg["n"] % 2:
        raise ConfigError("n must be even")
    _num(cfg, "depth", 0, open_lo=True, allow_inf=True)
    _num(cfg, "g", 0)
    for key in ("T", "amplitude", "cg_tol", "tol", "eps0", "K", "upsilon", "delta"):
        if key in cfg:
            _num(cfg, key, 0, open_lo=True)
    for key in ("steps", "cg_maxiter", "maxiter", "n_dirs", "n_offsets", "trials"):
        if key in cfg and cfg[key] is not None:
            _num(cfg, key, 1, integer=True)
    if "s" in cfg:
        _num(cfg, "s", 0)
    if "alpha" in cfg:
        _num(cfg, "alpha", 1, 2, open_lo=True)
    if "ns" in cfg:
        _int_list(cfg, "ns", 1)
    if "region" in cfg:
        parse_region(cfg["region"], cfg["dim"])
    if experiment in ("simulate", "control-linear", "control-nonlinear") and cfg["dim"] != 1 \
            and cfg["n"] > 32:
        raise ConfigError("d = 2 time integration is limited to n <= 32")
    if experiment == "control-nonlinear":
        if cfg["steps"] % 2:
            raise ConfigError("steps must be even")
        if cfg["amplitude"] > cfg["eps0"] / cfg["K"]:
            raise ConfigError("amplitude exceeds eps0 / K")
    if experiment == "gcc-check" and min(cfg["n_dirs"], cfg["n_offsets"]) < 64:
        raise ConfigError("n_dirs and n_offsets must be at least 64")
    if experiment == "quasimode":
        if cfg["dim"] != 2:
            raise ConfigError("quasimodes need dim = 2")
        gm = cfg["gamma"]
        if not (isinstance(gm, list) and len(gm) == 2 and all(isinstance(x, int) for x in gm)
                and math.gcd(*gm) == 1):
            raise ConfigError("gamma must be a primitive integer pair")
        if max(cfg["ns"]) * max(abs(x) for x in gm) > cfg["n"] / 3:
            raise ConfigError("n * gamma exceeds a third of the grid")
    if experiment == "paradiff-verify":
        if any(n % 2 or n < 8 for n in cfg["ns"]):
            raise ConfigError("ns must be even and >= 8")
    if experiment == "observability":
        if any(n % 2 or n < 8 for n in cfg["ns"]):
            raise ConfigError("ns must be even and >= 8")
        if cfg["dim"] == 2 and max(cfg["ns"]) > 16:
            raise ConfigError("dense Gram matrices are limited to n <= 16 in d = 2")
    return cfg


def config_hash(experiment, cfg):
    from . import __version__
    blob = json.dumps({"experiment": experiment, "config": _jsonable(cfg), "version": __version__},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# -- experiments ----------------------------------------------------------------------

class Run:
    """Stage timing, metrics and emitted files of one experiment."""

    def __init__(self, out):
        self.out = out
        self.metrics = {}
        self.wall = {}
        self.files = []

    def stage(self, name, fn, *args, **kw):
        t = time.perf_counter()
        try:
            res = fn(*args, **kw)
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.wall[name] = time.perf_counter() - t
        return res

    def csv(self, name, header, rows, plot=None):
        import csv
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in r])
        self.files.append(name)
        if plot is not None:
            from . import plotting
            png = plotting.plot_csv(path, **plot)
            self.files.append(os.path.basename(png))
        return path


def _grid(cfg, n=None):
    from . import fourier_core as fc
    return fc.make_grid(cfg["dim"], n or cfg["n"], cfg["depth"])


def _rng(cfg):
    import numpy as np
    return np.random.default_rng(cfg["seed"])


def exp_simulate(cfg, run):
    import numpy as np
    from . import nonlinear_control as nc
    g = _grid(cfg)
    st = run.stage("initial data", nc.random_state, g, _rng(cfg), cfg["amplitude"], cfg["s"])
    tr = run.stage("integration", nc.simulate_waterwave, st, None, cfg["T"], cfg["steps"], cfg["g"])
    E = run.stage("energy", lambda: np.array([nc.energy(tr.state(j), cfg["g"])
                                             for j in range(len(tr.times))]))
    m = tr.mass()
    rows = [(t, float(fc_norm(g, tr.eta[j], cfg["s"] + 0.5)), float(fc_norm(g, tr.psi[j], cfg["s"])),
             m[j], E[j]) for j, t in enumerate(tr.times)]
    run.csv("trajectory.csv", ["t", "eta_norm", "psi_norm", "mass", "energy"], rows,
            plot={"ys": ["eta_norm", "psi_norm"], "logy": True})
    run.metrics.update(mass_drift=float(np.max(np.abs(m - m[0]))),
                       energy_rel_drift=float(np.max(np.abs(E - E[0])) / abs(E[0])),
                       final_norm=tr.final.norm(cfg["s"]))


def fc_norm(grid, c, s):
    from . import fourier_core as fc
    return fc.sobolev_norm(grid, c, s)


def exp_control_linear(cfg, run):
    import numpy as np
    from . import evolution as ev
    from . import fourier_core as fc
    from . import hum_control as hc
    g = _grid(cfg)
    reg = parse_region(cfg["region"], cfg["dim"])
    op = run.stage("operator", lambda: hc.controlled_operator(
        ev.flat_operator(g, cfg["T"], cfg["steps"], cfg["g"]), reg))
    u0 = fc.random_field(g, _rng(cfg), real=False, decay=1.0)
    u0 = cfg["amplitude"] * u0 / fc.sobolev_norm(g, u0)
    sysg = hc.GramSystem(op, cg_tol=cfg["cg_tol"], cg_maxiter=cfg["cg_maxiter"])
    f0 = run.stage("gram inversion", hc.invert_gram, u0, sysg)
    ctrl = run.stage("control", hc.theta_control, u0, sysg, f0)
    ratio, tr = run.stage("verification", hc.control_residual, u0, ctrl.F, op)
    unorm = tr.norms()
    Fn = np.array([fc.sobolev_norm(g, F) for F in ctrl.F])
    run.csv("trajectory.csv", ["t", "u_norm", "F_norm"], zip(op.times, unorm, Fn),
            plot={"logy": True})
    it = len(sysg.history)
    run.csv("cg_history.csv", ["iteration", "residual"], enumerate(sysg.history),
            plot={"logy": True} if it > 1 else None)
    w = ev.trapezoid_weights(op)
    run.metrics.update(residual_ratio=ratio, cg_iterations=it, u0_norm=float(unorm[0]),
                       uT_norm=float(unorm[-1]),
                       control_norm=float(np.sqrt(np.sum(w * Fn ** 2))),
                       ritz_min=sysg.rayleigh.get("min"), ritz_max=sysg.rayleigh.get("max"),
                       phi_mean=reg.phi_mean(g))


def exp_control_nonlinear(cfg, run):
    import numpy as np
    from . import fourier_core as fc
    from . import nonlinear_control as nc
    g = _grid(cfg)
    reg = parse_region(cfg["region"], cfg["dim"])
    rng = _rng(cfg)
    s0, s1 = run.stage("initial data", lambda: (nc.random_state(g, rng, cfg["amplitude"], cfg["s"]),
                                                 nc.random_state(g, rng, cfg["amplitude"], cfg["s"])))
    sc = nc.SchemeConfig(eps0=cfg["eps0"], K=cfg["K"], tol=cfg["tol"], maxiter=cfg["maxiter"],
                         s=cfg["s"], g=cfg["g"])
    t = time.perf_counter()
    try:
        res = nc.end_to_end_control(s0, s1, reg, cfg["T"], cfg["steps"], sc)
    except nc.SchemeError as exc:
        raise StageError("scheme", exc) from exc
    run.wall["scheme+verification"] = time.perf_counter() - t
    sim = res.simulation
    pn = np.array([fc.sobolev_norm(g, p) for p in res.pext])
    run.csv("pressure.csv", ["t", "pext_L2"], zip(res.times, pn), plot={})
    rows = [(t, fc.sobolev_norm(g, sim.eta[j] - 0, cfg["s"] + 0.5),
             fc.sobolev_norm(g, sim.psi[j], cfg["s"]), sim.mass()[j])
            for j, t in enumerate(sim.times)]
    run.csv("trajectory.csv", ["t", "eta_norm", "psi_norm", "mass"], rows,
            plot={"ys": ["eta_norm", "psi_norm"], "logy": True})
    drows = []
    for h, half in enumerate(res.halves):
        drows += [(h, i, d) for i, d in enumerate(half.deltas)]
    run.csv("deltas.csv", ["half", "iteration", "delta"], drows)
    ratios = [r for half in res.halves for r in half.ratios]
    run.metrics.update(error=res.error, c0=res.c0, c0_history=list(res.c0_history),
                       max_delta_ratio=max(ratios) if ratios else 0.0,
                       iterations=[half.n for half in res.halves],
                       initial_distance=nc.state_distance(s0, s1, cfg["s"]),
                       mass_drift=float(np.ptp(sim.mass())))


def exp_gcc_check(cfg, run):
    from . import gcc_geometry as gg
    reg = parse_region(cfg["region"], cfg["dim"])
    L, info = run.stage("geodesic sampling", gg.min_traverse_length, reg, cfg["n_dirs"],
                        cfg["n_offsets"], info=True)
    holds = bool(L < float("inf"))
    T0 = gg.control_time_floor(L=L, upsilon=cfg["upsilon"]) if holds else float("inf")
    if not reg.is_torus:
        import numpy as np
        dirs, per = gg.sample_directions(reg.dim, cfg["n_dirs"], periods=True)
        offs = gg.sample_offsets(reg.dim, cfg["n_offsets"])
        H = gg.hit_lengths(reg, offs, dirs, periods=per)
        ang = np.arctan2(dirs[:, -1], dirs[:, 0])
        order = np.argsort(ang, kind="stable")
        worst = H.max(axis=0)
        run.csv("directions.csv", ["angle", "max_hit_length"],
                [(ang[j], worst[j] if np.isfinite(worst[j]) else -1.0) for j in order], plot={})
    w = info["worst"]
    run.metrics.update(L=L, verdict="GCC holds" if holds else "GCC fails", T_floor=T0,
                       samples=info["samples"],
                       worst_direction=list(w.direction) if w else None,
                       worst_offset=list(w.offset) if w else None)


def exp_quasimode(cfg, run):
    from . import gcc_geometry as gg
    g = _grid(cfg)
    reg = parse_region(cfg["region"], cfg["dim"])
    gamma = tuple(cfg["gamma"])
    chi = gg.transverse_profile(g, gamma, gg.smooth_bump(cfg["delta"]), cfg["delta"])
    rows = run.stage("sweep", gg.quasimode_sweep, g, gamma, chi, cfg["ns"], cfg["alpha"], reg,
                     cfg["delta"])
    run.csv("quasimode.csv", ["n", "r_n", "obs_n"], rows, plot={"logy": True})
    ns = [r[0] for r in rows]
    rs = [r[1] for r in rows]
    slope = gg.fit_slope(ns, rs) if len(ns) > 1 and min(rs) > 0 else None
    run.metrics.update(slope=slope, max_obs=max(r[2] for r in rows), r_first=rs[0], r_last=rs[-1])


def exp_paradiff_verify(cfg, run):
    import numpy as np
    from . import fourier_core as fc
    from . import paradiff as pd
    rng = _rng(cfg)
    rows = []
    for n in cfg["ns"]:
        g = _grid(cfg, n)
        one = pd.symbol_from_multiplier(g, lambda xi: np.ones(xi.shape[:-1]), 0.0)
        pi = fc.pi_multiplier().values(g)

        def trial():
            u = fc.random_field(g, rng, real=False, batch=(cfg["trials"],))
            a = fc.random_field(g, rng, real=True, decay=3.0)
            ident = np.max(np.abs(pd.paradiff_apply(one, u) - pi[..., None] * u))
            lhs = pd.paraproduct(g, a, u)
            rhs = pd.apply_matrix(g, pd.paraproduct_in_symbol(g, u[..., 0]), a)[..., None]
            route = np.max(np.abs(lhs[..., 0] - rhs[..., 0]))
            b = fc.random_field(g, rng, real=True, decay=3.0)
            R = pd.paraproduct_remainder(g, a, b)
            return ident, route, fc.sobolev_norm(g, R) / fc.sobolev_norm(g, fc.mul(g, a, b))

        ident, route, rem = run.stage(f"n={n}", trial)
        rows.append((n, ident, route, rem))
    run.csv("paradiff.csv", ["n", "quantization_error", "paraproduct_route_error",
                             "remainder_rel"], rows, plot={"logy": True})
    run.metrics.update(max_quantization_error=max(r[1] for r in rows),
                       max_route_error=max(r[2] for r in rows))


def exp_observability(cfg, run):
    from . import evolution as ev
    from . import gcc_geometry as gg
    from . import hum_control as hc
    reg = parse_region(cfg["region"], cfg["dim"])
    holds = bool(reg.is_torus or run.stage("gcc", gg.gcc_holds, reg))
    rows = []
    for n in cfg["ns"]:
        g = _grid(cfg, n)
        steps = cfg["steps"]
        if steps is None:
            kmax = float(g.kabs.max())
            steps = 2 * int(math.ceil(kmax ** 1.5 * cfg["T"] / math.pi))
        op = hc.controlled_operator(ev.flat_operator(g, cfg["T"], steps, cfg["g"]), reg)
        lam = run.stage(f"n={n}", hc.observability_constant, hc.GramSystem(op), "dense")
        rows.append((n, steps, lam))
    run.csv("observability.csv", ["n", "steps", "lambda_min"], rows, plot={"logy": True})
    lams = [r[2] for r in rows]
    run.metrics.update(lambda_min=lams, gcc_holds=holds,
                       shrink=[lams[i] / lams[i + 1] for i in range(len(lams) - 1)])


RUNNERS = {"simulate": exp_simulate, "control-linear": exp_control_linear,
           "control-nonlinear": exp_control_nonlinear, "gcc-check": exp_gcc_check,
           "quasimode": exp_quasimode, "paradiff-verify": exp_paradiff_verify,
           "observability": exp_observability}


def run(experiment, raw, out=None, seed=None):
    """Validate, execute and persist one experiment; returns the record dict."""
    cfg = validate(experiment, raw, seed)
    h = config_hash(experiment, cfg)
    out = out or raw.get("out") or os.path.join("runs", f"{experiment}-{h[:12]}")
    os.makedirs(out, exist_ok=True)
    r = Run(out)
    try:
        RUNNERS[experiment](cfg, r)
        status = "ok"
        err = None
    except StageError as exc:
        status, err = "failed", str(exc)
    record = {"experiment": experiment, "config": _jsonable(cfg), "input_hash": h,
              "status": status, "error": err, "metrics": _jsonable(r.metrics),
              "wall_clock": r.wall,
              "artifacts": {f: _sha(os.path.join(out, f)) for f in r.files}}
    with open(os.path.join(out, "record.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    return dict(record, out=out)


# -- verify ---------------------------------------------------------------------------

def _read_table(path):
    import csv
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    return {h: [float(r[i]) for r in rows[1:]] for i, h in enumerate(head)}


def _close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def verify(path):
    """Re-derive cheap invariants from a run directory.  Returns [(name, ok, detail)]."""
    rec_path = path if path.endswith(".json") else os.path.join(path, "record.json")
    if not os.path.isfile(rec_path):
        raise FileNotFoundError(f"no record.json in {path}")
    base = os.path.dirname(rec_path)
    with open(rec_path) as fh:
        rec = json.load(fh)
    checks = []
    for f, digest in sorted(rec.get("artifacts", {}).items()):
        p = os.path.join(base, f)
        if not os.path.isfile(p):
            checks.append((f"artifact {f}", False, "missing"))
        else:
            ok = _sha(p) == digest
            checks.append((f"artifact {f}", ok, "sha256 ok" if ok else f"{f} hash mismatch"))
    checks.append(("status", rec.get("status") == "ok", rec.get("error") or "ok"))
    m, exp = rec.get("metrics", {}), rec.get("experiment")
    try:
        tables = {f: _read_table(os.path.join(base, f)) for f in rec.get("artifacts", {})
                  if f.endswith(".csv")}
    except (OSError, ValueError, IndexError) as exc:
        checks.append(("tables", False, f"unreadable CSV: {exc}"))
        return checks
    if exp == "simulate" and "trajectory.csv" in tables:
        t = tables["trajectory.csv"]
        drift = max(abs(x - t["mass"][0]) for x in t["mass"])
        checks.append(("mass conservation", drift <= 1e-12, f"drift {drift:.3e}"))
        e = t["energy"]
        rel = max(abs(x - e[0]) for x in e) / abs(e[0])
        checks.append(("energy drift", rel <= 1e-4, f"relative {rel:.3e}"))
        checks.append(("nonnegative norms", min(t["eta_norm"] + t["psi_norm"]) >= 0, ""))
    if exp == "control-linear" and "trajectory.csv" in tables:
        t = tables["trajectory.csv"]
        r = t["u_norm"][-1] / t["u_norm"][0]
        checks.append(("residual matches record", _close(r, m["residual_ratio"]), f"{r:.3e}"))
        checks.append(("controlled to rest", r <= 1e-6, f"ratio {r:.3e}"))
        checks.append(("cutoff in time", t["F_norm"][-1] <= 1e-12 * max(t["F_norm"]), ""))
    if exp == "control-nonlinear" and "deltas.csv" in tables:
        t = tables["deltas.csv"]
        checks.append(("final error <= 1e-4", m["error"] <= 1e-4, f"{m['error']:.3e}"))
        ok = True
        for h in (0, 1):
            d = [x for hh, x in zip(t["half"], t["delta"]) if hh == h]
            ok &= all(b / a <= 0.5 for a, b in zip(d[1:], d[2:]))
        checks.append(("geometric delta decay", ok, ""))
    if exp == "gcc-check":
        L = m.get("L")
        L = float(L) if not isinstance(L, str) else math.inf
        ok = (m.get("verdict") == "GCC holds") == math.isfinite(L) and (L >= 0)
        checks.append(("verdict consistent with L", ok, f"L = {L}"))
        if "directions.csv" in tables:
            worst = max(x if x >= 0 else math.inf for x in tables["directions.csv"]["max_hit_length"])
            checks.append(("L is the worst direction", _close(worst, L) or worst == L == math.inf,
                           f"{worst}"))
    if exp == "quasimode" and "quasimode.csv" in tables:
        t = tables["quasimode.csv"]
        checks.append(("r_n >= 0", min(t["r_n"]) >= 0, ""))
        checks.append(("obs_n in [0, 1]", all(0 <= o <= 1 + 1e-12 for o in t["obs_n"]), ""))
        if m.get("slope") is not None and len(t["n"]) > 1:
            import numpy as np
            sl = float(np.polyfit(np.log(t["n"]), np.log(t["r_n"]), 1)[0])
            checks.append(("slope matches record", _close(sl, m["slope"], 1e-8), f"{sl:.4f}"))
    if exp == "paradiff-verify" and "paradiff.csv" in tables:
        q = max(tables["paradiff.csv"]["quantization_error"])
        checks.append(("T_1 = pi(D)", q <= 1e-12, f"{q:.3e}"))
    if exp == "observability" and "observability.csv" in tables:
        lam = tables["observability.csv"]["lambda_min"]
        checks.append(("Gram is PSD", min(lam) >= -1e-8, f"min {min(lam):.3e}"))
    return checks


# -- entry point ----------------------------------------------------------------------

def _threads():
    v = os.environ.get("WAVECTL_THREADS")
    if v:
        if not v.isdigit() or int(v) < 1:
            raise ConfigError("WAVECTL_THREADS must be a positive integer")
        for k in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[k] = v


def build_parser():
    p = argparse.ArgumentParser(prog="wavectl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        q = sub.add_parser(name)
        q.add_argument("--config", required=True)
        q.add_argument("--out")
        q.add_argument("--seed", type=int)
    v = sub.add_parser("verify")
    v.add_argument("record")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _threads()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "verify":
        try:
            checks = verify(args.record)
        except (OSError, ValueError) as exc:
            print(f"verify error: {exc}", file=sys.stderr)
            return 2
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        return 0 if all(ok for _, ok, _ in checks) else 1
    try:
        raw = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        validate(args.command, raw, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rec = run(args.command, raw, args.out, args.seed)
    if rec["status"] != "ok":
        print(rec["error"], file=sys.stderr)
        return 1
    for k, v in rec["metrics"].items():
        print(f"{k} = {v}")
    print(f"record: {os.path.join(rec['out'], 'record.json')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

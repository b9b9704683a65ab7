"""Experiment orchestration: capacity studies, stationary and evolution
homogenization sweeps, and deterministic report emission."""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_trapz = getattr(np, "trapezoid", None) or np.trapz

from . import __version__
from .capacity import (
    _release_memory,
    brinkman_matrix,
    capacity_matrix,
    solve_cell_problem,
)
from .errors import ConfigError, UnresolvedHole
from .evolution import InitialData, run
from .fields import ForcingField, VelocityField
from .geometry import (
    DomainSpec,
    HoleShape,
    enumerate_holes,
    hole_free_mask,
    rasterize,
    validate_lattice,
)
from .stokes import SteadyStokesSolver, solve_stokes_perforated

KINDS = ("capacity-study", "stationary-homogenization",
         "evolution-homogenization")

_CONFIG_FIELDS = {
    "kind", "epsilons", "alpha", "shape", "resolutions", "mu", "friction",
    "forcing", "initial", "T", "snapshots", "tol", "out", "radii",
    "resolution", "domain", "rho_solid",
}


@dataclass
class ExperimentConfig:
    kind: str
    epsilons: list = field(default_factory=list)
    alpha: float = 3.0
    shape: dict = field(default_factory=lambda: {"kind": "ball",
                                                 "params": [0.5]})
    resolutions: list = field(default_factory=list)
    mu: float = 1.0
    friction: object = "auto"  # "auto", scalar (times identity) or 3x3
    forcing: dict = field(default_factory=lambda: {"kind": "sine", "axis": 0,
                                                   "vary": 2,
                                                   "amplitude": 1.0})
    initial: dict = field(default_factory=lambda: {"kind": "layered",
                                                   "rho_lo": 1.0,
                                                   "rho_hi": 2.0, "axis": 2})
    T: float = 0.2
    snapshots: int = 20
    tol: float = 1e-8
    out: str = "out"
    # capacity-study specifics
    radii: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    resolution: int = 64
    domain: dict = field(default_factory=lambda: {"lo": [0.0, 0.0, 0.0],
                                                  "hi": [1.0, 1.0, 1.0]})
    rho_solid: float = 1.0

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("config needs a 'kind'")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got "
                              f"{self.kind!r}")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.kind == "capacity-study":
            if len(self.radii) < 2:
                raise ConfigError("capacity study needs >= 2 radii")
            if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
                raise ConfigError("radii must be strictly decreasing")
            return
        if not self.epsilons:
            raise ConfigError("epsilon list must not be empty")
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ConfigError("epsilon list must be strictly decreasing")
        if len(self.resolutions) != len(self.epsilons):
            raise ConfigError("need one resolution per epsilon")
        # every hole must be resolvable before any solve starts
        dom = self.domain_spec()
        shape = self.hole_shape()
        for eps, n in zip(self.epsilons, self.resolutions):
            h = max(dom.sides) / n
            r = shape.min_radius * eps ** self.alpha
            if r <= 2.0 * h:
                raise ConfigError(
                    f"resolution {n} cannot resolve the eps={eps:.4g} "
                    f"holes (radius {r:.4g} <= 2h = {2 * h:.4g})")
            if r / h < 4.0:
                warnings.warn(
                    f"eps={eps:.4g} holes are marginally resolved "
                    f"({r / h:.2f} cells/radius at resolution {n}); "
                    "expect error plateaus", stacklevel=2)
        if self.kind == "evolution-homogenization":
            if self.T <= 0:
                raise ConfigError("T must be positive")
            if self.snapshots < 20:
                raise ConfigError("need at least 20 snapshots for the "
                                  "space-time norm")

    def domain_spec(self):
        return DomainSpec(lo=tuple(self.domain["lo"]),
                          hi=tuple(self.domain["hi"]))

    def hole_shape(self):
        return HoleShape(self.shape["kind"], tuple(self.shape["params"]))

    def friction_matrix(self):
        """The supplied D, or None when it must be computed."""
        if isinstance(self.friction, str):
            if self.friction != "auto":
                raise ConfigError("friction must be 'auto', a scalar or a "
                                  "3x3 matrix")
            return None
        D = np.asarray(self.friction, dtype=float)
        if D.ndim == 0:
            D = float(D) * np.eye(3)
        if D.shape != (3, 3):
            raise ConfigError("friction matrix must be 3x3")
        return D

    def canonical(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            if isinstance(v, dict):
                return {k: conv(x) for k, x in sorted(v.items())}
            return v
        return {k: conv(getattr(self, k)) for k in sorted(_CONFIG_FIELDS)}

    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentReport:
    kind: str
    columns: list
    rows: list
    config_hash: str
    version: str = __version__
    partial: bool = False
    extras: dict = field(default_factory=dict)  # e.g. ledgers, D matrix


def make_forcing(mask, spec):
    kind = spec.get("kind", "sine")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "constant":
        vec = [float(v) for v in spec.get("vector", [1.0, 0.0, 0.0])]

        def fn(x, y, z):
            return (np.full_like(x, vec[0]), np.full_like(x, vec[1]),
                    np.full_like(x, vec[2]))
    elif kind == "sine":
        axis = int(spec.get("axis", 0))
        vary = int(spec.get("vary", 2))

        def fn(x, y, z):
            coords = (x, y, z)
            comps = [np.zeros_like(x) for _ in range(3)]
            comps[axis] = amp * np.sin(np.pi * coords[vary])
            return tuple(comps)
    else:
        raise ConfigError(f"unknown forcing kind {kind!r}")
    return ForcingField.from_callable(mask, fn)


def make_initial(mask, spec, rho_solid=1.0):
    kind = spec.get("kind", "layered")
    if kind == "uniform":
        rho = np.full(mask.n, float(spec.get("rho", 1.0)))
    elif kind == "layered":
        lo = float(spec.get("rho_lo", 1.0))
        hi = float(spec.get("rho_hi", 2.0))
        axis = int(spec.get("axis", 2))
        xs = [mask.lo[a] + mask.h * (np.arange(mask.n[a]) + 0.5)
              for a in range(3)]
        mids = 0.5 * (mask.lo + mask.lo + np.asarray(mask.n) * mask.h)
        C = np.meshgrid(*xs, indexing="ij")[axis]
        rho = np.where(C < mids[axis], lo, hi).astype(float)
    else:
        raise ConfigError(f"unknown initial-data kind {kind!r}")
    rho[~mask.cell_fluid] = rho_solid
    return InitialData(rho, VelocityField.zeros(mask))


def resolve_friction(cfg: ExperimentConfig):
    D = cfg.friction_matrix()
    if D is not None:
        return D, None
    bm = brinkman_matrix(cfg.hole_shape(), cfg.epsilons[0], cfg.alpha,
                         cfg.radii, cfg.resolution, tol=cfg.tol)
    return bm.entries, bm


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_capacity_study(cfg: ExperimentConfig, threads: int = 1):
    cfg.validate()
    shape = cfg.hole_shape()
    cols = ["shape", "r", "resolution", "cells_per_radius",
            "C11", "C12", "C13", "C21", "C22", "C23", "C31", "C32", "C33",
            "residual_1", "residual_2", "residual_3"]

    def one(r):
        sol = solve_cell_problem(shape, cfg.resolution, cfg.tol, scale=r)
        C = capacity_matrix(sol)
        row = {"shape": f"{shape.kind}{list(shape.params)}", "r": r,
               "resolution": cfg.resolution,
               "cells_per_radius": sol.mask.min_cells_per_radius}
        for i in range(3):
            for j in range(3):
                row[f"C{i + 1}{j + 1}"] = C.entries[i, j]
        for i in range(3):
            row[f"residual_{i + 1}"] = max(
                sol.residuals[i].momentum_residual,
                sol.residuals[i].divergence_residual)
        return row

    rows = _map_ordered(one, cfg.radii, threads)
    caps = [np.array([[row[f"C{i + 1}{j + 1}"] for j in range(3)]
                      for i in range(3)]) for row in rows]
    from .capacity import BrinkmanMatrix, extrapolate_friction
    from .errors import ExtrapolationUnstable
    extras = {}
    try:
        c_inf, slope, n_fit = extrapolate_friction(cfg.radii, caps)
        extras["brinkman"] = BrinkmanMatrix(c_inf, {
            "shape": {"kind": shape.kind, "params": list(shape.params)},
            "radii": [float(r) for r in cfg.radii],
            "resolution": cfg.resolution,
            "capacities": [c.tolist() for c in caps],
            "fit_slope": slope.tolist(),
            "fit_points": int(n_fit)})
    except ExtrapolationUnstable as e:
        # the sweep itself is still a valid study; record why the fit failed
        extras["extrapolation_error"] = str(e)
    return ExperimentReport("capacity-study", cols, rows, cfg.config_hash(),
                            extras=extras)


def _stationary_one(cfg, D, eps, resolution):
    dom = cfg.domain_spec()
    shape = cfg.hole_shape()
    lat = enumerate_holes(dom, eps, cfg.alpha, shape)
    problems = validate_lattice(lat)
    if problems:
        raise ConfigError("; ".join(problems))
    mask_eps = rasterize(lat, resolution)
    free = hole_free_mask(dom, resolution)
    f_eps = make_forcing(mask_eps, cfg.forcing)  # restricted: 1_{Omega_eps} f
    f_free = make_forcing(free, cfg.forcing)
    # the three solves run sequentially; dropping each solver (matrices
    # plus AMG hierarchies) before building the next keeps the peak at
    # one solver's footprint, which matters at ~100^3 on small machines
    v_eps, _, info_eps = solve_stokes_perforated(mask_eps, f_eps, cfg.mu,
                                                 tol=cfg.tol)
    _release_memory()
    limit_solver = SteadyStokesSolver(free, cfg.mu, friction=D)
    v_brink, _, info_b = limit_solver.solve(f_faces=f_free, tol=cfg.tol)
    del limit_solver
    _release_memory()
    blind_solver = SteadyStokesSolver(free, cfg.mu)
    v_blind, _, info_0 = blind_solver.solve(f_faces=f_free, tol=cfg.tol)
    del blind_solver
    _release_memory()
    # all fields share the grid; zero extension makes the full-box L2 exact
    ref = v_brink.l2norm()
    e_brink = v_eps.diff_l2(v_brink) / ref
    e_blind = v_eps.diff_l2(v_blind) / ref
    return {
        "epsilon": eps, "resolution": resolution,
        "n_holes": lat.n_holes,
        "cells_per_radius": mask_eps.min_cells_per_radius,
        "err_brinkman": e_brink, "err_hole_blind": e_blind,
        "norm_limit": ref,
        "iters_perforated": info_eps.iterations,
        "iters_brinkman": info_b.iterations,
        "iters_blind": info_0.iterations,
    }


def run_stationary_homogenization(cfg: ExperimentConfig, threads: int = 1):
    cfg.validate()
    if cfg.alpha != 3:
        raise ConfigError("stationary homogenization requires the critical "
                          "exponent alpha = 3")
    D, bm = resolve_friction(cfg)
    cols = ["epsilon", "resolution", "n_holes", "cells_per_radius",
            "err_brinkman", "err_hole_blind", "norm_limit",
            "iters_perforated", "iters_brinkman", "iters_blind"]
    args = list(zip(cfg.epsilons, cfg.resolutions))
    outs = _map_ordered(lambda a: _guarded(_stationary_one, cfg, D, *a),
                        args, threads)
    rows = [o for o in outs if "error" not in o]
    failures = [o for o in outs if "error" in o]
    extras = {"friction": D}
    if failures:
        extras["failures"] = failures
    if bm is not None:
        extras["brinkman"] = bm
    return ExperimentReport("stationary-homogenization", cols, rows,
                            cfg.config_hash(), partial=bool(failures),
                            extras=extras)


def _sqrtrho_u_l2sq(mask, rho, u, mask_ref):
    from .evolution import rho_to_faces
    rf = rho_to_faces(mask, rho)
    s = 0.0
    for a in range(3):
        s += float(np.sum(rf[a] * u.components[a] ** 2))
    return s * mask.cell_volume


def _evolution_one(cfg, D, eps, resolution):
    dom = cfg.domain_spec()
    shape = cfg.hole_shape()
    lat = enumerate_holes(dom, eps, cfg.alpha, shape)
    problems = validate_lattice(lat)
    if problems:
        raise ConfigError("; ".join(problems))
    mask_eps = rasterize(lat, resolution)
    free = hole_free_mask(dom, resolution)
    times = np.linspace(cfg.T / cfg.snapshots, cfg.T, cfg.snapshots)
    init_eps = make_initial(mask_eps, cfg.initial, cfg.rho_solid)
    init_free = make_initial(free, cfg.initial, cfg.rho_solid)
    f_eps = make_forcing(mask_eps, cfg.forcing)
    f_free = make_forcing(free, cfg.forcing)
    snaps_e, ledger_e = run(mask_eps, init_eps, f_eps, cfg.mu, T=cfg.T,
                            snapshot_times=times, tol=cfg.tol)
    snaps_l, ledger_l = run(free, init_free, f_free, cfg.mu, friction=D,
                            T=cfg.T, snapshot_times=times, tol=cfg.tol)
    # space-time L2 of sqrt(rho_eps) u_eps - sqrt(rho) u by trapezoid
    diffs = []
    rho_l1 = []
    vol = free.cell_volume
    for se, sl in zip(snaps_e, snaps_l):
        s = 0.0
        from .evolution import rho_to_faces
        rfe = rho_to_faces(mask_eps, se.rho)
        rfl = rho_to_faces(free, sl.rho)
        for a in range(3):
            d = (np.sqrt(rfe[a]) * se.u.components[a]
                 - np.sqrt(rfl[a]) * sl.u.components[a])
            s += float(np.sum(d * d))
        diffs.append(s * vol)
        rho_l1.append(float(np.sum(np.abs(se.rho - sl.rho))) * vol)
    ts = [s.t for s in snaps_e]
    E2 = float(_trapz(diffs, ts))
    ref2 = float(_trapz(
        [_sqrtrho_u_l2sq(free, sl.rho, sl.u, free) for sl in snaps_l], ts))
    return {
        "epsilon": eps, "resolution": resolution, "n_holes": lat.n_holes,
        "cells_per_radius": mask_eps.min_cells_per_radius,
        "err_spacetime": np.sqrt(E2),
        "err_spacetime_rel": np.sqrt(E2 / ref2) if ref2 > 0 else 0.0,
        "sup_rho_l1": max(rho_l1),
        "steps_perforated": len(ledger_e.rows),
        "steps_limit": len(ledger_l.rows),
    }, ledger_e, ledger_l


def run_evolution_homogenization(cfg: ExperimentConfig, threads: int = 1):
    cfg.validate()
    if cfg.alpha != 3:
        raise ConfigError("evolution homogenization requires the critical "
                          "exponent alpha = 3")
    D, bm = resolve_friction(cfg)
    cols = ["epsilon", "resolution", "n_holes", "cells_per_radius",
            "err_spacetime", "err_spacetime_rel", "sup_rho_l1",
            "steps_perforated", "steps_limit"]
    args = list(zip(cfg.epsilons, cfg.resolutions))
    outs = _map_ordered(lambda a: _guarded(_evolution_one, cfg, D, *a),
                        args, threads)
    rows = [o[0] for o in outs if isinstance(o, tuple)]
    failures = [o for o in outs if isinstance(o, dict)]
    extras = {"friction": D,
              "ledgers": {f"eps_{o[0]['epsilon']:.6g}": (o[1], o[2])
                          for o in outs if isinstance(o, tuple)}}
    if failures:
        extras["failures"] = failures
    if bm is not None:
        extras["brinkman"] = bm
    return ExperimentReport("evolution-homogenization", cols, rows,
                            cfg.config_hash(), partial=bool(failures),
                            extras=extras)


def _guarded(fn, cfg, D, eps, resolution):
    """Run one epsilon; solver failures flag the report partial."""
    from .errors import NonConvergence
    try:
        return fn(cfg, D, eps, resolution)
    except NonConvergence as e:
        return {"epsilon": eps, "resolution": resolution, "error": str(e)}


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def emit_report(report: ExperimentReport, out_dir):
    """CSV plus self-contained vector plots; byte-identical across reruns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / f"{report.kind}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = list(report.columns) + ["config_hash", "version"]
        if report.partial:
            header.append("partial")
        w.writerow(header)
        for row in report.rows:
            vals = [_fmt(row[c]) for c in report.columns]
            vals += [report.config_hash, report.version]
            if report.partial:
                vals.append("true")
            w.writerow(vals)
    written.append(csv_path)
    bm = report.extras.get("brinkman")
    if bm is not None:
        p = out / "brinkman_matrix.json"
        bm.save(p)
        written.append(p)
    for name, (led_e, led_l) in report.extras.get("ledgers", {}).items():
        for tag, led in (("perforated", led_e), ("limit", led_l)):
            p = out / f"ledger_{name}_{tag}.csv"
            led.to_csv(p)
            written.append(p)
    written += _emit_plots(report, out)
    return written


def _deterministic_savefig(fig, path):
    import matplotlib
    matplotlib.rcParams["svg.hashsalt"] = "brinkflow"
    fig.savefig(path, format="svg", metadata={"Date": None})


def _emit_plots(report, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    written = []
    if report.kind in ("stationary-homogenization",
                       "evolution-homogenization") and report.rows:
        fig, ax = plt.subplots(figsize=(5, 4))
        eps = [r["epsilon"] for r in report.rows]
        if report.kind == "stationary-homogenization":
            ax.loglog(eps, [r["err_brinkman"] for r in report.rows],
                      "o-", label="Brinkman model")
            ax.loglog(eps, [r["err_hole_blind"] for r in report.rows],
                      "s--", label="hole-blind model")
            ax.set_ylabel("relative L2 error")
        else:
            ax.loglog(eps, [max(r["err_spacetime"], 1e-300)
                            for r in report.rows], "o-",
                      label="space-time error")
            ax.set_ylabel("|| sqrt(rho_eps) u_eps - sqrt(rho) u ||")
        ax.set_xlabel("epsilon")
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        p = out / "error_vs_epsilon.svg"
        _deterministic_savefig(fig, p)
        plt.close(fig)
        written.append(p)
    if report.kind == "capacity-study" and report.rows:
        fig, ax = plt.subplots(figsize=(5, 4))
        rs = [r["r"] for r in report.rows]
        for d in (1, 2, 3):
            ax.plot(rs, [r[f"C{d}{d}"] / r["r"] for r in report.rows],
                    "o-", label=f"C{d}{d}/r")
        ax.set_xlabel("scale r")
        ax.set_ylabel("capacity / scale")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        p = out / "capacity_scaling.svg"
        _deterministic_savefig(fig, p)
        plt.close(fig)
        written.append(p)
    for name, (led_e, led_l) in report.extras.get("ledgers", {}).items():
        fig, ax = plt.subplots(figsize=(5, 4))
        for tag, led, style in (("perforated", led_e, "-"),
                                ("limit", led_l, "--")):
            ts = [r["t"] for r in led.rows]
            ax.plot(ts, [r["kinetic"] for r in led.rows], style,
                    label=f"kinetic ({tag})")
        ax.set_xlabel("t")
        ax.set_ylabel("energy")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        p = out / f"ledger_{name}.svg"
        _deterministic_savefig(fig, p)
        plt.close(fig)
        written.append(p)
    return written

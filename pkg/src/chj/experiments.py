"""Reference vs Carleman runs, figure presets and CSV emission."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .carleman import CarlemanOps, DenseOperators, dense_step, lift
from .config import CarlemanConfig, ICConfig, RunConfig
from .grid import FIELD_NAMES, FluidState, GridSpec
from .metrics import (
    ErrorSeries,
    UndefinedError,
    component_norms,
    decay_reference,
    global_rel_error,
    local_rel_error_or_nan,
    resolve_probe,
    write_series_csv,
)
from .nshj import (
    InstabilityError,
    SimParams,
    check_stability,
    diagnostics,
    kolmogorov_state,
    momentum,
    nshj_step,
    velocity,
)
from .tn import tn_lift, tn_step

ERROR_FIELDS = ("rho", "chi", "ax", "ay", "jx")


def build_ic(cfg: RunConfig) -> FluidState:
    ic = cfg.ic
    return kolmogorov_state(cfg.grid, ic.ux, ic.uy, ic.kx, ic.ky)


def observables(s: FluidState) -> dict:
    jx, _ = momentum(s)
    return {"rho": s.rho, "chi": s.chi, "ax": s.ax, "ay": s.ay, "jx": jx}


class _Backend:
    """Uniform stepping wrapper around the dense and tensor-network states."""

    def __init__(self, cfg: RunConfig, order: int, ops: CarlemanOps, s0: FluidState):
        self.cfg = cfg
        self.ops = ops
        self.order = order
        if cfg.carleman.backend == "dense":
            self.dops = DenseOperators(ops)
            self.state = lift(s0, order)
        else:
            self.state = tn_lift(s0, order)

    def step(self, k: int):
        c = self.cfg.carleman
        if c.backend == "dense":
            self.state = dense_step(self.state, self.dops)
        else:
            self.state = tn_step(self.state, self.ops, merge=c.merge, compress_tol=c.compress_tol)
        j1 = self.state.j1
        if not np.all(np.isfinite(j1)):
            bad = FIELD_NAMES[int(np.flatnonzero(~np.isfinite(j1))[0]) // self.cfg.grid.size]
            raise InstabilityError(f"{bad} (Carleman order {self.order})", k)

    def fluid(self) -> FluidState:
        return self.state.to_fluid()


@dataclass
class OrderResult:
    order: int
    errors: dict = field(default_factory=dict)  # field -> array over steps 1..n
    probe_values: dict = field(default_factory=dict)  # probe index -> array over steps 0..n
    local_errors: dict = field(default_factory=dict)  # probe index -> array over steps 0..n, nan if undefined
    norms: dict = field(default_factory=dict)  # "j1", "j2", "psi" -> arrays over steps 0..n
    term_counts: list = field(default_factory=list)
    final: FluidState | None = None


@dataclass
class RunArtifacts:
    config: RunConfig
    times: np.ndarray
    probes: list
    nshj_probe_values: dict
    orders: dict
    nshj_final: FluidState
    diagnostics: dict

    @property
    def nu_tag(self) -> str:
        return nu_tag(self.config.params.nu)


def run_experiment(cfg: RunConfig, progress=None) -> RunArtifacts:
    """Evolve NSHJ and every requested Carleman order side by side."""
    grid, p = cfg.grid, cfg.params
    s = build_ic(cfg)
    vx, vy = velocity(s)
    check_stability(grid, p, float(np.max(np.hypot(vx, vy))))
    ops = CarlemanOps.build(grid, p)
    backends = {N: _Backend(cfg, N, ops, s) for N in cfg.carleman.orders}
    probes = [resolve_probe(x, y, grid) for x, y in cfg.probes]
    n = p.n_steps
    times = np.arange(n + 1) * p.dt

    obs = observables(s)
    nshj_pv = {i: [pr.value(obs["jx"])] for i, pr in enumerate(probes)}
    results = {N: OrderResult(N) for N in backends}
    for N, res in results.items():
        res.errors = {f: [] for f in ERROR_FIELDS}
        res.probe_values = {i: [pr.value(obs["jx"])] for i, pr in enumerate(probes)}
        res.local_errors = {i: [local_rel_error_or_nan(obs["jx"], obs["jx"], pr)] for i, pr in enumerate(probes)}
        if cfg.norms:
            n1, n2 = component_norms(backends[N].state)
            res.norms = {"j1": [n1], "j2": [n2], "psi": [n1 * n2]}

    for k in range(1, n + 1):
        s = nshj_step(s, p, step=k)
        ref = observables(s)
        for N, b in backends.items():
            b.step(k)
            res = results[N]
            got = observables(b.fluid())
            for f in ERROR_FIELDS:
                try:
                    res.errors[f].append(global_rel_error(got[f], ref[f]))
                except UndefinedError:
                    res.errors[f].append(math.nan)
            for i, pr in enumerate(probes):
                res.probe_values[i].append(pr.value(got["jx"]))
                res.local_errors[i].append(local_rel_error_or_nan(got["jx"], ref["jx"], pr))
            if cfg.norms:
                n1, n2 = component_norms(b.state)
                res.norms["j1"].append(n1)
                res.norms["j2"].append(n2)
                res.norms["psi"].append(n1 * n2)
            if hasattr(b.state, "term_counts"):
                res.term_counts.append(b.state.term_counts())
        for i, pr in enumerate(probes):
            nshj_pv[i].append(pr.value(ref["jx"]))
        if progress is not None:
            progress(k, n)

    for N, res in results.items():
        res.errors = {f: np.array(v) for f, v in res.errors.items()}
        res.probe_values = {i: np.array(v) for i, v in res.probe_values.items()}
        res.local_errors = {i: np.array(v) for i, v in res.local_errors.items()}
        res.norms = {key: np.array(v) for key, v in res.norms.items()}
        res.final = backends[N].fluid()
    d0 = diagnostics(build_ic(cfg), p, k=max(cfg.ic.kx, cfg.ic.ky))
    diag = {"reynolds": d0.reynolds, "mach": d0.mach, "dissipative_time": d0.dissipative_time}
    return RunArtifacts(
        cfg, times, probes, {i: np.array(v) for i, v in nshj_pv.items()}, results, s, diag
    )


# --------------------------------------------------------------------------
# file naming and emission

def nu_tag(nu: float) -> str:
    inv = 1 / nu if nu else math.inf
    if math.isfinite(inv) and abs(inv - round(inv)) < 1e-9:
        return f"nu{int(round(inv))}"
    return "nu" + _num_tag(nu)


def _num_tag(v: float) -> str:
    return f"{v:g}".replace("-", "m").replace(".", "p")


def probe_tag(x: float, y: float) -> str:
    a, b = _num_tag(x), _num_tag(y)
    return a + b if len(a) == 1 and len(b) == 1 else f"{a}_{b}"


def _fmt(v: float) -> str:
    return repr(float(v))


def _error_series(art: RunArtifacts) -> list:
    out = []
    t = art.times[1:]
    for N, res in art.orders.items():
        for f in ERROR_FIELDS:
            out.append(ErrorSeries(t, res.errors[f], label=f"{f}_chj{N}"))
    return out


def _probe_series(art: RunArtifacts, i: int) -> tuple[list, list]:
    tag = art.nu_tag
    values = [ErrorSeries(art.times, art.nshj_probe_values[i], label=f"{tag}_nshj")]
    local = []
    ref = art.nshj_probe_values[i]
    cfg = art.config
    # J_x inherits the x-field wavenumber; the y-field one is emitted for comparison
    for name, k in (("kx", cfg.ic.kx), ("ky", cfg.ic.ky)):
        decay = ref[0] * decay_reference(k, cfg.params.nu, art.times).values
        values.append(ErrorSeries(art.times, decay, label=f"{tag}_decay_{name}"))
    for N, res in art.orders.items():
        values.append(ErrorSeries(art.times, res.probe_values[i], label=f"{tag}_chj{N}"))
        local.append(ErrorSeries(art.times, res.local_errors[i], label=f"{tag}_chj{N}"))
    return values, local


def _write_final(art: RunArtifacts, path) -> None:
    g = art.config.grid
    x, y = g.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "ix", "iy", "x", "y"] + list(ERROR_FIELDS))
        models = [("nshj", art.nshj_final)] + [(f"chj{N}", r.final) for N, r in art.orders.items()]
        for name, st in models:
            obs = observables(st)
            for iy in range(g.ny):
                for ix in range(g.nx):
                    w.writerow(
                        [name, ix, iy, _fmt(x[iy, ix]), _fmt(y[iy, ix])] + [_fmt(obs[f][iy, ix]) for f in ERROR_FIELDS]
                    )


def emit_plot_data(runs, out_dir, figure: str) -> list:
    """Write one CSV per panel plus ``manifest.txt``; returns the written paths.

    ``runs`` is a list of :class:`RunArtifacts` sharing probes (typically one
    per viscosity). File names:

    * ``<figure>_error_<nu>.csv``: global relative errors, labels ``<field>_chj<N>``
    * ``<figure>_probe_<probe>.csv``: ``J_x`` at a probe, labels ``<nu>_nshj``,
      ``<nu>_chj<N>`` and the decay laws ``<nu>_decay_kx``, ``<nu>_decay_ky``
    * ``<figure>_localerr_<probe>.csv``: local relative error at a probe
    * ``<figure>_norms_<nu>.csv``: ``||J1||``, ``||J2||``, ``||Psi||`` (when recorded)
    * ``<figure>_final_<nu>.csv``: final fields of every model

    All series CSVs share the columns ``time, value, label``.
    """
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")
    manifest = []
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    for art in runs:
        tag = art.nu_tag
        name = f"{figure}_error_{tag}.csv"
        write_series_csv(_error_series(art), path(name))
        manifest.append((f"global relative error, {tag}", name))
        if any(r.norms for r in art.orders.values()):
            series = []
            for N, r in art.orders.items():
                for key in ("j1", "j2", "psi"):
                    series.append(ErrorSeries(art.times, r.norms[key], label=f"{key}_chj{N}"))
            name = f"{figure}_norms_{tag}.csv"
            write_series_csv(series, path(name))
            manifest.append((f"Carleman norms, {tag}", name))
        name = f"{figure}_final_{tag}.csv"
        _write_final(art, path(name))
        manifest.append((f"final fields, {tag}", name))

    if runs:
        for i, pr in enumerate(runs[0].probes):
            ptag = probe_tag(pr.x, pr.y)
            values, local = [], []
            for art in runs:
                v, l = _probe_series(art, i)
                values += v
                local += l
            name = f"{figure}_probe_{ptag}.csv"
            write_series_csv(values, path(name))
            manifest.append((f"J_x at ({pr.x:g}, {pr.y:g}) -> node ({pr.ix}, {pr.iy})", name))
            name = f"{figure}_localerr_{ptag}.csv"
            write_series_csv(local, path(name))
            manifest.append((f"local relative error at ({pr.x:g}, {pr.y:g})", name))

    mpath = path("manifest.txt")
    with open(mpath, "w") as fh:
        fh.write(f"# {figure}: panel -> file\n")
        for art in runs:
            c = art.config
            d = art.diagnostics
            fh.write(
                f"# {art.nu_tag}: grid {c.grid.nx}x{c.grid.ny}, dt {c.params.dt!r}, nu {c.params.nu!r}, "
                f"steps {c.params.n_steps}, orders {list(c.carleman.orders)}, backend {c.carleman.backend}, "
                f"Re {d['reynolds']:.4g}, Ma {d['mach']:.4g}, T {d['dissipative_time']:.4g}\n"
            )
        for panel, name in manifest:
            fh.write(f"{panel} -> {name}\n")
    return written


# --------------------------------------------------------------------------
# presets

PRESET_NAMES = ("fig2", "fig3", "fig4", "fig7", "fig8")
VISCOSITIES = (1 / 6, 1 / 18)


def preset_dt(name: str, nu: float, ky: float = 1.0) -> float:
    """Time step of a preset run.

    The norm-decay run keeps ``dt = 0.01`` for every viscosity. The error
    runs at unit wavenumber resolve one dissipative time ``T = 1/nu`` in 600
    steps (``dt = 0.01`` at ``nu = 1/6``). The long 128x128 run spans ``5 T``
    with ``T = 1/(ky^2 nu)`` in 3000 steps.
    """
    if name == "fig2":
        return 0.01
    if name == "fig8":
        return 5.0 / (ky**2 * nu) / 3000
    return 1.0 / nu / 600


def preset_configs(name: str, out_dir: str = "out", n_steps: int | None = None) -> list:
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    sym = ICConfig(ux=0.1, uy=0.1, kx=1, ky=1)
    asym = ICConfig(ux=0.3, uy=0.2, kx=1, ky=4)
    table = {
        # name: (grid side, steps, orders, ic, probes, norms)
        "fig2": (32, 100, (2,), sym, (), True),
        "fig3": (32, 600, (2, 3), sym, (), False),
        "fig4": (32, 150, (2, 3, 4), sym, ((0.0, 0.0), (5.5, 2.0)), False),
        "fig7": (32, 100, (2, 3, 4), asym, ((0.0, 0.0), (5.5, 2.0)), False),
        "fig8": (128, 2400, (2,), asym, ((5.5, 2.0),), False),
    }
    side, steps, orders, ic, probes, norms = table[name]
    if n_steps is not None:
        steps = n_steps
    cfgs = []
    for nu in VISCOSITIES:
        cfgs.append(
            RunConfig(
                grid=GridSpec(side, side),
                params=SimParams(dt=preset_dt(name, nu, ic.ky), nu=nu, n_steps=steps),
                ic=ic,
                carleman=CarlemanConfig(orders=orders, backend="tn", merge=True),
                probes=probes,
                output_dir=out_dir,
                prefix=name,
                norms=norms,
            )
        )
    return cfgs


def run_preset(name: str, out_dir: str = "out", n_steps: int | None = None, progress=None):
    runs = [run_experiment(c, progress) for c in preset_configs(name, out_dir, n_steps)]
    files = emit_plot_data(runs, out_dir, name)
    return runs, files

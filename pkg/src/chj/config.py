"""Run configuration stored as an INI file.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` starts a
comment. Numbers may be written as fractions (``nu = 1/6``).
Lists use commas (``orders = 2, 3, 4``); probe points are ``x y`` pairs
separated by semicolons (``points = 0 0; 5.5 2``). Every key is optional and
falls back to the defaults below.

.. code-block:: ini

    [grid]
    nx = 32
    ny = 32
    box_length = 6.283185307179586

    [params]
    dt = 0.01
    nu = 1/6
    cs2 = 1/3
    n_steps = 150
    gauge_shift = true

    [ic]
    kind = kolmogorov
    ux = 0.1
    uy = 0.1
    kx = 1
    ky = 1

    [carleman]
    orders = 2, 3, 4
    backend = tn
    merge = true
    compress_tol = 0

    [probes]
    points = 0 0; 5.5 2

    [output]
    dir = out
    prefix = run
    norms = false
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .grid import GridSpec
from .nshj import SimParams

BACKENDS = ("dense", "tn")
ALLOWED_ORDERS = (2, 3, 4)


def parse_number(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    return float(Fraction(text))


@dataclass(frozen=True)
class ICConfig:
    kind: str = "kolmogorov"
    ux: float = 0.1
    uy: float = 0.1
    kx: float = 1.0
    ky: float = 1.0


@dataclass(frozen=True)
class CarlemanConfig:
    orders: tuple = (2, 3, 4)
    backend: str = "tn"
    merge: bool = True
    compress_tol: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=lambda: GridSpec(32, 32))
    params: SimParams = field(default_factory=SimParams)
    ic: ICConfig = field(default_factory=ICConfig)
    carleman: CarlemanConfig = field(default_factory=CarlemanConfig)
    probes: tuple = ()
    output_dir: str = "out"
    prefix: str = "run"
    norms: bool = False

    def __post_init__(self):
        bad = [o for o in self.carleman.orders if o not in ALLOWED_ORDERS]
        if bad:
            raise ValueError(f"orders must be drawn from {ALLOWED_ORDERS}, got {bad}")
        if self.carleman.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.carleman.compress_tol < 0:
            raise ValueError("compress_tol must be non-negative")
        if self.ic.kind != "kolmogorov":
            raise ValueError(f"unknown initial condition kind {self.ic.kind!r}")

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _orders(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _points(text: str) -> tuple:
    out = []
    for chunk in text.split(";"):
        parts = chunk.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ValueError(f"probe point needs two coordinates: {chunk!r}")
        out.append((parse_number(parts[0]), parse_number(parts[1])))
    return tuple(out)


def from_ini_string(text: str) -> RunConfig:
    # semicolons separate probe points, so only '#' starts inline comments there
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    d = RunConfig()

    def get(section, key, conv, default):
        if cp.has_option(section, key):
            return conv(cp.get(section, key))
        return default

    def boolean(v):
        return configparser.ConfigParser.BOOLEAN_STATES[v.strip().lower()]

    grid = GridSpec(
        get("grid", "nx", int, d.grid.nx),
        get("grid", "ny", int, d.grid.ny),
        get("grid", "box_length", parse_number, d.grid.box_length),
    )
    params = SimParams(
        dt=get("params", "dt", parse_number, d.params.dt),
        nu=get("params", "nu", parse_number, d.params.nu),
        cs2=get("params", "cs2", parse_number, d.params.cs2),
        n_steps=get("params", "n_steps", int, d.params.n_steps),
        gauge_shift=get("params", "gauge_shift", boolean, d.params.gauge_shift),
    )
    ic = ICConfig(
        kind=get("ic", "kind", str.strip, d.ic.kind),
        ux=get("ic", "ux", parse_number, d.ic.ux),
        uy=get("ic", "uy", parse_number, d.ic.uy),
        kx=get("ic", "kx", parse_number, d.ic.kx),
        ky=get("ic", "ky", parse_number, d.ic.ky),
    )
    carl = CarlemanConfig(
        orders=get("carleman", "orders", _orders, d.carleman.orders),
        backend=get("carleman", "backend", str.strip, d.carleman.backend),
        merge=get("carleman", "merge", boolean, d.carleman.merge),
        compress_tol=get("carleman", "compress_tol", parse_number, d.carleman.compress_tol),
    )
    return RunConfig(
        grid=grid,
        params=params,
        ic=ic,
        carleman=carl,
        probes=get("probes", "points", _points, d.probes),
        output_dir=get("output", "dir", str.strip, d.output_dir),
        prefix=get("output", "prefix", str.strip, d.prefix),
        norms=get("output", "norms", boolean, d.norms),
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return from_ini_string(fh.read())


def to_ini_string(cfg: RunConfig) -> str:
    g, p, ic, c = cfg.grid, cfg.params, cfg.ic, cfg.carleman
    pts = "; ".join(f"{x!r} {y!r}" for x, y in cfg.probes)
    lines = [
        "[grid]",
        f"nx = {g.nx}",
        f"ny = {g.ny}",
        f"box_length = {g.box_length!r}",
        "",
        "[params]",
        f"dt = {p.dt!r}",
        f"nu = {p.nu!r}",
        f"cs2 = {p.cs2!r}",
        f"n_steps = {p.n_steps}",
        f"gauge_shift = {str(p.gauge_shift).lower()}",
        "",
        "[ic]",
        f"kind = {ic.kind}",
        f"ux = {ic.ux!r}",
        f"uy = {ic.uy!r}",
        f"kx = {ic.kx!r}",
        f"ky = {ic.ky!r}",
        "",
        "[carleman]",
        f"orders = {', '.join(str(o) for o in c.orders)}",
        f"backend = {c.backend}",
        f"merge = {str(c.merge).lower()}",
        f"compress_tol = {c.compress_tol!r}",
        "",
        "[probes]",
        f"points = {pts}",
        "",
        "[output]",
        f"dir = {cfg.output_dir}",
        f"prefix = {cfg.prefix}",
        f"norms = {str(cfg.norms).lower()}",
        "",
    ]
    return "\n".join(lines)

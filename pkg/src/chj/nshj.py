"""Reference nonlinear solver for the discrete Navier-Stokes-Hamilton-Jacobi system.

One explicit Euler step updates density ``rho``, velocity potential ``chi`` and
the rotational field ``(ax, ay)``; the velocity is ``v = grad(chi) + A``.
Second derivatives of composite quantities use the compact stencils, i.e.
``Dx vx + Dy vy = L chi + Dx ax + Dy ay`` and ``Dy w = Dxy ay - Dyy ax``, so the
step is exactly the linear Carleman operator plus the quadratic term table.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import FIELD_NAMES, FluidState, GridSpec, dx_c, dxx_c, dxy_c, dy_c, dyy_c, laplacian


class StabilityWarning(RuntimeWarning):
    pass


class InstabilityError(FloatingPointError):
    """Raised when a time step produces non-finite fields."""

    def __init__(self, field: str, step: int | None = None):
        self.field = field
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite values in field '{field}'{where}")


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.01
    nu: float = 1 / 6
    cs2: float = 1 / 3
    n_steps: int = 100
    gauge_shift: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if not self.cs2 > 0:
            raise ValueError("cs2 must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    @property
    def rho_gauge(self) -> float:
        return 1.0 if self.gauge_shift else 0.0


def velocity(s: FluidState) -> tuple[np.ndarray, np.ndarray]:
    g = s.grid
    return dx_c(s.chi, g) + s.ax, dy_c(s.chi, g) + s.ay


def vorticity(s: FluidState) -> np.ndarray:
    g = s.grid
    return dx_c(s.ay, g) - dy_c(s.ax, g)


def momentum(s: FluidState) -> tuple[np.ndarray, np.ndarray]:
    vx, vy = velocity(s)
    return s.rho * vx, s.rho * vy


def check_stability(grid: GridSpec, p: SimParams, vmax: float = 0.0) -> list[str]:
    """Return (and warn about) violated explicit-Euler stability heuristics."""
    h = min(grid.dx, grid.dy)
    problems = []
    diff = p.nu * p.dt / h**2
    if diff > 0.25:
        problems.append(f"diffusion number nu*dt/dx^2 = {diff:.3g} > 0.25")
    cfl = vmax * p.dt / h
    if cfl > 0.5:
        problems.append(f"CFL number max|v|*dt/dx = {cfl:.3g} > 0.5")
    for msg in problems:
        warnings.warn(msg, StabilityWarning, stacklevel=2)
    return problems


def step_arrays(rho, chi, ax, ay, grid: GridSpec, p: SimParams):
    """Single Euler step on raw field arrays; returns the four updated arrays."""
    dt, nu = p.dt, p.nu
    vx = dx_c(chi, grid) + ax
    vy = dy_c(chi, grid) + ay
    div_v = laplacian(chi, grid) + dx_c(ax, grid) + dy_c(ay, grid)
    w = dx_c(ay, grid) - dy_c(ax, grid)
    # compact forms of Dy(w) and Dx(w)
    dy_w = dxy_c(ay, grid) - dyy_c(ax, grid)
    dx_w = dxx_c(ay, grid) - dxy_c(ax, grid)

    rho_n = rho - dt * (dx_c(rho, grid) * vx + dy_c(rho, grid) * vy + rho * div_v)
    chi_n = chi + dt * (nu * div_v - p.cs2 * (rho - p.rho_gauge) - 0.5 * (vx**2 + vy**2))
    ax_n = ax + dt * (w * vy - nu * dy_w)
    ay_n = ay + dt * (nu * dx_w - w * vx)
    return rho_n, chi_n, ax_n, ay_n


def nshj_step(s: FluidState, p: SimParams, step: int | None = None) -> FluidState:
    out = step_arrays(s.rho, s.chi, s.ax, s.ay, s.grid, p)
    for name, f in zip(FIELD_NAMES, out):
        if not np.all(np.isfinite(f)):
            raise InstabilityError(name, step)
    return FluidState(s.grid, *out)


def evolve(s: FluidState, p: SimParams, n_steps: int | None = None, callback=None) -> FluidState:
    """Run ``n_steps`` (default ``p.n_steps``) Euler steps.

    ``callback(step, state)`` is invoked after every step, with ``step``
    counting from 1.
    """
    vx, vy = velocity(s)
    check_stability(s.grid, p, float(np.max(np.hypot(vx, vy))))
    n = p.n_steps if n_steps is None else n_steps
    for k in range(1, n + 1):
        s = nshj_step(s, p, step=k)
        if callback is not None:
            callback(k, s)
    return s


@dataclass
class DiagnosticsRecord:
    reynolds: float
    mach: float
    dissipative_time: float
    speed_norm: float
    field_norms: dict
    total_mass: float


def diagnostics(s: FluidState, p: SimParams, k: float = 1.0) -> DiagnosticsRecord:
    """Physical summary of a state.

    The Reynolds number uses the speed norm ``sqrt(2 <|v|^2>)``, which equals the
    amplitude ``|u|`` of a single sinusoidal mode; the Mach number uses the RMS
    speed. ``k`` is the dominant wavenumber used for ``T = 1/(k^2 nu)``.
    """
    vx, vy = velocity(s)
    mean_sq = float(np.mean(vx**2 + vy**2))
    speed = math.sqrt(2 * mean_sq)
    if p.nu == 0:
        re = math.inf
        t_diss = math.inf
    else:
        re = speed * s.grid.box_length / p.nu
        t_diss = 1.0 / (k**2 * p.nu)
    norms = {name: float(np.linalg.norm(f)) for name, f in zip(FIELD_NAMES, s.fields())}
    return DiagnosticsRecord(
        reynolds=re,
        mach=math.sqrt(mean_sq) / math.sqrt(p.cs2),
        dissipative_time=t_diss,
        speed_norm=speed,
        field_norms=norms,
        total_mass=float(np.sum(s.rho)),
    )


def kolmogorov_state(grid: GridSpec, ux=0.1, uy=0.1, kx=1.0, ky=1.0) -> FluidState:
    """Kolmogorov-like shear flow: rho = 1, chi = 0, ax = ux cos(kx y), ay = uy cos(ky x)."""
    x, y = grid.coords()
    return FluidState(
        grid,
        np.ones(grid.shape),
        np.zeros(grid.shape),
        ux * np.cos(kx * y),
        uy * np.cos(ky * x),
    )

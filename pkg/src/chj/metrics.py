"""Error norms, probes, Carleman state norms and the viscous decay reference.

Norms are plain node sums (no area weight); every reported quantity is a
ratio, so the measure factor cancels.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .carleman import DenseCarlemanState, chi_unit_vector
from .grid import GridSpec
from .tn import TNState, tn_j2_gauged_norm

ERROR_THRESHOLD = 1e-3
UNDEFINED_BELOW = 1e-14


class UndefinedError(ArithmeticError):
    """A relative error was requested against a (numerically) zero reference."""


@dataclass
class ErrorSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def write_csv(self, path) -> None:
        write_series_csv([self], path)


def write_series_csv(series, path) -> None:
    """Long-format CSV with columns ``time, value, label``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value", "label"])
        for s in series:
            for t, v in zip(s.times, s.values):
                w.writerow([repr(float(t)), repr(float(v)), s.label])


@dataclass(frozen=True)
class Probe:
    x: float
    y: float
    ix: int
    iy: int
    node: int  # flat index iy * nx + ix on the resolving grid

    def value(self, f: np.ndarray) -> float:
        return float(f[..., self.iy, self.ix])


def _nearest(c: float, h: float, n: int) -> int:
    # nearest node; exact ties (c/h = k + 1/2) go to the lower index k
    return int(math.ceil(c / h - 0.5)) % n


def resolve_probe(x: float, y: float, grid: GridSpec) -> Probe:
    ix, iy = _nearest(x, grid.dx, grid.nx), _nearest(y, grid.dy, grid.ny)
    return Probe(x, y, ix, iy, iy * grid.nx + ix)


def global_rel_error(f_approx: np.ndarray, f_ref: np.ndarray) -> float:
    f_approx = np.asarray(f_approx, dtype=float)
    f_ref = np.asarray(f_ref, dtype=float)
    if f_approx.shape != f_ref.shape:
        raise ValueError("fields live on different grids")
    ref = np.linalg.norm(f_ref)
    if ref == 0:
        raise UndefinedError("reference field has zero norm")
    return float(np.linalg.norm(f_approx - f_ref) / ref)


def local_rel_error(f_approx: np.ndarray, f_ref: np.ndarray, probe: Probe) -> float:
    ref = probe.value(f_ref)
    if abs(ref) < UNDEFINED_BELOW:
        raise UndefinedError(f"reference magnitude {abs(ref):.3g} at node ({probe.ix}, {probe.iy})")
    return abs(probe.value(f_approx) - ref) / abs(ref)


def local_rel_error_or_nan(f_approx, f_ref, probe: Probe) -> float:
    try:
        return local_rel_error(f_approx, f_ref, probe)
    except UndefinedError:
        return math.nan


def decay_reference(k: float, nu: float, times) -> ErrorSeries:
    if nu < 0:
        raise ValueError("nu must be non-negative")
    t = np.asarray(times, dtype=float)
    return ErrorSeries(t, np.exp(-(k**2) * nu * t), label=f"exp(-k^2 nu t), k={k:g}")


# --------------------------------------------------------------------------
# Carleman norms (physical gauge)

def _dense_j2_gauged(c: DenseCarlemanState) -> np.ndarray:
    j2 = c.component(2)
    if c.sigma == 0.0:
        return j2
    e = chi_unit_vector(c.grid)
    j1 = c.components[0]
    return (
        j2
        + c.sigma * (np.multiply.outer(e, j1) + np.multiply.outer(j1, e)).reshape(-1)
        + c.sigma**2 * np.multiply.outer(e, e).reshape(-1)
    )


def component_norms(c) -> tuple[float, float]:
    """``(||J1||, ||J2||)`` of a dense or tensor-network Carleman state."""
    if c.order < 2:
        raise ValueError("order must be at least 2")
    n1 = float(np.linalg.norm(c.j1))
    if isinstance(c, TNState):
        return n1, tn_j2_gauged_norm(c)
    return n1, float(np.linalg.norm(_dense_j2_gauged(c)))


def psi_norm(c) -> float:
    """``||J1|| * ||J2||``, the norm of the composite state ``J1 x J2``."""
    n1, n2 = component_norms(c)
    return n1 * n2

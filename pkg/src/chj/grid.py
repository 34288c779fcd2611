"""Periodic 2D grid and centred finite-difference stencils.

Fields are stored as arrays of shape ``(..., ny, nx)``; the trailing two axes
are ``(y, x)`` so that a C-order flatten gives node index ``i = y * nx + x``
(x varies fastest). Every stencil acts on the trailing axes only, which lets
the same functions operate on single fields and on stacked batches.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

FIELD_NAMES = ("rho", "chi", "ax", "ay")
RHO, CHI, AX, AY = range(4)


@dataclass(frozen=True)
class GridSpec:
    """Periodic ``nx`` x ``ny`` grid on a square box of side ``box_length``."""

    nx: int
    ny: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4 points per axis, got {self.nx}x{self.ny}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")

    @property
    def dx(self) -> float:
        return self.box_length / self.nx

    @property
    def dy(self) -> float:
        return self.box_length / self.ny

    @property
    def size(self) -> int:
        """Number of grid points G."""
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(x, y)`` as ``(ny, nx)`` arrays, nodes at ``i * dx``."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="xy")

    @cached_property
    def operators(self) -> dict[str, sp.csr_matrix]:
        """Sparse G x G matrices for every stencil, in node-index order."""
        return build_operator_matrices(self)

    def check_field(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("field contains non-finite values")
        return f


def _shift(f, n, axis):
    # value at node i+n along axis (periodic)
    return np.roll(f, -n, axis=axis)


def dx_c(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (_shift(f, 1, -1) - _shift(f, -1, -1)) / (2 * grid.dx)


def dy_c(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (_shift(f, 1, -2) - _shift(f, -1, -2)) / (2 * grid.dy)


def dxx_c(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (_shift(f, 1, -1) - 2 * f + _shift(f, -1, -1)) / grid.dx**2


def dyy_c(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (_shift(f, 1, -2) - 2 * f + _shift(f, -1, -2)) / grid.dy**2


def dxy_c(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Mixed derivative as the composition of the two centred first differences."""
    return dx_c(dy_c(f, grid), grid)


def laplacian(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return dxx_c(f, grid) + dyy_c(f, grid)


def identity(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return f


def divergence_stencil(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``Dx + Dy`` applied to a scalar field (only used to render appendix tables)."""
    return dx_c(f, grid) + dy_c(f, grid)


STENCILS = {
    "I": identity,
    "Dx": dx_c,
    "Dy": dy_c,
    "Dxx": dxx_c,
    "Dyy": dyy_c,
    "Dxy": dxy_c,
    "L": laplacian,
    "D": divergence_stencil,
}


def apply_stencil(name: str, f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return STENCILS[name](f, grid)


def _periodic_1d(n: int, offsets: dict[int, float]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for off, val in offsets.items():
        i = np.arange(n)
        rows.append(i)
        cols.append((i + off) % n)
        vals.append(np.full(n, val))
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return m.tocsr()


def build_operator_matrices(grid: GridSpec) -> dict[str, sp.csr_matrix]:
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    ix, iy = sp.identity(nx, format="csr"), sp.identity(ny, format="csr")
    d1x = _periodic_1d(nx, {1: 1 / (2 * dx), -1: -1 / (2 * dx)})
    d1y = _periodic_1d(ny, {1: 1 / (2 * dy), -1: -1 / (2 * dy)})
    d2x = _periodic_1d(nx, {1: 1 / dx**2, 0: -2 / dx**2, -1: 1 / dx**2})
    d2y = _periodic_1d(ny, {1: 1 / dy**2, 0: -2 / dy**2, -1: 1 / dy**2})
    # index y*nx + x: x operators act on the fast (right) Kronecker factor
    ops = {
        "I": sp.identity(grid.size, format="csr"),
        "Dx": sp.kron(iy, d1x, format="csr"),
        "Dy": sp.kron(d1y, ix, format="csr"),
        "Dxx": sp.kron(iy, d2x, format="csr"),
        "Dyy": sp.kron(d2y, ix, format="csr"),
    }
    ops["Dxy"] = (ops["Dx"] @ ops["Dy"]).tocsr()
    ops["L"] = (ops["Dxx"] + ops["Dyy"]).tocsr()
    ops["D"] = (ops["Dx"] + ops["Dy"]).tocsr()
    for m in ops.values():
        m.sum_duplicates()
        m.eliminate_zeros()
    return ops


@dataclass
class FluidState:
    """Density, velocity potential and rotational field on one grid."""

    grid: GridSpec
    rho: np.ndarray
    chi: np.ndarray
    ax: np.ndarray
    ay: np.ndarray

    def __post_init__(self):
        for name in FIELD_NAMES:
            setattr(self, name, self.grid.check_field(getattr(self, name)))

    def fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.rho, self.chi, self.ax, self.ay)

    def stacked(self) -> np.ndarray:
        """Fields as one ``(4, ny, nx)`` array in ``[rho, chi, ax, ay]`` order."""
        return np.stack(self.fields())

    @classmethod
    def from_stacked(cls, grid: GridSpec, arr: np.ndarray) -> "FluidState":
        arr = np.asarray(arr, dtype=float).reshape(4, grid.ny, grid.nx)
        return cls(grid, *(a.copy() for a in arr))

    @classmethod
    def rest(cls, grid: GridSpec) -> "FluidState":
        z = np.zeros(grid.shape)
        return cls(grid, np.ones(grid.shape), z, z.copy(), z.copy())


def flatten(state: FluidState) -> np.ndarray:
    """Primary Carleman vector ``[rho | chi | ax | ay]`` of length 4G."""
    for name in FIELD_NAMES:
        if getattr(state, name).shape != state.grid.shape:
            raise ValueError(f"field {name} does not match the state grid")
    return state.stacked().reshape(-1)


def unflatten(vec: np.ndarray, grid: GridSpec) -> FluidState:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (4 * grid.size,):
        raise ValueError(f"expected vector of length {4 * grid.size}, got {vec.shape}")
    return FluidState.from_stacked(grid, vec)

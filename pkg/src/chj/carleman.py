"""Carleman operators for the discrete NSHJ system and the dense oracle backend.

One Euler step reads ``J' = A J + B (J x J)`` (plus the gauge constant, see
below). ``A = I + dt * Atilde`` is a 4x4 block matrix of sparse stencils and
``B`` is stored as a table of Kronecker-factorised terms, each contributing
``dt * coeff * (op_left J_beta) * (op_right J_gamma)`` nodewise to block
``alpha``. The table is derived by expanding ``v = grad(chi) + A`` in the
update formulas, so ``A`` and ``B`` reproduce :func:`chj.nshj.nshj_step` to
round-off.

Gauge constant: with ``gauge_shift`` on the chi update carries an extra
``+dt * cs2`` per step. Because chi enters every right-hand side only through
derivatives, ``A`` maps a uniform chi vector to itself and ``B`` annihilates it.
The gauge is therefore carried as an accumulated uniform shift ``sigma`` of the
chi block; all Carleman components evolve with the pure linear+quadratic
operators.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import AX, AY, CHI, FIELD_NAMES, RHO, GridSpec, FluidState, apply_stencil, flatten
from .nshj import SimParams

DEFAULT_MEMORY_BUDGET = 8 * 1024**3


class MemoryBudgetError(MemoryError):
    pass


def chi_unit_vector(grid: GridSpec) -> np.ndarray:
    """Vector with ones in the chi block and zeros elsewhere."""
    e = np.zeros((4, grid.size))
    e[CHI] = 1.0
    return e.reshape(-1)


# --------------------------------------------------------------------------
# linear part

class LinearOperator4G:
    """``A = I + dt * Atilde`` acting on primary vectors (or stacks of them).

    Block rows of ``Atilde``::

        rho: 0
        chi: -cs2 I, nu L, nu Dx, nu Dy
        ax : 0, 0, nu Dyy, -nu Dxy
        ay : 0, 0, -nu Dxy, nu Dxx
    """

    def __init__(self, grid: GridSpec, params: SimParams):
        self.grid = grid
        self.params = params

    @property
    def dim(self) -> int:
        return 4 * self.grid.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply to ``x`` of shape ``(..., 4G)``; returns the same shape."""
        g, p = self.grid, self.params
        x = np.asarray(x, dtype=float)
        f = x.reshape(x.shape[:-1] + (4, g.ny, g.nx))
        rho, chi, ax, ay = (f[..., i, :, :] for i in range(4))
        out = f.copy()
        out[..., CHI, :, :] += p.dt * (
            -p.cs2 * rho
            + p.nu * (apply_stencil("L", chi, g) + apply_stencil("Dx", ax, g) + apply_stencil("Dy", ay, g))
        )
        out[..., AX, :, :] += p.dt * p.nu * (apply_stencil("Dyy", ax, g) - apply_stencil("Dxy", ay, g))
        out[..., AY, :, :] += p.dt * p.nu * (apply_stencil("Dxx", ay, g) - apply_stencil("Dxy", ax, g))
        return out.reshape(x.shape)

    __call__ = apply

    def tilde_matrix(self) -> sp.csr_matrix:
        """Sparse ``Atilde`` (so that ``A = I + dt * Atilde``)."""
        ops, p = self.grid.operators, self.params
        G = self.grid.size
        Z = None
        blocks = [
            [Z, Z, Z, Z],
            [-p.cs2 * sp.identity(G), p.nu * ops["L"], p.nu * ops["Dx"], p.nu * ops["Dy"]],
            [Z, Z, p.nu * ops["Dyy"], -p.nu * ops["Dxy"]],
            [Z, Z, -p.nu * ops["Dxy"], p.nu * ops["Dxx"]],
        ]
        # bmat needs at least one block per row/column to infer shapes
        blocks[0][0] = sp.csr_matrix((G, G))
        m = sp.bmat(blocks, format="csr")
        m.sum_duplicates()
        m.eliminate_zeros()
        return m

    def matrix(self) -> sp.csr_matrix:
        m = (sp.identity(self.dim, format="csr") + self.params.dt * self.tilde_matrix()).tocsr()
        m.eliminate_zeros()
        return m


def build_linear(grid: GridSpec, params: SimParams) -> LinearOperator4G:
    return LinearOperator4G(grid, params)


# --------------------------------------------------------------------------
# quadratic part

@dataclass(frozen=True)
class QuadTerm:
    """``dt * coeff * (op_left f_left) * (op_right f_right)`` added to block ``target``."""

    target: int
    left: int
    right: int
    op_left: str
    op_right: str
    coeff: float

    def describe(self) -> str:
        return (
            f"{FIELD_NAMES[self.target]} += {self.coeff:+g} * "
            f"({self.op_left} {FIELD_NAMES[self.left]}) * ({self.op_right} {FIELD_NAMES[self.right]})"
        )


# monomials of the NSHJ right-hand sides, written (coeff, (field, op), (field, op))
_MONOMIALS = {
    RHO: [
        (-1.0, (RHO, "Dx"), (CHI, "Dx")),
        (-1.0, (RHO, "Dy"), (CHI, "Dy")),
        (-1.0, (RHO, "I"), (CHI, "L")),
        (-1.0, (RHO, "Dx"), (AX, "I")),
        (-1.0, (RHO, "I"), (AX, "Dx")),
        (-1.0, (RHO, "Dy"), (AY, "I")),
        (-1.0, (RHO, "I"), (AY, "Dy")),
    ],
    CHI: [
        (-0.5, (CHI, "Dx"), (CHI, "Dx")),
        (-0.5, (CHI, "Dy"), (CHI, "Dy")),
        (-1.0, (CHI, "Dx"), (AX, "I")),
        (-1.0, (CHI, "Dy"), (AY, "I")),
        (-0.5, (AX, "I"), (AX, "I")),
        (-0.5, (AY, "I"), (AY, "I")),
    ],
    # w * vy with w = Dx ay - Dy ax, vy = Dy chi + ay
    AX: [
        (1.0, (AY, "Dx"), (CHI, "Dy")),
        (-1.0, (AX, "Dy"), (CHI, "Dy")),
        (1.0, (AY, "Dx"), (AY, "I")),
        (-1.0, (AX, "Dy"), (AY, "I")),
    ],
    # -w * vx with vx = Dx chi + ax
    AY: [
        (-1.0, (AY, "Dx"), (CHI, "Dx")),
        (1.0, (AX, "Dy"), (CHI, "Dx")),
        (-1.0, (AY, "Dx"), (AX, "I")),
        (1.0, (AX, "Dy"), (AX, "I")),
    ],
}


class QuadTermTable:
    """The quadratic coupling ``B`` as a list of :class:`QuadTerm`."""

    def __init__(self, grid: GridSpec, dt: float, terms):
        self.grid = grid
        self.dt = dt
        self.terms = list(terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def dim(self) -> int:
        return 4 * self.grid.size

    def left_keys(self) -> list[tuple[int, str]]:
        return sorted({(t.left, t.op_left) for t in self.terms})

    def right_keys(self) -> list[tuple[int, str]]:
        return sorted({(t.right, t.op_right) for t in self.terms})

    def derivatives(self, x: np.ndarray, keys) -> dict:
        """Stencil images ``{(field, op): array (..., ny, nx)}`` of stacked vectors ``x`` (..., 4G)."""
        g = self.grid
        f = np.asarray(x, dtype=float).reshape(x.shape[:-1] + (4, g.ny, g.nx))
        return {(fi, op): apply_stencil(op, f[..., fi, :, :], g) for fi, op in keys}

    def contract(self, dl: dict, dr: dict, batch_shape=()) -> np.ndarray:
        g = self.grid
        out = np.zeros(tuple(batch_shape) + (4, g.ny, g.nx))
        for t in self.terms:
            out[..., t.target, :, :] += (self.dt * t.coeff) * (dl[(t.left, t.op_left)] * dr[(t.right, t.op_right)])
        return out.reshape(tuple(batch_shape) + (self.dim,))

    def apply_pair(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``B (u x w)`` for (stacks of) primary vectors of shape ``(..., 4G)``."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        dl = self.derivatives(u, self.left_keys())
        dr = self.derivatives(w, self.right_keys())
        return self.contract(dl, dr, np.broadcast_shapes(u.shape[:-1], w.shape[:-1]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.apply_pair(x, x)

    def matrix(self) -> sp.csr_matrix:
        """Explicit sparse ``4G x (4G)^2`` matrix; column index ``j * 4G + k`` pairs J_j with J_k."""
        G, d = self.grid.size, self.dim
        ops = self.grid.operators
        rows, cols, vals = [], [], []
        for t in self.terms:
            ml = ops[t.op_left].tocoo()
            mr = ops[t.op_right].tocsr()
            # for every (i, j) in op_left, pair with every (i, k) in op_right
            counts = np.diff(mr.indptr)[ml.row]
            i = np.repeat(ml.row, counts)
            j = np.repeat(ml.col, counts)
            lv = np.repeat(ml.data, counts)
            starts = mr.indptr[ml.row]
            offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            pos = np.repeat(starts, counts) + offs
            k = mr.indices[pos]
            rv = mr.data[pos]
            rows.append(t.target * G + i)
            cols.append((t.left * G + j) * d + (t.right * G + k))
            vals.append(self.dt * t.coeff * lv * rv)
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d * d)
        ).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return m


def build_quadratic(grid: GridSpec, params: SimParams, symmetric: bool = False) -> QuadTermTable:
    """Derived quadratic term table.

    With ``symmetric=False`` each monomial is assigned to one ordered field
    pair (left field index <= right field index). ``symmetric=True`` splits
    every monomial with distinct factors half/half between the two orderings.
    Both give identical Carleman trajectories because every Carleman
    component is a symmetric tensor.
    """
    terms = []
    for target, monos in _MONOMIALS.items():
        for coeff, (fl, ol), (fr, orr) in monos:
            if fl > fr:
                (fl, ol), (fr, orr) = (fr, orr), (fl, ol)
            if symmetric and (fl, ol) != (fr, orr):
                terms.append(QuadTerm(target, fl, fr, ol, orr, coeff / 2))
                terms.append(QuadTerm(target, fr, fl, orr, ol, coeff / 2))
            else:
                terms.append(QuadTerm(target, fl, fr, ol, orr, coeff))
    return QuadTermTable(grid, params.dt, terms)


def sparsity(m: sp.spmatrix) -> tuple[int, int]:
    """Maximum number of non-zeros per row and per column."""
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    rows = int(np.diff(m.indptr).max()) if m.nnz else 0
    cols = int(np.bincount(m.indices, minlength=m.shape[1]).max()) if m.nnz else 0
    return rows, cols


# --------------------------------------------------------------------------
# appendix comparison

def appendix_table(grid: GridSpec, params: SimParams) -> QuadTermTable:
    """The printed B1..B4 blocks taken literally, ``D = Dx + Dy``, entry (row, col) = (left, right)."""
    raw = [
        # B1: density
        (RHO, RHO, CHI, -1.0, "D", "D"),
        (RHO, RHO, CHI, -1.0, "I", "L"),
        (RHO, RHO, AY, -1.0, "I", "Dy"),
        (RHO, RHO, AY, -1.0, "Dy", "I"),

        # B2: phase
        (CHI, CHI, CHI, -0.5, "D", "D"),
        (CHI, CHI, AX, -1.0, "D", "I"),
        (CHI, CHI, AY, -1.0, "Dy", "I"),
        (CHI, AX, AX, -0.5, "I", "I"),
        (CHI, AY, AY, -0.5, "I", "I"),
        # B3: ax
        (AX, CHI, AX, -1.0, "Dy", "Dy"),
        (AX, CHI, AY, 1.0, "Dy", "Dx"),
        (AX, AX, AY, -1.0, "Dy", "I"),
        (AX, AY, AY, -1.0, "I", "Dx"),
        # B4: ay
        (AY, CHI, AX, 1.0, "Dx", "Dy"),
        (AY, CHI, AY, -1.0, "Dx", "Dx"),
        (AY, AX, AX, -1.0, "Dy", "I"),
        (AY, AX, AY, -1.0, "I", "Dx"),
    ]
    terms = [QuadTerm(t, l, r, ol, orr, c) for t, l, r, c, ol, orr in raw]
    return QuadTermTable(grid, params.dt, terms)


_EXPANSION = {
    "I": [("I", 1.0)],
    "Dx": [("Dx", 1.0)],
    "Dy": [("Dy", 1.0)],
    "Dxx": [("Dxx", 1.0)],
    "Dyy": [("Dyy", 1.0)],
    "Dxy": [("Dxy", 1.0)],
    "L": [("Dxx", 1.0), ("Dyy", 1.0)],
    "D": [("Dx", 1.0), ("Dy", 1.0)],
}


def canonical_form(table: QuadTermTable) -> dict:
    """Symmetrised monomial coefficients keyed by ``(target, (field, op), (field, op))``.

    Composite stencils are expanded to elementary ones, factor order is
    sorted, so two tables acting identically on symmetric tensors map to the
    same dictionary.
    """
    out: dict = {}
    for t in table:
        for (ol, cl), (orr, cr) in itertools.product(_EXPANSION[t.op_left], _EXPANSION[t.op_right]):
            a, b = sorted([(t.left, ol), (t.right, orr)])
            key = (t.target, a, b)
            out[key] = out.get(key, 0.0) + t.coeff * cl * cr
    return {k: v for k, v in out.items() if abs(v) > 1e-15}


@dataclass
class Discrepancy:
    target: int
    left: tuple
    right: tuple
    derived: float
    reference: float

    def __str__(self):
        fl, ol = self.left
        fr, orr = self.right
        return (
            f"{FIELD_NAMES[self.target]:>3}: ({ol} {FIELD_NAMES[fl]}) * ({orr} {FIELD_NAMES[fr]})"
            f"  derived {self.derived:+g}  appendix {self.reference:+g}"
        )


@dataclass
class DiscrepancyReport:
    entries: list = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def for_target(self, target: int) -> list:
        return [e for e in self.entries if e.target == target]

    def to_text(self) -> str:
        if self.is_empty:
            return "no discrepancies\n"
        lines = [f"{len(self.entries)} monomials differ (coefficients of the symmetrised nodewise products)"]
        lines += [str(e) for e in self.entries]
        return "\n".join(lines) + "\n"


def compare_tables(derived: QuadTermTable, reference: QuadTermTable) -> DiscrepancyReport:
    a, b = canonical_form(derived), canonical_form(reference)
    entries = []
    for key in sorted(set(a) | set(b)):
        ca, cb = a.get(key, 0.0), b.get(key, 0.0)
        if not math.isclose(ca, cb, rel_tol=1e-12, abs_tol=1e-15):
            entries.append(Discrepancy(key[0], key[1], key[2], ca, cb))
    return DiscrepancyReport(entries)


def verify_appendix_matrices(table: QuadTermTable, reference: QuadTermTable | None = None) -> DiscrepancyReport:
    """Diff ``table`` against the literal appendix blocks (or another ``reference`` table)."""
    if reference is None:
        reference = appendix_table(table.grid, SimParams(dt=table.dt))
    return compare_tables(table, reference)


# --------------------------------------------------------------------------
# dense oracle

@dataclass
class CarlemanOps:
    """Linear operator and quadratic table for one grid/params pair."""

    grid: GridSpec
    params: SimParams
    linear: LinearOperator4G
    quad: QuadTermTable

    @classmethod
    def build(cls, grid: GridSpec, params: SimParams, symmetric: bool = False) -> "CarlemanOps":
        return cls(grid, params, build_linear(grid, params), build_quadratic(grid, params, symmetric))

    @property
    def dim(self) -> int:
        return 4 * self.grid.size

    @property
    def gauge_increment(self) -> float:
        return self.params.dt * self.params.cs2 if self.params.gauge_shift else 0.0


@dataclass
class DenseCarlemanState:
    """Explicit Carleman components ``J^(1..order)`` (flattened) plus the gauge shift."""

    grid: GridSpec
    order: int
    components: list
    sigma: float = 0.0
    step: int = 0

    @property
    def j1(self) -> np.ndarray:
        """First-order component in the physical gauge."""
        return self.components[0] + self.sigma * chi_unit_vector(self.grid)

    def component(self, m: int) -> np.ndarray:
        return self.components[m - 1]

    def to_fluid(self) -> FluidState:
        return FluidState.from_stacked(self.grid, self.j1)


def dense_bytes(dim: int, order: int) -> int:
    return 8 * sum(dim**m for m in range(1, order + 1))


def lift(s: FluidState, order: int, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> DenseCarlemanState:
    if order < 1:
        raise ValueError("order must be >= 1")
    x = flatten(s)
    need = dense_bytes(x.size, order)
    if need > memory_budget:
        raise MemoryBudgetError(
            f"dense Carleman state of order {order} on {s.grid.nx}x{s.grid.ny} needs {need / 1e9:.3g} GB "
            f"(budget {memory_budget / 1e9:.3g} GB)"
        )
    comps = [x.copy()]
    for _ in range(1, order):
        comps.append(np.multiply.outer(comps[-1], x).reshape(-1))
    return DenseCarlemanState(s.grid, order, comps)


def step_patterns(m: int, order: int):
    """All slot assignments for output order ``m``: tuples of 1 (apply A) and 2 (apply B).

    A pattern consumes ``sum(pattern)`` input slots and is kept when that does
    not exceed the truncation order.
    """
    for pat in itertools.product((1, 2), repeat=m):
        if sum(pat) <= order:
            yield pat


def apply_pattern(x: np.ndarray, pattern, a_mat, b_mat, d: int) -> np.ndarray:
    """Apply ``op_1 x op_2 x ...`` to a flattened tensor; ``1`` -> A (d x d), ``2`` -> B (d x d^2)."""
    for op in pattern:
        if op == 1:
            y = a_mat @ x.reshape(d, -1)
        else:
            y = b_mat @ x.reshape(d * d, -1)
        # rotate the freshly produced output slot to the back
        x = np.ascontiguousarray(y.T).reshape(-1)
    return x


class DenseOperators:
    """Explicit sparse matrices for the dense backend."""

    def __init__(self, ops: CarlemanOps):
        self.ops = ops
        self.a = ops.linear.matrix()
        self.b = ops.quad.matrix()
        self.dim = ops.dim


def dense_step(c: DenseCarlemanState, ops: CarlemanOps | DenseOperators) -> DenseCarlemanState:
    dops = ops if isinstance(ops, DenseOperators) else DenseOperators(ops)
    if dops.ops.grid != c.grid:
        raise ValueError("operators were built for a different grid")
    d = dops.dim
    if c.components[0].size != d:
        raise ValueError("state dimension does not match operators")
    new = []
    for m in range(1, c.order + 1):
        acc = np.zeros(d**m)
        for pat in step_patterns(m, c.order):
            acc += apply_pattern(c.components[sum(pat) - 1], pat, dops.a, dops.b, d)
        new.append(acc)
    return DenseCarlemanState(c.grid, c.order, new, c.sigma + dops.ops.gauge_increment, c.step + 1)

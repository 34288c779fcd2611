"""Rank-one factor-list backend for truncated Carleman evolution (orders 2..4).

Every component ``J^(m)`` with ``m >= 2`` is a weighted sum of pure tensor
products whose factors live in a shared :class:`FactorPool`. A term is stored
as a weight plus ``m`` row indices into the pool, so the same evolved vector
(e.g. ``A^n J^(1)(0)``) is stored once however many terms use it.

One step reuses the slot-pattern algebra of the dense backend: an ``A`` slot
maps a factor ``f`` to ``A f`` and a ``B`` slot consumes two neighbouring
factors ``(f, g)`` and yields the single new vector ``B(f x g)``. Every pool
row is propagated by ``A`` once per step and every distinct pair product is
computed once.

Optional exact merging keeps the lists short: terms that agree in every slot
but one are replaced by a single term whose odd slot holds the weighted sum of
their vectors. This is exact by multilinearity. With merging off the list
lengths follow the closed counting law (e.g. ``1 + 2n`` terms in ``J^(2)``
for order 3).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .carleman import CarlemanOps, chi_unit_vector, step_patterns
from .grid import FluidState, GridSpec, flatten

DEFAULT_TERM_CAP = 10**7
DEFAULT_POOL_BUDGET = 8 * 1024**3
_CHUNK_BYTES = 256 * 1024**2


class FactorCapError(RuntimeError):
    pass


class FactorPool:
    """Growable row store of factor vectors of a fixed length."""

    def __init__(self, dim: int, capacity: int = 16):
        self.dim = dim
        self._data = np.empty((max(capacity, 1), dim))
        self.n = 0

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "FactorPool":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        pool = cls(rows.shape[1], rows.shape[0])
        pool.append(rows)
        return pool

    @property
    def rows(self) -> np.ndarray:
        return self._data[: self.n]

    def __len__(self):
        return self.n

    @property
    def nbytes(self) -> int:
        return self.n * self.dim * 8

    def append(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(rows)
        k = rows.shape[0]
        if self.n + k > self._data.shape[0]:
            cap = max(2 * self._data.shape[0], self.n + k)
            new = np.empty((cap, self.dim))
            new[: self.n] = self._data[: self.n]
            self._data = new
        self._data[self.n : self.n + k] = rows
        ids = np.arange(self.n, self.n + k)
        self.n += k
        return ids


@dataclass
class FactorList:
    """``sum_t weights[t] * pool[ids[t, 0]] x ... x pool[ids[t, m-1]]``."""

    order: int
    weights: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1, self.order)
        if self.ids.shape[0] != self.weights.shape[0]:
            raise ValueError("weights and ids disagree on the number of terms")

    def __len__(self):
        return self.weights.shape[0]

    @classmethod
    def empty(cls, order: int) -> "FactorList":
        return cls(order, np.zeros(0), np.zeros((0, order), dtype=np.int64))

    def copy(self) -> "FactorList":
        return FactorList(self.order, self.weights.copy(), self.ids.copy())

    def term_magnitudes(self, pool: FactorPool) -> np.ndarray:
        norms = np.linalg.norm(pool.rows, axis=1)
        return np.abs(self.weights) * np.prod(norms[self.ids], axis=1)

    def to_dense(self, pool: FactorPool) -> np.ndarray:
        """Flattened dense tensor (tiny grids only)."""
        d = pool.dim
        out = np.zeros(d**self.order)
        for w, row in zip(self.weights, self.ids):
            t = np.array([w])
            for i in row:
                t = np.multiply.outer(t, pool.rows[i]).reshape(-1)
            out += t
        return out


@dataclass
class TNState:
    """Carleman state with ``J^(1)`` dense and higher components as factor lists.

    ``j1`` and the lists are stored in gauge-free variables; ``sigma`` is the
    accumulated uniform chi shift (see :mod:`chj.carleman`).
    """

    grid: GridSpec
    order: int
    j1_free: np.ndarray
    lists: dict
    pool: FactorPool
    sigma: float = 0.0
    step: int = 0

    @property
    def j1(self) -> np.ndarray:
        return self.j1_free + self.sigma * chi_unit_vector(self.grid)

    def term_counts(self) -> dict:
        return {m: len(fl) for m, fl in self.lists.items()}

    def to_fluid(self) -> FluidState:
        return FluidState.from_stacked(self.grid, self.j1)

    def dense_component(self, m: int) -> np.ndarray:
        if m == 1:
            return self.j1_free.copy()
        return self.lists[m].to_dense(self.pool)


def tn_lift(s: FluidState, order: int) -> TNState:
    if order not in (2, 3, 4):
        raise ValueError("tensor-network backend supports orders 2, 3 and 4")
    x = flatten(s)
    pool = FactorPool.from_rows(x[None, :])
    lists = {m: FactorList(m, [1.0], np.zeros((1, m), dtype=np.int64)) for m in range(2, order + 1)}
    return TNState(s.grid, order, x.copy(), lists, pool)


# --------------------------------------------------------------------------
# pair products

def _pair_products(ops: CarlemanOps, rows: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``B(rows[left[i]] x rows[right[i]])`` for all ``i``, chunked to bound memory."""
    quad = ops.quad
    lkeys, rkeys = quad.left_keys(), quad.right_keys()
    d = quad.dim
    n = left.shape[0]
    out = np.empty((n, d))
    if n == 0:
        return out
    per = max(1, _CHUNK_BYTES // (8 * d * (len(lkeys) + len(rkeys) + 2)))
    for a in range(0, n, per):
        b = min(n, a + per)
        ul, il = np.unique(left[a:b], return_inverse=True)
        ur, ir = np.unique(right[a:b], return_inverse=True)
        dl = quad.derivatives(rows[ul], lkeys)
        dr = quad.derivatives(rows[ur], rkeys)
        dl = {k: v[il] for k, v in dl.items()}
        dr = {k: v[ir] for k, v in dr.items()}
        out[a:b] = quad.contract(dl, dr, (b - a,))
    return out


def _apply_linear_rows(ops: CarlemanOps, rows: np.ndarray) -> np.ndarray:
    n, d = rows.shape
    out = np.empty_like(rows)
    per = max(1, _CHUNK_BYTES // (8 * d * 4))
    for a in range(0, n, per):
        out[a : a + per] = ops.linear.apply(rows[a : a + per])
    return out


# --------------------------------------------------------------------------
# list maintenance

def _dedupe(fl: FactorList) -> FactorList:
    if len(fl) < 2:
        return fl
    uniq, inv = np.unique(fl.ids, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    if uniq.shape[0] == len(fl):
        return fl
    w = np.zeros(uniq.shape[0])
    np.add.at(w, inv, fl.weights)
    return FactorList(fl.order, w, uniq)


def merge_list(fl: FactorList, pool: FactorPool) -> FactorList:
    """Exact merge of terms that differ in a single slot (appends summed vectors to ``pool``)."""
    fl = _dedupe(fl)
    m = fl.order
    changed = True
    while changed and len(fl) > 1:
        changed = False
        for s in range(m):
            if len(fl) < 2:
                break
            key = np.delete(fl.ids, s, axis=1)
            uniq, inv = np.unique(key, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            if uniq.shape[0] == len(fl):
                continue
            counts = np.bincount(inv, minlength=uniq.shape[0])
            multi = counts[inv] > 1
            # groups of size one are kept verbatim
            keep_w = fl.weights[~multi]
            keep_ids = fl.ids[~multi]
            groups = np.flatnonzero(counts > 1)
            gpos = np.full(uniq.shape[0], -1)
            gpos[groups] = np.arange(groups.size)
            members = np.flatnonzero(multi)
            order = np.argsort(gpos[inv[members]], kind="stable")
            members = members[order]
            g_of = gpos[inv[members]]
            summed = np.zeros((groups.size, pool.dim))
            np.add.at(summed, g_of, fl.weights[members, None] * pool.rows[fl.ids[members, s]])
            new_ids_slot = pool.append(summed)
            first = members[np.r_[0, np.flatnonzero(np.diff(g_of)) + 1]]
            merged_ids = fl.ids[first].copy()
            merged_ids[:, s] = new_ids_slot
            fl = FactorList(
                m,
                np.concatenate([keep_w, np.ones(groups.size)]),
                np.concatenate([keep_ids, merged_ids]),
            )
            changed = True
    return fl


def _garbage_collect(state_lists: dict, pool: FactorPool) -> tuple[dict, FactorPool]:
    if not state_lists:
        return state_lists, FactorPool(pool.dim)
    used = np.unique(np.concatenate([fl.ids.reshape(-1) for fl in state_lists.values()]))
    remap = np.full(len(pool), -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    new_pool = FactorPool.from_rows(pool.rows[used]) if used.size else FactorPool(pool.dim)
    lists = {m: FactorList(m, fl.weights, remap[fl.ids]) for m, fl in state_lists.items()}
    return lists, new_pool


def compress(fl: FactorList, pool: FactorPool, tol: float) -> FactorList:
    """Drop terms with ``|w| * prod ||f|| <= tol * sum of all term magnitudes``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if tol == 0 or len(fl) == 0:
        return fl
    mags = fl.term_magnitudes(pool)
    keep = mags > tol * mags.sum()
    return FactorList(fl.order, fl.weights[keep], fl.ids[keep])


# --------------------------------------------------------------------------
# time step

def tn_step(
    s: TNState,
    ops: CarlemanOps,
    merge: bool = False,
    compress_tol: float = 0.0,
    term_cap: int = DEFAULT_TERM_CAP,
    pool_budget: int = DEFAULT_POOL_BUDGET,
) -> TNState:
    if ops.grid != s.grid:
        raise ValueError("operators were built for a different grid")
    N = s.order
    old = s.pool
    P = len(old)

    # plan new terms; slot entries are ("A", id) -> id and ("B", l, r) -> P + pair index
    pair_chunks = []
    plans = {}
    for m in range(2, N + 1):
        plans[m] = []
        for pat in step_patterns(m, N):
            src = s.lists[sum(pat)]
            if len(src) == 0:
                continue
            cols, c = [], 0
            for op in pat:
                if op == 1:
                    cols.append(("A", src.ids[:, c]))
                    c += 1
                else:
                    pair_chunks.append(np.stack([src.ids[:, c], src.ids[:, c + 1]], axis=1))
                    cols.append(("B", len(pair_chunks) - 1))
                    c += 2
            plans[m].append((src.weights, cols))
    # J^(1) gets A j1 plus B applied to every J^(2) term
    j2 = s.lists[2]
    pair_chunks.append(j2.ids)
    all_pairs = np.concatenate(pair_chunks) if pair_chunks else np.zeros((0, 2), dtype=np.int64)
    uniq_pairs, pair_inv = np.unique(all_pairs, axis=0, return_inverse=True)
    pair_inv = pair_inv.reshape(-1)

    n_new = P + uniq_pairs.shape[0]
    if n_new * old.dim * 8 > pool_budget:
        raise FactorCapError(f"factor pool would need {n_new * old.dim * 8 / 1e9:.3g} GB")

    products = _pair_products(ops, old.rows, uniq_pairs[:, 0], uniq_pairs[:, 1])

    # dense J^(1)
    j2_prod = products[pair_inv[all_pairs.shape[0] - len(j2) :]]
    j1 = ops.linear.apply(s.j1_free) + j2.weights @ j2_prod

    pool = FactorPool(old.dim, n_new + 16)
    pool.append(_apply_linear_rows(ops, old.rows))
    pool.append(products)

    # assemble lists
    starts = np.cumsum([0] + [c.shape[0] for c in pair_chunks])
    lists = {}
    for m in range(2, N + 1):
        ws, idss = [], []
        for w, cols in plans[m]:
            ids = np.empty((w.shape[0], m), dtype=np.int64)
            for j, (kind, arr) in enumerate(cols):
                ids[:, j] = arr if kind == "A" else P + pair_inv[starts[arr] : starts[arr + 1]]
            ws.append(w)
            idss.append(ids)
        if ws:
            fl = FactorList(m, np.concatenate(ws), np.concatenate(idss))
        else:
            fl = FactorList.empty(m)
        if merge:
            fl = merge_list(fl, pool)
        if compress_tol:
            fl = compress(fl, pool, compress_tol)
        lists[m] = fl

    total = sum(len(fl) * fl.order for fl in lists.values())
    if total > term_cap:
        raise FactorCapError(f"factor lists hold {total} factor references, above the cap {term_cap}")
    lists, pool = _garbage_collect(lists, pool)
    return TNState(s.grid, N, j1, lists, pool, s.sigma + ops.gauge_increment, s.step + 1)


# --------------------------------------------------------------------------
# norms

def factor_list_norm(fl: FactorList, pool: FactorPool) -> float:
    """Frobenius norm of a factor list via the Gram matrix of its terms."""
    return math.sqrt(max(_gram_sum(fl.weights, fl.ids, pool.rows), 0.0))


def _gram_sum(weights: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> float:
    """``sum_{t,t'} w_t w_t' prod_s <f_ts, f_t's>``."""
    n = weights.shape[0]
    if n == 0:
        return 0.0
    used, local = np.unique(ids, return_inverse=True)
    local = local.reshape(ids.shape)
    g = rows[used] @ rows[used].T
    total = 0.0
    per = max(1, int(2e7 // max(n, 1)))
    for a in range(0, n, per):
        blk = np.outer(weights[a : a + per], weights)
        for s in range(ids.shape[1]):
            blk = blk * g[np.ix_(local[a : a + per, s], local[:, s])]
        total += float(blk.sum())
    return total


def tn_j2_gauged_norm(s: TNState) -> float:
    """Norm of ``J2 + sigma (e x J1 + J1 x e) + sigma^2 e x e`` in the physical gauge."""
    fl = s.lists[2]
    if s.sigma == 0.0:
        return math.sqrt(max(_gram_sum(fl.weights, fl.ids, s.pool.rows), 0.0))
    e = chi_unit_vector(s.grid)
    rows = np.vstack([s.pool.rows, e, s.j1_free])
    ie, ij = len(s.pool), len(s.pool) + 1
    w = np.concatenate([fl.weights, [s.sigma, s.sigma, s.sigma**2]])
    ids = np.concatenate([fl.ids, [[ie, ij], [ij, ie], [ie, ie]]])
    return math.sqrt(max(_gram_sum(w, ids, rows), 0.0))


# --------------------------------------------------------------------------
# memory cost estimator

@dataclass
class CostReport:
    order: int
    grid_points: int
    steps: int
    entries_full: float
    entries_tn: float
    entries_asymptotic: float
    bytes_per_entry: int = 8
    notes: list = field(default_factory=list)

    @property
    def bytes_full(self) -> float:
        return self.entries_full * self.bytes_per_entry

    @property
    def bytes_tn(self) -> float:
        return self.entries_tn * self.bytes_per_entry

    @property
    def gb_full(self) -> float:
        return self.bytes_full / 1e9

    @property
    def gb_tn(self) -> float:
        return self.bytes_tn / 1e9

    def row(self) -> list:
        return [self.order, self.grid_points, self.steps, self.entries_full, self.entries_tn, self.bytes_full, self.bytes_tn]


COST_COLUMNS = ["order", "G", "steps", "entries_full", "entries_tn", "bytes_full", "bytes_tn"]


def memory_cost(n_c: int, G: int, n_t: int) -> CostReport:
    """Entry counts of the full Carleman tensor and of the factor-list representation.

    ``4G`` is the primary vector length. Order 3: ``(1 + 2 n_t) 2 (4G)``;
    order 4: ``(1 + 2 n_t N3 + n_t) 2 (4G)`` with ``N3 = (1 + 3 n_t) 3 (4G)``;
    order 5 has no closed form and reports the asymptotic law
    ``(n_t 4G)^(N-2) (N-2)!``.
    """
    if n_c not in (3, 4, 5):
        raise ValueError(f"unsupported order {n_c}; expected 3, 4 or 5")
    if G < 1 or n_t < 0:
        raise ValueError("need G >= 1 and n_t >= 0")
    d = 4.0 * G
    full = d**n_c
    asym = (n_t * d) ** (n_c - 2) * math.factorial(n_c - 2)
    notes = []
    if n_c == 3:
        tn = (1 + 2 * n_t) * 2 * d
    elif n_c == 4:
        n3 = (1 + 3 * n_t) * 3 * d
        tn = (1 + 2 * n_t * n3 + n_t) * 2 * d
    else:
        tn = asym
        notes.append("order 5 uses the asymptotic law")
    return CostReport(n_c, G, n_t, float(full), float(tn), float(asym), notes=notes)


def write_cost_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COST_COLUMNS)
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])

"""Scalar resource estimates for a block-encoded Carleman update.

The update matrix is split as ``M1 = [A | B]`` acting on ``J1 (+) J2`` and
``M2 = A x A`` acting on ``J2``. Block encodings carry sub-normalisation
factors ``alpha`` built from elementwise bounds ``mu`` and the sparsity
constants 35 (for ``M1``) and 10 (for ``A``); one step then succeeds with
probability ``||Psi(t + dt)||^2 / (alpha_M1^2 alpha_M2^2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .grid import GridSpec
from .nshj import SimParams

ANCILLAS = 9
SPARSITY_M1 = 35
SPARSITY_A = 10


def mu_bounds(p: SimParams, grid: GridSpec) -> tuple[float, float]:
    """Closed-form bounds on the largest entries of ``A - I`` and ``B``."""
    h = grid.dx
    mu_a = p.dt * max(p.cs2, 4 * p.nu / h**2, p.nu / (2 * h))
    mu_b = (p.dt / h) * max(4 / h, 0.5)
    return mu_a, mu_b


def alphas(mu_a: float, mu_b: float) -> tuple[float, float]:
    if mu_a < 0 or mu_b < 0:
        raise ValueError("mu bounds must be non-negative")
    alpha_m1 = 1 + SPARSITY_M1 * max(mu_a, mu_b)
    alpha_m2 = (1 + SPARSITY_A * mu_a) ** 2
    return alpha_m1, alpha_m2


def success_probability(norm_next: float, alpha_pair: tuple[float, float]) -> float:
    if norm_next < 0:
        raise ValueError("norm must be non-negative")
    a1, a2 = alpha_pair
    p = norm_next**2 / (a1**2 * a2**2)
    if p > 1:
        warnings.warn(f"success probability {p:.4g} exceeds 1 (state not normalised?); clamped", RuntimeWarning)
        p = 1.0
    return p


@dataclass
class ResourceReport:
    mu_a: float
    mu_b: float
    alpha_m1: float
    alpha_m2: float
    ancillas: int = ANCILLAS
    p_s: float = math.nan
    measured_sparsity_a: tuple | None = None
    measured_sparsity_b: tuple | None = None

    @property
    def alpha_total_sq(self) -> float:
        return (self.alpha_m1 * self.alpha_m2) ** 2

    def fields(self) -> list[tuple[str, object]]:
        out = [
            ("mu_a", self.mu_a),
            ("mu_b", self.mu_b),
            ("alpha_m1", self.alpha_m1),
            ("alpha_m2", self.alpha_m2),
            ("alpha_total_sq", self.alpha_total_sq),
            ("ancillas", self.ancillas),
            ("p_s", self.p_s),
        ]
        if self.measured_sparsity_a is not None:
            out.append(("sparsity_a_row", self.measured_sparsity_a[0]))
            out.append(("sparsity_a_col", self.measured_sparsity_a[1]))
        if self.measured_sparsity_b is not None:
            out.append(("sparsity_b_row", self.measured_sparsity_b[0]))
            out.append(("sparsity_b_col", self.measured_sparsity_b[1]))
        return out

    def to_text(self) -> str:
        return "\n".join(f"{k:<16} {v!r}" for k, v in self.fields()) + "\n"

    def to_csv(self) -> str:
        keys, vals = zip(*self.fields())
        return ",".join(keys) + "\n" + ",".join(repr(v) for v in vals) + "\n"


def resource_report(p: SimParams, grid: GridSpec, norm_next: float = 1.0, measure: bool = False) -> ResourceReport:
    """Report for one configuration; ``norm_next`` defaults to a normalised state.

    With ``measure=True`` the operators are assembled and their sparsity is
    counted (the small stencils make this cheap up to a few thousand nodes).
    """
    mu_a, mu_b = mu_bounds(p, grid)
    a1, a2 = alphas(mu_a, mu_b)
    rep = ResourceReport(mu_a, mu_b, a1, a2, p_s=success_probability(norm_next, (a1, a2)))
    if measure:
        from .carleman import build_linear, build_quadratic, sparsity

        rep.measured_sparsity_a = sparsity(build_linear(grid, p).tilde_matrix())
        rep.measured_sparsity_b = sparsity(build_quadratic(grid, p).matrix())
    return rep

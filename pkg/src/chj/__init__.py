"""Carleman linearisation of the Navier-Stokes equations in Hamilton-Jacobi form."""
from .carleman import (
    CarlemanOps,
    DenseCarlemanState,
    DiscrepancyReport,
    LinearOperator4G,
    QuadTerm,
    QuadTermTable,
    build_linear,
    build_quadratic,
    dense_step,
    lift,
    verify_appendix_matrices,
)
from .config import RunConfig, load_config
from .grid import FluidState, GridSpec, flatten, unflatten
from .metrics import ErrorSeries, Probe, decay_reference, global_rel_error, local_rel_error, psi_norm, resolve_probe
from .nshj import InstabilityError, SimParams, evolve, kolmogorov_state, nshj_step
from .qres import ResourceReport, alphas, mu_bounds, success_probability
from .tn import CostReport, FactorList, TNState, compress, memory_cost, tn_lift, tn_step

__version__ = "0.1.0"

"""Fault-free and fault-prone smoothing, two-grid and multigrid cycles.

The fault-prone cycle replaces every intermediate result by its entrywise
product with a fresh random diagonal: one combined matrix per smoothing
application (residual and preconditioner faults fold into one diagonal for
Jacobi), one on the residual before restriction, one after restriction,
and one after prolongation.  The exact solve on level 0 never faults.
Realizations are drawn in a fixed program order (pre-smooths, rho, R,
recursion, P, post-smooths) from a single stream, so a seed fully
determines a run.
"""

from dataclasses import dataclass, field

import numpy as np

from . import faults as flt


@dataclass(frozen=True)
class CycleConfig:
    """Cycle parameters: nu1/nu2 smoothing steps, gamma corrections per
    level, Jacobi damping theta, and the hierarchy depth (levels) used by
    the experiment harness.  The exact coarse solve is a direct
    factorization (dense Cholesky below the dense cap, sparse LU above)."""

    nu1: int = 1
    nu2: int = 1
    gamma: int = 1
    theta: float = 2.0 / 3.0
    levels: int = 1
    coarse_solver: str = "dense_factorization"

    def __post_init__(self):
        # nu1 = nu2 = 0 is allowed: it exposes the bare coarse-grid
        # correction (an A-orthogonal projection) for analysis.
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("smoothing counts must be nonnegative")
        if self.gamma < 1:
            raise ValueError("gamma must be at least 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("damping theta must lie in (0, 1]")
        if self.levels < 1:
            raise ValueError("need at least one level")
        if self.coarse_solver != "dense_factorization":
            raise ValueError(f"unknown coarse solver {self.coarse_solver!r}")


@dataclass(frozen=True)
class SmootherOperator:
    """Diagonal N = theta * diag(A)^{-1} of a level."""

    N: np.ndarray

    def __post_init__(self):
        if np.any(self.N <= 0):
            raise ValueError("smoother diagonal must be positive")


@dataclass
class IterationTrace:
    """Residual 2-norms per iteration; entry 0 is the initial residual."""

    residual_norms: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False

    def to_csv_rows(self):
        return [(i, r) for i, r in enumerate(self.residual_norms)]


def smoother(level, cfg):
    return SmootherOperator(N=cfg.theta * level.inv_diag)


def smooth(level, b, x, cfg, fault_spec=None, rng=None):
    """One (possibly faulty) damped Jacobi sweep x + X N (b - A x)."""
    if b.shape[0] != level.n or x.shape[0] != level.n:
        raise ValueError("dimension mismatch in smooth")
    update = (cfg.theta * level.inv_diag) * (b - level.A @ x)
    if fault_spec is not None and not fault_spec.is_none:
        update *= flt.sample(fault_spec, level.n, rng)
    return x + update


def mg_iterate(hierarchy, ell, b, x, cfg, faults=None, rng=None):
    """One multigrid iteration on level ell (exact solve at level 0).

    With faults=None (or an all-protected config) this is the fault-free
    cycle; otherwise each site draws a fresh realization per application,
    at every level above 0.
    """
    if ell == 0:
        return hierarchy.exact_solver(0)(b)
    lv = hierarchy.level(ell)
    if b.shape[0] != lv.n or x.shape[0] != lv.n:
        raise ValueError("dimension mismatch in mg_iterate")
    site = faults.effective if faults is not None else (lambda s: None)

    spec_S = site("S")
    for _ in range(cfg.nu1):
        x = smooth(lv, b, x, cfg, spec_S, rng)

    r = b - lv.A @ x
    spec_rho = site("rho")
    if spec_rho is not None and not spec_rho.is_none:
        r = r * flt.sample(spec_rho, lv.n, rng)
    d = hierarchy.restriction(ell - 1) @ r
    spec_R = site("R")
    if spec_R is not None and not spec_R.is_none:
        d = d * flt.sample(spec_R, hierarchy.level(ell - 1).n, rng)

    e = np.zeros(hierarchy.level(ell - 1).n)
    for _ in range(cfg.gamma):
        e = mg_iterate(hierarchy, ell - 1, d, e, cfg, faults, rng)

    pe = hierarchy.prolongation(ell - 1) @ e
    spec_P = site("P")
    if spec_P is not None and not spec_P.is_none:
        pe = pe * flt.sample(spec_P, lv.n, rng)
    x = x + pe

    for _ in range(cfg.nu2):
        x = smooth(lv, b, x, cfg, spec_S, rng)
    return x


def apply_error_operator(hierarchy, ell, v, cfg, faults=None, rng=None):
    """Apply the iteration matrix E_ell to v for one fresh realization.

    Follows from the defining identity x - MG(A x, y) = E (x - y) at x = 0:
    E v = MG(0, v).  For a fixed realization the map is linear in v.
    """
    return mg_iterate(hierarchy, ell, np.zeros_like(v), v, cfg, faults, rng)


def solve(hierarchy, b, cfg, faults=None, tol_rel=1e-3, max_iter=100, rng=None):
    """Iterate cycles from x = 0 until ||b - A x|| <= tol_rel * ||b||.

    Records every residual norm; stops early (flagged diverged) once the
    residual exceeds 1e12 times the initial one.
    """
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    ell = hierarchy.L
    lv = hierarchy.level(ell)
    x = np.zeros(lv.n)
    res0 = float(np.linalg.norm(b))
    trace = IterationTrace(residual_norms=[res0])
    if res0 == 0.0:
        trace.converged = True
        return x, trace
    target = tol_rel * res0
    blowup = 1e12 * res0
    for it in range(1, max_iter + 1):
        x = mg_iterate(hierarchy, ell, b, x, cfg, faults, rng)
        res = float(np.linalg.norm(b - lv.A @ x))
        trace.residual_norms.append(res)
        trace.iterations = it
        if not np.isfinite(res) or res > blowup:
            trace.diverged = True
            return x, trace
        if res <= target:
            trace.converged = True
            return x, trace
    return x, trace

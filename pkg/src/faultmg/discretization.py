"""Nested P1 finite element hierarchies for the model Poisson problems.

Supports -Δu = f with homogeneous Dirichlet boundary on the unit interval
(d=1) and the unit square (d=2, uniform right triangles, two per cell with
the diagonal running bottom-left to top-right).  Boundary nodes are
eliminated, so every matrix acts on interior unknowns only.  Each level is
assembled directly; the Galerkin identity A_c = R A_f P then holds exactly
for these nested meshes and is enforced by tests rather than construction.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg

from .linalg import DENSE_CAP

#: Refuse hierarchies whose finest level exceeds this many unknowns.
MEMORY_CAP = 2_000_000


class Level:
    """One grid level: size n, mesh width h, stiffness A, mass M, transfer P.

    ``P_to_finer`` maps this level's vectors to the next finer level and is
    None on the finest level.  ``inv_diag`` caches 1/diag(A) for smoothing.
    """

    __slots__ = ("n", "h", "A", "M", "P_to_finer", "inv_diag")

    def __init__(self, n, h, A, M, P_to_finer=None):
        self.n = n
        self.h = h
        self.A = A
        self.M = M
        self.P_to_finer = P_to_finer
        self.inv_diag = 1.0 / A.diagonal()


class GridHierarchy:
    """Levels 0..L from coarse to fine with restriction R = Pᵀ throughout."""

    def __init__(self, d, levels):
        self.d = d
        self.levels = levels
        self._restrictions = [
            lv.P_to_finer.T.tocsr() if lv.P_to_finer is not None else None
            for lv in levels
        ]
        self._solvers = {}

    @property
    def L(self):
        return len(self.levels) - 1

    def level(self, ell):
        return self.levels[ell]

    def prolongation(self, ell):
        """P mapping level ell to level ell+1."""
        return self.levels[ell].P_to_finer

    def restriction(self, ell):
        """R = Pᵀ mapping level ell+1 to level ell."""
        return self._restrictions[ell]

    def exact_solver(self, ell):
        """Exact direct solve with A_ell, factorized once and cached.

        Dense Cholesky for small levels, sparse LU otherwise; both are
        exact factorizations, as the coarse-solve policy requires.
        """
        if ell not in self._solvers:
            A = self.levels[ell].A
            if A.shape[0] <= 256:
                c, low = scipy.linalg.cho_factor(A.toarray())
                self._solvers[ell] = lambda b: scipy.linalg.cho_solve(
                    (c, low), b, check_finite=False)
            else:
                lu = spla.splu(A.tocsc())
                self._solvers[ell] = lu.solve
        return self._solvers[ell]


def _interval_level(cells):
    n = cells - 1
    h = 1.0 / cells
    main = np.full(n, 2.0 / h)
    off = np.full(n - 1, -1.0 / h)
    A = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    M = sp.diags([np.full(n - 1, h / 6.0), np.full(n, 4.0 * h / 6.0),
                  np.full(n - 1, h / 6.0)], [-1, 0, 1], format="csr")
    return n, h, A, M


def _square_level(cells):
    """P1 assembly on the uniform right-triangle mesh of the unit square.

    The assembled interior stencil of A is the 5-point stencil (4 center,
    -1 for the axis neighbors), independent of h; M couples the 6 edge
    neighbors of each node with weight h²/12 and carries h²/2 on the
    diagonal.
    """
    m = cells - 1  # interior nodes per direction
    n = m * m
    h = 1.0 / cells
    idx = np.arange(n).reshape(m, m)  # idx[i, j], i = x index, j = y index

    rows, cols, avals, mvals = [], [], [], []

    def add(r, c, a, mm):
        rows.append(r.ravel())
        cols.append(c.ravel())
        avals.append(np.full(r.size, a))
        mvals.append(np.full(r.size, mm))

    add(idx, idx, 4.0, h * h / 2.0)
    # axis neighbors: stiffness -1, mass h^2/12
    add(idx[:-1, :], idx[1:, :], -1.0, h * h / 12.0)
    add(idx[1:, :], idx[:-1, :], -1.0, h * h / 12.0)
    add(idx[:, :-1], idx[:, 1:], -1.0, h * h / 12.0)
    add(idx[:, 1:], idx[:, :-1], -1.0, h * h / 12.0)
    # diagonal neighbors along the mesh diagonal: stiffness 0, mass h^2/12
    add(idx[:-1, :-1], idx[1:, 1:], 0.0, h * h / 12.0)
    add(idx[1:, 1:], idx[:-1, :-1], 0.0, h * h / 12.0)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = sp.coo_matrix((np.concatenate(avals), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((np.concatenate(mvals), (rows, cols)), shape=(n, n)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    M.sort_indices()
    return n, h, A, M


def _interval_prolongation(coarse_cells):
    """P1 interpolation from coarse_cells to 2*coarse_cells intervals."""
    nc = coarse_cells - 1
    nf = 2 * coarse_cells - 1
    rows, cols, vals = [], [], []
    for j in range(nc):
        fi = 2 * j + 1  # coincident fine node (0-based interior numbering)
        rows.append(fi); cols.append(j); vals.append(1.0)
        if fi - 1 >= 0:
            rows.append(fi - 1); cols.append(j); vals.append(0.5)
        if fi + 1 < nf:
            rows.append(fi + 1); cols.append(j); vals.append(0.5)
    return sp.coo_matrix((vals, (rows, cols)), shape=(nf, nc)).tocsr()


def _square_prolongation(coarse_cells):
    """P1 interpolation on the nested square meshes.

    Fine nodes coincide with coarse nodes (weight 1) or are midpoints of
    coarse edges: axis edges and the cell diagonals from (i, j) to
    (i+1, j+1), each contributing weight 1/2 from its two endpoints.
    """
    mc = coarse_cells - 1
    mf = 2 * coarse_cells - 1
    cidx = np.arange(mc * mc).reshape(mc, mc)
    rows, cols, vals = [], [], []

    def fid(i, j):
        return i * mf + j

    for ci in range(mc):
        for cj in range(mc):
            c = cidx[ci, cj]
            fi, fj = 2 * ci + 1, 2 * cj + 1
            stencil = [
                (fi, fj, 1.0),
                (fi - 1, fj, 0.5), (fi + 1, fj, 0.5),
                (fi, fj - 1, 0.5), (fi, fj + 1, 0.5),
                (fi - 1, fj - 1, 0.5), (fi + 1, fj + 1, 0.5),
            ]
            for i, j, w in stencil:
                if 0 <= i < mf and 0 <= j < mf:
                    rows.append(fid(i, j)); cols.append(c); vals.append(w)
    return sp.coo_matrix((vals, (rows, cols)), shape=(mf * mf, mc * mc)).tocsr()


def build_hierarchy(d, L, coarse_cells, memory_cap=MEMORY_CAP):
    """Build the nested hierarchy with L uniform refinements of the base mesh.

    The coarsest mesh has ``coarse_cells`` cells per direction; level ell
    has coarse_cells * 2^ell.  Requires at least one interior node on the
    coarsest level (coarse_cells >= 2).
    """
    if d not in (1, 2):
        raise ValueError("dimension must be 1 or 2")
    if L < 1:
        raise ValueError("need at least one refinement level")
    if coarse_cells < 2:
        raise ValueError("coarsest mesh needs at least one interior node")
    fine_cells = coarse_cells * 2 ** L
    n_fine = (fine_cells - 1) ** d
    if n_fine > memory_cap:
        raise ValueError(
            f"finest level would have {n_fine} unknowns, above cap {memory_cap}")

    levels = []
    for ell in range(L + 1):
        cells = coarse_cells * 2 ** ell
        if d == 1:
            n, h, A, M = _interval_level(cells)
        else:
            n, h, A, M = _square_level(cells)
        levels.append(Level(n, h, A, M))
    for ell in range(L):
        cells = coarse_cells * 2 ** ell
        P = _interval_prolongation(cells) if d == 1 else _square_prolongation(cells)
        levels[ell].P_to_finer = P
    return GridHierarchy(d, levels)


def assemble_load(hierarchy, f, level=None):
    """Load vector on a level (default finest).

    f = "constant_one" integrates the unit source against the P1 basis by
    exact quadrature (h per interior node in 1d, h² in 2d); f = ("point_mass",
    i) is the canonical unit vector e_i.
    """
    ell = hierarchy.L if level is None else level
    lv = hierarchy.level(ell)
    if f == "constant_one":
        return np.full(lv.n, lv.h ** hierarchy.d)
    if isinstance(f, tuple) and len(f) == 2 and f[0] == "point_mass":
        i = f[1]
        if not 0 <= i < lv.n:
            raise ValueError(f"node index {i} out of range for n={lv.n}")
        e = np.zeros(lv.n)
        e[i] = 1.0
        return e
    raise ValueError(f"unknown load spec {f!r}")


def green_norm_diagnostic(hierarchy, level, dense_cap=DENSE_CAP):
    """max_i ‖A_ell^{-1} e_i‖₂ via exact dense factorization.

    Grows like h^{-d/2} for d < 4 (the discrete Green-function columns have
    bounded L² norm while the mass matrix scales like h^d).
    """
    lv = hierarchy.level(level)
    if lv.n > dense_cap:
        raise ValueError(
            f"level has {lv.n} unknowns; dense solve refused above {dense_cap}. "
            "Subsample the column index i instead.")
    Ainv = np.linalg.inv(lv.A.toarray())
    return float(np.max(np.linalg.norm(Ainv, axis=0)))


def export_matrix_market(hierarchy, directory):
    """Write every A_ell and P_ell in Matrix Market coordinate format."""
    import os
    from scipy.io import mmwrite

    os.makedirs(directory, exist_ok=True)
    written = []
    for ell, lv in enumerate(hierarchy.levels):
        path = os.path.join(directory, f"A_{ell}.mtx")
        mmwrite(path, lv.A)
        written.append(path)
        if lv.P_to_finer is not None:
            path = os.path.join(directory, f"P_{ell}.mtx")
            mmwrite(path, lv.P_to_finer)
            written.append(path)
    return written

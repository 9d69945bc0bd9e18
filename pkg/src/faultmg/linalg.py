"""Dense/sparse kernels, Kronecker and Hadamard algebra, and norm machinery.

Matrices are either 2d float64 numpy arrays or scipy CSR matrices; vectors
are 1d float64 arrays; diagonal matrices are stored as their 1d diagonal.
Vectorization is column-stacking, so ``vec(A X B) = kron(B.T, A) vec(X)``
and the tensor-space index of the entry pair (i, p) is ``i*n + p``.
"""

import numpy as np
import scipy.sparse as sp

#: Largest dimension for which exact dense eigensolve/SVD paths are used.
DENSE_CAP = 4096

#: Refuse to materialize Kronecker products with more stored entries.
KRON_CAP = 10_000_000

#: Default relative accuracy of the iterative norm/radius estimates.
POWER_TOL = 1e-10

#: Iteration budget of power iterations, per unit of dimension.
POWER_ITER_FACTOR = 10

# Fixed key so that iterative paths are bit-reproducible.
_POWER_SEED = 0x5EED


class IterationDidNotConverge(RuntimeError):
    """Power iteration hit its cap; carries the last estimate."""

    def __init__(self, message, estimate):
        super().__init__(f"{message} (last estimate {estimate!r})")
        self.estimate = estimate


def _power_rng():
    return np.random.Generator(np.random.Philox(key=_POWER_SEED))


def is_sparse(Z):
    return sp.issparse(Z)


def validate_csr(A):
    """Check the CSR invariants; raise ValueError on violation.

    Requires monotone row offsets of length nrows+1, in-range strictly
    increasing column indices within each row, and no duplicates.
    """
    if not sp.issparse(A) or A.format != "csr":
        raise ValueError("expected a CSR matrix")
    nrows, ncols = A.shape
    indptr, indices = A.indptr, A.indices
    if len(indptr) != nrows + 1:
        raise ValueError("row offsets must have length nrows+1")
    if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
        raise ValueError("row offsets must be monotone non-decreasing from 0")
    if len(indices) and (indices.min() < 0 or indices.max() >= ncols):
        raise ValueError("column index out of range")
    for r in range(nrows):
        row = indices[indptr[r]:indptr[r + 1]]
        if np.any(np.diff(row) <= 0):
            raise ValueError(f"row {r}: column indices not strictly increasing")
    return A


def spmv(A, x):
    """Sparse (or dense) matrix-vector product with a dimension check."""
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def kron(Z, Y, cap=KRON_CAP):
    """Kronecker product (Z ⊗ Y)_{in+p, jm+q} = Z_ij Y_pq.

    Sparse inputs are assembled sparsely (COO) and returned as CSR.  The
    materialization is refused when the number of stored entries would
    exceed ``cap``; use :func:`kron_apply` for matrix-free products.
    """
    if sp.issparse(Z) or sp.issparse(Y):
        znnz = Z.nnz if sp.issparse(Z) else np.count_nonzero(Z)
        ynnz = Y.nnz if sp.issparse(Y) else np.count_nonzero(Y)
        if znnz * ynnz > cap:
            raise ValueError(
                f"kron result would store {znnz * ynnz} entries, above cap {cap}")
        return sp.kron(Z, Y, format="csr")
    Z = np.asarray(Z, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Z.size * Y.size > cap:
        raise ValueError(
            f"kron result would store {Z.size * Y.size} entries, above cap {cap}")
    return np.kron(Z, Y)


def kron_apply(Z, Y, x):
    """Compute (Z ⊗ Y) x without materializing the product."""
    nz, mz = Z.shape
    ny, my = Y.shape
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != mz * my:
        raise ValueError("dimension mismatch in kron_apply")
    X = x.reshape(mz, my)
    return np.asarray(Z @ X @ Y.T).reshape(nz * ny)


def hadamard(Z, Y):
    """Entrywise (Hadamard) product; shapes must match."""
    if Z.shape != Y.shape:
        raise ValueError(f"shape mismatch: {Z.shape} vs {Y.shape}")
    if sp.issparse(Z):
        return Z.multiply(Y).tocsr()
    if sp.issparse(Y):
        return Y.multiply(Z).tocsr()
    return np.asarray(Z) * np.asarray(Y)


def hadamard_power(Z, k=2):
    """k-th Hadamard power; hadamard_power(Z, 2) is Z ∘ Z."""
    out = Z
    for _ in range(k - 1):
        out = hadamard(out, Z)
    return out


def _as_linear_op(Z):
    """Return (matvec, rmatvec, shape) for a dense/sparse matrix or a pair."""
    if isinstance(Z, tuple):
        matvec, rmatvec, shape = Z
        return matvec, rmatvec, shape
    return (lambda v: Z @ v), (lambda v: Z.T @ v), Z.shape


def spectral_norm(Z, tol=POWER_TOL, dense_cap=DENSE_CAP):
    """2-norm of Z.

    Dimensions up to ``dense_cap`` take the exact dense SVD path; larger
    (or ``dense_cap=0``) inputs use power iteration on ZᵀZ with relative
    accuracy ``tol`` and a deterministic seeded start vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    matvec, rmatvec, shape = _as_linear_op(Z)
    if not isinstance(Z, tuple) and max(shape) <= dense_cap:
        Zd = Z.toarray() if sp.issparse(Z) else np.asarray(Z, dtype=np.float64)
        s = np.linalg.svd(Zd, compute_uv=False)
        return float(s[0]) if s.size else 0.0
    n = shape[1]
    v = _power_rng().standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    cap = POWER_ITER_FACTOR * max(n, 10)
    for _ in range(cap):
        w = rmatvec(matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * max(new, 1e-300):
            return float(new)
        est = new
    raise IterationDidNotConverge("spectral_norm power iteration hit cap", est)


def spectral_radius(Z, tol=POWER_TOL, dense_cap=DENSE_CAP, start=None):
    """Largest |eigenvalue| of a square matrix.

    Dense eigensolve when the dimension is at most ``dense_cap``; otherwise
    power iteration with restarts, valid when a dominant eigenvalue exists.
    ``start`` seeds the iteration (useful for cone-preserving operators).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    matvec, _, shape = _as_linear_op(Z)
    if shape[0] != shape[1]:
        raise ValueError("spectral_radius requires a square matrix")
    n = shape[0]
    if not isinstance(Z, tuple) and n <= dense_cap:
        Zd = Z.toarray() if sp.issparse(Z) else np.asarray(Z, dtype=np.float64)
        if n == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(Zd))))
    rng = _power_rng()
    cap = POWER_ITER_FACTOR * max(n, 10)
    restarts = 3
    last = 0.0
    for attempt in range(restarts):
        if start is not None and attempt == 0:
            v = np.array(start, dtype=np.float64)
        else:
            v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            v = rng.standard_normal(n)
            nv = np.linalg.norm(v)
        v /= nv
        est = 0.0
        hist = []
        for _ in range(cap):
            w = matvec(v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v = w / nw
            hist.append(nw)
            # |λ| via the geometric mean of recent growth factors smooths
            # the sign flips of a real negative dominant eigenvalue.
            k = min(len(hist), 10)
            new = float(np.exp(np.mean(np.log(hist[-k:]))))
            if len(hist) > 5 and abs(new - est) <= tol * max(new, 1e-300):
                return new
            est = new
        last = est
    raise IterationDidNotConverge(
        "no dominant eigenvalue: power iteration oscillated past its cap", last)


def _spd_root(A):
    """(A^{1/2}, A^{-1/2}) via a symmetric eigendecomposition; A must be SPD."""
    A = np.asarray(A, dtype=np.float64)
    w, Q = np.linalg.eigh(0.5 * (A + A.T))
    if w.min() <= 0.0:
        raise ValueError("matrix is not positive definite")
    sq = Q @ np.diag(np.sqrt(w)) @ Q.T
    isq = Q @ np.diag(1.0 / np.sqrt(w)) @ Q.T
    return sq, isq


def energy_norm(Z, A, kind="A", tol=POWER_TOL):
    """Energy norm of Z with respect to an SPD matrix A.

    kind="A" is ‖A^{1/2} Z A^{-1/2}‖₂ and kind="A2" is ‖A Z A^{-1}‖₂.
    Z may live on the base space (n×n) or the tensor space (n²×n²); the
    tensor case conjugates with the Kronecker squares of the factors.
    """
    A = np.asarray(A, dtype=np.float64)
    Z = Z.toarray() if sp.issparse(Z) else np.asarray(Z, dtype=np.float64)
    n = A.shape[0]
    if kind == "A":
        left, right = _spd_root(A)
    elif kind == "A2":
        left, right = A, np.linalg.inv(A)
    else:
        raise ValueError(f"unknown energy norm kind {kind!r}")
    if Z.shape == (n, n):
        return spectral_norm(left @ Z @ right, tol=tol)
    if Z.shape == (n * n, n * n):
        L = np.kron(left, left)
        R = np.kron(right, right)
        return spectral_norm(L @ Z @ R, tol=tol)
    raise ValueError(f"Z has shape {Z.shape}, expected ({n},{n}) or ({n*n},{n*n})")


def vec(Z):
    """Column-stacking vectorization."""
    Z = Z.toarray() if sp.issparse(Z) else np.asarray(Z)
    return Z.flatten(order="F")


def unvec(v, nrows, ncols):
    return np.asarray(v).reshape((nrows, ncols), order="F")


def frobenius_norm(Z):
    if sp.issparse(Z):
        return float(np.sqrt(Z.multiply(Z).sum()))
    return float(np.linalg.norm(np.asarray(Z), "fro"))


def tensor_selector(n):
    """Sparse diagonal selector K = blockdiag(e_i e_iᵀ) on the tensor space.

    K has unit entries exactly at the tensor-diagonal positions i*n+i and
    satisfies K = K² and K vec(I) = vec(I).
    """
    d = np.zeros(n * n)
    d[np.arange(n) * n + np.arange(n)] = 1.0
    return sp.diags(d, format="csr")

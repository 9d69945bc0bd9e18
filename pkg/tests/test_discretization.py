import numpy as np
import pytest
from numpy.testing import assert_allclose

from faultmg import discretization as disc


def brute_force_square_assembly(cells):
    """Independent P1 assembly on the unit square by explicit element loops.

    Triangulates each cell with the bottom-left to top-right diagonal and
    assembles stiffness/mass from the exact element matrices, then
    eliminates boundary nodes.  Quadratic-cost oracle for small meshes.
    """
    h = 1.0 / cells
    npts = cells + 1
    nid = lambda i, j: i * npts + j
    A = np.zeros((npts * npts, npts * npts))
    M = np.zeros_like(A)
    for ci in range(cells):
        for cj in range(cells):
            bl, br = nid(ci, cj), nid(ci + 1, cj)
            tl, tr = nid(ci, cj + 1), nid(ci + 1, cj + 1)
            for tri in ((bl, br, tr), (bl, tr, tl)):
                xs = np.array([divmod(p, npts)[0] * h for p in tri])
                ys = np.array([divmod(p, npts)[1] * h for p in tri])
                area = 0.5 * abs((xs[1] - xs[0]) * (ys[2] - ys[0])
                                 - (xs[2] - xs[0]) * (ys[1] - ys[0]))
                grads = np.zeros((3, 2))
                for k in range(3):
                    o1, o2 = (k + 1) % 3, (k + 2) % 3
                    grads[k] = [(ys[o1] - ys[o2]), (xs[o2] - xs[o1])]
                grads /= 2.0 * area
                for a in range(3):
                    for b in range(3):
                        A[tri[a], tri[b]] += area * grads[a] @ grads[b]
                        M[tri[a], tri[b]] += area / 12.0 * (2.0 if a == b else 1.0)
    interior = [nid(i, j) for i in range(1, cells) for j in range(1, cells)]
    return A[np.ix_(interior, interior)], M[np.ix_(interior, interior)]


def test_1d_hand_assembled_levels():
    h = disc.build_hierarchy(1, 1, 2)
    # coarse: one interior node, h0 = 1/2, A0 = [2/h0] = [4]
    assert h.level(0).n == 1
    assert_allclose(h.level(0).A.toarray(), [[4.0]])
    # fine: tridiag(-1, 2, -1)/h1 with h1 = 1/4
    expect = 4.0 * (np.diag([2.0, 2.0, 2.0]) + np.diag([-1.0, -1.0], 1)
                    + np.diag([-1.0, -1.0], -1))
    assert_allclose(h.level(1).A.toarray(), expect)
    assert_allclose(h.level(1).M.toarray(),
                    (0.25 / 6.0) * (np.diag([4.0, 4.0, 4.0])
                                    + np.diag([1.0, 1.0], 1)
                                    + np.diag([1.0, 1.0], -1)))


def test_2d_interior_five_point_stencil():
    for cells in (4, 8):
        h = disc.build_hierarchy(2, 1, cells)
        A = h.level(1).A
        m = 2 * cells - 1
        center = (m // 2) * m + m // 2
        row = A.getrow(center).toarray().ravel()
        nz = np.sort(row[row != 0.0])
        assert_allclose(nz, [-1.0, -1.0, -1.0, -1.0, 4.0])
        assert row.sum() == 0.0


def test_2d_matches_brute_force_assembly():
    h = disc.build_hierarchy(2, 1, 3)
    A_oracle, M_oracle = brute_force_square_assembly(6)
    assert_allclose(h.level(1).A.toarray(), A_oracle, atol=1e-13)
    assert_allclose(h.level(1).M.toarray(), M_oracle, atol=1e-15)


def test_load_point_mass():
    h = disc.build_hierarchy(1, 1, 4)
    e = disc.assemble_load(h, ("point_mass", 2))
    assert_allclose(e, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        disc.assemble_load(h, ("point_mass", 7))


def test_load_constant_one():
    h1 = disc.build_hierarchy(1, 1, 4)
    assert_allclose(disc.assemble_load(h1, "constant_one"), np.full(7, 1.0 / 8.0))
    h2 = disc.build_hierarchy(2, 1, 4)
    assert_allclose(disc.assemble_load(h2, "constant_one"), np.full(49, 1.0 / 64.0))


def test_prolongation_transpose_identity():
    h = disc.build_hierarchy(2, 2, 2)
    for ell in range(h.L):
        P = h.prolongation(ell)
        R = h.restriction(ell)
        assert (P.T != R).nnz == 0  # R = P^T exactly
        assert_allclose(np.asarray(P.sum(axis=0)).ravel(),
                        np.asarray(P.T.sum(axis=1)).ravel())


@pytest.mark.parametrize("d,coarse", [(1, 2), (1, 3), (2, 2), (2, 4)])
def test_galerkin_identity(d, coarse):
    h = disc.build_hierarchy(d, 2, coarse)
    for ell in range(h.L):
        fine_A = h.level(ell + 1).A
        P = h.prolongation(ell)
        G = h.restriction(ell) @ fine_A @ P
        err = np.abs((G - h.level(ell).A).toarray()).max()
        assert err <= 1e-12 * max(1.0, np.abs(fine_A.data).max())


def test_nested_sizes_and_spd():
    h = disc.build_hierarchy(2, 2, 4)
    ns = [lv.n for lv in h.levels]
    assert ns == sorted(ns) and len(set(ns)) == len(ns)
    for lv in h.levels:
        w = np.linalg.eigvalsh(lv.A.toarray())
        assert w.min() > 0
        wm = np.linalg.eigvalsh(lv.M.toarray())
        assert wm.min() > 0


def test_stiffness_symmetry_exact():
    for d in (1, 2):
        h = disc.build_hierarchy(d, 2, 4)
        for lv in h.levels:
            assert (lv.A != lv.A.T).nnz == 0


def test_stiffness_norm_scaling():
    # log-log slope of ||A_l||_2 vs h within 0.1 of d - 2
    for d, slope_expect in ((1, -1.0), (2, 0.0)):
        h = disc.build_hierarchy(d, 3, 4)
        hs = [lv.h for lv in h.levels]
        norms = [np.linalg.norm(lv.A.toarray(), 2) for lv in h.levels]
        slope = np.polyfit(np.log(hs), np.log(norms), 1)[0]
        assert abs(slope - slope_expect) <= 0.1


def test_mass_condition_uniform():
    for d in (1, 2):
        h = disc.build_hierarchy(d, 3, 4)
        for lv in h.levels:
            w = np.linalg.eigvalsh(lv.M.toarray())
            # eigenvalues within constant multiples of h^d, so the
            # condition number is bounded uniformly across levels
            assert 0.05 * lv.h ** d <= w.min() and w.max() <= 2.0 * lv.h ** d
            assert w.max() / w.min() <= 5.0


def test_green_norm_scalar_case():
    h = disc.build_hierarchy(1, 1, 2)
    assert_allclose(disc.green_norm_diagnostic(h, 0), 1.0 / 4.0)


def test_green_norm_growth_1d():
    # columns of A^{-1} have bounded L2 function norm; coefficient norms
    # then grow like h^{-d/2}, i.e. ratio sqrt(2) per refinement in 1d
    h = disc.build_hierarchy(1, 3, 16)  # n = 15, 31, 63, 127
    vals = [disc.green_norm_diagnostic(h, ell) for ell in range(4)]
    ratios = [vals[i + 1] / vals[i] for i in range(3)]
    for r in ratios:
        assert abs(r - np.sqrt(2.0)) <= 0.2 * np.sqrt(2.0)


def test_green_norm_growth_2d():
    h = disc.build_hierarchy(2, 2, 8)  # n = 49, 225, 961
    vals = [disc.green_norm_diagnostic(h, ell) for ell in range(3)]
    ratios = [vals[i + 1] / vals[i] for i in range(2)]
    for r in ratios:
        assert abs(r - 2.0) <= 0.25 * 2.0


def test_green_norm_size_guard():
    h = disc.build_hierarchy(1, 1, 4)
    with pytest.raises(ValueError, match="[Ss]ubsample"):
        disc.green_norm_diagnostic(h, 1, dense_cap=2)


def test_build_validation_errors():
    with pytest.raises(ValueError):
        disc.build_hierarchy(3, 1, 4)
    with pytest.raises(ValueError):
        disc.build_hierarchy(1, 0, 4)
    with pytest.raises(ValueError):
        disc.build_hierarchy(2, 1, 1)
    with pytest.raises(ValueError, match="cap"):
        disc.build_hierarchy(2, 10, 4, memory_cap=10_000)


def test_matrix_market_roundtrip(tmp_path):
    from scipy.io import mmread
    h = disc.build_hierarchy(2, 1, 3)
    files = disc.export_matrix_market(h, tmp_path)
    assert len(files) == 3  # A_0, P_0, A_1
    A1 = mmread(tmp_path / "A_1.mtx").tocsr()
    assert np.abs((A1 - h.level(1).A).toarray()).max() == 0.0
    P0 = mmread(tmp_path / "P_0.mtx").tocsr()
    assert np.abs((P0 - h.prolongation(0)).toarray()).max() == 0.0

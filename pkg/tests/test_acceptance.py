"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s`.  The 2d sweeps share
hierarchies through a session fixture; the whole suite is sized to finish
well inside its runtime budgets on a desktop machine.
"""

import numpy as np
import pytest

from faultmg import CycleConfig, apply_error_operator, build_hierarchy, mg_iterate, solve
from faultmg import analysis, faults as flt
from faultmg.discretization import assemble_load
from faultmg.linalg import hadamard_power

# 2d experiment protocol: two-grid V(1,1) with the classical 2d Jacobi
# damping 4/5; fine meshes of 46, 128 and 320 cells per side.
CFG_2D = CycleConfig(nu1=1, nu2=1, theta=0.8)
SWEEP_CELLS = (46, 128, 320)            # n = 2025, 16129, 101761
BASE_Q = (0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32)


def componentwise(q, protect=()):
    return flt.FaultSiteConfig.uniform(flt.FaultSpec.componentwise(q),
                                       protect=protect)


@pytest.fixture(scope="session")
def sweep_hierarchies():
    hiers = {}
    for cells in SWEEP_CELLS:
        h = build_hierarchy(2, 1, cells // 2)
        h.exact_solver(0)
        hiers[cells] = h
    return hiers


def lyapunov_cell(h, q, protect=(), chains=4, steps=400, burn_in=50, salt=0):
    n = h.level(h.L).n
    if q == 0.0:
        def s0(v, rng):
            return apply_error_operator(h, h.L, v, CFG_2D, None, rng)
        return analysis.lyapunov_estimate(s0, n, steps=300, chains=1,
                                          burn_in=50,
                                          rng=flt.make_generator(1, n))
    fc = componentwise(q, protect=protect)

    def sampler(v, rng):
        return apply_error_operator(h, h.L, v, CFG_2D, fc, rng)

    return analysis.lyapunov_estimate(
        sampler, n, steps=steps, chains=chains, burn_in=burn_in,
        rng=flt.make_generator(2, n, int(q * 1e9), len(protect), salt))


def test_criterion_1_faultfree_baseline(sweep_hierarchies):
    counts = {}
    for cells, h in sweep_hierarchies.items():
        b = assemble_load(h, "constant_one")
        _, trace = solve(h, b, CFG_2D, None, tol_rel=1e-3, max_iter=30)
        assert trace.converged
        counts[h.level(1).n] = trace.iterations
    assert all(it <= 9 for it in counts.values())
    assert max(counts.values()) - min(counts.values()) <= 1
    print(f"\nACCEPTANCE 1 (fault-free baseline): PASS — iterations {counts} "
          "to relative residual 1e-3")


def test_criterion_2_replica_inequality():
    checked = 0
    worst = np.inf
    for coarse in (4, 8):  # 1d two-grid pairs (3, 7) and (7, 15)
        h = build_hierarchy(1, 1, coarse)
        n = h.level(1).n
        for q in (0.05, 0.2, 0.4):
            for nus in ((1, 1), (2, 1)):
                for protect in ((), ("P",)):
                    cfg = CycleConfig(nu1=nus[0], nu2=nus[1])
                    fc = componentwise(q, protect=protect)
                    model = analysis.second_moment_assemble(h, cfg, fc)
                    bound = analysis.replica_bound(model)

                    def sampler(v, rng):
                        return apply_error_operator(h, 1, v, cfg, fc, rng)

                    est = analysis.lyapunov_estimate(
                        sampler, n, steps=1500, chains=6, burn_in=100,
                        rng=flt.make_generator(20, n, int(q * 1e9),
                                               nus[0], len(protect)))
                    margin = bound + 3.0 * est.stderr - est.rho
                    worst = min(worst, margin)
                    assert est.rho <= bound + 3.0 * est.stderr, (
                        n, q, nus, protect, est.rho, bound)
                    checked += 1
    assert checked >= 20
    print(f"\nACCEPTANCE 2 (replica inequality): PASS — {checked} instances, "
          f"worst margin {worst:.4f}")


def test_criterion_3_second_moment_oracle():
    h = build_hierarchy(1, 1, 2)  # n = 3
    cfg = CycleConfig(nu1=1, nu2=1)
    errs = []
    for q in (0.25, 0.5):
        fc = componentwise(q)
        model = analysis.second_moment_assemble(h, cfg, fc)
        oracle = analysis.enumerate_second_moment(h, cfg, fc)
        err = np.abs(model.assembled - oracle).max()
        errs.append(err)
        assert err <= 1e-12
    print(f"\nACCEPTANCE 3 (second-moment oracle): PASS — max entrywise "
          f"errors {[f'{e:.2e}' for e in errs]} vs 8192-pattern enumeration")


def test_criterion_4_non_resilience_scaling(sweep_hierarchies):
    fit_rows = []
    divergent = {}
    for cells in SWEEP_CELLS:
        h = sweep_hierarchies[cells]
        n = h.level(1).n
        rho0 = lyapunov_cell(h, 0.0).rho
        divergent[n] = False
        for q in BASE_Q:
            est = lyapunov_cell(h, q)
            fit_rows.append((n, q, est.rho, rho0))
            if est.rho > 1.0:
                divergent[n] = True
    # (a) every size leaves the convergent regime inside the rate grid
    assert all(divergent.values()), divergent

    # (b) fitted size exponent of the degradation near 1/2
    fit = analysis.fit_scaling(fit_rows, 2, delta_min=0.05)
    assert fit.verdict == "pass", fit
    assert abs(fit.exponent_n - 0.5) <= 0.15

    # (c) inside the divergent region, cells sharing q sqrt(n) agree
    spreads = []
    for level, cells_used in ((14.2, SWEEP_CELLS), (20.0, SWEEP_CELLS[1:])):
        rhos = []
        for cells in cells_used:
            h = sweep_hierarchies[cells]
            n = h.level(1).n
            q = level / np.sqrt(n)
            est = lyapunov_cell(h, q)
            assert est.rho > 1.0, (level, n, est.rho)
            rhos.append(est.rho)
        spread = (max(rhos) - min(rhos)) / min(rhos)
        spreads.append(spread)
        assert spread <= 0.10, (level, rhos)
    print(f"\nACCEPTANCE 4 (non-resilience scaling): PASS — divergence at "
          f"every size, n-exponent {fit.exponent_n:.3f}, contour spreads "
          f"{[f'{s:.1%}' for s in spreads]}")


def test_criterion_5_protected_prolongation(sweep_hierarchies):
    by_q = {}
    for cells in SWEEP_CELLS:
        h = sweep_hierarchies[cells]
        for q in BASE_Q + (0.4, 0.5):
            est = lyapunov_cell(h, q, protect=("P",))
            assert est.rho < 1.0, (cells, q, est.rho)
            by_q.setdefault(q, []).append(est.rho)
    worst_spread = max(max(v) - min(v) for v in by_q.values())
    assert worst_spread <= 0.05
    worst_rho = max(max(v) for v in by_q.values())
    print(f"\nACCEPTANCE 5 (protected prolongation): PASS — max rho "
          f"{worst_rho:.3f} at q=0.5, max size spread {worst_spread:.4f}")


def test_criterion_6_smoother_bound():
    from faultmg.solver import smooth
    h = build_hierarchy(1, 1, 16)  # n = 31
    lv = h.level(1)
    cfg = CycleConfig(theta=2.0 / 3.0)
    A = lv.A.toarray()
    NA = (cfg.theta * lv.inv_diag)[:, None] * A
    gamma = np.linalg.norm(np.eye(31) - NA, 2)
    na_norm = np.linalg.norm(NA, 2)
    zero = np.zeros(31)

    for q in (0.02, 0.05, 0.1):
        spec = flt.FaultSpec.componentwise(q)

        def sampler(v, rng):
            return smooth(lv, zero, v, cfg, spec, rng)

        est = analysis.lyapunov_estimate(sampler, 31, steps=2000, chains=4,
                                         burn_in=100,
                                         rng=flt.make_generator(6, int(q * 1e9)))
        bound = analysis.smoother_bound(gamma, na_norm, q)
        assert est.rho <= bound, (q, est.rho, bound)

    # The closed-form threshold (1 - gamma)/(1 + 3 gamma) must locate the
    # rate at which the bound stops certifying convergence to within one
    # step of a factor-2 rate grid.
    q_grid = [1e-4 * 2 ** k for k in range(10)]
    crossing = next(i for i, q in enumerate(q_grid)
                    if analysis.smoother_bound(gamma, na_norm, q) >= 1.0)
    q_star = analysis.smoother_fault_threshold(gamma)
    predicted = next(i for i, q in enumerate(q_grid) if q >= q_star)
    assert abs(crossing - predicted) <= 1, (crossing, predicted, q_star)
    print(f"\nACCEPTANCE 6 (smoother bound): PASS — bound dominates at "
          f"q in (0.02, 0.05, 0.1); bound crossing at grid step {crossing}, "
          f"threshold formula q*={q_star:.2e} at step {predicted}")


def test_criterion_7_hadamard_estimate_suite():
    rng = np.random.default_rng(2024)
    worst1 = worst2 = np.inf
    for _ in range(200):
        n, m = rng.integers(2, 9, size=2)
        Z = rng.standard_normal((n, m)) * rng.uniform(0.1, 10.0)
        lhs = np.linalg.norm(hadamard_power(Z, 2), 2)
        mid = np.linalg.norm(Z, axis=0).max() * np.linalg.norm(Z, axis=1).max()
        rhs = np.linalg.norm(Z, 2) ** 2
        tol = 1e-12 * max(1.0, rhs)
        worst1 = min(worst1, mid - lhs)
        worst2 = min(worst2, rhs - mid)
        assert lhs <= mid + tol
        assert mid <= rhs + tol
    print(f"\nACCEPTANCE 7 (Hadamard estimate): PASS — 200 matrices, "
          f"min slacks {worst1:.3e}, {worst2:.3e}")


def test_criterion_8_term_diagnostics():
    instances = [
        (build_hierarchy(1, 1, 4), 0.2),    # 1d n = 7
        (build_hierarchy(1, 1, 8), 0.2),    # 1d n = 15
        (build_hierarchy(2, 1, 4), 0.2),    # 2d n = 49
    ]
    total = 0
    for h, q in instances:
        model = analysis.second_moment_assemble(h, CycleConfig(), componentwise(q))
        report = analysis.term_diagnostics(model, h)
        assert report.all_hold
        for name, kind, value, bound, slack in report.rows:
            assert slack >= -1e-10 * max(1.0, bound), (name, kind)
            total += 1
    print(f"\nACCEPTANCE 8 (term diagnostics): PASS — {total} energy-norm "
          "inequalities hold on 1d n=7,15 and 2d n=49")


def test_criterion_9_structural_invariants():
    h2 = build_hierarchy(2, 2, 4)
    # Galerkin equality and R = P^T
    for ell in range(h2.L):
        P = h2.prolongation(ell)
        R = h2.restriction(ell)
        assert (P.T != R).nnz == 0
        G = (R @ h2.level(ell + 1).A @ P - h2.level(ell).A).toarray()
        scale = np.abs(h2.level(ell + 1).A.data).max()
        assert np.abs(G).max() <= 1e-12 * scale

    # fault-free reduction of the fault-prone cycle is exact
    h1 = build_hierarchy(1, 2, 2)
    cfg = CycleConfig(nu1=2, nu2=1, gamma=2)
    b = assemble_load(h1, "constant_one")
    x0 = np.zeros(h1.level(2).n)
    plain = mg_iterate(h1, 2, b, x0, cfg, None, None)
    with_faults_off = mg_iterate(h1, 2, b, x0, cfg, componentwise(0.0),
                                 flt.make_generator(0))
    assert np.array_equal(plain, with_faults_off)

    # error-operator linearity under a replayed realization
    fc = componentwise(0.3)
    g = flt.make_generator(40)
    u, v = g.standard_normal(7), g.standard_normal(7)
    lhs = apply_error_operator(h1, 2, 1.5 * u - 2.0 * v, cfg, fc,
                               flt.make_generator(41))
    rhs = (1.5 * apply_error_operator(h1, 2, u, cfg, fc, flt.make_generator(41))
           - 2.0 * apply_error_operator(h1, 2, v, cfg, fc, flt.make_generator(41)))
    assert np.abs(lhs - rhs).max() <= 1e-12

    # coarse-grid correction is an idempotent projection
    h = build_hierarchy(1, 1, 4)
    cfg0 = CycleConfig(nu1=0, nu2=0)
    w = flt.make_generator(42).standard_normal(7)
    once = apply_error_operator(h, 1, w, cfg0)
    twice = apply_error_operator(h, 1, once, cfg0)
    assert np.abs(twice - once).max() <= 1e-12 * max(1.0, np.abs(once).max())

    print("\nACCEPTANCE 9 (structural invariants): PASS — Galerkin, R=P^T, "
          "fault-free reduction, linearity, projection idempotence at 1e-12")

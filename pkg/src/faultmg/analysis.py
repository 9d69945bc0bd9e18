"""Convergence analytics for fault-prone two-grid iterations.

Provides the Monte-Carlo Lyapunov spectral radius estimator, the exact
second-moment model E[E ⊗ E] of the two-grid iteration matrix (assembled
from closed-form mean/variance terms of the per-site fault matrices), the
replica bound sqrt(rho(E[E ⊗ E])) on the Lyapunov radius, closed-form
smoother bounds, the dimension-dependent degradation scaling, and energy
norm diagnostics with Hadamard-power upper bounds for every variance term.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import faults as flt
from .linalg import energy_norm, hadamard_power, spectral_norm, spectral_radius, vec

#: Exhaustive enumeration refuses beyond this many joint fault patterns.
ENUMERATION_CAP = 2 ** 20

#: Refuse to build tensor-space models beyond this many stored entries.
TENSOR_CAP = 10_000_000


@dataclass
class LyapunovEstimate:
    """Point estimate of the Lyapunov spectral radius with chain statistics."""

    rho: float
    stderr: float
    chains: int
    steps_per_chain: int
    burn_in: int
    zero_hits: int
    chain_log_growth: list = field(default_factory=list)
    reliable: bool = True


def lyapunov_estimate(operator_sampler, n, steps=1000, chains=10, burn_in=50,
                      rng=None):
    """Estimate the almost-sure growth rate of products of random operators.

    ``operator_sampler(v, rng)`` must apply one fresh realization to v.
    Each chain renormalizes its vector every step and accumulates the log
    growth factors after burn-in; the estimate is exp of the mean log
    growth, with a standard error from the across-chain spread.  A chain
    hitting an exactly zero vector is restarted (with a fresh burn-in) and
    the event counted; estimates dominated by such events are flagged
    unreliable.
    """
    if chains < 1:
        raise ValueError("need at least one chain")
    if not 0 <= burn_in < steps:
        raise ValueError("need steps > burn_in >= 0")
    if rng is None:
        rng = flt.make_generator(0)
    chain_rngs = rng.spawn(chains)
    zero_hits = 0
    lam = []
    batch_lams = []
    for crng in chain_rngs:
        v = crng.standard_normal(n)
        v /= np.linalg.norm(v)
        warm = 0
        logs = []
        for _ in range(steps):
            w = operator_sampler(v, crng)
            nw = float(np.linalg.norm(w))
            if nw == 0.0 or not np.isfinite(nw):
                zero_hits += 1
                v = crng.standard_normal(n)
                v /= np.linalg.norm(v)
                warm = 0
                continue
            v = w / nw
            warm += 1
            if warm > burn_in:
                logs.append(math.log(nw))
        if logs:
            lam.append(float(np.mean(logs)))
            nb = max(2, min(8, len(logs) // 4))
            batch_lams.extend(float(np.mean(b))
                              for b in np.array_split(logs, nb) if len(b))
    if not lam:
        return LyapunovEstimate(rho=float("nan"), stderr=float("inf"),
                                chains=chains, steps_per_chain=steps,
                                burn_in=burn_in, zero_hits=zero_hits,
                                chain_log_growth=[], reliable=False)
    mean_log = float(np.mean(lam))
    rho = float(np.exp(mean_log))
    spread = lam if len(lam) > 1 else batch_lams
    if len(spread) > 1:
        stderr_log = float(np.std(spread, ddof=1) / np.sqrt(len(spread)))
    else:
        stderr_log = float("inf")
    reliable = zero_hits <= 0.1 * steps * chains and len(lam) == chains
    return LyapunovEstimate(rho=rho, stderr=rho * stderr_log, chains=chains,
                            steps_per_chain=steps, burn_in=burn_in,
                            zero_hits=zero_hits, chain_log_growth=lam,
                            reliable=reliable)


def _dense_operators(hierarchy, cfg, level=None):
    """Dense fine/coarse operators of the top (or given) level pair."""
    ell = hierarchy.L if level is None else level
    if ell < 1:
        raise ValueError("need a level pair")
    fine = hierarchy.level(ell)
    coarse = hierarchy.level(ell - 1)
    A = fine.A.toarray()
    A_C = coarse.A.toarray()
    P = hierarchy.prolongation(ell - 1).toarray()
    R = hierarchy.restriction(ell - 1).toarray()
    NA = (cfg.theta * fine.inv_diag)[:, None] * A
    return A, A_C, P, R, NA


@dataclass
class SecondMomentModel:
    """Closed-form second moment of the fault-prone two-grid operator.

    ``terms`` holds the coarse-grid-correction pieces: mean_sq is
    E[E_CG]^{⊗2} and C_P, C_R, C_rho, C_PR, C_Prho, C_Rrho, C_PRrho, C_S
    the variance contributions; ``assembled`` is E[E ⊗ E] of the full
    cycle, composed over the independent smoothing applications.
    """

    n: int
    nu1: int
    nu2: int
    terms: dict
    cg_second_moment: np.ndarray
    smoother_second_moment: np.ndarray
    assembled: np.ndarray
    mean_cg: np.ndarray
    mean_smoother: np.ndarray
    e_factors: dict
    site_epsilons: dict
    operators: dict
    protected: frozenset


def second_moment_assemble(hierarchy, cfg, site_config, level=None,
                           cap=TENSOR_CAP):
    """Build every closed-form term of E[(E^CG)^{⊗2}] and E[(E^S)^{⊗2}]
    and assemble the two-grid second moment.

    The expansion over the independent per-site fault matrices is
      E[(E^CG)^{⊗2}] = E[E^CG]^{⊗2} + C_P + C_R + C_rho
                       + C_PR + C_Prho + C_Rrho + C_PRrho,
      E[(E^S)^{⊗2}]  = E[E^S]^{⊗2} + C_S,
    with E[E^CG] = E^CG + (1 - e_P e_R e_rho)(I - E^CG) and
    E[E^S] = E^S + (1 - e_S)(I - E^S).  Protected sites have e = 1 and
    zero variance, so every term naming them vanishes identically.
    """
    ell = hierarchy.L if level is None else level
    n = hierarchy.level(ell).n
    n_C = hierarchy.level(ell - 1).n
    if n * n > cap:
        raise ValueError(f"tensor dimension {n*n} above cap {cap}")
    A, A_C, P, R, NA = _dense_operators(hierarchy, cfg, ell)
    PAinv = P @ np.linalg.solve(A_C, np.eye(n_C))
    T = PAinv @ R
    I = np.eye(n)
    E_S = I - NA
    E_CG = I - T @ A

    e = {}
    V = {}
    for site in flt.SITES:
        spec = site_config.effective(site)
        mom = flt.moments(spec)
        e[site] = mom.e
        dim = n_C if site == "R" else n
        V[site] = flt.variance_diagonal(spec, dim)

    def kr(Z, Y=None):
        return np.kron(Z, Z if Y is None else Y)

    def vd(site, M):
        # Var[X] is diagonal on the tensor space: scale rows.
        return V[site][:, None] * M

    TA2 = kr(T @ A)
    PAinv2 = kr(PAinv)
    RA2 = kr(R @ A)
    R2 = kr(R)
    A2 = kr(A)
    T2 = kr(T)
    NA2 = kr(NA)

    terms = {
        "C_P": (e["R"] * e["rho"]) ** 2 * vd("P", TA2),
        "C_R": (e["P"] * e["rho"]) ** 2 * (PAinv2 @ vd("R", RA2)),
        "C_rho": (e["P"] * e["R"]) ** 2 * (T2 @ vd("rho", A2)),
        "C_PR": e["rho"] ** 2 * vd("P", PAinv2 @ vd("R", RA2)),
        "C_Prho": e["R"] ** 2 * vd("P", T2 @ vd("rho", A2)),
        "C_Rrho": e["P"] ** 2 * (PAinv2 @ vd("R", R2 @ vd("rho", A2))),
        "C_PRrho": vd("P", PAinv2 @ vd("R", R2 @ vd("rho", A2))),
        "C_S": vd("S", NA2),
    }

    mean_cg = E_CG + (1.0 - e["P"] * e["R"] * e["rho"]) * (I - E_CG)
    mean_s = E_S + (1.0 - e["S"]) * (I - E_S)
    terms["mean_sq"] = kr(mean_cg)

    cg2 = terms["mean_sq"].copy()
    for name in ("C_P", "C_R", "C_rho", "C_PR", "C_Prho", "C_Rrho", "C_PRrho"):
        cg2 += terms[name]
    s2 = kr(mean_s) + terms["C_S"]

    assembled = cg2
    for _ in range(cfg.nu1):
        assembled = assembled @ s2
    for _ in range(cfg.nu2):
        assembled = s2 @ assembled

    eps = {site: flt.moments(site_config.effective(site)).epsilon
           for site in flt.SITES}
    ops = {"A": A, "A_C": A_C, "P": P, "R": R, "NA": NA, "T": T,
           "PAinv": PAinv, "E_S": E_S, "E_CG": E_CG}
    return SecondMomentModel(
        n=n, nu1=cfg.nu1, nu2=cfg.nu2, terms=terms, cg_second_moment=cg2,
        smoother_second_moment=s2, assembled=assembled, mean_cg=mean_cg,
        mean_smoother=mean_s, e_factors=e, site_epsilons=eps, operators=ops,
        protected=site_config.protected)


def replica_bound(model):
    """sqrt(rho(E[E ⊗ E])): a deterministic upper bound on the Lyapunov
    spectral radius of the fault-prone iteration."""
    Z = model.assembled
    n2 = Z.shape[0]
    if n2 <= 4096:
        radius = spectral_radius(Z)
    else:
        # E[E ⊗ E] preserves vecs of PSD matrices; start in the cone.
        n = model.n
        radius = spectral_radius(Z, dense_cap=0, start=vec(np.eye(n)))
    return float(np.sqrt(radius))


def smoother_bound(E_norm, NA_norm, q):
    """Thm-style bound sqrt((1-q)‖E‖² + q(‖E‖ + ‖NA‖)²) on the Lyapunov
    radius of a fault-prone smoother with componentwise rate q."""
    if E_norm < 0 or NA_norm < 0:
        raise ValueError("norms must be nonnegative")
    return float(np.sqrt((1.0 - q) * E_norm ** 2
                         + q * (E_norm + NA_norm) ** 2))


def smoother_bound_gamma(gamma, q):
    """Corollary form sqrt(gamma² + q(1 + 4 gamma + 3 gamma²)) using only
    the contraction factor gamma = ‖E‖₂ of the fault-free smoother."""
    return float(np.sqrt(gamma ** 2 + q * (1.0 + 4.0 * gamma + 3.0 * gamma ** 2)))


def smoother_fault_threshold(gamma):
    """Largest rate q = (1 - gamma)/(1 + 3 gamma) below which the corollary
    bound still certifies convergence."""
    return float((1.0 - gamma) / (1.0 + 3.0 * gamma))


def theory_scaling(d, n, q):
    """Dimension-dependent degradation functional (without its constant):
    q n^{(4-d)/(2d)} for d < 4, q sqrt(log n) at d = 4, q above."""
    if d not in (1, 2, 3, 4, 5):
        raise ValueError("dimension must be in 1..5")
    if n < 2:
        raise ValueError("n must be at least 2")
    if d < 4:
        return float(q * n ** ((4.0 - d) / (2.0 * d)))
    if d == 4:
        return float(q * np.sqrt(np.log(n)))
    return float(q)


@dataclass
class ScalingFit:
    exponent_n: float
    exponent_q: float
    intercept: float
    residual: float
    n_cells: int
    verdict: str


def fit_scaling(rows, d, delta_min=0.05, tol=0.15):
    """Least-squares fit of log(rho - rho0) = c + a log q + alpha log n.

    ``rows`` are (n, q, rho, rho0) tuples; only cells with degradation
    rho - rho0 >= delta_min enter the fit.  The verdict is "pass" when the
    fitted n-exponent alpha is within ``tol`` of the predicted
    (4 - d)/(2 d), "fail" when not, and "inconclusive" with fewer than six
    usable cells or fewer than two distinct sizes or rates.
    """
    pts = [(n, q, rho - rho0) for (n, q, rho, rho0) in rows
           if q > 0 and np.isfinite(rho) and rho - rho0 >= delta_min]
    if len(pts) < 6 or len({p[0] for p in pts}) < 2 or len({p[1] for p in pts}) < 2:
        return ScalingFit(float("nan"), float("nan"), float("nan"),
                          float("nan"), len(pts), "inconclusive")
    X = np.array([[1.0, math.log(q), math.log(n)] for n, q, _ in pts])
    y = np.array([math.log(delta) for _, _, delta in pts])
    coef, res, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(res[0] / len(pts))) if res.size else 0.0
    predicted = (4.0 - d) / (2.0 * d) if d < 4 else 0.0
    verdict = "pass" if abs(coef[2] - predicted) <= tol else "fail"
    return ScalingFit(exponent_n=float(coef[2]), exponent_q=float(coef[1]),
                      intercept=float(coef[0]), residual=resid,
                      n_cells=len(pts), verdict=verdict)


@dataclass
class TermDiagnostics:
    rows: list            # (term, norm kind, value, bound, slack)
    all_hold: bool

    def to_csv_rows(self):
        return [(t, k, v, b, s) for (t, k, v, b, s) in self.rows]

    def summary(self):
        lines = [f"{t:>10s} |{k:>3s}| value {v:12.5e}  bound {b:12.5e}  "
                 f"slack {s:+.3e}" for (t, k, v, b, s) in self.rows]
        lines.append("all bounds hold" if self.all_hold
                     else "BOUND VIOLATION present")
        return "\n".join(lines)


def term_diagnostics(model, hierarchy=None):
    """Energy norms of every variance term against their Hadamard-power
    upper bounds, plus the double-energy-norm bounds that drive the
    protected-prolongation analysis.

    Each bound multiplies the per-site epsilon (the variance-level bound
    q(1-q) <= q for hard faults) into the corresponding product of
    Hadamard-square norms; slack = bound - value must be nonnegative.
    """
    ops = model.operators
    A, A_C, P, R, T = ops["A"], ops["A_C"], ops["P"], ops["R"], ops["T"]
    NA, PAinv = ops["NA"], ops["PAinv"]
    eps = model.site_epsilons

    def h2norm(Z):
        return spectral_norm(hadamard_power(Z, 2))

    hA = h2norm(A)
    hAC = h2norm(A_C)
    hT = h2norm(T)
    hACinv = h2norm(np.linalg.inv(A_C))
    hACinvR = h2norm(np.linalg.solve(A_C, R))
    hP = h2norm(P)
    hR = h2norm(R)
    hNA = h2norm(NA)

    a_bounds = {
        "C_P": np.sqrt(hA) * np.sqrt(hT) * eps["P"],
        "C_R": np.sqrt(hAC) * np.sqrt(hACinv) * eps["R"],
        "C_rho": np.sqrt(hT) * np.sqrt(hA) * eps["rho"],
        "C_PR": np.sqrt(hA) * np.sqrt(hAC) * hACinvR * eps["P"] * eps["R"],
        "C_Prho": hA * hT * eps["P"] * eps["rho"],
        "C_Rrho": hP * hR * np.sqrt(hA) * np.sqrt(hACinv) * eps["R"] * eps["rho"],
        "C_PRrho": hP ** 2 * hA * hACinvR * eps["P"] * eps["R"] * eps["rho"],
        "C_S": hNA * eps["S"],
    }

    rows = []
    for name, bound in a_bounds.items():
        value = energy_norm(model.terms[name], A, kind="A")
        rows.append((name, "A", value, float(bound), float(bound - value)))

    # Double-energy-norm bounds: these are the h-uniform estimates that
    # make the protected-prolongation iteration resilient.
    nACRA = spectral_norm(np.linalg.solve(A_C, R @ A))
    nTA = spectral_norm(T @ A)
    nR = spectral_norm(R)
    nNA = spectral_norm(NA)
    a2_bounds = {
        "C_R": eps["R"] * nACRA ** 2 * nR ** 2,
        "C_rho": eps["rho"] * nTA ** 2,
        "C_Rrho": eps["R"] * eps["rho"] * nACRA ** 2 * nR ** 2,
        "C_S": eps["S"] * nNA ** 2,
    }
    for name, bound in a2_bounds.items():
        value = energy_norm(model.terms[name], A, kind="A2")
        rows.append((name, "A2", value, float(bound), float(bound - value)))

    all_hold = all(s >= -1e-10 * max(1.0, b) for (_, _, _, b, s) in rows)
    return TermDiagnostics(rows=rows, all_hold=all_hold)


def _smoother_realizations(spec, n, nu):
    """Realization lists for nu independent smoothing applications."""
    return [flt.enumerate_realizations(spec, n) for _ in range(nu)]


def enumerate_second_moment(hierarchy, cfg, site_config, level=None,
                            cap=ENUMERATION_CAP):
    """Exhaustive probability-weighted E[E ⊗ E] of the two-grid operator.

    Enumerates every joint hard-fault pattern across the nu1 + nu2
    smoothing applications and the residual/restriction/prolongation
    sites.  Silent sites enumerate their Bernoulli indicators and take the
    amplitude moments exactly (the operator is affine in each amplitude,
    which appears with mean zero and second moment amplitude²/3).
    Independent of the closed-form assembly path.
    """
    ell = hierarchy.L if level is None else level
    n = hierarchy.level(ell).n
    n_C = hierarchy.level(ell - 1).n
    A, A_C, P, R, NA = _dense_operators(hierarchy, cfg, ell)
    PAinv = P @ np.linalg.solve(A_C, np.eye(n_C))
    I = np.eye(n)

    def site_patterns(site):
        spec = site_config.effective(site)
        dim = n_C if site == "R" else n
        if spec.kind == "silent":
            pats = flt.enumerate_chi_patterns(spec, dim)
            return [(p, ("silent", chi, spec.amplitude)) for p, chi in pats]
        return [(p, ("hard", diag, 0.0)) for p, diag in
                flt.enumerate_realizations(spec, dim)]

    draws = (
        [("S", n)] * cfg.nu1
        + [("rho", n), ("R", n_C), ("P", n)]
        + [("S", n)] * cfg.nu2
    )
    pattern_lists = [site_patterns(site) for site, _ in draws]
    total = 1
    for pl in pattern_lists:
        total *= len(pl)
    if total > cap:
        raise ValueError(f"{total} joint fault patterns exceed cap {cap}")

    def cycle_matrix(diags):
        """Dense E for fixed per-draw diagonals, mirroring the cycle."""
        k = 0
        E = I.copy()
        for _ in range(cfg.nu1):
            E = (I - diags[k][:, None] * NA) @ E
            k += 1
        X_rho = diags[k]; k += 1
        X_R = diags[k]; k += 1
        X_P = diags[k]; k += 1
        mid = I - X_P[:, None] * (PAinv @ (X_R[:, None] * (R @ (X_rho[:, None] * A))))
        E = mid @ E
        for _ in range(cfg.nu2):
            E = (I - diags[k][:, None] * NA) @ E
            k += 1
        return E

    out = np.zeros((n * n, n * n))
    for combo in itertools.product(*pattern_lists):
        prob = 1.0
        silent_slots = []
        diags = []
        for slot, (p, (kind, data, amp)) in enumerate(combo):
            prob *= p
            if kind == "silent":
                silent_slots.append((slot, data, amp))
                diags.append(1.0 + 0.0 * data)  # amplitude zero baseline
            else:
                diags.append(data)
        E0 = cycle_matrix(diags)
        acc = np.kron(E0, E0)
        # Second-order amplitude contributions: E is affine in each silent
        # amplitude entry, with mean zero and second moment amp^2/3.
        for slot, chi, amp in silent_slots:
            if amp == 0.0:
                continue
            active = np.nonzero(chi)[0]
            for i in active:
                bumped = list(diags)
                d = diags[slot].copy()
                d[i] += 1.0
                bumped[slot] = d
                G = cycle_matrix(bumped) - E0
                acc += (amp ** 2 / 3.0) * np.kron(G, G)
        out += prob * acc
    return out

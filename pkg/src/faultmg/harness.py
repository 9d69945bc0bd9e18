"""Experiment harness: configs, sweeps, seeds, CSV emission.

Every mode writes a long-format CSV whose first lines are comments with
the config hash and seed; identical config and seed give byte-identical
output.  Sizes are given as refinement-level counts: size s means the base
coarse mesh refined s times, of which the cycle uses the top
``cycle.levels`` grids (two-grid for levels=1).  Each sweep cell derives
its random stream from (seed, n, q), so scheduling order cannot change
results.
"""

import hashlib
import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import analysis, faults as flt, solver
from .discretization import build_hierarchy, export_matrix_market

MODES = ("residual_history", "lyapunov_sweep", "scaling_check",
         "term_diagnostics", "assumption_constants")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "residual_history"
    d: int = 2
    coarse_cells: int = 2
    sizes: tuple = (4,)
    q_grid: tuple = (0.0,)
    cycle: solver.CycleConfig = field(default_factory=solver.CycleConfig)
    faults: flt.FaultSiteConfig = field(
        default_factory=lambda: flt.FaultSiteConfig.uniform(
            flt.FaultSpec.componentwise(0.0)))
    seed: int = 0
    out: str = "out.csv"
    chains: int = 10
    steps: int = 1000
    burn_in: int = 50
    tol_rel: float = 1e-3
    max_iter: int = 50
    delta_min: float = 0.05
    figures: bool = True
    fail_on_divergence: bool = False
    export_mm: str = ""

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if not self.sizes:
            raise ConfigError("size grid is empty")
        if not self.q_grid:
            raise ConfigError("q grid is empty")
        if any(s < self.cycle.levels for s in self.sizes):
            raise ConfigError("every size must be at least cycle.levels")
        if any(not 0.0 <= q <= 1.0 for q in self.q_grid):
            raise ConfigError("q values must lie in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.steps <= self.burn_in:
            raise ConfigError("need steps > burn_in")
        return self

    def canonical_text(self):
        d = {
            "mode": self.mode, "d": str(self.d),
            "coarse_cells": str(self.coarse_cells),
            "sizes": ",".join(str(s) for s in self.sizes),
            "q": ",".join(repr(q) for q in self.q_grid),
            "nu1": str(self.cycle.nu1), "nu2": str(self.cycle.nu2),
            "gamma": str(self.cycle.gamma), "theta": repr(self.cycle.theta),
            "levels": str(self.cycle.levels),
            "seed": str(self.seed), "chains": str(self.chains),
            "steps": str(self.steps), "burn_in": str(self.burn_in),
            "tol_rel": repr(self.tol_rel), "max_iter": str(self.max_iter),
            "delta_min": repr(self.delta_min),
        }
        d.update(self.faults.to_config_dict())
        return "\n".join(f"{k} = {v}" for k, v in sorted(d.items()))

    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


def parse_config_text(text):
    """Parse the key = value config format; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _parse_list(val, conv):
    return tuple(conv(tok) for tok in str(val).split(",") if tok.strip())


def config_from_dict(d):
    cycle = solver.CycleConfig(
        nu1=int(d.get("nu1", 1)), nu2=int(d.get("nu2", 1)),
        gamma=int(d.get("gamma", 1)), theta=float(d.get("theta", 2.0 / 3.0)),
        levels=int(d.get("levels", 1)))
    # the sweep grid key "q" is not a site rate; per-cell rates are
    # substituted into the site specs by with_rate
    site_d = {k: v for k, v in d.items() if k != "q"}
    site_d.setdefault("fault_kind", "componentwise")
    fconf = flt.FaultSiteConfig.from_config_dict(site_d)
    cfg = ExperimentConfig(
        mode=d.get("mode", "residual_history"),
        d=int(d.get("d", 2)),
        coarse_cells=int(d.get("coarse_cells", 2)),
        sizes=_parse_list(d.get("sizes", "4"), int),
        q_grid=_parse_list(d.get("q", "0.0"), float),
        cycle=cycle, faults=fconf,
        seed=int(d.get("seed", 0)),
        out=d.get("out", "out.csv"),
        chains=int(d.get("chains", 10)),
        steps=int(d.get("steps", 1000)),
        burn_in=int(d.get("burn_in", 50)),
        tol_rel=float(d.get("tol_rel", 1e-3)),
        max_iter=int(d.get("max_iter", 50)),
        delta_min=float(d.get("delta_min", 0.05)),
        figures=d.get("figures", "true").lower() not in ("false", "0", "no"),
        fail_on_divergence=d.get("fail_on_divergence", "false").lower()
        in ("true", "1", "yes"),
        export_mm=d.get("export_mm", ""),
    )
    return cfg.validate()


def load_config(path, overrides=None):
    with open(path) as fh:
        d = parse_config_text(fh.read())
    if overrides:
        d.update(overrides)
    return config_from_dict(d)


def build_problem(config, size):
    """Hierarchy for one size entry: cycle.levels grids whose finest mesh
    is the base coarse mesh refined ``size`` times."""
    L = config.cycle.levels
    coarse = config.coarse_cells * 2 ** (size - L)
    return build_hierarchy(config.d, L, coarse)


def cell_rng(config, n, q):
    return flt.make_generator(config.seed, n, flt._q_key(q))


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows, config, extra_comments=()):
    buf = io.StringIO()
    buf.write(f"# faultmg mode={config.mode}\n")
    buf.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
    for line in extra_comments:
        buf.write(f"# {line}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    data = buf.getvalue()
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(data)
    return data


@dataclass
class SweepResult:
    header: list
    rows: list
    comments: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    csv_text: str = ""
    any_divergence: bool = False


def run_residual_history(config):
    """Residual norms per iteration for each (n, q) cell."""
    config.validate()
    rows = []
    comments = []
    any_div = False
    for size in config.sizes:
        try:
            hier = build_problem(config, size)
        except ValueError as exc:
            comments.append(f"warning: size {size} skipped: {exc}")
            continue
        n = hier.level(hier.L).n
        from .discretization import assemble_load
        b = assemble_load(hier, "constant_one")
        for q in config.q_grid:
            rng = cell_rng(config, n, q)
            fconf = config.faults.with_rate(q)
            _, trace = solver.solve(hier, b, config.cycle, fconf,
                                    tol_rel=config.tol_rel,
                                    max_iter=config.max_iter, rng=rng)
            any_div = any_div or trace.diverged
            for it, res in trace.to_csv_rows():
                rows.append((n, q, it, res, config.seed))
            if trace.diverged:
                comments.append(f"diverged: n={n} q={q}")
    result = SweepResult(header=["n", "q", "iteration", "residual_norm", "seed"],
                         rows=rows, comments=comments, any_divergence=any_div)
    result.csv_text = write_csv(config.out, result.header, rows, config,
                                comments)
    return result


def _sweep_cells(config, q_values=None):
    """Yield (hierarchy, n, q) over the size x q grid, reusing hierarchies."""
    qs = config.q_grid if q_values is None else q_values
    for size in config.sizes:
        hier = build_problem(config, size)
        n = hier.level(hier.L).n
        for q in qs:
            yield hier, n, q


def estimate_cell(config, hier, q):
    """Lyapunov estimate of the fault-prone cycle at rate q on a hierarchy."""
    n = hier.level(hier.L).n
    rng = cell_rng(config, n, q)
    fconf = config.faults.with_rate(q)
    if fconf.all_none or q == 0.0:
        chains, steps = 1, min(config.steps, 400)
    else:
        chains, steps = config.chains, config.steps
    burn = min(config.burn_in, steps - 1)

    def sampler(v, crng):
        return solver.apply_error_operator(hier, hier.L, v, config.cycle,
                                           fconf, crng)

    return analysis.lyapunov_estimate(sampler, n, steps=steps, chains=chains,
                                      burn_in=burn, rng=rng)


def run_lyapunov_sweep(config):
    """Lyapunov spectral radius estimate per (n, q) cell, contour-ready."""
    config.validate()
    rows = []
    for hier, n, q in _sweep_cells(config):
        est = estimate_cell(config, hier, q)
        rows.append((n, q, est.rho, est.stderr, est.chains,
                     est.steps_per_chain, est.burn_in, est.zero_hits,
                     int(est.reliable), config.seed))
    result = SweepResult(
        header=["n", "q", "rho", "stderr", "chains", "steps", "burn_in",
                "zero_hits", "reliable", "seed"],
        rows=rows)
    result.csv_text = write_csv(config.out, result.header, rows, config)
    return result


def run_scaling_check(config):
    """Fit the measured degradation against the predicted size scaling."""
    config.validate()
    if len(config.sizes) < 3 or len([q for q in config.q_grid if q > 0]) < 3:
        raise ConfigError("scaling check needs at least 3 sizes and 3 rates")
    rows = []
    fit_rows = []
    for size in config.sizes:
        hier = build_problem(config, size)
        n = hier.level(hier.L).n
        rho0 = estimate_cell(config, hier, 0.0).rho
        for q in config.q_grid:
            if q == 0.0:
                continue
            est = estimate_cell(config, hier, q)
            rows.append((n, q, est.rho, est.stderr, rho0,
                         analysis.theory_scaling(config.d, n, q), config.seed))
            fit_rows.append((n, q, est.rho, rho0))
    fit = analysis.fit_scaling(fit_rows, config.d, delta_min=config.delta_min)
    comments = [
        f"fit exponent_n={fit.exponent_n!r} exponent_q={fit.exponent_q!r}",
        f"fit residual={fit.residual!r} cells={fit.n_cells} verdict={fit.verdict}",
    ]
    result = SweepResult(
        header=["n", "q", "rho", "stderr", "rho0", "theory_scaling", "seed"],
        rows=rows, comments=comments, verdicts={"fit": fit})
    result.csv_text = write_csv(config.out, result.header, rows, config,
                                comments)
    return result


def run_assumption_constants(config):
    """Tabulate smoothing/approximation/prolongation constants per level."""
    config.validate()
    rows = []
    size = max(config.sizes)
    L = max(config.cycle.levels, min(size, 3))
    coarse = config.coarse_cells * 2 ** (size - L)
    hier = build_hierarchy(config.d, L, coarse)
    theta = config.cycle.theta
    for ell in range(1, hier.L + 1):
        lv = hier.level(ell)
        A = lv.A.toarray()
        NA = (theta * lv.inv_diag)[:, None] * A
        E_S = np.eye(lv.n) - NA
        normA = analysis.spectral_norm(A)
        Epow = np.eye(lv.n)
        for nu in range(1, 7):
            Epow = Epow @ E_S
            rows.append((ell, lv.n, f"eta({nu})",
                         analysis.spectral_norm(A @ Epow) / normA))
            rows.append((ell, lv.n, f"C_S({nu})",
                         analysis.spectral_norm(Epow)))
        A_C = hier.level(ell - 1).A.toarray()
        P = hier.prolongation(ell - 1).toarray()
        R = hier.restriction(ell - 1).toarray()
        E_CG = np.eye(lv.n) - P @ np.linalg.solve(A_C, R @ A)
        C_A = analysis.spectral_norm(E_CG @ np.linalg.inv(A)) * normA
        rows.append((ell, lv.n, "C_A", C_A))
        svals = np.linalg.svd(P, compute_uv=False)
        rows.append((ell, lv.n, "Cp_upper", float(svals[0])))
        rows.append((ell, lv.n, "Cp_lower", float(1.0 / svals[-1])))
    result = SweepResult(header=["level", "n", "constant", "value"], rows=rows)
    result.csv_text = write_csv(config.out, result.header, rows, config)
    return result


def run_term_diagnostics(config):
    """Energy-norm diagnostics of the second-moment terms at each size."""
    config.validate()
    rows = []
    summaries = []
    all_hold = True
    for size in config.sizes:
        hier = build_problem(config, size)
        n = hier.level(hier.L).n
        for q in config.q_grid:
            fconf = config.faults.with_rate(q)
            model = analysis.second_moment_assemble(hier, config.cycle, fconf)
            report = analysis.term_diagnostics(model, hier)
            all_hold = all_hold and report.all_hold
            summaries.append(f"n={n} q={q}:")
            summaries.extend(report.summary().splitlines())
            for term, kind, value, bound, slack in report.to_csv_rows():
                rows.append((n, q, term, kind, value, bound, slack))
    result = SweepResult(
        header=["n", "q", "term", "norm", "value", "bound", "slack"],
        rows=rows, comments=summaries, verdicts={"all_hold": all_hold})
    result.csv_text = write_csv(config.out, result.header, rows, config,
                                [f"all_bounds_hold={all_hold}"])
    return result


RUNNERS = {
    "residual_history": run_residual_history,
    "lyapunov_sweep": run_lyapunov_sweep,
    "scaling_check": run_scaling_check,
    "term_diagnostics": run_term_diagnostics,
    "assumption_constants": run_assumption_constants,
}


def run(config):
    config.validate()
    result = RUNNERS[config.mode](config)
    if config.export_mm:
        hier = build_problem(config, max(config.sizes))
        export_matrix_market(hier, config.export_mm)
    if config.figures and config.out:
        from . import plots
        plots.render(config, result)
    return result

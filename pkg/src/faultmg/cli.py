"""Command-line front end.

    faultmg --mode lyapunov_sweep --sizes 4,6 --q 0.0,0.1,0.2 --seed 7 \
            --out sweep.csv

Options on the command line override the config file.  Exit codes: 0 on
success, 1 when fail_on_divergence is set and a run diverged, 2 on
configuration/validation errors.
"""

import argparse
import sys

from . import harness


def build_parser():
    p = argparse.ArgumentParser(
        prog="faultmg",
        description="Fault-prone two-grid/multigrid experiment harness")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--mode", choices=harness.MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV path (figure lands next to it)")
    p.add_argument("--q", help="comma-separated fault rates")
    p.add_argument("--sizes", help="comma-separated refinement level counts")
    p.add_argument("--d", type=int, choices=(1, 2))
    p.add_argument("--coarse-cells", type=int, dest="coarse_cells")
    p.add_argument("--protect", help="comma-separated protected sites (S,rho,R,P)")
    p.add_argument("--chains", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering the PNG next to the CSV")
    p.add_argument("--export-mm", dest="export_mm",
                   help="directory for Matrix Market dumps of A_l and P")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    for key in ("mode", "seed", "out", "q", "sizes", "d", "coarse_cells",
                "protect", "chains", "steps", "export_mm"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = str(val)
    if args.no_figures:
        overrides["figures"] = "false"
    try:
        if args.config:
            config = harness.load_config(args.config, overrides)
        else:
            config = harness.config_from_dict(overrides)
    except (harness.ConfigError, ValueError, OSError) as exc:
        print(f"faultmg: error: {exc}", file=sys.stderr)
        return 2
    result = harness.run(config)
    for line in result.comments:
        print(line)
    for name, verdict in result.verdicts.items():
        print(f"{name}: {verdict}")
    print(f"wrote {config.out}")
    if config.fail_on_divergence and result.any_divergence:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``abc-optimal`` command-line driver.

Exit status: 0 on success, 1 when a tolerance or invariant check fails (or
a run stalls), 2 on usage errors.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import smc
from .efficiency import improvement_surface, surface_grid, surface_to_csv
from .errors import ABCOptimalError, StallError, UsageError
from .scenarios import SCENARIOS, TABLE_SCHEMES, compare_to_reference, compute_row, get_scenario
from .verify import run_invariants

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TABLE_HEADER = ("case", "scheme", "A", "B", "omega", "est_error")
CURVE_HEADER = ("theta", "posterior", "kde", "q0", "q_bounded", "q_optimal")
CURVE_SCHEMES = ("beaumont_kde", "geometric_mean", "bounded", "optimal")


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def _fmt(x):
    return repr(float(x))


def cmd_table1(args):
    cases = ("I", "II", "III") if args.case == "all" else (args.case,)
    rows = []
    for case in cases:
        scenario = get_scenario(case)
        for scheme in TABLE_SCHEMES:
            try:
                _, report = compute_row(scenario, scheme)
            except ABCOptimalError as exc:
                print(f"error: case {case}, scheme {scheme}: {exc}", file=sys.stderr)
                return EXIT_FAIL
            rows.append((case, scheme, report))

    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for case, scheme, r in rows:
            writer.writerow([case, scheme, _fmt(r.A), _fmt(r.B), _fmt(r.omega), _fmt(r.est_error)])
    finally:
        if close:
            out.close()

    cells = compare_to_reference(rows)
    report = sys.stderr if out is sys.stdout else sys.stdout
    print(f"{'case':<4} {'scheme':<15} {'col':<5} {'computed':>10} {'published':>9} "
          f"{'diff':>8} {'tol':>6}", file=report)
    for case, scheme, column, value, published, tol, ok in cells:
        flag = "" if ok else "  <-- exceeds tolerance"
        print(f"{case:<4} {scheme:<15} {column:<5} {value:>10.4f} {published:>9.2f} "
              f"{value - published:>+8.4f} {tol:>6.3f}{flag}", file=report)
    bad = [c for c in cells if not c[-1]]
    print(f"{len(cells) - len(bad)}/{len(cells)} cells within tolerance", file=report)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_curves(args):
    scenario = get_scenario(args.case)
    lo, hi = scenario.functional_domain
    if not (lo <= args.lo < args.hi <= hi):
        raise UsageError(f"grid [{args.lo}, {args.hi}] must lie inside case {args.case}'s "
                         f"functional domain [{lo}, {hi}]")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    grid = np.linspace(args.lo, args.hi, args.n)
    columns = [scenario.posterior.pdf(grid)]
    for scheme in CURVE_SCHEMES:
        columns.append(scenario.proposal(scheme).density.pdf(grid))
    out, close = _open_out(args.out)
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for i, theta in enumerate(grid):
            writer.writerow([_fmt(theta)] + [_fmt(c[i]) for c in columns])
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_surface(args):
    if args.ndim < 1:
        raise UsageError("--ndim must be a positive integer")
    reference = {"posterior": "posterior", "kde": "beaumont_kde"}[args.ref]
    grid = surface_grid(args.ndim, tuple(args.mu_range), tuple(args.sigma_range),
                        args.n_mu, args.n_sigma)
    rows = improvement_surface(grid, "geometric_mean", reference)
    out, close = _open_out(args.out)
    try:
        surface_to_csv(rows, out)
    finally:
        if close:
            out.close()
    below = sum(1 for r in rows if r.admissible and r.a < 1)
    print(f"{len(rows)} cells, {below} with a < 1", file=sys.stderr)
    return EXIT_OK


# SMC runs

def load_config(path):
    try:
        with open(path) as fh:
            config = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError(f"config {path} must be a mapping")
    return config


def _problem_from_config(entry):
    if isinstance(entry, str):
        entry = {"name": entry}
    entry = dict(entry)
    name = entry.pop("name", None)
    if name not in smc.TOY_PROBLEMS:
        raise UsageError(f"unknown problem {name!r}; expected one of {sorted(smc.TOY_PROBLEMS)}")
    return smc.TOY_PROBLEMS[name](**entry)


def resolve_seed(args, config):
    if args.seed is not None:
        return args.seed
    if config.get("seed") is not None:
        return int(config["seed"])
    if args.allow_default_seed:
        return 0
    raise UsageError("stochastic command needs a seed: set `seed` in the config, pass --seed, "
                     "or pass --allow-default-seed to use seed 0")


def run_smc_config(config, seed, workers=None):
    """Run every scheme listed in ``config``; returns the exit status."""
    known = {"seed", "problem", "schedule", "scheme", "schemes", "n_particles", "fit",
             "workers", "block_size", "proposal_options", "output"}
    extra = set(config) - known
    if extra:
        raise UsageError(f"unknown config keys: {sorted(extra)}")
    for key in ("problem", "schedule", "n_particles", "output"):
        if key not in config:
            raise UsageError(f"config is missing `{key}`")
    problem = _problem_from_config(config["problem"])
    schedule = smc.EpsilonSchedule(tuple(config["schedule"]))
    schemes = config.get("schemes") or [config.get("scheme", "prior")]
    fit = dict(config.get("fit") or {})
    output = Path(config["output"])
    workers = workers or int(config.get("workers", 1))
    status = EXIT_OK
    for scheme in schemes:
        target = output / scheme if len(schemes) > 1 else output
        target.mkdir(parents=True, exist_ok=True)
        try:
            pops, diag = smc.smc_run(
                problem, schedule, scheme, int(config["n_particles"]), seed,
                fit_method=fit.get("method", "gaussian_mixture"), fit_k=fit.get("k", 2),
                bandwidth_rule=fit.get("bandwidth_rule", "ess_two_fifths"),
                proposal_options=config.get("proposal_options"),
                block_size=int(config.get("block_size", smc.DEFAULT_BLOCK)), workers=workers)
        except StallError as exc:
            pops, diag = exc.populations, exc.diagnostics
            _write_run(target, pops, diag)
            print(f"scheme {scheme}: stalled at iteration {exc.iteration}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        _write_run(target, pops, diag)
        print(f"scheme {scheme}")
        print(diag.table())
    return status


def _write_run(target, pops, diag):
    for t, pop in enumerate(pops):
        with open(target / f"population_{t:02d}.csv", "w", newline="") as fh:
            pop.to_csv(fh)
    (target / "diagnostics.json").write_text(diag.to_json() + "\n")


def cmd_smc(args):
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    return run_smc_config(config, seed, args.workers)


def cmd_verify(args):
    seed = args.seed if args.seed is not None else 0
    groups = run_invariants(seed=seed, corrupt_A_bar=args.corrupt_a_bar)
    for group in groups:
        print(group.line())
    return EXIT_OK if all(g.passed for g in groups) else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="abc-optimal",
                                     description="Proposal efficiency tools for SMC-ABC.")
    parser.add_argument("--seed", type=int, default=None, help="seed for stochastic commands")
    parser.add_argument("--allow-default-seed", action="store_true",
                        help="let stochastic commands fall back to seed 0")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table1", help="reproduce the efficiency table")
    p.add_argument("--case", choices=("I", "II", "III", "all"), default="all")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("curves", help="proposal density curves for a scenario")
    p.add_argument("--case", choices=sorted(SCENARIOS), required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--n", type=int, default=401)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("surface", help="improvement factor of q0 over a reference scheme")
    p.add_argument("--ndim", type=int, required=True)
    p.add_argument("--ref", choices=("posterior", "kde"), required=True)
    p.add_argument("--mu-range", type=float, nargs=2, default=(0.0, 10.0), metavar=("LO", "HI"))
    p.add_argument("--sigma-range", type=float, nargs=2, default=(1.0, 20.0),
                   metavar=("LO", "HI"))
    p.add_argument("--n-mu", type=int, default=101)
    p.add_argument("--n-sigma", type=int, default=101)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("smc", help="run SMC-ABC from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_smc)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--corrupt-a-bar", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ABCOptimalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

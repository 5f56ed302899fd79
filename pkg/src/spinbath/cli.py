"""Command-line entry point: ``spinbath {exact,master,kernel,compare,converge}``.

Exit codes: 0 when every runtime certification passes, 1 when a run
completes but a certification fails, 2 for usage and configuration errors,
3 when an engine aborts.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bath import LanczosError
from .harness import (CONVERGENCE_COLUMNS, ConfigError, RunManifest, compare_runs, convergence_rows,
                      convergence_table, parse_config, read_dynamics, write_csv, write_dynamics)
from .kernel import ModelError, evaluate_W, kernel_cutoff, kernel_is_positive, kernel_time_constant
from .model import ModelConfig
from .moments import EstimatorError
from .rk8 import IntegrationError

EXACT_NS_CAP = 10
EXIT_OK, EXIT_CERT, EXIT_USAGE, EXIT_ENGINE = 0, 1, 2, 3

log = logging.getLogger("spinbath")


def _ns_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError(f"bath sizes must be non-negative, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value parameter file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, help="bath frequency seed")
    common.add_argument("--ns", type=_ns_list, help="bath size (comma list for converge)")
    common.add_argument("--grid-n", type=int, help="u-grid size of the master solver")
    common.add_argument("--dt", type=float, help="time step in hbar/eV")
    common.add_argument("--t-end", type=float, help="final time in hbar/eV")
    common.add_argument("--allow-large", action="store_true",
                        help=f"permit exact runs with more than {EXACT_NS_CAP} bath spins")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spinbath", description="Spin-bath decoherence: exact and master-equation engines.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("exact", parents=[common], help="exact ensemble propagation")
    sub.add_parser("master", parents=[common], help="mean-field master equation")
    sub.add_parser("kernel", parents=[common], help="memory kernel and bath statistics")
    cmp_ = sub.add_parser("compare", parents=[common], help="deviation between two dynamics CSVs")
    cmp_.add_argument("first", type=Path)
    cmp_.add_argument("second", type=Path)
    conv = sub.add_parser("converge", parents=[common], help="exact vs master over bath sizes")
    conv.add_argument("--jobs", type=int, default=1, help="concurrent bath sizes")
    return p


def load_config(args) -> ModelConfig:
    cfg = parse_config(args.config) if args.config else ModelConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.ns is not None and args.command != "converge":
        if len(args.ns) != 1:
            raise ConfigError("--ns takes a single value for this command")
        over["n_s"] = args.ns[0]
    if args.grid_n is not None:
        over["grid_n"] = args.grid_n
    if args.dt is not None:
        over["dt"] = args.dt
    if args.t_end is not None:
        over["t_end"] = args.t_end
    if over:
        try:
            cfg = ModelConfig(**{**cfg.as_dict(), **over})
        except ValueError as exc:
            raise ConfigError(f"invalid option: {exc}") from None
    return cfg


def _check_exact_size(n_s: int, allow_large: bool) -> None:
    if n_s > EXACT_NS_CAP and not allow_large:
        raise ConfigError(f"exact run with n_s={n_s} > {EXACT_NS_CAP}; pass --allow-large")


def _report(name: str, cert: dict) -> bool:
    ok = all(cert.values())
    bad = [k for k, v in cert.items() if not v]
    print(f"{name}: certification {'passed' if ok else 'FAILED (' + ', '.join(bad) + ')'}")
    return ok


def _moments_dict(mcfg) -> dict | None:
    return None if mcfg.moments is None else mcfg.moments.__dict__


def cmd_exact(args, cfg) -> int:
    from .exact import run_exact

    _check_exact_size(cfg.n_s, args.allow_large)
    res = run_exact(cfg)
    dyn = res.dynamics
    man = RunManifest.for_run(cfg, "exact", truncation_ratio=dyn.meta["truncation_ratio"],
                              weights=res.weights, energies=res.energies)
    path = write_dynamics(args.out / "exact.csv", dyn, man)
    print(f"wrote {path}")
    return EXIT_OK if _report("exact", dyn.certify()) else EXIT_CERT


def cmd_master(args, cfg) -> int:
    from .master import prepare_master, run_master

    mcfg = prepare_master(cfg)
    dyn = run_master(mcfg, positivity_fail=None)
    man = RunManifest.for_run(cfg, "master", sigma_x_mean=mcfg.sigma_x_mean, c=mcfg.c,
                              p=mcfg.kernel.p, q=mcfg.kernel.q, moments=_moments_dict(mcfg))
    path = write_dynamics(args.out / "master.csv", dyn, man)
    print(f"wrote {path}  (min eigenvalue {dyn.min_eig.min():.3e})")
    return EXIT_OK if _report("master", dyn.certify()) else EXIT_CERT


def cmd_kernel(args, cfg) -> int:
    from .master import prepare_master

    mcfg = prepare_master(cfg)
    kp = mcfg.kernel
    T = kernel_cutoff(kp)
    t = np.linspace(0.0, T, 401)
    W = evaluate_W(kp, t)
    tau = kernel_time_constant(kp)
    man = RunManifest.for_run(cfg, "kernel", p=kp.p, q=kp.q, tau=tau, W0=float(evaluate_W(kp, 0.0)),
                              sigma_x_mean=mcfg.sigma_x_mean, c=mcfg.c, moments=_moments_dict(mcfg),
                              positive=kernel_is_positive(kp))
    path = write_csv(args.out / "kernel.csv", ["t", "W"], np.column_stack([t, W]), man)
    print(f"p = {kp.p:.10g}  q = {kp.q:.10g}  tau = {tau:.10g}  W(0) = {W[0]:.3g}")
    print(f"sigma_x_mean = {mcfg.sigma_x_mean:.10g}  C = {mcfg.c:.10g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args, cfg) -> int:
    a, _ = read_dynamics(args.first)
    b, _ = read_dynamics(args.second)
    rep = compare_runs(a, b)
    rows = np.column_stack([np.arange(len(rep.max_norm)), rep.max_norm, rep.time_avg])
    path = write_csv(args.out / "compare.csv", ["qubit", "max_dev", "time_avg_dev"], rows,
                     RunManifest.for_run(cfg, "compare", first=str(args.first), second=str(args.second)))
    for i, (m, a_) in enumerate(zip(rep.max_norm, rep.time_avg)):
        print(f"qubit {i}: max {m:.3e}  time-averaged {a_:.3e}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_converge(args, cfg) -> int:
    ns = args.ns if args.ns is not None else [4, 6, 8]
    for n in ns:
        _check_exact_size(n, args.allow_large)
    rows = convergence_table(cfg, ns, jobs=max(1, args.jobs), out_dir=args.out)
    table = convergence_rows(rows)
    path = write_csv(args.out / "converge.csv", CONVERGENCE_COLUMNS, table,
                     RunManifest.for_run(cfg, "converge", ns=ns))
    ok = True
    for r in rows:
        print(f"n_s = {r.n_s:2d}: time-averaged {r.report.mean_deviation:.4e}  max {r.report.max_deviation:.4e}")
        ok &= _report(f"  exact n_s={r.n_s}", r.exact_cert)
        ok &= _report(f"  master n_s={r.n_s}", r.master_cert)
    print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_CERT


COMMANDS = {"exact": cmd_exact, "master": cmd_master, "kernel": cmd_kernel,
            "compare": cmd_compare, "converge": cmd_converge}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ModelError, ValueError) as exc:
        print(f"spinbath: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, LanczosError, EstimatorError, RuntimeError) as exc:
        print(f"spinbath: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())

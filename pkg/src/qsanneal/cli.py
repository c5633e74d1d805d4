"""Command-line entry point.

Exit codes: 0 success, 1 invariant failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .classical_sa import (
    anneal_exact,
    anneal_sampled_batch,
    sa_error_bound,
    sa_schedule,
    target_beta,
    write_trace_csv,
)
from .energy_model import load_model
from .errors import ConfigError, QsannealError
from .harness import (
    complete_proposal,
    derived_seed,
    estimate_gap,
    format_value,
    load_config,
    ring_proposal,
    sample_runs,
    scaling_experiment,
)
from .markov import kernel_spectrum, metropolis_builder, symmetrize
from .qsa import qsa_schedule, qsa_success_exact, run_record, write_run_records

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--c-q", dest="c_q", type=float)
    p.add_argument("--c-pea", dest="c_pea", type=float)
    p.add_argument("--backend", choices=("analytic", "dense"))
    p.add_argument("--mode", choices=("measure-each", "deferred"))
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsanneal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="eigenvalue table of the Metropolis kernel for a model file")
    sp.add_argument("model", type=Path)
    sp.add_argument("--beta", type=float, default=math.log(2), help="inverse temperature (default ln 2)")
    sp.add_argument("--proposal", choices=("complete", "ring"), default="complete")
    sp.add_argument("--laziness", type=float, default=0.5)
    sp.add_argument("--out", type=Path)

    for name, text in (("sa", "classical annealing runs"), ("qsa", "quantum annealing runs"),
                       ("scaling", "gap-scaling sweep with slope fits")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path)
        _common(p)

    vp = sub.add_parser("validate", help="run the invariant suite")
    vp.add_argument("--seed", type=int, default=0)
    return parser


def _config(args):
    cfg = load_config(args.config)
    return cfg.overridden(seed=args.seed, epsilon=args.epsilon, tau=args.tau, c_q=args.c_q,
                          c_pea=args.c_pea, backend=args.backend, mode=args.mode)


def _write_rows(path: Path, header: list[str], cols: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerows([[format_value(v) for v in r] for r in rows])


def cmd_spectrum(args) -> int:
    model = load_model(args.model)
    q = complete_proposal(model.d) if args.proposal == "complete" else ring_proposal(model.d)
    kern = metropolis_builder(model, q, args.laziness)(args.beta)
    spec = kernel_spectrum(symmetrize(kern, model), kern)
    lines = [f"beta = {args.beta:.10g}", f"{'j':>4} {'lambda':>20} {'phi':>20}"]
    for j, (lam, phi) in enumerate(zip(spec.lambdas, spec.phis)):
        lines.append(f"{j:>4d} {lam:>20.12f} {phi:>20.12f}")
    lines.append(f"delta = {spec.delta:.12f}")
    print("\n".join(lines))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_rows(args.out / "spectrum.csv", [f"beta={format_value(args.beta)}"], ["j", "lambda", "phi"],
                    [[j, float(l), float(f)] for j, (l, f) in enumerate(zip(spec.lambdas, spec.phis))])
    return EXIT_OK


def cmd_sa(args) -> int:
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    ok = True
    for i, inst in enumerate(cfg.instances()):
        model, builder = inst.model, inst.builder()
        delta = estimate_gap(model, builder, target_beta(model, cfg.epsilon))
        sched = sa_schedule(model, delta, cfg.epsilon, cfg.tau)
        trace = anneal_exact(model, sched, builder, keep_distributions=False)
        with open(args.out / f"sa_trace_{inst.instance_id}.csv", "w", encoding="ascii", newline="") as fh:
            write_trace_csv(trace, fh)
        bound = sa_error_bound(model, sched.final_beta)
        max_h2 = float(trace.h_norms.max() ** 2)
        ok &= trace.final_error_mass <= bound + 1e-12
        rate = ""
        if cfg.runs:
            finals = anneal_sampled_batch(model, sched, builder, derived_seed(cfg.seed, i), cfg.runs)
            rate = float(np.isin(finals, model.ground_set).mean())
        first = trace.first_step_below(cfg.epsilon)
        rows.append([inst.instance_id, model.d, delta, sched.steps, "" if first is None else first,
                     trace.final_error_mass, bound, max_h2, rate])
        print(f"{inst.instance_id}: delta={delta:.4e} steps={sched.steps} "
              f"error={trace.final_error_mass:.3e} bound={bound:.3e} max|h|^2={max_h2:.4f}")
    _write_rows(args.out / "sa_summary.csv", cfg.header_lines(),
                ["instance_id", "d", "delta", "steps", "first_step_below_epsilon", "final_error_mass",
                 "error_bound", "max_h_norm_sq", "sampled_success"], rows)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_qsa(args) -> int:
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    records, rows = [], []
    for i, inst in enumerate(cfg.instances()):
        model, builder = inst.model, inst.builder()
        delta = estimate_gap(model, builder, target_beta(model, cfg.epsilon))
        sched = qsa_schedule(model, delta, cfg.epsilon, cfg.c_q, cfg.c_pea)
        exact = qsa_success_exact(model, sched, builder, backend=cfg.backend,
                                  completion_seed=cfg.completion_seed)
        for r, res in enumerate(sample_runs(model, sched, builder, cfg, i)):
            records.append(run_record(inst.instance_id, model, sched, res, derived_seed(cfg.seed, i, r)))
        rows.append([inst.instance_id, model.d, delta, sched.q_steps, sched.pea.p, sched.walk_budget,
                     exact.p_zeros, exact.p_zeros_and_ground, exact.failure])
        print(f"{inst.instance_id}: delta={delta:.4e} Q={sched.q_steps} p={sched.pea.p} "
              f"walk_calls={sched.walk_budget} P(all zeros)={exact.p_zeros:.6f} "
              f"failure={exact.failure:.3e}")
    with open(args.out / "qsa_runs.csv", "w", encoding="ascii", newline="") as fh:
        write_run_records(records, fh)
    _write_rows(args.out / "qsa_summary.csv", cfg.header_lines(),
                ["instance_id", "d", "delta", "Q", "p", "walk_calls", "p_all_zeros",
                 "p_all_zeros_and_ground", "failure"], rows)
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    report = scaling_experiment(cfg)
    with open(args.out / "scaling.csv", "w", encoding="ascii", newline="") as fh:
        report.write_csv(fh)
    text = report.text()
    (args.out / "scaling_report.txt").write_text(text, encoding="ascii")
    print(text, end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .checks import run_checks

    results = run_checks(args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


COMMANDS = {"spectrum": cmd_spectrum, "sa": cmd_sa, "qsa": cmd_qsa, "scaling": cmd_scaling,
            "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, QsannealError) as exc:
        if isinstance(exc, ArithmeticError):
            print(f"invariant failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

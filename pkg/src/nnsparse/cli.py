"""Command-line front end: ``nnsparse {gen,solve,check,eval}``.

Exit codes: 0 success, 2 usage, 3 parse, 4 numeric failure (including
non-convergence and rank-deficient supports), 5 infeasible instance spec.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import formats
from .bench import (
    CONDITIONS,
    DistortionSpec,
    InstanceSpec,
    evaluate_batch,
    generate,
    make_specs,
    spec_to_dict,
)
from .conditions import evaluate_conditions
from .errors import GenerationError, InvalidSupportError, NumericFailure, RankDeficientError
from .formats import ParseError
from .solvers import Problem, SolverOptions, solve_nlasso, solve_nnls

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4, 5

log = logging.getLogger("nnsparse")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    d = SolverOptions()
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--zero-tol", type=float, default=d.zero_tol)
    p.add_argument("--support-tol", type=float, default=d.support_tol)
    p.add_argument("--kkt-tol", type=float, default=d.kkt_tol)
    p.add_argument("--rho", type=float, default=d.rho)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(
        tol=args.tol,
        max_iter=args.max_iter,
        zero_tol=args.zero_tol,
        support_tol=args.support_tol,
        kkt_tol=args.kkt_tol,
        rho=args.rho,
    )


def _load_problem_data(args):
    A, names = formats.read_dictionary(args.dictionary, header=args.header)
    Y = formats.read_observations(args.observations)
    if Y.shape[0] != A.shape[0]:
        raise ParseError(
            f"dimension mismatch: dictionary has {A.shape[0]} bands, "
            f"observations have {Y.shape[0]}"
        )
    if args.column is not None:
        if not 0 <= args.column < Y.shape[1]:
            raise UsageError(f"--column {args.column} out of range for {Y.shape[1]} observations")
        cols = [args.column]
    else:
        cols = list(range(Y.shape[1]))
    return A, names, Y, cols


def _emit(args, obj) -> None:
    if args.out:
        formats.write_json(args.out, obj)
    else:
        sys.stdout.write(formats.dumps(obj) + "\n")


# gen ----------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        dist = DistortionSpec.parse(args.distortion)
        spec = InstanceSpec(
            L=args.L,
            N=args.N,
            J=args.J,
            coherence_target=args.coherence,
            coherence_floor=args.coherence_floor,
            coefficient_range=(args.coef_min, args.coef_max),
            distortion=dist,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    inst = generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    pre = os.path.join(args.out_dir, args.prefix)
    formats.write_matrix_csv(pre + "dictionary.csv", inst.dictionary)
    formats.write_matrix_csv(pre + "observations.csv", inst.observation[:, None])
    truth = formats.truth_to_dict(inst.truth, inst.support)
    truth["spec"] = spec_to_dict(inst.spec)
    formats.write_json(pre + "truth.json", truth)
    print(f"wrote {pre}dictionary.csv, {pre}observations.csv, {pre}truth.json")
    return EXIT_OK


# solve --------------------------------------------------------------------


def _solution_dict(sol, column) -> dict:
    return {
        "column": column,
        "x": sol.x,
        "support": sol.support,
        "objective": sol.objective,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "method": sol.method,
        "kkt": sol.kkt.summary(),
    }


def cmd_solve(args) -> int:
    if args.gamma < 0:
        raise UsageError("--gamma must be >= 0")
    A, _, Y, cols = _load_problem_data(args)
    opts = _solver_options(args)
    method = args.solver
    if method == "auto":
        method = "nnls" if args.gamma == 0 else "admm"
    out = []
    ok = True
    for c in cols:
        if method == "nnls":
            sol = solve_nnls(A, Y[:, c], opts, gamma=args.gamma)
        else:
            sol = solve_nlasso(Problem(A, Y[:, c], args.gamma), opts)
        ok &= sol.converged
        out.append(_solution_dict(sol, c))
    _emit(args, {"gamma": args.gamma, "solver": method, "solutions": out})
    if not ok:
        print("error: solver did not converge for at least one observation", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# check --------------------------------------------------------------------

CHECKS = ("apmrc", "perc-max", "perc-amax", "erc-mrc", "base")


def _table(rep) -> str:
    lines = [f"support {rep.support}  gamma {rep.gamma:.6g}"]
    if rep.erc is not None:
        lines.append(f"  ERC  {rep.erc: .6g}    PERC {rep.perc: .6g}")
    lines.append(f"  {'condition':<12}{'verdict':<9}margin")
    lines.append(f"  {'mcc':<12}{str(rep.verdicts['mcc']):<9}{rep.mcc_margin: .6g}")
    nscc = min(rep.nscc_margins.values(), default=math.inf)
    lines.append(f"  {'nscc (min)':<12}{str(rep.verdicts['nscc']):<9}{nscc: .6g}")
    lines.append(f"  {'apmrc':<12}{str(rep.verdicts['apmrc']):<9}")
    lines.append(f"  {'perc_max':<12}{str(rep.verdicts['perc_max']):<9}{rep.perc_max_margin: .6g}")
    lines.append(f"  {'perc_amax':<12}{str(rep.verdicts['perc_amax']):<9}{rep.perc_amax_margin: .6g}")
    if rep.erc_mrc_noise_margin is not None:
        lines.append(
            f"  {'erc_mrc':<12}{str(rep.verdicts['erc_mrc']):<9}"
            f"noise {rep.erc_mrc_noise_margin: .6g}  coef {rep.erc_mrc_coef_margin: .6g}"
        )
    if rep.base_margins is not None:
        base = min(rep.base_margins.values(), default=math.inf)
        lines.append(f"  {'base':<12}{str(rep.verdicts['base_strict']):<9}{base: .6g}")
    return "\n".join(lines)


def cmd_check(args) -> int:
    wanted = set(args.conditions) if args.conditions else set(CHECKS)
    unknown = wanted - set(CHECKS)
    if unknown:
        raise UsageError(f"unknown conditions {sorted(unknown)}; choose from {list(CHECKS)}")
    if "erc-mrc" in wanted and args.truth is None:
        if args.conditions:
            raise UsageError("--conditions erc-mrc needs --truth")
        wanted.discard("erc-mrc")
    if args.gamma < 0:
        raise UsageError("--gamma must be >= 0")
    A, _, Y, cols = _load_problem_data(args)
    truth = None
    if args.truth is not None:
        truth, _ = formats.read_truth(args.truth)
        if truth.coefficients.shape[0] != A.shape[1] or truth.distortion.shape[0] != A.shape[0]:
            raise ParseError(f"{args.truth}: ground truth does not match the dictionary shape")
        if len(cols) != 1:
            raise UsageError("--truth describes one observation; pick it with --column")
    opts = _solver_options(args)
    reports = []
    for c in cols:
        p = Problem(A, Y[:, c], args.gamma)
        rep = evaluate_conditions(
            p,
            args.support,
            truth if "erc-mrc" in wanted else None,
            strict_tol=args.strict_tol,
            with_base="base" in wanted,
            opts=opts,
        )
        d = rep.to_dict()
        d["column"] = c
        reports.append(d)
        print(_table(rep), file=sys.stderr if not args.out else sys.stdout)
    _emit(args, {"reports": reports})
    return EXIT_OK


# eval ---------------------------------------------------------------------

BATCH_KEYS = {
    "instances", "L", "N", "J", "coherence", "distortions", "coefficient_range",
    "gammas", "gamma_mode", "seed",
}


def _batch_config(args) -> dict:
    cfg = {
        "instances": args.instances,
        "L": args.L,
        "N": args.N,
        "J": args.J,
        "coherence": args.coherence,
        "distortions": args.distortions.split(";"),
        "coefficient_range": [args.coef_min, args.coef_max],
        "gammas": args.gammas,
        "gamma_mode": args.gamma_mode,
        "seed": args.seed,
    }
    if args.batch:
        data = formats.read_json(args.batch)
        if not isinstance(data, dict):
            raise ParseError(f"{args.batch}: expected a JSON object")
        unknown = set(data) - BATCH_KEYS
        if unknown:
            raise UsageError(f"{args.batch}: unknown keys {sorted(unknown)}")
        cfg.update(data)
    return cfg


RECORD_FIELDS = [
    "instance", "seed", "J", "coherence_target", "distortion", "gamma", "gamma_effective",
    "status", "converged", "support_true", "support_solver", "correct",
    *CONDITIONS,
    "erc", "perc", "mcc_margin", "nscc_min_margin", "perc_max_margin", "perc_amax_margin",
    "erc_mrc_noise_margin", "erc_mrc_coef_margin", "min_abs_margin",
]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return formats.fmt(v)
    return str(v)


def cmd_eval(args) -> int:
    cfg = _batch_config(args)
    try:
        specs = make_specs(
            int(cfg["instances"]),
            int(cfg["L"]),
            int(cfg["N"]),
            [int(j) for j in cfg["J"]],
            [float(c) for c in cfg["coherence"]],
            cfg["distortions"],
            tuple(cfg["coefficient_range"]),
            int(cfg["seed"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    result = evaluate_batch(
        specs, [float(g) for g in cfg["gammas"]], _solver_options(args), cfg["gamma_mode"]
    )
    os.makedirs(args.out_dir, exist_ok=True)
    for g in result.gammas:
        lines = ["condition,true_correct,true_incorrect,false_correct,false_incorrect"]
        for c in CONDITIONS:
            lines.append(",".join([c, *map(str, result.confusion[g][c].row())]))
        formats.atomic_write(
            os.path.join(args.out_dir, f"confusion_gamma_{g:g}.csv"), "\n".join(lines) + "\n"
        )
    rows = [",".join(RECORD_FIELDS)]
    for rec in result.records:
        rows.append(",".join(_cell(rec.get(f)) for f in RECORD_FIELDS))
    formats.atomic_write(os.path.join(args.out_dir, "records.csv"), "\n".join(rows) + "\n")
    print(
        f"{result.n_instances} instances x {len(result.gammas)} gammas; "
        f"excluded: {result.nonconverged} non-converged, {result.boundary} boundary, "
        f"{result.rank_deficient} rank-deficient"
    )
    for g in result.gammas:
        print(f"gamma {g:g}")
        for c in CONDITIONS:
            print(f"  {c:<10} TC/TI/FC/FI = {result.confusion[g][c].row()}")
    return EXIT_OK


# entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nnsparse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--L", type=int, default=50)
    g.add_argument("--N", type=int, default=12)
    g.add_argument("--J", type=int, default=3)
    g.add_argument("--coherence", type=float, default=0.5)
    g.add_argument("--coherence-floor", type=float, default=0.0)
    g.add_argument("--coef-min", type=float, default=0.2)
    g.add_argument("--coef-max", type=float, default=1.0)
    g.add_argument("--distortion", default="none")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=".")
    g.add_argument("--prefix", default="")
    g.set_defaults(func=cmd_gen)

    def data_flags(p):
        p.add_argument("--dictionary", required=True)
        p.add_argument("--observations", required=True)
        p.add_argument("--header", action="store_true", help="dictionary CSV has atom names")
        p.add_argument("--column", type=int, default=None)
        p.add_argument("--gamma", type=float, default=0.0)
        p.add_argument("--out", default=None)
        _add_solver_flags(p)

    s = sub.add_parser("solve", help="solve NLasso / NNLS for each observation")
    data_flags(s)
    s.add_argument("--solver", choices=("auto", "admm", "nnls"), default="auto")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="evaluate recovery conditions for a support")
    data_flags(c)
    c.add_argument("--support", type=_ints, required=True)
    c.add_argument("--truth", default=None)
    c.add_argument(
        "--conditions", type=lambda t: [s.strip() for s in t.split(",") if s.strip()], default=None
    )
    c.add_argument("--strict-tol", type=float, default=0.0)
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("eval", help="batch-evaluate conditions against the solver")
    e.add_argument("--batch", default=None, help="JSON batch spec (overrides flags)")
    e.add_argument("--instances", type=int, default=200)
    e.add_argument("--L", type=int, default=50)
    e.add_argument("--N", type=int, default=12)
    e.add_argument("--J", type=_ints, default=[2, 3])
    e.add_argument("--coherence", type=_floats, default=[0.3, 0.6, 0.9])
    e.add_argument(
        "--distortions",
        default="none;gaussian:sigma=0.01;directional:beta=0.05,sign=+;"
        "directional:beta=0.05,sign=-;bilinear:w=0.1",
        help="semicolon-separated distortion specs",
    )
    e.add_argument("--coef-min", type=float, default=0.2)
    e.add_argument("--coef-max", type=float, default=1.0)
    e.add_argument("--gammas", type=_floats, default=[0.2, 0.1, 0.05])
    e.add_argument("--gamma-mode", choices=("relative", "absolute"), default="relative")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out-dir", default=".")
    _add_solver_flags(e)
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidSupportError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RankDeficientError, NumericFailure) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GenerationError as exc:
        print(f"infeasible spec: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

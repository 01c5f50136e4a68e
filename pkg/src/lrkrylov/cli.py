"""Command-line front end: generate problems, run solves, compare configs.

Subcommands
-----------
``gen``
    Write a generated problem (Matrix Market files + JSON manifest).
``solve``
    Run one solver on a manifest; writes ``history.csv`` (per-iteration
    convergence data), ``summary.json`` and optionally an SVG convergence
    plot.
``compare``
    Run several solver configurations on the same manifest and emit a
    side-by-side table (CSV + stdout).  Member runs may execute in parallel;
    the environment variable ``LRKRYLOV_THREADS`` caps the worker count.

Exit codes: 0 converged, 2 input error, 4 non-convergence at the iteration
cap, 3 any other solver failure.  History CSV columns hold the normalized
(relative) residual and bound; the bound column dominates the residual column
on every row by construction.
"""

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import (
    ContractViolationError,
    FactorizationError,
    LowRankKrylovError,
    NumericError,
    ParseError,
    ResourceLimitError,
    SpdViolationError,
    ValidationError,
)
from .krylov import SolverConfig, solve
from .precond import InnerKrylovSpec, MeanBasedSpec, SylvesterSpec, UllmannSpec, build, convdiff_mean_precond
from .problems import gen_convdiff, gen_stochastic, read_problem, write_problem
from .shortrec import cg_solve

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NOCONV = 4

_INPUT_ERRORS = (ContractViolationError, ParseError, ValidationError, FileNotFoundError)
_SOLVER_ERRORS = (SpdViolationError, FactorizationError, NumericError, ResourceLimitError)

HISTORY_COLUMNS = [
    "iter",
    "computed_residual",
    "bound",
    "eps_a_used",
    "eps_orth_used",
    "basis_rank",
    "cum_columns_s",
    "cum_columns_z",
]


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonify(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _threads():
    try:
        return max(1, int(os.environ.get("LRKRYLOV_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# gen

def _cmd_gen(args):
    out_dir = Path(args.out_dir)
    if args.kind == "convdiff":
        prob = gen_convdiff(args.n, args.nu)
        params = {"n": args.n, "nu": args.nu}
    else:
        prob = gen_stochastic(args.n_grid, args.r, args.degree, theta=args.theta)
        params = {
            "n_grid": args.n_grid,
            "r": args.r,
            "degree": args.degree,
            "theta": args.theta,
            "n_sigma": prob.n_sigma,
        }
    manifest = write_problem(out_dir, prob.op, prob.c1, prob.c2, kind=args.kind, params=params)
    print(f"wrote {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve

def _build_preconditioner(name, op, meta, eps_precond, inner_iters):
    if name in (None, "none"):
        return None
    kind = meta.get("kind")
    if name == "mean":
        if kind != "stochastic":
            raise ContractViolationError("the mean preconditioner needs a stochastic problem")
        return build(MeanBasedSpec(op.terms[0][0], eps_precond=eps_precond))
    if name == "ullmann":
        if kind != "stochastic":
            raise ContractViolationError("the ullmann preconditioner needs a stochastic problem")
        return build(UllmannSpec(
            tuple(a for a, _ in op.terms),
            tuple(b for _, b in op.terms),
            eps_precond=eps_precond,
        ))
    if name == "sylvester":
        if kind != "convdiff":
            raise ContractViolationError("the sylvester preconditioner needs a convdiff problem")
        prob = gen_convdiff(meta["params"]["n"], meta["params"]["nu"])
        spec = convdiff_mean_precond(prob)
        spec = SylvesterSpec(spec.a_s, spec.b_s, eps_precond=eps_precond)
        return build(spec)
    if name == "inner":
        return build(InnerKrylovSpec(op, iters=inner_iters, eps_precond=eps_precond))
    raise ContractViolationError(f"unknown preconditioner {name!r}")


def _make_config(args, precond):
    flexible = args.flexible
    if flexible is None:
        # an inexact (pre-truncating) preconditioner needs the flexible
        # variant for the residual bound to stay an upper bound
        flexible = precond is not None
    return SolverConfig(
        variant=args.variant,
        m_max=args.m_max,
        eps=args.eps,
        schedule=args.schedule,
        c1=args.c1,
        c2=args.c2,
        flexible=bool(flexible),
        eps_precond=args.eps_precond,
        est_steps=args.est_steps,
        seed=args.seed,
    )


def _write_history(path, report):
    cum_s = np.cumsum(report.ranks_per_iter).tolist()
    cum_z = np.cumsum(report.z_ranks).tolist() if report.z_ranks else []
    rows = []
    n = len(report.computed_residuals)
    is_cg = report.variant == "cg"
    for i in range(n):
        if is_cg:
            basis_rank = report.cg_rank_sums[i] if i < len(report.cg_rank_sums) else ""
            cs = max(report.cg_rank_sums[: i + 1]) if report.cg_rank_sums[: i + 1] else ""
            cz = ""
        else:
            basis_rank = report.ranks_per_iter[i] if i < len(report.ranks_per_iter) else ""
            cs = cum_s[min(i + 1, len(cum_s) - 1)] if cum_s else ""
            cz = cum_z[i] if i < len(cum_z) else ""
        rows.append({
            "iter": i + 1,
            "computed_residual": report.computed_residuals[i] / report.beta,
            "bound": report.bounds[i] / report.beta,
            "eps_a_used": report.eps_a_used[i] if i < len(report.eps_a_used) else "",
            "eps_orth_used": report.eps_orth_used[i] if i < len(report.eps_orth_used) else "",
            "basis_rank": basis_rank,
            "cum_columns_s": cs,
            "cum_columns_z": cz,
        })
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _summary_dict(report, args=None, precond=None, extra=None):
    d = {
        "variant": report.variant,
        "schedule": report.schedule,
        "iterations": report.iterations,
        "termination": report.termination,
        "solution_rank": report.solution_rank,
        "columns_s": report.columns_s,
        "columns_z": report.columns_z,
        "rel_bound_final": report.rel_bound_final,
        "true_residual_final": report.true_residual_final,
        "wall_time": report.wall_time,
        "beta": report.beta,
        "max_offdiag_inner": report.max_offdiag_inner,
        "threads": _threads(),
    }
    if report.estimates is not None:
        d["sigma_estimates"] = {
            "sigma_max": report.estimates.sigma_max,
            "sigma_min": report.estimates.sigma_min,
            "source": report.estimates.source,
        }
    if precond is not None:
        d["preconditioner"] = precond.kind
        d["precond_build_time"] = precond.build_time
    if args is not None:
        d["eps"] = args.eps
        d["seed"] = args.seed
    if extra:
        d.update(extra)
    return _jsonify(d)


def _plot_history(path, report):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    its = np.arange(1, len(report.computed_residuals) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(its, report.rel_bounds, "o-", label="residual bound (normalized)")
    ax.semilogy(its, report.rel_residuals, "s--", label="computed residual (normalized)")
    if report.eps_a_used:
        ax.semilogy(
            its[: len(report.eps_a_used)],
            np.asarray(report.eps_a_used) / report.beta,
            "d:",
            label="discard budget / beta",
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("magnitude")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _run_single(op, c1, c2, cfg, precond):
    if cfg.variant == "cg":
        return cg_solve(op, c1, c2, cfg, precond=precond)
    return solve(op, c1, c2, cfg, precond=precond)


def _cmd_solve(args):
    op, c1, c2, meta = read_problem(args.manifest)
    precond = _build_preconditioner(args.precond, op, meta, args.eps_precond, args.inner_iters)
    cfg = _make_config(args, precond)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        _, report = _run_single(op, c1, c2, cfg, precond)
    except _SOLVER_ERRORS as exc:
        (out_dir / "summary.json").write_text(json.dumps(_jsonify({
            "error": str(exc), "variant": cfg.variant, "termination": "error",
        }), indent=2) + "\n")
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if report.estimates is not None and report.estimates.source == "estimated":
        print(
            "note: schedule constants use Lanczos estimates of the extreme "
            "singular values; pass --c1/--c2 to override",
            file=sys.stderr,
        )
    _write_history(out_dir / "history.csv", report)
    summary = _summary_dict(
        report, args=args, precond=precond,
        extra={"manifest": str(args.manifest), "flexible": cfg.flexible},
    )
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.plot:
        _plot_history(out_dir / "convergence.svg", report)
    print(json.dumps(summary, indent=2))
    if report.termination == "converged":
        return EXIT_OK
    if report.termination in ("max_iters", "stagnation"):
        return EXIT_NOCONV
    return EXIT_SOLVER


# ---------------------------------------------------------------------------
# compare

def _parse_run_spec(spec, defaults):
    opts = dict(defaults)
    label = None
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ContractViolationError(f"run option {part!r} is not key=value")
        key, val = part.split("=", 1)
        key = key.strip()
        val = val.strip()
        if key == "label":
            label = val
        elif key in ("variant", "schedule", "precond"):
            opts[key] = val
        elif key in ("eps", "eps_precond", "c1", "c2"):
            opts[key] = float(val)
        elif key in ("m_max", "seed", "est_steps", "inner_iters"):
            opts[key] = int(val)
        elif key == "flexible":
            opts[key] = val.lower() in ("1", "true", "yes")
        else:
            raise ContractViolationError(f"unknown run option {key!r}")
    if label is None:
        label = f"{opts['variant']}/{opts.get('precond') or 'none'}/{opts['schedule']}"
    return label, opts


COMPARE_COLUMNS = [
    "label", "status", "iterations", "solution_rank", "columns_s", "columns_z",
    "rel_bound_final", "true_residual_final", "wall_time",
]


def _compare_row(label, opts, op, c1, c2, meta):
    try:
        precond = _build_preconditioner(
            opts.get("precond"), op, meta, opts["eps_precond"], opts["inner_iters"]
        )
        flexible = opts["flexible"]
        if flexible is None:
            flexible = precond is not None
        cfg = SolverConfig(
            variant=opts["variant"],
            m_max=opts["m_max"],
            eps=opts["eps"],
            schedule=opts["schedule"],
            c1=opts.get("c1"),
            c2=opts.get("c2"),
            flexible=bool(flexible),
            eps_precond=opts["eps_precond"],
            est_steps=opts["est_steps"],
            seed=opts["seed"],
        )
        _, report = _run_single(op, c1, c2, cfg, precond)
        return {
            "label": label,
            "status": report.termination,
            "iterations": report.iterations,
            "solution_rank": report.solution_rank,
            "columns_s": report.columns_s,
            "columns_z": report.columns_z,
            "rel_bound_final": f"{report.rel_bound_final:.3e}",
            "true_residual_final": f"{report.true_residual_final:.3e}",
            "wall_time": f"{report.wall_time:.3e}",
        }
    except LowRankKrylovError as exc:
        return {"label": label, "status": f"error: {exc}", "iterations": "", "solution_rank": "",
                "columns_s": "", "columns_z": "", "rel_bound_final": "",
                "true_residual_final": "", "wall_time": ""}


def _cmd_compare(args):
    op, c1, c2, meta = read_problem(args.manifest)
    defaults = {
        "variant": args.variant, "schedule": args.schedule, "precond": args.precond,
        "eps": args.eps, "eps_precond": args.eps_precond, "m_max": args.m_max,
        "seed": args.seed, "est_steps": args.est_steps, "inner_iters": args.inner_iters,
        "flexible": args.flexible, "c1": args.c1, "c2": args.c2,
    }
    runs = [_parse_run_spec(spec, defaults) for spec in args.run]
    if not runs:
        raise ContractViolationError("compare needs at least one --run")
    workers = min(_threads(), len(runs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda lr: _compare_row(lr[0], lr[1], op, c1, c2, meta), runs
            ))
    else:
        rows = [_compare_row(label, opts, op, c1, c2, meta) for label, opts in runs]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "compare.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in COMPARE_COLUMNS}
    header = "  ".join(c.ljust(widths[c]) for c in COMPARE_COLUMNS)
    print(header)
    print("-" * len(header))
    for r in rows:
        print("  ".join(str(r[c]).ljust(widths[c]) for c in COMPARE_COLUMNS))
    failed = [r for r in rows if str(r["status"]).startswith("error")]
    return EXIT_SOLVER if len(failed) == len(rows) else EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_solver_flags(p):
    p.add_argument("--variant", choices=("gmres", "fom", "cg"), default="gmres")
    p.add_argument("--eps", type=float, default=1e-6, help="target relative residual")
    p.add_argument("--schedule", choices=("relaxed_sigma", "relaxed_kappa", "fixed"),
                   default="relaxed_sigma")
    p.add_argument("--m-max", type=int, default=50, dest="m_max")
    p.add_argument("--precond", choices=("none", "mean", "ullmann", "sylvester", "inner"),
                   default="none")
    p.add_argument("--eps-precond", type=float, default=1e-3, dest="eps_precond")
    p.add_argument("--inner-iters", type=int, default=10, dest="inner_iters")
    p.add_argument("--flexible", action=argparse.BooleanOptionalAction, default=None,
                   help="store the preconditioned basis (default: on when preconditioned)")
    p.add_argument("--c1", type=float, default=None,
                   help="override the smallest-singular-value constant")
    p.add_argument("--c2", type=float, default=None, help="override the condition constant")
    p.add_argument("--est-steps", type=int, default=20, dest="est_steps")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lrkrylov",
        description="Low-rank Krylov solvers for multiterm linear matrix equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a benchmark problem")
    gsub = p_gen.add_subparsers(dest="kind", required=True)
    p_cd = gsub.add_parser("convdiff", help="convection-diffusion equation")
    p_cd.add_argument("--n", type=int, required=True)
    p_cd.add_argument("--nu", type=float, required=True)
    p_cd.add_argument("--out-dir", required=True, dest="out_dir")
    p_cd.set_defaults(func=_cmd_gen, kind="convdiff")
    p_st = gsub.add_parser("stochastic", help="synthetic stochastic diffusion")
    p_st.add_argument("--n-grid", type=int, required=True, dest="n_grid")
    p_st.add_argument("--r", type=int, required=True)
    p_st.add_argument("--degree", type=int, required=True)
    p_st.add_argument("--theta", type=float, default=0.3)
    p_st.add_argument("--out-dir", required=True, dest="out_dir")
    p_st.set_defaults(func=_cmd_gen, kind="stochastic")

    p_solve = sub.add_parser("solve", help="run one solver on a problem manifest")
    p_solve.add_argument("manifest")
    _add_solver_flags(p_solve)
    p_solve.add_argument("--out-dir", default=".", dest="out_dir")
    p_solve.add_argument("--plot", action="store_true", help="write an SVG convergence plot")
    p_solve.set_defaults(func=_cmd_solve)

    p_cmp = sub.add_parser("compare", help="run several configurations side by side")
    p_cmp.add_argument("manifest")
    _add_solver_flags(p_cmp)
    p_cmp.add_argument("--run", action="append", default=[],
                       help="comma-separated key=value overrides, e.g. "
                            "'label=mean,precond=mean,variant=gmres'")
    p_cmp.add_argument("--out-dir", default=".", dest="out_dir")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

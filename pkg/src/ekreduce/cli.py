"""Command line front end: ``ekreduce {check,solve,envelope,report,lemma}``.

Exit codes: 0 success, 1 analytic failure, 2 usage or configuration error,
3 admissibility violation.
"""

import argparse
import json
import logging
import os
import sys
from contextlib import ExitStack

import numpy as np

from .errors import ConfigError, LineSearchFailed, MaxIterations, NotAdmissible

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ADMISSIBLE = 0, 1, 2, 3

log = logging.getLogger("ekreduce")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _emit(args, name, payload):
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    if args.out:
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text + "\n")
    print(text)


def _json_arg(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _background(args, n):
    from .background import background_from_descriptor

    desc = _json_arg(args.background, "--background") if args.background.startswith("{") else {"kind": args.background}
    try:
        return background_from_descriptor(n, desc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"--background: {exc}") from exc


def _spec(args):
    from .operators import EquationSpec

    return EquationSpec(args.family, args.n, args.k, args.l, getattr(args, "almost_complex", False))


# ---------------------------------------------------------------- commands


def cmd_check(args):
    from .operators import SamplePlan, check_structure, default_set

    spec = _spec(args)
    bg = _background(args, spec.n)
    if args.samples < 1 or args.pairs < 1:
        raise ConfigError("--samples and --pairs must be positive")
    setE = default_set(spec, bg, C0=args.c0, K0=args.k0)
    report = check_structure(spec, bg, setE, SamplePlan(args.samples, args.pairs, args.seed))
    _emit(args, "check_report.json", report.to_dict())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_solve(args):
    from .grid import (
        PeriodicGrid, ScalarField, TrigField, manufacture, newton_solve, read_field, write_field,
    )

    spec = _spec(args)
    bg = _background(args, spec.n)
    if (args.manufacture is None) == (args.psi is None):
        raise ConfigError("give exactly one of --manufacture or --psi")
    u_star = None
    if args.psi is not None:
        psi_field = read_field(args.psi)
        grid = psi_field.grid
        if args.m is not None and args.m != grid.m:
            raise ConfigError(f"--m {args.m} does not match the psi file (m={grid.m})")
        psi = psi_field.values
    else:
        if args.m is None:
            raise ConfigError("--m is required with --manufacture")
        grid = PeriodicGrid(spec.dim, args.m)
        trig = TrigField.standard(spec.n, args.manufacture)
        psi, _ = manufacture(spec, bg, trig, grid)
        u_star = trig.sample(grid).mean_zero()
    u0 = ScalarField(grid, np.zeros(grid.size))
    payload = {"spec": spec.to_dict(), "grid_m": grid.m}
    try:
        u, report = newton_solve(spec, bg, u0, psi=psi, tol=args.tol, max_iter=args.max_iter)
    except (LineSearchFailed, MaxIterations) as exc:
        payload.update(error=str(exc), report=exc.report.to_dict())
        _emit(args, "solve_report.json", payload)
        return EXIT_FAIL
    payload["report"] = report.to_dict()
    if u_star is not None:
        payload["error_vs_exact"] = float(np.max(np.abs(u.values - u_star.values)))
    if args.out:
        write_field(os.path.join(args.out, "solution.hfg"), u)
    _emit(args, "solve_report.json", payload)
    return EXIT_OK if report.converged else EXIT_FAIL


def _envelope_context(args):
    from .envelope import DualSettings, ma_context

    return ma_context(args.n, C0=args.c0, route=args.route,
                      dual=DualSettings(samples=args.dual_samples, seed=args.seed))


def cmd_envelope_eval(args):
    from .envelope import envelope_eval

    ctx = _envelope_context(args)
    d = 2 * args.n
    if args.matrix is not None:
        N = np.asarray(_json_arg(args.matrix, "--matrix"), dtype=float)
    else:
        diag = np.asarray(_json_arg(args.diag, "--diag"), dtype=float)
        N = np.diag(np.broadcast_to(diag, (d,)))
    if N.shape != (d, d):
        raise ConfigError(f"matrix must be {d}x{d}, got shape {N.shape}")
    x = np.zeros(d) if args.x is None else np.asarray(_json_arg(args.x, "--x"), dtype=float)
    if x.shape != (d,):
        raise ConfigError(f"--x must have {d} entries")
    value = envelope_eval(ctx, 0.5 * (N + N.T), x)
    _emit(args, "envelope_eval.json", {"value": float(value), "route": ctx.route, "n": args.n})
    return EXIT_OK


def cmd_envelope_verify(args):
    from .envelope import verify_envelope

    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    ctx = _envelope_context(args)
    report = verify_envelope(ctx, trials=args.trials, seed=args.seed)
    _emit(args, "envelope_report.json", report.to_dict())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_report(args):
    from .regularity import ExperimentConfig, run_experiment, write_csv

    if not os.path.isfile(args.config):
        raise ConfigError(f"--config {args.config}: no such file")
    config = ExperimentConfig.from_json(args.config)
    config.seed = args.seed
    target = os.path.join(args.out, "report.csv") if args.out else config.output
    config.output = None
    rows = run_experiment(config)
    if target:
        write_csv(target, rows)
    _emit(args, "report.json", {"config": config.to_dict(), "rows": rows})
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_FAIL


def cmd_lemma(args):
    from .symfun import lemma_bounds, sample_lemma_tuples

    if not 2 <= args.k <= args.n:
        raise ConfigError(f"need 2 <= k <= n, got k={args.k}, n={args.n}")
    rng = np.random.default_rng(args.seed)
    tuples = sample_lemma_tuples(args.n, args.k, args.A, args.samples, rng)
    reports = [lemma_bounds(lam, args.k, args.A) for lam in tuples]
    worst = max(r.K0_empirical for r in reports)
    margin = min(min(r.conclusion_margins) for r in reports)
    payload = {
        "n": args.n, "k": args.k, "A": args.A, "samples": args.samples,
        "worst_K0_empirical": worst, "K0_certified": reports[0].K0_certified,
        "min_conclusion_margin": margin,
        "all_uno": all(r.uno_holds for r in reports), "all_due": all(r.due_holds for r in reports),
    }
    _emit(args, "lemma_report.json", payload)
    return EXIT_OK if margin >= 0 else EXIT_FAIL


# ------------------------------------------------------------------ parser


def _globals(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="RNG seed (u64)")
    parser.add_argument("--threads", type=int, default=default(0), help="worker threads, 0 = auto")
    parser.add_argument("--out", default=default(None), help="output directory")


def _family_flags(p, family_default="ma"):
    p.add_argument("--family", default=family_default,
                   choices=["ma", "hessian", "quotient", "psh-ma", "psh-hessian", "psh-quotient"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--background", default="flat", help="kind name or JSON descriptor")


def build_parser():
    parser = argparse.ArgumentParser(prog="ekreduce", description=__doc__.splitlines()[0])
    _globals(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, **kw):
        p = sub.add_parser(name, **kw)
        _globals(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = command("check", cmd_check, help="certify the structure conditions of an operator")
    _family_flags(p)
    p.add_argument("--c0", type=float, default=4.0)
    p.add_argument("--k0", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--almost-complex", action="store_true")

    p = command("solve", cmd_solve, help="damped Newton solve on a periodic grid")
    _family_flags(p)
    p.add_argument("--m", type=int)
    p.add_argument("--manufacture", type=float, metavar="AMPLITUDE")
    p.add_argument("--psi", metavar="FILE")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=20)

    env = command("envelope", None, help="concave envelope of the Monge-Ampère operator")
    esub = env.add_subparsers(dest="envelope_command", required=True)
    for name, func in (("eval", cmd_envelope_eval), ("verify", cmd_envelope_verify)):
        p = esub.add_parser(name)
        _globals(p, suppress=True)
        p.set_defaults(func=func)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--c0", type=float, default=4.0)
        p.add_argument("--route", choices=["spectral", "dual"], default="spectral")
        p.add_argument("--dual-samples", type=int, default=4096)
        if name == "eval":
            group = p.add_mutually_exclusive_group(required=True)
            group.add_argument("--matrix", help="JSON 2n x 2n matrix")
            group.add_argument("--diag", help="JSON diagonal (scalar or 2n list)")
            p.add_argument("--x", help="JSON chart point")
        else:
            p.add_argument("--trials", type=int, default=500)

    p = command("report", cmd_report, help="refinement experiment to CSV")
    p.add_argument("--config", required=True, help="experiment JSON")

    p = command("lemma", cmd_lemma, help="sampled check of the sigma_k lemma")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--A", type=float, default=4.0)
    p.add_argument("--samples", type=int, default=1000)
    return parser


def _limit_threads(stack, threads):
    from ._accel import numba_enabled

    if threads <= 0:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.debug("threadpoolctl not installed; BLAS threads left unchanged")
    else:
        stack.enter_context(threadpool_limits(limits=threads))
    if numba_enabled():
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0 or args.seed >= 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.threads < 0:
        parser.error("--threads must be >= 0")
    if args.out:
        parent = os.path.dirname(os.path.abspath(args.out))
        if not os.path.isdir(parent):
            parser.error(f"--out: parent directory {parent} does not exist")
        os.makedirs(args.out, exist_ok=True)
    for attr in ("psi", "config"):
        path = getattr(args, attr, None)
        if path is not None and not os.path.isfile(path):
            parser.error(f"--{attr}: no such file {path}")
    with ExitStack() as stack:
        _limit_threads(stack, args.threads)
        try:
            return args.func(args)
        except NotAdmissible as exc:
            print(f"error: {exc} (point {exc.point})", file=sys.stderr)
            return EXIT_ADMISSIBLE
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

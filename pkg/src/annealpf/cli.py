"""Command-line orchestration: instance generation, presampling,
estimation, exact analysis, parameter scans, and CSV export.

Exit codes: 0 success, 2 usage or invalid argument, 3 resource cap,
4 numerical failure (no root), 5 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import estimator, oracle, sampling
from .errors import NoRootError, ResourceLimitError
from .estimator import FORMAT_VERSION
from .evolution import Schedule
from .model import (
    instance_digest,
    read_instance,
    sat3_instance,
    sk_instance,
    write_instance,
)

_SAMPLERS = ("je", "variational", "optimal", "practical")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _intlike(text: str) -> int:
    """Integer flag value; scientific notation accepted (1e4 -> 10000)."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def resolve_workers(flag: int | None) -> int:
    """Flag wins, then ANNEALPF_WORKERS, then available parallelism."""
    if flag is not None:
        return flag
    env = os.environ.get("ANNEALPF_WORKERS", "").strip()
    if env:
        return _intlike(env)
    return os.cpu_count() or 1


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=_intlike, default=0, help="master seed (default 0)")
    parser.add_argument(
        "--workers", type=_intlike, default=None,
        help="worker count; results are identical for any value "
             "(default: ANNEALPF_WORKERS or the available parallelism)",
    )
    parser.add_argument("--out", type=str, default=None, help="output file path")
    parser.add_argument(
        "--format-version", type=str, default=None,
        help=f"expected record format version (current: {FORMAT_VERSION})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annealpf",
        description="Trajectory-sampling estimator for Ising partition functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a problem instance file")
    _common(p)
    p.add_argument("--model", choices=("sk", "sat3"), required=True)
    p.add_argument("--n", type=_intlike, required=True)
    p.add_argument("--clause-ratio", type=float, default=4.25)
    p.add_argument("--p0", type=float, default=1 / 7)
    p.add_argument("--p1", type=float, default=1 / 14)
    p.add_argument("--p2", type=float, default=3 / 14)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("presample", help="measure trajectories from all low shells")
    _common(p)
    p.add_argument("--instance", type=str, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--n-e", type=_intlike, required=True, dest="n_e")
    p.add_argument("--m-ps", type=_intlike, required=True, dest="m_ps")
    p.add_argument("--betas", type=_floats, default=[])
    p.set_defaults(func=cmd_presample)

    p = sub.add_parser("estimate", help="run the trajectory estimator")
    _common(p)
    p.add_argument("--instance", type=str, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--sampler", choices=_SAMPLERS, required=True)
    p.add_argument("--betas", type=_floats, required=True)
    p.add_argument("--m-s", type=_intlike, required=True, dest="m_s")
    p.add_argument("--alpha", type=float, default=None,
                   help="fixed alpha for the variational sampler (default: solved exactly)")
    p.add_argument("--n-e", type=_intlike, default=None, dest="n_e")
    p.add_argument("--m-ps", type=_intlike, default=None, dest="m_ps")
    p.add_argument("--presample", type=str, default=None,
                   help="reuse a presample file instead of --n-e/--m-ps")
    p.add_argument("--reuse", action="store_true",
                   help="fold presample records into the estimate "
                        "(practical sampler only; stratified, still unbiased)")
    p.add_argument("--no-trajectories", action="store_true",
                   help="omit per-trajectory arrays from the records")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="exact analysis of one instance")
    _common(p)
    p.add_argument("--instance", type=str, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--betas", type=_floats, required=True)
    p.add_argument("--locality", action="store_true",
                   help="also write the three site-pair matrices as CSV")
    p.add_argument("--alpha", type=float, default=None,
                   help="alpha for the locality matrices (default: solved exactly)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("scan", help="aggregate exact relative variance over an axis")
    _common(p)
    p.add_argument("--axis", choices=("tau", "beta", "n", "sampler"), required=True)
    p.add_argument("--values", type=str, required=True,
                   help="comma-separated axis values (sampler names for --axis sampler)")
    p.add_argument("--model", choices=("sk", "sat3"), default="sk")
    p.add_argument("--n", type=_intlike, default=6)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--sampler", choices=_SAMPLERS, default="optimal")
    p.add_argument("--instances", type=_intlike, default=10)
    p.add_argument("--tau0", type=float, default=None,
                   help="fixed preparation time; adds a cost column to a tau scan")
    p.add_argument("--n-e", type=_intlike, default=1, dest="n_e")
    p.add_argument("--m-ps", type=_intlike, default=50, dest="m_ps")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("export-csv", help="flatten result records to CSV")
    _common(p)
    p.add_argument("--in", dest="infile", type=str, required=True)
    p.set_defaults(func=cmd_export)

    return parser


def _require_out(args) -> str:
    if not args.out:
        raise ValueError("--out is required for this command")
    return args.out


def _check_format(args) -> None:
    if args.format_version is not None and args.format_version != FORMAT_VERSION:
        raise ValueError(
            f"format version mismatch: this build writes {FORMAT_VERSION}, requested {args.format_version}"
        )


def cmd_gen(args) -> int:
    out = _require_out(args)
    if args.model == "sk":
        inst = sk_instance(args.n, args.seed)
    else:
        inst = sat3_instance(args.n, args.clause_ratio, args.p0, args.p1, args.p2, args.seed)
    digest = write_instance(out, inst)
    print(digest)
    return 0


def cmd_presample(args) -> int:
    out = _require_out(args)
    inst = read_instance(args.instance)
    schedule = Schedule(args.tau, args.dt)
    pre = sampling.presample(
        inst, schedule, args.n_e, args.m_ps, betas=args.betas, seed=args.seed
    )
    sampling.write_presample(out, pre)
    print(f"presampled {len(pre.records)} states x {pre.m_ps} trajectories")
    return 0


def _build_practical(inst, schedule, args, beta):
    if args.presample:
        pre = sampling.read_presample(args.presample)
        if (pre.tau, pre.dt) != (schedule.tau, schedule.dt):
            raise ValueError(
                f"presample file was generated at tau={pre.tau}, dt={pre.dt}, "
                f"but this run uses tau={schedule.tau}, dt={schedule.dt}"
            )
    else:
        if args.n_e is None or args.m_ps is None:
            raise ValueError("practical sampler needs --n-e and --m-ps (or --presample)")
        pre = sampling.presample(inst, schedule, args.n_e, args.m_ps, seed=args.seed)
    alpha_prime = sampling.solve_alpha_practical(pre, inst.n, beta)
    dist = sampling.practical_distribution(pre, alpha_prime, inst.n, beta)
    return pre, dist, alpha_prime


def cmd_estimate(args) -> int:
    out = _require_out(args)
    inst = read_instance(args.instance)
    digest = instance_digest(inst)
    schedule = Schedule(args.tau, args.dt)
    config = {
        "instance": args.instance,
        "sampler": args.sampler,
        "tau": args.tau,
        "dt": args.dt,
        "m_s": args.m_s,
        "seed": args.seed,
        "workers": args.workers,
        "n_e": args.n_e,
        "m_ps": args.m_ps,
        "presample": args.presample,
        "alpha": args.alpha,
        "reuse": args.reuse,
    }
    if args.reuse and args.sampler != "practical":
        raise ValueError("--reuse applies only to the practical sampler")
    wrote = 0
    for beta in args.betas:
        extras = {}
        pre = None
        try:
            if args.sampler == "je":
                dist = sampling.je_gibbs(beta, inst.n)
            elif args.sampler == "variational":
                if args.alpha is not None:
                    alpha = args.alpha
                else:
                    alpha = sampling.solve_alpha_exact(oracle.exact_mu(inst, schedule, beta), inst.n)
                extras["alpha"] = alpha
                dist = sampling.variational_gibbs(alpha, inst.n)
            elif args.sampler == "optimal":
                dist = sampling.exact_optimal(oracle.exact_mu(inst, schedule, beta))
            else:
                pre, dist, alpha_prime = _build_practical(inst, schedule, args, beta)
                extras["alpha_prime"] = alpha_prime
        except NoRootError as exc:
            estimator.append_jsonl(out, [{
                "format_version": FORMAT_VERSION,
                "record": "error",
                "instance_digest": digest,
                "beta": beta,
                "error": str(exc),
                "config": config,
            }])
            print(f"beta={beta}: no root ({exc}); continuing", file=sys.stderr)
            continue
        workers = resolve_workers(args.workers)
        if args.reuse:
            result = estimator.reuse_estimate(
                inst, schedule, pre, dist, beta, args.m_s,
                seed=args.seed, workers=workers,
            )
        else:
            result = estimator.estimate_z(
                inst, schedule, dist, beta, args.m_s, seed=args.seed, workers=workers
            )
        rec = estimator.result_record(
            result, digest, config=config, extras=extras,
            include_trajectories=not args.no_trajectories,
        )
        estimator.append_jsonl(out, [rec])
        wrote += 1
        print(f"beta={beta}: z_est={result.z_est:.12g} se={result.standard_error:.3g}")
    if wrote == 0 and args.betas:
        raise NoRootError("no beta value produced an estimate")
    return 0


def cmd_oracle(args) -> int:
    out = _require_out(args)
    inst = read_instance(args.instance)
    schedule = Schedule(args.tau, args.dt)
    analyses = []
    for beta in args.betas:
        ana = oracle.exact_analysis(inst, schedule, beta)
        analyses.append(ana.to_json_dict())
        print(
            f"beta={beta}: z1={ana.z1:.12g} sigma2_min={ana.sigma2_min:.6g} "
            f"alpha_star={ana.alpha_star:.6f} alpha_kl={ana.alpha_kl:.6f}"
        )
    doc = {
        "format_version": FORMAT_VERSION,
        "record": "oracle",
        "instance_digest": instance_digest(inst),
        "schedule": {"tau": schedule.tau, "dt": schedule.dt, "gamma": schedule.gamma},
        "analyses": analyses,
    }
    import json

    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    if args.locality:
        beta = args.betas[0]
        alpha = args.alpha
        if alpha is None:
            alpha = analyses[0]["alpha_star"]
        mats = oracle.locality_diagnostic(inst, schedule, beta, alpha)
        for name, mat in zip(("below", "direct", "above"), mats):
            oracle.write_locality_csv(f"{out}.{name}.csv", mat)
    return 0


def _scan_instance(model, n, seed_material):
    seed = int(np.random.SeedSequence(seed_material).generate_state(1, dtype=np.uint64)[0])
    if model == "sk":
        return sk_instance(n, seed)
    return sat3_instance(n, seed=seed)


def _scan_cell(inst, schedule, beta, sampler, args, cell, k):
    """One instance's exact relative variance and alpha-star for the scan."""
    from .model import target_spectrum

    z1 = oracle.exact_partition(target_spectrum(inst), beta)
    mu = oracle.exact_mu(inst, schedule, beta)
    alpha_star = sampling.solve_alpha_exact(mu, inst.n)
    if sampler == "optimal":
        sigma2 = estimator.min_variance(mu, z1)
    elif sampler == "je":
        sigma2 = estimator.exact_variance(sampling.je_gibbs(beta, inst.n), mu, z1)
    elif sampler == "variational":
        sigma2 = estimator.exact_variance(
            sampling.variational_gibbs(alpha_star, inst.n), mu, z1
        )
    else:
        ps_seed = int(
            np.random.SeedSequence((args.seed, cell, k, 1)).generate_state(1, dtype=np.uint64)[0]
        )
        pre = sampling.presample(inst, schedule, args.n_e, args.m_ps, seed=ps_seed)
        alpha_prime = sampling.solve_alpha_practical(pre, inst.n, beta)
        dist = sampling.practical_distribution(pre, alpha_prime, inst.n, beta)
        sigma2 = estimator.exact_variance(dist, mu, z1)
    return sigma2 / (z1 * z1), alpha_star


def cmd_scan(args) -> int:
    import csv

    out = _require_out(args)
    if args.axis == "sampler":
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        bad = [v for v in values if v not in _SAMPLERS]
        if bad:
            raise ValueError(f"unknown sampler(s) in --values: {bad}")
    else:
        values = _floats(args.values)
    if not values:
        raise ValueError("--values must be nonempty")

    rows = []
    for cell, value in enumerate(values):
        n = args.n
        beta = args.beta
        tau = args.tau
        sampler = args.sampler
        if args.axis == "n":
            n = int(value)
        elif args.axis == "beta":
            beta = float(value)
        elif args.axis == "tau":
            tau = float(value)
        else:
            sampler = value
        schedule = Schedule(tau, args.dt)
        relvars, alpha_stars = [], []
        for k in range(args.instances):
            inst = _scan_instance(args.model, n, (args.seed, cell, k))
            relvar, alpha_star = _scan_cell(inst, schedule, beta, sampler, args, cell, k)
            relvars.append(relvar)
            alpha_stars.append(alpha_star)
        row = {
            "axis": args.axis,
            "value": value,
            "model": args.model,
            "n": n,
            "beta": beta,
            "tau": tau,
            "sampler": sampler,
            "instances": args.instances,
            "mean_relvar": float(np.mean(relvars)),
            "mean_alpha_star": float(np.mean(alpha_stars)),
        }
        if args.axis == "tau" and args.tau0 is not None:
            row["relvar_cost"] = estimator.total_cost(args.tau0, tau, row["mean_relvar"])
        rows.append(row)
        print(f"{args.axis}={value}: mean relvar {row['mean_relvar']:.6g}")

    columns = list(rows[0].keys())
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)

    if args.axis == "n" and len(rows) >= 3:
        fit = estimator.fit_gamma([(r["n"], r["mean_relvar"]) for r in rows])
        print(f"gamma = {fit.gamma:.6f} (intercept {fit.intercept:.4f})")
    return 0


def cmd_export(args) -> int:
    out = _require_out(args)
    estimator.export_csv(estimator.read_jsonl(args.infile), out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_format(args)
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except NoRootError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())

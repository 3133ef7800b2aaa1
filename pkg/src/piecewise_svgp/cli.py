"""Command-line interface: ``piecewise-svgp <command> ...``.

Exit status is 0 on success, 2 on invalid input and 1 on numerical failure.
"""

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .config import TASK_VARIANT, ExperimentConfig
from .data import DataError, crossval, ingest_csv, read_features, zstandardize
from .elbo import predictive_mixture
from .errors import NotPositiveDefiniteError, NumericalError
from .mc_oracle import mc_link_mse, mc_objective_expectation
from .piecewise import (
    INVERSE_LINKS,
    discretize_link,
    exp_link_mse,
    lipschitz_mse_bound,
    sigmoid_link,
    uniform_partition,
    write_link_csv,
)
from .svgp import load_checkpoint, save_checkpoint
from .testing import random_instance
from .train import (
    Problem,
    build_problem,
    build_regularizer,
    fit,
    gradient_check,
    restore_checkpoint,
    result_checkpoint,
)

logger = logging.getLogger("piecewise_svgp")

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID = 0, 1, 2

# Config fields settable from the command line: (flag, field, type).
CONFIG_FLAGS = [
    ("--task", "task", str),
    ("-K", "K", int),
    ("--lo", "lo", float),
    ("--hi", "hi", float),
    ("-M", "M", int),
    ("--link-mode", "link_mode", str),
    ("--regularizer", "regularizer", str),
    ("--lam", "lam", float),
    ("--c", "c", float),
    ("--reference", "reference", str),
    ("--prior-var", "prior_var", float),
    ("--alpha", "alpha", float),
    ("--iters", "iters", int),
    ("--tol", "tol", float),
    ("--patience", "patience", int),
    ("--base-jitter", "base_jitter", float),
    ("--folds", "folds", int),
    ("--seed", "seed", int),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INVALID)


def _add_config_flags(p, data_required=True):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--data", required=data_required, help="CSV with a header row")
    p.add_argument("--target", help="target column name or 0-based index (default: last)")
    for flag, dest, typ in CONFIG_FLAGS:
        p.add_argument(flag, dest=dest, type=typ, default=None)
    p.add_argument("--freeze-inducing", action="store_true", help="keep inducing locations fixed")


def _config_from(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {dest: getattr(args, dest) for _, dest, _ in CONFIG_FLAGS if getattr(args, dest) is not None}
    if args.freeze_inducing:
        changes["train_inducing"] = False
    if getattr(args, "data", None):
        changes["data"] = args.data
    if getattr(args, "target", None) is not None:
        changes["target"] = args.target
    return cfg.replace(**changes) if changes else cfg


def _load_dataset(cfg):
    if not cfg.data:
        raise DataError("no --data given")
    return ingest_csv(cfg.data, cfg.target, task=cfg.task)


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_config(args):
    if not args.defaults and not args.config:
        raise DataError("use --defaults or --config FILE")
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_OK


def cmd_train(args):
    cfg = _config_from(args)
    ds = _load_dataset(cfg)
    train = zstandardize(ds, standardize_target=cfg.task != "classify")
    rng = np.random.default_rng(cfg.seed)
    problem = build_problem(cfg, train.X, train.y, rng)
    if args.gradcheck:
        _report_gradcheck(gradient_check(problem), "initial parameters")
    res = fit(cfg, train, problem=problem)
    meta = {"n_train": len(train), "n_steps": len(res.trace) - 1}
    if args.paper_compat:
        meta["elbo_paper_compat"] = float(problem.terms(paper_compat=True).value)
        meta["elbo_standard"] = float(problem.terms().value)
    doc = result_checkpoint(res, cfg, meta=meta,
                            extra={"standardization": train.stats_dict(), "target_name": train.target_name})
    save_checkpoint(args.out, doc)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "elbo", "grad_norm"])
            for step, val, gn in res.trace:
                w.writerow([step, repr(val), repr(gn)])
    tr = res.elbo_trace
    print(f"trained {cfg.task}: {len(res.trace) - 1} steps, ELBO {tr[0]:.6g} -> {tr[-1]:.6g}; wrote {args.out}")
    if args.paper_compat:
        print(f"printed-form objective at the fit: {meta['elbo_paper_compat']:.6g} "
              f"(standard form {meta['elbo_standard']:.6g})")
    return EXIT_OK


def cmd_predict(args):
    doc = load_checkpoint(args.checkpoint)
    cfg, models, link = restore_checkpoint(doc)
    st = doc["standardization"]
    X, y = read_features(args.data, st["feature_names"], doc.get("target_name"))
    Xs = (X - np.asarray(st["x_mean"])) / np.asarray(st["x_sd"])
    mix = predictive_mixture(models, link, Xs, TASK_VARIANT[cfg.task])
    classify = cfg.task == "classify"
    mean = mix.mean()
    if st["y_mean"] is not None:
        mean = mean * st["y_sd"] + st["y_mean"]
    if y is None:
        logdens = np.full(len(mix), np.nan)
    else:
        ys = y if st["y_mean"] is None else (y - st["y_mean"]) / st["y_sd"]
        logdens = mix.log_density(ys)
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "mean", "log_density"] + (["class_prob"] if classify else []))
        cp = mix.class_prob() if classify else None
        for i in range(len(mix)):
            row = [i, repr(float(mean[i])), repr(float(logdens[i]))]
            if classify:
                row.append(repr(float(cp[i])))
            w.writerow(row)
    finally:
        _close_out(fh)
    return EXIT_OK


def cmd_crossval(args):
    cfg = _config_from(args)
    ds = _load_dataset(cfg)
    report = crossval(cfg, ds)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            report.write_csv(fh)
    else:
        report.write_csv(sys.stdout)
    print(report.summary(), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _init_link(name, K, lo, hi):
    p = uniform_partition(K, lo, hi)
    if name == "sigmoid":
        return sigmoid_link(p)
    return discretize_link(name, p)


def cmd_linkdump(args):
    if bool(args.checkpoint) == bool(args.init):
        raise DataError("give exactly one of --checkpoint or --init")
    if args.checkpoint:
        _, _, link = restore_checkpoint(load_checkpoint(args.checkpoint))
        if link is None:
            raise DataError(f"{args.checkpoint} has no piecewise link")
    else:
        link = _init_link(args.init, args.K, args.lo, args.hi)
    fh = _open_out(args.out)
    try:
        write_link_csv(link, fh)
    finally:
        _close_out(fh)
    return EXIT_OK


def cmd_bound(args):
    if not args.exp and args.lipschitz is None:
        raise DataError("give --exp and/or --lipschitz LAMBDA")
    p = uniform_partition(args.K, args.lo, args.hi)
    if args.lipschitz is not None:
        b = lipschitz_mse_bound(p, args.lipschitz, args.mu, args.sigma, link=args.link,
                                allow_non_lipschitz=args.allow_non_lipschitz)
        print(f"lipschitz_bound {b!r}")
    if args.exp:
        print(f"exp_mse {exp_link_mse(p, args.mu, args.sigma)!r}")
    return EXIT_OK


def _print_estimate(est, closed=None, label="closed_form"):
    print(f"mean {est.mean!r}")
    print(f"std_error {est.std_error!r}")
    print(f"n {est.n_samples}")
    print(f"seed {est.seed}")
    print(f"rng {est.rng}")
    if closed is not None:
        print(f"{label} {closed!r}")
        print(f"z {est.z_score(closed):.3f}")


def cmd_oracle(args):
    if args.checkpoint:
        if not args.data:
            raise DataError("--checkpoint needs --data")
        doc = load_checkpoint(args.checkpoint)
        cfg, models, link = restore_checkpoint(doc)
        st = doc["standardization"]
        X, y = read_features(args.data, st["feature_names"], doc.get("target_name"))
        if y is None:
            raise DataError(f"{args.data} lacks the target column {doc.get('target_name')!r}")
        Xs = (X - np.asarray(st["x_mean"])) / np.asarray(st["x_sd"])
        ys = y if st["y_mean"] is None else (y - st["y_mean"]) / st["y_sd"]
        problem = Problem(TASK_VARIANT[cfg.task], models, link, Xs, ys, build_regularizer(cfg))
        est = mc_objective_expectation(problem, n=args.n, seed=args.seed)
        _print_estimate(est, float(problem.terms().expectation), "closed_form_expectation")
        return EXIT_OK
    link = _init_link(args.link, args.K, args.lo, args.hi)
    est = mc_link_mse(INVERSE_LINKS[args.link], link, args.mu, args.sigma, n=args.n, seed=args.seed)
    closed, label = None, None
    if args.link == "exp":
        closed, label = exp_link_mse(link.partition, args.mu, args.sigma), "exp_mse"
    elif args.link in ("sigmoid", "identity"):
        lam = 0.25 if args.link == "sigmoid" else 1.0
        closed = lipschitz_mse_bound(link.partition, lam, args.mu, args.sigma, link=args.link)
        label = "lipschitz_bound"
    _print_estimate(est, closed, label)
    return EXIT_OK


def _report_gradcheck(ratios, label):
    worst = max(ratios.values()) if ratios else 0.0
    print(f"gradient check ({label}):")
    for name, r in ratios.items():
        print(f"  {name:<16} ratio {r:.3g}  {'ok' if r <= 1 else 'FAIL'}")
    return worst <= 1


def cmd_gradcheck(args):
    ok = True
    if args.data:
        cfg = _config_from(args)
        ds = zstandardize(_load_dataset(cfg), standardize_target=cfg.task != "classify")
        problem = build_problem(cfg, ds.X, ds.y, np.random.default_rng(cfg.seed))
        ok = _report_gradcheck(gradient_check(problem, h=args.h), f"task={cfg.task}")
    else:
        for seed in range(args.seeds):
            problem = random_instance(args.variant, seed, regularizer=args.regularizer or "none")
            ok &= _report_gradcheck(gradient_check(problem, h=args.h), f"{args.variant} seed {seed}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser():
    ap = _Parser(prog="piecewise-svgp", description="Sparse variational GPs with piecewise-constant inverse links.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", help="print configuration")
    p.add_argument("--defaults", action="store_true", help="print every default as JSON")
    p.add_argument("--config", help="print this config file with defaults filled in")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("train", help="fit on a CSV and write a checkpoint")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--trace", help="write step,elbo,grad_norm CSV here")
    p.add_argument("--paper-compat", action="store_true",
                   help="also evaluate the printed-form objective at the fit (reported only)")
    p.add_argument("--gradcheck", action="store_true", help="finite-difference check before training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predictive mixture summaries for a CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval", help="seeded k-fold cross-validation")
    _add_config_flags(p)
    p.add_argument("--out", help="metrics CSV path (default stdout)")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("linkdump", help="write a piecewise link as CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--init", choices=sorted(INVERSE_LINKS))
    _partition_flags(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_linkdump)

    p = sub.add_parser("bound", help="Lipschitz MSE bound and exact exp-link MSE")
    p.add_argument("--exp", action="store_true", help="exact MSE of the discretized exp link")
    p.add_argument("--lipschitz", type=float, metavar="LAMBDA", help="Lipschitz constant for the bound")
    p.add_argument("--link", choices=sorted(INVERSE_LINKS), help="link the bound is meant for")
    p.add_argument("--allow-non-lipschitz", action="store_true")
    _partition_flags(p)
    _gauss_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("oracle", help="Monte-Carlo cross-check of a closed form")
    p.add_argument("--link", choices=sorted(INVERSE_LINKS), default="exp")
    _partition_flags(p)
    _gauss_flags(p)
    p.add_argument("--checkpoint", help="estimate the expected log-likelihood of this fit instead")
    p.add_argument("--data", help="CSV for --checkpoint")
    p.add_argument("-n", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_config_flags(p, data_required=False)
    p.add_argument("--variant", choices=sorted(set(TASK_VARIANT.values())), default="bernoulli",
                   help="objective for random instances (without --data)")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def _partition_flags(p):
    p.add_argument("-K", type=int, default=20)
    p.add_argument("--lo", type=float, default=-3.0)
    p.add_argument("--hi", type=float, default=3.0)


def _gauss_flags(p):
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

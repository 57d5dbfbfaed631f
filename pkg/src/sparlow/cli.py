"""Command line front end: ``sparlow <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 file errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import DataFormatError, SparLowError
from .graphs import VARIANTS, GraphSpec
from .io import load_dataset, write_csv_matrix
from .optimizer import CGConfig
from .pipeline import Model, TrainConfig, embed, evaluate_1nn, export_features, learn_dictionary, train
from .sparse import ElasticNetPrior

VARIANT_CHOICES = sorted(set(VARIANTS) | {"lap"})


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="data file, one sample per row (csv) or raw float64")
    p.add_argument("--labels", help="label file (default: sibling .labels file if present)")
    p.add_argument("--format", choices=("csv", "raw"), default="csv")


def _add_model_params(p):
    p.add_argument("--variant", choices=VARIANT_CHOICES, default="pca")
    p.add_argument("--atoms", type=int, default=40, help="dictionary size r")
    p.add_argument("--dim", type=int, default=2, help="projection rank l")
    p.add_argument("--lambda1", type=float, default=0.2)
    p.add_argument("--lambda2", type=float, default=1e-3)
    p.add_argument("--sigma", type=float, default=1e-3)
    p.add_argument("--mu1", type=float, default=2.5e-4)
    p.add_argument("--mu2", type=float, default=5e-3)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--heat-t", type=float, default=None)
    p.add_argument("--k1", type=int, default=5)
    p.add_argument("--k2", type=int, default=20)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--alpha1", type=float, default=0.1)
    p.add_argument("--alpha2", type=float, default=0.01)
    p.add_argument("--mu-mvr", type=float, default=0.1)
    p.add_argument("--rho1", type=float, default=0.1)
    p.add_argument("--rho2", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-7, help="step-norm stopping tolerance")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparlow", description="Joint dictionary and projection learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn-dict", help="learn an initial dictionary by alternating coding and least squares")
    _add_data(p)
    p.add_argument("--atoms", type=int, default=40)
    p.add_argument("--lambda1", type=float, default=0.2)
    p.add_argument("--lambda2", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=10, help="number of alternations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output, one atom per row")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("train", help="train a model")
    _add_data(p)
    _add_model_params(p)
    p.add_argument("--model", "--out", dest="model", required=True, help="model output path")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("embed", help="embed samples with a trained model")
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="CSV output, one embedded sample per row")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="1NN accuracy of a trained model")
    _add_data(p)
    p.add_argument("--test-data", required=True)
    p.add_argument("--test-labels")
    p.add_argument("--model", required=True)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("export-features", help="write the learned features D U as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("check-grad", help="finite-difference check of the analytic gradients")
    _add_data(p, required=False)
    _add_model_params(p)
    p.set_defaults(atoms=12, dim=3, knn=4, k1=2, k2=4)
    p.add_argument("--probes", type=int, default=3)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--verbose", action="store_true")
    return parser


def _spec(args) -> GraphSpec:
    return GraphSpec(variant=args.variant, knn=args.knn, heat_t=args.heat_t, k1=args.k1, k2=args.k2,
                     alpha=args.alpha, alpha1=args.alpha1, alpha2=args.alpha2, mu_mvr=args.mu_mvr,
                     rho1=args.rho1, rho2=args.rho2)


def _load(args, path=None, labels=None):
    return load_dataset(path or args.data, args.format, labels)


def _labels_of(ds, what="data"):
    if ds.labels is None:
        raise DataFormatError(f"no labels found for the {what}")
    return ds.labels


def cmd_learn_dict(args) -> int:
    ds = _load(args, labels=args.labels)
    init = learn_dictionary(ds.X, args.atoms, ElasticNetPrior(args.lambda1, args.lambda2), args.max_iter, args.seed)
    write_csv_matrix(args.out, init.D.T)
    err = init.errors[-1][1] if init.errors else float("nan")
    print(f"atoms\t{args.atoms}\treconstruction\t{err:.6g}")
    return 0


def cmd_train(args) -> int:
    ds = _load(args, labels=args.labels)
    config = TrainConfig(
        atoms=args.atoms, dim=args.dim, spec=_spec(args),
        prior=ElasticNetPrior(args.lambda1, args.lambda2), sigma=args.sigma, mu1=args.mu1, mu2=args.mu2,
        cg=CGConfig(max_iters=args.max_iter, step_tol=args.tol, seed=args.seed, verbose=args.verbose),
        seed=args.seed,
    )
    result = train(ds.X, ds.labels, config)
    result.model.save(args.model)
    print(f"J\t{result.initial.J_value:.12g}\t->\t{result.final.J_value:.12g}")
    print(f"iterations\t{result.trace.iterations}\tstop\t{result.trace.stop_reason}")
    return 0


def cmd_embed(args) -> int:
    model = Model.load(args.model)
    ds = _load(args, labels=args.labels)
    write_csv_matrix(args.out, embed(model, ds.X).T)
    return 0


def cmd_eval(args) -> int:
    model = Model.load(args.model)
    train_ds = _load(args, labels=args.labels)
    test_ds = _load(args, args.test_data, args.test_labels)
    acc = evaluate_1nn(embed(model, train_ds.X), _labels_of(train_ds, "training data"),
                       embed(model, test_ds.X), _labels_of(test_ds, "test data"))
    print(f"accuracy\t{acc:.6f}")
    return 0


def cmd_export_features(args) -> int:
    model = Model.load(args.model)
    F = export_features(model, args.out)
    print(f"features\t{F.shape[0]}x{F.shape[1]}")
    return 0


def cmd_check_grad(args) -> int:
    from .gradcheck import check_grad, default_instance

    spec = _spec(args)
    if args.data:
        ds = _load(args, labels=args.labels)
        X, labels = ds.X, ds.labels
    else:
        X, labels = default_instance(args.seed, semi=spec.variant in ("sda", "slap", "smvr"))
    report = check_grad(X, labels, spec, atoms=args.atoms, dim=args.dim,
                        prior=ElasticNetPrior(args.lambda1, args.lambda2), sigma=args.sigma,
                        mu1=args.mu1, mu2=args.mu2, seed=args.seed, probes=args.probes, corrupt=args.corrupt)
    for line in report.lines():
        print(line)
    return 0


COMMANDS = {
    "learn-dict": cmd_learn_dict,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "export-features": cmd_export_features,
    "check-grad": cmd_check_grad,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SparLowError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``rpls fit | cv | vip | predict | simulate``.

Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage or
configuration errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data_io, spd
from .exceptions import RplsError
from .frechet import FrechetConfig
from .inference import vip_inference
from .manifolds import EuclideanManifold, SPDManifold
from .model import generate_synthetic, rpls_predict, tnipals_fit
from .model_selection import cross_validate, kfold_split

logger = logging.getLogger("rpls")

WORKERS_ENV = "RPLS_WORKERS"


class UsageError(Exception):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _k_range(s):
    ks = set()
    for part in str(s).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            ks.update(range(int(lo), int(hi) + 1))
        elif part:
            ks.add(int(part))
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"invalid component range {s!r}")
    return sorted(ks)


def _csv_list(s):
    return [x.strip() for x in str(s).split(",") if x.strip()]


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


def _add_data_args(p, phenotypes=True):
    p.add_argument("--manifest", help="subject_id,path manifest of matrix files")
    if phenotypes:
        p.add_argument("--phenotypes", help="phenotype table (first column subject ids)")
        p.add_argument("--responses", type=_csv_list, help="comma-separated response columns")
    p.add_argument("--timeseries", action="store_true",
                   help="input files are T x R time series, not matrices")
    p.add_argument("--regularize", action="store_true",
                   help="use F + I for the riemannian method")
    p.add_argument("--roi-labels", help="file with one ROI label per line")
    p.add_argument("--network-map", help="roi,network table for network-averaged outputs")


def _add_fit_args(p):
    p.add_argument("--method", choices=data_io.METHODS, default="riemannian")
    p.add_argument("--frechet-tol", type=float, default=1e-6)
    p.add_argument("--frechet-step", type=float, default=1.0)
    p.add_argument("--frechet-max-iter", type=_positive_int, default=200)
    p.add_argument("--nipals-tol", type=float, default=1e-10)
    p.add_argument("--nipals-max-iter", type=_positive_int, default=500)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rpls", description="Riemannian partial least squares for connectivity matrices.")
    parser.add_argument("--config", help="key = value file; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    def common(p):
        p.add_argument("--out", required=False, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=_positive_int, default=None,
                       help=f"worker processes (default ${WORKERS_ENV} or 1)")

    p = sub.add_parser("fit", help="fit a model and write coefficient matrices")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--components", "-K", type=_positive_int, default=2)
    common(p)

    p = sub.add_parser("cv", help="ten-fold cross-validation over K")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--methods", type=_csv_list, default=None,
                   help="compare several methods on the same folds")
    p.add_argument("--components", "-K", type=_k_range, default=list(range(1, 11)))
    p.add_argument("--folds", type=_positive_int, default=10)
    p.add_argument("--group", help="0/1 response column used for classification metrics")
    p.add_argument("--threshold", type=float, default=0.5)
    common(p)

    p = sub.add_parser("vip", help="permutation test of VIP scores")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--components", "-K", type=_positive_int, default=2)
    p.add_argument("--permutations", "-H", type=_positive_int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--smoothed", action="store_true", help="report (count+1)/(H+1)")
    common(p)

    p = sub.add_parser("predict", help="predict responses with a saved model")
    _add_data_args(p, phenotypes=False)
    p.add_argument("--model", required=False, help="model file written by 'fit'")
    common(p)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--dim", type=_positive_int, default=10, help="matrix size R")
    p.add_argument("--subjects", type=_positive_int, default=100)
    p.add_argument("--latent", type=_positive_int, default=2)
    p.add_argument("--n-responses", type=_positive_int, default=2)
    p.add_argument("--loading-scale", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.05)
    common(p)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        sub = parser.subcommands[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys for '{args.command}': {unknown}")
        converted = {}
        for key, raw in cfg.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                converted[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    converted[key] = action.type(raw)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
            else:
                converted[key] = raw
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)
    if args.workers is None:
        env = os.environ.get(WORKERS_ENV)
        args.workers = int(env) if env else 1
    return args


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _roi_labels(args):
    if not args.roi_labels:
        return None
    return [ln.strip() for ln in Path(args.roi_labels).read_text().splitlines() if ln.strip()]


def _load(args):
    _require(args, "manifest", "phenotypes")
    return data_io.load_dataset(args.manifest, args.phenotypes, args.responses,
                                timeseries=args.timeseries, roi_labels=_roi_labels(args))


def _frechet_cfg(args):
    return FrechetConfig(args.frechet_tol, args.frechet_step, args.frechet_max_iter)


def _features(ds, method, regularize):
    return data_io.method_features(ds.matrices, method, regularize)


def _fit_meta(args, ds, method):
    return {
        "method": method,
        "regularize": bool(args.regularize),
        "timeseries": bool(args.timeseries),
        "response_names": list(ds.response_names),
        "encodings": ds.encodings,
        "roi_labels": ds.roi_labels,
        "dim": int(ds.dim),
        "seed": int(args.seed),
    }


def _coefficient_outputs(out, model, meta, netmap, prefix="", significant=None):
    """Per-response coefficient matrices plus optional network averages."""
    coef = model.beta.coef
    for j, name in enumerate(meta["response_names"]):
        col = coef[:, j].copy()
        if significant is not None:
            col[~significant] = 0.0
        if meta["method"] == "riemannian":
            M = spd.unvec_at(model.mu_x, col).matrix
        else:
            M = data_io.from_upper_triangle(col)
        data_io.write_matrix(out / f"{prefix}coef_{name}.csv", M)
        if netmap is not None:
            A = data_io.network_average(col, netmap)
            data_io.write_matrix(out / f"{prefix}network_{name}.csv", A)
            data_io.write_matrix(out / f"{prefix}network_{name}_top25.csv",
                                 data_io.top_quartile_mask(A).astype(float))


def _netmap(args):
    return data_io.read_network_map(args.network_map) if args.network_map else None


def cmd_fit(args):
    _require(args, "out")
    ds = _load(args)
    out = data_io.ensure_dir(args.out)
    X = _features(ds, args.method, args.regularize)
    model = tnipals_fit(X, ds.responses, args.components, frechet_cfg=_frechet_cfg(args),
                        tol=args.nipals_tol, max_iter=args.nipals_max_iter, scale_y=True)
    meta = _fit_meta(args, ds, args.method)
    data_io.save_model(model, out / "model.json", meta)
    _coefficient_outputs(out, model, meta, _netmap(args))
    if not model.converged:
        logger.warning("Fréchet mean did not converge; see model.json")
    print(f"fitted {args.components}-component {args.method} model on {len(ds)} subjects; "
          f"coefficients {model.beta.coef.shape[0]} x {model.beta.coef.shape[1]}")
    return 0


def cmd_cv(args):
    _require(args, "out")
    ds = _load(args)
    n = len(ds)
    if args.folds < 2 or args.folds > n:
        raise UsageError(f"--folds must lie in [2, {n}] for {n} subjects")
    methods = args.methods or [args.method]
    bad = [m for m in methods if m not in data_io.METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}")
    group = None
    if args.group:
        if args.group not in ds.response_names:
            raise UsageError(f"--group {args.group!r} is not among the responses {ds.response_names}")
        group = ds.response_names.index(args.group)
    stratify = ds.responses[:, group] if group is not None else None
    splits = kfold_split(n, args.folds, args.seed, stratify=stratify)
    results = {}
    for method in methods:
        X = _features(ds, method, args.regularize)
        results[method] = cross_validate(
            X, ds.responses, args.components, seed=args.seed, group_column=group,
            threshold=args.threshold, frechet_cfg=_frechet_cfg(args), tol=args.nipals_tol,
            max_iter=args.nipals_max_iter, n_jobs=args.workers, splits=splits, method=method,
        )
    out = data_io.ensure_dir(args.out)
    data_io.save_report(results, out / "cv_report.txt")
    for method, res in results.items():
        print(f"{method}: chosen K = {res.chosen_k} (minimum RMSE at K = {res.best_k})")
    return 0


def cmd_vip(args):
    _require(args, "out")
    ds = _load(args)
    X = _features(ds, args.method, args.regularize)
    report, model = vip_inference(
        X, ds.responses, args.components, n_permutations=args.permutations, alpha=args.alpha,
        seed=args.seed, frechet_cfg=_frechet_cfg(args), scale_y=True,
        mask_diagonal=args.method == "riemannian", smoothed=args.smoothed,
        n_jobs=args.workers, tol=args.nipals_tol, max_iter=args.nipals_max_iter,
    )
    labels = data_io.coordinate_labels(args.method, ds.dim, ds.roi_labels)
    out = data_io.ensure_dir(args.out)
    data_io.save_vip_report(report, out / "vip_report.tsv", labels)
    meta = _fit_meta(args, ds, args.method)
    _coefficient_outputs(out, model, meta, _netmap(args), prefix="significant_",
                         significant=report.significant)
    print(f"{report.n_significant} significant connections "
          f"(H = {report.n_permutations}, alpha = {report.alpha})")
    return 0


def cmd_predict(args):
    _require(args, "model", "manifest", "out")
    model, meta = data_io.load_model(args.model)
    paths = data_io.read_manifest(args.manifest)
    mats = []
    for sid, path in paths.items():
        if meta.get("timeseries"):
            mats.append(data_io.correlation_from_timeseries(data_io.read_matrix(path)))
        else:
            mats.append(data_io.read_square_matrix(path, meta.get("dim")))
    mats = np.stack(mats)
    if mats.shape[-1] != meta.get("dim", mats.shape[-1]):
        raise RplsError(f"matrices are {mats.shape[-1]}x{mats.shape[-1]}, model expects "
                        f"{meta['dim']}x{meta['dim']}")
    X = data_io.method_features(mats, meta.get("method", "riemannian"), meta.get("regularize"))
    pred = rpls_predict(model, X)
    names = meta.get("response_names") or [f"y{j + 1}" for j in range(pred.shape[-1])]
    out = data_io.ensure_dir(args.out)
    with open(out / "predictions.csv", "w") as fh:
        fh.write(",".join(["subject_id"] + list(names)) + "\n")
        for sid, row in zip(paths, pred.reshape(len(paths), -1)):
            fh.write(",".join([sid] + [data_io.FLOAT_FMT % v for v in row]) + "\n")
    print(f"wrote predictions for {len(paths)} subjects")
    return 0


def cmd_simulate(args):
    _require(args, "out")
    X, Y, truth = generate_synthetic(
        SPDManifold(args.dim), EuclideanManifold(args.n_responses), args.subjects, args.latent,
        loading_scale=args.loading_scale, noise_scale=args.noise, seed=args.seed,
    )
    width = len(str(args.subjects))
    ids = [f"sub{i + 1:0{width}d}" for i in range(args.subjects)]
    names = [f"y{j + 1}" for j in range(args.n_responses)]
    ds = data_io.StudyDataset(ids, X, Y, names)
    out = data_io.ensure_dir(args.out)
    data_io.save_dataset(out, ds)
    with open(out / "truth.json", "w") as fh:
        json.dump({k: np.asarray(v).tolist() for k, v in vars(truth).items()}, fh, indent=1)
        fh.write("\n")
    print(f"wrote {args.subjects} subjects to {out}")
    return 0


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "vip": cmd_vip, "predict": cmd_predict,
            "simulate": cmd_simulate}


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"rpls: usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rpls: usage error: {exc}", file=sys.stderr)
        return 2
    except (RplsError, OSError) as exc:
        print(f"rpls: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

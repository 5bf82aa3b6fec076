"""Command line interface: ``dpboost {train,predict,cv,verify}``.

Machine-readable JSON goes to stdout (one object per line); human-readable
progress goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .boosting import MODES, PrivacyConfig, train
from .data import CLASSIFICATION, kfold_split, load_libsvm, normalize_task
from .estimator import DPBoostClassifier, DPBoostRegressor
from .mechanisms import PURPOSE_FOLD, derive_seed
from .tree import GbdtModel
from .verify import CHECKS

logger = logging.getLogger("dpboost")


@dataclass
class RunResult:
    mode: str
    task: str
    eps: float | None
    trees: int
    ensemble_size: int
    metric: str
    fold_metrics: list = field(default_factory=list)
    mean: float | None = None
    std: float | None = None
    seconds_per_tree: float = 0.0
    ledger: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    train_metric: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "RunResult":
        return cls(**json.loads(s))


def error_rate(y_true, y_pred) -> float:
    return float(np.mean(np.asarray(y_true) != np.asarray(y_pred)))


def rmse(y_true, y_pred) -> float:
    d = np.asarray(y_true, dtype=np.float64) - np.asarray(y_pred, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def _metric(task: str):
    return ("test_error", error_rate) if task == CLASSIFICATION else ("rmse", rmse)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="LIBSVM file")
    p.add_argument("--task", required=True, choices=["cls", "reg", "classification", "regression"])
    p.add_argument("--mode", default="dpboost", choices=MODES)
    p.add_argument("--eps", type=float, default=None, help="total privacy budget (required unless --mode np)")
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--ensemble-size", type=int, default=None, help="trees per ensemble (default: --trees)")
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--glc-index", choices=["ensemble", "global"], default="ensemble")
    p.add_argument("--no-glc", action="store_true", help="disable geometric leaf clipping (ablation)")
    p.add_argument("--out", default=None, help="append the RunResult JSON line to this file")


def _check_flags(parser: argparse.ArgumentParser, args) -> PrivacyConfig:
    if args.mode == "np":
        if args.eps is not None:
            logger.warning("--eps is ignored in np mode")
        args.eps = None
    elif args.eps is None:
        parser.error(f"--eps is required for --mode {args.mode}")
    if args.trees < 1:
        parser.error("--trees must be >= 1")
    if args.ensemble_size is None:
        args.ensemble_size = args.trees
    if not 1 <= args.ensemble_size <= args.trees:
        parser.error("--ensemble-size must be between 1 and --trees")
    if args.depth < 1:
        parser.error("--depth must be >= 1")
    if not 0 < args.eta < 1:
        parser.error("--eta must be in (0, 1)")
    if args.bins < 2:
        parser.error("--bins must be >= 2")
    try:
        return PrivacyConfig(
            total_eps=args.eps if args.eps is not None else 1.0,
            n_trees=args.trees,
            trees_per_ensemble=args.ensemble_size,
            glc=not args.no_glc,
            glc_index_mode=args.glc_index,
            mode=args.mode,
        )
    except ValueError as e:
        parser.error(str(e))


def _hyper(args) -> dict:
    return dict(max_depth=args.depth, reg_lambda=args.reg_lambda, eta=args.eta, n_bins=args.bins)


def _emit(result: RunResult, out: str | None) -> None:
    line = result.to_json()
    print(line)
    if out:
        with open(out, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def cmd_train(parser, args) -> int:
    config = _check_flags(parser, args)
    ds = load_libsvm(args.data, args.task)
    logger.info("loaded %d instances x %d features from %s", ds.n_instances, ds.n_features, args.data)
    model, logs = train(ds.dense(), ds.y, config, seed=args.seed, task=ds.task,
                        label_scale=ds.label_scale, **_hyper(args))
    if args.model:
        model.save(args.model)
        logger.info("model written to %s", args.model)

    name, fn = _metric(ds.task)
    result = RunResult(
        mode=args.mode, task=ds.task, eps=args.eps, trees=args.trees, ensemble_size=args.ensemble_size,
        metric=name, seconds_per_tree=sum(l.seconds for l in logs) / max(1, len(logs)),
        ledger=model.ledger.to_dict(), seeds={"run": args.seed},
        train_metric=fn(ds.raw_labels, model.predict(ds.dense())),
    )
    if args.valid:
        va = load_libsvm(args.valid, args.task)
        m = fn(va.raw_labels, model.predict(va.dense()))
        result.fold_metrics = [m]
        result.mean, result.std = m, 0.0
    _emit(result, args.out)
    return 0


def cmd_predict(parser, args) -> int:
    model = GbdtModel.load(args.model)
    ds = load_libsvm(args.data, model.task)
    pred = model.predict(ds.dense())
    if args.output:
        np.savetxt(args.output, pred, fmt="%.17g")
    else:
        for v in pred:
            print(repr(float(v)))
    name, fn = _metric(model.task)
    logger.info("%s on %s: %.6g", name, args.data, fn(ds.raw_labels, pred))
    return 0


def cmd_cv(parser, args) -> int:
    config = _check_flags(parser, args)
    if args.folds < 2:
        parser.error("--folds must be >= 2")
    ds = load_libsvm(args.data, args.task)
    try:
        folds = kfold_split(ds.n_instances, args.folds, args.seed)
    except ValueError as e:
        parser.error(str(e))
    X = ds.dense()
    y_raw = ds.raw_labels
    est_cls = DPBoostClassifier if ds.task == CLASSIFICATION else DPBoostRegressor
    name, fn = _metric(ds.task)

    metrics, seconds, fold_seeds = [], [], []
    for k in range(args.folds):
        tr, te = folds != k, folds == k
        fold_seed = derive_seed(args.seed, PURPOSE_FOLD, k)
        fold_seeds.append(fold_seed)
        est = est_cls(
            mode=args.mode, epsilon=config.total_eps, n_trees=args.trees,
            trees_per_ensemble=args.ensemble_size, max_depth=args.depth, reg_lambda=args.reg_lambda,
            learning_rate=args.eta, n_bins=args.bins, glc=not args.no_glc, glc_index=args.glc_index,
            random_state=fold_seed,
        )
        est.fit(X[tr], y_raw[tr])
        metrics.append(fn(y_raw[te], est.predict(X[te])))
        seconds.append(est.seconds_per_tree_)
        logger.info("fold %d/%d: %s=%.6g (%d train / %d test)", k + 1, args.folds, name, metrics[-1],
                    int(tr.sum()), int(te.sum()))

    result = RunResult(
        mode=args.mode, task=ds.task, eps=args.eps, trees=args.trees, ensemble_size=args.ensemble_size,
        metric=name, fold_metrics=metrics, mean=float(np.mean(metrics)), std=float(np.std(metrics)),
        seconds_per_tree=float(np.mean(seconds)), ledger=est.ledger_.to_dict(),
        seeds={"run": args.seed, "folds": fold_seeds},
    )
    _emit(result, args.out)
    if args.csv:
        new = not os.path.exists(args.csv) or os.path.getsize(args.csv) == 0
        with open(args.csv, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["mode", "eps", "trees", "mean", "std"])
            w.writerow([args.mode, "" if args.eps is None else args.eps, args.trees, result.mean, result.std])
    return 0


def cmd_verify(parser, args) -> int:
    names = list(CHECKS) if args.check == "all" else [args.check]
    ok = True
    for name in names:
        kwargs = {}
        if name == "ledger":
            kwargs = dict(total_eps=args.eps, n_trees=args.trees, trees_per_ensemble=args.ensemble_size)
        else:
            kwargs["seed"] = args.seed
            if args.trials is not None:
                kwargs["draws" if name in ("laplace", "expmech") else "trials"] = args.trials
        report = CHECKS[name](**kwargs)
        print(json.dumps(report.to_dict(), sort_keys=True))
        logger.info("%-17s %s (%d trials, %d violations, %.2fs)", name, "PASS" if report.passed else "FAIL",
                    report.trials, report.violations, report.seconds)
        ok &= report.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _common_flags(p)
    p.add_argument("--model", default=None, help="write model JSON here")
    p.add_argument("--valid", default=None, help="LIBSVM file to evaluate on")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", default=None, help="write predictions here (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _common_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--csv", default=None, help="append (mode, eps, trees, mean, std) rows here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("verify", help="run a brute-force / Monte-Carlo check")
    p.add_argument("check", choices=sorted(CHECKS) + ["all"])
    p.add_argument("--trials", type=int, default=None, help="trials or draws (check default if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=100.0, help="ledger check: total budget")
    p.add_argument("--trees", type=int, default=1000, help="ledger check: total trees")
    p.add_argument("--ensemble-size", type=int, default=50, help="ledger check: trees per ensemble")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    if hasattr(args, "task") and args.task:
        args.task = normalize_task(args.task)
    start = time.perf_counter()
    try:
        code = args.func(parser, args)
    except (OSError, ValueError) as e:
        logger.error("%s", e)
        return 1
    logger.debug("done in %.2fs", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())

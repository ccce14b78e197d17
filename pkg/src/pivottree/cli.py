"""``pivottree`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or model error. Relative output
paths are resolved against ``$PIVOTTREE_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .data import DataError
from .imaging import PrototypeRecord, class_pair_summary, comparison_heatmap
from .io import (
    ModelFormatError,
    find_image,
    load_dataset,
    load_image,
    load_model,
    load_prototypes,
    read_feature_table,
    save_model,
)
from .metrics import evaluate
from .models import DEFAULT_COMBOS, MODEL_KINDS, RAW_KINDS, model_select
from .tree import PIVOT_COMBOS, Hyperparams, decision_path, export_dot, extract_pivots, fit, predict_batch

OUTPUT_DIR_ENV = "PIVOTTREE_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(choices):
    def parse(text):
        values = [v.strip() for v in text.split(",") if v.strip()]
        bad = [v for v in values if v not in choices]
        if bad or not values:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return values
    return parse


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _add_data_args(p):
    p.add_argument("--label-column", default="label")
    p.add_argument("--id-column", default="id")
    p.add_argument("--class-map", help="JSON list of class names fixing class-id order")


def _add_hyperparam_args(p, depth_default=4):
    p.add_argument("--max-depth", type=_positive, default=depth_default)
    p.add_argument("--min-samples-split", "--min-split", dest="min_samples_split", type=_positive, default=5)
    p.add_argument("--min-samples-leaf", "--min-leaf", dest="min_samples_leaf", type=_positive, default=3)
    p.add_argument("--impurity", choices=sorted(kernels.CRITERIA), default="gini")
    p.add_argument("--candidate-types", type=_name_list(["representative", "discriminative"]),
                   default=["representative", "discriminative"])
    p.add_argument("--max-candidates-per-class", type=_positive, default=None)


def _hyperparams(args) -> Hyperparams:
    try:
        return Hyperparams(max_depth=args.max_depth, min_samples_split=args.min_samples_split,
                           min_samples_leaf=args.min_samples_leaf, impurity=args.impurity,
                           candidate_types=frozenset(args.candidate_types),
                           max_candidates_per_class=args.max_candidates_per_class)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pivottree", description="Case-based decision trees over distances to training pivots.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive, default=1, help="cap on internal parallelism")
    common.add_argument("--seed", type=int, default=0, help="shuffle seed (recorded in outputs)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="train a PivotTree and write a model file")
    p.add_argument("data")
    _add_data_args(p)
    _add_hyperparam_args(p)
    p.add_argument("-o", "--output", default="model.pvt.json")

    p = sub.add_parser("predict", parents=[common], help="predict classes with decision paths")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--label-column", default="label")
    p.add_argument("--id-column", default="id")
    p.add_argument("-o", "--output", default="predictions.csv")

    p = sub.add_parser("evaluate", parents=[common], help="confusion matrix and macro scores")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--label-column", default="label")
    p.add_argument("--id-column", default="id")
    p.add_argument("-o", "--output", default="evaluation.csv")

    p = sub.add_parser("select-pivots", parents=[common], help="write the pivot table")
    p.add_argument("model")
    p.add_argument("--pivot-types", choices=list(PIVOT_COMBOS), default="both")
    p.add_argument("-o", "--output", default="pivots.csv")

    p = sub.add_parser("model-select", parents=[common], help="grid search depth x pivot types x model")
    p.add_argument("data")
    p.add_argument("--validation", help="validation CSV; default: stratified 80/20 split of DATA by --seed")
    _add_data_args(p)
    _add_hyperparam_args(p)
    p.add_argument("--depths", type=_int_list, default=[2, 3, 4])
    p.add_argument("--combos", type=_name_list(list(DEFAULT_COMBOS)), default=list(DEFAULT_COMBOS))
    p.add_argument("--kinds", type=_name_list(list(MODEL_KINDS + RAW_KINDS)), default=list(MODEL_KINDS))
    p.add_argument("--k", type=_int_list, default=[5], help="neighbour counts for kNN kinds")
    p.add_argument("-o", "--output", default="model_select.csv")

    p = sub.add_parser("compare-prototypes", parents=[common], help="pivots vs expert prototypes")
    p.add_argument("model")
    p.add_argument("prototypes", help="CSV with id, label, optional image path, embedding columns")
    p.add_argument("--measure", choices=["euclidean", "ssim"], default="euclidean")
    p.add_argument("--pivot-types", choices=list(PIVOT_COMBOS), default="splitting")
    p.add_argument("--images-dir", help="directory holding <pivot id>.png|.pgm|.ppm|.pnm")
    p.add_argument("--svg", help="also write a grayscale SVG heatmap")
    p.add_argument("-o", "--output", default="comparison.csv")

    p = sub.add_parser("export-tree", parents=[common], help="write the tree as Graphviz DOT")
    p.add_argument("model")
    p.add_argument("-o", "--output", default="tree.dot", help="'-' writes to stdout")
    return parser


def _resolve(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_log(out: Path, argv, seed) -> None:
    log = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "argv": list(argv),
        "seed": seed,
        "kernel_backend": kernels.BACKEND,
        "output": str(out),
    }
    with open(f"{out}.log.json", "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=1)
        fh.write("\n")


def _write(path: str, text: str, argv, seed) -> Path:
    out = _resolve(path)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    _write_log(out, argv, seed)
    return out


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _cmd_fit(args, argv):
    hp = _hyperparams(args)
    data = load_dataset(args.data, args.label_column, args.id_column, class_map=args.class_map)
    model = fit(data, hp)
    out = _resolve(args.output)
    save_model(model, out, meta={"seed": args.seed})
    _write_log(out, argv, args.seed)
    n_split = len(extract_pivots(model, "splitting"))
    train_pred = predict_batch(model, data.X)
    print(f"fitted PivotTree on {data.n} instances x {data.m} features, {data.n_classes} classes")
    print(f"depth {model.depth}, {n_split} splitting pivots, {len(model.all_pivots)} candidate pivots")
    print(f"training accuracy {np.mean(train_pred == data.y):.4f}; model written to {out}")


def _cmd_predict(args, argv):
    model = load_model(args.model)
    X, ids, _, _, _ = read_feature_table(args.data, args.label_column, args.id_column)
    if X.shape[1] != model.m:
        raise DataError(f"{args.data}: {X.shape[1]} feature columns, model expects {model.m}")
    pred = predict_batch(model, X)
    rows = [["row", "predicted", "decision_path"]]
    for i, x in enumerate(X):
        path = ";".join(f"{model.pivot(s.pivot_id).name}{s.relation}{s.threshold!r}" for s in decision_path(model, x))
        rows.append([ids[i] if ids else i, model.class_name(int(pred[i])), path])
    out = _write(args.output, _csv_text(rows), argv, args.seed)
    print(f"wrote {len(X)} predictions to {out}")


def _cmd_evaluate(args, argv):
    model = load_model(args.model)
    names = model.class_names or tuple(str(i) for i in range(model.c))
    data = load_dataset(args.data, args.label_column, args.id_column, class_names=names)
    if data.m != model.m:
        raise DataError(f"{args.data}: {data.m} feature columns, model expects {model.m}")
    report = evaluate(data.y, predict_batch(model, data.X), model.c, names)
    out = _write(args.output, report.to_csv(), argv, args.seed)
    sys.stdout.write(report.to_text())
    print(f"report written to {out}")


def _cmd_select_pivots(args, argv):
    model = load_model(args.model)
    pivots = extract_pivots(model, args.pivot_types)
    rows = [["id", "source_index", "label", "roles"]]
    for p in pivots:
        rows.append([p.name, p.source_index, model.class_name(p.label), "|".join(sorted(r.value for r in p.roles))])
    out = _write(args.output, _csv_text(rows), argv, args.seed)
    print(f"{len(pivots)} {args.pivot_types} pivots written to {out}")


def _cmd_model_select(args, argv):
    hp = _hyperparams(args)
    if not args.depths:
        raise UsageError("--depths is empty")
    train = load_dataset(args.data, args.label_column, args.id_column, class_map=args.class_map)
    validation = None
    if args.validation:
        validation = load_dataset(args.validation, args.label_column, args.id_column,
                                  class_names=train.class_names)
    report = model_select(train, validation, depths=args.depths, combos=args.combos, kinds=args.kinds,
                          k_values=args.k, hyperparams=hp, seed=args.seed, threads=args.threads)
    out = _write(args.output, report.to_csv(), argv, args.seed)
    ch = report.chosen
    k = f", k={ch.k}" if ch.k is not None else ""
    print(f"{len(report.rows)} grid cells written to {out}")
    print(f"chosen: {ch.kind} depth={ch.depth} pivots={ch.combo}{k} "
          f"balanced_accuracy={ch.score:.4f} n_pivots={ch.n_pivots}")


def _cmd_compare(args, argv):
    model = load_model(args.model)
    protos = load_prototypes(args.prototypes, class_names=model.class_names,
                             load_images=args.measure == "ssim")
    records = []
    for p in extract_pivots(model, args.pivot_types):
        image = None
        if args.measure == "ssim":
            if not args.images_dir:
                raise UsageError("--images-dir is required for --measure ssim")
            found = find_image(args.images_dir, p.name)
            if found is None:
                raise DataError(f"no image for pivot {p.name} in {args.images_dir}")
            image = load_image(found)
        records.append(PrototypeRecord(p.name, p.label, p.vector, image))
    if not records:
        raise DataError(f"model has no {args.pivot_types} pivots")
    matrix = comparison_heatmap(records, protos, args.measure, class_names=model.class_names)
    out = _write(args.output, matrix.to_csv(), argv, args.seed)
    if args.svg:
        _write(args.svg, matrix.to_svg(), argv, args.seed)
    summary = class_pair_summary(matrix)
    print(f"{len(records)}x{len(protos)} {args.measure} comparison written to {out}")
    for c, v in summary.per_class.items():
        print(f"  {model.class_name(c)}: same-class mean {v:.4f}")
    print(f"  overall: {summary.mean:.4f} ± {summary.std:.4f} over {summary.n_pairs} pairs")


def _cmd_export_tree(args, argv):
    model = load_model(args.model)
    dot = export_dot(model)
    if args.output == "-":
        sys.stdout.write(dot)
        return
    out = _write(args.output, dot, argv, args.seed)
    print(f"DOT written to {out}")


COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "select-pivots": _cmd_select_pivots,
    "model-select": _cmd_model_select,
    "compare-prototypes": _cmd_compare,
    "export-tree": _cmd_export_tree,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, ModelFormatError, OSError, ValueError) as exc:
        print(f"pivottree: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

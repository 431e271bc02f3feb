"""Command-line driver: ``ctvae {train,extract,eval,relabel,simulate,ablate}``.

Every artifact goes under ``--out``. A ``--config`` file of ``key=value``
lines supplies defaults for any long option; flags given on the command line
win. Failures print ``error [stage]: message`` and exit with status 2.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import relabel_majority, write_mapping
from .data import BlobSpec, Dataset, apply_normalizer, fit_normalizer, load_csv, save_csv, split
from .models import KINDS, extract, load_model, make_model, save_model
from .pipeline import BLOB_PRESET, blob_split, normalized_split, run_ablation, run_simulation, score_representation

log = logging.getLogger("ctvae")

LIBRARY_DEFAULTS = dict(
    latent_dim=None, hidden=None, activation="relu", lr=1e-3, batch_size=100, epochs=300, scale=20.0
)


class StageError(Exception):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        raise StageError(name, str(exc)) from exc


# ------------------------------------------------------------------ output


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_matrix(path, matrix, labels, prefix="z", names=None):
    rows = [
        [repr(float(v)) for v in row] + [names[y] if names else int(y)] for row, y in zip(matrix, labels)
    ]
    _write_rows(path, [f"{prefix}{j}" for j in range(matrix.shape[1])] + ["label"], rows)


def _write_history(path, history):
    _write_rows(path, ["epoch", "loss"], [[i + 1, repr(float(v))] for i, v in enumerate(history)])


def _print_table(reports, stream=None):
    stream = stream or sys.stdout
    cols = ("name", "accuracy", "precision", "recall", "fscore", "d_bet", "d_wit")
    rows = [[r.name] + [f"{getattr(r, c):.4g}" for c in cols[1:]] for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)), file=stream)
    for row in rows:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)), file=stream)


def _report_rows(reports):
    keys = ("name", "n_test", "accuracy", "precision", "recall", "fscore", "averaging", "d_bet", "d_wit")
    return keys, [[getattr(r, k) for k in keys] for r in reports]


# ------------------------------------------------------------------ inputs


def _blob_spec(args):
    return BlobSpec(
        n_classes=args.blob_classes,
        n_train=args.blob_train,
        n_test=args.blob_test,
        d=args.blob_d,
        std=args.blob_std,
        center_box=(args.blob_low, args.blob_high),
        seed=args.seed,
    )


def _load_split(args):
    """Raw and normalized train/test from ``--csv`` (split) or the blob flags."""
    if args.csv:
        with stage("load"):
            data = load_csv(args.csv, args.label_col, not args.no_header)
        with stage("split"):
            train, test = split(data, args.train_fraction, args.seed)
        return normalized_split(train, test)
    with stage("blobs"):
        return blob_split(_blob_spec(args))


def _model_params(args):
    betas = tuple(float(b) for b in str(args.betas).split(","))
    params = dict(
        latent_dim=args.latent_dim,
        hidden=args.hidden,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        mc_samples=args.mc_samples,
        betas=betas,
        seed=args.seed,
        activation=args.activation,
    )
    return params


def _ctvae_params(args):
    return dict(_model_params(args), scale=args.scale, prior=args.prior)


# ---------------------------------------------------------------- commands


def cmd_train(args):
    out = args.out
    data = _load_split(args)
    kind = args.model
    params = _ctvae_params(args) if kind == "ctvae" else _model_params(args)
    labels = None
    if kind == "ctvae":
        with stage("priors"):
            if data.train.n_classes < 2:
                raise ValueError("the constrained model needs at least two classes in the label column")
            labels = data.train.labels
    with stage("train"):
        model = make_model(kind, **params).fit(data.train.features, labels)
    with stage("write"):
        save_model(out / "model.ctv", model, data.stats.to_normalizer())
        _write_history(out / "loss_history.csv", model.loss_history_)
        save_csv(data.train_raw, out / "train.csv")
        save_csv(data.test_raw, out / "test.csv")
        report = {
            "model": kind,
            "arch": model.arch_.__dict__,
            "epochs": len(model.loss_history_),
            "final_loss": float(model.loss_history_[-1]),
            "n_train": data.train.n,
            "n_test": data.test.n,
        }
        _write_json(out / "train_report.json", report)
    print(f"{kind}: {report['epochs']} epochs, final loss {report['final_loss']:.6g}")
    return report


def cmd_extract(args):
    with stage("load"):
        model, normalizer = load_model(args.model_file)
        data = load_csv(args.csv, args.label_col, not args.no_header)
    with stage("extract"):
        if data.d_input != model.n_features_in_:
            raise ValueError(f"model expects {model.n_features_in_} features, {args.csv} has {data.d_input}")
        if normalizer is not None:
            data = data.with_features(normalizer.transform(data.features))
        rep = extract(model, data)
    with stage("write"):
        name = args.output_name
        _write_matrix(args.out / name, rep.matrix, data.labels, names=data.class_names)
        report = {"source": rep.source, "rows": int(rep.matrix.shape[0]), "columns": int(rep.matrix.shape[1])}
        _write_json(args.out / (Path(name).stem + "_report.json"), report)
    print(f"{rep.source}: {report['rows']} x {report['columns']} -> {args.out / name}")
    return report


def _aligned(train, test):
    """Relabel ``test`` with ``train``'s class ids (by name)."""
    lookup = {name: i for i, name in enumerate(train.class_names)}
    unknown = sorted(set(test.class_names) - set(lookup))
    if unknown:
        raise ValueError(f"test labels not seen in training: {unknown}")
    ids = np.array([lookup[test.class_names[y]] for y in test.labels], dtype=np.int64)
    return Dataset(test.features, ids, train.class_names)


def cmd_eval(args):
    pairs = list(args.rep or [])
    if args.train and args.test:
        pairs.insert(0, [args.name, args.train, args.test])
    if not pairs:
        raise StageError("args", "give --train/--test or at least one --rep NAME TRAIN TEST")
    reports = []
    for i, (name, train_path, test_path) in enumerate(pairs):
        with stage(f"load {name}"):
            train = load_csv(train_path, args.label_col, not args.no_header)
            test = _aligned(train, load_csv(test_path, args.label_col, not args.no_header))
        with stage(f"eval {name}"):
            rep, forest = score_representation(
                name, train.features, train.labels, test.features, test.labels, args.trees, args.seed, args.averaging
            )
        reports.append(rep)
        with stage("write"):
            forest.save(args.out / ("forest.json" if i == 0 else f"forest_{name}.json"))
    with stage("write"):
        _write_json(args.out / "eval_report.json", [r.to_dict() for r in reports])
        _write_rows(args.out / "eval_report.csv", *_report_rows(reports))
    _print_table(reports)
    return reports


def cmd_relabel(args):
    with stage("load"):
        data = load_csv(args.csv, args.label_col, not args.no_header)
    with stage("relabel"):
        if args.majority is None:
            majority = int(np.argmax(data.class_counts))
        elif args.majority in data.class_names:
            majority = data.class_names.index(args.majority)
        else:
            raise ValueError(f"majority class {args.majority!r} not among {list(data.class_names)}")
        ks = tuple(int(k) for k in str(args.k_list).split(","))
        normalized = apply_normalizer(fit_normalizer(data), data)
        res = relabel_majority(normalized, majority, ks, args.seed, args.sample_cap or None)
    with stage("write"):
        save_csv(Dataset(data.features, res.dataset.labels, res.dataset.class_names), args.out / "relabeled.csv")
        write_mapping(res, args.out / "mapping.csv")
        report = {
            "majority": data.class_names[majority],
            "chosen_k": res.chosen_k,
            "silhouette": {str(k): v for k, v in res.scores.items()},
            "sample_cap": res.sample_cap,
            "n_classes": res.dataset.n_classes,
        }
        _write_json(args.out / "relabel_report.json", report)
    print(f"{report['majority']}: k*={res.chosen_k}; " + ", ".join(f"k={k}: {v:.4f}" for k, v in res.scores.items()))
    return report


def cmd_simulate(args):
    with stage("simulate"):
        res = run_simulation(_blob_spec(args), _ctvae_params(args), args.trees, args.seed)
    out = args.out
    data = res["data"]
    with stage("write"):
        save_model(out / "model.ctv", res["model"], data.stats.to_normalizer())
        _write_history(out / "loss_history.csv", res["model"].loss_history_)
        for name, matrix in res["panels"].items():
            _write_matrix(out / f"scatter_{name}.csv", matrix[:, :2], data.test.labels, prefix="dim")
        res["forest"].save(out / "forest.json")
        _write_json(out / "simulate_report.json", [r.to_dict() for r in res["reports"]])
    _print_table(res["reports"])
    return res["reports"]


def cmd_ablate(args):
    with stage("ablate"):
        res = run_ablation(_blob_spec(args), _ctvae_params(args), args.trees, args.seed)
    with stage("write"):
        for variant, model in res["models"].items():
            _write_history(args.out / f"loss_history_{variant}.csv", model.loss_history_)
        _write_json(args.out / "ablate_report.json", [r.to_dict() for r in res["reports"]])
        _write_rows(args.out / "ablate_report.csv", *_report_rows(res["reports"]))
    _print_table(res["reports"])
    return res["reports"]


# ------------------------------------------------------------------ parser


def _add_data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--csv", help="labeled CSV; split into train/test (blobs are generated otherwise)")
    g.add_argument("--label-col", default="label")
    g.add_argument("--no-header", action="store_true")
    g.add_argument("--train-fraction", type=float, default=0.7)
    _add_blob_flags(p)


def _add_blob_flags(p):
    g = p.add_argument_group("blobs")
    g.add_argument("--blob-classes", type=int, default=3)
    g.add_argument("--blob-train", type=int, default=3500)
    g.add_argument("--blob-test", type=int, default=1500)
    g.add_argument("--blob-d", type=int, default=10)
    g.add_argument("--blob-std", type=float, default=0.2)
    g.add_argument("--blob-low", type=float, default=0.0)
    g.add_argument("--blob-high", type=float, default=1.0)


def _add_model_flags(p, defaults):
    g = p.add_argument_group("model")
    g.add_argument("--latent-dim", type=int, default=defaults["latent_dim"])
    g.add_argument("--hidden", type=int, default=defaults["hidden"])
    g.add_argument("--epochs", type=int, default=defaults["epochs"])
    g.add_argument("--batch-size", type=int, default=defaults["batch_size"])
    g.add_argument("--lr", type=float, default=defaults["lr"])
    g.add_argument("--mc-samples", type=int, default=1)
    g.add_argument("--betas", default="1,1,1,1", help="comma-separated beta1..beta4")
    g.add_argument("--activation", default=defaults["activation"], choices=("relu", "tanh", "sigmoid", "linear"))
    g.add_argument("--scale", type=float, default=defaults["scale"], help="prior radius unit S")
    g.add_argument("--prior", default="transform", choices=("transform", "fix"))


def build_parser():
    parser = argparse.ArgumentParser(prog="ctvae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=Path, help="key=value defaults file")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fit a model and write model.ctv")
    p.add_argument("--model", choices=KINDS, default="ctvae")
    _add_data_flags(p)
    _add_model_flags(p, LIBRARY_DEFAULTS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", parents=[common], help="representation of a CSV under a saved model")
    p.add_argument("--model-file", type=Path, required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--label-col", default="label")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--output-name", default="representation.csv")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", parents=[common], help="random-forest scores of one or more representations")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--name", default="rep")
    p.add_argument("--rep", nargs=3, action="append", metavar=("NAME", "TRAIN", "TEST"))
    p.add_argument("--label-col", default="label")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--averaging", default="macro", choices=("macro", "micro", "binary"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("relabel", parents=[common], help="split the majority class by silhouette-selected k-means")
    p.add_argument("--csv", required=True)
    p.add_argument("--label-col", default="label")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--majority", help="class name to split (default: largest class)")
    p.add_argument("--k-list", default="2,3,4,5,6,7")
    p.add_argument("--sample-cap", type=int, default=2000, help="silhouette subsample size; 0 for exact")
    p.set_defaults(func=cmd_relabel)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "blob simulation with scatter panels"),
        ("ablate", cmd_ablate, "transform vs fixed class means"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _add_blob_flags(p)
        _add_model_flags(p, BLOB_PRESET)
        p.add_argument("--trees", type=int, default=100)
        p.set_defaults(func=func)
    return parser


def read_config(path):
    """``key=value`` lines; ``#`` starts a comment; keys may use dashes."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


_TRUE = {"1", "true", "yes", "on"}


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    config = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    unknown = sorted(set(config) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys for {args.command}: {unknown}")
    for key, value in config.items():
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            config[key] = value.lower() in _TRUE
        elif action.nargs is not None:
            raise ValueError(f"config key {key!r} takes several values; pass it as a flag")
    sub.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv=None):
    try:
        args = parse_args(argv)
    except (ValueError, OSError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

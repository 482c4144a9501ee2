"""Command line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 invalid input
data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, kernels
from .core import Dataset, LabelSpace, ValidationError, errors_only, validate
from .metrics import evaluate
from .qp import QPConvergenceError
from .scoring import MODES, candidates, predict_batch, rank
from .similarity import SimilarityError, cooccurrence_similarity, read_hierarchy, read_hit_counts, wordnet_similarity
from .synth import SynthConfig, generate, prototype_similarity
from .trainer import ConfigError, Problem, TrainConfig, dual_objective, primal_objective, train
from .tuning import METRICS, SWEEP_FACTORS, make_grid, restrict_truth, sweep, sweep_svg, tune

log = logging.getLogger("taep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SYNTH_FILES = {
    "train_features": "train_features.txt",
    "train_labels": "train_labels.txt",
    "test_features": "test_features.txt",
    "test_truth": "test_truth.txt",
    "embeddings": "embeddings.txt",
    "aux_sim": "aux_sim.txt",
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- loading ------------------------------------------------------------------


def _load_labels(embeddings_path, seen_count):
    names, M = io.read_embeddings(embeddings_path)
    if not 1 <= seen_count < len(names):
        raise DataError(f"--seen-count {seen_count} must lie in [1, {len(names) - 1}] for {len(names)} labels")
    return LabelSpace(names=names, seen_count=seen_count, embeddings=M)


def _load_aux(path, labels: LabelSpace):
    if path is None:
        return None
    R = io.read_matrix(path)
    if R.shape != (labels.L, labels.L):
        raise DataError(f"{path}: similarity is {R.shape[0]}x{R.shape[1]}, expected {labels.L}x{labels.L}")
    header = io.read_similarity_labels(path)
    if header is not None and list(header) != list(labels.names):
        raise DataError(f"{path}: label order in the header differs from the embeddings file")
    return R


def _load_training(args):
    labels = _load_labels(args.embeddings, args.seen_count)
    X = io.read_matrix(args.features)
    Y = io.read_matrix(args.labels)
    dataset = Dataset(X, Y)
    report = validate(dataset, labels)
    for warning in (v for v in report if v.startswith("warning:")):
        log.warning(warning[len("warning:"):].strip())
    errors = errors_only(report)
    if errors:
        raise ValidationError(errors)
    return dataset, labels, _load_aux(getattr(args, "aux_sim", None), labels)


def _model_labels(model, embeddings_path):
    names, M = io.read_embeddings(embeddings_path)
    if tuple(names) != model.label_names:
        raise DataError(f"{embeddings_path}: labels differ from those stored in the model")
    if M.shape[1] != model.m:
        raise DataError(f"{embeddings_path}: embedding dimension {M.shape[1]} does not match model ({model.m})")
    return LabelSpace(names=names, seen_count=model.seen_count, embeddings=M)


def _config(args, **overrides):
    # tune has no --beta/--gamma/--lambda; its grid supplies them
    values = dict(
        beta=getattr(args, "beta", 1.0),
        gamma=getattr(args, "gamma", 0.0),
        lam=getattr(args, "lam", 0.0),
        r=args.r,
        max_outer_iterations=args.max_iters,
        dual_tolerance=args.tol,
        passes_per_outer=args.passes_per_outer,
        final_passes=args.final_passes,
        return_best=False,
    )
    values.update(overrides)
    return TrainConfig(**values)


def _floats(text):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


# -- reporting ----------------------------------------------------------------


def _report(result, out=None):
    out = sys.stdout if out is None else out
    rows = [
        ("MiAP", result.miap),
        ("micro-F1", result.micro_f1),
        ("macro-F1", result.macro_f1),
        ("Hamming", result.hamming),
    ]
    for name, value in rows:
        print(f"{name:<10}{100.0 * value:8.2f}", file=out)
    print(f"{'skipped':<10}{result.skipped:8d}", file=out)
    print("", file=out)
    for key, value in result.as_dict().items():
        print(f"{key}={value if key == 'skipped' else io.format_float(value)}", file=out)


# -- subcommands --------------------------------------------------------------


def cmd_train(args):
    dataset, labels, R = _load_training(args)
    config = _config(args)
    trace_lines = []

    def on_iteration(rec, _state):
        trace_lines.append(
            f"{rec.iteration} {io.format_float(rec.dual)} {io.format_float(rec.primal)} "
            f"{io.format_float(rec.psi_norm)}"
        )
        # wall-clock time stays in the log so the trace file is reproducible
        log.info(
            "iteration %d dual %.10g primal %.10g (%.3fs)", rec.iteration, rec.dual, rec.primal, rec.elapsed
        )

    model, state, trace = train(dataset, labels, R, config, on_iteration=on_iteration)
    io.write_model(args.out, model)
    if args.trace:
        io.write_lines(args.trace, ["# iteration dual primal psi_norm"] + trace_lines)
    problem = Problem.build(dataset, labels, R)
    print(f"iterations={len(trace)}")
    print(f"dual={io.format_float(dual_objective(state, problem, config))}")
    print(f"primal={io.format_float(primal_objective(model, problem))}")
    print(f"model={args.out}")
    return EXIT_OK


def cmd_predict(args):
    model = io.read_model(args.model)
    labels = _model_labels(model, args.embeddings)
    X = io.read_matrix(args.features)
    cand, S, t, B = predict_batch(model, X, labels, args.mode)
    lines = []
    for i in range(X.shape[0]):
        ranked = "\t".join(f"{labels.names[cand[j]]}={io.format_float(S[i, j])}" for j in rank(S[i]))
        positives = ",".join(labels.names[c] for c, b in zip(cand, B[i]) if b)
        lines.append(f"t={io.format_float(t[i])}\t{ranked}\tpositives={positives}")
    io.write_lines(args.out, lines)
    print(f"instances={X.shape[0]}")
    print(f"predictions={args.out}")
    return EXIT_OK


def read_predictions(path, candidate_names):
    """Scores and binary predictions (candidate order) from a predict file."""
    col = {name: j for j, name in enumerate(candidate_names)}
    S_rows, B_rows = [], []
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            fields = raw.rstrip("\n").split("\t")
            if len(fields) < 2 or not fields[0].startswith("t=") or not fields[-1].startswith("positives="):
                raise io.FormatError(path, no, "expected 't=<value>', label scores and 'positives=...'")
            s = np.full(len(col), np.nan)
            for item in fields[1:-1]:
                name, _, value = item.partition("=")
                if name not in col:
                    raise io.FormatError(path, no, f"label {name!r} is not a candidate")
                s[col[name]] = float(value)
            if np.isnan(s).any():
                raise io.FormatError(path, no, "some candidate labels have no score")
            b = np.zeros(len(col), dtype=int)
            listed = fields[-1][len("positives="):]
            for name in filter(None, listed.split(",")):
                if name not in col:
                    raise io.FormatError(path, no, f"positive label {name!r} is not a candidate")
                b[col[name]] = 1
            S_rows.append(s)
            B_rows.append(b)
    return np.array(S_rows).reshape(-1, len(col)), np.array(B_rows, dtype=int).reshape(-1, len(col))


def cmd_evaluate(args):
    model = io.read_model(args.model)
    truth = io.read_matrix(args.truth)
    if args.predictions:
        stored = LabelSpace(model.label_names, model.seen_count, np.zeros((len(model.label_names), 1)))
        cand = candidates(stored, args.mode)
        S, B = read_predictions(args.predictions, [model.label_names[c] for c in cand])
        labels = stored
    else:
        if not (args.features and args.embeddings):
            raise UsageError("evaluate needs --predictions, or both --features and --embeddings")
        labels = _model_labels(model, args.embeddings)
        _, S, _, B = predict_batch(model, io.read_matrix(args.features), labels, args.mode)
    try:
        T = restrict_truth(truth, labels, args.mode, S.shape[0])
    except ValueError as exc:
        raise DataError(f"{args.truth}: {exc}") from None
    _report(evaluate(S, B, T))
    return EXIT_OK


def cmd_tune(args):
    dataset, labels, R = _load_training(args)
    lams = args.lambda_grid if R is not None else (0.0,)
    grid = make_grid(args.beta_grid, args.gamma_grid, lams)
    base = _config(args)
    result = tune(dataset, labels, R, base, grid, metric=args.metric, seed=args.seed, val_fraction=args.val_fraction)
    print(f"{'beta':>8} {'gamma':>10} {'lambda':>10} {args.metric:>10}")
    for point, value in result.scores:
        shown = -value if args.metric == "hamming" else value
        print(f"{point.beta:8g} {point.gamma:10g} {point.lam:10g} {100.0 * shown:10.2f}")
    s = result.selected
    print("")
    print(f"beta={io.format_float(s.beta)}")
    print(f"gamma={io.format_float(s.gamma)}")
    print(f"lambda={io.format_float(s.lam)}")
    io.write_model(args.out, result.model)
    print(f"model={args.out}")
    return EXIT_OK


def cmd_sweep(args):
    dataset, labels, R = _load_training(args)
    X_eval = io.read_matrix(args.eval_features)
    truth = io.read_matrix(args.eval_truth)
    try:
        restrict_truth(truth, labels, args.mode, X_eval.shape[0])
    except ValueError as exc:
        raise DataError(f"{args.eval_truth}: {exc}") from None
    rows = sweep(dataset, labels, X_eval, truth, R, _config(args), args.param, args.mode, SWEEP_FACTORS)
    print(f"{'factor':>8} {args.param:>12} {'MiAP':>8} {'micro-F1':>9} {'macro-F1':>9} {'Hamming':>8}")
    for row in rows:
        res = row.result
        print(
            f"{row.factor:8g} {row.value:12g} {100 * res.miap:8.2f} {100 * res.micro_f1:9.2f} "
            f"{100 * res.macro_f1:9.2f} {100 * res.hamming:8.2f}"
        )
    if args.svg:
        io.write_lines(args.svg, sweep_svg(rows, title=f"MiAP vs {args.param} factor").splitlines())
        print(f"\nplot={args.svg}")
    return EXIT_OK


def _label_names(path):
    """First token of every data line, so an embeddings file also works."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            text = raw.strip()
            if text and not text.startswith("#"):
                names.append(text.split()[0])
    if not names:
        raise DataError(f"{path}: no label names")
    return names


def cmd_sim_build(args):
    names = _label_names(args.labels)
    try:
        if args.source == "hierarchy":
            R = wordnet_similarity(read_hierarchy(args.input), names)
        else:
            R = cooccurrence_similarity(read_hit_counts(args.input), names)
    except SimilarityError as exc:
        msg = str(exc)
        raise SimilarityError(msg if msg.startswith(str(args.input)) else f"{args.input}: {msg}") from None
    io.write_similarity(args.out, R, names)
    print(f"labels={len(names)}")
    print(f"similarity={args.out}")
    return EXIT_OK


def cmd_synth(args):
    try:
        config = SynthConfig(
            seed=args.seed,
            n_train=args.n_train,
            n_test=args.n_test,
            L_seen=args.seen,
            L_unseen=args.unseen,
            m=args.m,
            d=args.d,
            label_density=args.label_density,
            noise_scale=args.noise_scale,
            transfer_tightness=args.transfer_tightness,
            embedding_noise=args.embedding_noise,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    task = generate(config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {key: out / name for key, name in SYNTH_FILES.items()}
    io.write_matrix(paths["train_features"], task.train.features)
    io.write_matrix(paths["train_labels"], task.train.labels)
    io.write_matrix(paths["test_features"], task.test_features)
    io.write_matrix(paths["test_truth"], task.test_truth)
    io.write_embeddings(paths["embeddings"], task.labels.names, task.labels.embeddings)
    written = ["train_features", "train_labels", "test_features", "test_truth", "embeddings"]
    if args.aux_noise is not None:
        R = prototype_similarity(task, noise=args.aux_noise, seed=args.seed, neighbours=args.aux_neighbours)
        io.write_similarity(paths["aux_sim"], R, task.labels.names)
        written.append("aux_sim")
    print(f"seen_count={config.L_seen}")
    for key in written:
        print(f"{key}={paths[key]}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _training_flags(p, hyper=True):
    p.add_argument("--features", required=True, help="MatrixFile, one instance per row")
    p.add_argument("--labels", required=True, help="MatrixFile of 0/1 seen-label indicators")
    p.add_argument("--embeddings", required=True, help="label embeddings, seen labels first")
    p.add_argument("--seen-count", type=int, required=True)
    p.add_argument("--aux-sim", default=None, help="auxiliary label similarity (MatrixFile)")
    p.add_argument("--r", type=int, required=True, help="dimension of the shared semantic space")
    if hyper:
        p.add_argument("--beta", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=0.0)
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--max-iters", type=int, default=50, help="outer iterations (default 50)")
    p.add_argument("--tol", type=float, default=1e-6, help="relative dual change for stopping")
    p.add_argument("--passes-per-outer", type=int, default=1)
    p.add_argument("--final-passes", type=int, default=50, help="dual passes with U frozen at the end")


def build_parser():
    parser = _Parser(prog="taep", description="Transfer-aware embedding projection for multi-label zero-shot learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model")
    _training_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--trace", default=None, help="per-iteration trace log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank candidate labels for each instance")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--embeddings", required=True, help="embeddings of every label in the model")
    p.add_argument("--mode", choices=MODES, default="zeroshot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MiAP, F1 and Hamming loss")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True, help="0/1 MatrixFile over the candidates or over all labels")
    p.add_argument("--mode", choices=MODES, default="zeroshot")
    p.add_argument("--features")
    p.add_argument("--embeddings")
    p.add_argument("--predictions", help="score a predict output file instead of the features")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="grid search on a split of the seen labels")
    _training_flags(p, hyper=False)
    p.add_argument("--metric", choices=METRICS, default="miap")
    p.add_argument("--beta-grid", type=_floats, default=tuple(float(b) for b in range(1, 11)))
    p.add_argument("--gamma-grid", type=_floats, default=(0.01, 0.1, 1.0, 10.0))
    p.add_argument("--lambda-grid", type=_floats, default=(0.01, 0.1, 1.0, 10.0))
    p.add_argument("--val-fraction", type=float, default=0.0, help="hold out instances for validation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("sweep", help="shrink gamma or lambda by powers of ten")
    _training_flags(p)
    p.add_argument("--param", choices=("gamma", "lambda"), required=True)
    p.add_argument("--eval-features", required=True)
    p.add_argument("--eval-truth", required=True)
    p.add_argument("--mode", choices=MODES, default="zeroshot")
    p.add_argument("--svg", default=None, help="write a line plot of MiAP against the factor")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sim-build", help="label similarity from a hierarchy or hit counts")
    p.add_argument("--source", choices=("hierarchy", "counts"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True, help="label names, one per line (an embeddings file works)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim_build)

    p = sub.add_parser("synth", help="write a synthetic zero-shot task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--seen", type=int, default=6)
    p.add_argument("--unseen", type=int, default=4)
    p.add_argument("--m", type=int, default=12)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--label-density", type=float, default=0.3)
    p.add_argument("--noise-scale", type=float, default=0.1)
    p.add_argument("--transfer-tightness", type=float, default=0.9)
    p.add_argument("--embedding-noise", type=float, default=0.0)
    p.add_argument("--aux-noise", type=float, default=None, help="also write a noisy prototype similarity")
    p.add_argument(
        "--aux-neighbours", type=int, default=0, help="keep only this many nearest labels per row (0: dense)"
    )
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"taep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        for v in exc.violations:
            print(f"taep: invalid data: {v}", file=sys.stderr)
        return EXIT_DATA
    except QPConvergenceError as exc:
        print(f"taep: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"taep: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, io.FormatError, SimilarityError, ValueError, OSError) as exc:
        print(f"taep: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

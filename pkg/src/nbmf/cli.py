"""Command-line interface: simulate, stats, export, split, train, evaluate,
recommend and rerun.

Every command that writes files also writes a JSON run manifest recording
the argv, resolved flags, input digests and outputs; ``nbmf rerun`` replays
it. Exit codes: 0 success, 2 usage or validation error, 3 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .cavi import CAVIConfig, fit_cavi
from .core import HyperParams, Mode, NumericalError, SparseCountMatrix, predict_scores
from .data import (
    binarize,
    cumulative_histogram,
    filter_dataset,
    load_triplets,
    read_vocab,
    split_train_test,
    write_triplets,
    write_vocab,
)
from .evaluation import RelevanceSpec, evaluate, rank_items
from .mm import MMConfig, fit_mm
from .persist import FittedModel, load_model, save_model
from .synth import SynthSpec, generate

EXIT_USAGE = 2
EXIT_RUNTIME = 3

METHODS = ("mm", "cavi", "pf", "pf-bin")
UNDER_EXPOSED = 0.5
OVER_EXPOSED = 2.0


class ValidationError(ValueError):
    pass


def _positive_float(text):
    value = float(text)
    if not (np.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text}") from None


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path, args, argv, inputs, outputs, started):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "flags": flags,
        "seed": flags.get("seed"),
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": list(outputs),
        "backend": kernels.backend,
        "version": __version__,
        "wall_time": round(time.perf_counter() - started, 6),
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _hyper_from_args(args, mode=Mode.NBMF):
    return HyperParams(alpha=args.alpha, alpha_w=args.alpha_w, beta_w=args.beta_w,
                       alpha_h=args.alpha_h, beta_h=args.beta_h, mode=mode)


def _write_csv_matrix(M, path):
    with open(path, "w", newline="\n") as fh:
        for row in np.atleast_2d(M):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


# -- commands ---------------------------------------------------------------

def cmd_simulate(args, argv, started):
    mode = Mode.PF if args.pf else Mode.NBMF
    spec = SynthSpec(args.users, args.items, args.k, _hyper_from_args(args, mode), args.seed)
    Y, W, H, A = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    Y = SparseCountMatrix(Y.n_users, Y.n_items, Y.rows, Y.cols, Y.counts,
                          tuple(f"u{k}" for k in range(Y.n_users)),
                          tuple(f"i{k}" for k in range(Y.n_items)))
    outputs = [os.path.join(args.out, name) for name in ("Y.tsv", "W_true.csv", "H_true.csv", "A_true.csv")]
    write_triplets(Y, outputs[0])
    _write_csv_matrix(W, outputs[1])
    _write_csv_matrix(H, outputs[2])
    _write_csv_matrix(A, outputs[3])
    _write_manifest(os.path.join(args.out, "manifest.json"), args, argv, [], outputs, started)
    print(f"simulated {Y.n_users} x {Y.n_items} matrix with {Y.nnz} nonzeros -> {args.out}")


def cmd_stats(args, argv, started):
    Y = load_triplets(args.input)
    print(f"users\t{Y.n_users}\nitems\t{Y.n_items}\nnonzeros\t{Y.nnz}\n"
          f"density\t{Y.density:.6f}\ntotal\t{Y.total()}")
    if args.histogram:
        s, frac = cumulative_histogram(Y)
        with open(args.histogram, "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s", "fraction_at_least_s"])
            for a, b in zip(s, frac):
                writer.writerow([int(a), f"{b:.17g}"])
        _write_manifest(args.histogram + ".manifest.json", args, argv, [args.input],
                        [args.histogram], started)


def cmd_export(args, argv, started):
    Y = load_triplets(args.input)
    if args.min_items_per_user > 1 or args.min_users_per_item > 1:
        Y = filter_dataset(Y, args.min_items_per_user, args.min_users_per_item)
    if args.binarize:
        Y = binarize(Y)
    write_triplets(Y, args.out)
    _write_manifest(args.out + ".manifest.json", args, argv, [args.input], [args.out], started)
    print(f"exported {Y.n_users} users, {Y.n_items} items, {Y.nnz} nonzeros -> {args.out}")


def cmd_split(args, argv, started):
    Y = load_triplets(args.input)
    result = split_train_test(Y, args.fraction, args.seed)
    os.makedirs(args.out, exist_ok=True)
    names = ("train.tsv", "test.tsv", "users.txt", "items.txt")
    outputs = [os.path.join(args.out, n) for n in names]
    write_triplets(result.Y_train, outputs[0])
    write_triplets(result.Y_test, outputs[1])
    write_vocab(Y.users, outputs[2])
    write_vocab(Y.items, outputs[3])
    _write_manifest(os.path.join(args.out, "manifest.json"), args, argv, [args.input], outputs, started)
    print(f"split {Y.nnz} nonzeros: {result.Y_train.nnz} train, {result.Y_test.nnz} test -> {args.out}")


def _load_in_frame(path, users=None, items=None):
    return load_triplets(path, users=users, items=items)


def _vocab(args):
    if getattr(args, "vocab", None):
        return (read_vocab(os.path.join(args.vocab, "users.txt")),
                read_vocab(os.path.join(args.vocab, "items.txt")))
    return None, None


def train_model(Y, method, K, hyper, seed, max_iters, tol, learn_beta_h=True):
    """Fit one of the supported methods and package it as a FittedModel."""
    extra = {"seed": seed, "max_iters": max_iters, "rel_tol": format(tol, ".17g"),
             "learn_beta_h": "true" if learn_beta_h else "false"}
    if method == "mm":
        W, H, trace = fit_mm(Y, MMConfig(K=K, alpha=hyper.alpha, max_iters=max_iters,
                                         rel_tol=tol, seed=seed))
        return FittedModel(W, H, method, hyper, False, Y.users, Y.items, None, extra), trace
    binarized = method == "pf-bin"
    if binarized:
        Y = binarize(Y)
    mode = Mode.NBMF if method == "cavi" else Mode.PF
    config = CAVIConfig(K=K, hyper=HyperParams(hyper.alpha, hyper.alpha_w, hyper.beta_w,
                                               hyper.alpha_h, hyper.beta_h, mode),
                        max_iters=max_iters, rel_tol=tol, seed=seed, learn_beta_h=learn_beta_h)
    state, trace = fit_cavi(Y, config)
    exposure = None
    if state.q_a is not None:
        exposure = np.column_stack([Y.rows, Y.cols, state.q_a.mean_nz])
    model = FittedModel(state.q_w.mean, state.q_h.mean, method, state.hyper, binarized,
                        Y.users, Y.items, exposure, extra)
    return model, trace


def cmd_train(args, argv, started):
    users, items = _vocab(args)
    Y = _load_in_frame(args.train, users, items)
    hyper = _hyper_from_args(args)
    model, trace = train_model(Y, args.method, args.k, hyper, args.seed, args.max_iters,
                               args.tol, not args.fixed_beta_h)
    save_model(model, args.out)
    trace_path = os.path.join(args.out, "trace.csv")
    trace.write_csv(trace_path)
    outputs = [os.path.join(args.out, n) for n in ("meta", "W.csv", "H.csv", "users.txt", "items.txt")]
    if model.exposure is not None:
        outputs.append(os.path.join(args.out, "q_a_mean.csv"))
    outputs.append(trace_path)
    inputs = [args.train] + ([os.path.join(args.vocab, "users.txt"),
                              os.path.join(args.vocab, "items.txt")] if args.vocab else [])
    _write_manifest(os.path.join(args.out, "manifest.json"), args, argv, inputs, outputs, started)
    label = "ELBO" if args.method != "mm" else "objective"
    print(f"{args.method}: K={args.k}, {len(trace) - 1} iterations, final {label} {trace.objective[-1]:.10g}")


def _model_frame_data(model, train_path, test_path):
    try:
        Y_train = _load_in_frame(train_path, model.users, model.items)
        Y_test = _load_in_frame(test_path, model.users, model.items) if test_path else None
    except ValueError as exc:
        raise ValidationError(f"data does not match the model frame: {exc}") from None
    return Y_train, Y_test


def cmd_evaluate(args, argv, started):
    spec = RelevanceSpec(args.rel.upper(), args.threshold)
    outputs = []
    inputs = [args.train, args.test]
    if args.sweep_k:
        if not args.sweep_out:
            raise ValidationError("--sweep-k requires --sweep-out")
        if args.seed is None:
            raise ValidationError("--sweep-k trains models and requires --seed")
        users, items = _vocab(args)
        Y_train = _load_in_frame(args.train, users, items)
        try:
            Y_test = _load_in_frame(args.test, Y_train.users, Y_train.items)
        except ValueError as exc:
            raise ValidationError(f"test data does not match the training frame: {exc}") from None
        hyper = _hyper_from_args(args)
        with open(args.sweep_out, "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "k", "ndcg", "n_users"])
            for K in args.sweep_k:
                model, _ = train_model(Y_train, args.method, K, hyper, args.seed,
                                       args.max_iters, args.tol)
                res = evaluate(predict_scores(model.W, model.H), Y_train, Y_test, spec, args.cutoff)
                writer.writerow([args.method, K, f"{res.mean_ndcg:.17g}", len(res.per_user)])
                print(f"K={K}\tNDCG={res.mean_ndcg:.6f}")
        outputs.append(args.sweep_out)
        _write_manifest(args.sweep_out + ".manifest.json", args, argv, inputs, outputs, started)
        return

    if not args.model:
        raise ValidationError("--model is required unless --sweep-k is given")
    model = load_model(args.model)
    Y_train, Y_test = _model_frame_data(model, args.train, args.test)
    scores = predict_scores(model.W, model.H)
    inputs += [os.path.join(args.model, n) for n in ("meta", "W.csv", "H.csv")]

    if args.sweep_s:
        if not args.sweep_out:
            raise ValidationError("--sweep-s requires --sweep-out")
        with open(args.sweep_out, "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s", "ndcg", "n_users"])
            for s in args.sweep_s:
                try:
                    res = evaluate(scores, Y_train, Y_test, RelevanceSpec("B", s), args.cutoff)
                    writer.writerow([s, f"{res.mean_ndcg:.17g}", len(res.per_user)])
                    print(f"s={s}\tNDCG={res.mean_ndcg:.6f}")
                except ValueError:
                    writer.writerow([s, "nan", 0])
                    print(f"s={s}\tno eligible users")
        outputs.append(args.sweep_out)
        _write_manifest(args.sweep_out + ".manifest.json", args, argv, inputs, outputs, started)
        return

    res = evaluate(scores, Y_train, Y_test, spec, args.cutoff)
    print(f"mean NDCG ({spec.kind.value}{'' if spec.kind.value == 'A' else f', s={spec.threshold}'})"
          f"\t{res.mean_ndcg:.10f}")
    print(f"users evaluated\t{len(res.per_user)}\nusers excluded\t{res.n_excluded}")
    if args.per_user:
        users = Y_train.users
        with open(args.per_user, "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user", "ndcg"])
            for u, v in sorted(res.per_user.items()):
                writer.writerow([users[u] if users else u, f"{v:.17g}"])
        outputs.append(args.per_user)
        _write_manifest(args.per_user + ".manifest.json", args, argv, inputs, outputs, started)


def exposure_tag(mean):
    if mean < UNDER_EXPOSED:
        return "under"
    if mean > OVER_EXPOSED:
        return "over"
    return "neutral"


def cmd_recommend(args, argv, started):
    model = load_model(args.model)
    Y_train, _ = _model_frame_data(model, args.train, None)
    try:
        u = model.users.index(args.user)
    except ValueError:
        raise ValidationError(f"unknown user {args.user!r}") from None
    lo, hi = np.searchsorted(Y_train.rows, [u, u + 1])
    consumed = Y_train.cols[lo:hi]
    counts = Y_train.counts[lo:hi]
    scores = predict_scores(model.W[u:u + 1], model.H)[0]
    ranking = rank_items(scores, consumed)
    fresh = ranking[: Y_train.n_items - consumed.size][: args.top]
    print(f"# top {len(fresh)} recommendations for {args.user}")
    print("rank\titem\tscore")
    for r, i in enumerate(fresh, start=1):
        print(f"{r}\t{model.items[i]}\t{scores[i]:.10g}")
    print(f"# exposure of consumed items (under < {UNDER_EXPOSED}, over > {OVER_EXPOSED})")
    if model.exposure is None:
        print(f"# not available: {model.method} models carry no exposure posterior")
        return
    exp_u = model.exposure[model.exposure[:, 0] == u]
    means = dict(zip(exp_u[:, 1].astype(np.int64).tolist(), exp_u[:, 2].tolist()))
    print("item\tcount\texposure\ttag")
    for i, c in sorted(zip(consumed.tolist(), counts.tolist()), key=lambda t: (-t[1], t[0])):
        m = means.get(i)
        if m is None:
            print(f"{model.items[i]}\t{c}\tNA\tNA")
        else:
            print(f"{model.items[i]}\t{c}\t{m:.6g}\t{exposure_tag(m)}")


def cmd_rerun(args, argv, started):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    for path, digest in manifest.get("inputs", {}).items():
        if not os.path.exists(path) or _sha256(path) != digest:
            raise ValidationError(f"input {path} changed since the manifest was written")
    return main(manifest["argv"])


# -- parser -----------------------------------------------------------------

def _add_hyper(p):
    p.add_argument("--alpha", type=_positive_float, default=1.0, help="NB dispersion")
    p.add_argument("--alpha-w", type=_positive_float, default=1.0)
    p.add_argument("--beta-w", type=_positive_float, default=1.0)
    p.add_argument("--alpha-h", type=_positive_float, default=1.0)
    p.add_argument("--beta-h", type=_positive_float, default=1.0)


def _add_fit_options(p):
    p.add_argument("--max-iters", type=_positive_int, default=1000)
    p.add_argument("--tol", type=_positive_float, default=1e-5, help="relative convergence tolerance")


def build_parser():
    parser = argparse.ArgumentParser(prog="nbmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a planted dataset")
    p.add_argument("--users", type=_positive_int, required=True)
    p.add_argument("--items", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pf", action="store_true", help="Poisson data (no exposures)")
    _add_hyper(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="size, density and cumulative count histogram")
    p.add_argument("--input", required=True)
    p.add_argument("--histogram", help="write the cumulative histogram CSV here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="filter and/or binarize a triplet file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-items-per-user", type=_positive_int, default=1)
    p.add_argument("--min-users-per-item", type=_positive_int, default=1)
    p.add_argument("--binarize", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("split", help="random train/test split of the nonzeros")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab", help="directory with users.txt/items.txt fixing the frame")
    p.add_argument("--fixed-beta-h", action="store_true", help="do not learn beta_h")
    _add_hyper(p)
    _add_fit_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="mean NDCG of a model on held-out counts")
    p.add_argument("--model")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--rel", choices=("a", "b", "A", "B"), default="a")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--cutoff", type=_positive_int, default=None)
    p.add_argument("--per-user", help="write per-user NDCG CSV here")
    p.add_argument("--sweep-s", type=_int_list, help="comma-separated thresholds for rel B")
    p.add_argument("--sweep-k", type=_int_list, help="comma-separated K values to train and score")
    p.add_argument("--sweep-out", help="CSV path for sweep results")
    p.add_argument("--method", choices=METHODS, default="cavi", help="method for --sweep-k")
    p.add_argument("--seed", type=int, help="seed for --sweep-k")
    p.add_argument("--vocab")
    _add_hyper(p)
    _add_fit_options(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="top-N list and exposure diagnostics for one user")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--top", type=_positive_int, default=10)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        result = args.func(args, argv, started)
    except NumericalError as exc:
        print(f"nbmf: numerical error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, KeyError) as exc:
        print(f"nbmf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"nbmf: I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return result or 0


if __name__ == "__main__":
    sys.exit(main())

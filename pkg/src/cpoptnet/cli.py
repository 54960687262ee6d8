"""Command-line pipeline: synth -> decompose -> predict -> evaluate.

Every command writes into an ``--out`` directory and leaves a
``manifest_<command>.json`` there recording its arguments. Paths in the
manifest are relative to the output directory so identical runs in
different directories produce identical files.

Exit codes: 0 success, 2 argument error, 3 numerical failure, 4 IO error.
"""

import argparse
import csv
import json
import logging
import os
import sys
import zlib
from collections import defaultdict

import numpy as np

from cpoptnet import __version__, kernels
from cpoptnet.als import AlsConfig, solve_als
from cpoptnet.cpopt import NcgConfig, relative_residual, solve
from cpoptnet.errors import NumericalError
from cpoptnet.formats import (
    is_kruskal_file,
    read_coo,
    read_kruskal,
    write_coo,
    write_kruskal,
    write_trace,
)
from cpoptnet.ingest import (
    IngestSchema,
    TensorSpec,
    build_tensor,
    load_records,
    restrict_records,
    select_top_clients,
    synth_generate,
)
from cpoptnet.metrics import aggregate, evaluate, write_report_csv
from cpoptnet.predict import (
    KINDS,
    TrainConfig,
    build_dataset,
    latent_series,
    predict_rolling,
    save_model,
    train,
)

log = logging.getLogger("cpoptnet")

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def derive_seed(seed, tag):
    """Fixed derivation of a per-purpose seed from the run seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _rel(path, out):
    return os.path.relpath(os.path.abspath(path), os.path.abspath(out))


_PATH_ARGS = ("func", "out", "input", "schema", "factors", "predictions", "truth")


def _write_manifest(out, command, args, inputs, outputs, extra=None):
    data = {
        "command": command,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed": getattr(args, "seed", None),
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in _PATH_ARGS},
        "inputs": {k: _rel(v, out) for k, v in inputs.items()},
        "outputs": sorted(outputs),
    }
    if extra:
        data.update(extra)
    suffix = f"_{args.model}" if command == "predict" else ""
    path = os.path.join(out, f"manifest_{command}{suffix}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _positive(name):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be at least 1")
        return v

    return parse


def _fraction(text):
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError("sparsity must lie in [0, 1)")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("value must be nonnegative")
    return v


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    spec = TensorSpec(args.clients, args.labels, args.slices)
    tensor, truth = synth_generate(
        spec, args.rank, args.noise, args.sparsity, derive_seed(args.seed, "synth"),
        period=args.period, trend_every=args.trend_every,
    )
    write_coo(os.path.join(args.out, "tensor.coo"), tensor)
    write_kruskal(os.path.join(args.out, "truth.kruskal"), truth)
    _write_manifest(args.out, "synth", args, {}, ["tensor.coo", "truth.kruskal"], {"nnz": tensor.nnz})
    print(f"wrote {tensor.nnz} entries of a {'x'.join(map(str, spec.shape))} tensor to {args.out}")
    return EXIT_OK


def cmd_ingest(args):
    schema = IngestSchema.from_json(args.schema)
    records, report = load_records(args.input, schema, with_report=True)
    index = select_top_clients(records, args.clients)
    spec = TensorSpec.from_schema(schema, index)
    tensor = build_tensor(restrict_records(records, index), spec)
    os.makedirs(args.out, exist_ok=True)
    write_coo(os.path.join(args.out, "tensor.coo"), tensor)
    with open(os.path.join(args.out, "clients.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "client_id"])
        for cid, i in sorted(index.items(), key=lambda kv: kv[1]):
            w.writerow([i, cid])
    _write_manifest(
        args.out, "ingest", args, {"input": args.input, "schema": args.schema},
        ["tensor.coo", "clients.csv"],
        {"rows": report.rows, "malformed": report.malformed, "out_of_span": report.out_of_span},
    )
    print(f"{report.rows} rows, {report.malformed} malformed, tensor nnz {tensor.nnz}")
    return EXIT_OK


def cmd_decompose(args):
    tensor = read_coo(args.input)
    os.makedirs(args.out, exist_ok=True)
    solvers = ["cpopt", "als"] if args.solver == "both" else [args.solver]
    init_seed = derive_seed(args.seed, "init")
    norm_sq = tensor.norm_sq()
    outputs, results = [], []
    status = EXIT_OK
    for name in solvers:
        trace_path = os.path.join(args.out, f"trace_{name}.csv")
        try:
            if name == "cpopt":
                cfg = NcgConfig(rank=args.rank, seed=init_seed, **_iters(args))
                factors, trace = solve(tensor, cfg)
            else:
                cfg = AlsConfig(rank=args.rank, seed=init_seed, **_iters(args))
                factors, trace = solve_als(tensor, cfg)
        except NumericalError as exc:
            if exc.trace is not None:
                write_trace(trace_path, exc.trace)
                outputs.append(os.path.basename(trace_path))
            print(f"{name}: numerical failure: {exc}", file=sys.stderr)
            status = EXIT_NUMERIC
            continue
        write_trace(trace_path, trace)
        write_kruskal(os.path.join(args.out, f"factors_{name}.kruskal"), factors)
        outputs += [f"trace_{name}.csv", f"factors_{name}.kruskal"]
        residual = relative_residual(tensor, factors, norm_sq)
        results.append((name, trace.final_objective, residual, trace.iterations, trace.status))
        print(f"{name}: W_c={trace.final_objective!r} residual={residual:.3e} "
              f"iters={trace.iterations} status={trace.status}")

    with open(os.path.join(args.out, "objective.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "objective", "relative_residual", "iterations", "status"])
        for name, obj, res, its, st in results:
            w.writerow([name, repr(obj), repr(res), its, st])
    outputs.append("objective.csv")
    if args.solver == "both" and len(results) == 2:
        (_, f_cp, *_), (_, f_als, *_) = results
        line = f"cpopt={f_cp!r} als={f_als!r} ratio={f_cp / f_als if f_als else float('nan')!r}"
        with open(os.path.join(args.out, "comparison.txt"), "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
        outputs.append("comparison.txt")
        print(line)
    _write_manifest(args.out, "decompose", args, {"input": args.input}, outputs)
    return status


def _iters(args):
    return {} if args.max_iters is None else {"max_iters": args.max_iters}


def cmd_predict(args):
    factors = read_kruskal(args.factors)
    K = factors.shape[2]
    if args.train_slices > K:
        raise UsageError(f"--train-slices {args.train_slices} exceeds the {K} slices in the factors")
    if args.window >= args.train_slices:
        raise UsageError("--window must be smaller than --train-slices")
    if args.open_loop and args.train_slices + args.horizon > K:
        raise UsageError("open-loop forecasting needs observed slices for the whole horizon")
    os.makedirs(args.out, exist_ok=True)
    ds = build_dataset(factors, args.window, args.train_slices)
    cfg = TrainConfig(epochs=args.epochs, seed=derive_seed(args.seed, f"train:{args.model}"))
    model = train(args.model, ds, cfg)
    model_name = f"model_{args.model}.bin"
    save_model(os.path.join(args.out, model_name), model)

    series = latent_series(factors)
    pred_name = f"predictions_{args.model}.csv"
    I, J, _ = factors.shape
    start = args.train_slices
    with open(os.path.join(args.out, pred_name), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client", "transaction", "slice", "predicted", "actual"])
        for i in range(I):
            for j in range(J):
                preds = predict_rolling(
                    model, factors, (i, j), args.horizon, start=start,
                    closed_loop=not args.open_loop,
                )
                for h, p in enumerate(preds):
                    s = start + h
                    actual = repr(float(series[i, j, s])) if s < K else ""
                    w.writerow([i, j, s, repr(float(p)), actual])
    _write_manifest(
        args.out, "predict", args, {"factors": args.factors}, [pred_name, model_name],
        {"final_training_loss": repr(float(model.losses[-1]))},
    )
    print(f"{args.model}: trained on {len(ds)} windows, wrote {pred_name}")
    return EXIT_OK


def _read_predictions(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"client", "transaction", "slice", "predicted"} - set(reader.fieldnames or [])
        if missing:
            raise UsageError(f"{path}: missing columns {sorted(missing)}")
        return {
            (int(r["client"]), int(r["transaction"]), int(r["slice"])): float(r["predicted"])
            for r in reader
        }


def _read_truth(path, keys):
    if is_kruskal_file(path):
        k = read_kruskal(path)
        series = latent_series(k)
        I, J, K = k.shape
        return {
            key: float(series[key]) for key in keys
            if 0 <= key[0] < I and 0 <= key[1] < J and 0 <= key[2] < K
        }
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"client", "transaction", "slice", "actual"} - set(reader.fieldnames or [])
        if missing:
            raise UsageError(f"{path}: missing columns {sorted(missing)}")
        return {
            (int(r["client"]), int(r["transaction"]), int(r["slice"])): float(r["actual"])
            for r in reader if r["actual"] != ""
        }


def cmd_evaluate(args):
    preds = _read_predictions(args.predictions)
    truth = _read_truth(args.truth, preds)
    common = [key for key in sorted(preds) if key in truth]
    if not common:
        raise UsageError("predictions and truth share no (client, transaction, slice) keys")
    orphans = [key for key in sorted(preds) if key not in truth]
    if orphans:
        shown = ", ".join(str(o) for o in orphans[:10])
        more = f" and {len(orphans) - 10} more" if len(orphans) > 10 else ""
        raise UsageError(f"predictions without truth: {shown}{more}")

    per_series = defaultdict(list)
    for key in common:
        per_series[key[:2]].append(key)
    by_transaction = defaultdict(list)
    for (i, j), keys in sorted(per_series.items()):
        rep = evaluate([preds[k] for k in keys], [truth[k] for k in keys])
        by_transaction[j].append(rep)
    rows = [(str(j), aggregate(reps)) for j, reps in sorted(by_transaction.items())]
    rows.append(("ALL", aggregate([r for reps in by_transaction.values() for r in reps])))
    os.makedirs(args.out, exist_ok=True)
    write_report_csv(os.path.join(args.out, "metrics.csv"), rows)
    _write_manifest(
        args.out, "evaluate", args, {"predictions": args.predictions, "truth": args.truth},
        ["metrics.csv"],
    )
    total = rows[-1][1]
    print(f"ALL: MAE={total.mae:.4g} RMSE={total.rmse:.4g} "
          f"cosine={total.cosine_sim:.4g} jaccard={total.jaccard_dist:.4g} n={total.n}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cpoptnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic activity tensor")
    p.add_argument("--out", required=True)
    p.add_argument("--clients", type=_positive("--clients"), default=200)
    p.add_argument("--labels", type=_positive("--labels"), default=22)
    p.add_argument("--slices", type=_positive("--slices"), default=16)
    p.add_argument("--rank", type=_positive("--rank"), default=25)
    p.add_argument("--noise", type=_nonneg_float, default=0.1)
    p.add_argument("--sparsity", type=_fraction, default=0.8)
    p.add_argument("--period", type=_positive("--period"), default=4)
    p.add_argument("--trend-every", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a tensor from a transaction CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--clients", type=_positive("--clients"), default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("decompose", help="fit a CP model to a COO tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=_positive("--rank"), default=25)
    p.add_argument("--solver", choices=["cpopt", "als", "both"], default="cpopt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=_positive("--max-iters"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("predict", help="train a forecaster on latent factors")
    p.add_argument("--factors", required=True)
    p.add_argument("--model", choices=list(KINDS), required=True)
    p.add_argument("--window", type=_positive("--window"), default=3)
    p.add_argument("--train-slices", type=_positive("--train-slices"), default=12)
    p.add_argument("--horizon", type=_positive("--horizon"), default=3)
    p.add_argument("--epochs", type=_positive("--epochs"), default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--open-loop", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())

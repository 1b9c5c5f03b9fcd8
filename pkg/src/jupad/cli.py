"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 numerical failure. Errors go to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import __version__
from .errors import DataError, NumericError
from .evaluation import classification_accuracy, naive_bayes_accuracy, select_rank, split
from .fileio import (RunConfig, build_dictionaries, config_hash, fit_config_from, load_csv, load_model,
                     save_model, write_csv, write_dataset, write_trace, _check_keys)
from .histogram import Dataset, histogram_1d, propose_grid, DEFAULT_BINS
from .model import sample
from .solver import fit
from .synth import FitDictionary, SynthSpec, experiment_spec, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("jupad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fit_from_config(cfg: RunConfig, trace: list | None = None):
    dataset = cfg.load_dataset()
    dictionaries = build_dictionaries(dataset, cfg.dictionaries)
    model = fit(dataset, dictionaries, cfg.fit, trace=trace)
    return dataset, _with_metadata(model, dataset, cfg), dictionaries


def _with_metadata(model, dataset: Dataset, cfg: RunConfig, **extra):
    model.metadata.update({
        "names": list(dataset.names),
        "state_labels": dict(dataset.state_labels),
        "transforms": dict(dataset.transforms),
        "label": dataset.label,
        "provenance": {"seed": cfg.fit.seed, "config_hash": config_hash(cfg.raw),
                       "normalization": dict(dataset.transforms), "n_samples": dataset.n_samples, **extra},
    })
    return model


def cmd_fit(args) -> int:
    cfg = RunConfig.load(args.config)
    model_path = Path(args.model) if args.model else cfg.model_path
    trace_path = Path(args.trace) if args.trace else cfg.trace_path
    if model_path is None:
        raise DataError("no model output path (set output.model or pass --model)")
    trace = []
    _, model, _ = _fit_from_config(cfg, trace)
    save_model(model, model_path)
    if trace_path is not None:
        write_trace(trace_path, trace)
    final = [r.objective for r in trace if r.stage == "stage3"][-1]
    print(f"fitted N={model.ndim} F={model.rank} objective={final!r} -> {model_path}")
    return EXIT_OK


def _load_for_model(model, path):
    meta = model.metadata
    names = meta["names"]
    ds = load_csv(path, state_labels=meta.get("state_labels"), transforms=meta.get("transforms"))
    missing = [n for n in names if n not in ds.names]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    order = [ds.names.index(n) for n in names]
    return Dataset(ds.values[:, order], list(names), [ds.num_states[i] for i in order],
                   meta.get("label"), ds.state_labels, ds.transforms)


def cmd_eval_density(args) -> int:
    model = load_model(args.model)
    meta = model.metadata
    ds = load_csv(args.points, state_labels={k: v for k, v in meta["state_labels"].items()},
                  transforms=meta.get("transforms"))
    names = meta["names"]
    order = [ds.names.index(n) for n in names if n in ds.names]
    if len(order) != len(names):
        raise DataError(f"{args.points}: needs columns {names}")
    dens = model.pdf(ds.values[:, order])
    write_csv(args.out, ["density"], ([d] for d in dens))
    print(f"wrote {dens.size} densities -> {args.out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    model = load_model(args.model)
    label = model.metadata.get("label")
    if label is None:
        raise DataError("model has no label column")
    test = _load_for_model(model, args.data)
    score = classification_accuracy(model, test, label)
    states = model.metadata["state_labels"][model.metadata["names"][label]]
    truth = test.values[:, label].astype(int)
    if args.predictions:
        write_csv(args.predictions, ["row", "label", "predicted"],
                  ([i, states[t], states[p] if p >= 0 else ""] for i, (t, p) in enumerate(zip(truth, score.predictions))))
    write_csv(args.scores, ["dataset", "F", "split_seed", "accuracy", "zero_density_fraction"],
              [[args.dataset_name or Path(args.data).stem, model.rank, args.split_seed if args.split_seed is not None else "",
                score.accuracy, score.zero_density_fraction]])
    print(f"accuracy={score.accuracy!r} zero_density_fraction={score.zero_density_fraction!r}")
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(args.model)
    meta = model.metadata
    values = sample(model, args.count, args.seed)
    ds = Dataset(values, list(meta["names"]),
                 [d.num_states if d.discrete else None for d in model.dictionaries],
                 None, meta.get("state_labels", {}), meta.get("transforms", {}))
    write_dataset(args.out, ds)
    print(f"wrote {args.count} samples -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = RunConfig.load(args.config)
    dataset = cfg.load_dataset()
    if dataset.label is None:
        raise DataError("evaluate needs data.label in the config")
    candidates = [int(c) for c in args.ranks.split(",")]
    rows = []
    for seed in args.split_seeds:
        train, val, test = split(dataset, tuple(args.fractions), seed)
        dictionaries = build_dictionaries(train, cfg.dictionaries)
        F = select_rank(train, val, dictionaries, candidates, cfg.fit)
        model = fit(train, dictionaries, replace(cfg.fit, rank=F))
        score = classification_accuracy(model, test, dataset.label)
        baseline = naive_bayes_accuracy(train, test)
        rows.append([args.dataset_name or cfg.data_path.stem, F, seed, score.accuracy,
                     score.zero_density_fraction, baseline])
        print(f"split_seed={seed} F={F} accuracy={score.accuracy:.4f} naive_bayes={baseline:.4f}")
    write_csv(args.out, ["dataset", "F", "split_seed", "accuracy", "zero_density_fraction",
                         "naive_bayes_accuracy"], rows)
    return EXIT_OK


_SYNTH_KEYS = ("experiment", "desk", "dims", "rank", "atoms_per_component", "mean_range", "shape_range",
               "seed", "sample_sizes", "trials", "test_size", "dictionary")


def cmd_synth(args) -> int:
    path = Path(args.config)
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise DataError(f"{path}: invalid YAML: {exc}") from None
    _check_keys(doc, ["synth", "fit", "output"], "config")
    sy = doc.get("synth") or {}
    _check_keys(sy, _SYNTH_KEYS, "synth")
    if "experiment" in sy:
        spec = experiment_spec(int(sy["experiment"]), bool(sy.get("desk", True)), int(sy.get("seed", 0)))
    else:
        spec = SynthSpec(sy.get("dims") or [], int(sy.get("rank", 0)),
                         int(sy.get("atoms_per_component", 5)), tuple(sy.get("mean_range", (-5, 5))),
                         tuple(sy.get("shape_range", (1, 2))), int(sy.get("seed", 0)))
    fit_section = dict(doc.get("fit") or {})
    fit_section.setdefault("rank", spec.rank)
    config = fit_config_from(fit_section)
    dict_section = dict(sy.get("dictionary") or {})
    _check_keys(dict_section, ["mode", "spacing", "families", "uniforms", "trim"], "synth.dictionary")
    dictionary = FitDictionary(**dict_section)
    out = args.out or (doc.get("output") or {}).get("table")
    if out is None:
        raise DataError("no table output path (set output.table or pass --out)")
    out = Path(out) if args.out else path.parent / out
    rows = run_experiment(spec, [int(n) for n in sy.get("sample_sizes", [1000, 10000, 100000])], config,
                          int(sy.get("trials", 5)), dictionary, int(sy.get("test_size", 1000)))
    write_csv(out, ["n_samples", "mean_d", "std_d", "wall_time"],
              ([r["n_samples"], r["mean_d"], r["std_d"], r["wall_time"]] for r in rows))
    for r in rows:
        print(f"N_s={r['n_samples']:>8d}  D={r['mean_d']:.4f} +/- {r['std_d']:.4f}  ({r['wall_time']:.1f}s)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    columns = json.loads(args.columns) if args.columns else None
    ds = load_csv(args.data, columns)
    grids = [propose_grid(ds, n, args.bins) for n in range(ds.ndim)]
    rows = []
    for n, name in enumerate(ds.names):
        hist = histogram_1d(ds, grids, n)
        edges = grids[n].edges
        col = ds.values[:, n]
        print(f"{name}: min={col.min():.6g} max={col.max():.6g} mean={col.mean():.6g} std={col.std():.6g}")
        for i, p in enumerate(hist):
            rows.append([name, edges[i], edges[i + 1], int(round(p * ds.n_samples)), p])
    write_csv(args.out, ["column", "bin_low", "bin_high", "count", "fraction"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jupad", description="Joint density estimation from pairwise marginals with dictionaries.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", help="fit a model from a YAML run config")
    s.add_argument("config")
    s.add_argument("--model", help="model output path (overrides output.model)")
    s.add_argument("--trace", help="convergence trace CSV (overrides output.trace)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval-density", help="evaluate model density at points")
    s.add_argument("--model", required=True)
    s.add_argument("--points", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval_density)

    s = sub.add_parser("classify", help="MAP-classify rows of a labelled CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--scores", required=True, help="accuracy CSV output")
    s.add_argument("--predictions", help="per-row predictions CSV output")
    s.add_argument("--dataset-name")
    s.add_argument("--split-seed", type=int)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("sample", help="draw samples from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("evaluate", help="split, select rank on validation, score on test")
    s.add_argument("config")
    s.add_argument("--ranks", required=True, help="comma-separated candidate ranks")
    s.add_argument("--split-seeds", type=int, nargs="+", default=[0])
    s.add_argument("--fractions", type=float, nargs=3, default=[0.6, 0.2, 0.2])
    s.add_argument("--dataset-name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="run the synthetic D-versus-N_s benchmark")
    s.add_argument("config")
    s.add_argument("--out", help="results table CSV (overrides output.table)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("inspect", help="per-column histograms of a CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--columns", help='column kinds as JSON, e.g. \'{"label": "discrete"}\'')
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_inspect)
    return p


def _report(kind: str, exc: BaseException) -> None:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _report("usage", exc)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        _report("numeric", exc)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        _report("data", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``dstgnn <subcommand> [--config FILE] [--set key=value ...]``.

Every subcommand writes into its own directory under ``output.dir`` along
with ``config_resolved.json`` and ``manifest.json``. Numeric artifacts are
reproducible bit-for-bit for a fixed config, seed and thread count; only
the manifest's timing entries vary between runs.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import reference
from .config import RunConfig, parse_config, parse_override
from .connectivity import pli_wpli_comparison, threshold_graph, write_matrix_csv
from .dataset_io import CHANNELS, load_dataset, planted_dataset, write_dataset
from .errors import ConfigError, DstGnnError
from .features import FEATURE_NAMES, scaler_from_dict, scaler_to_dict

log = logging.getLogger("dstgnn")

THREADS_ENV = "DSTGNN_THREADS"
SUBCOMMANDS = ("synth", "preprocess", "features", "graphs", "train", "loso", "ablate",
               "baseline", "stats", "explain", "report")


# -- small I/O helpers --------------------------------------------------------

def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def write_rows_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    import csv
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


@contextmanager
def _thread_limit(n: int):
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


class Run:
    """Output directory of one subcommand: artifacts, timings, manifest."""

    def __init__(self, cfg: RunConfig, name: str):
        self.cfg = cfg
        self.name = name
        self.dir = Path(cfg["output.dir"]) / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[Path] = []
        self.timings: dict[str, float] = {}

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        yield
        self.timings[stage] = round(time.perf_counter() - t0, 3)

    def add(self, path: Path) -> Path:
        self.artifacts.append(Path(path))
        return path

    def json(self, name: str, obj: Any) -> Path:
        return self.add(write_json(self.dir / name, obj))

    def finish(self, threads: int) -> None:
        self.json("config_resolved.json", self.cfg.snapshot())
        manifest = {
            "subcommand": self.name,
            "config_sha256": self.cfg.digest(),
            "version": __version__,
            "numpy_version": np.__version__,
            "threads": threads,
            "artifacts": sorted(str(p.relative_to(self.dir)) for p in self.artifacts),
            "timings_s": self.timings,
        }
        write_json(self.dir / "manifest.json", manifest)


# -- data helpers --------------------------------------------------------------

def _dataset(cfg: RunConfig):
    root = cfg["data.root"]
    if root is None:
        raise ConfigError("data.root is not set (use --data-root or the config file)")
    if not Path(root).is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    return load_dataset(root, cfg["data.tasks"], cfg["data.strict_rows"])


def _prepared(cfg: RunConfig, run: Run):
    from .pipeline import prepare_dataset
    ds = _dataset(cfg)
    with run.timed("prepare"):
        return prepare_dataset(ds, cfg)


def _sequences(cfg: RunConfig, run: Run, prepared=None):
    from .pipeline import build_sequences
    prepared = prepared if prepared is not None else _prepared(cfg, run)
    return build_sequences(prepared, cfg)


def _write_report(run: Run, report) -> None:
    run.json("run_report.json", report.to_dict())
    cols = ["tag", "seed", "test_subject", "true_label", "probability", "predicted", "correct",
            "epochs_run", "best_epoch", "best_val_loss", "error"]
    run.add(write_rows_csv(run.dir / "metrics.csv", report.metric_rows(), cols))


# -- subcommands --------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args, run: Run) -> None:
    root = Path(args.out or cfg["data.root"] or (Path(cfg["output.dir"]) / "data"))
    with run.timed("synth"):
        ds = planted_dataset(cfg["synth.n_subjects"], cfg["data.tasks"], cfg["synth.seed"],
                             cfg["synth.duration_s"], cfg["synth.beta_gain"])
        write_dataset(ds, root)
    run.json("synth.json", {"root": str(root), "subjects": ds.subjects,
                            "tasks": [t.value for t in ds.tasks]})


def cmd_preprocess(cfg: RunConfig, args, run: Run) -> None:
    from .preprocess import bandpass, notch, plan_windows, zscore
    ds = _dataset(cfg)
    pc = cfg.preprocess()
    rows = []
    with run.timed("preprocess"):
        for (sid, task), rec in sorted(ds.recordings.items(),
                                       key=lambda kv: (ds.subjects.index(kv[0][0]), kv[0][1].value)):
            x, stats = zscore(notch(bandpass(rec, pc.bandpass), pc.notch_center_hz, pc.notch_q))
            plan = plan_windows(x.n_samples, x.sample_rate_hz, pc.window_count, pc.window_length_s)
            rows.append({"subject_id": sid, "task": task.value, "n_samples": rec.n_samples,
                         "window_len": plan.window_len_samples, "stride": plan.stride_samples, "count": plan.count,
                         "min_sigma": float(stats.sigma.min()), "max_sigma": float(stats.sigma.max())})
    run.add(write_rows_csv(run.dir / "windows.csv", rows))


def cmd_features(cfg: RunConfig, args, run: Run) -> None:
    prepared = _prepared(cfg, run)
    rows = []
    for p in prepared:
        for t in range(p.features.shape[0]):
            for c, ch in enumerate(CHANNELS):
                rows.append({"subject_id": p.subject_id, "task": p.task, "window": t, "channel": ch}
                            | {f: float(p.features[t, c, k]) for k, f in enumerate(FEATURE_NAMES)})
    run.add(write_rows_csv(run.dir / "node_features.csv", rows))


def cmd_graphs(cfg: RunConfig, args, run: Run) -> None:
    prepared = _prepared(cfg, run)
    gdir = run.dir / "matrices"
    gdir.mkdir(exist_ok=True)
    edges = []
    comparison = {}
    for p in prepared:
        for metric in ("pli", "wpli"):
            path = gdir / f"{p.subject_id}_{p.task}_{metric}_mean.csv"
            write_matrix_csv(p.matrices(metric).mean(axis=0), path)
            run.add(path)
        comparison[(p.subject_id, p.task)] = (p.pli.mean(axis=0), p.wpli.mean(axis=0))
        for t, m in enumerate(p.matrices(cfg["connectivity.metric"])):
            g = threshold_graph(m, cfg["connectivity.threshold_percentile"],
                                cfg["connectivity.absolute_threshold"])
            edges.extend({"subject_id": p.subject_id, "task": p.task, "window": t,
                          "src": CHANNELS[i], "dst": CHANNELS[j], "weight": float(m[i, j])}
                         for i, j in g.edges)
    run.add(write_rows_csv(run.dir / "edges.csv", edges,
                           ["subject_id", "task", "window", "src", "dst", "weight"]))
    rep = pli_wpli_comparison(comparison)
    rep["reference"] = reference.PLI_WPLI
    run.json("pli_wpli_comparison.json", rep)


def cmd_loso(cfg: RunConfig, args, run: Run) -> None:
    from .evaluation.training import run_experiment
    seqs = _sequences(cfg, run)
    with run.timed("train"):
        report = run_experiment(seqs, cfg, tag="full")
    _write_report(run, report)


def cmd_ablate(cfg: RunConfig, args, run: Run) -> None:
    from .evaluation.training import ablation_config, run_experiment
    vcfg = ablation_config(cfg, args.variant)
    run.cfg = vcfg
    seqs = _sequences(vcfg, run)
    with run.timed("train"):
        report = run_experiment(seqs, vcfg, tag=args.variant)
    _write_report(run, report)


def cmd_baseline(cfg: RunConfig, args, run: Run) -> None:
    from .evaluation.baselines import run_baseline
    prepared = _prepared(cfg, run)
    with run.timed("train"):
        report = run_baseline(prepared, cfg, args.kind)
    _write_report(run, report)


def cmd_stats(cfg: RunConfig, args, run: Run) -> None:
    from .evaluation.stats import group_stats
    prepared = _prepared(cfg, run)
    with run.timed("stats"):
        gs = group_stats(prepared, cfg["eval.stats_test"])
    for p in gs.write(run.dir / "group_stats"):
        run.add(p)
    run.json("group_stats.json", gs.to_dict())


def cmd_train(cfg: RunConfig, args, run: Run) -> None:
    from .evaluation.training import train_final_model
    from .nn.checkpoint import save_checkpoint
    seqs = _sequences(cfg, run)
    seed = cfg["eval.seeds"][0]
    with run.timed("train"):
        fm = train_final_model(seqs, cfg, seed)
    extra = {
        "seed": seed, "config_sha256": cfg.digest(), "val_subjects": list(fm.val_subjects),
        "best_epoch": fm.history["best_epoch"], "epochs_run": fm.history["epochs_run"],
        "scaler": scaler_to_dict(fm.scaler),
    }
    path = run.dir / "model.json"
    save_checkpoint(fm.model, path, extra)
    run.add(path)


def _checkpoint_path(cfg: RunConfig) -> Path:
    if cfg["explain.checkpoint"]:
        return Path(cfg["explain.checkpoint"])
    return Path(cfg["output.dir"]) / "checkpoints" / "model.json"


def cmd_explain(cfg: RunConfig, args, run: Run) -> None:
    from . import explain as ex
    from .nn.checkpoint import load_checkpoint
    model, extra = load_checkpoint(_checkpoint_path(cfg))
    seqs = _sequences(cfg.updated({"model.variant": model.cfg.variant}), run)
    scaler = scaler_from_dict(extra.get("scaler"))
    from .evaluation.training import scale_sequences
    seqs = scale_sequences(seqs, scaler)
    maps = []
    rows = []
    with run.timed("integrated_gradients"):
        for s in seqs:
            m = ex.integrated_gradients(model, s.features, s.adjacency, steps=cfg["explain.ig_steps"])
            maps.append(m.values)
            rows.append({"subject_id": s.subject_id, "task": s.task, "logit": m.logit,
                         "baseline_logit": m.baseline_logit,
                         "completeness_error": m.completeness_error})
    stack = np.stack(maps)
    ex.write_attributions_csv(stack.mean(axis=0), run.add(run.dir / "ig_attributions.csv"))
    ci = ex.channel_importance(stack)
    fi = ex.feature_importance(stack)
    ex.write_importance_csv(ci, CHANNELS, "channel", run.add(run.dir / "channel_importance.csv"))
    ex.write_importance_csv(fi, FEATURE_NAMES, "feature", run.add(run.dir / "feature_importance.csv"))
    with run.timed("edge_importance"):
        e = ex.edge_importance(model, [(s.features, s.adjacency) for s in seqs])
    ex.write_edge_importance_csv(e, run.add(run.dir / "edge_importance.csv"))
    top = ex.top_connections(e, cfg["explain.top_k"])
    ex.write_top_edges_csv(top, run.add(run.dir / "top_edges.csv"))
    run.add(write_rows_csv(run.dir / "ig_completeness.csv", rows))
    run.json("explain_summary.json", {
        "channel_importance": dict(zip(CHANNELS, ci.tolist())),
        "feature_importance": dict(zip(FEATURE_NAMES, fi.tolist())),
        "feature_group_shares": ex.feature_group_shares(fi),
        "reference_feature_group_shares": reference.FEATURE_SHARES,
        "top_edges": [f"{a}-{b}" for a, b, _ in top],
        "reference_top_edges": list(reference.TOP_EDGES),
        "max_completeness_error": max(r["completeness_error"] for r in rows),
    })


def _load(path: Path):
    return json.loads(path.read_text()) if path.exists() else None


def _pct(agg: dict | None) -> dict | None:
    if agg is None:
        return None
    return {k: {"mean": None if v["mean"] is None else 100 * v["mean"],
                "sd": None if v["sd"] is None else 100 * v["sd"]} for k, v in agg.items()}


def cmd_report(cfg: RunConfig, args, run: Run) -> None:
    out = Path(cfg["output.dir"])
    loso = _load(out / "loso" / "run_report.json")
    summary: dict[str, Any] = {"units": "percent", "model": None, "baselines": {},
                               "ablations": {}, "flags": []}
    if loso:
        seeds = {s["seed"]: {k: 100 * v if v is not None else None
                             for k, v in s["subject_metrics"].items() if k != "zero_division"}
                 for s in loso["seeds"]}
        summary["model"] = {
            "per_seed": seeds, "aggregate": _pct(loso["aggregate"]),
            "sample_level_aggregate": _pct(loso["sample_level_aggregate"]),
            "reference_per_seed": reference.MODEL_BY_SEED,
            "reference_aggregate": {k: {"mean": m, "sd": s}
                                    for k, (m, s) in reference.MODEL_MEAN_SD.items()},
        }
        if not any((s.get("recall") or 0) >= 100 * reference.MIN_RECALL_FLAG for s in seeds.values()):
            summary["flags"].append(
                f"no seed reached subject-level recall >= {100 * reference.MIN_RECALL_FLAG:.0f}%")
    for kind in ("logreg", "mlp"):
        rep = _load(out / f"baseline_{kind}" / "run_report.json")
        summary["baselines"][kind] = {"aggregate": _pct(rep["aggregate"]) if rep else None,
                                      "reference": reference.BASELINES[kind]}
    for variant in ("spatial_only", "fully_connected"):
        rep = _load(out / f"ablate_{variant}" / "run_report.json")
        summary["ablations"][variant] = {"aggregate": _pct(rep["aggregate"]) if rep else None,
                                         "reference": reference.ABLATIONS[variant]}
    summary["ablations"]["full"] = {"aggregate": summary["model"]["aggregate"] if loso else None,
                                    "reference": reference.ABLATIONS["full"]}
    stats = _load(out / "stats" / "group_stats.json")
    summary["group_stats"] = stats["band_power"] if stats else None
    graphs = _load(out / "graphs" / "pli_wpli_comparison.json")
    summary["pli_wpli"] = ({"mean_pearson_r": graphs["mean_pearson_r"],
                            "mean_ratio": graphs["mean_ratio"],
                            "reference": reference.PLI_WPLI} if graphs else None)
    summary["explain"] = _load(out / "explain" / "explain_summary.json")
    run.json("summary.json", summary)


COMMANDS: dict[str, Callable] = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "features": cmd_features,
    "graphs": cmd_graphs, "train": cmd_train, "loso": cmd_loso, "ablate": cmd_ablate,
    "baseline": cmd_baseline, "stats": cmd_stats, "explain": cmd_explain, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("--data-root", help="shortcut for --set data.root=...")
    common.add_argument("--output-dir", help="shortcut for --set output.dir=...")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="dstgnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write the planted synthetic dataset")
    p.add_argument("--out", help="dataset root to write (default: data.root)")
    for name, text in (("preprocess", "filter, normalise and window; write window plans"),
                       ("features", "write node features per window"),
                       ("graphs", "write connectivity matrices, edge lists and PLI/wPLI comparison"),
                       ("train", "fit one model on all subjects and save a checkpoint"),
                       ("loso", "leave-one-subject-out evaluation over all seeds"),
                       ("stats", "group-level wPLI differences and band-power tests"),
                       ("explain", "attributions from a trained checkpoint"),
                       ("report", "merge existing outputs into summary.json")):
        sub.add_parser(name, parents=[common], help=text)
    p = sub.add_parser("ablate", parents=[common], help="LOSO with one component swapped out")
    p.add_argument("--variant", required=True, choices=("full", "spatial_only", "fully_connected"))
    p = sub.add_parser("baseline", parents=[common], help="classical window-level baselines")
    p.add_argument("--kind", required=True, choices=("logreg", "mlp"))
    return parser


def run_dir_name(args) -> str:
    if args.command == "ablate":
        return f"ablate_{args.variant}"
    if args.command == "baseline":
        return f"baseline_{args.kind}"
    if args.command == "train":
        return "checkpoints"
    return args.command


def resolve_config(args) -> RunConfig:
    overrides = dict(parse_override(o) for o in args.overrides)
    if args.data_root:
        overrides["data.root"] = args.data_root
    if args.output_dir:
        overrides["output.dir"] = args.output_dir
    return parse_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        threads = thread_count()
        run = Run(cfg, run_dir_name(args))
        with _thread_limit(threads):
            COMMANDS[args.command](cfg, args, run)
        run.finish(threads)
    except Exception as exc:  # the CLI reports every failure as one line
        if args.verbose:
            logging.exception("%s failed", args.command)
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"dstgnn {args.command}: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

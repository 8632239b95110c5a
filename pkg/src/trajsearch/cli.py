"""Staged command-line pipeline.

Commands: preprocess, distances, build-graph, train, search, evaluate,
pipeline. Each stage reads the previous stage's artifact from --out-dir and
writes its own, with a .meta.json sidecar recording the producing config so
identical inputs and seeds replay byte-identically.

Exit codes: 0 success, 2 bad input, 3 numeric failure, 4 I/O error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import config as cfgmod
from . import fileformats as ff
from .distance import normalize_distances, raw_distance_matrix
from .errors import InputError, NumericError
from .gnn import init_model, train
from .graph import build_graph, choose_thresholds
from .ingest import (GridSpec, filter_by_length, grid_trajectories,
                     gridded_to_trajectories, parse_dataset, write_canonical_jsonl)
from .search_eval import ground_truth_topn, hit_ratio, knn_search, recall_n_at_k, retrieval_topk

log = logging.getLogger(__name__)

CANONICAL = "canonical.jsonl"
RAW_TSM = "raw.tsm1"
NORM_TSM = "normalized.tsm1"
GRAPH_TSG = "graph.tsg1"
MODEL_TSN = "model.tsn1"
EMB_TSE = "embeddings.tse1"
LOSS_CSV = "loss_history.csv"
REPORT_JSON = "report.json"


def _out(cfg):
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_preprocess(cfg):
    if not cfg.input:
        raise InputError("preprocess requires --input")
    trajs = parse_dataset(cfg.input, cfg.format)
    n_parsed = len(trajs)
    if not cfg.filter_after_grid:
        trajs = filter_by_length(trajs, cfg.min_points)
    if not trajs:
        raise InputError(f"zero trajectories left after the {cfg.min_points}-point length filter")
    spec = GridSpec.from_trajectories(trajs, cfg.cell_size_m)
    gridded = grid_trajectories(trajs, spec)
    canonical = gridded_to_trajectories(gridded)
    if cfg.filter_after_grid:
        canonical = filter_by_length(canonical, cfg.min_points)
        if not canonical:
            raise InputError(f"zero trajectories left after the {cfg.min_points}-point length filter")
    path = _out(cfg) / CANONICAL
    write_canonical_jsonl(canonical, path)
    ff.write_sidecar(path, {"stage": "preprocess", "config": cfg.to_dict(),
                            "n_parsed": n_parsed, "n_written": len(canonical),
                            "grid_origin": [spec.origin_lon, spec.origin_lat]})
    log.info("preprocess: parsed %d, wrote %d trajectories to %s", n_parsed, len(canonical), path)
    return path


def _read_canonical(cfg):
    path = Path(cfg.out_dir) / CANONICAL
    if not path.exists():
        raise InputError(f"{path} not found; run preprocess first")
    return parse_dataset(path, "canonical_jsonl")


def cmd_distances(cfg):
    trajs = _read_canonical(cfg)
    if len(trajs) < 2:
        raise InputError("need at least 2 trajectories to build a distance matrix")
    t0 = time.perf_counter()
    raw = raw_distance_matrix([t.points for t in trajs], cfg.distance, workers=cfg.workers)
    log.info("distances: %d x %d %s matrix in %.2fs (%d workers)",
             raw.n, raw.n, cfg.distance, time.perf_counter() - t0, cfg.workers)
    norm = normalize_distances(raw)
    out = _out(cfg)
    meta = {"stage": "distances", "config": cfg.to_dict(), "n": raw.n}
    ff.write_tsm1(out / RAW_TSM, raw, meta=meta)
    ff.write_tsm1(out / NORM_TSM, norm, meta={**meta, "scale_divisor": norm.scale_divisor})
    return out / RAW_TSM, out / NORM_TSM


def cmd_build_graph(cfg):
    path = Path(cfg.out_dir) / NORM_TSM
    if not path.exists():
        raise InputError(f"{path} not found; run distances first")
    d = ff.read_tsm1(path)
    thresholds = choose_thresholds(d, cfg.effective_m, q=cfg.c0_percentile)
    g = build_graph(d, thresholds)
    out_path = _out(cfg) / GRAPH_TSG
    ff.write_tsg1(out_path, g, meta={"stage": "build-graph", "config": cfg.to_dict(),
                                     "edges_per_layer": [l.n_edges for l in g.layers],
                                     "thresholds": thresholds.c.tolist()})
    log.info("build-graph: %d nodes, %d layers, edges per layer %s",
             g.n, g.m, [l.n_edges for l in g.layers])
    return out_path


def cmd_train(cfg):
    trajs = _read_canonical(cfg)
    ids = [t.id for t in trajs]
    out = Path(cfg.out_dir)
    d = ff.read_tsm1(out / NORM_TSM)
    g = ff.read_tsg1(out / GRAPH_TSG, node_ids=ids)
    if d.n != g.n:
        raise InputError(f"matrix has {d.n} rows but graph has {g.n} nodes")
    tc = cfg.train_config()
    model, state = init_model(g, tc)
    t0 = time.perf_counter()
    model, emb, history = train(model, state.H[0], g, d, tc)
    log.info("train: %d epochs in %.2fs, loss %.6f -> %.6f",
             tc.epochs, time.perf_counter() - t0, history[0], history[-1])
    meta = {"stage": "train", "config": cfg.to_dict()}
    ff.write_tsn1(out / MODEL_TSN, model, meta=meta)
    ff.write_tse1(out / EMB_TSE, emb, meta=meta)
    with open(out / LOSS_CSV, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for e, l in enumerate(history):
            fh.write(f"{e},{l!r}\n")
    return out / MODEL_TSN, out / EMB_TSE


def cmd_search(embeddings_path, query_id, k):
    emb = ff.read_tse1(embeddings_path)
    for tid in knn_search(emb, query_id, k):
        print(tid)


def cmd_evaluate(cfg, embeddings_path=None, raw_path=None, out_path=None,
                 extra_n=None, extra_k=None):
    out = Path(cfg.out_dir)
    emb = ff.read_tse1(embeddings_path or out / EMB_TSE)
    raw = ff.read_tsm1(raw_path or out / RAW_TSM)
    if raw.n != emb.n:
        raise InputError(f"raw matrix has {raw.n} rows but embeddings have {emb.n}")
    report = {
        "metric_distance": raw.kind,
        "HR@10": hit_ratio(retrieval_topk(emb, 10), ground_truth_topn(raw, emb.ids, 10), 10),
        "HR@50": hit_ratio(retrieval_topk(emb, 50), ground_truth_topn(raw, emb.ids, 50), 50),
        "R10@50": recall_n_at_k(retrieval_topk(emb, 50), ground_truth_topn(raw, emb.ids, 10), 10, 50),
        "n": emb.n,
        "seed": cfg.seed,
    }
    if extra_n is not None and extra_k is not None:
        X = retrieval_topk(emb, extra_k)
        Y = ground_truth_topn(raw, emb.ids, extra_n)
        if extra_k == extra_n:
            report[f"HR@{extra_k}"] = hit_ratio(X, Y, extra_k)
        else:
            report[f"R{extra_n}@{extra_k}"] = recall_n_at_k(X, Y, extra_n, extra_k)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return report


def cmd_pipeline(cfg):
    cmd_preprocess(cfg)
    cmd_distances(cfg)
    cmd_build_graph(cfg)
    cmd_train(cfg)
    return cmd_evaluate(cfg, out_path=Path(cfg.out_dir) / REPORT_JSON)


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", dest="out_dir")


def build_parser():
    parser = argparse.ArgumentParser(prog="trajsearch",
                                     description="Trajectory similarity search pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse, length-filter and grid raw trajectories")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=("porto_csv", "geolife_plt", "canonical_jsonl"))
    p.add_argument("--min-points", dest="min_points", type=int)
    p.add_argument("--cell-size-m", dest="cell_size_m", type=float)
    p.add_argument("--filter-after-grid", dest="filter_after_grid", action="store_true", default=None)

    p = sub.add_parser("distances", help="compute raw + normalized distance matrices")
    _add_common(p)
    p.add_argument("--distance", choices=("frechet", "hausdorff"))

    p = sub.add_parser("build-graph", help="build the multi-scale similarity graph")
    _add_common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--c0-percentile", dest="c0_percentile", type=float)
    p.add_argument("--single-scale", dest="single_scale", action="store_true", default=None)

    p = sub.add_parser("train", help="train the attention GNN and emit embeddings")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--no-sequential-connection", dest="no_sequential_connection",
                   action="store_true", default=None)
    p.add_argument("--no-edge-bias", dest="no_edge_bias", action="store_true", default=None)

    p = sub.add_parser("search", help="print the top-K similar trajectory IDs for a query")
    _add_common(p)
    p.add_argument("query_id")
    p.add_argument("--embeddings", help="TSE1 file (default: <out-dir>/embeddings.tse1)")
    p.add_argument("--k", type=int, default=10)

    p = sub.add_parser("evaluate", help="compute HR@10 / HR@50 / R10@50 against ground truth")
    _add_common(p)
    p.add_argument("--embeddings")
    p.add_argument("--raw-matrix", dest="raw_matrix")
    p.add_argument("--out")
    p.add_argument("--n", type=int, help="extra ground-truth depth N")
    p.add_argument("--k", type=int, help="extra retrieval depth K")

    p = sub.add_parser("pipeline", help="run all stages end to end")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=("porto_csv", "geolife_plt", "canonical_jsonl"))
    p.add_argument("--min-points", dest="min_points", type=int)
    p.add_argument("--cell-size-m", dest="cell_size_m", type=float)
    p.add_argument("--filter-after-grid", dest="filter_after_grid", action="store_true", default=None)
    p.add_argument("--distance", choices=("frechet", "hausdorff"))
    p.add_argument("--m", type=int)
    p.add_argument("--c0-percentile", dest="c0_percentile", type=float)
    p.add_argument("--single-scale", dest="single_scale", action="store_true", default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--no-sequential-connection", dest="no_sequential_connection",
                   action="store_true", default=None)
    p.add_argument("--no-edge-bias", dest="no_edge_bias", action="store_true", default=None)

    return parser


_CFG_KEYS = ("seed", "workers", "out_dir", "input", "format", "min_points", "cell_size_m",
             "filter_after_grid", "distance", "m", "c0_percentile", "single_scale",
             "epochs", "lr", "optimizer", "no_sequential_connection", "no_edge_bias")


def _config_from_args(args):
    overrides = {k: getattr(args, k) for k in _CFG_KEYS if hasattr(args, k)}
    return cfgmod.build_config(getattr(args, "config", None), overrides)


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    if args.command == "preprocess":
        cmd_preprocess(cfg)
    elif args.command == "distances":
        cmd_distances(cfg)
    elif args.command == "build-graph":
        cmd_build_graph(cfg)
    elif args.command == "train":
        cmd_train(cfg)
    elif args.command == "search":
        emb_path = args.embeddings or Path(cfg.out_dir) / EMB_TSE
        cmd_search(emb_path, args.query_id, args.k)
    elif args.command == "evaluate":
        cmd_evaluate(cfg, embeddings_path=args.embeddings, raw_path=args.raw_matrix,
                     out_path=args.out, extra_n=args.n, extra_k=args.k)
    elif args.command == "pipeline":
        cmd_pipeline(cfg)
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(argv)
    except InputError as exc:
        log.error("bad input: %s", exc)
        return 2
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return 3
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())

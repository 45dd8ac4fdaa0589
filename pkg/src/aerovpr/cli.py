"""Command-line orchestrator.

Subcommands: synth, build-map, extract, retrieve, rerank, align, evaluate.
Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
Options may also come from a ``key=value`` config file via ``--config``;
explicit flags win on conflict.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .alignment import AlignmentParams, RansacParams, localize
from .descstore import build_database, load_database, save_database, search
from .errors import AerovprError, AlignmentError, ConfigError
from .extractors import extract_local, global_descriptor_grid
from .features import load_features, rerank, save_features
from .geo import GeoPoint
from .imgio import image_size, load_image
from .metrics import load_queries
from .pipeline import (
    EvalConfig,
    evaluate,
    import_tileset_global,
    import_tileset_local,
    write_predictions_csv,
    write_retrieval_csv,
)
from .synth import Perturbation, SynthConfig, generate_map, generate_queries
from .tilemap import build_tiles, ingest_raw_map, load_tileset, write_tileset


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerovpr",
        description="Aerial visual place recognition evaluation harness",
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="key=value file supplying defaults for the subcommand flags",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic raw map and queries")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--tile-px", type=int, default=256)
    p.add_argument("--anchor-lat", type=float, default=47.0)
    p.add_argument("--anchor-lon", type=float, default=8.0)
    p.add_argument("--meters-per-tile", type=float, default=200.0)
    p.add_argument("--query-count", type=int, default=20)
    p.add_argument("--max-rotation", type=float, default=0.0)
    p.add_argument("--scale-min", type=float, default=1.0)
    p.add_argument("--scale-max", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)

    p = sub.add_parser("build-map", help="construct a tile database")
    p.add_argument("--raw", type=Path, required=True, help="raw map metadata CSV")
    p.add_argument("--zoom", type=float, required=True)
    p.add_argument("--overlap", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resolution", type=int, default=None)

    p = sub.add_parser("extract", help="compute or import descriptors/features")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--tileset", type=Path, help="tileset metadata CSV")
    src.add_argument("--queries", type=Path, help="query CSV")
    p.add_argument("--kind", choices=["global", "local"], required=True)
    p.add_argument("--source", choices=["builtin", "import"], default="builtin")
    p.add_argument("--import-path", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-corners", type=int, default=512)

    p = sub.add_parser("retrieve", help="exact top-N search per query")
    p.add_argument("--database", type=Path, required=True, help="tile AVLD")
    p.add_argument("--query-database", type=Path, required=True, help="query AVLD")
    p.add_argument("--queries", type=Path, required=True, help="query CSV")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("rerank", help="re-order candidates by inlier count")
    p.add_argument("--retrieval", type=Path, required=True)
    p.add_argument("--query-feats", type=Path, required=True)
    p.add_argument("--tile-feats", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--ransac-threshold", type=float, default=3.0)
    p.add_argument("--ransac-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("align", help="localize each query against its top tile")
    p.add_argument("--ranking", type=Path, required=True, help="retrieval/rerank CSV")
    p.add_argument("--tileset", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--query-feats", type=Path, required=True)
    p.add_argument("--tile-feats", type=Path, required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--ransac-threshold", type=float, default=3.0)
    p.add_argument("--ransac-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="full grid evaluation with reports")
    p.add_argument("--raw", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--zoom", type=_float_list, default=(100.0,))
    p.add_argument("--overlap", type=_float_list, default=(0.0,))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--source", choices=["builtin", "import"], default="builtin")
    p.add_argument("--import-path", type=Path)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rerank", action="store_true")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--ransac-threshold", type=float, default=3.0)
    p.add_argument("--ransac-iters", type=int, default=2000)
    p.add_argument("--mu", type=_float_list, default=(10.0, 50.0, 100.0))
    p.add_argument("--n-report", type=_int_list, default=(1, 5, 10))
    p.add_argument("--max-corners", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Strip ``--config PATH`` and inject the file's key=value entries as
    flags right after the subcommand token, before any user flags, so that
    explicitly given flags win."""
    cfg_path: Path | None = None
    cleaned: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config needs a file path")
            cfg_path = Path(argv[i + 1])
            i += 2
            continue
        if tok.startswith("--config="):
            cfg_path = Path(tok.split("=", 1)[1])
            i += 1
            continue
        cleaned.append(tok)
        i += 1
    if cfg_path is None:
        return cleaned
    if not cfg_path.is_file():
        raise ConfigError(f"config file not found: {cfg_path}")
    injected: list[str] = []
    for lineno, line in enumerate(cfg_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{cfg_path} line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if flag == "--rerank":  # boolean switch
            if value.lower() in ("1", "true", "yes"):
                injected.append(flag)
        else:
            injected.extend([flag, value])
    for pos, tok in enumerate(cleaned):
        if tok in _COMMANDS:
            return cleaned[: pos + 1] + injected + cleaned[pos + 1 :]
    raise ConfigError("--config requires a subcommand")


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        rows=args.rows,
        cols=args.cols,
        tile_px=args.tile_px,
        anchor=GeoPoint(args.anchor_lat, args.anchor_lon),
        meters_per_raw_tile=args.meters_per_tile,
        query_count=args.query_count,
        perturbation=Perturbation(
            max_rotation_deg=args.max_rotation,
            scale_min=args.scale_min,
            scale_max=args.scale_max,
            noise_sigma=args.noise_sigma,
        ),
    )
    map_meta = generate_map(cfg, args.out / "map")
    raw = ingest_raw_map(map_meta)
    queries_csv = generate_queries(raw, cfg, args.out / "queries")
    print(f"map={map_meta} queries={queries_csv}")
    return 0


def cmd_build_map(args) -> int:
    raw = ingest_raw_map(args.raw)
    ts = build_tiles(raw, args.zoom, args.overlap, args.resolution)
    write_tileset(ts, args.out)
    print(f"tiles={len(ts)} zoom={args.zoom:g} overlap={args.overlap:g}")
    return 0


def _extract_inputs(args) -> list[tuple[int, Path]]:
    """(id, image path) pairs for either a tileset or a query CSV."""
    if args.tileset is not None:
        ts = load_tileset(args.tileset)
        root = args.tileset.parent
        return [(t.tile_id, root / t.image_ref) for t in ts.tiles]
    qs = load_queries(args.queries)
    root = args.queries.parent
    return [(e.query_id, root / e.image_ref) for e in qs.entries]


def cmd_extract(args) -> int:
    if args.source == "import":
        if args.import_path is None:
            raise ConfigError("--source import requires --import-path")
        if args.tileset is None:
            raise ConfigError("import mode validates against a --tileset")
        ts = load_tileset(args.tileset)
        if args.kind == "global":
            db = import_tileset_global(ts, args.import_path, args.out)
            print(f"imported count={db.count} dim={db.dim}")
        else:
            feats = import_tileset_local(ts, args.import_path, args.out)
            print(f"imported files={len(feats)}")
        return 0

    inputs = _extract_inputs(args)
    if args.kind == "global":
        descs = [global_descriptor_grid(load_image(p)) for _, p in inputs]
        db = build_database(descs)
        save_database(db, args.out)
        print(f"wrote {args.out} count={db.count} dim={db.dim}")
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        for ident, p in inputs:
            fs = extract_local(load_image(p), args.max_corners)
            save_features(fs, args.out / f"{ident:05d}.avlf")
        print(f"wrote {len(inputs)} feature files to {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    db = load_database(args.database)
    qdb = load_database(args.query_database)
    qs = load_queries(args.queries)
    if qdb.count != len(qs):
        raise ConfigError(
            f"query database has {qdb.count} rows for {len(qs)} queries"
        )
    res = {}
    dists = {}
    for row, entry in enumerate(qs.entries):
        ranked = search(db, qdb.matrix[row].astype(float), args.n)
        res[entry.query_id] = [tid for tid, _ in ranked]
        dists[entry.query_id] = [d for _, d in ranked]
    write_retrieval_csv(args.out, res, dists)
    print(f"wrote {args.out} queries={len(qs)} n={args.n}")
    return 0


def _read_ranking(path: Path) -> dict[int, list[int]]:
    ranking: dict[int, list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["query_id", "rank", "tile_id"]:
            raise ConfigError(f"{path}: not a ranking CSV")
        for row in reader:
            ranking.setdefault(int(row[0]), []).append(int(row[2]))
    return ranking


def cmd_rerank(args) -> int:
    ranking = _read_ranking(args.retrieval)
    params = RansacParams(
        threshold_px=args.ransac_threshold, max_iters=args.ransac_iters,
        seed=args.seed,
    )
    out: dict[int, list[int]] = {}
    scores: dict[int, list[int]] = {}
    for qid in sorted(ranking):
        qfeats = load_features(args.query_feats / f"{qid:05d}.avlf")
        order = ranking[qid]
        cands = [
            (tid, load_features(args.tile_feats / f"{tid:05d}.avlf")) for tid in order
        ]
        res = rerank(qfeats, cands, order, min(args.k, len(order)), params, args.ratio)
        out[qid] = [tid for tid, _ in res]
        scores[qid] = [s for _, s in res]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "rank", "tile_id", "score"])
        for qid in sorted(out):
            for rank, (tid, s) in enumerate(zip(out[qid], scores[qid])):
                w.writerow([qid, rank, tid, s])
    print(f"wrote {args.out} k={args.k}")
    return 0


def cmd_align(args) -> int:
    ranking = _read_ranking(args.ranking)
    ts = load_tileset(args.tileset)
    qs = load_queries(args.queries)
    params = AlignmentParams(
        ratio=args.ratio,
        ransac=RansacParams(
            threshold_px=args.ransac_threshold,
            max_iters=args.ransac_iters,
            seed=args.seed,
        ),
    )
    al: dict[int, GeoPoint | None] = {}
    qroot = args.queries.parent
    for entry in qs.entries:
        if entry.query_id not in ranking or not ranking[entry.query_id]:
            raise ConfigError(f"no ranking for query {entry.query_id}")
        top = ranking[entry.query_id][0]
        qfeats = load_features(args.query_feats / f"{entry.query_id:05d}.avlf")
        tfeats = load_features(args.tile_feats / f"{top:05d}.avlf")
        w, h = image_size(qroot / entry.image_ref)
        try:
            al[entry.query_id] = localize(
                qfeats, (w, h), tfeats, ts.tiles[top], ts.out_resolution, params
            )
        except AlignmentError:
            al[entry.query_id] = None
    write_predictions_csv(args.out, al)
    ok = sum(1 for v in al.values() if v is not None)
    print(f"wrote {args.out} aligned={ok}/{len(al)}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = EvalConfig(
        raw_meta=args.raw,
        queries_csv=args.queries,
        out_dir=args.out,
        zoom_list=tuple(args.zoom),
        overlap_list=tuple(args.overlap),
        out_resolution=args.resolution,
        source=args.source,
        import_path=args.import_path,
        n=args.n,
        k=args.k,
        use_rerank=args.rerank,
        ratio=args.ratio,
        ransac=RansacParams(
            threshold_px=args.ransac_threshold, max_iters=args.ransac_iters,
            seed=args.seed,
        ),
        mu_list=tuple(args.mu),
        n_report=tuple(args.n_report),
        max_corners=args.max_corners,
        seed=args.seed,
    )
    results = evaluate(cfg)
    for res in results:
        print(f"{res.tag}: tiles={len(res.tiles)} -> {cfg.out_dir / res.tag}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "build-map": cmd_build_map,
    "extract": cmd_extract,
    "retrieve": cmd_retrieve,
    "rerank": cmd_rerank,
    "align": cmd_align,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AerovprError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

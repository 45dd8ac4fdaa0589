"""Offline/online pipeline plumbing shared by the CLI subcommands.

The offline phase turns a raw map into per-configuration artifacts: a
tileset directory, one AVLD global-descriptor database, and one AVLF
local-feature file per tile. The online phase runs per query: global
descriptor, exact database search, local features, optional re-ranking,
and local alignment, with wall-clock timing collected per stage.

All artifacts are plain files with documented schemas so that externally
computed descriptors can replace the builtin extractors.
"""

from __future__ import annotations

import csv
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alignment import AlignmentParams, RansacParams, localize
from .descstore import (
    DescriptorDatabase,
    build_database,
    load_database,
    save_database,
    search,
)
from .errors import AerovprError, AlignmentError, ConfigError, MetadataError
from .extractors import extract_local, global_descriptor_grid
from .features import LocalFeatureSet, load_features, rerank, save_features
from .geo import GeoPoint
from .imgio import load_image
from .metrics import QuerySet, load_queries, recall_report
from .tilemap import RawMap, TileSet, build_tiles, ingest_raw_map, write_tileset

TIMING_STAGES = [
    "descriptor_calculation",
    "database_search",
    "local_feature_calculation",
    "reranking",
    "local_alignment",
]


@dataclass(frozen=True)
class EvalConfig:
    """One grid evaluation run over (zoom, overlap) combinations."""

    raw_meta: Path
    queries_csv: Path
    out_dir: Path
    zoom_list: tuple[float, ...] = (100.0,)
    overlap_list: tuple[float, ...] = (0.0,)
    out_resolution: int | None = None
    source: str = "builtin"  # builtin | import
    import_path: Path | None = None
    n: int = 100
    k: int = 10
    use_rerank: bool = False
    ratio: float = 0.8
    ransac: RansacParams = field(default_factory=RansacParams)
    mu_list: tuple[float, ...] = (10.0, 50.0, 100.0)
    n_report: tuple[int, ...] = (1, 5, 10)
    max_corners: int = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.zoom_list or not self.overlap_list:
            raise ConfigError("zoom and overlap lists must be nonempty")
        if self.n < 1 or self.k < 1 or self.k > self.n:
            raise ConfigError("need n >= k >= 1")
        if max(self.n_report) > self.n:
            raise ConfigError("reported N values cannot exceed the search depth n")
        if self.source not in ("builtin", "import"):
            raise ConfigError(f"unknown extractor source {self.source!r}")
        if self.source == "import" and self.import_path is None:
            raise ConfigError("import source requires an import path")


def combo_tag(zoom: float, overlap: float) -> str:
    return f"z{zoom:g}_o{overlap:g}"


def extract_tileset_global(ts: TileSet, tileset_dir: Path) -> DescriptorDatabase:
    descs = []
    for rec in ts.tiles:
        img = (
            ts.images[rec.tile_id]
            if ts.images is not None
            else load_image(tileset_dir / rec.image_ref)
        )
        descs.append(global_descriptor_grid(img))
    return build_database(descs)


def extract_tileset_local(
    ts: TileSet, tileset_dir: Path, out_dir: Path, max_corners: int
) -> list[LocalFeatureSet]:
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = []
    for rec in ts.tiles:
        img = (
            ts.images[rec.tile_id]
            if ts.images is not None
            else load_image(tileset_dir / rec.image_ref)
        )
        fs = extract_local(img, max_corners)
        save_features(fs, out_dir / f"{rec.tile_id:05d}.avlf")
        feats.append(fs)
    return feats


def import_tileset_global(ts: TileSet, import_path: Path, out_file: Path) -> DescriptorDatabase:
    """Validate an externally produced AVLD against the tileset and install it."""
    src = import_path
    if src.is_dir():
        cands = sorted(src.glob("*.avld"))
        if len(cands) != 1:
            raise MetadataError(
                f"import dir {src} must hold exactly one .avld, found {len(cands)}"
            )
        src = cands[0]
    db = load_database(src)
    if db.count != len(ts):
        raise MetadataError(
            f"import {src}: {db.count} descriptor rows for {len(ts)} tiles"
        )
    shutil.copyfile(src, out_file)
    return db


def import_tileset_local(ts: TileSet, import_dir: Path, out_dir: Path) -> list[LocalFeatureSet]:
    """Validate one .avlf per tile_id and install them."""
    files = sorted(import_dir.glob("*.avlf"))
    if len(files) != len(ts):
        raise MetadataError(
            f"import dir {import_dir}: expected {len(ts)} .avlf files, "
            f"found {len(files)}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = []
    dim = None
    for rec in ts.tiles:
        src = import_dir / f"{rec.tile_id:05d}.avlf"
        if not src.is_file():
            raise MetadataError(f"import dir {import_dir}: missing {src.name}")
        fs = load_features(src)
        if dim is None:
            dim = fs.descriptors.shape[1]
        elif fs.descriptors.shape[1] != dim:
            raise MetadataError(
                f"{src.name}: descriptor dim {fs.descriptors.shape[1]} != {dim}"
            )
        shutil.copyfile(src, out_dir / src.name)
        feats.append(fs)
    return feats


def dir_bytes(path: Path) -> int:
    return sum(p.stat().st_size for p in path.rglob("*") if p.is_file())


@dataclass
class ComboResult:
    tag: str
    tiles: TileSet
    retrieval: dict[int, list[int]]
    ranking: dict[int, list[int]]
    alignment: dict[int, GeoPoint | None]
    timing_means: dict[str, float]
    storage_rows: list[tuple[str, str, int]]


def run_combo(
    cfg: EvalConfig, raw: RawMap, qs: QuerySet, zoom: float, overlap: float
) -> ComboResult:
    """Offline build plus the timed online phase for one configuration."""
    tag = combo_tag(zoom, overlap)
    combo_dir = cfg.out_dir / tag
    tiles_dir = combo_dir / "tiles"
    feats_dir = combo_dir / "tile_feats"
    combo_dir.mkdir(parents=True, exist_ok=True)

    ts = build_tiles(raw, zoom, overlap, cfg.out_resolution)
    write_tileset(ts, tiles_dir)
    avld_path = combo_dir / "tiles.avld"
    if cfg.source == "builtin":
        db = extract_tileset_global(ts, tiles_dir)
        save_database(db, avld_path)
        tile_feats = extract_tileset_local(ts, tiles_dir, feats_dir, cfg.max_corners)
    else:
        import_root = Path(cfg.import_path) / tag
        db = import_tileset_global(ts, import_root / "tiles.avld", avld_path)
        tile_feats = import_tileset_local(ts, import_root / "tile_feats", feats_dir)

    query_dir = cfg.queries_csv.parent
    n_eff = min(cfg.n, len(ts))
    retrieval: dict[int, list[int]] = {}
    ranking: dict[int, list[int]] = {}
    alignment: dict[int, GeoPoint | None] = {}
    stage_totals = dict.fromkeys(TIMING_STAGES, 0.0)

    for entry in qs.entries:
        img = load_image(query_dir / entry.image_ref)

        t0 = time.perf_counter()
        qdesc = global_descriptor_grid(img)
        t1 = time.perf_counter()
        ranked = search(db, qdesc, n_eff)
        t2 = time.perf_counter()
        qfeats = extract_local(img, cfg.max_corners)
        t3 = time.perf_counter()
        order = [tid for tid, _ in ranked]
        if cfg.use_rerank:
            params = RansacParams(
                threshold_px=cfg.ransac.threshold_px,
                max_iters=cfg.ransac.max_iters,
                seed=_query_seed(cfg.ransac.seed, entry.query_id),
            )
            reranked = rerank(
                qfeats,
                [(tid, tile_feats[tid]) for tid in order],
                order,
                k=len(order),
                ransac_params=params,
                ratio=cfg.ratio,
            )
            final_order = [tid for tid, _ in reranked]
        else:
            final_order = order
        t4 = time.perf_counter()
        top = final_order[0]
        try:
            predicted = localize(
                qfeats,
                (img.shape[1], img.shape[0]),
                tile_feats[top],
                ts.tiles[top],
                ts.out_resolution,
                AlignmentParams(
                    ratio=cfg.ratio,
                    ransac=RansacParams(
                        threshold_px=cfg.ransac.threshold_px,
                        max_iters=cfg.ransac.max_iters,
                        seed=_query_seed(cfg.ransac.seed ^ 0xA11C, entry.query_id),
                    ),
                ),
            )
        except AlignmentError:
            predicted = None
        t5 = time.perf_counter()

        retrieval[entry.query_id] = order
        ranking[entry.query_id] = final_order
        alignment[entry.query_id] = predicted
        stage_totals["descriptor_calculation"] += t1 - t0
        stage_totals["database_search"] += t2 - t1
        stage_totals["local_feature_calculation"] += t3 - t2
        stage_totals["reranking"] += t4 - t3
        stage_totals["local_alignment"] += t5 - t4

    nq = len(qs)
    timing_means = {k: v / nq for k, v in stage_totals.items()}
    # Paths are combo-relative so identical runs in different directories
    # still produce byte-identical storage reports.
    storage_rows = [
        ("global_descriptors", avld_path.name, avld_path.stat().st_size),
        ("local_features", feats_dir.name, dir_bytes(feats_dir)),
        ("tile_images", tiles_dir.name, dir_bytes(tiles_dir)),
    ]
    return ComboResult(
        tag=tag,
        tiles=ts,
        retrieval=retrieval,
        ranking=ranking,
        alignment=alignment,
        timing_means=timing_means,
        storage_rows=storage_rows,
    )


def _query_seed(base: int, query_id: int) -> int:
    return int(np.random.SeedSequence([base, query_id]).generate_state(1)[0])


def write_retrieval_csv(path: Path, res: dict[int, list[int]], dists=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if dists is None:
            w.writerow(["query_id", "rank", "tile_id"])
            for qid in sorted(res):
                for rank, tid in enumerate(res[qid]):
                    w.writerow([qid, rank, tid])
        else:
            w.writerow(["query_id", "rank", "tile_id", "distance"])
            for qid in sorted(res):
                for rank, tid in enumerate(res[qid]):
                    w.writerow([qid, rank, tid, f"{dists[qid][rank]:.9e}"])


def write_predictions_csv(path: Path, al: dict[int, GeoPoint | None]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "status", "lat", "lon"])
        for qid in sorted(al):
            p = al[qid]
            if p is None:
                w.writerow([qid, "failed", "", ""])
            else:
                w.writerow([qid, "ok", f"{p.lat:.10f}", f"{p.lon:.10f}"])


def write_timing_csv(path: Path, means: dict[str, float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMING_STAGES)
        w.writerow([f"{means[s]:.2f}" for s in TIMING_STAGES])


def write_storage_csv(path: Path, rows: list[tuple[str, str, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["artifact", "path", "bytes"])
        w.writerows(rows)


def evaluate(cfg: EvalConfig) -> list[ComboResult]:
    """Run the full grid; writes per-combination artifacts and reports."""
    raw = ingest_raw_map(cfg.raw_meta)
    qs = load_queries(cfg.queries_csv)
    results = []
    for zoom in cfg.zoom_list:
        for overlap in cfg.overlap_list:
            res = run_combo(cfg, raw, qs, zoom, overlap)
            combo_dir = cfg.out_dir / res.tag
            write_retrieval_csv(combo_dir / "retrieval.csv", res.retrieval)
            if cfg.use_rerank:
                write_retrieval_csv(combo_dir / "rerank.csv", res.ranking)
            write_predictions_csv(combo_dir / "predictions.csv", res.alignment)
            table = recall_report(
                qs,
                res.ranking,
                res.tiles,
                res.alignment,
                list(cfg.n_report),
                list(cfg.mu_list),
            )
            (combo_dir / "recall_report.csv").write_text(table.to_csv())
            (combo_dir / "recall_report.txt").write_text(table.to_text())
            write_timing_csv(combo_dir / "timing.csv", res.timing_means)
            write_storage_csv(combo_dir / "storage.csv", res.storage_rows)
            results.append(res)
    return results

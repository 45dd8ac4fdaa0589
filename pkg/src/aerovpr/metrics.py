"""Tile-database recall metrics.

Two adaptations of classic Recall@k for tile databases: retrieval recall
counts a query as correct when its ground-truth center falls inside at
least one of the top-N retrieved tiles, and georeference recall counts a
query as correct when the end-to-end alignment lands strictly within mu
meters of ground truth. Alignment failures stay in the denominator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import GeoDomainError, MetadataError
from .geo import GeoPoint, geodesic_distance, point_in_tile
from .tilemap import TileSet


@dataclass(frozen=True)
class QueryRecord:
    query_id: int
    image_ref: str
    gt: GeoPoint


@dataclass(frozen=True)
class QuerySet:
    entries: tuple[QueryRecord, ...]

    def __post_init__(self) -> None:
        ids = [e.query_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise MetadataError("duplicate query_ids")

    def __len__(self) -> int:
        return len(self.entries)


def load_queries(csv_path: str | Path) -> QuerySet:
    """Parse the query CSV (query_id,path,gt_lat,gt_lon with a header)."""
    path = Path(csv_path)
    if not path.is_file():
        raise MetadataError(f"query file not found: {path}")
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["query_id", "path", "gt_lat", "gt_lon"]:
            raise MetadataError(f"{path} line 1: bad header {header}")
        for lineno, row in enumerate(reader, 2):
            try:
                entries.append(
                    QueryRecord(int(row[0]), row[1], GeoPoint(float(row[2]), float(row[3])))
                )
            except (ValueError, IndexError, GeoDomainError) as exc:
                raise MetadataError(f"{path} line {lineno}: {exc}") from exc
    if not entries:
        raise MetadataError(f"{path}: no query rows")
    return QuerySet(entries=tuple(entries))


# RetrievalResult: {query_id: ranked tile_id list}; AlignmentResult:
# {query_id: GeoPoint or None for a failed alignment}.

def vpr_recall(
    qs: QuerySet, res: dict[int, list[int]], tiles: TileSet, n: int
) -> float:
    """Percent of queries whose ground truth lies in one of the top-n tiles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    need = min(n, len(tiles))
    hits = 0
    for entry in qs.entries:
        ranked = res.get(entry.query_id)
        if ranked is None:
            raise ValueError(f"no retrieval result for query {entry.query_id}")
        if len(ranked) < need:
            raise ValueError(
                f"query {entry.query_id}: {len(ranked)} results < required {need}"
            )
        top = ranked[:n]
        if len(set(top)) != len(top):
            raise ValueError(f"query {entry.query_id}: duplicate tile_ids")
        for tile_id in top:
            if not 0 <= tile_id < len(tiles):
                raise ValueError(f"unknown tile_id {tile_id}")
            if point_in_tile(tiles.tiles[tile_id], entry.gt):
                hits += 1
                break
    return 100.0 * hits / len(qs)


def georeference_recall(
    qs: QuerySet, al: dict[int, GeoPoint | None], mu: float
) -> float:
    """Percent of queries aligned strictly within mu meters of ground truth.

    Failed alignments count in the denominator only; dist == mu is a miss.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    hits = 0
    for entry in qs.entries:
        if entry.query_id not in al:
            raise ValueError(f"no alignment result for query {entry.query_id}")
        pred = al[entry.query_id]
        if pred is not None and geodesic_distance(entry.gt, pred) < mu:
            hits += 1
    return 100.0 * hits / len(qs)


@dataclass(frozen=True)
class ReportTable:
    """(metric, parameter, percent) rows; serializes to CSV and plain text."""

    rows: tuple[tuple[str, float, float], ...]

    def value(self, metric: str, param: float) -> float:
        for m, p, v in self.rows:
            if m == metric and p == param:
                return v
        raise KeyError(f"no row ({metric}, {param})")

    def to_csv(self) -> str:
        lines = ["metric,param,value"]
        lines += [f"{m},{p:g},{v:.1f}" for m, p, v in self.rows]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(len(m) for m, _, _ in self.rows)
        lines = [f"{'metric':<{width}}  param  value"]
        lines += [f"{m:<{width}}  {p:>5g}  {v:5.1f}" for m, p, v in self.rows]
        return "\n".join(lines) + "\n"


def recall_report(
    qs: QuerySet,
    res: dict[int, list[int]],
    tiles: TileSet,
    al: dict[int, GeoPoint | None],
    n_list: list[int],
    mu_list: list[float],
) -> ReportTable:
    """One row per metric/parameter combination."""
    if not n_list or not mu_list:
        raise ValueError("n_list and mu_list must be nonempty")
    if sorted(n_list) != list(n_list) or sorted(mu_list) != list(mu_list):
        raise ValueError("n_list and mu_list must be ascending")
    rows = [("vpr_recall", float(n), vpr_recall(qs, res, tiles, n)) for n in n_list]
    rows += [
        ("georeference_recall", float(mu), georeference_recall(qs, al, mu))
        for mu in mu_list
    ]
    return ReportTable(rows=tuple(rows))

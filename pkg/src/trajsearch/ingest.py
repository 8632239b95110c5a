"""Trajectory parsing, length filtering and spatial gridding.

Raw GPS trajectories (lon/lat degrees, optional timestamps) are parsed from
one of three on-disk formats, short trajectories are dropped, and the
survivors are snapped to a square grid in a local meters frame. Downstream
distance computation operates on the gridded cell centroids, so all pairwise
distances are in meters.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

FORMATS = ("canonical_jsonl", "porto_csv", "geolife_plt")

# Meters per degree under the equirectangular approximation: east/west scale
# shrinks with cos(latitude), north/south is treated as constant.
M_PER_DEG_LON = 111320.0
M_PER_DEG_LAT = 110540.0


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of 2-D points with a stable identifier.

    points is an (l, 2) float64 array. For geographic inputs the columns are
    (lon, lat) in degrees; after gridding the canonical store holds local
    meters (east, north) instead. times, when present, is an (l,) float64
    array of seconds and must be non-decreasing.
    """

    id: str
    points: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise InputError(f"trajectory {self.id!r}: points must be a non-empty (l, 2) array")
        object.__setattr__(self, "points", pts)
        if self.times is not None:
            t = np.asarray(self.times, dtype=np.float64)
            if t.shape != (pts.shape[0],):
                raise InputError(f"trajectory {self.id!r}: times length mismatch")
            if np.any(np.diff(t) < 0):
                raise InputError(f"trajectory {self.id!r}: timestamps decrease")
            object.__setattr__(self, "times", t)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class GridSpec:
    """Square grid anchored at a fixed geographic origin."""

    origin_lon: float
    origin_lat: float
    cell_size_m: float = 50.0

    def __post_init__(self):
        if not self.cell_size_m > 0:
            raise InputError("cell_size_m must be positive")

    @classmethod
    def from_trajectories(cls, trajs, cell_size_m=50.0):
        """Anchor the grid at the dataset's min-lon/min-lat corner."""
        if not trajs:
            raise InputError("cannot derive a grid from zero trajectories")
        lons = min(float(t.points[:, 0].min()) for t in trajs)
        lats = min(float(t.points[:, 1].min()) for t in trajs)
        return cls(origin_lon=lons, origin_lat=lats, cell_size_m=cell_size_m)


@dataclass(frozen=True)
class GriddedTrajectory:
    """Trajectory snapped to grid cells, consecutive duplicates collapsed.

    centroids holds the cell centers in the meters frame and is what the
    distance kernels consume.
    """

    id: str
    cells: list = field(repr=False)
    centroids: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.cells)


def project_to_meters(points, spec):
    """Equirectangular projection of (lon, lat) degrees onto meters east/north
    relative to spec's origin."""
    pts = np.asarray(points, dtype=np.float64)
    coslat = math.cos(math.radians(spec.origin_lat))
    east = (pts[:, 0] - spec.origin_lon) * coslat * M_PER_DEG_LON
    north = (pts[:, 1] - spec.origin_lat) * M_PER_DEG_LAT
    return np.column_stack([east, north])


def grid_trajectories(trajs, spec):
    """Snap every trajectory to spec's grid.

    Each point maps to the integer cell containing it; runs of identical
    consecutive cells collapse to a single entry. Cell indices must come out
    non-negative, i.e. the origin must be at or below the data's bounding box.
    """
    if not trajs:
        raise InputError("grid_trajectories: empty input")
    out = []
    for traj in trajs:
        meters = project_to_meters(traj.points, spec)
        cols = np.floor(meters[:, 0] / spec.cell_size_m).astype(np.int64)
        rows = np.floor(meters[:, 1] / spec.cell_size_m).astype(np.int64)
        if cols.min() < 0 or rows.min() < 0:
            raise InputError(
                f"trajectory {traj.id!r}: point below grid origin "
                f"(cell {int(cols.min())},{int(rows.min())}); anchor the grid at the dataset min corner"
            )
        keep = np.ones(len(cols), dtype=bool)
        keep[1:] = (cols[1:] != cols[:-1]) | (rows[1:] != rows[:-1])
        cols, rows = cols[keep], rows[keep]
        centroids = np.column_stack([
            (cols + 0.5) * spec.cell_size_m,
            (rows + 0.5) * spec.cell_size_m,
        ])
        out.append(GriddedTrajectory(
            id=traj.id,
            cells=list(zip(cols.tolist(), rows.tolist())),
            centroids=centroids,
        ))
    return out


def filter_by_length(trajs, min_points):
    """Keep trajectories with at least min_points points, order preserved."""
    if min_points < 1:
        raise InputError("min_points must be >= 1")
    return [t for t in trajs if len(t) >= min_points]


def _valid_lonlat(lon, lat):
    return -180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0


def _parse_canonical_jsonl(path):
    trajs, skipped = [], 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tid = str(obj["id"])
                raw_pts = obj["points"]
                if not raw_pts:
                    raise ValueError("empty points")
                pts = np.array([[p[0], p[1]] for p in raw_pts], dtype=np.float64)
                times = None
                if all(len(p) >= 3 for p in raw_pts):
                    times = np.array([p[2] for p in raw_pts], dtype=np.float64)
                if not np.all(np.isfinite(pts)):
                    raise ValueError("non-finite coordinates")
                trajs.append(Trajectory(id=tid, points=pts, times=times))
            except (ValueError, KeyError, TypeError, IndexError, InputError):
                skipped += 1
                log.debug("canonical_jsonl: skipping malformed line %d", lineno)
    return trajs, skipped


def _parse_porto_csv(path):
    trajs, skipped = [], 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if not header:
            raise InputError(f"{path}: missing header row")
        for row in reader:
            try:
                tid = row[0]
                polyline = json.loads(row[-1])
                if not polyline:
                    raise ValueError("empty polyline")
                pts = np.array(polyline, dtype=np.float64)
                if pts.ndim != 2 or pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
                    raise ValueError("bad polyline shape")
                if not all(_valid_lonlat(lon, lat) for lon, lat in pts):
                    raise ValueError("coordinates out of range")
                trajs.append(Trajectory(id=tid, points=pts))
            except (ValueError, KeyError, TypeError, IndexError):
                skipped += 1
    return trajs, skipped


def _parse_geolife_plt(path):
    """Parse one PLT file or a directory tree of them (ID = file stem)."""
    path = Path(path)
    files = sorted(path.rglob("*.plt")) if path.is_dir() else [path]
    if not files:
        raise InputError(f"{path}: no .plt files found")
    trajs, skipped = [], 0
    seen_ids = set()
    for f in files:
        pts, times = [], []
        with open(f, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                if lineno < 6:  # fixed-size preamble
                    continue
                fields = line.strip().split(",")
                try:
                    lat, lon = float(fields[0]), float(fields[1])
                    days = float(fields[4])
                    if not _valid_lonlat(lon, lat):
                        raise ValueError("out of range")
                    pts.append((lon, lat))
                    times.append(days * 86400.0)
                except (ValueError, IndexError):
                    skipped += 1
        if not pts:
            skipped += 1
            continue
        tid = f.stem
        if tid in seen_ids:
            raise InputError(f"duplicate trajectory id {tid!r} from {f}")
        seen_ids.add(tid)
        t = np.asarray(times)
        trajs.append(Trajectory(id=tid, points=np.asarray(pts), times=t if np.all(np.diff(t) >= 0) else None))
    return trajs, skipped


_PARSERS = {
    "canonical_jsonl": _parse_canonical_jsonl,
    "porto_csv": _parse_porto_csv,
    "geolife_plt": _parse_geolife_plt,
}


def parse_dataset(path, format):
    """Parse a trajectory file into Trajectory records.

    Malformed rows are skipped and counted in a single warning; a file that
    yields zero trajectories is an error.
    """
    if format not in _PARSERS:
        raise InputError(f"unknown format {format!r}, expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such input: {path}")
    trajs, skipped = _PARSERS[format](path)
    if skipped:
        log.warning("parse_dataset: skipped %d malformed rows in %s", skipped, path)
    if not trajs:
        raise InputError(f"{path}: zero parseable trajectories")
    return trajs


def write_canonical_jsonl(trajs, path):
    """Serialize trajectories as canonical JSONL: {"id", "points": [[x, y, t?]]}.

    Floats go through repr, so a write/read cycle is exact for float64.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajs:
            if t.times is not None:
                pts = [[x, y, tt] for (x, y), tt in zip(t.points.tolist(), t.times.tolist())]
            else:
                pts = t.points.tolist()
            fh.write(json.dumps({"id": t.id, "points": pts}) + "\n")


def gridded_to_trajectories(gridded):
    """View gridded centroid sequences as Trajectory records (meters frame)."""
    return [Trajectory(id=g.id, points=g.centroids) for g in gridded]

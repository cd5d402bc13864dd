"""Map data model: lanes with successor topology, proximity queries,
branch-free path roll-out, and discretization of paths into fixed-length
full-width cells.

Map file format (JSON):
    {"lanes": [{"id": str, "width": float,
                "centerline": [[x, y], ...],
                "successors": [str, ...]}, ...]}
Predecessors are derived on load; the loader validates every invariant and
reports the first violation together with the offending lane id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MapError
from .geometry import FrenetPose, Polygon, Polyline, strip_polygon

SUCCESSOR_JOINT_TOL = 0.1  # m, max gap between a lane end and a successor start


class Lane:
    """One directed lane: centerline polyline, constant width, topology."""

    __slots__ = ("id", "centerline", "width", "successors", "predecessors", "_polygon")

    def __init__(self, lane_id: str, centerline: Polyline, width: float,
                 successors=(), predecessors=()):
        if width <= 0:
            raise MapError(f"lane {lane_id}: width must be positive")
        self.id = str(lane_id)
        self.centerline = centerline
        self.width = float(width)
        self.successors = list(successors)
        self.predecessors = list(predecessors)
        self._polygon = None

    @property
    def polygon(self) -> Polygon:
        """Centerline buffered laterally by width/2 (flat caps)."""
        if self._polygon is None:
            self._polygon = strip_polygon(self.centerline, self.width / 2.0)
        return self._polygon

    @property
    def length(self) -> float:
        return self.centerline.length


class LaneGraph:
    """Immutable-after-load collection of lanes keyed by id."""

    def __init__(self, lanes):
        self.lanes = {lane.id: lane for lane in lanes}
        if len(self.lanes) != len(list(lanes)):
            raise MapError("duplicate lane ids")
        self.validate()

    def __len__(self):
        return len(self.lanes)

    def __contains__(self, lane_id):
        return lane_id in self.lanes

    def lane(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def validate(self):
        for lane in self.lanes.values():
            for succ in lane.successors:
                if succ not in self.lanes:
                    raise MapError(f"lane {lane.id}: unknown successor {succ!r}")
                gap = np.hypot(*(self.lanes[succ].centerline.points[0]
                                 - lane.centerline.points[-1]))
                if gap > SUCCESSOR_JOINT_TOL:
                    raise MapError(
                        f"lane {lane.id}: successor {succ} starts {gap:.3f} m "
                        f"from the lane end (max {SUCCESSOR_JOINT_TOL})")
            for pred in lane.predecessors:
                if pred not in self.lanes:
                    raise MapError(f"lane {lane.id}: unknown predecessor {pred!r}")
        # pred/succ symmetry
        for lane in self.lanes.values():
            for succ in lane.successors:
                if lane.id not in self.lanes[succ].predecessors:
                    raise MapError(
                        f"lane {lane.id}: successor {succ} does not list it back")
            for pred in lane.predecessors:
                if lane.id not in self.lanes[pred].successors:
                    raise MapError(
                        f"lane {lane.id}: predecessor {pred} does not list it back")

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "LaneGraph":
        if "lanes" not in doc:
            raise MapError("map document has no 'lanes' key")
        lanes = []
        seen = set()
        for entry in doc["lanes"]:
            try:
                lane_id = str(entry["id"])
            except (KeyError, TypeError):
                raise MapError("lane entry without id") from None
            if lane_id in seen:
                raise MapError(f"lane {lane_id}: duplicate id")
            seen.add(lane_id)
            try:
                centerline = Polyline(entry["centerline"])
            except (KeyError, GeometryError) as exc:
                raise MapError(f"lane {lane_id}: bad centerline ({exc})") from None
            lanes.append(Lane(lane_id, centerline, float(entry.get("width", 0.0)),
                              successors=[str(s) for s in entry.get("successors", [])]))
        by_id = {lane.id: lane for lane in lanes}
        for lane in lanes:
            for succ in lane.successors:
                if succ in by_id:
                    by_id[succ].predecessors.append(lane.id)
        return cls(lanes)

    def to_dict(self) -> dict:
        return {
            "lanes": [
                {
                    "id": lane.id,
                    "width": lane.width,
                    "centerline": [[float(x), float(y)] for x, y in lane.centerline.points],
                    "successors": list(lane.successors),
                }
                for lane in self.lanes.values()
            ]
        }

    @classmethod
    def load(cls, path) -> "LaneGraph":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MapError(f"map file {path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def lanes_near(graph: LaneGraph, p, radius: float):
    """Ids of all lanes whose buffered polygon comes within `radius` of p."""
    if radius <= 0:
        raise MapError("radius must be positive")
    p = np.asarray(p, dtype=float)
    out = set()
    for lane in graph.lanes.values():
        # cheap reject on the centerline before the exact polygon distance
        lo = lane.centerline.points.min(axis=0) - (radius + lane.width)
        hi = lane.centerline.points.max(axis=0) + (radius + lane.width)
        if np.any(p < lo) or np.any(p > hi):
            continue
        if lane.polygon.distance(p) <= radius:
            out.add(lane.id)
    return out


@dataclass(frozen=True)
class Path:
    """A branch-free sequence of connected lanes rolled out from an actor
    position. `centerline` starts at the projection of the actor onto the
    seed lane (s = 0 there) and is trimmed at `max_length`; `lane_spans`
    records which lane owns each arc interval [s0, s1) with its width."""

    lane_sequence: tuple
    start: FrenetPose
    centerline: Polyline
    max_length: float
    lane_spans: tuple  # ((lane_id, s0, s1, width), ...)

    def width_at(self, s: float) -> float:
        for lane_id, s0, s1, width in self.lane_spans:
            if s < s1:
                return width
        return self.lane_spans[-1][3]

    def lane_at(self, s: float) -> str:
        for lane_id, s0, s1, width in self.lane_spans:
            if s < s1:
                return lane_id
        return self.lane_spans[-1][0]

    @property
    def length(self) -> float:
        return self.centerline.length


def roll_out_paths(graph: LaneGraph, psi_t, radius: float = 2.0,
                   max_length: float = 192.0):
    """Enumerate every branch-free successor sequence reachable from the
    lanes near the actor position `psi_t`.

    Each seed lane contributes one path per leaf of its (truncated)
    successor tree; branching lanes split into one path per branch. Lanes
    may not repeat within a path, which truncates loops at the first
    revisit. Roll-out stops after the lane that crosses `max_length`; the
    concatenated centerline is then trimmed to exactly `max_length`.

    Returns a list of Path objects (empty when no lane is within reach).
    """
    if max_length <= 0:
        raise MapError("max_length must be positive")
    psi_t = np.asarray(psi_t, dtype=float)
    paths = []
    for seed_id in sorted(lanes_near(graph, psi_t, radius)):
        seed = graph.lane(seed_id)
        start = seed.centerline.project(psi_t)
        s0 = min(start.s, seed.length - 1e-3)
        remaining = seed.length - s0

        # depth-first enumeration of branch-free sequences
        stack = [([seed_id], remaining)]
        while stack:
            seq, covered = stack.pop()
            succs = [s for s in graph.lane(seq[-1]).successors if s not in seq]
            if covered >= max_length or not succs:
                paths.append(_build_path(graph, seq, psi_t, s0, start.d, max_length))
                continue
            for succ in sorted(succs, reverse=True):
                stack.append((seq + [succ], covered + graph.lane(succ).length))
    return paths


def _build_path(graph: LaneGraph, seq, psi_t, s0: float, d0: float,
                max_length: float) -> Path:
    spans = []
    line = None
    cursor = 0.0
    for k, lane_id in enumerate(seq):
        lane = graph.lane(lane_id)
        piece = lane.centerline.slice(s0, lane.length) if k == 0 else lane.centerline
        line = piece if line is None else line.concat(piece, tol=SUCCESSOR_JOINT_TOL)
        end = min(cursor + piece.length, max_length)
        spans.append((lane_id, cursor, end, lane.width))
        cursor += piece.length
        if cursor >= max_length:
            break
    if line.length > max_length:
        line = line.slice(0.0, max_length)
    return Path(
        lane_sequence=tuple(lane_id for lane_id, *_ in spans),
        start=FrenetPose(s=0.0, d=d0),
        centerline=line,
        max_length=max_length,
        lane_spans=tuple(spans),
    )


@dataclass
class PathCells:
    """A path discretized into `L` contiguous full-width cells.

    `cells[k]` is the cell polygon (None once the path has ended);
    `valid_mask[k]` is True only for cells fully covered by on-map
    centerline. A cell that straddles the end of the mapped road keeps its
    truncated polygon but is marked invalid.
    """

    path: Path
    cells: list
    cell_length: float
    valid_mask: np.ndarray

    @property
    def num_cells(self) -> int:
        return len(self.cells)


CELL_STATION_STEP = 1.2  # m, lateral-boundary sampling along curved cells


def discretize_path(path: Path, cell_length: float = 4.8,
                    num_cells: int = 40) -> PathCells:
    """Lay out `num_cells` cells of `cell_length` from s=0 along the path.

    Cell k spans [k*cell_length, (k+1)*cell_length) laterally extruded to
    the owning lane's width (owner = lane at the cell start). Cells beyond
    the on-map extent get valid_mask = False.
    """
    if cell_length <= 0 or num_cells <= 0:
        raise MapError("cell_length and num_cells must be positive")
    extent = path.length
    line = path.centerline
    cells = []
    valid = np.zeros(num_cells, dtype=bool)
    for k in range(num_cells):
        lo = k * cell_length
        hi = (k + 1) * cell_length
        if lo >= extent - 1e-9:
            cells.append(None)
            continue
        hi_c = min(hi, extent)
        width = path.width_at(lo + 1e-9)
        cells.append(_cell_polygon(line, lo, hi_c, width))
        valid[k] = hi <= extent + 1e-9
    return PathCells(path=path, cells=cells, cell_length=cell_length, valid_mask=valid)


def _cell_polygon(line: Polyline, s0: float, s1: float, width: float) -> Polygon:
    n = max(int(np.ceil((s1 - s0) / CELL_STATION_STEP)), 1)
    stations = np.linspace(s0, s1, n + 1)
    centers = line.point_at(stations)
    normals = np.array([line.normal_at(s) for s in stations])
    left = centers + 0.5 * width * normals
    right = centers - 0.5 * width * normals
    return Polygon(np.vstack([right, left[::-1]]), reorient=True, check_simple=False)

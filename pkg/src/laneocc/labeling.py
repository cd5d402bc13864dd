"""Ground-truth generation: cell labels along candidate paths and 2D
occupancy grids from observed actor tracks.

Label semantics for a prediction horizon H queried at time t0:
    1  the actor's footprint touched the cell at some point in [t0, t0+H]
    0  it did not, and the track covers the full horizon (h >= H)
   -1  unknown: the cell was not touched but the track ends early (h < H),
       or the cell itself is off-map; ignored by losses and metrics
The pose at t0 itself counts toward occupancy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import (
    GridSpec,
    Polygon,
    convex_quads_overlap_polygon,
    footprint_circumradius,
    interpolate_poses,
    placed_footprints,
    polygons_overlap,
    rasterize_region,
    swept_volume,
)
from .lane_graph import PathCells

LABEL_SWEEP_STEP = 0.1  # m between footprint placements when labeling


class ActorTrack:
    """Observed actor trajectory: body-frame footprint plus a time series
    of (t, position, heading) with strictly increasing timestamps."""

    __slots__ = ("actor_id", "footprint", "t", "position", "heading", "_unwrapped")

    def __init__(self, actor_id: str, footprint: Polygon, t, position, heading):
        self.actor_id = str(actor_id)
        self.footprint = footprint
        self.t = np.asarray(t, dtype=float)
        self.position = np.asarray(position, dtype=float)
        self.heading = np.asarray(heading, dtype=float)
        if self.t.ndim != 1 or len(self.t) < 1:
            raise ValidationError(f"track {actor_id}: needs at least one pose")
        if np.any(np.diff(self.t) <= 0):
            raise ValidationError(f"track {actor_id}: timestamps must strictly increase")
        if self.position.shape != (len(self.t), 2) or self.heading.shape != (len(self.t),):
            raise ValidationError(f"track {actor_id}: pose array shapes do not match")
        self._unwrapped = np.unwrap(self.heading)

    @classmethod
    def from_poses(cls, actor_id: str, footprint: Polygon, poses) -> "ActorTrack":
        """Build from rows of (t, x, y, heading)."""
        arr = np.asarray(poses, dtype=float)
        return cls(actor_id, footprint, arr[:, 0], arr[:, 1:3], arr[:, 3])

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def covers(self, t0: float) -> bool:
        return self.t_start - 1e-9 <= t0 <= self.t_end + 1e-9

    def observed_horizon(self, t0: float) -> float:
        return self.t_end - t0

    def pose_at(self, t):
        """Interpolated (position, heading) at time(s) t."""
        t = np.clip(np.asarray(t, dtype=float), self.t_start, self.t_end)
        x = np.interp(t, self.t, self.position[:, 0])
        y = np.interp(t, self.t, self.position[:, 1])
        h = np.interp(t, self.t, self._unwrapped)
        return np.stack([x, y], axis=-1), h

    def speed_at(self, t0: float) -> float:
        """Speed of the piecewise-linear trajectory on the interval
        containing t0."""
        if len(self.t) < 2:
            return 0.0
        i = int(np.searchsorted(self.t, t0, side="right")) - 1
        i = min(max(i, 0), len(self.t) - 2)
        dt = self.t[i + 1] - self.t[i]
        return float(np.hypot(*(self.position[i + 1] - self.position[i])) / dt)

    def window_poses(self, t0: float, t1: float):
        """Pose samples covering [t0, t1]: native stamps inside the window
        plus interpolated endpoints."""
        inner = self.t[(self.t > t0 + 1e-12) & (self.t < t1 - 1e-12)]
        ts = np.concatenate([[t0], inner, [t1]]) if t1 > t0 + 1e-12 else np.array([t0])
        return self.pose_at(ts)


@dataclass
class CellLabels:
    """Per-cell ground truth in {-1, 0, 1} for one path at one horizon."""

    labels: np.ndarray
    horizon: float

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if not np.isin(self.labels, (-1, 0, 1)).all():
            raise ValidationError("cell labels must be in {-1, 0, 1}")

    @property
    def valid(self) -> np.ndarray:
        return self.labels >= 0


def label_cells(cells: PathCells, track: ActorTrack, t0: float, H: float,
                step: float = LABEL_SWEEP_STEP) -> CellLabels:
    """Label every cell of a discretized path against the observed track.

    The footprint is swept over [t0, t0 + min(h, H)] where h is the
    remaining observed duration; see the module docstring for the 1/0/-1
    semantics.
    """
    if H <= 0:
        raise ValidationError("horizon must be positive")
    if not track.covers(t0):
        raise ValidationError(f"t0={t0} outside track [{track.t_start}, {track.t_end}]")
    h = track.observed_horizon(t0)
    hor = min(h, H)
    positions, headings = track.window_poses(t0, t0 + hor)
    dense_p, dense_h = interpolate_poses(
        positions, headings, step, footprint_circumradius(track.footprint))
    fully_observed = h >= H - 1e-9

    labels = np.full(cells.num_cells, -1, dtype=np.int8)
    if track.footprint.is_convex:
        placed = placed_footprints(track.footprint, dense_p, dense_h)
        for k, cell in enumerate(cells.cells):
            if cell is None or not cells.valid_mask[k]:
                continue
            touched = bool(convex_quads_overlap_polygon(placed, cell).any())
            labels[k] = 1 if touched else (0 if fully_observed else -1)
    else:
        region = [track.footprint.transformed(p, hh) for p, hh in zip(dense_p, dense_h)]
        for k, cell in enumerate(cells.cells):
            if cell is None or not cells.valid_mask[k]:
                continue
            touched = any(polygons_overlap(placed, cell) for placed in region)
            labels[k] = 1 if touched else (0 if fully_observed else -1)
    return CellLabels(labels=labels, horizon=H)


def ground_truth_grid(track: ActorTrack, t0: float, H: float,
                      spec: GridSpec) -> np.ndarray:
    """Binary grid of the cells the actor occupied at any point over
    [t0, t0 + min(h, H)]: the rasterized swept volume of the footprint."""
    if H <= 0:
        raise ValidationError("horizon must be positive")
    if not track.covers(t0):
        raise ValidationError(f"t0={t0} outside track [{track.t_start}, {track.t_end}]")
    hor = min(track.observed_horizon(t0), H)
    positions, headings = track.window_poses(t0, t0 + hor)
    region = swept_volume(track.footprint, np.column_stack([positions, headings]),
                          step=0.5 * spec.resolution)
    return rasterize_region(region, spec)

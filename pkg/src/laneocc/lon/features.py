"""Model inputs: the actor-frame scene raster plus the two hand-crafted
feature vectors.

Actor feature order (length 7):
    [speed, angular velocity, heading variance over the past 3 s,
     longitudinal acceleration, footprint length, footprint width,
     history-valid flag]
Path feature order (length 15):
    [mean |curvature|, max |curvature|, total heading change,
     d, d_dot, s_ddot, heading offset,
     then (d, d_dot, s_ddot, heading offset) at t0-1s and at t0-2s]
Quantities needing missing history are zero with the validity flag
cleared (actor vector) or simply zero (path history slots).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..geometry import (
    GridSpec,
    Polygon,
    polygon_cover_cells,
    rotation_matrix,
    strip_polygon,
    wrap_angle,
)
from ..labeling import ActorTrack
from ..lane_graph import LaneGraph, Path, lanes_near
from .config import ACTOR_FEATURE_DIM, PATH_FEATURE_DIM, LonConfig

FEATURE_DT = 0.1     # s, finite-difference / resampling step
HISTORY_WINDOW = 3.0  # s of heading history entering the variance feature

RASTER_ACTOR_VALUE = 1.0
RASTER_SDV_VALUE = 0.8
RASTER_OTHER_VALUE = 0.5


@dataclass
class FeatureBundle:
    """One model input: scene raster plus actor and path vectors."""

    raster: np.ndarray   # (3, R, R) in [0, 1]
    actor: np.ndarray    # (ACTOR_FEATURE_DIM,)
    path: np.ndarray     # (PATH_FEATURE_DIM,)

    def __post_init__(self):
        self.raster = np.asarray(self.raster, dtype=float)
        self.actor = np.asarray(self.actor, dtype=float)
        self.path = np.asarray(self.path, dtype=float)
        if self.raster.ndim != 3 or self.raster.shape[0] != 3:
            raise ValidationError("raster must be (3, R, R)")
        if self.actor.shape != (ACTOR_FEATURE_DIM,):
            raise ValidationError(f"actor features must have length {ACTOR_FEATURE_DIM}")
        if self.path.shape != (PATH_FEATURE_DIM,):
            raise ValidationError(f"path features must have length {PATH_FEATURE_DIM}")
        for arr in (self.raster, self.actor, self.path):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("feature bundle contains non-finite values")


# ---------------------------------------------------------------------------
# scene raster


def _raster_grid(cfg: LonConfig) -> GridSpec:
    span = cfg.raster_span
    return GridSpec(center=((cfg.extent_ahead - cfg.extent_behind) / 2.0, 0.0),
                    size_m=span, resolution=cfg.raster_resolution)


def build_raster(graph: LaneGraph, tracks, actor_id: str, t0: float,
                 path: Path, cfg: LonConfig, sdv_id: str | None = None) -> np.ndarray:
    """Three-channel bird's-eye raster in the actor frame (x forward,
    `extent_behind` meters behind to `extent_ahead` ahead).

    ch0: drivable lane polygons; ch1: actor footprints at t0 (actor of
    interest brightest, SDV marked, others mid); ch2: the candidate path
    strip. Array layout is [channel, iy, ix] with ix along the heading.
    """
    by_id = {tr.actor_id: tr for tr in tracks}
    if actor_id not in by_id:
        raise ValidationError(f"unknown actor {actor_id!r}")
    pos, heading = by_id[actor_id].pose_at(t0)
    rot = rotation_matrix(-heading)

    def to_frame(points):
        return (np.asarray(points, dtype=float) - pos) @ rot.T

    spec = _raster_grid(cfg)
    R = cfg.raster_size
    raster = np.zeros((3, R, R))

    reach = cfg.raster_span * 0.75  # circumradius of the raster window
    for lane_id in sorted(lanes_near(graph, pos, reach)):
        poly = graph.lane(lane_id).polygon
        local = Polygon(to_frame(poly.vertices), reorient=True, check_simple=False)
        ii, jj = polygon_cover_cells(local, spec)
        raster[0, jj, ii] = 1.0

    # dimmer actors first so brighter ones override on overlap
    order = sorted(by_id.values(),
                   key=lambda tr: (tr.actor_id == actor_id, tr.actor_id == sdv_id))
    for tr in order:
        if not tr.covers(t0):
            continue
        p, h = tr.pose_at(t0)
        value = (RASTER_ACTOR_VALUE if tr.actor_id == actor_id
                 else RASTER_SDV_VALUE if tr.actor_id == sdv_id
                 else RASTER_OTHER_VALUE)
        placed = tr.footprint.transformed(p, h)
        local = Polygon(to_frame(placed.vertices), reorient=True, check_simple=False)
        ii, jj = polygon_cover_cells(local, spec)
        raster[1, jj, ii] = np.maximum(raster[1, jj, ii], value)

    half_width = np.array([path.width_at(s) / 2.0 for s in path.centerline.cum_s])
    strip = strip_polygon(path.centerline, half_width)
    local = Polygon(to_frame(strip.vertices), reorient=True, check_simple=False)
    ii, jj = polygon_cover_cells(local, spec)
    raster[2, jj, ii] = 1.0
    return raster


# ---------------------------------------------------------------------------
# actor features


def _speed(track: ActorTrack, t: float) -> float:
    if t - FEATURE_DT >= track.t_start - 1e-9:
        a, _ = track.pose_at(t - FEATURE_DT)
        b, _ = track.pose_at(t)
    elif t + FEATURE_DT <= track.t_end + 1e-9:
        a, _ = track.pose_at(t)
        b, _ = track.pose_at(t + FEATURE_DT)
    else:
        return 0.0
    return float(np.hypot(*(b - a)) / FEATURE_DT)


def actor_features(track: ActorTrack, t0: float) -> np.ndarray:
    if not track.covers(t0):
        raise ValidationError(f"t0={t0} outside track")
    speed = _speed(track, t0)
    if t0 - FEATURE_DT >= track.t_start - 1e-9:
        _, h0 = track.pose_at(t0 - FEATURE_DT)
        _, h1 = track.pose_at(t0)
        ang_vel = float(wrap_angle(h1 - h0)) / FEATURE_DT
    else:
        ang_vel = 0.0
    history_ok = t0 - HISTORY_WINDOW >= track.t_start - 1e-9
    if history_ok:
        ts = t0 - HISTORY_WINDOW + FEATURE_DT * np.arange(
            int(round(HISTORY_WINDOW / FEATURE_DT)) + 1)
        _, hs = track.pose_at(ts)
        heading_var = float(np.var(hs))
    else:
        heading_var = 0.0
    if t0 - 2 * FEATURE_DT >= track.t_start - 1e-9:
        accel = (_speed(track, t0) - _speed(track, t0 - FEATURE_DT)) / FEATURE_DT
    else:
        accel = 0.0
    minx, miny, maxx, maxy = track.footprint.bounds
    return np.array([
        speed,
        ang_vel,
        heading_var,
        accel,
        maxx - minx,
        maxy - miny,
        1.0 if history_ok else 0.0,
    ])


# ---------------------------------------------------------------------------
# path features


def _curvature_stats(path: Path):
    pts = path.centerline.points
    if len(pts) < 3:
        return 0.0, 0.0, 0.0
    seg = np.diff(pts, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    dh = wrap_angle(np.diff(headings))
    # circumradius (Menger) curvature at each interior vertex: exact on
    # circular arcs even with uneven vertex spacing
    a = pts[:-2]
    b = pts[1:-1]
    c = pts[2:]
    cross = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                   - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    chord = np.hypot(*(c - a).T)
    kappa = 2.0 * cross / np.maximum(seglen[:-1] * seglen[1:] * chord, 1e-12)
    span = 0.5 * (seglen[:-1] + seglen[1:])
    mean_k = float(np.sum(kappa * span) / np.sum(span))
    return mean_k, float(kappa.max()), float(np.abs(dh).sum())


def _frenet_at(track: ActorTrack, path: Path, t: float):
    pos, heading = track.pose_at(t)
    f = path.centerline.project(pos, heading=float(heading))
    return f.s, f.d, f.heading_offset


def _path_relative_block(track: ActorTrack, path: Path, t: float):
    """(d, d_dot, s_ddot, heading offset) at time t; needs 2*FEATURE_DT
    of history, otherwise zeros."""
    if t - 2 * FEATURE_DT < track.t_start - 1e-9 or t > track.t_end + 1e-9:
        return np.zeros(4)
    s0, d0, _ = _frenet_at(track, path, t - 2 * FEATURE_DT)
    s1, d1, _ = _frenet_at(track, path, t - FEATURE_DT)
    s2, d2, h_off = _frenet_at(track, path, t)
    d_dot = (d2 - d1) / FEATURE_DT
    s_ddot = (s2 - 2 * s1 + s0) / FEATURE_DT**2
    return np.array([d2, d_dot, s_ddot, h_off])


def path_features(track: ActorTrack, t0: float, path: Path) -> np.ndarray:
    if not track.covers(t0):
        raise ValidationError(f"t0={t0} outside track")
    mean_k, max_k, total_dh = _curvature_stats(path)
    blocks = [_path_relative_block(track, path, t0 - back) for back in (0.0, 1.0, 2.0)]
    return np.concatenate([[mean_k, max_k, total_dh], *blocks])


def build_bundle(graph: LaneGraph, tracks, actor_id: str, t0: float,
                 path: Path, cfg: LonConfig, sdv_id: str | None = None) -> FeatureBundle:
    track = next(tr for tr in tracks if tr.actor_id == actor_id)
    return FeatureBundle(
        raster=build_raster(graph, tracks, actor_id, t0, path, cfg, sdv_id=sdv_id),
        actor=actor_features(track, t0),
        path=path_features(track, t0, path),
    )

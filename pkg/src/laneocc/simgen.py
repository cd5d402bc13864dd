"""Procedural scenario generation: synthetic lane networks, simulated
lane-following / turning / lane-changing actors, and dataset emission.

Scenario file (JSON):
    {"map": {...inline map...} | {"path": "map.json"},
     "actors": [{"id": str, "footprint": [[x, y], ...],
                 "poses": [[t, x, y, theta], ...]}, ...],
     "sdv_id": str (optional)}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import Polygon, Polyline, wrap_angle
from .labeling import ActorTrack, label_cells
from .lane_graph import Lane, LaneGraph, discretize_path, roll_out_paths
from .lon.config import LonConfig
from .lon.features import build_bundle
from .lon.io import LonDataset

DEFAULT_LANE_WIDTH = 3.6
DEFAULT_FOOTPRINT = (4.8, 2.0)
MOVING_SPEED_THRESHOLD = 0.5  # m/s, dataset/eval filter for moving vehicles


# ---------------------------------------------------------------------------
# map templates


@dataclass
class MapSpec:
    """Parameters for one procedural map template."""

    template: str
    lanes: int = 1
    lane_width: float = DEFAULT_LANE_WIDTH
    length: float = 300.0
    segments: int = 1
    radius: float = 40.0
    arc: float = np.pi / 2
    arms: int = 4
    arm_length: float = 70.0
    junction_radius: float = 12.0
    branches: int = 2
    seed: int = 0

    TEMPLATES = ("straight", "curve", "n_way_intersection", "branch",
                 "lane_change_corridor")

    def __post_init__(self):
        if self.template not in self.TEMPLATES:
            raise ValidationError(f"unknown map template {self.template!r}")
        if not 3 <= self.arms <= 6:
            raise ValidationError("intersections support 3 to 6 arms")
        if self.lanes < 1 or self.segments < 1 or self.branches < 2:
            raise ValidationError("lane, segment, and branch counts must be positive")
        if min(self.lane_width, self.length, self.radius, self.arc,
               self.arm_length, self.junction_radius) <= 0:
            raise ValidationError("map dimensions must be positive")


def _bezier(p0, c0, c1, p1, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return ((1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * c0
            + 3 * (1 - t) * t**2 * c1 + t**3 * p1)


def _sampled_line(p0, p1, step=10.0) -> np.ndarray:
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    n = max(int(np.ceil(np.hypot(*(p1 - p0)) / step)), 1) + 1
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def generate_map(spec: MapSpec) -> LaneGraph:
    """Build a lane graph from the template; always passes validation."""
    w = spec.lane_width
    lanes = []

    if spec.template in ("straight", "lane_change_corridor"):
        n_lanes = max(spec.lanes, 2) if spec.template == "lane_change_corridor" else spec.lanes
        seg_len = spec.length / spec.segments
        for i in range(n_lanes):
            y = i * w
            for j in range(spec.segments):
                succ = [f"l{i}.s{j + 1}"] if j + 1 < spec.segments else []
                lanes.append(Lane(f"l{i}.s{j}",
                                  Polyline(_sampled_line([j * seg_len, y],
                                                         [(j + 1) * seg_len, y])),
                                  w, successors=succ))

    elif spec.template == "curve":
        for i in range(spec.lanes):
            r = spec.radius + i * w
            t = np.linspace(0.0, spec.arc, max(int(r * spec.arc / 2.0), 8))
            pts = np.stack([r * np.sin(t), spec.radius - r * np.cos(t) + i * w], axis=1)
            lanes.append(Lane(f"l{i}", Polyline(pts), w))

    elif spec.template == "branch":
        trunk_len = spec.length / 2.0
        trunk_end = np.array([trunk_len, 0.0])
        names = [f"b{k}" for k in range(spec.branches)]
        lanes.append(Lane("trunk", Polyline(_sampled_line([0.0, 0.0], trunk_end)),
                          w, successors=names))
        spread = np.linspace(-0.5, 0.5, spec.branches)
        for k, name in enumerate(names):
            angle = spread[k]
            end = trunk_end + (spec.length / 2.0) * np.array([np.cos(angle), np.sin(angle)])
            pts = _bezier(trunk_end, trunk_end + [20.0, 0.0],
                          end - 20.0 * np.array([np.cos(angle), np.sin(angle)]),
                          end, 30)
            lanes.append(Lane(name, Polyline(pts), w))

    else:  # n_way_intersection
        n = spec.arms
        J = spec.junction_radius
        A = spec.arm_length
        offset = w / 2.0
        entries = {}
        exits = {}
        for k in range(n):
            phi = 2 * np.pi * k / n
            u = np.array([np.cos(phi), np.sin(phi)])
            n_in = np.array([-u[1], u[0]])    # right of inbound travel (-u)
            n_out = -n_in                     # right of outbound travel (+u)
            p_far = (J + A) * u + offset * n_in
            p_near = J * u + offset * n_in
            q_near = J * u + offset * n_out
            q_far = (J + A) * u + offset * n_out
            entries[k] = (p_near, -u)
            exits[k] = (q_near, u)
            lanes.append(Lane(f"in{k}", Polyline(_sampled_line(p_far, p_near)), w))
            lanes.append(Lane(f"out{k}", Polyline(_sampled_line(q_near, q_far)), w))
        for k in range(n):
            p_near, t_in = entries[k]
            for j in range(n):
                if j == k:
                    continue  # no U-turns
                q_near, t_out = exits[j]
                d = np.hypot(*(q_near - p_near))
                pts = _bezier(p_near, p_near + d / 3.0 * t_in,
                              q_near - d / 3.0 * t_out, q_near,
                              max(int(d / 1.0), 8))
                lanes.append(Lane(f"c{k}to{j}", Polyline(pts), w,
                                  successors=[f"out{j}"]))
        by_id = {lane.id: lane for lane in lanes}
        for k in range(n):
            by_id[f"in{k}"].successors = [f"c{k}to{j}" for j in range(n) if j != k]

    by_id = {lane.id: lane for lane in lanes}
    for lane in lanes:
        for succ in lane.successors:
            by_id[succ].predecessors.append(lane.id)
    return LaneGraph(lanes)


# ---------------------------------------------------------------------------
# actor simulation


@dataclass
class BehaviorSpec:
    """One simulated actor: route choice plus speed/lateral profiles."""

    behavior: str = "follow"           # follow | turn | lane_change | nudge
    start_lane: str | None = None
    start_s: float = 0.0
    cruise_speed: float = 10.0
    initial_speed: float | None = None
    accel: float = 2.0
    lateral_noise_sigma: float = 0.0
    turn_choice: str = "straight"      # left | straight | right
    lane_change_t_start: float = 4.0
    lane_change_direction: str = "left"
    nudge_t_start: float = 4.0
    nudge_amplitude: float | None = None
    footprint: tuple = DEFAULT_FOOTPRINT
    actor_id: str = "actor"
    seed: int = 0

    BEHAVIORS = ("follow", "turn", "lane_change", "nudge")

    def __post_init__(self):
        if self.behavior not in self.BEHAVIORS:
            raise ValidationError(f"unknown behavior {self.behavior!r}")
        if self.cruise_speed < 0 or self.lateral_noise_sigma < 0:
            raise ValidationError("speeds and noise must be non-negative")
        if self.turn_choice not in ("left", "straight", "right"):
            raise ValidationError("turn_choice must be left, straight, or right")


def _net_heading_change(line: Polyline) -> float:
    return float(wrap_angle(line.heading_at(line.length) - line.heading_at(0.0)))


def _route_line(graph: LaneGraph, spec: BehaviorSpec, needed: float) -> Polyline:
    """Concatenate lane centerlines along the behavior's route choice: the
    turn choice applies at the first branching lane, everything else takes
    the straightest continuation."""
    if spec.start_lane is None or spec.start_lane not in graph.lanes:
        raise ValidationError(f"behavior needs a start lane; got {spec.start_lane!r}")
    lane = graph.lane(spec.start_lane)
    line = lane.centerline
    visited = {lane.id}
    covered = lane.length - spec.start_s
    turned = False
    targets = {"left": np.pi / 2, "straight": 0.0, "right": -np.pi / 2}
    while covered < needed:
        succs = [graph.lane(s) for s in lane.successors if s not in visited]
        if not succs:
            break
        if spec.behavior == "turn" and not turned and len(succs) > 1:
            target = targets[spec.turn_choice]
            nxt = min(succs, key=lambda l: abs(_net_heading_change(l.centerline) - target))
            turned = True
        else:
            nxt = min(succs, key=lambda l: abs(_net_heading_change(l.centerline)))
        line = line.concat(nxt.centerline)
        visited.add(nxt.id)
        covered += nxt.length
        lane = nxt
    return line


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _lateral_profile(spec: BehaviorSpec, lane_width: float, t: np.ndarray) -> np.ndarray:
    if spec.behavior == "lane_change":
        sign = 1.0 if spec.lane_change_direction == "left" else -1.0
        return sign * lane_width * _smoothstep((t - spec.lane_change_t_start) / 3.0)
    if spec.behavior == "nudge":
        amp = lane_width * 0.9 if spec.nudge_amplitude is None else spec.nudge_amplitude
        t0 = spec.nudge_t_start
        out = _smoothstep((t - t0) / 2.0) - _smoothstep((t - t0 - 4.0) / 2.0)
        return amp * out
    return np.zeros_like(t)


def simulate_actor(graph: LaneGraph, spec: BehaviorSpec, duration: float,
                   tick: float = 0.1) -> ActorTrack:
    """Kinematic pure-pursuit tracking of the behavior's reference line.

    The actor chases a lookahead point on the route centerline shifted by
    the behavior's lateral profile plus seeded smooth noise; heading
    integrates the pure-pursuit turn rate. Deterministic given the seed.
    """
    if duration <= 0 or tick <= 0:
        raise ValidationError("duration and tick must be positive")
    rng = np.random.default_rng(spec.seed)
    # a "duration-second" track covers [0, duration): steps ticks
    steps = int(round(duration / tick)) - 1
    t = np.arange(steps + 1) * tick

    v0 = spec.cruise_speed if spec.initial_speed is None else spec.initial_speed
    v = np.minimum(spec.cruise_speed, v0 + spec.accel * t) if v0 <= spec.cruise_speed \
        else np.maximum(spec.cruise_speed, v0 - spec.accel * t)

    route = _route_line(graph, spec, needed=spec.start_s + float(v.sum() * tick) + 60.0)
    lane_width = graph.lane(spec.start_lane).width
    d_ref = _lateral_profile(spec, lane_width, t)

    # seeded smooth lateral noise: AR(1) over ticks
    noise = np.zeros(steps + 1)
    if spec.lateral_noise_sigma > 0:
        rho = np.exp(-tick / 1.5)
        eps = rng.normal(0.0, spec.lateral_noise_sigma, size=steps + 1)
        for k in range(1, steps + 1):
            noise[k] = rho * noise[k - 1] + np.sqrt(1 - rho**2) * eps[k]

    pos = route.point_at(spec.start_s).astype(float)
    theta = route.heading_at(spec.start_s)
    positions = np.empty((steps + 1, 2))
    headings = np.empty(steps + 1)
    positions[0] = pos
    headings[0] = theta
    for k in range(steps):
        speed = v[k]
        if speed > 1e-9:
            f = route.project(pos)
            lookahead = max(3.0, 0.6 * speed)
            s_t = min(f.s + lookahead, route.length)
            target = (route.point_at(s_t)
                      + (d_ref[k] + noise[k]) * route.normal_at(s_t))
            alpha = wrap_angle(np.arctan2(target[1] - pos[1], target[0] - pos[0]) - theta)
            theta = theta + 2.0 * speed * np.sin(alpha) / lookahead * tick
            pos = pos + speed * tick * np.array([np.cos(theta), np.sin(theta)])
        positions[k + 1] = pos
        headings[k + 1] = theta
    footprint = Polygon.rectangle(*spec.footprint)
    return ActorTrack(spec.actor_id, footprint, t, positions, headings)


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    graph: LaneGraph
    tracks: list
    sdv_id: str | None = None
    name: str = "scenario"

    def track(self, actor_id: str) -> ActorTrack:
        for tr in self.tracks:
            if tr.actor_id == actor_id:
                return tr
        raise ValidationError(f"no track for actor {actor_id!r}")

    def to_dict(self, map_ref: str | None = None) -> dict:
        doc = {
            "map": {"path": map_ref} if map_ref else self.graph.to_dict(),
            "actors": [
                {
                    "id": tr.actor_id,
                    "footprint": [[float(x), float(y)] for x, y in tr.footprint.vertices],
                    "poses": [[float(t), float(p[0]), float(p[1]), float(h)]
                              for t, p, h in zip(tr.t, tr.position, tr.heading)],
                }
                for tr in self.tracks
            ],
        }
        if self.sdv_id is not None:
            doc["sdv_id"] = self.sdv_id
        return doc

    def save(self, path, map_ref: str | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(map_ref=map_ref), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".", name: str = "scenario") -> "Scenario":
        map_doc = doc.get("map")
        if map_doc is None:
            raise ValidationError("scenario has no map")
        if "path" in map_doc and "lanes" not in map_doc:
            graph = LaneGraph.load(os.path.join(base_dir, map_doc["path"]))
        else:
            graph = LaneGraph.from_dict(map_doc)
        tracks = []
        for entry in doc.get("actors", []):
            poses = np.asarray(entry["poses"], dtype=float)
            tracks.append(ActorTrack(
                entry["id"], Polygon(entry["footprint"]),
                poses[:, 0], poses[:, 1:3], poses[:, 3]))
        return cls(graph=graph, tracks=tracks, sdv_id=doc.get("sdv_id"), name=name)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            doc = json.load(fh)
        name = os.path.splitext(os.path.basename(str(path)))[0]
        return cls.from_dict(doc, base_dir=os.path.dirname(str(path)) or ".", name=name)


def intersection_scenario(seed: int, duration: float = 14.0, arms: int = 4,
                          tick: float = 0.1) -> Scenario:
    """One mover crossing an n-way intersection (seeded turn choice and
    speed), plus a parked vehicle and a parked SDV."""
    rng = np.random.default_rng(seed)
    spec = MapSpec(template="n_way_intersection", arms=arms, seed=seed)
    graph = generate_map(spec)
    arm = int(rng.integers(arms))
    cruise = float(rng.uniform(8.0, 12.0))
    choice = str(rng.choice(["left", "straight", "right"]))
    start_s = max(0.0, spec.arm_length - cruise * duration * 0.45)
    mover = simulate_actor(graph, BehaviorSpec(
        behavior="turn", turn_choice=choice, start_lane=f"in{arm}",
        start_s=start_s, cruise_speed=cruise,
        lateral_noise_sigma=0.05, actor_id="mover", seed=seed), duration, tick)

    other_arm = (arm + 1) % arms
    parked_lane = graph.lane(f"out{other_arm}")
    t = np.arange(int(round(duration / tick))) * tick
    p = parked_lane.centerline.point_at(parked_lane.length * 0.5)
    h = parked_lane.centerline.heading_at(parked_lane.length * 0.5)
    parked = ActorTrack("parked", Polygon.rectangle(*DEFAULT_FOOTPRINT),
                        t, np.tile(p, (len(t), 1)), np.full(len(t), h))

    sdv_lane = graph.lane(f"in{(arm + arms - 1) % arms}")
    p2 = sdv_lane.centerline.point_at(sdv_lane.length * 0.3)
    h2 = sdv_lane.centerline.heading_at(sdv_lane.length * 0.3)
    sdv = ActorTrack("sdv", Polygon.rectangle(*DEFAULT_FOOTPRINT),
                     t, np.tile(p2, (len(t), 1)), np.full(len(t), h2))
    return Scenario(graph=graph, tracks=[mover, parked, sdv], sdv_id="sdv",
                    name=f"xing{seed:05d}")


def lane_change_scenario(seed: int, duration: float = 14.0,
                         tick: float = 0.1) -> Scenario:
    """One mover changing lane on a two-lane corridor, plus a parked SDV."""
    rng = np.random.default_rng(seed)
    cruise = float(rng.uniform(8.0, 12.0))
    length = cruise * duration + 80.0
    graph = generate_map(MapSpec(template="lane_change_corridor", lanes=2,
                                 length=length, seed=seed))
    t_start = float(rng.uniform(3.0, 6.0))
    mover = simulate_actor(graph, BehaviorSpec(
        behavior="lane_change", start_lane="l0.s0", start_s=10.0,
        cruise_speed=cruise, lane_change_t_start=t_start,
        lane_change_direction="left", lateral_noise_sigma=0.05,
        actor_id="mover", seed=seed), duration, tick)
    t = np.arange(int(round(duration / tick))) * tick
    sdv = ActorTrack("sdv", Polygon.rectangle(*DEFAULT_FOOTPRINT),
                     t, np.tile([5.0, 0.0], (len(t), 1)), np.zeros(len(t)))
    return Scenario(graph=graph, tracks=[mover, sdv], sdv_id="sdv",
                    name=f"lc{seed:05d}")


# ---------------------------------------------------------------------------
# dataset emission


def iter_actor_frames(scenario: Scenario, horizon: float, frame_stride: float = 1.0,
                      min_speed: float = MOVING_SPEED_THRESHOLD,
                      fully_observed_only: bool = False):
    """(track, t0) pairs for moving actors, sampled on the stride grid."""
    for track in scenario.tracks:
        t0 = track.t_start
        while t0 < track.t_end - 1e-9:
            if track.speed_at(t0) > min_speed:
                if not fully_observed_only or track.observed_horizon(t0) >= horizon - 1e-9:
                    yield track, t0
            t0 += frame_stride


def emit_dataset(scenarios, horizon: float, cfg: LonConfig,
                 frame_stride: float = 1.0, query_radius: float = 2.0) -> LonDataset:
    """Build (features, labels) records over all moving-actor frames.

    Applies the moving-vehicle speed filter, rolls candidate paths per
    frame, and labels cells against the observed future; frames observed
    for less than the horizon keep sentinel labels on untouched cells.
    """
    records = []
    for scenario in scenarios:
        for track, t0 in iter_actor_frames(scenario, horizon, frame_stride):
            pos, _ = track.pose_at(t0)
            paths = roll_out_paths(scenario.graph, pos, radius=query_radius,
                                   max_length=cfg.path_length)
            for path in paths:
                bundle = build_bundle(scenario.graph, scenario.tracks,
                                      track.actor_id, t0, path, cfg,
                                      sdv_id=scenario.sdv_id)
                cells = discretize_path(path, cfg.cell_length, cfg.num_cells)
                labels = label_cells(cells, track, t0, horizon)
                records.append((bundle, labels))
    if not records:
        raise ValidationError("no records emitted (no moving mapped actors)")
    return LonDataset.from_records(records)

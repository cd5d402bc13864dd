import numpy as np
import pytest

from laneocc.geometry import Polyline
from laneocc.lane_graph import Lane, LaneGraph


def straight_lane(lane_id, x0, x1, y=0.0, width=3.6, successors=()):
    return Lane(lane_id, Polyline([[x0, y], [x1, y]]), width, successors=successors)


def link(lanes):
    """Fill predecessor lists from successor lists and build the graph."""
    by_id = {lane.id: lane for lane in lanes}
    for lane in lanes:
        for succ in lane.successors:
            by_id[succ].predecessors.append(lane.id)
    return LaneGraph(lanes)


@pytest.fixture
def single_lane_graph():
    return link([straight_lane("a", 0.0, 300.0)])


@pytest.fixture
def fork_graph():
    """Seed with 3 successors, one of which branches again into 2 (4 leaves).

    a ends at x=50; b/c/d continue; d branches into e/f.
    """

    def fan(lane_id, start, angle, length=120.0, successors=()):
        n = max(int(length / 2.0), 2)
        t = np.linspace(0, length, n)
        pts = np.stack([start[0] + t * np.cos(angle), start[1] + t * np.sin(angle)], axis=1)
        return Lane(lane_id, Polyline(pts), 3.6, successors=successors)

    a = straight_lane("a", 0.0, 50.0, successors=["b", "c", "d"])
    b = fan("b", (50.0, 0.0), 0.4)
    c = fan("c", (50.0, 0.0), 0.0)
    d = fan("d", (50.0, 0.0), -0.4, length=60.0, successors=["e", "f"])
    end_d = d.centerline.points[-1]
    e = fan("e", end_d, -0.6)
    f = fan("f", end_d, -0.2)
    return link([a, b, c, d, e, f])


@pytest.fixture
def diamond_graph():
    """Branch then merge: a -> (b | c) -> d."""
    a = straight_lane("a", 0.0, 40.0, successors=["b", "c"])
    b = Lane("b", Polyline([[40.0, 0.0], [60.0, 4.0], [80.0, 0.0]]), 3.6, successors=["d"])
    c = Lane("c", Polyline([[40.0, 0.0], [60.0, -4.0], [80.0, 0.0]]), 3.6, successors=["d"])
    d = straight_lane("d", 80.0, 160.0)
    return link([a, b, c, d])


def random_tree_graph(rng, max_lanes=100):
    """Random embedded successor tree satisfying all LaneGraph invariants."""
    lanes = []
    counter = [0]

    def new_id():
        counter[0] += 1
        return f"l{counter[0]:03d}"

    frontier = []
    for _ in range(rng.integers(1, 4)):
        lane_id = new_id()
        start = rng.uniform(-50, 50, size=2)
        angle = rng.uniform(-np.pi, np.pi)
        length = rng.uniform(20, 80)
        end = start + length * np.array([np.cos(angle), np.sin(angle)])
        lane = Lane(lane_id, Polyline([start, end]), rng.uniform(2.5, 4.5))
        lanes.append(lane)
        frontier.append((lane, angle))
    while frontier and len(lanes) < max_lanes:
        lane, angle = frontier.pop(rng.integers(len(frontier)))
        n_succ = int(rng.choice([0, 1, 1, 2, 3]))
        for _ in range(n_succ):
            if len(lanes) >= max_lanes:
                break
            succ_id = new_id()
            a2 = angle + rng.uniform(-0.5, 0.5)
            start = lane.centerline.points[-1]
            length = rng.uniform(20, 80)
            end = start + length * np.array([np.cos(a2), np.sin(a2)])
            succ = Lane(succ_id, Polyline([start, end]), rng.uniform(2.5, 4.5))
            lane.successors.append(succ_id)
            lanes.append(succ)
            frontier.append((succ, a2))
    return link(lanes)

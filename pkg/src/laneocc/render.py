"""Matplotlib figure rendering for scenes, occupancy heatmaps, ring
traces, and metric summaries. Every function writes a file and returns
the path; the Agg backend keeps this headless-safe."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Polygon as MplPolygon

from .evaluation import OccupancyGrid, ring_trace
from .lane_graph import LaneGraph
from .simgen import Scenario


def draw_map(ax, graph: LaneGraph, color="0.82"):
    for lane in graph.lanes.values():
        ax.add_patch(MplPolygon(lane.polygon.vertices, closed=True,
                                facecolor=color, edgecolor="0.6", linewidth=0.4))
        ax.plot(lane.centerline.points[:, 0], lane.centerline.points[:, 1],
                color="0.55", linewidth=0.5, linestyle="--")


def draw_track(ax, track, color, t0=None, label=None):
    ax.plot(track.position[:, 0], track.position[:, 1], color=color,
            linewidth=1.2, label=label)
    if t0 is not None and track.covers(t0):
        pos, heading = track.pose_at(t0)
        placed = track.footprint.transformed(pos, heading)
        ax.add_patch(MplPolygon(placed.vertices, closed=True,
                                facecolor=color, alpha=0.75, edgecolor="k",
                                linewidth=0.6))


def render_scenario(scenario: Scenario, out_path, t0=None, paths=None):
    """Scene overview: lane polygons, actor trajectories, footprints at t0,
    and (optionally) candidate paths."""
    fig, ax = plt.subplots(figsize=(7, 7))
    draw_map(ax, scenario.graph)
    if paths:
        for path in paths:
            pts = path.centerline.points
            ax.plot(pts[:, 0], pts[:, 1], color="darkgreen", linewidth=1.6,
                    alpha=0.8)
    cmap = plt.get_cmap("tab10")
    for k, track in enumerate(scenario.tracks):
        color = ("tab:red" if track.actor_id == scenario.sdv_id
                 else cmap(k % 10))
        draw_track(ax, track, color, t0=t0, label=track.actor_id)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    title = scenario.name if t0 is None else f"{scenario.name} @ t0={t0:g}s"
    ax.set_title(title)
    fig.savefig(out_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_grid(grid: OccupancyGrid, out_path, truth: OccupancyGrid = None,
                actor_pose=None, title=""):
    """Occupancy heatmap in world coordinates, optionally overlaying the
    ground-truth outline and the actor pose."""
    fig, ax = plt.subplots(figsize=(6.5, 6))
    o = grid.spec.origin
    extent = [o[0], o[0] + grid.spec.size_m, o[1], o[1] + grid.spec.size_m]
    im = ax.imshow(grid.values.T, origin="lower", extent=extent,
                   cmap="magma", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, label="occupancy likelihood", shrink=0.85)
    if truth is not None:
        ax.contour(truth.values.T, levels=[0.5], origin="lower",
                   extent=extent, colors="cyan", linewidths=0.9)
    if actor_pose is not None:
        (x, y), heading = actor_pose
        ax.annotate("", xy=(x + 6 * np.cos(heading), y + 6 * np.sin(heading)),
                    xytext=(x, y),
                    arrowprops=dict(arrowstyle="-|>", color="white", lw=1.5))
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.savefig(out_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_ring_traces(grid: OccupancyGrid, position, heading, radii, tau,
                       out_path):
    """Forward-arc likelihood traces used by the mode counter, one line
    per ring radius."""
    fig, ax = plt.subplots(figsize=(7, 4))
    angles = np.arange(-90.0, 90.5, 1.0)
    for radius in radii:
        vals = ring_trace(grid, position, heading, radius)
        ax.plot(angles, vals, label=f"r = {radius:g} m")
    ax.axhline(tau, color="0.4", linestyle=":", linewidth=0.8,
               label=f"tau = {tau:g}")
    ax.set_xlabel("arc angle vs heading [deg]")
    ax.set_ylabel("likelihood")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.savefig(out_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_metrics_summary(frame_evals, out_path):
    """Box plot of the positive likelihood per method across frames."""
    by_method = {}
    for fe in frame_evals:
        if fe.metrics.positive is not None:
            by_method.setdefault(fe.method, []).append(fe.metrics.positive)
    if not by_method:
        raise ValueError("no frames with positive cells to summarize")
    fig, ax = plt.subplots(figsize=(5, 4))
    methods = sorted(by_method)
    ax.boxplot([by_method[m] for m in methods], tick_labels=methods,
               showmeans=True)
    ax.set_ylabel("positive likelihood")
    ax.set_ylim(0, 1)
    ax.grid(axis="y", alpha=0.3)
    fig.savefig(out_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return out_path

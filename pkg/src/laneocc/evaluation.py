"""Common 2D occupancy representation and the evaluation stack.

Every predictor's output is converted onto one axis-aligned grid centered
on the actor (150 m x 150 m at 1 m resolution by default):

  * trajectory mixtures -> Monte Carlo frequency grids (`mc_grid_from_mixture`)
  * per-path cell probabilities -> averaged cell grids
    (`grid_from_path_occupancy`)

against which Bernoulli likelihood metrics and the ring-trace mode count
are computed.

File interfaces: prediction/truth grids serialize as 8-bit PGM heatmaps
(value = round(255 * p)) with a JSON sidecar carrying the GridSpec;
metrics go to CSV with header `actor_id,frame,method,overall,positive,negative`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import (
    GridSpec,
    Polygon,
    footprint_circumradius,
    interpolate_poses,
    placed_footprints,
    polygon_cover_cells,
    quad_batch_cover_cells,
)

DEFAULT_MC_SAMPLES = 1000
DEFAULT_TAU = 0.03
DEFAULT_RING_RADII = tuple(float(r) for r in range(10, 71, 10))

_SAMPLE_CHUNK = 64  # MC samples rasterized per vectorized batch


@dataclass
class OccupancyGrid:
    """G x G occupancy values on a GridSpec: binary labels for truth
    grids, likelihoods in [0, 1] for prediction grids."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        G = self.spec.G
        if self.values.shape != (G, G):
            raise ValidationError(f"grid values must be {G}x{G}")
        if self.values.min() < -1e-9 or self.values.max() > 1.0 + 1e-9:
            raise ValidationError("grid values must lie in [0, 1]")

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


@dataclass
class PathOccupancy:
    """Predicted occupancy probabilities for the cells of one path."""

    cells: "PathCells"
    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.probabilities.shape != (self.cells.num_cells,):
            raise ValidationError("need one probability per path cell")
        valid = self.cells.valid_mask
        p = self.probabilities[valid]
        if len(p) and (p.min() < -1e-9 or p.max() > 1.0 + 1e-9):
            raise ValidationError("cell probabilities must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Monte Carlo conversion of trajectory mixtures


def _cholesky_factors(mix) -> np.ndarray:
    """Per-(mode, timestamp) Cholesky factors; an exactly-zero covariance
    maps to A = 0 (degenerate point mass)."""
    K = mix.K
    T = len(mix.t)
    A = np.zeros((K, T, 2, 2))
    for k, mode in enumerate(mix.modes):
        for i in range(T):
            cov = mode.cov[i]
            if not cov.any():
                continue
            try:
                A[k, i] = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValidationError(
                    f"covariance of mode {k} at t={mode.t[i]:g} has no "
                    f"Cholesky factor") from None
    return A


def sample_trajectories(mix, n_samples: int, seed: int = 0):
    """Draw coherent trajectories from a mixture.

    One standard-normal z is reused across all timestamps of a sample
    (x_t = A_k(t) z + mu_k(t)), so each draw is a coherent trajectory
    rather than independent per-step scatter. Returns (modes, (N, T, 2)).
    """
    if n_samples < 1:
        raise ValidationError("need at least one sample")
    A = _cholesky_factors(mix)
    rng = np.random.default_rng(seed)
    probs = np.array([m.probability for m in mix.modes])
    modes = rng.choice(mix.K, size=n_samples, p=probs / probs.sum())
    z = rng.standard_normal((n_samples, 2))
    mu = np.stack([m.mean for m in mix.modes])  # (K, T, 2)
    traj = np.einsum("ntij,nj->nti", A[modes], z) + mu[modes]
    return modes, traj


def _waypoint_headings(traj: np.ndarray) -> np.ndarray:
    """Headings from consecutive waypoint differences; stationary segments
    reuse the previous heading (leading stationary ones the next valid)."""
    T = traj.shape[0]
    if T == 1:
        return np.zeros(1)
    d = np.diff(traj, axis=0)
    ok = np.hypot(d[:, 0], d[:, 1]) > 1e-9
    h = np.zeros(T)
    seg = np.arctan2(d[:, 1], d[:, 0])
    h[:-1] = seg
    h[-1] = seg[-1]
    if not ok.all():
        if not ok.any():
            return np.zeros(T)
        idx = np.arange(T - 1)
        last_valid = np.maximum.accumulate(np.where(ok, idx, -1))
        first = int(np.argmax(ok))
        last_valid = np.where(last_valid < 0, first, last_valid)
        h[:-1] = seg[last_valid]
        h[-1] = h[-2]
    return h


def mc_grid_from_mixture(mix, footprint: Polygon, spec: GridSpec,
                         n_samples: int = DEFAULT_MC_SAMPLES,
                         seed: int = 0) -> OccupancyGrid:
    """Monte Carlo conversion of a trajectory mixture to a likelihood grid.

    Each of the `n_samples` draws picks a mode, draws one z ~ N(0, I),
    forms the coherent trajectory x_t = A_k(t) z + mu_k(t), and sweeps the
    footprint along it; the grid value is the fraction of sweeps that
    overlap the cell. Deterministic given `seed`.
    """
    if not footprint.is_convex:
        raise ValidationError("Monte Carlo conversion needs a convex footprint")
    G = spec.G
    modes, traj = sample_trajectories(mix, n_samples, seed)
    step = 0.5 * spec.resolution
    radius = footprint_circumradius(footprint)

    counts = np.zeros(G * G)
    # modes whose covariance is zero everywhere collapse onto their mean:
    # rasterize once and weight by the number of samples that drew them
    A = _cholesky_factors(mix)
    deterministic = {k for k in range(mix.K) if not A[k].any()}
    todo = [n for n in range(n_samples) if modes[n] not in deterministic]
    for k in deterministic:
        weight = int(np.sum(modes == k))
        if weight == 0:
            continue
        cells = _sweep_cells(mix.modes[k].mean, footprint, spec, step, radius)
        counts[cells] += weight

    for lo in range(0, len(todo), _SAMPLE_CHUNK):
        chunk = todo[lo:lo + _SAMPLE_CHUNK]
        placements = []
        owner = []
        for ci, n in enumerate(chunk):
            pos, hdg = interpolate_poses(traj[n], _waypoint_headings(traj[n]),
                                         step, radius)
            placements.append(placed_footprints(footprint, pos, hdg))
            owner.append(np.full(len(pos), ci))
        quads = np.concatenate(placements, axis=0)
        owner = np.concatenate(owner)
        pidx, ii, jj = quad_batch_cover_cells(quads, spec, radius)
        flat = owner[pidx] * (G * G) + ii * G + jj
        hit = np.unique(flat)
        np.add.at(counts, hit % (G * G), 1.0)

    return OccupancyGrid(spec=spec, values=(counts / n_samples).reshape(G, G))


def _sweep_cells(traj: np.ndarray, footprint: Polygon, spec: GridSpec,
                 step: float, radius: float) -> np.ndarray:
    pos, hdg = interpolate_poses(traj, _waypoint_headings(traj), step, radius)
    quads = placed_footprints(footprint, pos, hdg)
    _, ii, jj = quad_batch_cover_cells(quads, spec, radius)
    return np.unique(ii * spec.G + jj)


# ---------------------------------------------------------------------------
# path-based conversion


def grid_from_path_occupancy(path_occupancies, spec: GridSpec) -> OccupancyGrid:
    """Convert per-path cell probabilities onto the common 2D grid.

    Every 2D cell collects the probability of each overlapping path cell
    (across all paths); its value is the mean of the collected estimates,
    0 where no path covers it.
    """
    path_occupancies = list(path_occupancies)
    if not path_occupancies:
        raise ValidationError("need at least one path")
    G = spec.G
    total = np.zeros((G, G))
    count = np.zeros((G, G))
    for po in path_occupancies:
        for k, cell in enumerate(po.cells.cells):
            if cell is None or not po.cells.valid_mask[k]:
                continue
            ii, jj = polygon_cover_cells(cell, spec)
            total[ii, jj] += po.probabilities[k]
            count[ii, jj] += 1.0
    values = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return OccupancyGrid(spec=spec, values=values)


# ---------------------------------------------------------------------------
# likelihood metrics


@dataclass
class LikelihoodMetrics:
    """Bernoulli likelihood means: over all cells, over occupied cells
    (None when the truth grid has no positives), over free cells."""

    overall: float
    positive: float | None
    negative: float | None


def likelihood_metrics(truth: OccupancyGrid, pred: OccupancyGrid) -> LikelihoodMetrics:
    """Per-cell Bernoulli likelihood of the truth under the prediction:
    p where Z=1, (1-p) where Z=0; averaged overall / positives / negatives."""
    if truth.spec != pred.spec:
        raise ValidationError("truth and prediction grids use different specs")
    if not truth.is_binary:
        raise ValidationError("truth grid must be binary")
    z = truth.values
    p = pred.values
    per_cell = np.where(z == 1.0, p, 1.0 - p)
    pos_mask = z == 1.0
    positive = float(per_cell[pos_mask].mean()) if pos_mask.any() else None
    negative = float(per_cell[~pos_mask].mean()) if (~pos_mask).any() else None
    return LikelihoodMetrics(
        overall=float(per_cell.mean()), positive=positive, negative=negative)


# ---------------------------------------------------------------------------
# multimodality


def bilinear_sample(grid: OccupancyGrid, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of grid values at world points; points
    outside the cell-center lattice read 0."""
    spec = grid.spec
    u = (np.asarray(points, dtype=float) - spec.origin) / spec.resolution - 0.5
    G = spec.G
    inside = np.all((u >= 0.0) & (u <= G - 1), axis=-1)
    uc = np.clip(u, 0.0, G - 1 - 1e-12)
    i0 = np.floor(uc).astype(int)
    f = uc - i0
    i1 = np.minimum(i0 + 1, G - 1)
    v = grid.values
    out = (v[i0[:, 0], i0[:, 1]] * (1 - f[:, 0]) * (1 - f[:, 1])
           + v[i1[:, 0], i0[:, 1]] * f[:, 0] * (1 - f[:, 1])
           + v[i0[:, 0], i1[:, 1]] * (1 - f[:, 0]) * f[:, 1]
           + v[i1[:, 0], i1[:, 1]] * f[:, 0] * f[:, 1])
    return np.where(inside, out, 0.0)


def ring_trace(grid: OccupancyGrid, position, heading: float, radius: float,
               step_deg: float = 1.0) -> np.ndarray:
    """1D likelihood along the forward 180-degree arc at `radius`."""
    if radius >= grid.spec.size_m / 2.0:
        raise ValidationError("ring radius must be inside the grid half-extent")
    angles = heading + np.deg2rad(np.arange(-90.0, 90.0 + step_deg / 2, step_deg))
    pts = np.asarray(position, dtype=float) + radius * np.stack(
        [np.cos(angles), np.sin(angles)], axis=1)
    return bilinear_sample(grid, pts)


def count_peaks(values: np.ndarray, tau: float) -> int:
    """Peaks in a 1D trace: local maxima rising at least `tau` above the
    greater of the two flanking local minima (trace endpoints count as
    minima). Plateaus collapse to a single sample."""
    if tau <= 0:
        raise ValidationError("tau must be positive")
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return 0
    # merge near-equal runs (float jitter across flat regions would
    # otherwise fabricate micro-extrema that defeat the prominence rule)
    tol = 1e-9
    collapsed = [v[0]]
    for x in v[1:]:
        if abs(x - collapsed[-1]) > tol:
            collapsed.append(x)
    v = np.asarray(collapsed)
    n = len(v)
    if n < 3:
        return 0
    maxima = [i for i in range(1, n - 1) if v[i] > v[i - 1] and v[i] > v[i + 1]]
    is_min = np.zeros(n, dtype=bool)
    is_min[0] = is_min[-1] = True
    for i in range(1, n - 1):
        if v[i] < v[i - 1] and v[i] < v[i + 1]:
            is_min[i] = True
    count = 0
    for i in maxima:
        left = next(v[j] for j in range(i - 1, -1, -1) if is_min[j])
        right = next(v[j] for j in range(i + 1, n) if is_min[j])
        if v[i] - max(left, right) >= tau - 1e-12:
            count += 1
    return count


def count_modes(grid: OccupancyGrid, position, heading: float, radius: float,
                tau: float = DEFAULT_TAU, step_deg: float = 1.0) -> int:
    """Number of spatially distinct modes crossing the forward arc at
    `radius`: peak count of the ring trace with prominence threshold `tau`."""
    return count_peaks(ring_trace(grid, position, heading, radius, step_deg), tau)


# ---------------------------------------------------------------------------
# file interfaces


def write_pgm(grid: OccupancyGrid, path) -> None:
    """8-bit binary PGM heatmap (value = round(255 * p), rows north to
    south) plus a `<path>.json` sidecar with the GridSpec."""
    path = str(path)
    img = np.round(255.0 * grid.values).astype(np.uint8).T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
    sidecar = {
        "center": [grid.spec.center[0], grid.spec.center[1]],
        "size_m": grid.spec.size_m,
        "resolution": grid.spec.resolution,
        "G": grid.spec.G,
        "encoding": "value = round(255 * p); row 0 is the north edge",
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def read_pgm(path) -> OccupancyGrid:
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValidationError(f"{path}: not a binary PGM file")
        dims = fh.readline().split()
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValidationError(f"{path}: expected 8-bit PGM")
        w, h = int(dims[0]), int(dims[1])
        img = np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    spec = GridSpec(center=tuple(sidecar["center"]), size_m=sidecar["size_m"],
                    resolution=sidecar["resolution"])
    return OccupancyGrid(spec=spec, values=(img[::-1].T).astype(float) / 255.0)


METRICS_HEADER = ["actor_id", "frame", "method", "overall", "positive", "negative"]


def write_metrics_csv(rows, path) -> None:
    """Rows of (actor_id, frame, method, LikelihoodMetrics) to CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for actor_id, frame, method, m in rows:
            writer.writerow([
                actor_id,
                f"{frame:.10g}",
                method,
                f"{m.overall:.10g}",
                "" if m.positive is None else f"{m.positive:.10g}",
                "" if m.negative is None else f"{m.negative:.10g}",
            ])

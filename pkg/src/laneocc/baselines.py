"""Comparison predictors producing Gaussian trajectory mixtures.

Two generators live here:
  * `ukf_propagate`: unimodal forward propagation of a second-order state
    through constant-turn-rate-and-velocity dynamics with the scaled
    unscented transform.
  * `mixture_baseline`: a multimodal stand-in that follows candidate lane
    paths at constant speed, weighting modes by heading alignment.

Both emit `TrajectoryMixture` objects; `mc_grid_from_mixture` in the
evaluation module converts those into 2D occupancy grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import wrap_angle
from .labeling import ActorTrack

# scaled unscented transform constants
UT_ALPHA = 1e-3
UT_BETA = 2.0
UT_KAPPA = 0.0

OMEGA_CLAMP = 1.0  # rad/s, turn-rate safety rail during propagation

WAYPOINT_DT = 0.5  # s between output waypoints

# mixture baseline tuning
ALIGN_LOOKAHEAD = 15.0   # m ahead of the projection where alignment is scored
ALIGN_TEMPERATURE = 0.25  # softmax temperature over alignment scores
MIX_COV0 = 0.25          # m^2, waypoint covariance at t=0
MIX_COV_RATE = 0.5       # m^2/s, linear covariance growth


@dataclass
class MixtureMode:
    probability: float
    t: np.ndarray          # (T,)
    mean: np.ndarray       # (T, 2)
    cov: np.ndarray        # (T, 2, 2)


@dataclass
class TrajectoryMixture:
    """K weighted modes of 2D Gaussian waypoints on a shared time base."""

    modes: list

    def __post_init__(self):
        if not self.modes:
            raise ValidationError("mixture needs at least one mode")
        total = sum(m.probability for m in self.modes)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"mode probabilities sum to {total}, expected 1")
        t0 = self.modes[0].t
        for k, m in enumerate(self.modes):
            m.t = np.asarray(m.t, dtype=float)
            m.mean = np.asarray(m.mean, dtype=float)
            m.cov = np.asarray(m.cov, dtype=float)
            if m.t.shape != t0.shape or not np.allclose(m.t, t0, atol=1e-12):
                raise ValidationError("all modes must share the timestamp sequence")
            if m.mean.shape != (len(m.t), 2) or m.cov.shape != (len(m.t), 2, 2):
                raise ValidationError(f"mode {k}: waypoint array shapes do not match")
            if not np.allclose(m.cov, np.swapaxes(m.cov, 1, 2), atol=1e-9):
                raise ValidationError(f"mode {k}: covariance not symmetric")
            if np.any(np.linalg.eigvalsh(m.cov) < -1e-9):
                raise ValidationError(f"mode {k}: covariance not positive semi-definite")

    @property
    def K(self) -> int:
        return len(self.modes)

    @property
    def t(self) -> np.ndarray:
        return self.modes[0].t

    def to_dict(self) -> dict:
        return {
            "modes": [
                {
                    "p": float(m.probability),
                    "waypoints": [
                        {
                            "t": float(t),
                            "mu": [float(mu[0]), float(mu[1])],
                            "sigma": [[float(c[0, 0]), float(c[0, 1])],
                                      [float(c[1, 0]), float(c[1, 1])]],
                        }
                        for t, mu, c in zip(m.t, m.mean, m.cov)
                    ],
                }
                for m in self.modes
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrajectoryMixture":
        modes = []
        for entry in doc["modes"]:
            wps = entry["waypoints"]
            modes.append(MixtureMode(
                probability=float(entry["p"]),
                t=np.array([w["t"] for w in wps], dtype=float),
                mean=np.array([w["mu"] for w in wps], dtype=float),
                cov=np.array([w["sigma"] for w in wps], dtype=float),
            ))
        return cls(modes=modes)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrajectoryMixture":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class UkfState:
    """CTRV filter state [x, y, theta, v, omega] with process-noise sigmas
    for acceleration and yaw acceleration."""

    state: np.ndarray
    covariance: np.ndarray
    sigma_a: float = 1.0
    sigma_wdot: float = 0.1

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.state.shape != (5,) or self.covariance.shape != (5, 5):
            raise ValidationError("UKF state is 5D with a 5x5 covariance")


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Matrix square root S with P = S S^T; tolerates semi-definite input."""
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh((P + P.T) / 2.0)
        if np.any(w < -1e-9):
            raise ValidationError("covariance is not positive semi-definite") from None
        return V * np.sqrt(np.clip(w, 0.0, None))


def _ctrv_step(states: np.ndarray, dt: float) -> np.ndarray:
    """Constant-turn-rate-and-velocity transition for (N, 5) sigma points."""
    x, y, theta, v, omega = states.T
    w = np.clip(omega, -OMEGA_CLAMP, OMEGA_CLAMP)
    out = np.empty_like(states)
    turning = np.abs(w) > 1e-9
    wt = np.where(turning, w, 1.0)
    out[:, 0] = np.where(
        turning,
        x + v / wt * (np.sin(theta + w * dt) - np.sin(theta)),
        x + v * np.cos(theta) * dt,
    )
    out[:, 1] = np.where(
        turning,
        y - v / wt * (np.cos(theta + w * dt) - np.cos(theta)),
        y + v * np.sin(theta) * dt,
    )
    out[:, 2] = theta + w * dt
    out[:, 3] = v
    out[:, 4] = w
    return out


def _process_noise(theta: float, dt: float, sigma_a: float, sigma_wdot: float) -> np.ndarray:
    g = np.array([
        [0.5 * dt**2 * np.cos(theta), 0.0],
        [0.5 * dt**2 * np.sin(theta), 0.0],
        [0.0, 0.5 * dt**2],
        [dt, 0.0],
        [0.0, dt],
    ])
    return g @ np.diag([sigma_a**2, sigma_wdot**2]) @ g.T


def ukf_propagate(init: UkfState, dt: float = WAYPOINT_DT,
                  horizon: float = 9.0) -> TrajectoryMixture:
    """Forward-propagate a CTRV state for `horizon` seconds.

    Returns a single-mode mixture (p=1) whose waypoints carry the position
    marginal (mean and 2x2 covariance block) at t = dt, 2*dt, ..., horizon.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    steps = horizon / dt
    if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
        raise ValidationError("horizon must be a positive multiple of dt")
    steps = int(round(steps))

    n = 5
    lam = UT_ALPHA**2 * (n + UT_KAPPA) - n
    wm = np.full(2 * n + 1, 0.5 / (n + lam))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + (1.0 - UT_ALPHA**2 + UT_BETA)

    m = init.state.copy()
    P = (init.covariance + init.covariance.T) / 2.0
    if np.any(np.linalg.eigvalsh(P) < -1e-9):
        raise ValidationError("input covariance is not positive semi-definite")

    times = np.arange(1, steps + 1) * dt
    means = np.empty((steps, 2))
    covs = np.empty((steps, 2, 2))
    for k in range(steps):
        S = _psd_sqrt(P)
        pts = np.empty((2 * n + 1, n))
        pts[0] = m
        scale = np.sqrt(n + lam)
        pts[1:n + 1] = m + scale * S.T
        pts[n + 1:] = m - scale * S.T
        prop = _ctrv_step(pts, dt)
        m_new = wm @ prop
        diff = prop - m_new
        P = np.einsum("i,ij,ik->jk", wc, diff, diff)
        P += _process_noise(m[2], dt, init.sigma_a, init.sigma_wdot)
        P = (P + P.T) / 2.0
        m = m_new
        means[k] = m[:2]
        covs[k] = P[:2, :2]
    return TrajectoryMixture(modes=[
        MixtureMode(probability=1.0, t=times, mean=means, cov=covs)
    ])


def ukf_state_from_track(track: ActorTrack, t0: float, sigma_a: float = 1.0,
                         sigma_wdot: float = 0.1) -> UkfState:
    """Estimate a CTRV state at t0 from finite differences of the track."""
    pos, heading = track.pose_at(t0)
    v = track.speed_at(t0)
    delta = 0.2
    t_prev = max(t0 - delta, track.t_start)
    if t0 - t_prev > 1e-9:
        _, h_prev = track.pose_at(t_prev)
        omega = float(wrap_angle(heading - h_prev)) / (t0 - t_prev)
    else:
        omega = 0.0
    state = np.array([pos[0], pos[1], float(wrap_angle(heading)), v, omega])
    cov = np.diag([0.25, 0.25, 0.01, 0.25, 0.01])
    return UkfState(state=state, covariance=cov, sigma_a=sigma_a, sigma_wdot=sigma_wdot)


def mixture_baseline(track: ActorTrack, t0: float, paths, k_max: int = 3,
                     dt: float = WAYPOINT_DT, horizon: float = 9.0) -> TrajectoryMixture:
    """Multimodal trajectory stand-in built from candidate lane paths.

    Selects up to `k_max` paths by heading alignment (cosine of the actor
    heading vs the path tangent `ALIGN_LOOKAHEAD` meters past the actor's
    projection), follows each centerline at the actor's current speed, and
    grows an isotropic waypoint covariance linearly in time. Mode
    probabilities are the softmax of the alignment scores. With no paths
    it falls back to unimodal CTRV extrapolation.
    """
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    paths = list(paths)
    if not paths:
        return ukf_propagate(ukf_state_from_track(track, t0), dt=dt, horizon=horizon)

    pos, heading = track.pose_at(t0)
    v = track.speed_at(t0)
    scored = []
    for path in paths:
        f = path.centerline.project(pos)
        s_ref = min(f.s + ALIGN_LOOKAHEAD, path.length)
        score = float(np.cos(heading - path.centerline.heading_at(s_ref)))
        scored.append((score, f.s, path))
    scored.sort(key=lambda item: -item[0])
    chosen = scored[:k_max]

    scores = np.array([c[0] for c in chosen])
    weights = np.exp((scores - scores.max()) / ALIGN_TEMPERATURE)
    probs = weights / weights.sum()

    times = np.arange(1, int(round(horizon / dt)) + 1) * dt
    eye = np.eye(2)
    modes = []
    for (score, s0, path), p in zip(chosen, probs):
        s = np.minimum(s0 + v * times, path.length)
        mean = path.centerline.point_at(s)
        cov = (MIX_COV0 + MIX_COV_RATE * times)[:, None, None] * eye
        modes.append(MixtureMode(probability=float(p), t=times, mean=mean, cov=cov))
    # renormalize exactly (guards the 1e-9 invariant against float dust)
    total = sum(m.probability for m in modes)
    for m in modes:
        m.probability /= total
    return TrajectoryMixture(modes=modes)

"""Constant-velocity Kalman tracking, iris centroid, head tilt and planar
transforms.

The tracker's state is (px, py, vx, vy) with continuous white-noise
acceleration of spectral density q (units^2/s^3) and isotropic measurement
variance r.  Predict/update are pure functions returning new states, so one
tracker per stream is safe on any thread.
"""

import math
from dataclasses import dataclass

import numpy as np

_H = np.array([[1.0, 0.0, 0.0, 0.0],
               [0.0, 1.0, 0.0, 0.0]])
_I4 = np.eye(4)

INITIAL_VELOCITY_VAR = 1e6  # units^2/s^2, wide prior before the 2nd sample


@dataclass(frozen=True)
class NoiseConfig:
    q: float = 50.0  # process-noise spectral density, units^2/s^3
    r: float = 1.0   # measurement variance, units^2

    def __post_init__(self):
        if self.q < 0 or self.r < 0:
            raise ValueError("noise parameters must be non-negative")


@dataclass(frozen=True)
class KalmanState:
    x: np.ndarray      # (4,) position and velocity
    P: np.ndarray      # (4, 4) covariance
    t_last: float


@dataclass(frozen=True)
class TrackPoint:
    t: float
    x: float
    y: float
    roi: tuple  # (x_min, y_min, x_max, y_max) predicted 3-sigma search box


@dataclass(frozen=True)
class HeadPose:
    tilt_deg: float
    frustration_flag: bool = False


def kalman_init(z, t: float, cfg: NoiseConfig,
                velocity_var: float = INITIAL_VELOCITY_VAR) -> KalmanState:
    """Seed a tracker from its first measurement (zero velocity prior)."""
    zx, zy = float(z[0]), float(z[1])
    x = np.array([zx, zy, 0.0, 0.0])
    P = np.diag([cfg.r, cfg.r, velocity_var, velocity_var])
    return KalmanState(x=x, P=P, t_last=float(t))


def _transition(dt):
    F = _I4.copy()
    F[0, 2] = dt
    F[1, 3] = dt
    return F


def _process_noise(dt, q):
    a = q * dt ** 3 / 3.0
    b = q * dt ** 2 / 2.0
    c = q * dt
    Q = np.zeros((4, 4))
    Q[0, 0] = Q[1, 1] = a
    Q[0, 2] = Q[2, 0] = Q[1, 3] = Q[3, 1] = b
    Q[2, 2] = Q[3, 3] = c
    return Q


def kalman_predict(s: KalmanState, dt: float, cfg: NoiseConfig) -> KalmanState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = _transition(dt)
    x = F @ s.x
    P = F @ s.P @ F.T + _process_noise(dt, cfg.q)
    P = 0.5 * (P + P.T)
    return KalmanState(x=x, P=P, t_last=s.t_last + dt)


def kalman_update(s: KalmanState, z, cfg: NoiseConfig) -> KalmanState:
    zv = np.array([float(z[0]), float(z[1])])
    if not np.all(np.isfinite(zv)):
        raise ValueError("measurement must be finite")
    R = cfg.r * np.eye(2)
    S = _H @ s.P @ _H.T + R
    # 2x2 symmetric; bail out before numpy divides by ~0
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if abs(det) < 1e-300:
        raise ValueError("singular innovation covariance (r=0 with degenerate P)")
    K = s.P @ _H.T @ np.linalg.inv(S)
    x = s.x + K @ (zv - _H @ s.x)
    ImKH = _I4 - K @ _H
    P = ImKH @ s.P @ ImKH.T + K @ R @ K.T  # Joseph form keeps P PSD
    P = 0.5 * (P + P.T)
    return KalmanState(x=x, P=P, t_last=s.t_last)


def track(points, cfg: NoiseConfig = NoiseConfig()):
    """Filter timestamped (t, x, y) measurements into a smoothed trajectory.

    Returns one TrackPoint per measurement; the ROI is the +-3 sigma box of
    the *predicted* position for that step (the search region a detector
    would scan next).
    """
    out = []
    state = None
    prev_t = None
    for t, zx, zy in points:
        t = float(t)
        if prev_t is not None and t <= prev_t:
            raise ValueError("timestamps must be strictly increasing")
        prev_t = t
        if state is None:
            state = kalman_init((zx, zy), t, cfg)
            pred = state
        else:
            pred = kalman_predict(state, t - state.t_last, cfg)
            state = kalman_update(pred, (zx, zy), cfg)
        sx = math.sqrt(max(pred.P[0, 0], 0.0))
        sy = math.sqrt(max(pred.P[1, 1], 0.0))
        roi = (pred.x[0] - 3.0 * sx, pred.x[1] - 3.0 * sy,
               pred.x[0] + 3.0 * sx, pred.x[1] + 3.0 * sy)
        out.append(TrackPoint(t=t, x=float(state.x[0]), y=float(state.x[1]),
                              roi=roi))
    return out


def estimate_iris_center(img) -> tuple:
    """Sub-pixel iris estimate: centroid of the inverted intensities.

    Dark mass attracts the estimate; an image with no dark mass at all
    (uniform white) falls back to the geometric centre, which is also what
    any uniform image yields.
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("expected a non-empty 2-D grayscale crop")
    h, w = a.shape
    weights = 255.0 - a
    total = weights.sum()
    if total <= 0:
        return ((w - 1) / 2.0, (h - 1) / 2.0)
    ys, xs = np.mgrid[0:h, 0:w]
    cx = float((weights * xs).sum() / total)
    cy = float((weights * ys).sum() / total)
    return (cx, cy)


def head_tilt(left_corner, right_corner) -> float:
    """In-plane roll of the eye-corner baseline, in (-90, 90] degrees."""
    dx = float(right_corner[0]) - float(left_corner[0])
    dy = float(right_corner[1]) - float(left_corner[1])
    if dx == 0.0 and dy == 0.0:
        raise ValueError("eye corners are coincident")
    angle = math.degrees(math.atan2(dy, dx))
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0
    return angle


def head_pose(left_corner, right_corner,
              tilt_thresh_deg: float = 15.0) -> HeadPose:
    """Tilt plus an instantaneous over-threshold flag for this frame."""
    tilt = head_tilt(left_corner, right_corner)
    return HeadPose(tilt_deg=tilt, frustration_flag=abs(tilt) > tilt_thresh_deg)


def deroll(points, tilt_deg: float) -> np.ndarray:
    """Rotate a landmark set by -tilt about the midpoint of its first two
    points (the eye corners), levelling the eye baseline."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("expected an (n, 2) point set with n >= 2")
    center = 0.5 * (pts[0] + pts[1])
    rad = math.radians(-tilt_deg)
    c, s = math.cos(rad), math.sin(rad)
    rot = np.array([[c, -s], [s, c]])
    return center + (pts - center) @ rot.T


def _collinear(p, q, r, eps=1e-9):
    area = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    scale = max(abs(q[0] - p[0]), abs(q[1] - p[1]),
                abs(r[0] - p[0]), abs(r[1] - p[1]), 1.0)
    return abs(area) <= eps * scale * scale


def solve_homography(src, dst) -> np.ndarray:
    """Exact 8-DOF homography from four point correspondences (DLT).

    The matrix is normalised so H[2,2] == 1 whenever that entry is nonzero.
    Raises on degenerate configurations (three collinear source or
    destination points, or a non-invertible result).
    """
    s = np.asarray(src, dtype=np.float64)
    d = np.asarray(dst, dtype=np.float64)
    if s.shape != (4, 2) or d.shape != (4, 2):
        raise ValueError("need exactly four (x, y) points on each side")
    for pts in (s, d):
        for i in range(4):
            for j in range(i + 1, 4):
                for k in range(j + 1, 4):
                    if _collinear(pts[i], pts[j], pts[k]):
                        raise ValueError("degenerate configuration: collinear points")
    a = np.zeros((8, 9))
    for i in range(4):
        x, y = s[i]
        u, v = d[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-12:
        raise ValueError("degenerate configuration: singular homography")
    return h


def apply_homography(H, points) -> np.ndarray:
    """Map (n, 2) points through a homography (projective division)."""
    h = np.asarray(H, dtype=np.float64)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ones = np.ones((pts.shape[0], 1))
    hom = np.hstack([pts, ones]) @ h.T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise ValueError("point maps to infinity under this homography")
    return hom[:, :2] / w[:, None]

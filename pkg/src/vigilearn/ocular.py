"""Eye-state classification, PERCLOS windowing, and saccade analysis.

PERCLOS here is the fraction of frames within a sliding window whose eyes
are closed (frames are weighted equally, which matches time fraction under a
near-uniform frame rate).  Saccades are detected as supra-threshold bursts
of gaze speed with onset/offset hysteresis; the saccadic ratio of a burst is
its peak speed divided by its duration.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

PERCLOS_THRESHOLD = 0.15
DEFAULT_WINDOW_S = 180.0
DEFAULT_OVERLAP = 2.0 / 3.0
DEFAULT_V_ON = 100.0   # deg/s, event-opening speed
DEFAULT_V_OFF = 40.0   # deg/s, event-closing speed
DEFAULT_TAU_SR = 5000.0  # deg/s^2, attention split on mean saccadic ratio


class EyeState(Enum):
    OPEN = "open"
    CLOSED = "closed"


class Alertness(Enum):
    ALERT = "alert"
    DROWSY = "drowsy"


class Attention(Enum):
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class EyeClassification:
    """Decision plus signed margin; OPEN exactly when score > 0."""

    state: EyeState
    score: float


@dataclass(frozen=True)
class LinearEyeModel:
    weights: np.ndarray
    bias: float
    epochs: int
    final_hinge_loss: float


def _hinge_objective(w, b, x, y, lam):
    margins = y * (x @ w + b)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)) + 0.5 * lam * (w @ w))


def train_eye_model(labeled, lam: float = 1e-4, epochs: int = 100) -> LinearEyeModel:
    """Fit a linear max-margin open/closed classifier.

    Regularised hinge loss minimised by per-sample subgradient descent with
    step 1/(lam*t); samples are visited in input order so training is
    deterministic.  The epoch snapshot with the fewest training errors
    (ties broken by lower objective) is returned.
    """
    states = []
    rows = []
    for state, vec in labeled:
        states.append(state)
        rows.append(np.asarray(vec, dtype=np.float64))
    if not rows:
        raise ValueError("no training samples")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise ValueError("inconsistent feature dimensions")
    x = np.array(rows)
    y = np.array([1.0 if s is EyeState.OPEN else -1.0 for s in states])
    if len(set(y)) < 2:
        raise ValueError("training data must contain both open and closed samples")

    n, d = x.shape
    # The bias rides along as a constant feature so the 1/(lam*t) step
    # schedule cannot kick it around unregularised.
    xa = np.hstack([x, np.ones((n, 1))])
    u = np.zeros(d + 1)
    best = None  # (errors, objective, u)
    t = 0
    for _ in range(epochs):
        for i in range(n):
            t += 1
            eta = 1.0 / (lam * t)
            violated = y[i] * (xa[i] @ u) < 1.0
            u *= 1.0 - eta * lam
            if violated:
                u += eta * y[i] * xa[i]
        errors = int(np.sum(y * (xa @ u) <= 0.0))
        obj = _hinge_objective(u[:d], u[d], x, y, lam)
        if best is None or (errors, obj) < (best[0], best[1]):
            best = (errors, obj, u.copy())
    return LinearEyeModel(weights=best[2][:d], bias=float(best[2][d]),
                          epochs=epochs, final_hinge_loss=best[1])


def classify_eye_state(model: LinearEyeModel, v) -> EyeClassification:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != model.weights.shape:
        raise ValueError(
            f"dimension mismatch: vector {a.shape}, model {model.weights.shape}")
    score = float(model.weights @ a + model.bias)
    state = EyeState.OPEN if score > 0.0 else EyeState.CLOSED
    return EyeClassification(state=state, score=score)


def window_plan(session_length: float, window_s: float = DEFAULT_WINDOW_S,
                overlap_fraction: float = DEFAULT_OVERLAP):
    """Start/end times of the overlapping analysis windows.

    Only windows fully contained in [0, session_length] are emitted.  The
    stride is rounded to nanoseconds so fractional overlaps such as 2/3
    still produce exact starts (180 s and 2/3 give strides of exactly 60 s).
    """
    if window_s <= 0:
        raise ValueError("window length must be positive")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap fraction must be in [0, 1)")
    stride = round(window_s * (1.0 - overlap_fraction), 9)
    windows = []
    i = 0
    while True:
        start = i * stride
        end = start + window_s
        if end > session_length + 1e-9:
            break
        windows.append((start, end))
        i += 1
    return windows


def classify_alertness(perclos_value: float,
                       threshold: float = PERCLOS_THRESHOLD) -> Alertness:
    """Drowsy strictly above the threshold; exactly at it is still alert."""
    return Alertness.DROWSY if perclos_value > threshold else Alertness.ALERT


@dataclass(frozen=True)
class WindowStats:
    window_start: float
    window_end: float
    frames_total: int
    frames_closed: int
    perclos: float
    alertness: Alertness


def perclos(states, start: float, end: float,
            threshold: float = PERCLOS_THRESHOLD) -> WindowStats:
    """Closed-frame fraction over frames with start <= t < end.

    ``states`` is a sequence of (t_seconds, EyeState) with strictly
    increasing timestamps.
    """
    total = 0
    closed = 0
    prev_t = None
    for t, state in states:
        if prev_t is not None and t <= prev_t:
            raise ValueError("timestamps must be strictly increasing")
        prev_t = t
        if start <= t < end:
            total += 1
            if state is EyeState.CLOSED:
                closed += 1
    if total == 0:
        raise ValueError(f"no frames in window [{start}, {end})")
    frac = closed / total
    return WindowStats(window_start=start, window_end=end, frames_total=total,
                       frames_closed=closed, perclos=frac,
                       alertness=classify_alertness(frac, threshold))


@dataclass(frozen=True)
class SaccadeEvent:
    onset: float
    offset: float
    duration: float
    peak_velocity: float
    sr: float  # peak_velocity / duration


def detect_saccades(track, v_on: float = DEFAULT_V_ON,
                    v_off: float = DEFAULT_V_OFF):
    """Detect saccades on a smoothed (t, x_deg, y_deg) gaze track.

    Speed is the magnitude of the central-difference velocity, so the first
    and last samples carry no speed estimate.  An event opens at the first
    sample whose speed reaches v_on and closes at the first later sample
    whose speed drops below v_off; its offset is that closing sample's time.
    Events still open at the end of the track are discarded.
    """
    pts = [(float(t), float(x), float(y)) for t, x, y in track]
    if len(pts) < 3:
        raise ValueError("need at least 3 track samples")
    if not v_on >= v_off > 0:
        raise ValueError("thresholds must satisfy v_on >= v_off > 0")
    ts = np.array([p[0] for p in pts])
    xs = np.array([p[1] for p in pts])
    ys = np.array([p[2] for p in pts])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    dt2 = ts[2:] - ts[:-2]
    vx = (xs[2:] - xs[:-2]) / dt2
    vy = (ys[2:] - ys[:-2]) / dt2
    speed = np.hypot(vx, vy)  # speed[i] belongs to sample i+1
    times = ts[1:-1]

    events = []
    open_idx = None
    for i in range(speed.shape[0]):
        if open_idx is None:
            if speed[i] >= v_on:
                open_idx = i
        elif speed[i] < v_off:
            onset = float(times[open_idx])
            offset = float(times[i])
            peak = float(speed[open_idx:i].max())
            duration = offset - onset
            events.append(SaccadeEvent(onset=onset, offset=offset,
                                       duration=duration, peak_velocity=peak,
                                       sr=peak / duration))
            open_idx = None
    return events


@dataclass(frozen=True)
class AttentionLevel:
    level: Attention
    mean_sr: float
    saccade_count: int


def attention_level(events, tau_sr: float = DEFAULT_TAU_SR,
                    window=None) -> AttentionLevel:
    """Attention split on the mean saccadic ratio of the window's saccades.

    High when at least one saccade occurred and the mean ratio is >= tau_sr
    (the boundary itself counts as high); Low otherwise, including when the
    window holds no saccades at all.
    """
    if window is not None:
        start, end = window
        events = [e for e in events if start <= e.onset < end]
    count = len(events)
    mean_sr = float(np.mean([e.sr for e in events])) if count else 0.0
    level = Attention.HIGH if count >= 1 and mean_sr >= tau_sr else Attention.LOW
    return AttentionLevel(level=level, mean_sr=mean_sr, saccade_count=count)


def saccade_speed_profile(peak: float, duration: float, t: float) -> float:
    """Triangular speed profile used by the synthetic session generator."""
    if t <= 0 or t >= duration:
        return 0.0
    half = duration / 2.0
    return peak * (1.0 - abs(t - half) / half)


def saccade_displacement(peak: float, duration: float, t: float) -> float:
    """Integral of the triangular profile from 0 to t (closed form)."""
    half = duration / 2.0
    if t <= 0:
        return 0.0
    if t >= duration:
        return peak * half  # total area of the triangle
    if t <= half:
        return 0.5 * peak * t * t / half
    tail = duration - t
    return peak * half - 0.5 * peak * tail * tail / half

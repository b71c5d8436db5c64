"""Session plumbing: frame-stream format, configuration, profile store,
synthetic session generation, replay, and scoring.

File formats
------------
Frame stream (JSON lines).  The first line is a header::

    {"format": 1, "mode": "measurements"|"pixels", "session_id": "...",
     "user_id": "..."?}

Each following line is one frame.  Measurement mode::

    {"t_ms": 0, "iris_xy": [x_deg, y_deg],
     "eye_corners": [[x, y], [x, y]], "eye_state": "open"|"closed"?}

Pixel mode::

    {"t_ms": 0, "eye_crop_left": IMG?, "eye_crop_right": IMG?,
     "face_crop": IMG?}

where IMG is {"ref": "relative/path.pgm"} or
{"hex": "<row-major bytes>", "w": W, "h": H}.  Timestamps are integer
milliseconds and must be strictly increasing.

Event log (JSON lines).  One leading {"type": "session"} metadata record
carrying the session id, then records
{"t_s": seconds, "type": "window"|"saccade"|"state"|"feedback",
"payload": {...}} sorted by time (ties resolved in that type order).

Profiles.  One JSON record per user id under the profiles directory,
tagged with "format": 1; it holds the PCA basis, the six emotion templates,
the block-grid shapes the features were extracted with, and optionally a
trained open/closed eye model.
"""

import json
import math
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fusion as fusion_mod
from .emotion import (EmotionLabel, UserProfile, classify_emotion,
                      register_user)
from .errors import (DataError, FrameParseError, ProfileError, ScenarioError,
                     SessionMismatchError, UnknownUserError)
from .features import PcaModel, image_features
from .fusion import (CognitiveState, FeedbackEvent, FeedbackKind,
                     FusionConfig, feedback_policy, fuse)
from .ocular import (Alertness, Attention, AttentionLevel, EyeState,
                     LinearEyeModel, SaccadeEvent, WindowStats,
                     attention_level, classify_eye_state, detect_saccades,
                     perclos, saccade_displacement, train_eye_model,
                     window_plan)
from .tracking import NoiseConfig, estimate_iris_center, head_pose, track

FRAME_FORMAT = 1
PROFILE_FORMAT = 1
TRUTH_FORMAT = 1

MODE_MEASUREMENTS = "measurements"
MODE_PIXELS = "pixels"

_USER_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")

# ---------------------------------------------------------------------------
# JSON helpers


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Images


def write_pgm(path, img):
    """Write a grayscale array as a binary PGM (P5) file."""
    a = np.asarray(img)
    data = np.clip(np.rint(a), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise DataError(f"{path}: not a binary 8-bit PGM file")
    w, h = int(parts[1]), int(parts[2])
    pixels = parts[4][:w * h]
    if len(pixels) != w * h:
        raise DataError(f"{path}: truncated PGM payload")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


@dataclass(frozen=True)
class ImagePayload:
    """A pixel payload: either a file reference or inline hex bytes."""

    ref: str | None = None
    hex_data: str | None = None
    width: int | None = None
    height: int | None = None

    @classmethod
    def from_json(cls, obj, field_name, line_no=None):
        if not isinstance(obj, dict):
            raise FrameParseError("image payload must be an object",
                                  line_no=line_no, field=field_name)
        if "ref" in obj:
            if not isinstance(obj["ref"], str):
                raise FrameParseError("ref must be a path string",
                                      line_no=line_no, field=field_name)
            return cls(ref=obj["ref"])
        if "hex" in obj:
            w, h = obj.get("w"), obj.get("h")
            if not (isinstance(obj["hex"], str) and isinstance(w, int)
                    and isinstance(h, int) and w > 0 and h > 0):
                raise FrameParseError("inline image needs hex, w and h",
                                      line_no=line_no, field=field_name)
            if len(obj["hex"]) != 2 * w * h:
                raise FrameParseError("hex length does not match w*h",
                                      line_no=line_no, field=field_name)
            return cls(hex_data=obj["hex"], width=w, height=h)
        raise FrameParseError("image payload needs 'ref' or 'hex'",
                              line_no=line_no, field=field_name)

    def to_json(self):
        if self.ref is not None:
            return {"ref": self.ref}
        return {"hex": self.hex_data, "w": self.width, "h": self.height}

    def load(self, base_dir) -> np.ndarray:
        if self.ref is not None:
            return read_pgm(Path(base_dir) / self.ref)
        data = bytes.fromhex(self.hex_data)
        return np.frombuffer(data, dtype=np.uint8).reshape(self.height,
                                                           self.width)

    @classmethod
    def inline(cls, img):
        a = np.clip(np.rint(np.asarray(img)), 0, 255).astype(np.uint8)
        h, w = a.shape
        return cls(hex_data=a.tobytes().hex(), width=w, height=h)


# ---------------------------------------------------------------------------
# Frame records


@dataclass(frozen=True)
class SessionHeader:
    mode: str
    session_id: str
    user_id: str | None = None

    def to_json(self):
        obj = {"format": FRAME_FORMAT, "mode": self.mode,
               "session_id": self.session_id}
        if self.user_id is not None:
            obj["user_id"] = self.user_id
        return obj


@dataclass(frozen=True)
class FrameObservation:
    t_ms: int
    user_id: str | None = None
    eye_state: EyeState | None = None
    iris_xy: tuple | None = None
    eye_corners: tuple | None = None
    face_crop: ImagePayload | None = None
    eye_crop_left: ImagePayload | None = None
    eye_crop_right: ImagePayload | None = None

    @property
    def t_s(self) -> float:
        return self.t_ms / 1000.0


_MEASUREMENT_FIELDS = {"t_ms", "user_id", "eye_state", "iris_xy", "eye_corners"}
_PIXEL_FIELDS = {"t_ms", "user_id", "face_crop", "eye_crop_left",
                 "eye_crop_right"}


def _parse_point(obj, key, line_no):
    v = obj[key]
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                       for c in v)):
        raise FrameParseError("expected [x, y]", line_no=line_no, field=key)
    return (float(v[0]), float(v[1]))


def parse_frame_record(line: str, mode: str, line_no=None) -> FrameObservation:
    """Parse and validate one frame line for the given session mode."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameParseError(f"malformed record: {exc}", line_no=line_no)
    if not isinstance(obj, dict):
        raise FrameParseError("record must be a JSON object", line_no=line_no)

    allowed = _MEASUREMENT_FIELDS if mode == MODE_MEASUREMENTS else _PIXEL_FIELDS
    for key in obj:
        if key not in allowed:
            raise FrameParseError(f"not a {mode}-mode field",
                                  line_no=line_no, field=key)
    if "t_ms" not in obj:
        raise FrameParseError("missing required field", line_no=line_no,
                              field="t_ms")
    t_ms = obj["t_ms"]
    if not isinstance(t_ms, int) or isinstance(t_ms, bool):
        raise FrameParseError("t_ms must be an integer millisecond count",
                              line_no=line_no, field="t_ms")
    user_id = obj.get("user_id")
    if user_id is not None and not isinstance(user_id, str):
        raise FrameParseError("user_id must be a string", line_no=line_no,
                              field="user_id")

    if mode == MODE_MEASUREMENTS:
        for req in ("iris_xy", "eye_corners"):
            if req not in obj:
                raise FrameParseError("missing required field",
                                      line_no=line_no, field=req)
        iris = _parse_point(obj, "iris_xy", line_no)
        corners_raw = obj["eye_corners"]
        if not isinstance(corners_raw, (list, tuple)) or len(corners_raw) != 2:
            raise FrameParseError("expected [[x,y],[x,y]]", line_no=line_no,
                                  field="eye_corners")
        corners = (_parse_point({"p": corners_raw[0]}, "p", line_no),
                   _parse_point({"p": corners_raw[1]}, "p", line_no))
        state = None
        if "eye_state" in obj:
            raw = obj["eye_state"]
            if raw not in ("open", "closed"):
                raise FrameParseError("eye_state must be 'open' or 'closed'",
                                      line_no=line_no, field="eye_state")
            state = EyeState(raw)
        return FrameObservation(t_ms=t_ms, user_id=user_id, eye_state=state,
                                iris_xy=iris, eye_corners=corners)

    crops = {}
    for key in ("face_crop", "eye_crop_left", "eye_crop_right"):
        if key in obj:
            crops[key] = ImagePayload.from_json(obj[key], key, line_no)
    if "eye_crop_left" not in crops and "eye_crop_right" not in crops:
        raise FrameParseError("pixel-mode record needs at least one eye crop",
                              line_no=line_no, field="eye_crop_left")
    return FrameObservation(t_ms=t_ms, user_id=user_id,
                            face_crop=crops.get("face_crop"),
                            eye_crop_left=crops.get("eye_crop_left"),
                            eye_crop_right=crops.get("eye_crop_right"))


def serialize_frame(obs: FrameObservation) -> dict:
    obj = {"t_ms": obs.t_ms}
    if obs.user_id is not None:
        obj["user_id"] = obs.user_id
    if obs.eye_state is not None:
        obj["eye_state"] = obs.eye_state.value
    if obs.iris_xy is not None:
        obj["iris_xy"] = list(obs.iris_xy)
    if obs.eye_corners is not None:
        obj["eye_corners"] = [list(obs.eye_corners[0]),
                              list(obs.eye_corners[1])]
    for key in ("face_crop", "eye_crop_left", "eye_crop_right"):
        payload = getattr(obs, key)
        if payload is not None:
            obj[key] = payload.to_json()
    return obj


def parse_frame_stream(path):
    """Read a frame file; returns (SessionHeader, [FrameObservation])."""
    header = None
    frames = []
    prev_t = None
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if header is None:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FrameParseError(f"malformed header: {exc}",
                                          line_no=line_no)
                if not isinstance(obj, dict) or "mode" not in obj:
                    raise FrameParseError("first record must be a header "
                                          "with a 'mode' field",
                                          line_no=line_no)
                if obj.get("format") != FRAME_FORMAT:
                    raise FrameParseError(
                        f"unsupported format {obj.get('format')!r}",
                        line_no=line_no, field="format")
                if obj["mode"] not in (MODE_MEASUREMENTS, MODE_PIXELS):
                    raise FrameParseError("mode must be 'measurements' or "
                                          "'pixels'", line_no=line_no,
                                          field="mode")
                session_id = obj.get("session_id")
                if not isinstance(session_id, str) or not session_id:
                    raise FrameParseError("header needs a session_id string",
                                          line_no=line_no, field="session_id")
                header = SessionHeader(mode=obj["mode"], session_id=session_id,
                                       user_id=obj.get("user_id"))
                continue
            obs = parse_frame_record(line, header.mode, line_no=line_no)
            if prev_t is not None and obs.t_ms <= prev_t:
                raise FrameParseError(
                    f"t_ms {obs.t_ms} not greater than previous {prev_t}",
                    line_no=line_no, field="t_ms")
            prev_t = obs.t_ms
            frames.append(obs)
    if header is None:
        raise FrameParseError("file has no header record", line_no=1)
    return header, frames


def write_frame_stream(path, header: SessionHeader, frames):
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dumps(header.to_json()) + "\n")
        for obs in frames:
            f.write(_dumps(serialize_frame(obs)) + "\n")


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SessionConfig:
    mode: str = MODE_MEASUREMENTS
    window_s: float = 180.0
    overlap: float = 2.0 / 3.0
    perclos_threshold: float = 0.15
    v_on: float = 100.0
    v_off: float = 40.0
    tau_sr: float = 5000.0
    tilt_thresh_deg: float = 15.0
    sustain_s: float = 10.0
    cooldowns: dict = field(default_factory=lambda: {
        kind.value: seconds
        for kind, seconds in fusion_mod.DEFAULT_COOLDOWNS_S.items()})
    rng_seed: int = 0
    frame_rate: float = 30.0
    saccade_frame_rate: float = 300.0
    kalman_q: float = 50.0
    kalman_r: float = 1.0
    smooth_iris: bool = True
    alarm_on_low_attention: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_MEASUREMENTS, MODE_PIXELS):
            raise DataError(f"unknown mode {self.mode!r}")
        if self.window_s <= 0 or not 0.0 <= self.overlap < 1.0:
            raise DataError("window_s must be positive and overlap in [0, 1)")
        for name in ("perclos_threshold", "v_on", "v_off", "tau_sr",
                     "tilt_thresh_deg", "sustain_s", "frame_rate",
                     "saccade_frame_rate"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        for kind in FeedbackKind:
            if self.cooldowns.get(kind.value, -1.0) < 0:
                raise DataError(f"missing or negative cooldown for "
                                f"{kind.value}")

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            sustain_s=self.sustain_s,
            cooldowns={kind: float(self.cooldowns[kind.value])
                       for kind in FeedbackKind},
            alarm_on_low_attention=self.alarm_on_low_attention)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(q=self.kalman_q, r=self.kalman_r)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "window_s": self.window_s,
            "overlap": self.overlap,
            "perclos_threshold": self.perclos_threshold,
            "v_on": self.v_on, "v_off": self.v_off, "tau_sr": self.tau_sr,
            "tilt_thresh_deg": self.tilt_thresh_deg,
            "sustain_s": self.sustain_s, "cooldowns": dict(self.cooldowns),
            "rng_seed": self.rng_seed, "frame_rate": self.frame_rate,
            "saccade_frame_rate": self.saccade_frame_rate,
            "kalman_q": self.kalman_q, "kalman_r": self.kalman_r,
            "smooth_iris": self.smooth_iris,
            "alarm_on_low_attention": self.alarm_on_low_attention,
        }

    @classmethod
    def from_dict(cls, obj) -> "SessionConfig":
        if not isinstance(obj, dict):
            raise DataError("config must be a JSON object")
        known = set(cls().to_dict())
        unknown = sorted(set(obj) - known)
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(unknown)}")
        merged = cls().to_dict()
        merged.update(obj)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise DataError(f"bad config value: {exc}") from exc

    def with_overrides(self, overrides: dict) -> "SessionConfig":
        merged = self.to_dict()
        unknown = sorted(set(overrides) - set(merged))
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(overrides)
        return SessionConfig.from_dict(merged)


def load_config(path) -> SessionConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed config: {exc}") from exc
    return SessionConfig.from_dict(obj)


# ---------------------------------------------------------------------------
# Profile store


@dataclass(frozen=True)
class UserRecord:
    """Everything stored for one registered user."""

    profile: UserProfile
    eye_model: LinearEyeModel | None = None
    face_grid: tuple = (7, 7)
    eye_grid: tuple = (3, 3)


_store_guard = threading.Lock()
_user_locks: dict = {}


def _user_lock(profiles_dir, user_id):
    key = (str(Path(profiles_dir).resolve()), user_id)
    with _store_guard:
        lock = _user_locks.get(key)
        if lock is None:
            lock = _user_locks[key] = threading.Lock()
    return lock


def _profile_path(profiles_dir, user_id) -> Path:
    if not _USER_ID_RE.match(user_id):
        raise ProfileError(f"invalid user id {user_id!r} "
                           "(letters, digits, '.', '_', '-' only)")
    return Path(profiles_dir) / f"{user_id}.json"


def store_profile(profile: UserProfile, profiles_dir, eye_model=None,
                  face_grid=(7, 7), eye_grid=(3, 3)) -> Path:
    """Atomically write a user record; returns the record path."""
    path = _profile_path(profiles_dir, profile.user_id)
    obj = {
        "format": PROFILE_FORMAT,
        "user_id": profile.user_id,
        "pca": {
            "mean": profile.pca.mean.tolist(),
            "components": profile.pca.components.tolist(),
            "variances": profile.pca.variances.tolist(),
            "k": profile.pca.k,
        },
        "templates": {label.value: profile.templates[label].tolist()
                      for label in EmotionLabel},
        "sample_counts": {label.value: profile.sample_counts[label]
                          for label in EmotionLabel},
        "face_grid": list(face_grid),
        "eye_grid": list(eye_grid),
        "eye_model": None if eye_model is None else {
            "weights": eye_model.weights.tolist(),
            "bias": eye_model.bias,
            "epochs": eye_model.epochs,
            "final_hinge_loss": eye_model.final_hinge_loss,
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with _user_lock(profiles_dir, profile.user_id):
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(_dumps(obj))
        os.replace(tmp, path)
    return path


def load_user_record(user_id: str, profiles_dir) -> UserRecord:
    path = _profile_path(profiles_dir, user_id)
    if not path.exists():
        raise UnknownUserError(f"no profile stored for user {user_id!r}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: corrupt record: {exc}") from exc
    try:
        if obj["format"] != PROFILE_FORMAT:
            raise ProfileError(f"{path}: unsupported format {obj['format']!r}")
        pca = PcaModel(mean=np.array(obj["pca"]["mean"], dtype=np.float64),
                       components=np.array(obj["pca"]["components"],
                                           dtype=np.float64),
                       variances=np.array(obj["pca"]["variances"],
                                          dtype=np.float64),
                       k=int(obj["pca"]["k"]))
        templates = {}
        counts = {}
        for label in EmotionLabel:
            vec = np.array(obj["templates"][label.value], dtype=np.float64)
            if vec.shape != (pca.k,):
                raise ProfileError(f"{path}: template for {label.value} has "
                                   f"length {vec.shape[0]}, expected {pca.k}")
            templates[label] = vec
            counts[label] = int(obj["sample_counts"][label.value])
        profile = UserProfile(user_id=obj["user_id"], pca=pca,
                              templates=templates, sample_counts=counts)
        eye_model = None
        if obj.get("eye_model") is not None:
            em = obj["eye_model"]
            eye_model = LinearEyeModel(
                weights=np.array(em["weights"], dtype=np.float64),
                bias=float(em["bias"]), epochs=int(em["epochs"]),
                final_hinge_loss=float(em["final_hinge_loss"]))
        return UserRecord(profile=profile, eye_model=eye_model,
                          face_grid=tuple(obj["face_grid"]),
                          eye_grid=tuple(obj["eye_grid"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileError(f"{path}: corrupt record: {exc}") from exc


def load_profile(user_id: str, profiles_dir) -> UserProfile:
    return load_user_record(user_id, profiles_dir).profile


def register_from_manifest(user_id: str, manifest_path, profiles_dir,
                           k: int = 32, face_grid=(7, 7), eye_grid=(3, 3),
                           lam: float = 1e-4, epochs: int = 100) -> UserRecord:
    """Build and store a user record from a labelled crop manifest.

    Manifest lines are {"emotion": <label>, "image": IMG} or
    {"eye_state": "open"|"closed", "image": IMG}; file references are
    resolved relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    base_dir = manifest_path.parent
    emotion_samples = []
    eye_samples = []
    with open(manifest_path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{manifest_path}:{line_no}: malformed "
                                f"manifest line: {exc}") from exc
            if not isinstance(obj, dict) or "image" not in obj:
                raise DataError(f"{manifest_path}:{line_no}: manifest lines "
                                "need an 'image' field")
            img = ImagePayload.from_json(obj["image"], "image",
                                         line_no).load(base_dir)
            if "emotion" in obj:
                try:
                    label = EmotionLabel(obj["emotion"])
                except ValueError as exc:
                    raise DataError(f"{manifest_path}:{line_no}: unknown "
                                    f"emotion {obj['emotion']!r}") from exc
                emotion_samples.append(
                    (label, image_features(img, *face_grid)))
            elif "eye_state" in obj:
                if obj["eye_state"] not in ("open", "closed"):
                    raise DataError(f"{manifest_path}:{line_no}: eye_state "
                                    "must be 'open' or 'closed'")
                eye_samples.append((EyeState(obj["eye_state"]),
                                    image_features(img, *eye_grid)))
            else:
                raise DataError(f"{manifest_path}:{line_no}: manifest lines "
                                "need 'emotion' or 'eye_state'")
    try:
        profile = register_user(user_id, emotion_samples, k=k)
    except ValueError as exc:
        raise DataError(f"{manifest_path}: {exc}") from exc
    eye_model = None
    if eye_samples:
        try:
            eye_model = train_eye_model(eye_samples, lam=lam, epochs=epochs)
        except ValueError as exc:
            raise DataError(f"{manifest_path}: {exc}") from exc
    store_profile(profile, profiles_dir, eye_model=eye_model,
                  face_grid=face_grid, eye_grid=eye_grid)
    return UserRecord(profile=profile, eye_model=eye_model,
                      face_grid=tuple(face_grid), eye_grid=tuple(eye_grid))


# ---------------------------------------------------------------------------
# Scenario specification and synthesis


@dataclass(frozen=True)
class Segment:
    duration_s: float
    alertness: Alertness
    closed_fraction: float
    attention: Attention
    emotion: EmotionLabel | None = None
    tilt_deg: float = 0.0
    saccades_per_s: float = 0.0
    saccade_sr: float = 0.0
    saccade_duration_s: float = 0.04
    iris_noise_deg: float = 0.0
    tilt_noise_deg: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    session_id: str
    segments: tuple
    config_overrides: dict = field(default_factory=dict)


_DEFAULT_CLOSED_FRACTION = {Alertness.ALERT: 0.05, Alertness.DROWSY: 0.40}
# Default saccade scripting per attention label: (rate /s, saccadic ratio).
_DEFAULT_SACCADES = {Attention.HIGH: (1.0, 7500.0), Attention.LOW: (0.25, 2000.0)}


def _segment_from_json(obj, index, threshold) -> Segment:
    where = f"segment {index}"
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: must be an object")
    dur = obj.get("duration_s")
    if not isinstance(dur, (int, float)) or isinstance(dur, bool) or dur <= 0:
        raise ScenarioError(f"{where}: duration_s must be a positive number")
    alert_raw = obj.get("alertness")
    cf = obj.get("closed_fraction")
    if cf is not None and not 0.0 <= cf <= 1.0:
        raise ScenarioError(f"{where}: closed_fraction must be in [0, 1]")
    if alert_raw is None and cf is None:
        alertness = Alertness.ALERT
    elif alert_raw is None:
        alertness = Alertness.DROWSY if cf > threshold else Alertness.ALERT
    else:
        try:
            alertness = Alertness(alert_raw)
        except ValueError as exc:
            raise ScenarioError(f"{where}: unknown alertness "
                                f"{alert_raw!r}") from exc
    if cf is None:
        cf = _DEFAULT_CLOSED_FRACTION[alertness]
    derived = Alertness.DROWSY if cf > threshold else Alertness.ALERT
    if derived is not alertness:
        raise ScenarioError(f"{where}: closed_fraction {cf} is inconsistent "
                            f"with alertness '{alertness.value}' at "
                            f"threshold {threshold}")
    att_raw = obj.get("attention", "high")
    try:
        attention = Attention(att_raw)
    except ValueError as exc:
        raise ScenarioError(f"{where}: unknown attention {att_raw!r}") from exc
    emotion = None
    if obj.get("emotion") is not None:
        try:
            emotion = EmotionLabel(obj["emotion"])
        except ValueError as exc:
            raise ScenarioError(f"{where}: unknown emotion "
                                f"{obj['emotion']!r}") from exc
    rate_default, sr_default = _DEFAULT_SACCADES[attention]
    seg = Segment(
        duration_s=float(dur), alertness=alertness, closed_fraction=float(cf),
        attention=attention, emotion=emotion,
        tilt_deg=float(obj.get("tilt_deg", 0.0)),
        saccades_per_s=float(obj.get("saccades_per_s", rate_default)),
        saccade_sr=float(obj.get("saccade_sr", sr_default)),
        saccade_duration_s=float(obj.get("saccade_duration_s", 0.04)),
        iris_noise_deg=float(obj.get("iris_noise_deg", 0.0)),
        tilt_noise_deg=float(obj.get("tilt_noise_deg", 0.0)),
    )
    if seg.saccade_duration_s <= 0 or seg.saccades_per_s < 0:
        raise ScenarioError(f"{where}: saccade parameters must be positive")
    return seg


def load_scenario(path, threshold: float = 0.15) -> ScenarioSpec:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed scenario: {exc}") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("segments"), list):
        raise ScenarioError(f"{path}: scenario needs a 'segments' list")
    session_id = obj.get("session_id", "synthetic")
    if not isinstance(session_id, str) or not session_id:
        raise ScenarioError(f"{path}: session_id must be a non-empty string")
    overrides = obj.get("config", {})
    if not isinstance(overrides, dict):
        raise ScenarioError(f"{path}: 'config' must be an object")
    if "perclos_threshold" in overrides:
        threshold = overrides["perclos_threshold"]
        if not isinstance(threshold, (int, float)) or isinstance(threshold, bool):
            raise ScenarioError(f"{path}: perclos_threshold must be a number")
    segments = tuple(_segment_from_json(seg, i, threshold)
                     for i, seg in enumerate(obj["segments"]))
    if not segments:
        raise ScenarioError(f"{path}: scenario has no segments")
    return ScenarioSpec(session_id=session_id, segments=segments,
                        config_overrides=dict(overrides))


@dataclass(frozen=True)
class SynthResult:
    frames_path: Path
    truth_path: Path
    config: SessionConfig


def synthesize_session(spec: ScenarioSpec, config: SessionConfig,
                       out_dir) -> SynthResult:
    """Generate a measurement-mode frame stream plus its ground truth.

    Output is fully determined by (spec, config): the generator is seeded
    from config.rng_seed, so identical inputs give byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.rng_seed)
    frames = []
    truth_segments = []

    seg_start = 0.0
    x_base = 0.0  # accumulated gaze x after completed saccades
    direction = 1.0
    prev_t_ms = -1
    for seg in spec.segments:
        seg_end = seg_start + seg.duration_s
        rate = (config.saccade_frame_rate if seg.saccades_per_s > 0
                else config.frame_rate)
        n_frames = int(round(seg.duration_s * rate))

        # Schedule this segment's saccades before sampling positions.
        saccades = []
        if seg.saccades_per_s > 0:
            interval = 1.0 / seg.saccades_per_s
            peak = seg.saccade_sr * seg.saccade_duration_s
            onset = seg_start + interval / 2.0
            while onset + seg.saccade_duration_s < seg_end:
                saccades.append({"onset_s": onset,
                                 "duration_s": seg.saccade_duration_s,
                                 "peak_velocity": peak,
                                 "sr": seg.saccade_sr,
                                 "direction": direction})
                direction = -direction
                onset += interval

        for i in range(n_frames):
            t = seg_start + i / rate
            t_ms = int(round(t * 1000.0))
            if t_ms <= prev_t_ms:
                continue  # sub-millisecond rates would alias; drop the frame
            prev_t_ms = t_ms

            # Eye state by integer-accumulator duty cycle: any run of n
            # frames holds within one frame of n*closed_fraction closures.
            closed = (math.floor((i + 1) * seg.closed_fraction)
                      - math.floor(i * seg.closed_fraction)) >= 1

            x = x_base
            for sac in saccades:
                x += sac["direction"] * saccade_displacement(
                    sac["peak_velocity"], sac["duration_s"], t - sac["onset_s"])
            y = 0.0
            if seg.iris_noise_deg > 0:
                x += rng.normal(0.0, seg.iris_noise_deg)
                y += rng.normal(0.0, seg.iris_noise_deg)

            tilt = seg.tilt_deg
            if seg.tilt_noise_deg > 0:
                tilt += rng.normal(0.0, seg.tilt_noise_deg)
            half_dy = 30.0 * math.tan(math.radians(tilt))
            corners = ((-30.0, -half_dy), (30.0, half_dy))

            frames.append(FrameObservation(
                t_ms=t_ms,
                eye_state=EyeState.CLOSED if closed else EyeState.OPEN,
                iris_xy=(x, y), eye_corners=corners))

        for sac in saccades:
            x_base += sac["direction"] * saccade_displacement(
                sac["peak_velocity"], sac["duration_s"], sac["duration_s"])
        truth_segments.append({
            "start_s": seg_start, "end_s": seg_end,
            "alertness": seg.alertness.value,
            "closed_fraction": seg.closed_fraction,
            "attention": seg.attention.value,
            "emotion": None if seg.emotion is None else seg.emotion.value,
            "tilt_deg": seg.tilt_deg,
            "saccades": [{k: v for k, v in sac.items() if k != "direction"}
                         for sac in saccades],
        })
        seg_start = seg_end

    header = SessionHeader(mode=MODE_MEASUREMENTS,
                           session_id=spec.session_id)
    frames_path = out_dir / "frames.jsonl"
    write_frame_stream(frames_path, header, frames)
    truth = {
        "format": TRUTH_FORMAT,
        "session_id": spec.session_id,
        "duration_s": seg_start,
        "perclos_threshold": config.perclos_threshold,
        "segments": truth_segments,
    }
    truth_path = out_dir / "truth.json"
    with open(truth_path, "w", encoding="utf-8") as f:
        f.write(_dumps(truth))
    return SynthResult(frames_path=frames_path, truth_path=truth_path,
                       config=config)


# ---------------------------------------------------------------------------
# Replay


_EVENT_ORDER = {"session": -1, "window": 0, "saccade": 1, "state": 2,
                "feedback": 3}


def _window_payload(stats: WindowStats) -> dict:
    return {"start_s": stats.window_start, "end_s": stats.window_end,
            "frames_total": stats.frames_total,
            "frames_closed": stats.frames_closed,
            "perclos": stats.perclos, "alertness": stats.alertness.value}


def _saccade_payload(ev: SaccadeEvent) -> dict:
    return {"onset_s": ev.onset, "offset_s": ev.offset,
            "duration_s": ev.duration, "peak_velocity": ev.peak_velocity,
            "sr": ev.sr}


def _state_payload(state: CognitiveState) -> dict:
    return {"start_s": state.window_start, "end_s": state.window_end,
            "alertness": state.alertness.value,
            "attention": state.attention.level.value,
            "mean_sr": state.attention.mean_sr,
            "saccade_count": state.attention.saccade_count,
            "emotion": None if state.emotion is None else state.emotion.value,
            "valence": None if state.valence is None else state.valence.value,
            "frustration": state.frustration, "fatigue": state.fatigue}


def _feedback_payload(ev: FeedbackEvent) -> dict:
    return {"kind": ev.kind.value, "cooldown_until_s": ev.cooldown_until,
            "cause": _state_payload(ev.cause)}


@dataclass
class ReplayResult:
    header: SessionHeader
    events: list            # serialised event records, time-ordered
    window_stats: list
    states: list
    feedback: list
    saccades: list

    def event_lines(self):
        return [_dumps(rec) for rec in self.events]

    def write_events(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for line in self.event_lines():
                f.write(line + "\n")


def _pixel_signals(frames, record: UserRecord, base_dir):
    if record.eye_model is None:
        raise DataError("pixel-mode replay needs a stored eye model; "
                        "register the user with open/closed eye crops")
    eye_states = []
    iris_points = []
    emotions = []
    for obs in frames:
        t = obs.t_s
        crops = [c for c in (obs.eye_crop_left, obs.eye_crop_right)
                 if c is not None]
        any_open = False
        for payload in crops:
            img = payload.load(base_dir)
            feats = image_features(img, *record.eye_grid)
            if classify_eye_state(record.eye_model, feats).state is EyeState.OPEN:
                any_open = True
        eye_states.append((t, EyeState.OPEN if any_open else EyeState.CLOSED))
        iris_img = (obs.eye_crop_left or obs.eye_crop_right).load(base_dir)
        cx, cy = estimate_iris_center(iris_img)
        iris_points.append((t, cx, cy))
        if obs.face_crop is not None:
            feats = image_features(obs.face_crop.load(base_dir),
                                   *record.face_grid)
            est = classify_emotion(record.profile, feats)
            emotions.append((t, est.label))
    return eye_states, iris_points, emotions, []


def _measurement_signals(frames, config):
    eye_states = [(obs.t_s, obs.eye_state) for obs in frames
                  if obs.eye_state is not None]
    iris_points = [(obs.t_s, obs.iris_xy[0], obs.iris_xy[1])
                   for obs in frames if obs.iris_xy is not None]
    poses = [(obs.t_s, head_pose(obs.eye_corners[0], obs.eye_corners[1],
                                 config.tilt_thresh_deg))
             for obs in frames if obs.eye_corners is not None]
    return eye_states, iris_points, [], poses


def replay(frames_path, config: SessionConfig,
           profiles_dir=None) -> ReplayResult:
    """Run the full pipeline over a recorded frame stream.

    Deterministic: the result is a pure function of the input bytes and the
    configuration.
    """
    frames_path = Path(frames_path)
    header, frames = parse_frame_stream(frames_path)

    if header.mode == MODE_PIXELS:
        user = header.user_id
        if user is None:
            raise DataError("pixel-mode header needs a user_id")
        if profiles_dir is None:
            raise DataError("pixel-mode replay needs a profiles directory")
        record = load_user_record(user, profiles_dir)
        eye_states, iris_points, emotions, poses = _pixel_signals(
            frames, record, frames_path.parent)
    else:
        eye_states, iris_points, emotions, poses = _measurement_signals(
            frames, config)

    saccades = []
    if len(iris_points) >= 3:
        if config.smooth_iris:
            smoothed = track(iris_points, config.noise_config())
            gaze = [(p.t, p.x, p.y) for p in smoothed]
        else:
            gaze = iris_points
        saccades = detect_saccades(gaze, v_on=config.v_on, v_off=config.v_off)

    window_stats = []
    states = []
    feedback = []
    fcfg = config.fusion_config()
    if frames:
        session_length = frames[-1].t_s
        for start, end in window_plan(session_length, config.window_s,
                                      config.overlap):
            in_window = [(t, s) for t, s in eye_states if start <= t < end]
            if not in_window:
                continue
            stats = perclos(in_window, start, end,
                            threshold=config.perclos_threshold)
            attn = attention_level(saccades, tau_sr=config.tau_sr,
                                   window=(start, end))
            emo = [(t, lb) for t, lb in emotions if start <= t < end]
            pos = [(t, p) for t, p in poses if start <= t < end]
            state = fuse(stats, attn, emo, pos, fcfg)
            ev = feedback_policy(state, feedback, fcfg)
            window_stats.append(stats)
            states.append(state)
            if ev is not None:
                feedback.append(ev)

    records = [{"t_s": 0.0, "type": "session",
                "payload": {"session_id": header.session_id,
                            "mode": header.mode}}]
    body = []
    for stats in window_stats:
        body.append({"t_s": stats.window_end, "type": "window",
                     "payload": _window_payload(stats)})
    for sac in saccades:
        body.append({"t_s": sac.onset, "type": "saccade",
                     "payload": _saccade_payload(sac)})
    for state in states:
        body.append({"t_s": state.window_end, "type": "state",
                     "payload": _state_payload(state)})
    for ev in feedback:
        body.append({"t_s": ev.t, "type": "feedback",
                     "payload": _feedback_payload(ev)})
    body.sort(key=lambda rec: (rec["t_s"], _EVENT_ORDER[rec["type"]]))
    records.extend(body)
    return ReplayResult(header=header, events=records,
                        window_stats=window_stats, states=states,
                        feedback=feedback, saccades=saccades)


# ---------------------------------------------------------------------------
# Scoring


def parse_event_log(path):
    """Read an event log; returns (session_id, [records])."""
    session_id = None
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: malformed event: "
                                f"{exc}") from exc
            if not isinstance(rec, dict) or rec.get("type") not in _EVENT_ORDER:
                raise DataError(f"{path}:{line_no}: not an event record")
            if rec["type"] == "session":
                session_id = rec["payload"]["session_id"]
            else:
                records.append(rec)
    if session_id is None:
        raise DataError(f"{path}: event log has no session record")
    return session_id, records


def load_truth(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed ground truth: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != TRUTH_FORMAT:
        raise DataError(f"{path}: not a ground-truth file")
    return obj


def _coverage_label(truth_segments, start, end, key):
    """Label covering the majority of [start, end); None when nothing does."""
    cover = {}
    for seg in truth_segments:
        overlap = min(end, seg["end_s"]) - max(start, seg["start_s"])
        if overlap > 0 and seg[key] is not None:
            cover[seg[key]] = cover.get(seg[key], 0.0) + overlap
    if not cover:
        return None
    label, amount = max(cover.items(), key=lambda kv: kv[1])
    return label if amount > (end - start) / 2.0 else None


def _confusion_summary(pairs, labels):
    confusion = {t: {p: 0 for p in labels} for t in labels}
    agree = 0
    for truth_label, predicted in pairs:
        confusion[truth_label][predicted] += 1
        if truth_label == predicted:
            agree += 1
    n = len(pairs)
    return {"windows": n, "agreements": agree,
            "accuracy": (agree / n) if n else None, "confusion": confusion}


def score(events_path, truth_path) -> dict:
    """Compare an event log with the ground truth that generated its input."""
    session_id, records = parse_event_log(events_path)
    truth = load_truth(truth_path)
    if truth["session_id"] != session_id:
        raise SessionMismatchError(
            f"event log is for session {session_id!r} but ground truth is "
            f"for {truth['session_id']!r}")
    segments = truth["segments"]

    alert_pairs = []
    attn_pairs = []
    emo_pairs = []
    emo_total = 0
    for rec in records:
        if rec["type"] == "window":
            p = rec["payload"]
            truth_label = _coverage_label(segments, p["start_s"], p["end_s"],
                                          "alertness")
            if truth_label is not None:
                alert_pairs.append((truth_label, p["alertness"]))
        elif rec["type"] == "state":
            p = rec["payload"]
            truth_label = _coverage_label(segments, p["start_s"], p["end_s"],
                                          "attention")
            if truth_label is not None:
                attn_pairs.append((truth_label, p["attention"]))
            emo_truth = _coverage_label(segments, p["start_s"], p["end_s"],
                                        "emotion")
            if emo_truth is not None:
                emo_total += 1
                if p["emotion"] is not None:
                    emo_pairs.append((emo_truth, p["emotion"]))

    alarms = [rec for rec in records if rec["type"] == "feedback"
              and rec["payload"]["kind"] == FeedbackKind.VOICE_ALARM.value]
    first_alarm = alarms[0]["t_s"] if alarms else None
    drowsy_starts = [seg["start_s"] for seg in segments
                     if seg["alertness"] == Alertness.DROWSY.value]
    first_drowsy = min(drowsy_starts) if drowsy_starts else None
    latency = (first_alarm - first_drowsy
               if first_alarm is not None and first_drowsy is not None
               else None)
    false_alarms = 0
    for rec in alarms:
        cause = rec["payload"]["cause"]
        truth_label = _coverage_label(segments, cause["start_s"],
                                      cause["end_s"], "alertness")
        if truth_label != Alertness.DROWSY.value:
            false_alarms += 1

    emotion_report = {
        "windows": emo_total, "scored": len(emo_pairs),
        "agreements": sum(1 for t, p in emo_pairs if t == p),
        "accuracy": (sum(1 for t, p in emo_pairs if t == p) / len(emo_pairs)
                     if emo_pairs else None),
    }
    return {
        "session_id": session_id,
        "alertness": _confusion_summary(
            alert_pairs, [a.value for a in Alertness]),
        "attention": _confusion_summary(
            attn_pairs, [a.value for a in Attention]),
        "emotion": emotion_report,
        "alarm": {"alarms": len(alarms), "first_alarm_s": first_alarm,
                  "first_truth_drowsy_s": first_drowsy,
                  "latency_s": latency, "false_alarms": false_alarms},
    }


__all__ = [
    "FRAME_FORMAT", "PROFILE_FORMAT", "TRUTH_FORMAT",
    "MODE_MEASUREMENTS", "MODE_PIXELS",
    "ImagePayload", "SessionHeader", "FrameObservation",
    "parse_frame_record", "serialize_frame", "parse_frame_stream",
    "write_frame_stream", "write_pgm", "read_pgm",
    "SessionConfig", "load_config",
    "UserRecord", "store_profile", "load_profile", "load_user_record",
    "register_from_manifest",
    "Segment", "ScenarioSpec", "load_scenario", "SynthResult",
    "synthesize_session",
    "ReplayResult", "replay", "parse_event_log", "load_truth", "score",
]

"""Window-level fusion of alertness, attention, emotion and posture, plus
the feedback policy.

The policy picks the single highest-priority applicable feedback kind for a
window; if that kind is still cooling down nothing is emitted for the
window (no fall-through to lower priorities).
"""

from dataclasses import dataclass, field
from enum import Enum

from .emotion import EmotionLabel, Valence, valence
from .ocular import Alertness, Attention, AttentionLevel, WindowStats


class FeedbackKind(Enum):
    VOICE_ALARM = "voice_alarm"
    BREAK_SUGGESTION = "break_suggestion"
    EMPATHETIC_MESSAGE = "empathetic_message"
    ENRICHMENT_OFFER = "enrichment_offer"


DEFAULT_COOLDOWNS_S = {
    FeedbackKind.VOICE_ALARM: 300.0,
    FeedbackKind.BREAK_SUGGESTION: 600.0,
    FeedbackKind.EMPATHETIC_MESSAGE: 120.0,
    FeedbackKind.ENRICHMENT_OFFER: 600.0,
}


@dataclass(frozen=True)
class FusionConfig:
    sustain_s: float = 10.0          # contiguous over-threshold tilt time
    cooldowns: dict = field(default_factory=lambda: dict(DEFAULT_COOLDOWNS_S))
    # Optional rule: raise the alarm on sustained low attention alone.
    alarm_on_low_attention: bool = False


@dataclass(frozen=True)
class CognitiveState:
    window_start: float
    window_end: float
    alertness: Alertness
    attention: AttentionLevel
    emotion: EmotionLabel | None
    valence: Valence | None
    frustration: bool
    fatigue: bool


@dataclass(frozen=True)
class FeedbackEvent:
    t: float
    kind: FeedbackKind
    cause: CognitiveState
    cooldown_until: float


def _modal_emotion(emotions):
    """Most frequent label; ties go to the most recently seen label."""
    counts = {}
    last_seen = {}
    for t, label in emotions:
        counts[label] = counts.get(label, 0) + 1
        last_seen[label] = t
    if not counts:
        return None
    return max(counts, key=lambda lb: (counts[lb], last_seen[lb]))


def _sustained_flag(poses, sustain_s):
    """True when a contiguous run of flagged poses spans >= sustain_s."""
    run_start = None
    for t, pose in poses:
        if pose.frustration_flag:
            if run_start is None:
                run_start = t
            if t - run_start >= sustain_s - 1e-9:
                return True
        else:
            run_start = None
    return False


def fuse(stats: WindowStats, attention: AttentionLevel, emotions, poses,
         cfg: FusionConfig = FusionConfig()) -> CognitiveState:
    """Combine one window's signals into a CognitiveState.

    ``emotions`` is a sequence of (t, EmotionLabel) and ``poses`` a sequence
    of (t, HeadPose), both restricted to the window.  An empty emotion
    stream leaves the emotion unknown (valence None, treated as
    non-negative by the policy).
    """
    label = _modal_emotion(emotions)
    val = valence(label) if label is not None else None
    frustration = _sustained_flag(poses, cfg.sustain_s)
    fatigue = stats.alertness is Alertness.DROWSY or (
        attention.level is Attention.LOW and val is Valence.NEGATIVE)
    return CognitiveState(
        window_start=stats.window_start,
        window_end=stats.window_end,
        alertness=stats.alertness,
        attention=attention,
        emotion=label,
        valence=val,
        frustration=frustration,
        fatigue=fatigue,
    )


def select_feedback_kind(state: CognitiveState,
                         cfg: FusionConfig = FusionConfig()):
    """Priority rules, ignoring cooldowns.  Returns a kind or None."""
    if state.alertness is Alertness.DROWSY:
        return FeedbackKind.VOICE_ALARM
    if cfg.alarm_on_low_attention and state.attention.level is Attention.LOW:
        return FeedbackKind.VOICE_ALARM
    if state.fatigue or state.frustration:
        return FeedbackKind.BREAK_SUGGESTION
    if state.valence is Valence.NEGATIVE:
        return FeedbackKind.EMPATHETIC_MESSAGE
    if (state.valence is Valence.POSITIVE
            and state.alertness is Alertness.ALERT
            and state.attention.level is Attention.HIGH):
        return FeedbackKind.ENRICHMENT_OFFER
    return None


def feedback_policy(state: CognitiveState, history,
                    cfg: FusionConfig = FusionConfig()) -> FeedbackEvent | None:
    """At most one event per window, suppressed while its kind cools down.

    Pure function of (state, history, cfg); ``history`` holds the session's
    earlier FeedbackEvents in time order.
    """
    kind = select_feedback_kind(state, cfg)
    if kind is None:
        return None
    t = state.window_end
    for ev in reversed(history):
        if ev.kind is kind:
            if ev.cooldown_until > t:
                return None
            break
    return FeedbackEvent(t=t, kind=kind, cause=state,
                         cooldown_until=t + cfg.cooldowns[kind])

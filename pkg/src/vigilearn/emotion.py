"""Per-user emotion templates and nearest-template expression classification.

Each user registers with labelled expression samples; a PCA basis is fitted
to all of them and one template (mean projection) is kept per emotion.
Classification projects a query descriptor and picks the nearest template by
Euclidean distance.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .features import PcaModel, pca_fit, pca_project


class EmotionLabel(Enum):
    # Definition order doubles as the deterministic tie-break order.
    HAPPINESS = "happiness"
    SURPRISE = "surprise"
    ANGER = "anger"
    SADNESS = "sadness"
    FEAR = "fear"
    DISGUST = "disgust"


LABEL_ORDER = tuple(EmotionLabel)


class Valence(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


_POSITIVE_LABELS = frozenset({EmotionLabel.HAPPINESS, EmotionLabel.SURPRISE})


def valence(label: EmotionLabel) -> Valence:
    """Polarity of an emotion: happiness/surprise positive, the rest negative."""
    return Valence.POSITIVE if label in _POSITIVE_LABELS else Valence.NEGATIVE


@dataclass(frozen=True)
class UserProfile:
    """Registered emotion templates for one user, in that user's PCA space."""

    user_id: str
    pca: PcaModel
    templates: dict  # EmotionLabel -> np.ndarray of length pca.k
    sample_counts: dict  # EmotionLabel -> int


@dataclass(frozen=True)
class EmotionEstimate:
    label: EmotionLabel
    distance: float
    margin: float  # runner-up distance minus best distance, >= 0
    valence: Valence


def register_user(user_id: str, labeled_samples, k: int = 32) -> UserProfile:
    """Build a profile from (EmotionLabel, feature vector) pairs.

    Requires at least one sample for each of the six labels.  ``k`` is
    reduced if the sample count or feature dimension cannot support it.
    """
    by_label = {label: [] for label in LABEL_ORDER}
    vectors = []
    dim = None
    for label, vec in labeled_samples:
        v = np.asarray(vec, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("feature vectors must be 1-D")
        if dim is None:
            dim = v.shape[0]
        elif v.shape[0] != dim:
            raise ValueError(
                f"dimension mismatch: got {v.shape[0]}, expected {dim}")
        by_label[label].append(v)
        vectors.append(v)
    missing = [label.value for label in LABEL_ORDER if not by_label[label]]
    if missing:
        raise ValueError(f"missing samples for labels: {', '.join(missing)}")
    k_eff = min(k, len(vectors) - 1, dim)
    pca = pca_fit(vectors, k_eff)
    templates = {}
    counts = {}
    for label in LABEL_ORDER:
        projs = np.array([pca_project(pca, v) for v in by_label[label]])
        templates[label] = projs.mean(axis=0)
        counts[label] = len(by_label[label])
    return UserProfile(user_id=user_id, pca=pca, templates=templates,
                       sample_counts=counts)


def classify_emotion(profile: UserProfile, v) -> EmotionEstimate:
    """Nearest-template classification of a raw feature vector.

    Ties go to the earlier label in the fixed enumeration order.
    """
    coords = pca_project(profile.pca, v)
    best_label = None
    best = np.inf
    runner_up = np.inf
    for label in LABEL_ORDER:
        d = float(np.linalg.norm(coords - profile.templates[label]))
        if d < best:
            runner_up = best
            best = d
            best_label = label
        elif d < runner_up:
            runner_up = d
    margin = 0.0 if not np.isfinite(runner_up) else runner_up - best
    return EmotionEstimate(label=best_label, distance=best, margin=margin,
                           valence=valence(best_label))

"""vigilearn: alertness, attention and emotion monitoring from per-frame
visual measurements, with a rule-based feedback policy.

The package is a plain numpy library plus a small CLI.  Sub-modules:

- features: block-LBP descriptors and PCA reduction
- emotion:  per-user templates and nearest-template classification
- ocular:   eye-state SVM, PERCLOS windows, saccades, attention
- tracking: constant-velocity Kalman filter, iris centroid, head tilt,
            de-roll and four-point homographies
- fusion:   window-level state fusion and the feedback policy
- session:  stream formats, profile store, synthesis, replay, scoring
"""

from . import emotion, features, fusion, ocular, session, tracking
from .emotion import (EmotionEstimate, EmotionLabel, UserProfile, Valence,
                      classify_emotion, register_user, valence)
from .errors import (DataError, FrameParseError, ProfileError, ScenarioError,
                     SessionMismatchError, UnknownUserError)
from .features import (PcaModel, block_histogram, image_features, lbp_code,
                       lbp_map, normalize_blocks, pca_fit, pca_project,
                       pca_reconstruct)
from .fusion import (CognitiveState, FeedbackEvent, FeedbackKind,
                     FusionConfig, feedback_policy, fuse)
from .ocular import (Alertness, Attention, AttentionLevel, EyeClassification,
                     EyeState, LinearEyeModel, SaccadeEvent, WindowStats,
                     attention_level, classify_alertness, classify_eye_state,
                     detect_saccades, perclos, train_eye_model, window_plan)
from .session import (ReplayResult, ScenarioSpec, Segment, SessionConfig,
                      load_config, load_profile, load_scenario, replay,
                      register_from_manifest, score, store_profile,
                      synthesize_session)
from .tracking import (HeadPose, KalmanState, NoiseConfig, TrackPoint,
                       apply_homography, deroll, estimate_iris_center,
                       head_pose, head_tilt, kalman_predict, kalman_update,
                       solve_homography, track)

__version__ = "0.1.0"

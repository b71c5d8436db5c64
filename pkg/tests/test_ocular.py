import math

import numpy as np
import pytest

from vigilearn.ocular import (Alertness, Attention, EyeState, SaccadeEvent,
                              attention_level, classify_alertness,
                              classify_eye_state, detect_saccades, perclos,
                              saccade_displacement, train_eye_model,
                              window_plan)

# ---------------------------------------------------------------------------
# eye-state classifier


def test_separable_1d_training_reaches_zero_errors():
    labeled = ([(EyeState.OPEN, [1.0 + 0.1 * i]) for i in range(10)]
               + [(EyeState.CLOSED, [-1.0 - 0.1 * i]) for i in range(10)])
    model = train_eye_model(labeled, lam=1e-3, epochs=50)
    assert model.weights[0] > 0
    for state, vec in labeled:
        assert classify_eye_state(model, vec).state is state


def test_label_flip_negates_the_decision_function():
    rng = np.random.default_rng(0)
    labeled = []
    flipped = []
    for _ in range(30):
        v = rng.normal(size=4)
        s = EyeState.OPEN if rng.random() < 0.5 else EyeState.CLOSED
        other = EyeState.CLOSED if s is EyeState.OPEN else EyeState.OPEN
        labeled.append((s, v))
        flipped.append((other, v))
    a = train_eye_model(labeled, lam=1e-3, epochs=20)
    b = train_eye_model(flipped, lam=1e-3, epochs=20)
    assert np.allclose(a.weights, -b.weights, rtol=0, atol=0)
    assert a.bias == -b.bias


def test_gaussian_task_accuracy_near_bayes_oracle():
    rng = np.random.default_rng(42)
    n = 400
    x_open = rng.normal(loc=(2.0, 0.0), scale=1.0, size=(n, 2))
    x_closed = rng.normal(loc=(-2.0, 0.0), scale=1.0, size=(n, 2))
    labeled = ([(EyeState.OPEN, v) for v in x_open]
               + [(EyeState.CLOSED, v) for v in x_closed])
    model = train_eye_model(labeled, lam=1e-3, epochs=60)

    m = 4000
    t_open = rng.normal(loc=(2.0, 0.0), scale=1.0, size=(m, 2))
    t_closed = rng.normal(loc=(-2.0, 0.0), scale=1.0, size=(m, 2))
    # Monte-Carlo Bayes oracle: the optimal boundary is x == 0
    bayes_acc = (np.sum(t_open[:, 0] > 0) + np.sum(t_closed[:, 0] <= 0)) / (2 * m)
    hits = sum(classify_eye_state(model, v).state is EyeState.OPEN
               for v in t_open)
    hits += sum(classify_eye_state(model, v).state is EyeState.CLOSED
                for v in t_closed)
    model_acc = hits / (2 * m)
    assert abs(model_acc - bayes_acc) <= 0.02


def test_single_class_training_rejected():
    with pytest.raises(ValueError):
        train_eye_model([(EyeState.OPEN, [1.0]), (EyeState.OPEN, [2.0])])


def test_classifier_sign_convention():
    from vigilearn.ocular import LinearEyeModel
    model = LinearEyeModel(weights=np.array([1.0, 0.0]), bias=0.2, epochs=0,
                           final_hinge_loss=0.0)
    assert classify_eye_state(model, [3.0, 0.0]).state is EyeState.OPEN
    assert classify_eye_state(model, [3.0, 0.0]).score == pytest.approx(3.2)
    # exactly zero score is Closed by convention
    assert classify_eye_state(model, [-0.2, 5.0]).state is EyeState.CLOSED
    with pytest.raises(ValueError):
        classify_eye_state(model, [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# window plan


def test_window_plan_default_parameters():
    plan = window_plan(600.0)
    assert [w[0] for w in plan] == [0.0, 60.0, 120.0, 180.0, 240.0, 300.0,
                                    360.0, 420.0]
    assert all(end - start == 180.0 for start, end in plan)


def test_window_plan_too_short_session():
    assert window_plan(179.0) == []


def test_window_plan_300s():
    assert window_plan(300.0) == [(0.0, 180.0), (60.0, 240.0), (120.0, 300.0)]


def test_window_plan_constant_stride_property():
    plan = window_plan(2000.0, window_s=90.0, overlap_fraction=0.5)
    starts = [w[0] for w in plan]
    strides = np.diff(starts)
    assert np.all(strides == 45.0)
    assert all(end - start == 90.0 for start, end in plan)


def test_window_plan_invalid_arguments():
    with pytest.raises(ValueError):
        window_plan(100.0, window_s=0.0)
    with pytest.raises(ValueError):
        window_plan(100.0, overlap_fraction=1.0)


# ---------------------------------------------------------------------------
# PERCLOS


def _timeline(states, fps=30.0):
    return [(i / fps, s) for i, s in enumerate(states)]


def test_perclos_all_open():
    stats = perclos(_timeline([EyeState.OPEN] * 90), 0.0, 3.0)
    assert stats.perclos == 0.0
    assert stats.alertness is Alertness.ALERT
    assert stats.frames_total == 90 and stats.frames_closed == 0


def test_perclos_exact_threshold_is_alert():
    states = [EyeState.CLOSED] * 27 + [EyeState.OPEN] * 153
    stats = perclos(_timeline(states, fps=1.0), 0.0, 180.0)
    assert stats.perclos == 27 / 180
    assert stats.alertness is Alertness.ALERT  # 0.15 is not > 0.15


def test_alertness_boundary_cases():
    assert classify_alertness(0.15) is Alertness.ALERT
    assert classify_alertness(0.15 + 1e-9) is Alertness.DROWSY
    assert classify_alertness(0.0) is Alertness.ALERT
    assert classify_alertness(1.0) is Alertness.DROWSY


def test_perclos_matches_recount_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        states = [EyeState.CLOSED if rng.random() < 0.3 else EyeState.OPEN
                  for _ in range(500)]
        timeline = _timeline(states)
        start, end = 3.0, 12.5
        stats = perclos(timeline, start, end)
        total = sum(1 for t, _ in timeline if start <= t < end)
        closed = sum(1 for t, s in timeline
                     if start <= t < end and s is EyeState.CLOSED)
        assert stats.frames_total == total
        assert stats.frames_closed == closed
        assert stats.perclos == closed / total


def test_perclos_invariant_under_frame_duplication():
    rng = np.random.default_rng(2)
    states = [EyeState.CLOSED if rng.random() < 0.2 else EyeState.OPEN
              for _ in range(300)]
    fps = 30.0
    base = [(i / fps, s) for i, s in enumerate(states)]
    doubled = []
    for i, s in enumerate(states):  # insert a midpoint copy of every frame
        doubled.append((i / fps, s))
        doubled.append((i / fps + 0.5 / fps, s))
    a = perclos(base, 0.0, 10.0)
    b = perclos(doubled, 0.0, 10.0)
    assert a.perclos == b.perclos


def test_perclos_monotone_in_closures():
    fps = 1.0
    for closed_count in range(0, 180):
        states = ([EyeState.CLOSED] * closed_count
                  + [EyeState.OPEN] * (180 - closed_count))
        stats = perclos(_timeline(states, fps), 0.0, 180.0)
        more = ([EyeState.CLOSED] * (closed_count + 1)
                + [EyeState.OPEN] * (179 - closed_count))
        stats_more = perclos(_timeline(more, fps), 0.0, 180.0)
        if stats.alertness is Alertness.DROWSY:
            assert stats_more.alertness is Alertness.DROWSY


def test_perclos_empty_window_error():
    with pytest.raises(ValueError):
        perclos(_timeline([EyeState.OPEN] * 10), 100.0, 103.0)


def test_perclos_requires_increasing_timestamps():
    with pytest.raises(ValueError):
        perclos([(0.0, EyeState.OPEN), (0.0, EyeState.OPEN)], 0.0, 1.0)


# ---------------------------------------------------------------------------
# saccades


def triangle_track(peak, duration, onset, dt, total):
    ts = np.arange(0.0, total, dt)
    xs = [saccade_displacement(peak, duration, t - onset) for t in ts]
    return [(t, x, 0.0) for t, x in zip(ts, xs)]


def test_stationary_gaze_yields_no_events():
    pts = [(i * 0.01, 4.2, -1.0) for i in range(200)]
    assert detect_saccades(pts) == []


def test_triangular_saccade_sr_recovery():
    # 40 ms triangular profile peaking at 300 deg/s -> sr = 300/0.04 = 7500
    pts = triangle_track(300.0, 0.04, onset=0.08, dt=0.0005, total=0.2)
    events = detect_saccades(pts, v_on=5.0, v_off=5.0)
    assert len(events) == 1
    ev = events[0]
    assert abs(ev.sr - 7500.0) / 7500.0 < 0.05
    assert abs(ev.peak_velocity - 300.0) / 300.0 < 0.05


def test_two_bursts_give_two_ordered_events():
    dt = 0.001
    ts = np.arange(0.0, 1.2, dt)
    xs = [saccade_displacement(200.0, 0.04, t - 0.2)
          + saccade_displacement(250.0, 0.05, t - 0.74) for t in ts]
    pts = [(t, x, 0.0) for t, x in zip(ts, xs)]
    events = detect_saccades(pts, v_on=50.0, v_off=20.0)
    assert len(events) == 2
    assert events[0].offset < events[1].onset
    assert events[1].peak_velocity > events[0].peak_velocity


def test_equal_thresholds_match_run_length_oracle():
    rng = np.random.default_rng(3)
    dt = 0.005
    ts = np.arange(0.0, 4.0, dt)
    xs = np.cumsum(rng.normal(0.0, 0.3, size=ts.shape))
    ys = np.cumsum(rng.normal(0.0, 0.3, size=ts.shape))
    pts = list(zip(ts, xs, ys))
    v = 60.0
    events = detect_saccades(pts, v_on=v, v_off=v)

    # oracle: central-difference speeds, runs of speed >= v;
    # each run's offset is the first sub-threshold sample after it, and a
    # run still open at the end of the data is dropped
    speeds = []
    for i in range(1, len(pts) - 1):
        vx = (xs[i + 1] - xs[i - 1]) / (ts[i + 1] - ts[i - 1])
        vy = (ys[i + 1] - ys[i - 1]) / (ts[i + 1] - ts[i - 1])
        speeds.append((ts[i], math.hypot(vx, vy)))
    oracle = []
    run = []
    for t, sp in speeds:
        if sp >= v:
            run.append((t, sp))
        elif run:
            oracle.append((run[0][0], t, max(s for _, s in run)))
            run = []
    assert len(events) == len(oracle)
    for ev, (onset, offset, peak) in zip(events, oracle):
        assert ev.onset == onset
        assert ev.offset == offset
        assert ev.peak_velocity == peak


def test_saccade_event_invariants():
    rng = np.random.default_rng(4)
    dt = 0.004
    ts = np.arange(0.0, 3.0, dt)
    xs = np.cumsum(rng.normal(0.0, 0.4, size=ts.shape))
    events = detect_saccades(list(zip(ts, xs, np.zeros_like(xs))),
                             v_on=80.0, v_off=30.0)
    assert events, "expected some events from this noise level"
    for ev in events:
        assert ev.offset > ev.onset
        assert ev.duration == ev.offset - ev.onset
        assert abs(ev.sr * ev.duration - ev.peak_velocity) < 1e-9


def test_detect_saccades_input_validation():
    with pytest.raises(ValueError):
        detect_saccades([(0.0, 0.0, 0.0), (0.1, 1.0, 0.0)])
    pts = [(i * 0.01, 0.0, 0.0) for i in range(10)]
    with pytest.raises(ValueError):
        detect_saccades(pts, v_on=10.0, v_off=20.0)
    with pytest.raises(ValueError):
        detect_saccades(pts, v_on=10.0, v_off=0.0)


# ---------------------------------------------------------------------------
# attention


def _event(sr, onset=0.0):
    return SaccadeEvent(onset=onset, offset=onset + 0.04, duration=0.04,
                        peak_velocity=sr * 0.04, sr=sr)


def test_attention_no_saccades_is_low():
    att = attention_level([])
    assert att.level is Attention.LOW
    assert att.mean_sr == 0.0
    assert att.saccade_count == 0


def test_attention_single_fast_saccade_is_high():
    att = attention_level([_event(7500.0)], tau_sr=5000.0)
    assert att.level is Attention.HIGH
    assert att.saccade_count == 1


def test_attention_mean_on_boundary_is_high():
    att = attention_level([_event(6000.0, 0.0), _event(4000.0, 1.0)],
                          tau_sr=5000.0)
    assert att.mean_sr == 5000.0
    assert att.level is Attention.HIGH  # boundary uses >=


def test_attention_window_filtering():
    events = [_event(9000.0, onset=1.0), _event(9000.0, onset=50.0)]
    att = attention_level(events, tau_sr=5000.0, window=(0.0, 10.0))
    assert att.saccade_count == 1

import numpy as np
import pytest

from jdetrack.errors import DomainError, UsageError
from jdetrack.geometry import Box
from jdetrack.metrics import evaluate_clear
from jdetrack.sequence import SequenceResult
from jdetrack.simulate import ScenarioConfig, generate_scenario
from jdetrack.tracker import (
    Detection,
    Tracker,
    TrackerConfig,
    TrackStatus,
    ema_update,
    tracker_run,
)


def det(x, y, emb=(1.0, 0.0), conf=1.0):
    return Detection(Box(x, y, 40, 120), conf, np.array(emb, dtype=float))


def two_targets(n_frames=10):
    """Two targets 600 px apart moving in opposite directions at constant speed."""
    frames, gt = [], []
    for t in range(n_frames):
        a = Box(100 + 4 * t, 200, 40, 120)
        b = Box(700 - 3 * t, 300, 40, 120)
        frames.append([Detection(a, 0.9, np.array([1.0, 0, 0])), Detection(b, 0.9, np.array([0, 1.0, 0]))])
        gt += [(t + 1, 1, a), (t + 1, 2, b)]
    return frames, SequenceResult(gt)


class TestEma:
    def test_fixed_point(self):
        e = np.array([0.6, 0.8])
        out, ok = ema_update(e, e, 0.9)
        assert ok
        np.testing.assert_allclose(out, e, atol=1e-15)

    def test_worked_example(self):
        out, _ = ema_update(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.9)
        ref = np.array([0.9, 0.1]) / np.hypot(0.9, 0.1)
        np.testing.assert_allclose(out, ref, atol=1e-15)
        assert out == pytest.approx([0.99388, 0.11043], abs=1e-5)

    def test_zero_momentum(self):
        out, _ = ema_update(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.0)
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_cancellation_keeps_previous(self):
        out, ok = ema_update(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 0.5)
        assert not ok
        np.testing.assert_array_equal(out, [1.0, 0.0])


class TestConfigAndDetection:
    @pytest.mark.parametrize(
        "kwargs",
        [{"alpha_ema": 1.5}, {"confirm_frames": 0}, {"max_lost_frames": -1}, {"lam": -0.1}, {"gate": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            TrackerConfig(**kwargs)

    def test_motion_only_forces_lambda(self):
        cfg = TrackerConfig(lam=0.9, motion_only=True)
        assert cfg.lam == 0.0 and not cfg.uses_appearance

    def test_embedding_normalised(self):
        d = Detection(Box(0, 0, 1, 1), 1.0, np.array([3.0, 4.0]))
        assert np.linalg.norm(d.embedding) == pytest.approx(1.0, abs=1e-12)

    def test_zero_embedding(self):
        with pytest.raises(DomainError):
            Detection(Box(0, 0, 1, 1), 1.0, np.zeros(3))


class TestLifecycle:
    def test_single_frame_never_emitted(self):
        tr = Tracker()
        assert tr.step(1, [det(100, 100)]) == []
        for f in range(2, 6):
            assert tr.step(f, []) == []
        assert tracker_run(TrackerConfig(), [[det(100, 100)]]) == SequenceResult()

    def test_empty_sequence(self):
        assert len(tracker_run(TrackerConfig(), [])) == 0

    def test_confirmation_after_two_frames(self):
        tr = Tracker()
        assert tr.step(1, [det(100, 100)]) == []
        out = tr.step(2, [det(101, 100)])
        assert [tid for tid, _ in out] == [1]

    def test_unmatched_tentative_removed(self):
        tr = Tracker()
        tr.step(1, [det(100, 100)])
        tr.step(2, [])
        assert tr.tracklets()[0].status is TrackStatus.REMOVED

    def test_removed_after_31_missed_frames(self):
        tr = Tracker()
        tr.step(1, [det(100, 100)])
        tr.step(2, [det(100, 100)])
        (trk,) = tr.tracklets()
        for k in range(30):
            tr.step(3 + k, [])
            assert trk.status is TrackStatus.LOST
        assert trk.frames_since_update == 30
        tr.step(33, [])
        assert trk.status is TrackStatus.REMOVED

    def test_lost_track_reacquired_with_same_id(self):
        tr = Tracker()
        for f in (1, 2, 3):
            tr.step(f, [det(100, 100)])
        for f in range(4, 10):
            tr.step(f, [])
        out = tr.step(10, [det(100, 100)])
        assert [tid for tid, _ in out] == [1]

    def test_lost_appearance_frozen(self):
        tr = Tracker()
        tr.step(1, [det(100, 100, (1, 0))])
        tr.step(2, [det(100, 100, (1, 0))])
        (trk,) = tr.tracklets()
        before = trk.appearance.copy()
        tr.step(3, [])
        tr.step(4, [])
        np.testing.assert_array_equal(trk.appearance, before)

    def test_low_confidence_ignored(self):
        tr = Tracker()
        tr.step(1, [det(100, 100, conf=0.3)])
        assert tr.tracklets() == []

    def test_non_monotonic_frame(self):
        tr = Tracker()
        tr.step(5, [])
        with pytest.raises(UsageError):
            tr.step(5, [])
        with pytest.raises(UsageError):
            tr.step(3, [])

    def test_illegal_transition(self):
        tr = Tracker()
        tr.step(1, [det(100, 100)])
        (trk,) = tr.tracklets()
        with pytest.raises(UsageError):
            trk.set_status(TrackStatus.LOST)

    def test_ids_in_detection_order(self):
        tr = Tracker()
        tr.step(1, [det(100, 100), det(600, 100), det(1000, 100)])
        assert [t.id for t in tr.tracklets()] == [1, 2, 3]

    def test_appearance_unit_norm(self):
        tr = Tracker()
        rng = np.random.default_rng(0)
        for f in range(1, 20):
            tr.step(f, [det(100 + f, 100, rng.normal(size=4) + [5, 0, 0, 0])])
        for t in tr.tracklets():
            assert np.linalg.norm(t.appearance) == pytest.approx(1.0, abs=1e-6)


class TestSequences:
    def test_two_well_separated_targets(self):
        frames, gt = two_targets()
        res = tracker_run(TrackerConfig(), frames)
        assert len(res.ids()) == 2
        report = evaluate_clear(gt, res)
        assert report.IDs == 0
        assert report.MOTA == 1.0

    def test_motion_only_runs(self):
        frames, gt = two_targets()
        res = tracker_run(TrackerConfig(motion_only=True), frames)
        assert len(res.ids()) == 2

    def test_motion_only_without_embeddings(self):
        frames = [[Detection(Box(100 + 2 * t, 100, 40, 120))] for t in range(5)]
        assert len(tracker_run(TrackerConfig(lam=0.0), frames)) == 5

    def test_appearance_without_embedding_fails(self):
        with pytest.raises(DomainError):
            tracker_run(TrackerConfig(), [[Detection(Box(0, 0, 40, 120))]] * 2)

    def test_deterministic(self):
        sc = generate_scenario(ScenarioConfig(n_frames=60, n_targets=8, p_miss=0.1, fp_rate=1.0,
                                              box_jitter_std=2.0, embed_noise_std=0.1, seed=4))
        a = tracker_run(TrackerConfig(), sc.frames)
        b = tracker_run(TrackerConfig(), sc.frames)
        assert list(a) == list(b)

    def test_noiseless_scenario_is_perfect(self):
        sc = generate_scenario(ScenarioConfig(n_frames=50, n_targets=5, seed=1))
        rep = evaluate_clear(sc.gt, tracker_run(TrackerConfig(), sc.frames))
        assert rep.MOTA == 1.0 and rep.IDs == 0

    def test_stage_timings_recorded(self):
        tr = Tracker()
        tr.step(1, [det(100, 100)])
        assert set(tr.timings) == {"predict", "cost", "assign", "update"}

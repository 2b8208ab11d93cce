"""
Tests for pseudo-label calibration, the labeled-interval dataset and
self-training.
"""

import math

import numpy as np
import pytest

from conftest import make_det
from src.core.exceptions import ArgumentError
from src.detector.loss import LossBreakdown
from src.detector.model import DetectMode, detect
from src.events.voxel import VoxelSpec, voxelize
from src.flextune.calibration import (
    PseudoLabelSet,
    Tracklet,
    TuneConfig,
    bidirectional_merge,
    bootstrap,
    bootstrap_backward,
    confidence_filter,
    link_tracklets,
    nms,
    prune_and_emit,
)
from src.flextune.dataset import build_dataset
from src.flextune.self_training import generate_pseudo_labels, refine_pseudo_labels, self_train
from src.flextune.training import TrainingParams, fit_sparse, run_epoch, tune_loss
from src.events.windows import FrequencyPlan, Window, slice_frequencies


class RecordingDetector:
    """Returns one fixed box per call and remembers what it was shown."""

    def __init__(self, box=(2.0, 2.0, 8.0, 6.0), score=0.9, class_id=0):
        self.box = box
        self.score = score
        self.class_id = class_id
        self.calls = []

    def detect(self, tensor, frame, mode=DetectMode.FUSED):
        self.calls.append((tensor.window, tensor.total, None if frame is None else float(frame.sum())))
        return [make_det(*self.box, score=self.score, class_id=self.class_id, t=tensor.window.t2)]


class FootprintDetector:
    """Boxes the pixels that fired in the window; the score grows with the event count."""

    def detect(self, tensor, frame, mode=DetectMode.FUSED):
        counts = tensor.data.sum(axis=(0, 1))
        ys, xs = np.nonzero(counts)
        if len(xs) == 0:
            return []
        score = 0.5 + min(tensor.total, 400) / 1000
        box = (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
        return [make_det(*box, score=score, t=tensor.window.t2)]


def params_equal(a, b) -> bool:
    return all(np.array_equal(a.params[name], b.params[name]) for name in a.params)


class TestNMS:
    """Test classwise non-maximum suppression."""

    def test_single_detection(self):
        det = make_det(0, 0, 4, 4)
        assert nms([det], 0.5) == [det]

    def test_keeps_higher_score(self):
        high, low = make_det(0, 0, 4, 4, score=0.9), make_det(0, 0, 4, 4, score=0.8)
        assert nms([low, high], 0.5) == [high]

    def test_classes_do_not_suppress_each_other(self):
        car, person = make_det(0, 0, 4, 4, class_id=0), make_det(0, 0, 4, 4, score=0.5, class_id=1)
        assert nms([car, person], 0.5) == [car, person]

    def test_threshold_is_inclusive(self):
        """IoU exactly at the threshold suppresses."""
        first, second = make_det(0, 0, 2, 1, score=0.9), make_det(1, 0, 3, 1, score=0.8)
        assert nms([first, second], 1 / 3) == [first]
        assert nms([first, second], 0.34) == [first, second]

    def test_idempotent_and_order_independent(self):
        rng = np.random.default_rng(0)
        dets = []
        for _ in range(40):
            x, y = rng.uniform(0, 20, 2)
            dets.append(make_det(x, y, x + 4, y + 4, score=float(rng.uniform(0.1, 1)), class_id=int(rng.integers(0, 2))))
        once = nms(dets, 0.4)
        assert nms(once, 0.4) == once
        assert nms(list(reversed(dets)), 0.4) == once


class TestConfidenceFilter:
    """Test per-class thresholds."""

    def test_threshold_boundary(self):
        config = TuneConfig(tau_car=0.6, tau_ped=0.3)
        below, at = make_det(0, 0, 1, 1, score=0.59), make_det(0, 0, 1, 1, score=0.60)
        person = make_det(0, 0, 1, 1, score=0.35, class_id=1)
        assert confidence_filter([below, at, person], config) == [at, person]


class TestLinking:
    """Test greedy IoU tracklet linking."""

    def test_stationary_object_forms_one_tracklet(self):
        per_window = [[make_det(1, 1, 5, 5, t=i)] for i in range(9)]
        tracklets = link_tracklets(per_window, 0.6)
        assert len(tracklets) == 1
        assert [index for index, _ in tracklets[0].entries] == list(range(9))

    def test_gap_breaks_tracklet(self):
        per_window = [[make_det(1, 1, 5, 5)] if i != 4 else [] for i in range(9)]
        assert [t.length for t in link_tracklets(per_window, 0.6)] == [4, 4]
        assert [t.length for t in link_tracklets(per_window, 0.6, max_gap=1)] == [8]

    def test_highest_overlap_wins(self):
        """The tracklet takes its best match; the other detection starts a new one."""
        per_window = [[make_det(0, 0, 10, 10)], [make_det(0, 0, 10, 8), make_det(0, 0, 10, 9.5)]]
        tracklets = link_tracklets(per_window, 0.6)
        assert len(tracklets) == 2
        assert tracklets[0].entries[1][1].box == (0.0, 0.0, 10.0, 9.5)
        assert tracklets[1].entries == [(1, per_window[1][0])]

    def test_class_gating_keeps_identities(self):
        """Overlapping objects of different classes never swap tracklets."""
        per_window = []
        for i in range(6):
            per_window.append([make_det(i, 0, i + 6, 6, class_id=0), make_det(5 - i, 0, 11 - i, 6, class_id=1)])
        tracklets = link_tracklets(per_window, 0.6)
        for tracklet in tracklets:
            assert len({det.class_id for _, det in tracklet.entries}) == 1

    def test_tracklet_indices_must_increase(self):
        det = make_det(0, 0, 1, 1)
        with pytest.raises(ValueError):
            Tracklet(track_id=0, entries=[(2, det), (2, det)])


class TestPruneAndEmit:
    """Test tracklet length pruning."""

    def test_short_tracklets_are_dropped(self):
        tracklets = link_tracklets([[make_det(1, 1, 5, 5)] for _ in range(5)], 0.6)
        assert prune_and_emit(tracklets, TuneConfig(min_track_len=6)).count == 0
        kept = prune_and_emit(tracklets, TuneConfig(min_track_len=5))
        assert sorted(kept.labels) == [0, 1, 2, 3, 4]

    def test_min_length_one_keeps_everything(self):
        per_window = [[make_det(0, 0, 2, 2, score=0.7), make_det(8, 8, 9, 9, score=0.8, class_id=1)], [make_det(4, 4, 6, 6)]]
        labels = prune_and_emit(link_tracklets(per_window, 0.6), TuneConfig(min_track_len=1))
        assert labels.count == 3
        assert labels.scores[0] == [0.7, 0.8]
        assert labels.labels[0][1].class_id == 1

    def test_spurious_detections_are_rejected(self):
        """Isolated random detections never form a long enough tracklet."""
        rng = np.random.default_rng(7)
        per_window = [[] for _ in range(9)]
        for _ in range(100):
            x, y = rng.uniform(0, 60, 2)
            per_window[int(rng.integers(0, 9))].append(make_det(x, y, x + 3, y + 3))
        labels = prune_and_emit(link_tracklets(per_window, 0.6), TuneConfig(min_track_len=6))
        assert labels.count == 0

    def test_restricted_and_statistics(self):
        labels = prune_and_emit(link_tracklets([[make_det(0, 0, 2, 2, score=0.5)] for _ in range(4)], 0.6),
                                TuneConfig(min_track_len=1))
        assert labels.mean_score == 0.5
        assert sorted(labels.restricted([0, 2]).labels) == [0, 2]
        assert PseudoLabelSet().mean_score is None


class TestBidirectionalMerge:
    """Test the union of forward and backward detections."""

    windows = [Window(t1=0, t2=10), Window(t1=10, t2=20), Window(t1=20, t2=30)]

    def test_empty_backward_leaves_forward(self):
        forward = [[make_det(0, 0, 1, 1)], [], [make_det(1, 1, 2, 2)]]
        assert bidirectional_merge(forward, [], self.windows) == forward

    def test_backward_lists_are_realigned(self):
        forward = [[], [], []]
        backward = [[make_det(0, 0, 1, 1, t=10)], [], [make_det(5, 5, 6, 6, t=30)]]
        merged = bidirectional_merge(forward, backward, self.windows)
        assert merged[2][0].box == (0.0, 0.0, 1.0, 1.0) and merged[2][0].t == 30
        assert merged[0][0].box == (5.0, 5.0, 6.0, 6.0) and merged[0][0].t == 10
        assert merged[1] == []

    def test_count_mismatch(self):
        with pytest.raises(ArgumentError):
            bidirectional_merge([[], [], []], [[], []], self.windows)
        with pytest.raises(ArgumentError):
            bidirectional_merge([[]], [], self.windows)

    def test_duplicates_collapse_under_nms(self):
        det = make_det(0, 0, 4, 4, t=10)
        merged = bidirectional_merge([[det], [], []], [[], [], [det]], self.windows)
        assert len(merged[0]) == 2
        assert len(nms(merged[0], 0.5)) == 1


class TestBootstrap:
    """Test per-window detection on forward and reversed streams."""

    def test_ratio_one_equals_detect(self, tiny_model, tiny_scene):
        window = Window(t1=50_000, t2=100_000)
        result = bootstrap(tiny_model, tiny_scene.frames, [window], tiny_scene.events, bins=2)
        tensor = voxelize(tiny_scene.events, window, VoxelSpec(T=2, H=16, W=16))
        assert result == [detect(tiny_model, tensor, tiny_scene.frames.latest_at(50_000))]

    def test_pairing_times_must_match(self, tiny_scene):
        with pytest.raises(ArgumentError):
            bootstrap(RecordingDetector(), tiny_scene.frames, [Window(t1=0, t2=10)], tiny_scene.events, 2, [0, 1])

    def test_backward_mirrors_forward_windows(self, tiny_scene, plan_ratio_4):
        """Backward call j sees the events of forward window ratio-1-j and its frame."""
        windows = slice_frequencies(Window(t1=50_000, t2=100_000), plan_ratio_4)
        forward, backward = RecordingDetector(), RecordingDetector()
        bootstrap(forward, tiny_scene.frames, windows, tiny_scene.events, 2)
        result = bootstrap_backward(backward, tiny_scene.frames, windows, tiny_scene.events, 2)
        assert len(result) == 4
        for j, (window, total, frame_sum) in enumerate(backward.calls):
            _, forward_total, forward_frame = forward.calls[3 - j]
            assert window == windows[j]
            assert total == forward_total
            assert frame_sum == forward_frame

    def test_event_only_mode_skips_frames(self, tiny_scene, plan_ratio_4):
        windows = slice_frequencies(Window(t1=0, t2=50_000), plan_ratio_4)
        recorder = RecordingDetector()
        bootstrap(recorder, tiny_scene.frames, windows, tiny_scene.events, 2, mode=DetectMode.EVENT_ONLY)
        assert all(frame is None for _, _, frame in recorder.calls)

    @pytest.mark.parametrize("flip_polarity", [True, False])
    def test_merged_passes_match_forward_after_nms(self, tiny_scene, plan_ratio_4, flip_polarity):
        """The backward pass realigns onto the forward windows and adds nothing after NMS."""
        detector = FootprintDetector()
        detected = 0
        for interval in build_dataset(tiny_scene, plan_ratio_4):
            windows = interval.sub_windows
            forward = bootstrap(detector, tiny_scene.frames, windows, tiny_scene.events, 2)
            backward = bootstrap_backward(
                detector, tiny_scene.frames, windows, tiny_scene.events, 2, flip_polarity=flip_polarity
            )
            merged = bidirectional_merge(forward, backward, windows)
            detected += sum(len(dets) for dets in forward)
            for index in range(len(windows)):
                assert nms(merged[index], 0.5) == nms(forward[index], 0.5)
        assert detected > 0


class TestDataset:
    """Test labeled intervals."""

    def test_intervals_follow_frames(self, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4, sequence_id="tiny")
        assert [d.window for d in dataset] == [Window(t1=t, t2=t + 50_000) for t in range(0, 200_000, 50_000)]
        for interval in dataset:
            assert interval.ratio == 4
            assert interval.sub_windows[-1].t2 == interval.window.t2
            assert list(interval.gts) == tiny_scene.gt.boxes_at(interval.window.t2)
            assert interval.sequence_id == "tiny"

    def test_frame_pairing(self, tiny_scene, plan_ratio_4):
        interval = build_dataset(tiny_scene, plan_ratio_4)[1]
        assert interval.frame_for(interval.sub_windows[3]) is tiny_scene.frames.images[1]


class TestCalibrationPipeline:
    """Test refine_pseudo_labels end to end with a stub detector."""

    def test_stable_detection_becomes_labels(self, tiny_scene, plan_ratio_4):
        interval = build_dataset(tiny_scene, plan_ratio_4)[0]
        labels = refine_pseudo_labels(RecordingDetector(), interval, TuneConfig(min_track_len=4), bins=2)
        assert sorted(labels.labels) == [0, 1, 2]
        assert all(len(boxes) == 1 for boxes in labels.labels.values())

    def test_low_confidence_is_filtered(self, tiny_scene, plan_ratio_4):
        interval = build_dataset(tiny_scene, plan_ratio_4)[0]
        labels = refine_pseudo_labels(RecordingDetector(score=0.5), interval, TuneConfig(min_track_len=1), bins=2)
        assert labels.count == 0

    def test_unidirectional_runs_once_per_window(self, tiny_scene, plan_ratio_4):
        interval = build_dataset(tiny_scene, plan_ratio_4)[0]
        recorder = RecordingDetector()
        refine_pseudo_labels(recorder, interval, TuneConfig(bidirectional=False, min_track_len=1), bins=2)
        assert len(recorder.calls) == 4

    def test_generate_keys_by_position(self, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        pseudo = generate_pseudo_labels(RecordingDetector(), dataset, TuneConfig(min_track_len=4), bins=2)
        assert sorted(pseudo) == [0, 1, 2, 3]


class TestTraining:
    """Test sparse training, the tuning objective and self-training."""

    def test_tune_loss(self):
        gt = [LossBreakdown.compose(1.0, 0.0, 0.0), LossBreakdown.compose(0.0, 0.5, 0.0)]
        pseudo = [LossBreakdown.compose(0.0, 0.0, 2.0)]
        assert tune_loss(gt, pseudo, 0.5) == 2.5
        assert tune_loss(gt, pseudo, 0.0) == 1.5
        assert tune_loss([], [], 1.0) == 0.0

    def test_zero_pseudo_weight_ignores_pseudo_terms(self):
        gt = [LossBreakdown.compose(1.0, 0.0, 0.0)]
        broken = [LossBreakdown(iou_loss=math.nan, cls_loss=0.0, reg_loss=0.0, total=math.nan)]
        assert tune_loss(gt, broken, 0.0) == 1.0

    def test_fit_sparse_is_deterministic(self, tiny_model, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        params = TrainingParams(lr=0.01, epochs=2, seed=3, batch_size=2)
        first, history = fit_sparse(tiny_model, dataset, params)
        second, _ = fit_sparse(tiny_model, dataset, params)
        assert [record.epoch for record in history] == [0, 1]
        assert all(record.steps == 2 for record in history)
        assert params_equal(first, second)
        assert not params_equal(first, tiny_model)

    def test_random_subwindow_sampling(self, tiny_model, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        params = TrainingParams(lr=0.01, epochs=1, seed=3, subwindow_sampling="random")
        model, history = fit_sparse(tiny_model, dataset, params)
        assert math.isfinite(history[0].mean_loss)

    def test_pseudo_labels_change_the_update(self, tiny_model, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        params = TrainingParams(lr=0.01, epochs=0, seed=3)
        pseudo = generate_pseudo_labels(RecordingDetector(), dataset, TuneConfig(min_track_len=4), bins=2)
        plain = run_epoch(tiny_model, dataset, params, 0)
        weighted = run_epoch(tiny_model, dataset, params, 0, pseudo=pseudo, pseudo_weight=1.0)
        ignored = run_epoch(tiny_model, dataset, params, 0, pseudo=pseudo, pseudo_weight=0.0)
        assert not params_equal(plain.model, weighted.model)
        assert params_equal(plain.model, ignored.model)
        assert weighted.record.tune_loss > ignored.record.tune_loss

    def test_self_train_without_pseudo_weight_is_plain_training(self, tiny_model, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        params = TrainingParams(lr=0.01, epochs=0, seed=3, batch_size=2)
        config = TuneConfig(pseudo_weight=0.0, rounds=1, min_track_len=2)
        assert config.round_epochs == 1
        result = self_train(tiny_model, dataset, config, params)
        plain = run_epoch(tiny_model, dataset, params, epoch_index=0)
        assert params_equal(result.model, plain.model)
        assert result.rounds[0].round == 1

    def test_self_train_is_deterministic(self, tiny_model, tiny_scene, plan_ratio_4):
        dataset = build_dataset(tiny_scene, plan_ratio_4)
        params = TrainingParams(lr=0.01, epochs=1, seed=3, batch_size=4)
        config = TuneConfig(rounds=2, round_epochs=1, min_track_len=2, tau_car=0.01, tau_ped=0.01)
        first = self_train(tiny_model, dataset, config, params)
        second = self_train(tiny_model, dataset, config, params)
        assert params_equal(first.model, second.model)
        assert first.rounds == second.rounds
        assert len(first.rounds) == 2
        assert all(max(labels.labels, default=0) <= 2 for labels in first.pseudo_labels.values())

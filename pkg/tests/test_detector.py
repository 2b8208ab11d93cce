"""
Tests for the toy detector: geometry, head decoding, loss, gradients,
training steps and checkpoints.
"""

import json

import numpy as np
import pytest

from conftest import make_box, tiny_spec
from src.core.exceptions import ArgumentError, DataError, TrainingError
from src.detector.boxes import iou, iou_matrix
from src.detector.checkpoint import load_model, save_model
from src.detector.loss import LossBreakdown, assign_targets, box_targets, detection_loss, detection_loss_and_grad
from src.detector.model import DetectMode, HeadOutput, ModelSpec, ToyModel, decode_head, detect, expected_shapes
from src.detector.train import ItemKind, TrainItem, gradient_step, train_step
from src.events.voxel import EventTensor, VoxelSpec, voxelize
from src.events.windows import Window
from src.fusion.block import FusionMode

STEP = 1e-5


def zero_model(spec: ModelSpec) -> ToyModel:
    return ToyModel(spec, {name: np.zeros(shape, dtype=spec.dtype) for name, shape in expected_shapes(spec).items()})


def random_model(spec: ModelSpec, seed: int = 0) -> ToyModel:
    """Every weight and bias random so no ReLU sits exactly at its kink."""
    rng = np.random.default_rng(seed)
    model = ToyModel.initialize(spec, seed)
    for name, value in model.params.items():
        if not name.endswith(".sigma"):
            model.params[name] = value + rng.normal(scale=0.5, size=value.shape)
    return model


def scene_item(scene, t1, t2, spec, weight=1.0, kind=ItemKind.GT) -> TrainItem:
    voxels = VoxelSpec(T=spec.bins, H=spec.height, W=spec.width)
    window = Window(t1=t1, t2=t2)
    tensor = voxelize(scene.events, window, voxels)
    return TrainItem(
        frame=scene.frames.latest_at(t1),
        events_a=tensor,
        events_b=tensor,
        gts=scene.gt.boxes_at(t2),
        weight=weight,
        kind=kind,
    )


class TestIoU:
    """Test box overlap."""

    def test_identical_and_disjoint(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
        assert iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0
        assert iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0

    def test_half_overlap(self):
        """Two unit squares shifted by half overlap with IoU 1/3."""
        assert iou((0, 0, 1, 1), (0.5, 0, 1.5, 1)) == pytest.approx(1 / 3)

    def test_degenerate_box(self):
        with pytest.raises(ArgumentError) as exc_info:
            iou((0, 0, 0, 1), (0, 0, 1, 1))
        assert exc_info.value.field == "box_a"

    def test_matrix_matches_pairs(self):
        rng = np.random.default_rng(3)
        corners = rng.uniform(0, 10, size=(12, 2))
        sizes = rng.uniform(0.5, 5, size=(12, 2))
        boxes = [tuple(np.concatenate([c, c + s])) for c, s in zip(corners, sizes)]
        matrix = iou_matrix(boxes[:5], boxes[5:])
        for i in range(5):
            for j in range(7):
                assert matrix[i, j] == pytest.approx(iou(boxes[i], boxes[5 + j]))
        assert iou_matrix([], boxes).shape == (0, 12)


class TestHead:
    """Test the forward pass and head decoding."""

    def test_zero_model_scores_every_cell(self):
        """All-zero parameters give score 0.25 and a stride-sized box per cell."""
        spec = tiny_spec()
        tensor = EventTensor.zeros(VoxelSpec(T=2, H=16, W=16), Window(t1=0, t2=500))
        dets = detect(zero_model(spec), tensor, np.zeros((16, 16)))
        assert len(dets) == 16
        assert all(d.score == pytest.approx(0.25) and d.class_id == 0 and d.t == 500 for d in dets)
        assert {d.box for d in dets} == {(4.0 * j, 4.0 * i, 4.0 * j + 4, 4.0 * i + 4) for i in range(4) for j in range(4)}

    def test_decode_respects_score_floor_and_clips(self):
        raw = np.zeros((7, 1, 2))
        raw[0] = [-10.0, 10.0]
        raw[1] = [0.0, 5.0]
        raw[5] = [0.0, 2.0]
        dets = decode_head(HeadOutput(raw=raw, num_classes=2), t=9, width=8, height=4)
        assert len(dets) == 1
        det = dets[0]
        assert det.class_id == 0
        assert det.box[0] >= 0 and det.box[2] <= 8 and det.box[3] <= 4

    def test_event_only_ignores_frame(self, tiny_model, tiny_scene):
        tensor = voxelize(tiny_scene.events, Window(t1=0, t2=50_000), VoxelSpec(T=2, H=16, W=16))
        without = tiny_model.detect(tensor, None, DetectMode.EVENT_ONLY)
        with_frame = tiny_model.detect(tensor, tiny_scene.frames.images[0], DetectMode.EVENT_ONLY)
        assert without == with_frame

    def test_detect_is_deterministic(self, tiny_model, tiny_scene):
        tensor = voxelize(tiny_scene.events, Window(t1=0, t2=50_000), VoxelSpec(T=2, H=16, W=16))
        frame = tiny_scene.frames.images[0]
        assert tiny_model.detect(tensor, frame) == tiny_model.detect(tensor, frame)

    def test_shape_mismatches(self, tiny_model):
        wrong = EventTensor.zeros(VoxelSpec(T=3, H=16, W=16), Window(t1=0, t2=10))
        with pytest.raises(ArgumentError) as exc_info:
            detect(tiny_model, wrong, np.zeros((16, 16)))
        assert exc_info.value.field == "tensor"
        right = EventTensor.zeros(VoxelSpec(T=2, H=16, W=16), Window(t1=0, t2=10))
        with pytest.raises(ArgumentError) as exc_info:
            detect(tiny_model, right, np.zeros((8, 8)))
        assert exc_info.value.field == "frame"
        with pytest.raises(ArgumentError):
            detect(tiny_model, right, None, DetectMode.FUSED)

    def test_spec_requires_stride_multiple(self):
        with pytest.raises(ValueError):
            ModelSpec(bins=2, height=10, width=16)

    def test_parameter_names_are_checked(self):
        spec = tiny_spec()
        params = ToyModel.initialize(spec, 0).params
        params.pop("head.b2")
        with pytest.raises(ArgumentError):
            ToyModel(spec, params)


class TestLoss:
    """Test target assignment and the detection loss."""

    def test_first_box_wins_contested_cell(self):
        gts = [make_box(0, 0, 3, 3, track_id=0), make_box(1, 1, 3, 3, track_id=1), make_box(9, 9, 12, 12, track_id=2)]
        assigned = assign_targets(gts, (4, 4), 4)
        assert [(row, col, gt.track_id) for row, col, gt in assigned] == [(0, 0, 0), (2, 2, 2)]

    def test_without_ground_truth(self):
        """Only the all-negative objectness term remains."""
        head = HeadOutput(raw=np.zeros((7, 4, 4)), num_classes=2)
        loss = detection_loss(head, [])
        assert loss.iou_loss == 0 and loss.reg_loss == 0
        assert loss.cls_loss == pytest.approx(np.log(2.0))

    def test_perfect_prediction(self):
        gts = [make_box(1, 2, 6, 7, class_id=1), make_box(9, 9, 15, 14, class_id=0)]
        raw = np.full((7, 4, 4), -12.0)
        for row, col, gt in assign_targets(gts, (4, 4), 4):
            raw[0, row, col] = 12.0
            raw[1 + gt.class_id, row, col] = 12.0
            raw[3:, row, col] = box_targets(gt, row, col, 4)
        loss = detection_loss(HeadOutput(raw=raw, num_classes=2), gts)
        assert loss.total <= 1e-3

    def test_fuse_reg_is_carried(self):
        head = HeadOutput(raw=np.zeros((7, 2, 2)), num_classes=2, fuse_reg=0.125)
        loss = detection_loss(head, [])
        assert loss.fuse_reg == 0.125
        assert loss.total == pytest.approx(loss.cls_loss + 0.125)

    def test_breakdown_validation(self):
        with pytest.raises(ValueError):
            LossBreakdown(iou_loss=1.0, cls_loss=1.0, reg_loss=1.0, total=2.0)
        combined = LossBreakdown.weighted_sum(
            [(1.0, LossBreakdown.compose(1.0, 1.0, 0.0)), (0.5, LossBreakdown.compose(1.0, 0.0, 1.0))], 1.0
        )
        assert combined.total == pytest.approx(3.0)

    def test_gradient_matches_finite_differences(self):
        """d_raw on a 4x4 grid against central differences."""
        rng = np.random.default_rng(12)
        raw = rng.normal(scale=0.3, size=(7, 4, 4))
        gts = [make_box(1.5, 2.0, 6.5, 7.5, class_id=1), make_box(8.2, 9.1, 14.7, 13.3, class_id=0, track_id=1)]
        _, d_raw = detection_loss_and_grad(HeadOutput(raw=raw, num_classes=2), gts)
        numeric = np.zeros_like(raw)
        for index in np.ndindex(raw.shape):
            saved = raw[index]
            raw[index] = saved + STEP
            upper = detection_loss(HeadOutput(raw=raw, num_classes=2), gts).total
            raw[index] = saved - STEP
            lower = detection_loss(HeadOutput(raw=raw, num_classes=2), gts).total
            raw[index] = saved
            numeric[index] = (upper - lower) / (2 * STEP)
        np.testing.assert_allclose(d_raw, numeric, rtol=1e-4, atol=1e-6)


class TestModelGradients:
    """Full backward pass against finite differences on an 8x8 input."""

    @pytest.mark.parametrize("fusion_mode", list(FusionMode))
    @pytest.mark.parametrize("mode", list(DetectMode))
    def test_backward_matches_finite_differences(self, fusion_mode, mode):
        spec = ModelSpec(bins=1, height=8, width=8, c1=2, c2=2, hidden=3, fusion_mode=fusion_mode,
                         lambda_reg=0.5, sigma_init=0.2, dtype="float64")
        model = random_model(spec, seed=4)
        rng = np.random.default_rng(6)
        events_a = rng.uniform(0, 1.5, size=(2, 8, 8))
        events_b = rng.uniform(0, 1.5, size=(2, 8, 8))
        frame = rng.uniform(0, 1, size=(1, 8, 8))
        gts = [make_box(1.0, 1.5, 5.0, 6.0, class_id=1), make_box(4.5, 4.2, 7.6, 7.8, track_id=1)]

        def loss():
            head, _ = model.forward(events_a, events_b, frame, mode, training=True, rng=np.random.default_rng(2))
            return detection_loss(head, gts).total

        head, cache = model.forward(events_a, events_b, frame, mode, training=True, rng=np.random.default_rng(2))
        _, d_raw = detection_loss_and_grad(head, gts)
        grads = model.backward(cache, d_raw)
        for name, value in model.params.items():
            numeric = np.zeros_like(value)
            for index in np.ndindex(value.shape):
                saved = value[index]
                value[index] = saved + STEP
                upper = loss()
                value[index] = saved - STEP
                lower = loss()
                value[index] = saved
                numeric[index] = (upper - lower) / (2 * STEP)
            np.testing.assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-6, err_msg=name)


class TestTrainStep:
    """Test SGD steps."""

    def test_zero_learning_rate_keeps_parameters(self, tiny_model, tiny_scene, rng):
        item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        new_model, loss = train_step(tiny_model, [item], 0.0, rng)
        assert loss.is_finite
        for name, value in tiny_model.params.items():
            assert np.array_equal(new_model.params[name], value), name

    def test_input_model_is_not_modified(self, tiny_model, tiny_scene, rng):
        before = tiny_model.copy()
        item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        new_model, _ = train_step(tiny_model, [item], 0.1, rng)
        assert all(np.array_equal(before.params[n], tiny_model.params[n]) for n in before.params)
        assert any(not np.array_equal(new_model.params[n], tiny_model.params[n]) for n in before.params)

    def test_same_seed_same_step(self, tiny_model, tiny_scene):
        batch = [scene_item(tiny_scene, 0, 50_000, tiny_model.spec), scene_item(tiny_scene, 50_000, 100_000, tiny_model.spec)]
        first, loss_a = train_step(tiny_model, batch, 0.05, np.random.default_rng(3))
        second, loss_b = train_step(tiny_model, batch, 0.05, np.random.default_rng(3))
        assert loss_a == loss_b
        assert all(np.array_equal(first.params[n], second.params[n]) for n in first.params)

    def test_invalid_learning_rate(self, tiny_model, tiny_scene, rng):
        item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        with pytest.raises(TrainingError):
            train_step(tiny_model, [item], -0.1, rng)
        with pytest.raises(TrainingError):
            train_step(tiny_model, [], 0.1, rng)

    def test_zero_weight_items_are_skipped(self, tiny_model, tiny_scene):
        """A zero-weight pseudo item changes nothing, not even the noise stream."""
        gt_item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        pseudo = scene_item(tiny_scene, 50_000, 100_000, tiny_model.spec, weight=0.0, kind=ItemKind.PSEUDO)
        alone, loss_alone = train_step(tiny_model, [gt_item], 0.05, np.random.default_rng(9))
        mixed, loss_mixed = train_step(tiny_model, [gt_item, pseudo], 0.05, np.random.default_rng(9))
        assert loss_alone == loss_mixed
        assert all(np.array_equal(alone.params[n], mixed.params[n]) for n in alone.params)
        with pytest.raises(TrainingError):
            train_step(tiny_model, [pseudo], 0.05, np.random.default_rng(9))

    def test_pseudo_weight_scales_its_term(self, tiny_scene):
        """Batch loss is (L_gt + w * L_pseudo) / n_gt."""
        model = ToyModel.initialize(tiny_spec(gate_noise=False), seed=2)
        gt_item = scene_item(tiny_scene, 0, 50_000, model.spec)
        other = scene_item(tiny_scene, 50_000, 100_000, model.spec)
        pseudo = scene_item(tiny_scene, 50_000, 100_000, model.spec, weight=0.5, kind=ItemKind.PSEUDO)
        rng = np.random.default_rng(0)
        _, loss_gt = train_step(model, [gt_item], 0.0, rng)
        _, loss_other = train_step(model, [other], 0.0, rng)
        _, loss_mixed = train_step(model, [gt_item, pseudo], 0.0, rng)
        assert loss_mixed.total == pytest.approx(loss_gt.total + 0.5 * loss_other.total)

    def test_gradient_clipping(self, tiny_scene):
        """The update norm is lr * max_grad_norm when the gradient is larger."""
        model = ToyModel.initialize(tiny_spec(gate_noise=False), seed=2)
        item = scene_item(tiny_scene, 0, 50_000, model.spec)
        outcome = gradient_step(model, [item], 0.1, np.random.default_rng(0), max_grad_norm=1e-3)
        assert outcome.grad_norm > 1e-3
        delta = np.sqrt(sum(np.sum((outcome.model.params[n] - model.params[n]) ** 2) for n in model.params))
        assert delta == pytest.approx(0.1 * 1e-3, rel=1e-6)

    def test_noise_scales_stay_non_negative(self, tiny_model, tiny_scene, rng):
        item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        new_model = tiny_model
        for _ in range(3):
            new_model, _ = train_step(new_model, [item], 1.0, rng, max_grad_norm=10.0)
        assert all(new_model.params[n][0] >= 0 for n in ("fuse1.sigma", "fuse2.sigma"))

    def test_repeated_steps_reduce_loss(self, tiny_scene):
        model = ToyModel.initialize(tiny_spec(gate_noise=False), seed=2)
        item = scene_item(tiny_scene, 0, 50_000, model.spec)
        rng = np.random.default_rng(0)
        _, first = train_step(model, [item], 0.0, rng)
        for _ in range(30):
            model, _ = train_step(model, [item], 0.01, rng, max_grad_norm=10.0)
        _, last = train_step(model, [item], 0.0, rng)
        assert last.total < first.total

    def test_event_only_training_leaves_frame_branch(self, tiny_model, tiny_scene, rng):
        item = scene_item(tiny_scene, 0, 50_000, tiny_model.spec)
        new_model, _ = train_step(tiny_model, [item], 0.1, rng, mode=DetectMode.EVENT_ONLY)
        for name in ("frame.conv1.w", "frame.conv2.w", "fuse1.proj", "fuse2.gate_w"):
            assert np.array_equal(new_model.params[name], tiny_model.params[name])


class TestCheckpoint:
    """Test model files."""

    def test_round_trip(self, tmp_path, tiny_model):
        loaded = load_model(save_model(tmp_path / "model.bin", tiny_model))
        assert loaded.spec == tiny_model.spec
        for name, value in tiny_model.params.items():
            assert np.array_equal(loaded.params[name], value)

    def test_float32_round_trip(self, tmp_path):
        model = ToyModel.initialize(tiny_spec(dtype="float32"), seed=1)
        loaded = load_model(save_model(tmp_path / "model.bin", model))
        assert loaded.params["head.w1"].dtype == np.float32
        assert np.array_equal(loaded.params["head.w1"], model.params["head.w1"])

    def test_spec_disagreeing_with_tensors(self, tmp_path, tiny_model):
        path = save_model(tmp_path / "model.bin", tiny_model)
        sidecar = tmp_path / "model.json"
        document = json.loads(sidecar.read_text())
        document["meta"]["spec"]["c1"] = 5
        sidecar.write_text(json.dumps(document))
        with pytest.raises(DataError):
            load_model(path)

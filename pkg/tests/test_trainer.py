"""Optimizer hand traces, schedule rule, epoch loop, checkpoints, resume."""

from dataclasses import replace

import numpy as np
import pytest

from predcode.checkpoint import load_checkpoint, save_checkpoint
from predcode.data.clipfile import FeatureClip
from predcode.data.shapes import MovingShapesConfig, generate_moving_shapes
from predcode.encoder import EncoderConfig
from predcode.errors import ConfigurationError, FormatError, NumericsError
from predcode.model import ActionModel, ModelConfig
from predcode.optim import PlateauState, SGDOptimizer, plateau_schedule, sgd_update
from predcode.prednet import PredNetConfig
from predcode.tensor import Tensor
from predcode.training import (
    ClipDataset,
    PipelineConfig,
    TrainConfig,
    compute_loss,
    fit,
    train_epoch,
    validation_pass,
)

TINY_PREDNET = PredNetConfig(
    num_layers=2, repr_channels=(4, 4), input_channels=4, height=4, width=4, time_steps=4,
    lstm_gain=8.0,
)
TINY_PIPELINE = PipelineConfig(window=8, steps=4, crop=16, mean=(0.5,), std=(0.5,))


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("shapes")
    cfg = MovingShapesConfig(canvas=16, frames=12, size_range=(3, 6), seed=3)
    manifests = generate_moving_shapes(cfg, out, {"train": 3, "val": 2})
    return manifests


def tiny_model(seed=0, trainable_encoder=True) -> ActionModel:
    return ActionModel(
        ModelConfig(
            prednet=TINY_PREDNET,
            num_classes=4,
            encoder=EncoderConfig(1, 4, 4, trainable=trainable_encoder),
            seed=seed,
        )
    )


class TestSgdUpdate:
    def test_vanilla_step(self):
        p, v = sgd_update(np.array([1.0]), np.array([0.5]), np.array([0.0]),
                          lr=0.1, momentum=0.0, weight_decay=0.0)
        assert abs(p[0] - 0.95) <= 1e-15
        assert abs(v[0] - 0.5) <= 1e-15

    def test_weight_decay_added_to_gradient(self):
        p, v = sgd_update(np.array([1.0]), np.array([0.5]), np.array([0.0]),
                          lr=0.1, momentum=0.0, weight_decay=0.001)
        assert abs(v[0] - 0.501) <= 1e-15
        assert abs(p[0] - 0.9499) <= 1e-15

    def test_two_momentum_steps(self):
        p = np.array([1.0])
        v = np.array([0.0])
        for _ in range(2):
            p, v = sgd_update(p, np.array([1.0]), v, lr=0.1, momentum=0.9, weight_decay=0.0)
        assert abs(v[0] - 1.9) <= 1e-15
        assert abs(p[0] - 0.71) <= 1e-15

    def test_paper_constants_trace(self):
        # momentum 0.9 and weight decay 0.001 at lr 0.0064
        p, v = sgd_update(np.array([2.0]), np.array([0.25]), np.array([0.5]),
                          lr=0.0064, momentum=0.9, weight_decay=0.001)
        g = 0.25 + 0.001 * 2.0
        expect_v = 0.9 * 0.5 + g
        assert abs(v[0] - expect_v) <= 1e-15
        assert abs(p[0] - (2.0 - 0.0064 * expect_v)) <= 1e-15

    def test_zero_lr_is_identity_on_parameters(self):
        rng = np.random.default_rng(0)
        p0 = rng.normal(size=(3, 3))
        p, _ = sgd_update(p0, rng.normal(size=(3, 3)), rng.normal(size=(3, 3)),
                          lr=0.0, momentum=0.9, weight_decay=0.001)
        np.testing.assert_array_equal(p, p0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            sgd_update(np.zeros(3), np.zeros(4), np.zeros(3), lr=0.1)


class TestPlateauSchedule:
    def test_paper_trace_drops_after_fourth_flat_epoch(self):
        state = PlateauState(lr=0.0064)
        lrs = []
        for loss in (1.0, 0.9, 0.91, 0.92, 0.93, 0.94):
            state = plateau_schedule(state, loss)
            lrs.append(state.lr)
        assert lrs == [0.0064] * 5 + [0.00064]

    def test_improving_losses_never_change_lr(self):
        state = PlateauState(lr=0.0064)
        for loss in np.linspace(2.0, 0.5, 12):
            state = plateau_schedule(state, float(loss))
        assert state.lr == 0.0064

    def test_two_consecutive_plateaus(self):
        state = PlateauState(lr=0.0064)
        state = plateau_schedule(state, 1.0)
        for _ in range(4):
            state = plateau_schedule(state, 1.0)
        assert state.lr == pytest.approx(0.00064, rel=1e-12)
        for _ in range(4):
            state = plateau_schedule(state, 1.0)
        assert state.lr == pytest.approx(0.000064, rel=1e-12)

    def test_relative_threshold(self):
        state = PlateauState(lr=1.0, threshold=1e-3)
        state = plateau_schedule(state, 1.0)
        state = plateau_schedule(state, 0.9995)  # within threshold: not an improvement
        assert state.epochs_since_best == 1
        state = plateau_schedule(state, 0.99)
        assert state.epochs_since_best == 0

    def test_non_finite_loss_rejected(self):
        with pytest.raises(Exception):
            plateau_schedule(PlateauState(lr=1.0), float("nan"))


class TestComputeLoss:
    def test_uniform_logits_classification(self):
        model = tiny_model()
        model.head_weight.data[:] = 0.0
        model.head_bias.data[:] = 0.0
        clip = FeatureClip(frames=np.zeros((4, 4, 4, 4)), label=0, pixels=False)
        forward = model.forward_clip(clip)
        loss = compute_loss(forward, 0, "classification")
        assert loss.item() == pytest.approx(np.log(4.0), abs=1e-12)

    def test_prediction_error_zero_when_errors_zero(self):
        model = tiny_model()
        for p in model.prednet.params.values():
            p.data[:] = 0.0
        clip = FeatureClip(frames=np.zeros((4, 4, 4, 4)), label=0, pixels=False)
        forward = model.forward_clip(clip)
        assert compute_loss(forward, 0, "prediction_error").item() == 0.0

    def test_combined_is_exact_sum(self):
        model = tiny_model(seed=2)
        clip = FeatureClip(
            frames=np.random.default_rng(0).normal(size=(4, 4, 4, 4)), label=1, pixels=False
        )
        forward = model.forward_clip(clip)
        cls = compute_loss(forward, 1, "classification").item()
        pe = compute_loss(forward, 1, "prediction_error").item()
        combined = compute_loss(forward, 1, "combined", alpha=0.25).item()
        assert combined == pytest.approx(cls + 0.25 * pe, abs=1e-12)

    def test_unknown_mode_rejected(self):
        model = tiny_model()
        clip = FeatureClip(frames=np.zeros((4, 4, 4, 4)), label=0, pixels=False)
        with pytest.raises(ConfigurationError):
            compute_loss(model.forward_clip(clip), 0, "hinge")


class TestTrainEpoch:
    def _cfg(self, **overrides):
        defaults = dict(lr0=0.05, batch_size=2, epochs=1, seed=0, loss_mode="classification")
        return TrainConfig(**{**defaults, **overrides})

    def test_zero_lr_leaves_parameters_bit_identical(self, tiny_data):
        model = tiny_model()
        cfg = self._cfg()
        opt = SGDOptimizer(model.trainable_parameters(), lr=1.0)
        opt.schedule = replace(opt.schedule, lr=0.0)
        dataset = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        before = {k: v.data.tobytes() for k, v in model.named_parameters().items()}
        train_epoch(model, dataset, cfg, opt, epoch=1)
        after = {k: v.data.tobytes() for k, v in model.named_parameters().items()}
        assert before == after

    def test_fixed_encoder_untouched_rest_changes(self, tiny_data):
        model = tiny_model(trainable_encoder=False)
        cfg = self._cfg()
        opt = SGDOptimizer(model.trainable_parameters(), lr=cfg.lr0)
        dataset = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        before = {k: v.data.tobytes() for k, v in model.named_parameters().items()}
        train_epoch(model, dataset, cfg, opt, epoch=1)
        after = {k: v.data.tobytes() for k, v in model.named_parameters().items()}
        for name in before:
            if name.startswith("encoder."):
                assert before[name] == after[name], name
            else:
                assert before[name] != after[name], name

    def test_same_seed_same_stats(self, tiny_data):
        dataset = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        results = []
        for _ in range(2):
            model = tiny_model()
            cfg = self._cfg()
            opt = SGDOptimizer(model.trainable_parameters(), lr=cfg.lr0)
            stats = train_epoch(model, dataset, cfg, opt, epoch=1)
            results.append((stats.mean_loss, stats.accuracy))
        assert results[0] == results[1]

    def test_nan_loss_aborts_naming_batch(self, tiny_data):
        model = tiny_model()
        model.head_weight.data[0, 0] = np.nan
        cfg = self._cfg()
        opt = SGDOptimizer(model.trainable_parameters(), lr=cfg.lr0)
        dataset = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        with pytest.raises(NumericsError) as exc:
            train_epoch(model, dataset, cfg, opt, epoch=1)
        assert "batch 0" in str(exc.value)

    def test_parameters_and_velocities_stay_finite(self, tiny_data):
        model = tiny_model()
        cfg = self._cfg(epochs=2)
        opt = SGDOptimizer(model.trainable_parameters(), lr=cfg.lr0)
        dataset = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        for epoch in (1, 2):
            train_epoch(model, dataset, cfg, opt, epoch)
        for p in model.named_parameters().values():
            assert np.all(np.isfinite(p.data))
        for v in opt.velocities.values():
            assert np.all(np.isfinite(v))


class TestFit:
    def _cfg(self, epochs, seed=0):
        return TrainConfig(lr0=0.05, batch_size=4, epochs=epochs, seed=seed,
                           loss_mode="classification")

    def test_zero_epochs_writes_initial_checkpoint_and_empty_log(self, tiny_data, tmp_path):
        model = tiny_model()
        result = fit(
            model, self._cfg(0),
            ClipDataset(tiny_data["train"], TINY_PIPELINE),
            ClipDataset(tiny_data["val"], TINY_PIPELINE),
            tmp_path,
        )
        assert result.checkpoint_path.exists()
        assert result.log_rows == []
        log = (tmp_path / "training_log.csv").read_text().strip().splitlines()
        assert log == ["epoch,lr,train_loss,val_loss,val_acc"]

    def test_three_epoch_logs_bit_identical(self, tiny_data, tmp_path):
        logs = []
        for run in ("a", "b"):
            out = tmp_path / run
            fit(
                tiny_model(), self._cfg(3),
                ClipDataset(tiny_data["train"], TINY_PIPELINE),
                ClipDataset(tiny_data["val"], TINY_PIPELINE),
                out,
            )
            logs.append((out / "training_log.csv").read_bytes())
        assert logs[0] == logs[1]

    def test_resume_is_bit_identical_to_uninterrupted(self, tiny_data, tmp_path):
        train_ds = ClipDataset(tiny_data["train"], TINY_PIPELINE)
        val_ds = ClipDataset(tiny_data["val"], TINY_PIPELINE)

        full_out = tmp_path / "full"
        fit(tiny_model(), self._cfg(2), train_ds, val_ds, full_out)

        part_out = tmp_path / "part"
        fit(tiny_model(), self._cfg(1), train_ds, val_ds, part_out)
        resumed_out = tmp_path / "resumed"
        fit(tiny_model(), self._cfg(2), train_ds, val_ds, resumed_out,
            resume=part_out / "checkpoint.pcck")

        full_rows = (full_out / "training_log.csv").read_text().strip().splitlines()
        resumed_rows = (resumed_out / "training_log.csv").read_text().strip().splitlines()
        assert full_rows[2] == resumed_rows[1]  # epoch-2 rows match exactly
        assert (full_out / "checkpoint.pcck").read_bytes() == (
            resumed_out / "checkpoint.pcck").read_bytes()

    def test_log_has_exactly_epochs_rows(self, tiny_data, tmp_path):
        result = fit(
            tiny_model(), self._cfg(2),
            ClipDataset(tiny_data["train"], TINY_PIPELINE),
            ClipDataset(tiny_data["val"], TINY_PIPELINE),
            tmp_path,
        )
        assert len(result.log_rows) == 2
        lines = (tmp_path / "training_log.csv").read_text().strip().splitlines()
        assert len(lines) == 3

    def test_learning_rate_never_increases(self, tiny_data, tmp_path):
        result = fit(
            tiny_model(), self._cfg(6),
            ClipDataset(tiny_data["train"], TINY_PIPELINE),
            ClipDataset(tiny_data["val"], TINY_PIPELINE),
            tmp_path,
        )
        lrs = [row["lr"] for row in result.log_rows]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        for lr in lrs:
            ratio = 0.05 / lr
            assert abs(ratio - round(ratio)) < 1e-9
            assert round(ratio) in (1, 10, 100, 1000)


class TestCheckpoint:
    def test_round_trip_reproduces_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "param/b": rng.normal(size=(2, 3)).astype(np.float32).astype(np.float64),
            "param/a": rng.normal(size=5).astype(np.float32).astype(np.float64),
        }
        meta = {"version": 1, "epoch": 3, "optimizer": {"lr": 0.0064}}
        first = tmp_path / "one.pcck"
        save_checkpoint(first, tensors, meta)
        loaded, loaded_meta = load_checkpoint(first)
        assert loaded_meta == meta
        second = tmp_path / "two.pcck"
        save_checkpoint(second, loaded, loaded_meta)
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pcck"
        save_checkpoint(path, {"x": np.zeros(2)}, {})
        data = bytearray(path.read_bytes())
        data[0] = 0
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError) as exc:
            load_checkpoint(path)
        assert exc.value.offset == 0

    def test_truncation_rejected_with_offset(self, tmp_path):
        path = tmp_path / "trunc.pcck"
        save_checkpoint(path, {"x": np.zeros(64)}, {"epoch": 1})
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_scalar_tensor_survives(self, tmp_path):
        path = tmp_path / "s.pcck"
        save_checkpoint(path, {"s": np.float32(2.5)}, {})
        loaded, _ = load_checkpoint(path)
        assert loaded["s"].shape == ()
        assert loaded["s"] == 2.5


class TestPredictionErrorTraining:
    def test_loss_strictly_decreases_on_constant_clip(self):
        # a constant-frame clip is maximally predictable: descent on the
        # prediction-error objective should be monotone from the start
        from predcode.tensor import GradientTape

        model = tiny_model(seed=4)
        rng = np.random.default_rng(1)
        frame = rng.normal(size=(4, 4, 4))
        clip = FeatureClip(frames=np.stack([frame] * 4), label=0, pixels=False)
        opt = SGDOptimizer(model.prednet.named_parameters(), lr=0.01, momentum=0.0,
                           weight_decay=0.0)
        losses = []
        for _ in range(20):
            opt.zero_grad()
            with GradientTape() as tape:
                loss = compute_loss(model.forward_clip(clip), 0, "prediction_error")
            tape.backward(loss)
            losses.append(loss.item())
            opt.step()
        assert all(a > b for a, b in zip(losses, losses[1:])), losses


class TestValidationPass:
    def test_deterministic_across_calls(self, tiny_data):
        model = tiny_model(seed=9)
        cfg = TrainConfig(lr0=0.05, epochs=1, seed=0)
        dataset = ClipDataset(tiny_data["val"], TINY_PIPELINE)
        a = validation_pass(model, dataset, cfg)
        b = validation_pass(model, dataset, cfg)
        assert (a.mean_loss, a.accuracy) == (b.mean_loss, b.accuracy)

"""Fusion head algebra and full-model wiring, including the frame-only baseline."""

import numpy as np
import pytest

from predcode.data.clipfile import FeatureClip
from predcode.encoder import BuiltinEncoder, EncoderConfig
from predcode.errors import ConfigurationError, UsageError
from predcode.fusion import aggregate_scores, argmax_label, classify_step, fuse_step_features, predict_clip
from predcode.model import ActionModel, ModelConfig
from predcode.prednet import PredNetConfig, StepOutput
from predcode.tensor import (
    GradientTape,
    Tensor,
    finite_difference_gradient,
    relative_error,
    softmax_cross_entropy,
)

DESK_PREDNET = PredNetConfig(
    num_layers=2, repr_channels=(4, 4), input_channels=8, height=4, width=4, time_steps=5
)


def synthetic_step(c0=2048, repr_channels=(64, 64), spatial=(7, 7), fill=0.0) -> StepOutput:
    shape = lambda c: np.full((c, *spatial), fill)
    return StepOutput(
        A0=Tensor(shape(c0)),
        Ahat=[Tensor(shape(c0))],
        E=[Tensor(shape(2 * c0))],
        R=[Tensor(shape(c)) for c in repr_channels],
        t=1,
    )


def desk_model(seed=0, use_prednet=True, num_classes=2, encoder=None) -> ActionModel:
    return ActionModel(
        ModelConfig(
            prednet=DESK_PREDNET,
            num_classes=num_classes,
            encoder=encoder,
            use_prednet=use_prednet,
            seed=seed,
        )
    )


def feature_clip(seed=0, label=1, steps=5) -> FeatureClip:
    rng = np.random.default_rng(seed)
    return FeatureClip(frames=rng.normal(size=(steps, 8, 4, 4)), label=label, pixels=False)


class TestFusion:
    def test_paper_profile_length_2176(self):
        fused = fuse_step_features(synthetic_step())
        assert fused.shape == (2176,)

    def test_all_zero_step_gives_zero_vector(self):
        fused = fuse_step_features(synthetic_step(fill=0.0))
        np.testing.assert_array_equal(fused.data, np.zeros(2176))

    def test_desk_profile_length_formula(self):
        fused = fuse_step_features(synthetic_step(c0=8, repr_channels=(4, 4), spatial=(3, 3)))
        assert fused.shape == (16,)

    def test_concatenation_order_a0_then_layers(self):
        step = synthetic_step(c0=2, repr_channels=(3, 4), spatial=(2, 2))
        step.A0.data[:] = 1.0
        step.R[0].data[:] = 2.0
        step.R[1].data[:] = 3.0
        fused = fuse_step_features(step).data
        np.testing.assert_array_equal(fused, [1, 1, 2, 2, 2, 3, 3, 3, 3])


class TestClassify:
    def test_zero_weights_return_bias(self):
        fused = Tensor(np.ones(6))
        scores = classify_step(fused, Tensor(np.zeros((3, 6))), Tensor(np.array([0.5, -1.0, 2.0])))
        np.testing.assert_array_equal(scores.data, [0.5, -1.0, 2.0])

    def test_hand_checkable_two_class_scores(self):
        fused = Tensor(np.array([1.0, 2.0, 3.0]))
        weight = Tensor(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
        scores = classify_step(fused, weight, Tensor(np.zeros(2)))
        np.testing.assert_array_equal(scores.data, [1.0, 3.0])

    def test_fused_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            classify_step(Tensor(np.ones(5)), Tensor(np.zeros((2, 6))), Tensor(np.zeros(2)))

    def test_gradient_through_fuse_and_classify(self):
        rng = np.random.default_rng(2)
        step = synthetic_step(c0=3, repr_channels=(2, 2), spatial=(3, 3))
        step.A0.data[:] = rng.normal(size=step.A0.shape)
        step.R[0].data[:] = rng.normal(size=step.R[0].shape)
        step.R[1].data[:] = rng.normal(size=step.R[1].shape)
        weight = Tensor(rng.normal(size=(2, 7)) * 0.5, requires_grad=True)
        bias = Tensor(np.zeros(2), requires_grad=True)

        def loss_fn(_=None):
            return softmax_cross_entropy(classify_step(fuse_step_features(step), weight, bias), 0)

        with GradientTape() as tape:
            loss = loss_fn()
        tape.backward(loss)
        for p in (weight, bias):
            numeric = finite_difference_gradient(loss_fn, p).data
            assert relative_error(p.grad, numeric) <= 1e-6


class TestAggregate:
    def test_identical_vectors_unchanged(self):
        v = Tensor(np.array([1.0, -2.0, 0.5]))
        out = aggregate_scores([v, v, v])
        np.testing.assert_array_equal(out.data, v.data)

    def test_two_onehots_average(self):
        out = aggregate_scores([Tensor(np.array([1.0, 0.0])), Tensor(np.array([0.0, 1.0]))])
        np.testing.assert_array_equal(out.data, [0.5, 0.5])

    def test_permutation_invariant_bit_identical(self):
        rng = np.random.default_rng(3)
        vs = [Tensor(rng.normal(size=4)) for _ in range(6)]
        a = aggregate_scores(vs).data.tobytes()
        b = aggregate_scores(vs[::-1]).data.tobytes()
        assert a == b

    def test_empty_list_is_usage_error(self):
        with pytest.raises(UsageError):
            aggregate_scores([])


class TestPredictClip:
    def test_constant_bias_wins_every_clip(self):
        model = desk_model()
        model.head_weight.data[:] = 0.0
        model.head_bias.data[:] = [0.0, 3.0]
        for seed in range(3):
            label, scores, per_step = predict_clip(model, feature_clip(seed=seed))
            assert label == 1
            np.testing.assert_allclose(scores.data, [0.0, 3.0], atol=1e-12)

    def test_per_step_scores_length_is_time_steps(self):
        _, _, per_step = predict_clip(desk_model(), feature_clip())
        assert len(per_step) == DESK_PREDNET.time_steps

    def test_argmax_invariant_to_constant_logit_shift(self):
        model = desk_model(seed=5)
        clip = feature_clip(seed=4)
        label, _, _ = predict_clip(model, clip)
        model.head_bias.data += 17.5  # shifts every logit at every step
        shifted_label, _, _ = predict_clip(model, clip)
        assert shifted_label == label

    def test_argmax_tie_breaks_low_index(self):
        assert argmax_label(Tensor(np.array([2.0, 2.0, 1.0]))) == 0


class TestModelWiring:
    def test_gradients_reach_every_parameter_block(self):
        model = desk_model(seed=1)
        clip = feature_clip(seed=2)
        with GradientTape() as tape:
            forward = model.forward_clip(clip)
            loss = softmax_cross_entropy(aggregate_scores(forward.scores), clip.label)
        tape.backward(loss)
        for name, p in model.named_parameters().items():
            assert p.grad is not None, name
            assert np.any(p.grad != 0.0), f"all-zero gradient block: {name}"

    def test_baseline_mode_has_no_recurrence(self):
        model = desk_model(use_prednet=False)
        forward = model.forward_clip(feature_clip())
        assert forward.steps is None
        assert len(forward.scores) == 5
        assert model.head_weight.shape == (2, 8)  # input channels only

    def test_baseline_ignores_frame_order(self):
        model = desk_model(use_prednet=False, seed=3)
        clip = feature_clip(seed=6)
        reversed_clip = FeatureClip(frames=clip.frames[::-1].copy(), label=clip.label, pixels=False)
        a = aggregate_scores(model.forward_clip(clip).scores).data
        b = aggregate_scores(model.forward_clip(reversed_clip).scores).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_full_model_is_order_sensitive(self):
        model = desk_model(seed=3)
        clip = feature_clip(seed=6)
        reversed_clip = FeatureClip(frames=clip.frames[::-1].copy(), label=clip.label, pixels=False)
        a = aggregate_scores(model.forward_clip(clip).scores).data
        b = aggregate_scores(model.forward_clip(reversed_clip).scores).data
        assert np.max(np.abs(a - b)) > 1e-9

    def test_encoder_channel_contract_enforced(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(
                prednet=DESK_PREDNET,
                num_classes=2,
                encoder=EncoderConfig(in_channels=1, mid_channels=4, out_channels=5),
            )


class TestEncoder:
    def test_zero_weights_zero_features(self):
        enc = BuiltinEncoder(EncoderConfig(1, 4, 4))
        for p in enc.named_parameters().values():
            p.data[:] = 0.0
        out = enc.encode(Tensor(np.random.default_rng(0).normal(size=(1, 16, 16))))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_output_shape_matches_config(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            mid = int(rng.integers(1, 6))
            out_ch = int(rng.integers(1, 6))
            side = int(rng.choice([8, 12, 16, 32]))
            enc = BuiltinEncoder(EncoderConfig(1, mid, out_ch), rng)
            out = enc.encode(Tensor(rng.normal(size=(1, side, side))))
            assert out.shape == (out_ch, side // 4, side // 4)

    def test_indivisible_input_rejected(self):
        enc = BuiltinEncoder(EncoderConfig(1, 2, 2))
        with pytest.raises(ConfigurationError):
            enc.encode(Tensor(np.zeros((1, 10, 10))))

    def test_gradients_when_trainable(self):
        rng = np.random.default_rng(5)
        enc = BuiltinEncoder(EncoderConfig(1, 2, 3), rng)
        frame = Tensor(rng.normal(size=(1, 8, 8)))
        proj = rng.normal(size=(3, 2, 2))

        def loss_fn(_=None):
            from predcode.tensor import mul, sum_
            return sum_(mul(enc.encode(frame), Tensor(proj)))

        with GradientTape() as tape:
            loss = loss_fn()
        tape.backward(loss)
        for name, p in enc.named_parameters().items():
            numeric = finite_difference_gradient(loss_fn, p).data
            assert relative_error(p.grad, numeric) <= 1e-6, name

    def test_frozen_encoder_excluded_from_trainables(self):
        model = ActionModel(
            ModelConfig(
                prednet=PredNetConfig(
                    num_layers=2, repr_channels=(4, 4), input_channels=4,
                    height=4, width=4, time_steps=5,
                ),
                num_classes=2,
                encoder=EncoderConfig(1, 4, 4, trainable=False),
            )
        )
        trainable = model.trainable_parameters()
        assert not any(k.startswith("encoder.") for k in trainable)
        assert any(k.startswith("prednet.") for k in trainable)
        assert any(k.startswith("encoder.") for k in model.named_parameters())

"""Loss assembly, the epoch loop, and checkpointed fitting.

Training is deterministic given (config, seed, data): epoch shuffles and
per-clip frame draws come from generators derived as (seed, epoch) and
(seed, epoch, clip index). Parameters and velocities are rounded to their
float32 representation at every epoch boundary — exactly the precision
checkpoints store — so resuming from a checkpoint continues bit-identically
to the uninterrupted run.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data.clipfile import DatasetManifest, FeatureClip, read_feature_clip
from .data.sampling import preprocess_frame, sample_window, subsample_eval, subsample_train
from .errors import ConfigurationError, InputError, NumericsError, UsageError
from .fusion import aggregate_scores, argmax_label
from .model import ActionModel, ClipForward
from .optim import PlateauState, SGDOptimizer
from .prednet import prediction_error_loss
from .tensor import GradientTape, Tensor, add, average, scale, softmax_cross_entropy

LOSS_MODES = ("classification", "prediction_error", "combined")
LOG_FIELDS = ("epoch", "lr", "train_loss", "val_loss", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.0064
    momentum: float = 0.9
    weight_decay: float = 0.001
    batch_size: int = 16
    epochs: int = 10
    patience: int = 3
    threshold: float = 1e-3
    loss_mode: str = "classification"
    alpha: float = 0.1  # prediction-error weight in combined mode
    per_step_loss: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigurationError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size must be >= 1 and epochs >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """How raw clips become model input sequences."""

    window: int = 90
    steps: int = 30
    crop: int = 224
    mean: tuple[float, ...] = (0.5,)
    std: tuple[float, ...] = (0.5,)


class ClipDataset:
    """Manifest-backed clip access with train/eval sampling applied."""

    def __init__(self, manifest: DatasetManifest, pipeline: PipelineConfig):
        if len(manifest) == 0:
            raise UsageError(f"manifest for split {manifest.split!r} has no entries")
        self.manifest = manifest
        self.pipeline = pipeline

    def __len__(self) -> int:
        return len(self.manifest)

    @property
    def classes(self) -> list[str]:
        return self.manifest.classes

    def _assemble(self, raw: FeatureClip, indices: list[int]) -> FeatureClip:
        frames = raw.frames[indices]
        if raw.pixels:
            frames = np.stack(
                [preprocess_frame(f, self.pipeline.crop, self.pipeline.mean, self.pipeline.std) for f in frames]
            )
        return FeatureClip(frames=frames, label=raw.label, source_id=raw.source_id, pixels=raw.pixels)

    def sample_train(self, index: int, rng: np.random.Generator) -> FeatureClip:
        raw = read_feature_clip(self.manifest.entry_path(index))
        window = sample_window(raw.frame_count, self.pipeline.window, rng)
        picks = subsample_train(self.pipeline.window, self.pipeline.steps, rng)
        return self._assemble(raw, [window[i] for i in picks])

    def sample_eval(self, index: int) -> FeatureClip:
        raw = read_feature_clip(self.manifest.entry_path(index))
        window = sample_window(raw.frame_count, self.pipeline.window, rng=None)
        picks = subsample_eval(self.pipeline.window, self.pipeline.steps)
        return self._assemble(raw, [window[i] for i in picks])

    def label(self, index: int) -> int:
        return self.manifest.entries[index].label


def compute_loss(forward: ClipForward, label: int, mode: str, alpha: float = 0.1,
                 per_step: bool = False) -> Tensor:
    """Scalar training loss for one clip under the configured mode."""
    if mode not in LOSS_MODES:
        raise ConfigurationError(f"unknown loss mode {mode!r}")
    if mode in ("prediction_error", "combined") and forward.steps is None:
        raise ConfigurationError(f"loss mode {mode!r} needs the recurrence enabled")
    if mode == "prediction_error":
        return prediction_error_loss(forward.steps)
    if per_step:
        cls = average([softmax_cross_entropy(s, label) for s in forward.scores])
    else:
        cls = softmax_cross_entropy(aggregate_scores(forward.scores), label)
    if mode == "classification":
        return cls
    return add(cls, scale(prediction_error_loss(forward.steps), alpha))


@dataclass
class EpochStats:
    mean_loss: float
    accuracy: float


def _clip_rng(seed: int, epoch: int, clip_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, clip_index])


def train_epoch(
    model: ActionModel,
    dataset: ClipDataset,
    cfg: TrainConfig,
    optimizer: SGDOptimizer,
    epoch: int,
) -> EpochStats:
    """One pass over shuffled mini-batches; per-clip gradients are averaged."""
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    total_loss = 0.0
    hits = 0
    for batch_index, start in enumerate(range(0, len(order), cfg.batch_size)):
        batch = order[start:start + cfg.batch_size]
        optimizer.zero_grad()
        for clip_index in batch:
            clip = dataset.sample_train(int(clip_index), _clip_rng(cfg.seed, epoch, int(clip_index)))
            with GradientTape() as tape:
                forward = model.forward_clip(clip)
                loss = compute_loss(forward, clip.label, cfg.loss_mode, cfg.alpha, cfg.per_step_loss)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericsError(
                    f"non-finite loss {loss_value} in batch {batch_index} "
                    f"(clip {clip.source_id!r}, epoch {epoch})"
                )
            tape.backward(loss)
            total_loss += loss_value
            if argmax_label(aggregate_scores(forward.scores)) == clip.label:
                hits += 1
        optimizer.step(grad_scale=1.0 / len(batch))
    return EpochStats(mean_loss=total_loss / len(order), accuracy=hits / len(order))


def validation_pass(model: ActionModel, dataset: ClipDataset, cfg: TrainConfig) -> EpochStats:
    """Deterministic eval-sampled loss/accuracy, no gradients."""
    total_loss = 0.0
    hits = 0
    for i in range(len(dataset)):
        clip = dataset.sample_eval(i)
        forward = model.forward_clip(clip)
        loss = compute_loss(forward, clip.label, cfg.loss_mode, cfg.alpha, cfg.per_step_loss)
        total_loss += loss.item()
        if argmax_label(aggregate_scores(forward.scores)) == clip.label:
            hits += 1
    return EpochStats(mean_loss=total_loss / len(dataset), accuracy=hits / len(dataset))


def _round_to_f32(model: ActionModel, optimizer: SGDOptimizer) -> None:
    # Checkpoints store float32; keeping live state on the float32 grid makes
    # save/load/resume indistinguishable from an uninterrupted run.
    for p in model.named_parameters().values():
        p.data = p.data.astype(np.float32).astype(np.float64)
    for name in optimizer.velocities:
        optimizer.velocities[name] = optimizer.velocities[name].astype(np.float32).astype(np.float64)


def _checkpoint_tensors(model: ActionModel, optimizer: SGDOptimizer) -> dict[str, np.ndarray]:
    tensors = {f"param/{k}": v.data for k, v in model.named_parameters().items()}
    tensors.update({f"velocity/{k}": v for k, v in optimizer.velocities.items()})
    return tensors


def _checkpoint_meta(cfg: TrainConfig, schedule: PlateauState, epoch: int, config_echo: dict) -> dict:
    return {
        "version": 1,
        "epoch": epoch,
        "optimizer": {
            "lr": schedule.lr,
            "best_val": schedule.best_val,
            "epochs_since_best": schedule.epochs_since_best,
        },
        "rng": {"seed": cfg.seed, "next_epoch": epoch + 1},
        "config": config_echo,
    }


def write_training_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in LOG_FIELDS})


@dataclass
class FitResult:
    log_rows: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None
    best_path: Path | None = None
    best_val_acc: float = 0.0


def fit(
    model: ActionModel,
    cfg: TrainConfig,
    train_data: ClipDataset,
    val_data: ClipDataset,
    out_dir: str | Path,
    config_echo: dict | None = None,
    resume: str | Path | None = None,
) -> FitResult:
    """Run the training loop, writing the log and latest/best checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    optimizer = SGDOptimizer(
        model.trainable_parameters(),
        lr=cfg.lr0,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        patience=cfg.patience,
        threshold=cfg.threshold,
    )
    config_echo = config_echo or {"train": asdict(cfg)}
    start_epoch = 1
    result = FitResult()
    log_path = out_dir / "training_log.csv"
    ckpt_path = out_dir / "checkpoint.pcck"
    best_path = out_dir / "best.pcck"

    if resume is not None:
        tensors, meta = load_checkpoint(resume)
        restore_model(model, tensors)
        for name in optimizer.velocities:
            key = f"velocity/{name}"
            if key in tensors:
                optimizer.velocities[name] = tensors[key]
        opt_meta = meta.get("optimizer", {})
        optimizer.schedule = PlateauState(
            lr=float(opt_meta.get("lr", cfg.lr0)),
            best_val=opt_meta.get("best_val"),
            epochs_since_best=int(opt_meta.get("epochs_since_best", 0)),
            patience=cfg.patience,
            threshold=cfg.threshold,
        )
        start_epoch = int(meta.get("epoch", 0)) + 1
    else:
        _round_to_f32(model, optimizer)
        save_checkpoint(ckpt_path, _checkpoint_tensors(model, optimizer),
                        _checkpoint_meta(cfg, optimizer.schedule, 0, config_echo))

    best_val_loss = optimizer.schedule.best_val
    for epoch in range(start_epoch, cfg.epochs + 1):
        lr_used = optimizer.lr
        train_stats = train_epoch(model, train_data, cfg, optimizer, epoch)
        _round_to_f32(model, optimizer)
        val_stats = validation_pass(model, val_data, cfg)
        optimizer.observe_validation(val_stats.mean_loss)
        row = {
            "epoch": epoch,
            "lr": lr_used,
            "train_loss": train_stats.mean_loss,
            "val_loss": val_stats.mean_loss,
            "val_acc": val_stats.accuracy,
        }
        result.log_rows.append(row)
        write_training_log(result.log_rows, log_path)
        save_checkpoint(ckpt_path, _checkpoint_tensors(model, optimizer),
                        _checkpoint_meta(cfg, optimizer.schedule, epoch, config_echo))
        if best_val_loss is None or val_stats.mean_loss < best_val_loss:
            best_val_loss = val_stats.mean_loss
            result.best_val_acc = val_stats.accuracy
            save_checkpoint(best_path, _checkpoint_tensors(model, optimizer),
                            _checkpoint_meta(cfg, optimizer.schedule, epoch, config_echo))
            result.best_path = best_path

    if not result.log_rows:
        write_training_log([], log_path)
    result.checkpoint_path = ckpt_path
    return result


def restore_model(model: ActionModel, tensors: dict[str, np.ndarray]) -> None:
    """Load ``param/...`` entries into the model, validating names and shapes."""
    params = model.named_parameters()
    for name, tensor in params.items():
        key = f"param/{name}"
        if key not in tensors:
            raise InputError(f"checkpoint is missing parameter {name!r}")
        if tensors[key].shape != tensor.data.shape:
            raise InputError(
                f"checkpoint parameter {name!r} has shape {tensors[key].shape}, "
                f"model expects {tensor.data.shape}"
            )
        tensor.data = tensors[key].copy()

"""Run configuration: profiles, TOML files, and flat flag overrides.

Two named profiles carry the canonical constant sets. ``paper`` preserves
the full-scale values (2048-channel 7x7 features, 30 steps over a 90-frame
window, lr 0.0064, batch 256) even where they are untestable at desk
scale; ``desk`` is the laptop-sized counterpart the benchmark and test
suites run on. A TOML file overrides profile defaults, and ``--a.b=v``
style flags override both. Every run writes the fully resolved config back
out verbatim.
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .encoder import EncoderConfig
from .errors import ConfigurationError, UsageError
from .model import ModelConfig
from .prednet import PredNetConfig
from .training import PipelineConfig, TrainConfig

PROFILES: dict[str, dict[str, Any]] = {
    "paper": {
        "profile": "paper",
        "seed": 0,
        "model": {
            "num_layers": 2,
            "repr_channels": [64, 64],
            "input_channels": 2048,
            "height": 7,
            "width": 7,
            "time_steps": 30,
            "kernel_size": 3,
            "error_mode": "rectified_split",
            "use_prednet": True,
            "encoder": "none",  # features come from an external backbone
        },
        "data": {
            "window": 90,
            "crop": 224,
            "mean": [0.485, 0.456, 0.406],
            "std": [0.229, 0.224, 0.225],
        },
        "train": {
            "lr0": 0.0064,
            "momentum": 0.9,
            "weight_decay": 0.001,
            "batch_size": 256,
            "epochs": 40,
            "patience": 3,
            "threshold": 1e-3,
            "loss_mode": "classification",
            "alpha": 0.1,
        },
        "shapes": {
            "canvas": 224,
            "frames": 90,
            "noise_sigma": 0.0,
        },
    },
    "desk": {
        "profile": "desk",
        "seed": 0,
        "model": {
            "num_layers": 2,
            "repr_channels": [8, 8],
            "input_channels": 8,
            "height": 8,
            "width": 8,
            "time_steps": 10,
            "kernel_size": 3,
            "error_mode": "rectified_split",
            "lstm_gain": 8.0,
            "use_prednet": True,
            "encoder": {"in_channels": 1, "mid_channels": 8, "out_channels": 8, "trainable": True},
        },
        "data": {
            "window": 30,
            "crop": 32,
            "mean": [0.5],
            "std": [0.5],
        },
        "train": {
            "lr0": 0.05,
            "momentum": 0.9,
            "weight_decay": 0.001,
            "batch_size": 16,
            "epochs": 25,
            "patience": 3,
            "threshold": 1e-3,
            "loss_mode": "classification",
            "alpha": 0.1,
        },
        "shapes": {
            "canvas": 32,
            "frames": 90,
            "noise_sigma": 0.0,
        },
    },
}


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def parse_override_value(raw: str) -> Any:
    """Interpret an override value with TOML literal syntax, else a string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(config: dict, dotted: str, raw: str) -> None:
    """Set ``a.b.c`` to the parsed value, creating intermediate tables."""
    keys = dotted.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise UsageError(f"override {dotted!r}: {key!r} is not a table")
    node[keys[-1]] = parse_override_value(raw)


def load_run_config(
    profile: str = "desk",
    config_path: str | Path | None = None,
    overrides: list[str] | None = None,
) -> dict:
    """Profile defaults <- TOML file <- ``a.b=v`` overrides, in that order."""
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r}, expected one of {sorted(PROFILES)}")
    resolved = copy.deepcopy(PROFILES[profile])
    if config_path is not None:
        with open(config_path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise UsageError(f"{config_path}: invalid TOML: {exc}") from exc
        file_profile = doc.get("profile")
        if file_profile and file_profile != profile and file_profile in PROFILES:
            resolved = copy.deepcopy(PROFILES[file_profile])
        _deep_update(resolved, doc)
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} must look like a.b=value")
        dotted, raw = item.split("=", 1)
        apply_override(resolved, dotted.strip(), raw.strip())
    return resolved


def build_model_config(resolved: dict, num_classes: int) -> ModelConfig:
    m = resolved["model"]
    prednet = PredNetConfig(
        num_layers=int(m["num_layers"]),
        repr_channels=tuple(int(c) for c in m["repr_channels"]),
        input_channels=int(m["input_channels"]),
        height=int(m["height"]),
        width=int(m["width"]),
        time_steps=int(m["time_steps"]),
        kernel_size=int(m["kernel_size"]),
        error_mode=str(m["error_mode"]),
        lstm_gain=float(m.get("lstm_gain", 1.0)),
    )
    enc_spec = m.get("encoder", "none")
    if enc_spec == "none" or enc_spec is None:
        encoder = None
    else:
        encoder = EncoderConfig(
            in_channels=int(enc_spec["in_channels"]),
            mid_channels=int(enc_spec["mid_channels"]),
            out_channels=int(enc_spec["out_channels"]),
            trainable=bool(enc_spec.get("trainable", True)),
        )
    return ModelConfig(
        prednet=prednet,
        num_classes=num_classes,
        encoder=encoder,
        use_prednet=bool(m.get("use_prednet", True)),
        seed=int(resolved.get("seed", 0)),
    )


def build_train_config(resolved: dict) -> TrainConfig:
    t = resolved["train"]
    return TrainConfig(
        lr0=float(t["lr0"]),
        momentum=float(t["momentum"]),
        weight_decay=float(t["weight_decay"]),
        batch_size=int(t["batch_size"]),
        epochs=int(t["epochs"]),
        patience=int(t["patience"]),
        threshold=float(t["threshold"]),
        loss_mode=str(t["loss_mode"]),
        alpha=float(t.get("alpha", 0.1)),
        per_step_loss=bool(t.get("per_step_loss", False)),
        seed=int(resolved.get("seed", 0)),
    )


def build_pipeline_config(resolved: dict) -> PipelineConfig:
    d = resolved["data"]
    return PipelineConfig(
        window=int(d["window"]),
        steps=int(resolved["model"]["time_steps"]),
        crop=int(d["crop"]),
        mean=tuple(float(v) for v in d["mean"]),
        std=tuple(float(v) for v in d["std"]),
    )


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigurationError(f"cannot serialize {type(value).__name__} to TOML")


def dump_toml(config: dict) -> str:
    """Serialize the resolved config (scalars, lists, one nesting level of tables)."""
    lines: list[str] = []
    tables: list[tuple[str, dict]] = []
    for key, value in config.items():
        if isinstance(value, dict):
            tables.append((key, value))
        else:
            lines.append(f"{key} = {_toml_value(value)}")
    for name, table in tables:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            if isinstance(value, dict):
                continue  # nested encoder table handled below
            lines.append(f"{key} = {_toml_value(value)}")
        for key, value in table.items():
            if isinstance(value, dict):
                lines.append("")
                lines.append(f"[{name}.{key}]")
                for k2, v2 in value.items():
                    lines.append(f"{k2} = {_toml_value(v2)}")
    return "\n".join(lines) + "\n"


def write_resolved_config(config: dict, path: str | Path) -> None:
    Path(path).write_text(dump_toml(config))

"""Flat key=value run configuration with section prefixes.

The file format is line-oriented ``section.key=value`` (blank lines and
``#`` comments ignored), diff-friendly by design. Flags override file values;
the resulting effective config is echoed back as an artifact whose re-use
reproduces the run.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .gin import DECODERS, READOUTS, EncoderConfig, TARGETS
from .loss import AUX_FORMS, REC_KINDS, LossConfig
from .masking import MASK_MODES, MaskConfig
from .train import RunConfig


def _boolean(text: str) -> bool:
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def cast(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return cast


# key -> (caster, default-as-string)
SCHEMA: dict[str, tuple] = {
    "data.input": (str, ""),
    "data.label": (str, ""),
    "mask.alpha_min": (float, "0.15"),
    "mask.alpha_max": (float, "0.25"),
    "mask.coverage": (float, "1.0"),
    "mask.mode": (_choice(MASK_MODES), "node_wise"),
    "mask.hop_k": (int, ""),            # defaults to encoder.layers
    "mask.seed": (int, ""),             # defaults to run.seed
    "mask.resample_per_epoch": (_boolean, "true"),
    "loss.rec_kind": (_choice(REC_KINDS), "sce"),
    "loss.gamma": (float, "1.0"),
    "loss.beta": (float, "0.5"),
    "loss.targets": (_choice(TARGETS), "atom_type"),
    "loss.aux_form": (_choice(AUX_FORMS), "squared"),
    "encoder.layers": (int, "5"),
    "encoder.embed_dim": (int, "32"),
    "encoder.readout": (_choice(READOUTS), "mean"),
    "encoder.epsilon": (float, "0.0"),
    "encoder.learn_epsilon": (_boolean, "false"),
    "encoder.decoder": (_choice(DECODERS), "gnn"),
    "run.epochs": (int, "30"),
    "run.lr": (float, "0.001"),
    "run.batch_pretrain": (int, "32"),
    "run.batch_finetune": (int, "32"),
    "run.seed": (int, "0"),
    "run.finetune_epochs": (int, "20"),
    "run.finetune_mode": (_choice(("probe", "full")), "probe"),
    "run.checkpoint": (str, ""),
    "fp.radius": (int, "2"),
    "fp.width": (int, "2048"),
    "influence.top_k": (int, "3"),
    "influence.inter_mode": (_choice(("top_k", "size_weighted")), "top_k"),
    "influence.max_graphs": (int, "0"),   # 0 = no limit
    "motif.rules": (str, ""),
}


def parse_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def effective_config(file_values: dict[str, str] | None,
                     overrides: dict[str, str] | None = None) -> dict[str, str]:
    """Merge defaults, file values, and flag overrides; validate keys."""
    merged = {k: default for k, (_, default) in SCHEMA.items()}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    if merged["mask.seed"] == "":
        merged["mask.seed"] = merged["run.seed"]
    if merged["mask.hop_k"] == "":
        merged["mask.hop_k"] = merged["encoder.layers"]
    return merged


def typed(cfg: dict[str, str], key: str):
    caster, _ = SCHEMA[key]
    raw = cfg[key]
    try:
        return caster(str(raw))
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e


def build_run_config(cfg: dict[str, str]) -> RunConfig:
    try:
        mask = MaskConfig(
            alpha_min=typed(cfg, "mask.alpha_min"),
            alpha_max=typed(cfg, "mask.alpha_max"),
            coverage=typed(cfg, "mask.coverage"),
            mode=typed(cfg, "mask.mode"),
            hop_k=typed(cfg, "mask.hop_k"),
            seed=typed(cfg, "mask.seed"),
            resample_per_epoch=typed(cfg, "mask.resample_per_epoch"),
        )
        lossc = LossConfig(
            rec_kind=typed(cfg, "loss.rec_kind"),
            gamma=typed(cfg, "loss.gamma"),
            beta=typed(cfg, "loss.beta"),
            targets=typed(cfg, "loss.targets"),
            aux_form=typed(cfg, "loss.aux_form"),
        )
        enc = EncoderConfig(
            layers=typed(cfg, "encoder.layers"),
            embed_dim=typed(cfg, "encoder.embed_dim"),
            readout=typed(cfg, "encoder.readout"),
            epsilon=typed(cfg, "encoder.epsilon"),
            learn_epsilon=typed(cfg, "encoder.learn_epsilon"),
            decoder=typed(cfg, "encoder.decoder"),
        )
        return RunConfig(
            epochs=typed(cfg, "run.epochs"),
            lr=typed(cfg, "run.lr"),
            batch_pretrain=typed(cfg, "run.batch_pretrain"),
            batch_finetune=typed(cfg, "run.batch_finetune"),
            seed=typed(cfg, "run.seed"),
            finetune_epochs=typed(cfg, "run.finetune_epochs"),
            finetune_mode=typed(cfg, "run.finetune_mode"),
            checkpoint=cfg["run.checkpoint"] or None,
            mask=mask,
            loss=lossc,
            encoder=enc,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def format_effective(cfg: dict[str, str]) -> str:
    return "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)) + "\n"

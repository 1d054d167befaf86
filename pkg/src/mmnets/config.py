"""Experiment configuration: a small dotted-key text format with defaults.

A config file is a sequence of ``key = value`` lines (``#`` starts a
comment).  Keys are dotted paths such as ``stages.1.lr`` or
``arch.stage_widths``; an empty file yields the full default desk-scale
experiment.  Unknown or ill-typed keys are rejected with the offending line
number and, for misspellings, the nearest valid key.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, replace

from .networks import ArchConfig
from .trainer import TranslationTask, default_stages, opponent_task, scenes_task

TASKS = ("scenes", "opponent")
SIDE_INFO_MODES = ("pool", "none", "skip")


@dataclass
class DataConfig:
    n_train: int = 2000
    n_test: int = 200
    k: int = 8                     # segmentation classes (scenes task)
    task: str = "scenes"
    side_info: str = "pool"


@dataclass
class PathsConfig:
    out_dir: str = "runs/experiment"
    data_dir: str = ""             # empty: generate data in memory


@dataclass
class EvalConfig:
    alpha: float = 0.2             # fusion blend weight
    cascade: bool = True           # include the two-hop baseline rows
    no_pp: bool = False            # include the pseudo-pair ablation


@dataclass
class ExperimentConfig:
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    data: DataConfig = field(default_factory=DataConfig)
    stages: list = field(default_factory=default_stages)
    paths: PathsConfig = field(default_factory=PathsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        if not self.stages:
            raise ValueError("config: stage list must be non-empty")
        if self.data.task not in TASKS:
            raise ValueError(f"config: data.task must be one of {TASKS}, "
                             f"got {self.data.task!r}")
        if self.data.side_info not in SIDE_INFO_MODES:
            raise ValueError(f"config: data.side_info must be one of "
                             f"{SIDE_INFO_MODES}, got {self.data.side_info!r}")
        if self.data.n_train <= 0 or self.data.n_train % 2:
            raise ValueError("config: data.n_train must be positive and even")
        if self.data.n_test <= 0:
            raise ValueError("config: data.n_test must be positive")
        if self.data.k < 2:
            raise ValueError("config: data.k must be at least 2")
        if not 0.0 <= self.eval.alpha <= 1.0:
            raise ValueError("config: eval.alpha must lie in [0, 1]")
        return self

    def task(self) -> TranslationTask:
        if self.data.task == "scenes":
            return scenes_task(k=self.data.k, side_info=self.data.side_info)
        return opponent_task(side_info=self.data.side_info)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_list(text):
    return tuple(int(part.strip()) for part in text.split(","))


_SCALAR = {"int": int, "float": float, "str": str, "bool": _parse_bool,
           "ints": _parse_int_list}


def _key_table():
    """Every legal dotted key mapped to (type name, setter)."""
    table = {
        "seed": ("int", lambda c, v: setattr(c, "seed", v)),
        "arch.stage_widths": ("ints", lambda c, v: _set_arch(c, "stage_widths", v)),
        "arch.convs_per_stage": ("ints", lambda c, v: _set_arch(c, "convs_per_stage", v)),
        "arch.input_hw": ("ints", lambda c, v: _set_arch(c, "input_hw", v)),
        "data.n_train": ("int", lambda c, v: setattr(c.data, "n_train", v)),
        "data.n_test": ("int", lambda c, v: setattr(c.data, "n_test", v)),
        "data.k": ("int", lambda c, v: setattr(c.data, "k", v)),
        "data.task": ("str", lambda c, v: setattr(c.data, "task", v)),
        "data.side_info": ("str", lambda c, v: setattr(c.data, "side_info", v)),
        "paths.out_dir": ("str", lambda c, v: setattr(c.paths, "out_dir", v)),
        "paths.data_dir": ("str", lambda c, v: setattr(c.paths, "data_dir", v)),
        "eval.alpha": ("float", lambda c, v: setattr(c.eval, "alpha", v)),
        "eval.baselines.cascade": ("bool", lambda c, v: setattr(c.eval, "cascade", v)),
        "eval.baselines.no_pp": ("bool", lambda c, v: setattr(c.eval, "no_pp", v)),
    }
    stage_fields = {"iterations": "int", "lr": "float", "noise_sigma": "float",
                    "autoencoders": "bool", "latent_consistency": "bool",
                    "pseudo_pairs": "bool"}
    for idx in (1, 2, 3):
        for name, kind in stage_fields.items():
            table[f"stages.{idx}.{name}"] = (
                kind, _stage_setter(idx, name))
        for wname in ("r", "s", "d", "a", "l2", "pp"):
            table[f"stages.{idx}.weights.{wname}"] = (
                "float", _weight_setter(idx, wname))
    return table


def _set_arch(cfg, attr, value):
    cfg.arch = replace(cfg.arch, **{attr: value})


def _stage_setter(idx, name):
    def set_it(cfg, value):
        cfg.stages[idx - 1] = replace(cfg.stages[idx - 1], **{name: value})
    return set_it


def _weight_setter(idx, wname):
    def set_it(cfg, value):
        stage = cfg.stages[idx - 1]
        cfg.stages[idx - 1] = replace(
            stage, weights=replace(stage.weights, **{wname: value}))
    return set_it


class ConfigError(ValueError):
    pass


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize a config as dotted-key lines; parse_config inverts it.

    Only the three-stage desk schedule is representable in the file format,
    so dumping requires exactly three stages.
    """
    if len(cfg.stages) != 3:
        raise ValueError(f"config dump supports exactly 3 stages, "
                         f"got {len(cfg.stages)}")

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = [f"seed = {cfg.seed}"]
    for name in ("stage_widths", "convs_per_stage", "input_hw"):
        lines.append(f"arch.{name} = {fmt(getattr(cfg.arch, name))}")
    for name in ("n_train", "n_test", "k", "task", "side_info"):
        lines.append(f"data.{name} = {fmt(getattr(cfg.data, name))}")
    for idx, stage in enumerate(cfg.stages, start=1):
        for name in ("iterations", "lr", "noise_sigma", "autoencoders",
                     "latent_consistency", "pseudo_pairs"):
            lines.append(f"stages.{idx}.{name} = {fmt(getattr(stage, name))}")
        for wname in ("r", "s", "d", "a", "l2", "pp"):
            lines.append(
                f"stages.{idx}.weights.{wname} = {fmt(float(getattr(stage.weights, wname)))}")
    lines.append(f"paths.out_dir = {cfg.paths.out_dir}")
    lines.append(f"paths.data_dir = {cfg.paths.data_dir}")
    lines.append(f"eval.alpha = {fmt(float(cfg.eval.alpha))}")
    lines.append(f"eval.baselines.cascade = {fmt(cfg.eval.cascade)}")
    lines.append(f"eval.baselines.no_pp = {fmt(cfg.eval.no_pp)}")
    return "\n".join(lines) + "\n"


def parse_config(path) -> ExperimentConfig:
    """Parse a dotted-key config file into a validated ExperimentConfig."""
    cfg = ExperimentConfig()
    table = _key_table()
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, text = (part.strip() for part in line.partition("="))
        if key not in table:
            near = difflib.get_close_matches(key, table, n=1, cutoff=0.4)
            hint = f"; nearest is '{near[0]}'" if near else ""
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'{hint}")
        kind, setter = table[key]
        try:
            value = _SCALAR[kind](text)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{lineno}: bad value for '{key}' ({kind}): {exc}") from exc
        try:
            setter(cfg, value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: '{key}': {exc}") from exc
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg

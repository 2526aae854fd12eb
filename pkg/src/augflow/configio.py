"""Line-oriented key=value config files.

Three file kinds share one syntax: `key=value` lines, blank lines and
`#` comments ignored, optional `[section]` headers. Grid configs are bare
key=value (section-less); trainer configs use the bare/[trainer] section;
experiment specs use [sweep]. Parse errors carry the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from augflow import env as E
from augflow.env import GridConfig
from augflow.intrinsic import IntrinsicConfig
from augflow.objectives import LOSS_KINDS, required_mode
from augflow.trainer import TrainerConfig


class ConfigError(Exception):
    def __init__(self, path, line: int | None, msg: str):
        where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + msg)
        self.path = path
        self.line = line


def parse_kv_text(text: str, path="<string>") -> dict[str, dict[str, str]]:
    """Returns {section: {key: value}}; keys before any header land in ''."""
    sections: dict[str, dict[str, str]] = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(path, lineno, f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(path, lineno, "empty key")
        if key in sections[current]:
            raise ConfigError(path, lineno, f"duplicate key {key!r}")
        sections[current][key] = value.strip()
    return sections


def _merged(sections: dict[str, dict[str, str]], name: str) -> dict[str, str]:
    out = dict(sections.get("", {}))
    out.update(sections.get(name, {}))
    return out


def load_grid_config(path: str | Path) -> GridConfig:
    text = Path(path).read_text()
    items = _merged(parse_kv_text(text, path), "grid")
    try:
        return E.grid_from_items(items)
    except ValueError as e:
        raise ConfigError(path, None, str(e)) from None


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_int_tuple(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


_TRAINER_KEYS = {
    "objective": str,
    "total_updates": int,
    "batch_size": int,
    "epsilon": float,
    "lr_model": float,
    "lr_logz": float,
    "lr_predictor": float,
    "seed": int,
    "eval_every": int,
    "hidden": _parse_int_tuple,
    "uniform_pb": _parse_bool,
    "topk": int,
    "intrinsic": str,
    "alpha": float,
    "embed_dim": int,
    "normalize_novelty": _parse_bool,
}


def trainer_config_from_items(items: dict[str, str], path="<items>") -> TrainerConfig:
    """Build a TrainerConfig; the augmentation mode is derived from the
    objective so the two can never disagree."""
    parsed: dict[str, object] = {}
    for key, value in items.items():
        if key not in _TRAINER_KEYS:
            raise ConfigError(path, None, f"unknown trainer key {key!r}")
        try:
            parsed[key] = _TRAINER_KEYS[key](value)
        except ValueError as e:
            raise ConfigError(path, None, f"bad value for {key!r}: {e}") from None
    if "total_updates" not in parsed:
        raise ConfigError(path, None, "missing required key 'total_updates'")

    objective = parsed.get("objective", "tb")
    mode = required_mode(str(objective)) if objective in LOSS_KINDS else "none"
    kind = parsed.pop("intrinsic", "rnd" if mode != "none" else "none")
    icfg_kwargs = dict(kind=str(kind), mode=mode, alpha=float(parsed.pop("alpha", 0.0)))
    if "embed_dim" in parsed:
        icfg_kwargs["embed_dim"] = parsed.pop("embed_dim")
    if "normalize_novelty" in parsed:
        icfg_kwargs["normalize"] = parsed.pop("normalize_novelty")
    if "hidden" in parsed:
        icfg_kwargs["hidden"] = parsed["hidden"]
    if mode == "none":
        icfg_kwargs = {"kind": "none", "mode": "none", "alpha": 0.0}
    try:
        parsed["intrinsic"] = IntrinsicConfig(**icfg_kwargs)
        return TrainerConfig(**parsed)  # type: ignore[arg-type]
    except (TypeError, ValueError) as e:
        raise ConfigError(path, None, str(e)) from None


def load_trainer_config(path: str | Path) -> TrainerConfig:
    text = Path(path).read_text()
    items = _merged(parse_kv_text(text, path), "trainer")
    return trainer_config_from_items(items, path)


@dataclass
class ExperimentSpec:
    """One sweep: base grid + trainer configs and the axes to vary."""

    grid: GridConfig
    trainer_items: dict[str, str]
    output_dir: Path
    objectives: list[str] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    sides: list[int] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    cap: int = 64
    source_texts: dict[str, str] = field(default_factory=dict)


def load_experiment_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    items = _merged(parse_kv_text(path.read_text(), path), "sweep")
    base = path.parent

    def take(key, default=None):
        return items.pop(key, default)

    grid_rel = take("grid_config")
    trainer_rel = take("trainer_config")
    out_rel = take("output_dir")
    if not grid_rel or not trainer_rel or not out_rel:
        raise ConfigError(
            path, None, "spec needs grid_config, trainer_config and output_dir"
        )
    grid_path = base / grid_rel
    trainer_path = base / trainer_rel
    try:
        grid = load_grid_config(grid_path)
        trainer_text = Path(trainer_path).read_text()
        trainer_items = _merged(parse_kv_text(trainer_text, trainer_path), "trainer")
        trainer_config_from_items(dict(trainer_items), trainer_path)  # validate now
    except FileNotFoundError as e:
        raise ConfigError(path, None, f"missing referenced config: {e.filename}") from None

    def parse_list(key, conv):
        raw = take(key, "")
        return [conv(x) for x in raw.split(",") if x.strip()]

    try:
        spec = ExperimentSpec(
            grid=grid,
            trainer_items=dict(trainer_items),
            output_dir=base / out_rel,
            objectives=parse_list("objectives", str),
            alphas=parse_list("alphas", float),
            sides=parse_list("sides", int),
            seeds=parse_list("seeds", int),
            cap=int(take("cap", "64")),
        )
    except ValueError as e:
        raise ConfigError(path, None, str(e)) from None
    if items:
        raise ConfigError(path, None, f"unknown sweep keys {sorted(items)}")
    spec.source_texts = {
        "spec.cfg": path.read_text(),
        "grid.cfg": grid_path.read_text(),
        "trainer.cfg": trainer_text,
    }
    return spec

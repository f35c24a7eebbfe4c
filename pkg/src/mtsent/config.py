"""Run configuration: a YAML file validated against a fixed schema.

Unknown keys and ill-typed values are rejected with the line they appear
on. Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .lexfeat import LexiconKind, LexiconSource
from .multitask import NetworkConfig
from .optim import TrainConfig

_PATH = "path"
_OPT_PATH = "optional path"

SCHEMA = {
    "seed": int,
    "data": {
        "fine_train": _PATH,
        "fine_dev": _PATH,
        "fine_test": _OPT_PATH,
        "ternary_train": _OPT_PATH,
        "ternary_dev": _OPT_PATH,
        "ternary_test": _OPT_PATH,
    },
    "embeddings": {"path": _OPT_PATH, "dim": int},
    "features": {"use_extra": bool, "lexicons": [{"name": str, "kind": str, "path": _PATH}]},
    "network": {
        "embed_dim": int,
        "bilstm_out": int,
        "h1_size": int,
        "ha_size": int,
        "hm_size": int,
        "h1_layers": int,
        "ha_layers": int,
        "dropout_bilstm": float,
        "dropout_h1": float,
        "dropout_ha": float,
        "dropout_hm": float,
    },
    "train": {
        "batch_size": int,
        "max_epochs": int,
        "p_M": float,
        "learning_rate": float,
        "rho": float,
        "epsilon": float,
        "patience": int,
        "weighted_loss": bool,
    },
    "baseline": {
        "representation": str,
        "tune_on": str,
        "folds": int,
        "grid": [float],
        "epochs": int,
        "batch_size": int,
        "class_weights": str,
    },
    "output": {"runs_dir": str},
}


def _line(node) -> int:
    return node.start_mark.line + 1


def _convert(node, schema, where: str, src: str):
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{where or 'top level'} must be a mapping", _line(node), src)
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key not in schema:
                raise ConfigError(f"unknown key {where + '.' if where else ''}{key}", _line(key_node), src)
            if key in out:
                raise ConfigError(f"duplicate key {key}", _line(key_node), src)
            out[key] = _convert(value_node, schema[key], f"{where}.{key}" if where else key, src)
        return out
    if isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{where} must be a list", _line(node), src)
        return [_convert(item, schema[0], f"{where}[{i}]", src) for i, item in enumerate(node.value)]
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{where} must be a scalar", _line(node), src)
    value = yaml.SafeLoader("").construct_object(node)
    if schema in (_PATH, _OPT_PATH, str):
        if schema == _OPT_PATH and value is None:
            return None
        if not isinstance(value, str):
            value = str(value)
        return (value, _line(node)) if schema in (_PATH, _OPT_PATH) else value
    if schema is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", _line(node), src)
        return value
    if schema is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", _line(node), src)
        return value
    if schema is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", _line(node), src)
        return float(value)
    raise AssertionError(schema)


@dataclass
class RunConfig:
    source: str
    seed: int = 0
    paths: dict = field(default_factory=dict)  # key -> (Path, line)
    embedding_dim: int | None = None
    use_extra: bool = False
    lexicons: list[LexiconSource] = field(default_factory=list)
    network: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    runs_dir: Path = Path("runs")
    raw: dict = field(default_factory=dict)

    def path(self, key: str) -> Path | None:
        entry = self.paths.get(key)
        return None if entry is None else entry[0]

    def network_config(self, tasks, extra_dim: int = 0) -> NetworkConfig:
        params = dict(self.network)
        if self.embedding_dim is not None:
            params.setdefault("embed_dim", self.embedding_dim)
        return NetworkConfig(tasks=tasks, use_extra_features=self.use_extra, extra_dim=extra_dim, **params)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.train)

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)


def _resolve(entry, base: Path):
    value, line = entry
    p = Path(value)
    return (p if p.is_absolute() else base / p, line)


def load_config(path) -> RunConfig:
    path = Path(path)
    src = str(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, src) from exc
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1, src) from exc
    if root is None:
        raise ConfigError("config file is empty", None, src)
    data = _convert(root, SCHEMA, "", src)
    base = path.resolve().parent
    cfg = RunConfig(source=str(path.resolve()))
    cfg.seed = data.get("seed", 0)

    for key, entry in data.get("data", {}).items():
        if entry is not None:
            cfg.paths[key] = _resolve(entry, base)
    for required in ("fine_train", "fine_dev"):
        if required not in cfg.paths:
            raise ConfigError(f"data.{required} is required", _line(root), src)
    emb = data.get("embeddings", {})
    if emb.get("path") is not None:
        cfg.paths["embeddings"] = _resolve(emb["path"], base)
    cfg.embedding_dim = emb.get("dim")

    feats = data.get("features", {})
    cfg.use_extra = feats.get("use_extra", False)
    for i, lex in enumerate(feats.get("lexicons", [])):
        for k in ("name", "kind", "path"):
            if k not in lex:
                raise ConfigError(f"features.lexicons[{i}] is missing {k!r}", _line(root), src)
        lex_path, line = _resolve(lex["path"], base)
        try:
            kind = LexiconKind(lex["kind"])
        except ValueError:
            raise ConfigError(f"features.lexicons[{i}].kind must be 'scored' or 'membership'", line, src) from None
        cfg.paths[f"lexicon:{lex['name']}"] = (lex_path, line)
        cfg.lexicons.append(LexiconSource(lex["name"], kind, str(lex_path)))

    cfg.network = data.get("network", {})
    cfg.train = data.get("train", {})
    cfg.baseline = data.get("baseline", {})
    bl = cfg.baseline
    if bl.get("representation", "nbow") not in ("nbow", "nbow+"):
        raise ConfigError("baseline.representation must be 'nbow' or 'nbow+'", None, src)
    if bl.get("tune_on", "train+dev") not in ("train", "train+dev"):
        raise ConfigError("baseline.tune_on must be 'train' or 'train+dev'", None, src)
    if bl.get("class_weights", "inverse_frequency") not in ("uniform", "inverse_frequency"):
        raise ConfigError("baseline.class_weights must be 'uniform' or 'inverse_frequency'", None, src)
    runs_dir = Path(data.get("output", {}).get("runs_dir", "runs"))
    cfg.runs_dir = runs_dir if runs_dir.is_absolute() else base / runs_dir
    cfg.raw = yaml.safe_load(text)

    for key, (p, line) in cfg.paths.items():
        if not p.is_file():
            raise ConfigError(f"{key}: file not found: {p}", line, src)
    return cfg

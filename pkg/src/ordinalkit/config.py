"""TOML experiment configuration.

Grammar (all tables optional except ``losses``)::

    name = "synthetic-bench"
    fractions = [1.0, 0.5]
    seeds = [0, 1, 2, 3, 4]
    model = "linear"              # or "binomial"

    [dataset]
    source = "synthetic"          # or a path to a delimited file
    N = 5000
    D = 50
    K = 5
    sigma = 0.4
    seed = 0
    skew = 0.0
    test_fraction = 0.2
    text_dim = 1024               # hashed width for label,text files

    [labels]
    names = ["very negative", "negative", "neutral", "positive", "very positive"]

    [[losses]]
    kind = "OLL"
    alpha = 1.5

    [train]
    lr = 0.1
    epochs = 50
    batch_size = 16
    optimizer = "momentum"
    momentum = 0.9
    weight_decay = 0.0

    [output]
    dir = "runs/bench"
    formats = ["tsv", "jsonl"]

Loss tables take ``kind`` plus any of ``alpha``, ``beta``, ``lambda`` and
``weights`` (a K x K list of lists for WKL).
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError, OrdinalError
from .losses import LossSpec
from .model import TrainConfig
from .simplex import LabelSpace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMATS = ("tsv", "jsonl")


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic"
    N: int = 5000
    D: int = 50
    K: int = 5
    sigma: float = 0.4
    seed: int = 0
    skew: float = 0.0
    test_fraction: float = 0.2
    text_dim: int = 1024

    @property
    def synthetic(self) -> bool:
        return self.source == "synthetic"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    space: LabelSpace
    losses: tuple
    fractions: tuple = (1.0,)
    seeds: tuple = (0,)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: str = "linear"
    out_dir: str = "runs"
    formats: tuple = FORMATS
    name: str = "experiment"

    def __post_init__(self):
        if not self.losses:
            raise ConfigError("at least one loss is required")
        if not self.fractions:
            raise ConfigError("at least one fraction is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = [f for f in self.fractions if not 0.0 < f <= 1.0]
        if bad:
            raise ConfigError(f"fractions must lie in (0, 1], got {bad}")
        if self.model not in ("linear", "binomial"):
            raise ConfigError(f"model must be 'linear' or 'binomial', got {self.model!r}")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise ConfigError(f"unknown report formats {sorted(unknown)}")

    def canonical(self) -> dict:
        """Plain-data view used for hashing; output location is excluded."""
        train = asdict(self.train)
        train.pop("loss")
        train.pop("seed")
        train.pop("fraction")
        return {
            "dataset": asdict(self.dataset),
            "labels": list(self.space.labels),
            "losses": [loss_to_dict(s) for s in self.losses],
            "fractions": [float(f) for f in self.fractions],
            "seeds": [int(s) for s in self.seeds],
            "train": train,
            "model": self.model,
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def loss_to_dict(spec: LossSpec) -> dict:
    out = {"kind": spec.kind}
    if spec.kind in ("OLL", "MLL"):
        out["alpha"] = spec.alpha
    if spec.kind == "SOFT":
        out["beta"] = spec.beta
    if spec.kind == "MLL":
        out["lambda"] = spec.lam
    if spec.kind == "WKL" and spec.wkl_weights is not None:
        out["weights"] = [list(row) for row in spec.wkl_weights]
    return out


def loss_from_dict(table: dict) -> LossSpec:
    allowed = {"kind", "alpha", "beta", "lambda", "weights"}
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown loss keys {sorted(extra)}")
    if "kind" not in table:
        raise ConfigError("loss table needs a 'kind'")
    kwargs = {"kind": table["kind"]}
    for key, attr in (("alpha", "alpha"), ("beta", "beta"), ("lambda", "lam")):
        if key in table:
            kwargs[attr] = float(table[key])
    if "weights" in table:
        kwargs["wkl_weights"] = table["weights"]
    try:
        return LossSpec(**kwargs)
    except OrdinalError as exc:
        raise ConfigError(str(exc)) from exc


def _take(table: dict, cls, name: str):
    known = set(cls.__dataclass_fields__)
    extra = set(table) - known
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    return table


def parse_config(data: dict) -> ExperimentConfig:
    top = {"name", "fractions", "seeds", "model", "dataset", "labels", "losses", "train", "output"}
    extra = set(data) - top
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    ds_table = _take(dict(data.get("dataset", {})), DatasetSpec, "dataset")
    dataset = DatasetSpec(**ds_table)
    names = data.get("labels", {}).get("names")
    space = LabelSpace(tuple(names)) if names else LabelSpace.of_size(dataset.K)
    if dataset.synthetic and space.K != dataset.K:
        raise ConfigError(f"{space.K} label names for K = {dataset.K}")
    losses = tuple(loss_from_dict(t) for t in data.get("losses", []))
    train_table = _take(dict(data.get("train", {})), TrainConfig, "train")
    for key in ("loss", "seed", "fraction"):
        if key in train_table:
            raise ConfigError(f"[train] may not set {key!r}; use the top-level grid")
    try:
        train = TrainConfig(**train_table)
    except OrdinalError as exc:
        raise ConfigError(str(exc)) from exc
    output = data.get("output", {})
    return ExperimentConfig(
        dataset=dataset,
        space=space,
        losses=losses,
        fractions=tuple(float(f) for f in data.get("fractions", [1.0])),
        seeds=tuple(int(s) for s in data.get("seeds", [0])),
        train=train,
        model=data.get("model", "linear"),
        out_dir=str(output.get("dir", "runs")),
        formats=tuple(output.get("formats", FORMATS)),
        name=str(data.get("name", "experiment")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


def load_verbalisers(path):
    """Read a verbaliser set: ``mode = "..."`` and ``templates = [...]`` (plus optional dim, seed)."""
    from .entailment import VerbaliserSet

    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read verbalisers from {path}: {exc}") from exc
    extra = set(data) - {"mode", "templates", "dim", "seed"}
    if extra or "mode" not in data or "templates" not in data:
        raise ConfigError("verbaliser file needs 'mode' and 'templates' (optional 'dim', 'seed')")
    return VerbaliserSet(data["mode"], tuple(data["templates"]), int(data.get("dim", 16)),
                         int(data.get("seed", 0)))


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name

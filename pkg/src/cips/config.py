"""Training and run configuration, plus the flat ``key = value`` file format.

Config files are diff-friendly experiment records: one key per line, ``#``
comments allowed, command-line overrides win. Unknown keys are rejected.
"""

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

VARIANTS = ("mf", "wmf", "relmf", "cips")


@dataclass
class TrainConfig:
    """Hyperparameters shared by the clustering and recommender phases."""

    embedding_dim: int = 10
    hidden_dim: int = 64
    num_clusters: int = 4
    learning_rate: float = 0.01
    cluster_learning_rate: float = 0.01
    epochs: int = 30
    cluster_epochs: int = 15
    outer_iterations: int = 3
    batch_size: int = 256
    clip_floor: float = 0.05
    seed: int = 0
    weight_decay: float = 0.0
    wmf_positive_weight: float = 5.0
    relmf_exponent: float = 0.5
    squared_distance: bool = False
    propensity_normalizer: str = "per_cluster"
    unlabeled_ratio: float = 0.0
    selection_metric: str = "dcg"
    selection_propensity: str = "item_popularity"
    early_stop_outer: bool = True

    def validate(self):
        positive = (
            "embedding_dim", "hidden_dim", "num_clusters", "learning_rate",
            "cluster_learning_rate", "epochs", "cluster_epochs",
            "outer_iterations", "batch_size", "wmf_positive_weight",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.clip_floor < 1.0:
            raise ConfigError("clip_floor must lie in (0, 1)")
        if not 0.0 < self.relmf_exponent <= 1.0:
            raise ConfigError("relmf_exponent must lie in (0, 1]")
        if self.weight_decay < 0 or self.unlabeled_ratio < 0:
            raise ConfigError("weight_decay and unlabeled_ratio must be >= 0")
        if self.propensity_normalizer not in ("per_cluster", "per_item"):
            raise ConfigError("propensity_normalizer must be per_cluster or per_item")
        if self.selection_metric not in ("dcg", "accuracy"):
            raise ConfigError("selection_metric must be dcg or accuracy")
        if self.selection_propensity not in ("item_popularity", "cluster"):
            raise ConfigError("selection_propensity must be item_popularity or cluster")
        return self


@dataclass
class RunConfig(TrainConfig):
    """TrainConfig plus command-level settings: paths, variant, sweep lists,
    synthetic-world shape, and evaluation segmenting."""

    data_dir: str = "data"
    out_dir: str = "out"
    variant: str = "cips"
    segment_size: int = 500
    positive_threshold: float = 4.0
    validation_ratio: float = 0.9
    k_values: list = field(default_factory=lambda: [2, 4, 6, 8, 10])
    seeds: list = field(default_factory=list)
    # synthetic world
    num_users: int = 200
    num_items: int = 60
    num_true_clusters: int = 4
    samples_per_user: int = 10
    profile: str = "uniform"

    def validate(self):
        super().validate()
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.validation_ratio < 1.0:
            raise ConfigError("validation_ratio must lie in (0, 1)")
        if self.segment_size < 1:
            raise ConfigError("segment_size must be >= 1")
        if min(self.num_users, self.num_items, self.num_true_clusters,
               self.samples_per_user) < 1:
            raise ConfigError("synthetic counts must be >= 1")
        return self


def _parse_value(raw, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is list:
            return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind.__name__}")
    return raw


def _field_types(cls):
    return {f.name: f.type for f in fields(cls)}


def parse_config_file(path):
    """Read a flat key = value file into a raw string dict."""
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw

def load_run_config(path=None, overrides=None):
    """Build a validated RunConfig from defaults, an optional file, and
    override pairs (overrides win)."""
    types = _field_types(RunConfig)
    cfg = RunConfig()
    merged = {}
    if path is not None:
        merged.update(parse_config_file(path))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in merged.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(value, types[key])
        setattr(cfg, key, value)
    return cfg.validate()


def serialize_config(cfg):
    """Canonical text form: sorted ``key = value`` lines."""
    lines = []
    for key, value in sorted(asdict(cfg).items()):
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

"""Run configuration: model sizes, optimization, variants, ablations.

Config files are flat ``key = value`` text with ``#`` comments.  Keys
are case-insensitive; ``lambda`` names the L2 coefficient (stored as
``l2_lambda`` because of the Python keyword).  CLI flags override file
values, which override the defaults below.

The upstream-scale defaults (lr 1e-6 for fine-tuning a large
pretrained encoder) do not apply to a small model trained from
scratch, so the desk default is lr 1e-3; both are plain config values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError

COMPARISON_VARIANTS = ("full", "coarse_grained", "simple_add", "no_source", "no_gate")

# config-file aliases -> canonical field names
_ALIASES = {"lambda": "l2_lambda", "m": "m", "l_ctx": "l_ctx", "l_resp": "l_resp"}


@dataclass
class TrainConfig:
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    m: int = 4
    l_ctx: int = 48
    l_resp: int = 16
    learning_rate: float = 1e-3
    dropout: float = 0.2
    l2_lambda: float = 0.01
    batch_size: int = 4
    epochs: int = 10
    seed: int = 0
    min_count: int = 1
    emb_init_std: float = 0.02
    comparison_variant: str = "full"
    use_comparison: bool = True
    use_history: bool = True
    use_speaker: bool = True

    def validate(self):
        positive = ("d", "n_layers", "n_heads", "m", "l_ctx", "l_resp",
                    "learning_rate", "batch_size", "epochs")
        for name in positive:
            v = getattr(self, name)
            if name == "n_layers":
                if v < 0:
                    raise ConfigError("n_layers must be >= 0")
            elif v <= 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.m < 2:
            raise ConfigError(f"m must be >= 2, got {self.m}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l2_lambda < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.l2_lambda}")
        if self.d % self.n_heads != 0:
            raise ConfigError(
                f"d ({self.d}) must be divisible by n_heads ({self.n_heads})")
        if self.comparison_variant not in COMPARISON_VARIANTS:
            raise ConfigError(
                f"comparison_variant must be one of {COMPARISON_VARIANTS}, "
                f"got {self.comparison_variant!r}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        if self.emb_init_std <= 0:
            raise ConfigError("emb_init_std must be positive")
        return self

    @property
    def joint_len(self):
        """Length of one encoded pair: summary slot + context + candidate."""
        return 1 + self.l_ctx + self.l_resp

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(name, raw):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind == "bool" or kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int" or kind is int:
            return int(raw)
        if kind == "float" or kind is float:
            return float(raw)
        return raw
    except ValueError as err:
        raise ConfigError(f"config key {name!r}: {err}") from err


def apply_overrides(cfg, pairs):
    """Apply {key: raw-string-or-typed value} overrides to a config."""
    for key, raw in pairs.items():
        name = _ALIASES.get(key.lower(), key.lower())
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        value = _coerce(name, raw) if isinstance(raw, str) else raw
        setattr(cfg, name, value)
    return cfg


def load_config(path=None, overrides=None):
    """Build a validated TrainConfig from an optional file plus overrides."""
    cfg = TrainConfig()
    if path is not None:
        try:
            fh = open(path, encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        with fh:
            file_pairs = {}
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path} line {lineno}: expected 'key = value'")
                key, raw = line.split("=", 1)
                file_pairs[key.strip()] = raw
            apply_overrides(cfg, file_pairs)
    if overrides:
        apply_overrides(cfg, overrides)
    return cfg.validate()


def config_from_dict(d):
    cfg = TrainConfig()
    apply_overrides(cfg, d)
    return cfg.validate()

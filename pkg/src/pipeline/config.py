"""
Experiment configuration.

ExperimentConfig's fields are the accepted configuration keys; each field's
metadata carries its value kind and help text, which the CLI turns into
options.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from src.errors import ConfigError

logger = logging.getLogger(__name__)

PROFILE_FILE = Path(__file__).parent / "profiles.yaml"
KEY_ALIASES = {"n_s": "ns", "batch_size": "batch", "r0": "nr0", "rl": "nrl"}
_TRUE = ("true", "1", "yes")
_FALSE = ("false", "0", "no")
_ECHO_EXCLUDE = ("output_dir",)


def _key(kind: str, help_text: str, default: Any) -> Any:
    return field(default=default, metadata={"kind": kind, "help": help_text})


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one experiment; see profiles.yaml for the shipped presets."""

    n: Optional[int] = _key("int", "Blocklength (required)", None)
    p: float = _key("float", "BSC crossover probability", 0.25)
    nr: Optional[int] = _key("int?", "Index bits after the quantizer (auto: n-1)", None)
    nr0: int = _key("int", "Common-randomness bits nR0", 8)
    nrl: int = _key("int", "Local-randomness bits nRL", 8)
    beta: Optional[int] = _key("int?", "Output sequences per output bin (auto: 2^n without CR, else 2^ceil(n/2))", None)
    ns: int = _key("int", "Training sample count N_s", 1 << 18)
    test_count: Optional[int] = _key("int?", "Test sample count (auto: N_s)", None)
    epochs: int = _key("int", "Training epochs", 20)
    batch: int = _key("int", "Mini-batch size", 1 << 10)
    lr: float = _key("float", "Initial Adam learning rate", 1e-4)
    patience: int = _key("int", "Plateau patience in epochs", 1)
    min_delta: float = _key("float", "Minimum loss decrease counted as improvement", 0.01)
    plateau_factor: float = _key("float", "Learning-rate reduction factor on plateau", 0.1)
    min_lr: float = _key("float", "Learning-rate floor", 0.0)
    commitment_beta: float = _key("float", "Weight of the quantizer commitment term (0 = off)", 0.0)
    encoder_activation: str = _key("str", "Activation feeding the quantizer: sigmoid or relu", "sigmoid")
    encoder_depth: int = _key("int", "Encoder hidden layers before the quantizer layer", 3)
    decoder_depth: int = _key("int", "Decoder hidden layers before the softmax layer", 5)
    seed: int = _key("int", "Master seed", 0)
    allow_empty_k: bool = _key("bool", "Accept empty K-ranges", False)
    allow_empty_l: bool = _key("bool", "Accept empty L-ranges", True)
    on_empty_bin: str = _key("str", "Training records that hit an empty bin: drop or raise", "drop")
    float32: bool = _key("bool", "Train in 32-bit floats", False)
    n_jobs: int = _key("int", "joblib workers for sampling", 1)
    shard_size: int = _key("int", "Records per sampling shard", 1 << 16)
    target_csv: Optional[str] = _key("str?", "Joint PMF CSV to use as target instead of BSC(p)", None)
    output_dir: str = _key("str", "Directory for all artifacts", "runs/default")

    def __post_init__(self):
        if self.n is None:
            raise ConfigError("missing required key 'n'", key="n")
        if not 1 <= self.n <= 16:
            raise ConfigError(f"n must lie in [1, 16], got {self.n}", key="n")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}", key="p")
        if self.nr is not None and not 1 <= self.nr <= 16:
            raise ConfigError(f"nr must lie in [1, 16], got {self.nr}", key="nr")
        for key in ("nr0", "nrl"):
            if not 0 <= getattr(self, key) <= 63:
                raise ConfigError(f"{key} must lie in [0, 63], got {getattr(self, key)}", key=key)
        for key in ("ns", "epochs", "batch", "shard_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}", key=key)
        if self.test_count is not None and self.test_count < 1:
            raise ConfigError(f"test_count must be >= 1, got {self.test_count}", key="test_count")
        if self.beta is not None:
            size = 1 << self.n
            if self.beta < 1 or self.beta & (self.beta - 1) or self.beta > size:
                raise ConfigError(f"beta must be a power of two dividing 2^n = {size}, got {self.beta}", key="beta")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}", key="lr")
        if self.encoder_activation not in ("sigmoid", "relu"):
            raise ConfigError(f"encoder_activation must be sigmoid or relu, got {self.encoder_activation!r}",
                              key="encoder_activation")
        for key in ("encoder_depth", "decoder_depth"):
            if not 1 <= getattr(self, key) <= 32:
                raise ConfigError(f"{key} must lie in [1, 32], got {getattr(self, key)}", key=key)
        if self.on_empty_bin not in ("drop", "raise"):
            raise ConfigError(f"on_empty_bin must be drop or raise, got {self.on_empty_bin!r}", key="on_empty_bin")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must not be 0", key="n_jobs")

    @property
    def index_bits(self) -> int:
        return self.nr if self.nr is not None else self.n - 1

    @property
    def bin_width(self) -> int:
        if self.beta is not None:
            return self.beta
        if self.nr0 == 0:
            return 1 << self.n
        return 1 << ((self.n + 1) // 2)

    @property
    def test_size(self) -> int:
        return self.test_count if self.test_count is not None else self.ns

    def with_overrides(self, **values) -> "ExperimentConfig":
        return replace(self, **values)

    def echo(self) -> Dict[str, str]:
        """Config keys and their formatted values, as echoed in reports."""
        return {k: format_value(v) for k, v in asdict(self).items() if k not in _ECHO_EXCLUDE}


def config_keys() -> List[str]:
    return [f.name for f in fields(ExperimentConfig)]


def key_kind(key: str) -> str:
    for f in fields(ExperimentConfig):
        if f.name == key:
            return f.metadata["kind"]
    raise ConfigError(f"unknown config key '{key}'", key=key)


def key_help(key: str) -> str:
    for f in fields(ExperimentConfig):
        if f.name == key:
            return f.metadata["help"]
    raise ConfigError(f"unknown config key '{key}'", key=key)


def normalize_key(key: str) -> str:
    """Case-insensitive key lookup with a few aliases (N_s, batch_size)."""
    k = key.strip().lower()
    k = KEY_ALIASES.get(k, k)
    if k not in config_keys():
        raise ConfigError(f"unknown config key '{key.strip()}'", key=key.strip())
    return k


def _parse_int(text: str, key: str) -> int:
    try:
        if "^" in text:
            base, exp = text.split("^", 1)
            if int(exp) < 0:
                raise ValueError(text)
            value = int(base) ** int(exp)
        else:
            value = int(text)
    except ValueError:
        raise ConfigError(f"cannot parse '{text}' as an integer for key '{key}'", key=key) from None
    return value


def parse_value(key: str, text: Any) -> Any:
    """Convert the textual value of a key to its configured kind."""
    kind = key_kind(key)
    text = str(text).strip()
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if optional and text.lower() in ("", "auto", "none"):
        return None
    if kind == "int":
        return _parse_int(text, key)
    if kind == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"cannot parse '{text}' as a number for key '{key}'", key=key) from None
    if kind == "bool":
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ConfigError(f"cannot parse '{text}' as a boolean for key '{key}'", key=key)
    return text


def format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_profiles(path: Path = PROFILE_FILE) -> Dict[str, Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def get_profile(name: str, path: Path = PROFILE_FILE) -> Dict[str, Any]:
    """Parsed values of a shipped profile."""
    profiles = load_profiles(path)
    if name not in profiles:
        raise ConfigError(f"unknown profile '{name}' (available: {', '.join(sorted(profiles))})")
    return {normalize_key(k): parse_value(normalize_key(k), v) for k, v in profiles[name].items()}

"""
Application Configuration
Environment-level settings, per-task experiment defaults and the
ExperimentConfig tree that every command runs from
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

from orbitsym.errors import ConfigError, DataIOError

load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Base configuration"""

    # ================= RUNTIME =================
    LOG_LEVEL = os.getenv("ORBITSYM_LOG_LEVEL", "INFO")
    OUT_DIR = os.getenv("ORBITSYM_OUT_DIR", "runs")
    WORKERS = int(os.getenv("ORBITSYM_WORKERS", 4))
    # "0" writes seconds=0.0 in metrics so reruns give identical files
    WALLCLOCK = os.getenv("ORBITSYM_WALLCLOCK", "1") != "0"

    # ================= NUMERICS =================
    COND_CEILING = float(os.getenv("ORBITSYM_COND_CEILING", 1e12))
    MEMBER_TOL = float(os.getenv("ORBITSYM_MEMBER_TOL", 1e-8))
    BOOST_RAPIDITY = float(os.getenv("ORBITSYM_BOOST_RAPIDITY", 1.0))
    DET_WARN = 1e-6
    MAX_TRIES = 100

    # ================= MONITORING =================
    SENTRY_DSN = os.getenv("SENTRY_DSN", "")

    # ================= EXPERIMENT =================
    TASK = "particle"
    GROUP = "lorentz13"
    METHOD = "ps-orbit"
    LAM = 1.0
    NORM = "l1"
    LR = 0.003
    EPOCHS = 300
    BATCH = 200
    SEED = 0
    SAMPLES_TRAIN = 1
    SAMPLES_EVAL = 16
    BASE_HIDDEN = 128
    BASE_DEPTH = 3
    GRAD_CLIP = 10.0

    SYM_HIDDEN = 128
    SYM_DEPTH = 3
    SYM_D_EPS = 10
    SYM_NOISE = "uniform-trainable"
    SYM_COMBINE = "concat"
    SYM_SCALARS = "gram"
    SYM_ORIENTATION = False

    N_TRAIN = 2000
    N_VAL = 500
    N_TEST = 500
    THRESHOLD = 0.2
    POINTS = 200


class ParticleConfig(Config):
    """O(1,3) particle-scattering regression"""
    TASK = "particle"
    GROUP = "lorentz13"
    LR = 0.003


class DigitsConfig(Config):
    """SO(2) rotated point-set classification"""
    TASK = "rotated-digits"
    GROUP = "so2"
    LR = 0.0003
    N_VAL = 300
    N_TEST = 500
    SYM_HIDDEN = 64
    SYM_NOISE = "gaussian"
    SYM_SCALARS = "anchored"
    SYM_ORIENTATION = True


# ================= CONFIG MAP =================
config = {
    "particle": ParticleConfig,
    "rotated-digits": DigitsConfig,
    "default": ParticleConfig,
}


def get_config(task=None):
    """Return config class for a task (ORBITSYM_TASK when omitted)"""
    task = (task or os.getenv("ORBITSYM_TASK", "default")).lower()
    return config.get(task, config["default"])


TASKS = ("particle", "rotated-digits")
METHODS = (
    "base",
    "base-aug",
    "scalar-invariant",
    "canonical-orbit",
    "ps-orbit",
    "canonical-contract",
    "ps-contract",
)
NOISE_KINDS = ("gaussian", "uniform-trainable", "deterministic")
COMBINE_KINDS = ("concat", "add")
SCALAR_MODES = ("gram", "anchored")
NORMS = ("l1", "l2")


@dataclass
class SymmetrizerConfig:
    hidden: int = Config.SYM_HIDDEN
    depth: int = Config.SYM_DEPTH
    d_eps: int = Config.SYM_D_EPS
    noise: str = Config.SYM_NOISE
    combine: str = Config.SYM_COMBINE
    scalars: str = Config.SYM_SCALARS
    orientation: bool = Config.SYM_ORIENTATION


@dataclass
class InvariantConfig:
    project: bool = False
    projection_seed: int = 0


@dataclass
class DataConfig:
    n_train: int = Config.N_TRAIN
    n_val: int = Config.N_VAL
    n_test: int = Config.N_TEST
    dir: str = ""
    images: str = ""
    labels: str = ""
    threshold: float = Config.THRESHOLD
    points: int = Config.POINTS
    scale: float = 0.25
    boost_rapidity: float = Config.BOOST_RAPIDITY


@dataclass
class ExperimentConfig:
    """Everything a run depends on; serializes to a nested JSON object"""
    task: str = Config.TASK
    method: str = Config.METHOD
    group: str = Config.GROUP
    lam: float = Config.LAM
    norm: str = Config.NORM
    lr: float = Config.LR
    epochs: int = Config.EPOCHS
    batch: int = Config.BATCH
    seed: int = Config.SEED
    samples_train: int = Config.SAMPLES_TRAIN
    samples_eval: int = Config.SAMPLES_EVAL
    base_hidden: int = Config.BASE_HIDDEN
    base_depth: int = Config.BASE_DEPTH
    grad_clip: float = Config.GRAD_CLIP
    out_dir: str = Config.OUT_DIR
    symmetrizer: SymmetrizerConfig = field(default_factory=SymmetrizerConfig)
    invariant: InvariantConfig = field(default_factory=InvariantConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @classmethod
    def for_task(cls, task):
        """Defaults of the task's config class"""
        if task not in TASKS:
            raise ConfigError("task", f"unknown task: {task}")
        defaults = get_config(task)
        return cls(
            task=defaults.TASK,
            group=defaults.GROUP,
            method=defaults.METHOD,
            lam=defaults.LAM,
            norm=defaults.NORM,
            lr=defaults.LR,
            epochs=defaults.EPOCHS,
            batch=defaults.BATCH,
            seed=defaults.SEED,
            samples_train=defaults.SAMPLES_TRAIN,
            samples_eval=defaults.SAMPLES_EVAL,
            base_hidden=defaults.BASE_HIDDEN,
            base_depth=defaults.BASE_DEPTH,
            grad_clip=defaults.GRAD_CLIP,
            out_dir=defaults.OUT_DIR,
            symmetrizer=SymmetrizerConfig(
                hidden=defaults.SYM_HIDDEN,
                depth=defaults.SYM_DEPTH,
                d_eps=defaults.SYM_D_EPS,
                noise=defaults.SYM_NOISE,
                combine=defaults.SYM_COMBINE,
                scalars=defaults.SYM_SCALARS,
                orientation=defaults.SYM_ORIENTATION,
            ),
            data=DataConfig(
                n_train=defaults.N_TRAIN,
                n_val=defaults.N_VAL,
                n_test=defaults.N_TEST,
                threshold=defaults.THRESHOLD,
                points=defaults.POINTS,
                boost_rapidity=defaults.BOOST_RAPIDITY,
            ),
        )

    # ================= SERIALIZATION =================

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload, provenance=None):
        """Task defaults first, then every key of payload"""
        task = payload.get("task", Config.TASK)
        cfg = cls.for_task(task)
        for key, value in _flatten(payload):
            cfg.set(key, value, source="file", provenance=provenance)
        return cfg

    @classmethod
    def load(cls, path, provenance=None):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError as exc:
            raise DataIOError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"config file is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("<file>", "config file must hold a JSON object")
        return cls.from_dict(payload, provenance=provenance)

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        except OSError as exc:
            raise DataIOError(f"cannot write config {path}: {exc}") from exc

    # ================= OVERRIDES =================

    def set(self, key, value, source="--set", provenance=None):
        """Assign a dotted key, coercing to the type of the current value"""
        target = self
        parts = key.split(".")
        for part in parts[:-1]:
            if not hasattr(target, part) or not dataclasses.is_dataclass(getattr(target, part)):
                raise ConfigError(key)
            target = getattr(target, part)
        name = parts[-1]
        if not any(f.name == name for f in dataclasses.fields(target)):
            raise ConfigError(key)
        current = getattr(target, name)
        if dataclasses.is_dataclass(current):
            raise ConfigError(key, f"config key {key} is a section, not a value")
        setattr(target, name, _coerce(key, value, current))
        if provenance is not None:
            provenance[key] = source

    def apply_overrides(self, pairs, provenance=None):
        """Apply 'key=value' strings"""
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigError(pair, f"override must look like key=value: {pair}")
            key, raw = pair.split("=", 1)
            self.set(key.strip(), _parse_literal(raw.strip()), provenance=provenance)
        return self

    # ================= VALIDATION =================

    def validate(self):
        """Raise ConfigError naming the first invalid key"""
        from orbitsym.services.group_service import GroupService

        if self.task not in TASKS:
            raise ConfigError("task", f"unknown task: {self.task}")
        if self.method not in METHODS:
            raise ConfigError("method", f"unknown method: {self.method}")
        if self.norm not in NORMS:
            raise ConfigError("norm", f"norm must be one of {NORMS}")
        for key in ("lr", "batch", "samples_train", "samples_eval", "base_hidden", "base_depth"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, f"{key} must be positive")
        for key in ("lam", "epochs", "grad_clip"):
            if getattr(self, key) < 0:
                raise ConfigError(key, f"{key} must be non-negative")
        sym = self.symmetrizer
        if sym.hidden <= 0:
            raise ConfigError("symmetrizer.hidden", "symmetrizer.hidden must be positive")
        if sym.depth <= 0:
            raise ConfigError("symmetrizer.depth", "symmetrizer.depth must be positive")
        if sym.d_eps < 0:
            raise ConfigError("symmetrizer.d_eps", "symmetrizer.d_eps must be non-negative")
        if sym.noise not in NOISE_KINDS:
            raise ConfigError("symmetrizer.noise", f"noise must be one of {NOISE_KINDS}")
        if sym.combine not in COMBINE_KINDS:
            raise ConfigError("symmetrizer.combine", f"combine must be one of {COMBINE_KINDS}")
        if sym.scalars not in SCALAR_MODES:
            raise ConfigError("symmetrizer.scalars", f"scalars must be one of {SCALAR_MODES}")
        data = self.data
        for key in ("n_train", "n_val", "n_test", "points"):
            if getattr(data, key) <= 0:
                raise ConfigError(f"data.{key}", f"data.{key} must be positive")
        if not 0.0 <= data.threshold <= 1.0:
            raise ConfigError("data.threshold", "data.threshold must lie in [0, 1]")
        if data.scale <= 0 or data.boost_rapidity < 0:
            raise ConfigError("data.scale", "data.scale must be positive and data.boost_rapidity non-negative")

        try:
            spec = GroupService.parse(self.group)
        except Exception as exc:
            raise ConfigError("group", str(exc)) from exc
        if sym.combine == "add" and sym.d_eps != spec.n:
            raise ConfigError("symmetrizer.combine", "combine=add needs symmetrizer.d_eps equal to the data column count")
        expected_n = 4 if self.task == "particle" else 2
        if spec.n != expected_n:
            raise ConfigError("group", f"task {self.task} needs a group acting on R^{expected_n}, got {self.group}")
        if self.task == "rotated-digits" and sym.noise == "uniform-trainable":
            raise ConfigError("symmetrizer.noise", "point-set inputs need noise with the standard action (gaussian or deterministic)")
        if self.method.endswith("-contract") and spec.family not in ("SO", "O"):
            raise ConfigError("method", "contraction methods need an orthogonal group")
        return self


def _flatten(payload, prefix=""):
    for key, value in payload.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, prefix=f"{dotted}.")
        else:
            yield dotted, value


def _parse_literal(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _coerce(key, value, current):
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                lowered = value.lower()
                if lowered not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return lowered in ("true", "1")
            return bool(value)
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"bad value for {key}: {value!r}") from exc

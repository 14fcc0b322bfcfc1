"""Flat run configuration: defaults, key=value config files, flag overrides.

Precedence is defaults < config file < command-line flags. Files are plain
text, one `key = value` per line, `#` comments allowed; unknown keys are
rejected so typos fail loudly.
"""

import dataclasses
from dataclasses import dataclass

from .data import SyntheticConfig
from .errors import DataError
from .losses import LossConfig


@dataclass
class RunConfig:
    # synthetic dataset
    n_base_classes: int = 20
    n_novel_classes: int = 10
    videos_per_class: int = 30
    T: int = 20
    d_in: int = 32
    ibg_concepts: int = 12
    nbg_concepts: int = 3
    overlap_fraction: float = 0.5
    noise_std: float = 0.5
    # model head
    d: int = 64
    kernel_width: int = 8
    attn_width: int = 32
    # losses
    tau: float = 10.0
    tau_s: float = 8.0
    c: float = 0.5
    margin: float = 2.0
    beta: float = 1.0
    gamma1: float = 0.05
    gamma2: float = 0.05
    renormalize_video_feature: bool = True
    # components (ablations turn these off)
    soft: bool = True
    bg: bool = True
    sw: bool = True
    cl: bool = True
    # pseudo-labeling
    t_n: float = 0.25
    top_m: int = 0  # 0 picks max(2, ceil(T/8)) per video
    use_probabilities: bool = False
    # optimization
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 30
    # episodic evaluation
    K: int = 5
    n: int = 1
    q: int = 5
    episodes: int = 100
    # plumbing
    seed: int = 0
    jobs: int = 1
    data_dir: str = "dataset"
    ckpt: str = "model.ckpt"
    out: str = ""

    def loss_config(self) -> LossConfig:
        return LossConfig(
            tau=self.tau, tau_s=self.tau_s, c=self.c, margin=self.margin,
            beta=self.beta, gamma1=self.gamma1, gamma2=self.gamma2,
            soft=self.soft, bg=self.bg, sw=self.sw, cl=self.cl,
            renormalize_video_feature=self.renormalize_video_feature)

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            n_base_classes=self.n_base_classes, n_novel_classes=self.n_novel_classes,
            videos_per_class=self.videos_per_class, T=self.T, d_in=self.d_in,
            ibg_concepts=self.ibg_concepts, nbg_concepts=self.nbg_concepts,
            overlap_fraction=self.overlap_fraction, noise_std=self.noise_std,
            seed=self.seed)

    def validate(self):
        self.synthetic_config().validate()
        self.loss_config().validate()
        for name in ("d", "kernel_width", "attn_width", "batch_size", "epochs",
                     "K", "n", "q", "episodes", "jobs"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise DataError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise DataError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.top_m < 0:
            raise DataError(f"top_m must be >= 0, got {self.top_m}")
        return self


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}

TRUE_WORDS = {"true", "1", "yes", "on"}
FALSE_WORDS = {"false", "0", "no", "off"}


def parse_value(key: str, text: str):
    typ = FIELD_TYPES[key]
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in TRUE_WORDS:
                return True
            if low in FALSE_WORDS:
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError as err:
        raise DataError(f"config key {key!r}: cannot parse {text!r} as {typ.__name__}") from err


def read_config_file(path) -> dict:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise DataError(f"cannot read config file {path}: {err}") from err
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in FIELD_TYPES:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = parse_value(key, text)
    return values


def build_config(config_path=None, overrides: dict = None) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        for key, value in read_config_file(config_path).items():
            setattr(cfg, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def describe_keys() -> str:
    lines = ["configuration keys (config file and defaults):"]
    for f in dataclasses.fields(RunConfig):
        lines.append(f"  {f.name} = {f.default!r} ({f.type.__name__})")
    return "\n".join(lines)

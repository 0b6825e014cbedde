"""Run configuration and its ``key = value`` file format.

Keys are flat; an optional ``[run]`` section header is accepted. Unknown keys
are rejected so typos surface early. Example::

    rounds = 20
    enterprises = 30
    alpha = 0.1
    scenario = fedanil_plus
    attack_kind = sign_flip
    lam = 1024          # 512 runs faster but is NOT secure; tests only

Lines starting with ``#`` or ``;`` are comments.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .attacks import AttackConfig
from .defense import FilterThresholds
from .errors import ContractError
from .he import DEFAULT_SCALE, SUPPORTED_LAMBDA
from .model import Hyperparams

FEDANIL_PLUS = "fedanil_plus"
FEDAVG_BASELINE = "fedavg_baseline"
SCENARIOS = (FEDANIL_PLUS, FEDAVG_BASELINE)


@dataclass(frozen=True)
class RunConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)
    attack: AttackConfig = field(default_factory=AttackConfig)
    scenario: str = FEDANIL_PLUS
    lam: int = 1024
    he_scale: int = DEFAULT_SCALE
    ap_damping: float = 0.9
    ap_max_iter: int = 1000
    ap_stable_iters: int = 100
    alpha: float = 0.1
    samples_per_enterprise: int = 100
    min_enterprise_samples: int = 5
    noise_scale: float = 1.0
    validation_fraction: float = 0.2
    auto_k: bool = True
    k_min: int = 2
    miners: int = 3
    gml_steps: int = 500
    output_dir: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ContractError(f"scenario must be one of {SCENARIOS}")
        if self.lam not in SUPPORTED_LAMBDA:
            raise ContractError(f"lam must be one of {SUPPORTED_LAMBDA}")
        if not self.alpha > 0:
            raise ContractError("alpha must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ContractError("validation_fraction must be in (0, 1)")
        if self.samples_per_enterprise < 2 or self.min_enterprise_samples < 2:
            raise ContractError("enterprises need at least two samples (train and validation)")
        if not 2 <= self.k_min <= self.hyper.quant_clusters:
            raise ContractError("need 2 <= k_min <= quant_clusters")
        if self.miners < 1:
            raise ContractError("need at least one miner")
        if self.he_scale < 1 or self.gml_steps < 0 or self.ap_max_iter < 1 or self.ap_stable_iters < 1:
            raise ContractError("he_scale, gml_steps and AP iteration counts must be positive")
        if self.hyper.rounds < 0 or self.hyper.enterprises < 1:
            raise ContractError("rounds must be >= 0 and enterprises >= 1")

    @property
    def seed(self) -> int:
        return self.hyper.seed

    def with_overrides(self, **kv) -> "RunConfig":
        return from_mapping(kv, base=self)


_HYPER = {f.name for f in fields(Hyperparams)}
_THRESH = {"phi_low": "phi_low", "phi_high": "phi_high", "strike_limit": "strike_limit"}
_ATTACK = {"attack_kind": "kind", "malicious_rate": "rate", "scale_factor": "scale_factor",
           "collusion_group": "collusion_group"}
_TOP = {f.name for f in fields(RunConfig)} - {"hyper", "thresholds", "attack"}


def _coerce(raw, like):
    if isinstance(raw, str):
        raw = raw.strip()
        if isinstance(like, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ContractError(f"not a boolean: {raw!r}")
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    if isinstance(like, tuple):
        return tuple(int(x) for x in raw)
    return raw


def from_mapping(kv: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    hyper, thr, att, top = {}, {}, {}, {}
    for key, raw in kv.items():
        if key in _HYPER:
            hyper[key] = _coerce(raw, getattr(base.hyper, key))
            if key == "malicious_rate":
                att["rate"] = hyper[key]
        elif key in _THRESH:
            thr[_THRESH[key]] = _coerce(raw, getattr(base.thresholds, _THRESH[key]))
        elif key in _ATTACK:
            att[_ATTACK[key]] = _coerce(raw, getattr(base.attack, _ATTACK[key]))
        elif key in _TOP:
            top[key] = _coerce(raw, getattr(base, key))
        else:
            raise ContractError(f"unknown config key {key!r}")
    if "rate" in att:
        hyper["malicious_rate"] = att["rate"]
    return replace(base,
                   hyper=replace(base.hyper, **hyper),
                   thresholds=replace(base.thresholds, **thr),
                   attack=replace(base.attack, **att),
                   **top)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from exc
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[run]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    kv = {}
    for section in cp.sections():
        kv.update(cp[section])
    return from_mapping(kv)


def to_mapping(cfg: RunConfig) -> dict:
    out = {f.name: getattr(cfg.hyper, f.name) for f in fields(Hyperparams)}
    out.update({k: getattr(cfg.thresholds, v) for k, v in _THRESH.items()})
    out.update({k: getattr(cfg.attack, v) for k, v in _ATTACK.items() if k != "malicious_rate"})
    out.update({k: getattr(cfg, k) for k in sorted(_TOP)})
    return out


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in to_mapping(cfg).items():
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"

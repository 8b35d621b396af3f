"""Run configuration: defaults, ``key=value`` config files and flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .covariance import MODEL, WEIGHTINGS
from .evaluation import DEFAULT_SEED, MEAN, POOLED, EvalOptions
from .geo import HAVERSINE, METRICS
from .indexes import POLICIES, STRICT
from .interpolate import METHODS, InterpOptions, TransformSpec, canonical_method

DRY_MODES = ("strict", "inclusive")


@dataclass(frozen=True)
class RunConfig:
    stations: str | None = None
    observations: str | None = None
    methods: tuple = METHODS
    indexes: tuple = ("MFP", "CDD")
    approach: str = "direct"
    k: int = 10
    seed: int = DEFAULT_SEED
    p: float = 2.0
    n_max: int = 20
    lam: float = 1.0 / 3.0
    dry_threshold: str = "strict"
    distance: str = HAVERSINE
    policy: str = STRICT
    pooling: str = MEAN
    fit_nugget: bool = False
    weighting: str = MODEL
    out: str = "out"
    format: str = "csv"
    elevation_cache: str | None = None
    endpoint: str | None = None
    offline: bool = False

    def __post_init__(self):
        if self.dry_threshold not in DRY_MODES:
            raise ValueError(f"dry_threshold must be one of {DRY_MODES}")
        if self.distance not in METRICS:
            raise ValueError(f"distance must be one of {METRICS}")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.pooling not in (MEAN, POOLED):
            raise ValueError("pooling must be 'mean' or 'pooled'")
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        object.__setattr__(self, "indexes", tuple(i.upper() for i in self.indexes))

    def interp_options(self):
        return InterpOptions(p=self.p, n_max=self.n_max, transform=TransformSpec(self.lam),
                             metric=self.distance, fit_nugget=self.fit_nugget,
                             weighting=self.weighting)

    def eval_options(self, keep_residuals=False):
        return EvalOptions(self.interp_options(), self.pooling, self.policy,
                           inclusive=self.dry_threshold == "inclusive",
                           keep_residuals=keep_residuals)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name, text):
    default = RunConfig.__dataclass_fields__[name].default
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{name}: not a boolean: {text!r}")
    if isinstance(default, tuple):
        return tuple(x.strip() for x in text.split(",") if x.strip())
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    return text


def parse_config_text(text):
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def resolve(flags: dict, file_values: dict | None = None) -> RunConfig:
    """Flags (non-None entries) override the config file, which overrides defaults."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in flags.items() if v is not None})
    return replace(RunConfig(), **merged)
